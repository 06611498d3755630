"""Phon states, feature-driven Hamiltonian evolution and sonification.

Submodules:

- ``phon``: single-phon kets, projectors, density matrices and gates
- ``features``: STFT, salient pitches, noise bands, onsets
- ``snmeasure``: sines + noise decomposition as audio measurement
- ``evolution``: Hamiltonians, propagation, measurement scheduling
- ``synth``: test scenes and trace sonification
- ``cli``: command line entry point
"""
from .audio import AudioBuffer, read_wav, write_wav
from .evolution import EvolutionConfig, EvolutionTrace, mixed_initial, run_follower
from .features import FeatureTrack, Spectrogram, extract_features, istft, stft
from .phon import BlochVector, DensityMatrix, PhonError, PhonState

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer",
    "BlochVector",
    "DensityMatrix",
    "EvolutionConfig",
    "EvolutionTrace",
    "FeatureTrack",
    "PhonError",
    "PhonState",
    "Spectrogram",
    "extract_features",
    "istft",
    "mixed_initial",
    "read_wav",
    "run_follower",
    "stft",
    "write_wav",
]
