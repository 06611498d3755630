"""Test scenes and sonification of evolution traces."""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .audio import AudioBuffer, soft_clip
from .evolution import EvolutionTrace, TraceStep
from .features import FeatureTrack, detect_onsets

SR = 44100


@dataclass(frozen=True)
class NoteEvent:
    onset_beats: float
    duration_beats: float
    pitch: float
    velocity: float = 0.8

    def __post_init__(self):
        if self.onset_beats < 0 or self.duration_beats <= 0:
            raise ValueError("note needs onset >= 0 and duration > 0")
        if not 0.0 <= self.velocity <= 1.0:
            raise ValueError("velocity must lie in [0, 1]")

    @property
    def hz(self) -> float:
        return midi_to_hz(self.pitch)


@dataclass(frozen=True)
class Timbre:
    harmonics: int = 6
    decay: float = 3.0
    key_click: bool = True


def midi_to_hz(p: float) -> float:
    return 440.0 * 2 ** ((p - 69) / 12)


def load_notes(path: Union[str, Path, None] = None) -> Tuple[List[NoteEvent], float]:
    """Note list and tempo from JSON; defaults to the bundled fugue incipit."""
    if path is None:
        text = resources.files("qvts").joinpath("data/bwv565_fugue.json").read_text()
    else:
        text = Path(path).read_text()
    doc = json.loads(text)
    notes = [NoteEvent(**n) for n in doc["notes"]]
    return notes, float(doc.get("bpm", 100.0))


def save_notes(path: Union[str, Path], notes: Sequence[NoteEvent], bpm: float) -> None:
    doc = {"bpm": bpm, "notes": [n.__dict__ for n in notes]}
    Path(path).write_text(json.dumps(doc, indent=1))


def fugue_notes() -> List[NoteEvent]:
    return load_notes()[0]


def render_notes(notes: Sequence[NoteEvent], bpm: float = 100.0, sr: int = SR,
                 timbre: Timbre = Timbre(), gain: float = 0.3, seed: int = 0) -> AudioBuffer:
    """Additive "piano": 1/h partials, 5 ms attack, exponential decay.

    With ``timbre.key_click`` each onset also gets a 10 ms decaying noise
    click, so the rendering carries the transient and noise content a
    sampled piano would have.
    """
    if not notes:
        raise ValueError("no notes to render")
    if bpm <= 0:
        raise ValueError("bpm must be positive")
    beat = 60.0 / bpm
    end = max(n.onset_beats + n.duration_beats for n in notes) * beat
    y = np.zeros(int(round(end * sr)))
    rng = np.random.default_rng(seed)
    attack, release = int(0.005 * sr), int(0.01 * sr)
    click_len = int(0.01 * sr)
    for n in notes:
        start = int(round(n.onset_beats * beat * sr))
        length = min(int(round(n.duration_beats * beat * sr)), len(y) - start)
        t = np.arange(length) / sr
        f0 = n.hz
        tone = np.zeros(length)
        for h in range(1, timbre.harmonics + 1):
            if f0 * h < sr / 2:
                tone += np.sin(2 * np.pi * f0 * h * t) / h
        env = np.exp(-timbre.decay * t)
        env[:attack] *= np.linspace(0, 1, attack, endpoint=False)[: min(attack, length)]
        r = min(release, length)
        env[length - r:] *= np.linspace(1, 0, r)
        y[start : start + length] += n.velocity * tone * env
        click = rng.uniform(-1, 1, click_len)
        if timbre.key_click:
            c = min(click_len, length)
            y[start : start + c] += 0.5 * n.velocity * click[:c] * np.exp(-np.arange(c) / (0.002 * sr))
    return AudioBuffer(soft_clip(gain * y), sr)


def log_glide_phase(f_start: float, f_end: float, duration: float, t: np.ndarray) -> np.ndarray:
    """Phase (radians) of a tone gliding exponentially from ``f_start`` to ``f_end``."""
    if f_start == f_end:
        return 2 * np.pi * f_start * t
    r = np.log(f_end / f_start)
    return 2 * np.pi * f_start * duration / r * (np.exp(r * t / duration) - 1)


def glide_frequency(f_start: float, f_end: float, duration: float, t) -> np.ndarray:
    return f_start * (f_end / f_start) ** (np.asarray(t) / duration)


def crossing_glides(f1: Tuple[float, float] = (400.0, 800.0), f2: Tuple[float, float] = (800.0, 400.0),
                    duration: float = 3.0, noise_start: float = 1.5, noise_dur: float = 0.2,
                    noise_amp: float = 0.5, sr: int = SR, amp: float = 0.25, seed: int = 0) -> AudioBuffer:
    """Two equal-amplitude exponential glides, silenced during a white-noise burst."""
    if duration <= 0 or noise_dur < 0 or noise_amp < 0:
        raise ValueError("invalid durations or amplitude")
    if noise_start < 0 or noise_start + noise_dur > duration:
        raise ValueError("noise window must lie inside the scene")
    if (f1[0] - f2[0]) * (f1[1] - f2[1]) >= 0:
        raise ValueError("glides do not cross")
    n = int(round(duration * sr))
    t = np.arange(n) / sr
    tones = amp * (np.sin(log_glide_phase(*f1, duration, t)) + np.sin(log_glide_phase(*f2, duration, t)))
    a, b = int(round(noise_start * sr)), int(round((noise_start + noise_dur) * sr))
    gate = np.ones(n)
    ramp = int(0.005 * sr)
    gate[a:b] = 0.0
    if ramp:
        gate[max(0, a - ramp):a] = np.linspace(1, 0, a - max(0, a - ramp))
        gate[b:b + ramp] = np.linspace(0, 1, len(gate[b:b + ramp]))
    y = tones * gate
    rng = np.random.default_rng(seed)
    y[a:b] += noise_amp * rng.uniform(-1, 1, b - a)
    return AudioBuffer(soft_clip(y), sr)


def crossing_time(f1: Tuple[float, float], f2: Tuple[float, float], duration: float) -> float:
    """Time at which two exponential glides meet."""
    r1, r2 = np.log(f1[1] / f1[0]), np.log(f2[1] / f2[0])
    return duration * np.log(f2[0] / f1[0]) / (r1 - r2)


def add_noise(audio: AudioBuffer, amplitude: float, seed: int = 0) -> AudioBuffer:
    """Add uniform white noise in ``[-amplitude, amplitude]`` and soft-clip."""
    if amplitude < 0:
        raise ValueError("noise amplitude must be >= 0")
    if amplitude == 0:
        return AudioBuffer(audio.samples.copy(), audio.sample_rate)
    rng = np.random.default_rng(seed)
    y = audio.samples + amplitude * rng.uniform(-1, 1, len(audio))
    return AudioBuffer(soft_clip(y), audio.sample_rate)


def pulse_train(rate: float, n: int, sr: int) -> np.ndarray:
    """Band-limited impulse train with unit peak."""
    t = np.arange(n) / sr
    m = 2 * int(np.floor(sr / 2 / rate)) + 1
    phi = np.pi * rate * t
    den = m * np.sin(phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.where(np.abs(den) < 1e-9, 1.0, np.sin(m * phi) / np.where(den == 0, 1, den))
    return y


def onset_rate(features: FeatureTrack, default: float = 8.0) -> float:
    idx = detect_onsets(features.onset_strength, frame_rate=1 / features.frame_period)
    if idx.size < 2:
        return default
    span = features.frame_times[idx[-1]] - features.frame_times[idx[0]]
    if span <= 0:
        return default
    return float(np.clip((idx.size - 1) / span, 1.0, 20.0))


def _pure_step_amplitudes(step: TraceStep) -> dict:
    # z outcomes pick one pitch, x outcomes are noise bursts, y outcomes pulses
    amps = {"amp_up": 0.0, "amp_down": 0.0, "amp_noise": 0.0, "amp_pulse": 0.0}
    if step.axis_measured == "z":
        amps["amp_up" if step.outcome > 0 else "amp_down"] = 1.0
    elif step.axis_measured == "x":
        amps["amp_noise"] = 1.0
    elif step.axis_measured == "y":
        amps["amp_pulse"] = 1.0
    return amps


def sonify_trace(trace: EvolutionTrace, features: FeatureTrack, sr: int = SR, seed: int = 0,
                 pulse_rate: Optional[float] = None, gain: float = 0.5) -> AudioBuffer:
    """Two oscillators, a noise generator and a pulse train driven by the trace.

    For density-matrix traces the gains per step come from the mixture
    amplitudes of the state; for ket traces each step plays what was
    measured. Gains are linearly interpolated between step times. The upper
    oscillator follows the higher of the two salient pitches and the lower
    one the other.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    t_end = features.frame_times[-1] + features.frame_period
    times = trace.times
    if times[0] < features.frame_times[0] - 1e-9 or times[-1] > t_end + 1e-9:
        raise ValueError("trace and features are not time aligned")
    n = int(round(t_end * sr))
    t = np.arange(n) / sr
    amps = trace.amplitudes() if trace.is_mixed else [_pure_step_amplitudes(s) for s in trace]

    def env(key):
        return np.interp(t, times, [a[key] for a in amps])

    def osc(hz_track):
        hz = np.interp(t, features.frame_times, hz_track)
        phase = 2 * np.pi * np.cumsum(hz) / sr
        return np.sin(phase) * (hz > 0)

    rng = np.random.default_rng(seed)
    rate = min(pulse_rate if pulse_rate is not None else onset_rate(features), 20.0)
    y = (env("amp_up") * osc(features.upper_hz)
         + env("amp_down") * osc(features.lower_hz)
         + env("amp_noise") * rng.uniform(-1, 1, n)
         + env("amp_pulse") * pulse_train(rate, n, sr))
    return AudioBuffer(soft_clip(gain * y), sr)
