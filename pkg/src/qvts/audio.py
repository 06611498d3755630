"""Mono audio buffers and WAV file IO."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy.io import wavfile


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise ValueError("audio contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")
        object.__setattr__(self, "samples", x)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def rms(self) -> float:
        if len(self.samples) == 0:
            return 0.0
        return float(np.sqrt(np.mean(self.samples**2)))

    def energy(self) -> float:
        return float(np.sum(self.samples**2))


def soft_clip(x: np.ndarray, knee: float = 0.9) -> np.ndarray:
    """Identity below ``knee``, tanh-shaped saturation to +-1 above it."""
    x = np.asarray(x, dtype=float)
    y = x.copy()
    over = np.abs(x) > knee
    head = 1.0 - knee
    y[over] = np.sign(x[over]) * (knee + head * np.tanh((np.abs(x[over]) - knee) / head))
    return y


def read_wav(path: Union[str, Path]) -> AudioBuffer:
    """Read 16/32-bit PCM or float WAV, downmixing multichannel to mono."""
    sr, data = wavfile.read(str(path))
    if data.dtype == np.int16:
        x = data.astype(float) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(float) / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(float) - 128.0) / 128.0
    elif np.issubdtype(data.dtype, np.floating):
        x = data.astype(float)
    else:
        raise ValueError(f"unsupported WAV sample type {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    return AudioBuffer(x, int(sr))


def write_wav(path: Union[str, Path], audio: AudioBuffer, pcm16: bool = False) -> None:
    x = np.clip(audio.samples, -1.0, 1.0)
    if pcm16:
        data = np.round(x * 32767.0).astype(np.int16)
    else:
        data = x.astype(np.float32)
    wavfile.write(str(path), audio.sample_rate, data)
