"""Sines + noise decomposition as an audio-domain projective measurement.

Measuring phonation keeps the sinusoidal part of a signal, measuring
turbulence keeps the residual. Applying the two in different orders gives
different signals, the audio counterpart of ``[M_r, M_u] != 0``.
"""
from __future__ import annotations

from typing import List, Tuple

import numpy as np
from scipy.ndimage import median_filter

from .audio import AudioBuffer
from .features import Spectrogram, stft

WINDOW_SIZE = 2048
FFT_SIZE = 4096
HOP = 512

PEAK_FLOOR_DB = -80.0       # relative to the loudest bin of the frame
PEAK_ABS_FLOOR = 1e-7       # linear amplitude; below this a frame is silent
PEAK_PROMINENCE_DB = 15.0   # above the local median magnitude
MEDIAN_SPAN = 65            # bins
MAX_PEAKS = 100
MIN_TRACK_FRAMES = 3
TRACK_TOLERANCE = 0.03      # relative frequency change between frames


def _frame_peaks(z: np.ndarray, local_floor: np.ndarray, wsum: float):
    """Peaks of one zero-phase frame as ``(bin, amplitude, phase)`` arrays."""
    mag = np.abs(z)
    db = 20 * np.log10(np.maximum(mag, 1e-20))
    top = db.max()
    c = db[1:-1]
    ok = (c > db[:-2]) & (c >= db[2:]) & (c > top + PEAK_FLOOR_DB)
    ok &= c > 20 * np.log10(np.maximum(local_floor[1:-1], 1e-20)) + PEAK_PROMINENCE_DB
    ok &= mag[1:-1] > PEAK_ABS_FLOOR * wsum / 2
    k = np.nonzero(ok)[0] + 1
    if k.size == 0:
        return np.empty(0), np.empty(0), np.empty(0)
    k = k[np.argsort(db[k])[::-1][:MAX_PEAKS]]
    a, b, g = db[k - 1], db[k], db[k + 1]
    denom = a - 2 * b + g
    delta = np.where(denom != 0, 0.5 * (a - g) / np.where(denom == 0, 1, denom), 0.0)
    peak_db = b - 0.25 * (a - g) * delta
    amp = 2 * 10 ** (peak_db / 20) / wsum
    # phase is flat across the main lobe of a zero-phase frame
    side = np.where(delta >= 0, 1, -1)
    ph0 = np.angle(z[k])
    ph1 = ph0 + np.angle(z[k + side] * np.conj(z[k]))
    phase = ph0 + np.abs(delta) * (ph1 - ph0)
    return k + delta, amp, phase


def _track_mask(frame_peaks: List[np.ndarray]) -> List[np.ndarray]:
    """Keep peaks that continue for at least ``MIN_TRACK_FRAMES`` frames."""
    n = len(frame_peaks)
    run = [np.ones(len(p), dtype=int) for p in frame_peaks]
    link = [np.full(len(p), -1) for p in frame_peaks]
    for i in range(1, n):
        prev, cur = frame_peaks[i - 1], frame_peaks[i]
        if prev.size == 0 or cur.size == 0:
            continue
        for j, f in enumerate(cur):
            d = np.abs(prev - f)
            best = int(np.argmin(d))
            if d[best] <= TRACK_TOLERANCE * f + 1.0:
                link[i][j] = best
                run[i][j] = run[i - 1][best] + 1
    # propagate final run lengths backwards along links
    total = [r.copy() for r in run]
    for i in range(n - 1, 0, -1):
        for j, b in enumerate(link[i]):
            if b >= 0:
                total[i - 1][b] = max(total[i - 1][b], total[i][j])
    return [t >= MIN_TRACK_FRAMES for t in total]


def _refine_frequencies(xw: np.ndarray, omega: np.ndarray, n_idx: np.ndarray) -> np.ndarray:
    """Polish peak frequencies by parabolic steps on the exact windowed DTFT."""
    for step in (0.25, 0.02, 0.002):
        d = step * 2 * np.pi / len(xw)
        probes = omega[:, None] + d * np.array([-1.0, 0.0, 1.0])[None, :]
        basis = np.exp(-1j * probes[..., None] * n_idx[None, None, :])
        m = np.log(np.abs(basis @ xw) + 1e-30)
        a, b, g = m[:, 0], m[:, 1], m[:, 2]
        denom = a - 2 * b + g
        delta = np.where(denom < 0, 0.5 * (a - g) / np.where(denom == 0, 1, denom), 0.0)
        omega = omega + np.clip(delta, -1, 1) * d
    return omega


def _fit_sinusoids(frame: np.ndarray, w: np.ndarray, omega: np.ndarray, n_idx: np.ndarray) -> np.ndarray:
    """Window-weighted least-squares fit of fixed-frequency sinusoids to a frame."""
    arg = omega[:, None] * n_idx[None, :]
    basis = np.concatenate((np.cos(arg), np.sin(arg))).T
    coef, *_ = np.linalg.lstsq(basis * w[:, None], frame * w, rcond=None)
    return basis @ coef


def sines_noise_decompose(audio: AudioBuffer, window_size: int = WINDOW_SIZE,
                          fft_size: int = FFT_SIZE, hop: int = HOP) -> Tuple[AudioBuffer, AudioBuffer]:
    """Split ``audio`` into tracked sinusoids and the residual.

    Sinusoids are resynthesized frame by frame from interpolated peak
    frequency, amplitude and phase and overlap-added with the analysis
    window; the noise part is ``audio - sines``.
    """
    x = audio.samples
    sr = audio.sample_rate
    if len(x) < window_size:
        raise ValueError(f"audio has {len(x)} samples, shorter than one window ({window_size})")
    pad = window_size
    xp = np.concatenate((np.zeros(pad), x, np.zeros(pad + hop)))
    spec = stft(AudioBuffer(xp, sr), window_size=window_size, fft_size=fft_size, hop=hop)
    w = spec.window()
    wsum = w.sum()
    centre = window_size / 2
    shift = np.exp(2j * np.pi * np.arange(spec.frames.shape[1]) * centre / fft_size)
    zp = spec.frames * shift
    floors = median_filter(np.abs(zp), size=(1, MEDIAN_SPAN), mode="nearest")

    found = [_frame_peaks(zp[i], floors[i], wsum) for i in range(spec.n_frames)]
    keep = _track_mask([f[0] for f in found])

    n_idx = np.arange(window_size) - centre
    y = np.zeros(len(xp))
    env = np.zeros(len(xp))
    for i, ((pos, _, _), mask) in enumerate(zip(found, keep)):
        s = i * hop
        env[s : s + window_size] += w * w
        if not mask.any():
            continue
        frame = xp[s : s + window_size]
        omega = _refine_frequencies(frame * w, 2 * np.pi * pos[mask] / fft_size, n_idx)
        # fit only real samples where the frame overlaps the padding
        valid = w * ((s + np.arange(window_size) >= pad) & (s + np.arange(window_size) < pad + len(x)))
        y[s : s + window_size] += _fit_sinusoids(frame, valid, omega, n_idx) * w * w
    good = env > 1e-10
    y[good] /= env[good]
    sines = y[pad : pad + len(x)]
    return AudioBuffer(sines, sr), AudioBuffer(x - sines, sr)


def measure_phonation(audio: AudioBuffer, **kw) -> AudioBuffer:
    return sines_noise_decompose(audio, **kw)[0]


def measure_turbulence(audio: AudioBuffer, **kw) -> AudioBuffer:
    return sines_noise_decompose(audio, **kw)[1]


def magnitude_spectrogram(audio: AudioBuffer) -> np.ndarray:
    return stft(audio).magnitude


def spectral_distance(a: AudioBuffer, b: AudioBuffer) -> float:
    """``||S_a - S_b|| / sqrt(||S_a||^2 + ||S_b||^2)`` on STFT magnitudes (0 if both silent)."""
    sa, sb = magnitude_spectrogram(a), magnitude_spectrogram(b)
    den = np.sqrt(np.sum(sa**2) + np.sum(sb**2))
    if den <= 1e-12:
        return 0.0
    return float(np.linalg.norm(sa - sb) / den)


def relative_error_db(reference: AudioBuffer, other: AudioBuffer) -> float:
    """RMS of ``other - reference`` relative to the RMS of ``reference``, in dB."""
    err = np.sqrt(np.mean((other.samples - reference.samples) ** 2))
    ref = np.sqrt(np.mean(reference.samples**2))
    if err == 0:
        return -np.inf
    if ref == 0:
        return np.inf
    return float(20 * np.log10(err / ref))


def noncommutativity_experiment(audio: AudioBuffer) -> dict:
    """Phonation after turbulence (``a2``) versus turbulence after phonation (``astar2``)."""
    a2 = measure_phonation(measure_turbulence(audio))
    astar2 = measure_turbulence(measure_phonation(audio))
    return {"a2": a2, "astar2": astar2, "spectral_distance": spectral_distance(a2, astar2)}


def tonal_noise_energy(audio: AudioBuffer) -> Tuple[float, float]:
    """Energies of the sinusoidal and residual parts."""
    s, r = sines_noise_decompose(audio)
    return s.energy(), r.energy()
