"""Time-frequency analysis and the audio features that drive the Hamiltonian.

Defaults follow the analysis setup used throughout the package: 44.1 kHz
audio, a 2048-sample Hann window, 4096-point FFT and a 1024-sample hop.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from scipy.ndimage import median_filter
from scipy.signal import get_window

from .audio import AudioBuffer

WINDOW_SIZE = 2048
FFT_SIZE = 4096
HOP = 1024

NOISE_BANDS = ((1000.0, 2000.0), (2000.0, 6000.0))

# harmonic summation constants (not tuned to any particular recording)
SALIENCE_FMIN = 55.0
SALIENCE_FMAX = 1760.0
SALIENCE_HARMONICS = 8
SALIENCE_DECAY = 0.8
SALIENCE_GRID_CENTS = 10.0
SALIENCE_MAX_PEAKS = 30
SALIENCE_PEAK_FLOOR_DB = -60.0

SILENCE = 1e-12


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """One-sided STFT frames, shape ``(n_frames, fft_size // 2 + 1)``.

    Frame ``i`` covers samples ``[i * hop, i * hop + window_size)``.
    """

    frames: np.ndarray
    window_size: int
    fft_size: int
    hop: int
    sample_rate: int
    length: int

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.frames)

    @property
    def bin_hz(self) -> float:
        return self.sample_rate / self.fft_size

    def frame_times(self) -> np.ndarray:
        """Frame centre times in seconds."""
        return (np.arange(self.n_frames) * self.hop + self.window_size / 2) / self.sample_rate

    def window(self) -> np.ndarray:
        return get_window("hann", self.window_size)


def stft(
    audio: AudioBuffer,
    window: str = "hann",
    window_size: int = WINDOW_SIZE,
    fft_size: int = FFT_SIZE,
    hop: int = HOP,
) -> Spectrogram:
    if window != "hann":
        raise ValueError(f"unsupported window {window!r}")
    if not (_is_pow2(window_size) and _is_pow2(fft_size) and _is_pow2(hop)):
        raise ValueError("window, FFT and hop sizes must be powers of two")
    if fft_size < window_size or hop > window_size:
        raise ValueError("need fft_size >= window_size >= hop")
    x = audio.samples
    if len(x) < window_size:
        raise ValueError(f"audio has {len(x)} samples, shorter than one window ({window_size})")
    n_frames = (len(x) - window_size) // hop + 1
    w = get_window("hann", window_size)
    idx = np.arange(window_size)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = np.fft.rfft(x[idx] * w, n=fft_size, axis=1)
    return Spectrogram(frames, window_size, fft_size, hop, audio.sample_rate, len(x))


def istft(spec: Spectrogram) -> AudioBuffer:
    """Weighted overlap-add inverse of :func:`stft`.

    Samples never covered by a non-zero window weight come back as zeros.
    """
    n_bins = spec.fft_size // 2 + 1
    if spec.frames.ndim != 2 or spec.frames.shape[1] != n_bins:
        raise ValueError("spectrogram frames do not match fft_size")
    if spec.length < (spec.n_frames - 1) * spec.hop + spec.window_size:
        raise ValueError("spectrogram length is inconsistent with frame geometry")
    w = spec.window()
    y = np.zeros(spec.length)
    env = np.zeros(spec.length)
    blocks = np.fft.irfft(spec.frames, n=spec.fft_size, axis=1)[:, : spec.window_size]
    for i, block in enumerate(blocks):
        s = i * spec.hop
        y[s : s + spec.window_size] += block * w
        env[s : s + spec.window_size] += w * w
    ok = env > 1e-10
    y[ok] /= env[ok]
    y[~ok] = 0.0
    return AudioBuffer(y, spec.sample_rate)


def covered_span(spec: Spectrogram) -> slice:
    """Sample range reconstructed with full overlap by :func:`istft`."""
    start = spec.window_size - spec.hop
    stop = (spec.n_frames - 1) * spec.hop + spec.hop
    return slice(start, max(start, stop))


# ---------------------------------------------------------------------------
# pitch salience


def spectral_peaks(mag: np.ndarray, floor_db: float, max_peaks: int):
    """Parabolically interpolated peaks of one magnitude frame.

    Returns ``(bin_positions, amplitudes)`` sorted by decreasing amplitude,
    amplitudes being interpolated linear magnitudes.
    """
    top = mag.max() if mag.size else 0.0
    if top <= SILENCE:
        return np.empty(0), np.empty(0)
    db = 20 * np.log10(np.maximum(mag, SILENCE))
    thresh = db.max() + floor_db
    c = db[1:-1]
    is_peak = (c > db[:-2]) & (c >= db[2:]) & (c > thresh)
    k = np.nonzero(is_peak)[0] + 1
    if k.size == 0:
        return np.empty(0), np.empty(0)
    a, b, g = db[k - 1], db[k], db[k + 1]
    denom = a - 2 * b + g
    delta = np.where(np.abs(denom) > 1e-12, 0.5 * (a - g) / np.where(denom == 0, 1, denom), 0.0)
    peak_db = b - 0.25 * (a - g) * delta
    order = np.argsort(peak_db)[::-1][:max_peaks]
    return (k + delta)[order], 10 ** (peak_db[order] / 20)


def salience_grid(f_min: float = SALIENCE_FMIN, f_max: float = SALIENCE_FMAX,
                  cents: float = SALIENCE_GRID_CENTS) -> np.ndarray:
    n = int(np.floor(1200 * np.log2(f_max / f_min) / cents)) + 1
    return f_min * 2 ** (np.arange(n) * cents / 1200)


def salience_function(
    spec: Spectrogram,
    f_min: float = SALIENCE_FMIN,
    f_max: float = SALIENCE_FMAX,
    n_harmonics: int = SALIENCE_HARMONICS,
    decay: float = SALIENCE_DECAY,
) -> Tuple[np.ndarray, np.ndarray]:
    """Harmonic-summation salience, shape ``(n_frames, n_candidates)``.

    Each spectral peak at frequency ``f`` votes for the candidate ``f0`` with
    weight ``decay**(h-1) * |X| * cos^2(pi/2 * d)`` where ``d`` is the distance
    in semitones between ``f / h`` and ``f0`` (votes vanish beyond one
    semitone). Only candidates with a peak within a semitone of ``f0`` keep
    their salience.
    """
    if not (0 < f_min < f_max):
        raise ValueError("invalid salience band")
    grid = salience_grid(f_min, f_max)
    log_grid = 12 * np.log2(grid)
    mag = spec.magnitude
    out = np.zeros((spec.n_frames, grid.size))
    weights = decay ** np.arange(n_harmonics)
    for i in range(spec.n_frames):
        pos, amp = spectral_peaks(mag[i], SALIENCE_PEAK_FLOOR_DB, SALIENCE_MAX_PEAKS)
        if pos.size == 0:
            continue
        freqs = pos * spec.bin_hz
        good = freqs > 0
        freqs, amp = freqs[good], amp[good]
        fundamental = None
        for h in range(n_harmonics):
            semis = 12 * np.log2(freqs / (h + 1))
            d = log_grid[None, :] - semis[:, None]
            near = np.abs(d) < 1.0
            if not near.any():
                if h == 0:
                    break
                continue
            kern = np.where(near, np.cos(0.5 * np.pi * d) ** 2, 0.0)
            vote = (amp[:, None] * kern).sum(axis=0)
            if h == 0:
                fundamental = vote > 0
            out[i] += weights[h] * vote
        # candidates without energy at f0 itself are subharmonic ghosts
        out[i] = out[i] * fundamental if fundamental is not None else 0.0
    return grid, out


def top_two_pitches(grid: np.ndarray, sal: np.ndarray):
    """Two largest local maxima per frame: ``(p1, s1, p2, s2)`` arrays.

    Silent frames get zero salience and carry the previous pitches forward.
    """
    n = sal.shape[0]
    p1, s1, p2, s2 = (np.zeros(n) for _ in range(4))
    prev = (0.0, 0.0)
    for i in range(n):
        row = sal[i]
        if row.max() <= SILENCE:
            p1[i], p2[i] = prev
            continue
        padded = np.concatenate(([-np.inf], row, [-np.inf]))
        c = padded[1:-1]
        peaks = np.nonzero((c > padded[:-2]) & (c >= padded[2:]) & (c > 0))[0]
        order = peaks[np.argsort(row[peaks])[::-1]]
        p1[i], s1[i] = grid[order[0]], row[order[0]]
        if order.size > 1:
            p2[i], s2[i] = grid[order[1]], row[order[1]]
        else:
            p2[i], s2[i] = p1[i], 0.0
        prev = (p1[i], p2[i])
    return p1, s1, p2, s2


def pitch_salience(
    spec: Spectrogram,
    f_min: float = SALIENCE_FMIN,
    f_max: float = SALIENCE_FMAX,
    n_harmonics: int = SALIENCE_HARMONICS,
    normalize: bool = True,
):
    """Per-frame two most salient pitches.

    Returns ``(pitch1_hz, salience1, pitch2_hz, salience2)``; saliences are
    divided by the largest value over the whole track unless ``normalize`` is
    false.
    """
    grid, sal = salience_function(spec, f_min, f_max, n_harmonics)
    p1, s1, p2, s2 = top_two_pitches(grid, sal)
    if normalize:
        top = s1.max() if s1.size else 0.0
        scale = 1.0 / top if top > SILENCE else 0.0
        s1, s2 = s1 * scale, s2 * scale
    return p1, s1, p2, s2


# ---------------------------------------------------------------------------
# noise bands and onsets


def _normalize(x: np.ndarray) -> np.ndarray:
    top = x.max() if x.size else 0.0
    return x / top if top > SILENCE else np.zeros_like(x)


def band_energy(spec: Spectrogram, lo_hz: float, hi_hz: float, normalize: bool = True) -> np.ndarray:
    nyq = spec.sample_rate / 2
    if not (0 <= lo_hz < hi_hz <= nyq):
        raise ValueError(f"invalid band [{lo_hz}, {hi_hz}) for Nyquist {nyq}")
    f = np.arange(spec.frames.shape[1]) * spec.bin_hz
    sel = (f >= lo_hz) & (f < hi_hz)
    e = (np.abs(spec.frames[:, sel]) ** 2).sum(axis=1)
    return _normalize(e) if normalize else e


def onset_strength(spec: Spectrogram, detrend_frames: int = 11) -> np.ndarray:
    """Half-wave rectified spectral flux, normalized by the track maximum.

    The flux has its running median (over ``detrend_frames``) removed so that
    stationary noise does not read as a continuous onset. The first frame has
    no predecessor and gets zero flux. Normalization never divides by less
    than 1% of the largest frame spectral mass, so steady signals stay near 0.
    """
    mag = spec.magnitude
    flux = np.zeros(spec.n_frames)
    if spec.n_frames > 1:
        flux[1:] = np.maximum(np.diff(mag, axis=0), 0.0).sum(axis=1)
    if detrend_frames > 1 and spec.n_frames > 2:
        flux = np.maximum(flux - median_filter(flux, size=detrend_frames, mode="nearest"), 0.0)
    floor = 0.01 * mag.sum(axis=1).max() if spec.n_frames else 0.0
    top = max(flux.max() if flux.size else 0.0, floor)
    return flux / top if top > SILENCE else np.zeros_like(flux)


def detect_onsets(strength: np.ndarray, threshold: float = 0.3, frame_rate: float = 44100 / HOP,
                  min_separation: float = 0.05) -> np.ndarray:
    """Frame indices of local maxima above ``threshold``, at least
    ``min_separation`` seconds apart (stronger peak wins)."""
    s = np.asarray(strength, dtype=float)
    if s.size == 0:
        return np.empty(0, dtype=int)
    padded = np.concatenate(([-np.inf], s, [-np.inf]))
    c = padded[1:-1]
    cand = np.nonzero((c > padded[:-2]) & (c >= padded[2:]) & (c >= threshold) & (c > 0))[0]
    min_gap = min_separation * frame_rate
    kept: List[int] = []
    for i in cand[np.argsort(s[cand])[::-1]]:
        if all(abs(i - j) >= min_gap for j in kept):
            kept.append(int(i))
    return np.array(sorted(kept), dtype=int)


# ---------------------------------------------------------------------------
# feature tracks


@dataclass(frozen=True, eq=False)
class FeatureTrack:
    frame_times: np.ndarray
    pitch1_hz: np.ndarray
    pitch1_salience: np.ndarray
    pitch2_hz: np.ndarray
    pitch2_salience: np.ndarray
    noise_lo: np.ndarray
    noise_hi: np.ndarray
    onset_strength: np.ndarray
    hop: int = HOP
    sample_rate: int = 44100

    def __post_init__(self):
        n = len(self.frame_times)
        for f in fields(self):
            if f.name in ("hop", "sample_rate"):
                continue
            v = np.asarray(getattr(self, f.name), dtype=float)
            if v.shape != (n,):
                raise ValueError(f"feature {f.name} has length {v.size}, expected {n}")
            object.__setattr__(self, f.name, v)
        if np.any(self.pitch1_salience < 0) or np.any(self.pitch2_salience < 0):
            raise ValueError("saliences must be non-negative")
        if np.any(self.pitch1_salience + 1e-12 < self.pitch2_salience):
            raise ValueError("pitch1 must be at least as salient as pitch2")

    COLUMNS = ("time_s", "pitch1_hz", "pitch1_salience", "pitch2_hz", "pitch2_salience",
               "noise_lo", "noise_hi", "onset_strength")

    def __len__(self) -> int:
        return len(self.frame_times)

    @property
    def noisiness(self) -> np.ndarray:
        return 0.5 * (self.noise_lo + self.noise_hi)

    @property
    def upper_hz(self) -> np.ndarray:
        return np.maximum(self.pitch1_hz, self.pitch2_hz)

    @property
    def lower_hz(self) -> np.ndarray:
        return np.minimum(self.pitch1_hz, self.pitch2_hz)

    @property
    def frame_period(self) -> float:
        return self.hop / self.sample_rate

    def _columns(self):
        return (self.frame_times, self.pitch1_hz, self.pitch1_salience, self.pitch2_hz,
                self.pitch2_salience, self.noise_lo, self.noise_hi, self.onset_strength)

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for row in zip(*self._columns()):
                w.writerow([f"{v:.6f}" for v in row])

    @classmethod
    def from_csv(cls, path: Union[str, Path], hop: int = HOP, sample_rate: int = 44100) -> "FeatureTrack":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        cols = [np.array([float(r[c]) for r in rows]) for c in cls.COLUMNS]
        return cls(*cols, hop=hop, sample_rate=sample_rate)


def extract_features(
    audio: AudioBuffer,
    window_size: int = WINDOW_SIZE,
    fft_size: int = FFT_SIZE,
    hop: int = HOP,
    noise_from_residual: bool = True,
) -> FeatureTrack:
    """STFT, top-two pitch salience, two noise bands and onset strength.

    With ``noise_from_residual`` the band energies are measured on the
    residual of a sines + noise decomposition, so partials of pitched sounds
    falling inside the noise bands do not count as noise.
    """
    spec = stft(audio, window_size=window_size, fft_size=fft_size, hop=hop)
    p1, s1, p2, s2 = pitch_salience(spec)
    noise_spec = spec
    if noise_from_residual:
        from .snmeasure import measure_turbulence

        noise_spec = stft(measure_turbulence(audio), window_size=window_size, fft_size=fft_size, hop=hop)
    nyq = spec.sample_rate / 2
    (lo_a, lo_b), (hi_a, hi_b) = NOISE_BANDS
    lo = band_energy(noise_spec, lo_a, min(lo_b, nyq))
    hi = band_energy(noise_spec, hi_a, min(hi_b, nyq))
    return FeatureTrack(spec.frame_times(), p1, s1, p2, s2, lo, hi, onset_strength(spec),
                        hop=spec.hop, sample_rate=spec.sample_rate)


def decimate(track: FeatureTrack, m: int) -> FeatureTrack:
    """Block-reduce a track by ``m`` frames.

    Saliences and band energies are averaged, onset strength takes the
    block maximum, pitches come from the block's most salient frame.
    """
    if m < 1:
        raise ValueError("decimation factor must be >= 1")
    if m == 1:
        return track
    n = len(track)
    starts = np.arange(0, n, m)

    def reduce(x, fn):
        return np.array([fn(x[s : s + m]) for s in starts])

    def pick(pitch, sal):
        return np.array([pitch[s + int(np.argmax(sal[s : s + m]))] for s in starts])

    return replace(
        track,
        frame_times=track.frame_times[starts],
        pitch1_hz=pick(track.pitch1_hz, track.pitch1_salience),
        pitch1_salience=reduce(track.pitch1_salience, np.mean),
        pitch2_hz=pick(track.pitch2_hz, track.pitch2_salience),
        pitch2_salience=reduce(track.pitch2_salience, np.mean),
        noise_lo=reduce(track.noise_lo, np.mean),
        noise_hi=reduce(track.noise_hi, np.mean),
        onset_strength=reduce(track.onset_strength, np.max),
        hop=track.hop * m,
    )
