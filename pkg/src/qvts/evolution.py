"""Feature-driven Hamiltonian evolution, measurement and collapse of phons.

A feature track is cut into segments of ``M`` analysis frames. Inside a
segment, frame ``m`` contributes the Hamiltonian

    H_m = exp(-k m) * (omega / 2) * sigma . n_m

where ``n_m`` is the unit potential built from that frame's pitch salience
(z), noisiness (x) and onset strength (y). The segment propagator is the
exponential of the cumulative sum of ``H_m * dt``. After each segment the
phon is measured along an axis chosen from its current orientation, and
every ``collapse_every``-th measurement collapses the state.

Time is in seconds: by default ``dt`` is the hop period of the feature
track, so with ``omega = 1`` a segment rotates the phon by a small angle
unless a strong potential persists. Trace timestamps are frame centres.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from . import phon
from .features import FeatureTrack
from .phon import (
    I2, SIGMA_X, SIGMA_Y, SIGMA_Z, TOL, BlochVector, DensityMatrix, PhonError, PhonState,
)

State = Union[PhonState, DensityMatrix]

AXES = ("z", "x", "y")
AXIS_POLICIES = ("pitchiness", "phonation", "min-prob")
# onsets must beat noisiness by this much before y replaces x
ONSET_MARGIN = 0.01


# ---------------------------------------------------------------------------
# Hamiltonians and propagators


@dataclass(frozen=True, eq=False)
class HamiltonianSegment:
    """``H(m) = exp(-k m) * s`` over ``frames`` steps of ``dt``."""

    s: np.ndarray
    k: float = 0.1
    omega: float = 1.0
    frames: int = 10
    dt: float = 1.0

    def __post_init__(self):
        if not phon.is_hermitian(self.s):
            raise PhonError("segment operator must be Hermitian")
        if self.frames < 1 or self.k < 0 or self.omega <= 0:
            raise PhonError("invalid segment parameters")

    def operators(self) -> List[np.ndarray]:
        return [np.exp(-self.k * m) * self.s for m in range(self.frames)]

    def propagator(self) -> np.ndarray:
        return propagator(self.operators(), self.dt)


def build_potential(pitch_salience: float, noisiness: float, onset_strength: float = 0.0,
                    previous: Optional[BlochVector] = None) -> BlochVector:
    """Unit potential direction: salience on z, noisiness on x, onsets on y.

    An all-zero frame reuses ``previous`` (or points along z).
    """
    vals = (pitch_salience, noisiness, onset_strength)
    if any(not np.isfinite(v) for v in vals):
        raise PhonError("features must be finite")
    if any(v < 0 for v in vals):
        raise PhonError("features must be non-negative")
    n = BlochVector(nx=noisiness, ny=onset_strength, nz=pitch_salience)
    if n.norm <= 1e-12:
        return previous if previous is not None else BlochVector(0.0, 0.0, 1.0)
    return n.normalized()


def segment_hamiltonian(potentials: Sequence[BlochVector], omega: float = 1.0,
                        k: float = 0.1) -> List[np.ndarray]:
    """``exp(-k m) * omega/2 * sigma . n_m`` for ``m = 0, 1, ...``.

    The length of each potential scales the energy; pass unit vectors for the
    plain ``omega / 2`` level splitting.
    """
    if len(potentials) == 0:
        raise PhonError("no potentials")
    out = []
    for m, n in enumerate(potentials):
        sigma_n = n.nx * SIGMA_X + n.ny * SIGMA_Y + n.nz * SIGMA_Z
        out.append(np.exp(-k * m) * 0.5 * omega * sigma_n)
    return out


def _pauli_coefficients(a: np.ndarray) -> Tuple[float, np.ndarray]:
    """Write a Hermitian 2x2 as ``a0 I + v . sigma``."""
    a0 = 0.5 * np.trace(a).real
    v = np.array([0.5 * np.trace(a @ s).real for s in (SIGMA_X, SIGMA_Y, SIGMA_Z)])
    return a0, v


def expm_hermitian(a: np.ndarray) -> np.ndarray:
    """``exp(-i A)`` for Hermitian ``A`` via the Pauli closed form."""
    a0, v = _pauli_coefficients(a)
    theta = float(np.linalg.norm(v))
    phase = np.exp(-1j * a0)
    if theta < 1e-15:
        return phase * I2
    nhat = v / theta
    sigma_n = nhat[0] * SIGMA_X + nhat[1] * SIGMA_Y + nhat[2] * SIGMA_Z
    return phase * (np.cos(theta) * I2 - 1j * np.sin(theta) * sigma_n)


def propagator(hs: Sequence[np.ndarray], dt: float) -> np.ndarray:
    """``exp(-i * sum_m H_m * dt)``.

    Exact for a commuting family; for non-commuting input it is the
    cumulative-sum approximation of the time-ordered exponential.
    """
    if len(hs) == 0:
        return I2.copy()
    stack = np.asarray(hs, dtype=complex)
    if stack.ndim != 3 or stack.shape[1:] != (2, 2):
        raise PhonError("Hamiltonians must be 2x2 matrices")
    if np.max(np.abs(stack - np.conj(np.transpose(stack, (0, 2, 1))))) > TOL:
        raise PhonError("Hamiltonians must be Hermitian")
    return expm_hermitian(stack.sum(axis=0) * dt)


def evolve_pure(psi: PhonState, u: np.ndarray) -> PhonState:
    if not phon.is_unitary(u):
        raise PhonError("evolution operator is not unitary")
    return PhonState.from_amplitudes(*(u @ psi.vec))


def evolve_density(rho: DensityMatrix, u: np.ndarray) -> DensityMatrix:
    """Schroedinger-picture update ``U rho U^dagger``."""
    if not phon.is_unitary(u):
        raise PhonError("evolution operator is not unitary")
    return DensityMatrix(u @ rho.m @ u.conj().T)


# ---------------------------------------------------------------------------
# measurement on density matrices


def measure_density(rho: DensityMatrix, m) -> float:
    """``Tr[rho M]`` for a projector ``M``."""
    a = np.asarray(m, dtype=complex)
    if not phon.is_projector(a):
        raise PhonError("operator is not a projector")
    return float(min(1.0, max(0.0, np.trace(rho.m @ a).real)))


def collapse_density(rho: DensityMatrix, pair, rng: np.random.Generator):
    """Selective measurement ``M_i rho M_i / Tr[rho M_i]`` with Born sampling."""
    p_plus, p_minus = phon._check_pair(pair)
    prob = measure_density(rho, p_plus)
    if prob >= 1.0 - TOL:
        outcome, proj = 1, p_plus
    elif prob <= TOL:
        outcome, proj = -1, p_minus
    elif rng.random() < prob:
        outcome, proj = 1, p_plus
    else:
        outcome, proj = -1, p_minus
    post = proj @ rho.m @ proj
    tr = np.trace(post).real
    if tr <= 0:
        raise PhonError("measurement branch has zero probability")
    return outcome, DensityMatrix(post / tr)


def axis_probabilities(state: State) -> Tuple[float, ...]:
    """``(p_u, p_d, p_r, p_l, p_f, p_s)``."""
    rho = _as_density(state)
    out = []
    for axis in AXES:
        n = float(np.trace(rho.m @ phon.pauli(axis)).real)
        p = min(1.0, max(0.0, 0.5 * (1 + n)))
        out += [p, 1.0 - p]
    return tuple(out)


def mixture_amplitudes(rho: State) -> dict:
    """Oscillator and noise gains for sonifying a (mixed) phon.

    Upper pitch ``p_u - min(p_u, p_d)``, lower pitch ``p_d - min(p_u, p_d)``,
    noise ``min(p_u, p_d)``, and pulse train ``|p_f - p_s|``.
    """
    p_u, p_d, _, _, p_f, p_s = axis_probabilities(rho)
    noise = min(p_u, p_d)
    return {
        "amp_up": p_u - noise,
        "amp_down": p_d - noise,
        "amp_noise": noise,
        "amp_pulse": abs(p_f - p_s),
    }


# ---------------------------------------------------------------------------
# orientation measures


def _as_density(state: State) -> DensityMatrix:
    return state if isinstance(state, DensityMatrix) else DensityMatrix.from_state(state)


def _axis_degree(state: State, sigma: np.ndarray) -> float:
    if isinstance(state, PhonState):
        return min(1.0, abs(phon.expectation(state, sigma)))
    n = phon.bloch(state)
    if n.norm < 1e-12:
        return 0.0
    return min(1.0, abs(np.trace(state.m @ sigma).real) / n.norm)


def pitchiness(state: State) -> float:
    """``|<sigma_z>|`` for kets; for density matrices the z-share of the
    Bloch direction, so mixing does not by itself lower pitchiness."""
    return _axis_degree(state, SIGMA_Z)


def noisiness(state: State) -> float:
    return _axis_degree(state, SIGMA_X)


def transientness(state: State) -> float:
    return _axis_degree(state, SIGMA_Y)


# ---------------------------------------------------------------------------
# follower


@dataclass
class EvolutionConfig:
    frame_decimation: int = 10
    damping: float = 0.1
    pitchiness_threshold: float = 0.9
    collapse_decimation: int = 5
    initial: Union[str, PhonState, DensityMatrix] = "u"
    seed: int = 0
    omega: float = 1.0
    dt: Optional[float] = None
    axis_policy: str = "pitchiness"
    mixed_threshold: float = 0.5
    scale_by_features: bool = False

    def validate(self) -> None:
        if self.frame_decimation < 1 or self.collapse_decimation < 1:
            raise PhonError("decimations must be positive integers")
        if not 0.0 <= self.pitchiness_threshold <= 1.0:
            raise PhonError("pitchiness threshold must lie in [0, 1]")
        if self.damping < 0 or self.omega <= 0 or (self.dt is not None and self.dt <= 0):
            raise PhonError("damping must be >= 0, omega and dt > 0")
        if self.axis_policy not in AXIS_POLICIES:
            raise PhonError(f"unknown axis policy {self.axis_policy!r}")

    def frame_dt(self, frame_period: float) -> float:
        """Propagator time step per analysis frame; the frame period in seconds by default."""
        return self.dt if self.dt is not None else frame_period

    def initial_state(self) -> State:
        if isinstance(self.initial, str):
            return phon.basis(self.initial)
        return self.initial


@dataclass
class TraceStep:
    time: float
    state: State
    axis_measured: str
    outcome: Optional[int]
    collapsed: bool
    pitchiness: float
    probabilities: Tuple[float, ...]
    pitch_hz: Optional[float] = None
    frame_start: int = 0
    frame_stop: int = 0


@dataclass
class EvolutionTrace:
    steps: List[TraceStep] = field(default_factory=list)

    CSV_COLUMNS = ("time_s", "axis", "outcome", "collapsed", "pitchiness",
                   "p_u", "p_d", "p_r", "p_l", "p_f", "p_s", "pitch_hz_if_any")

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.steps])

    @property
    def is_mixed(self) -> bool:
        return any(isinstance(s.state, DensityMatrix) for s in self.steps)

    def rows(self):
        for s in self.steps:
            yield {
                "time_s": s.time,
                "axis": s.axis_measured,
                "outcome": "" if s.outcome is None else s.outcome,
                "collapsed": int(s.collapsed),
                "pitchiness": s.pitchiness,
                **dict(zip(self.CSV_COLUMNS[5:11], s.probabilities)),
                "pitch_hz_if_any": "" if s.pitch_hz is None else s.pitch_hz,
            }

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=self.CSV_COLUMNS)
            w.writeheader()
            for row in self.rows():
                w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})

    def to_json(self) -> str:
        steps = []
        for s, row in zip(self.steps, self.rows()):
            rho = _as_density(s.state).m
            row = dict(row, density=[[[z.real, z.imag] for z in r] for r in rho])
            if isinstance(s.state, PhonState):
                row["ket"] = [[z.real, z.imag] for z in s.state.vec]
            steps.append({k: (None if v == "" else v) for k, v in row.items()})
        return json.dumps({"steps": steps}, indent=1)

    def amplitudes(self) -> List[dict]:
        return [mixture_amplitudes(s.state) for s in self.steps]


def _choose_axis(state: State, config: EvolutionConfig, noise_level: float, onset_level: float,
                 pitchy: float) -> str:
    if config.axis_policy == "phonation":
        return "z"
    if config.axis_policy == "min-prob":
        p_u, p_d = axis_probabilities(state)[:2]
        return "z" if min(p_u, p_d) > config.mixed_threshold else "y"
    if pitchy >= config.pitchiness_threshold:
        return "z"
    return "y" if onset_level > noise_level + ONSET_MARGIN else "x"


def _segment_pitch(features: FeatureTrack, lo: int, hi: int, outcome: int) -> Optional[float]:
    # pitches of the segment's most salient frame
    i = lo + int(np.argmax(features.pitch1_salience[lo:hi]))
    hz = features.upper_hz[i] if outcome > 0 else features.lower_hz[i]
    return float(hz) if hz > 0 else None


def run_follower(features: FeatureTrack, config: EvolutionConfig) -> EvolutionTrace:
    """Repeated cycles of segment evolution, measurement and (sometimes) collapse.

    Works on kets or density matrices depending on ``config.initial``. A
    measurement that does not collapse still draws and records an outcome
    but leaves the state untouched.
    """
    config.validate()
    n = len(features)
    if n == 0:
        raise PhonError("empty feature track")
    if not np.all(np.isfinite(features.pitch1_salience)):
        raise PhonError("feature track has non-finite values")
    rng = np.random.default_rng(config.seed)
    state = config.initial_state()
    mixed = isinstance(state, DensityMatrix)
    M = config.frame_decimation
    noise = features.noisiness
    onset = features.onset_strength
    sal = features.pitch1_salience
    trace = EvolutionTrace()
    prev = None
    n_measured = 0
    for lo in range(0, n, M):
        hi = min(lo + M, n)
        pots = []
        for i in range(lo, hi):
            prev = build_potential(sal[i], noise[i], onset[i], prev)
            pots.append(prev)
        if config.scale_by_features:
            mags = [np.linalg.norm([noise[i], onset[i], sal[i]]) for i in range(lo, hi)]
            pots = [BlochVector(p.nx * g, p.ny * g, p.nz * g) for p, g in zip(pots, mags)]
        u = propagator(segment_hamiltonian(pots, config.omega, config.damping), config.frame_dt(features.frame_period))
        state = evolve_density(state, u) if mixed else evolve_pure(state, u)

        pitchy = pitchiness(state)
        axis = _choose_axis(state, config, float(noise[lo:hi].mean()), float(onset[lo:hi].mean()), pitchy)
        n_measured += 1
        do_collapse = n_measured % config.collapse_decimation == 0
        pair = phon.axis_projectors(axis)
        if do_collapse:
            if mixed:
                outcome, state = collapse_density(state, pair, rng)
            else:
                outcome, state = phon.collapse(state, pair, rng)
        else:
            p_plus = measure_density(state, pair[0]) if mixed else phon.measure_probability(state, pair[0])
            outcome = 1 if rng.random() < p_plus else -1
        pitch = _segment_pitch(features, lo, hi, outcome) if axis == "z" else None
        trace.steps.append(TraceStep(
            time=float(features.frame_times[hi - 1]),
            state=state,
            axis_measured=axis,
            outcome=outcome,
            collapsed=do_collapse,
            pitchiness=pitchy,
            probabilities=axis_probabilities(state),
            pitch_hz=pitch,
            frame_start=lo,
            frame_stop=hi,
        ))
    return trace


def mixed_initial(p_up: float) -> DensityMatrix:
    """Ensemble of ``|u>`` with probability ``p_up`` and ``|d>`` otherwise."""
    if not 0.0 <= p_up <= 1.0:
        raise PhonError("p_up must lie in [0, 1]")
    return phon.density_from_ensemble([(p_up, phon.basis("u")), (1.0 - p_up, phon.basis("d"))])
