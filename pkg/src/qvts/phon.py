"""Two-level phon states, observables, measurement and density matrices.

The phon space has three axes with a vocal reading:

    z  phonation      |u> pitch-up,  |d> pitch-down
    x  turbulence     |r> bright,    |l> dark
    y  myoelasticity  |f> fast,      |s> slow

States are stored in the computational (u, d) basis. Operators are plain
2x2 complex ``numpy`` arrays; states and density matrices are small frozen
wrappers that validate their invariants on construction.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

TOL = 1e-9

SQRT1_2 = 1.0 / np.sqrt(2.0)

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) * SQRT1_2

_PAULI = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}

_BASIS = {
    "u": (1.0, 0.0),
    "d": (0.0, 1.0),
    "r": (SQRT1_2, SQRT1_2),
    "l": (SQRT1_2, -SQRT1_2),
    "f": (SQRT1_2, 1j * SQRT1_2),
    "s": (SQRT1_2, -1j * SQRT1_2),
}

# (positive, negative) eigenstate names per measurement axis
AXIS_STATES = {"z": ("u", "d"), "x": ("r", "l"), "y": ("f", "s")}


class PhonError(ValueError):
    """Raised on invalid arguments to phon operations."""


def _as_op(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.shape != (2, 2):
        raise PhonError(f"expected a 2x2 operator, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise PhonError("operator has non-finite entries")
    return a


def is_hermitian(m, tol: float = TOL) -> bool:
    a = _as_op(m)
    return bool(np.max(np.abs(a - a.conj().T)) <= tol)


def is_unitary(m, tol: float = TOL) -> bool:
    a = _as_op(m)
    return bool(np.max(np.abs(a.conj().T @ a - I2)) <= tol)


def is_projector(m, tol: float = TOL) -> bool:
    a = _as_op(m)
    return is_hermitian(a, tol) and bool(np.max(np.abs(a @ a - a)) <= tol)


@dataclass(frozen=True, eq=False)
class PhonState:
    """Normalized ket ``alpha_u |u> + alpha_d |d>``."""

    vec: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vec, dtype=complex).reshape(2)
        if not np.all(np.isfinite(v)):
            raise PhonError("state has non-finite amplitudes")
        n = np.linalg.norm(v)
        if abs(n - 1.0) > TOL:
            raise PhonError(f"state is not normalized (norm={n:.6g})")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "vec", v)

    @classmethod
    def from_amplitudes(cls, alpha_u: complex, alpha_d: complex) -> "PhonState":
        """Build a state from unnormalized amplitudes."""
        v = np.array([alpha_u, alpha_d], dtype=complex)
        n = np.linalg.norm(v)
        if not np.isfinite(n) or n == 0.0:
            raise PhonError("cannot normalize a zero or non-finite vector")
        return cls(v / n)

    @property
    def alpha_u(self) -> complex:
        return complex(self.vec[0])

    @property
    def alpha_d(self) -> complex:
        return complex(self.vec[1])

    def overlap(self, other: "PhonState") -> complex:
        """Inner product <self|other>."""
        return complex(np.vdot(self.vec, other.vec))

    def same_ray(self, other: "PhonState", tol: float = TOL) -> bool:
        """Equality up to global phase."""
        return abs(abs(self.overlap(other)) - 1.0) <= tol

    def ket_bra(self) -> np.ndarray:
        return np.outer(self.vec, self.vec.conj())

    def __repr__(self) -> str:
        return f"PhonState({self.alpha_u:.6g}, {self.alpha_d:.6g})"


@dataclass(frozen=True)
class BlochVector:
    nx: float
    ny: float
    nz: float

    def __post_init__(self):
        for v in (self.nx, self.ny, self.nz):
            if not np.isfinite(v):
                raise PhonError("Bloch vector has non-finite components")

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.nx**2 + self.ny**2 + self.nz**2))

    def as_array(self) -> np.ndarray:
        return np.array([self.nx, self.ny, self.nz], dtype=float)

    def normalized(self) -> "BlochVector":
        n = self.norm
        if n == 0.0:
            raise PhonError("zero Bloch vector has no direction")
        return BlochVector(self.nx / n, self.ny / n, self.nz / n)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite 2x2 matrix."""

    m: np.ndarray

    def __post_init__(self):
        a = _as_op(self.m).copy()
        if not is_hermitian(a):
            raise PhonError("density matrix is not Hermitian")
        tr = np.trace(a).real
        if abs(tr - 1.0) > TOL:
            raise PhonError(f"density matrix trace is {tr:.6g}, expected 1")
        if np.min(np.linalg.eigvalsh(a)) < -TOL:
            raise PhonError("density matrix has a negative eigenvalue")
        # symmetrize away round-off so downstream traces stay real
        a = 0.5 * (a + a.conj().T)
        a.setflags(write=False)
        object.__setattr__(self, "m", a)

    @classmethod
    def from_state(cls, psi: PhonState) -> "DensityMatrix":
        return cls(psi.ket_bra())

    def __repr__(self) -> str:
        return f"DensityMatrix({np.array2string(self.m, precision=4)})"


def basis(name: str) -> PhonState:
    """Eigenstate ``u, d, r, l, f`` or ``s`` of the Pauli axes."""
    try:
        return PhonState(np.array(_BASIS[name], dtype=complex))
    except KeyError:
        raise PhonError(f"unknown basis state {name!r}") from None


def pauli(axis: str) -> np.ndarray:
    try:
        return _PAULI[axis].copy()
    except KeyError:
        raise PhonError(f"unknown Pauli axis {axis!r}") from None


def projector(state: PhonState) -> np.ndarray:
    """Rank-one projector ``|psi><psi|``."""
    if not isinstance(state, PhonState):
        state = PhonState(state)
    return state.ket_bra()


def axis_projectors(axis: str) -> Tuple[np.ndarray, np.ndarray]:
    """Complete projector pair (outcome +1, outcome -1) for a Pauli axis."""
    if axis not in AXIS_STATES:
        raise PhonError(f"unknown measurement axis {axis!r}")
    plus, minus = AXIS_STATES[axis]
    return projector(basis(plus)), projector(basis(minus))


def _check_projector(m) -> np.ndarray:
    a = _as_op(m)
    if not is_projector(a):
        raise PhonError("operator is not a projector")
    return a


def _check_pair(pair) -> Tuple[np.ndarray, np.ndarray]:
    if len(pair) != 2:
        raise PhonError("a measurement basis needs exactly two projectors")
    p, q = (_check_projector(m) for m in pair)
    if np.max(np.abs(p + q - I2)) > TOL or np.max(np.abs(p @ q)) > TOL:
        raise PhonError("projector pair is not complete and orthogonal")
    return p, q


def measure_probability(psi: PhonState, m) -> float:
    """Born probability ``<psi|M|psi>``."""
    a = _check_projector(m)
    p = np.vdot(psi.vec, a @ psi.vec).real
    return float(min(1.0, max(0.0, p)))


def collapse(psi: PhonState, basis_pair: Sequence, rng: np.random.Generator):
    """Projective measurement with collapse.

    Returns ``(outcome, post_state)`` where outcome is +1 for the first
    projector of the pair and -1 for the second. A branch that is certain
    is returned without drawing from ``rng``.
    """
    p_plus, p_minus = _check_pair(basis_pair)
    prob = measure_probability(psi, p_plus)
    if prob >= 1.0 - TOL:
        outcome, proj = 1, p_plus
    elif prob <= TOL:
        outcome, proj = -1, p_minus
    elif rng.random() < prob:
        outcome, proj = 1, p_plus
    else:
        outcome, proj = -1, p_minus
    return outcome, PhonState.from_amplitudes(*(proj @ psi.vec))


def expectation(psi: PhonState, obs) -> float:
    a = _as_op(obs)
    if not is_hermitian(a):
        raise PhonError("observable is not Hermitian")
    val = np.vdot(psi.vec, a @ psi.vec)
    assert abs(val.imag) <= 1e-9 * max(1.0, np.max(np.abs(a)))
    return float(val.real)


def direction_operator(n: BlochVector) -> np.ndarray:
    """``sigma . n_hat``; the magnitude of ``n`` is discarded."""
    u = n.normalized()
    return u.nx * SIGMA_X + u.ny * SIGMA_Y + u.nz * SIGMA_Z


def planar_eigenstates(theta: float) -> Tuple[PhonState, PhonState]:
    """Eigenstates (+1, -1) of the z-x plane operator at angle ``theta`` from z."""
    if not np.isfinite(theta):
        raise PhonError("theta must be finite")
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return PhonState(np.array([c, s], dtype=complex)), PhonState(np.array([-s, c], dtype=complex))


def commutator(a, b) -> np.ndarray:
    a, b = _as_op(a), _as_op(b)
    return a @ b - b @ a


def anticommutator(a, b) -> np.ndarray:
    a, b = _as_op(a), _as_op(b)
    return a @ b + b @ a


def uncertainty_check(psi: PhonState, a, b) -> Tuple[float, float]:
    """Both sides of the Robertson inequality: ``(dA * dB, |<[A,B]>| / 2)``."""
    a, b = _as_op(a), _as_op(b)
    if not (is_hermitian(a) and is_hermitian(b)):
        raise PhonError("uncertainty relation needs Hermitian operators")

    def spread(op):
        mean = expectation(psi, op)
        var = expectation(psi, op @ op) - mean**2
        return np.sqrt(max(var, 0.0))

    lhs = spread(a) * spread(b)
    rhs = 0.5 * abs(np.vdot(psi.vec, commutator(a, b) @ psi.vec))
    return float(lhs), float(rhs)


def density_from_ensemble(pairs: Iterable[Tuple[float, PhonState]]) -> DensityMatrix:
    pairs = list(pairs)
    if not pairs:
        raise PhonError("empty ensemble")
    probs = np.array([p for p, _ in pairs], dtype=float)
    if np.any(probs < 0) or not np.all(np.isfinite(probs)):
        raise PhonError("ensemble probabilities must be non-negative")
    if abs(probs.sum() - 1.0) > TOL:
        raise PhonError(f"ensemble probabilities sum to {probs.sum():.6g}")
    rho = sum(p * psi.ket_bra() for p, psi in pairs)
    return DensityMatrix(rho)


def purity(rho: DensityMatrix) -> float:
    return float(np.trace(rho.m @ rho.m).real)


def bloch(rho: DensityMatrix) -> BlochVector:
    n = [float(np.trace(rho.m @ s).real) for s in (SIGMA_X, SIGMA_Y, SIGMA_Z)]
    return BlochVector(*n)


def density_from_bloch(n: BlochVector) -> DensityMatrix:
    if n.norm > 1.0 + TOL:
        raise PhonError("Bloch vector lies outside the unit ball")
    return DensityMatrix(0.5 * (I2 + n.nx * SIGMA_X + n.ny * SIGMA_Y + n.nz * SIGMA_Z))


def apply_gate(psi: PhonState, gate) -> PhonState:
    g = _as_op(gate)
    if not is_unitary(g):
        raise PhonError("gate is not unitary")
    return PhonState.from_amplitudes(*(g @ psi.vec))


def hadamard(psi: PhonState) -> PhonState:
    """Swap the turbulence and phonation axes: ``|r> -> |u>``, ``|l> -> |d>``."""
    return apply_gate(psi, HADAMARD)
