"""Finite-dimensional Hilbert space primitives.

States are kets stored as complex128 numpy vectors; projective measurements
are orthonormal bases stored row-wise with one label per basis vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

NORM_FLOOR = 1e-9
ORTHO_ATOL = 1e-10
PROB_ATOL = 1e-10


class DimensionError(ValueError):
    pass


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized pure state. Unnormalized input is rescaled on construction."""

    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.size < 2:
            raise DimensionError(f"state dimension must be >= 2, got {amps.size}")
        norm = np.linalg.norm(amps)
        if not np.isfinite(norm) or norm < NORM_FLOOR:
            raise ValueError(f"cannot normalize state with norm {norm:.3g}")
        object.__setattr__(self, "amplitudes", _frozen(amps / norm))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @classmethod
    def basis(cls, dim: int, index: int) -> StateVector:
        v = np.zeros(dim, dtype=np.complex128)
        v[index] = 1.0
        return cls(v)

    def __repr__(self) -> str:
        return f"StateVector(dim={self.dim}, amplitudes={np.round(self.amplitudes, 6).tolist()})"


@dataclass(frozen=True, eq=False)
class ProjectiveMeasurement:
    """Rank-one projective measurement given by an orthonormal basis.

    ``basis`` holds the kets; ``matrix`` stacks them row-wise so that
    ``matrix.conj() @ psi`` gives every amplitude <n|psi> at once.
    """

    basis: tuple[StateVector, ...]
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        basis = tuple(v if isinstance(v, StateVector) else StateVector(v) for v in self.basis)
        labels = tuple(str(lab) for lab in self.labels)
        if len(basis) < 2:
            raise DimensionError("a measurement needs at least two outcomes")
        dim = basis[0].dim
        if any(v.dim != dim for v in basis) or len(basis) != dim:
            raise DimensionError(f"basis must contain exactly {dim} vectors of dimension {dim}")
        if len(labels) != dim or len(set(labels)) != dim:
            raise ValueError(f"need {dim} distinct labels, got {labels!r}")
        matrix = np.stack([v.amplitudes for v in basis])
        gram = matrix.conj() @ matrix.T
        err = np.max(np.abs(gram - np.eye(dim)))
        if err >= ORTHO_ATOL:
            raise ValueError(f"basis is not orthonormal (max Gram deviation {err:.3g})")
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_matrix", _frozen(matrix))

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix  # type: ignore[attr-defined]

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[complex]] | np.ndarray,
                  labels: Sequence[str] | None = None) -> ProjectiveMeasurement:
        rows = np.asarray(rows, dtype=np.complex128)
        if labels is None:
            labels = [str(i) for i in range(rows.shape[0])]
        return cls(tuple(StateVector(r) for r in rows), tuple(labels))

    @classmethod
    def computational(cls, dim: int, labels: Sequence[str] | None = None) -> ProjectiveMeasurement:
        return cls.from_rows(np.eye(dim), labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def __repr__(self) -> str:
        return f"ProjectiveMeasurement(dim={self.dim}, labels={list(self.labels)})"


@dataclass(frozen=True)
class OutcomeDistribution:
    probs: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=float).reshape(-1)
        if probs.size != len(self.labels):
            raise DimensionError("probabilities and labels differ in length")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > PROB_ATOL:
            raise ValueError(f"not a probability distribution: {probs.tolist()}")
        object.__setattr__(self, "probs", _frozen(probs))
        object.__setattr__(self, "labels", tuple(self.labels))

    def __getitem__(self, label: str) -> float:
        return float(self.probs[self.labels.index(label)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.labels, self.probs.tolist()))


def _check_dims(a: int, b: int) -> None:
    if a != b:
        raise DimensionError(f"dimension mismatch: {a} != {b}")


def inner_product(a: StateVector, b: StateVector) -> complex:
    """<a|b>, antilinear in ``a``."""
    _check_dims(a.dim, b.dim)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def born_weights(m: ProjectiveMeasurement, amplitudes: np.ndarray) -> np.ndarray:
    """|<n|v>|^2 for one ket (shape ``(D,)``) or a stack of kets (shape ``(N, D)``)."""
    amplitudes = np.asarray(amplitudes)
    _check_dims(amplitudes.shape[-1], m.dim)
    return np.abs(amplitudes @ m.matrix.conj().T) ** 2


def born_probabilities(state: StateVector, m: ProjectiveMeasurement) -> OutcomeDistribution:
    _check_dims(state.dim, m.dim)
    return OutcomeDistribution(born_weights(m, state.amplitudes), m.labels)


def tensor_state(a: StateVector, b: StateVector) -> StateVector:
    # row-major: joint index i * b.dim + j
    return StateVector(np.kron(a.amplitudes, b.amplitudes))


def tensor_measurement(ma: ProjectiveMeasurement, mb: ProjectiveMeasurement) -> ProjectiveMeasurement:
    rows = np.kron(ma.matrix, mb.matrix)
    labels = [f"{la}⊗{lb}" for la in ma.labels for lb in mb.labels]
    return ProjectiveMeasurement.from_rows(rows, labels)


def real_rotation(theta: float, labels: Sequence[str] = ("+", "-")) -> ProjectiveMeasurement:
    """Qubit basis {(cos t, sin t), (-sin t, cos t)}."""
    c, s = np.cos(theta), np.sin(theta)
    return ProjectiveMeasurement.from_rows([[c, s], [-s, c]], labels)
