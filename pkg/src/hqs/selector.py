"""Deterministic outcome selection from a standard state and a hidden state.

Outcomes are ranked by Born probability of the standard state, largest
first. Rank ``n`` fires when its hidden-state weight ``q_n`` strictly exceeds
the threshold ``pi_n``; the first rank that fires is the outcome. Thresholds
are chosen so that, averaged over the hidden-state distribution, rank ``n``
fires with probability ``p_n`` given that ranks ``1..n-1`` did not.

Under the Haar measure the hidden weights ``(q_1, ..., q_D)`` are uniform on
the probability simplex. Conditional on ``q_1..q_n`` the remaining weights
are uniform on the simplex of total mass ``r_n = 1 - sum(q_1..q_n)``, giving

    Prob(q_{n+1} > t | q_1..q_n) = (1 - t / r_n) ** (D - n - 1)

which inverts to the closed-form thresholds used by ``haar_threshold_schedule``.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .hilbert import (
    DimensionError,
    OutcomeDistribution,
    ProjectiveMeasurement,
    StateVector,
    born_weights,
)
from .sampling import FixedState, HaarUniform, HiddenSource, hidden_amplitudes

# denominators below this mean every remaining outcome has zero probability
_DENOM_FLOOR = 1e-15
_MIN_CONDITIONED = 100
_MAX_WIDENINGS = 8
# dedicated stream range for reference tables, far from per-trial streams
_REFERENCE_STREAM = 2**40


class SelectorError(ValueError):
    pass


class ConditioningError(SelectorError):
    pass


class DegenerateSourceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class AnalyticHaar:
    pass


@dataclass(frozen=True)
class EmpiricalQuantile:
    sample_count: int = 100_000
    band_epsilon: float = 0.005

    def __post_init__(self) -> None:
        if self.sample_count < 1:
            raise ValueError("sample_count must be positive")
        if not self.band_epsilon > 0:
            raise ValueError("band_epsilon must be positive")


ThresholdStrategy = Union[AnalyticHaar, EmpiricalQuantile]


@dataclass(frozen=True)
class SelectionTrace:
    sorted_p: tuple[float, ...]
    sorted_q: tuple[float, ...]
    thresholds: tuple[float, ...]
    permutation: tuple[int, ...]
    selected_rank: int
    selected_label: str

    @property
    def selected_index(self) -> int:
        return self.permutation[self.selected_rank - 1]

    def to_dict(self) -> dict:
        # JSON has no infinities; the final-rank sentinel becomes null
        def enc(x: float):
            return None if np.isinf(x) and x < 0 else x
        return {
            "sorted_p": list(self.sorted_p),
            "sorted_q": list(self.sorted_q),
            "thresholds": [enc(t) for t in self.thresholds],
            "permutation": list(self.permutation),
            "selected_rank": self.selected_rank,
            "selected_label": self.selected_label,
        }


def sort_descending(p: OutcomeDistribution | Sequence[float] | np.ndarray):
    """Stable descending sort. Returns ``(sorted_values, permutation)``.

    ``permutation[k]`` is the original (0-based) index of rank ``k + 1``;
    ties keep their original order.
    """
    probs = p.probs if isinstance(p, OutcomeDistribution) else np.asarray(p, dtype=float)
    perm = np.argsort(-probs, axis=-1, kind="stable")
    return np.take_along_axis(probs, perm, axis=-1), perm


def haar_threshold_first(p1: float, dim: int) -> float:
    if dim < 2:
        raise DimensionError(f"dim must be >= 2, got {dim}")
    if not 0.0 <= p1 <= 1.0:
        raise ValueError(f"p1 must lie in [0, 1], got {p1}")
    return 1.0 - p1 ** (1.0 / (dim - 1))


def haar_threshold_batch(sorted_p: np.ndarray, sorted_q: np.ndarray) -> np.ndarray:
    """Closed-form Haar thresholds for every row of ``(N, D)`` sorted arrays."""
    sorted_p = np.atleast_2d(sorted_p)
    sorted_q = np.atleast_2d(sorted_q)
    n_rows, dim = sorted_q.shape
    sorted_p = np.broadcast_to(sorted_p, sorted_q.shape)
    # tail sums: mass left after ranks 1..k, summed from the tail so q_k <= r_k holds exactly
    tail_p = np.cumsum(sorted_p[:, ::-1], axis=1)[:, ::-1]
    tail_q = np.cumsum(sorted_q[:, ::-1], axis=1)[:, ::-1]
    # rank 1 conditions on nothing: both masses are exactly 1
    tail_p[:, 0] = 1.0
    tail_q[:, 0] = 1.0
    thresholds = np.empty((n_rows, dim))
    thresholds[:, -1] = -np.inf
    for k in range(dim - 1):
        denom = tail_p[:, k]
        live = denom > _DENOM_FLOOR
        c = np.clip(np.divide(sorted_p[:, k], denom, out=np.zeros(n_rows), where=live), 0.0, 1.0)
        t = tail_q[:, k] * (1.0 - c ** (1.0 / (dim - k - 1)))
        thresholds[:, k] = np.where(live, t, np.inf)
    return thresholds


def haar_threshold_schedule(sorted_p: Sequence[float], sorted_q: Sequence[float],
                            dim: int | None = None) -> np.ndarray:
    sorted_q = np.asarray(sorted_q, dtype=float)
    if dim is not None and dim != sorted_q.size:
        raise DimensionError(f"dimension mismatch: {dim} != {sorted_q.size}")
    return haar_threshold_batch(np.asarray(sorted_p, dtype=float), sorted_q)[0]


@functools.lru_cache(maxsize=32)
def _reference_table(source: HiddenSource, m: ProjectiveMeasurement, sample_count: int) -> np.ndarray:
    amps = hidden_amplitudes(source, 0, sample_count, stream=_REFERENCE_STREAM)
    table = born_weights(m, amps)
    if np.all(np.ptp(table, axis=0) == 0):
        warnings.warn("hidden source is a point mass; empirical thresholds are degenerate",
                      DegenerateSourceWarning, stacklevel=3)
    return table


def reference_weights(source: HiddenSource, m: ProjectiveMeasurement,
                      strategy: EmpiricalQuantile) -> np.ndarray:
    """Hidden-state Born weights of ``sample_count`` fresh draws, in ``m``'s label order."""
    return _reference_table(source, m, strategy.sample_count)


def empirical_threshold_schedule(sorted_p: Sequence[float], observed_q: Sequence[float],
                                 source: HiddenSource, strategy: EmpiricalQuantile, *,
                                 measurement: ProjectiveMeasurement,
                                 permutation: Sequence[int]) -> np.ndarray:
    """Thresholds from empirical (conditional) quantiles of the source's hidden weights.

    Rank ``n + 1`` conditions by rejection: reference draws are kept when each
    of ``q_1..q_n`` lies within ``band_epsilon`` of the observed values. The
    band doubles while fewer than 100 draws survive, at most 8 times.
    """
    sorted_p = np.asarray(sorted_p, dtype=float)
    observed_q = np.asarray(observed_q, dtype=float)
    dim = sorted_p.size
    table = reference_weights(source, measurement, strategy)[:, np.asarray(permutation)]
    thresholds = np.full(dim, np.inf)
    thresholds[-1] = -np.inf
    remaining = 1.0
    mask = np.ones(table.shape[0], dtype=bool)
    for k in range(dim - 1):
        if remaining <= _DENOM_FLOOR:
            break
        c = min(max(sorted_p[k] / remaining, 0.0), 1.0)
        if k > 0:
            eps = strategy.band_epsilon
            for _ in range(_MAX_WIDENINGS + 1):
                mask = np.all(np.abs(table[:, :k] - observed_q[:k]) <= eps, axis=1)
                if mask.sum() >= _MIN_CONDITIONED:
                    break
                eps *= 2
            else:
                raise ConditioningError(
                    f"only {int(mask.sum())} reference draws survive conditioning at rank {k + 1}")
        thresholds[k] = np.quantile(table[mask, k], 1.0 - c)
        remaining -= sorted_p[k]
    return thresholds


def _check_pairing(strategy: ThresholdStrategy, source: HiddenSource | None, dim: int) -> None:
    if isinstance(strategy, AnalyticHaar):
        if source is None:
            return
        dist = source.distribution
        # a fixed state stands for one known draw from the Haar prior
        if isinstance(dist, FixedState) and dist.dim == dim:
            return
        if not (isinstance(dist, HaarUniform) and dist.dim == dim):
            raise SelectorError(
                f"analytic Haar thresholds require a Haar source on dimension {dim}, got {dist!r}")
    elif isinstance(strategy, EmpiricalQuantile):
        if source is None:
            raise SelectorError("empirical thresholds need a hidden source to sample from")
        if source.dim != dim:
            raise DimensionError(f"dimension mismatch: source {source.dim} != {dim}")
    else:
        raise SelectorError(f"unknown strategy {strategy!r}")


@dataclass(frozen=True)
class BatchSelection:
    """Selections for ``N`` trials; arrays are ``(N, D)`` except ``rank``/``outcome``."""

    permutation: np.ndarray
    sorted_p: np.ndarray
    sorted_q: np.ndarray
    thresholds: np.ndarray
    rank: np.ndarray  # 1-based
    outcome: np.ndarray  # original 0-based outcome index

    def __len__(self) -> int:
        return self.rank.size

    def trace(self, i: int, labels: Sequence[str]) -> SelectionTrace:
        return SelectionTrace(
            sorted_p=tuple(self.sorted_p[i].tolist()),
            sorted_q=tuple(self.sorted_q[i].tolist()),
            thresholds=tuple(self.thresholds[i].tolist()),
            permutation=tuple(int(j) for j in self.permutation[i]),
            selected_rank=int(self.rank[i]),
            selected_label=labels[int(self.outcome[i])],
        )


def select_batch(p: np.ndarray, q: np.ndarray, strategy: ThresholdStrategy = AnalyticHaar(), *,
                 source: HiddenSource | None = None,
                 measurement: ProjectiveMeasurement | None = None) -> BatchSelection:
    """Vectorized selection.

    ``p`` holds the standard-state Born weights, either one row shared by all
    trials or one row per trial; ``q`` holds one row of hidden weights per trial.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    p = np.broadcast_to(np.atleast_2d(np.asarray(p, dtype=float)), q.shape)
    dim = q.shape[1]
    _check_pairing(strategy, source, dim)
    sorted_p, perm = sort_descending(p)
    sorted_q = np.take_along_axis(q, perm, axis=1)
    if isinstance(strategy, AnalyticHaar):
        thresholds = haar_threshold_batch(sorted_p, sorted_q)
    else:
        if measurement is None:
            raise SelectorError("empirical thresholds need the measurement basis")
        thresholds = np.stack([
            empirical_threshold_schedule(sp, sq, source, strategy, measurement=measurement, permutation=pm)
            for sp, sq, pm in zip(sorted_p, sorted_q, perm)
        ]) if len(q) else np.empty((0, dim))
    fired = sorted_q > thresholds
    rank_idx = np.argmax(fired, axis=1)
    outcome = perm[np.arange(len(q)), rank_idx]
    return BatchSelection(perm, sorted_p, sorted_q, thresholds, rank_idx + 1, outcome)


def select_outcome(psi: StateVector, phi: StateVector, m: ProjectiveMeasurement,
                   strategy: ThresholdStrategy = AnalyticHaar(), *,
                   source: HiddenSource | None = None) -> SelectionTrace:
    """Pick the outcome of measuring ``m`` on ``psi`` given hidden state ``phi``.

    ``source`` names the distribution the hidden state is assumed drawn from.
    It is required for :class:`EmpiricalQuantile` and optional for
    :class:`AnalyticHaar`, where it is only checked for compatibility.
    """
    if not (psi.dim == phi.dim == m.dim):
        raise DimensionError(f"dimension mismatch: psi {psi.dim}, phi {phi.dim}, measurement {m.dim}")
    p = born_weights(m, psi.amplitudes)
    q = born_weights(m, phi.amplitudes)
    batch = select_batch(p, q[None, :], strategy, source=source, measurement=m)
    return batch.trace(0, m.labels)
