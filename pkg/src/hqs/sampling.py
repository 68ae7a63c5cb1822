"""Seeded hidden-state sources.

Every random draw is addressed by ``(seed, stream_index, trial_index)``. The
draws come from a Philox counter-based generator keyed on
``(seed, stream_index)``; trial ``t`` owns a fixed block of counters, so any
batch of trials reproduces exactly what single-trial calls would give,
regardless of chunking or execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import ndtri

from .hilbert import DimensionError, StateVector

_U64 = 2**64
# Philox yields four 64-bit words per counter step.
_WORDS_PER_STEP = 4
# keep unit draws strictly inside (0, 1) so ndtri stays finite
_HALF_ULP = 2.0**-54


@dataclass(frozen=True)
class RandomStream:
    seed: int
    stream_index: int = 0

    def __post_init__(self) -> None:
        if not 0 <= int(self.seed) < _U64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if not 0 <= int(self.stream_index) < _U64:
            raise ValueError(f"stream_index out of range: {self.stream_index}")

    def uniforms(self, start: int, stop: int, width: int) -> np.ndarray:
        """Uniform draws in (0, 1) for trials ``start..stop-1``, shape ``(stop-start, width)``."""
        if start < 0 or stop < start:
            raise ValueError(f"bad trial range [{start}, {stop})")
        stride = -(-width // _WORDS_PER_STEP)
        bg = np.random.Philox(key=np.array([self.seed, self.stream_index], dtype=np.uint64))
        if start:
            bg.advance(start * stride)
        u = np.random.Generator(bg).random((stop - start, stride * _WORDS_PER_STEP))
        return u[:, :width] + _HALF_ULP

    def normals(self, start: int, stop: int, width: int) -> np.ndarray:
        # inverse-CDF keeps exactly one uniform per normal, so blocks stay aligned
        return ndtri(self.uniforms(start, stop, width))


def haar_amplitudes(dim: int, stream: RandomStream, start: int, stop: int) -> np.ndarray:
    """Haar-random kets for trials ``start..stop-1`` as rows of a ``(n, dim)`` array."""
    if dim < 2:
        raise DimensionError(f"Haar sampling needs dim >= 2, got {dim}")
    g = stream.normals(start, stop, 2 * dim)
    z = g[:, :dim] + 1j * g[:, dim:]
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def sample_haar(dim: int, stream: RandomStream, index: int = 0) -> StateVector:
    return StateVector(haar_amplitudes(dim, stream, index, index + 1)[0])


# hidden-state distributions


@dataclass(frozen=True)
class HaarUniform:
    dim: int

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise DimensionError(f"dim must be >= 2, got {self.dim}")


@dataclass(frozen=True)
class FixedState:
    state: StateVector

    @property
    def dim(self) -> int:
        return self.state.dim


@dataclass(frozen=True)
class ProductHaar:
    dims: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.dims) < 1 or any(d < 2 for d in self.dims):
            raise DimensionError(f"every factor dimension must be >= 2, got {self.dims}")

    @property
    def dim(self) -> int:
        return math.prod(self.dims)


Distribution = Union[HaarUniform, FixedState, ProductHaar]


# refresh policies for sequential measurements


@dataclass(frozen=True)
class FullRefresh:
    pass


@dataclass(frozen=True)
class Persistent:
    pass


@dataclass(frozen=True)
class Mixture:
    """Keep the previous hidden state with probability ``kappa``, else redraw."""

    kappa: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError(f"kappa must lie in [0, 1], got {self.kappa}")


RefreshPolicy = Union[FullRefresh, Persistent, Mixture]


@dataclass(frozen=True)
class HiddenSource:
    distribution: Distribution
    seed: int = 0
    refresh: RefreshPolicy = FullRefresh()

    def __post_init__(self) -> None:
        if not 0 <= int(self.seed) < _U64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def dim(self) -> int:
        return self.distribution.dim

    def draw_stream(self, stream: int = 0) -> RandomStream:
        return RandomStream(self.seed, 2 * stream)

    def coin_stream(self, stream: int = 0) -> RandomStream:
        return RandomStream(self.seed, 2 * stream + 1)


def hidden_amplitudes(source: HiddenSource, start: int, stop: int, stream: int = 0) -> np.ndarray:
    """Hidden kets for trials ``start..stop-1`` drawn from ``source``'s distribution."""
    dist = source.distribution
    n = stop - start
    if isinstance(dist, FixedState):
        return np.broadcast_to(dist.state.amplitudes, (n, dist.dim)).copy()
    rs = source.draw_stream(stream)
    if isinstance(dist, HaarUniform):
        return haar_amplitudes(dist.dim, rs, start, stop)
    if isinstance(dist, ProductHaar):
        g = rs.normals(start, stop, 2 * sum(dist.dims))
        out = np.ones((n, 1), dtype=np.complex128)
        offset = 0
        for d in dist.dims:
            z = g[:, offset:offset + d] + 1j * g[:, offset + d:offset + 2 * d]
            offset += 2 * d
            z /= np.linalg.norm(z, axis=1, keepdims=True)
            out = np.einsum("ni,nj->nij", out, z).reshape(n, -1)
        return out
    raise TypeError(f"unknown distribution {dist!r}")


def sample_hidden(source: HiddenSource, trial_index: int, stream: int = 0) -> StateVector:
    return StateVector(hidden_amplitudes(source, trial_index, trial_index + 1, stream)[0])


def refresh_amplitudes(source: HiddenSource, previous: np.ndarray, start: int,
                       step_index: int) -> np.ndarray:
    """Apply the source's refresh policy to a block of hidden kets.

    ``previous`` has one row per trial starting at ``start``. Fresh draws for
    step ``s`` use stream ``s``, so step 0 coincides with ``hidden_amplitudes``.
    """
    previous = np.asarray(previous)
    if previous.shape[-1] != source.dim:
        raise DimensionError(f"dimension mismatch: {previous.shape[-1]} != {source.dim}")
    policy = source.refresh
    if isinstance(policy, Persistent):
        return previous.copy()
    stop = start + previous.shape[0]
    fresh = hidden_amplitudes(source, start, stop, stream=step_index)
    if isinstance(policy, FullRefresh):
        return fresh
    if isinstance(policy, Mixture):
        keep = source.coin_stream(step_index).uniforms(start, stop, 1)[:, 0] < policy.kappa
        return np.where(keep[:, None], previous, fresh)
    raise TypeError(f"unknown refresh policy {policy!r}")


def refresh_hidden(source: HiddenSource, previous: StateVector, step_index: int,
                   trial_index: int = 0) -> StateVector:
    if previous.dim != source.dim:
        raise DimensionError(f"dimension mismatch: {previous.dim} != {source.dim}")
    if isinstance(source.refresh, Persistent):
        return previous
    out = refresh_amplitudes(source, previous.amplitudes[None, :], trial_index, step_index)[0]
    if np.array_equal(out, previous.amplitudes):
        return previous
    return StateVector(out)
