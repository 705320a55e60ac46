"""Unitary DFT matrices, the large-delay selector and Zadoff-Chu pilots."""

from dataclasses import dataclass
from functools import lru_cache
from math import gcd

import numpy as np

from .errors import InvalidDimensionError, InvalidParameterError

__all__ = [
    "UnitaryDft",
    "DelayMask",
    "PilotSequence",
    "idft_matrix",
    "delay_mask",
    "zadoff_chu",
    "pilot_sequence",
    "largest_odd_prime_at_most",
]


@dataclass(frozen=True)
class UnitaryDft:
    """Unitary inverse DFT of size ``n``.

    ``inverse`` maps a frequency-domain vector to the delay domain,
    ``forward`` is its conjugate transpose.  Both carry the 1/sqrt(n)
    normalisation so energy is preserved in either direction.
    """

    size: int
    inverse: np.ndarray

    @property
    def forward(self):
        return self.inverse.conj().T

    def to_delay(self, x, axis=-1):
        return np.moveaxis(np.tensordot(self.inverse, np.moveaxis(x, axis, 0), axes=1), 0, axis)

    def to_frequency(self, x, axis=-1):
        return np.moveaxis(np.tensordot(self.forward, np.moveaxis(x, axis, 0), axes=1), 0, axis)

    def __array__(self, dtype=None, copy=None):
        return self.inverse if dtype is None else self.inverse.astype(dtype)


@lru_cache(maxsize=32)
def _idft(n):
    idx = np.arange(n)
    m = np.exp(2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n)
    m.setflags(write=False)
    return m


def idft_matrix(n):
    """Return the unitary IDFT with entries exp(+j2*pi*a*b/n)/sqrt(n)."""
    if int(n) != n or n < 1:
        raise InvalidDimensionError(f"DFT size must be a positive integer, got {n!r}")
    n = int(n)
    return UnitaryDft(n, _idft(n))


@dataclass(frozen=True)
class DelayMask:
    """Diagonal 0/1 selector of the delay taps at index ``n_e`` and beyond."""

    n_v: int
    n_e: int

    @property
    def diagonal(self):
        d = np.ones(self.n_v)
        d[: self.n_e] = 0.0
        return d

    @property
    def matrix(self):
        return np.diag(self.diagonal)

    def apply(self, x, axis=-1):
        """Zero the first ``n_e`` delay taps of ``x`` along ``axis``."""
        x = np.array(x, dtype=complex, copy=True)
        idx = [slice(None)] * x.ndim
        idx[axis] = slice(0, self.n_e)
        x[tuple(idx)] = 0.0
        return x

    def complement(self):
        """Diagonal selecting the first ``n_e`` taps (the small delays)."""
        return np.diag(1.0 - self.diagonal)


def delay_mask(n_v, n_e):
    if n_v < 1:
        raise InvalidDimensionError(f"n_v must be >= 1, got {n_v}")
    if not 0 <= n_e <= n_v:
        raise InvalidParameterError(f"n_e must lie in [0, {n_v}], got {n_e}")
    return DelayMask(int(n_v), int(n_e))


@dataclass(frozen=True)
class PilotSequence:
    length: int
    root: int
    values: np.ndarray


def zadoff_chu(n_p, u):
    """Odd-length Zadoff-Chu sequence exp(-j*pi*u*c*(c+1)/n_p)."""
    if n_p < 1 or n_p % 2 == 0:
        raise InvalidParameterError(f"Zadoff-Chu length must be odd and positive, got {n_p}")
    if gcd(u, n_p) != 1:
        raise InvalidParameterError(f"root {u} is not coprime with length {n_p}")
    c = np.arange(n_p)
    # reduce the exponent modulo 2*n_p before scaling to keep the phase exact
    phase = (u * c * (c + 1)) % (2 * n_p)
    return PilotSequence(int(n_p), int(u), np.exp(-1j * np.pi * phase / n_p))


def largest_odd_prime_at_most(n):
    for m in range(int(n), 2, -1):
        if m % 2 and all(m % d for d in range(3, int(m ** 0.5) + 1, 2)):
            return m
    return 1


def pilot_sequence(n_pilots, root=5):
    """Pilot values for ``n_pilots`` positions.

    Uses a Zadoff-Chu sequence of the largest odd prime length not exceeding
    ``n_pilots`` and repeats it cyclically over the remaining positions.
    """
    n_zc = largest_odd_prime_at_most(n_pilots)
    u = root if gcd(root, n_zc) == 1 else 1
    zc = zadoff_chu(n_zc, u).values
    return np.resize(zc, n_pilots)
