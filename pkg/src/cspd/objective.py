"""Scalar functions of a stacked precoder: SINR terms, rates, smoothing.

Precoders are handled as complex arrays of shape ``(K, N_v, M)`` (user,
subcarrier, antenna), which is exactly the user-major stacked vector
reshaped.  Rates are in nats.
"""

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .config import SystemConfig
from .errors import InvalidDimensionError
from .spectral import idft_matrix

__all__ = [
    "PrecoderStack",
    "ObjectiveBreakdown",
    "as_blocks",
    "cross_gains",
    "interference_variances",
    "interference_variance",
    "user_rate",
    "rates",
    "delay_domain",
    "delay_indicator",
    "delay_indicators",
    "delay_energy_ratio",
    "evaluate",
    "weighted_sum_rate",
]


@dataclass
class PrecoderStack:
    """Stacked precoder ``p`` with shape ``(K, N_v, M)`` blocks.

    ``vector`` gives the flat user-major / subcarrier / antenna layout.
    """

    blocks: np.ndarray

    def __post_init__(self):
        self.blocks = np.asarray(self.blocks, dtype=complex)
        if self.blocks.ndim != 3:
            raise InvalidDimensionError("precoder blocks must have shape (K, N_v, M)")

    @classmethod
    def from_vector(cls, p, n_users, n_v, m):
        return cls(np.asarray(p, dtype=complex).reshape(n_users, n_v, m))

    @property
    def vector(self):
        return self.blocks.reshape(-1)

    def block(self, k, c):
        return self.blocks[k, c]

    @property
    def power(self):
        return float(np.vdot(self.blocks, self.blocks).real)

    def on_manifold(self, power, rtol=1e-10):
        return abs(self.power - power) <= rtol * power

    def __array__(self, dtype=None, copy=None):
        return self.blocks if dtype is None else self.blocks.astype(dtype)


def as_blocks(p, ch: ChannelSet):
    p = np.asarray(p)
    shape = ch.shape
    if p.shape == shape:
        return p
    if p.size != np.prod(shape):
        raise InvalidDimensionError(f"precoder of size {p.size} does not match channel {shape}")
    return p.reshape(shape)


def cross_gains(ch: ChannelSet, p):
    """``G[k, l, c] = h_{k,c} p_l^c``: user k's view of user l's precoder."""
    p = as_blocks(p, ch)
    return np.einsum("kcm,lcm->klc", ch.h, p)


def _gamma_signal(ch, p, sigma2):
    g2 = np.abs(cross_gains(ch, p)) ** 2
    signal = np.einsum("kkc->kc", g2)
    gamma = sigma2 + g2.sum(axis=1) - signal
    return gamma, signal


def interference_variances(ch: ChannelSet, p, sigma2):
    """Interference-plus-noise variance for every (user, subcarrier)."""
    return _gamma_signal(ch, p, sigma2)[0]


def interference_variance(ch: ChannelSet, p, k, c, sigma2):
    p = as_blocks(p, ch)
    h = ch.h[k, c]
    total = sigma2
    for l in range(ch.n_users):
        if l != k:
            total += abs(h @ p[l, c]) ** 2
    return float(total)


def rates(ch: ChannelSet, p, sigma2):
    gamma, signal = _gamma_signal(ch, p, sigma2)
    return np.log1p(signal / gamma)


def user_rate(ch: ChannelSet, p, k, c, sigma2):
    p = as_blocks(p, ch)
    gamma = interference_variance(ch, p, k, c, sigma2)
    return float(np.log1p(abs(ch.h[k, c] @ p[k, c]) ** 2 / gamma))


def weighted_sum_rate(ch, p, sigma2, weights=None):
    r = rates(ch, p, sigma2)
    w = np.ones(ch.n_users) if weights is None else np.asarray(weights, dtype=float)
    return float(w @ r.sum(axis=1))


def delay_domain(ch: ChannelSet, p):
    """Delay-domain effective channels ``M_I H_k p_k`` stacked as ``(K, N_v)``."""
    eff = np.einsum("kcm,kcm->kc", ch.h, as_blocks(p, ch))
    return eff @ idft_matrix(ch.n_v).inverse.T


def delay_indicators(ch: ChannelSet, p, n_e):
    """Per-user energy of effective-channel delay taps at index >= ``n_e``."""
    dd = delay_domain(ch, p)
    return np.sum(np.abs(dd[:, n_e:]) ** 2, axis=1)


def delay_indicator(ch: ChannelSet, p, k, n_e):
    return float(delay_indicators(ch, p, n_e)[k])


def delay_energy_ratio(ch: ChannelSet, p, n_e):
    """Fraction of total effective-channel energy sitting beyond ``n_e``."""
    dd = delay_domain(ch, p)
    total = np.sum(np.abs(dd) ** 2)
    if total == 0:
        return 0.0
    return float(np.sum(np.abs(dd[:, n_e:]) ** 2) / total)


@dataclass(frozen=True)
class ObjectiveBreakdown:
    gamma: np.ndarray
    rates: np.ndarray
    wsr: float
    f: float
    d: float
    phi: float
    g: float

    @property
    def wsr_bits(self):
        return self.wsr / np.log(2.0)


def evaluate(ch: ChannelSet, p, cfg: SystemConfig) -> ObjectiveBreakdown:
    p = as_blocks(p, ch)
    gamma, signal = _gamma_signal(ch, p, cfg.sigma_z2)
    r = np.log1p(signal / gamma)
    wsr = float(cfg.w @ r.sum(axis=1))
    f = -wsr
    d = float(np.sum(delay_indicators(ch, p, cfg.n_e)))
    phi = float(np.vdot(p, p).real)
    return ObjectiveBreakdown(gamma, r, wsr, f, d, phi, f + cfg.alpha * d)
