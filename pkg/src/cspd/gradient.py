"""Wirtinger gradient of the smoothed weighted sum-rate objective.

All gradients are derivatives with respect to the complex conjugate of the
precoder, ``dg/dp*``.  For a real function this is half the real gradient
packed as ``d/dRe + j d/dIm``.
"""

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .config import SystemConfig
from .objective import as_blocks, cross_gains
from .spectral import idft_matrix

__all__ = [
    "GradScalars",
    "grad_scalars",
    "grad_f_block",
    "grad_f",
    "grad_d",
    "grad_g",
    "fd_gradient_oracle",
]


@dataclass(frozen=True)
class GradScalars:
    """Per (user, subcarrier) scalars ``a`` (complex), ``b`` and ``c`` (real)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    gains: np.ndarray  # cross gains G[k, l, c] = h_{k,c} p_l^c


def _scalars(ch, p, sigma2):
    gains = cross_gains(ch, p)
    g2 = np.abs(gains) ** 2
    own = np.einsum("kkc->kc", gains)
    gamma = sigma2 + g2.sum(axis=1) - np.abs(own) ** 2
    a = own / gamma
    c = 1.0 / (1.0 + (own.conj() * a).real)
    b = np.abs(a) ** 2 * c
    return GradScalars(a, b, c, gains)


def grad_scalars(ch: ChannelSet, p, cfg: SystemConfig) -> GradScalars:
    return _scalars(ch, as_blocks(p, ch), cfg.sigma_z2)


def grad_f_block(ch: ChannelSet, scal: GradScalars, p, k, c, weights):
    """Gradient of ``f = -WSR`` with respect to ``conj(p_k^c)``."""
    p = as_blocks(p, ch)
    w = np.asarray(weights, dtype=float)
    out = -w[k] * scal.a[k, c] * scal.c[k, c] * ch.h[k, c].conj()
    for l in range(ch.n_users):
        if l != k:
            hl = ch.h[l, c]
            out = out + w[l] * scal.b[l, c] * hl.conj() * (hl @ p[k, c])
    return out


def grad_f(ch: ChannelSet, p, sigma2, weights, scal=None):
    """All blocks of the WSR gradient as a ``(K, N_v, M)`` array."""
    p = as_blocks(p, ch)
    if scal is None:
        scal = _scalars(ch, p, sigma2)
    w = np.asarray(weights, dtype=float)
    coef = (w[:, None] * scal.b)[:, None, :] * scal.gains  # (l, k, c)
    idx = np.arange(ch.n_users)
    coef[idx, idx, :] = 0.0
    interference = np.einsum("lkc,lcm->kcm", coef, ch.h.conj())
    own = (w[:, None] * scal.a * scal.c)[:, :, None] * ch.h.conj()
    return interference - own


def grad_d(ch: ChannelSet, p, n_e):
    """Gradient of the delay indicator: ``H^H M^H M H p``."""
    p = as_blocks(p, ch)
    mi = idft_matrix(ch.n_v).inverse
    eff = np.einsum("kcm,kcm->kc", ch.h, p)
    dd = eff @ mi  # M_I is symmetric
    dd[:, :n_e] = 0.0
    back = dd @ mi.conj()
    return ch.h.conj() * back[:, :, None]


def grad_g(ch: ChannelSet, p, cfg: SystemConfig):
    """Full gradient of ``g = f + alpha d``, returned in the shape of ``p``."""
    p_in = np.asarray(p)
    blocks = as_blocks(p_in, ch)
    out = grad_f(ch, blocks, cfg.sigma_z2, cfg.w)
    if cfg.alpha:
        out = out + cfg.alpha * grad_d(ch, blocks, cfg.n_e)
    return out.reshape(p_in.shape)


def fd_gradient_oracle(fn, p, eps=1e-6):
    """Central-difference estimate of ``d fn / d conj(p)`` for real ``fn``."""
    p = np.asarray(p, dtype=complex)
    flat = p.reshape(-1)
    out = np.empty_like(flat)
    for i in range(flat.size):
        parts = []
        for step in (eps, 1j * eps):
            up = flat.copy()
            dn = flat.copy()
            up[i] += step
            dn[i] -= step
            parts.append((fn(up.reshape(p.shape)) - fn(dn.reshape(p.shape))) / (2 * eps))
        out[i] = 0.5 * (parts[0] + 1j * parts[1])
    return out.reshape(p.shape)
