"""Synthetic tapped-delay-line multi-user channels.

Each user sees ``n_taps`` complex Gaussian tap vectors (one per antenna)
with an exponential power-delay profile normalised to unit total power, so
that ``E||h_{k,c}||^2 = M``.  The frequency response on subcarrier ``c`` is
``h_{k,c} = sum_l g_{k,l} exp(-j 2 pi c l / N_c)`` for ``c = 0..N_v-1``.
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import SystemConfig
from .errors import InvalidDimensionError, InvalidParameterError

__all__ = [
    "ChannelSet",
    "SystemConfig",
    "generate_channel",
    "stack_views",
    "StackedChannel",
    "pdp_profile",
    "rms_delay_spread",
    "dump_channel",
    "load_channel",
]


@dataclass(frozen=True)
class ChannelSet:
    """Frequency-domain channel rows and the taps that produced them.

    ``h`` has shape ``(K, N_v, M)``: ``h[k, c]`` is the row vector
    :math:`h_{k,c}`.  ``taps`` has shape ``(K, L, M)``.
    """

    taps: np.ndarray
    h: np.ndarray
    n_c: int

    @classmethod
    def from_taps(cls, taps, n_c, n_v):
        taps = np.asarray(taps, dtype=complex)
        if taps.ndim != 3:
            raise InvalidDimensionError("taps must have shape (K, L, M)")
        n_taps = taps.shape[1]
        if n_taps > n_c:
            raise InvalidParameterError(f"tap count {n_taps} exceeds n_c={n_c}")
        if n_v > n_c:
            raise InvalidParameterError(f"n_v={n_v} exceeds n_c={n_c}")
        c = np.arange(n_v)
        ell = np.arange(n_taps)
        steer = np.exp(-2j * np.pi * np.outer(c, ell) / n_c)  # (N_v, L)
        h = np.einsum("cl,klm->kcm", steer, taps)
        taps.setflags(write=False)
        h.setflags(write=False)
        return cls(taps, h, int(n_c))

    @classmethod
    def from_rows(cls, h, n_c=None):
        """Wrap explicit channel rows (no tap representation)."""
        h = np.asarray(h, dtype=complex)
        if h.ndim != 3:
            raise InvalidDimensionError("channel rows must have shape (K, N_v, M)")
        h.setflags(write=False)
        return cls(np.zeros((h.shape[0], 0, h.shape[2]), complex), h, n_c or h.shape[1])

    @property
    def n_users(self):
        return self.h.shape[0]

    @property
    def n_v(self):
        return self.h.shape[1]

    @property
    def m(self):
        return self.h.shape[2]

    @property
    def shape(self):
        return self.h.shape

    def row(self, k, c):
        return self.h[k, c]


def pdp_profile(n_taps, decay):
    """Exponential power-delay profile normalised to sum to one."""
    pdp = np.exp(-np.arange(n_taps) / decay)
    return pdp / pdp.sum()


def rms_delay_spread(taps):
    """RMS delay spread (in taps) averaged over users of a tap array."""
    power = np.sum(np.abs(taps) ** 2, axis=2)  # (K, L)
    ell = np.arange(taps.shape[1])
    total = power.sum(axis=1)
    mean = power @ ell / total
    second = power @ ell**2 / total
    return float(np.mean(np.sqrt(np.maximum(second - mean**2, 0.0))))


def generate_channel(cfg: SystemConfig, rng=None) -> ChannelSet:
    """Draw a tapped-delay-line channel; ``rng`` defaults to ``cfg.seed``."""
    if cfg.n_taps > cfg.n_c:
        raise InvalidParameterError(f"tap count {cfg.n_taps} exceeds n_c={cfg.n_c}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    shape = (cfg.n_users, cfg.n_taps, cfg.m)
    g = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    g *= np.sqrt(pdp_profile(cfg.n_taps, cfg.pdp_decay))[None, :, None]
    return ChannelSet.from_taps(g, cfg.n_c, cfg.n_v)


class StackedChannel:
    """Implicit block-diagonal operators built from a :class:`ChannelSet`.

    ``apply_user(k, p_k)`` computes ``H_k p_k`` (the ``N_v`` effective
    channels of user ``k``); ``apply(p)`` applies the full block-diagonal
    ``H`` to the stacked precoder and returns a ``(K, N_v)`` array.
    """

    def __init__(self, ch: ChannelSet):
        self.ch = ch

    def _blocks(self, p, n_users):
        p = np.asarray(p)
        k, n_v, m = self.ch.shape
        want = (n_users, n_v, m)
        if p.shape == want:
            return p
        if p.size != np.prod(want):
            raise InvalidDimensionError(f"precoder of size {p.size} does not match {want}")
        return p.reshape(want)

    def apply_user(self, k, p_k):
        p_k = self._blocks(p_k, 1)[0]
        return np.einsum("cm,cm->c", self.ch.h[k], p_k)

    def apply(self, p):
        p = self._blocks(p, self.ch.n_users)
        return np.einsum("kcm,kcm->kc", self.ch.h, p)

    def adjoint(self, e):
        """Apply ``H^H`` to a ``(K, N_v)`` array of per-subcarrier scalars."""
        e = np.asarray(e)
        if e.shape != self.ch.shape[:2]:
            raise InvalidDimensionError(f"expected shape {self.ch.shape[:2]}, got {e.shape}")
        return self.ch.h.conj() * e[:, :, None]

    def dense_user(self, k):
        n_v, m = self.ch.n_v, self.ch.m
        out = np.zeros((n_v, n_v * m), complex)
        for c in range(n_v):
            out[c, c * m : (c + 1) * m] = self.ch.h[k, c]
        return out

    def dense(self):
        from scipy.linalg import block_diag

        return block_diag(*[self.dense_user(k) for k in range(self.ch.n_users)])


def stack_views(ch: ChannelSet) -> StackedChannel:
    return StackedChannel(ch)


_MAGIC = b"CSPDTAPS"
_HEADER = struct.Struct("<8s5q")


def dump_channel(ch: ChannelSet, path):
    """Write the tap array to ``path`` (``.json`` or raw binary).

    Binary layout: 48-byte header (magic ``CSPDTAPS`` then K, L, M, N_c,
    N_v as little-endian int64), followed by the taps in user-major,
    tap-major, antenna-minor order as interleaved re/im little-endian
    float64.
    """
    path = Path(path)
    k, n_taps, m = ch.taps.shape
    flat = np.empty(ch.taps.size * 2, dtype="<f8")
    flat[0::2] = ch.taps.real.ravel()
    flat[1::2] = ch.taps.imag.ravel()
    if path.suffix == ".json":
        doc = {
            "n_users": k,
            "n_taps": n_taps,
            "m": m,
            "n_c": ch.n_c,
            "n_v": ch.n_v,
            "taps": flat.tolist(),
        }
        path.write_text(json.dumps(doc))
    else:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, k, n_taps, m, ch.n_c, ch.n_v))
            fh.write(flat.tobytes())
    return path


def load_channel(path) -> ChannelSet:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        k, n_taps, m = doc["n_users"], doc["n_taps"], doc["m"]
        n_c, n_v = doc["n_c"], doc["n_v"]
        flat = np.asarray(doc["taps"], dtype=float)
    else:
        raw = path.read_bytes()
        magic, k, n_taps, m, n_c, n_v = _HEADER.unpack_from(raw)
        if magic != _MAGIC:
            raise InvalidParameterError(f"{path} is not a channel dump")
        flat = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if flat.size != 2 * k * n_taps * m:
        raise InvalidDimensionError(f"{path}: tap payload has wrong length")
    taps = (flat[0::2] + 1j * flat[1::2]).reshape(k, n_taps, m)
    return ChannelSet.from_taps(taps, n_c, n_v)
