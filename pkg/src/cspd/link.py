"""Downlink link-level chain for one effective channel per user.

Comb pilots (every second subcarrier by default) carry Zadoff-Chu values;
the user forms an LMMSE estimate of its effective channel under a
delay-domain prior, then detects Gray-mapped QPSK data with a scalar MMSE
equaliser that knows the interference-plus-noise variance.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .channel import ChannelSet
from .errors import InvalidParameterError, UndefinedNmseError
from .objective import as_blocks, cross_gains, interference_variances
from .spectral import idft_matrix, pilot_sequence

__all__ = [
    "EffectiveChannel",
    "DelayPrior",
    "ChannelEstimate",
    "Detection",
    "effective_channel",
    "flat_prior",
    "genie_prior",
    "comb_positions",
    "partial_dft",
    "mmse_estimate",
    "ls_truncated_estimate",
    "qpsk_mod",
    "qpsk_demod",
    "mmse_detect",
    "nmse",
    "ber",
    "qpsk_ber_awgn",
    "LinkResult",
    "simulate_link",
]

_RIDGE = 1e-12


@dataclass(frozen=True)
class EffectiveChannel:
    h_f: np.ndarray
    h_d: np.ndarray


def effective_channel(ch: ChannelSet, p, k) -> EffectiveChannel:
    """Frequency response ``h_{k,c} p_k^c`` over subcarriers and its delay view."""
    p = as_blocks(p, ch)
    h_f = np.einsum("cm,cm->c", ch.h[k], p[k])
    return EffectiveChannel(h_f, idft_matrix(ch.n_v).inverse @ h_f)


@dataclass(frozen=True)
class DelayPrior:
    """Diagonal delay-power profile over the first ``n_d`` delay taps."""

    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim != 1 or np.any(lam < 0):
            raise InvalidParameterError("delay prior must be a non-negative vector")
        object.__setattr__(self, "lam", lam)

    @property
    def n_d(self):
        return self.lam.size


def flat_prior(n_d, energy=1.0):
    """Equal power over ``n_d`` taps with total ``energy``."""
    return DelayPrior(np.full(n_d, energy / n_d))


def genie_prior(h_f_realizations, n_d):
    """Empirical delay-power profile of true effective channels."""
    h = np.atleast_2d(np.asarray(h_f_realizations, dtype=complex))
    dd = h @ idft_matrix(h.shape[1]).inverse.T
    return DelayPrior(np.mean(np.abs(dd[:, :n_d]) ** 2, axis=0))


def comb_positions(n_v, interval=2, offset=0):
    return np.arange(offset, n_v, interval)


def partial_dft(n_v, n_d, rows=None):
    """Columns of the unitary DFT mapping ``n_d`` delay taps to subcarriers."""
    u = idft_matrix(n_v).forward[:, :n_d]
    return u if rows is None else u[rows]


class ChannelEstimate(NamedTuple):
    h_f: np.ndarray
    h_d: np.ndarray
    regularized: bool


def mmse_estimate(y_p, x_p, pilot_idx, n_v, prior: DelayPrior, sigma2) -> ChannelEstimate:
    """LMMSE effective-channel estimate from pilot observations.

    ``y_p = diag(x_p) h_f[pilot_idx] + z`` with ``z ~ CN(0, sigma2 I)`` and
    ``h_f = U_f h_d``, ``E[h_d h_d^H] = diag(prior.lam)``.  The estimate in
    the delay domain is ``Lam U_p^H X^H (X U_p Lam U_p^H X^H + sigma2 I)^{-1} y_p``
    and is mapped to every subcarrier through ``U_f``.  With
    ``sigma2 == 0`` and a singular covariance a ``1e-12`` ridge is added
    and ``regularized`` is set.
    """
    y_p = np.asarray(y_p, dtype=complex)
    x_p = np.asarray(x_p, dtype=complex)
    pilot_idx = np.asarray(pilot_idx)
    u_f = partial_dft(n_v, prior.n_d)
    u_p = u_f[pilot_idx]
    xu = x_p[:, None] * u_p
    cov = (xu * prior.lam[None, :]) @ xu.conj().T
    cov = cov + sigma2 * np.eye(len(pilot_idx))
    regularized = False
    if sigma2 <= 0 and np.linalg.matrix_rank(cov) < cov.shape[0]:
        cov = cov + _RIDGE * np.eye(cov.shape[0])
        regularized = True
    h_d = prior.lam * (xu.conj().T @ np.linalg.solve(cov, y_p))
    return ChannelEstimate(u_f @ h_d, h_d, regularized)


def ls_truncated_estimate(y_p, x_p, pilot_idx, n_v, n_d):
    """Least-squares pilot estimate projected onto ``n_d`` delay taps."""
    u_f = partial_dft(n_v, n_d)
    u_p = u_f[np.asarray(pilot_idx)]
    h_d = np.linalg.lstsq(u_p, np.asarray(y_p) / np.asarray(x_p), rcond=None)[0]
    return u_f @ h_d


def qpsk_mod(bits):
    """Gray QPSK: bit pair (b0, b1) -> ((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)."""
    bits = np.asarray(bits, dtype=np.int8).reshape(-1)
    if bits.size % 2:
        raise InvalidParameterError("QPSK needs an even number of bits")
    b = bits.reshape(-1, 2)
    return ((1 - 2 * b[:, 0]) + 1j * (1 - 2 * b[:, 1])) / np.sqrt(2.0)


def qpsk_demod(symbols):
    s = np.asarray(symbols).reshape(-1)
    out = np.empty((s.size, 2), dtype=np.int8)
    out[:, 0] = s.real < 0
    out[:, 1] = s.imag < 0
    return out.reshape(-1)


class Detection(NamedTuple):
    symbols: np.ndarray
    undetectable: np.ndarray


def mmse_detect(y, h_est, gamma) -> Detection:
    """Scalar MMSE equaliser ``conj(h) y / (|h|^2 + Gamma)``.

    Entries with ``h == 0`` and ``Gamma == 0`` cannot be equalised; they are
    returned as zero and flagged in ``undetectable``.
    """
    y = np.asarray(y, dtype=complex)
    h = np.asarray(h_est, dtype=complex)
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise InvalidParameterError("interference variance must be non-negative")
    den = np.abs(h) ** 2 + gamma
    bad = np.broadcast_to(den == 0, np.broadcast(y, den).shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(bad, 0.0, h.conj() * y / np.where(den == 0, 1.0, den))
    return Detection(x, bad.copy())


def nmse(h_true, h_est):
    """``||h_est - h_true||^2 / ||h_true||^2``, averaged over leading axes."""
    h_true = np.asarray(h_true, dtype=complex)
    h_est = np.asarray(h_est, dtype=complex)
    if h_true.shape != h_est.shape:
        raise InvalidParameterError("shape mismatch between truth and estimate")
    num = np.sum(np.abs(h_est - h_true) ** 2, axis=-1)
    den = np.sum(np.abs(h_true) ** 2, axis=-1)
    if np.any(den == 0):
        raise UndefinedNmseError("NMSE undefined for an all-zero true channel")
    return float(np.mean(num / den))


def ber(tx_bits, rx_bits):
    tx = np.asarray(tx_bits).reshape(-1)
    rx = np.asarray(rx_bits).reshape(-1)
    if tx.shape != rx.shape:
        raise InvalidParameterError("bit streams differ in length")
    return float(np.mean(tx != rx))


def qpsk_ber_awgn(ebn0_db):
    """Exact Gray-QPSK bit error probability ``Q(sqrt(2 Eb/N0))``."""
    from scipy.special import erfc

    ebn0 = 10.0 ** (np.asarray(ebn0_db) / 10.0)
    return 0.5 * erfc(np.sqrt(ebn0))


@dataclass(frozen=True)
class LinkResult:
    """Per-user NMSE and aggregate bit counts of one channel realization."""

    nmse: np.ndarray
    bit_errors: int
    n_bits: int
    regularized: bool

    @property
    def ber(self):
        return self.bit_errors / self.n_bits


def simulate_link(ch: ChannelSet, p, sigma2, rng, *, n_e, n_symbols=100,
                  interval=2, prior="flat", root=5) -> LinkResult:
    """Estimate every user's effective channel, then detect QPSK data.

    Pilots of different users occupy orthogonal resources, so each pilot
    observation sees only thermal noise ``sigma2``.  Data symbols of all
    users are sent together over ``n_symbols`` OFDM symbols through the
    true multi-user model and user ``k`` equalises with its estimate and
    its true ``Gamma_{k,c}``.  ``prior`` is ``"flat"`` (pilot-measured
    power spread evenly over ``n_e`` taps) or a :class:`DelayPrior`.
    """
    p = as_blocks(p, ch)
    k_users, n_v = ch.n_users, ch.n_v
    gains = cross_gains(ch, p)  # (k, l, c)
    gamma = interference_variances(ch, p, sigma2)
    idx = comb_positions(n_v, interval)
    x_p = pilot_sequence(idx.size, root)

    bits = rng.integers(0, 2, size=(n_symbols, k_users, n_v, 2), dtype=np.int8)
    x = qpsk_mod(bits).reshape(n_symbols, k_users, n_v)
    shape = (n_symbols, k_users, n_v)
    z = np.sqrt(sigma2 / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    y = np.einsum("klc,slc->skc", gains, x) + z

    scores = np.empty(k_users)
    errors = 0
    reg = False
    for k in range(k_users):
        h_f = gains[k, k]
        w = np.sqrt(sigma2 / 2) * (rng.standard_normal(idx.size) + 1j * rng.standard_normal(idx.size))
        y_p = x_p * h_f[idx] + w
        if isinstance(prior, DelayPrior):
            pr = prior
        else:
            energy = n_v * max(np.mean(np.abs(y_p) ** 2) - sigma2, 1e-12)
            pr = flat_prior(n_e, energy)
        est = mmse_estimate(y_p, x_p, idx, n_v, pr, sigma2)
        reg |= est.regularized
        scores[k] = nmse(h_f, est.h_f)
        det = mmse_detect(y[:, k, :], est.h_f[None, :], gamma[k][None, :])
        rx = qpsk_demod(det.symbols)
        errors += int(np.count_nonzero(rx != bits[:, k].reshape(-1)))
    return LinkResult(scores, errors, bits.size, reg)
