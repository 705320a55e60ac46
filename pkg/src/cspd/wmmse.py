"""Per-subcarrier WMMSE baseline with bisection power control.

Every subcarrier is treated as an independent single-antenna-receiver
broadcast channel with its own budget ``P_c``.  One outer iteration updates
the MMSE receivers ``u``, the weights ``rho = 1/MSE`` and then the
precoders ``p_k = (A + nu I)^{-1} w_k rho_k u_k h_k^H`` where
``A = sum_l w_l rho_l |u_l|^2 h_l^H h_l`` and ``nu >= 0`` makes the power
constraint hold.  Subcarriers are batched along the leading axis.
"""

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet
from .config import SystemConfig
from .errors import InvalidParameterError, MultiplierBracketError, SolverError
from .objective import PrecoderStack, rates

__all__ = ["WmmseState", "cg_solve", "wmmse_run", "wmmse_solve"]


def cg_solve(operator, rhs, tol=1e-10, x0=None, max_iter=None):
    """Conjugate gradients for a Hermitian positive-definite system.

    ``operator`` is either a matrix or a callable computing ``A @ x``.
    Stops when ``||r|| <= tol * ||rhs||``; raises :class:`SolverError` if
    that does not happen within ``len(rhs) + 10`` iterations.
    """
    matvec = operator if callable(operator) else np.asarray(operator).__matmul__
    b = np.asarray(rhs, dtype=complex)
    n = b.size
    max_iter = n + 10 if max_iter is None else max_iter
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=complex)
    r = b - matvec(x)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b)
    d = r.copy()
    rr = np.vdot(r, r).real
    for _ in range(max_iter):
        if np.sqrt(rr) <= tol * bnorm:
            return x
        ad = matvec(d)
        curv = np.vdot(d, ad).real
        if curv <= 0:
            raise SolverError("operator is not positive definite")
        step = rr / curv
        x = x + step * d
        r = r - step * ad
        rr_new = np.vdot(r, r).real
        d = r + (rr_new / rr) * d
        rr = rr_new
    if np.sqrt(rr) <= tol * bnorm:
        return x
    raise SolverError(f"CG did not reach tol={tol:g} within {max_iter} iterations")


@dataclass
class WmmseState:
    p: np.ndarray  # (K, N_v, M)
    u: np.ndarray  # (K, N_v)
    rho: np.ndarray  # (K, N_v)
    nu: np.ndarray  # (N_v,)
    iteration: int = 0
    wsr_history: list = field(default_factory=list)

    @property
    def precoder(self):
        return PrecoderStack(self.p)


def _init(ch, p_c):
    p = ch.h.conj().copy()
    norms = np.sum(np.abs(p) ** 2, axis=(0, 2))  # per subcarrier
    scale = np.sqrt(np.divide(p_c, norms, out=np.zeros_like(norms), where=norms > 0))
    return p * scale[None, :, None]


def _power_of(z2, d, nu):
    # z2: (N_v, M) summed over users, d: (N_v, M) eigenvalues
    return np.sum(z2 / (d + nu[:, None]) ** 2, axis=1)


def _find_nu(z2, d, p_c, keep, iters=200):
    """Smallest nu >= 0 with power(nu) <= P_c, by bisection per subcarrier."""
    n_v = z2.shape[0]
    z2 = np.where(keep, z2, 0.0)
    with np.errstate(divide="ignore"):
        p0 = np.sum(np.where(keep, z2 / np.where(keep, d, 1.0) ** 2, 0.0), axis=1)
    nu = np.zeros(n_v)
    need = p0 > p_c
    if not np.any(need):
        return nu
    lo = np.zeros(n_v)
    hi = np.sqrt(z2.sum(axis=1)) / np.sqrt(np.maximum(p_c, 1e-300))
    hi = np.where(need, hi * (1 + 1e-12) + 1e-300, 0.0)
    if np.any(_power_of(z2, d, hi)[need] > p_c[need] * (1 + 1e-9)):
        raise MultiplierBracketError("upper bracket for the power multiplier is not feasible")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        over = _power_of(z2, d, mid) > p_c
        lo = np.where(need & over, mid, lo)
        hi = np.where(need & ~over, mid, hi)
        if np.all((hi - lo) <= 1e-15 * np.maximum(hi, 1e-300)):
            break
    return np.where(need, hi, 0.0)


def _precoders(ch, w, rho, u, p_c, solver):
    h = ch.h.transpose(1, 0, 2)  # (N_v, K, M)
    coef = w[None, :] * rho.T * np.abs(u.T) ** 2  # (N_v, K)
    a = np.einsum("ck,ckm,ckn->cmn", coef, h.conj(), h)
    rhs = (w[None, :] * rho.T * u.T)[:, :, None] * h.conj()  # (N_v, K, M)
    rhs = rhs.transpose(0, 2, 1)  # (N_v, M, K)

    d, vecs = np.linalg.eigh(a)
    d = np.maximum(d, 0.0)
    z = np.einsum("cmi,cmk->cik", vecs.conj(), rhs)
    z2 = np.sum(np.abs(z) ** 2, axis=2)
    keep = d > 1e-12 * np.maximum(d.max(axis=1, keepdims=True), 1e-300)
    nu = _find_nu(z2, d, p_c, keep)

    m = a.shape[1]
    eye = np.eye(m)
    sol = np.empty_like(rhs)
    for c in range(a.shape[0]):
        if nu[c] == 0.0:
            # constraint not binding: minimum-norm stationary point
            inv = np.where(keep[c], 1.0 / np.where(keep[c], d[c], 1.0), 0.0)
            sol[c] = vecs[c] @ (inv[:, None] * z[c])
        elif solver == "cg":
            op = a[c] + nu[c] * eye
            for k in range(rhs.shape[2]):
                sol[c, :, k] = cg_solve(op, rhs[c, :, k], tol=1e-12)
        else:
            sol[c] = np.linalg.solve(a[c] + nu[c] * eye, rhs[c])
    p = sol.transpose(2, 0, 1)  # (K, N_v, M)
    # an inactive constraint leaves power unused; scaling up only raises SINRs
    power = np.sum(np.abs(p) ** 2, axis=(0, 2))
    scale = np.sqrt(np.divide(p_c, power, out=np.ones_like(power), where=power > 0))
    return p * scale[None, :, None], nu


def wmmse_run(ch: ChannelSet, cfg: SystemConfig, iters=40, p_init=None) -> WmmseState:
    """Run ``iters`` outer WMMSE iterations and return the final state."""
    p_c = cfg.p_c
    if np.any(p_c <= 0):
        raise InvalidParameterError("every subcarrier needs a positive power budget")
    sigma2 = cfg.sigma_z2
    w = cfg.w
    p = _init(ch, p_c) if p_init is None else np.array(p_init, dtype=complex).reshape(ch.shape)
    state = WmmseState(p, np.zeros(ch.shape[:2], complex), np.ones(ch.shape[:2]), np.zeros(ch.n_v))
    state.wsr_history.append(float(w @ rates(ch, p, sigma2).sum(axis=1)))
    for it in range(iters):
        gains = np.einsum("kcm,lcm->klc", ch.h, state.p)
        own = np.einsum("kkc->kc", gains)
        total = sigma2 + np.sum(np.abs(gains) ** 2, axis=1)
        u = own / total
        mse = 1.0 - np.abs(own) ** 2 / total
        rho = 1.0 / mse
        p, nu = _precoders(ch, w, rho, u, p_c, cfg.wmmse_solver)
        state = WmmseState(p, u, rho, nu, it + 1, state.wsr_history)
        state.wsr_history.append(float(w @ rates(ch, p, sigma2).sum(axis=1)))
    return state


def wmmse_solve(ch: ChannelSet, cfg: SystemConfig, iters=40) -> PrecoderStack:
    return wmmse_run(ch, cfg, iters).precoder
