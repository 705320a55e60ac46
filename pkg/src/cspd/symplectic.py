"""Dissipative constrained leapfrog (RATTLE) optimizer on the power sphere.

The precoder ``p`` is the position, ``q`` the momentum.  One step of
length ``h`` is::

    q_half = e^{-gamma h/2} q - h/2 (grad g(p) + lam p)
    p_next = p + h/2 q_half
    q_next = e^{-gamma h/2} (q_half - h/2 (grad g(p_next) + mu p_next))

with ``lam`` keeping ``p`` on ``{p^H p = P}`` to second order and ``mu``
making ``q_next`` tangent at ``p_next``.  After each step the state is
projected back onto the sphere and its tangent space; the violation before
projection is kept in the trace.

Gradients are Wirtinger derivatives (see :mod:`cspd.gradient`), so the
continuous-time flow is ``dp/dt = q/2``, ``dq/dt = -grad g - lam p - gamma q``
and the energy ``g(p) + |q|^2 / 2`` is conserved when ``gamma = 0``.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelSet
from .config import SystemConfig
from .errors import DegenerateStateError, DivergenceError, InvalidParameterError
from .gradient import grad_g
from .objective import PrecoderStack, evaluate

__all__ = [
    "OptimizerState",
    "Trace",
    "OptimizeResult",
    "RattleIntegrator",
    "lambda_multiplier",
    "mu_multiplier",
    "exact_lambda",
    "rattle_step",
    "step_control",
    "local_error_estimate",
    "matched_filter_init",
    "initial_state",
    "minimize_on_sphere",
    "optimize",
    "TRACE_COLUMNS",
]

TRACE_COLUMNS = (
    "n",
    "h_n",
    "g",
    "f",
    "d",
    "wsr_bits",
    "constraint_violation_pre",
    "tangency_residual",
    "lambda_n",
    "mu_n",
    "delta_n",
)

_EPS = 1e-300


def _re_dot(a, b):
    return float(np.vdot(a, b).real)


def lambda_multiplier(p, q, grad_p):
    """Multiplier for the first half kick."""
    pp = _re_dot(p, p)
    if pp <= 0:
        raise DegenerateStateError("precoder norm vanished")
    return (_re_dot(q, q) - 2.0 * _re_dot(p, grad_p)) / (2.0 * pp)


def mu_multiplier(p_next, q_half, grad_next, h):
    """Multiplier that makes the second half kick tangent at ``p_next``."""
    if not h > 0:
        raise InvalidParameterError(f"step length must be positive, got {h}")
    pp = _re_dot(p_next, p_next)
    if pp <= 0:
        raise DegenerateStateError("precoder norm vanished")
    return (2.0 * _re_dot(p_next, q_half) - h * _re_dot(p_next, grad_next)) / (h * pp)


def exact_lambda(p, q, grad_p, h, gamma, power):
    """Multiplier putting ``p_next`` exactly on the sphere.

    Solves ``|s p + b|^2 = P`` for the scale ``s = 1 - h^2 lam / 4`` and
    takes the root closest to one.  Falls back to
    :func:`lambda_multiplier` when the quadratic has no real root.
    """
    b = 0.5 * h * (math.exp(-0.5 * gamma * h) * q - 0.5 * h * grad_p)
    pp = _re_dot(p, p)
    beta = _re_dot(p, b)
    disc = beta * beta - pp * (_re_dot(b, b) - power)
    if disc < 0:
        return lambda_multiplier(p, q, grad_p)
    s = (-beta + math.sqrt(disc)) / pp
    return 4.0 * (1.0 - s) / (h * h)


@dataclass
class OptimizerState:
    """Position, momentum and bookkeeping of one optimizer iterate.

    ``grad`` caches the gradient at ``p``.  ``violation`` is the relative
    power-constraint violation before the last projection and ``tangency``
    the normalised ``Re(p^H q)`` after it.
    """

    p: np.ndarray
    q: np.ndarray
    h: float
    grad: np.ndarray
    n: int = 0
    lam: float = float("nan")
    mu: float = float("nan")
    delta: float = float("nan")
    violation: float = 0.0
    tangency: float = 0.0


class RattleIntegrator:
    """Single-step machinery bound to a gradient function and a sphere."""

    def __init__(self, grad_fn, power, gamma, exact=False):
        self.grad_fn = grad_fn
        self.power = float(power)
        self.gamma = float(gamma)
        self.exact = exact

    def start(self, p, q=None, h=0.1):
        p = np.asarray(p, dtype=complex)
        q = np.zeros_like(p) if q is None else np.asarray(q, dtype=complex)
        return OptimizerState(p=p, q=q, h=float(h), grad=self.grad_fn(p))

    def step(self, state: OptimizerState, h=None) -> OptimizerState:
        h = state.h if h is None else float(h)
        if not h > 0:
            raise InvalidParameterError(f"step length must be positive, got {h}")
        p, q, gp = state.p, state.q, state.grad
        damp = math.exp(-0.5 * self.gamma * h)
        if self.exact:
            lam = exact_lambda(p, q, gp, h, self.gamma, self.power)
        else:
            lam = lambda_multiplier(p, q, gp)
        q_half = damp * q - 0.5 * h * (gp + lam * p)
        p_next = p + 0.5 * h * q_half
        g_next = self.grad_fn(p_next)
        mu = mu_multiplier(p_next, q_half, g_next, h)
        q_next = damp * (q_half - 0.5 * h * (g_next + mu * p_next))

        if not (np.all(np.isfinite(p_next)) and np.all(np.isfinite(q_next))):
            raise DivergenceError(f"non-finite state at step length {h:g}; try a smaller h0")
        pp = _re_dot(p_next, p_next)
        violation = abs(pp - self.power) / self.power
        p_proj = p_next * math.sqrt(self.power / pp)
        q_proj = q_next - (_re_dot(p_proj, q_next) / self.power) * p_proj
        grad_proj = g_next if violation == 0.0 else self.grad_fn(p_proj)
        qn = math.sqrt(_re_dot(q_proj, q_proj))
        tangency = abs(_re_dot(p_proj, q_proj)) / (math.sqrt(self.power) * qn + 1e-300)
        return OptimizerState(
            p=p_proj,
            q=q_proj,
            h=state.h,
            grad=grad_proj,
            n=state.n + 1,
            lam=lam,
            mu=mu,
            delta=state.delta,
            violation=violation,
            tangency=tangency,
        )

    def step_with_error(self, state: OptimizerState, h=None):
        """Take a step of length ``h`` and estimate its local error.

        The estimate compares the full step with two chained half steps
        from the same state, normalised by ``sqrt(P)``.
        """
        h = state.h if h is None else float(h)
        full = self.step(state, h)
        half = self.step(self.step(state, 0.5 * h), 0.5 * h)
        delta = float(np.linalg.norm(full.p - half.p)) / math.sqrt(self.power)
        full.delta = delta
        return full, delta

    def tangential_grad_norm(self, state):
        g = state.grad
        t = g - (_re_dot(state.p, g) / _re_dot(state.p, state.p)) * state.p
        return float(np.linalg.norm(t))


def step_control(h_n, delta_n, r, theta, h_min=0.0, h_max=math.inf):
    """Proportional step-length update ``h (r/delta)^(theta/2)``, clamped."""
    if not h_n > 0:
        raise InvalidParameterError(f"step length must be positive, got {h_n}")
    if not 0 <= theta <= 2:
        raise InvalidParameterError(f"theta must lie within the range [0, 2], got {theta}")
    if delta_n <= 0:
        return h_max
    h = h_n * (r / delta_n) ** (0.5 * theta)
    return min(max(h, h_min), h_max)


def _integrator(ch, cfg):
    shape = ch.shape
    return RattleIntegrator(
        lambda p: grad_g(ch, p.reshape(shape), cfg).reshape(-1),
        cfg.power,
        cfg.gamma,
        exact=cfg.exact_multipliers,
    )


def rattle_step(state: OptimizerState, ch: ChannelSet, cfg: SystemConfig) -> OptimizerState:
    return _integrator(ch, cfg).step(state)


def local_error_estimate(state: OptimizerState, ch: ChannelSet, cfg: SystemConfig) -> float:
    return _integrator(ch, cfg).step_with_error(state)[1]


def matched_filter_init(ch: ChannelSet, power):
    """Conjugate channel rows stacked and scaled onto the power sphere."""
    p = ch.h.conj().copy()
    norm2 = _re_dot(p, p)
    if norm2 <= 0:
        raise DegenerateStateError("all-zero channel has no matched filter")
    return p * math.sqrt(power / norm2)


def initial_state(ch: ChannelSet, cfg: SystemConfig, p_init=None) -> OptimizerState:
    if p_init is None:
        p_init = matched_filter_init(ch, cfg.power)
    p = np.asarray(p_init, dtype=complex).reshape(-1)
    return _integrator(ch, cfg).start(p, h=cfg.h0)


@dataclass
class Trace:
    rows: list = field(default_factory=list)

    def append(self, **row):
        self.rows.append(row)

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: _fmt(row[k]) for k in TRACE_COLUMNS})
        return path


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


@dataclass
class OptimizeResult:
    precoder: PrecoderStack
    trace: Trace
    converged: bool
    iterations: int
    best_g: float
    final_state: OptimizerState


def minimize_on_sphere(
    grad_fn,
    value_fn,
    p0,
    *,
    power,
    gamma,
    h0,
    r=1e-3,
    theta=0.1,
    h_bounds=(0.0, math.inf),
    max_iters=500,
    tol=1e-6,
    adaptive=True,
    exact=False,
    window=5,
):
    """Run the dissipative RATTLE iteration on ``{p : |p|^2 = power}``.

    ``value_fn(p)`` returns a dict containing at least ``g`` (the value being
    minimised); the keys ``f``, ``d`` and ``wsr_bits`` are copied into the
    trace when present.  Iteration stops once ``window`` consecutive relative
    changes of ``g`` are below ``tol`` or after ``max_iters`` steps.  The
    iterate with the lowest ``g`` is returned.
    """
    integ = RattleIntegrator(grad_fn, power, gamma, exact=exact)
    state = integ.start(p0, h=h0)
    trace = Trace()

    def record(st, vals):
        trace.append(
            n=st.n,
            h_n=st.h,
            g=vals["g"],
            f=vals.get("f", vals["g"]),
            d=vals.get("d", 0.0),
            wsr_bits=vals.get("wsr_bits", float("nan")),
            constraint_violation_pre=st.violation,
            tangency_residual=st.tangency,
            lambda_n=st.lam,
            mu_n=st.mu,
            delta_n=st.delta,
            # kept in memory only; not a CSV column
            power_violation_post=abs(_re_dot(st.p, st.p) - power) / power,
        )

    vals = value_fn(state.p)
    record(state, vals)
    best_g, best_p = vals["g"], state.p
    tiny = 1e-14 * (1.0 + abs(best_g))
    if np.linalg.norm(state.q) == 0 and integ.tangential_grad_norm(state) <= tiny:
        return best_p, trace, True, 0, best_g, state

    lo, hi = h_bounds
    small_changes = 0
    converged = False
    g_prev = vals["g"]
    try:
        while state.n < max_iters:
            h = state.h
            if adaptive and theta > 0:
                nxt, delta = integ.step_with_error(state, h)
                nxt.h = step_control(h, delta, r, theta, lo, hi)
            else:
                nxt = integ.step(state, h)
            vals = value_fn(nxt.p)
            if not np.isfinite(vals["g"]):
                raise DivergenceError("objective became non-finite; try a smaller h0")
            # the trace row reports the step length that produced this iterate
            row_state = replace(nxt, h=h)
            record(row_state, vals)
            state = nxt
            if vals["g"] < best_g:
                best_g, best_p = vals["g"], state.p
            change = abs(vals["g"] - g_prev) / max(abs(vals["g"]), _EPS)
            g_prev = vals["g"]
            small_changes = small_changes + 1 if change < tol else 0
            if small_changes >= window:
                converged = True
                break
    except DivergenceError as exc:
        exc.trace = trace
        raise
    return best_p, trace, converged, state.n, best_g, state


def optimize(ch: ChannelSet, cfg: SystemConfig, p_init=None) -> OptimizeResult:
    """Minimise ``-WSR + alpha * delay indicator`` over the power sphere."""
    shape = ch.shape
    if p_init is None:
        p_init = matched_filter_init(ch, cfg.power)
    p0 = np.asarray(p_init, dtype=complex).reshape(-1)
    if abs(_re_dot(p0, p0) - cfg.power) > 1e-8 * cfg.power:
        raise InvalidParameterError("initial precoder is not on the power sphere")

    def value(p):
        ob = evaluate(ch, p.reshape(shape), cfg)
        return {"g": ob.g, "f": ob.f, "d": ob.d, "wsr_bits": ob.wsr_bits}

    best_p, trace, converged, n, best_g, state = minimize_on_sphere(
        lambda p: grad_g(ch, p.reshape(shape), cfg).reshape(-1),
        value,
        p0,
        power=cfg.power,
        gamma=cfg.gamma,
        h0=cfg.h0,
        r=cfg.r,
        theta=cfg.theta,
        h_bounds=cfg.step_bounds,
        max_iters=cfg.max_iters,
        tol=cfg.tol,
        adaptive=cfg.adaptive_step,
        exact=cfg.exact_multipliers,
    )
    return OptimizeResult(PrecoderStack(best_p.reshape(shape)), trace, converged, n, best_g, state)
