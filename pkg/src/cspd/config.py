"""Scenario and algorithm parameters shared by every module."""

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import InvalidParameterError

__all__ = ["SystemConfig", "snr_to_noise"]


def snr_to_noise(snr_db, power, n_v):
    """Noise variance giving per-subcarrier SNR ``power / (n_v * sigma2)``."""
    return power / (n_v * 10.0 ** (snr_db / 10.0))


@dataclass(frozen=True)
class SystemConfig:
    """All scenario and optimizer parameters.

    Power is split equally over the used subcarriers unless
    ``subcarrier_power`` is given, in which case it must sum to ``power``.
    ``h_min``/``h_max`` default to ``1e-4 * h0`` and ``10 * h0``.
    """

    m_x: int = 4
    m_z: int = 4
    n_users: int = 4
    n_c: int = 32
    n_v: int = 32
    n_e: int = 8
    sigma_z2: float = 0.1
    power: float = 32.0
    subcarrier_power: tuple | None = None
    weights: tuple | None = None
    alpha: float = 0.0
    gamma: float = 3.0
    h0: float = 0.05
    r: float = 1e-4
    theta: float = 0.1
    h_min: float | None = None
    h_max: float | None = None
    n_taps: int = 6
    pdp_decay: float = 2.0
    seed: int = 0
    max_iters: int = 500
    tol: float = 1e-6
    exact_multipliers: bool = False
    adaptive_step: bool = True
    wmmse_solver: str = "direct"

    def __post_init__(self):
        def bad(name, why):
            raise InvalidParameterError(f"{name}: {why}")

        for name in ("m_x", "m_z", "n_users", "n_c", "n_v", "n_taps", "max_iters"):
            if int(getattr(self, name)) < 1:
                bad(name, "must be a positive integer")
        if self.n_v > self.n_c:
            bad("n_v", f"used subcarriers {self.n_v} exceed total {self.n_c}")
        if not 0 <= self.n_e <= self.n_v:
            bad("n_e", f"must lie in [0, {self.n_v}]")
        if self.n_taps > self.n_c:
            bad("n_taps", f"tap count {self.n_taps} exceeds n_c={self.n_c}")
        if not self.sigma_z2 > 0:
            bad("sigma_z2", "noise variance must be positive")
        if not self.power > 0:
            bad("power", "power budget must be positive")
        if self.subcarrier_power is not None:
            pc = np.asarray(self.subcarrier_power, dtype=float)
            if pc.shape != (self.n_v,) or np.any(pc < 0):
                bad("subcarrier_power", f"need {self.n_v} non-negative entries")
            if abs(pc.sum() - self.power) > 1e-9 * self.power:
                bad("subcarrier_power", "per-subcarrier budgets must sum to power")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (self.n_users,) or np.any(w < 0):
                bad("weights", f"need {self.n_users} non-negative weights")
        if self.alpha < 0:
            bad("alpha", "must be >= 0")
        if not self.gamma > 0:
            bad("gamma", "dissipation must be > 0")
        if not self.h0 > 0:
            bad("h0", "initial step must be > 0")
        if not self.r > 0:
            bad("r", "target error must be > 0")
        if not 0 <= self.theta <= 2:
            bad("theta", "must lie within the range [0, 2]")
        if not self.pdp_decay > 0:
            bad("pdp_decay", "must be > 0")
        if not self.tol >= 0:
            bad("tol", "must be >= 0")
        if self.wmmse_solver not in ("direct", "cg"):
            bad("wmmse_solver", "must be 'direct' or 'cg'")
        if self.step_bounds[0] > self.step_bounds[1]:
            bad("h_min", "must not exceed h_max")

    @property
    def m(self):
        return self.m_x * self.m_z

    @property
    def p_c(self):
        if self.subcarrier_power is None:
            return np.full(self.n_v, self.power / self.n_v)
        return np.asarray(self.subcarrier_power, dtype=float)

    @property
    def w(self):
        if self.weights is None:
            return np.ones(self.n_users)
        return np.asarray(self.weights, dtype=float)

    @property
    def step_bounds(self):
        lo = 1e-4 * self.h0 if self.h_min is None else self.h_min
        hi = 10.0 * self.h0 if self.h_max is None else self.h_max
        return lo, hi

    @property
    def snr_db(self):
        return 10.0 * np.log10(self.power / (self.n_v * self.sigma_z2))

    def with_snr(self, snr_db):
        return replace(self, sigma_z2=snr_to_noise(snr_db, self.power, self.n_v))

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]
