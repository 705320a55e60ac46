"""Seeded experiment sweeps and CSV/JSON report emission.

An :class:`ExperimentSpec` names one experiment kind, a scenario
(:class:`~cspd.config.SystemConfig`), an SNR grid, a seed count and a set
of precoding methods.  :func:`run` evaluates every method on every
(SNR, seed) pair and collects one :class:`Row` per method, SNR, seed and
step-length variant.  Rows are written to ``report.csv`` in a fixed order,
aggregates to ``summary.json``.

SNR is defined per subcarrier as ``P / (N_v sigma^2)``.
"""

import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channel import generate_channel
from .config import SystemConfig
from .errors import CspdError, ConfigError, InvalidParameterError
from .link import simulate_link
from .objective import delay_domain, delay_energy_ratio, evaluate
from .symplectic import optimize
from .wmmse import wmmse_solve

__all__ = [
    "KINDS",
    "METHODS",
    "CSV_COLUMNS",
    "SNR_CONVENTION",
    "ExperimentSpec",
    "ExperimentReport",
    "Row",
    "parse_config",
    "run",
    "smoke_spec",
    "smoothed_cspd",
    "iterations_within",
]

KINDS = (
    "wsr_vs_snr",
    "delay_profile",
    "nmse_vs_snr",
    "ber_vs_snr",
    "convergence_trace",
    "step_length_study",
)
METHODS = ("cspd", "cspd_alpha0", "wmmse40", "wmmse150")
CSV_COLUMNS = (
    "method",
    "variant",
    "snr_db",
    "seed",
    "status",
    "alpha",
    "wsr_bits",
    "delay_energy_ratio",
    "nmse",
    "ber",
    "bit_errors",
    "n_bits",
    "iterations_to_converge",
    "converged",
    "iters_within_1pct",
)
METRICS = ("wsr_bits", "delay_energy_ratio", "nmse", "ber", "iterations_to_converge", "iters_within_1pct")
SNR_CONVENTION = "SNR = P / (N_v * sigma_z2) per subcarrier, in dB"
NA = "na"

_SPEC_KEYS = ("kind", "snr_grid", "num_seeds", "seed", "methods", "n_symbols",
              "ratio_target", "alpha_grid", "step_factors")


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment: kind, scenario, SNR grid, seeds and methods.

    Seeds are ``seed, seed + 1, ..., seed + num_seeds - 1``.  The ``cspd``
    method uses ``cfg.alpha`` when positive; otherwise it walks
    ``alpha_grid`` (warm-started from the unsmoothed solution) and keeps the
    first alpha whose delay energy ratio falls below ``ratio_target``.
    ``step_factors`` multiply ``cfg.h0`` for the fixed-step runs of the
    step-length study.
    """

    kind: str = "wsr_vs_snr"
    cfg: SystemConfig = field(default_factory=SystemConfig)
    snr_grid: tuple = (0.0, 10.0, 20.0)
    num_seeds: int = 1
    seed: int = 0
    methods: tuple = METHODS
    n_symbols: int = 100
    ratio_target: float = 1e-3
    alpha_grid: tuple = tuple(0.01 * 3.0**j for j in range(9))
    step_factors: tuple = (0.25, 0.5, 1.0, 2.0)

    def __post_init__(self):
        object.__setattr__(self, "snr_grid", tuple(float(s) for s in self.snr_grid))
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))
        object.__setattr__(self, "step_factors", tuple(float(a) for a in self.step_factors))
        # one seed key: the scenario seed follows the first experiment seed
        if self.cfg.seed != self.seed:
            object.__setattr__(self, "cfg", self.cfg.replace(seed=self.seed))
        if self.kind not in KINDS:
            raise ConfigError("kind", f"unknown kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if not self.snr_grid or not all(math.isfinite(s) for s in self.snr_grid):
            raise ConfigError("snr_grid", "needs at least one finite SNR value")
        if int(self.num_seeds) < 1:
            raise ConfigError("num_seeds", "must be >= 1")
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise ConfigError("methods", f"must be a non-empty subset of {', '.join(METHODS)}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods", "duplicate method")
        if int(self.n_symbols) < 1:
            raise ConfigError("n_symbols", "must be >= 1")
        if not self.ratio_target > 0:
            raise ConfigError("ratio_target", "must be > 0")
        if not self.alpha_grid or any(a <= 0 for a in self.alpha_grid):
            raise ConfigError("alpha_grid", "needs positive values")
        if not self.step_factors or any(a <= 0 for a in self.step_factors):
            raise ConfigError("step_factors", "needs positive values")

    @property
    def seeds(self):
        return list(range(self.seed, self.seed + self.num_seeds))

    def to_dict(self):
        out = {k: getattr(self, k) for k in _SPEC_KEYS}
        for k in ("snr_grid", "methods", "alpha_grid", "step_factors"):
            out[k] = list(out[k])
        out.update({k: v for k, v in self.cfg.to_dict().items() if k != "seed"})
        return out

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _spec_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    cfg_keys = set(SystemConfig.field_names())
    for key in data:
        if key not in cfg_keys and key not in _SPEC_KEYS:
            raise ConfigError(key, "unknown configuration key")
    cfg_part = {k: v for k, v in data.items() if k in cfg_keys and k != "seed"}
    for k in ("weights", "subcarrier_power"):
        if isinstance(cfg_part.get(k), list):
            cfg_part[k] = tuple(cfg_part[k])
    try:
        cfg = SystemConfig(**cfg_part)
    except InvalidParameterError as exc:
        key = str(exc).split(":", 1)[0]
        raise ConfigError(key, str(exc).split(":", 1)[-1].strip()) from None
    except TypeError as exc:
        raise ConfigError("<types>", str(exc)) from None
    return ExperimentSpec(cfg=cfg, **{k: v for k, v in data.items() if k in _SPEC_KEYS})


def parse_config(path) -> ExperimentSpec:
    """Read a JSON experiment file; an empty file gives the default spec.

    Spec keys and :class:`SystemConfig` fields share one flat namespace.
    """
    text = Path(path).read_text()
    if not text.strip():
        return ExperimentSpec()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<syntax>", f"invalid JSON: {exc}") from None
    return _spec_from_dict(data)


@dataclass
class Row:
    method: str
    snr_db: float
    seed: int
    variant: str = "adaptive"
    status: str = "ok"
    alpha: float = float("nan")
    wsr_bits: float = float("nan")
    delay_energy_ratio: float = float("nan")
    nmse: float = float("nan")
    ber: float = float("nan")
    bit_errors: float = float("nan")
    n_bits: float = float("nan")
    iterations_to_converge: float = float("nan")
    converged: float = float("nan")
    iters_within_1pct: float = float("nan")

    def cells(self):
        out = []
        for name in CSV_COLUMNS:
            v = getattr(self, name)
            if isinstance(v, str):
                out.append(v)
            elif isinstance(v, (bool, np.bool_)):
                out.append(str(int(v)))
            elif isinstance(v, (int, np.integer)):
                out.append(str(int(v)))
            elif not math.isfinite(v):
                out.append(NA)
            elif float(v).is_integer() and name in ("seed", "bit_errors", "n_bits", "converged",
                                                    "iterations_to_converge", "iters_within_1pct"):
                out.append(str(int(v)))
            else:
                out.append(repr(float(v)))
        return out


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    rows: list
    traces: dict = field(default_factory=dict)
    delay_profiles: dict = field(default_factory=dict)

    def select(self, method=None, snr_db=None, variant=None, status="ok"):
        return [r for r in self.rows
                if (method is None or r.method == method)
                and (snr_db is None or r.snr_db == snr_db)
                and (variant is None or r.variant == variant)
                and (status is None or r.status == status)]

    def values(self, metric, **sel):
        return np.array([getattr(r, metric) for r in self.select(**sel)], dtype=float)

    def aggregates(self):
        """Mean, std (ddof=1, 0 for a single sample) and count per group."""
        groups = {}
        for r in self.rows:
            if r.status != "ok":
                continue
            groups.setdefault((r.method, r.variant, r.snr_db), []).append(r)
        out = []
        for (method, variant, snr), rows in groups.items():
            for metric in METRICS:
                vals = np.array([getattr(r, metric) for r in rows], dtype=float)
                vals = vals[np.isfinite(vals)]
                if vals.size == 0:
                    continue
                std = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
                out.append({"method": method, "variant": variant, "snr_db": snr, "metric": metric,
                            "mean": float(np.mean(vals)), "std": std, "count": int(vals.size)})
        return out

    def metadata(self):
        return {
            "kind": self.spec.kind,
            "config_hash": self.spec.config_hash(),
            "config": self.spec.to_dict(),
            "seeds": self.spec.seeds,
            "version": __version__,
            "snr_convention": SNR_CONVENTION,
            "csv_columns": list(CSV_COLUMNS),
        }

    def csv_text(self):
        import io

        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow(r.cells())
        return buf.getvalue()

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(self.csv_text())
        summary = {"metadata": self.metadata(), "aggregates": self.aggregates()}
        if self.delay_profiles:
            summary["delay_profile"] = self.delay_profiles
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        for name, trace in self.traces.items():
            trace.to_csv(out / name)
        return out


def iterations_within(g, target, rel=0.01):
    """First iteration index whose ``g`` is within ``rel`` of ``target``."""
    g = np.asarray(g, dtype=float)
    hit = np.nonzero(g <= target + rel * abs(target))[0]
    return int(hit[0]) if hit.size else None


def smoothed_cspd(ch, cfg, p_start, alpha_grid, ratio_target):
    """Smallest grid alpha whose warm-started run meets ``ratio_target``.

    Returns ``(alpha, OptimizeResult)``; the last grid value is kept when no
    alpha reaches the target.
    """
    res = None
    for alpha in alpha_grid:
        res = optimize(ch, cfg.replace(alpha=alpha), p_init=p_start)
        if delay_energy_ratio(ch, np.asarray(res.precoder), cfg.n_e) < ratio_target:
            break
    return alpha, res


def _bits(x):
    return x / math.log(2.0)


def _trace_name(method, seed, snr, multi_snr, variant="adaptive"):
    tag = "" if variant == "adaptive" else f"_{variant}"
    snr_tag = f"_snr{snr:g}" if multi_snr else ""
    return f"trace_{method}{tag}_{seed}{snr_tag}.csv"


def _run_point(spec: ExperimentSpec, snr: float, seed: int):
    """All methods at one (SNR, seed); returns rows, traces and delay profiles."""
    cfg = spec.cfg.replace(seed=seed).with_snr(snr)
    rows, traces, profiles = [], {}, {}
    multi = len(spec.snr_grid) > 1
    try:
        ch = generate_channel(cfg)
    except CspdError as exc:
        return [Row(m, snr, seed, status=f"error:{type(exc).__name__}") for m in spec.methods], {}, {}

    need_alpha0 = any(m in ("cspd", "cspd_alpha0") for m in spec.methods)
    base = None
    if need_alpha0:
        try:
            base = optimize(ch, cfg.replace(alpha=0.0))
        except CspdError as exc:
            base = exc

    for mi, method in enumerate(spec.methods):
        row = Row(method, snr, seed)
        try:
            if method == "cspd_alpha0":
                if isinstance(base, Exception):
                    raise base
                res, row.alpha = base, 0.0
            elif method == "cspd":
                if isinstance(base, Exception):
                    raise base
                if spec.cfg.alpha > 0:
                    row.alpha = spec.cfg.alpha
                    res = optimize(ch, cfg, p_init=np.asarray(base.precoder))
                else:
                    row.alpha, res = smoothed_cspd(ch, cfg, np.asarray(base.precoder),
                                                   spec.alpha_grid, spec.ratio_target)
            else:
                res = None
                iters = 40 if method == "wmmse40" else 150
                p = np.asarray(wmmse_solve(ch, cfg, iters=iters))
                row.iterations_to_converge = iters
            if res is not None:
                p = np.asarray(res.precoder)
                row.iterations_to_converge = res.iterations
                row.converged = bool(res.converged)
                traces[_trace_name(method, seed, snr, multi)] = res.trace
            _fill_metrics(row, ch, cfg, p, spec, seed, snr, mi)
            if spec.kind == "delay_profile":
                profiles[method] = np.mean(np.abs(delay_domain(ch, p)) ** 2, axis=0)
            rows.append(row)
            if spec.kind == "step_length_study" and res is not None:
                p_start = np.asarray(base.precoder) if method == "cspd" else None
                rows.extend(_step_study(row, res, p_start, ch, cfg, spec, seed, snr, multi, traces))
        except CspdError as exc:
            row.status = f"error:{type(exc).__name__}"
            rows.append(row)
    return rows, traces, profiles


def _fill_metrics(row, ch, cfg, p, spec, seed, snr, method_index):
    ob = evaluate(ch, p, cfg.replace(alpha=0.0))
    row.wsr_bits = ob.wsr_bits
    row.delay_energy_ratio = delay_energy_ratio(ch, p, cfg.n_e)
    if spec.kind in ("nmse_vs_snr", "ber_vs_snr"):
        ss = np.random.SeedSequence([seed, spec.snr_grid.index(snr), method_index])
        link = simulate_link(ch, p, cfg.sigma_z2, np.random.default_rng(ss), n_e=cfg.n_e,
                             n_symbols=spec.n_symbols)
        row.nmse = float(np.mean(link.nmse))
        row.ber = link.ber
        row.bit_errors = link.bit_errors
        row.n_bits = link.n_bits


def _step_study(adaptive_row, adaptive_res, p0, ch, cfg, spec, seed, snr, multi, traces):
    """Fixed-step reruns and iterations needed to get within 1% of the best objective.

    The fixed-step runs share the adaptive run's alpha and starting point.
    """
    method = adaptive_row.method
    run_cfg = cfg.replace(alpha=adaptive_row.alpha)
    results = {"adaptive": adaptive_res}
    for f in spec.step_factors:
        fixed = run_cfg.replace(h0=cfg.h0 * f, adaptive_step=False)
        try:
            results[f"fixed_h={cfg.h0 * f:g}"] = optimize(ch, fixed, p_init=p0)
        except CspdError as exc:
            results[f"fixed_h={cfg.h0 * f:g}"] = exc
    finals = [r.best_g for r in results.values() if not isinstance(r, Exception)]
    best = min(finals)
    adaptive_row.iters_within_1pct = iterations_within(adaptive_res.trace.column("g"), best)
    rows = []
    for variant, res in results.items():
        if variant == "adaptive":
            continue
        row = Row(method, snr, seed, variant=variant, alpha=run_cfg.alpha)
        if isinstance(res, Exception):
            row.status = f"error:{type(res).__name__}"
        else:
            p = np.asarray(res.precoder)
            row.wsr_bits = evaluate(ch, p, cfg.replace(alpha=0.0)).wsr_bits
            row.delay_energy_ratio = delay_energy_ratio(ch, p, cfg.n_e)
            row.iterations_to_converge = res.iterations
            row.converged = bool(res.converged)
            hit = iterations_within(res.trace.column("g"), best)
            row.iters_within_1pct = float("nan") if hit is None else hit
            traces[_trace_name(method, seed, snr, multi, variant)] = res.trace
        rows.append(row)
    if adaptive_row.iters_within_1pct is None:
        adaptive_row.iters_within_1pct = float("nan")
    return rows


def run(spec: ExperimentSpec, threads=1, out_dir=None) -> ExperimentReport:
    """Evaluate every method on every (SNR, seed) pair.

    Points fan out to ``threads`` workers; rows are assembled in SNR, seed,
    method order so the CSV does not depend on scheduling.  Failures of a
    single method are recorded in the row's ``status`` column.
    """
    tasks = [(snr, seed) for snr in spec.snr_grid for seed in spec.seeds]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda t: _run_point(spec, *t), tasks))
    else:
        results = [_run_point(spec, *t) for t in tasks]
    report = ExperimentReport(spec, [])
    profile_acc = {}
    for (snr, _), (rows, traces, profiles) in zip(tasks, results):
        report.rows.extend(rows)
        report.traces.update(traces)
        for method, prof in profiles.items():
            profile_acc.setdefault((method, snr), []).append(prof)
    report.delay_profiles = {
        f"{method}@{snr:g}dB": np.mean(v, axis=0).tolist() for (method, snr), v in profile_acc.items()
    }
    if out_dir is not None:
        report.write(out_dir)
    return report


def smoke_spec(seed=0) -> ExperimentSpec:
    """Minimal spec: M=4, K=2, N_v=8, one seed and one SNR."""
    cfg = SystemConfig(m_x=2, m_z=2, n_users=2, n_c=16, n_v=8, n_e=2, n_taps=3, power=8.0, max_iters=200)
    return ExperimentSpec(kind="wsr_vs_snr", cfg=cfg, snr_grid=(10.0,), num_seeds=1, seed=seed)
