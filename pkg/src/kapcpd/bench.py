"""Benchmark harness: generative scenarios, the single-kernel baseline, and
the accurate-detection / size / runtime / localization grids, emitted as CSV.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .graphs import (
    DCSBM_BLOCK,
    DCSBM_DEGREE,
    DCSBM_HUB,
    ER,
    ERGM,
    RGG,
    SBM,
    SPARSE_SBM,
    DCSBMParams,
    ERGMParams,
    ERParams,
    GeneratorSpec,
    RGGParams,
    SBMParams,
    generate_sequence,
    rgg_default_radius,
)
from .inference import (
    FastConfig,
    PermConfig,
    TestOutcome,
    fast_test,
    fixed_split_test,
    permutation_test,
)
from .kernels import EXTERNAL, KernelMatrix, build_kernel, median_bandwidth, pairwise_distances
from .moments import build_cache
from .scan import (
    ScanConfig,
    alpha_beta_from_entries,
    alpha_beta_profile,
    single_kernel_coefficients,
    single_kernel_s,
)

logger = logging.getLogger(__name__)

KAPF = "KAPF"
GKCP_GAUSS = "GKCP_GAUSS"
GKCP_GRAPHLET = "GKCP_GRAPHLET"
KAP_PERM = "KAP_PERM"
METHODS = (KAP_PERM, KAPF, GKCP_GAUSS, GKCP_GRAPHLET)

VECTOR_MEAN_SHIFT = "vector_mean_shift"  # fixed-split two-sample setting
SCENARIOS = (ER, SBM, SPARSE_SBM, DCSBM_DEGREE, DCSBM_HUB, DCSBM_BLOCK, RGG, ERGM,
             VECTOR_MEAN_SHIFT)

METRIC_ACCURATE = "accurate_detection"
METRIC_SIZE = "size"
METRIC_RUNTIME = "runtime"
METRIC_LOCALIZATION = "localization"
METRICS = (METRIC_ACCURATE, METRIC_SIZE, METRIC_RUNTIME, METRIC_LOCALIZATION)

CSV_COLUMNS = ("scenario", "signal", "method", "runs", "detected", "accurate",
               "mean_ms", "loc_mean", "loc_sd", "errors")

REJECT_LEVEL = 0.05


@dataclass(frozen=True)
class BenchSpec:
    scenario: str
    signals: tuple
    runs: int = 100
    methods: tuple = (KAP_PERM, KAPF)
    seed: int = 0
    metric: str = METRIC_ACCURATE
    n: int = 100
    n_nodes: int = 50
    tau: int | None = 50
    perms: int = 200
    unbalanced: bool = False  # n0 = 0.04 n for unbalanced change locations
    workers: int = 1
    dim: int = 30  # vector scenario only

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ParameterError(f"unknown scenario {self.scenario!r}")
        if self.metric not in METRICS:
            raise ParameterError(f"unknown metric {self.metric!r}")
        if self.runs < 1:
            raise ParameterError("runs must be >= 1")
        if not self.signals:
            raise ParameterError("signal grid must be non-empty")
        for m in self.methods:
            if m not in METHODS:
                raise ParameterError(f"unknown method {m!r}")

    @property
    def scan_fractions(self) -> tuple[float, float]:
        return (0.04, 0.95) if self.unbalanced else (0.05, 0.95)


@dataclass
class CellResult:
    scenario: str
    signal: float
    method: str
    runs: int
    detected: int = 0
    accurate: int = 0
    total_ms: float = 0.0
    loc_errors: list = field(default_factory=list)
    errors: int = 0

    def row(self) -> dict:
        done = self.runs - self.errors
        loc_mean = float(np.mean(self.loc_errors)) if self.loc_errors else float("nan")
        loc_sd = float(np.std(self.loc_errors, ddof=1)) if len(self.loc_errors) > 1 else float("nan")
        return {
            "scenario": self.scenario,
            "signal": self.signal,
            "method": self.method,
            "runs": self.runs,
            "detected": self.detected,
            "accurate": self.accurate,
            "mean_ms": self.total_ms / done if done else float("nan"),
            "loc_mean": loc_mean,
            "loc_sd": loc_sd,
            "errors": self.errors,
        }


# ---------------------------------------------------------------------------
# Scenario generative settings


def _dcsbm_lam(base_within: float, base_across: float, shift: float = 0.0) -> np.ndarray:
    return np.array([
        [base_within + shift, base_across - shift],
        [base_across - shift, base_within + shift],
    ])


def scenario_generator_spec(spec: BenchSpec, signal: float, seed: int) -> GeneratorSpec:
    """The generative setting for one run: pre-change parameters fixed per
    scenario, post-change parameters shifted by the signal level."""
    n, n_nodes = spec.n, spec.n_nodes
    tau = None if spec.metric == METRIC_SIZE else spec.tau
    name = spec.scenario
    if name == ER:
        pre = ERParams(p=0.5)
        post = ERParams(p=0.5 + signal)
    elif name == SBM:
        pre = SBMParams.homogeneous(5, 0.5, 0.3)
        post = SBMParams.homogeneous(5, 0.5 + signal, 0.3)
    elif name == SPARSE_SBM:
        pre = SBMParams(_dcsbm_lam(0.05, 0.03))
        post = SBMParams(_dcsbm_lam(0.05, 0.03, signal))
    elif name == DCSBM_DEGREE:
        lam = _dcsbm_lam(0.05, 0.03)
        theta = np.ones(n_nodes)
        half = n_nodes // 2
        theta_post = np.concatenate([
            np.full(half, 1.0 + signal), np.full(n_nodes - half, 1.0 - signal)
        ])
        pre = DCSBMParams(lam, theta)
        post = DCSBMParams(lam, theta_post)
    elif name == DCSBM_HUB:
        lam = _dcsbm_lam(0.05, 0.03)
        theta = np.ones(n_nodes)
        theta_post = theta.copy()
        theta_post[: int(round(signal))] = 1.3
        pre = DCSBMParams(lam, theta)
        post = DCSBMParams(lam, theta_post)
    elif name == DCSBM_BLOCK:
        pre = DCSBMParams(_dcsbm_lam(0.06, 0.03), theta=None)
        post = DCSBMParams(_dcsbm_lam(0.06, 0.03, signal), theta=None)
    elif name == RGG:
        r0 = rgg_default_radius(n_nodes)
        pre = RGGParams(r0)
        post = RGGParams(r0 * (1.0 + signal))
    elif name == ERGM:
        pre = ERGMParams(edge=-2.0, triangle=0.1)
        post = ERGMParams(edge=-2.0, triangle=0.1 + signal)
    else:
        raise ParameterError(f"scenario {name!r} is not graph-generative")
    if tau is None:
        post = None
    return GeneratorSpec(
        model=name, n_nodes=n_nodes, n=n, params=pre, seed=seed, tau=tau,
        post_change_params=post,
    )


# ---------------------------------------------------------------------------
# Vector two-sample setting (heavy-tailed sparse mean shift, fixed split)


def multivariate_t3(mean: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((size, mean.size))
    w = rng.chisquare(3, size=size)
    return mean + z * np.sqrt(3.0 / w)[:, None]


def vector_gaussian_kernel(x: np.ndarray) -> KernelMatrix:
    dist = pairwise_distances(x)
    sigma = median_bandwidth(dist)
    if sigma == 0.0:
        raise ParameterError("zero median distance in vector sample")
    return KernelMatrix(np.exp(-(dist ** 2) / (2.0 * sigma * sigma)), EXTERNAL)


def vector_laplacian_kernel(x: np.ndarray) -> KernelMatrix:
    dist = np.abs(x[:, None, :] - x[None, :, :]).sum(axis=-1)
    sigma = median_bandwidth(dist)
    if sigma == 0.0:
        raise ParameterError("zero median L1 distance in vector sample")
    return KernelMatrix(np.exp(-dist / sigma), EXTERNAL)


def _vector_shift_run(spec: BenchSpec, delta: float, seed: int) -> TestOutcome:
    rng = np.random.default_rng([seed & ((1 << 64) - 1), 0])
    tau = spec.tau if spec.metric != METRIC_SIZE else None
    mu = np.zeros(spec.dim)
    mu[:10] = delta
    split = tau if tau is not None else spec.n // 2
    x_pre = multivariate_t3(np.zeros(spec.dim), split, rng)
    x_post = multivariate_t3(mu if tau is not None else np.zeros(spec.dim), spec.n - split, rng)
    x = np.vstack([x_pre, x_post])
    k1 = vector_gaussian_kernel(x)
    k2 = vector_laplacian_kernel(x)
    return fixed_split_test(k1, k2, split, PermConfig(b=spec.perms, seed=seed))


# ---------------------------------------------------------------------------
# Single-kernel baseline (the m=1 specialization of the aggregated scan)


def gkcp_test(k: KernelMatrix, cfg: ScanConfig, pcfg: PermConfig) -> TestOutcome:
    """Permutation scan test on Z_W^2 + Z_D^2 from one kernel."""
    pcfg.validate()
    start = time.perf_counter()
    cache = build_cache(k, k)
    coef = single_kernel_coefficients(cache, cfg)
    alpha, beta = alpha_beta_profile(k, coef.ts)
    s_obs = single_kernel_s(coef, alpha, beta)
    best = int(np.argmax(s_obs))
    s_star = float(s_obs[best])
    exceed = 0
    for b in range(1, pcfg.b + 1):
        perm = np.random.default_rng([pcfg.seed & ((1 << 64) - 1), b]).permutation(cache.n)
        a_p, b_p = alpha_beta_from_entries(k.entries[np.ix_(perm, perm)], coef.ts)
        if float(np.max(single_kernel_s(coef, a_p, b_p))) >= s_star:
            exceed += 1
    return TestOutcome(
        method="GKCP",
        p_value=exceed / pcfg.b,
        tau_hat=int(coef.ts[best]),
        s_star=s_star,
        elapsed=time.perf_counter() - start,
    )


# ---------------------------------------------------------------------------
# The grid


def _run_unit(spec: BenchSpec, signal_idx: int, run_idx: int) -> dict:
    """One (signal, run): generate data once, evaluate every method on it.

    Returns per-method dicts {p, tau_hat, ms} or {"error": msg}.
    """
    signal = spec.signals[signal_idx]
    seed = int(np.random.SeedSequence(
        [spec.seed & ((1 << 64) - 1), signal_idx, run_idx]
    ).generate_state(1, np.uint64)[0])
    out: dict = {}
    if spec.scenario == VECTOR_MEAN_SHIFT:
        for method in spec.methods:
            if method != KAP_PERM:
                out[method] = {"error": f"{method} not defined for {VECTOR_MEAN_SHIFT}"}
                continue
            try:
                res = _vector_shift_run(spec, signal, seed)
                out[method] = {"p": res.p_value, "tau_hat": res.tau_hat, "ms": res.elapsed * 1e3}
            except Exception as exc:  # per-cell failures recorded, harness continues
                out[method] = {"error": str(exc)}
        return out

    try:
        gen = scenario_generator_spec(spec, signal, seed)
        seq = generate_sequence(gen)
        k_gauss = build_kernel(seq, "gaussian")
        k_graph = build_kernel(seq, "graphlet")
    except Exception as exc:
        return {method: {"error": str(exc)} for method in spec.methods}
    f0, f1 = spec.scan_fractions
    cfg = ScanConfig.from_fractions(spec.n, f0, f1)
    for method in spec.methods:
        try:
            if method == KAP_PERM:
                res = permutation_test(k_gauss, k_graph, cfg, PermConfig(b=spec.perms, seed=seed))
            elif method == KAPF:
                res = fast_test(k_gauss, k_graph, FastConfig(cfg=cfg))
            elif method == GKCP_GAUSS:
                res = gkcp_test(k_gauss, cfg, PermConfig(b=spec.perms, seed=seed))
            else:
                res = gkcp_test(k_graph, cfg, PermConfig(b=spec.perms, seed=seed))
            out[method] = {"p": res.p_value, "tau_hat": res.tau_hat, "ms": res.elapsed * 1e3}
        except Exception as exc:
            out[method] = {"error": str(exc)}
    return out


def effective_workers(requested: int | None) -> int:
    cap = os.environ.get("KAPCPD_THREADS")
    workers = requested or 1
    if cap:
        workers = min(workers, max(1, int(cap)))
    return max(1, workers)


def run_bench(spec: BenchSpec) -> list[dict]:
    """Run the grid; rows are ordered canonically by (signal index, method
    index) no matter how units were scheduled."""
    spec.validate()
    cells = {
        (si, method): CellResult(spec.scenario, float(spec.signals[si]), method, spec.runs)
        for si in range(len(spec.signals))
        for method in spec.methods
    }
    units = [(si, run) for si in range(len(spec.signals)) for run in range(spec.runs)]
    workers = effective_workers(spec.workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_unit, [spec] * len(units),
                                    [u[0] for u in units], [u[1] for u in units],
                                    chunksize=max(1, len(units) // (4 * workers))))
    else:
        results = [_run_unit(spec, si, run) for si, run in units]

    window = math.floor(0.05 * spec.n)
    for (si, _run), unit in zip(units, results):
        for method, res in unit.items():
            cell = cells[(si, method)]
            if "error" in res:
                cell.errors += 1
                logger.warning("bench cell (%s, %s) run failed: %s",
                               spec.signals[si], method, res["error"])
                continue
            cell.total_ms += res["ms"]
            detected = res["p"] <= REJECT_LEVEL
            if detected:
                cell.detected += 1
                if spec.tau is not None and spec.metric != METRIC_SIZE:
                    err = abs(res["tau_hat"] - spec.tau)
                    cell.loc_errors.append(err)
                    if err <= window:
                        cell.accurate += 1
    rows = []
    for si in range(len(spec.signals)):
        for method in spec.methods:
            rows.append(cells[(si, method)].row())
    return rows


def write_csv(rows: list[dict], fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


def summarize(rows: list[dict]) -> str:
    lines = []
    for row in rows:
        lines.append(
            f"{row['scenario']} signal={row['signal']:g} {row['method']}: "
            f"detected {row['detected']}/{row['runs']}, accurate {row['accurate']}, "
            f"mean {row['mean_ms']:.1f} ms, errors {row['errors']}"
        )
    return "\n".join(lines)


def load_bench_spec(path: str) -> BenchSpec:
    """Read a TOML or JSON bench spec file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    data = None
    if path.endswith(".json"):
        data = json.loads(raw)
    else:
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            data = tomllib.loads(raw.decode("utf-8"))
        except Exception:
            data = json.loads(raw)
    known = {f for f in BenchSpec.__dataclass_fields__}
    unknown = set(data) - known
    if unknown:
        raise ParameterError(f"unknown bench spec keys: {sorted(unknown)}")
    if "signals" in data:
        data["signals"] = tuple(float(s) for s in data["signals"])
    if "methods" in data:
        data["methods"] = tuple(data["methods"])
    return BenchSpec(**data)
