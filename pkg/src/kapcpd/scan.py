"""Aggregated scan statistic S(t): four-component decomposition, scan
maximum, and change-point estimate.

The standardization constants depend only on the moment cache and t, never
on the observed ordering, so they are computed once and shared by every
permuted replica; a replica only recomputes the alpha/beta block means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, ParameterError
from .kernels import KernelMatrix
from .moments import (
    MomentCache,
    VAR_FLOOR_FACTOR,
    build_cache,
    cov_alpha_alpha,
    cov_alpha_beta,
    cov_beta_beta,
    d_coeffs,
    time_moments,
    w_coeffs,
)

# 1 - corr^2 below this counts as perfect linear correlation (Theorem-2 check)
_CORR_DET_TOL = 1e-12
_SWAP_TOL = 1e-12


@dataclass(frozen=True)
class ScanConfig:
    """Scan cutoffs n0 <= t <= n1; defaults are ceil(0.05 n) and floor(0.95 n)
    clamped into the admissible range [2, n-2]."""

    n0: int
    n1: int

    @classmethod
    def from_fractions(cls, n: int, f0: float = 0.05, f1: float = 0.95) -> "ScanConfig":
        if n < 4:
            raise ParameterError(f"scan needs a sequence of length >= 4, got {n}")
        n0 = max(2, math.ceil(f0 * n))
        n1 = min(n - 2, math.floor(f1 * n))
        return cls(n0=n0, n1=n1)

    def validate(self, n: int) -> None:
        if not 2 <= self.n0 <= self.n1 <= n - 2:
            raise ParameterError(
                f"cutoffs must satisfy 2 <= n0 <= n1 <= n-2, got n0={self.n0}, n1={self.n1}, n={n}"
            )

    @property
    def ts(self) -> np.ndarray:
        return np.arange(self.n0, self.n1 + 1)


@dataclass(frozen=True)
class ScanCoefficients:
    """Per-t standardization data shared by all permutation replicas."""

    n: int
    ts: np.ndarray
    wa: np.ndarray
    wb: np.ndarray
    da: np.ndarray
    db: np.ndarray
    wdiff_mean: float
    wdiff_sd: np.ndarray
    ddiff_mean: np.ndarray
    ddiff_sd: np.ndarray
    wsum_u1: np.ndarray
    wsum_u2: np.ndarray
    wsum_mean: np.ndarray
    wsum_sd: np.ndarray
    dsum_v1: np.ndarray
    dsum_v2: np.ndarray
    dsum_mean: np.ndarray
    dsum_sd: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    d_var: np.ndarray  # (2, len(ts)) variances of D_1, D_2 for the fast test
    d_mean: np.ndarray  # (2, len(ts))


def _pair_variances(cache: MomentCache, ca, cb, ts):
    """(v00, v01, v11) for the process with alpha/beta weights (ca, cb)."""
    out = []
    for x, y in ((0, 0), (0, 1), (1, 1)):
        cab = cov_alpha_beta(cache, x, y)
        v = (
            ca * ca * cov_alpha_alpha(cache, x, y, ts)
            + 2.0 * ca * cb * cab
            + cb * cb * cov_beta_beta(cache, x, y, ts)
        )
        out.append(v)
    return out


def _orthogonal_sum(v00, v01, v11, sum_var, label, ts):
    """Coefficients (u1, u2) making u1*X1 + u2*X2 uncorrelated with X1 - X2.

    The textbook choice u2=1, u1=(var(X2)-cov)/(var(X1)-cov) breaks down when
    var(X1) ~ cov; the construction is symmetric, so solve for the other
    coefficient there instead.
    """
    den1 = v00 - v01
    den2 = v11 - v01
    swap = np.abs(den1) < _SWAP_TOL * sum_var
    den1_safe = np.where(swap, 1.0, den1)
    den2_safe = np.where(swap, den2, 1.0)
    if np.any(swap & (den2 == 0.0)):
        t_bad = int(ts[np.argmax(swap & (den2 == 0.0))])
        raise DegeneracyError(
            f"{label} orthogonalization is singular", t=t_bad, condition=label
        )
    u1 = np.where(swap, 1.0, den2 / den1_safe)
    u2 = np.where(swap, den1 / den2_safe, 1.0)
    return u1, u2


def scan_coefficients(cache: MomentCache, cfg: ScanConfig) -> ScanCoefficients:
    cfg.validate(cache.n)
    n = cache.n
    ts = cfg.ts.astype(float)
    wa, wb = w_coeffs(n, ts)
    da, db = d_coeffs(n, ts)
    kb = cache.kbar

    w00, w01, w11 = _pair_variances(cache, wa, wb, ts)
    d00, d01, d11 = _pair_variances(cache, da, db, ts)

    w_sum_var = w00 + 2.0 * w01 + w11
    d_sum_var = d00 + 2.0 * d01 + d11
    floor = VAR_FLOOR_FACTOR * (abs(kb[0]) + abs(kb[1])) ** 2

    checks = [
        (w00 * w11 - w01 ** 2 <= _CORR_DET_TOL * np.abs(w00 * w11),
         "var(W1)var(W2) = cov(W1,W2)^2 (W processes perfectly linearly correlated)"),
        (d00 * d11 - d01 ** 2 <= _CORR_DET_TOL * np.abs(d00 * d11),
         "var(D1)var(D2) = cov(D1,D2)^2 (D processes perfectly linearly correlated)"),
        (d_sum_var <= floor, "var(D1+D2) = 0"),
        (w_sum_var <= floor, "var(W1+W2) = 0"),
    ]
    for bad, condition in checks:
        if np.any(bad):
            t_bad = int(cfg.ts[np.argmax(bad)])
            raise DegeneracyError(
                f"S(t) is undefined at t={t_bad}: {condition}", t=t_bad, condition=condition
            )

    u1, u2 = _orthogonal_sum(w00, w01, w11, w_sum_var, "W", cfg.ts)
    v1, v2 = _orthogonal_sum(d00, d01, d11, d_sum_var, "D", cfg.ts)

    wdiff_var = w00 - 2.0 * w01 + w11
    ddiff_var = d00 - 2.0 * d01 + d11
    wsum_var = u1 * u1 * w00 + 2.0 * u1 * u2 * w01 + u2 * u2 * w11
    dsum_var = v1 * v1 * d00 + 2.0 * v1 * v2 * d01 + v2 * v2 * d11
    for var, label in (
        (wdiff_var, "var(W1-W2)"),
        (ddiff_var, "var(D1-D2)"),
        (wsum_var, "var(WSum)"),
        (dsum_var, "var(DSum)"),
    ):
        if np.any(var <= 0.0):
            t_bad = int(cfg.ts[np.argmax(var <= 0.0)])
            raise DegeneracyError(
                f"S(t) is undefined at t={t_bad}: {label} = 0", t=t_bad, condition=label
            )

    d_mean_coef = da + db
    with np.errstate(divide="ignore"):
        c1 = u1 / u2
        c2 = v1 / v2
    return ScanCoefficients(
        n=n,
        ts=cfg.ts,
        wa=wa,
        wb=wb,
        da=da,
        db=db,
        wdiff_mean=float(kb[0] - kb[1]),
        wdiff_sd=np.sqrt(wdiff_var),
        ddiff_mean=d_mean_coef * (kb[0] - kb[1]),
        ddiff_sd=np.sqrt(ddiff_var),
        wsum_u1=u1,
        wsum_u2=u2,
        wsum_mean=u1 * kb[0] + u2 * kb[1],
        wsum_sd=np.sqrt(wsum_var),
        dsum_v1=v1,
        dsum_v2=v2,
        dsum_mean=d_mean_coef * (v1 * kb[0] + v2 * kb[1]),
        dsum_sd=np.sqrt(dsum_var),
        c1=c1,
        c2=c2,
        d_var=np.stack([d00, d11]),
        d_mean=np.stack([d_mean_coef * kb[0], d_mean_coef * kb[1]]),
    )


def alpha_beta_from_entries(entries: np.ndarray, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Block means alpha(t), beta(t) for every t in ts, in O(n^2) total.

    Two cumulative sums give every within-block total at once, the vectorized
    form of adding row/column t+1 when stepping the cutoff.
    """
    m = entries.copy()
    np.fill_diagonal(m, 0.0)
    c2 = m.cumsum(axis=0).cumsum(axis=1)
    n = entries.shape[0]
    total = c2[-1, -1]
    idx = np.asarray(ts) - 1
    top = c2[idx, idx]
    rows = c2[idx, n - 1]
    tf = np.asarray(ts, dtype=float)
    alpha = top / (tf * (tf - 1.0))
    beta = (total - 2.0 * rows + top) / ((n - tf) * (n - tf - 1.0))
    return alpha, beta


def alpha_beta_profile(k: KernelMatrix, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return alpha_beta_from_entries(k.entries, ts)


def raw_processes(k1: KernelMatrix, k2: KernelMatrix, t: int):
    """(alpha1, beta1, alpha2, beta2) at a single cutoff t."""
    n = k1.n
    if not 2 <= t <= n - 2:
        raise ParameterError(f"t must satisfy 2 <= t <= n-2, got t={t}, n={n}")
    ts = np.array([t])
    a1, b1 = alpha_beta_profile(k1, ts)
    a2, b2 = alpha_beta_profile(k2, ts)
    return float(a1[0]), float(b1[0]), float(a2[0]), float(b2[0])


def components_from_alpha_beta(coef: ScanCoefficients, a1, b1, a2, b2):
    """The four standardized components given alpha/beta arrays over coef.ts."""
    w1 = coef.wa * a1 + coef.wb * b1
    w2 = coef.wa * a2 + coef.wb * b2
    d1 = coef.da * a1 + coef.db * b1
    d2 = coef.da * a2 + coef.db * b2
    z_wdiff = (w1 - w2 - coef.wdiff_mean) / coef.wdiff_sd
    z_ddiff = (d1 - d2 - coef.ddiff_mean) / coef.ddiff_sd
    z_wsum = (coef.wsum_u1 * w1 + coef.wsum_u2 * w2 - coef.wsum_mean) / coef.wsum_sd
    z_dsum = (coef.dsum_v1 * d1 + coef.dsum_v2 * d2 - coef.dsum_mean) / coef.dsum_sd
    return (w1, w2, d1, d2), (z_wdiff, z_ddiff, z_wsum, z_dsum)


def s_from_alpha_beta(coef: ScanCoefficients, a1, b1, a2, b2) -> np.ndarray:
    _, (z_wdiff, z_ddiff, z_wsum, z_dsum) = components_from_alpha_beta(coef, a1, b1, a2, b2)
    return z_wdiff ** 2 + z_ddiff ** 2 + z_wsum ** 2 + z_dsum ** 2


@dataclass(frozen=True)
class ScanProfile:
    """Everything computed along the scan: raw block means, W/D processes,
    Theorem-1 weights, standardized components, S(t), and the argmax."""

    n: int
    n0: int
    n1: int
    ts: np.ndarray
    alpha1: np.ndarray
    beta1: np.ndarray
    alpha2: np.ndarray
    beta2: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    z_wdiff: np.ndarray
    z_ddiff: np.ndarray
    z_wsum: np.ndarray
    z_dsum: np.ndarray
    s: np.ndarray
    s_star: float
    tau_hat: int

    def s_at(self, t: int) -> float:
        if not self.n0 <= t <= self.n1:
            raise ParameterError(f"t={t} outside scan range [{self.n0}, {self.n1}]")
        return float(self.s[t - self.n0])

    def dump_csv(self, fh) -> None:
        fh.write("t,S,Z_Wdiff,Z_Ddiff,Z_Wsum,Z_Dsum\n")
        for i, t in enumerate(self.ts):
            fh.write(
                f"{t},{self.s[i]!r},{self.z_wdiff[i]!r},{self.z_ddiff[i]!r},"
                f"{self.z_wsum[i]!r},{self.z_dsum[i]!r}\n"
            )


def scan_statistic(
    k1: KernelMatrix,
    k2: KernelMatrix,
    cfg: ScanConfig | None = None,
    cache: MomentCache | None = None,
) -> ScanProfile:
    """Aggregated statistic over [n0, n1] via the four-component
    decomposition; ties in the argmax go to the smallest t."""
    if cache is None:
        cache = build_cache(k1, k2)
    if cfg is None:
        cfg = ScanConfig.from_fractions(cache.n)
    coef = scan_coefficients(cache, cfg)
    a1, b1 = alpha_beta_profile(k1, coef.ts)
    a2, b2 = alpha_beta_profile(k2, coef.ts)
    (w1, w2, d1, d2), (z_wdiff, z_ddiff, z_wsum, z_dsum) = components_from_alpha_beta(
        coef, a1, b1, a2, b2
    )
    s = z_wdiff ** 2 + z_ddiff ** 2 + z_wsum ** 2 + z_dsum ** 2
    best = int(np.argmax(s))
    return ScanProfile(
        n=cache.n,
        n0=cfg.n0,
        n1=cfg.n1,
        ts=coef.ts,
        alpha1=a1,
        beta1=b1,
        alpha2=a2,
        beta2=b2,
        w1=w1,
        w2=w2,
        d1=d1,
        d2=d2,
        c1=coef.c1,
        c2=coef.c2,
        z_wdiff=z_wdiff,
        z_ddiff=z_ddiff,
        z_wsum=z_wsum,
        z_dsum=z_dsum,
        s=s,
        s_star=float(s[best]),
        tau_hat=int(coef.ts[best]),
    )


def quadform_profile(
    k1: KernelMatrix,
    k2: KernelMatrix,
    cfg: ScanConfig,
    cache: MomentCache | None = None,
) -> np.ndarray:
    """Verification mode: S(t) by the explicit Sigma(t)^-1 quadratic form."""
    if cache is None:
        cache = build_cache(k1, k2)
    cfg.validate(cache.n)
    a1, b1 = alpha_beta_profile(k1, cfg.ts)
    a2, b2 = alpha_beta_profile(k2, cfg.ts)
    out = np.empty(cfg.ts.size)
    for i, t in enumerate(cfg.ts):
        tm = time_moments(cache, int(t))
        dev = np.array([a1[i], b1[i], a2[i], b2[i]]) - tm.mean
        try:
            sol = np.linalg.solve(tm.sigma, dev)
        except np.linalg.LinAlgError as exc:
            raise DegeneracyError(f"Sigma({t}) is singular", t=int(t)) from exc
        out[i] = dev @ sol
    return out


def fixed_split_statistic(
    k1: KernelMatrix,
    k2: KernelMatrix,
    tau: int,
    cache: MomentCache | None = None,
) -> float:
    """S(tau) for the fixed-split two-sample variant."""
    if cache is None:
        cache = build_cache(k1, k2)
    if not 2 <= tau <= cache.n - 2:
        raise ParameterError(f"tau must satisfy 2 <= tau <= n-2, got {tau}")
    cfg = ScanConfig(n0=tau, n1=tau)
    coef = scan_coefficients(cache, cfg)
    a1, b1 = alpha_beta_profile(k1, coef.ts)
    a2, b2 = alpha_beta_profile(k2, coef.ts)
    return float(s_from_alpha_beta(coef, a1, b1, a2, b2)[0])


# ---------------------------------------------------------------------------
# Single-kernel variant (two-component decomposition), used as the GKCP
# baseline in the benchmark harness.


@dataclass(frozen=True)
class SingleKernelCoefficients:
    ts: np.ndarray
    wa: np.ndarray
    wb: np.ndarray
    da: np.ndarray
    db: np.ndarray
    w_mean: float
    w_sd: np.ndarray
    d_mean: np.ndarray
    d_sd: np.ndarray


def single_kernel_coefficients(cache: MomentCache, cfg: ScanConfig) -> SingleKernelCoefficients:
    cfg.validate(cache.n)
    ts = cfg.ts.astype(float)
    wa, wb = w_coeffs(cache.n, ts)
    da, db = d_coeffs(cache.n, ts)
    cab = cov_alpha_beta(cache, 0, 0)
    w_var = wa * wa * cov_alpha_alpha(cache, 0, 0, ts) + 2 * wa * wb * cab \
        + wb * wb * cov_beta_beta(cache, 0, 0, ts)
    d_var = da * da * cov_alpha_alpha(cache, 0, 0, ts) + 2 * da * db * cab \
        + db * db * cov_beta_beta(cache, 0, 0, ts)
    floor = cache.var_floor(0)
    for var, label in ((w_var, "var(W)"), (d_var, "var(D)")):
        if np.any(var <= floor):
            t_bad = int(cfg.ts[np.argmax(var <= floor)])
            raise DegeneracyError(
                f"single-kernel statistic undefined at t={t_bad}: {label} = 0",
                t=t_bad, condition=label,
            )
    kb = cache.kbar[0]
    return SingleKernelCoefficients(
        ts=cfg.ts, wa=wa, wb=wb, da=da, db=db,
        w_mean=float(kb), w_sd=np.sqrt(w_var),
        d_mean=(da + db) * kb, d_sd=np.sqrt(d_var),
    )


def single_kernel_s(coef: SingleKernelCoefficients, alpha, beta) -> np.ndarray:
    """Z_W^2 + Z_D^2; W and D are exactly uncorrelated under the null."""
    w = coef.wa * alpha + coef.wb * beta
    d = coef.da * alpha + coef.db * beta
    zw = (w - coef.w_mean) / coef.w_sd
    zd = (d - coef.d_mean) / coef.d_sd
    return zw ** 2 + zd ** 2
