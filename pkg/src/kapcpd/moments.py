"""Exact permutation-null moments of the alpha/beta block means and of the
derived W/D processes, at one time point and across two time points.

Everything here reduces to four scalars per kernel pair (kbar, A, B, C):
joint placement probabilities of the index patterns (shared pair, one shared
index, all distinct) carry all the dependence on t, so each moment evaluates
in O(1) after an O(n^2) cache build.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, ParameterError
from .kernels import KernelMatrix

PROCESSES = ("D1", "D2", "W1R", "W2R")

# variances below VAR_FLOOR_FACTOR * kbar^2 are treated as exactly zero
VAR_FLOOR_FACTOR = 1e-14


@dataclass(frozen=True)
class MomentCache:
    """Kernel-pair scalars: kbar_a, A_ab, B_ab, C_ab for a,b in {1,2}.

    A_ab sums products over a shared index pair, B_ab over one shared index,
    C_ab over four distinct indices; all three matrices are symmetric.
    """

    n: int
    kbar: np.ndarray  # (2,)
    a: np.ndarray  # (2,2)
    b: np.ndarray  # (2,2)
    c: np.ndarray  # (2,2)

    def var_floor(self, x: int) -> float:
        return VAR_FLOOR_FACTOR * self.kbar[x] ** 2


def build_cache(k1: KernelMatrix, k2: KernelMatrix) -> MomentCache:
    """One O(n^2) pass per kernel pair; B and C come from row sums and totals."""
    if k1.n != k2.n:
        raise ParameterError(f"kernel sizes differ: {k1.n} vs {k2.n}")
    n = k1.n
    if n < 4:
        raise ParameterError(f"moments need a sequence of length >= 4, got {n}")
    mats = []
    for k in (k1, k2):
        m = k.entries.copy()
        np.fill_diagonal(m, 0.0)
        mats.append(m)
    totals = np.array([m.sum() for m in mats])
    rows = [m.sum(axis=1) for m in mats]
    kbar = totals / (n * (n - 1))
    a = np.empty((2, 2))
    b = np.empty((2, 2))
    c = np.empty((2, 2))
    for x in range(2):
        for y in range(x, 2):
            a[x, y] = a[y, x] = (mats[x] * mats[y]).sum()
            b[x, y] = b[y, x] = (rows[x] * rows[y]).sum() - a[x, y]
            c[x, y] = c[y, x] = totals[x] * totals[y] - 2.0 * a[x, y] - 4.0 * b[x, y]
    return MomentCache(n=n, kbar=kbar, a=a, b=b, c=c)


# ---------------------------------------------------------------------------
# Same-time covariances (Lemma-1 closed forms); t may be a scalar or array.


def cov_alpha_alpha(cache: MomentCache, x: int, y: int, t):
    n = cache.n
    t = np.asarray(t, dtype=float)
    num = (
        2.0 * cache.a[x, y]
        + 4.0 * cache.b[x, y] * (t - 2.0) / (n - 2.0)
        + cache.c[x, y] * (t - 2.0) * (t - 3.0) / ((n - 2.0) * (n - 3.0))
    )
    return num / (n * (n - 1.0) * t * (t - 1.0)) - cache.kbar[x] * cache.kbar[y]


def cov_beta_beta(cache: MomentCache, x: int, y: int, t):
    n = cache.n
    t = np.asarray(t, dtype=float)
    m = n - t
    num = (
        2.0 * cache.a[x, y]
        + 4.0 * cache.b[x, y] * (m - 2.0) / (n - 2.0)
        + cache.c[x, y] * (m - 2.0) * (m - 3.0) / ((n - 2.0) * (n - 3.0))
    )
    return num / (n * (n - 1.0) * m * (m - 1.0)) - cache.kbar[x] * cache.kbar[y]


def cov_alpha_beta(cache: MomentCache, x: int, y: int):
    n = cache.n
    return cache.c[x, y] / (n * (n - 1.0) * (n - 2.0) * (n - 3.0)) - cache.kbar[x] * cache.kbar[y]


def combo_cov(cache, x, y, xa, xb, ya, yb, t):
    """cov(xa*alpha_x + xb*beta_x, ya*alpha_y + yb*beta_y) at one time t."""
    cab = cov_alpha_beta(cache, x, y)
    return (
        xa * ya * cov_alpha_alpha(cache, x, y, t)
        + (xa * yb + xb * ya) * cab
        + xb * yb * cov_beta_beta(cache, x, y, t)
    )


def w_coeffs(n: int, t, r: float = 1.0):
    t = np.asarray(t, dtype=float)
    return r * t / n, (n - t) / n


def d_coeffs(n: int, t):
    t = np.asarray(t, dtype=float)
    return t * (t - 1.0) / (n * (n - 1.0)), -(n - t) * (n - t - 1.0) / (n * (n - 1.0))


@dataclass(frozen=True)
class TimeMoments:
    """Permutation-null mean and covariance structure at a single t."""

    t: int
    mean: np.ndarray  # E[alpha1, beta1, alpha2, beta2]
    sigma: np.ndarray  # 4x4 covariance in the same order
    w_cov: np.ndarray  # 2x2 cov(W_a, W_b)
    d_cov: np.ndarray  # 2x2 cov(D_a, D_b)
    wd_cross: np.ndarray  # 2x2 cov(W_a, D_b), zero in exact arithmetic
    w_mean: np.ndarray  # (2,)
    d_mean: np.ndarray  # (2,)


def time_moments(cache: MomentCache, t: int) -> TimeMoments:
    n = cache.n
    if not 2 <= t <= n - 2:
        raise ParameterError(f"t must satisfy 2 <= t <= n-2, got t={t}, n={n}")
    kb = cache.kbar
    mean = np.array([kb[0], kb[0], kb[1], kb[1]])
    sigma = np.empty((4, 4))
    for x in range(2):
        for y in range(2):
            cab = cov_alpha_beta(cache, x, y)
            sigma[2 * x, 2 * y] = cov_alpha_alpha(cache, x, y, t)
            sigma[2 * x, 2 * y + 1] = cab
            sigma[2 * x + 1, 2 * y] = cab
            sigma[2 * x + 1, 2 * y + 1] = cov_beta_beta(cache, x, y, t)
    wa, wb = w_coeffs(n, t)
    da, db = d_coeffs(n, t)
    w_cov = np.empty((2, 2))
    d_cov = np.empty((2, 2))
    wd = np.empty((2, 2))
    for x in range(2):
        for y in range(2):
            w_cov[x, y] = combo_cov(cache, x, y, wa, wb, wa, wb, t)
            d_cov[x, y] = combo_cov(cache, x, y, da, db, da, db, t)
            wd[x, y] = combo_cov(cache, x, y, wa, wb, da, db, t)
    w_mean = (wa + wb) * kb
    d_mean = (da + db) * kb
    return TimeMoments(
        t=t, mean=mean, sigma=sigma, w_cov=w_cov, d_cov=d_cov,
        wd_cross=wd, w_mean=w_mean, d_mean=d_mean,
    )


# ---------------------------------------------------------------------------
# Cross-time covariances. For s <= t the placement probabilities are:
#   alpha(s), alpha(t): both pairs in the first s resp. t positions; the
#       shared-index patterns force the stricter cutoff s on shared indices.
#   beta(s), alpha(t): shared indices land in the middle band (s, t].
# All were validated against exhaustive permutation enumeration.


def _cross_alpha_alpha(cache, x, y, s, t):
    n = cache.n
    t = np.asarray(t, dtype=float)
    num = (
        2.0 * cache.a[x, y]
        + 4.0 * cache.b[x, y] * (t - 2.0) / (n - 2.0)
        + cache.c[x, y] * (t - 2.0) * (t - 3.0) / ((n - 2.0) * (n - 3.0))
    )
    return num / (n * (n - 1.0) * t * (t - 1.0)) - cache.kbar[x] * cache.kbar[y]


def _cross_beta_beta(cache, x, y, s, t):
    n = cache.n
    s = np.asarray(s, dtype=float)
    m = n - s
    num = (
        2.0 * cache.a[x, y]
        + 4.0 * cache.b[x, y] * (m - 2.0) / (n - 2.0)
        + cache.c[x, y] * (m - 2.0) * (m - 3.0) / ((n - 2.0) * (n - 3.0))
    )
    return num / (n * (n - 1.0) * m * (m - 1.0)) - cache.kbar[x] * cache.kbar[y]


def _cross_beta_alpha(cache, x, y, s, t):
    """cov(beta_x(s), alpha_y(t)) for s <= t."""
    n = cache.n
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    g = t - s  # width of the middle band
    p_same = g * (g - 1.0) / (n * (n - 1.0))
    p_one = g * (s * (n - s - 1.0) + (g - 1.0) * (n - s - 2.0)) / (n * (n - 1.0) * (n - 2.0))
    p_dis = (
        s * (s - 1.0) * (n - s) * (n - s - 1.0)
        + 2.0 * s * g * (n - s - 1.0) * (n - s - 2.0)
        + g * (g - 1.0) * (n - s - 2.0) * (n - s - 3.0)
    ) / (n * (n - 1.0) * (n - 2.0) * (n - 3.0))
    num = 2.0 * cache.a[x, y] * p_same + 4.0 * cache.b[x, y] * p_one + cache.c[x, y] * p_dis
    return num / ((n - s) * (n - s - 1.0) * t * (t - 1.0)) - cache.kbar[x] * cache.kbar[y]


def cross_time_cov(cache: MomentCache, x: int, s, t, *, kind: str, r: float = 1.0):
    """cov(X_x(s), X_x(t)) for the D process (kind='d') or the r-weighted W
    process (kind='w'); s and t may be arrays with s <= t elementwise."""
    n = cache.n
    if kind == "w":
        sa, sb = w_coeffs(n, s, r)
        ta, tb = w_coeffs(n, t, r)
    else:
        sa, sb = d_coeffs(n, s)
        ta, tb = d_coeffs(n, t)
    caa = _cross_alpha_alpha(cache, x, x, s, t)
    cbb = _cross_beta_beta(cache, x, x, s, t)
    cab = cov_alpha_beta(cache, x, x)
    cba = _cross_beta_alpha(cache, x, x, s, t)
    return sa * ta * caa + sa * tb * cab + sb * ta * cba + sb * tb * cbb


def _parse_process(process: str, r: float | None):
    if process not in PROCESSES:
        raise ParameterError(f"process must be one of {PROCESSES}, got {process!r}")
    x = 0 if process in ("D1", "W1R") else 1
    if process.startswith("W"):
        if r is None:
            raise ParameterError("W processes need the weight r")
        if r == 1.0:
            raise ParameterError("W processes require r != 1")
        return x, "w", float(r)
    return x, "d", 1.0


def cross_time_correlation(
    cache: MomentCache, process: str, r: float | None, s: int, t: int
) -> float:
    """Exact permutation-null correlation of a standardized process at two
    times, 2 <= s <= t <= n-2."""
    x, kind, rr = _parse_process(process, r)
    n = cache.n
    if not (2 <= s <= t <= n - 2):
        raise ParameterError(f"need 2 <= s <= t <= n-2, got s={s}, t={t}, n={n}")
    var_s = cross_time_cov(cache, x, s, s, kind=kind, r=rr)
    var_t = cross_time_cov(cache, x, t, t, kind=kind, r=rr)
    floor = cache.var_floor(x)
    if var_s <= floor or var_t <= floor:
        raise DegeneracyError(
            f"{process} variance vanishes under the permutation null", t=s if var_s <= floor else t,
            condition=f"var({process})",
        )
    cov = cross_time_cov(cache, x, s, t, kind=kind, r=rr)
    return float(cov / np.sqrt(var_s * var_t))


def finite_sample_slope(cache: MomentCache, process: str, r: float | None, t: int) -> float:
    """Forward-difference decay rate of the correlation off the diagonal:
    rho(t,t) - rho(t,t+1) per unit step."""
    if not 2 <= t <= cache.n - 3:
        raise ParameterError(f"slope needs 2 <= t <= n-3, got t={t}, n={cache.n}")
    return 1.0 - cross_time_correlation(cache, process, r, t, t + 1)


def slope_profile(cache: MomentCache, process: str, r: float | None, ts: np.ndarray) -> np.ndarray:
    """Vectorized finite_sample_slope over integer times ts (all <= n-3)."""
    x, kind, rr = _parse_process(process, r)
    ts = np.asarray(ts)
    if ts.size == 0:
        return np.zeros(0)
    if ts.min() < 2 or ts.max() > cache.n - 3:
        raise ParameterError("slope profile needs 2 <= t <= n-3 for every t")
    var_s = cross_time_cov(cache, x, ts, ts, kind=kind, r=rr)
    var_t = cross_time_cov(cache, x, ts + 1, ts + 1, kind=kind, r=rr)
    floor = cache.var_floor(x)
    bad = (var_s <= floor) | (var_t <= floor)
    if np.any(bad):
        t_bad = int(ts[np.argmax(bad)])
        raise DegeneracyError(
            f"{process} variance vanishes under the permutation null",
            t=t_bad, condition=f"var({process})",
        )
    cov = cross_time_cov(cache, x, ts, ts + 1, kind=kind, r=rr)
    return 1.0 - cov / np.sqrt(var_s * var_t)
