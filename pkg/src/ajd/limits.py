"""Ergodic averages, batch means, the closed-form limits ``v`` and ``Sigma``,
and empirical central-limit and convergence diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ClassificationError, UnstableMatrixError
from .model import effective_matrix, require_admissible
from .simulate import DEFAULT_SEED, _map, simulate_at_times, simulate_path
from .stability import EXP_ERGODIC, STABILITY_TOL, classify, max_real_eigenvalue

# ---------------------------------------------------------------------------
# h registry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HFunction:
    """Observable ``h`` from the registry; ``order`` is its polynomial growth."""

    name: str
    kind: str
    params: tuple = ()
    order: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return x
        if self.kind == "power":
            coord, expo = self.params
            return x[..., int(coord)] ** expo
        lower, upper = (np.asarray(p, dtype=float) for p in self.params)
        inside = np.all((x >= lower) & (x <= upper), axis=-1)
        return inside.astype(float)

    def output_dim(self, d):
        return d if self.kind == "identity" else 1


def identity():
    return HFunction("identity", "identity", (), 1.0)


def power(coord, exponent):
    return HFunction(f"power:{coord}:{exponent:g}", "power", (int(coord), float(exponent)),
                     abs(float(exponent)))


def box(lower, upper):
    lower = tuple(float(v) for v in np.atleast_1d(lower))
    upper = tuple(float(v) for v in np.atleast_1d(upper))
    name = "box:" + ",".join(f"{v:g}" for v in lower) + ":" + ",".join(f"{v:g}" for v in upper)
    return HFunction(name, "box", (lower, upper), 0.0)


def parse_h(text):
    """``identity``, ``power:<coord>:<exponent>`` or ``box:<lo,..>:<hi,..>``."""
    if isinstance(text, HFunction):
        return text
    parts = str(text).split(":")
    try:
        if parts[0] == "identity" and len(parts) == 1:
            return identity()
        if parts[0] == "power" and len(parts) == 3:
            return power(int(parts[1]), float(parts[2]))
        if parts[0] == "box" and len(parts) == 3:
            return box([float(v) for v in parts[1].split(",")],
                       [float(v) for v in parts[2].split(",")])
    except ValueError:
        pass
    raise ValueError(f"unknown observable {text!r}")


def _h_values(h, states):
    vals = h(states)
    return vals.reshape(len(states), -1)


# ---------------------------------------------------------------------------
# averages
# ---------------------------------------------------------------------------


def cumulative_integral(path, h=None):
    """``(times, int_0^t h(X(s)) ds)`` at every recorded epoch.

    Each segment is integrated by the trapezoid rule between the state just
    after its left epoch and the left limit at its right epoch, so jumps are
    handled exactly.
    """
    h = identity() if h is None else parse_h(h)
    left = _h_values(h, path.states)
    right = _h_values(h, path.left_limits())
    dt = np.diff(path.times)[:, None]
    seg = 0.5 * (left[:-1] + right[1:]) * dt
    cum = np.vstack([np.zeros((1, left.shape[1])), np.cumsum(seg, axis=0)])
    return path.times, cum


def time_average(path, h=None):
    """``(1/T) int_0^T h(X(s)) ds`` over the path's horizon."""
    h = identity() if h is None else parse_h(h)
    if len(path.times) == 1 or path.times[-1] == 0:
        return _h_values(h, path.states[:1])[0]
    times, cum = cumulative_integral(path, h)
    return cum[-1] / times[-1]


def skeleton_average(skel, h=None):
    """``(1/n) sum_{i=1..n} h(X(i delta))``."""
    h = identity() if h is None else parse_h(h)
    vals = _h_values(h, skel.states)
    return vals[0] if len(vals) == 1 else vals[1:].mean(axis=0)


def default_batches(n):
    return int(min(np.floor(np.sqrt(n)), 200))


def batch_means_variance(series, nbatches=None):
    """Batch-means estimate of the asymptotic variance matrix of ``series``.

    The first ``nbatches * L`` points are split into ``nbatches`` blocks of
    length ``L = n // nbatches``; the estimate is
    ``L / (nbatches - 1) * sum_j (m_j - m)(m_j - m)^T``.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = len(x)
    nb = default_batches(n) if nbatches is None else int(nbatches)
    if nb < 2 or n < 10 * nb:
        raise ValueError(f"batch means needs at least 10 points per batch ({n} points, {nb} batches)")
    L = n // nb
    means = x[: nb * L].reshape(nb, L, -1).mean(axis=1)
    dev = means - means.mean(axis=0)
    return L * dev.T @ dev / (nb - 1)


@dataclass
class ErgodicReport:
    h: str
    average: np.ndarray
    horizon: float
    batch_count: int
    bm_variance: np.ndarray
    ci_halfwidth: np.ndarray
    target: np.ndarray | None = None
    zscores: np.ndarray | None = None
    within_ci: bool | None = None
    kind: str = "time"

    def to_dict(self):
        def arr(v):
            return None if v is None else np.asarray(v).tolist()
        return {
            "h": self.h,
            "kind": self.kind,
            "average": arr(self.average),
            "horizon": self.horizon,
            "batch_count": self.batch_count,
            "bm_variance": arr(self.bm_variance),
            "ci_halfwidth": arr(self.ci_halfwidth),
            "target": arr(self.target),
            "zscores": arr(self.zscores),
            "within_ci": self.within_ci,
        }


def _finish(h, avg, horizon, nb, var, scale, target, kind):
    half = stats.t.ppf(0.975, nb - 1) * np.sqrt(np.clip(np.diag(var), 0.0, None) / scale)
    z = within = None
    if target is not None:
        target = np.broadcast_to(np.asarray(target, dtype=float), avg.shape).copy()
        se = np.sqrt(np.clip(np.diag(var), 0.0, None) / scale)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, (avg - target) / se, 0.0)
        within = bool(np.all(np.abs(avg - target) <= half))
    return ErgodicReport(h.name, avg, horizon, nb, var, half, target, z, within, kind)


def time_ergodic_report(path, h=None, target=None, nbatches=None):
    """Time average with a batch-means 95% confidence interval.

    Batches are consecutive time windows of equal length ``ell``; the
    variance estimate is ``ell / (nb - 1) * sum_j (m_j - m)^2`` with
    ``m_j`` the window averages.
    """
    h = identity() if h is None else parse_h(h)
    times, cum = cumulative_integral(path, h)
    T = times[-1]
    grid = times[~path.is_jump]
    nb = default_batches(len(grid)) if nbatches is None else int(nbatches)
    if nb < 2 or len(grid) < 10 * nb:
        raise ValueError("too few recorded epochs for the requested number of batches")
    edges = np.linspace(0.0, T, nb + 1)
    cum_edges = np.column_stack([np.interp(edges, times, cum[:, k]) for k in range(cum.shape[1])])
    ell = T / nb
    means = np.diff(cum_edges, axis=0) / ell
    dev = means - means.mean(axis=0)
    var = ell * dev.T @ dev / (nb - 1)
    return _finish(h, cum[-1] / T, float(T), nb, var, T, target, "time")


def skeleton_ergodic_report(skel, h=None, target=None, nbatches=None):
    """Skeleton average with a batch-means 95% confidence interval."""
    h = identity() if h is None else parse_h(h)
    series = _h_values(h, skel.states[1:])
    n = len(series)
    nb = default_batches(n) if nbatches is None else int(nbatches)
    var = batch_means_variance(series, nb)
    return _finish(h, series.mean(axis=0), n * skel.delta, nb, var, n, target, "skeleton")


# ---------------------------------------------------------------------------
# closed-form limits
# ---------------------------------------------------------------------------


def _stable_effective(spec):
    M = effective_matrix(spec)
    if max_real_eigenvalue(M) >= -STABILITY_TOL:
        raise UnstableMatrixError("beta + E(Z) kappa^T is not stable")
    return M


def corollary_mean(spec):
    """Stationary mean ``v = -(beta + E(Z) kappa^T)^{-1} (b + lambda0 E Z)``."""
    M = _stable_effective(spec)
    rhs = spec.b + spec.lambda0 * spec.jumps.mean
    v = np.linalg.solve(M, -rhs)
    res = np.linalg.norm(M @ v + rhs) / max(1.0, np.linalg.norm(rhs))
    if res > 1e-12:
        v = v + np.linalg.solve(M, -(M @ v + rhs))
    return v


def corollary_cov(spec):
    """Asymptotic covariance of the time average of ``X``.

    ``Sigma = A (a + lambda0 E ZZ^T) A^T + sum_i v_i A (alpha_i + kappa_i E ZZ^T) A^T``
    with ``A = -(beta + E(Z) kappa^T)^{-1}``.  ``A x`` solves the Poisson
    equation for the centred identity, which is where this ``A`` comes from.
    """
    M = _stable_effective(spec)
    A = -np.linalg.inv(M)
    v = corollary_mean(spec)
    EZZ = spec.jumps.second_moment
    G = spec.a + spec.lambda0 * EZZ
    for i in range(spec.d):
        G = G + v[i] * (spec.alpha[i] + spec.kappa[i] * EZZ)
    S = A @ G @ A.T
    return 0.5 * (S + S.T)


# ---------------------------------------------------------------------------
# FCLT and convergence diagnostics
# ---------------------------------------------------------------------------


@dataclass
class FcltReport:
    h: str
    replicates: int
    horizon: float
    endpoint: np.ndarray
    quantile_correlation: float
    block_lengths: np.ndarray
    block_variances: np.ndarray
    slope: float
    sigma2: float
    center: float

    def to_dict(self):
        return {
            "h": self.h,
            "replicates": self.replicates,
            "horizon": self.horizon,
            "quantile_correlation": self.quantile_correlation,
            "block_lengths": self.block_lengths.tolist(),
            "block_variances": self.block_variances.tolist(),
            "slope": self.slope,
            "sigma2": self.sigma2,
            "center": self.center,
            "endpoint": self.endpoint.tolist(),
        }


def quantile_correlation(sample):
    """Correlation of the ordered sample with standard normal quantiles, in [0, 1]."""
    (_, _), (_, _, r) = stats.probplot(np.asarray(sample, dtype=float), dist="norm")
    return float(np.clip(r, 0.0, 1.0))


def fclt_diagnostic(spec, h=None, nblocks=4, horizon=400.0, replicates=500,
                    dt=1e-2, seed=DEFAULT_SEED, coord=0, threads=None):
    """Normality and variance-scaling check of the centred integral functional.

    Each replicate starts at ``v`` and yields ``S = int_0^horizon (h(X) - c) ds``
    (coordinate ``coord`` of ``h``) where ``c`` is ``v_coord`` for the
    identity and the pooled mean otherwise.  ``S / sqrt(horizon sigma2)``
    is compared with N(0, 1) through the quantile correlation; ``sigma2`` is
    ``Sigma[coord, coord]`` for the identity and the pooled block estimate
    otherwise.  For block lengths ``horizon / 2^j``, ``j < nblocks``, the
    variance of disjoint block integrals is regressed on block length in
    log-log scale.
    """
    report = classify(spec)
    if report.classification != EXP_ERGODIC:
        raise ClassificationError(f"FCLT diagnostic needs EXP_ERGODIC, got {report.label}")
    h = identity() if h is None else parse_h(h)
    v = corollary_mean(spec)
    x0 = v.copy()
    x0[: spec.m] = np.maximum(x0[: spec.m], 0.0)
    nfine = 2 ** (nblocks - 1)
    edges = np.linspace(0.0, horizon, nfine + 1)

    def one(i):
        path = simulate_path(spec, x0, horizon, dt, seed, i)
        times, cum = cumulative_integral(path, h)
        return np.interp(edges, times, cum[:, coord])

    cums = np.array(_map(one, range(int(replicates)), threads))
    if h.kind == "identity":
        center = float(v[coord])
    else:
        center = float(cums[:, -1].mean() / horizon)
    cums = cums - center * edges[None, :]

    lengths, variances = [], []
    for j in range(nblocks):
        step = 2 ** (nblocks - 1 - j)
        blocks = np.diff(cums[:, ::step], axis=1).ravel()
        lengths.append(horizon / 2**j)
        variances.append(blocks.var(ddof=1))
    lengths, variances = np.array(lengths), np.array(variances)
    slope = float(np.polyfit(np.log(lengths), np.log(variances), 1)[0])

    sigma2 = float(corollary_cov(spec)[coord, coord]) if h.kind == "identity" \
        else float(variances[0] / horizon)
    endpoint = cums[:, -1] / np.sqrt(horizon * sigma2)
    return FcltReport(h.name, int(replicates), float(horizon), endpoint,
                      quantile_correlation(endpoint), lengths, variances, slope, sigma2, center)


@dataclass
class TvProxyReport:
    times: np.ndarray
    distances: np.ndarray
    slope: float
    intercept: float
    r_squared: float
    monotone: bool

    def to_dict(self):
        return {
            "times": self.times.tolist(),
            "distances": self.distances.tolist(),
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "monotone": self.monotone,
        }


def tv_proxy_decay(spec, xa, xb, times, npaths=20000, dt=1e-2, seed=DEFAULT_SEED,
                   coord=0, levels=None, threads=None):
    """Distance between the laws of ``X(t)`` started at ``xa`` and ``xb``.

    The distance is the largest gap between the two empirical CDFs of
    coordinate ``coord`` over a fixed grid: quantiles ``levels`` of the pooled
    sample at the last time.  ``log`` distance is fitted linearly in ``t``.
    """
    require_admissible(spec)
    times = np.asarray(times, dtype=float)
    levels = np.linspace(0.05, 0.95, 19) if levels is None else np.asarray(levels, dtype=float)
    A = simulate_at_times(spec, xa, times, npaths, dt, seed, threads)[..., coord]
    B = simulate_at_times(spec, xb, times, npaths, dt, seed + 1, threads)[..., coord]
    grid = np.quantile(np.concatenate([A[:, -1], B[:, -1]]), levels)
    dist = np.empty(len(times))
    for k in range(len(times)):
        Fa = np.searchsorted(np.sort(A[:, k]), grid, side="right") / len(A)
        Fb = np.searchsorted(np.sort(B[:, k]), grid, side="right") / len(B)
        dist[k] = np.max(np.abs(Fa - Fb))
    logd = np.log(np.maximum(dist, 1e-300))
    fit = stats.linregress(times, logd)
    monotone = bool(np.all(np.diff(dist) < 0))
    return TvProxyReport(times, dist, float(fit.slope), float(fit.intercept),
                         float(fit.rvalue**2), monotone)


__all__ = [
    "HFunction", "identity", "power", "box", "parse_h",
    "cumulative_integral", "time_average", "skeleton_average",
    "batch_means_variance", "default_batches",
    "ErgodicReport", "time_ergodic_report", "skeleton_ergodic_report",
    "corollary_mean", "corollary_cov",
    "FcltReport", "fclt_diagnostic", "quantile_correlation",
    "TvProxyReport", "tv_proxy_decay",
]
