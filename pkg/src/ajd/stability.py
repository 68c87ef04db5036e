"""Stability classification, Lyapunov matrices and generator probes.

The generator of the AJD acts on a smooth ``g`` as ``A g = G g + L g`` with

    G g(x) = grad g . (b + beta x) + tr(hess g (a + sum_k x_k alpha_k)) / 2
    L g(x) = (lambda0 + kappa^T x) E[g(x + Z) - g(x)]

Three probe families are supported: ``LOG`` (``log(1 + x^T H x)``),
``POWER`` (``(1 + x^T H x)^(p/2)``) and, in one dimension, ``EXP_NEG``
(``1 - exp(-eps x)``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ClassificationError, UnstableMatrixError
from .model import (
    check_state,
    diffusion_matrix,
    drift,
    effective_matrix,
    intensity,
    jump_expectation,
    require_admissible,
)

STABILITY_TOL = 1e-10
LYAPUNOV_TOL = 1e-9

ERGODIC = "ERGODIC"
EXP_ERGODIC = "EXP_ERGODIC"
TRANSIENT_1D = "TRANSIENT_1D"
INCONCLUSIVE = "INCONCLUSIVE"


def max_real_eigenvalue(M):
    """Largest real part among the eigenvalues of a square matrix."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    return float(np.max(np.linalg.eigvals(M).real))


def solve_lyapunov(M):
    """Symmetric ``H`` with ``M^T H + H M = -I`` for a stable ``M``.

    Solved as the Kronecker-sum linear system ``(M^T (x) I + I (x) M^T) vec H
    = -vec I`` followed by one step of iterative refinement.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if max_real_eigenvalue(M) >= -STABILITY_TOL:
        raise UnstableMatrixError("matrix is not stable (an eigenvalue has real part >= 0)")
    d = M.shape[0]
    eye = np.eye(d)
    K = np.kron(M.T, eye) + np.kron(eye, M.T)
    rhs = -eye.ravel()
    h = np.linalg.solve(K, rhs)
    h += np.linalg.solve(K, rhs - K @ h)
    H = h.reshape(d, d)
    H = 0.5 * (H + H.T)
    res = lyapunov_residual(M, H)
    if res > LYAPUNOV_TOL:
        raise UnstableMatrixError(f"Lyapunov solve inaccurate (residual {res:.2e})")
    return H


def lyapunov_residual(M, H):
    M = np.atleast_2d(M)
    return float(np.linalg.norm(M.T @ H + H @ M + np.eye(M.shape[0]), "fro"))


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


@dataclass
class StabilityReport:
    eig_beta_max_re: float
    eig_effective_max_re: float
    classification: str
    p: float | None = None
    regimes: list = field(default_factory=list)
    H: np.ndarray | None = None
    notes: str = ""

    @property
    def label(self):
        if self.classification == EXP_ERGODIC:
            return f"EXP_ERGODIC({self.p:g})"
        return self.classification

    def to_dict(self):
        return {
            "eig_beta_max_re": self.eig_beta_max_re,
            "eig_effective_max_re": self.eig_effective_max_re,
            "classification": self.classification,
            "label": self.label,
            "p": self.p,
            "regimes": list(self.regimes),
            "H": None if self.H is None else self.H.tolist(),
            "notes": self.notes,
        }


def classify(spec, p=2.0):
    """Classify an admissible spec.

    ``kappa = 0`` with ``beta`` stable gives ergodicity and exponential
    ergodicity with moment order ``p``; ``kappa != 0`` with
    ``beta + E(Z) kappa^T`` stable gives exponential ergodicity of order
    ``max(p, 1)``; a 1-D volatility factor with ``beta + E(Z) kappa > 0`` is
    transient.  Everything else, including spectra within ``1e-10`` of the
    imaginary axis, is inconclusive.
    """
    require_admissible(spec)
    if not p > 0:
        raise ValueError("p must be positive")
    eb = max_real_eigenvalue(spec.beta)
    M = effective_matrix(spec)
    ee = max_real_eigenvalue(M)
    no_kappa = not np.any(spec.kappa != 0)
    if no_kappa and eb < -STABILITY_TOL:
        return StabilityReport(eb, ee, EXP_ERGODIC, float(p), [ERGODIC, f"EXP_ERGODIC({p:g})"],
                               solve_lyapunov(spec.beta), "beta is stable and kappa = 0")
    if not no_kappa and ee < -STABILITY_TOL:
        q = max(float(p), 1.0)
        return StabilityReport(eb, ee, EXP_ERGODIC, q, [ERGODIC, f"EXP_ERGODIC({q:g})"],
                               solve_lyapunov(M), "beta + E(Z) kappa^T is stable")
    if spec.d == 1 and spec.m == 1 and ee > STABILITY_TOL:
        return StabilityReport(eb, ee, TRANSIENT_1D, None, [TRANSIENT_1D], None,
                               "beta + E(Z) kappa > 0 for a 1-D volatility factor")
    if abs(ee) <= STABILITY_TOL or (no_kappa and abs(eb) <= STABILITY_TOL):
        note = "boundary case: spectrum within 1e-10 of the imaginary axis"
    else:
        note = "no sufficient condition applies"
    return StabilityReport(eb, ee, INCONCLUSIVE, None, [], None, note)


# ---------------------------------------------------------------------------
# generator probes
# ---------------------------------------------------------------------------

LOG = "LOG"
POWER = "POWER"
EXP_NEG = "EXP_NEG"


@dataclass(frozen=True)
class GeneratorProbe:
    """Test function for the generator: family, ``H`` and shape parameter."""

    family: str
    H: np.ndarray | None = None
    p: float = 2.0
    eps: float = 0.1

    def __post_init__(self):
        if self.family not in (LOG, POWER, EXP_NEG):
            raise ValueError(f"unknown probe family {self.family!r}")
        if self.H is not None:
            object.__setattr__(self, "H", np.atleast_2d(np.asarray(self.H, dtype=float)))

    def with_H(self, H):
        return GeneratorProbe(self.family, H, self.p, self.eps)

    def value(self, x):
        """``g`` at states of shape (..., d)."""
        x = np.asarray(x, dtype=float)
        if self.family == EXP_NEG:
            return 1.0 - np.exp(-self.eps * x[..., 0])
        q = np.einsum("...i,ij,...j->...", x, self.H, x)
        if self.family == LOG:
            return np.log1p(q)
        return (1.0 + q) ** (self.p / 2.0)

    def derivatives(self, x):
        """``(g, grad g, hess g)`` at a single state."""
        x = np.asarray(x, dtype=float)
        if self.family == EXP_NEG:
            e = np.exp(-self.eps * x[0])
            return 1.0 - e, np.array([self.eps * e]), np.array([[-self.eps**2 * e]])
        H = self.H
        Hx = H @ x
        q = float(x @ Hx)
        if self.family == LOG:
            g = np.log1p(q)
            grad = 2.0 * Hx / (1.0 + q)
            hess = (2.0 * (1.0 + q) * H - 4.0 * np.outer(Hx, Hx)) / (1.0 + q) ** 2
            return g, grad, hess
        p = self.p
        g = (1.0 + q) ** (p / 2.0)
        f = p * g / (1.0 + q)
        grad = f * Hx
        hess = f * (H + (p - 2.0) * np.outer(Hx, Hx) / (1.0 + q))
        return g, grad, hess


@dataclass
class GeneratorValue:
    G: float
    L: float
    A: float
    g: float
    se: float = 0.0


def generator_apply(spec, probe, x):
    """Evaluate ``G g``, ``L g`` and ``A g = G g + L g`` at state ``x``.

    The jump integral is exact for a point-mass law and uses Gauss quadrature
    (Monte Carlo beyond three random jump coordinates, with standard error
    ``se``) otherwise.
    """
    x = check_state(spec, np.atleast_1d(np.asarray(x, dtype=float)))
    if probe.family == EXP_NEG and spec.d != 1:
        raise ValueError("EXP_NEG probe is one-dimensional")
    if probe.H is None and probe.family != EXP_NEG:
        probe = probe.with_H(np.eye(spec.d))
    g, grad, hess = probe.derivatives(x)
    D = diffusion_matrix(spec, x)
    G = float(grad @ drift(spec, x) + 0.5 * np.sum(hess * D))
    lam = float(intensity(spec, x))
    L, se = 0.0, 0.0
    if lam != 0.0:
        if spec.jumps.is_degenerate:
            mean_inc = float(probe.value(x + spec.jumps.mean)) - g
        else:
            val, se = jump_expectation(spec.jumps, lambda Z: probe.value(x + Z) - g)
            mean_inc = float(val)
        L = lam * mean_inc
        se = abs(lam) * se
    return GeneratorValue(G, L, G + L, float(g), float(se))


# ---------------------------------------------------------------------------
# drift-inequality scan
# ---------------------------------------------------------------------------


@dataclass
class ScanReport:
    status: str
    k_star: float | None
    c: float | None
    violating_state: np.ndarray | None
    radii: np.ndarray
    directions: np.ndarray
    values: np.ndarray
    ratios: np.ndarray
    gamma_lower: float | None
    delta_lower: float | None
    delta_upper: float | None
    proof_bound: float | None
    family: str

    def to_dict(self):
        return {
            "status": self.status,
            "k_star": self.k_star,
            "c": self.c,
            "violating_state": None if self.violating_state is None else self.violating_state.tolist(),
            "gamma_lower": self.gamma_lower,
            "delta_lower": self.delta_lower,
            "delta_upper": self.delta_upper,
            "proof_bound": self.proof_bound,
            "family": self.family,
        }


def default_directions(spec):
    d, m = spec.d, spec.m
    dirs = [np.eye(d)[i] for i in range(d)]
    dirs += [-np.eye(d)[j] for j in range(m, d)]
    if d > 1:
        dirs.append(np.ones(d) / np.sqrt(d))
    return np.array(dirs)


def _default_H(spec, report):
    if report.H is not None:
        return report.H
    return np.eye(spec.d)


def lyapunov_scan(spec, probe=None, radii=None, directions=None):
    """Evaluate ``A g`` along rays ``r * e`` and locate the drift region.

    For ``LOG`` the criterion is ``A g(x) < 0``; for ``POWER`` and
    ``EXP_NEG`` it is ``A g(x) / g(x) < 0``.  ``k_star`` is the smallest
    sampled radius beyond which the criterion holds in every direction and
    ``c`` the margin (``-max A g`` or ``-max A g / g``) over that tail.  The
    scan FAILs when the criterion is violated at the largest radius.

    Diagnostics ``gamma_lower`` (smallest eigenvalue of ``-(H M + M^T H)``
    with ``M`` the relevant drift matrix) and ``delta_lower``,
    ``delta_upper`` (extreme eigenvalues of ``H``) are reported together
    with the asymptotic bounds ``-gamma/delta_upper`` (LOG) and
    ``-p gamma / (4 delta_upper)`` (POWER).
    """
    report = classify(spec, probe.p if probe is not None and probe.family == POWER else 2.0)
    if report.classification == INCONCLUSIVE:
        raise ClassificationError("lyapunov_scan needs a conclusive classification")
    if probe is None:
        probe = GeneratorProbe(LOG)
    if probe.H is None and probe.family != EXP_NEG:
        probe = probe.with_H(_default_H(spec, report))
    radii = np.arange(1.0, 101.0) if radii is None else np.sort(np.asarray(radii, dtype=float))
    dirs = default_directions(spec) if directions is None else np.atleast_2d(np.asarray(directions, float))
    if spec.m and np.any(dirs[:, : spec.m] < 0):
        raise ValueError("directions must have nonnegative volatility components")
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)

    vals = np.empty((len(radii), len(dirs)))
    ratios = np.empty_like(vals)
    for i, r in enumerate(radii):
        for j, e in enumerate(dirs):
            gv = generator_apply(spec, probe, r * e)
            vals[i, j] = gv.A
            ratios[i, j] = gv.A / gv.g if gv.g != 0 else np.inf
    crit = vals if probe.family == LOG else ratios
    worst = crit.max(axis=1)
    ok = worst < 0
    if not ok[-1]:
        j = int(np.argmax(crit[-1]))
        status, k_star, c, bad = "FAIL", None, None, radii[-1] * dirs[j]
    else:
        bad_idx = np.nonzero(~ok)[0]
        start = 0 if bad_idx.size == 0 else bad_idx[-1] + 1
        status, k_star, c, bad = "PASS", float(radii[start]), float(-worst[start:].max()), None

    gamma = dl = du = bound = None
    if probe.family != EXP_NEG:
        H = probe.H
        M = effective_matrix(spec)
        w = np.linalg.eigvalsh(H)
        dl, du = float(w[0]), float(w[-1])
        gamma = float(np.linalg.eigvalsh(-(H @ M + M.T @ H))[0])
        bound = -gamma / du if probe.family == LOG else -probe.p * gamma / (4.0 * du)
    return ScanReport(status, k_star, c, bad, radii, dirs, vals, ratios,
                      gamma, dl, du, bound, probe.family)


# ---------------------------------------------------------------------------
# one-dimensional transience
# ---------------------------------------------------------------------------


def transience_rate_1d(spec, eps):
    """``h(eps) = eps beta - eps^2 alpha / 2 + kappa (1 - E exp(-eps Z))``.

    ``h(0) = 0`` and ``h'(0) = beta + kappa E(Z)``, so a positive effective
    rate yields ``h(eps) > 0`` for small ``eps``.
    """
    if spec.d != 1 or spec.m != 1:
        raise ValueError("transience_rate_1d needs d = m = 1")
    if not eps > 0:
        raise ValueError("eps must be positive")
    beta = spec.beta[0, 0]
    alpha = spec.alpha[0, 0, 0]
    kappa = spec.kappa[0]
    laplace = spec.jumps.transform(np.array([-eps], dtype=complex)).real
    return float(eps * beta - 0.5 * eps**2 * alpha + kappa * (1.0 - laplace))


def find_transience_epsilon(spec, grid=None):
    """Grid search over ``(0, 1]``; returns ``(eps, h(eps))`` maximising h, or None if h <= 0."""
    grid = np.linspace(1e-3, 1.0, 1000) if grid is None else np.asarray(grid, dtype=float)
    h = np.array([transience_rate_1d(spec, e) for e in grid])
    k = int(np.argmax(h))
    if h[k] <= 0:
        return None
    return float(grid[k]), float(h[k])
