"""Estimating equations from the conditional characteristic function.

For a skeleton ``X(0), X(delta), ...`` and frequencies ``u_k`` the residual

    g_k(x, y) = exp(u_k^T y) - exp(phi(delta, u_k) + psi(delta, u_k)^T x)

has conditional mean zero at the true parameters.  The GMM objective is
``gbar^T W gbar`` with ``gbar`` the stacked real and imaginary parts of the
sample mean of ``g``.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import AJDError
from .model import validate_spec
from .riccati import transform_at
from .simulate import DEFAULT_SEED, SkeletonSample
from .stability import EXP_ERGODIC, classify

INADMISSIBLE = np.inf


@dataclass(frozen=True)
class MomentGrid:
    """Purely imaginary frequencies ``u_points`` (K, d) and sampling interval."""

    u_points: np.ndarray
    delta: float

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u_points, dtype=complex))
        if u.size == 0:
            raise ValueError("moment grid needs at least one frequency")
        if len({tuple(row) for row in u}) != len(u):
            raise ValueError("moment grid frequencies must be distinct")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        object.__setattr__(self, "u_points", u)
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def size(self):
        return len(self.u_points)


def default_grid(d, delta, scales=(0.5, 1.0, 2.0)):
    """``u = s i e_j`` for every coordinate ``j`` and ``s`` in ``scales``."""
    pts = [1j * s * np.eye(d)[j] for j in range(d) for s in scales]
    return MomentGrid(np.array(pts), delta)


def _transforms(spec, grid):
    out = [transform_at(spec, u, grid.delta) for u in grid.u_points]
    phi = np.array([p for p, _ in out])
    psi = np.array([q for _, q in out])
    return phi, psi


def moment_residual(spec, grid, x, y):
    """Residuals ``g_k(x, y)``; shape (K,) for single states, (n, K) for arrays."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    phi, psi = _transforms(spec, grid)
    res = np.exp(y @ grid.u_points.T) - np.exp(phi + x @ psi.T)
    return res


def _as_transitions(data):
    if isinstance(data, SkeletonSample):
        states = data.states
    else:
        states = np.asarray(data, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
    if len(states) < 2:
        raise ValueError("need at least one transition")
    return states[:-1], states[1:]


class _Data:
    """Transitions with the parameter-free part of the mean residual cached."""

    def __init__(self, data, grid):
        self.x, self.y = _as_transitions(data)
        self.grid = grid
        self.target = np.exp(self.y @ grid.u_points.T).mean(axis=0)

    def mean_residual(self, spec):
        phi, psi = _transforms(spec, self.grid)
        return self.target - np.exp(phi) * np.exp(self.x @ psi.T).mean(axis=0)


# ---------------------------------------------------------------------------
# free parameters
# ---------------------------------------------------------------------------

_NAME = re.compile(
    r"^(?P<field>beta|b|lambda|kappa|alpha)(?:\[(?P<k>\d+)\])?(?:\[(?P<i>\d+),\s*(?P<j>\d+)\])?$"
)


def _locate(name, d):
    """Map a parameter name to ``(field, index)``."""
    m = _NAME.match(name.strip())
    if not m:
        raise ValueError(f"unknown free parameter {name!r}")
    fld, k, i, j = m.group("field"), m.group("k"), m.group("i"), m.group("j")
    if fld == "lambda":
        if k or i:
            raise ValueError(f"lambda takes no index: {name!r}")
        return "lambda0", ()
    if fld == "beta":
        if k is not None:
            raise ValueError(f"use beta[i,j], got {name!r}")
        if i is None:
            if d != 1:
                raise ValueError("bare 'beta' is only valid for d = 1")
            return "beta", (0, 0)
        return "beta", (int(i), int(j))
    if fld in ("b", "kappa"):
        if i is not None:
            raise ValueError(f"{fld} takes one index: {name!r}")
        if k is None:
            if d != 1:
                raise ValueError(f"bare {fld!r} is only valid for d = 1")
            return fld, (0,)
        return fld, (int(k),)
    if k is None and i is None:
        if d != 1:
            raise ValueError("bare 'alpha' is only valid for d = 1")
        return "alpha", (0, 0, 0)
    if k is None or i is None:
        raise ValueError(f"use alpha[k][i,j], got {name!r}")
    return "alpha", (int(k), int(i), int(j))


def get_params(spec, free):
    out = []
    for name in free:
        fld, idx = _locate(name, spec.d)
        val = getattr(spec, fld)
        out.append(float(val if not idx else val[idx]))
    return np.array(out)


def embed(template, free, params):
    """Copy of ``template`` with the ``free`` entries set to ``params``."""
    changes = {}
    for name, val in zip(free, np.atleast_1d(params)):
        fld, idx = _locate(name, template.d)
        if fld == "lambda0":
            changes[fld] = float(val)
            continue
        arr = np.array(changes.get(fld, getattr(template, fld)), dtype=float)
        arr[idx] = val
        if fld == "alpha" and len(idx) == 3:
            k, i, j = idx
            arr[k, j, i] = val
        changes[fld] = arr
    return template.replace(**changes)


# ---------------------------------------------------------------------------
# objective and fit
# ---------------------------------------------------------------------------


def _stack(gbar):
    return np.concatenate([gbar.real, gbar.imag])


def _objective(params, cache, template, free, weight):
    try:
        spec = embed(template, free, params)
    except (ValueError, AJDError):
        return INADMISSIBLE
    if not validate_spec(spec).admissible:
        return INADMISSIBLE
    try:
        g = _stack(cache.mean_residual(spec))
    except (ArithmeticError, ValueError, AJDError):
        return INADMISSIBLE
    if not np.all(np.isfinite(g)):
        return INADMISSIBLE
    val = float(g @ g) if weight is None else float(g @ weight @ g)
    return max(val, 0.0)


def gmm_objective(params, data, grid, template, free, weight=None):
    """``gbar^T W gbar`` at ``params`` (``+inf`` if the embedded spec is inadmissible).

    ``weight`` is a PSD matrix over the stacked ``(Re, Im)`` residuals of
    size ``2K``; the default is the identity.
    """
    if weight is not None:
        weight = np.asarray(weight, dtype=float)
        if weight.shape != (2 * grid.size, 2 * grid.size):
            raise ValueError(f"weight must be {2 * grid.size}x{2 * grid.size}")
    return _objective(np.atleast_1d(params), _Data(data, grid), template, list(free), weight)


@dataclass
class FitResult:
    params: dict
    spec: object
    objective: float
    iterations: int
    converged: bool
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "params": dict(self.params),
            "spec": self.spec.to_dict(),
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "warnings": list(self.warnings),
        }


def fit(data, template, free, grid=None, weight=None, budget=400, restarts=2,
        seed=DEFAULT_SEED, x0=None):
    """Minimise the GMM objective over the ``free`` parameters.

    Nelder-Mead is run from the template values (or ``x0``), then restarted
    ``restarts`` times from a seeded perturbation of the incumbent.
    ``budget`` bounds the number of objective evaluations per run;
    ``converged`` is false when a run stopped on the budget.
    """
    free = list(free)
    if grid is None:
        if not isinstance(data, SkeletonSample):
            raise ValueError("a MomentGrid is required when data is not a SkeletonSample")
        grid = default_grid(template.d, data.delta)
    cache = _Data(data, grid)
    notes = []
    if not free:
        val = _objective(np.zeros(0), cache, template, free, weight)
        return FitResult({}, template, val, 0, True, _classify_warning(template, notes))

    rng = np.random.default_rng(seed)
    start = get_params(template, free) if x0 is None else np.asarray(x0, dtype=float)
    best_x, best_f, total, converged = start, _objective(start, cache, template, free, weight), 0, False
    for run in range(restarts + 1):
        init = best_x if run == 0 else best_x + rng.normal(0.0, 0.1, best_x.shape) * (np.abs(best_x) + 0.1)
        res = optimize.minimize(
            _objective, init, args=(cache, template, free, weight), method="Nelder-Mead",
            options={"maxfev": int(budget), "xatol": 1e-7, "fatol": 1e-14},
        )
        total += int(res.nit)
        if res.fun <= best_f:
            best_x, best_f = np.atleast_1d(res.x), float(res.fun)
            converged = bool(res.success)
    if not np.isfinite(best_f):
        notes.append("no admissible parameter found")
        spec = template
    else:
        spec = embed(template, free, best_x)
    if not converged:
        notes.append("optimizer budget exhausted")
    params = {name: float(v) for name, v in zip(free, best_x)}
    return FitResult(params, spec, best_f, total, converged, _classify_warning(spec, notes))


def _classify_warning(spec, notes):
    try:
        label = classify(spec).classification
    except AJDError as exc:
        label = str(exc)
    if label != EXP_ERGODIC:
        msg = f"fitted spec is not exponentially ergodic ({label})"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return notes
