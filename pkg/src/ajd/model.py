"""Affine jump-diffusion parameter records, admissibility checks and coefficients.

A canonical AJD on ``X = R_+^m x R^(d-m)`` solves

    dX = (b + beta X) dt + sigma(X) dW + dJ,

with diffusion matrix ``sigma sigma^T = a + sum_i X_i alpha_i`` and jumps
arriving at rate ``lambda0 + kappa^T X`` with i.i.d. sizes drawn from a
:class:`JumpDist`.  The first ``m`` coordinates are volatility factors.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.polynomial import hermite, laguerre
from scipy.special import gamma as gamma_fn

from .errors import InadmissibleSpecError, StateSpaceError, TransformDomainError

PSD_TOL = 1e-8
ZERO_TOL = 1e-12

# integer codes shared with the jitted kernels
POINT, EXPONENTIAL, GAUSSIAN = 0, 1, 2


# ---------------------------------------------------------------------------
# jump components
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PointMass:
    value: float

    code = POINT

    @property
    def params(self):
        return float(self.value), 0.0

    def mean(self):
        return self.value

    def second_moment(self):
        return self.value**2

    def transform(self, u):
        return np.exp(u * self.value)

    def sample(self, rng, size):
        return np.full(size, float(self.value))

    def to_dict(self):
        return {"family": "point", "value": float(self.value)}


@dataclass(frozen=True)
class Exponential:
    rate: float

    code = EXPONENTIAL

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"exponential rate must be positive, got {self.rate}")

    @property
    def params(self):
        return float(self.rate), 0.0

    def mean(self):
        return 1.0 / self.rate

    def second_moment(self):
        return 2.0 / self.rate**2

    def transform(self, u):
        u = np.asarray(u)
        if np.any(np.real(u) >= self.rate):
            raise TransformDomainError(
                f"transform diverges: Re(u) >= exponential rate {self.rate}"
            )
        return self.rate / (self.rate - u)

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    def to_dict(self):
        return {"family": "exponential", "rate": float(self.rate)}


@dataclass(frozen=True)
class Gaussian:
    loc: float
    var: float

    code = GAUSSIAN

    def __post_init__(self):
        if self.var < 0:
            raise ValueError(f"gaussian variance must be nonnegative, got {self.var}")

    @property
    def params(self):
        return float(self.loc), float(self.var)

    def mean(self):
        return self.loc

    def second_moment(self):
        return self.loc**2 + self.var

    def transform(self, u):
        return np.exp(u * self.loc + 0.5 * u * u * self.var)

    def sample(self, rng, size):
        return self.loc + np.sqrt(self.var) * rng.standard_normal(size)

    def to_dict(self):
        return {"family": "gaussian", "mean": float(self.loc), "var": float(self.var)}


def point(value):
    return PointMass(float(value))


def exponential(rate):
    return Exponential(float(rate))


def gaussian(mean, var):
    return Gaussian(float(mean), float(var))


def component_from_dict(obj):
    family = obj.get("family")
    if family == "point":
        return point(obj["value"])
    if family == "exponential":
        return exponential(obj["rate"])
    if family == "gaussian":
        return gaussian(obj["mean"], obj["var"])
    raise ValueError(f"unknown jump component family {family!r}")


# ---------------------------------------------------------------------------
# jump distribution
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class JumpDist:
    """Jump-size law: a point mass, or a product of independent 1-D components.

    Each coordinate is a :class:`PointMass`, :class:`Exponential` or
    :class:`Gaussian`.  Mean and second-moment matrix are cached at
    construction.
    """

    kind: str
    components: tuple
    mean: np.ndarray = field(init=False, repr=False)
    second_moment: np.ndarray = field(init=False, repr=False)
    packed: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("degenerate", "product"):
            raise ValueError(f"unknown jump distribution kind {self.kind!r}")
        comps = tuple(self.components)
        if not comps:
            raise ValueError("jump distribution needs at least one component")
        if self.kind == "degenerate" and not all(isinstance(c, PointMass) for c in comps):
            raise ValueError("degenerate jump distribution must consist of point masses")
        object.__setattr__(self, "components", comps)

        mean = np.array([c.mean() for c in comps], dtype=float)
        second = np.outer(mean, mean)
        second[np.diag_indices_from(second)] = [c.second_moment() for c in comps]
        codes = np.array([c.code for c in comps], dtype=np.int64)
        p1 = np.array([c.params[0] for c in comps], dtype=float)
        p2 = np.array([c.params[1] for c in comps], dtype=float)
        for arr in (mean, second, codes, p1, p2):
            arr.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "second_moment", second)
        object.__setattr__(self, "packed", (codes, p1, p2))

    @classmethod
    def degenerate(cls, z0):
        return cls("degenerate", tuple(point(v) for v in np.atleast_1d(z0)))

    @classmethod
    def product(cls, components):
        return cls("product", tuple(components))

    @classmethod
    def zero(cls, d):
        return cls.degenerate(np.zeros(d))

    @property
    def d(self):
        return len(self.components)

    @property
    def random_dims(self):
        """Indices of non-degenerate components."""
        return [i for i, c in enumerate(self.components) if not isinstance(c, PointMass)]

    @property
    def is_degenerate(self):
        return not self.random_dims

    def transform(self, u):
        """Extended transform ``E exp(u^T Z)`` for complex ``u`` of shape (..., d)."""
        u = np.asarray(u, dtype=complex)
        if u.shape[-1] != self.d:
            raise ValueError(f"u has dimension {u.shape[-1]}, expected {self.d}")
        out = np.ones(u.shape[:-1], dtype=complex)
        for i, comp in enumerate(self.components):
            out = out * comp.transform(u[..., i])
        return out

    def sample(self, rng, size=None):
        n = 1 if size is None else int(size)
        z = np.column_stack([c.sample(rng, n) for c in self.components])
        return z[0] if size is None else z

    def to_dict(self):
        if self.kind == "degenerate":
            return {"kind": "degenerate", "z0": [c.value for c in self.components]}
        return {"kind": "product", "components": [c.to_dict() for c in self.components]}

    @classmethod
    def from_dict(cls, obj):
        kind = obj.get("kind")
        if kind == "degenerate":
            return cls.degenerate(obj["z0"])
        if kind == "product":
            return cls.product([component_from_dict(c) for c in obj["components"]])
        raise ValueError(f"unknown jump distribution kind {kind!r}")


class JumpMoments(NamedTuple):
    mean: np.ndarray
    second_moment: np.ndarray
    abs_moment: float
    finite: bool


def jump_quadrature(dist, nodes=64):
    """Tensor Gauss rule for ``dist``: Laguerre for exponential, Hermite for gaussian.

    Returns ``(Z, w)`` with ``Z`` of shape (K, d), or ``None`` when more than
    three coordinates are random (the tensor grid gets too large).
    """
    rand = dist.random_dims
    if len(rand) > 3:
        return None
    base = np.array([c.params[0] if isinstance(c, PointMass) else 0.0 for c in dist.components])
    if not rand:
        return base[None, :], np.ones(1)
    axes, weights = [], []
    for i in rand:
        comp = dist.components[i]
        if isinstance(comp, Exponential):
            t, w = laguerre.laggauss(nodes)
            axes.append(t / comp.rate)
            weights.append(w)
        else:
            t, w = hermite.hermgauss(nodes)
            axes.append(comp.loc + np.sqrt(2.0 * comp.var) * t)
            weights.append(w / np.sqrt(np.pi))
    grids = np.meshgrid(*axes, indexing="ij")
    wgrid = np.ones_like(grids[0])
    for k, w in enumerate(weights):
        shape = [1] * len(rand)
        shape[k] = -1
        wgrid = wgrid * w.reshape(shape)
    Z = np.tile(base, (wgrid.size, 1))
    for k, i in enumerate(rand):
        Z[:, i] = grids[k].ravel()
    return Z, wgrid.ravel()


def jump_expectation(dist, f, nodes=64, mc_draws=200_000, seed=0):
    """Return ``(E f(Z), standard_error)``.

    ``f`` maps an (K, d) array of jump sizes to a (K, ...) array.  Gauss
    quadrature is used when available (standard error reported as 0);
    otherwise plain Monte Carlo with a fixed seed.
    """
    rule = jump_quadrature(dist, nodes)
    if rule is not None:
        Z, w = rule
        vals = np.asarray(f(Z))
        return np.tensordot(w, vals, axes=(0, 0)), 0.0
    rng = np.random.default_rng(seed)
    vals = np.asarray(f(dist.sample(rng, mc_draws)))
    se = vals.std(axis=0, ddof=1) / np.sqrt(mc_draws)
    return vals.mean(axis=0), float(np.max(se))


def jump_moments(dist, p=2.0):
    """Mean vector, second-moment matrix and ``E||Z||^p`` of a jump law.

    Every supported family has moments of all orders, so ``finite`` is
    always true.
    """
    if not p > 0:
        raise ValueError(f"moment order must be positive, got {p}")
    if dist.is_degenerate:
        abs_moment = float(np.linalg.norm(dist.mean) ** p)
    elif len(dist.random_dims) == 1 and np.allclose(np.delete(dist.mean, dist.random_dims), 0.0) \
            and isinstance(dist.components[dist.random_dims[0]], Exponential):
        rate = dist.components[dist.random_dims[0]].rate
        abs_moment = float(gamma_fn(p + 1.0) / rate**p)
    else:
        val, _ = jump_expectation(dist, lambda Z: np.linalg.norm(Z, axis=1) ** p)
        abs_moment = float(val)
    return JumpMoments(dist.mean.copy(), dist.second_moment.copy(), abs_moment, True)


def jump_transform(dist, u):
    """``E exp(u^T Z)`` for a complex d-vector ``u``."""
    return complex(dist.transform(np.asarray(u, dtype=complex)))


def sample_jump(dist, rng, size=None):
    """Draw one jump (``size=None``) or an (size, d) array of jumps."""
    return dist.sample(rng, size)


# ---------------------------------------------------------------------------
# model specification
# ---------------------------------------------------------------------------


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Parameters of a canonical AJD.

    ``alpha`` has shape (d, d, d) with ``alpha[i]`` the diffusion loading of
    coordinate ``i`` (zero for dependent factors).  ``lambda0`` is the base
    jump rate and ``kappa`` its state loading.
    """

    d: int
    m: int
    a: np.ndarray
    alpha: np.ndarray
    b: np.ndarray
    beta: np.ndarray
    lambda0: float = 0.0
    kappa: np.ndarray | None = None
    jumps: JumpDist | None = None

    def __post_init__(self):
        d, m = int(self.d), int(self.m)
        if d < 1:
            raise ValueError(f"dimension mismatch: d must be >= 1, got {d}")
        if not 0 <= m <= d:
            raise ValueError(f"dimension mismatch: m must lie in [0, d], got m={m}, d={d}")
        kappa = np.zeros(d) if self.kappa is None else self.kappa
        jumps = JumpDist.zero(d) if self.jumps is None else self.jumps
        fields = {
            "a": (_frozen(np.atleast_2d(self.a)), (d, d)),
            "alpha": (_frozen(self.alpha), (d, d, d)),
            "b": (_frozen(np.atleast_1d(self.b)), (d,)),
            "beta": (_frozen(np.atleast_2d(self.beta)), (d, d)),
            "kappa": (_frozen(np.atleast_1d(kappa)), (d,)),
        }
        for name, (arr, shape) in fields.items():
            if arr.shape != shape:
                raise ValueError(f"dimension mismatch: {name} has shape {arr.shape}, expected {shape}")
            object.__setattr__(self, name, arr)
        if jumps.d != d:
            raise ValueError(f"dimension mismatch: jump distribution has dimension {jumps.d}, expected {d}")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "lambda0", float(self.lambda0))
        object.__setattr__(self, "jumps", jumps)

    # convenience constructors ------------------------------------------------

    @classmethod
    def cir(cls, b, beta, alpha, lambda0=0.0, kappa=0.0, jumps=None):
        """1-D square-root process ``dX = (b + beta X)dt + sqrt(alpha X) dW + dJ``."""
        return cls(d=1, m=1, a=[[0.0]], alpha=[[[alpha]]], b=[b], beta=[[beta]],
                   lambda0=lambda0, kappa=[kappa], jumps=jumps)

    @classmethod
    def ou(cls, b, beta, a, lambda0=0.0, jumps=None):
        """1-D Ornstein-Uhlenbeck process ``dX = (b + beta X)dt + sqrt(a) dW + dJ``."""
        return cls(d=1, m=0, a=[[a]], alpha=[[[0.0]]], b=[b], beta=[[beta]],
                   lambda0=lambda0, kappa=[0.0], jumps=jumps)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @property
    def has_jumps(self):
        return self.lambda0 > 0 or bool(np.any(self.kappa != 0))

    # serialization -----------------------------------------------------------

    def to_dict(self):
        return {
            "d": self.d,
            "m": self.m,
            "a": self.a.tolist(),
            "alpha": self.alpha.tolist(),
            "b": self.b.tolist(),
            "beta": self.beta.tolist(),
            "lambda": self.lambda0,
            "kappa": self.kappa.tolist(),
            "jumps": self.jumps.to_dict(),
        }

    @classmethod
    def from_dict(cls, obj):
        missing = [k for k in ("d", "m", "a", "alpha", "b", "beta") if k not in obj]
        if missing:
            raise ValueError(f"spec is missing required keys {missing}")
        d = int(obj["d"])
        jumps = JumpDist.from_dict(obj["jumps"]) if obj.get("jumps") is not None else None
        return cls(
            d=d,
            m=int(obj["m"]),
            a=obj["a"],
            alpha=obj["alpha"],
            b=obj["b"],
            beta=obj["beta"],
            lambda0=obj.get("lambda", 0.0),
            kappa=obj.get("kappa", [0.0] * d),
            jumps=jumps,
        )


def effective_matrix(spec):
    """``beta + E(Z) kappa^T``, the drift matrix corrected for mean jump feedback."""
    return spec.beta + np.outer(spec.jumps.mean, spec.kappa)


# ---------------------------------------------------------------------------
# admissibility
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    admissible: bool
    feller_ok: bool
    violations: list

    def to_dict(self):
        return {
            "admissible": self.admissible,
            "feller_ok": self.feller_ok,
            "violations": [{"field": f, "description": msg} for f, msg in self.violations],
        }


def _sym(M):
    return 0.5 * (M + M.T)


def _min_eig(M):
    return float(np.linalg.eigvalsh(_sym(M))[0]) if M.size else 0.0


def _check_symmetric_psd(name, M, out):
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > ZERO_TOL * scale:
        out.append((name, "matrix is not symmetric"))
    lam = _min_eig(M)
    if lam < -PSD_TOL:
        out.append((name, f"matrix is not positive semidefinite (min eigenvalue {lam:.3g})"))


def validate_spec(spec):
    """Check every admissibility clause and the irreducibility/Feller conditions.

    Dimension problems raise :class:`ValueError`; every other failed clause is
    reported as a ``(field, description)`` entry.
    """
    d, m = spec.d, spec.m
    if spec.a.shape != (d, d) or spec.alpha.shape != (d, d, d) or spec.beta.shape != (d, d):
        raise ValueError("dimension mismatch between spec fields")
    I, J = slice(0, m), slice(m, d)
    v = []

    # diffusion constant term
    _check_symmetric_psd("a", spec.a, v)
    if m and np.max(np.abs(spec.a[I, I])) > ZERO_TOL:
        v.append(("a", "a_II must vanish on the volatility block"))

    # diffusion loadings
    for i in range(d):
        name = f"alpha[{i}]"
        Ai = spec.alpha[i]
        if i >= m:
            if np.max(np.abs(Ai)) > ZERO_TOL:
                v.append((name, f"alpha_{i + 1} must vanish for a dependent factor"))
            continue
        _check_symmetric_psd(name, Ai, v)
        block = Ai[I, I].copy()
        block[i, i] = 0.0
        if np.max(np.abs(block)) > ZERO_TOL:
            v.append((name, f"alpha_{i + 1},II may only have its ({i + 1},{i + 1}) entry nonzero"))

    # drift
    if m and np.any(spec.b[I] < 0):
        v.append(("b", "b_I must be nonnegative"))
    if m and d > m and np.max(np.abs(spec.beta[I, J])) > ZERO_TOL:
        v.append(("beta", "beta_IJ must vanish"))
    if m:
        off = spec.beta[I, I] - np.diag(np.diag(spec.beta[I, I]))
        if np.any(off < -ZERO_TOL):
            v.append(("beta", "beta_II must have nonnegative off-diagonal entries"))

    # jump intensity
    if spec.lambda0 < 0:
        v.append(("lambda", "lambda must be nonnegative"))
    if m and np.any(spec.kappa[I] < 0):
        v.append(("kappa", "kappa_I must be nonnegative"))
    if d > m and np.max(np.abs(spec.kappa[J])) > ZERO_TOL:
        v.append(("kappa", "kappa_J must vanish"))

    # jump support inside the state space
    for i, comp in enumerate(spec.jumps.components):
        if i < m:
            if isinstance(comp, Gaussian):
                v.append(("jumps", f"component {i + 1} is gaussian but must be supported on R_+"))
            elif isinstance(comp, PointMass) and comp.value < 0:
                v.append(("jumps", f"component {i + 1} point mass {comp.value} is negative"))

    # non-degeneracy of the dependent block
    if d > m and _min_eig(spec.a[J, J]) <= PSD_TOL:
        v.append(("a", "a_JJ must be positive definite"))

    # Feller condition
    feller_ok = True
    for i in range(m):
        b_i, al = spec.b[i], spec.alpha[i, i, i]
        if not al > 0:
            feller_ok = False
            v.append((f"alpha[{i}]", f"Feller: alpha_{i + 1},{i + 1}{i + 1}={al:g} must be positive"))
        elif not 2 * b_i > al:
            feller_ok = False
            v.append((f"alpha[{i}]", f"Feller: 2b_{i + 1}={2 * b_i:g} <= alpha_{i + 1},{i + 1}{i + 1}={al:g}"))

    return ValidationReport(admissible=not v, feller_ok=feller_ok, violations=v)


def require_admissible(spec):
    report = validate_spec(spec)
    if not report.admissible:
        desc = "; ".join(f"{f}: {msg}" for f, msg in report.violations)
        raise InadmissibleSpecError(f"spec is not admissible: {desc}", report.violations)
    return report


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------


def check_state(spec, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.d:
        raise ValueError(f"state has dimension {x.shape[-1]}, expected {spec.d}")
    if spec.m and np.any(x[..., : spec.m] < 0):
        raise StateSpaceError(f"state {x} is outside state space (negative volatility factor)")
    return x


def drift(spec, x):
    return spec.b + x @ spec.beta.T


def diffusion_matrix(spec, x):
    """``a + sum_i x_i alpha_i`` for x of shape (..., d)."""
    return spec.a + np.tensordot(x, spec.alpha, axes=(-1, 0))


def intensity(spec, x):
    return spec.lambda0 + x @ spec.kappa


def eval_coefficients(spec, x):
    """Return ``(drift, diffusion matrix, jump intensity)`` at state ``x``."""
    x = check_state(spec, x)
    return drift(spec, x), _sym(diffusion_matrix(spec, x)), float(intensity(spec, x))


def diffusion_factor(spec, x):
    """Symmetric PSD square root ``sigma(x)`` of the diffusion matrix."""
    x = check_state(spec, x)
    D = _sym(diffusion_matrix(spec, x))
    w, V = np.linalg.eigh(D)
    if w[0] < -PSD_TOL:
        raise ValueError(f"diffusion matrix is indefinite at {x} (min eigenvalue {w[0]:.3g})")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
