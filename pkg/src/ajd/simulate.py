"""Path and skeleton simulation.

Diffusion steps use Euler-Maruyama with full truncation: the volatility
factors ``x_I`` are kept nonnegative after every (sub)step, so the drift and
diffusion are always evaluated at ``x^+``.  Jumps are generated by thinning
inside each step against a local dominating rate

    bar_Lambda = lambda0 + kappa^T x^+ + kappa^T (|mu| h + c sqrt(diag(D) h))

with ``c = 3``.  A candidate whose intensity exceeds the bound triggers a
retry of the whole step with ``c`` doubled.

Every path owns a Philox stream keyed by ``(seed, path_index)`` so results
do not depend on the number of worker threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import SimulationError
from .model import EXPONENTIAL, GAUSSIAN, check_state, require_admissible, sample_jump  # noqa: F401

DEFAULT_DT = 1e-3
DEFAULT_SEED = 12345
SCHEME = "euler-full-truncation+thinning"
MAX_RETRIES = 5
MARGIN_SIGMAS = 3.0

_OK, _STOPPED, _FAILED = 0, 1, -1


def path_rng(seed, path_index=0):
    """Independent generator for path ``path_index`` under master ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(path_index),))
    return np.random.Generator(np.random.Philox(ss))


def n_threads():
    env = os.environ.get("AJD_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map(fn, items, threads=None):
    threads = n_threads() if threads is None else max(1, int(threads))
    items = list(items)
    if threads == 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _chol_psd(D, L):
    """Lower Cholesky factor of a PSD matrix, zero columns at null pivots."""
    d = D.shape[0]
    for j in range(d):
        for i in range(d):
            L[i, j] = 0.0
    for j in range(d):
        s = D[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if s <= 1e-14 * (1.0 + abs(D[j, j])):
            continue
        ljj = math.sqrt(s)
        L[j, j] = ljj
        for i in range(j + 1, d):
            t = D[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / ljj


@njit(cache=True, nogil=True)
def _draw_jump(rng, codes, p1, p2, out):
    for i in range(codes.shape[0]):
        c = codes[i]
        if c == EXPONENTIAL:
            out[i] = rng.exponential(1.0 / p1[i])
        elif c == GAUSSIAN:
            out[i] = p1[i] + math.sqrt(p2[i]) * rng.standard_normal()
        else:
            out[i] = p1[i]


@njit(cache=True, nogil=True)
def _coefficients(x, a, alpha, b, beta, mu, D):
    d = x.shape[0]
    for i in range(d):
        s = b[i]
        for j in range(d):
            s += beta[i, j] * x[j]
        mu[i] = s
    for i in range(d):
        for j in range(d):
            s = a[i, j]
            for k in range(d):
                s += x[k] * alpha[k, i, j]
            D[i, j] = s
    for i in range(d):
        for j in range(i + 1, d):
            s = 0.5 * (D[i, j] + D[j, i])
            D[i, j] = s
            D[j, i] = s


@njit(cache=True, nogil=True)
def _euler(rng, x, mu, L, h, m, noise):
    d = x.shape[0]
    sq = math.sqrt(h)
    for i in range(d):
        noise[i] = sq * rng.standard_normal()
    for i in range(d):
        s = mu[i] * h
        for j in range(i + 1):
            s += L[i, j] * noise[j]
        x[i] += s
    for i in range(m):
        if x[i] < 0.0:
            x[i] = 0.0


@njit(cache=True, nogil=True)
def _intensity(x, lam, kappa):
    s = lam
    for i in range(x.shape[0]):
        s += kappa[i] * x[i]
    return s


@njit(cache=True, nogil=True)
def _exceeds(x, level):
    for i in range(x.shape[0]):
        if abs(x[i]) >= level:
            return True
    return False


@njit(cache=True, nogil=True)
def _grow2(arr, n):
    out = np.empty((2 * arr.shape[0], arr.shape[1]))
    out[:n] = arr[:n]
    return out


@njit(cache=True, nogil=True)
def _grow1(arr, n):
    out = np.empty(2 * arr.shape[0], arr.dtype)
    out[:n] = arr[:n]
    return out


@njit(cache=True, nogil=True)
def _simulate(rng, x0, T, dt, nsteps, stride, stop_level, m,
              a, alpha, b, beta, lam, kappa, codes, p1, p2):
    d = x0.shape[0]
    cap = nsteps // stride + 16
    times = np.empty(cap)
    states = np.empty((cap, d))
    flags = np.zeros(cap, np.bool_)
    pre = np.empty((16, d))
    nrec = 0
    njump = 0

    mu = np.empty(d)
    D = np.empty((d, d))
    L = np.zeros((d, d))
    noise = np.empty(d)
    z = np.empty(d)
    x = x0.copy()
    x_start = x0.copy()
    has_kappa = False
    for i in range(d):
        if kappa[i] != 0.0:
            has_kappa = True

    times[0] = 0.0
    states[0, :] = x
    nrec = 1
    if stop_level > 0.0 and _exceeds(x, stop_level):
        return times[:1], states[:1], flags[:1], pre[:0], _STOPPED, 0.0

    for k in range(nsteps):
        t0 = k * dt
        t1 = T if k == nsteps - 1 else (k + 1) * dt
        x_start[:] = x
        rec_start = nrec
        jump_start = njump
        c = MARGIN_SIGMAS
        retries = 0
        while True:
            tc = t0
            status = _OK
            while True:
                _coefficients(x, a, alpha, b, beta, mu, D)
                _chol_psd(D, L)
                hrem = t1 - tc
                bound = _intensity(x, lam, kappa)
                if has_kappa:
                    for i in range(d):
                        if kappa[i] != 0.0:
                            sd = math.sqrt(max(D[i, i], 0.0) * hrem)
                            bound += kappa[i] * (abs(mu[i]) * hrem + c * sd)
                tau = math.inf
                if bound > 0.0:
                    tau = tc + rng.exponential(1.0 / bound)
                if tau >= t1:
                    _euler(rng, x, mu, L, t1 - tc, m, noise)
                    break
                _euler(rng, x, mu, L, tau - tc, m, noise)
                tc = tau
                lam_pre = _intensity(x, lam, kappa)
                if lam_pre > bound * (1.0 + 1e-12):
                    status = _FAILED
                    break
                if rng.random() * bound < lam_pre:
                    if nrec >= times.shape[0]:
                        times = _grow1(times, nrec)
                        flags = _grow1(flags, nrec)
                        states = _grow2(states, nrec)
                    if njump >= pre.shape[0]:
                        pre = _grow2(pre, njump)
                    pre[njump, :] = x
                    njump += 1
                    _draw_jump(rng, codes, p1, p2, z)
                    for i in range(d):
                        x[i] += z[i]
                    times[nrec] = tau
                    states[nrec, :] = x
                    flags[nrec] = True
                    nrec += 1
                    if stop_level > 0.0 and _exceeds(x, stop_level):
                        status = _STOPPED
                        break
            if status == _FAILED:
                retries += 1
                if retries > MAX_RETRIES:
                    return times[:nrec], states[:nrec], flags[:nrec], pre[:njump], _FAILED, t0
                x[:] = x_start
                nrec = rec_start
                njump = jump_start
                c *= 2.0
                continue
            break
        if status == _STOPPED:
            return times[:nrec], states[:nrec], flags[:nrec], pre[:njump], _STOPPED, times[nrec - 1]
        if stop_level > 0.0 and _exceeds(x, stop_level):
            if nrec >= times.shape[0]:
                times = _grow1(times, nrec)
                flags = _grow1(flags, nrec)
                states = _grow2(states, nrec)
            times[nrec] = t1
            states[nrec, :] = x
            flags[nrec] = False
            nrec += 1
            return times[:nrec], states[:nrec], flags[:nrec], pre[:njump], _STOPPED, t1
        if (k + 1) % stride == 0 or k == nsteps - 1:
            if nrec >= times.shape[0]:
                times = _grow1(times, nrec)
                flags = _grow1(flags, nrec)
                states = _grow2(states, nrec)
            times[nrec] = t1
            states[nrec, :] = x
            flags[nrec] = False
            nrec += 1
    return times[:nrec], states[:nrec], flags[:nrec], pre[:njump], _OK, T


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


@dataclass
class PathSample:
    """A simulated path.

    ``times`` holds grid epochs (every ``record_stride`` steps) and all jump
    epochs.  At a jump epoch ``states`` holds the post-jump state, ``is_jump``
    is true and the left limit is stored in ``pre_jump_states`` (one row per
    jump, in order).  ``hitting_time`` is set when a ``stop_level`` was
    reached; the path then ends there.
    """

    times: np.ndarray
    states: np.ndarray
    is_jump: np.ndarray
    pre_jump_states: np.ndarray
    seed: int
    path_index: int
    dt: float
    record_stride: int = 1
    scheme: str = SCHEME
    hitting_time: float | None = None

    @property
    def jump_epochs(self):
        return self.times[self.is_jump]

    @property
    def n_jumps(self):
        return int(self.is_jump.sum())

    @property
    def T(self):
        return float(self.times[-1])

    def grid(self):
        """``(times, states)`` restricted to non-jump epochs."""
        keep = ~self.is_jump
        return self.times[keep], self.states[keep]

    def left_limits(self):
        """States with each jump row replaced by its pre-jump value."""
        out = self.states.copy()
        out[self.is_jump] = self.pre_jump_states
        return out


@dataclass
class SkeletonSample:
    """``X(0), X(delta), ..., X(n delta)`` of a single path."""

    delta: float
    states: np.ndarray
    seed: int
    path_index: int = 0
    dt: float = DEFAULT_DT

    @property
    def n(self):
        return len(self.states) - 1

    def transitions(self):
        """Consecutive pairs ``(X(k delta), X((k+1) delta))``."""
        return self.states[:-1], self.states[1:]


def _n_steps(T, dt):
    if T == 0:
        return 0
    return max(1, math.ceil(T / dt - 1e-9))


def _prepare(spec, x0, T, dt):
    require_admissible(spec)
    x0 = check_state(spec, np.atleast_1d(np.asarray(x0, dtype=float))).copy()
    if x0.shape != (spec.d,):
        raise ValueError(f"x0 must have shape ({spec.d},)")
    T, dt = float(T), float(dt)
    if T < 0 or not dt > 0:
        raise ValueError("need T >= 0 and dt > 0")
    if T > 0 and dt > T * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the horizon T={T}")
    return x0, T, dt


def _run(spec, x0, T, dt, rng, stride, stop_level):
    codes, p1, p2 = spec.jumps.packed
    nsteps = _n_steps(T, dt)
    return _simulate(rng, x0, T, dt, nsteps, max(1, int(stride)),
                     -1.0 if stop_level is None else float(stop_level), spec.m,
                     spec.a, spec.alpha, spec.b, spec.beta, float(spec.lambda0),
                     spec.kappa, codes, p1, p2)


def simulate_path(spec, x0, T, dt=DEFAULT_DT, seed=DEFAULT_SEED, path_index=0,
                  record_stride=1, stop_level=None):
    """Simulate one path on ``[0, T]``.

    Parameters
    ----------
    spec : ModelSpec
        Admissible specification.
    x0 : array_like
        Initial state in the canonical state space.
    T, dt : float
        Horizon and Euler step (the last step is shortened to end at T).
    seed, path_index : int
        Stream key; the pair fully determines the path.
    record_stride : int
        Record the state every ``record_stride`` steps (jumps are always kept).
    stop_level : float, optional
        Stop as soon as ``max_i |x_i| >= stop_level``.
    """
    x0, T, dt = _prepare(spec, x0, T, dt)
    times, states, flags, pre, status, t_end = _run(
        spec, x0, T, dt, path_rng(seed, path_index), record_stride, stop_level)
    if status == _FAILED:
        raise SimulationError(
            f"thinning bound violated after {MAX_RETRIES} retries in the step starting at t={t_end:.6g}")
    return PathSample(times, states, flags, pre, int(seed), int(path_index), dt,
                      max(1, int(record_stride)),
                      hitting_time=t_end if status == _STOPPED else None)


def simulate_paths(spec, x0, T, npaths, dt=DEFAULT_DT, seed=DEFAULT_SEED,
                   record_stride=1, stop_level=None, threads=None):
    """Simulate paths ``0 .. npaths-1`` of the stream family ``seed``."""
    x0, T, dt = _prepare(spec, x0, T, dt)

    def one(i):
        return simulate_path(spec, x0, T, dt, seed, i, record_stride, stop_level)

    return _map(one, range(int(npaths)), threads)


def _stride_for(times, dt):
    steps = np.asarray(times, dtype=float) / dt
    ints = np.rint(steps).astype(np.int64)
    if np.any(np.abs(steps - ints) > 1e-6) or np.any(ints < 0):
        raise ValueError("observation times must be nonnegative multiples of dt")
    g = int(np.gcd.reduce(ints[ints > 0])) if np.any(ints > 0) else 1
    return g, ints


def simulate_at_times(spec, x0, times, npaths, dt=DEFAULT_DT, seed=DEFAULT_SEED, threads=None):
    """States at the given times for ``npaths`` independent paths, shape (npaths, len(times), d)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    stride, steps = _stride_for(times, dt)
    T = float(times.max())
    x0, T, dt = _prepare(spec, x0, T, dt)
    idx = steps // stride

    def one(i):
        t, s, f, _, status, t_end = _run(spec, x0, T, dt, path_rng(seed, i), stride, None)
        if status == _FAILED:
            raise SimulationError(f"thinning failed near t={t_end:.6g}")
        return s[~f][idx]

    return np.stack(_map(one, range(int(npaths)), threads))


def simulate_endpoints(spec, x0, T, npaths, dt=DEFAULT_DT, seed=DEFAULT_SEED, threads=None):
    """``X(T)`` for ``npaths`` paths, shape (npaths, d)."""
    return simulate_at_times(spec, x0, [T], npaths, dt, seed, threads)[:, 0, :]


def simulate_skeleton(spec, x0, delta, n, dt=DEFAULT_DT, seed=DEFAULT_SEED, path_index=0):
    """Restriction of one path to the grid ``{k delta : k = 0..n}``.

    ``delta`` must be an integer multiple of ``dt``.
    """
    delta, n = float(delta), int(n)
    if n < 0 or not delta > 0:
        raise ValueError("need n >= 0 and delta > 0")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if n == 0:
        _prepare(spec, x0, delta, dt)
        return SkeletonSample(delta, x0[None, :].copy(), int(seed), int(path_index), float(dt))
    ratio = delta / dt
    stride = int(round(ratio))
    if stride < 1 or abs(ratio - stride) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"delta={delta} must be an integer multiple of dt={dt}")
    # run on the exact grid k*dt with dt = delta/stride to avoid drift of the last step
    dt = delta / stride
    path = simulate_path(spec, x0, n * delta, dt, seed, path_index, record_stride=stride)
    _, states = path.grid()
    if len(states) != n + 1:
        raise SimulationError("skeleton grid misaligned with the simulation grid")
    return SkeletonSample(delta, states, int(seed), int(path_index), dt)


def hitting_times(spec, x0, level, T, npaths, dt=DEFAULT_DT, seed=DEFAULT_SEED, threads=None):
    """First time ``max_i |X_i| >= level`` per path (``inf`` if not reached by T)."""
    x0, T, dt = _prepare(spec, x0, T, dt)
    nsteps = _n_steps(T, dt)

    def one(i):
        _, _, _, _, status, t_end = _run(spec, x0, T, dt, path_rng(seed, i), nsteps + 1, level)
        if status == _FAILED:
            raise SimulationError(f"thinning failed near t={t_end:.6g}")
        return t_end if status == _STOPPED else math.inf

    return np.array(_map(one, range(int(npaths)), threads))


def escape_fractions(hits, times):
    """Fraction of paths whose hitting time is ``<= t`` for each ``t``."""
    hits = np.asarray(hits, dtype=float)
    return np.array([np.mean(hits <= t) for t in np.atleast_1d(times)])


def cir_exact_step(b, beta, alpha, x, delta, rng):
    """Exact transition of ``dX = (b + beta X)dt + sqrt(alpha X) dW``, ``beta < 0``.

    ``X(delta) = c * chi'^2(4b/alpha, x e^{beta delta}/c)`` with
    ``c = alpha (1 - e^{beta delta}) / (-4 beta)``.  ``x`` may be an array.
    """
    if not beta < 0 or not alpha > 0 or b < 0:
        raise ValueError("cir_exact_step needs beta < 0, alpha > 0, b >= 0")
    x = np.asarray(x, dtype=float)
    e = math.exp(beta * delta)
    c = alpha * (1.0 - e) / (-4.0 * beta)
    df = 4.0 * b / alpha
    out = np.asarray(c * rng.noncentral_chisquare(df, x * e / c) if delta > 0 else x.copy())
    return float(out) if out.ndim == 0 else out
