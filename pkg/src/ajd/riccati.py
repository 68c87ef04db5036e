"""Generalized Riccati equations and the exponential-affine transform.

For ``u`` in ``C_-^m x iR^(d-m)`` the conditional transform is

    E_x exp(u^T X(t)) = exp(phi(t, u) + psi(t, u)^T x)

where ``(phi, psi)`` solve

    phi'   = psi^T b + psi^T a psi / 2 + lambda0 (theta(psi) - 1)
    psi_i' = psi^T beta_i + psi^T alpha_i psi / 2 + kappa_i (theta(psi) - 1)

with ``phi(0) = 0``, ``psi(0) = u``, ``beta_i`` the i-th column of beta and
``theta`` the jump transform.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import TransformDomainError
from .model import EXPONENTIAL, GAUSSIAN, POINT

DOMAIN_MARGIN = 1e-9
ERROR_TARGET = 1e-8


# ---------------------------------------------------------------------------
# reference right-hand side (numpy)
# ---------------------------------------------------------------------------


def riccati_rhs(spec, psi):
    """Return ``(dphi/dt, dpsi/dt)`` at ``psi``."""
    psi = np.asarray(psi, dtype=complex)
    jump = spec.jumps.transform(psi) - 1.0
    dphi = psi @ spec.b + 0.5 * psi @ spec.a @ psi + spec.lambda0 * jump
    quad = np.einsum("j,ijk,k->i", psi, spec.alpha, psi)
    dpsi = spec.beta.T @ psi + 0.5 * quad + spec.kappa * jump
    return complex(dphi), dpsi


# ---------------------------------------------------------------------------
# jitted integrator
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _theta(psi, codes, p1, p2, margin):
    val = 1.0 + 0.0j
    for i in range(psi.shape[0]):
        z = psi[i]
        c = codes[i]
        if c == POINT:
            val *= np.exp(z * p1[i])
        elif c == EXPONENTIAL:
            if z.real >= p1[i] - margin:
                return val, False
            val *= p1[i] / (p1[i] - z)
        elif c == GAUSSIAN:
            val *= np.exp(z * p1[i] + 0.5 * z * z * p2[i])
    return val, True


@njit(cache=True, nogil=True)
def _rhs(psi, b, a, alpha, beta, lam, kappa, codes, p1, p2, dpsi):
    d = psi.shape[0]
    theta, ok = _theta(psi, codes, p1, p2, DOMAIN_MARGIN)
    if not ok:
        return 0.0j, False
    jump = theta - 1.0
    dphi = lam * jump
    for i in range(d):
        s = 0.0j
        for j in range(d):
            s += a[i, j] * psi[j]
        dphi += psi[i] * b[i] + 0.5 * psi[i] * s
    for i in range(d):
        lin = kappa[i] * jump
        for j in range(d):
            lin += psi[j] * beta[j, i]
        quad = 0.0j
        for j in range(d):
            s = 0.0j
            for k in range(d):
                s += alpha[i, j, k] * psi[k]
            quad += psi[j] * s
        dpsi[i] = lin + 0.5 * quad
    return dphi, True


@njit(cache=True, nogil=True)
def _rk4(u, h, n, b, a, alpha, beta, lam, kappa, codes, p1, p2, phi_out, psi_out):
    """Classical RK4 from (0, u) over ``n`` steps of size ``h``.

    Returns the index of the step where the jump transform left its domain
    (or the state became non-finite), or -1 on success.
    """
    d = u.shape[0]
    k1 = np.empty(d, np.complex128)
    k2 = np.empty(d, np.complex128)
    k3 = np.empty(d, np.complex128)
    k4 = np.empty(d, np.complex128)
    tmp = np.empty(d, np.complex128)
    psi = u.copy()
    phi = 0.0j
    phi_out[0] = phi
    psi_out[0, :] = psi
    for step in range(n):
        f1, ok = _rhs(psi, b, a, alpha, beta, lam, kappa, codes, p1, p2, k1)
        if not ok:
            return step
        for i in range(d):
            tmp[i] = psi[i] + 0.5 * h * k1[i]
        f2, ok = _rhs(tmp, b, a, alpha, beta, lam, kappa, codes, p1, p2, k2)
        if not ok:
            return step
        for i in range(d):
            tmp[i] = psi[i] + 0.5 * h * k2[i]
        f3, ok = _rhs(tmp, b, a, alpha, beta, lam, kappa, codes, p1, p2, k3)
        if not ok:
            return step
        for i in range(d):
            tmp[i] = psi[i] + h * k3[i]
        f4, ok = _rhs(tmp, b, a, alpha, beta, lam, kappa, codes, p1, p2, k4)
        if not ok:
            return step
        phi += h / 6.0 * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
        finite = np.isfinite(phi.real) and np.isfinite(phi.imag)
        for i in range(d):
            psi[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            finite = finite and np.isfinite(psi[i].real) and np.isfinite(psi[i].imag)
        if not finite:
            return step
        phi_out[step + 1] = phi
        psi_out[step + 1, :] = psi
    return -1


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


@dataclass
class TransformSolution:
    """``(phi, psi)`` on an equispaced grid from 0 to T."""

    u: np.ndarray
    grid: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    step_error_estimate: float
    warning: str | None = None

    @property
    def T(self):
        return float(self.grid[-1])

    def final(self):
        return self.phi[-1], self.psi[-1]


def default_dt(T):
    return min(1e-3, T / 1000.0) if T > 0 else 1e-3


def check_domain(spec, u, tol=1e-12):
    u = np.asarray(u, dtype=complex)
    m = spec.m
    return bool(np.all(u.real[..., :m] <= tol) and np.all(np.abs(u.real[..., m:]) <= tol))


def _integrate(spec, u, T, n):
    codes, p1, p2 = spec.jumps.packed
    phi = np.empty(n + 1, np.complex128)
    psi = np.empty((n + 1, spec.d), np.complex128)
    h = T / n if n else 0.0
    fail = _rk4(u, h, n, spec.b, spec.a, spec.alpha, spec.beta, spec.lambda0,
                spec.kappa, codes, p1, p2, phi, psi)
    if fail >= 0:
        raise TransformDomainError(
            f"transform diverges during Riccati integration at t={fail * h:.6g}", time=fail * h
        )
    return phi, psi


def solve_transform(spec, u, T, dt=None, allow_real=False):
    """Integrate the Riccati system from 0 to ``T`` with fixed-step RK4.

    The step is ``T/n`` with ``n = ceil(T/dt)`` so the grid ends exactly at
    ``T``.  The system is also integrated at half the step; the finer values
    are returned on the coarse grid and the Richardson estimate
    ``max|coarse - fine| / 15`` is reported.  ``allow_real`` skips the check
    that ``u`` lies in ``C_-^m x iR^(d-m)``.
    """
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    if u.shape != (spec.d,):
        raise ValueError(f"u must have shape ({spec.d},), got {u.shape}")
    if not allow_real and not check_domain(spec, u):
        raise ValueError(
            "u must satisfy Re(u_I) <= 0 and Re(u_J) = 0; pass allow_real=True to override"
        )
    T = float(T)
    if T < 0:
        raise ValueError("T must be nonnegative")
    if T == 0:
        return TransformSolution(u, np.zeros(1), np.zeros(1, complex), u[None, :].copy(), 0.0)
    dt = default_dt(T) if dt is None else float(dt)
    n = max(1, math.ceil(T / dt - 1e-9))
    phi_c, psi_c = _integrate(spec, u, T, n)
    phi_f, psi_f = _integrate(spec, u, T, 2 * n)
    phi_f, psi_f = phi_f[::2], psi_f[::2]
    err = max(np.max(np.abs(phi_c - phi_f)), np.max(np.abs(psi_c - psi_f))) / 15.0
    warning = None
    if not err < ERROR_TARGET:
        warning = f"step-halving error estimate {err:.2e} exceeds {ERROR_TARGET:.0e}; reduce dt"
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
    grid = np.linspace(0.0, T, n + 1)
    return TransformSolution(u, grid, phi_f, psi_f, float(err), warning)


def transform_at(spec, u, T, dt=None, allow_real=False):
    """``(phi(T, u), psi(T, u))`` only."""
    return solve_transform(spec, u, T, dt, allow_real).final()


def char_fn(spec, x, t, u, dt=None):
    """``E_x exp(u^T X(t)) = exp(phi(t,u) + psi(t,u)^T x)``; ``x`` may be (n, d)."""
    x = np.asarray(x, dtype=float)
    phi, psi = transform_at(spec, u, t, dt)
    return np.exp(phi + x @ psi)


def semiflow_residual(spec, u, t, s, dt=None, order="printed"):
    """Residual of the flow composition identities.

    ``order="printed"`` checks ``phi(t+s,u) = phi(t,u) + phi(s, psi(t,u))`` and
    ``psi(t+s,u) = psi(t, psi(s,u))``; ``order="swapped"`` exchanges ``t`` and
    ``s`` in the second argument of each composition.
    """
    if order not in ("printed", "swapped"):
        raise ValueError(f"unknown order {order!r}")
    phi_ts, psi_ts = transform_at(spec, u, t + s, dt)
    phi_t, psi_t = transform_at(spec, u, t, dt)
    phi_s, psi_s = transform_at(spec, u, s, dt)
    if order == "printed":
        phi_comp, _ = transform_at(spec, psi_t, s, dt, allow_real=True)
        _, psi_comp = transform_at(spec, psi_s, t, dt, allow_real=True)
        phi_res = phi_ts - phi_t - phi_comp
    else:
        phi_comp, _ = transform_at(spec, psi_s, t, dt, allow_real=True)
        _, psi_comp = transform_at(spec, psi_t, s, dt, allow_real=True)
        phi_res = phi_ts - phi_s - phi_comp
    return float(max(abs(phi_res), np.max(np.abs(psi_ts - psi_comp))))


# ---------------------------------------------------------------------------
# closed forms (1-D, no jumps)
# ---------------------------------------------------------------------------


def ou_transform(b, beta, a, u, t):
    """Closed-form ``(phi, psi)`` for ``dX = (b + beta X)dt + sqrt(a) dW``."""
    t = np.asarray(t, dtype=float)
    e = np.exp(beta * t)
    psi = u * e
    phi = (b / beta) * u * (e - 1.0) + (a / (4.0 * beta)) * u * u * (e * e - 1.0)
    return phi, psi


def cir_transform(b, beta, alpha, u, t):
    """Closed-form ``(phi, psi)`` for ``dX = (b + beta X)dt + sqrt(alpha X) dW``."""
    t = np.asarray(t, dtype=float)
    e = np.exp(beta * t)
    denom = 1.0 - (alpha * u / (2.0 * beta)) * (e - 1.0)
    if np.any(np.abs(denom) < 1e-14):
        raise ZeroDivisionError("CIR transform has a pole for this (u, t)")
    psi = u * e / denom
    phi = -(2.0 * b / alpha) * np.log(denom)
    return phi, psi


def closed_form_oracle(spec, u, t):
    """Closed-form transform of a jump-free 1-D OU (m=0) or CIR (m=1) spec."""
    if spec.d != 1 or spec.has_jumps:
        raise ValueError("closed forms exist only for 1-D specs without jumps")
    u = complex(np.ravel(np.asarray(u, dtype=complex))[0])
    b, beta = spec.b[0], spec.beta[0, 0]
    if beta == 0:
        raise ValueError("closed forms require beta != 0")
    if spec.m == 0:
        return ou_transform(b, beta, spec.a[0, 0], u, t)
    if spec.a[0, 0] != 0:
        raise ValueError("CIR closed form requires a = 0")
    return cir_transform(b, beta, spec.alpha[0, 0, 0], u, t)
