import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from ajd.errors import TransformDomainError
from ajd.model import JumpDist, ModelSpec, exponential, gaussian
from ajd.riccati import (
    char_fn,
    cir_transform,
    closed_form_oracle,
    riccati_rhs,
    semiflow_residual,
    solve_transform,
    transform_at,
)


def test_zero_horizon(cir):
    sol = solve_transform(cir, [0.3j], 0.0)
    assert sol.phi[-1] == 0
    assert sol.psi[-1, 0] == 0.3j


def test_zero_frequency_is_fixed_point(two_d):
    phi, psi = transform_at(two_d, [0.0, 0.0], 2.0)
    assert phi == 0 and np.all(psi == 0)


def test_rhs_matches_hand_value(cir):
    dphi, dpsi = riccati_rhs(cir, [-1.0])
    assert dphi == pytest.approx(-1.0)
    assert dpsi[0] == pytest.approx(1.5)


def test_kernel_rhs_matches_reference(two_d):
    from ajd.riccati import _rhs

    codes, p1, p2 = two_d.jumps.packed
    psi = np.array([-0.3 + 0.7j, 0.4j])
    out = np.empty(2, complex)
    dphi, ok = _rhs(psi, two_d.b, two_d.a, two_d.alpha, two_d.beta, two_d.lambda0,
                    two_d.kappa, codes, p1, p2, out)
    ref_phi, ref_psi = riccati_rhs(two_d, psi)
    assert ok
    assert dphi == pytest.approx(ref_phi, rel=1e-14)
    np.testing.assert_allclose(out, ref_psi, rtol=1e-14)


@pytest.mark.parametrize("u", [0.5j, -1.0 + 2.0j, 3.0j])
@pytest.mark.parametrize("t", [0.1, 1.0, 5.0])
def test_cir_closed_form(cir, u, t):
    phi, psi = transform_at(cir, [u], t)
    cphi, cpsi = closed_form_oracle(cir, u, t)
    assert phi == pytest.approx(cphi, rel=1e-9, abs=1e-12)
    assert psi[0] == pytest.approx(cpsi, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("u", [0.5j, 2.0j])
def test_ou_closed_form(ou, u):
    phi, psi = transform_at(ou, [u], 2.0)
    cphi, cpsi = closed_form_oracle(ou, u, 2.0)
    assert phi == pytest.approx(cphi, rel=1e-10)
    assert psi[0] == pytest.approx(cpsi, rel=1e-10)


def test_ou_with_compound_poisson_jumps():
    # psi is unaffected by state-independent jumps; phi gains lambda * int (theta(psi) - 1)
    dist = JumpDist.product([gaussian(0.2, 0.3)])
    spec = ModelSpec.ou(0.5, -0.7, 1.2, lambda0=0.8, jumps=dist)
    u, T = 1.3j, 1.5
    phi, psi = transform_at(spec, [u], T)
    ophi, opsi = closed_form_oracle(ModelSpec.ou(0.5, -0.7, 1.2), u, T)

    def integrand(s, part):
        z = dist.transform(np.array([u * np.exp(-0.7 * s)])) - 1.0
        return z.real if part == 0 else z.imag

    extra = integrate.quad(integrand, 0, T, args=(0,), epsabs=1e-14)[0] \
        + 1j * integrate.quad(integrand, 0, T, args=(1,), epsabs=1e-14)[0]
    assert psi[0] == pytest.approx(opsi, rel=1e-12)
    assert phi == pytest.approx(ophi + 0.8 * extra, rel=1e-9)


def test_matches_independent_integrator(two_d):
    u = np.array([-0.2 + 1.0j, -0.5j])
    T = 2.0

    def f(_, y):
        dphi, dpsi = riccati_rhs(two_d, y[1:])
        return np.concatenate([[dphi], dpsi])

    ref = integrate.solve_ivp(f, (0, T), np.concatenate([[0j], u]), method="DOP853",
                              rtol=1e-12, atol=1e-14).y[:, -1]
    phi, psi = transform_at(two_d, u, T)
    assert phi == pytest.approx(ref[0], abs=1e-9)
    np.testing.assert_allclose(psi, ref[1:], atol=1e-9)


def test_step_error_estimate_small(two_d):
    sol = solve_transform(two_d, [0.5j, 1.0j], 3.0)
    assert sol.step_error_estimate < 1e-8
    assert sol.warning is None


def test_coarse_step_warns(cir):
    with pytest.warns(RuntimeWarning):
        sol = solve_transform(cir, [3.0j], 5.0, dt=0.5)
    assert sol.warning


def test_domain_error_reports_time():
    spec = ModelSpec.cir(1.0, 1.0, 1.0, kappa=1.0, jumps=JumpDist.product([exponential(0.5)]))
    with pytest.raises(TransformDomainError) as exc:
        solve_transform(spec, [0.4], 5.0, allow_real=True)
    assert exc.value.time is not None and 0 <= exc.value.time < 5.0


def test_real_u_needs_flag(cir):
    with pytest.raises(ValueError):
        solve_transform(cir, [0.1], 1.0)


def test_cir_pole_raises():
    # denominator 1 - (alpha u / (2 beta))(e^{beta t} - 1) vanishes at u = 2 beta / (alpha (e^{beta t} - 1))
    t = 1.0
    u = 2 * -1.0 / (np.exp(-1.0) - 1.0)
    with pytest.raises(ZeroDivisionError):
        cir_transform(1.0, -1.0, 1.0, u, t)


def test_char_fn_vectorised(two_d):
    x = np.array([[1.0, 0.0], [0.5, -1.0]])
    vals = char_fn(two_d, x, 0.5, [0.3j, 0.2j])
    assert vals.shape == (2,)
    assert np.all(np.abs(vals) <= 1.0 + 1e-12)


@pytest.mark.parametrize("order", ["printed", "swapped"])
def test_semiflow(two_d, order):
    assert semiflow_residual(two_d, [-0.1 + 0.5j, 0.7j], 0.4, 0.9, order=order) < 1e-10


@given(st.floats(-2.0, 0.0), st.floats(-3.0, 3.0), st.floats(0.05, 2.0), st.floats(0.05, 2.0))
@settings(max_examples=25, deadline=None)
def test_semiflow_property(re, im, t, s):
    spec = ModelSpec.cir(1.0, -2.0, 1.0, lambda0=1.0, kappa=1.0,
                         jumps=JumpDist.product([exponential(2.0)]))
    assert semiflow_residual(spec, [complex(re, im)], t, s) < 1e-9


@given(st.floats(-3.0, 3.0), st.floats(0.01, 3.0))
@settings(max_examples=25, deadline=None)
def test_cf_modulus_bounded(im, t):
    spec = ModelSpec.cir(1.0, -1.0, 1.0, lambda0=0.5, kappa=0.5,
                         jumps=JumpDist.product([exponential(2.0)]))
    phi, psi = transform_at(spec, [1j * im], t)
    assert psi[0].real <= 1e-12
    assert abs(np.exp(phi + psi[0] * 2.0)) <= 1.0 + 1e-10
