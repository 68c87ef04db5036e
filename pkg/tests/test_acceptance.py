"""Acceptance criteria C1..C11.

Each test prints one ``C<n> PASS|FAIL ...`` line; the lines are also
collected into the pytest terminal summary.  Run only this suite with
``pytest tests/test_acceptance.py -v``.
"""

import time

import numpy as np
import pytest
from scipy import stats

from ajd import ModelSpec, char_fn, cir_exact_step, simulate_path, simulate_skeleton
from ajd.calibrate import fit
from ajd.limits import (
    corollary_cov,
    corollary_mean,
    fclt_diagnostic,
    time_ergodic_report,
    tv_proxy_decay,
)
from ajd.model import JumpDist, exponential, gaussian, point
from ajd.riccati import closed_form_oracle, semiflow_residual, transform_at
from ajd.simulate import escape_fractions, hitting_times
from ajd.stability import (
    EXP_ERGODIC,
    POWER,
    GeneratorProbe,
    classify,
    find_transience_epsilon,
    lyapunov_scan,
)


def _report(record_property, tag, ok, detail):
    line = f"{tag} {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    record_property("acceptance", line)
    return ok


def _cir_jump():
    return ModelSpec.cir(1.0, -2.0, 1.0, lambda0=1.0, kappa=1.0,
                         jumps=JumpDist.product([exponential(2.0)]))


def _two_d():
    return ModelSpec(
        d=2, m=1,
        a=[[0.0, 0.0], [0.0, 1.0]],
        alpha=[[[1.0, 0.3], [0.3, 0.5]], [[0.0, 0.0], [0.0, 0.0]]],
        b=[1.0, 0.5],
        beta=[[-1.0, 0.0], [0.5, -1.0]],
        lambda0=0.5,
        kappa=[1.0, 0.0],
        jumps=JumpDist.product([exponential(2.0), gaussian(0.1, 0.25)]),
    )


@pytest.fixture(scope="module")
def long_cir_path():
    """CIR(b=1, beta=-1, alpha=1) on [0, 1e5] at dt=1e-3, every 100th step kept."""
    spec = ModelSpec.cir(1.0, -1.0, 1.0)
    return spec, simulate_path(spec, [1.0], 1e5, 1e-3, 12345, record_stride=100)


# ---------------------------------------------------------------------------


def test_c1_transform_vs_closed_form(record_property):
    specs = [ModelSpec.ou(0.5, -1.0, 2.0), ModelSpec.ou(-0.3, -0.4, 0.7),
             ModelSpec.cir(1.0, -1.0, 1.0), ModelSpec.cir(0.6, -2.5, 0.8)]
    ts = [0.3, 1.0, 2.5, 0.5, 4.0]
    ou_us = [0.5j, -1.3j, 2.0j, 0.8j, 0.7j]
    # real parts are allowed on volatility coordinates only
    cir_us = [0.5j, -1.3j, 2.0j, -0.5 + 0.8j, -0.2 + 0.7j]
    cases = [(s, u, t) for s in specs for u, t in zip(cir_us if s.m else ou_us, ts)]
    assert len(cases) == 20
    transform_at(specs[0], [0.1j], 0.01)  # compile outside the timed region

    start = time.perf_counter()
    numeric = [transform_at(s, [u], t) for s, u, t in cases]
    elapsed = time.perf_counter() - start

    worst = 0.0
    for (s, u, t), (phi, psi) in zip(cases, numeric):
        phi0, psi0 = closed_form_oracle(s, [u], t)
        num = np.array([phi, psi[0]])
        ref = np.array([phi0, psi0])
        worst = max(worst, np.linalg.norm(num - ref) / np.linalg.norm(ref))
    ok = worst < 1e-7 and elapsed < 1.0
    _report(record_property, "C1", ok, f"max_rel_err={worst:.2e} runtime={elapsed:.3f}s")
    assert ok


def test_c2_semiflow(record_property):
    rng = np.random.default_rng(2)
    three_d = ModelSpec(
        d=3, m=1,
        a=np.diag([0.0, 1.0, 0.5]),
        alpha=[np.diag([1.0, 0.2, 0.0]), np.zeros((3, 3)), np.zeros((3, 3))],
        b=[0.8, 0.0, 0.1],
        beta=[[-1.5, 0.0, 0.0], [0.3, -1.0, 0.2], [0.0, 0.1, -0.8]],
        lambda0=0.3,
        kappa=[0.5, 0.0, 0.0],
        jumps=JumpDist.product([exponential(3.0), point(-0.1), gaussian(0.0, 0.1)]),
    )
    specs = [ModelSpec.cir(1.0, -1.0, 1.0), ModelSpec.ou(0.0, -1.0, 2.0), _cir_jump(),
             _two_d(), three_d]
    worst = 0.0
    for k in range(50):
        spec = specs[k % 5]
        u = 1j * rng.uniform(-2.0, 2.0, spec.d)
        u[: spec.m] += rng.uniform(-0.3, 0.0, spec.m)
        t, s = rng.uniform(0.05, 2.0, 2)
        worst = max(worst, semiflow_residual(spec, u, t, s))
    ok = worst < 1e-7
    _report(record_property, "C2", ok, f"max_residual={worst:.2e} triples=50 specs=5")
    assert ok


@pytest.mark.slow
def test_c3_cf_consistency(record_property):
    spec = _cir_jump()
    simulate_skeleton(spec, [1.0], 0.5, 2, 1e-3, 0)  # compile
    start = time.perf_counter()
    skel = simulate_skeleton(spec, [1.0], 0.5, 100_000, 1e-3, 12345)
    x, y = skel.states[:-1, 0], skel.states[1:, 0]
    zmax = 0.0
    for u in (0.5j, 1j, 2j):
        model = char_fn(spec, x[:, None], 0.5, [u])
        g = np.exp(u * y) - model
        for part in (g.real, g.imag):
            se = part.std(ddof=1) / np.sqrt(len(part))
            zmax = max(zmax, abs(part.mean()) / se)
    elapsed = time.perf_counter() - start
    ok = zmax < 4.0 and elapsed < 120.0
    _report(record_property, "C3", ok, f"max|z|={zmax:.2f} runtime={elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_c4_stationary_law(record_property, long_cir_path):
    law = stats.gamma(2.0, scale=0.5)

    # scheme-free reference first: 1000 exact chains of 1000 steps
    rng = np.random.default_rng(4)
    x = np.ones(1000)
    draws = np.empty((1000, 1000))
    for k in range(1000):
        x = cir_exact_step(1.0, -1.0, 1.0, x, 0.1, rng)
        draws[k] = x
    exact = draws[100:].ravel()
    ks_exact = stats.kstest(exact, law.cdf).statistic

    _, path = long_cir_path
    _, states = path.grid()
    euler = states[100:, 0]
    ks_euler = stats.kstest(euler, law.cdf).statistic
    ks_bias = stats.ks_2samp(euler, exact).statistic
    ok = ks_exact < 0.01 and ks_euler < 0.02
    _report(record_property, "C4", ok,
            f"KS_euler={ks_euler:.4f} KS_exact={ks_exact:.4f} KS_euler_vs_exact={ks_bias:.4f}")
    assert ok


@pytest.mark.slow
def test_c5_corollary_mean(record_property):
    details, ok = [], True
    for name, spec in (("1d", _cir_jump()), ("2d", _two_d())):
        v = corollary_mean(spec)
        path = simulate_path(spec, v, 1e4, 1e-3, 12345, record_stride=10)
        rep = time_ergodic_report(path, "identity", v)
        ok &= rep.within_ci
        details.append(f"{name}: avg={np.round(rep.average, 4).tolist()} v={np.round(v, 4).tolist()} "
                       f"half={np.round(rep.ci_halfwidth, 4).tolist()}")
    assert np.allclose(corollary_mean(_cir_jump()), [1.0])
    _report(record_property, "C5", ok, "; ".join(details))
    assert ok


@pytest.mark.slow
def test_c6_corollary_cov(record_property, long_cir_path):
    ou_sigma = float(corollary_cov(ModelSpec.ou(0.0, -1.0, 2.0))[0, 0])
    spec, path = long_cir_path
    formula = corollary_cov(spec)[0, 0]
    rep = time_ergodic_report(path, "identity", None, nbatches=1000)
    mc = rep.bm_variance[0, 0]
    rel = abs(mc - formula) / formula
    ok = ou_sigma == 2.0 and rel < 0.2
    _report(record_property, "C6", ok,
            f"OU_sigma={ou_sigma!r} CIR_formula={formula:.4f} CIR_batch_means={mc:.4f} rel={rel:.3f}")
    assert ok


@pytest.mark.slow
def test_c7_fclt(record_property):
    rep = fclt_diagnostic(_cir_jump(), replicates=500, horizon=400.0, dt=1e-2, seed=12345)
    ok = rep.quantile_correlation >= 0.98 and 0.9 <= rep.slope <= 1.1
    _report(record_property, "C7", ok,
            f"quantile_corr={rep.quantile_correlation:.4f} slope={rep.slope:.3f}")
    assert ok


def _ergodic_specs():
    rng = np.random.default_rng(8)
    specs = [
        ModelSpec.cir(1.0, -1.0, 1.0),
        ModelSpec.ou(0.0, -1.0, 2.0),
        _cir_jump(),
        _two_d(),
        ModelSpec.cir(0.5, -0.25, 0.5),
        ModelSpec.cir(1.0, -3.0, 1.0, lambda0=0.5, kappa=2.0,
                      jumps=JumpDist.product([exponential(1.0)])),
        ModelSpec.ou(0.2, -0.5, 1.0, lambda0=1.0, jumps=JumpDist.product([gaussian(0.0, 1.0)])),
    ]
    for d in (2, 3, 2):
        A = rng.normal(size=(d, d))
        beta = A - (np.max(np.linalg.eigvals(A).real) + 0.5) * np.eye(d)
        C = rng.normal(size=(d, d))
        specs.append(ModelSpec(d=d, m=0, a=C @ C.T, alpha=np.zeros((d, d, d)), b=rng.normal(size=d),
                               beta=beta, lambda0=0.0, kappa=np.zeros(d),
                               jumps=JumpDist.degenerate(np.zeros(d))))
    return specs


def _transient_specs():
    return [
        ModelSpec.cir(1.0, -1.0, 1.0, lambda0=0.5, kappa=4.0, jumps=JumpDist.product([exponential(2.0)])),
        ModelSpec.cir(0.5, -0.5, 0.5, lambda0=0.0, kappa=1.0, jumps=JumpDist.product([exponential(1.0)])),
        ModelSpec.cir(1.0, 0.2, 1.0),
    ]


def test_c8_lyapunov(record_property):
    probe = GeneratorProbe(POWER, p=2.0)
    erg = _ergodic_specs()
    assert len(erg) == 10
    passes = 0
    for spec in erg:
        assert classify(spec).classification == EXP_ERGODIC
        rep = lyapunov_scan(spec, probe)
        far = lyapunov_scan(spec, probe, radii=np.geomspace(100.0, 1e4, 20))
        passes += rep.status == "PASS" and far.status == "PASS" and far.k_star == 100.0
    fails = 0
    for spec in _transient_specs():
        rep = lyapunov_scan(spec, probe)
        found = find_transience_epsilon(spec)
        fails += rep.status == "FAIL" and found is not None and found[1] > 0
    ok = passes == 10 and fails == 3
    _report(record_property, "C8", ok, f"ergodic_pass={passes}/10 transient_fail_with_h>0={fails}/3")
    assert ok


@pytest.mark.slow
def test_c9_transience(record_property):
    jumps = JumpDist.product([exponential(2.0)])
    transient = ModelSpec.cir(1.0, -1.0, 1.0, lambda0=0.5, kappa=4.0, jumps=jumps)
    mirrored = ModelSpec.cir(1.0, -3.0, 1.0, lambda0=0.5, kappa=4.0, jumps=jumps)
    fractions = []
    for spec in (transient, mirrored):
        hits = hitting_times(spec, [1.0], 100.0, 50.0, 1000, 1e-3, 12345)
        fractions.append(float(escape_fractions(hits, [50.0])[0]))
    ok = fractions[0] >= 0.9 and fractions[1] <= 0.05
    _report(record_property, "C9", ok,
            f"escape_transient={fractions[0]:.3f} escape_mirrored={fractions[1]:.3f}")
    assert ok


@pytest.mark.slow
def test_c10_calibration(record_property):
    truth = ModelSpec.cir(1.0, -1.0, 1.0)
    start = time.perf_counter()
    skel = simulate_skeleton(truth, [1.0], 0.5, 100_000, 1e-3, 12345)
    res = fit(skel, truth.replace(beta=[[-0.5]]), ["beta"], seed=12345)
    elapsed = time.perf_counter() - start
    beta_hat = res.params["beta"]
    ok = abs(beta_hat + 1.0) <= 0.2 and elapsed < 300.0
    _report(record_property, "C10", ok, f"beta_hat={beta_hat:.4f} runtime={elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_c11_tv_proxy(record_property):
    spec = ModelSpec.cir(0.5, -0.25, 0.5)
    rep = tv_proxy_decay(spec, [0.5], [4.0], np.arange(1.0, 11.0), npaths=20_000, dt=1e-2)
    ok = rep.monotone and rep.slope < 0 and rep.r_squared >= 0.9
    _report(record_property, "C11", ok,
            f"slope={rep.slope:.4f} R2={rep.r_squared:.4f} monotone={rep.monotone}")
    assert ok
