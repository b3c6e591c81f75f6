import math

import numpy as np
import pytest

from r2d import numerics, sdp, synthesis
from r2d.fixtures import SEC4_SOLUTION, sec4_reference_certificate, sec4_system
from r2d.model import ModeMatrices, SwitchedRoesserSystem
from r2d.synthesis import (
    DwellTimeScheme,
    SynthesisFailure,
    bound_constants,
    extract_gain,
    step1_solve_matched,
    step2_solve_mismatched,
    step3_minimize_mu,
    step4_dwell_time,
    theoretical_decay,
)


@pytest.fixture(scope="module")
def cert():
    return synthesis.synthesize(sec4_system(), 0.6, 1.2, seed=0, ratio=8.0)


def single_mode_system():
    m = sec4_system().modes[0]
    return SwitchedRoesserSystem(1, 1, 2, 3, (m,))


# step 1


def test_step1_sec4_feasible(cert):
    assert len(cert.matched) == 2
    for m in cert.matched:
        assert m.margin > 0
        assert np.allclose(m.K @ m.X, m.W, atol=1e-9)


def test_gain_extraction_reference():
    s = SEC4_SOLUTION
    for k in (1, 2):
        assert np.allclose(extract_gain(s["W"][k], s["X"][k]), s["K"][k], atol=1e-3)


def test_gain_extraction_roundtrip():
    rng = np.random.default_rng(0)
    for _ in range(50):
        g = rng.standard_normal((3, 3))
        X = g @ g.T + 0.5 * np.eye(3)
        W = rng.standard_normal((2, 3))
        assert np.allclose(extract_gain(W, X) @ X, W, atol=1e-9)


def test_step1_uncontrollable_unstable_fails():
    a = 0.9  # a^2 >= alpha, no input authority
    z = np.zeros((2, 2))
    mode = ModeMatrices(a * np.eye(2), z, z[:, :1], z[:, :1], z[:1], z[:1], z[:1, :1])
    sys = SwitchedRoesserSystem(1, 1, 1, 1, (mode,))
    with pytest.raises(SynthesisFailure) as err:
        step1_solve_matched(sys, 0.6)
    assert "matched[1]" in str(err.value) and "mode 1" in str(err.value)
    assert err.value.stage == "step 1"


# step 2


def test_step2_reference_gains_feasible():
    s = SEC4_SOLUTION
    out = step2_solve_mismatched(sec4_system(), [s["K"][1], s["K"][2]], 1.2)
    assert set(out) == {(0, 1), (1, 0)}


def test_step2_single_mode_is_vacuous():
    assert step2_solve_mismatched(single_mode_system(), [np.zeros((2, 2))], 1.2) == {}


def test_step2_failure_suggests_beta_ladder():
    with pytest.raises(SynthesisFailure) as err:
        step2_solve_mismatched(sec4_system(), [np.zeros((2, 2))] * 2, 1.2)
    assert "larger beta" in str(err.value)
    assert synthesis.beta_retry_ladder(1.2)[0] == pytest.approx(1.5)
    assert max(synthesis.beta_retry_ladder(1.2)) <= 4.0


# step 3


def test_mu_identical_matrices():
    I = np.eye(2)
    res = step3_minimize_mu([I, I], [I, I], {(0, 1): I, (1, 0): I}, {(0, 1): I, (1, 0): I}, 0.5, 0.5, 2, 3)
    assert (res.mu1, res.mu2, res.mu) == (1.0, 1.0, 1.0)
    assert not res.floor_applied


def test_mu_reference_values():
    c = sec4_reference_certificate()
    assert c.mu1 == pytest.approx(1.5694, rel=1e-2)
    assert c.mu2 == pytest.approx(9.1561, rel=1e-2)
    assert c.mu == pytest.approx(0.125)
    assert c.mu1 * c.mu2 * c.mu == pytest.approx(1.796, abs=2e-3)
    assert not c.mu_floor_applied


def test_mu_tightness(cert):
    inv = np.linalg.inv
    worst1 = -np.inf
    for (k, l), s in cert.mismatched.items():
        for a, b in ((cert.matched[l].X, s.X), (cert.matched[l].Y, s.Y)):
            gap = np.linalg.eigvalsh(inv(a) - cert.mu1 * inv(b))[-1]
            assert gap <= 1e-9
            worst1 = max(worst1, np.linalg.eigvalsh(inv(a) - cert.mu1 * (1 - 1e-6) * inv(b))[-1])
    assert worst1 > 0


def test_mu_floor_recorded():
    I = np.eye(2)
    res = step3_minimize_mu([I, I], [I, I], {(0, 1): I, (1, 0): I}, {(0, 1): I, (1, 0): I}, 0.6, 1.2, 2, 3)
    # Y comparison already forces mu2 = 1/mu, so the floor is not needed
    assert res.mu1 * res.mu2 * res.mu >= 1 - 1e-12
    res = step3_minimize_mu([I, I], None, {(0, 1): I, (1, 0): I}, None, 0.6, 1.2, 2, 3)
    assert res.floor_applied
    assert res.mu1 * res.mu2 * res.mu >= 1


def test_mu_rejects_non_pd():
    I = np.eye(2)
    for bad in (np.zeros((2, 2)), -I):
        with pytest.raises(numerics.NotPositiveDefinite):
            step3_minimize_mu([I, bad], None, {(0, 1): I, (1, 0): I}, None, 0.6, 1.2, 2, 3)


# step 4


def test_lambda_star_from_ratio():
    lm, lp = -math.log(0.6), math.log(1.2)
    res = step4_dwell_time(1.5694, 9.1561, lm, lp, ratio=8.0)
    assert res.lambda_star == pytest.approx(0.4338, abs=1e-4)
    assert res.tau_a_star == pytest.approx(6.15, abs=0.02)
    assert res.required_ratio == pytest.approx(8.0, abs=1e-10)


def test_ratio_consistency_sweep():
    lm, lp = -math.log(0.6), math.log(1.2)
    for ratio in np.linspace(0.5, 50, 40):
        try:
            res = step4_dwell_time(1.2, 3.0, lm, lp, ratio=float(ratio))
        except ValueError:
            continue
        assert res.required_ratio == pytest.approx(ratio, abs=1e-10 * max(1, ratio))


def test_unit_mu_product_zero_dwell():
    assert step4_dwell_time(1.0, 1.0, 0.5, 0.2, lambda_star=0.3).tau_a_star == 0.0


def test_step4_argument_checks():
    with pytest.raises(ValueError):
        step4_dwell_time(1.0, 2.0, 0.5, 0.2, lambda_star=0.6)
    with pytest.raises(ValueError):
        step4_dwell_time(1.0, 2.0, 0.5, 0.2, lambda_star=0.1, ratio=3.0)
    with pytest.raises(ValueError):
        step4_dwell_time(1.0, 2.0, 0.5, 0.2)


# bound constants and decay


def test_bound_constants_identity():
    assert bound_constants([np.eye(2)], [np.eye(2)], 2, 3) == (4.0, 1.0)


def test_bound_constants_homogeneous():
    rng = np.random.default_rng(1)
    P = [np.diag(rng.uniform(0.5, 2, 2)) for _ in range(4)]
    Q = [np.diag(rng.uniform(0.5, 2, 2)) for _ in range(4)]
    z1, z2 = bound_constants(P, Q, 2, 3)
    s1, s2 = bound_constants([10 * p for p in P], [10 * q for q in Q], 2, 3)
    assert s1 == pytest.approx(10 * z1) and s2 == pytest.approx(10 * z2)
    assert z1 >= z2 > 0


def test_bound_constants_reference_positive():
    c = sec4_reference_certificate()
    assert c.zeta1 >= c.zeta2 > 0


def test_decay_at_origin_and_exponent():
    c = sec4_reference_certificate()
    scheme = DwellTimeScheme(6.5, 1.0)
    base = (c.zeta1 / c.zeta2) * max(c.mu1, 1) * (c.mu1 * c.mu2)
    assert theoretical_decay(c, scheme, 10, 10) == pytest.approx(base)
    rate = math.log(c.mu1 * c.mu2) / 6.5 - c.lambda_star
    assert rate == pytest.approx(-0.0238, abs=1e-3)
    assert theoretical_decay(c, scheme, 10, 11) / theoretical_decay(c, scheme, 10, 10) == pytest.approx(math.exp(rate))


def test_decay_monotone_above_tau_star(cert):
    scheme = DwellTimeScheme.from_certificate(cert, cert.tau_a_star * 1.1)
    vals = [theoretical_decay(cert, scheme, 5, D) for D in range(5, 80)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_decay_argument_checks(cert):
    with pytest.raises(ValueError):
        theoretical_decay(cert, DwellTimeScheme(6.5), 10, 9)
    with pytest.raises(ValueError):
        DwellTimeScheme.from_certificate(cert, cert.tau_a_star * 0.5)


# whole procedure


def test_certificate_invariants(cert):
    assert cert.mu1 * cert.mu2 * cert.mu >= 1
    assert 0 < cert.lambda_star < cert.lambda_minus
    assert cert.tau_a_star > 0
    assert cert.zeta1 >= cert.zeta2 > 0
    assert cert.mu == pytest.approx(0.125)
    assert cert.required_ratio == pytest.approx(8.0)


def test_certificate_recheck(cert):
    for c in synthesis.check_certificate(sec4_system(), cert):
        assert c.lambda_max <= -c.delta / 2
        assert all(v > 0 for v in c.pd_min.values())


def test_reference_certificate_recheck():
    checks = synthesis.check_certificate(sec4_system(), sec4_reference_certificate())
    assert len(checks) == 4
    assert all(c.lambda_max <= 1e-3 for c in checks)


def test_synthesize_deterministic(cert):
    again = synthesis.synthesize(sec4_system(), 0.6, 1.2, seed=0, ratio=8.0)
    for a, b in zip(cert.matched, again.matched):
        assert np.array_equal(a.K, b.K)
    assert cert.tau_a_star == again.tau_a_star


def test_synthesize_argument_checks():
    with pytest.raises(ValueError):
        synthesis.synthesize(sec4_system(), 1.2, 1.5, ratio=8.0)
    with pytest.raises(ValueError):
        synthesis.synthesize(sec4_system(), 0.6, 1.2)


def test_delay_free_synthesis():
    sys = sec4_system().without_delay()
    c = synthesis.synthesize(sys, 0.6, 1.2, ratio=8.0)
    assert c.mu == 1.0
    for m in c.matched:
        assert not m.Y.any()
    for chk in synthesis.check_certificate(sys, c):
        assert chk.lambda_max <= -chk.delta / 2


def test_single_mode_synthesis():
    c = synthesis.synthesize(single_mode_system(), 0.6, 1.2, ratio=8.0)
    assert c.mismatched == {}
    assert (c.mu1, c.mu2) == (1.0, 1.0)
    assert c.tau_a_star == 0.0


def test_solver_config_passthrough():
    cfg = sdp.SolverConfig(max_iter=1, restarts=1, target_margin=100.0, stall_window=10**6)
    with pytest.raises(SynthesisFailure):
        synthesis.synthesize(sec4_system(), 0.6, 1.2, ratio=8.0, config=cfg)
