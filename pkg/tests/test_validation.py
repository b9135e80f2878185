import dataclasses

import numpy as np
import pytest

from hamswitch import testfns
from hamswitch.config import bundled
from hamswitch.model import Diffusion, FunctionalDrift, PointDrift, RateSpec, build_model
from hamswitch.montecarlo import estimate
from hamswitch.sde import integrate_batch
from hamswitch.segment import Segment
from hamswitch.validation import (Check, SuiteSettings, TestReport, feller_scan,
                                  girsanov_transfer_test, martingale_residual_test,
                                  mt_continuity_test, perturbation_ladder, reweight_identity_test,
                                  run_suite, zero_drift_bitwise_check)
from hamswitch.segment import distance_r


def test_report_pass_logic():
    rep = TestReport("x")
    rep.add(Check("a", True))
    assert rep.passed
    rep.add(Check("b", False, 1.0, 0.1, 0.3, -0.7))
    assert not rep.passed
    d = rep.to_dict()
    assert d["checks"][1]["margin"] == -0.7 and d["passed"] is False


def test_ladder_distances(reference):
    psis = perturbation_ladder(reference.initial, [1e-1, 1e-2, 1e-3])
    for dl, psi in zip([1e-1, 1e-2, 1e-3], psis):
        assert distance_r(reference.initial, psi) == pytest.approx(dl, rel=1e-9)


def test_martingale_constant_function_zero(reference):
    rep = martingale_residual_test(reference.model, [testfns.Constant(3.0)], reference.initial, 0,
                                   0.1, 0.2, 200, 1e-2, 1)
    assert all(c.estimate == 0.0 for c in rep.checks)
    assert rep.passed


def test_martingale_chain_only_small():
    cfg = bundled("chain_only")
    rep = martingale_residual_test(cfg.model, [testfns.RegimeValues((0.0, 1.0))], cfg.initial, 0,
                                   0.5, 1.0, 20_000, 1e-2, 3)
    assert rep.passed


def test_girsanov_zero_drift_bitwise(reference):
    chk = zero_drift_bitwise_check(reference.model, 0, reference.initial, 0.2, 500, 1e-2, 4)
    assert chk.passed


def test_girsanov_constant_drift_gaussian_oracle():
    c, T, y0 = 0.6, 0.5, 0.2
    m = build_model(0.0, 1.0, 1, [FunctionalDrift()], [PointDrift("constant", c)],
                    [Diffusion()], RateSpec(np.zeros((1, 1)), np.zeros((1, 1))))
    phi = Segment.constant([0.0, y0])
    idx = np.arange(50_000)
    direct = integrate_batch(m, phi, 0, T, 1e-2, 1, idx, mode="none").final.y[:, 0]
    ref = integrate_batch(m, phi, 0, T, 1e-2, 2, idx, mode="none", include_b2=False)
    rw = ref.final.y[:, 0] * ref.girsanov_weight
    for est in (estimate(direct), estimate(rw)):
        assert abs(est.mean - (y0 + c * T)) <= 3 * est.stderr


def test_reweight_state_independent_coincide():
    rates = RateSpec([[0, 0.7], [0.4, 0]], np.zeros((2, 2)), "constant")
    m = build_model(0.1, 1.0, 1, [FunctionalDrift("lag", 0.3)] * 2,
                    [PointDrift("signed_power", 1.0), PointDrift("signed_power", -1.0)],
                    [Diffusion()] * 2, rates)
    phi = Segment.constant([0.0, 0.1])
    idx = np.arange(300)
    a = integrate_batch(m, phi, 0, 0.5, 1e-2, 6, idx, mode="state_dependent")
    b = integrate_batch(m, phi, 0, 0.5, 1e-2, 6, idx, mode="markovian")
    assert np.all(b.switch_weight == 1.0)
    np.testing.assert_array_equal(a.final.y, b.final.y)
    np.testing.assert_array_equal(a.final.regime, b.final.regime)


def test_reweight_f_one_matches_moment(reference):
    rep = reweight_identity_test(reference.model, reference.initial, 0, 0.5, 4000, 1e-2, 5,
                                 fns=[testfns.Constant(1.0)])
    c = rep.checks[0]
    assert c.data["first"]["mean"] == 1.0
    assert abs(c.data["second"]["mean"] - 1.0) <= 3 * c.data["second"]["stderr"]


def test_mt_continuity_identity_and_state_independent(reference):
    rep = mt_continuity_test(reference.model, reference.initial, [0.0], 0, 0.5, 200, 1e-2, 1)
    assert rep.checks[0].estimate == 0.0
    cfg = bundled("feller_linear")
    rep = mt_continuity_test(cfg.model, cfg.initial, [0.1, 0.01], 0, 0.5, 200, 1e-2, 1)
    assert rep.checks[0].estimate == 0.0 and rep.checks[1].estimate == 0.0


def test_feller_identity(reference):
    rep = feller_scan(reference.model, reference.initial, [0.0], 0, 0.2, 100, 1e-2, 2,
                      linear_N=16)
    table = [c for c in rep.checks if c.name.startswith("|dE f| table")]
    assert all(d["mean"] == 0.0 for c in table for d in c.data["differences"])


def test_suites_small_scale_deterministic():
    st = SuiteSettings(scale=0.01, seed=5)
    a = run_suite("reweight", st)
    b = run_suite("reweight", st)
    assert [c.estimate for c in a[0].checks] == [c.estimate for c in b[0].checks]


def test_unknown_suite():
    with pytest.raises(ValueError):
        run_suite("nope")
