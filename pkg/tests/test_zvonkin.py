import dataclasses

import numpy as np
import pytest

from hamswitch.model import PointDrift
from hamswitch.zvonkin import (GridSpec, ZvonkinError, contraction_ratio, gradient_bound,
                               injective_along_slices, lambda_scan, lipschitz_ratios,
                               self_convergence, solve_elliptic, transformed_drift)

SMALL = GridSpec(x_max=1.0, y_max=4.0, nx=8, ny=400)
REFERENCE_LAMBDA_STAR = 20.0


def with_b2(model, *drifts):
    co = model.coefficients
    return dataclasses.replace(model, coefficients=dataclasses.replace(co, b2=tuple(drifts)))


@pytest.mark.parametrize("lam", [1.0, 10.0, 100.0])
def test_constant_drift_exact(reference, lam):
    c = -1.3
    m = with_b2(reference.model, PointDrift("constant", c), PointDrift("constant", c))
    sol = solve_elliptic(m, 0, lam, SMALL)
    assert np.max(np.abs(sol.u - c / lam)) <= 1e-10 * abs(c / lam)
    assert gradient_bound(sol) <= 1e-8


def test_zero_drift_zero_solution(reference):
    m = with_b2(reference.model, PointDrift(), PointDrift())
    sol = solve_elliptic(m, 1, 3.0, SMALL)
    assert np.all(sol.u == 0.0)


def test_self_convergence_ratio(reference):
    conv = self_convergence(reference.model, 0, 10.0)
    assert 3.5 <= conv["ratio"] <= 4.5


def test_lambda_scan_and_pinned_lambda_star(reference):
    rows, lam_star = lambda_scan(reference.model, 0)
    gb = {r["lambda"]: r["gradient_bound"] for r in rows}
    assert gb[1.0] > gb[10.0] > gb[100.0]
    assert lam_star == REFERENCE_LAMBDA_STAR
    assert gb[lam_star] < 0.5
    for r in rows:
        assert r["sup_abs_f"] <= r["b2_sup"] / r["lambda"] * (1 + 1e-12)
        assert r["residual"] <= 1e-8 * (1 + r["b2_sup"])


def test_smooth_drift_residual(reference):
    # cosine-modulated sigma in regime 1 with a signed-power drift
    sol = solve_elliptic(reference.model, 1, 5.0, SMALL)
    assert sol.residual <= 1e-8 * (1 + sol.b2_sup)
    assert np.all(np.isfinite(sol.u))


def test_injectivity_and_contraction_when_bound_small(reference):
    sol = solve_elliptic(reference.model, 0, REFERENCE_LAMBDA_STAR, SMALL)
    assert gradient_bound(sol) < 0.5
    assert injective_along_slices(sol)
    assert contraction_ratio(sol, stride=10) <= 0.5


def test_transformed_drift_zero_case(reference):
    m = with_b2(reference.model, PointDrift(), PointDrift())
    import hamswitch.model as hm
    rates = hm.RateSpec(np.zeros((2, 2)), np.zeros((2, 2)))
    m = dataclasses.replace(m, rates=rates)
    sols = [solve_elliptic(m, j, 2.0, SMALL) for j in range(2)]
    z = np.array([[0.1, 0.2], [-0.5, 1.0]])
    np.testing.assert_array_equal(transformed_drift(z, 0, sols, m), [0.0, 0.0])


def test_transformed_drift_constant_case(reference):
    c, lam = 0.9, 4.0
    m = with_b2(reference.model, PointDrift("constant", c), PointDrift("constant", c))
    sols = [solve_elliptic(m, j, lam, SMALL) for j in range(2)]
    z = np.array([[0.3, -0.7], [0.0, 2.0]])
    q = m.rates.q_hat[0]
    want = c + sum(q[j] * (z[:, 1] + c / lam) for j in range(2))
    np.testing.assert_allclose(transformed_drift(z, 0, sols, m), want, rtol=1e-10, atol=1e-12)
    # the rate row sums to zero, so the rate terms cancel
    np.testing.assert_allclose(want, c, rtol=1e-12)


def test_lipschitz_ratios(reference):
    sols = [solve_elliptic(reference.model, j, REFERENCE_LAMBDA_STAR, GridSpec(ny=800))
            for j in range(2)]
    rows = lipschitz_ratios(sols, 0, reference.model, separations=(1e-1, 1e-2, 1e-3, 1e-4),
                            n_pairs=10_000)
    trans = [r["transformed"] for r in rows]
    raw = [r["raw_b2"] for r in rows]
    assert all(np.isfinite(trans)) and max(trans) < 20
    # raw Hoelder ratio grows like s^{alpha - 1}
    assert raw[0] < raw[1] < raw[2] < raw[3]
    assert raw[3] > 10 * max(trans)


def test_contract_errors(reference):
    with pytest.raises(ZvonkinError):
        solve_elliptic(reference.model, 0, 0.0, SMALL)
    with pytest.raises(ZvonkinError):
        solve_elliptic(reference.model, 5, 1.0, SMALL)
    sol = solve_elliptic(reference.model, 0, 1.0, SMALL)
    with pytest.raises(ZvonkinError):
        sol.interpolate([[0.0, 10.0]])
    with pytest.raises(ZvonkinError):
        GridSpec(nx=1)
