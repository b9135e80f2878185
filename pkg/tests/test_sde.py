import numpy as np
import pytest
from scipy import stats

from hamswitch.model import Diffusion, FunctionalDrift, PointDrift, RateSpec, build_model
from hamswitch.segment import Segment, linear_combination, ramp_bump
from hamswitch.sde import (SimulationError, exit_time_diagnostic, integrate_batch, n_steps_for,
                           simulate_coupled_pair, simulate_hybrid, step_hamiltonian)


def one_regime(a=0.0, b=1.0, b1=None, b2=None, sigma=1.0):
    return build_model(a, b, 1, [b1 or FunctionalDrift()], [b2 or PointDrift()],
                       [Diffusion("constant", sigma)], RateSpec(np.zeros((1, 1)), np.zeros((1, 1))))


def test_step_examples():
    phi = Segment.constant([1.0, 2.0])
    x, y = step_hamiltonian([1.0], [2.0], phi, 0, 0.01, [0.0], one_regime(a=0.5))
    assert x[0] == pytest.approx(1.025) and y[0] == 2.0
    x, y = step_hamiltonian([1.0], [2.0], phi, 0, 0.01, [0.1], one_regime())
    assert y[0] == pytest.approx(2.1) and x[0] == pytest.approx(1.02)
    m = one_regime(b2=PointDrift("signed_power", 1.0, 0.5))
    x, y = step_hamiltonian([0.0], [4.0], Segment.constant([0.0, 4.0]), 0, 0.01, [0.0], m)
    assert y[0] == pytest.approx(4.02)
    _, y = step_hamiltonian([0.0], [4.0], Segment.constant([0.0, 4.0]), 0, 0.01, [0.0], m,
                            include_b2=False)
    assert y[0] == 4.0
    with pytest.raises(SimulationError):
        step_hamiltonian([0.0], [0.0], phi, 0, 0.0, [0.0], m)


def test_batch_step_matches_scalar_step(reference):
    m = reference.model
    path = simulate_hybrid(m, reference.initial, 0, 0.2, 0.01, seed=3, index=5,
                           mode="state_dependent")
    for n in range(path.n_steps):
        k = int(path.regime[n])
        x, y = step_hamiltonian(path.x[n], path.y[n], path.segment(n), k, path.h, path.dW[n], m)
        np.testing.assert_allclose(x, path.x[n + 1], rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(y, path.y[n + 1], rtol=1e-12, atol=1e-14)


def test_constant_path_without_dynamics():
    m = build_model(0.0, 0.0, 1, [FunctionalDrift()], [PointDrift()], [Diffusion("constant", 0.0)],
                    RateSpec(np.zeros((1, 1)), np.zeros((1, 1))))
    p = simulate_hybrid(m, Segment.constant([0.3, -0.7]), 0, 1.0, 0.1, mode="none")
    assert np.all(p.x == 0.3) and np.all(p.y == -0.7)


def test_step_grid_contract():
    assert n_steps_for(1.0, 1e-3) == 1000
    with pytest.raises(SimulationError):
        n_steps_for(1.0, 0.3)
    with pytest.raises(SimulationError):
        n_steps_for(1e3, 1e-5)


def test_increments_have_variance_h(linear):
    res = integrate_batch(linear.model, linear.initial, 0, 0.1, 1e-2, 1, np.arange(4000),
                          record=True, mode="none")
    v = res.dW.ravel()
    _, p = stats.kstest(v / np.sqrt(1e-2), "norm")
    assert p > 1e-3


def test_position_is_noise_free_reconstruction(reference):
    p = simulate_hybrid(reference.model, reference.initial, 0, 1.0, 1e-3, seed=2, index=0)
    a, b = reference.model.coefficients.a, reference.model.coefficients.b
    x = p.x[0].copy()
    for n in range(p.n_steps):
        x = x + (a * x + b * p.y[n]) * p.h
        assert np.max(np.abs(x - p.x[n + 1])) <= 1e-12
        x = p.x[n + 1]


def test_regime_constant_between_jumps(reference):
    p = simulate_hybrid(reference.model, reference.initial, 0, 2.0, 1e-3, seed=4, index=1)
    steps = [s for _, s, _, _ in p.jumps]
    changes = np.nonzero(np.diff(p.regime))[0] + 1
    assert set(changes) <= set(steps)
    for t, s, k_from, k_to in p.jumps:
        assert (s - 1) * p.h < t <= s * p.h + 1e-12
        assert k_from != k_to


def test_markov_and_thinned_equal_in_law_chi_square():
    rates = RateSpec([[0, 0.8], [1.2, 0]], np.zeros((2, 2)), "constant")
    m = build_model(0.0, 1.0, 1, [FunctionalDrift()] * 2, [PointDrift()] * 2,
                    [Diffusion()] * 2, rates)
    phi = Segment.constant([0.0, 0.0])
    idx = np.arange(20_000)
    a = integrate_batch(m, phi, 0, 1.0, 0.05, 1, idx, mode="markovian").final.n_jumps
    b = integrate_batch(m, phi, 0, 1.0, 0.05, 2, idx, mode="state_dependent").final.n_jumps
    top = 4
    ta = np.bincount(np.minimum(a, top), minlength=top + 1)
    tb = np.bincount(np.minimum(b, top), minlength=top + 1)
    _, p, _, _ = stats.chi2_contingency(np.vstack([ta, tb]))
    assert p > 1e-3


def test_coupled_pair_identity(reference):
    phi = reference.initial
    p1, p2 = simulate_coupled_pair(reference.model, phi, phi, 0, 0.5, 1e-2, seed=1, index=3)
    np.testing.assert_array_equal(p1.z, p2.z)
    np.testing.assert_array_equal(p1.regime, p2.regime)


def test_coupled_pair_shares_chain(reference):
    phi = reference.initial
    psi = linear_combination(phi, ramp_bump(1.0, [1.0, 1.0]), 1.0, 0.2)
    for i in range(20):
        p1, p2 = simulate_coupled_pair(reference.model, phi, psi, 0, 1.0, 1e-2, seed=2, index=i)
        np.testing.assert_array_equal(p1.regime, p2.regime)
        np.testing.assert_array_equal(p1.dW, p2.dW)


def test_exit_time_zero_noise():
    m = one_regime(sigma=0.0, b=0.0)
    rep = exit_time_diagnostic(m, Segment.constant([0.0, 0.5]), 0, [2.0, 4.0], 1.0, 2.0, 200, 1e-2)
    assert rep.probabilities == [0.0, 0.0] and rep.passed


def test_exit_time_monotone_and_decay():
    m = one_regime()
    rep = exit_time_diagnostic(m, Segment.constant([0.0, 0.0]), 0, [2.0, 4.0, 8.0], 1.0, 2.0,
                               10_000, 1e-2, seed=3)
    assert rep.monotone and all(rep.within_bound)
    p, se = np.array(rep.probabilities), np.array(rep.stderrs)
    # doubling R at least halves the probability in the tail (CI overlap tolerance)
    assert p[1] - 3 * se[1] <= (p[0] + 3 * se[0]) / 2
    assert p[2] - 3 * se[2] <= (p[1] + 3 * se[1]) / 2


def test_exit_time_contract_errors():
    m = one_regime(a=1.0)
    with pytest.raises(SimulationError):
        exit_time_diagnostic(m, Segment.constant([0.0, 0.0]), 0, [2.0], 1.0, 2.0, 10, 0.1)
    with pytest.raises(SimulationError):
        exit_time_diagnostic(m, Segment.constant([0.0, 1.5]), 0, [2.0], 1.0, 10.0, 10, 0.1)


def test_batch_paths_are_index_addressable(reference):
    m, phi = reference.model, reference.initial
    full = integrate_batch(m, phi, 0, 0.5, 1e-2, 7, np.arange(10), record=True)
    part = integrate_batch(m, phi, 0, 0.5, 1e-2, 7, np.array([3, 8]), record=True)
    np.testing.assert_array_equal(full.trajectory[[3, 8]], part.trajectory)
    np.testing.assert_array_equal(full.final.log_switch[[3, 8]], part.final.log_switch)


def test_functional_drift_segment_sees_history():
    # lag drift reads the initial history until t exceeds the lag
    m = one_regime(b1=FunctionalDrift("lag", 1.0, lag=0.5), sigma=0.0, b=0.0)
    p = simulate_hybrid(m, Segment.constant([0.0, 0.4]), 0, 0.3, 0.1, mode="none")
    # constant history 0.4: y grows by tanh(0.4) h per step
    np.testing.assert_allclose(np.diff(p.y[:, 0]), np.tanh(0.4) * 0.1, rtol=1e-12)
