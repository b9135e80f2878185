import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hamswitch.segment import (Segment, SegmentError, distance_r, evaluate, extend,
                               linear_combination, r_norm, ramp_bump, random_segment,
                               shift_append, weighted_history_integral)


def test_evaluate_constant_tail():
    seg = Segment.constant([3.0, 4.0])
    np.testing.assert_array_equal(evaluate(seg, -1.0), [3.0, 4.0])


def test_evaluate_linear_interpolation_midpoint():
    seg = Segment.from_grid([-0.1, 0.0], [[0.0, 0.0], [1.0, 1.0]], 1.0)
    np.testing.assert_allclose(evaluate(seg, -0.05), [0.5, 0.5], rtol=1e-12)


def test_evaluate_exponential_tail():
    seg = Segment.exponential([1.0, 0.0], 1.0)
    np.testing.assert_allclose(evaluate(seg, -2.0), [math.e ** 2, 0.0], rtol=1e-12)


def test_evaluate_exact_nodes_and_domain():
    seg = Segment.from_grid([-0.2, -0.1, 0.0], [[1, 2], [3, 4], [5, 6]], 1.0)
    np.testing.assert_array_equal(evaluate(seg, np.array([-0.2, -0.1, 0.0])),
                                  [[1, 2], [3, 4], [5, 6]])
    with pytest.raises(SegmentError):
        evaluate(seg, 0.1)


def test_r_norm_examples():
    assert r_norm(Segment.constant([3.0, 4.0], 2.5)) == pytest.approx(5.0, rel=1e-12)
    assert r_norm(Segment.exponential([1.0, 0.0], 1.0)) == pytest.approx(1.0, rel=1e-12)
    seg = Segment.from_grid([-1.0, 0.0], [[10.0, 0.0], [1.0, 0.0]], 1.0, tail="zero")
    # node/midpoint rule: the node at -1 wins
    assert r_norm(seg) == pytest.approx(10 * math.exp(-1), rel=1e-12)
    # the true supremum 9 e^{-8/9} sits inside the unit cell; the rule
    # underestimates it by less than 1% at this coarse step
    th = np.arange(-1.0, 1e-12, 1e-4)
    dense = np.max(np.exp(th) * np.abs(10.0 + (th + 1.0) * (1.0 - 10.0)))
    assert dense == pytest.approx(9 * math.exp(-8 / 9), rel=1e-8)
    assert r_norm(seg) <= dense
    assert (dense - r_norm(seg)) / dense < 0.01


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([0.1, 0.05, 0.025]))
def test_r_norm_midpoint_rule_gap(seed, step):
    rng = np.random.default_rng(seed)
    seg = random_segment(rng, 1.0, 1, 12, step, "zero")
    th = np.union1d(np.linspace(seg.times[0], 0.0, 20001), seg.times)
    dense = np.max(np.exp(th) * np.linalg.norm(evaluate(seg, th), axis=1))
    assert r_norm(seg) <= dense * (1 + 1e-12)
    # quadratic in the step relative to the local slope of the weighted path
    slope = np.max(np.abs(np.diff(seg.values, axis=0))) / step + dense
    assert dense - r_norm(seg) <= slope * step ** 2


def test_distance_examples():
    a = Segment.constant([3.0, 4.0])
    assert distance_r(a, a) == 0.0
    assert distance_r(a, Segment.constant([0.0, 0.0])) == pytest.approx(5.0)
    assert distance_r(Segment.constant([1.5, 1.5]), Segment.constant([0.5, 0.5])) == pytest.approx(
        math.sqrt(2))


def test_distance_contract_errors():
    with pytest.raises(SegmentError):
        distance_r(Segment.constant([1.0, 1.0], 1.0), Segment.constant([1.0, 1.0], 2.0))
    with pytest.raises(SegmentError):
        distance_r(Segment.constant([1.0, 1.0]), Segment.constant([1.0, 1.0, 1.0, 1.0]))


def test_shift_append_examples():
    c = Segment.constant([0.3, -0.2])
    s = shift_append(c, 0.1, [0.3, -0.2])
    th = np.linspace(-3, 0, 31)
    np.testing.assert_allclose(evaluate(s, th), evaluate(c, th), rtol=0, atol=1e-15)
    seg = random_segment(np.random.default_rng(1), 1.0, 1, 10, 0.1, "constant")
    s1 = shift_append(seg, 0.1, [1.0, 2.0])
    np.testing.assert_array_equal(evaluate(s1, -0.1), seg.head)
    twice = shift_append(shift_append(seg, 0.1, [1.0, 2.0]), 0.1, [3.0, 4.0])
    once = extend(seg, 0.1, [[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_allclose(twice.times, once.times, atol=1e-15)
    np.testing.assert_array_equal(twice.values, once.values)
    with pytest.raises(SegmentError):
        shift_append(seg, 0.0, [1.0, 2.0])


def test_shift_append_exponential_tail_consistent():
    seg = Segment.exponential([1.0, -1.0], 0.7)
    s = shift_append(seg, 0.25, [5.0, 5.0])
    th = np.linspace(-6.0, -0.25, 40)
    np.testing.assert_allclose(evaluate(s, th), evaluate(seg, th + 0.25), rtol=1e-12)


def test_weighted_integral_examples():
    c = np.array([0.4, -1.2])
    np.testing.assert_allclose(weighted_history_integral(Segment.constant(c), 1.0), c, rtol=1e-12)
    np.testing.assert_array_equal(weighted_history_integral(Segment.constant([0.0, 0.0]), 1.0),
                                  [0.0, 0.0])
    v = np.array([1.0, 2.0])
    np.testing.assert_allclose(weighted_history_integral(Segment.exponential(v, 1.0), 2.0), v,
                               rtol=1e-12)
    with pytest.raises(SegmentError):
        weighted_history_integral(Segment.exponential(v, 1.0), 1.0)


def test_weighted_integral_bounded_map_on_exponential_tail():
    seg = Segment.exponential([0.5, -0.5], 1.0)
    got = weighted_history_integral(seg, 0.5, "tanh")
    # quadrature oracle on the closed form integrand
    from scipy.integrate import quad
    want = quad(lambda t: math.exp(0.5 * t) * math.tanh(0.5 * math.exp(-t)), -60, 0, limit=400)[0]
    assert got[0] == pytest.approx(want, rel=1e-8)
    assert got[1] == pytest.approx(-want, rel=1e-8)


def test_weighted_integral_first_order_convergence():
    def integral(step):
        t = np.arange(-5.0, 1e-12, step)
        t[-1] = 0.0
        vals = np.column_stack([np.sin(3 * t), np.cos(t)])
        return weighted_history_integral(Segment.from_grid(t, vals, 1.0, "zero"), 1.0)

    exact_tail = 0.0
    e = [np.abs(integral(h) - integral(1e-4)) for h in (0.02, 0.01, 0.005)]
    assert exact_tail == 0.0
    assert np.all(e[0] / e[1] > 1.9) and np.all(e[1] / e[2] > 1.9)


def test_ramp_bump_unit_norm():
    b = ramp_bump(1.3, [1.0, 1.0, 0.0, 1.0])
    assert r_norm(b) == pytest.approx(1.0, rel=1e-12)
    phi = Segment.constant([0.5, 0.5, 0.1, 0.2], 1.3)
    psi = linear_combination(phi, b, 1.0, 1e-3)
    assert distance_r(phi, psi) == pytest.approx(1e-3, rel=1e-9)


seeds = st.integers(0, 2 ** 32 - 1)


@given(seeds, st.sampled_from(["constant", "exponential", "zero"]))
def test_norm_axioms(seed, tail):
    rng = np.random.default_rng(seed)
    a = random_segment(rng, 1.0, 1, 8, 0.1, tail)
    assert r_norm(a) >= 0
    zero = linear_combination(a, a, 1.0, -1.0)
    assert r_norm(zero) == 0.0
    c = float(rng.uniform(-3, 3))
    scaled = linear_combination(a, a, c, 0.0)
    assert r_norm(scaled) == pytest.approx(abs(c) * r_norm(a), rel=1e-12, abs=1e-300)


@given(seeds)
def test_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_segment(rng, 0.8, 1, int(rng.integers(2, 12)), 0.1) for _ in range(3))
    assert distance_r(a, c) <= distance_r(a, b) + distance_r(b, c) + 1e-12


@given(seeds, st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_norm_nonincreasing_in_r(seed, r1, r2):
    lo, hi = sorted((r1, r2))
    rng = np.random.default_rng(seed)
    base = random_segment(rng, 1.0, 1, 10, 0.1, rng.choice(["constant", "zero"]))
    a = Segment(lo, base.times, base.values, base.tail_const, base.tail_exp)
    b = Segment(hi, base.times, base.values, base.tail_const, base.tail_exp)
    assert r_norm(b) <= r_norm(a) + 1e-12


@given(seeds, st.integers(1, 30))
def test_shift_consistency_with_trajectory(seed, n):
    rng = np.random.default_rng(seed)
    h = 0.05
    seg0 = random_segment(rng, 1.0, 1, 6, h, "constant")
    path = rng.standard_normal((n, 2))
    seg = seg0
    for row in path:
        seg = shift_append(seg, h, row)
    # evaluate(Z_t, theta) equals the concatenated trajectory at t + theta
    full_t = np.concatenate([seg0.times, h * np.arange(1, n + 1)])
    full_v = np.vstack([seg0.values, path])
    th = rng.uniform(full_t[0] - n * h, 0.0, size=20)
    want = np.column_stack([np.interp(th + n * h, full_t, full_v[:, j]) for j in range(2)])
    np.testing.assert_allclose(evaluate(seg, th), want, rtol=1e-12, atol=1e-12)
