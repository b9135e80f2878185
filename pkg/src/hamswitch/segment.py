"""Infinite-history segments in the exponentially weighted path space.

A segment is a path ``phi: (-inf, 0] -> R^{2d}`` stored as a recorded grid
``(theta_i, value_i)`` ending at ``theta = 0`` plus an analytic tail used for
``theta < theta_0``.  The tail has the affine form::

    phi(theta) = u + exp(-r * theta) * v

which covers the three supported families (constant ``v = 0``, exponential
``u = 0``, zero) and is closed under the linear combinations needed for
differences of segments with the same decay rate.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

__all__ = [
    "Segment",
    "SegmentError",
    "TRANSFORMS",
    "distance_r",
    "linear_combination",
    "random_segment",
    "ramp_bump",
    "shift_append",
    "weighted_history_integral",
]

TAIL_FAMILIES = ("constant", "exponential", "zero")

#: componentwise maps available to weighted history integrals; value is
#: (function, bounded?)
TRANSFORMS: dict[str, tuple[Callable[[np.ndarray], np.ndarray], bool]] = {
    "identity": (lambda v: v, False),
    "tanh": (np.tanh, True),
    "clip": (lambda v: np.clip(v, -1.0, 1.0), True),
}


class SegmentError(ValueError):
    """Raised for invalid segment construction or out-of-domain queries."""


@dataclass(frozen=True, eq=False)
class Segment:
    """Immutable history path with an analytic tail and a recorded grid.

    Parameters
    ----------
    decay_rate : float
        The ``r`` of the weighted norm, ``||phi||_r = sup e^{r theta}|phi(theta)|``.
    times : ndarray, shape (n,)
        Strictly increasing nonpositive grid, ``times[-1] == 0``.
    values : ndarray, shape (n, 2d)
        Path values at the grid times.
    tail_const, tail_exp : ndarray, shape (2d,)
        Tail coefficients ``u`` and ``v``; the tail is used for ``theta < times[0]``.
    """

    decay_rate: float
    times: np.ndarray
    values: np.ndarray
    tail_const: np.ndarray
    tail_exp: np.ndarray

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[None, :]
        if self.decay_rate <= 0:
            raise SegmentError("decay_rate must be positive")
        if times.ndim != 1 or len(times) == 0 or len(times) != len(values):
            raise SegmentError("times and values must have matching nonzero length")
        if times[-1] != 0.0:
            raise SegmentError("the last grid time must be exactly 0")
        if np.any(np.diff(times) <= 0):
            raise SegmentError("grid times must be strictly increasing")
        if values.shape[1] % 2:
            raise SegmentError("segment values must live in R^{2d}")
        u = np.broadcast_to(np.asarray(self.tail_const, dtype=float), values.shape[1:]).copy()
        v = np.broadcast_to(np.asarray(self.tail_exp, dtype=float), values.shape[1:]).copy()
        for arr in (times, values, u, v):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "tail_const", u)
        object.__setattr__(self, "tail_exp", v)

    # -- constructors -----------------------------------------------------
    @classmethod
    def constant(cls, value, decay_rate: float = 1.0) -> Segment:
        """Segment equal to ``value`` for all ``theta <= 0``."""
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(decay_rate, np.array([0.0]), value[None, :], value, np.zeros_like(value))

    @classmethod
    def exponential(cls, value, decay_rate: float = 1.0) -> Segment:
        """Segment ``e^{-r theta} value``; its weighted norm is ``|value|``."""
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(decay_rate, np.array([0.0]), value[None, :], np.zeros_like(value), value)

    @classmethod
    def from_grid(cls, times, values, decay_rate: float = 1.0, tail: str = "constant",
                  tail_value=None) -> Segment:
        """Build a segment from recorded nodes and a tail family name.

        For the ``constant`` and ``exponential`` families the tail parameter
        defaults to the value that makes the path continuous at the first
        node.  An explicit ``tail_value`` must agree with that node.
        """
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        first = values[0]
        zeros = np.zeros_like(first)
        if tail == "zero":
            return cls(decay_rate, times, values, zeros, zeros)
        if tail == "constant":
            implied = first
        elif tail == "exponential":
            implied = np.exp(decay_rate * times[0]) * first
        else:
            raise SegmentError(f"unknown tail family {tail!r}; expected one of {TAIL_FAMILIES}")
        if tail_value is not None:
            tail_value = np.broadcast_to(np.asarray(tail_value, dtype=float), first.shape)
            if not np.allclose(tail_value, implied, rtol=1e-12, atol=1e-12):
                raise SegmentError("tail value is discontinuous with the first grid node")
            implied = tail_value
        if tail == "constant":
            return cls(decay_rate, times, values, implied, zeros)
        return cls(decay_rate, times, values, zeros, implied)

    # -- basic properties -------------------------------------------------
    @property
    def dimension(self) -> int:
        return self.values.shape[1] // 2

    @property
    def grid_start(self) -> float:
        return float(self.times[0])

    @property
    def tail(self) -> str:
        has_u = bool(np.any(self.tail_const))
        has_v = bool(np.any(self.tail_exp))
        if has_u and has_v:
            return "mixed"
        if has_v:
            return "exponential"
        return "constant" if has_u else "zero"

    @property
    def head(self) -> np.ndarray:
        """The current value ``phi(0)``."""
        return self.values[-1]

    def __repr__(self):
        return (f"Segment(r={self.decay_rate:g}, d={self.dimension}, nodes={len(self.times)}, "
                f"tail={self.tail}, head={self.head.tolist()})")

    def evaluate(self, theta):
        """Value at ``theta`` (scalar or array); see :func:`evaluate`."""
        return evaluate(self, theta)

    def r_norm(self) -> float:
        return r_norm(self)

    def _tail_eval(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.tail_const + np.exp(-self.decay_rate * theta)[..., None] * self.tail_exp


def evaluate(seg: Segment, theta):
    """Evaluate ``phi(theta)`` for ``theta <= 0``.

    Grid values are linearly interpolated; times before the first node use
    the analytic tail.  Returns shape ``(2d,)`` for scalar ``theta`` and
    ``(len(theta), 2d)`` otherwise.
    """
    th = np.asarray(theta, dtype=float)
    scalar = th.ndim == 0
    th = np.atleast_1d(th)
    if np.any(th > 0):
        raise SegmentError("segments are defined on theta <= 0 only")
    out = np.empty((len(th), seg.values.shape[1]))
    in_tail = th < seg.times[0]
    if np.any(in_tail):
        out[in_tail] = seg._tail_eval(th[in_tail])
    on_grid = ~in_tail
    if np.any(on_grid):
        for j in range(seg.values.shape[1]):
            out[on_grid, j] = np.interp(th[on_grid], seg.times, seg.values[:, j])
    return out[0] if scalar else out


def _tail_sup(seg: Segment) -> float:
    # e^{r theta} phi(theta) = s*u + v with s = e^{r theta} in (0, s0]; the
    # norm of an affine function of s is convex, so the sup sits at an end.
    s0 = np.exp(seg.decay_rate * seg.times[0])
    return max(float(np.linalg.norm(seg.tail_exp)),
               float(np.linalg.norm(s0 * seg.tail_const + seg.tail_exp)))


def r_norm(seg: Segment) -> float:
    """Approximate ``sup_{theta<=0} e^{r theta}|phi(theta)|``.

    The grid part is sampled at nodes and interval midpoints; the tail part
    is exact.
    """
    r = seg.decay_rate
    t, v = seg.times, seg.values
    best = float(np.max(np.exp(r * t) * np.linalg.norm(v, axis=1)))
    if len(t) > 1:
        mids = 0.5 * (t[:-1] + t[1:])
        mid_vals = 0.5 * (v[:-1] + v[1:])
        best = max(best, float(np.max(np.exp(r * mids) * np.linalg.norm(mid_vals, axis=1))))
    if seg.tail != "zero":
        best = max(best, _tail_sup(seg))
    return best


def _check_compatible(a: Segment, b: Segment):
    if a.decay_rate != b.decay_rate:
        raise SegmentError("segments have different decay rates")
    if a.values.shape[1] != b.values.shape[1]:
        raise SegmentError("segments have different dimensions")


def _shared_times(a: Segment, b: Segment) -> np.ndarray:
    if len(a.times) == len(b.times) and np.array_equal(a.times, b.times):
        return a.times
    times = np.union1d(a.times, b.times)
    lo, hi = sorted((a.grid_start, b.grid_start))
    if hi > lo:
        # one of the two is still on its (possibly curved) tail here
        steps = [np.min(np.diff(s.times)) for s in (a, b) if len(s.times) > 1]
        step = min(steps) if steps else (hi - lo) / 64
        n = max(int(np.ceil((hi - lo) / step)), 1)
        times = np.union1d(times, np.linspace(lo, hi, n + 1))
    return times


def linear_combination(a: Segment, b: Segment, ca: float = 1.0, cb: float = 1.0) -> Segment:
    """The segment ``ca * a + cb * b`` on a shared refinement of both grids."""
    _check_compatible(a, b)
    times = _shared_times(a, b)
    values = ca * evaluate(a, times) + cb * evaluate(b, times)
    return Segment(a.decay_rate, times, values,
                   ca * a.tail_const + cb * b.tail_const,
                   ca * a.tail_exp + cb * b.tail_exp)


def distance_r(a: Segment, b: Segment) -> float:
    """``||a - b||_r``, the continuous part of the metric on segment/regime pairs."""
    return r_norm(linear_combination(a, b, 1.0, -1.0))


def shift_append(seg: Segment, h: float, new_value) -> Segment:
    """Advance the segment process by ``h``: ``Z_{t+h}(theta) = Z(t + h + theta)``.

    Existing nodes move to ``theta - h`` and ``new_value`` becomes the node at 0.
    """
    if h <= 0:
        raise SegmentError("shift must be positive")
    new_value = np.asarray(new_value, dtype=float).reshape(1, -1)
    if new_value.shape[1] != seg.values.shape[1]:
        raise SegmentError("new value has the wrong dimension")
    times = np.append(seg.times - h, 0.0)
    values = np.vstack([seg.values, new_value])
    return Segment(seg.decay_rate, times, values, seg.tail_const,
                   np.exp(-seg.decay_rate * h) * seg.tail_exp)


def extend(seg: Segment, h: float, new_values) -> Segment:
    """Apply :func:`shift_append` for each row of ``new_values`` in one pass."""
    new_values = np.asarray(new_values, dtype=float)
    n = len(new_values)
    if n == 0:
        return seg
    times = np.concatenate([seg.times - n * h, -h * np.arange(n - 1, -1, -1)])
    values = np.vstack([seg.values, new_values])
    return Segment(seg.decay_rate, times, values, seg.tail_const,
                   np.exp(-seg.decay_rate * n * h) * seg.tail_exp)


def weighted_history_integral(seg: Segment, weight_rate: float,
                              transform: str = "identity") -> np.ndarray:
    """``int_{-inf}^0 e^{w theta} m(phi(theta)) d theta`` for a named map ``m``.

    Trapezoid rule on the grid; the tail integral is closed form except for a
    bounded nonlinear map over an exponential tail, which uses quadrature.
    """
    if weight_rate <= 0:
        raise SegmentError("weight rate must be positive")
    try:
        m, bounded = TRANSFORMS[transform]
    except KeyError:
        raise SegmentError(f"unknown transform {transform!r}") from None
    w, r = weight_rate, seg.decay_rate
    t, v = seg.times, seg.values
    mv = m(v) * np.exp(w * t)[:, None]
    total = np.zeros(v.shape[1])
    if len(t) > 1:
        total += np.sum(0.5 * np.diff(t)[:, None] * (mv[:-1] + mv[1:]), axis=0)
    t0 = t[0]
    u, ve = seg.tail_const, seg.tail_exp
    if not np.any(ve):
        total += m(u) * np.exp(w * t0) / w
    elif transform == "identity":
        if w <= r:
            raise SegmentError("weighted history integral diverges: weight rate must exceed decay rate")
        total += u * np.exp(w * t0) / w + ve * np.exp((w - r) * t0) / (w - r)
    else:
        assert bounded
        for j in range(len(total)):
            # the inner exponential may overflow far in the tail; tanh/clip saturate there
            f = lambda th: np.exp(w * th) * m(u[j] + np.exp(-r * th) * ve[j])  # noqa: E731
            with np.errstate(over="ignore"):
                total[j] += integrate.quad(f, -np.inf, t0, limit=200)[0]
    return total


def ramp_bump(decay_rate: float, direction, length: float = 1.0, step: float = 0.01) -> Segment:
    """Zero-tail ramp from 0 at ``-length`` to ``direction`` at 0, normalized to unit r-norm.

    Used to build perturbation ladders ``psi = phi + delta * bump`` with
    ``||phi - psi||_r = delta``.
    """
    direction = np.asarray(direction, dtype=float)
    n = max(int(round(length / step)), 1)
    times = np.linspace(-length, 0.0, n + 1)
    values = (1.0 + times / length)[:, None] * direction[None, :]
    seg = Segment.from_grid(times, values, decay_rate, tail="zero")
    scale = r_norm(seg)
    return Segment.from_grid(times, values / scale, decay_rate, tail="zero")


def random_segment(rng: np.random.Generator, decay_rate: float = 1.0, d: int = 1,
                   n_nodes: int = 20, step: float = 0.05, tail: str | None = None,
                   scale: float = 1.0) -> Segment:
    """Random segment for property tests and assumption sampling."""
    if tail is None:
        tail = TAIL_FAMILIES[rng.integers(3)]
    times = -step * np.arange(n_nodes - 1, -1, -1, dtype=float)
    increments = rng.standard_normal((n_nodes, 2 * d)) * np.sqrt(step)
    values = scale * (rng.standard_normal(2 * d) + np.cumsum(increments, axis=0))
    if tail == "zero" and n_nodes > 1:
        values[0] = 0.0
    return Segment.from_grid(times, values, decay_rate, tail=tail)
