"""The regime component: Poisson-mark construction of the dominating chain and thinning.

For each state ``i`` the interval ``[0, q_hat_i)`` is cut into consecutive
pieces ``Delta_ij`` of width ``q_hat_ij`` (ascending ``j != i``).  Events of a
Poisson clock with rate ``q_hat_i`` carry a uniform mark ``u`` on
``[0, q_hat_i)``; the piece containing ``u`` names the target regime.  For
state-dependent rates a candidate ``i -> j`` is kept with probability
``q_ij(phi) / q_hat_ij``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import RateSpec
from .segment import Segment

__all__ = [
    "ChainPath",
    "DominanceError",
    "IntervalLayout",
    "build_intervals",
    "count_jumps",
    "h_map",
    "simulate_markov_chain",
    "thinning_decision",
]


class DominanceError(RuntimeError):
    """A state-dependent rate exceeded its dominating rate."""


@dataclass(frozen=True, eq=False)
class IntervalLayout:
    """Per-state interval layout on ``[0, H]``.

    ``edges[i]`` holds cumulative right ends of the pieces of state ``i`` and
    ``targets[i]`` their target regimes, both in ascending target order.
    """

    q_hat: np.ndarray
    edges: tuple
    targets: tuple
    H: float

    @property
    def n_states(self) -> int:
        return len(self.edges)

    def intervals(self, i: int) -> list[tuple[float, float, int]]:
        lo = np.concatenate([[0.0], self.edges[i][:-1]])
        return [(float(a), float(b), int(j)) for a, b, j in zip(lo, self.edges[i], self.targets[i])]

    def width(self, i: int) -> float:
        return float(self.edges[i][-1]) if len(self.edges[i]) else 0.0

    def target(self, i: int, u: float) -> int | None:
        """Target regime for mark ``u`` in state ``i`` (None when ``u`` is outside ``U_i``)."""
        e = self.edges[i]
        pos = int(np.searchsorted(e, u, side="right"))
        return None if pos >= len(e) else int(self.targets[i][pos])


def build_intervals(q_hat) -> IntervalLayout:
    """Consecutive intervals ``Delta_ij`` of width ``q_hat_ij`` for every state."""
    q_hat = np.asarray(q_hat, dtype=float)
    n = q_hat.shape[0]
    edges, targets = [], []
    off = q_hat * (1.0 - np.eye(n))
    for i in range(n):
        js = [j for j in range(n) if j != i and off[i, j] > 0]
        w = off[i, js]
        edges.append(np.cumsum(w) if js else np.zeros(0))
        targets.append(np.array(js, dtype=np.intp))
    H = float(off.sum(axis=1).max()) if n else 0.0
    return IntervalLayout(q_hat, tuple(edges), tuple(targets), H)


def h_map(layout: IntervalLayout, i: int, u: float, H: float | None = None) -> int | None:
    """Displacement ``j - i`` for a mark ``u in Delta_ij``; None when ``u`` is not in ``U_i``."""
    H = layout.H if H is None else H
    if not 0.0 <= u <= H:
        raise ValueError(f"mark {u} outside [0, {H}]")
    j = layout.target(i, u)
    return None if j is None else j - i


@dataclass(frozen=True, eq=False)
class ChainPath:
    """Jump times ``tau_1 < tau_2 < ...`` (``tau_0 = 0`` implicit) and visited regimes."""

    times: np.ndarray
    regimes: np.ndarray  # regimes[0] is the initial regime, regimes[n] after the n-th jump
    horizon: float

    def regime_at(self, t: float) -> int:
        return int(self.regimes[count_jumps(self, t)])

    @property
    def n_jumps(self) -> int:
        return len(self.times)

    def to_dict(self) -> dict:
        return {"times": self.times.tolist(), "regimes": self.regimes.tolist(),
                "horizon": self.horizon}


def count_jumps(path: ChainPath, t: float) -> int:
    """``n(t) = max{i : tau_i <= t}``."""
    return int(np.searchsorted(path.times, t, side="right"))


def simulate_markov_chain(q_hat, k0: int, T: float, rng: np.random.Generator,
                          layout: IntervalLayout | None = None) -> ChainPath:
    """Chain generated by the dominating matrix via clock events with uniform marks."""
    if T <= 0:
        raise ValueError("horizon must be positive")
    layout = build_intervals(q_hat) if layout is None else layout
    t, k = 0.0, int(k0)
    times, regimes = [], [k]
    while True:
        rate = layout.width(k)
        if rate <= 0:
            break
        t += rng.exponential(1.0 / rate)
        if t > T:
            break
        u = rng.random() * rate
        k = layout.target(k, u)
        times.append(t)
        regimes.append(k)
    return ChainPath(np.array(times), np.array(regimes, dtype=np.intp), float(T))


def thinning_decision(rates: RateSpec, k: int, l: int, phi: Segment | float,
                      rng: np.random.Generator | None = None, u: float | None = None) -> bool:
    """Keep a candidate ``k -> l`` event with probability ``q_kl(phi) / q_hat_kl``.

    ``phi`` may be a segment or directly its r-norm.  Pass ``u`` to supply the
    acceptance uniform explicitly.
    """
    qh = rates.q_hat[k, l]
    if k == l or qh <= 0:
        raise DominanceError(f"no dominating rate for candidate {k} -> {l}")
    norm = phi if np.isscalar(phi) else phi.r_norm()
    q = float(rates.pair_rates(np.intp(k), np.intp(l), np.float64(norm)))
    if q > qh * (1 + 1e-12):
        raise DominanceError(f"q_{k}{l} = {q} exceeds q_hat = {qh}")
    if u is None:
        u = rng.random()
    return bool(u * qh < q)
