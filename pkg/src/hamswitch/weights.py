"""Stochastic weights: Girsanov drift removal and the switching change of measure.

Both weights are accumulated in log space.  The Girsanov weight of the Euler
scheme,

    R = exp( sum <sigma^-1 b2(Z_n), dB_n> - 1/2 sum |sigma^-1 b2(Z_n)|^2 h ),

is the exact likelihood ratio between the discretized system with and
without ``b2``.  The switching weight

    M_t = prod q_{k l}(W_tau) / q_hat_{k l} * exp(-int_0^t (q_k(W_s) - q_hat_k) ds)

is evaluated with rates frozen at the step-end segment, which is how the
integrator resolves chain events, so it is the exact likelihood ratio of the
thinned chain against the dominating chain for the simulated scheme.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .model import ModelSpec, RateSpec
from .montecarlo import EstimateReport, estimate
from .sde import HybridPath, integrate_batch
from .segment import Segment

__all__ = [
    "NovikovReport",
    "WeightError",
    "girsanov_weight",
    "log_girsanov_weight",
    "novikov_estimate",
    "reweighted_expectation",
    "switch_weight",
]


class WeightError(RuntimeError):
    pass


def log_girsanov_weight(path: HybridPath, model: ModelSpec, k: int, t: float | None = None) -> float:
    if path.include_b2:
        raise WeightError("the Girsanov weight applies to reference paths (b2 excluded)")
    n = path.n_steps if t is None else path.step_of(t)
    if np.any(path.regime[:n] != k):
        raise WeightError("the path left the fixed regime")
    co = model.coefficients
    kk = np.full(n, k)
    y = path.y[:n]
    theta = co.b2_batch(y, kk) / co.sigma_batch(y, kk)
    return float(np.sum(theta * path.dW[:n]) - 0.5 * np.sum(theta * theta) * path.h)


def girsanov_weight(path: HybridPath, model: ModelSpec, k: int, t: float | None = None) -> float:
    """``R^{(k)}`` at time ``t`` (default: the path's horizon)."""
    return float(np.exp(log_girsanov_weight(path, model, k, t)))


def switch_weight(path: HybridPath, rates: RateSpec, t: float | None = None) -> float:
    """``M_t`` of a path generated by the dominating (Markovian) chain."""
    if path.mode != "markovian":
        raise WeightError("switch weights are defined on paths of the dominating chain")
    n = path.n_steps if t is None else path.step_of(t)
    h = path.h
    qhat = rates.q_hat
    qexit_hat = rates.exit_hat
    log_m = 0.0
    jumps_by_step = {}
    for tau, step, k_from, k_to in path.jumps:
        jumps_by_step.setdefault(step, []).append((tau, k_from, k_to))
    c_tot, d_tot = rates._totals
    for step in range(n):
        # regime held on (t_step, t_step+1], with jumps resolved at the step end
        shape = float(rates.shape_value(path.norms[step + 1]))
        last = step * h
        k = int(path.regime[step])
        for tau, k_from, k_to in jumps_by_step.get(step + 1, []):
            if qhat[k_from, k_to] <= 0:
                raise WeightError(f"observed jump {k_from}->{k_to} has zero dominating rate")
            q_pair = rates.base[k_from, k_to] * (1.0 + rates.sensitivity[k_from, k_to] * shape)
            log_m -= (c_tot[k] + d_tot[k] * shape - qexit_hat[k]) * (tau - last)
            log_m += np.log(q_pair / qhat[k_from, k_to])
            last = tau
            k = k_to
        log_m -= (c_tot[k] + d_tot[k] * shape - qexit_hat[k]) * ((step + 1) * h - last)
    return float(np.exp(log_m))


@dataclass
class NovikovReport:
    estimate: float
    log_estimate: float
    stderr: float
    n: int
    top_share: float
    tail_heavy: bool
    infinite_suspected: bool
    ci: tuple

    def to_dict(self) -> dict:
        return dict(self.__dict__, ci=list(self.ci))


def novikov_estimate(model: ModelSpec, k: int, phi0: Segment, lam: float, T: float, N: int,
                     h: float, seed: int = 0) -> NovikovReport:
    """Monte Carlo estimate of ``E exp(lam int_0^T |sigma^-1 b2|^2 dt)`` on reference paths."""
    if lam <= 0 or T <= 0:
        raise ValueError("lambda and T must be positive")
    res = integrate_batch(model, phi0, k, T, h, seed, np.arange(N), mode="none", include_b2=False)
    logs = lam * res.novikov
    log_mean = float(logsumexp(logs) - np.log(N))
    with np.errstate(over="ignore"):
        vals = np.exp(logs)
    inf = not np.isfinite(log_mean) or not np.all(np.isfinite(vals))
    # share of the total mass carried by the top 1% of samples
    srt = np.sort(logs)[::-1]
    top = max(int(np.ceil(0.01 * N)), 1)
    share = float(np.exp(logsumexp(srt[:top]) - logsumexp(srt)))
    if inf:
        return NovikovReport(float("inf"), log_mean, float("inf"), N, share, True, True,
                             (float("nan"), float("inf")))
    est = estimate(vals, seed)
    ci = (est.mean - 3 * est.stderr, est.mean + 3 * est.stderr)
    return NovikovReport(est.mean, log_mean, est.stderr, N, share, share > 0.5, False, ci)


def reweighted_expectation(values, weights, seed: int | None = None) -> EstimateReport:
    """``(1/N) sum f_i M_i`` with its standard error.

    ``values`` are ``f(W_t^i, Lambda^i(t))`` and ``weights`` the matching
    ``M_t^i``.  With unit weights this is the plain sample mean.
    """
    v = np.asarray(values, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if len(v) == 0:
        raise ValueError("reweighted expectation needs at least one sample")
    if len(v) != len(w):
        raise ValueError("values and weights differ in length")
    return estimate(v * w, seed)
