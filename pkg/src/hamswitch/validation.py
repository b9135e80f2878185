"""Statistical test battery for the switched Hamiltonian system.

Each test runs seeded Monte Carlo ensembles and returns a :class:`TestReport`
whose :class:`Check` entries carry the estimate, its standard error, the
threshold and the numeric margin.  Thresholds are 3-sigma: two-sided for
identities, one-sided for inequalities.  Exact oracles use a ``1e-10``
relative tolerance.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import testfns
from .config import bundled
from .model import ModelSpec
from .montecarlo import (compare_estimates, ensemble_values, estimate, rng_stream,
                         run_ensemble)
from .sde import difference_norm, integrate_batch, n_steps_for
from .segment import Segment, linear_combination, ramp_bump
from .switching import build_intervals, simulate_markov_chain
from .zvonkin import GridSpec, lambda_scan, self_convergence, solve_elliptic

__all__ = [
    "Check",
    "SUITES",
    "TestReport",
    "feller_scan",
    "girsanov_transfer_test",
    "martingale_residual_test",
    "mt_continuity_test",
    "reweight_identity_test",
    "run_suite",
]

Z3 = 3.0


@dataclass
class Check:
    name: str
    passed: bool
    estimate: float | None = None
    stderr: float | None = None
    threshold: float | None = None
    margin: float | None = None
    detail: str = ""
    criterion: int | None = None
    data: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "estimate": self.estimate,
                "stderr": self.stderr, "threshold": self.threshold, "margin": self.margin,
                "detail": self.detail, "criterion": self.criterion, "data": self.data}


@dataclass
class TestReport:
    name: str
    checks: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)
    wall_time: float = 0.0
    notes: str = ""

    __test__ = False  # not a pytest class

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "settings": self.settings,
                "wall_time": self.wall_time, "notes": self.notes,
                "checks": [c.to_dict() for c in self.checks]}


def _identity(name, values, target, criterion=None, detail="") -> Check:
    """Two-sided ``|mean - target| <= 3 se``."""
    est = estimate(values)
    gap = abs(est.mean - target)
    thr = Z3 * est.stderr
    return Check(name, bool(gap <= thr), est.mean, est.stderr, thr, thr - gap,
                 detail or f"|mean - {target:g}| = {gap:.3g} vs 3se = {thr:.3g}", criterion)


def _upper(name, values, bound, criterion=None, detail="") -> Check:
    """One-sided ``mean <= bound + 3 se``."""
    est = estimate(values)
    thr = bound + Z3 * est.stderr
    return Check(name, bool(est.mean <= thr), est.mean, est.stderr, thr, thr - est.mean,
                 detail or f"mean {est.mean:.6g} vs bound {bound:.6g} + 3se", criterion)


def _comparison(name, a, b, criterion=None) -> Check:
    ra, rb = estimate(a), estimate(b)
    cmp = compare_estimates(ra, rb)
    return Check(name, cmp.passed, cmp.difference, cmp.combined_stderr, Z3, Z3 - abs(cmp.z),
                 f"{ra.mean:.6g} vs {rb.mean:.6g}, z = {cmp.z:.3f}", criterion,
                 {"first": ra.to_dict(), "second": rb.to_dict(), "z": cmp.z})


def _final_values(fns, snap) -> np.ndarray:
    return np.column_stack([f.value(snap.x, snap.y, snap.regime) for f in fns])


# ---------------------------------------------------------------- martingale problem
def martingale_residual_test(model: ModelSpec, fns, phi0: Segment, k0: int, s: float, t: float,
                             N: int, h: float, seed: int, mode: str = "state_dependent",
                             workers=None, criterion=None, y_clip: float = 2.0) -> TestReport:
    """``M^f_t - M^f_s`` has mean 0 and is orthogonal to ``F_s``-measurable probes.

    Probes: ``1``, the regime indicator ``1{Theta(s) = k0}``, and ``min(|Y(s)|, y_clip)``.
    """
    if not 0 <= s < t:
        raise ValueError("need 0 <= s < t")
    t0 = time.perf_counter()
    n_s, n_t = n_steps_for(s, h) if s > 0 else 0, n_steps_for(t, h)
    fns = list(fns)

    def task(sd, idx):
        res = integrate_batch(model, phi0, k0, t, h, sd, idx, mode=mode, checkpoints=(n_s,),
                              functions=fns)
        a, b = res.checkpoints[n_s], res.final
        incr = (_final_values(fns, b) - _final_values(fns, a)
                - (b.af_integral - a.af_integral))
        probes = np.column_stack([np.ones(len(idx)), (a.regime == k0).astype(float),
                                  np.minimum(np.linalg.norm(a.y, axis=1), y_clip)])
        return (incr[:, :, None] * probes[:, None, :]).reshape(len(idx), -1)

    vals = ensemble_values(task, N, seed, workers)
    rep = TestReport("martingale", settings={"N": N, "h": h, "s": s, "t": t, "seed": seed,
                                             "mode": mode, "functions": [f.name for f in fns]})
    probe_names = ("1", "regime indicator", "clipped |Y(s)|")
    for i, f in enumerate(fns):
        for j, p in enumerate(probe_names):
            rep.add(_identity(f"E[(M_t - M_s) g] = 0, f = {f.name}, g = {p}",
                              vals[:, 3 * i + j], 0.0, criterion))
    rep.wall_time = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------- Girsanov transfer
def girsanov_transfer_test(model: ModelSpec, k: int, phi0: Segment, T: float, N: int, h: float,
                           seed: int, fns=None, workers=None, criterion=None) -> TestReport:
    """Direct ``E f(Z_T)`` (with ``b2``) against ``E f R`` on reference paths (without ``b2``)."""
    t0 = time.perf_counter()
    fns = list(fns) if fns is not None else girsanov_functions()

    def direct(sd, idx):
        res = integrate_batch(model, phi0, k, T, h, sd, idx, mode="none", include_b2=True)
        return _final_values(fns, res.final)

    def reference(sd, idx):
        res = integrate_batch(model, phi0, k, T, h, sd, idx, mode="none", include_b2=False)
        R = np.exp(res.final.log_girsanov)
        return np.column_stack([_final_values(fns, res.final) * R[:, None], R])

    dv = ensemble_values(direct, N, seed, workers)
    rv = ensemble_values(reference, N, seed + 1, workers)
    rep = TestReport("girsanov", settings={"N": N, "h": h, "T": T, "regime": k,
                                           "seeds": [seed, seed + 1],
                                           "functions": [f.name for f in fns]})
    for i, f in enumerate(fns):
        rep.add(_comparison(f"direct vs reweighted reference, f = {f.name}", dv[:, i], rv[:, i],
                            criterion))
    rep.add(_identity("E[R] = 1", rv[:, -1], 1.0, criterion))
    rep.wall_time = time.perf_counter() - t0
    return rep


def girsanov_functions() -> list:
    return [testfns.Bump(center_x=0.5, center_y=0.8, radius=2.0, name="bump"),
            testfns.SaturatingQuadratic(scale=1.5, name="satquad"),
            testfns.TanhY(scale=1.0, name="tanh_y")]


def zero_drift_bitwise_check(model: ModelSpec, k: int, phi0: Segment, T: float, N: int, h: float,
                             seed: int, fns=None, criterion=None) -> Check:
    """With ``b2 = 0`` both estimators coincide bit for bit under a shared seed."""
    from .model import PointDrift
    import dataclasses

    co = model.coefficients
    zero = dataclasses.replace(co, b2=tuple(PointDrift() for _ in co.b2))
    m0 = dataclasses.replace(model, coefficients=zero)
    fns = list(fns) if fns is not None else girsanov_functions()
    idx = np.arange(N)
    a = integrate_batch(m0, phi0, k, T, h, seed, idx, mode="none", include_b2=True)
    b = integrate_batch(m0, phi0, k, T, h, seed, idx, mode="none", include_b2=False)
    fa = _final_values(fns, a.final)
    fb = _final_values(fns, b.final) * np.exp(b.final.log_girsanov)[:, None]
    ra = [estimate(fa[:, i]) for i in range(fa.shape[1])]
    rb = [estimate(fb[:, i]) for i in range(fb.shape[1])]
    same = bool(np.array_equal(fa, fb) and ra == rb)
    return Check("b2 = 0: direct and reweighted estimators bitwise equal", same,
                 detail=f"{N} shared-seed paths", criterion=criterion)


# ---------------------------------------------------------------- switching change of measure
def reweight_identity_test(model: ModelSpec, phi0: Segment, k0: int, T: float, N: int, h: float,
                           seed: int, fns=None, workers=None, criterion=None) -> TestReport:
    """Direct thinning ``E f`` against ``E f M_T`` over dominating-chain paths."""
    t0 = time.perf_counter()
    fns = list(fns) if fns is not None else testfns.builtin(model.n_regimes)

    def direct(sd, idx):
        res = integrate_batch(model, phi0, k0, T, h, sd, idx, mode="state_dependent")
        return _final_values(fns, res.final)

    def markov(sd, idx):
        res = integrate_batch(model, phi0, k0, T, h, sd, idx, mode="markovian")
        M = np.exp(res.final.log_switch)
        return np.column_stack([_final_values(fns, res.final) * M[:, None], M])

    dv = ensemble_values(direct, N, seed, workers)
    mv = ensemble_values(markov, N, seed + 1, workers)
    rep = TestReport("reweight", settings={"N": N, "h": h, "T": T, "seeds": [seed, seed + 1],
                                           "functions": [f.name for f in fns]})
    for i, f in enumerate(fns):
        rep.add(_comparison(f"direct thinning vs M-reweighted, f = {f.name}", dv[:, i], mv[:, i],
                            criterion))
    rep.wall_time = time.perf_counter() - t0
    return rep


def switch_weight_moments(model: ModelSpec, phi0: Segment, k0: int, T: float, N: int, h: float,
                          seed: int, workers=None) -> TestReport:
    """``E[M_T] = 1``, ``E[M_T^2] <= 2 e^{8 H T}`` and ``E[n(T)] <= H T`` on one ensemble."""
    t0 = time.perf_counter()
    n_s = n_steps_for(T / 2, h)

    def task(sd, idx):
        res = integrate_batch(model, phi0, k0, T, h, sd, idx, mode="markovian", checkpoints=(n_s,))
        M = np.exp(res.final.log_switch)
        mid = res.checkpoints[n_s]
        dM = M - np.exp(mid.log_switch)
        probes = [np.ones(len(idx)), (mid.regime == k0).astype(float),
                  np.minimum(np.linalg.norm(mid.y, axis=1), 2.0)]
        return np.column_stack([M, M * M, res.final.n_jumps] + [dM * g for g in probes])

    v = ensemble_values(task, N, seed, workers)
    H = model.H
    bound = 2.0 * math.exp(8.0 * H * T)
    rep = TestReport("moments", settings={"N": N, "h": h, "T": T, "seed": seed, "H": H})
    rep.add(_identity("E[M_T] = 1", v[:, 0], 1.0, 1))
    rep.add(_upper(f"E[M_T^2] <= 2 exp(8 H T) = {bound:.4g}", v[:, 1], bound, 2))
    rep.add(_upper(f"E[n(T)] <= H T = {H * T:g} (dominating chain)", v[:, 2], H * T, 6))
    for j, g in enumerate(("1", "regime indicator", "clipped |Y(s)|")):
        rep.add(_identity(f"E[(M_t - M_s) g] = 0 at s = T/2, g = {g}", v[:, 3 + j], 0.0, 1))
    rep.add(Check("M_T > 0 on every path", bool(np.all(v[:, 0] > 0)), float(v[:, 0].min()),
                  criterion=1))
    rep.wall_time = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------- continuity in the initial segment
def perturbation_ladder(phi: Segment, deltas, direction=None) -> list[Segment]:
    """``psi_j = phi + delta_j * bump`` with a unit-norm bump, so ``||phi - psi_j||_r = delta_j``."""
    direction = np.ones(2 * phi.dimension) if direction is None else np.asarray(direction, dtype=float)
    bump = ramp_bump(phi.decay_rate, direction / np.linalg.norm(direction))
    return [phi if dl == 0 else linear_combination(phi, bump, 1.0, float(dl)) for dl in deltas]


def _strictly_decreasing(name, columns, deltas, criterion, signs=None) -> list:
    """Paired 3-sigma resolution of ``mean_j > mean_{j+1}`` on per-path columns."""
    out = []
    for j in range(len(deltas) - 1):
        a, b = columns[j], columns[j + 1]
        if signs is not None:
            a, b = signs[j] * a, signs[j + 1] * b
        est = estimate(a - b)
        thr = Z3 * est.stderr
        out.append(Check(f"{name}: delta {deltas[j]:g} > delta {deltas[j + 1]:g}",
                         bool(est.mean > thr), est.mean, est.stderr, thr, est.mean - thr,
                         f"paired difference {est.mean:.4g}, 3se = {thr:.4g}", criterion))
    return out


def mt_continuity_test(model: ModelSpec, phi: Segment, deltas, k: int, T: float, N: int, h: float,
                       seed: int, direction=None, workers=None, criterion=None) -> TestReport:
    """Coupled-pair ``E|M_T(phi) - M_T(psi_j)|`` along a perturbation ladder.

    Passes when the means decrease strictly (3-sigma resolved) and the largest
    stays below ``e^{HT} eps K (H T + E n(T))`` with ``eps`` the largest
    observed ``sup_t ||W^phi_t - W^psi_t||_r``.
    """
    t0 = time.perf_counter()
    deltas = list(deltas)
    psis = perturbation_ladder(phi, deltas, direction)
    r = model.decay_rate

    def task(sd, idx):
        base = integrate_batch(model, phi, k, T, h, sd, idx, mode="markovian", record=True)
        cols = []
        sups = []
        for dl, psi in zip(deltas, psis):
            other = integrate_batch(model, psi, k, T, h, sd, idx, mode="markovian", record=True)
            cols.append(np.abs(base.switch_weight - other.switch_weight))
            sups.append(_sup_difference_norm(base.trajectory, other.trajectory, dl, r, h))
        return np.column_stack(cols + sups + [base.final.n_jumps])

    v = ensemble_values(task, N, seed, workers)
    m = len(deltas)
    rep = TestReport("mt-continuity", settings={"N": N, "h": h, "T": T, "regime": k,
                                                "deltas": deltas, "seed": seed})
    means = [estimate(v[:, j]) for j in range(m)]
    for dl, e in zip(deltas, means):
        rep.add(Check(f"E|M_T(phi) - M_T(psi)| at delta {dl:g}", True, e.mean, e.stderr,
                      detail="reported", criterion=criterion))
    rep.checks.extend(_strictly_decreasing("E|dM_T| decreasing", [v[:, j] for j in range(m)],
                                           deltas, criterion))
    H, K = model.rates.declared_bound, model.rates.declared_lipschitz
    eps = float(np.max(v[:, m:2 * m][:, 0]))
    n_mean = float(np.mean(v[:, -1]))
    envelope = math.exp(H * T) * eps * K * (H * T + n_mean)
    top = means[0]
    rep.add(Check(f"E|dM_T| at delta {deltas[0]:g} below envelope", bool(top.mean <= envelope),
                  top.mean, top.stderr, envelope, envelope - top.mean,
                  f"envelope e^(HT) eps K (HT + E n(T)) with eps = {eps:.4g}", criterion))
    rep.wall_time = time.perf_counter() - t0
    return rep


def _sup_difference_norm(ta, tb, gap, r, h) -> np.ndarray:
    """``sup_t ||W^a_t - W^b_t||_r`` via the node/midpoint recursion."""
    diff = np.linalg.norm(ta - tb, axis=2)
    mid = np.linalg.norm(0.5 * (ta[:, 1:] - tb[:, 1:] + ta[:, :-1] - tb[:, :-1]), axis=2)
    S = np.full(ta.shape[0], float(gap))
    best = S.copy()
    e1, e2 = math.exp(-r * h), math.exp(-r * h / 2)
    for n in range(diff.shape[1] - 1):
        S = np.maximum(np.maximum(e1 * S, e2 * mid[:, n]), diff[:, n + 1])
        np.maximum(best, S, out=best)
    return best


def feller_scan(model: ModelSpec, phi: Segment, deltas, k: int, T: float, N: int, h: float,
                seed: int, fns=None, linear_model: ModelSpec | None = None, linear_N: int = 2000,
                direction=None, workers=None, criterion=None) -> TestReport:
    """Feller continuity along a ladder ``psi_j = phi + delta_j bump``.

    (i) On the Lipschitz Markovian model, ``E||W^phi_T - W^psi_T||_r / delta``
    must vary by less than a factor 2.  (ii) On ``model``, the reweighted
    differences ``|E f(phi) - E f(psi_j)|`` must decrease strictly (3-sigma).
    The mean estimate is stronger than the convergence in probability that
    continuity needs; both tables are reported.
    """
    t0 = time.perf_counter()
    deltas = list(deltas)
    psis = perturbation_ladder(phi, deltas, direction)
    fns = list(fns) if fns is not None else feller_functions()
    rep = TestReport("feller", settings={"N": N, "linear_N": linear_N, "h": h, "T": T,
                                         "regime": k, "deltas": deltas, "seed": seed,
                                         "functions": [f.name for f in fns]})
    lin = linear_model if linear_model is not None else bundled("feller_linear").model
    r = lin.decay_rate

    def ratio_task(sd, idx):
        base = integrate_batch(lin, phi, k, T, h, sd, idx, mode="markovian", record=True)
        cols = []
        for dl, psi in zip(deltas, psis):
            other = integrate_batch(lin, psi, k, T, h, sd, idx, mode="markovian", record=True)
            gap = difference_norm(base.trajectory, other.trajectory, dl, r, h)
            cols.append(gap / dl if dl > 0 else gap)
        return np.column_stack(cols)

    rv = ensemble_values(ratio_task, linear_N, seed, workers)
    ratios = [estimate(rv[:, j]) for j in range(len(deltas))]
    pos = [e.mean for e, dl in zip(ratios, deltas) if dl > 0]
    spread = max(pos) / min(pos) if pos else float("nan")
    rep.add(Check("E||dW_T||_r / ||phi - psi||_r varies by less than x2", bool(spread < 2.0), spread,
                  threshold=2.0, margin=2.0 - spread,
                  detail="ratios " + ", ".join(f"{e.mean:.5g}" for e in ratios),
                  criterion=criterion, data={"ratios": [e.to_dict() for e in ratios]}))

    def diff_task(sd, idx):
        base = integrate_batch(model, phi, k, T, h, sd, idx, mode="markovian")
        fb = _final_values(fns, base.final) * base.switch_weight[:, None]
        cols = []
        for psi in psis:
            other = integrate_batch(model, psi, k, T, h, sd, idx, mode="markovian")
            cols.append(fb - _final_values(fns, other.final) * other.switch_weight[:, None])
        return np.concatenate(cols, axis=1)

    dv = ensemble_values(diff_task, N, seed + 1, workers)
    nf = len(fns)
    for i, f in enumerate(fns):
        cols = [dv[:, j * nf + i] for j in range(len(deltas))]
        ests = [estimate(c) for c in cols]
        signs = [1.0 if e.mean >= 0 else -1.0 for e in ests]
        rep.add(Check(f"|dE f| table, f = {f.name}", True,
                      detail=", ".join(f"{abs(e.mean):.4g} (se {e.stderr:.2g})" for e in ests),
                      criterion=criterion, data={"differences": [e.to_dict() for e in ests]}))
        rep.checks.extend(_strictly_decreasing(f"|dE f| decreasing, f = {f.name}", cols, deltas,
                                               criterion, signs))
    rep.wall_time = time.perf_counter() - t0
    return rep


def feller_functions() -> list:
    return [testfns.Bump(center_x=0.5, center_y=0.8, radius=2.0, name="bump"),
            testfns.SaturatingQuadratic(scale=1.5, name="satquad"),
            testfns.TanhY(scale=1.0, name="tanh_y")]


# ---------------------------------------------------------------- closed-form oracles
def linear_moments_test(model: ModelSpec, phi0: Segment, N: int, h: float, seed: int,
                        workers=None, criterion=5) -> TestReport:
    """Integrated Brownian motion: ``Var X(1) = 1/3``, ``Var Y(1) = 1``, ``Cov = 1/2``.

    The means vanish by symmetry, so second moments are estimated directly.
    """
    t0 = time.perf_counter()

    def task(sd, idx):
        res = integrate_batch(model, phi0, 0, 1.0, h, sd, idx, mode="none", include_b2=False)
        x, y = res.final.x[:, 0], res.final.y[:, 0]
        return np.column_stack([x * x, y * y, x * y, x, y])

    v = ensemble_values(task, N, seed, workers)
    rep = TestReport("linear", settings={"N": N, "h": h, "seed": seed})
    rep.add(_identity("Var X(1) = 1/3", v[:, 0], 1 / 3, criterion))
    rep.add(_identity("Var Y(1) = 1", v[:, 1], 1.0, criterion))
    rep.add(_identity("Cov(X(1), Y(1)) = 1/2", v[:, 2], 0.5, criterion))
    rep.wall_time = time.perf_counter() - t0
    return rep


def unit_chain_test(q_hat, N: int, seed: int, T: float = 1.0, criterion=6) -> TestReport:
    """All exit rates 1: ``E n(T) = T``."""
    t0 = time.perf_counter()
    layout = build_intervals(q_hat)
    counts = np.array([simulate_markov_chain(q_hat, 0, T, rng_stream(seed, i), layout).n_jumps
                       for i in range(N)], dtype=float)
    rep = TestReport("unit-chain", settings={"N": N, "T": T, "seed": seed})
    rep.add(_identity(f"unit-rate chain E[n({T:g})] = {T:g}", counts, T, criterion))
    rep.wall_time = time.perf_counter() - t0
    return rep


def jump_count_test(model: ModelSpec, phi0: Segment, k0: int, T: float, N: int, h: float,
                    seed: int, workers=None, criterion=6) -> TestReport:
    """``E n(T) <= H T`` for the state-dependent chain of the full model."""
    t0 = time.perf_counter()

    def task(sd, idx):
        res = integrate_batch(model, phi0, k0, T, h, sd, idx, mode="state_dependent")
        return res.final.n_jumps.astype(float)

    v = ensemble_values(task, N, seed, workers)
    rep = TestReport("jumps", settings={"N": N, "h": h, "T": T, "seed": seed})
    rep.add(_upper(f"E[n(T)] <= H T = {model.H * T:g} (state-dependent chain)", v, model.H * T,
                   criterion))
    rep.wall_time = time.perf_counter() - t0
    return rep


def zvonkin_test(model: ModelSpec, regime: int = 0, grid: GridSpec | None = None,
                 lam_conv: float = 10.0, criterion=7) -> TestReport:
    """Constant-drift exactness, self-convergence, lambda scan and the maximum principle."""
    import dataclasses
    from .model import PointDrift

    t0 = time.perf_counter()
    grid = GridSpec() if grid is None else grid
    rep = TestReport("zvonkin", settings={"regime": regime, "grid": dataclasses.asdict(grid),
                                          "lambda_conv": lam_conv})
    co = model.coefficients
    c = 0.7
    const = dataclasses.replace(model, coefficients=dataclasses.replace(
        co, b2=tuple(PointDrift("constant", c) for _ in co.b2)))
    worst = 0.0
    for lam in (1.0, 10.0, 100.0):
        sol = solve_elliptic(const, regime, lam, grid)
        worst = max(worst, float(np.max(np.abs(sol.u - c / lam)) / (c / lam)))
    rep.add(Check("constant b2: u = c / lambda", worst <= 1e-10, worst, threshold=1e-10,
                  margin=1e-10 - worst, detail="max relative error over lambda in {1, 10, 100}",
                  criterion=criterion))
    conv = self_convergence(model, regime, lam_conv, grid)
    rep.add(Check("self-convergence ratio in [3.5, 4.5]", 3.5 <= conv["ratio"] <= 4.5,
                  conv["ratio"], threshold=4.0, margin=0.5 - abs(conv["ratio"] - 4.0),
                  detail=f"differences {conv['diff_coarse']:.3g}, {conv['diff_fine']:.3g}",
                  criterion=criterion, data=conv))
    rows, lam_star = lambda_scan(model, regime, grid=grid)
    by_lam = {row["lambda"]: row for row in rows}
    seq = [by_lam[lam]["gradient_bound"] for lam in (1.0, 10.0, 100.0)]
    rep.add(Check("gradient bound strictly decreasing over lambda in {1, 10, 100}",
                  bool(seq[0] > seq[1] > seq[2]), detail=", ".join(f"{v:.4g}" for v in seq),
                  criterion=criterion, data={"scan": rows}))
    gb_star = by_lam[lam_star]["gradient_bound"] if lam_star is not None else float("inf")
    rep.add(Check("gradient bound < 1/2 at lambda*", gb_star < 0.5, gb_star, threshold=0.5,
                  margin=0.5 - gb_star, detail=f"lambda* = {lam_star}", criterion=criterion,
                  data={"lambda_star": lam_star}))
    mp = all(row["sup_abs_f"] <= row["b2_sup"] / row["lambda"] * (1 + 1e-12) for row in rows)
    rep.add(Check("max principle ||f||_inf <= ||b2||_inf / lambda on every solve", mp,
                  detail=f"{len(rows)} solves", criterion=criterion))
    res = max(row["residual"] / (1 + row["b2_sup"]) for row in rows)
    rep.add(Check("relative residual <= 1e-8", res <= 1e-8, res, threshold=1e-8,
                  margin=1e-8 - res, criterion=criterion))
    rep.wall_time = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------- determinism
def determinism_test(model: ModelSpec, phi0: Segment, k0: int, T: float, N: int, h: float,
                     seed: int, workers_list=(1, 4, 8), criterion=10) -> TestReport:
    """Reports must be bitwise identical for every worker count."""
    t0 = time.perf_counter()

    def task(sd, idx):
        res = integrate_batch(model, phi0, k0, T, h, sd, idx, mode="markovian")
        M = res.switch_weight
        f = testfns.builtin(model.n_regimes)
        return np.column_stack([M, _final_values(f, res.final) @ np.ones(len(f)) * M,
                                res.final.x[:, 0], res.final.y[:, 0]])

    reports, raws = [], []
    for w in workers_list:
        reports.append(run_ensemble(task, N, seed, workers=w))
        raws.append(ensemble_values(task, N, seed, workers=w))
    same_reports = all(r == reports[0] for r in reports[1:])
    same_raw = all(np.array_equal(a, raws[0]) for a in raws[1:])
    rep = TestReport("determinism", settings={"N": N, "h": h, "T": T, "seed": seed,
                                              "workers": list(workers_list)})
    rep.add(Check(f"identical reports for workers {list(workers_list)}", same_reports and same_raw,
                  detail=f"means {[round(r.mean, 12) for r in reports[0]]}", criterion=criterion))
    rep.wall_time = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------- suites
SUITES = ("moments", "reweight", "girsanov", "linear", "jumps", "zvonkin", "feller",
          "mt-continuity", "martingale", "determinism")


@dataclass(frozen=True)
class SuiteSettings:
    """Sample sizes and steps of the default battery (``scale`` multiplies path counts)."""

    seed: int = 20240611
    scale: float = 1.0
    h: float = 1e-3

    def n(self, base: int) -> int:
        return max(int(round(base * self.scale)), 16)


def run_suite(name: str, settings: SuiteSettings | None = None, workers=None,
              model: ModelSpec | None = None, phi0: Segment | None = None,
              k0: int | None = None) -> list[TestReport]:
    """Run one named suite (or ``"all"``) on the reference model."""
    st = SuiteSettings() if settings is None else settings
    if name == "all":
        out = []
        for s in SUITES:
            out.extend(run_suite(s, st, workers, model, phi0, k0))
        return out
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; expected one of {SUITES + ('all',)}")
    ref = bundled("reference")
    model = ref.model if model is None else model
    phi0 = ref.initial if phi0 is None else phi0
    k0 = ref.k0 if k0 is None else k0
    seed, h = st.seed, st.h
    if name == "moments":
        return [switch_weight_moments(model, phi0, k0, 1.0, st.n(200_000), h, seed, workers)]
    if name == "reweight":
        return [reweight_identity_test(model, phi0, k0, 1.0, st.n(100_000), h, seed + 10,
                                       workers=workers, criterion=3)]
    if name == "girsanov":
        rep = girsanov_transfer_test(model, 0, phi0, 0.5, st.n(100_000), h, seed + 20,
                                     workers=workers, criterion=4)
        rep.add(zero_drift_bitwise_check(model, 0, phi0, 0.5, st.n(4096), h, seed + 21,
                                         criterion=4))
        return [rep]
    if name == "linear":
        lin = bundled("linear")
        return [linear_moments_test(lin.model, lin.initial, st.n(100_000), h, seed + 30, workers)]
    if name == "jumps":
        chain = bundled("unit_chain")
        return [jump_count_test(model, phi0, k0, 1.0, st.n(100_000), 1e-2, seed + 40, workers),
                unit_chain_test(chain.model.rates.q_hat, st.n(100_000), seed + 41)]
    if name == "zvonkin":
        return [zvonkin_test(model, 0)]
    if name == "feller":
        return [feller_scan(model, phi0, (1e-1, 1e-2, 1e-3), k0, 1.0, st.n(20_000), h, seed + 50,
                            linear_N=st.n(2000), workers=workers, criterion=8)]
    if name == "mt-continuity":
        return [mt_continuity_test(model, phi0, (1e-1, 1e-2, 1e-3), k0, 1.0, st.n(10_000), h,
                                   seed + 60, workers=workers, criterion=8)]
    if name == "martingale":
        fns = testfns.builtin(model.n_regimes)
        full = martingale_residual_test(model, fns, phi0, k0, 0.5, 1.0, st.n(20_000), h,
                                        seed + 70, workers=workers, criterion=9)
        chain = bundled("chain_only")
        pure = martingale_residual_test(chain.model, [testfns.RegimeValues((0.0, 1.0))],
                                        chain.initial, chain.k0, 0.5, 1.0, st.n(100_000), 1e-2,
                                        seed + 71, mode=chain.simulation.mode, workers=workers,
                                        criterion=9)
        pure.name = "martingale-chain"
        return [full, pure]
    if name == "determinism":
        return [determinism_test(model, phi0, k0, 1.0, st.n(5000), 1e-2, seed + 80)]
    raise AssertionError(name)
