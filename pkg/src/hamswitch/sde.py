"""Euler-Maruyama integration of the switched stochastic Hamiltonian system.

The integrator is vectorized over a block of paths.  Each path draws from its
own ``(seed, index)`` streams (Brownian and chain substreams), so a path is
the same whether it is simulated alone, in a block, or in another process.

Per step ``t_n -> t_{n+1}`` the drift uses the segment at ``t_n`` and the
regime at ``t_n``.  Chain events falling in ``(t_n, t_{n+1}]`` are resolved
at the step end against the segment at ``t_{n+1}``.  Segment functionals are
carried by exact recursions instead of rebuilding segments:

* ``||Z_t||_r``: ``S_{n+1} = max(e^{-rh} S_n, e^{-rh/2}|mid|, |z_{n+1}|)``,
  i.e. the node/midpoint rule of :func:`hamswitch.segment.r_norm`;
* weighted history integrals: ``I_{n+1} = e^{-wh} I_n + trapezoid`` over the
  newest interval;
* discrete lags: interpolation in the stored history.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ModelSpec, eval_b1, eval_b2, eval_sigma
from .montecarlo import BROWNIAN, CHAIN, rng_stream
from .segment import TRANSFORMS, Segment, evaluate, extend, r_norm, weighted_history_integral
from .switching import build_intervals

__all__ = [
    "BatchResult",
    "ExitReport",
    "HybridPath",
    "MODES",
    "exit_time_diagnostic",
    "integrate_batch",
    "simulate_coupled_pair",
    "simulate_hybrid",
    "step_hamiltonian",
]

MODES = ("markovian", "state_dependent", "none")
MAX_STEPS = 50_000_000


class SimulationError(ValueError):
    pass


def step_hamiltonian(x, y, phi: Segment, k: int, h: float, dW, model: ModelSpec,
                     include_b2: bool = True):
    """One Euler-Maruyama step; the position update carries no noise."""
    if h <= 0:
        raise SimulationError("step must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    co = model.coefficients
    z = np.concatenate([x, y])
    drift = eval_b1(model, phi, k)
    if include_b2:
        drift = drift + eval_b2(model, z, k)
    x_new = x + (co.a * x + co.b * y) * h
    y_new = y + drift * h + eval_sigma(model, z, k) @ np.asarray(dW, dtype=float)
    return x_new, y_new


def n_steps_for(T: float, h: float) -> int:
    if T <= 0 or h <= 0:
        raise SimulationError("T and h must be positive")
    n = int(round(T / h))
    if n < 1 or abs(n * h - T) > 1e-9 * max(T, 1.0):
        raise SimulationError(f"T={T} is not a multiple of h={h}")
    if n > MAX_STEPS:
        raise SimulationError(f"{n} steps exceed the guard of {MAX_STEPS}")
    return n


@dataclass
class Snapshot:
    """Per-path state at a checkpoint step."""

    step: int
    x: np.ndarray
    y: np.ndarray
    regime: np.ndarray
    norm: np.ndarray
    log_switch: np.ndarray
    log_girsanov: np.ndarray
    n_jumps: np.ndarray
    af_integral: np.ndarray  # (B, n_functions)


@dataclass
class BatchResult:
    """Block of simulated paths.  Arrays are indexed by path within the block."""

    h: float
    n_steps: int
    mode: str
    include_b2: bool
    final: Snapshot
    novikov: np.ndarray  # int_0^T |sigma^-1 b2|^2 dt
    max_abs_y: np.ndarray
    checkpoints: dict = field(default_factory=dict)
    trajectory: np.ndarray | None = None  # (B, n+1, 2d)
    regimes: np.ndarray | None = None  # (B, n+1)
    norms: np.ndarray | None = None  # (B, n+1)
    dW: np.ndarray | None = None  # (B, n, d)
    jumps: list = field(default_factory=list)  # (path, time, step, from, to)

    @property
    def switch_weight(self) -> np.ndarray:
        return np.exp(self.final.log_switch)

    @property
    def girsanov_weight(self) -> np.ndarray:
        return np.exp(self.final.log_girsanov)


class _ChainBuffers:
    """Per-path pre-drawn chain variates: waiting times, marks, acceptance uniforms."""

    def __init__(self, seed, indices, chunk):
        self.gens = [rng_stream(seed, int(i), CHAIN) for i in indices]
        self.chunk = chunk
        B = len(indices)
        self.E = np.empty((B, chunk))
        self.U = np.empty((B, chunk))
        self.A = np.empty((B, chunk))
        for b, g in enumerate(self.gens):
            self.E[b], self.U[b], self.A[b] = self._draw(g)
        self.ptr = np.zeros(B, dtype=np.intp)

    def _draw(self, g):
        return g.standard_exponential(self.chunk), g.random(self.chunk), g.random(self.chunk)

    def ensure(self, rows):
        """Grow the buffers when a path is about to consume past its last draw."""
        need = rows[self.ptr[rows] + 1 >= self.E.shape[1]]
        if len(need) == 0:
            return
        extra = [self._draw(self.gens[b]) for b in range(len(self.gens))]
        # every path grows in lockstep; draws are per-path sequential so values
        # depend only on the path's own stream
        self.E = np.hstack([self.E, np.array([e[0] for e in extra])])
        self.U = np.hstack([self.U, np.array([e[1] for e in extra])])
        self.A = np.hstack([self.A, np.array([e[2] for e in extra])])


def _sqsum(v):
    return v[:, 0] * v[:, 0] if v.shape[1] == 1 else np.einsum("bi,bi->b", v, v)


def _brownian(seed, indices, n, d, h):
    sq = np.sqrt(h)
    out = np.empty((len(indices), n, d))
    for b, i in enumerate(indices):
        out[b] = rng_stream(seed, int(i), BROWNIAN).standard_normal((n, d))
    out *= sq
    return out


def integrate_batch(model: ModelSpec, phi0: Segment, k0: int, T: float, h: float, seed: int,
                    indices, mode: str = "state_dependent", include_b2: bool = True,
                    record: bool = False, checkpoints=(), functions=(),
                    log_jumps: bool = False) -> BatchResult:
    """Simulate the paths ``indices`` of the ensemble ``seed`` on ``[0, T]``.

    Parameters
    ----------
    mode : {"state_dependent", "markovian", "none"}
        Thinned chain with rates ``q(phi)``, the dominating chain ``Q_hat``
        (accumulating the change-of-measure weight), or a frozen regime.
    include_b2 : bool
        Drop the Hoelder drift to get the reference system; the Girsanov
        log-weight of ``b2`` is accumulated either way.
    checkpoints : iterable of int
        Step indices at which to store a :class:`Snapshot`.
    functions : sequence of test functions
        Accumulates ``int_0^t (A f)(Z_s, k_s) ds`` by the left rectangle rule.
    """
    if mode not in MODES:
        raise SimulationError(f"unknown switching mode {mode!r}")
    if phi0.decay_rate != model.decay_rate or phi0.dimension != model.d:
        raise SimulationError("initial segment does not match the model's r or d")
    if not 0 <= k0 < model.n_regimes:
        raise SimulationError(f"initial regime {k0} out of range")
    n = n_steps_for(T, h)
    indices = np.asarray(indices, dtype=np.int64)
    B = len(indices)
    co, rates, d, r = model.coefficients, model.rates, model.d, model.decay_rate
    N_reg = model.n_regimes
    checkpoints = sorted(set(int(c) for c in checkpoints))
    if any(c < 0 or c > n for c in checkpoints):
        raise SimulationError("checkpoint outside the step range")
    functions = list(functions)
    nf = len(functions)

    dW = _brownian(seed, indices, n, d, h)

    z0 = phi0.head
    x = np.tile(z0[:d], (B, 1))
    y = np.tile(z0[d:], (B, 1))
    k = np.full(B, k0, dtype=np.intp)
    S = np.full(B, r_norm(phi0))
    log_sw = np.zeros(B)
    log_gs = np.zeros(B)
    novikov = np.zeros(B)
    n_jumps = np.zeros(B, dtype=np.intp)
    af_int = np.zeros((B, nf))
    max_y = np.linalg.norm(y, axis=1)

    # functional drift state, one entry per regime
    b1_specs = co.b1
    need_hist = record or any(s.family == "lag" for s in b1_specs)
    hist = np.empty((n + 1, B, 2 * d)) if need_hist else None
    if need_hist:
        hist[0] = z0
    integrals = {}
    for j, s in enumerate(b1_specs):
        if s.family == "weighted_integral" and s.scale != 0:
            I0 = weighted_history_integral(phi0, s.weight_rate, s.transform)
            integrals[j] = (np.tile(I0, (B, 1)), np.exp(-s.weight_rate * h), TRANSFORMS[s.transform][0])
    regimes_rec = np.empty((B, n + 1), dtype=np.intp) if record else None
    norms_rec = np.empty((B, n + 1)) if record else None
    if record:
        regimes_rec[:, 0] = k
        norms_rec[:, 0] = S

    # chain set-up
    switching = mode != "none" and N_reg > 1 and np.any(rates.exit_hat > 0)
    qhat_exit = rates.exit_hat
    if switching:
        layout = build_intervals(rates.q_hat)
        width = max(N_reg - 1, 1)
        cum = np.full((N_reg, width), np.inf)
        tgt = np.zeros((N_reg, width), dtype=np.intp)
        for i in range(N_reg):
            m = len(layout.edges[i])
            cum[i, :m] = layout.edges[i]
            tgt[i, :m] = layout.targets[i]
        lam = float(qhat_exit.max()) * T
        chain = _ChainBuffers(seed, indices, int(np.ceil(lam + 6 * np.sqrt(lam) + 8)))
        with np.errstate(divide="ignore"):
            next_ev = np.where(qhat_exit[k] > 0, chain.E[:, 0] / qhat_exit[k], np.inf)
        track_weight = mode == "markovian" and not rates.state_independent
        state_dep = mode == "state_dependent" and not rates.state_independent
    arange = np.arange(B)

    snaps = {}

    def snapshot(step):
        return Snapshot(step, x.copy(), y.copy(), k.copy(), S.copy(), log_sw.copy(),
                        log_gs.copy(), n_jumps.copy(), af_int.copy())

    if 0 in checkpoints:
        snaps[0] = snapshot(0)

    a, bcoef = co.a, co.b
    lag_pre = {}
    for j, s in enumerate(b1_specs):
        if s.family == "lag" and s.scale != 0:
            L = s.lag / h
            nback = int(np.ceil(L)) + 1
            times = np.minimum(np.arange(nback) * h - s.lag, 0.0)
            lag_pre[j] = (L, evaluate(phi0, times))
    jump_log = []
    e_full, e_half = np.exp(-r * h), np.exp(-r * h / 2)
    zeros_bd = np.zeros((B, d))

    for step in range(n):
        # ---- coefficients at t_n
        b1 = zeros_bd
        for j, s in enumerate(b1_specs):
            if s.family == "zero" or s.scale == 0:
                continue
            sel = k == j
            if not sel.any():
                continue
            # full-width evaluation and a masked select beat fancy indexing here
            if s.family == "weighted_integral":
                inner = integrals[j][0]
            else:
                L, pre = lag_pre[j]
                pos = step - L
                if pos >= 0:
                    i0 = int(np.floor(pos))
                    frac = pos - i0
                    if frac == 0.0 or i0 >= step:
                        inner = hist[min(i0, step)]
                    else:
                        inner = (1 - frac) * hist[i0] + frac * hist[i0 + 1]
                else:
                    inner = pre[step][None, :]
            b1 = np.where(sel[:, None], s.scale * np.tanh(s.project(inner, d)), b1)
        b2 = co.b2_batch(y, k)
        sig = co.sigma_batch(y, k)
        theta = np.divide(b2, sig, out=np.zeros_like(b2), where=sig > 0)
        th2 = np.sum(theta * theta, axis=1)
        dw = dW[:, step]
        log_gs += np.sum(theta * dw, axis=1) - 0.5 * th2 * h
        novikov += th2 * h
        drift = b1 + b2 if include_b2 else b1

        if nf:
            if mode == "none" or not switching:
                qrow = None
            elif mode == "markovian":
                qrow = np.broadcast_to(rates.q_hat * (1 - np.eye(N_reg)), (B, N_reg, N_reg))[arange, k]
            else:
                qrow = rates.rates(S)[arange, k]
            vel = a * x + bcoef * y
            for m_, f in enumerate(functions):
                val = (0.5 * np.einsum("bi,bii->b", sig * sig, f.hess_y(x, y, k))
                       + np.sum(vel * f.grad_x(x, y, k), axis=1)
                       + np.sum(drift * f.grad_y(x, y, k), axis=1))
                if qrow is not None:
                    fk = f.value(x, y, k)
                    for l in range(N_reg):
                        w_l = qrow[:, l]
                        if np.any(w_l):
                            val += w_l * (f.value(x, y, np.full(B, l)) - fk)
                af_int[:, m_] += val * h

        # ---- Euler step
        x_new = x + (a * x + bcoef * y) * h
        y_new = y + drift * h + sig * dw
        if integrals:
            z_old = np.concatenate((x, y), axis=1)
            z_new = np.concatenate((x_new, y_new), axis=1)
            for j, (I, decay, m) in integrals.items():
                I *= decay
                I += 0.5 * h * (decay * m(z_old) + m(z_new))
        mx, my = 0.5 * (x + x_new), 0.5 * (y + y_new)
        x, y = x_new, y_new
        if need_hist:
            hist[step + 1, :, :d] = x
            hist[step + 1, :, d:] = y
        ny2 = _sqsum(y)
        S = np.maximum(np.maximum(e_full * S, e_half * np.sqrt(_sqsum(mx) + _sqsum(my))),
                       np.sqrt(_sqsum(x) + ny2))
        np.maximum(max_y, np.sqrt(ny2), out=max_y)

        # ---- chain events in (t_n, t_{n+1}]
        t_end = (step + 1) * h
        if switching:
            t_start = step * h
            last = np.full(B, t_start)
            if track_weight or state_dep:
                shape = rates.shape_value(S)  # rates use the step-end segment
                c_tot, d_tot = rates._totals
            due = next_ev <= t_end
            while due.any():
                rows = np.nonzero(due)[0]
                chain.ensure(rows)
                p = chain.ptr[rows]
                kr = k[rows]
                tau = next_ev[rows]
                u = chain.U[rows, p] * qhat_exit[kr]
                pos = np.sum(u[:, None] >= cum[kr], axis=1)
                pos = np.minimum(pos, width - 1)
                lr = tgt[kr, pos]
                if track_weight or state_dep:
                    q_pair = rates.base[kr, lr] * (1.0 + rates.sensitivity[kr, lr] * shape[rows])
                if state_dep:
                    accept = chain.A[rows, p] * rates.q_hat[kr, lr] < q_pair
                else:
                    accept = np.ones(len(rows), dtype=bool)
                if track_weight:
                    q_exit = c_tot[kr] + d_tot[kr] * shape[rows]
                    log_sw[rows] -= (q_exit - qhat_exit[kr]) * (tau - last[rows])
                    log_sw[rows] += np.where(accept, np.log(q_pair / rates.q_hat[kr, lr]), 0.0)
                last[rows] = tau
                acc = rows[accept]
                if log_jumps:
                    for b, t_, f_, l_ in zip(acc, tau[accept], kr[accept], lr[accept]):
                        jump_log.append((int(b), float(t_), step + 1, int(f_), int(l_)))
                k[acc] = lr[accept]
                n_jumps[acc] += 1
                chain.ptr[rows] += 1
                p1 = chain.ptr[rows]
                qn = qhat_exit[k[rows]]
                with np.errstate(divide="ignore"):
                    next_ev[rows] = np.where(qn > 0, tau + chain.E[rows, p1] / qn, np.inf)
                due = next_ev <= t_end
            if track_weight:
                log_sw -= (c_tot[k] + d_tot[k] * shape - qhat_exit[k]) * (t_end - last)
        if record:
            regimes_rec[:, step + 1] = k
            norms_rec[:, step + 1] = S
        if step + 1 in checkpoints:
            snaps[step + 1] = snapshot(step + 1)

    final = snapshot(n)
    res = BatchResult(h, n, mode, include_b2, final, novikov, max_y, snaps)
    if record:
        res.trajectory = np.transpose(hist, (1, 0, 2)).copy()
        res.regimes = regimes_rec
        res.norms = norms_rec
        res.dW = dW
    res.jumps = jump_log
    return res


@dataclass(eq=False)
class HybridPath:
    """One discretized trajectory of ``(Z(t), Theta(t))`` with its noise record."""

    h: float
    t: np.ndarray
    x: np.ndarray  # (n+1, d)
    y: np.ndarray
    regime: np.ndarray  # regime on [t_n, t_{n+1})
    dW: np.ndarray  # (n, d)
    initial: Segment
    jumps: list  # (time, step, from, to); step is the boundary where the jump is resolved
    norms: np.ndarray  # ||Z_{t_n}||_r
    mode: str
    include_b2: bool
    seed: int
    index: int
    log_switch: float = 0.0
    log_girsanov: float = 0.0

    @property
    def n_steps(self) -> int:
        return len(self.t) - 1

    @property
    def z(self) -> np.ndarray:
        return np.hstack([self.x, self.y])

    def step_of(self, t: float) -> int:
        n = int(round(t / self.h))
        if n < 0 or n > self.n_steps or abs(n * self.h - t) > 1e-9 * max(t, 1.0):
            raise SimulationError(f"t={t} is not a grid time of this path")
        return n

    def segment(self, step: int) -> Segment:
        """The segment ``Z_{t_step}``: initial history extended by the recorded path."""
        return extend(self.initial, self.h, self.z[1:step + 1])

    def jump_times(self) -> np.ndarray:
        return np.array([j[0] for j in self.jumps])

    def trace_records(self):
        for n in range(len(self.t)):
            yield {"t": float(self.t[n]), "X": self.x[n].tolist(), "Y": self.y[n].tolist(),
                   "regime": int(self.regime[n])}


def _path_from_batch(res: BatchResult, phi0, seed, index, T) -> HybridPath:
    d = phi0.dimension
    traj = res.trajectory[0]
    n = res.n_steps
    return HybridPath(
        h=res.h, t=np.arange(n + 1) * res.h, x=traj[:, :d].copy(), y=traj[:, d:].copy(),
        regime=res.regimes[0].copy(), dW=res.dW[0].copy(), initial=phi0,
        jumps=[(t, s, f, l) for _, t, s, f, l in res.jumps], norms=res.norms[0].copy(),
        mode=res.mode, include_b2=res.include_b2, seed=seed, index=index,
        log_switch=float(res.final.log_switch[0]), log_girsanov=float(res.final.log_girsanov[0]))


def simulate_hybrid(model: ModelSpec, phi0: Segment, k0: int, T: float, h: float,
                    seed: int = 0, index: int = 0, mode: str = "state_dependent",
                    include_b2: bool = True) -> HybridPath:
    """Single recorded path number ``index`` of the ensemble ``seed``."""
    res = integrate_batch(model, phi0, k0, T, h, seed, [index], mode=mode,
                          include_b2=include_b2, record=True, log_jumps=True)
    return _path_from_batch(res, phi0, seed, index, T)


def simulate_coupled_pair(model: ModelSpec, phi: Segment, psi: Segment, k0: int, T: float,
                          h: float, seed: int = 0, index: int = 0,
                          include_b2: bool = True) -> tuple[HybridPath, HybridPath]:
    """Paths from ``phi`` and ``psi`` with a shared regime and shared noise.

    Both marginals use the Markovian dominating chain, which does not depend
    on the path, so with a common initial regime the chains coincide and the
    coupling time is 0.
    """
    if phi.decay_rate != psi.decay_rate or phi.dimension != psi.dimension:
        raise SimulationError("coupled initial segments need the same r and d")
    p1 = simulate_hybrid(model, phi, k0, T, h, seed, index, "markovian", include_b2)
    p2 = simulate_hybrid(model, psi, k0, T, h, seed, index, "markovian", include_b2)
    return p1, p2


def difference_norm(traj_a: np.ndarray, traj_b: np.ndarray, initial_gap: float, r: float,
                    h: float) -> np.ndarray:
    """``||W^a_T - W^b_T||_r`` for batches of recorded trajectories ``(B, n+1, 2d)``.

    ``initial_gap`` is ``||phi - psi||_r`` of the starting segments; it is
    discounted by ``e^{-rT}`` like the rest of the history.
    """
    diff = traj_a - traj_b
    n = diff.shape[1] - 1
    lag = (n - np.arange(n + 1)) * h
    nodes = np.max(np.exp(-r * lag)[None, :] * np.linalg.norm(diff, axis=2), axis=1)
    mids = 0.5 * (diff[:, 1:] + diff[:, :-1])
    mlag = lag[:-1] - h / 2
    mid = np.max(np.exp(-r * mlag)[None, :] * np.linalg.norm(mids, axis=2), axis=1) if n else 0.0
    return np.maximum(np.maximum(nodes, mid), np.exp(-r * n * h) * initial_gap)


@dataclass
class ExitReport:
    radii: list
    probabilities: list
    stderrs: list
    bounds: list
    within_bound: list
    monotone: bool
    constant: float
    kappa: float

    @property
    def passed(self) -> bool:
        return all(self.within_bound) and self.monotone

    def to_dict(self) -> dict:
        return {"radii": self.radii, "probabilities": self.probabilities, "stderrs": self.stderrs,
                "bounds": self.bounds, "within_bound": self.within_bound,
                "monotone": self.monotone, "constant": self.constant, "kappa": self.kappa}


def exit_time_diagnostic(model: ModelSpec, phi0: Segment, k: int, radii, t: float, kappa: float,
                         N: int, h: float, seed: int = 0) -> ExitReport:
    """Estimate ``P(tau_R <= t)`` for the reference system in regime ``k``.

    ``tau_R`` is the first time ``|Y| >= R``.  Checks ``R^2 P <= e^{kappa t}
    (|phi(0)|^2 + C / kappa)`` with the conservative ``C = sup|b1|^2 + d
    sigma_hat^2`` and monotonicity in ``R`` (up to 3 standard errors).
    """
    co = model.coefficients
    if kappa < 2 * co.a + abs(co.b) + 1:
        raise SimulationError("kappa must be at least 2a + |b| + 1")
    radii = sorted(float(R) for R in radii)
    y0 = np.linalg.norm(phi0.head[model.d:])
    if radii[0] <= y0 + 1:
        raise SimulationError("radii must exceed |phi_2(0)| + 1")
    res = integrate_batch(model, phi0, k, t, h, seed, np.arange(N), mode="none", include_b2=False)
    C = co.b1[k].sup_bound(model.d) ** 2 + model.d * co.sigma[k].upper ** 2
    head2 = float(np.sum(phi0.head ** 2))
    probs, ses, bounds, ok = [], [], [], []
    for R in radii:
        hit = (res.max_abs_y >= R).astype(float)
        p = hit.mean()
        se = hit.std(ddof=1) / np.sqrt(N) if N > 1 else 0.0
        bound = np.exp(kappa * t) * (head2 + C / kappa)
        probs.append(float(p))
        ses.append(float(se))
        bounds.append(float(bound))
        ok.append(bool(R * R * p <= bound))
    mono = all(probs[i + 1] <= probs[i] + 3 * np.hypot(ses[i], ses[i + 1]) for i in range(len(probs) - 1))
    return ExitReport(radii, probs, ses, bounds, ok, mono, float(C), float(kappa))
