"""Coefficients, switching rates and the generator of the hybrid system.

Position/velocity pairs ``z = (x, y)`` with ``x, y in R^d`` evolve as::

    dX = (a X + b Y) dt
    dY = [b1(Z_t, k) + b2(Z(t), k)] dt + sigma(Z(t), k) dB

while the regime ``k`` jumps with rates ``q_kl(Z_t)``.  All coefficient
families are closed (named, parametrized) so that their bounds, Hoelder and
Lipschitz constants are known exactly.  Regimes are labelled ``0..N-1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .segment import TRANSFORMS, Segment, evaluate, r_norm, weighted_history_integral

__all__ = [
    "Coefficients",
    "Diffusion",
    "FunctionalDrift",
    "ModelError",
    "ModelSpec",
    "PointDrift",
    "RateSpec",
    "AssumptionReport",
    "dominating_matrix",
    "eval_b1",
    "eval_b2",
    "eval_sigma",
    "generator_apply",
    "validate_assumptions",
]

RATIONAL_LIPSCHITZ = 3.0 * np.sqrt(3.0) / 8.0  # sup |d/dx 1/(1+x^2)|


class ModelError(ValueError):
    """Inconsistent or unsupported model description."""


@dataclass(frozen=True)
class FunctionalDrift:
    """History-dependent drift ``b1(phi, k)``.

    Families
    --------
    ``zero``
        identically 0.
    ``weighted_integral``
        ``scale * tanh(P int e^{w theta} m(phi(theta)) d theta)``.
    ``lag``
        ``scale * tanh(P phi(-lag))``.

    ``P`` keeps the position (``component="x"``) or velocity half of R^{2d}.
    """

    family: str = "zero"
    scale: float = 0.0
    weight_rate: float = 1.0
    transform: str = "identity"
    lag: float = 1.0
    component: str = "y"

    def __post_init__(self):
        if self.family not in ("zero", "weighted_integral", "lag"):
            raise ModelError(f"unknown b1 family {self.family!r}")
        if self.component not in ("x", "y"):
            raise ModelError("b1 component must be 'x' or 'y'")
        if self.transform not in TRANSFORMS:
            raise ModelError(f"unknown b1 transform {self.transform!r}")
        if self.family == "weighted_integral" and self.weight_rate <= 0:
            raise ModelError("b1 weight_rate must be positive")
        if self.family == "lag" and self.lag <= 0:
            raise ModelError("b1 lag must be positive")

    def project(self, v: np.ndarray, d: int) -> np.ndarray:
        return v[..., :d] if self.component == "x" else v[..., d:]

    def sup_bound(self, d: int) -> float:
        return 0.0 if self.family == "zero" else abs(self.scale) * np.sqrt(d)

    def lipschitz(self, decay_rate: float) -> float:
        """Lipschitz constant with respect to ``||.||_r`` (inf when not finite)."""
        if self.family == "zero" or self.scale == 0:
            return 0.0
        if self.family == "lag":
            return abs(self.scale) * np.exp(decay_rate * self.lag)
        if self.weight_rate <= decay_rate:
            return np.inf
        return abs(self.scale) / (self.weight_rate - decay_rate)


@dataclass(frozen=True)
class PointDrift:
    """Hoelder drift ``b2(z, k)`` acting on the velocity ``y``.

    ``signed_power`` is ``scale * |y|^exponent * sign(y)`` componentwise with
    ``y`` clipped to ``[-clip, clip]``; ``constant`` is ``scale`` in every
    component.  ``holder_constant`` is the declared ``L2`` (defaults to the
    exact constant of the family).
    """

    family: str = "zero"
    scale: float = 0.0
    exponent: float = 0.5
    clip: float = 1e3
    holder_constant: float | None = None

    def __post_init__(self):
        if self.family not in ("zero", "signed_power", "constant"):
            raise ModelError(f"unknown b2 family {self.family!r}")
        if not 0.0 < self.exponent < 1.0:
            raise ModelError("b2 exponent must lie in (0, 1)")
        if self.clip <= 0:
            raise ModelError("b2 clip radius must be positive")

    def exact_holder_constant(self, d: int) -> float:
        if self.family != "signed_power":
            return 0.0
        # sign(y)|y|^a is 2^{1-a}-Hoelder (extremal pairs y' = -y); the
        # power-mean inequality adds d^{(1-a)/2} for the Euclidean norm.
        a = self.exponent
        return abs(self.scale) * 2.0 ** (1 - a) * d ** ((1 - a) / 2)

    def declared_holder_constant(self, d: int) -> float:
        if self.holder_constant is not None:
            return self.holder_constant
        return self.exact_holder_constant(d)

    def sup_bound(self, d: int) -> float:
        if self.family == "zero":
            return 0.0
        if self.family == "constant":
            return abs(self.scale) * np.sqrt(d)
        return abs(self.scale) * self.clip ** self.exponent * np.sqrt(d)


@dataclass(frozen=True)
class Diffusion:
    """Diagonal noise ``sigma_ii(z, k) = scale * (1 + modulation * cos(y_i))``."""

    family: str = "constant"
    scale: float = 1.0
    modulation: float = 0.0

    def __post_init__(self):
        if self.family not in ("constant", "cosine"):
            raise ModelError(f"unknown sigma family {self.family!r}")
        if self.family == "constant" and self.modulation != 0.0:
            raise ModelError("constant sigma takes no modulation")
        if abs(self.modulation) >= 1.0:
            raise ModelError("sigma modulation must satisfy |eps| < 1")
        if self.scale < 0:
            raise ModelError("sigma scale must be nonnegative")

    @property
    def upper(self) -> float:
        return self.scale * (1.0 + abs(self.modulation))

    @property
    def lower(self) -> float:
        return self.scale * (1.0 - abs(self.modulation))


@dataclass(frozen=True)
class Coefficients:
    a: float
    b: float
    d: int
    b1: tuple[FunctionalDrift, ...]
    b2: tuple[PointDrift, ...]
    sigma: tuple[Diffusion, ...]

    def __post_init__(self):
        object.__setattr__(self, "b1", tuple(self.b1))
        object.__setattr__(self, "b2", tuple(self.b2))
        object.__setattr__(self, "sigma", tuple(self.sigma))
        if self.d < 1:
            raise ModelError("dimension d must be at least 1")
        if not (len(self.b1) == len(self.b2) == len(self.sigma)) or not self.b1:
            raise ModelError("b1, b2 and sigma need one entry per regime")

    @property
    def n_regimes(self) -> int:
        return len(self.b1)

    @cached_property
    def _b2_table(self):
        beta = np.array([p.scale if p.family == "signed_power" else 0.0 for p in self.b2])
        alpha = np.array([p.exponent for p in self.b2])
        const = np.array([p.scale if p.family == "constant" else 0.0 for p in self.b2])
        clip = np.array([p.clip for p in self.b2])
        return beta, alpha, const, clip

    @cached_property
    def _sigma_table(self):
        return (np.array([s.scale for s in self.sigma]),
                np.array([s.modulation for s in self.sigma]))

    def b2_batch(self, y: np.ndarray, k: np.ndarray) -> np.ndarray:
        """``b2`` for a batch of velocities ``y`` (B, d) in regimes ``k`` (B,)."""
        beta, alpha, const, clip = self._b2_table
        uniform = len(beta) == 1 or (np.all(alpha == alpha[0]) and np.all(clip == clip[0]))
        if uniform:
            yc = np.clip(y, -clip[0], clip[0])
            a = alpha[0]
            mag = np.sqrt(np.abs(yc)) if a == 0.5 else np.abs(yc) ** a
        else:
            yc = np.clip(y, -clip[k][:, None], clip[k][:, None])
            mag = np.abs(yc) ** alpha[k][:, None]
        out = beta[k][:, None] * mag * np.sign(yc)
        if np.any(const):
            out += const[k][:, None]
        return out

    def sigma_batch(self, y: np.ndarray, k: np.ndarray) -> np.ndarray:
        """Diagonal of ``sigma`` for a batch, shape (B, d)."""
        scale, eps = self._sigma_table
        if not np.any(eps):
            return np.broadcast_to(scale[k][:, None], y.shape).copy()
        return scale[k][:, None] * (1.0 + eps[k][:, None] * np.cos(y))


@dataclass(frozen=True, eq=False)
class RateSpec:
    """State-dependent switching rates ``q_kl(phi) = c_kl (1 + beta_kl s(||phi||_r))``.

    ``shape`` selects ``s``: ``rational`` is ``1/(1+x^2)``, ``exponential`` is
    ``e^{-x}``, ``constant`` is 1 (rates then equal ``c_kl (1 + beta_kl)``
    for every segment).  ``bound`` and ``lipschitz`` are the
    declared ``H`` and ``K``; they default to the exact values.
    """

    base: np.ndarray
    sensitivity: np.ndarray
    shape: str = "rational"
    bound: float | None = None
    lipschitz: float | None = None

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.base, dtype=float)).copy()
        beta = np.atleast_2d(np.asarray(self.sensitivity, dtype=float)).copy()
        if c.shape[0] != c.shape[1] or beta.shape != c.shape:
            raise ModelError("rate tables must be square and of equal shape")
        if np.any(c < 0) or np.any(beta < 0):
            raise ModelError("rate parameters c_kl and beta_kl must be nonnegative")
        if self.shape not in ("rational", "exponential", "constant"):
            raise ModelError(f"unknown rate shape {self.shape!r}")
        np.fill_diagonal(c, 0.0)
        np.fill_diagonal(beta, 0.0)
        c.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "base", c)
        object.__setattr__(self, "sensitivity", beta)

    def __eq__(self, other):
        if not isinstance(other, RateSpec):
            return NotImplemented
        return (np.array_equal(self.base, other.base)
                and np.array_equal(self.sensitivity, other.sensitivity)
                and (self.shape, self.bound, self.lipschitz)
                == (other.shape, other.bound, other.lipschitz))

    __hash__ = None

    @property
    def n_regimes(self) -> int:
        return self.base.shape[0]

    @property
    def state_independent(self) -> bool:
        return self.shape == "constant" or not np.any(self.sensitivity)

    def shape_value(self, norm):
        norm = np.asarray(norm, dtype=float)
        if self.shape == "rational":
            return 1.0 / (1.0 + norm * norm)
        if self.shape == "exponential":
            return np.exp(-norm)
        return np.ones_like(norm)

    def shape_lipschitz(self) -> float:
        return {"rational": RATIONAL_LIPSCHITZ, "exponential": 1.0, "constant": 0.0}[self.shape]

    def rates(self, norm) -> np.ndarray:
        """Full off-diagonal rate matrix at segment norm(s); shape (..., N, N)."""
        s = self.shape_value(norm)
        return self.base * (1.0 + self.sensitivity * s[..., None, None])

    def rate(self, k: int, l: int, phi: Segment) -> float:
        if k == l:
            raise ModelError("q_kk is not an off-diagonal rate")
        s = float(self.shape_value(r_norm(phi)))
        return float(self.base[k, l] * (1.0 + self.sensitivity[k, l] * s))

    @cached_property
    def q_hat(self) -> np.ndarray:
        """Dominating matrix with conservative diagonal (exact sup over segments)."""
        # every shape attains sup s = 1 (at norm 0, or everywhere for "constant")
        qh = self.base * (1.0 + self.sensitivity)
        np.fill_diagonal(qh, -qh.sum(axis=1))
        qh.setflags(write=False)
        return qh

    @cached_property
    def exit_hat(self) -> np.ndarray:
        """Row totals ``q_hat_k``."""
        return -np.diag(self.q_hat).copy()

    @property
    def exact_bound(self) -> float:
        return float(self.exit_hat.max())

    @property
    def declared_bound(self) -> float:
        return self.exact_bound if self.bound is None else float(self.bound)

    @property
    def exact_lipschitz(self) -> float:
        """Smallest ``K`` with ``|q_kl(phi)-q_kl(psi)| <= K q_hat_kl ||phi-psi||_r``."""
        if self.shape == "constant":
            return 0.0
        beta = self.sensitivity[self.base > 0]
        if beta.size == 0:
            return 0.0
        return float(np.max(beta / (1.0 + beta)) * self.shape_lipschitz())

    @property
    def declared_lipschitz(self) -> float:
        return self.exact_lipschitz if self.lipschitz is None else float(self.lipschitz)

    @cached_property
    def _totals(self):
        # q_k(norm) = C_k + D_k * s(norm)
        return self.base.sum(axis=1), (self.base * self.sensitivity).sum(axis=1)

    def exit_rates(self, k: np.ndarray, norm: np.ndarray) -> np.ndarray:
        """Total exit rate ``q_k(phi)`` for regimes ``k`` at segment norms ``norm``."""
        c_tot, d_tot = self._totals
        return c_tot[k] + d_tot[k] * self.shape_value(norm)

    def pair_rates(self, k: np.ndarray, l: np.ndarray, norm: np.ndarray) -> np.ndarray:
        return self.base[k, l] * (1.0 + self.sensitivity[k, l] * self.shape_value(norm))


def dominating_matrix(rates: RateSpec) -> tuple[np.ndarray, float]:
    """Entrywise supremum of the rates and the bound ``H`` (max off-diagonal row sum)."""
    return rates.q_hat.copy(), rates.exact_bound


@dataclass(frozen=True)
class ModelSpec:
    coefficients: Coefficients
    rates: RateSpec
    decay_rate: float = 1.0

    def __post_init__(self):
        if self.coefficients.n_regimes != self.rates.n_regimes:
            raise ModelError("coefficient and rate tables disagree on the regime count")
        if self.decay_rate <= 0:
            raise ModelError("decay rate must be positive")

    @property
    def d(self) -> int:
        return self.coefficients.d

    @property
    def n_regimes(self) -> int:
        return self.coefficients.n_regimes

    @property
    def H(self) -> float:
        return self.rates.declared_bound


def _check_regime(model: ModelSpec, k: int):
    if not 0 <= k < model.n_regimes:
        raise ModelError(f"regime {k} outside 0..{model.n_regimes - 1}")


def eval_b1(model: ModelSpec, phi: Segment, k: int) -> np.ndarray:
    _check_regime(model, k)
    spec = model.coefficients.b1[k]
    d = model.d
    if spec.family == "zero":
        return np.zeros(d)
    if spec.family == "lag":
        inner = evaluate(phi, -spec.lag)
    else:
        inner = weighted_history_integral(phi, spec.weight_rate, spec.transform)
    return spec.scale * np.tanh(spec.project(inner, d))


def eval_b2(model: ModelSpec, z, k: int) -> np.ndarray:
    _check_regime(model, k)
    z = np.asarray(z, dtype=float)
    d = model.d
    return model.coefficients.b2_batch(z[None, d:], np.array([k]))[0]


def eval_sigma(model: ModelSpec, z, k: int) -> np.ndarray:
    _check_regime(model, k)
    z = np.asarray(z, dtype=float)
    d = model.d
    return np.diag(model.coefficients.sigma_batch(z[None, d:], np.array([k]))[0])


def generator_apply(f, phi: Segment, k: int, model: ModelSpec, rates: str = "state") -> float:
    """``(A f)(phi, k) = L_k(phi) f(phi(0), k) + Q(phi) f(phi(0), k)``.

    ``f`` follows the :mod:`hamswitch.testfns` protocol.  ``rates="dominating"``
    applies the dominating matrix instead (the generator of the Markovian
    reference system).
    """
    _check_regime(model, k)
    co = model.coefficients
    d = model.d
    z = phi.head
    x, y = z[None, :d], z[None, d:]
    kk = np.array([k])
    gx, gy, hyy = f.grad_x(x, y, kk)[0], f.grad_y(x, y, kk)[0], f.hess_y(x, y, kk)[0]
    sig = co.sigma_batch(y, kk)[0]
    diff = 0.5 * float(np.sum(sig * sig * np.diag(hyy)))
    transport = float(np.dot(co.a * z[:d] + co.b * z[d:], gx))
    drift = float(np.dot(eval_b1(model, phi, k) + eval_b2(model, z, k), gy))
    if rates == "dominating":
        row = model.rates.q_hat[k].copy()
    else:
        row = model.rates.rates(r_norm(phi))[k].copy()
    row[k] = 0.0
    fk = f.value(x, y, kk)[0]
    jump = 0.0
    for l in np.nonzero(row)[0]:
        jump += row[l] * (f.value(x, y, np.array([l]))[0] - fk)
    return diff + transport + drift + jump


@dataclass
class AssumptionReport:
    """Per-assumption verdicts from :func:`validate_assumptions`."""

    entries: dict[str, tuple[bool, str]] = field(default_factory=dict)

    def add(self, name: str, passed: bool, detail: str):
        self.entries[name] = (bool(passed), detail)

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.entries.values())

    def __getitem__(self, name: str) -> bool:
        return self.entries[name][0]

    def failures(self) -> list[str]:
        return [name for name, (ok, _) in self.entries.items() if not ok]


def _velocity_pairs(rng, n, d, scale):
    y = rng.normal(scale=scale, size=(n, d))
    y2 = rng.normal(scale=scale, size=(n, d))
    # mirrored and near-zero pairs hit the extremal Hoelder ratios
    m = n // 4
    y2[:m] = -y[:m]
    y[m:2 * m] = 0.0
    y2[m:2 * m] = rng.normal(scale=1e-3, size=(m, d))
    return y, y2


def validate_assumptions(model: ModelSpec, sample_budget: int = 1000,
                         rng: np.random.Generator | None = None) -> AssumptionReport:
    """Empirical check of the structural assumptions on the coefficients and rates.

    Failures are reported as entries, never raised.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    co, rates, r, d = model.coefficients, model.rates, model.decay_rate, model.d
    rep = AssumptionReport()
    tol = 1e-9

    rep.add("structure", co.a >= 0 and co.b != 0, f"a={co.a}, b={co.b} (need a>=0, b!=0)")

    from .segment import distance_r, random_segment

    n_seg = max(sample_budget // 20, 10)
    segs = [random_segment(rng, r, d, n_nodes=int(rng.integers(2, 30)),
                           step=0.1, scale=float(rng.uniform(0.1, 5.0)))
            for _ in range(n_seg)]
    pairs = [(segs[i], segs[(i + 1) % n_seg]) for i in range(n_seg)]

    worst_b1, worst_lip = 0.0, 0.0
    for k in range(model.n_regimes):
        bound = co.b1[k].sup_bound(d)
        lip = co.b1[k].lipschitz(r)
        vals = [eval_b1(model, s, k) for s in segs]
        worst_b1 = max(worst_b1, max(np.linalg.norm(v) - bound for v in vals))
        for (p, q), vp, vq in zip(pairs, vals, vals[1:] + vals[:1]):
            dist = distance_r(p, q)
            if dist > 0:
                worst_lip = max(worst_lip, np.linalg.norm(vp - vq) - lip * dist)
    rep.add("bounded b1", worst_b1 <= tol, f"max excess over sup bound {worst_b1:.3g}")
    rep.add("Lipschitz b1", worst_lip <= tol, f"max excess over L1*dist {worst_lip:.3g}")

    worst_ratio, worst_name = 0.0, ""
    for k in range(model.n_regimes):
        spec = co.b2[k]
        L2 = spec.declared_holder_constant(d)
        y, y2 = _velocity_pairs(rng, sample_budget, d, scale=min(spec.clip, 10.0))
        kk = np.full(sample_budget, k)
        num = np.linalg.norm(co.b2_batch(y, kk) - co.b2_batch(y2, kk), axis=1)
        den = np.linalg.norm(y - y2, axis=1) ** spec.exponent
        ok = den > 0
        excess = float(np.max(num[ok] / den[ok] - L2)) if np.any(ok) else 0.0
        if excess > worst_ratio or not worst_name:
            worst_ratio, worst_name = excess, f"regime {k}"
    rep.add("Hoelder b2", worst_ratio <= tol,
            f"max Hoelder ratio minus declared L2: {worst_ratio:.3g} ({worst_name})")

    sig_ok, inv_max = True, 0.0
    for k in range(model.n_regimes):
        y = rng.normal(scale=5.0, size=(sample_budget, d))
        s = co.sigma_batch(y, np.full(sample_budget, k))
        if np.any(s <= 0) or np.any(s > co.sigma[k].upper + tol):
            sig_ok = False
        with np.errstate(divide="ignore"):
            inv_max = max(inv_max, float(np.max(np.sqrt(np.sum(s ** -4.0, axis=1)))))
    rep.add("sigma positive definite", sig_ok, "diagonal entries in (0, sigma_hat]")
    rep.add("inverse diffusion bounded", bool(np.isfinite(inv_max)),
            f"max ||(sigma sigma^T)^-1||_HS on samples {inv_max:.3g}")

    H = rates.declared_bound
    rep.add("rate bound", rates.exact_bound <= H + tol and np.isfinite(H),
            f"sup_k sum_l q_hat_kl = {rates.exact_bound:.6g}, declared H = {H:.6g}")

    norms = np.array([r_norm(s) for s in segs])
    q = rates.rates(norms)
    dom = float(np.max(q - rates.q_hat * (1 - np.eye(rates.n_regimes))))
    rep.add("dominance", dom <= tol, f"max q_kl - q_hat_kl {dom:.3g}")

    K = rates.declared_lipschitz
    worst_K = 0.0
    qh = rates.q_hat * (1 - np.eye(rates.n_regimes))
    for p, qq in pairs:
        dist = distance_r(p, qq)
        diff = np.abs(rates.rates(r_norm(p)) - rates.rates(r_norm(qq)))
        worst_K = max(worst_K, float(np.max(diff - K * qh * dist)))
    rep.add("rate Lipschitz", worst_K <= tol, f"max excess over K q_hat dist {worst_K:.3g}")
    return rep


def regimes_array(k, n: int) -> np.ndarray:
    return np.full(n, k, dtype=np.intp) if np.isscalar(k) else np.asarray(k, dtype=np.intp)


def build_model(a: float, b: float, d: int, b1: Sequence[FunctionalDrift],
                b2: Sequence[PointDrift], sigma: Sequence[Diffusion], rates: RateSpec,
                decay_rate: float = 1.0) -> ModelSpec:
    """Convenience constructor."""
    return ModelSpec(Coefficients(a, b, d, tuple(b1), tuple(b2), tuple(sigma)), rates, decay_rate)
