"""Elliptic drift transform ``lambda u - L^i u = b2`` on a rectangular grid (d = 1).

``L^i u = 1/2 sigma^2 u_yy + b2 u_y`` differentiates in ``y`` only, so the
problem splits into independent two-point problems along each ``x``-slice.
Each slice is discretized with second-order central differences, closed by
the far-field values ``u = b2 / lambda`` at ``y = +-y_max``, and solved as a
tridiagonal system.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import solve_banded

from .model import ModelSpec

__all__ = [
    "EllipticSolution",
    "GridSpec",
    "ZvonkinError",
    "gradient_bound",
    "lambda_scan",
    "lipschitz_ratios",
    "self_convergence",
    "solve_elliptic",
    "transformed_drift",
]

DEFAULT_LAMBDAS = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0)


class ZvonkinError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on ``[-x_max, x_max] x [-y_max, y_max]`` with ``nx``, ``ny`` intervals."""

    x_max: float = 2.0
    y_max: float = 8.0
    nx: int = 40
    ny: int = 1600

    def __post_init__(self):
        if self.x_max <= 0 or self.y_max <= 0 or self.nx < 2 or self.ny < 4:
            raise ZvonkinError("grid needs positive extents and at least 2 x 4 intervals")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.x_max, self.x_max, self.nx + 1)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(-self.y_max, self.y_max, self.ny + 1)

    @property
    def hx(self) -> float:
        return 2 * self.x_max / self.nx

    @property
    def hy(self) -> float:
        return 2 * self.y_max / self.ny

    def refined(self, factor: int = 2) -> GridSpec:
        return GridSpec(self.x_max, self.y_max, self.nx, self.ny * factor)


@dataclass(frozen=True, eq=False)
class EllipticSolution:
    regime: int
    lam: float
    grid: GridSpec
    u: np.ndarray  # (nx+1, ny+1)
    b2: np.ndarray
    sigma2: np.ndarray
    residual: float

    @cached_property
    def derivatives(self) -> dict:
        """Central differences on interior nodes (arrays padded with NaN at the edges)."""
        u, hx, hy = self.u, self.grid.hx, self.grid.hy
        nan = np.full_like(u, np.nan)
        fx, fy, fxx, fyy, fxy = (nan.copy() for _ in range(5))
        fx[1:-1, :] = (u[2:, :] - u[:-2, :]) / (2 * hx)
        fy[:, 1:-1] = (u[:, 2:] - u[:, :-2]) / (2 * hy)
        fxx[1:-1, :] = (u[2:, :] - 2 * u[1:-1, :] + u[:-2, :]) / hx ** 2
        fyy[:, 1:-1] = (u[:, 2:] - 2 * u[:, 1:-1] + u[:, :-2]) / hy ** 2
        fxy[1:-1, 1:-1] = (u[2:, 2:] - u[2:, :-2] - u[:-2, 2:] + u[:-2, :-2]) / (4 * hx * hy)
        return {"fx": fx, "fy": fy, "fxx": fxx, "fyy": fyy, "fxy": fxy}

    @property
    def sup_abs(self) -> float:
        return float(np.max(np.abs(self.u)))

    @property
    def b2_sup(self) -> float:
        return float(np.max(np.abs(self.b2)))

    @cached_property
    def _interpolators(self):
        g = self.grid
        der = self.derivatives
        # one-sided fill at the edges so interpolation is defined on the whole grid
        fx = np.gradient(self.u, g.hx, axis=0)
        fy = np.gradient(self.u, g.hy, axis=1)
        fx[1:-1, :] = der["fx"][1:-1, :]
        fy[:, 1:-1] = der["fy"][:, 1:-1]
        mk = lambda v: RegularGridInterpolator((g.x, g.y), v, method="linear", bounds_error=True)  # noqa: E731
        return mk(self.u), mk(fx), mk(fy)

    def interpolate(self, z) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Bilinear ``(f, f_x, f_y)`` at points ``z`` of shape (m, 2)."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        g = self.grid
        if np.any(np.abs(z[:, 0]) > g.x_max) or np.any(np.abs(z[:, 1]) > g.y_max):
            raise ZvonkinError("point outside the solution grid; extrapolation is not supported")
        fu, fx, fy = self._interpolators
        return fu(z), fx(z), fy(z)


def _coefficients(model: ModelSpec, i: int, grid: GridSpec):
    co = model.coefficients
    X, Y = np.meshgrid(grid.x, grid.y, indexing="ij")
    yy = Y.reshape(-1, 1)
    kk = np.full(len(yy), i)
    b2 = co.b2_batch(yy, kk)[:, 0].reshape(X.shape)
    sig = co.sigma_batch(yy, kk)[:, 0].reshape(X.shape)
    return b2, sig * sig


def solve_elliptic(model: ModelSpec, i: int, lam: float, grid: GridSpec | None = None) -> EllipticSolution:
    """Solve ``lam u - 1/2 sigma^2 u_yy - b2 u_y = b2`` for regime ``i``."""
    if model.d != 1:
        raise ZvonkinError("the elliptic solver is implemented for d = 1")
    if lam <= 0:
        raise ZvonkinError("lambda must be positive")
    if not 0 <= i < model.n_regimes:
        raise ZvonkinError(f"regime {i} out of range")
    grid = GridSpec() if grid is None else grid
    b2, s2 = _coefficients(model, i, grid)
    if np.any(s2 <= 0):
        raise ZvonkinError("diffusion must be positive on the grid")
    hy = grid.hy
    u = np.empty_like(b2)
    u[:, 0] = b2[:, 0] / lam
    u[:, -1] = b2[:, -1] / lam
    for s in range(b2.shape[0]):
        diff = 0.5 * s2[s, 1:-1] / hy ** 2
        adv = 0.5 * b2[s, 1:-1] / hy
        lower = -(diff - adv)  # coefficient of u_{j-1}
        upper = -(diff + adv)  # coefficient of u_{j+1}
        main = lam + 2 * diff
        rhs = b2[s, 1:-1].copy()
        rhs[0] -= lower[0] * u[s, 0]
        rhs[-1] -= upper[-1] * u[s, -1]
        ab = np.zeros((3, len(main)))
        ab[0, 1:] = upper[:-1]
        ab[1] = main
        ab[2, :-1] = lower[1:]
        u[s, 1:-1] = solve_banded((1, 1), ab, rhs)
    res = _residual(u, b2, s2, lam, hy)
    return EllipticSolution(i, float(lam), grid, u, b2, s2, res)


def _residual(u, b2, s2, lam, hy) -> float:
    uyy = (u[:, 2:] - 2 * u[:, 1:-1] + u[:, :-2]) / hy ** 2
    uy = (u[:, 2:] - u[:, :-2]) / (2 * hy)
    r = lam * u[:, 1:-1] - 0.5 * s2[:, 1:-1] * uyy - b2[:, 1:-1] * uy - b2[:, 1:-1]
    return float(np.max(np.abs(r)))


def gradient_bound(sol: EllipticSolution) -> float:
    """``max (|grad f| + ||Hess f||_F)`` over interior nodes."""
    der = sol.derivatives
    sl = (slice(1, -1), slice(1, -1))
    grad = np.hypot(der["fx"][sl], der["fy"][sl])
    hess = np.sqrt(der["fxx"][sl] ** 2 + der["fyy"][sl] ** 2 + 2 * der["fxy"][sl] ** 2)
    return float(np.max(grad + hess))


def self_convergence(model: ModelSpec, i: int, lam: float, grid: GridSpec | None = None) -> dict:
    """Max-norm differences between solutions on ``h_y``, ``h_y/2``, ``h_y/4``.

    Returns the two differences (compared on the coarse nodes) and their ratio;
    second-order convergence gives a ratio near 4.
    """
    grid = GridSpec() if grid is None else grid
    sols = [solve_elliptic(model, i, lam, grid.refined(2 ** j)) for j in range(3)]
    d1 = float(np.max(np.abs(sols[0].u - sols[1].u[:, ::2])))
    d2 = float(np.max(np.abs(sols[1].u[:, ::2][:, :] - sols[2].u[:, ::4])))
    return {"diff_coarse": d1, "diff_fine": d2, "ratio": d1 / d2 if d2 > 0 else float("inf"),
            "hy": grid.hy}


def lambda_scan(model: ModelSpec, i: int, lambdas=DEFAULT_LAMBDAS, grid: GridSpec | None = None):
    """Rows ``(lambda, residual, gradient_bound, sup|f|)`` and the smallest ``lambda`` with bound < 1/2."""
    rows = []
    lam_star = None
    for lam in sorted(float(v) for v in lambdas):
        sol = solve_elliptic(model, i, lam, grid)
        gb = gradient_bound(sol)
        rows.append({"lambda": lam, "residual": sol.residual, "gradient_bound": gb,
                     "sup_abs_f": sol.sup_abs, "b2_sup": sol.b2_sup})
        if lam_star is None and gb < 0.5:
            lam_star = lam
    return rows, lam_star


def transformed_drift(z, i: int, solutions, model: ModelSpec, b1=0.0) -> np.ndarray:
    """Drift of the transformed velocity ``V~ = y + f_lambda(z, i)``.

    ``lambda f + b1 + f_x (a x + b y) + f_y b1 + sum_j q_hat_ij (y + f(z, j))``
    with the sum over all ``j`` (the diagonal of ``q_hat`` is ``-q_hat_i``).
    ``solutions[j]`` is the solution for regime ``j`` (all with the same
    ``lambda``); ``b1`` is the functional drift value at the current segment.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    co = model.coefficients
    sol = solutions[i]
    f, fx, fy = sol.interpolate(z)
    x, y = z[:, 0], z[:, 1]
    b1 = np.broadcast_to(np.asarray(b1, dtype=float).ravel(), x.shape) if np.ndim(b1) else np.full(x.shape, float(b1))
    out = sol.lam * f + b1 + fx * (co.a * x + co.b * y) + fy * b1
    qrow = model.rates.q_hat[i]
    for j, q in enumerate(qrow):
        if q == 0:
            continue
        if solutions[j] is None:
            raise ZvonkinError(f"missing solution for regime {j}")
        if solutions[j].lam != sol.lam:
            raise ZvonkinError("all regimes must share lambda")
        fj = f if j == i else solutions[j].interpolate(z)[0]
        out = out + q * (y + fj)
    return out


def lipschitz_ratios(solutions, i: int, model: ModelSpec, separations=(1e-1, 1e-2, 1e-3, 1e-4),
                     n_pairs: int = 10_000, center_box: float = 1.0, seed: int = 0) -> list[dict]:
    """Sampled difference quotients of the transformed drift and of raw ``b2``.

    Pairs ``(z, z + s e)`` with random unit ``e`` and base points in
    ``[-center_box, center_box]^2``, half of them pinned near ``y = 0`` where
    the Hoelder drift is least regular.
    """
    rng = np.random.default_rng(seed)
    co = model.coefficients
    out = []
    for s in separations:
        z = rng.uniform(-center_box, center_box, size=(n_pairs, 2))
        half = n_pairs // 2
        z[:half, 1] = rng.uniform(-s, s, size=half)
        ang = rng.uniform(0, 2 * np.pi, size=n_pairs)
        z2 = z + s * np.column_stack([np.cos(ang), np.sin(ang)])
        dist = np.linalg.norm(z2 - z, axis=1)
        t1 = transformed_drift(z, i, solutions, model)
        t2 = transformed_drift(z2, i, solutions, model)
        kk = np.full(n_pairs, i)
        r1 = co.b2_batch(z[:, 1:], kk)[:, 0]
        r2 = co.b2_batch(z2[:, 1:], kk)[:, 0]
        out.append({"separation": float(s),
                    "transformed": float(np.max(np.abs(t1 - t2) / dist)),
                    "raw_b2": float(np.max(np.abs(r1 - r2) / dist))})
    return out


def injective_along_slices(sol: EllipticSolution) -> bool:
    """Nodal check that ``y -> y + f(x, y)`` is strictly increasing on every x-slice."""
    g = sol.grid.y[None, :] + sol.u
    return bool(np.all(np.diff(g, axis=1) > 0))


def contraction_ratio(sol: EllipticSolution, stride: int = 8) -> float:
    """``max |f(z) - f(z')| / |z - z'|`` over node pairs of a strided subgrid."""
    g = sol.grid
    X, Y = np.meshgrid(g.x[::stride], g.y[::stride], indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    vals = sol.u[::stride, ::stride].ravel()
    best = 0.0
    for p in range(len(pts) - 1):
        d = np.linalg.norm(pts[p + 1:] - pts[p], axis=1)
        best = max(best, float(np.max(np.abs(vals[p + 1:] - vals[p]) / d)))
    return best
