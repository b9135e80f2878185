"""Built-in test functions ``f(z, k)`` with analytic derivatives.

Every function exposes the vectorized protocol used by the generator and the
martingale-problem diagnostics::

    value(x, y, k)   -> (B,)
    grad_x(x, y, k)  -> (B, d)
    grad_y(x, y, k)  -> (B, d)
    hess_y(x, y, k)  -> (B, d, d)

with ``x, y`` of shape ``(B, d)`` and integer regimes ``k`` of shape ``(B,)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Bump", "Constant", "QuadraticY", "RegimeValues", "SaturatingQuadratic", "TanhY",
           "builtin"]


def _weights(w, k):
    if w is None:
        return np.ones(len(k))
    return np.asarray(w, dtype=float)[k]


class _Base:
    name = "f"

    def grad_x(self, x, y, k):
        return np.zeros_like(x)

    def grad_y(self, x, y, k):
        return np.zeros_like(y)

    def hess_y(self, x, y, k):
        return np.zeros(y.shape + (y.shape[1],))

    def __call__(self, z, k: int) -> float:
        """Scalar convenience: ``f(z, k)`` for one state ``z in R^{2d}``."""
        z = np.asarray(z, dtype=float)
        d = len(z) // 2
        return float(self.value(z[None, :d], z[None, d:], np.array([k]))[0])


@dataclass(frozen=True)
class Constant(_Base):
    c: float = 1.0
    name: str = "constant"

    def value(self, x, y, k):
        return np.full(len(x), float(self.c))


@dataclass(frozen=True)
class RegimeValues(_Base):
    """``f(z, k) = values[k]``; a pure function of the regime."""

    values: tuple = (0.0, 1.0)
    name: str = "regime"

    def value(self, x, y, k):
        return np.asarray(self.values, dtype=float)[k]


@dataclass(frozen=True)
class Bump(_Base):
    """Smooth compactly supported bump ``w_k exp(-1/(1 - rho^2))``.

    ``rho = |z - center| / radius``; the bump vanishes with all derivatives
    for ``rho >= 1``.
    """

    center_x: float = 0.0
    center_y: float = 0.0
    radius: float = 2.0
    regime_weights: tuple | None = None
    name: str = "bump"

    def _s(self, x, y):
        dx = x - self.center_x
        dy = y - self.center_y
        s = (np.sum(dx * dx, axis=1) + np.sum(dy * dy, axis=1)) / self.radius ** 2
        inside = s < 1.0
        g = np.zeros_like(s)
        om = np.where(inside, 1.0 - s, 1.0)
        g[inside] = np.exp(-1.0 / om[inside])
        return dx, dy, s, om, g, inside

    def value(self, x, y, k):
        return _weights(self.regime_weights, k) * self._s(x, y)[4]

    def _first(self, x, y, k):
        dx, dy, s, om, g, inside = self._s(x, y)
        gp = np.where(inside, -g / om ** 2, 0.0)  # dg/ds
        return dx, dy, s, om, g, gp, inside

    def grad_x(self, x, y, k):
        dx, _, _, _, _, gp, _ = self._first(x, y, k)
        return (_weights(self.regime_weights, k) * gp)[:, None] * 2.0 * dx / self.radius ** 2

    def grad_y(self, x, y, k):
        _, dy, _, _, _, gp, _ = self._first(x, y, k)
        return (_weights(self.regime_weights, k) * gp)[:, None] * 2.0 * dy / self.radius ** 2

    def hess_y(self, x, y, k):
        _, dy, s, om, g, gp, inside = self._first(x, y, k)
        gpp = np.where(inside, g * (2.0 * s - 1.0) / om ** 4, 0.0)
        R2 = self.radius ** 2
        w = _weights(self.regime_weights, k)
        eye = np.eye(y.shape[1])
        outer = dy[:, :, None] * dy[:, None, :]
        return w[:, None, None] * (gpp[:, None, None] * 4.0 * outer / R2 ** 2
                                   + gp[:, None, None] * 2.0 * eye / R2)


@dataclass(frozen=True)
class SaturatingQuadratic(_Base):
    """Bounded quadratic ``w_k R^2 tanh(|y|^2 / R^2)`` in the velocity."""

    scale: float = 2.0
    regime_weights: tuple | None = None
    name: str = "satquad"

    def value(self, x, y, k):
        R2 = self.scale ** 2
        return _weights(self.regime_weights, k) * R2 * np.tanh(np.sum(y * y, axis=1) / R2)

    def grad_y(self, x, y, k):
        u = np.sum(y * y, axis=1) / self.scale ** 2
        sech2 = 1.0 / np.cosh(u) ** 2
        return (_weights(self.regime_weights, k) * 2.0 * sech2)[:, None] * y

    def hess_y(self, x, y, k):
        R2 = self.scale ** 2
        u = np.sum(y * y, axis=1) / R2
        sech2 = 1.0 / np.cosh(u) ** 2
        w = _weights(self.regime_weights, k)
        eye = np.eye(y.shape[1])
        outer = y[:, :, None] * y[:, None, :]
        return w[:, None, None] * (2.0 * sech2[:, None, None] * eye
                                   - 8.0 * (sech2 * np.tanh(u))[:, None, None] * outer / R2)


@dataclass(frozen=True)
class TanhY(_Base):
    """Bounded odd response ``sum_i tanh(y_i / scale)``."""

    scale: float = 1.0
    name: str = "tanh_y"

    def value(self, x, y, k):
        return np.sum(np.tanh(y / self.scale), axis=1)

    def grad_y(self, x, y, k):
        return 1.0 / np.cosh(y / self.scale) ** 2 / self.scale

    def hess_y(self, x, y, k):
        t = np.tanh(y / self.scale)
        diag = -2.0 * t * (1.0 - t * t) / self.scale ** 2
        out = np.zeros(y.shape + (y.shape[1],))
        idx = np.arange(y.shape[1])
        out[:, idx, idx] = diag
        return out


@dataclass(frozen=True)
class QuadraticY(_Base):
    """``|y|^2`` (unbounded; for generator checks only)."""

    name: str = "quadratic_y"

    def value(self, x, y, k):
        return np.sum(y * y, axis=1)

    def grad_y(self, x, y, k):
        return 2.0 * y

    def hess_y(self, x, y, k):
        return np.broadcast_to(2.0 * np.eye(y.shape[1]), y.shape + (y.shape[1],)).copy()


def builtin(n_regimes: int = 2) -> list:
    """The three bounded functions used by the validation battery."""
    alt = tuple(1.0 + 0.5 * (j % 2) for j in range(n_regimes))
    return [
        Bump(center_x=0.3, center_y=0.3, radius=2.5, regime_weights=alt, name="bump"),
        SaturatingQuadratic(scale=2.0, name="satquad"),
        RegimeValues(values=tuple(float(j) for j in range(n_regimes)), name="regime"),
    ]
