"""Model geometry of a degenerating collar.

Densities are area factors: the metric is ``h(z) |dz|^2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, InputError

S_MAX = 0.3


def ilog(x):
    """Return ``1/log(1/x)`` for ``0 < x < 1``."""
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0)) or np.any(~(xa < 1)):
        raise InputError("ilog needs 0 < x < 1")
    out = -1.0 / np.log(xa)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CollarCoords:
    """A point ``z`` of the annulus ``|t| < |z| < 1`` and its log coordinates."""

    t: complex
    z: complex

    def __post_init__(self):
        if not 0 < abs(self.t) < abs(self.z) < 1:
            raise DomainError("need |t| < |z| < 1")

    @property
    def s(self) -> float:
        return ilog(abs(self.t))

    @property
    def r(self) -> float:
        return ilog(abs(self.z))

    @property
    def w(self) -> float:
        return self.r / self.s

    @property
    def theta(self) -> float:
        return float(np.angle(self.z))

    @property
    def theta_t(self) -> float:
        return float(np.angle(self.t))

    @classmethod
    def from_r_theta(cls, t, r, theta):
        return cls(complex(t), complex(np.exp(-1.0 / r + 1j * theta)))

    @classmethod
    def from_swt(cls, t, w, theta):
        return cls.from_r_theta(t, w * ilog(abs(t)), theta)


def _check_annulus(t, z):
    az = np.abs(z)
    if np.any(az <= abs(t)) or np.any(az >= 1):
        raise DomainError("z outside the annulus |t| < |z| < 1")


def plumbing_density(t, z):
    """Hyperbolic metric of the annulus ``|t| < |z| < 1`` with a closed geodesic at ``|z| = |t|^(1/2)``."""
    _check_annulus(t, z)
    az = np.abs(z)
    u = np.log(az) / np.log(abs(t))  # = s / r
    s = ilog(abs(t))
    return np.pi**2 * s**2 / (az**2 * np.sin(np.pi * u) ** 2)


def cusp_density(z):
    az = np.abs(z)
    if np.any(az <= 0) or np.any(az >= 1):
        raise DomainError("cusp density needs 0 < |z| < 1")
    return 1.0 / (az * np.log(az)) ** 2


@dataclass(frozen=True)
class Chart:
    density: Callable
    contains: Callable = lambda p: True


@dataclass(frozen=True)
class ConformalMetricField:
    """Metric given chartwise; ``transitions[(a, b)] = (phi, dphi)`` maps chart a to chart b."""

    charts: dict
    transitions: dict = field(default_factory=dict)

    @classmethod
    def single(cls, name, density, contains=lambda p: True):
        return cls({name: Chart(density, contains)})

    def density(self, chart, p):
        return self.charts[chart].density(p)

    def overlap_defect(self, a, b, pts):
        """Max relative violation of ``h_a = h_b(phi) |phi'|^2`` at ``pts``."""
        phi, dphi = self.transitions[(a, b)]
        ha = self.density(a, pts)
        hb = self.density(b, phi(pts)) * np.abs(dphi(pts)) ** 2
        return float(np.max(np.abs(ha - hb) / ha))


def _resolve(m, chart):
    if isinstance(m, ConformalMetricField):
        name = chart if chart is not None else next(iter(m.charts))
        c = m.charts[name]
        return c.density, c.contains
    return m, None


def flat_laplacian(g: Callable, p, step: float, richardson: bool = True):
    """Centered 5-point flat Laplacian of ``g`` at ``p``; Richardson-extrapolated by default."""

    def lap(d):
        pts = np.array([p + d, p - d, p + 1j * d, p - 1j * d, p])
        v = g(pts)
        return (v[0] + v[1] + v[2] + v[3] - 4 * v[4]) / d**2

    if not richardson:
        return lap(step)
    return (4 * lap(step / 2) - lap(step)) / 3


def gaussian_curvature(m, p, step: float = 1e-3, chart=None, richardson: bool = True) -> float:
    """Curvature ``-(1/2h) Lap log h`` of ``h |dz|^2`` by finite differences at ``p``.

    ``m`` is either a density callable or a :class:`ConformalMetricField`
    (then ``chart`` selects the chart, default the first).
    """
    h, contains = _resolve(m, chart)
    if contains is not None:
        ring = p + 2 * step * np.exp(0.5j * np.pi * np.arange(4))
        if not (contains(p) and all(contains(q) for q in ring)):
            raise DomainError("finite-difference stencil leaves the chart")
    loglap = flat_laplacian(lambda z: np.log(h(z)), p, step, richardson)
    return float(-loglap / (2 * h(np.array([p]))[0]))


def conformal_curvature(h0, f: Callable, p, step: float = 1e-3, chart=None, richardson: bool = True) -> float:
    """Curvature of ``exp(2f) h0`` as ``exp(-2f) (K(h0) + Lap_{h0} f)``, ``Lap_{h0} = -h0^{-1} Lap_flat``."""
    h, _ = _resolve(h0, chart)
    k0 = gaussian_curvature(h0, p, step, chart, richardson)
    hp = h(np.array([p]))[0]
    fp = f(np.array([p]))[0]
    lap_f = -flat_laplacian(f, p, step, richardson) / hp
    return float(np.exp(-2 * fp) * (k0 + lap_f))


def curvature_residual(h0, f: Callable, p, step: float = 1e-3, chart=None) -> float:
    """``N(f) = Lap_{h0} f + exp(2f) + K(h0)``; zero exactly when the curvature of ``exp(2f) h0`` is -1."""
    h, _ = _resolve(h0, chart)
    k0 = gaussian_curvature(h0, p, step, chart)
    hp = h(np.array([p]))[0]
    fp = f(np.array([p]))[0]
    return float(-flat_laplacian(f, p, step) / hp + np.exp(2 * fp) + k0)


@dataclass(frozen=True)
class ModelLaplacian:
    """Coefficients of a model Laplacian at one point.

    Face I (cusp side, variable ``x = s_w``):
    ``prefactor * (c_dd (x d_x)^2 + c_d x d_x + c_thth d_theta^2)``.
    Face II (neck, variable ``x = rho_z``): same with ``d_x^2`` and ``d_x``.
    """

    face: str
    x: float
    s: float
    prefactor: float
    c_dd: float
    c_d: float
    c_thth: float

    def zero_mode_operator(self):
        """Zero Fourier mode of ``Lap + 2`` as an operator in powers of ``x d_x``.

        On face II it is conjugated by the neck defining function ``1/x``.
        """
        from .expansions import RegularSingularOp

        if self.face == "I":
            # restricted to the face s = 0, where the prefactor is 1
            return RegularSingularOp([lambda x: 2.0, lambda x: -1.0, lambda x: -1.0])
        # prefactor / x^2 = sinc(x/(1+x))^2, regular at x = 0
        q = lambda x: np.sinc(x / (1 + x)) ** 2
        a2 = lambda x: -q(x) * (1 + x) ** 2
        a1 = lambda x: q(x) * (1 + x) ** 2 - 2 * q(x) * x * (1 + x)
        return RegularSingularOp([lambda x: 2.0, a1, a2]).conjugate(-1)


def model_laplacian_coeffs(face: str, x: float, s: float = 0.0) -> ModelLaplacian:
    """Coefficient record of the face-I or face-II model Laplacian at ``x``."""
    if face == "I":
        pre = float(np.sinc(s / x) ** 2) if s > 0 else 1.0
        return ModelLaplacian("I", x, s, pre, -pre, -pre, -pre / x**2)
    if face == "II":
        if s <= 0:
            raise InputError("face II needs s > 0")
        a = np.pi / (1 + x)
        pre = float(np.sin(a) ** 2 / a**2)
        return ModelLaplacian(
            "II", x, s, pre, -pre * (1 + x) ** 2, -pre * 2 * (1 + x), -pre / (s**2 * (1 + x) ** 2)
        )
    raise InputError(f"unknown face {face!r}")
