"""Log-power series, regular singular analysis and expansion fitting."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate

from .errors import FitError, InputError


class LogPowerSeries:
    """Finite sum ``sum c[l, j] s**l (log s)**j`` truncated at order ``L``.

    ``j <= l`` is enforced unless ``relaxed`` is set (intermediate fits may
    carry one extra log power).
    """

    def __init__(self, terms: dict, order: int, relaxed: bool = False):
        self.order = order
        self.relaxed = relaxed
        clean = {}
        for (l, j), c in terms.items():
            if j < 0 or l < 0:
                raise InputError("exponents must be nonnegative")
            if j > l and not relaxed:
                raise InputError(f"log power {j} exceeds order {l}")
            if l <= order and c != 0:
                clean[(l, j)] = clean.get((l, j), 0.0) + float(c)
        self.terms = {k: v for k, v in sorted(clean.items()) if v != 0}

    @classmethod
    def one(cls, order):
        return cls({(0, 0): 1.0}, order)

    def coefficient(self, l, j=0):
        return self.terms.get((l, j), 0.0)

    def truncate(self, order):
        return LogPowerSeries(self.terms, min(order, self.order), self.relaxed)

    def __add__(self, other):
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0.0) + v
        return LogPowerSeries(out, min(self.order, other.order), self.relaxed or other.relaxed)

    def __mul__(self, other):
        order = min(self.order, other.order)
        out: dict = {}
        for (l1, j1), a in self.terms.items():
            for (l2, j2), b in other.terms.items():
                k = (l1 + l2, j1 + j2)
                out[k] = out.get(k, 0.0) + a * b
        return LogPowerSeries(out, order, self.relaxed or other.relaxed)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        ls = np.log(s)
        total = np.zeros_like(s)
        for (l, j), c in self.terms.items():
            total = total + c * s**l * ls**j
        return total

    def __repr__(self):
        body = " + ".join(f"{c:.6g} s^{l} log^{j}" for (l, j), c in self.terms.items()) or "0"
        return f"LogPowerSeries({body}; L={self.order})"


def series_ring_ops(a: LogPowerSeries, b: LogPowerSeries, op: str = "add", order: int | None = None):
    """``add`` or ``mul`` two series, then truncate at ``order`` (default: the common order)."""
    if op == "add":
        out = a + b
    elif op == "mul":
        out = a * b
    else:
        raise InputError(f"unknown ring operation {op!r}")
    return out if order is None else out.truncate(order)


@dataclass(frozen=True)
class RegularSingularOp:
    """``sum_k a_k(x) (x d_x)^k`` with coefficients regular at ``x = 0``.

    ``shift = m`` represents the conjugate ``x^{-m} P x^{m}``.
    """

    coeffs: Sequence[Callable]
    shift: float = 0.0

    def conjugate(self, m):
        return RegularSingularOp(self.coeffs, self.shift + m)

    def indicial_polynomial(self) -> Polynomial:
        a = []
        for c in self.coeffs:
            try:
                with np.errstate(all="ignore"):
                    v = c(np.float64(0.0))
            except ZeroDivisionError:
                v = np.inf
            if not np.isfinite(v):
                raise InputError("coefficient singular at x = 0: not regular singular")
            a.append(float(v))
        p = Polynomial(a)
        return p(Polynomial([self.shift, 1.0])) if self.shift else p

    def indicial_roots(self):
        return indicial_roots(self)


def indicial_roots(op: RegularSingularOp) -> list:
    """Roots of the indicial polynomial, repeated by multiplicity."""
    if not isinstance(op, RegularSingularOp):
        raise InputError("expected a RegularSingularOp")
    c = op.indicial_polynomial().coef
    c = np.trim_zeros(c, "b")
    if len(c) == 3:
        a0, a1, a2 = c
        d = a1 * a1 - 4 * a2 * a0
        if d >= 0:
            sq = np.sqrt(d)
            return sorted([(-a1 - sq) / (2 * a2), (-a1 + sq) / (2 * a2)])
    if len(c) == 2:
        return [-c[0] / c[1]]
    roots = np.roots(c[::-1])
    return sorted(roots.real if np.allclose(roots.imag, 0) else roots, key=lambda z: (np.real(z), np.imag(z)))


# --- neck two-point problem -------------------------------------------------
# (Lap + 2) E = r on the neck interval u in (0, 1), zero Fourier mode:
#     -(sin^2(pi u) / pi^2) E'' + 2 E = r.
# Conjugating by w = sin(pi u)/pi (the neck defining function) gives V = w E with
#     -V'' + (2 cos(pi u) / w) V' + pi^2 V = r / w,
# whose indicial roots are 0 and 3 at both ends.


def _w(u):
    return np.sin(np.pi * u) / np.pi


def _psi(u):
    """Homogeneous V with V(0) = 0, V(1) = 1: ``(sin x - x cos x)/pi`` at ``x = pi u``."""
    x = np.pi * np.asarray(u, dtype=float)
    direct = np.sin(x) - x * np.cos(x)
    # sin x - x cos x = sum_k (-1)^(k+1) 2k x^(2k+1)/(2k+1)!, stable for small x
    term = x**3 / 3.0
    series = term.copy()
    for k in range(2, 14):
        term = -term * x**2 * k / ((k - 1) * (2 * k) * (2 * k + 1))
        series = series + term
    return np.where(np.abs(x) < 1, series, direct) / np.pi


def _phi(u):
    return _psi(1 - np.asarray(u, dtype=float))


@dataclass
class NeckSolution:
    v_minus: float
    v_plus: float
    forcing: Callable
    u: np.ndarray
    v: np.ndarray
    log_coefficient: float
    cubic_coefficient: float = 0.0
    _particular: Callable = field(repr=False, default=None)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = self.v_minus * _phi(u) + self.v_plus * _psi(u)
        if self._particular is not None:
            out = out + np.vectorize(self._particular)(u)
        return out

    def eisenstein_profile(self, u):
        """The unconjugated solution ``E = V / w``."""
        return self(u) / _w(np.asarray(u, dtype=float))

    def residual(self, u, h=1e-3):
        u = np.asarray(u, dtype=float)
        v0, vp, vm = self(u), self(u + h), self(u - h)
        d2 = (vp - 2 * v0 + vm) / h**2
        d1 = (vp - vm) / (2 * h)
        lhs = -d2 + 2 * np.cos(np.pi * u) / _w(u) * d1 + np.pi**2 * v0
        return lhs - self.forcing(u) / _w(u)


def _forcing_callable(forcing):
    if forcing is None:
        return lambda u: 0.0 * np.asarray(u, dtype=float)
    if callable(forcing):
        return forcing
    parts = list(forcing)

    def r(u):
        lw = np.log(_w(u))
        return sum(rj(u) * lw**j for j, rj in enumerate(parts))

    return r


def neck_dirichlet(v_minus: float, v_plus: float, forcing=None, n: int = 201) -> NeckSolution:
    """Solve the reduced neck problem ``-V'' + (2cos(pi u)/w) V' + pi^2 V = r/w``, ``V(0)=v_-``, ``V(1)=v_+``.

    ``forcing`` is a callable ``r(u)`` or a list ``[r_0, r_1, ...]`` meaning
    ``sum_j r_j(u) (log w)^j``. The conjugated unknown ``V`` is ``w`` times the
    zero mode ``E``. The particular part uses variation of parameters with
    the closed-form homogeneous pair. ``log_coefficient`` is the fitted
    coefficient of ``u^3 log u`` at the left end.
    """
    r = _forcing_callable(forcing)
    zero_forcing = forcing is None
    # Sturm-Liouville weight p = 1/sin^2(pi u): -(p V')' + pi^2 p V = p r / w, and p W = -1/pi^? (constant)
    p = lambda u: 1.0 / np.sin(np.pi * u) ** 2
    um = 0.37
    dphi = lambda u: (-np.pi * (1 - u) * np.pi * np.sin(np.pi * u)) / np.pi
    dpsi = lambda u: -dphi(1 - u)
    pw = p(um) * (_phi(um) * dpsi(um) - dphi(um) * _psi(um))

    particular = None
    if not zero_forcing:
        g = lambda x: p(x) * r(x) / _w(x)

        def particular(x):
            if x <= 0 or x >= 1:
                return 0.0
            left = integrate.quad(lambda y: _psi(y) * g(y), 0, x, limit=400, epsabs=0, epsrel=1e-12)[0]
            right = integrate.quad(lambda y: _phi(y) * g(y), x, 1, limit=400, epsabs=0, epsrel=1e-12)[0]
            return (_phi(x) * left + _psi(x) * right) / pw

    u = np.linspace(0.0, 1.0, n)
    sol = NeckSolution(float(v_minus), float(v_plus), r, u, np.zeros(n), 0.0, 0.0, particular)
    sol.v = sol(u)
    sol.cubic_coefficient, log_c = _end_coefficients(sol)
    # the homogeneous pair is analytic, so unforced problems carry no log term
    sol.log_coefficient = 0.0 if zero_forcing else log_c
    return sol


def _end_coefficients(sol, lo=1e-3, hi=0.1, m=60):
    """Least-squares coefficients of ``u^3`` and ``u^3 log u`` in ``sol`` near ``u = 0``."""
    x = np.geomspace(lo, hi, m)
    lx = np.log(x)
    A = np.stack([np.ones_like(x), x, x**2, x**3, x**3 * lx, x**4, x**4 * lx, x**5, x**5 * lx, x**6, x**7], axis=1)
    scale = np.linalg.norm(A, axis=0)
    c = np.linalg.lstsq(A / scale, sol(x), rcond=None)[0] / scale
    return float(c[3]), float(c[4])


def neck_homogeneous_exponents(x0=1e-3):
    """Fitted leading exponents of the two homogeneous neck solutions at ``u = 0``."""
    x = x0 * np.array([0.5, 1.0])
    reg = np.log(np.abs(_phi(x[1]) / _phi(x[0]))) / np.log(2.0)
    sec = np.log(np.abs(_psi(x[1]) / _psi(x[0]))) / np.log(2.0)
    return {"regular": float(reg), "second": float(sec)}


def _neck_fd_oracle(v_minus, v_plus, n=2000):
    """Second-order finite-difference solve of the unforced conjugated neck ODE."""
    u = np.linspace(0, 1, n + 1)
    h = u[1] - u[0]
    ui = u[1:-1]
    b = 2 * np.cos(np.pi * ui) / _w(ui)
    lo = -1 / h**2 - b / (2 * h)
    di = 2 / h**2 + np.pi**2
    up = -1 / h**2 + b / (2 * h)
    from scipy.linalg import solve_banded

    ab = np.zeros((3, n - 1))
    ab[0, 1:] = up[:-1]
    ab[1, :] = di
    ab[2, :-1] = lo[1:]
    rhs = np.zeros(n - 1)
    rhs[0] -= lo[0] * v_minus
    rhs[-1] -= up[-1] * v_plus
    v = solve_banded((1, 1), ab, rhs)
    return u, np.concatenate([[v_minus], v, [v_plus]])


# --- fitting ----------------------------------------------------------------


@dataclass(frozen=True)
class FitReport:
    condition: float
    residual_max: float
    residual_order: float
    n_samples: int
    basis: tuple


def _basis(L, J, l_min, relaxed):
    out = []
    for l in range(l_min, L + 1):
        jmax = l if not relaxed else l + 1
        if J is not None:
            jmax = min(jmax, J)
        out.extend((l, j) for j in range(jmax + 1))
    return out


def fit_log_series(s, F, L: int, J: int | None = None, l_min: int = 0, relaxed: bool = False, max_cond: float = 1e12):
    """Least-squares fit of ``F(s)`` by ``s^l (log s)^j``, ``l_min <= l <= L``, ``j <= min(l, J)``.

    Returns ``(LogPowerSeries, FitReport)``. The residual order is the
    log-log slope of ``|residual|`` against ``s`` (NaN at roundoff level).
    """
    s = np.asarray(s, dtype=float)
    F = np.asarray(F, dtype=float)
    basis = _basis(L, J, l_min, relaxed)
    if len(s) < len(basis) + 3:
        raise FitError(f"need at least {len(basis) + 3} samples, got {len(s)}")
    ls = np.log(s)
    A = np.stack([s**l * ls**j for l, j in basis], axis=1)
    scale = np.linalg.norm(A, axis=0)
    if np.any(scale == 0):
        raise FitError("degenerate basis column")
    As = A / scale
    cond = float(np.linalg.cond(As))
    if not np.isfinite(cond) or cond > max_cond:
        raise FitError(f"design matrix condition number {cond:.3g} exceeds {max_cond:.0e}")
    c = np.linalg.lstsq(As, F, rcond=None)[0] / scale
    resid = F - A @ c
    rmax = float(np.max(np.abs(resid)))
    floor = 1e-13 * max(1.0, float(np.max(np.abs(F))))
    big = np.abs(resid) > floor
    order = float("nan")
    if big.sum() >= 3:
        order = float(np.polyfit(np.log(s[big]), np.log(np.abs(resid[big])), 1)[0])
    series = LogPowerSeries(dict(zip(basis, c)), L, relaxed=relaxed)
    return series, FitReport(cond, rmax, order, len(s), tuple(basis))


def leading_exponent(s, F):
    """Log-log slope of ``|F|`` against ``s``."""
    s = np.asarray(s, dtype=float)
    return float(np.polyfit(np.log(s), np.log(np.abs(np.asarray(F, dtype=float))), 1)[0])


# --- b-fibration push-forward model -------------------------------------------


@dataclass(frozen=True)
class PushforwardResult:
    a: float
    b: float
    exact: Callable
    coefficients: dict
    log_coefficient: float
    quadrature_error: float


def b_pushforward_demo(a: float, b: float, n: int = 24) -> PushforwardResult:
    """Push forward ``rho^a (r/rho)^b`` along ``rho in (r, 1)``; a log appears only when ``a == b``.

    ``F(r) = (r^b - r^a)/(a - b)`` or ``r^a log(1/r)``. The fit uses the basis
    ``r^a, r^b, r^min(a,b) log(1/r)``; ``log_coefficient`` is the last coefficient.
    """
    if a <= 0 or b <= 0:
        raise InputError("a and b must be positive")
    if a == b:
        exact = lambda r: np.asarray(r, dtype=float) ** a * np.log(1 / np.asarray(r, dtype=float))
    else:
        exact = lambda r: (np.asarray(r, dtype=float) ** b - np.asarray(r, dtype=float) ** a) / (a - b)
    r = 0.5 * 2.0 ** -np.arange(n)
    # quadrature cross-check of the defining integral, in y = log(rho)
    qerr = 0.0
    for rr in r[:: max(1, n // 6)]:
        val = integrate.quad(lambda y: np.exp(a * y) * (rr * np.exp(-y)) ** b, np.log(rr), 0.0, epsabs=0, epsrel=1e-13)[0]
        qerr = max(qerr, abs(val - exact(rr)) / max(abs(exact(rr)), 1e-300))
    exps = [a] if a == b else sorted({a, b})
    cols = [r**e for e in exps] + [r ** min(a, b) * np.log(1 / r)]
    A = np.stack(cols, axis=1)
    scale = np.linalg.norm(A, axis=0)
    c = np.linalg.lstsq(A / scale, exact(r), rcond=None)[0] / scale
    coeffs = {(e, 0): float(ci) for e, ci in zip(exps, c[:-1])}
    coeffs[(min(a, b), 1)] = float(c[-1])
    return PushforwardResult(a, b, exact, coeffs, float(c[-1]), float(qerr))
