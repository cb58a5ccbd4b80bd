"""Complete hyperbolic metric of the sphere minus {0, 1, inf}.

The metric is pulled back from the upper half plane by the inverse of the
modular lambda function. ``nome(w) = exp(i pi tau(w))`` is the exact cusp
coordinate at ``w = 0``: in it the metric is ``|dq|^2 / (|q| log(1/|q|))^2``.
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError, InputError, PrecisionError

GUARD = 1e-8
_TOL = 1e-15


def _agm_complex(a, b):
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    for _ in range(64):
        a, b = 0.5 * (a + b), np.sqrt(a * b)
        if np.all(np.abs(a - b) <= _TOL * np.abs(a)):
            break
    return 0.5 * (a + b)


def agm(a, b):
    """Arithmetic-geometric mean of two positive reals."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(~(a > 0)) or np.any(~(b > 0)):
        raise InputError("agm needs positive arguments")
    out = _agm_complex(a, b).real
    return float(out) if out.ndim == 0 else out


def elliptic_k(k):
    """Complete elliptic integral of the first kind, modulus ``k``."""
    k = np.asarray(k, dtype=float)
    if np.any(k < 0) or np.any(k >= 1):
        raise DomainError("elliptic_k needs 0 <= k < 1")
    out = np.pi / (2 * agm(1.0, np.sqrt(1 - k * k)))
    return float(out) if np.ndim(out) == 0 else out


def _theta_q(q):
    """Return ``(S2, theta3, theta4)`` with ``theta2 = 2 q^(1/4) S2``."""
    q = np.asarray(q, dtype=complex)
    aq = float(np.max(np.abs(q))) if q.size else 0.0
    if aq >= 1:
        raise DomainError("nome must satisfy |q| < 1")
    nmax = 2
    while aq ** (nmax * nmax) > 1e-17 and nmax < 400:
        nmax += 1
    s2 = np.zeros_like(q)
    s3 = np.zeros_like(q)
    s4 = np.zeros_like(q)
    for n in range(nmax, 0, -1):
        s2 = s2 + q ** (n * (n + 1))
        qn = q ** (n * n)
        s3 = s3 + qn
        s4 = s4 + (-1) ** n * qn
    return 1 + s2, 1 + 2 * s3, 1 + 2 * s4


def theta_functions(tau):
    """Jacobi thetas ``(theta2, theta3, theta4)`` at ``tau`` with nome ``exp(i pi tau)``."""
    tau = np.asarray(tau, dtype=complex)
    if np.any(tau.imag <= 0):
        raise DomainError("theta functions need Im tau > 0")
    q = np.exp(1j * np.pi * tau)
    s2, t3, t4 = _theta_q(q)
    t2 = 2 * np.exp(0.25j * np.pi * tau) * s2
    if tau.ndim == 0:
        return complex(t2), complex(t3), complex(t4)
    return t2, t3, t4


def lambda_of_nome(q):
    """``lambda = theta2^4 / theta3^4`` written in the nome (no fractional powers)."""
    q = np.asarray(q, dtype=complex)
    s2, t3, _ = _theta_q(q)
    out = 16 * q * s2**4 / t3**4
    return complex(out) if out.ndim == 0 else out


def lambda_of_tau(tau):
    tau = np.asarray(tau, dtype=complex)
    if np.any(tau.imag <= 0):
        raise DomainError("need Im tau > 0")
    return lambda_of_nome(np.exp(1j * np.pi * tau))


def lambda_prime(tau):
    """``d lambda / d tau = i pi theta3^4 lambda (1 - lambda)``."""
    _, t3, _ = theta_functions(tau)
    lam = lambda_of_tau(tau)
    return 1j * np.pi * t3**4 * lam * (1 - lam)


def _nome_small(w):
    # q = w/16 + w^2/32 + 21 w^3/1024 + 31 w^4/2048
    return w / 16 * (1 + w / 2 + 21 * w**2 / 64 + 31 * w**3 / 128)


def nome(w):
    """Principal nome ``q(w) = exp(i pi tau(w))``, analytic on ``C \\ [1, inf)``.

    Points with ``Re w < 0`` use ``q(w) = -q(w/(w-1))``; points on the cut
    take the value from above.
    """
    w = np.asarray(w, dtype=complex)
    neg = w.real < 0
    v = np.where(neg, w / (w - 1), w)
    on_cut = (np.abs(v.imag) == 0) & (v.real >= 1)
    v = np.where(on_cut, v + 1e-300j, v)
    small = np.abs(v) < GUARD
    vs = np.where(small, 0.5, v)
    with np.errstate(all="ignore"):
        ratio = _agm_complex(1.0, np.sqrt(1 - vs)) / _agm_complex(1.0, np.sqrt(vs))
        q = np.exp(-np.pi * ratio)
    q = np.where(small, _nome_small(v), q)
    q = np.where(neg, -q, q)
    return complex(q) if q.ndim == 0 else q


def nome_derivative(w):
    """``dq/dw = q / (theta3(q)^4 w (1 - w))``."""
    w = np.asarray(w, dtype=complex)
    q = nome(w)
    small = np.abs(w) < GUARD
    _, t3, _ = _theta_q(np.where(small, 0, q))
    ws = np.where(small, 0.5, w)
    d = np.where(small, (1 + w + 63 * w**2 / 64) / 16, q / (t3**4 * ws * (1 - ws)))
    return complex(d) if d.ndim == 0 else d


def tau_of_lambda(w):
    """A point ``tau`` of the upper half plane with ``lambda(tau) = w`` (|Re tau| <= 1)."""
    wa = np.asarray(w, dtype=complex)
    if np.any(~np.isfinite(wa)) or np.any(wa == 0) or np.any(wa == 1):
        raise PrecisionError("tau_of_lambda is singular at the punctures 0, 1, inf")
    q = nome(wa)
    tau = np.log(q) / (1j * np.pi)
    return complex(tau) if tau.ndim == 0 else tau


_ORBIT = (
    (lambda w: w, lambda w: np.ones(np.shape(w))),
    (lambda w: 1 - w, lambda w: np.ones(np.shape(w))),
    (lambda w: 1 / w, lambda w: 1 / np.abs(w) ** 2),
    (lambda w: 1 / (1 - w), lambda w: 1 / np.abs(1 - w) ** 2),
    (lambda w: w / (w - 1), lambda w: 1 / np.abs(w - 1) ** 2),
    (lambda w: (w - 1) / w, lambda w: 1 / np.abs(w) ** 2),
)


def _reduce(w):
    """Image of ``w`` of least modulus under the anharmonic group, and ``|g'(w)|``."""
    imgs = np.stack([g(w) for g, _ in _ORBIT])
    k = np.argmin(np.abs(imgs), axis=0)
    red = np.take_along_axis(imgs, k[None], 0)[0]
    jac = np.stack([d(w) for _, d in _ORBIT])
    return red, np.take_along_axis(jac, k[None], 0)[0]


def tps_density(w):
    """Conformal length factor ``rho`` of the complete hyperbolic metric ``rho^2 |dw|^2``.

    Equals ``1 / (Im tau(w) |lambda'(tau(w))|)``; evaluated after reduction to
    the orbit point nearest 0, so ``|q| <= exp(-pi sqrt(3)/2)`` in the series.
    """
    w = np.asarray(w, dtype=complex)
    if np.any(w == 0) or np.any(w == 1) or np.any(~np.isfinite(w)):
        raise DomainError("density undefined at a puncture")
    red, jac = _reduce(w)
    q = nome(red)
    dq = nome_derivative(red)
    aq = np.abs(q)
    rho = np.abs(dq) / (aq * np.log(1 / aq)) * jac
    return float(rho) if rho.ndim == 0 else rho


def tps_area_density(w):
    """Area density ``rho^2``: the metric ``tps_area_density(w) |dw|^2`` has curvature -1."""
    return tps_density(w) ** 2
