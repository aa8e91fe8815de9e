"""Polynomial nonlinearities and checks of the standing growth assumptions."""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .linalg import inverse_power_iteration
from .validation import check_int, check_mu


def _trim(coeffs):
    c = np.asarray(coeffs, dtype=float).ravel()
    if c.size == 0:
        return np.zeros(1)
    nz = np.flatnonzero(c)
    return c[: nz[-1] + 1] if nz.size else np.zeros(1)


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """``f(s) = sum_k coeffs[k] s**k`` with antiderivative ``F(0) = 0``.

    Polynomials are analytic, so the analyticity assumption holds by
    construction; only growth and coercivity need checking.
    """

    coeffs: np.ndarray
    F_coeffs: np.ndarray = field(init=False)
    fprime_coeffs: np.ndarray = field(init=False)

    def __post_init__(self):
        c = _trim(self.coeffs)
        if not np.all(np.isfinite(c)):
            raise ValueError("polynomial coefficients must be finite")
        object.__setattr__(self, "coeffs", c)
        p = Polynomial(c)
        object.__setattr__(self, "F_coeffs", p.integ(lbnd=0.0).coef)
        object.__setattr__(self, "fprime_coeffs", _trim(p.deriv().coef))

    @classmethod
    def from_coeffs(cls, coeffs):
        return cls(np.asarray(coeffs, dtype=float))

    @property
    def degree(self):
        c = self.coeffs
        return 0 if not np.any(c) else len(c) - 1

    @property
    def growth_p(self):
        """Exponent ``p`` in ``|f'(s)| <= c (1 + |s|^p)``."""
        return max(self.degree - 1, 0)

    @property
    def is_zero(self):
        return not np.any(self.coeffs)

    def f(self, s):
        return np.polynomial.polynomial.polyval(s, self.coeffs)

    def F(self, s):
        return np.polynomial.polynomial.polyval(s, self.F_coeffs)

    def fprime(self, s):
        return np.polynomial.polynomial.polyval(s, self.fprime_coeffs)

    def real_roots(self):
        """Real roots of ``f``, sorted; empty for the zero polynomial."""
        if self.is_zero:
            return np.array([])
        if self.degree == 0:
            return np.array([])
        r = Polynomial(self.coeffs).roots()
        real = r[np.abs(r.imag) <= 1e-10 * (1 + np.abs(r.real))].real
        return np.sort(real)

    def __repr__(self):
        return f"Nonlinearity(coeffs={self.coeffs.tolist()})"


@dataclass(frozen=True, eq=False)
class ModelSpec:
    mu: int
    nonlinearity: Nonlinearity
    mesh_dim: int = 1
    lam: float = None

    def __post_init__(self):
        object.__setattr__(self, "mu", check_mu(self.mu))
        object.__setattr__(self, "mesh_dim", check_int(self.mesh_dim, "mesh_dim", minimum=1))
        if not isinstance(self.nonlinearity, Nonlinearity):
            object.__setattr__(self, "nonlinearity", Nonlinearity.from_coeffs(self.nonlinearity))

    @property
    def f(self):
        return self.nonlinearity.f

    @property
    def F(self):
        return self.nonlinearity.F

    @property
    def fprime(self):
        return self.nonlinearity.fprime

    def with_lambda(self, lam):
        return ModelSpec(self.mu, self.nonlinearity, self.mesh_dim, float(lam))


def compute_lambda(ops, tol=1e-10, max_iter=5000):
    """Best constant in ``|grad u|^2 + |u|^2_{L2(boundary)} >= lam |u|^2``.

    Smallest eigenvalue of the pencil ``(K + M_bnd) v = lam M_int v`` by
    inverse power iteration with zero shift.  Carries the O(h^2) bias of
    the discrete pencil; no extrapolation is applied.
    """
    lam, _, _ = inverse_power_iteration(
        ops.h1_matrix, ops.w_int, shift=0.0, tol=tol, max_iter=max_iter
    )
    return lam


@dataclass(frozen=True)
class F2Report:
    passed: bool
    p: int
    alpha: float
    n: int

    def to_dict(self):
        return {"passed": self.passed, "p": self.p, "alpha": self.alpha, "n": self.n}


@dataclass(frozen=True)
class F3Report:
    passed: bool
    liminf: float
    threshold: float
    mu: int
    lam: float = None

    def to_dict(self):
        return {
            "passed": self.passed,
            "liminf": self.liminf,
            "threshold": self.threshold,
            "mu": self.mu,
            "lambda": self.lam,
        }


def check_F2(nl, n):
    """Subcritical growth: ``p < 4/(n-2)`` for ``n >= 3``; always true for ``n <= 2``."""
    n = check_int(n, "n", minimum=1)
    alpha = math.inf if n <= 2 else 4.0 / (n - 2)
    return F2Report(passed=nl.growth_p < alpha, p=nl.growth_p, alpha=alpha, n=n)


def liminf_ratio(nl):
    """``liminf_{|s| -> inf} f(s)/s`` by leading-term analysis."""
    deg = nl.degree
    if deg == 0:
        return 0.0
    if deg == 1:
        return float(nl.coeffs[1])
    lead = nl.coeffs[-1]
    # f(s)/s ~ lead * s**(deg-1); sign at s -> -inf flips when deg-1 is odd
    plus = lead > 0
    minus = lead > 0 if (deg - 1) % 2 == 0 else lead < 0
    return math.inf if (plus and minus) else -math.inf


def check_F3(nl, mu, lam=None):
    """Coercivity at infinity: ``liminf f(s)/s > -lam/4`` (mu=1) or ``> 0`` (mu=0).

    A failure only warns; simulations of non-coercive models are allowed.
    """
    mu = check_mu(mu)
    if mu == 1 and lam is None:
        raise ValueError("check_F3 with mu=1 requires the Sobolev constant lam")
    L = liminf_ratio(nl)
    threshold = -lam / 4.0 if mu == 1 else 0.0
    report = F3Report(passed=bool(L > threshold), liminf=L, threshold=threshold, mu=mu, lam=lam)
    if not report.passed:
        warnings.warn(
            f"coercivity condition fails (liminf f(s)/s = {L} <= {threshold}); "
            "global existence is not guaranteed",
            RuntimeWarning,
            stacklevel=2,
        )
    return report
