"""Scalar fields on R^4 and flat / conformally flat differential operators.

Sign convention: the Laplacian is div grad (trace of the Hessian), with
negative spectrum.  For a conformal metric g = mu^2 dx^2 in dimension 4,

    Delta_g f = mu^-2 (Delta f + 2 <grad ln mu, grad f>).

Evaluators are plain callables of a coordinate vector; everything here is
dimension-agnostic except the curved-metric identity, which is hard-coded
for dimension 4 (the only dimension where curved evaluation is needed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

DEFAULT_FD_STEP = 1e-4
SINGULAR_EXCLUSION = 1e-9


class DomainError(ValueError):
    """Evaluation requested at (or too close to) a singular point."""


class ModeError(ValueError):
    """Analytic evaluation requested from a field without analytic data."""


def as_point(x, dim: int | None = None) -> np.ndarray:
    p = np.asarray(x, dtype=float)
    if p.ndim != 1 or (dim is not None and p.size != dim):
        raise ValueError(f"expected a coordinate vector{'' if dim is None else f' of length {dim}'}, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("coordinates must be finite")
    return p


@dataclass(frozen=True)
class SingularLocus:
    """A point (radius=0) or a centered sphere excluded from a field's domain."""

    center: tuple
    radius: float = 0.0

    def distance(self, x: np.ndarray) -> float:
        d = float(np.linalg.norm(x - np.asarray(self.center)))
        return abs(d - self.radius)


@dataclass(frozen=True)
class ScalarField4:
    """Scalar function with optional analytic gradient / Hessian evaluators.

    `value` maps a coordinate vector to a float; `grad` to a vector of the
    same length; `hess` to a symmetric matrix.  Fields are immutable and the
    evaluators are pure, so instances are safe to share across workers.
    """

    value: Callable[[np.ndarray], float]
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hess: Optional[Callable[[np.ndarray], np.ndarray]] = None
    singular_set: tuple = ()
    name: str = ""

    def __call__(self, x) -> float:
        x = as_point(x)
        self.check_domain(x)
        return float(self.value(x))

    @property
    def has_analytic(self) -> bool:
        return self.grad is not None and self.hess is not None

    def distance_to_singular(self, x: np.ndarray) -> float:
        if not self.singular_set:
            return math.inf
        return min(s.distance(x) for s in self.singular_set)

    def check_domain(self, x: np.ndarray, margin: float = SINGULAR_EXCLUSION) -> None:
        if self.distance_to_singular(x) < margin:
            raise DomainError(f"field {self.name or '<anonymous>'} is singular within {margin} of {x}")


def fd_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Central-difference gradient, O(h^2)."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def fd_laplacian(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = DEFAULT_FD_STEP) -> float:
    """Central-difference Laplacian (trace of the Hessian), O(h^2)."""
    x = np.asarray(x, dtype=float)
    fc = f(x)
    acc = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        acc += f(x + e) - 2.0 * fc + f(x - e)
    return float(acc / h**2)


def fd_hessian(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = DEFAULT_FD_STEP) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.empty((n, n))
    fc = f(x)
    for i in range(n):
        ei = np.zeros_like(x)
        ei[i] = h
        H[i, i] = (f(x + ei) - 2.0 * fc + f(x - ei)) / h**2
        for j in range(i + 1, n):
            ej = np.zeros_like(x)
            ej[j] = h
            H[i, j] = H[j, i] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4.0 * h**2)
    return H


def _require_analytic(f: ScalarField4, what: str) -> None:
    if (what in ("grad", "both") and f.grad is None) or (what in ("hess", "both") and f.hess is None):
        raise ModeError(f"field {f.name or '<anonymous>'} has no analytic {what} evaluator")


def gradient(f: ScalarField4, x, mode: str = "analytic", h: float = DEFAULT_FD_STEP) -> np.ndarray:
    x = as_point(x)
    f.check_domain(x)
    if mode == "analytic":
        _require_analytic(f, "grad")
        return np.asarray(f.grad(x), dtype=float)
    if mode == "fd":
        return fd_gradient(f.value, x, h)
    raise ModeError(f"unknown gradient mode {mode!r}")


def laplacian_flat(f: ScalarField4, x, mode: str = "analytic", h: float = DEFAULT_FD_STEP) -> float:
    x = as_point(x)
    f.check_domain(x)
    if mode == "analytic":
        _require_analytic(f, "hess")
        return float(np.trace(f.hess(x)))
    if mode == "fd":
        return fd_laplacian(f.value, x, h)
    raise ModeError(f"unknown Laplacian mode {mode!r}")


@dataclass(frozen=True)
class EinsteinDatum:
    """Dimension and Einstein constant of the domain: Ricci = a g."""

    n: int
    a: float

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("Einstein domain dimension must be >= 3")

    @property
    def scalar_curvature(self) -> float:
        return self.n * self.a


def spherical_mu() -> ScalarField4:
    """Conformal factor of the round chart metric, mu = 2/(1+|x|^2)."""

    def value(x):
        return 2.0 / (1.0 + float(x @ x))

    def grad(x):
        return -4.0 * x / (1.0 + float(x @ x)) ** 2

    def hess(x):
        r2 = float(x @ x)
        d = 1.0 + r2
        return -4.0 * np.eye(x.size) / d**2 + 16.0 * np.outer(x, x) / d**3

    return ScalarField4(value, grad, hess, name="spherical_mu")


@dataclass(frozen=True)
class ConformalMetricDescriptor:
    """g = mu^2 dx^2; kind 'flat' means mu = 1, 'spherical' means mu = 2/(1+|x|^2)."""

    kind: str = "flat"
    mu: Optional[ScalarField4] = None

    def __post_init__(self):
        if self.kind not in ("flat", "spherical", "conformal"):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.kind == "conformal" and self.mu is None:
            raise ValueError("conformal metric needs an explicit factor mu")

    @classmethod
    def flat(cls) -> "ConformalMetricDescriptor":
        return cls("flat")

    @classmethod
    def spherical(cls) -> "ConformalMetricDescriptor":
        return cls("spherical", spherical_mu())

    @classmethod
    def conformal(cls, mu: ScalarField4) -> "ConformalMetricDescriptor":
        return cls("conformal", mu)

    def factor(self) -> ScalarField4:
        if self.kind == "flat":
            raise ValueError("flat metric has no conformal factor field")
        return self.mu if self.kind == "conformal" else spherical_mu()


FLAT = ConformalMetricDescriptor.flat()


def laplace_beltrami(f: ScalarField4, g: ConformalMetricDescriptor, x, h: float = DEFAULT_FD_STEP) -> float:
    """Laplace-Beltrami of f for g = mu^2 dx^2 in dimension 4.

    Uses analytic derivatives when both f and mu carry them, central
    differences otherwise.
    """
    x = as_point(x)
    if g.kind == "flat":
        mode = "analytic" if f.hess is not None else "fd"
        return laplacian_flat(f, x, mode=mode, h=h)
    if x.size != 4:
        raise ValueError("curved-metric Laplacian is implemented for dimension 4 only")
    mu = g.factor()
    f.check_domain(x)
    mu.check_domain(x)
    if f.has_analytic and mu.has_analytic:
        lap = float(np.trace(f.hess(x)))
        gf = np.asarray(f.grad(x), dtype=float)
        gmu = np.asarray(mu.grad(x), dtype=float)
    else:
        lap = fd_laplacian(f.value, x, h)
        gf = fd_gradient(f.value, x, h)
        gmu = fd_gradient(mu.value, x, h)
    m = float(mu.value(x))
    return (lap + 2.0 * float(gmu @ gf) / m) / m**2


@dataclass(frozen=True)
class FdDiscrepancy:
    """Analytic-vs-finite-difference discrepancies at one point."""

    gradient_error: float
    laplacian_error: float
    step: float

    @property
    def max_error(self) -> float:
        return max(self.gradient_error, self.laplacian_error)


def fd_consistency(f: ScalarField4, x, h: float = DEFAULT_FD_STEP) -> FdDiscrepancy:
    """Max discrepancy between analytic and fd gradient / Laplacian at x."""
    x = as_point(x)
    f.check_domain(x)
    _require_analytic(f, "both")
    ge = float(np.max(np.abs(gradient(f, x, "analytic") - gradient(f, x, "fd", h))))
    le = abs(laplacian_flat(f, x, "analytic") - laplacian_flat(f, x, "fd", h))
    return FdDiscrepancy(ge, le, h)


# ---------------------------------------------------------------------------
# analytic field algebra: enough combinators to assemble every closed-form
# factor in the catalog with exact gradients and Hessians
# ---------------------------------------------------------------------------

def constant_field(c: float) -> ScalarField4:
    return ScalarField4(
        lambda x: c,
        lambda x: np.zeros_like(x),
        lambda x: np.zeros((x.size, x.size)),
        name=f"const({c})",
    )


def radius_sq_field(center=None) -> ScalarField4:
    """f(x) = |x - c|^2."""
    c = None if center is None else np.asarray(center, dtype=float)

    def sh(x):
        return x if c is None else x - c

    return ScalarField4(
        lambda x: float(sh(x) @ sh(x)),
        lambda x: 2.0 * sh(x),
        lambda x: 2.0 * np.eye(x.size),
        name="radius_sq",
    )


def coordinate_field(i: int) -> ScalarField4:
    def grad(x):
        g = np.zeros_like(x)
        g[i] = 1.0
        return g

    return ScalarField4(lambda x: float(x[i]), grad, lambda x: np.zeros((x.size, x.size)), name=f"x{i + 1}")


def field_sum(f: ScalarField4, g: ScalarField4, name: str = "") -> ScalarField4:
    return ScalarField4(
        lambda x: f.value(x) + g.value(x),
        (lambda x: np.asarray(f.grad(x)) + np.asarray(g.grad(x))) if f.grad and g.grad else None,
        (lambda x: np.asarray(f.hess(x)) + np.asarray(g.hess(x))) if f.hess and g.hess else None,
        singular_set=f.singular_set + g.singular_set,
        name=name or f"({f.name}+{g.name})",
    )


def field_affine(f: ScalarField4, scale: float = 1.0, shift: float = 0.0, name: str = "") -> ScalarField4:
    return ScalarField4(
        lambda x: scale * f.value(x) + shift,
        (lambda x: scale * np.asarray(f.grad(x))) if f.grad else None,
        (lambda x: scale * np.asarray(f.hess(x))) if f.hess else None,
        singular_set=f.singular_set,
        name=name or f"({scale}*{f.name}+{shift})",
    )


def field_product(f: ScalarField4, g: ScalarField4, name: str = "") -> ScalarField4:
    def value(x):
        return f.value(x) * g.value(x)

    grad = None
    hess = None
    if f.grad and g.grad:
        def grad(x):
            return f.value(x) * np.asarray(g.grad(x)) + g.value(x) * np.asarray(f.grad(x))
    if f.has_analytic and g.has_analytic:
        def hess(x):
            gf, gg = np.asarray(f.grad(x)), np.asarray(g.grad(x))
            return (
                f.value(x) * np.asarray(g.hess(x))
                + g.value(x) * np.asarray(f.hess(x))
                + np.outer(gf, gg)
                + np.outer(gg, gf)
            )
    return ScalarField4(value, grad, hess, singular_set=f.singular_set + g.singular_set,
                        name=name or f"({f.name}*{g.name})")


def field_power(f: ScalarField4, p: float, name: str = "") -> ScalarField4:
    """f^p for f > 0 on its domain (chain rule for gradient and Hessian)."""

    def value(x):
        return f.value(x) ** p

    grad = None
    hess = None
    if f.grad:
        def grad(x):
            return p * f.value(x) ** (p - 1.0) * np.asarray(f.grad(x))
    if f.has_analytic:
        def hess(x):
            v = f.value(x)
            gf = np.asarray(f.grad(x))
            return p * v ** (p - 1.0) * np.asarray(f.hess(x)) + p * (p - 1.0) * v ** (p - 2.0) * np.outer(gf, gf)
    return ScalarField4(value, grad, hess, singular_set=f.singular_set, name=name or f"{f.name}^{p}")


def field_log(f: ScalarField4, name: str = "") -> ScalarField4:
    """ln f for f > 0; gradient grad f / f, Hessian Hf/f - grad f grad f^T / f^2."""

    def value(x):
        return math.log(f.value(x))

    grad = None
    hess = None
    if f.grad:
        def grad(x):
            return np.asarray(f.grad(x)) / f.value(x)
    if f.has_analytic:
        def hess(x):
            v = f.value(x)
            gf = np.asarray(f.grad(x))
            return np.asarray(f.hess(x)) / v - np.outer(gf, gf) / v**2
    return ScalarField4(value, grad, hess, singular_set=f.singular_set, name=name or f"ln({f.name})")


def radial_power_field(p: float, center=None, coeff: float = 1.0, name: str = "") -> ScalarField4:
    """f(x) = coeff * |x - c|^p, singular at the center for p < 0."""
    c = np.zeros(4) if center is None else np.asarray(center, dtype=float)
    base = field_power(radius_sq_field(c), p / 2.0)
    out = field_affine(base, coeff, 0.0, name=name or f"{coeff}*|x-c|^{p}")
    singular = (SingularLocus(tuple(c)),) if p < 0 or p != int(p) else ()
    return ScalarField4(out.value, out.grad, out.hess, singular_set=singular, name=out.name)
