"""Pointwise residuals of the biharmonicity equations for conformal factors.

The central objects, for a conformal factor lam > 0 on an Einstein domain
(Ricci = a g, dimension n):

  * biharmonic_residual -- the full 3rd-order vector equation
        grad(Delta ln lam) - {2 Delta ln lam + (n-2)|grad ln lam|^2} grad ln lam
            + 2 a grad ln lam + ((6-n)/2) grad|grad ln lam|^2,
    which vanishes exactly at points where the conformal map is biharmonic.
  * einstein_form_residual -- its integrated gradient form
        grad(lam Delta lam + a lam^2 - ((n-4)/2)|grad lam|^2) - 4 (Delta lam) grad lam.
  * yamabe_residual -- the dimension-4 reduction Delta lam - a lam - A lam^3.

All operators act in the metric given by a ConformalMetricDescriptor; the
returned vectors are coordinate components in the chart, including the
mu^-2 index-raising factor of the curved gradient.

Third derivatives are never required analytically: when a field carries an
analytic Hessian, the scalar Delta ln lam is assembled exactly and its
gradient taken by central differences (step 1e-4); without analytic data
everything falls back to nested finite differences (step 1e-3, looser
tolerance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from .fields import (
    DEFAULT_FD_STEP,
    FLAT,
    ConformalMetricDescriptor,
    DomainError,
    EinsteinDatum,
    ScalarField4,
    as_point,
    fd_gradient,
    fd_laplacian,
    field_log,
)

ANALYTIC_THIRD_DERIV_STEP = 1e-4
FD_THIRD_DERIV_STEP = 1e-3
# residual tolerances matched to fd truncation error
TOL_ANALYTIC = 1e-6
TOL_BIHARMONIC = 1e-5
TOL_PURE_FD = 1e-4
GRID_EXCLUSION = 0.05

EQUATIONS = ("yamabe", "biharmonic", "einstein_form", "curvature_law", "isoparametric")


class IllConditionedError(ValueError):
    """Least-squares fit has no usable normal equation."""


class UnsupportedDimensionError(ValueError):
    """Operation stated only for certain dimensions."""


@dataclass(frozen=True)
class ConstantA:
    """Cubic coefficient fitted from Delta lam - a lam = A lam^3."""

    value: float
    fit_residual: float


@dataclass(frozen=True)
class ResidualReport:
    equation: str
    sup: float
    rms: float
    n_points: int
    n_failed: int
    params: dict
    grid: dict
    values: np.ndarray = dc_field(repr=False, default=None)

    def __post_init__(self):
        if self.equation not in EQUATIONS:
            raise ValueError(f"unknown equation {self.equation!r}")
        if self.sup + 1e-15 < self.rms:
            raise ValueError("sup norm cannot be below the RMS")
        if self.values is not None and len(self.values) != self.n_points:
            raise ValueError("per-point magnitudes must match the successful point count")


def _local_step(lam: ScalarField4, x: np.ndarray, h: float) -> float:
    """Scale the fd step by the distance to the singular set.

    Derivatives of the catalog factors blow up like powers of that
    distance, so truncation stays bounded only if h shrinks with it; the
    floor keeps roundoff noise from taking over."""
    d = lam.distance_to_singular(x)
    if not math.isfinite(d):
        return h
    return h * min(1.0, max(d, 0.01)) ** 1.5


def _chart_quantities(lam: ScalarField4, metric: ConformalMetricDescriptor):
    """Pointwise evaluators for u = ln lam in the chart of the given metric.

    Returns (mu_value, lap_g_u, grad_u, grad_sq_g, grad_of_grad_sq) where
    grad_sq_g(y) = |grad_g u|_g^2 and grad_of_grad_sq is the coordinate
    gradient of that scalar (analytic when possible, else None).
    """
    u = field_log(lam)
    analytic = lam.has_analytic
    hstep = ANALYTIC_THIRD_DERIV_STEP if analytic else FD_THIRD_DERIV_STEP

    if metric.kind == "flat":
        mu_value = None
    else:
        mu = metric.factor()
        mu_log = field_log(mu)
        mu_value = mu.value

    def grad_u(y):
        if analytic:
            return np.asarray(u.grad(y), dtype=float)
        return fd_gradient(u.value, y, _local_step(lam, y, hstep))

    def lap_g_u(y):
        lam.check_domain(y)
        if analytic:
            lap = float(np.trace(u.hess(y)))
        else:
            lap = fd_laplacian(u.value, y, _local_step(lam, y, hstep))
        if mu_value is None:
            return lap
        gu = grad_u(y)
        if analytic:
            glmu = np.asarray(mu_log.grad(y), dtype=float)
        else:
            glmu = fd_gradient(mu_log.value, y, _local_step(lam, y, hstep))
        return (lap + 2.0 * float(glmu @ gu)) / mu_value(y) ** 2

    def grad_sq_g(y):
        lam.check_domain(y)
        gu = grad_u(y)
        s = float(gu @ gu)
        return s if mu_value is None else s / mu_value(y) ** 2

    grad_of_grad_sq = None
    if analytic:
        if mu_value is None:
            def grad_of_grad_sq(y):
                return 2.0 * np.asarray(u.hess(y)) @ np.asarray(u.grad(y))
        else:
            mu_f = metric.factor()

            def grad_of_grad_sq(y):
                gu = np.asarray(u.grad(y), dtype=float)
                m = mu_f.value(y)
                gm = np.asarray(mu_f.grad(y), dtype=float)
                return 2.0 * (np.asarray(u.hess(y)) @ gu) / m**2 - 2.0 * float(gu @ gu) * gm / m**3

    return mu_value, lap_g_u, grad_u, grad_sq_g, grad_of_grad_sq, hstep


def biharmonic_residual(lam: ScalarField4, datum: EinsteinDatum, x,
                        metric: ConformalMetricDescriptor = FLAT,
                        h: float | None = None) -> np.ndarray:
    """Vector residual of the 3rd-order biharmonicity equation at x."""
    x = as_point(x)
    lam.check_domain(x)
    n, a = datum.n, datum.a
    if metric.kind != "flat" and n != 4:
        raise UnsupportedDimensionError("curved-metric residuals are implemented for n = 4 only")
    mu_value, lap_g_u, grad_u, grad_sq_g, grad_of_grad_sq, hstep = _chart_quantities(lam, metric)
    if h is not None:
        hstep = h
    hstep = _local_step(lam, x, hstep)
    gu = grad_u(x)
    lap = lap_g_u(x)
    gsq = grad_sq_g(x)
    term1 = fd_gradient(lap_g_u, x, hstep)
    if grad_of_grad_sq is not None:
        term4 = grad_of_grad_sq(x)
    else:
        term4 = fd_gradient(grad_sq_g, x, hstep)
    vec = term1 - (2.0 * lap + (n - 2) * gsq) * gu + 2.0 * a * gu + 0.5 * (6 - n) * term4
    if mu_value is not None:
        vec = vec / mu_value(x) ** 2
    return vec


def einstein_form_residual(lam: ScalarField4, datum: EinsteinDatum, x,
                           metric: ConformalMetricDescriptor = FLAT,
                           h: float | None = None) -> np.ndarray:
    """Vector residual of the integrated (gradient-form) equation at x."""
    x = as_point(x)
    lam.check_domain(x)
    n, a = datum.n, datum.a
    if metric.kind != "flat" and n != 4:
        raise UnsupportedDimensionError("curved-metric residuals are implemented for n = 4 only")
    analytic = lam.has_analytic
    hstep = h if h is not None else (ANALYTIC_THIRD_DERIV_STEP if analytic else FD_THIRD_DERIV_STEP)
    mu_value = None if metric.kind == "flat" else metric.factor().value
    mu_field = None if metric.kind == "flat" else metric.factor()

    def grad_lam(y):
        if analytic:
            return np.asarray(lam.grad(y), dtype=float)
        return fd_gradient(lam.value, y, _local_step(lam, y, hstep))

    def lap_g_lam(y):
        lam.check_domain(y)
        if analytic:
            lap = float(np.trace(lam.hess(y)))
        else:
            lap = fd_laplacian(lam.value, y, _local_step(lam, y, hstep))
        if mu_value is None:
            return lap
        gl = grad_lam(y)
        m = mu_value(y)
        if analytic:
            gmu = np.asarray(mu_field.grad(y), dtype=float)
        else:
            gmu = fd_gradient(mu_field.value, y, _local_step(lam, y, hstep))
        return (lap + 2.0 * float(gmu @ gl) / m) / m**2

    def scalar(y):
        v = lam.value(y)
        gl = grad_lam(y)
        gsq = float(gl @ gl)
        if mu_value is not None:
            gsq /= mu_value(y) ** 2
        return v * lap_g_lam(y) + a * v**2 - 0.5 * (n - 4) * gsq

    vec = fd_gradient(scalar, x, _local_step(lam, x, hstep)) - 4.0 * lap_g_lam(x) * grad_lam(x)
    if mu_value is not None:
        vec = vec / mu_value(x) ** 2
    return vec


def yamabe_residual(lam: ScalarField4, a: float, A: float, x,
                    metric: ConformalMetricDescriptor = FLAT,
                    h: float = DEFAULT_FD_STEP) -> float:
    """Delta_g lam - a lam - A lam^3 at x."""
    x = as_point(x)
    lam.check_domain(x)
    v = float(lam.value(x))
    if metric.kind == "flat":
        lap = float(np.trace(lam.hess(x))) if lam.hess is not None else fd_laplacian(lam.value, x, h)
    else:
        from .fields import laplace_beltrami

        lap = laplace_beltrami(lam, metric, x, h)
    return lap - a * v - A * v**3


def estimate_A(lam: ScalarField4, a: float, samples: Sequence,
               metric: ConformalMetricDescriptor = FLAT, h: float = DEFAULT_FD_STEP) -> ConstantA:
    """Least-squares A from Delta lam - a lam = A lam^3 over sample points."""
    pts = [as_point(p) for p in samples]
    if len(pts) < 2:
        raise ValueError("need at least two sample points")
    rhs = []
    cubes = []
    for p in pts:
        r = yamabe_residual(lam, a, 0.0, p, metric=metric, h=h)
        rhs.append(r)
        cubes.append(float(lam.value(p)) ** 3)
    rhs = np.asarray(rhs)
    cubes = np.asarray(cubes)
    denom = float(cubes @ cubes)
    if denom < 1e-14 * len(pts):
        raise IllConditionedError("lam^3 vanishes at every sample; A is undetermined")
    value = float(cubes @ rhs) / denom
    fit = float(np.sqrt(np.mean((rhs - value * cubes) ** 2)))
    return ConstantA(value, fit)


def codomain_scalar_curvature(A: float, a: float, lam_value: float) -> float:
    """R_h from the compatibility law 6A + 2a/lam^2 + R_h = 0."""
    if lam_value <= 0:
        raise DomainError("conformal factor must be positive")
    return -6.0 * A - 2.0 * a / lam_value**2


def curvature_law_residual(lam: ScalarField4, n: int, R_g: float, R_h, x,
                           metric: ConformalMetricDescriptor = FLAT,
                           h: float = DEFAULT_FD_STEP) -> float:
    """Residual of 2(n-1) Delta lam = lam R_g - lam^3 R_h - (n-1)(n-4)/lam |grad lam|^2.

    R_h may be a constant or a callable of the point (a scalar-curvature
    field on the codomain pulled back through the map).
    """
    x = as_point(x)
    lam.check_domain(x)
    v = float(lam.value(x))
    if v <= 0:
        raise DomainError("conformal factor must be positive")
    if metric.kind == "flat":
        lap = float(np.trace(lam.hess(x))) if lam.hess is not None else fd_laplacian(lam.value, x, h)
        g = np.asarray(lam.grad(x), dtype=float) if lam.grad is not None else fd_gradient(lam.value, x, h)
        gsq = float(g @ g)
    else:
        from .fields import laplace_beltrami

        lap = laplace_beltrami(lam, metric, x, h)
        g = np.asarray(lam.grad(x), dtype=float) if lam.grad is not None else fd_gradient(lam.value, x, h)
        gsq = float(g @ g) / metric.factor().value(x) ** 2
    rh = R_h(x) if callable(R_h) else float(R_h)
    return 2.0 * (n - 1) * lap - v * R_g + v**3 * rh + (n - 1) * (n - 4) / v * gsq


def tension_norm(lam: ScalarField4, n: int, x,
                 metric: ConformalMetricDescriptor = FLAT,
                 h: float = DEFAULT_FD_STEP) -> float:
    """Codomain norm of the tension field, (n-2) lam |grad ln lam|_g = (n-2)|grad lam|/mu."""
    x = as_point(x)
    lam.check_domain(x)
    g = np.asarray(lam.grad(x), dtype=float) if lam.grad is not None else fd_gradient(lam.value, x, h)
    nrm = float(np.linalg.norm(g))
    if metric.kind != "flat":
        nrm /= metric.factor().value(x)
    return (n - 2) * nrm


def aubin_condition(k: float, datum: EinsteinDatum) -> bool:
    """Strict inequality k < (n-2)/(4(n-1)) R_g guaranteeing positive solutions (n >= 4)."""
    if datum.n < 4:
        raise UnsupportedDimensionError("the existence criterion is stated for n >= 4")
    return k < (datum.n - 2) / (4.0 * (datum.n - 1)) * datum.scalar_curvature


def isoparametric_residuals(lam: ScalarField4, datum: EinsteinDatum,
                            u: Callable[[float], float], uprime: Callable[[float], float],
                            x, h: float = DEFAULT_FD_STEP) -> tuple[float, float]:
    """The two n != 4 profile conditions: Delta lam = u'(lam) and
    |grad lam|^2 = 2/(n-4) (lam u'(lam) - 4 u(lam) + a lam^2)."""
    if datum.n == 4:
        raise UnsupportedDimensionError("dimension 4 reduces to the cubic equation, not a profile pair")
    x = as_point(x)
    lam.check_domain(x)
    v = float(lam.value(x))
    lap = float(np.trace(lam.hess(x))) if lam.hess is not None else fd_laplacian(lam.value, x, h)
    g = np.asarray(lam.grad(x), dtype=float) if lam.grad is not None else fd_gradient(lam.value, x, h)
    r1 = lap - uprime(v)
    r2 = float(g @ g) - 2.0 / (datum.n - 4) * (v * uprime(v) - 4.0 * u(v) + datum.a * v**2)
    return r1, r2


# ---------------------------------------------------------------------------
# verification grids and report assembly
# ---------------------------------------------------------------------------

def standard_grid(n_points: int = 200, radius: float = 5.0,
                  singular_set: Sequence = (), exclusion: float = GRID_EXCLUSION,
                  seed: int | None = None) -> np.ndarray:
    """Quasi-random points in the ball |x| <= radius, away from singular loci.

    The default is the unscrambled Halton sequence, so grids are fully
    reproducible; passing a seed switches to seeded scrambling.
    """
    sampler = qmc.Halton(d=4, scramble=seed is not None, seed=seed)
    out = []
    guard = 0
    while len(out) < n_points:
        block = sampler.random(4 * n_points)
        pts = (2.0 * block - 1.0) * radius
        for p in pts:
            if float(p @ p) > radius**2:
                continue
            if singular_set and min(s.distance(p) for s in singular_set) < exclusion:
                continue
            out.append(p)
            if len(out) == n_points:
                break
        guard += 1
        if guard > 64:
            raise RuntimeError("grid rejection loop failed to fill; exclusions too aggressive")
    return np.asarray(out)


def grid_for_field(lam: ScalarField4, n_points: int = 200, radius: float = 5.0,
                   seed: int | None = None) -> np.ndarray:
    return standard_grid(n_points, radius, lam.singular_set, seed=seed)


def residual_report(equation: str, lam: ScalarField4, grid: np.ndarray, *,
                    datum: EinsteinDatum | None = None,
                    a: float | None = None, A: float | None = None,
                    metric: ConformalMetricDescriptor = FLAT,
                    h: float | None = None,
                    grid_meta: dict | None = None) -> ResidualReport:
    """Sweep a residual over a grid, collecting magnitudes into a report.

    Points raising DomainError are counted as failed and excluded from the
    norms.
    """
    mags = []
    n_failed = 0
    params: dict = {"metric": metric.kind}
    if equation == "yamabe":
        if a is None or A is None:
            raise ValueError("yamabe residual needs a and A")
        params.update(a=a, A=A)
    elif equation in ("biharmonic", "einstein_form"):
        if datum is None:
            raise ValueError(f"{equation} residual needs the Einstein datum")
        params.update(n=datum.n, a=datum.a)
    else:
        raise ValueError(f"no grid sweep for equation {equation!r}")
    if h is not None:
        params["h"] = h
    for p in np.asarray(grid, dtype=float):
        try:
            if equation == "yamabe":
                r = abs(yamabe_residual(lam, a, A, p, metric=metric, h=h or DEFAULT_FD_STEP))
            elif equation == "biharmonic":
                r = float(np.linalg.norm(biharmonic_residual(lam, datum, p, metric=metric, h=h)))
            else:
                r = float(np.linalg.norm(einstein_form_residual(lam, datum, p, metric=metric, h=h)))
            mags.append(r)
        except DomainError:
            n_failed += 1
    mags = np.asarray(mags)
    if mags.size == 0:
        raise DomainError("every grid point fell in a singular neighbourhood")
    meta = dict(grid_meta or {})
    meta.setdefault("n_points", int(len(grid)))
    return ResidualReport(
        equation=equation,
        sup=float(np.max(mags)),
        rms=float(np.sqrt(np.mean(mags**2))),
        n_points=int(mags.size),
        n_failed=n_failed,
        params=params,
        grid=meta,
        values=mags,
    )
