"""Mobius transformations of R^4 and their conformal factors.

Transforms are stored in the normal form

    x  ->  t_out + alpha Q (x - t_in) / |x - t_in|^eps,

with Q orthogonal and eps in {0, 2} (affine similarity / inversion type).
The four metric pairings (flat or round chart metric on each side) each
give a closed-form conformal factor; the flat->sphere factor always takes
the bubble shape 2 delta / (delta^2 + |x - e|^2), and biharmonicity is
classified per pairing.

alpha is restricted to be positive so factors are positive; an
orientation-reversing sign can be absorbed into Q.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import (
    DomainError,
    ScalarField4,
    as_point,
    field_affine,
    field_power,
    field_product,
    radial_power_field,
    radius_sq_field,
)

PAIRINGS = ("flat-flat", "flat-sphere", "sphere-flat", "sphere-sphere")
ORTHOGONALITY_TOL = 1e-12


class TransformParseError(ValueError):
    """Malformed transform literal."""


@dataclass(frozen=True)
class MobiusTransform:
    t_out: tuple
    t_in: tuple
    alpha: float
    Q: tuple
    eps: int

    def __post_init__(self):
        object.__setattr__(self, "t_out", tuple(float(c) for c in np.atleast_1d(self.t_out)))
        object.__setattr__(self, "t_in", tuple(float(c) for c in np.atleast_1d(self.t_in)))
        Q = np.asarray(self.Q, dtype=float).reshape(4, 4)
        object.__setattr__(self, "Q", tuple(map(tuple, Q)))
        if len(self.t_out) != 4 or len(self.t_in) != 4:
            raise ValueError("translations must be 4-vectors")
        if self.eps not in (0, 2):
            raise ValueError("eps must be 0 or 2")
        if self.alpha == 0.0:
            raise ValueError("alpha must be nonzero")
        if np.max(np.abs(Q.T @ Q - np.eye(4))) > ORTHOGONALITY_TOL:
            raise ValueError("Q must be orthogonal to 1e-12")

    @property
    def q_matrix(self) -> np.ndarray:
        return np.asarray(self.Q, dtype=float)

    @property
    def out_vec(self) -> np.ndarray:
        return np.asarray(self.t_out, dtype=float)

    @property
    def in_vec(self) -> np.ndarray:
        return np.asarray(self.t_in, dtype=float)

    @classmethod
    def identity(cls) -> "MobiusTransform":
        return cls((0.0,) * 4, (0.0,) * 4, 1.0, tuple(map(tuple, np.eye(4))), 0)

    @classmethod
    def inversion(cls) -> "MobiusTransform":
        return cls((0.0,) * 4, (0.0,) * 4, 1.0, tuple(map(tuple, np.eye(4))), 2)


def mobius_apply(T: MobiusTransform, x) -> np.ndarray:
    x = as_point(x, 4)
    y = x - T.in_vec
    if T.eps == 2:
        r2 = float(y @ y)
        if r2 < 1e-24:
            raise DomainError("inversion-type transform has a pole at t_in")
        y = y / r2
    return T.out_vec + T.alpha * (T.q_matrix @ y)


def _quadratic_field(c2: float, w: np.ndarray, c0: float, b: np.ndarray, name: str = "") -> ScalarField4:
    """q(x) = c2 |x-b|^2 + <w, x-b> + c0 with exact derivatives."""

    def value(x):
        y = x - b
        return c2 * float(y @ y) + float(w @ y) + c0

    def grad(x):
        return 2.0 * c2 * (x - b) + w

    def hess(x):
        return 2.0 * c2 * np.eye(x.size)

    return ScalarField4(value, grad, hess, name=name or "quadratic")


def _half_plus_field() -> ScalarField4:
    # (1 + |x|^2)/2, the factor of the identity chart-to-flat leg
    return field_affine(radius_sq_field(), 0.5, 0.5, name="(1+|x|^2)/2")


def mobius_conformal_factor(T: MobiusTransform, pairing: str) -> ScalarField4:
    """Conformal factor of T under the given metric pairing, with analytic
    derivatives.

    flat->flat:     alpha / |x-b|^eps
    flat->sphere:   2 alpha / ((1+|a|^2)|x-b|^eps + 2 alpha <a, Q(x-b)> + alpha^2 |x-b|^(2-eps))
    sphere->flat:   (1+|x|^2)/2 * alpha / |x-b|^eps
    sphere->sphere: (1+|x|^2)/2 * (flat->sphere factor)

    The flat->sphere denominator is a positive-definite quadratic, so that
    factor (and the sphere->sphere one) is globally smooth.
    """
    if pairing not in PAIRINGS:
        raise ValueError(f"unknown pairing {pairing!r}")
    if T.alpha <= 0:
        raise ValueError("conformal factors need alpha > 0 for positivity")
    a, b, al, Q, eps = T.out_vec, T.in_vec, T.alpha, T.q_matrix, T.eps

    if pairing == "flat-flat":
        if eps == 0:
            from .fields import constant_field

            return constant_field(al)
        return radial_power_field(-2.0, center=b, coeff=al, name=f"{al}/|x-b|^2")

    if pairing in ("flat-sphere", "sphere-sphere"):
        # denominator of the composed factor; quadratic in x for either eps
        w = 2.0 * al * (Q.T @ a)
        if eps == 2:
            D = _quadratic_field(1.0 + float(a @ a), w, al**2, b, name="fs_denom")
        else:
            D = _quadratic_field(al**2, w, 1.0 + float(a @ a), b, name="fs_denom")
        fs = field_affine(field_power(D, -1.0), 2.0 * al, 0.0, name="flat_sphere_factor")
        if pairing == "flat-sphere":
            return fs
        return field_product(_half_plus_field(), fs, name="sphere_sphere_factor")

    # sphere-flat
    leg = radial_power_field(-float(eps), center=b, coeff=al) if eps else None
    if leg is None:
        from .fields import constant_field

        leg = constant_field(al)
    return field_product(_half_plus_field(), leg, name="sphere_flat_factor")


@dataclass(frozen=True)
class NormalForm:
    """Parameters (delta, e) with factor(x) = 2 delta / (delta^2 + |x-e|^2)."""

    delta: float
    e: tuple

    def value(self, x) -> float:
        y = as_point(x, 4) - np.asarray(self.e)
        return 2.0 * self.delta / (self.delta**2 + float(y @ y))


def mobius_normal_form(T: MobiusTransform, pairing: str = "flat-sphere",
                       verify: bool = True) -> NormalForm:
    """(delta, e) of the flat->sphere factor.

    eps = 2: delta = alpha/(1+|a|^2),  e = b - alpha Q^T a / (1+|a|^2)
    eps = 0: delta = 1/alpha,          e = b - Q^T a / alpha
    """
    if pairing != "flat-sphere":
        raise ValueError("normal form applies to the flat->sphere pairing only")
    if T.alpha <= 0:
        raise ValueError("normal form needs alpha > 0")
    a, b, al, Q = T.out_vec, T.in_vec, T.alpha, T.q_matrix
    if T.eps == 2:
        delta = al / (1.0 + float(a @ a))
        e = b - al * (Q.T @ a) / (1.0 + float(a @ a))
    else:
        delta = 1.0 / al
        e = b - (Q.T @ a) / al
    nf = NormalForm(delta, tuple(e))
    if verify:
        factor = mobius_conformal_factor(T, "flat-sphere")
        rng = np.random.default_rng(1234)
        for _ in range(10):
            p = rng.uniform(-3.0, 3.0, size=4)
            got, want = factor.value(p), nf.value(p)
            if abs(got - want) > 1e-8 * max(1.0, abs(want)):
                raise AssertionError(f"normal form mismatch at {p}: {got} vs {want}")
    return nf


def mobius_compose(T2: MobiusTransform, T1: MobiusTransform) -> MobiusTransform:
    """The transform T2 o T1, reduced to the standard normal form."""
    a1, b1, al1, Q1, e1 = T1.out_vec, T1.in_vec, T1.alpha, T1.q_matrix, T1.eps
    a2, b2, al2, Q2, e2 = T2.out_vec, T2.in_vec, T2.alpha, T2.q_matrix, T2.eps

    if e1 == 0:
        # T1 is affine: T1 x - b2 = al1 Q1 (x - b'), b' = b1 - Q1^T (a1 - b2)/al1
        bp = b1 - Q1.T @ (a1 - b2) / al1
        alpha = al2 * al1 ** (1 - e2)
        return MobiusTransform(tuple(a2), tuple(bp), alpha, tuple(map(tuple, Q2 @ Q1)), e2)

    c = a1 - b2
    cn2 = float(c @ c)
    if e2 == 0:
        return MobiusTransform(tuple(a2 + al2 * (Q2 @ c)), tuple(b1), al2 * al1,
                               tuple(map(tuple, Q2 @ Q1)), 2)
    if cn2 < 1e-28:
        # inversion centers cancel: the composition is affine
        return MobiusTransform(tuple(a2), tuple(b1), al2 / al1,
                               tuple(map(tuple, Q2 @ Q1)), 0)
    H = np.eye(4) - 2.0 * np.outer(c, c) / cn2
    a = a2 + al2 * (Q2 @ c) / cn2
    alpha = al2 * al1 / cn2
    b = b1 - al1 * (Q1.T @ c) / cn2
    return MobiusTransform(tuple(a), tuple(b), alpha, tuple(map(tuple, Q2 @ H @ Q1)), 2)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Verdict:
    classification: str  # harmonic | proper_biharmonic | not_biharmonic
    reason: str
    evidence: dict

    def __post_init__(self):
        if self.classification not in ("harmonic", "proper_biharmonic", "not_biharmonic"):
            raise ValueError(f"unknown classification {self.classification!r}")


def _isometry_parameters(T: MobiusTransform, tol: float = 1e-9) -> bool:
    """True when T is on the sphere-isometry locus of the sphere->sphere pairing."""
    a, b, al, Q = T.out_vec, T.in_vec, T.alpha, T.q_matrix
    aligned = bool(np.max(np.abs(b - Q.T @ a)) <= tol)
    if T.eps == 0:
        return aligned and abs(al - 1.0) <= tol
    return aligned and abs(al - (1.0 + float(a @ a))) <= tol


def sphere_isometry(eps: int, Q, t_out) -> MobiusTransform:
    """Construct a transform on the isometry locus with the given rotation part."""
    Q = np.asarray(Q, dtype=float)
    a = np.asarray(t_out, dtype=float)
    alpha = 1.0 if eps == 0 else 1.0 + float(a @ a)
    return MobiusTransform(tuple(a), tuple(Q.T @ a), alpha, tuple(map(tuple, Q)), eps)


def classify_mobius(T: MobiusTransform, pairing: str,
                    n_points: int = 60, seed: int | None = None) -> Verdict:
    """Classify T under the pairing, attaching numerical residual evidence.

    Verdicts follow the closed-form analysis per pairing; the evidence dict
    carries residual sup-norms over a verification grid (the spherical
    domain is sampled in |x| <= 3 with Einstein constant a = 3) plus the
    fitted cubic coefficient for flat-domain cases.
    """
    from .fields import ConformalMetricDescriptor, EinsteinDatum
    from .residuals import biharmonic_residual, estimate_A, standard_grid, tension_norm

    if pairing not in PAIRINGS:
        raise ValueError(f"unknown pairing {pairing!r}")
    factor = mobius_conformal_factor(T, pairing)
    spherical_domain = pairing.startswith("sphere")
    metric = ConformalMetricDescriptor.spherical() if spherical_domain else ConformalMetricDescriptor.flat()
    datum = EinsteinDatum(4, 3.0 if spherical_domain else 0.0)
    radius = 3.0 if spherical_domain else 5.0
    grid = standard_grid(n_points, radius, factor.singular_set, seed=seed)

    sup_bh = 0.0
    sup_tension = 0.0
    for p in grid:
        sup_bh = max(sup_bh, float(np.linalg.norm(biharmonic_residual(factor, datum, p, metric=metric))))
        sup_tension = max(sup_tension, tension_norm(factor, 4, p, metric=metric))
    evidence = {"biharmonic_residual_sup": sup_bh, "tension_sup": sup_tension,
                "einstein_a": datum.a, "grid_radius": radius, "n_points": int(len(grid))}

    if pairing == "flat-flat":
        fit = estimate_A(factor, 0.0, grid[:12])
        evidence.update(fitted_A=fit.value, fit_residual=fit.fit_residual)
        if T.eps == 0:
            return Verdict("harmonic", "constant conformal factor (homothety)", evidence)
        return Verdict("proper_biharmonic", "harmonic nonconstant factor solves the cubic equation with A = 0", evidence)

    if pairing == "flat-sphere":
        nf = mobius_normal_form(T, verify=False)
        rng = np.random.default_rng(99)
        nf_err = max(abs(factor.value(q) - nf.value(q)) for q in rng.uniform(-3, 3, size=(25, 4)))
        fit = estimate_A(factor, 0.0, grid[:12])
        evidence.update(fitted_A=fit.value, fit_residual=fit.fit_residual,
                        normal_form_error=nf_err, delta=nf.delta)
        return Verdict("proper_biharmonic",
                       "factor is a bubble 2*delta/(delta^2+|x-e|^2), solving the cubic equation with A = -2",
                       evidence)

    if pairing == "sphere-flat":
        return Verdict("not_biharmonic",
                       "factor (1+|x|^2)/2 * alpha/|x-b|^eps is never constant and fails the cubic reduction",
                       evidence)

    # sphere-sphere
    vals = [factor.value(p) for p in grid]
    evidence["factor_range"] = float(np.max(vals) - np.min(vals))
    if _isometry_parameters(T):
        return Verdict("harmonic", "sphere isometry: conformal factor identically 1", evidence)
    return Verdict("not_biharmonic",
                   "nonconstant factor with constant codomain curvature violates the compatibility law",
                   evidence)


# ---------------------------------------------------------------------------
# random transforms and the CLI literal format
# ---------------------------------------------------------------------------

def random_orthogonal(rng: np.random.Generator) -> np.ndarray:
    M = rng.standard_normal((4, 4))
    Q, R = np.linalg.qr(M)
    return Q @ np.diag(np.sign(np.diag(R)))


def random_transform(rng: np.random.Generator, eps: int,
                     translation_scale: float = 1.2,
                     alpha_range: tuple = (0.5, 2.0)) -> MobiusTransform:
    Q = random_orthogonal(rng)
    return MobiusTransform(
        tuple(rng.uniform(-translation_scale, translation_scale, 4)),
        tuple(rng.uniform(-translation_scale, translation_scale, 4)),
        float(rng.uniform(*alpha_range)),
        tuple(map(tuple, Q)),
        eps,
    )


def parse_transform(text: str) -> MobiusTransform:
    """Parse 'eps=2 alpha=1.5 tout=0,0,0,0 tin=1,0,0,0 Q=identity'.

    Q accepts 'identity' or 16 comma-separated row-major entries, which must
    form an orthogonal matrix.
    """
    fieldsmap = {}
    for token in text.split():
        if "=" not in token:
            raise TransformParseError(f"expected key=value, got {token!r}")
        key, _, val = token.partition("=")
        fieldsmap[key.lower()] = val
    try:
        eps = int(fieldsmap.get("eps", "0"))
        alpha = float(fieldsmap.get("alpha", "1"))

        def vec(key):
            raw = fieldsmap.get(key, "0,0,0,0")
            parts = [float(t) for t in raw.split(",")]
            if len(parts) != 4:
                raise TransformParseError(f"{key} needs 4 components")
            return tuple(parts)

        qraw = fieldsmap.get("q", "identity")
        if qraw == "identity":
            Q = np.eye(4)
        else:
            entries = [float(t) for t in qraw.split(",")]
            if len(entries) != 16:
                raise TransformParseError("Q needs 16 row-major entries or 'identity'")
            Q = np.asarray(entries).reshape(4, 4)
        return MobiusTransform(vec("tout"), vec("tin"), alpha, tuple(map(tuple, Q)), eps)
    except TransformParseError:
        raise
    except (ValueError, KeyError) as exc:
        raise TransformParseError(f"malformed transform literal: {exc}") from exc


def transform_literal(T: MobiusTransform) -> str:
    """Render a transform back to the literal format (canonical form)."""

    def fmt_vec(v):
        return ",".join(repr(float(c)) for c in v)

    Q = T.q_matrix
    if np.max(np.abs(Q - np.eye(4))) == 0.0:
        qtxt = "identity"
    else:
        qtxt = ",".join(repr(float(c)) for c in Q.ravel())
    return f"eps={T.eps} alpha={T.alpha!r} tout={fmt_vec(T.t_out)} tin={fmt_vec(T.t_in)} Q={qtxt}"
