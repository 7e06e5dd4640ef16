"""
Twisted products B×S¹ over Hermitian bases, the submersion onto the base and the identities linking harmonicity
upstairs with harmonicity of the base complex structure.
"""

import logging
import math

import numpy as np

from ..dsl import parse
from ..exceptions import NonHermitianBaseError, NonRiemannianSubmersionError, StructureError, WarpingError
from ..geometry import (
    ChartManifold,
    Germ,
    Point,
    TensorField,
    bracket,
    contract,
    differentiate,
    endomorphism_norm,
    lowered_riemann,
    orthonormal_frame,
)
from ..reports import EquivalenceReport, ResidualReport
from ..utils import DEFAULT_SEED, max_abs, sample_points
from .acms import AcmStructure
from .harmonicity import (
    combined_residual,
    harmonic_map_norm,
    hse1_residual,
    hse2_residual,
    theta_lee_field,
    xi_energy_derivative,
    xi_harmonic_residual,
    xi_map_scalar,
)

logger = logging.getLogger(__name__)

WARPING_THRESHOLD = 1e-3

HERMITIAN_TOLERANCES = {"square": 1e-10, "metric": 1e-10, "nijenhuis": 1e-8}


def _commutator(a, b):
    return a @ b - b @ a


def _as_point(chart, p):
    return p if isinstance(p, Point) else chart.at(p)


def complex_nijenhuis(j, x, y):
    """
    N_J(X, Y) = [JX, JY] − J[JX, Y] − J[X, JY] + J²[X, Y] for germs of J, X and Y
    """
    jx = contract("ab,b->a", j, x)
    jy = contract("ab,b->a", j, y)
    value = (
        bracket(jx, jy)
        - contract("ab,b->a", j, bracket(jx, y))
        - contract("ab,b->a", j, bracket(x, jy))
        + contract("ab,bc,c->a", j, j, bracket(x, y))
    )
    return value.value


class HermitianBase:
    """
    An even-dimensional chart with a complex structure Ĵ compatible with its metric
    """

    def __init__(self, chart, j, label=None):
        if chart.dim % 2:
            raise StructureError("A Hermitian base needs an even dimension, got %d" % chart.dim)

        self.chart = chart
        self.label = label or chart.label
        self.j = j if isinstance(j, TensorField) else TensorField(chart, "ud", j, label="Ĵ")
        self._conformal = {}
        self._functions = {}

    @property
    def n(self):
        return self.chart.dim // 2

    def conformal(self, f):
        """
        The same complex structure over the metric f²g
        """
        f = parse(f, self.chart.variables)
        if f not in self._conformal:
            self._conformal[f] = self._conformal_change(f)
        return self._conformal[f]

    def _conformal_change(self, f):
        if self.chart.metric.expressions is None or self.j.expressions is None:
            raise StructureError("Conformal change needs a base given by component expressions")

        dim = self.chart.dim
        metric = np.array([f**2 * g for g in self.chart.metric.expressions], dtype=object).reshape(dim, dim)
        chart = ChartManifold(
            dim,
            metric.tolist(),
            domain=self.chart.domain,
            periodic=self.chart.periodic,
            variables=self.chart.variables,
            label="%s, f = %s" % (self.chart.label, f.pretty()),
        )
        j = np.array(self.j.expressions, dtype=object).reshape(dim, dim)
        return HermitianBase(chart, j.tolist(), label=chart.label)

    def function(self, f):
        """
        A function on the base as a scalar field, one per expression
        """
        f = parse(f, self.chart.variables)
        if f not in self._functions:
            self._functions[f] = TensorField(self.chart, "", f, label="f")
        return self._functions[f]

    def residuals(self, p):
        """
        |Ĵ² + Id|, |g(Ĵ·, Ĵ·) − g| and the largest Nijenhuis component over coordinate pairs
        """
        point = _as_point(self.chart, p)
        j = point.germ(self.j)
        jv, g = j.value, point.g
        basis = [Germ.constant(e, point.dim, point.order) for e in np.eye(point.dim)]
        pairs = [(basis[a], basis[b]) for a in range(point.dim) for b in range(a + 1, point.dim)]

        return {
            "square": max_abs(jv @ jv + np.eye(point.dim)),
            "metric": max_abs(jv.T @ g @ jv - g),
            "nijenhuis": max((max_abs(complex_nijenhuis(j, x, y)) for x, y in pairs), default=0.0),
        }

    def check(self, points):
        for p in points:
            for invariant, residual in self.residuals(p).items():
                if residual > HERMITIAN_TOLERANCES[invariant]:
                    raise NonHermitianBaseError(invariant, residual)

    def nabla_j(self, p):
        return _as_point(self.chart, p).nabla(self.j).value

    def lee(self, p):
        """
        δĴ = Σ_i (∇_{E_i}Ĵ)(E_i)
        """
        point = _as_point(self.chart, p)
        return np.einsum("abc,bc->a", self.nabla_j(point), point.ginv)

    def lee_term(self, p):
        """
        ∇_{δĴ}Ĵ
        """
        point = _as_point(self.chart, p)
        return np.einsum("abc,c->ab", self.nabla_j(point), self.lee(point))

    def rcomm(self, p):
        """
        Σ_i [R(E_i, ĴE_i), Ĵ]
        """
        point = _as_point(self.chart, p)
        j = self.j.at(point)
        total = np.einsum("lkij,jm,im->lk", point.riemann.value, j, point.ginv)
        return _commutator(total, j)

    def condition(self, p):
        return self.rcomm(p) + 2.0 * self.lee_term(p)

    def alternative_condition(self, p):
        return self.rcomm(p) - self.lee_term(p)

    def harmonic_section_residual(self, p):
        """
        [∇*∇Ĵ, Ĵ]
        """
        point = _as_point(self.chart, p)
        rough = -np.einsum("abcd,cd->ab", point.nabla2(self.j).value, point.ginv)
        return _commutator(rough, self.j.at(point))

    def harmonic_map_residual(self, p, x):
        """
        Σ_i ⟨∇_{E_i}Ĵ, [R(E_i, X), Ĵ]⟩
        """
        point = _as_point(self.chart, p)
        j = self.j.at(point)
        nabla = self.nabla_j(point)
        rm = point.riemann.value

        total = 0.0
        for e in orthonormal_frame(point):
            a = np.einsum("abc,c->ab", nabla, e)
            b = _commutator(np.einsum("lkij,i,j->lk", rm, e, x), j)
            total += float(np.einsum("ab,ac,bd,cd->", point.g, a, b, point.ginv))
        return total

    def harmonic_map_norm(self, p):
        point = _as_point(self.chart, p)
        return max(abs(self.harmonic_map_residual(point, x)) for x in np.eye(point.dim))

    def __repr__(self):
        return "HermitianBase(%s)" % self.label


class TwistedProduct:
    """
    B×S¹ with the metric f²g + F²dt², θ = Ĵ on base directions and ξ = (1/F)∂t, the circle coordinate t last.
    f is a function on the base and F a function on B×S¹; when F varies along the base the structure is not normal.
    """

    def __init__(self, base, f, F):
        self.base = base
        self.f = parse(f, base.chart.variables)
        self.variables = base.chart.variables + ("t",)
        self.F = parse(F, self.variables)

        self.conformal_base = base.conformal(self.f)
        self.chart = self._product_chart()
        self.structure = self._structure()

    @property
    def dim(self):
        return self.base.chart.dim + 1

    def _block(self, expressions, corner):
        n = self.base.chart.dim
        block = np.array([parse(0)] * (self.dim * self.dim), dtype=object).reshape(self.dim, self.dim)
        block[:n, :n] = np.array(expressions, dtype=object).reshape(n, n)
        block[n, n] = parse(corner)
        return block.tolist()

    def _product_chart(self):
        base = self.base.chart
        return ChartManifold(
            self.dim,
            self._block(self.conformal_base.chart.metric.expressions, self.F**2),
            domain=np.vstack([base.domain, [[0.0, 2.0 * math.pi]]]),
            periodic=tuple(base.periodic) + (base.dim,),
            variables=self.variables,
            label="%s × S¹" % base.label,
        )

    def _structure(self):
        zeros = [parse(0)] * (self.dim - 1)
        return AcmStructure(
            self.chart,
            self._block(self.base.j.expressions, 0),
            zeros + [1 / self.F],
            zeros + [self.F],
            label="twist(%s, f = %s, F = %s)" % (self.base.label, self.f.pretty(), self.F.pretty()),
        )

    def base_coords(self, p):
        coords = p.coords if isinstance(p, Point) else np.asarray(p, dtype=float)
        return coords[:-1]

    def submersion(self):
        return SubmersionContext(self.structure, self.conformal_base.chart)

    def __repr__(self):
        return "TwistedProduct(%s)" % self.structure.label


def build_twisted_product(base, f, F, samples=20, seed=DEFAULT_SEED):
    """
    Assembles a twisted product after checking that the base is Hermitian and that f and F stay away from zero
    """
    tp = TwistedProduct(base, f, F)
    points = sample_points(tp.chart.domain, samples, seed, periodic=tp.chart.periodic)

    base.check(points[:, :-1])

    for name, expr in (("f", tp.f), ("F", tp.F)):
        values = [abs(expr.evaluate(dict(zip(tp.variables, coords)))) for coords in points]
        minimum = min(values)
        if minimum <= WARPING_THRESHOLD:
            raise WarpingError(name, minimum, WARPING_THRESHOLD)

    logger.info("built %r over %d sample points" % (tp, samples))
    return tp


# =====================================================================
# Riemannian submersion onto the base
# =====================================================================


class SubmersionContext:
    """
    The projection (x, t) -> x from a structure whose ξ is tangent to the t-lines, with base metric given by a chart
    over the leading coordinates. Basic lifts of base vectors are their horizontal projections.
    """

    def __init__(self, structure, base_chart):
        if base_chart.dim != structure.dim - 1:
            raise StructureError(
                "Base chart has dimension %d but the fibres of a %d-dimensional structure need %d"
                % (base_chart.dim, structure.dim, structure.dim - 1)
            )
        self.structure = structure
        self.base_chart = base_chart

    def point(self, p):
        local = self.structure.at(p)
        if max_abs(local.xi_v[:-1]) > 1e-12:
            raise StructureError("ξ is not vertical at %r" % local.point)
        return local.point

    def projections(self, p):
        local = self.structure.at(p)
        vertical = np.outer(local.xi_v, local.eta_v)
        return np.eye(self.structure.dim) - vertical, vertical

    def projection_residual(self, p):
        """
        Largest deviation of H + V = Id, H² = H, V² = V, HV = 0 and ηV = η
        """
        local = self.structure.at(p)
        h, v = self.projections(p)
        identity = np.eye(self.structure.dim)
        return max(
            max_abs(h + v - identity),
            max_abs(h @ h - h),
            max_abs(v @ v - v),
            max_abs(h @ v),
            max_abs(local.eta_v @ v - local.eta_v),
        )

    def lifts(self, p):
        """
        Germs of the basic lifts of the base coordinate fields
        """
        point = self.point(p)
        local = self.structure.at(point)
        dim = point.dim
        return [
            contract("ab,b->a", local.projection, Germ.constant(e, dim, point.order))
            for e in np.eye(dim)[: dim - 1]
        ]

    def base_point(self, p):
        point = self.point(p)
        return self.base_chart.at(point.coords[:-1], point.order)

    def metric_residual(self, p):
        """
        |ḡ(X̃, Ỹ) − ĝ(X, Y)| over basic lifts of coordinate vectors
        """
        point = self.point(p)
        lifts = np.array([lift.value for lift in self.lifts(point)])
        return max_abs(lifts @ point.g @ lifts.T - self.base_point(point).g)


def _nabla_along(point, x, y):
    """
    ∇_XY for vector germs
    """
    return contract("i,ki->k", x, differentiate(y, "u", point.christoffel)).value


def oneill_tensors(ctx, p, e, g):
    """
    A_EG = H∇_{HE}(VG) + V∇_{HE}(HG) and T_EG = H∇_{VE}(VG) + V∇_{VE}(HG), with G extended by constant components
    """
    point = ctx.point(p)
    local = ctx.structure.at(point)
    dim = point.dim
    h_germ = local.projection
    v_germ = Germ.constant(np.eye(dim), dim, h_germ.order) - h_germ
    h, v = h_germ.value, v_germ.value

    gg = Germ.constant(g, dim, point.order)
    vg = contract("ab,b->a", v_germ, gg)
    hg = contract("ab,b->a", h_germ, gg)
    he = Germ.constant(h @ e, dim, point.order)
    ve = Germ.constant(v @ e, dim, point.order)

    a = h @ _nabla_along(point, he, vg) + v @ _nabla_along(point, he, hg)
    t = h @ _nabla_along(point, ve, vg) + v @ _nabla_along(point, ve, hg)
    return a, t


def oneill_residuals(ctx, p):
    """
    |T_ξX|, |A_XY + A_YX| over horizontal frame vectors, and |V(A_X̃Ỹ) − ½V[X̃, Ỹ]| over basic lifts
    """
    point = ctx.point(p)
    local = ctx.structure.at(point)
    horizontal = local.frame.horizontal
    _, v = ctx.projections(point)

    t_xi = max(point.norm(oneill_tensors(ctx, point, local.xi_v, x)[1]) for x in horizontal)
    a_sym = max(
        point.norm(oneill_tensors(ctx, point, x, y)[0] + oneill_tensors(ctx, point, y, x)[0])
        for x in horizontal
        for y in horizontal
    )

    lifts = ctx.lifts(point)
    a_bracket = 0.0
    for x in lifts:
        for y in lifts:
            a_xy = v @ _nabla_along(point, x, y)
            half = 0.5 * v @ bracket(x, y).value
            a_bracket = max(a_bracket, point.norm(a_xy - half))

    return {"t_xi": t_xi, "a_antisymmetry": a_sym, "a_bracket": a_bracket}


def curvature_expansion_residual(ctx, p):
    """
    Largest deviation of ḡ(R(X, Y)Z, H) from ĝ(R̂(X, Y)Z, H) + ½η[X, Y]η[Z, H] − ¼η[Y, Z]η[X, H] + ¼η[X, Z]η[Y, H]
    over basic lifts of base coordinate vectors
    """
    point = ctx.point(p)
    local = ctx.structure.at(point)
    lifts = ctx.lifts(point)
    values = np.array([lift.value for lift in lifts])

    upstairs = np.einsum("hkij,ai,bj,ck,dh->abcd", lowered_riemann(point), values, values, values, values)
    downstairs = np.einsum("hkij->ijkh", lowered_riemann(ctx.base_point(point)))

    eta = np.array([[float(local.eta_v @ bracket(x, y).value) for y in lifts] for x in lifts])
    expected = (
        downstairs
        + 0.5 * np.einsum("ab,cd->abcd", eta, eta)
        - 0.25 * np.einsum("bc,ad->abcd", eta, eta)
        + 0.25 * np.einsum("ac,bd->abcd", eta, eta)
    )
    return max_abs(upstairs - expected)


# =====================================================================
# Base conditions and conformal change
# =====================================================================


def base_residuals(base, f, points, tolerance=1e-6):
    """
    Both candidate base conditions on (B, f²g): Σ[R(F_i, ĴF_i), Ĵ] + 2∇_{δĴ}Ĵ and Σ[R(F_i, ĴF_i), Ĵ] − ∇_{δĴ}Ĵ
    """
    conformal = base.conformal(f)
    plus = ResidualReport("base:rcomm+2lee", tolerance)
    minus = ResidualReport("base:rcomm-lee", tolerance)

    for coords in points:
        point = conformal.chart.at(coords)
        plus.add(endomorphism_norm(point, conformal.condition(point)))
        minus.add(endomorphism_norm(point, conformal.alternative_condition(point)))

    return [plus, minus]


def base_crosscheck(tp, p):
    """
    Distance between the combined residual of the twisted product, restricted to base directions, and the base
    condition on (B, f²g), together with the size of its mixed blocks
    """
    point = _as_point(tp.chart, p)
    base_point = tp.conformal_base.chart.at(tp.base_coords(point), point.order)
    combined = combined_residual(tp.structure, point)

    block = max_abs(combined[:-1, :-1] - tp.conformal_base.condition(base_point))
    mixed = max(max_abs(combined[-1, :]), max_abs(combined[:, -1]))
    return block, mixed


def conformal_lee_check(base, f, p, x=None, seed=DEFAULT_SEED):
    """
    Compares δ_{f²g}Ĵ with (1/f²)δĴ + 2(n−1)/f³ Ĵ(grad f), and ∇^{f²g}_{δ_{f²g}Ĵ}Ĵ applied to X with its expansion in
    terms of g. Returns both residual norms.
    """
    f = parse(f, base.chart.variables)
    conformal = base.conformal(f)
    point = _as_point(base.chart, p)
    conformal_point = conformal.chart.at(point.coords, point.order)
    n = base.n

    if x is None:
        x = np.random.default_rng(seed).standard_normal(point.dim)

    f_germ = point.germ(base.function(f))
    fv = float(f_germ.value)
    df = f_germ.d().value
    grad = point.ginv @ df
    j = base.j.at(point)
    nabla = base.nabla_j(point)
    lee = base.lee(point)

    expected_lee = lee / fv**2 + 2.0 * (n - 1) / fv**3 * (j @ grad)
    lee_residual = point.norm(conformal.lee(conformal_point) - expected_lee)

    lhs = conformal.lee_term(conformal_point) @ x
    rhs = (
        np.einsum("abc,c->ab", nabla, lee) @ x / fv**2
        + 2.0 * (n - 1) / fv**3 * np.einsum("abc,c->ab", nabla, j @ grad) @ x
        + float(df @ (j @ x)) / fv**3 * lee
        - float(df @ x) / fv**3 * (j @ lee)
        - point.inner(lee, j @ x) / fv**3 * grad
        + point.inner(lee, x) / fv**3 * (j @ grad)
    )
    return lee_residual, point.norm(lhs - rhs)


def conformal_curvature_check(base, f, p):
    """
    Compares Σ[R^{f²g}(F_i, ĴF_i), Ĵ] over an f²g-orthonormal frame with f⁻²Σ[R^g(E_i, ĴE_i), Ĵ] over a g-orthonormal
    frame. Also returns the deviation from the unscaled right-hand side.
    """
    f = parse(f, base.chart.variables)
    conformal = base.conformal(f)
    point = _as_point(base.chart, p)
    conformal_point = conformal.chart.at(point.coords, point.order)

    fv = f.evaluate(dict(zip(base.chart.variables, point.coords)))
    lhs = conformal.rcomm(conformal_point)
    rhs = base.rcomm(point)
    return max_abs(lhs - rhs / fv**2), max_abs(lhs - rhs)


# =====================================================================
# Harmonicity upstairs against harmonicity of the base
# =====================================================================


def theorem41_crosscheck(tp, points, tolerance=1e-6):
    """
    For constant f: the structure is a harmonic section exactly when Ĵ is one, ξ is a harmonic unit field and
    ∇_{δθ}ξ = 0; it is a harmonic map exactly when Ĵ is one and ξ(|∇ξ|²/2) = 0
    """
    if not tp.f.is_constant():
        raise NonRiemannianSubmersionError(tp.f.pretty())

    structure, base = tp.structure, tp.conformal_base
    components = {
        name: ResidualReport("thm41:%s" % name, tolerance)
        for name in ("base-section", "xi-harmonic", "lee-xi", "base-map", "xi-energy")
    }
    section = EquivalenceReport("thm41:section", tolerance)
    harmonic_map = EquivalenceReport("thm41:map", tolerance)
    energy = EquivalenceReport("thm41:energy", tolerance)

    for coords in points:
        point = tp.chart.at(coords)
        local = structure.at(point)
        base_point = base.chart.at(tp.base_coords(point), point.order)

        base_section = endomorphism_norm(base_point, base.harmonic_section_residual(base_point))
        xi_harmonic = point.norm(xi_harmonic_residual(structure, point))
        lee_xi = point.norm(local.nabla_xi_along(theta_lee_field(structure, point)))
        base_map = base.harmonic_map_norm(base_point)
        derivative = abs(xi_energy_derivative(structure, point))

        for name, value in zip(components, (base_section, xi_harmonic, lee_xi, base_map, derivative)):
            components[name].add(value)

        upstairs = max(
            endomorphism_norm(point, hse1_residual(structure, point)), point.norm(hse2_residual(structure, point))
        )
        section.add_pair(upstairs, max(base_section, xi_harmonic, lee_xi))
        harmonic_map.add_pair(harmonic_map_norm(structure, point), max(base_map, derivative))
        energy.add_pair(derivative, abs(xi_map_scalar(structure, point)))

    return list(components.values()) + [section, harmonic_map, energy]
