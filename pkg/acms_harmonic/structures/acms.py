"""
Almost contact metric structures (θ, ξ, η) over a chart, their compatibility invariants and the three routes to
normality: the tensor N_θ + 2dη⊗ξ, the covariant criterion in terms of ∇θ and ∇ξ, and integrability of the almost
complex structure induced on M×ℝ.
"""

import itertools
import logging
from functools import cached_property

import numpy as np

from ..exceptions import NotHorizontalError, StructureError
from ..geometry import (
    Germ,
    Point,
    TensorField,
    bracket,
    contract,
    endomorphism_norm,
    exterior_derivative_1form,
    gram_schmidt_adapted,
    ricci,
    rough_laplacian,
)
from ..reports import ResidualReport
from ..utils import max_abs

logger = logging.getLogger(__name__)

HORIZONTAL_TOLERANCE = 1e-10


class AcmStructure:
    """
    An almost contact metric structure on a chart. theta, xi and eta may be tensor fields or component expressions;
    when eta is omitted it is the metric dual of xi.
    """

    def __init__(self, chart, theta, xi, eta=None, label=None):
        self.chart = chart
        self.label = label or chart.label
        self.theta = self._field(theta, "ud", "θ")
        self.xi = self._field(xi, "u", "ξ")

        if eta is None:
            self.eta = TensorField(
                chart, "d", evaluator=lambda p: contract("ab,b->a", p.metric, p.germ(self.xi)), label="η"
            )
        else:
            self.eta = self._field(eta, "d", "η")

    def _field(self, value, kinds, label):
        if isinstance(value, TensorField):
            if value.chart is not self.chart:
                raise StructureError("%s is defined on a different chart" % label)
            if value.kinds != kinds:
                raise StructureError("%s must have index kinds '%s', got '%s'" % (label, kinds, value.kinds))
            return value
        return TensorField(self.chart, kinds, value, label=label)

    @property
    def dim(self):
        return self.chart.dim

    def at(self, point):
        """
        Cached structure quantities at a point
        """
        if not isinstance(point, Point):
            point = self.chart.at(point)
        return point.cached(("structure", self), lambda: LocalStructure(self, point))

    def __repr__(self):
        return "AcmStructure(%s)" % self.label


class LocalStructure:
    """
    Germs and values of a structure and its first covariant derivatives at one point
    """

    def __init__(self, structure, point):
        self.structure = structure
        self.point = point

    @cached_property
    def theta(self):
        return self.point.germ(self.structure.theta)

    @cached_property
    def xi(self):
        return self.point.germ(self.structure.xi)

    @cached_property
    def eta(self):
        return self.point.germ(self.structure.eta)

    @property
    def th(self):
        return self.theta.value

    @property
    def xi_v(self):
        return self.xi.value

    @property
    def eta_v(self):
        return self.eta.value

    @cached_property
    def projection(self):
        """
        P = Id − ξ⊗η onto the contact sub-bundle, as a germ
        """
        order = min(self.xi.order, self.eta.order)
        return Germ.constant(np.eye(self.point.dim), self.point.dim, order) - contract("a,b->ab", self.xi, self.eta)

    @property
    def P(self):
        return self.projection.value

    @cached_property
    def nabla_theta(self):
        """
        (∇θ)[a, b, c] = ((∇_{∂c}θ))^a_b
        """
        return self.point.nabla(self.structure.theta)

    @cached_property
    def nabla_xi(self):
        return self.point.nabla(self.structure.xi)

    def nabla_theta_along(self, x):
        return np.einsum("abc,c->ab", self.nabla_theta.value, x)

    def nabla_xi_along(self, x):
        return self.nabla_xi.value @ x

    @cached_property
    def frame(self):
        return gram_schmidt_adapted(self.point.chart, self.point, self.xi_v)

    def check_horizontal(self, vector, what="vector"):
        value = float(self.eta_v @ vector)
        if abs(value) > HORIZONTAL_TOLERANCE:
            raise NotHorizontalError(what, value)


def _local(structure, p):
    return structure.at(p)


def compatibility_residuals(structure, p):
    """
    The four structure invariants at a point: η(ξ) = 1, θ² = −Id + η⊗ξ, θξ = 0 with η∘θ = 0, and
    g(θX, θY) = g(X, Y) − η(X)η(Y)
    """
    local = _local(structure, p)
    th, xi, eta, g = local.th, local.xi_v, local.eta_v, local.point.g
    n = len(xi)

    return {
        "eta_xi": abs(float(eta @ xi) - 1.0),
        "theta_squared": max_abs(th @ th + np.eye(n) - np.outer(xi, eta)),
        "theta_kernel": max(max_abs(th @ xi), max_abs(eta @ th)),
        "metric": max_abs(th.T @ g @ th - g + np.outer(eta, eta)),
    }


def check_compatibility(structure, points, tolerance=1e-10):
    report = ResidualReport("compatibility", tolerance)
    for p in points:
        residuals = compatibility_residuals(structure, p)
        report.add(max(residuals.values()))
    return report


def nijenhuis(structure, p, x, y):
    """
    N_θ(X, Y) = θ²[X, Y] + [θX, θY] − θ[θX, Y] − θ[X, θY], evaluated through brackets of the given extensions
    """
    local = _local(structure, p)
    point = local.point
    th = local.theta
    xg, yg = point.as_germ(x), point.as_germ(y)

    thx = contract("ab,b->a", th, xg)
    thy = contract("ab,b->a", th, yg)

    value = (
        contract("ab,bc,c->a", th, th, bracket(xg, yg))
        + bracket(thx, thy)
        - contract("ab,b->a", th, bracket(thx, yg))
        - contract("ab,b->a", th, bracket(xg, thy))
    )
    return value.value


def normality_residual(structure, p, x, y):
    """
    N_θ(X, Y) + 2dη(X, Y)ξ
    """
    local = _local(structure, p)
    d_eta = exterior_derivative_1form(structure.eta, local.point, x, y)
    return nijenhuis(structure, p, x, y) + 2.0 * d_eta * local.xi_v


def _coordinate_pairs(dim, ordered=False):
    basis = np.eye(dim)
    pairs = itertools.product(range(dim), repeat=2) if ordered else itertools.combinations(range(dim), 2)
    return [(basis[i], basis[j]) for i, j in pairs]


def normality_norm(structure, p):
    """
    Largest normality residual over coordinate argument pairs
    """
    local = _local(structure, p)
    return max(local.point.norm(normality_residual(structure, p, x, y)) for x, y in _coordinate_pairs(local.point.dim))


def prop1_residual(structure, p, x, y, xi_term=False):
    """
    (∇_Xθ)Y − (∇_{θX}θ)(θY) + η(Y)∇_{θX}ξ, which vanishes for all X, Y exactly when the structure is normal.

    With xi_term=True the extra term ⟨Y, ∇_{θX}ξ⟩ξ is added; that variant leaves (g(X, Y) − η(X)η(Y))ξ on every
    Sasakian structure.
    """
    local = _local(structure, p)
    th, xi, eta = local.th, local.xi_v, local.eta_v
    thx = th @ x
    nabla_thx_xi = local.nabla_xi_along(thx)

    value = local.nabla_theta_along(x) @ y - local.nabla_theta_along(thx) @ (th @ y) + (eta @ y) * nabla_thx_xi
    if xi_term:
        value = value + local.point.inner(y, nabla_thx_xi) * xi
    return value


def prop1_norm(structure, p, xi_term=False):
    local = _local(structure, p)
    pairs = _coordinate_pairs(local.point.dim, ordered=True)
    return max(local.point.norm(prop1_residual(structure, p, x, y, xi_term=xi_term)) for x, y in pairs)


def eqa2_residual(structure, p, y):
    """
    (∇_ξθ)(θY) − ⟨Y, ∇_ξξ⟩ξ − η(Y)∇_ξξ
    """
    local = _local(structure, p)
    xi = local.xi_v
    nabla_xi_xi = local.nabla_xi_along(xi)
    return (
        local.nabla_theta_along(xi) @ (local.th @ y)
        - local.point.inner(y, nabla_xi_xi) * xi
        - float(local.eta_v @ y) * nabla_xi_xi
    )


def eqa3_residual(structure, p, x):
    """
    ∇_Xξ + θ(∇_{θX}ξ)
    """
    local = _local(structure, p)
    return local.nabla_xi_along(x) + local.th @ local.nabla_xi_along(local.th @ x)


def eqa4_residual(structure, p):
    """
    θ(∇_ξξ)
    """
    local = _local(structure, p)
    return local.th @ local.nabla_xi_along(local.xi_v)


def consequence_norms(structure, p):
    local = _local(structure, p)
    basis = np.eye(local.point.dim)
    return {
        "eqa2": max(local.point.norm(eqa2_residual(structure, p, y)) for y in basis),
        "eqa3": max(local.point.norm(eqa3_residual(structure, p, x)) for x in basis),
        "eqa4": local.point.norm(eqa4_residual(structure, p)),
    }


def sasakian_residual(structure, p):
    """
    Largest component of (∇_Xθ)Y − g(X, Y)ξ + η(Y)X over coordinate vectors
    """
    local = _local(structure, p)
    g, xi, eta = local.point.g, local.xi_v, local.eta_v
    expected = np.einsum("cb,a->abc", g, xi) - np.einsum("b,ac->abc", eta, np.eye(len(xi)))
    return max_abs(local.nabla_theta.value - expected)


def corollary1_residual(structure, p, x, y):
    """
    (∇̄_{JX}J)(JY) − (∇̄_XJ)(Y) for horizontal X, Y, with ∇̄J = P(∇θ)P
    """
    local = _local(structure, p)
    local.check_horizontal(x, "X")
    local.check_horizontal(y, "Y")

    th, proj = local.th, local.P
    value = local.nabla_theta_along(th @ x) @ (th @ y) - local.nabla_theta_along(x) @ y
    return proj @ value


def corollary1_norm(structure, p, frame=None):
    local = _local(structure, p)
    horizontal = (frame or local.frame).horizontal
    return max(local.point.norm(corollary1_residual(structure, p, x, y)) for x in horizontal for y in horizontal)


# =====================================================================
# The lift to M×ℝ
# =====================================================================


def _embed(germ, shape, index):
    """
    Places the value axes of a germ on an n-chart at the given index of a larger array over the (n+1)-chart M×ℝ;
    derivative axes gain a zero t-direction
    """
    dim = germ.dim + 1
    coefficients = []
    for k, c in enumerate(germ.coefficients):
        out = np.zeros(tuple(shape) + (dim,) * k)
        out[tuple(index) + (slice(0, dim - 1),) * k] = c
        coefficients.append(out)
    return Germ(coefficients, dim)


class LiftedComplexStructure:
    """
    J̃(X + f∂t) = θX − fξ + η(X)∂t on M×ℝ, the last coordinate being t
    """

    def __init__(self, structure):
        self.structure = structure
        self.dim = structure.dim + 1

    def germ(self, p):
        local = _local(self.structure, p)
        n, m = self.structure.dim, self.dim
        head = slice(0, n)
        return (
            _embed(local.theta, (m, m), (head, head))
            - _embed(local.xi, (m, m), (head, n))
            + _embed(local.eta, (m, m), (n, head))
        )

    def square_residual(self, p):
        j = self.germ(p).value
        return max_abs(j @ j + np.eye(self.dim))


def lift_nijenhuis(structure, p, a, b):
    """
    N_J̃(A, B) = [J̃A, J̃B] − J̃[J̃A, B] − J̃[A, J̃B] − [A, B] for vectors A, B of M×ℝ, extended with constant components
    """
    lift = LiftedComplexStructure(structure)
    local = _local(structure, p)
    j = lift.germ(local.point)
    ag = Germ.constant(a, lift.dim, j.order)
    bg = Germ.constant(b, lift.dim, j.order)

    ja = contract("ab,b->a", j, ag)
    jb = contract("ab,b->a", j, bg)
    value = (
        bracket(ja, jb)
        - contract("ab,b->a", j, bracket(ja, bg))
        - contract("ab,b->a", j, bracket(ag, jb))
        - bracket(ag, bg)
    )
    return value.value


def lift_norm(structure, p):
    dim = structure.dim + 1
    return max(max_abs(lift_nijenhuis(structure, p, a, b)) for a, b in _coordinate_pairs(dim))


def normality_routes(structure, p):
    """
    The three normality residual norms at a point
    """
    return {
        "nijenhuis": normality_norm(structure, p),
        "prop1": prop1_norm(structure, p),
        "lift": lift_norm(structure, p),
    }


# =====================================================================
# Killing and geodesic properties of ξ
# =====================================================================


def killing_residual(structure, p, x, y):
    """
    g(∇_Xξ, Y) + g(∇_Yξ, X)
    """
    local = _local(structure, p)
    return local.point.inner(local.nabla_xi_along(x), y) + local.point.inner(local.nabla_xi_along(y), x)


def killing_norms(structure, p):
    """
    Symmetrized ∇ξ, |∇_ξξ| and |∇_ξθ|
    """
    local = _local(structure, p)
    lowered = local.point.g @ local.nabla_xi.value
    return {
        "killing": max_abs(lowered + lowered.T),
        "geodesic": local.point.norm(local.nabla_xi_along(local.xi_v)),
        "theta_invariant": endomorphism_norm(local.point, local.nabla_theta_along(local.xi_v)),
    }


def killing_bracket_residual(structure, p, x, y):
    """
    g([X̃, Ỹ], ξ) + 2g(Y, ∇_Xξ) for horizontal X, Y, extended as the horizontal fields X̃ = PX, Ỹ = PY
    """
    local = _local(structure, p)
    local.check_horizontal(x, "X")
    local.check_horizontal(y, "Y")

    xt = contract("ab,b->a", local.projection, x)
    yt = contract("ab,b->a", local.projection, y)
    lie = bracket(xt, yt).value
    return local.point.inner(lie, local.xi_v) + 2.0 * local.point.inner(y, local.nabla_xi_along(x))


def killing_bracket_norm(structure, p):
    local = _local(structure, p)
    horizontal = local.frame.horizontal
    return max(abs(killing_bracket_residual(structure, p, x, y)) for x in horizontal for y in horizontal)


def ricci_killing_residual(structure, p):
    """
    ∇*∇ξ − Ric(ξ), which vanishes for Killing ξ
    """
    local = _local(structure, p)
    point = local.point
    ric_xi = point.ginv @ ricci(point.chart, point) @ local.xi_v
    return rough_laplacian(structure.xi, point) - ric_xi
