"""
Charts, metrics and tensor calculus on a single coordinate chart.

Every field is evaluated at a point as a :class:`Germ`, a truncated multivariate Taylor expansion of its components.
Germs are produced from expression jets by seeding all multisets of coordinate directions and polarizing, so
derivatives are exact to rounding. Index conventions:

 * Γ[k, i, j] = Γ^k_ij, so ∇_{∂i}∂j = Γ^k_ij ∂k
 * connection arrays conn[a, i, b] are the matrices of ∇_{∂i} acting on a frame
 * Rm[l, k, i, j] is the l-th component of R(∂i, ∂j)∂k with R(X, Y) = ∇_X∇_Y − ∇_Y∇_X − ∇_[X,Y]
 * derivative axes are appended after value axes, the innermost derivative first
"""

import functools
import itertools
import logging
import math
from functools import cached_property

import numpy as np

from .dsl import Jet, parse
from .exceptions import (
    DegenerateInputError,
    DegenerateMetricError,
    ExpressionDomainError,
    JetOrderError,
    StructureError,
)

logger = logging.getLogger(__name__)

DEFAULT_ORDER = 3
DERIVATIVE_LETTERS = "XYZ"
INDEX_LETTERS = "abcdefgh"


class Germ:
    """
    Truncated Taylor expansion of a tensor-valued function at a point. coefficients[k] has shape value_shape + (dim,)*k
    and holds the symmetric k-th partial derivatives.
    """

    def __init__(self, coefficients, dim):
        self.coefficients = [np.asarray(c, dtype=float) for c in coefficients]
        self.dim = dim

    @classmethod
    def constant(cls, value, dim, order):
        value = np.asarray(value, dtype=float)
        return cls([value] + [np.zeros(value.shape + (dim,) * k) for k in range(1, order + 1)], dim)

    @classmethod
    def linear(cls, value, gradient, order):
        """
        Creates the germ of a field with the given value and first derivatives, gradient[..., i] = ∂_i
        """
        value = np.asarray(value, dtype=float)
        dim = np.shape(gradient)[-1]
        germ = cls.constant(value, dim, order)
        if order >= 1:
            germ.coefficients[1] = np.asarray(gradient, dtype=float)
        return germ

    @property
    def order(self):
        return len(self.coefficients) - 1

    @property
    def value(self):
        return self.coefficients[0]

    @property
    def shape(self):
        return self.value.shape

    def truncate(self, order):
        return Germ(self.coefficients[: order + 1], self.dim)

    def d(self):
        """
        Returns the germ of the partial derivatives, with the derivative index appended to the value axes
        """
        if self.order < 1:
            raise JetOrderError(1, self.order, "Differentiation")
        return Germ(self.coefficients[1:], self.dim)

    def map(self, spec):
        """
        Applies a linear index operation to the value axes, e.g. "ij->ji"
        """
        source, target = spec.split("->")
        return Germ([np.einsum("%s...->%s..." % (source, target), c) for c in self.coefficients], self.dim)

    def directional(self, vector):
        """
        Derivative of the value along the given vector
        """
        return np.einsum("...i,i->...", self.coefficients[1], vector)

    def inverse(self):
        try:
            b0 = np.linalg.inv(self.value)
        except np.linalg.LinAlgError:
            raise DegenerateInputError("Cannot invert a singular matrix field")

        result = Germ.constant(b0, self.dim, self.order)
        for k in range(1, self.order + 1):
            product = contract("ab,bc->ac", self, result)
            result.coefficients[k] = -np.einsum("ab,bc...->ac...", b0, product.coefficients[k])
        return result

    def __add__(self, other):
        if isinstance(other, Germ):
            order = min(self.order, other.order)
            return Germ([a + b for a, b in zip(self.coefficients[: order + 1], other.coefficients)], self.dim)
        return Germ([self.value + other] + self.coefficients[1:], self.dim)

    __radd__ = __add__

    def __neg__(self):
        return Germ([-c for c in self.coefficients], self.dim)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        return Germ([scalar * c for c in self.coefficients], self.dim)

    __rmul__ = __mul__

    def __repr__(self):
        return "Germ(shape=%s, order=%d)" % (self.shape, self.order)


def contract(spec, *operands):
    """
    Einstein summation over germs and constant arrays, applying the Leibniz rule to every derivative order. The
    result has the smallest order among the germ operands.
    """
    inputs, output = spec.split("->")
    subscripts = inputs.split(",")
    germs = [i for i, op in enumerate(operands) if isinstance(op, Germ)]
    if not germs:
        raise ValueError("contract needs at least one germ operand")

    dim = operands[germs[0]].dim
    order = min(operands[i].order for i in germs)
    optimize = len(operands) > 2

    coefficients = []
    for k in range(order + 1):
        letters = DERIVATIVE_LETTERS[:k]
        total = None

        for assignment in itertools.product(germs, repeat=k):
            terms, arrays = [], []
            for index, (subscript, op) in enumerate(zip(subscripts, operands)):
                if isinstance(op, Germ):
                    slots = "".join(letters[j] for j in range(k) if assignment[j] == index)
                    arrays.append(op.coefficients[len(slots)])
                    terms.append(subscript + slots)
                else:
                    arrays.append(np.asarray(op, dtype=float))
                    terms.append(subscript)

            term = np.einsum("%s->%s" % (",".join(terms), output + letters), *arrays, optimize=optimize)
            total = term if total is None else total + term

        coefficients.append(total)

    return Germ(coefficients, dim)


def differentiate(tensor, kinds, connections):
    """
    Covariant derivative of a tensor germ. kinds has one "u" (upper) or "d" (lower) per value axis and connections is
    one connection germ conn[a, i, b], or a list with one per axis. The derivative index is appended.
    """
    if isinstance(connections, Germ):
        connections = [connections] * len(kinds)

    letters = INDEX_LETTERS[: len(kinds)]
    result = tensor.d()

    for q, (kind, conn) in enumerate(zip(kinds, connections)):
        swapped = letters[:q] + "y" + letters[q + 1 :]
        if kind == "u":
            result = result + contract("%szy,%s->%sz" % (letters[q], swapped, letters), conn, tensor)
        else:
            result = result - contract("yz%s,%s->%sz" % (letters[q], swapped, letters), conn, tensor)

    return result


def connection_curvature(conn):
    """
    Curvature of a connection given as conn[a, i, b] = (ω_i)^a_b. Returns R[a, b, i, j], the matrix of R(∂i, ∂j).
    """
    dconn = conn.d()
    return (
        dconn.map("ajbi->abij")
        - dconn.map("aibj->abij")
        + contract("aim,mjb->abij", conn, conn)
        - contract("ajm,mib->abij", conn, conn)
    )


def bracket(x, y):
    """
    Lie bracket of two vector field germs
    """
    return contract("i,ki->k", x, y.d()) - contract("i,ki->k", y, x.d())


@functools.lru_cache(maxsize=None)
def _seeding(dim, order):
    """
    Seeding directions (every multiset of basis vectors up to the given size) and, per derivative order, the
    polarization matrix turning directional derivatives into partial derivatives.
    """
    multisets = [m for k in range(1, order + 1) for m in itertools.combinations_with_replacement(range(dim), k)]
    if not multisets:
        return np.zeros((1, dim)), [None]

    index = {m: i for i, m in enumerate(multisets)}
    directions = np.array([np.bincount(m, minlength=dim) for m in multisets], dtype=float)
    directions.setflags(write=False)

    weights = [None]
    for k in range(1, order + 1):
        w = np.zeros((dim**k, len(multisets)))
        for flat, slots in enumerate(itertools.product(range(dim), repeat=k)):
            for size in range(1, k + 1):
                for subset in itertools.combinations(range(k), size):
                    multiset = tuple(sorted(slots[j] for j in subset))
                    w[flat, index[multiset]] += (-1) ** (k - size) / math.factorial(k)
        w.setflags(write=False)
        weights.append(w)

    return directions, weights


def polarize(raw, dim, order, shape):
    """
    Turns raw directional jet coefficients, shape (order + 1, directions, components), into a germ
    """
    _, weights = _seeding(dim, order)
    coefficients = [raw[0, 0].reshape(shape)]
    for k in range(1, order + 1):
        partials = weights[k] @ raw[k]
        coefficients.append(partials.T.reshape(tuple(shape) + (dim,) * k))
    return Germ(coefficients, dim)


class ChartManifold:
    """
    A coordinate box with a Riemannian metric given by expressions
    """

    def __init__(self, dim, metric, domain=None, periodic=(), variables=None, label=None):
        if dim < 1:
            raise StructureError("Chart dimension must be positive")

        self.dim = dim
        self.variables = tuple(variables) if variables else tuple("x%d" % (i + 1) for i in range(dim))
        if len(self.variables) != dim:
            raise StructureError("Chart has %d variables but dimension %d" % (len(self.variables), dim))

        try:
            self.domain = np.array(domain if domain is not None else [(-1.0, 1.0)] * dim, dtype=float)
        except (TypeError, ValueError):
            raise StructureError("Domain must be %d intervals (lo, hi) with lo < hi" % dim)
        if self.domain.shape != (dim, 2) or np.any(self.domain[:, 0] >= self.domain[:, 1]):
            raise StructureError("Domain must be %d intervals (lo, hi) with lo < hi" % dim)

        self.periodic = tuple(sorted(periodic))
        self.label = label or "chart"
        self.metric = TensorField(self, "dd", metric, label="g")

    def parse(self, source):
        return parse(source, self.variables)

    def wrap(self, coords):
        coords = np.array(coords, dtype=float)
        for axis in self.periodic:
            lo, hi = self.domain[axis]
            coords[axis] = lo + np.mod(coords[axis] - lo, hi - lo)
        return coords

    def contains(self, coords, margin=0.0):
        coords = self.wrap(coords)
        for axis, (lo, hi) in enumerate(self.domain):
            if axis in self.periodic:
                continue
            if not (lo + margin < coords[axis] < hi - margin):
                return False
        return True

    def at(self, coords, order=DEFAULT_ORDER):
        return Point(self, coords, order)

    def coordinate_jets(self, coords, order):
        directions, _ = _seeding(self.dim, order)
        return {
            name: Jet.variable(c, directions[:, i], order) for i, (name, c) in enumerate(zip(self.variables, coords))
        }

    def __repr__(self):
        return "ChartManifold(%s, dim=%d)" % (self.label, self.dim)


class Point:
    """
    A point of a chart together with the jet order used for everything evaluated there. Germs of fields and of the
    Levi-Civita quantities are cached per point.
    """

    def __init__(self, chart, coords, order=DEFAULT_ORDER):
        coords = np.asarray(coords, dtype=float)
        if coords.shape != (chart.dim,):
            raise StructureError("Point has %d coordinates but chart dimension is %d" % (coords.size, chart.dim))
        if not 0 <= order <= 3:
            raise JetOrderError(order, 3, "Point evaluation")

        self.chart = chart
        self.coords = chart.wrap(coords)
        self.order = order
        self._germs = {}
        self._cache = {}

    @property
    def dim(self):
        return self.chart.dim

    @cached_property
    def jets(self):
        return self.chart.coordinate_jets(self.coords, self.order)

    def germ(self, field):
        if field not in self._germs:
            self._germs[field] = field.evaluate_germ(self)
        return self._germs[field]

    def cached(self, key, factory):
        if key not in self._cache:
            self._cache[key] = factory()
        return self._cache[key]

    def as_germ(self, obj):
        if isinstance(obj, Germ):
            return obj
        if isinstance(obj, TensorField):
            return self.germ(obj)
        return Germ.constant(obj, self.dim, self.order)

    @cached_property
    def metric(self):
        germ = self.germ(self.chart.metric)
        g = germ.value
        if np.max(np.abs(g - g.T)) > 1e-12:
            raise DegenerateMetricError(self.coords, "metric is not symmetric")
        try:
            np.linalg.cholesky(g)
        except np.linalg.LinAlgError:
            raise DegenerateMetricError(self.coords)
        return germ

    @cached_property
    def metric_inverse(self):
        return self.metric.inverse()

    @property
    def g(self):
        return self.metric.value

    @property
    def ginv(self):
        return self.metric_inverse.value

    @cached_property
    def christoffel(self):
        if self.order < 1:
            raise JetOrderError(1, self.order, "Christoffel symbols")

        dg = self.metric.d()
        s = dg.map("jli->lij") + dg.map("ilj->lij") - dg.map("ijl->lij")
        return 0.5 * contract("kl,lij->kij", self.metric_inverse, s)

    @cached_property
    def riemann(self):
        if self.order < 2:
            raise JetOrderError(2, self.order, "Riemann tensor")
        return connection_curvature(self.christoffel)

    def nabla(self, field):
        """
        Germ of the Levi-Civita covariant derivative of a field
        """
        return self.cached(("nabla", field), lambda: differentiate(self.germ(field), field.kinds, self.christoffel))

    def nabla2(self, field):
        return self.cached(
            ("nabla2", field), lambda: differentiate(self.nabla(field), field.kinds + "d", self.christoffel)
        )

    def inner(self, u, v):
        return float(np.einsum("i,ij,j->", u, self.g, v))

    def norm(self, v):
        return math.sqrt(max(self.inner(v, v), 0.0))

    def lower(self, v):
        return self.g @ v

    def raise_index(self, form):
        return self.ginv @ form

    def __repr__(self):
        return "Point(%s)" % ", ".join("%.6g" % c for c in self.coords)


class TensorField:
    """
    A tensor field over a chart, defined either by component expressions or by an evaluator returning a germ. kinds
    has one "u" per contravariant and one "d" per covariant index, in axis order.
    """

    def __init__(self, chart, kinds, components=None, evaluator=None, label=None):
        if set(kinds) - {"u", "d"}:
            raise StructureError("Index kinds must be 'u' or 'd', got '%s'" % kinds)
        if (components is None) == (evaluator is None):
            raise StructureError("A tensor field needs either components or an evaluator")

        self.chart = chart
        self.kinds = kinds
        self.label = label or "field"
        self.evaluator = evaluator
        self.expressions = None

        if components is not None:
            if kinds:
                array = np.array(components, dtype=object)
            else:
                array = np.empty((), dtype=object)
                array[()] = components
            expected = (chart.dim,) * len(kinds)
            if array.shape != expected:
                raise StructureError(
                    "%s has %d components but a (%d,%d) field on a %d-dimensional chart needs %d"
                    % (self.label, array.size, *self.valence, chart.dim, chart.dim ** len(kinds))
                )
            self.expressions = [parse(c, chart.variables) for c in array.flat]

    @classmethod
    def constant(cls, chart, kinds, value, label=None):
        value = np.asarray(value, dtype=float)
        return cls(chart, kinds, evaluator=lambda p: Germ.constant(value, chart.dim, p.order), label=label)

    @property
    def valence(self):
        return self.kinds.count("u"), self.kinds.count("d")

    @property
    def shape(self):
        return (self.chart.dim,) * len(self.kinds)

    def evaluate_germ(self, point):
        if self.evaluator is not None:
            return self.evaluator(point)

        jets = point.jets
        directions, _ = _seeding(point.dim, point.order)
        raw = np.zeros((point.order + 1, directions.shape[0], len(self.expressions)))

        for c, expr in enumerate(self.expressions):
            if expr.is_constant():
                raw[0, :, c] = expr.evaluate({})
                continue
            try:
                jet = expr.evaluate(jets)
            except ExpressionDomainError as ex:
                raise ExpressionDomainError(
                    "%s (component %d of %s at %r)" % (ex.message, c, self.label, point), ex.expression
                )
            raw[:, :, c] = jet.coefficients

        return polarize(raw, point.dim, point.order, self.shape)

    def at(self, point):
        return point.germ(self).value

    def __repr__(self):
        return "TensorField(%s, %s)" % (self.label, self.kinds)


class Frame:
    """
    Vectors at a point, stored as rows
    """

    def __init__(self, point, vectors):
        self.point = point
        self.vectors = np.asarray(vectors, dtype=float)

    @property
    def horizontal(self):
        return self.vectors[:-1]

    @property
    def xi(self):
        return self.vectors[-1]

    def gram(self):
        return self.vectors @ self.point.g @ self.vectors.T

    def orthonormality_residual(self):
        return float(np.max(np.abs(self.gram() - np.eye(len(self.vectors)))))

    def __iter__(self):
        return iter(self.vectors)

    def __len__(self):
        return len(self.vectors)


# =====================================================================
# Operations at a point
# =====================================================================


def _point(chart, p):
    return p if isinstance(p, Point) else chart.at(p)


def christoffel(chart, p):
    return _point(chart, p).christoffel.value


def riemann_tensor(chart, p):
    return _point(chart, p).riemann.value


def riemann(chart, p, x, y, z):
    """
    R(X, Y)Z at the given point
    """
    return np.einsum("lkij,i,j,k->l", riemann_tensor(chart, p), x, y, z)


def lowered_riemann(p):
    """
    Rlow[h, k, i, j] = g(R(∂i, ∂j)∂k, ∂h)
    """
    return np.einsum("hl,lkij->hkij", p.g, p.riemann.value)


def sectional_curvature(chart, p, x, y):
    p = _point(chart, p)
    area = p.inner(x, x) * p.inner(y, y) - p.inner(x, y) ** 2
    if area < 1e-14:
        raise DegenerateInputError("Sectional curvature needs two independent vectors")
    return p.inner(riemann(chart, p, x, y, y), x) / area


def ricci(chart, p):
    """
    Ric[j, k] = Ric(∂j, ∂k), the trace of X -> R(X, ∂j)∂k
    """
    return np.einsum("akaj->jk", riemann_tensor(chart, p))


def covariant_derivative(field, p):
    """
    ∇T at the point as an array with the derivative index last
    """
    return _point(field.chart, p).nabla(field).value


def second_covariant_derivative(field, p, x=None, y=None):
    """
    ∇²_{X,Y}T = ∇_X(∇T)(Y); without vectors returns the full array whose last axis is the outer derivative
    """
    value = _point(field.chart, p).nabla2(field).value
    if x is None:
        return value
    return np.einsum("...cd,c,d->...", value, y, x)


def rough_laplacian(field, p, frame=None):
    """
    ∇*∇T = −Σ ∇²_{E_i,E_i}T, as a metric trace or over the given orthonormal frame
    """
    p = _point(field.chart, p)
    value = p.nabla2(field).value
    if frame is None:
        return -np.einsum("...cd,cd->...", value, p.ginv)
    return -sum(np.einsum("...cd,c,d->...", value, e, e) for e in frame)


def lie_bracket(x, y, p):
    return bracket(p.as_germ(x), p.as_germ(y)).value


def torsion_residual(x, y, p):
    """
    ∇_X Y − ∇_Y X − [X, Y] for vector fields X, Y
    """
    xg, yg = p.as_germ(x), p.as_germ(y)
    nabla_xy = contract("i,ki->k", xg, differentiate(yg, "u", p.christoffel))
    nabla_yx = contract("i,ki->k", yg, differentiate(xg, "u", p.christoffel))
    return (nabla_xy - nabla_yx - bracket(xg, yg)).value


def exterior_derivative_1form(eta, p, x, y):
    """
    dη(X, Y) = ½(X(η(Y)) − Y(η(X)) − η([X, Y])) for field extensions of X and Y
    """
    eg, xg, yg = p.as_germ(eta), p.as_germ(x), p.as_germ(y)
    eta_y = contract("a,a->", eg, yg)
    eta_x = contract("a,a->", eg, xg)
    value = (
        contract("i,i->", xg, eta_y.d()) - contract("i,i->", yg, eta_x.d()) - contract("a,a->", eg, bracket(xg, yg))
    )
    return 0.5 * float(value.value)


def exterior_derivative_matrix(eta, p):
    """
    dη(∂i, ∂j) = ½(∂_i η_j − ∂_j η_i)
    """
    d = p.as_germ(eta).d().value
    return 0.5 * (d.T - d)


def first_bianchi_residual(p):
    rm = p.riemann.value
    return float(np.max(np.abs(rm + np.einsum("lijk->lkij", rm) + np.einsum("ljki->lkij", rm))))


def second_bianchi_residual(p):
    """
    Cyclic sum of (∇_m R)(∂i, ∂j), needs jet order 3
    """
    if p.order < 3:
        raise JetOrderError(3, p.order, "Second Bianchi identity")

    nabla_rm = p.cached("nabla_riemann", lambda: differentiate(p.riemann, "uddd", p.christoffel)).value
    cyclic = nabla_rm + np.einsum("lkjmi->lkijm", nabla_rm) + np.einsum("lkmij->lkijm", nabla_rm)
    return float(np.max(np.abs(cyclic)))


def curvature_antisymmetry_residuals(p):
    rm = p.riemann.value
    low = lowered_riemann(p)
    return (
        float(np.max(np.abs(rm + np.einsum("lkji->lkij", rm)))),
        float(np.max(np.abs(low + np.einsum("khij->hkij", low)))),
    )


def metricity_residual(p):
    return float(np.max(np.abs(covariant_derivative(p.chart.metric, p))))


def vector_norm(p, v):
    return p.norm(v)


def endomorphism_norm(p, a):
    """
    Frobenius norm sqrt(Σ_j |A E_j|²) over a g-orthonormal frame
    """
    return math.sqrt(max(float(np.einsum("ab,ac,cd,db->", a, p.g, a, p.ginv)), 0.0))


def _orthonormalize(p, seeds, candidates, tolerance=1e-8):
    vectors = list(seeds)
    for candidate in candidates:
        if len(vectors) == p.dim:
            break
        v = np.array(candidate, dtype=float)
        for u in vectors:
            v = v - p.inner(v, u) * u
        length = p.norm(v)
        if length < tolerance:
            continue
        vectors.append(v / length)

    if len(vectors) < p.dim:
        raise DegenerateInputError("Could not complete an orthonormal frame at %r" % p)
    return vectors


def orthonormal_frame(p):
    """
    Deterministic Gram-Schmidt over the coordinate basis
    """
    return Frame(p, _orthonormalize(p, [], np.eye(p.dim)))


def gram_schmidt_adapted(chart, p, xi_value):
    """
    Orthonormal frame {F_1, ..., F_2n, ξ}: ξ is adjoined first, the coordinate basis is orthonormalized against it
    and near-collinear candidates are skipped in basis order, then ξ is moved last
    """
    p = _point(chart, p)
    xi_value = np.asarray(xi_value, dtype=float)
    if abs(p.norm(xi_value) - 1.0) > 1e-6:
        raise DegenerateInputError("ξ must have unit length, got |ξ| = %.6g" % p.norm(xi_value))

    vectors = _orthonormalize(p, [xi_value], np.eye(p.dim))
    return Frame(p, vectors[1:] + vectors[:1])


def random_adapted_frame(chart, p, xi_value, rng):
    """
    An adapted frame whose horizontal part is rotated by a random orthogonal matrix
    """
    frame = gram_schmidt_adapted(chart, p, xi_value)
    n = len(frame) - 1
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    return Frame(frame.point, np.vstack([q @ frame.horizontal, frame.xi]))
