import codecs
import json
import logging
import math
import unittest
from unittest.mock import patch

import numpy as np

from .dsl import BinaryOp, Call, Jet, Negate, Number, ScalarExpr, Variable, parse
from .exceptions import (
    AcmsException,
    ArityError,
    DegenerateInputError,
    DegenerateMetricError,
    ExpressionDomainError,
    ExpressionSyntaxError,
    JetOrderError,
    ManifestError,
    StructureError,
    UnknownIdentifierError,
)
from .geometry import (
    ChartManifold,
    Germ,
    TensorField,
    christoffel,
    contract,
    curvature_antisymmetry_residuals,
    endomorphism_norm,
    exterior_derivative_1form,
    first_bianchi_residual,
    gram_schmidt_adapted,
    lie_bracket,
    metricity_residual,
    orthonormal_frame,
    random_adapted_frame,
    ricci,
    riemann_tensor,
    rough_laplacian,
    second_bianchi_residual,
    sectional_curvature,
    torsion_residual,
)
from .reports import CheckSummary, Environment, EquivalenceReport, Report, ResidualReport
from .serialization import (
    DictField,
    FloatField,
    IntegerField,
    ListField,
    ObjectField,
    ObjectListField,
    SerializableObject,
    SimpleField,
    StringField,
)
from .utils import FAIL, INCONCLUSIVE, PASS, classify, consistent, halton, radical_inverse, sample_points


class AcmsTest(unittest.TestCase):
    """
    Base class for test cases
    """

    def read_manifest(self, filename):
        """
        Loads a manifest from the test files
        """
        handle = codecs.open("test_files/manifests/%s.json" % filename, "r", "utf-8")
        contents = json.loads(handle.read())
        handle.close()
        return contents

    def manifest_path(self, filename):
        return "test_files/manifests/%s.json" % filename

    def assertRaisesWithMessage(self, exc_class, message, callable_obj, *args, **kwargs):
        with self.assertRaises(AcmsException) as context:
            callable_obj(*args, **kwargs)

        self.assertIsInstance(context.exception, exc_class)
        self.assertEqual(str(context.exception), message)

    def assertSmall(self, value, tolerance=1e-8, msg=None):
        """
        Asserts that a residual, vector or matrix is within tolerance of zero
        """
        largest = float(np.max(np.abs(np.asarray(value, dtype=float)))) if np.size(value) else 0.0
        self.assertLessEqual(largest, tolerance, msg or "residual %.3g exceeds %.1g" % (largest, tolerance))


def random_ast(rng, depth):
    """
    Random expression tree over x1 and x2 whose value stays in [-1, 1] on the unit square
    """
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.7:
            return Variable(str(rng.choice(["x1", "x2"])))
        return Number(int(rng.integers(1, 9)) / 8)

    a = random_ast(rng, depth - 1)
    kind = int(rng.integers(9))
    if kind == 0:
        return BinaryOp("*", a, random_ast(rng, depth - 1))
    elif kind == 1:
        return BinaryOp("/", BinaryOp(str(rng.choice(["+", "-"])), a, random_ast(rng, depth - 1)), Number(2.0))
    elif kind == 2:
        return BinaryOp("^", a, Number(2.0))
    elif kind == 3:
        return Negate(a)
    elif kind == 4:
        return Call(str(rng.choice(["sin", "cos"])), a)
    elif kind == 5:
        return BinaryOp("/", a, BinaryOp("+", Number(2.0), Call("cos", random_ast(rng, depth - 1))))
    elif kind == 6:
        return BinaryOp("/", Call("exp", Call("sin", a)), Number(3.0))
    elif kind == 7:
        return BinaryOp("/", Call("log", BinaryOp("+", Number(3.0), a)), Number(2.0))
    return BinaryOp("/", Call("sqrt", BinaryOp("+", Number(1.0), BinaryOp("^", a, Number(2.0)))), Number(2.0))


def evaluate_at(expr, points, directions=None):
    """
    Evaluates an expression at many points at once, as order 0 jets or as order 1 jets moving along directions
    """
    if directions is None:
        values = {name: Jet.constant(points[:, i], 0, points.shape[:1]) for i, name in enumerate(("x1", "x2"))}
    else:
        values = {name: Jet.variable(points[:, i], directions[:, i], 1) for i, name in enumerate(("x1", "x2"))}
    return expr.evaluate(values)


class ExpressionTest(AcmsTest):
    def test_evaluate(self):
        self.assertEqual(parse("1 + 2*x1").evaluate({"x1": 3}), 7.0)
        self.assertEqual(parse("x1^2").evaluate([3.0]), 9.0)
        self.assertEqual(parse("x2 - x1").evaluate([1.0, 5.0]), 4.0)

        # unary minus binds looser than ^ and ^ is right associative
        self.assertEqual(parse("-x1^2").evaluate({"x1": 2}), -4.0)
        self.assertAlmostEqual(parse("2^3^2").evaluate({}), 512.0, places=9)
        self.assertEqual(parse("2^-1").evaluate({}), 0.5)
        self.assertEqual(parse("(-2)^3").evaluate({}), -8.0)

        self.assertAlmostEqual(parse("sin(pi/2) + cos(0) + exp(0) + log(1)").evaluate({}), 3.0)
        self.assertAlmostEqual(parse("sqrt(4) * tan(0) + cosh(0) - sinh(0)").evaluate({}), 1.0)
        self.assertAlmostEqual(parse("1.5e1 / .5").evaluate({}), 30.0)

    def test_variables(self):
        expr = parse("x1*t + pi")
        self.assertEqual(expr.free_variables, {"x1", "t"})
        self.assertEqual(expr.variables, ("x1", "t"))
        self.assertFalse(expr.is_constant())
        self.assertTrue(parse("2*pi").is_constant())

        expr = parse("a*b", ["a", "b"])
        self.assertEqual(expr.evaluate([2.0, 3.0]), 6.0)

        self.assertRaisesWithMessage(
            ExpressionDomainError, "No value for x2 in sub-expression 'x1 + x2'", parse("x1 + x2").evaluate, {"x1": 1}
        )

    def test_pretty(self):
        self.assertEqual(parse("(x1 + x2)*x3").pretty(), "(x1 + x2) * x3")
        self.assertEqual(parse("(x1*x2)*x3").pretty(), "x1 * x2 * x3")
        self.assertEqual(parse("x1 - (x2 - x3)").pretty(), "x1 - (x2 - x3)")
        self.assertEqual(parse("-(x1+x2)").pretty(), "-(x1 + x2)")
        self.assertEqual(parse("(-x1)^2").pretty(), "(-x1)^2")
        self.assertEqual(parse("(x1^2)^3").pretty(), "(x1^2)^3")
        self.assertEqual(parse("x1^2^3").pretty(), "x1^2^3")
        self.assertEqual(parse("sin( x1 )").pretty(), "sin(x1)")
        self.assertEqual(parse("0.25").pretty(), "0.25")

        # pretty printing parses back to the same tree
        for source in ("1/(1 + x1^2 + x2^2)", "-x1*x2 - (x1 - x2)^-2", "exp(-t)*cos(x1)/2"):
            self.assertEqual(parse(parse(source).pretty()), parse(source))

    def test_parse_logging(self):
        with self.assertLogs("acms_harmonic.dsl", level="DEBUG") as logs:
            parse("x1+1")
        self.assertEqual(logs.output, ["DEBUG:acms_harmonic.dsl:parsed 'x1+1' as x1 + 1"])

        logger = logging.getLogger("acms_harmonic.dsl")
        level = logger.level
        logger.setLevel(logging.INFO)
        try:
            with patch.object(BinaryOp, "pretty") as pretty:
                parse("x1+1")
            pretty.assert_not_called()
        finally:
            logger.setLevel(level)

    def test_composition(self):
        expr = (parse("x1") + 1) * parse("x2")
        self.assertEqual(expr.pretty(), "(x1 + 1) * x2")
        self.assertEqual(expr.variables, ("x1", "x2"))
        self.assertEqual(expr.evaluate({"x1": 1, "x2": 3}), 6.0)

        self.assertEqual((1 / parse("t")).evaluate({"t": 4}), 0.25)
        self.assertEqual((parse("x1") ** 2).evaluate({"x1": -3}), 9.0)
        self.assertEqual((2 - parse("x1")).evaluate({"x1": 5}), -3.0)
        self.assertEqual((-parse("x1")).pretty(), "-x1")

        self.assertEqual(parse("x1+1"), parse("x1 + 1"))
        self.assertNotEqual(parse("x1+1"), parse("1 + x1"))
        self.assertIs(parse(expr), expr)
        self.assertEqual(parse(2.5).evaluate({}), 2.5)

    def test_syntax_errors(self):
        self.assertRaisesWithMessage(ExpressionSyntaxError, "Empty expression at offset 0 in ''", parse, "")
        self.assertRaisesWithMessage(
            ExpressionSyntaxError, "Unexpected end of input at offset 3 in '1 +'", parse, "1 +"
        )
        self.assertRaisesWithMessage(
            ExpressionSyntaxError, "Unexpected character '$' at offset 3 in 'x1 $ 2'", parse, "x1 $ 2"
        )
        self.assertRaisesWithMessage(
            ExpressionSyntaxError, "Expected ')' but found end of input at offset 7 in '(x1 + 2'", parse, "(x1 + 2"
        )
        self.assertRaisesWithMessage(ExpressionSyntaxError, "Unexpected ')' at offset 2 in 'x1)'", parse, "x1)")

        # offsets count bytes
        self.assertRaisesWithMessage(
            ExpressionSyntaxError, "Unexpected character 'é' at offset 5 in 'x1 + é'", parse, "x1 + é"
        )

        self.assertRaisesWithMessage(
            UnknownIdentifierError, "Unknown identifier 'foo' at offset 0 in 'foo + 1'", parse, "foo + 1"
        )
        self.assertRaisesWithMessage(
            UnknownIdentifierError, "Unknown identifier 'y' at offset 5 in 'x1 + y'", parse, "x1 + y"
        )
        self.assertRaisesWithMessage(
            UnknownIdentifierError, "Unknown identifier 'erf' at offset 0 in 'erf(x1)'", parse, "erf(x1)"
        )
        self.assertRaisesWithMessage(
            UnknownIdentifierError, "Unknown identifier 'x1' at offset 0 in 'x1'", parse, "x1", ["a"]
        )
        self.assertRaisesWithMessage(
            ArityError,
            "Function 'sin' takes 1 argument but 2 given at offset 0 in 'sin(x1, x2)'",
            parse,
            "sin(x1, x2)",
        )
        self.assertRaisesWithMessage(
            ArityError, "Function 'cos' takes 1 argument but 0 given at offset 0 in 'cos()'", parse, "cos()"
        )

    def test_domain_errors(self):
        self.assertRaisesWithMessage(
            ExpressionDomainError, "Division by zero in sub-expression '1 / x1'", parse("1/x1").evaluate, [0.0]
        )
        self.assertRaisesWithMessage(
            ExpressionDomainError,
            "Logarithm of a non-positive value in sub-expression 'log(x1)'",
            parse("log(x1)").evaluate,
            [-1.0],
        )
        self.assertRaisesWithMessage(
            ExpressionDomainError,
            "Square root of a non-positive value in sub-expression 'sqrt(x1)'",
            parse("sqrt(x1)").evaluate,
            [-1.0],
        )
        self.assertRaisesWithMessage(
            ExpressionDomainError,
            "Non-integer power of a non-positive base in sub-expression 'x1^0.5'",
            parse("x1^0.5").evaluate,
            [-1.0],
        )
        self.assertRaisesWithMessage(
            ExpressionDomainError, "Negative power of zero in sub-expression 'x1^-1'", parse("x1^-1").evaluate, [0.0]
        )

        # sqrt(0) has a value but no derivative
        self.assertEqual(parse("sqrt(x1)").evaluate([0.0]), 0.0)
        self.assertRaises(ExpressionDomainError, parse("sqrt(x1)").evaluate, [Jet.variable(0.0, 1.0, 1)])

    def test_jets(self):
        x = 0.7
        jet = parse("x1*sin(x1)").evaluate({"x1": Jet.variable(x, 1.0, 3)})
        expected = [
            x * math.sin(x),
            math.sin(x) + x * math.cos(x),
            2 * math.cos(x) - x * math.sin(x),
            -3 * math.sin(x) - x * math.cos(x),
        ]
        np.testing.assert_allclose(jet.coefficients, expected, rtol=1e-12)

        jet = parse("exp(2*x1)").evaluate({"x1": Jet.variable(0.0, 1.0, 3)})
        np.testing.assert_allclose(jet.coefficients, [1, 2, 4, 8])

        jet = parse("1/(1 + x1^2)").evaluate({"x1": Jet.variable(0.0, 1.0, 3)})
        np.testing.assert_allclose(jet.coefficients, [1, 0, -2, 0], atol=1e-14)

        jet = parse("x1^2.5").evaluate({"x1": Jet.variable(1.0, 1.0, 2)})
        np.testing.assert_allclose(jet.coefficients, [1, 2.5, 3.75])

        # batched directions, here two seeds at once
        jet = parse("x1*x2").evaluate({"x1": Jet.variable(2.0, [1.0, 0.0], 2), "x2": Jet.variable(3.0, [0.0, 1.0], 2)})
        np.testing.assert_allclose(jet.coefficients, [[6, 6], [3, 2], [0, 0]])

        jet = parse("x1^3").evaluate({"x1": Jet.variable(2.0, 1.0, 3)})
        np.testing.assert_allclose(jet.coefficients, [8, 12, 12, 6])
        self.assertEqual(jet.derivative(3), 6.0)

        self.assertRaises(JetOrderError, Jet, np.zeros(5))

    def test_jets_against_central_differences(self):
        rng = np.random.default_rng(7)
        h = 1e-5

        for n in range(1000):
            expr = ScalarExpr(random_ast(rng, int(rng.integers(1, 6))), ("x1", "x2"))
            points = rng.uniform(-1.0, 1.0, size=(4, 2))
            directions = rng.normal(size=(4, 2))
            directions /= np.linalg.norm(directions, axis=1)[:, None]

            jet = evaluate_at(expr, points, directions)
            forward = evaluate_at(expr, points + h * directions).value
            backward = evaluate_at(expr, points - h * directions).value
            central = (forward - backward) / (2 * h)

            scale = np.maximum(1.0, np.maximum(np.abs(jet.derivative(1)), np.abs(jet.value)))
            error = float(np.max(np.abs(jet.derivative(1) - central) / scale))
            self.assertLessEqual(error, 1e-6, "%s differs from central differences by %.3g" % (expr.pretty(), error))

    def test_pretty_round_trip(self):
        rng = np.random.default_rng(11)

        for n in range(100):
            expr = ScalarExpr(random_ast(rng, 5), ("x1", "x2"))
            reparsed = parse(expr.pretty(), ["x1", "x2"])
            self.assertEqual(reparsed, expr, expr.pretty())

            points = rng.uniform(-1.0, 1.0, size=(100, 2))
            np.testing.assert_array_equal(evaluate_at(reparsed, points).value, evaluate_at(expr, points).value)


class GermTest(AcmsTest):
    def test_contract(self):
        u = Germ.linear(2.0, [1.0, 0.0], 2)
        v = Germ.linear(3.0, [0.0, 1.0], 2)
        product = contract(",->", u, v)

        self.assertEqual(product.order, 2)
        self.assertEqual(float(product.value), 6.0)
        np.testing.assert_allclose(product.coefficients[1], [3.0, 2.0])
        np.testing.assert_allclose(product.coefficients[2], [[0.0, 1.0], [1.0, 0.0]])

        # the result takes the smallest order among germ operands
        self.assertEqual(contract(",->", u, v.truncate(1)).order, 1)
        self.assertRaises(ValueError, contract, "a->a", np.ones(2))

    def test_inverse(self):
        gradient = np.zeros((2, 2, 2))
        gradient[0, 0, 0] = 1.0
        germ = Germ.linear(np.diag([1.0, 2.0]), gradient, 1)
        inverse = germ.inverse()

        np.testing.assert_allclose(inverse.value, np.diag([1.0, 0.5]))
        self.assertEqual(inverse.coefficients[1][0, 0, 0], -1.0)
        self.assertSmall(inverse.coefficients[1][1, 1])

        self.assertRaises(DegenerateInputError, Germ.constant(np.zeros((2, 2)), 2, 1).inverse)
        self.assertRaises(JetOrderError, Germ.constant(1.0, 2, 0).d)

    def test_arithmetic(self):
        a = Germ.linear([1.0, 2.0], [[1.0, 0.0], [0.0, 1.0]], 1)
        b = Germ.constant([1.0, 1.0], 2, 2)

        np.testing.assert_allclose((a + b).value, [2.0, 3.0])
        self.assertEqual((a + b).order, 1)
        np.testing.assert_allclose((2.0 * a - b).value, [1.0, 3.0])
        np.testing.assert_allclose((-a).coefficients[1], -np.eye(2))
        matrix = Germ.constant([[1.0, 2.0], [3.0, 4.0]], 2, 1)
        np.testing.assert_allclose(matrix.map("ab->ba").value, [[1.0, 3.0], [2.0, 4.0]])
        np.testing.assert_allclose(a.directional([0.0, 3.0]), [0.0, 3.0])


class GeometryTest(AcmsTest):
    def setUp(self):
        self.flat = ChartManifold(3, [[1, 0, 0], [0, 1, 0], [0, 0, 1]], label="flat")
        self.sphere = ChartManifold(
            3, [["4/(1 + x1^2 + x2^2 + x3^2)^2" if i == j else 0 for j in range(3)] for i in range(3)], label="S3"
        )
        self.heis = ChartManifold(
            3, [["x2^2/4 + 1/4", 0, "-x2/4"], [0, "1/4", 0], ["-x2/4", 0, "1/4"]], label="heis"
        )

    def test_chart(self):
        self.assertEqual(self.flat.variables, ("x1", "x2", "x3"))
        self.assertTrue(self.flat.contains([0.5, 0.5, 0.5]))
        self.assertFalse(self.flat.contains([1.5, 0.0, 0.0]))
        self.assertFalse(self.flat.contains([0.9995, 0.0, 0.0], margin=1e-3))

        circle = ChartManifold(2, [[1, 0], [0, 1]], domain=[(-1, 1), (0, 2 * math.pi)], periodic=[1])
        np.testing.assert_allclose(circle.wrap([0.0, 2 * math.pi + 1.0]), [0.0, 1.0])
        self.assertTrue(circle.contains([0.0, 10.0]))

        self.assertRaisesWithMessage(
            StructureError,
            "g has 2 components but a (0,2) field on a 2-dimensional chart needs 4",
            ChartManifold,
            2,
            [[1, 0]],
        )
        self.assertRaisesWithMessage(
            StructureError,
            "Domain must be 2 intervals (lo, hi) with lo < hi",
            ChartManifold,
            2,
            [[1, 0], [0, 1]],
            [(1, 0), (0, 1)],
        )
        self.assertRaisesWithMessage(
            StructureError, "Point has 2 coordinates but chart dimension is 3", self.flat.at, [0.0, 0.0]
        )

    def test_degenerate_metric(self):
        chart = ChartManifold(2, [["x1", 0], [0, 1]])
        self.assertRaisesWithMessage(
            DegenerateMetricError,
            "Degenerate metric at (-0.5, 0): metric is not positive definite",
            lambda: chart.at([-0.5, 0.0]).metric,
        )

    def test_flat(self):
        p = self.flat.at([0.1, 0.2, 0.3])
        self.assertSmall(christoffel(self.flat, p), 0.0)
        self.assertSmall(riemann_tensor(self.flat, p), 0.0)
        self.assertSmall(ricci(self.flat, p), 0.0)

    def test_round_sphere(self):
        p = self.sphere.at([0.3, -0.2, 0.4])
        basis = np.eye(3)

        for i in range(3):
            for j in range(i + 1, 3):
                self.assertAlmostEqual(sectional_curvature(self.sphere, p, basis[i], basis[j]), 1.0, delta=1e-6)

        self.assertSmall(ricci(self.sphere, p) - 2.0 * p.g, 1e-6)
        self.assertSmall(first_bianchi_residual(p), 1e-10)
        self.assertSmall(second_bianchi_residual(p), 1e-8)
        self.assertSmall(curvature_antisymmetry_residuals(p), 1e-10)
        self.assertSmall(metricity_residual(p), 1e-10)

        self.assertRaises(DegenerateInputError, sectional_curvature, self.sphere, p, basis[0], 2 * basis[0])

    def test_metric_derivatives_against_central_differences(self):
        h = 1e-5

        def central(chart, coords, value):
            steps = h * np.eye(chart.dim)
            return np.stack(
                [(value(chart.at(coords + e)) - value(chart.at(coords - e))) / (2 * h) for e in steps], axis=-1
            )

        for chart, coords in ((self.sphere, [0.3, -0.2, 0.4]), (self.heis, [0.1, 0.7, -0.5])):
            coords = np.array(coords)
            metric = chart.at(coords).metric

            np.testing.assert_allclose(metric.d().value, central(chart, coords, lambda q: q.g), rtol=1e-6, atol=1e-9)
            np.testing.assert_allclose(
                metric.d().d().value,
                central(chart, coords, lambda q: q.metric.d().value),
                rtol=1e-6,
                atol=1e-9,
            )

    def test_stereographic_christoffel(self):
        sphere = ChartManifold(2, [["4/(1 + x1^2 + x2^2)^2", 0], [0, "4/(1 + x1^2 + x2^2)^2"]], label="S2")

        # g is conformally flat with factor exp(2φ), φ = log 2 - log(1 + r^2)
        x = np.array([0.5, 0.3])
        dphi = -2 * x / (1 + x @ x)
        delta = np.eye(2)
        expected = (
            np.einsum("ki,j->kij", delta, dphi)
            + np.einsum("kj,i->kij", delta, dphi)
            - np.einsum("ij,k->kij", delta, dphi)
        )
        self.assertAlmostEqual(expected[0, 0, 0], -1 / 1.34)
        self.assertAlmostEqual(expected[1, 0, 1], -1 / 1.34)
        self.assertAlmostEqual(expected[0, 1, 1], 1 / 1.34)
        np.testing.assert_allclose(christoffel(sphere, x), expected, rtol=1e-12, atol=1e-14)

        # the same symbols from central differences of the metric alone
        h = 1e-5
        dg = np.stack([(sphere.at(x + e).g - sphere.at(x - e).g) / (2 * h) for e in h * np.eye(2)], axis=-1)
        s = np.einsum("jli->lij", dg) + np.einsum("ilj->lij", dg) - np.einsum("ijl->lij", dg)
        by_differences = 0.5 * np.einsum("kl,lij->kij", sphere.at(x).ginv, s)
        np.testing.assert_allclose(christoffel(sphere, x), by_differences, rtol=1e-6, atol=1e-9)

        np.testing.assert_array_equal(christoffel(sphere, [0.0, 0.0]), np.zeros((2, 2, 2)))

    def test_heisenberg(self):
        for coords in ([0.1, 0.2, 0.3], [-0.7, 0.5, 0.0]):
            p = self.heis.at(coords)
            self.assertSmall(metricity_residual(p), 1e-10)
            self.assertSmall(first_bianchi_residual(p), 1e-10)
            self.assertSmall(second_bianchi_residual(p), 1e-8)

        self.assertRaises(JetOrderError, second_bianchi_residual, self.heis.at([0.0, 0.0, 0.0], order=2))

    def test_exterior_derivative(self):
        eta = TensorField(self.heis, "d", ["-x2/2", 0, "1/2"], label="η")
        p = self.heis.at([0.3, 0.4, 0.5])
        basis = np.eye(3)

        self.assertAlmostEqual(exterior_derivative_1form(eta, p, basis[0], basis[1]), 0.25)
        self.assertAlmostEqual(exterior_derivative_1form(eta, p, basis[1], basis[0]), -0.25)
        self.assertAlmostEqual(exterior_derivative_1form(eta, p, basis[0], basis[2]), 0.0)

    def test_brackets(self):
        p = self.heis.at([0.3, 0.4, 0.5])
        x = TensorField(self.heis, "u", [1, 0, "x2"])
        y = TensorField(self.heis, "u", [0, 1, 0])

        np.testing.assert_allclose(lie_bracket(x, y, p), [0.0, 0.0, -1.0])
        self.assertSmall(torsion_residual(x, y, p), 1e-12)

    def test_rough_laplacian(self):
        # the Hopf field on the round 3-sphere is an eigenfield of the rough Laplacian
        xi = TensorField(self.sphere, "u", ["-x2 - x1*x3", "x1 - x2*x3", "(x1^2 + x2^2 - x3^2 - 1)/2"])
        p = self.sphere.at([0.2, -0.1, 0.3])

        self.assertSmall(rough_laplacian(xi, p) - 2.0 * xi.at(p), 1e-8)
        frame = orthonormal_frame(p)
        self.assertSmall(rough_laplacian(xi, p, frame) - 2.0 * xi.at(p), 1e-8)

    def test_frames(self):
        p = self.heis.at([0.3, 0.4, 0.5])
        xi = np.array([0.0, 0.0, 2.0])

        frame = gram_schmidt_adapted(self.heis, p, xi)
        self.assertSmall(frame.orthonormality_residual(), 1e-12)
        np.testing.assert_allclose(frame.xi, xi)
        self.assertEqual(frame.horizontal.shape, (2, 3))

        rotated = random_adapted_frame(self.heis, p, xi, np.random.default_rng(42))
        self.assertSmall(rotated.orthonormality_residual(), 1e-12)
        np.testing.assert_allclose(rotated.xi, xi)

        # endomorphism norms do not depend on the frame
        a = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.4, 0.0]])
        by_frame = math.sqrt(sum(p.norm(a @ e) ** 2 for e in rotated))
        self.assertAlmostEqual(endomorphism_norm(p, a), by_frame)

        self.assertRaisesWithMessage(
            DegenerateInputError,
            "ξ must have unit length, got |ξ| = 0.5",
            gram_schmidt_adapted,
            self.heis,
            p,
            np.array([0.0, 0.0, 1.0]),
        )


class UtilsTest(AcmsTest):
    def test_halton(self):
        self.assertEqual(radical_inverse(1, 2), 0.5)
        self.assertEqual(radical_inverse(3, 2), 0.75)
        self.assertAlmostEqual(radical_inverse(1, 3), 1.0 / 3.0)
        self.assertEqual(halton(4, 3).shape, (4, 3))
        self.assertRaises(ValueError, halton, 1, 12)

    def test_sample_points(self):
        domain = [(-1.0, 1.0), (0.0, 2.0 * math.pi)]
        points = sample_points(domain, 50, seed=42)

        self.assertEqual(points.shape, (50, 2))
        np.testing.assert_array_equal(points, sample_points(domain, 50, seed=42))
        self.assertFalse(np.array_equal(points, sample_points(domain, 50, seed=7)))

        self.assertTrue(np.all(points[:, 0] > -1.0 + 1e-3))
        self.assertTrue(np.all(points[:, 0] < 1.0 - 1e-3))
        self.assertTrue(np.all(points[:, 1] >= 0.0))

    def test_classify(self):
        self.assertEqual(classify(1e-9), PASS)
        self.assertEqual(classify(1e-5), INCONCLUSIVE)
        self.assertEqual(classify(1e-2), FAIL)

        self.assertTrue(consistent(PASS, PASS, INCONCLUSIVE))
        self.assertTrue(consistent(FAIL, INCONCLUSIVE))
        self.assertFalse(consistent(PASS, INCONCLUSIVE, FAIL))


class ChildType(SerializableObject):
    zed = SimpleField()


class ParentType(SerializableObject):
    foo = StringField(required=True)
    bar = IntegerField(default=3)
    baz = FloatField(src="ratio")
    gem = ObjectField(item_class=ChildType)
    hum = ObjectListField(item_class=ChildType)


class FieldsTest(AcmsTest):
    def test_integer(self):
        field = IntegerField()
        self.assertEqual(field.serialize(1), 1)
        self.assertEqual(field.deserialize(2), 2)
        self.assertEqual(field.deserialize(None), None)

        self.assertRaises(ManifestError, field.deserialize, 1.5)
        self.assertRaises(ManifestError, field.deserialize, "")
        self.assertRaises(ManifestError, field.deserialize, True)

    def test_float(self):
        field = FloatField()
        self.assertEqual(field.deserialize(2), 2.0)
        self.assertIsInstance(field.deserialize(2), float)
        self.assertEqual(field.serialize(1e-6), 1e-6)

        self.assertRaises(ManifestError, field.deserialize, "1e-6")
        self.assertRaises(ManifestError, field.deserialize, False)

    def test_string(self):
        field = StringField()
        self.assertEqual(field.deserialize("heis-3"), "heis-3")
        self.assertRaises(ManifestError, field.deserialize, 3)

    def test_list_and_dict(self):
        self.assertEqual(ListField().deserialize([1, 2]), [1, 2])
        self.assertRaises(ManifestError, ListField().deserialize, "x1")
        self.assertRaises(ManifestError, ListField().deserialize, {"a": 1})

        self.assertEqual(DictField().deserialize({"base": "flat-c1"}), {"base": "flat-c1"})
        self.assertRaises(ManifestError, DictField().deserialize, [])

    def test_object_list(self):
        field = ObjectListField(item_class=ChildType)
        self.assertEqual(
            field.serialize([ChildType.create(zed="a"), ChildType.create(zed=2)]),
            [{"zed": "a"}, {"zed": 2}],
        )
        self.assertRaises(ManifestError, field.serialize, "Not a list")

        obj_list = field.deserialize([{"zed": "a"}, {"zed": 2}])
        self.assertEqual(len(obj_list), 2)
        self.assertEqual(obj_list[1].zed, 2)

        self.assertRaises(ManifestError, field.deserialize, None)


class SerializableObjectTest(AcmsTest):
    def test_create(self):
        obj = ParentType.create(foo="a")
        self.assertEqual(obj.foo, "a")
        self.assertEqual(obj.bar, 3)
        self.assertIsNone(obj.baz)

        self.assertRaises(ValueError, ParentType.create, xyz="abc")

    def test_deserialize(self):
        obj = ParentType.deserialize({"foo": "x", "ratio": 0.5, "gem": {"zed": 1}, "hum": [{"zed": 2}]})
        self.assertEqual(obj.foo, "x")
        self.assertEqual(obj.bar, 3)
        self.assertEqual(obj.baz, 0.5)
        self.assertEqual(obj.gem.zed, 1)
        self.assertEqual(obj.hum[0].zed, 2)

        self.assertRaisesWithMessage(
            ManifestError, "Missing required key 'foo' for ParentType", ParentType.deserialize, {"bar": 1}
        )
        self.assertRaisesWithMessage(
            ManifestError, "Unknown key 'baz' for ParentType", ParentType.deserialize, {"foo": "x", "baz": 1.0}
        )
        self.assertRaisesWithMessage(ManifestError, "Value '[]' is not an object", ParentType.deserialize, [])

    def test_serialize(self):
        obj = ParentType.create(foo="a", baz=2.0, gem=ChildType.create(zed=1), hum=[])
        self.assertEqual(
            list(obj.serialize().items()),
            [("foo", "a"), ("bar", 3), ("ratio", 2.0), ("gem", {"zed": 1}), ("hum", [])],
        )


class ReportTest(AcmsTest):
    def test_residual_report(self):
        report = ResidualReport("normality", 1e-6)
        self.assertEqual(report.points, 0)
        self.assertEqual(report.maximum, 0.0)
        self.assertEqual(report.verdict, PASS)

        report.add(1e-9)
        report.add(np.float64(3e-7))
        self.assertEqual(report.points, 2)
        self.assertEqual(report.maximum, 3e-7)
        self.assertEqual(report.verdict, PASS)

        report.add(2e-6)
        self.assertEqual(report.verdict, FAIL)

        summary = report.summary()
        self.assertEqual(summary.name, "normality")
        self.assertEqual(summary.points, 3)
        self.assertEqual(summary.verdict, FAIL)

    def test_equivalence_report(self):
        report = EquivalenceReport("cor31", 1e-6)
        report.add_pair(1e-12, 1e-10)
        report.add_pair(1.0, 0.5)
        self.assertEqual(report.verdict, PASS)
        self.assertEqual(report.maximum, 1.0)

        report.add_pair(1e-5, 1e-12)
        self.assertEqual(report.verdict, INCONCLUSIVE)

        report.add_pair(1e-12, 1e-12, 1e-2)
        self.assertEqual(report.verdict, FAIL)

    def test_report(self):
        environment = Environment.create(seed=42, tolerance=1e-6, samples=5, order=3, version="0.1.0")
        ok = ResidualReport("compatibility", 1e-6, [0.0, 1e-12])
        unsure = EquivalenceReport("cor31:equivalence", 1e-6)
        unsure.add_pair(1e-5, 1e-5)

        report = Report.build("heis-3", environment, [ok, unsure])
        self.assertEqual(report.verdict, PASS)
        self.assertEqual([c.verdict for c in report.checks], [PASS, INCONCLUSIVE])

        output = report.to_json()
        self.assertTrue(output.endswith("}\n"))
        data = json.loads(output)
        self.assertEqual(list(data.keys()), ["manifold", "environment", "checks", "verdict"])
        self.assertEqual(list(data["checks"][0].keys()), ["name", "points", "max_residual", "tolerance", "verdict"])
        self.assertEqual(data["environment"]["seed"], 42)

        failing = Report.build("r5-wobble", environment, [ResidualReport("normality:nijenhuis", 1e-6, [0.5])])
        self.assertEqual(failing.verdict, FAIL)
        self.assertIsInstance(failing.checks[0], CheckSummary)
