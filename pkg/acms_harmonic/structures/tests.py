import io
import json
import math
import os
import tempfile
from unittest.mock import patch

import numpy as np

from ..cli import Manifest, applicable_checks, build_parser, main, run_checks
from ..dsl import parse
from ..exceptions import (
    CatalogError,
    ManifestError,
    NonHermitianBaseError,
    NonRiemannianSubmersionError,
    NotHorizontalError,
    StructureError,
    WarpingError,
)
from ..geometry import ChartManifold, Germ, TensorField, random_adapted_frame, sectional_curvature
from ..tests import AcmsTest
from ..utils import FAIL, PASS, sample_points
from . import acms, catalog, fibration, harmonicity
from .acms import AcmStructure, LiftedComplexStructure

HEIS_POINTS = ([0.1, 0.2, 0.3], [-0.4, 0.6, -0.2], [0.7, -0.5, 0.0])
SPHERE_POINTS = ([0.3, -0.2, 0.4], [-0.1, 0.5, 0.2])


class CatalogTest(AcmsTest):
    def test_list(self):
        entries = catalog.catalog_list()
        self.assertEqual([e["name"] for e in entries], ["flat-cosym-3", "heis-3", "sphere-3", "r5-wobble", "twist"])
        self.assertEqual([e["dim"] for e in entries], [3, 3, 3, 5, None])
        self.assertNotIn("params", entries[0])
        self.assertEqual(set(entries[4]["params"]), {"base", "f", "F"})
        self.assertTrue(entries[4]["params"]["base"]["required"])
        self.assertEqual(entries[4]["params"]["base"]["choices"], ["flat-c1", "sphere-2", "flat-c2"])

    def test_build(self):
        heis = catalog.build("heis-3")
        self.assertEqual(heis.name, "heis-3")
        self.assertEqual(heis.chart.dim, 3)
        self.assertTrue(heis.sasakian)
        self.assertTrue(heis.normal)
        self.assertIsNotNone(heis.submersion)
        self.assertIsNone(heis.twisted)

        wobble = catalog.build("r5-wobble", {})
        self.assertFalse(wobble.normal)
        self.assertEqual(wobble.structure.dim, 5)

        twist = catalog.build("twist", {"base": "flat-c1"})
        self.assertEqual(twist.chart.dim, 3)
        self.assertEqual(twist.chart.variables, ("x1", "x2", "t"))
        self.assertIsNotNone(twist.submersion)

        # a non-constant f breaks the Riemannian submersion
        twist = catalog.build("twist", {"base": "sphere-2", "f": "2 + x1", "F": "2 + sin(t)"})
        self.assertIsNone(twist.submersion)
        self.assertEqual(twist.structure.label, "twist(sphere-2, f = 2 + x1, F = 2 + sin(t))")

    def test_sphere_curvature(self):
        chart = catalog.build("sphere-3").chart
        rng = np.random.default_rng(3)
        for coords in sample_points(chart.domain, 50, seed=5):
            p = chart.at(coords, order=2)
            x, y = rng.standard_normal((2, 3))
            self.assertAlmostEqual(sectional_curvature(chart, p, x, y), 1.0, delta=1e-8, msg="at %s" % coords)

    def test_errors(self):
        self.assertRaisesWithMessage(CatalogError, "Unknown catalog manifold 'nope'", catalog.build, "nope")
        self.assertRaisesWithMessage(
            CatalogError, "Catalog manifold 'heis-3' has no parameter 'x'", catalog.build, "heis-3", {"x": 1}
        )
        self.assertRaisesWithMessage(
            CatalogError, "Catalog manifold 'twist' requires a 'base' parameter", catalog.build, "twist", {}
        )
        self.assertRaisesWithMessage(
            CatalogError,
            "Unknown Hermitian base 'torus', expected one of flat-c1, sphere-2, flat-c2",
            catalog.build,
            "twist",
            {"base": "torus"},
        )


class AcmStructureTest(AcmsTest):
    def setUp(self):
        self.flat = catalog.build("flat-cosym-3").structure
        self.heis = catalog.build("heis-3").structure
        self.sphere = catalog.build("sphere-3").structure
        self.wobble = catalog.build("r5-wobble").structure

    def test_compatibility(self):
        for structure, points in (
            (self.flat, HEIS_POINTS),
            (self.heis, HEIS_POINTS),
            (self.sphere, SPHERE_POINTS),
            (self.wobble, ([0.1, 0.2, 0.3, 0.4, 0.5],)),
        ):
            for p in points:
                residuals = acms.compatibility_residuals(structure, p)
                self.assertEqual(list(residuals), ["eta_xi", "theta_squared", "theta_kernel", "metric"])
                self.assertSmall(list(residuals.values()), 1e-10, "%r at %s" % (structure, p))

        report = acms.check_compatibility(self.heis, HEIS_POINTS)
        self.assertEqual(report.points, 3)
        self.assertEqual(report.verdict, PASS)

    def test_eta_defaults_to_metric_dual(self):
        chart = self.heis.chart
        structure = AcmStructure(chart, [[0, 1, 0], [-1, 0, 0], [0, "x2", 0]], [0, 0, 2])
        for p in HEIS_POINTS:
            np.testing.assert_allclose(structure.at(p).eta_v, self.heis.at(p).eta_v, atol=1e-14)

    def test_structure_errors(self):
        chart = self.heis.chart
        self.assertRaisesWithMessage(
            StructureError,
            "θ must have index kinds 'ud', got 'u'",
            AcmStructure,
            chart,
            TensorField(chart, "u", [0, 0, 1]),
            [0, 0, 2],
        )
        other = ChartManifold(3, [[1, 0, 0], [0, 1, 0], [0, 0, 1]])
        self.assertRaisesWithMessage(
            StructureError,
            "ξ is defined on a different chart",
            AcmStructure,
            chart,
            [[0, 1, 0], [-1, 0, 0], [0, "x2", 0]],
            TensorField(other, "u", [0, 0, 1]),
        )

    def test_normality(self):
        for structure, points in ((self.flat, HEIS_POINTS), (self.heis, HEIS_POINTS), (self.sphere, SPHERE_POINTS)):
            for p in points:
                routes = acms.normality_routes(structure, p)
                self.assertEqual(list(routes), ["nijenhuis", "prop1", "lift"])
                self.assertSmall(list(routes.values()), 1e-8, "%r at %s" % (structure, p))

        # the complex block rotates with x3 so every route sees the failure
        for p in ([0.1, 0.2, 0.3, 0.4, 0.5], [0.0, 0.0, 0.0, 0.0, 0.0], [-0.5, 0.3, -0.9, 0.1, 0.2]):
            routes = acms.normality_routes(self.wobble, p)
            for name, value in routes.items():
                self.assertGreater(value, 0.1, name)

    def test_nijenhuis(self):
        p = self.wobble.chart.at([0.1, 0.2, 0.3, 0.4, 0.5])
        e = np.eye(5)
        c, s = math.cos(0.3), math.sin(0.3)

        np.testing.assert_allclose(acms.nijenhuis(self.wobble, p, e[0], e[2]), [-s * c, 0, 0, c * c, 0], atol=1e-10)
        np.testing.assert_allclose(acms.nijenhuis(self.wobble, p, e[0], e[1]), [s * s, 0, 0, -s * c, 0], atol=1e-10)

        # on the Heisenberg group only the dη term survives
        p = self.heis.chart.at([0.1, 0.2, 0.3])
        e = np.eye(3)
        np.testing.assert_allclose(acms.nijenhuis(self.heis, p, e[0], e[1]), [0, 0, -1], atol=1e-10)
        self.assertSmall(acms.normality_residual(self.heis, p, e[0], e[1]), 1e-10)

    def test_nijenhuis_is_tensorial(self):
        # fields that equal e1 and e3 at p but vary around it give the same N_θ there
        chart = self.wobble.chart
        p = chart.at([0.1, 0.2, 0.3, 0.4, 0.5])
        e = np.eye(5)
        x = TensorField(chart, "u", ["1 + (x1 - 0.1)*x2", "(x3 - 0.3)*exp(x4)", 0, "(x5 - 0.5)^2", "sin(x1 - 0.1)"])
        y = TensorField(chart, "u", ["(x2 - 0.2)*x3", 0, "1 + (x4 - 0.4)*cos(x5)", 0, "(x1 - 0.1)*(x3 - 0.3)"])
        np.testing.assert_allclose(x.at(p), e[0], atol=1e-15)
        np.testing.assert_allclose(y.at(p), e[2], atol=1e-15)

        constant = acms.nijenhuis(self.wobble, p, e[0], e[2])
        c, s = math.cos(0.3), math.sin(0.3)
        np.testing.assert_allclose(constant, [-s * c, 0, 0, c * c, 0], atol=1e-10)
        for a, b in ((x, y), (x, e[2]), (e[0], y)):
            np.testing.assert_allclose(acms.nijenhuis(self.wobble, p, a, b), constant, rtol=0, atol=1e-8)

    def test_prop1_xi_term(self):
        # the extra ξ term leaves (g(X, Y) − η(X)η(Y))ξ behind on Sasakian structures
        p = self.heis.chart.at([0.1, 0.2, 0.3])
        local = self.heis.at(p)
        x = local.frame.horizontal[0]
        value = acms.prop1_residual(self.heis, p, x, x, xi_term=True)
        np.testing.assert_allclose(value, local.xi_v, atol=1e-10)

    def test_lift(self):
        for p in HEIS_POINTS:
            self.assertSmall(LiftedComplexStructure(self.heis).square_residual(p), 1e-12)
        self.assertSmall(LiftedComplexStructure(self.wobble).square_residual([0.1, 0.2, 0.3, 0.4, 0.5]), 1e-12)

        a, b = np.zeros(6), np.zeros(6)
        a[0], b[2] = 1.0, 1.0
        self.assertGreater(np.max(np.abs(acms.lift_nijenhuis(self.wobble, [0.1, 0.2, 0.3, 0.4, 0.5], a, b))), 0.5)

    def test_consequences(self):
        for structure, points in ((self.heis, HEIS_POINTS), (self.sphere, SPHERE_POINTS)):
            for p in points:
                norms = acms.consequence_norms(structure, p)
                self.assertEqual(list(norms), ["eqa2", "eqa3", "eqa4"])
                self.assertSmall(list(norms.values()), 1e-8)

    def test_sasakian(self):
        for p in HEIS_POINTS:
            self.assertSmall(acms.sasakian_residual(self.heis, p), 1e-8)
        for p in SPHERE_POINTS:
            self.assertSmall(acms.sasakian_residual(self.sphere, p), 1e-8)

        # cosymplectic, so ∇θ = 0 while g(X, Y)ξ − η(Y)X is not
        self.assertAlmostEqual(acms.sasakian_residual(self.flat, HEIS_POINTS[0]), 1.0)

    def test_killing(self):
        for structure, points in ((self.heis, HEIS_POINTS), (self.sphere, SPHERE_POINTS), (self.flat, HEIS_POINTS)):
            for p in points:
                norms = acms.killing_norms(structure, p)
                self.assertSmall(list(norms.values()), 1e-8)
                self.assertSmall(acms.killing_bracket_norm(structure, p), 1e-8)
                self.assertSmall(acms.ricci_killing_residual(structure, p), 1e-7)

        p = self.heis.chart.at([0.1, 0.2, 0.3])
        e = np.eye(3)
        self.assertSmall(acms.killing_residual(self.heis, p, e[0], e[1]), 1e-10)
        self.assertRaisesWithMessage(
            NotHorizontalError,
            "X is not horizontal (eta component 1)",
            acms.killing_bracket_residual,
            self.heis,
            p,
            np.array([0.0, 0.0, 2.0]),
            e[1],
        )

    def test_corollary1(self):
        for p in HEIS_POINTS:
            self.assertSmall(acms.corollary1_norm(self.heis, p), 1e-8)

        p = self.heis.chart.at([0.1, 0.2, 0.3])
        frame = random_adapted_frame(self.heis.chart, p, self.heis.at(p).xi_v, np.random.default_rng(3))
        self.assertSmall(acms.corollary1_norm(self.heis, p, frame), 1e-8)

        self.assertRaisesWithMessage(
            NotHorizontalError,
            "Y is not horizontal (eta component 0.5)",
            acms.corollary1_residual,
            self.heis,
            p,
            frame.horizontal[0],
            np.array([0.0, 0.0, 1.0]),
        )


class HarmonicityTest(AcmsTest):
    def setUp(self):
        self.flat = catalog.build("flat-cosym-3").structure
        self.heis = catalog.build("heis-3").structure
        self.sphere = catalog.build("sphere-3").structure
        self.twist = catalog.build("twist", {"base": "flat-c2", "f": "2 + x1*x2", "F": "2 + cos(t)"}).structure

    def _sasakian(self):
        return [(self.heis, p) for p in HEIS_POINTS] + [(self.sphere, p) for p in SPHERE_POINTS]

    def test_contact_connection(self):
        for structure, p in self._sasakian():
            cc = harmonicity.ContactConnection.at(structure, p)
            self.assertIs(harmonicity.ContactConnection.at(structure, cc.point), cc)
            self.assertSmall(cc.projection_residuals(), 1e-12)

            # ∇̄J vanishes on Sasakian structures, along ξ too
            self.assertSmall(cc.nabla_bar_j.value, 1e-8)
            self.assertSmall(harmonicity.nabla_bar_xi_residual(structure, p), 1e-8)

    def test_unit_sphere_curvature(self):
        p = self.flat.chart.at([0.0, 0.0, 0.0])
        e = np.eye(3)
        r = harmonicity.unit_sphere_curvature(p, e[0], e[1])
        np.testing.assert_allclose(r @ e[1], e[0])
        np.testing.assert_allclose(r @ e[0], -e[1])
        np.testing.assert_allclose(r @ e[2], 0.0)

    def test_nabla_bar(self):
        p = self.heis.chart.at([0.1, 0.2, 0.3])
        sigma = TensorField(self.heis.chart, "u", [1, 0, "x2"])
        value = harmonicity.nabla_bar(self.heis, p, sigma, np.array([1.0, 0.0, 0.0]))
        self.assertSmall(self.heis.at(p).eta_v @ value, 1e-12)

        self.assertRaisesWithMessage(
            NotHorizontalError,
            "σ is not horizontal (eta component 1)",
            harmonicity.nabla_bar,
            self.flat,
            [0.0, 0.0, 0.0],
            np.array([0.0, 0.0, 1.0]),
            np.array([1.0, 0.0, 0.0]),
        )

    def test_lemmas(self):
        for structure, p in self._sasakian() + [(self.twist, [0.1, -0.2, 0.3, 0.4, 1.0])]:
            self.assertSmall(harmonicity.lemma33_residual(structure, p), 1e-8)
            for e in structure.at(p).frame.horizontal:
                self.assertSmall(harmonicity.lemma2_residual(structure, p, e), 1e-8)

        # the corrected extension is parallel for ∇̄ at the point
        p = self.heis.chart.at([0.1, 0.2, 0.3])
        e = self.heis.at(p).frame.horizontal[0]
        germ = harmonicity.corrected_extension(self.heis, p, e)
        self.assertSmall(harmonicity.nabla_bar(self.heis, p, germ, e), 1e-10)

    def test_harmonic_section(self):
        for structure, p in self._sasakian():
            self.assertSmall(harmonicity.hse1_residual(structure, p), 1e-7)
            self.assertSmall(harmonicity.hse2_residual(structure, p), 1e-7)
            self.assertSmall(harmonicity.xi_harmonic_residual(structure, p), 1e-7)
            self.assertSmall(harmonicity.combined_residual(structure, p), 1e-7)
            self.assertAlmostEqual(harmonicity.nabla_xi_squared(structure, p), 2.0, places=8)

        for p in HEIS_POINTS:
            self.assertSmall(harmonicity.hse1_residual(self.flat, p), 1e-14)
            self.assertSmall(harmonicity.hse2_residual(self.flat, p), 1e-14)

    def test_curvature_forms(self):
        cases = self._sasakian() + [
            (self.twist, [0.1, -0.2, 0.3, 0.4, 1.0]),
            (self.twist, [-0.6, 0.5, 0.2, -0.3, 4.0]),
        ]
        for structure, p in cases:
            hse1 = harmonicity.hse1_residual(structure, p)
            self.assertSmall(hse1 - harmonicity.hse1_curvature_form(structure, p), 1e-7)
            self.assertSmall(harmonicity.rbar_residual(structure, p), 1e-7)
            self.assertSmall(harmonicity.hse2_sub_identity_residual(structure, p), 1e-7)
            self.assertSmall(harmonicity.combined_block_residuals(structure, p), 1e-7)

        for structure, p in self._sasakian():
            self.assertSmall(harmonicity.eqr_residual(structure, p), 1e-8)

    def test_combined_xi_column(self):
        # the ξ-column misses its curvature-free value by exactly 2θ applied to the hse2 sub-identity
        wobble = catalog.build("r5-wobble").structure
        warped = catalog.build("twist", {"base": "flat-c1", "F": "2 + 0.1*x1*sin(t)"}).structure
        for structure, p in (
            (wobble, [0.1, 0.2, 0.3, 0.4, 0.5]),
            (warped, [0.1, -0.2, 1.0]),
            (self.heis, HEIS_POINTS[1]),
            (self.twist, [0.1, -0.2, 0.3, 0.4, 1.0]),
        ):
            local = structure.at(p)
            point = local.point
            _, column = harmonicity.combined_block_residuals(structure, point)
            sub_identity = harmonicity.hse2_sub_identity_residual(structure, point)
            self.assertAlmostEqual(column, point.norm(2.0 * local.th @ sub_identity), delta=1e-8)

    def test_frame_independence(self):
        rng = np.random.default_rng(42)
        for structure, p in self._sasakian() + [(self.twist, [0.1, -0.2, 0.3, 0.4, 1.0])]:
            point = structure.at(p).point
            frame = random_adapted_frame(point.chart, point, structure.at(point).xi_v, rng)

            self.assertSmall(
                harmonicity.rough_laplacian_j(structure, point)
                - harmonicity.rough_laplacian_j(structure, point, frame.vectors),
                1e-8,
            )
            self.assertSmall(
                harmonicity.hse1_curvature_form(structure, point)
                - harmonicity.hse1_curvature_form(structure, point, frame),
                1e-8,
            )
            combined = harmonicity.combined_residual(structure, point)
            self.assertSmall(combined - harmonicity.combined_residual(structure, point, frame), 1e-8)

    def test_harmonic_map(self):
        for structure, p in self._sasakian():
            self.assertSmall(harmonicity.harmonic_map_norm(structure, p), 1e-7)
            self.assertSmall(harmonicity.xi_map_scalar(structure, p), 1e-8)
            self.assertSmall(harmonicity.xi_energy_derivative(structure, p), 1e-8)

        self.assertEqual(harmonicity.harmonic_map_norm(self.flat, HEIS_POINTS[0]), 0.0)

    def test_corollary31(self):
        report = harmonicity.corollary31_equivalence(self.heis, HEIS_POINTS)
        self.assertEqual(report.name, "cor31:equivalence")
        self.assertEqual(report.points, 3)
        self.assertNotEqual(report.verdict, FAIL)


class FibrationTest(AcmsTest):
    def _wobble_base(self):
        j = [[0] * 4 for _ in range(4)]
        for (row, col), value in {
            (0, 1): "-cos(x3)",
            (0, 2): "-sin(x3)",
            (1, 0): "cos(x3)",
            (1, 3): "sin(x3)",
            (2, 0): "sin(x3)",
            (2, 3): "-cos(x3)",
            (3, 1): "-sin(x3)",
            (3, 2): "cos(x3)",
        }.items():
            j[row][col] = value
        chart = ChartManifold(4, [[1 if a == b else 0 for b in range(4)] for a in range(4)])
        return fibration.HermitianBase(chart, j, label="wobble")

    def test_hermitian_base(self):
        for name in ("flat-c1", "sphere-2", "flat-c2"):
            base = catalog.hermitian_base(name)
            coords = [0.1 * (i + 1) for i in range(base.chart.dim)]
            self.assertSmall(list(base.residuals(coords).values()), 1e-10)
            self.assertSmall(base.lee(coords), 1e-10)
            self.assertSmall(base.condition(coords), 1e-8)
            self.assertSmall(base.harmonic_section_residual(coords), 1e-8)
            self.assertSmall(base.harmonic_map_norm(coords), 1e-8)

        self.assertEqual(catalog.hermitian_base("flat-c2").n, 2)

    def test_non_hermitian_bases(self):
        chart = ChartManifold(2, [[1, 0], [0, 1]])
        stretched = fibration.HermitianBase(chart, [[0, -2], [0.5, 0]])
        self.assertRaisesWithMessage(
            NonHermitianBaseError, "Base is not Hermitian: metric residual 3", stretched.check, [[0.0, 0.0]]
        )

        wobble = self._wobble_base()
        residuals = wobble.residuals([0.1, 0.2, 0.3, 0.4])
        self.assertSmall([residuals["square"], residuals["metric"]], 1e-12)
        self.assertGreater(residuals["nijenhuis"], 0.1)
        with self.assertRaises(NonHermitianBaseError):
            wobble.check([[0.1, 0.2, 0.3, 0.4]])

        self.assertRaisesWithMessage(
            StructureError,
            "A Hermitian base needs an even dimension, got 3",
            fibration.HermitianBase,
            ChartManifold(3, [[1, 0, 0], [0, 1, 0], [0, 0, 1]]),
            [[0, -1, 0], [1, 0, 0], [0, 0, 0]],
        )

    def test_complex_nijenhuis(self):
        base = self._wobble_base()
        point = base.chart.at([0.1, 0.2, 0.3, 0.4])
        e = [Germ.constant(v, 4, point.order) for v in np.eye(4)]
        c, s = math.cos(0.3), math.sin(0.3)
        np.testing.assert_allclose(
            fibration.complex_nijenhuis(point.germ(base.j), e[0], e[2]), [-s * c, 0, 0, c * c], atol=1e-10
        )

    def test_conformal(self):
        base = catalog.hermitian_base("flat-c1")
        conformal = base.conformal("1 + x1^2")
        point = conformal.chart.at([0.5, 0.0])
        np.testing.assert_allclose(point.g, 1.5625 * np.eye(2))
        np.testing.assert_allclose(conformal.j.at(point), [[0, -1], [1, 0]])

    def test_twisted_product(self):
        tp = fibration.build_twisted_product(catalog.hermitian_base("flat-c1"), "1", "1")
        self.assertEqual(tp.dim, 3)
        self.assertEqual(tp.chart.periodic, (2,))
        np.testing.assert_allclose(tp.chart.domain[2], [0.0, 2 * math.pi])
        np.testing.assert_allclose(tp.base_coords([0.1, 0.2, 3.0]), [0.1, 0.2])

        p = tp.chart.at([0.1, 0.2, 3.0])
        local = tp.structure.at(p)
        np.testing.assert_allclose(local.xi_v, [0, 0, 1])
        np.testing.assert_allclose(local.eta_v, [0, 0, 1])

        tp = fibration.TwistedProduct(catalog.hermitian_base("sphere-2"), "2", "2 + sin(t)")
        local = tp.structure.at([0.1, 0.2, 0.5])
        np.testing.assert_allclose(local.xi_v, [0, 0, 1 / (2 + math.sin(0.5))])
        self.assertSmall(list(acms.compatibility_residuals(tp.structure, [0.1, 0.2, 0.5]).values()), 1e-12)

        self.assertRaisesWithMessage(
            WarpingError,
            "Warping function F comes within 1e-03 of zero on the domain (minimum 0.0005)",
            fibration.build_twisted_product,
            catalog.hermitian_base("flat-c1"),
            "1",
            "0.0005",
        )

    def test_circle_warping_along_base(self):
        tp = catalog.build("twist", {"base": "flat-c1", "F": "2 + 0.1*x1*sin(t)"}).twisted
        self.assertEqual(tp.F.free_variables, {"x1", "t"})
        self.assertSmall(list(acms.compatibility_residuals(tp.structure, [0.1, 0.2, 1.0]).values()), 1e-12)

        # θ is constant in coordinates so N_θ(∂1, ∂t) = 0 while 2dη(∂1, ∂t) = 0.1 sin(t)
        p = tp.chart.at([0.1, 0.2, 1.0])
        e = np.eye(3)
        self.assertSmall(acms.nijenhuis(tp.structure, p, e[0], e[2]), 1e-12)
        residual = acms.normality_residual(tp.structure, p, e[0], e[2])
        np.testing.assert_allclose(residual, [0, 0, 0.1 * math.sin(1.0) / (2 + 0.01 * math.sin(1.0))], atol=1e-10)

        manifest = Manifest.deserialize(
            {
                "manifold": {"catalog": "twist", "params": {"base": "flat-c1", "F": "2 + 0.1*x1*sin(t)"}},
                "checks": ["normality"],
                "samples": 3,
            }
        )
        report = run_checks(manifest)
        self.assertEqual(report.verdict, FAIL)
        for check in report.checks:
            if check.name != "normality:equivalence":
                self.assertEqual(check.verdict, FAIL, check.name)

    def test_submersion(self):
        heis = catalog.build("heis-3")
        ctx = heis.submersion
        for p in HEIS_POINTS:
            self.assertSmall(ctx.projection_residual(p), 1e-12)
            self.assertSmall(ctx.metric_residual(p), 1e-12)
            self.assertSmall(list(fibration.oneill_residuals(ctx, p).values()), 1e-8)
            self.assertSmall(fibration.curvature_expansion_residual(ctx, p), 1e-7)

        lift = ctx.lifts([0.1, 0.2, 0.3])[0]
        np.testing.assert_allclose(lift.value, [1.0, 0.0, 0.2], atol=1e-14)
        self.assertAlmostEqual(ctx.point([0.1, 0.2, 0.3]).inner(lift.value, lift.value), 0.25)

        # fibres of the twisted product over a constant warping
        twist = catalog.build("twist", {"base": "sphere-2", "f": "1.5", "F": "2 + sin(t)"})
        for p in ([0.1, 0.2, 0.5], [-0.3, 0.4, 5.0]):
            self.assertSmall(twist.submersion.metric_residual(p), 1e-12)
            self.assertSmall(list(fibration.oneill_residuals(twist.submersion, p).values()), 1e-8)
            self.assertSmall(fibration.curvature_expansion_residual(twist.submersion, p), 1e-7)

        self.assertRaisesWithMessage(
            StructureError,
            "Base chart has dimension 3 but the fibres of a 3-dimensional structure need 2",
            fibration.SubmersionContext,
            heis.structure,
            heis.chart,
        )

        sphere = catalog.build("sphere-3").structure
        ctx = fibration.SubmersionContext(sphere, ChartManifold(2, [[1, 0], [0, 1]]))
        with self.assertRaises(StructureError):
            ctx.point([0.1, 0.2, 0.3])

    def test_base_residuals(self):
        base = catalog.hermitian_base("sphere-2")
        plus, minus = fibration.base_residuals(base, "2 + x1", [[0.1, 0.2], [-0.3, 0.4]])
        self.assertEqual((plus.name, minus.name), ("base:rcomm+2lee", "base:rcomm-lee"))
        self.assertEqual(plus.points, 2)
        self.assertEqual(plus.verdict, PASS)
        self.assertEqual(minus.verdict, PASS)

    def test_base_conditions_on_conformally_kahler_bases(self):
        # the two conditions differ by 3∇_{δĴ}Ĵ, which vanishes on f²g over a Kähler base even though δĴ does not
        base = catalog.hermitian_base("flat-c2")
        conformal = base.conformal("2 + x1*x2")
        for coords in ([0.1, 0.2, 0.3, 0.4], [-0.5, 0.3, 0.6, -0.2]):
            point = conformal.chart.at(coords)
            self.assertGreater(np.linalg.norm(conformal.lee(point)), 1e-3)
            self.assertSmall(conformal.lee_term(point), 1e-10)
            np.testing.assert_allclose(
                conformal.condition(point), conformal.alternative_condition(point), rtol=0, atol=1e-10
            )

        plus, minus = fibration.base_residuals(base, "2 + x1*x2", [[0.1, 0.2, 0.3, 0.4], [-0.5, 0.3, 0.6, -0.2]])
        self.assertEqual(plus.verdict, minus.verdict)
        self.assertAlmostEqual(plus.maximum, minus.maximum, delta=1e-10)

    def test_base_crosscheck(self):
        for params in (
            {"base": "flat-c2", "f": "2 + x1*x2", "F": "2 + cos(t)"},
            {"base": "sphere-2", "f": "2 + x1", "F": "2 + sin(t)"},
        ):
            tp = catalog.build("twist", params).twisted
            base_dim = tp.dim - 1
            for coords in ([0.1, -0.2, 0.3, 0.4][:base_dim] + [1.0], [-0.5, 0.3, 0.6, -0.2][:base_dim] + [4.0]):
                block, mixed = fibration.base_crosscheck(tp, coords)
                self.assertSmall([block, mixed], 1e-7)

    def test_conformal_change(self):
        base = catalog.hermitian_base("flat-c2")
        for coords in ([0.1, 0.2, 0.3, 0.4], [-0.5, 0.3, 0.6, -0.2]):
            self.assertSmall(fibration.conformal_lee_check(base, "2 + x1*x2", coords), 1e-8)
            self.assertSmall(fibration.conformal_lee_check(base, "exp(x1 - x3)", coords, seed=7), 1e-8)
            scaled, _ = fibration.conformal_curvature_check(base, "2 + x1*x2", coords)
            self.assertSmall(scaled, 1e-8)

        base = catalog.hermitian_base("sphere-2")
        self.assertSmall(fibration.conformal_curvature_check(base, "2 + x1", [0.1, 0.2]), 1e-8)

        # one conformal base and one scalar field per warping function, so germs are reused at a point
        base = catalog.hermitian_base("flat-c2")
        self.assertIs(base.conformal("2 + x1*x2"), base.conformal("2+x1*x2"))
        self.assertIs(base.function("2 + x1*x2"), base.function(parse("2 + x1*x2")))
        self.assertIsNot(base.function("2 + x1*x2"), base.function("2 + x1"))

        point = base.chart.at([0.1, 0.2, 0.3, 0.4])
        first = fibration.conformal_lee_check(base, "2 + x1*x2", point)
        germ = point.germ(base.function("2 + x1*x2"))
        self.assertEqual(fibration.conformal_lee_check(base, "2 + x1*x2", point), first)
        self.assertIs(point.germ(base.function("2 + x1*x2")), germ)

    def test_theorem41(self):
        tp = catalog.build("twist", {"base": "sphere-2", "f": "1.5", "F": "2 + sin(t)"}).twisted
        reports = fibration.theorem41_crosscheck(tp, [[0.1, 0.2, 0.5], [-0.3, 0.4, 5.0]])
        self.assertEqual(
            [r.name for r in reports],
            [
                "thm41:base-section",
                "thm41:xi-harmonic",
                "thm41:lee-xi",
                "thm41:base-map",
                "thm41:xi-energy",
                "thm41:section",
                "thm41:map",
                "thm41:energy",
            ],
        )
        for report in reports:
            self.assertEqual(report.points, 2)
            self.assertEqual(report.verdict, PASS, report.name)

        tp = catalog.build("twist", {"base": "sphere-2", "f": "2 + x1"}).twisted
        self.assertRaisesWithMessage(
            NonRiemannianSubmersionError,
            "Warping function f must be constant for the projection to be a Riemannian submersion (got '2 + x1')",
            fibration.theorem41_crosscheck,
            tp,
            [[0.1, 0.2, 0.5]],
        )


class ManifestTest(AcmsTest):
    def test_read(self):
        manifest = Manifest.read(self.manifest_path("heis"))
        self.assertEqual(manifest.manifold.catalog, "heis-3")
        self.assertEqual(manifest.checks, ["normality", "thm31", "thm32", "cor31"])
        self.assertEqual(manifest.samples, 4)
        self.assertEqual(manifest.tolerance, 1e-6)
        self.assertEqual(manifest.order, 3)

        manifest = Manifest.deserialize(self.read_manifest("custom_flat"))
        self.assertEqual(manifest.manifold.custom.dim, 3)
        self.assertIsNone(manifest.checks)

        self.assertRaisesWithMessage(
            ManifestError,
            "Cannot read manifest test_files/manifests/missing.json: No such file or directory",
            Manifest.read,
            self.manifest_path("missing"),
        )

    def test_validate(self):
        manifest = Manifest.deserialize({"manifold": {"catalog": "heis-3"}, "order": 4})
        self.assertRaisesWithMessage(ManifestError, "order must be one of 2, 3, got 4", manifest.validate)

        manifest = Manifest.deserialize({"manifold": {"catalog": "heis-3"}, "samples": 0})
        self.assertRaisesWithMessage(ManifestError, "samples must be a positive integer", manifest.validate)

        self.assertRaisesWithMessage(
            ManifestError, "Unknown key 'sample' for Manifest", Manifest.deserialize, {"manifold": {}, "sample": 3}
        )
        self.assertRaisesWithMessage(
            ManifestError, "Missing required key 'manifold' for Manifest", Manifest.deserialize, {}
        )

        manifest = Manifest.deserialize({"manifold": {}})
        self.assertRaisesWithMessage(
            ManifestError, "Manifold must give exactly one of 'catalog' or 'custom'", manifest.manifold.build
        )

        custom = self.read_manifest("custom_flat")
        custom["manifold"]["custom"]["domain"] = [[-1, 1], [-1, 1], [0]]
        manifest = Manifest.deserialize(custom)
        self.assertRaisesWithMessage(
            ManifestError, "domain must be 3 intervals [lo, hi], got [[-1, 1], [-1, 1], [0]]", manifest.validate
        )
        self.assertRaisesWithMessage(
            ManifestError, "domain must be 3 intervals [lo, hi], got [[-1, 1], [-1, 1], [0]]", run_checks, manifest
        )

        custom["manifold"]["custom"]["domain"] = [[-1, 1], [-1, 1], [-1, "x"]]
        self.assertRaises(ManifestError, Manifest.deserialize(custom).validate)

        # the chart itself refuses ragged domains too
        self.assertRaisesWithMessage(
            StructureError,
            "Domain must be 2 intervals (lo, hi) with lo < hi",
            ChartManifold,
            2,
            [[1, 0], [0, 1]],
            [(-1, 1), (0,)],
        )

    def test_run_checks(self):
        report = run_checks(Manifest.read(self.manifest_path("custom_flat")))
        self.assertEqual(report.manifold, "custom")
        self.assertEqual(
            [c.name for c in report.checks],
            [
                "compatibility",
                "normality:nijenhuis",
                "normality:prop1",
                "normality:lift",
                "normality:equivalence",
            ],
        )
        self.assertEqual(report.verdict, PASS)
        self.assertEqual(report.environment.samples, 3)

        manifest = Manifest.deserialize(
            {"manifold": {"catalog": "r5-wobble"}, "checks": ["normality:lift"], "samples": 2}
        )
        report = run_checks(manifest)
        self.assertEqual([c.name for c in report.checks], ["normality:lift"])
        self.assertEqual(report.verdict, FAIL)

        for name in ("normality:foo", "compatibility:lift", "nope"):
            manifest = Manifest.deserialize({"manifold": {"catalog": "heis-3"}, "checks": [name], "samples": 1})
            self.assertRaisesWithMessage(ManifestError, "Unknown check '%s'" % name, run_checks, manifest)

        manifest = Manifest.deserialize({"manifold": {"catalog": "heis-3"}, "checks": ["thm41"], "samples": 1})
        self.assertRaisesWithMessage(
            ManifestError, "Check 'thm41' needs a twisted product manifold", run_checks, manifest
        )

    def test_applicable_checks(self):
        heis = applicable_checks(catalog.build("heis-3"))
        self.assertIn("sasakian", heis)
        self.assertIn("oneill", heis)
        self.assertNotIn("thm41", heis)

        flat = applicable_checks(catalog.build("flat-cosym-3"))
        self.assertNotIn("sasakian", flat)
        self.assertNotIn("oneill", flat)
        self.assertEqual(flat[:2], ["compatibility", "normality"])

        twist = applicable_checks(catalog.build("twist", {"base": "sphere-2", "f": "2 + x1"}))
        self.assertIn("base", twist)
        self.assertIn("conformal", twist)
        self.assertNotIn("thm41", twist)
        self.assertNotIn("oneill", twist)

        twist = applicable_checks(catalog.build("twist", {"base": "sphere-2"}))
        self.assertIn("thm41", twist)
        self.assertIn("oneill", twist)


class CommandLineTest(AcmsTest):
    def run_main(self, *argv):
        with patch("sys.stdout", new_callable=io.StringIO) as stdout, patch(
            "sys.stderr", new_callable=io.StringIO
        ) as stderr:
            status = main(list(argv))
        return status, stdout.getvalue(), stderr.getvalue()

    def test_parser(self):
        args = build_parser().parse_args(["-vv", "check", "--manifest", "m.json", "--samples", "5", "--tol", "1e-8"])
        self.assertEqual(args.command, "check")
        self.assertEqual(args.verbose, 2)
        self.assertEqual(args.samples, 5)
        self.assertEqual(args.tol, 1e-8)
        self.assertIsNone(args.seed)
        self.assertIsNone(args.json)

    def test_catalog_list(self):
        status, out, _ = self.run_main("catalog", "list", "--json")
        self.assertEqual(status, 0)
        self.assertEqual([e["name"] for e in json.loads(out)], [e["name"] for e in catalog.catalog_list()])

        status, out, _ = self.run_main("catalog", "list")
        self.assertEqual(status, 0)
        self.assertTrue(out.startswith("flat-cosym-3   "))
        self.assertIn("base (string, required)", out)
        self.assertIn("F (expression, default 1)", out)

    def test_check_passes(self):
        status, out, err = self.run_main("check", "--manifest", self.manifest_path("heis"))
        self.assertEqual(status, 0, err)

        report = json.loads(out)
        self.assertEqual(report["manifold"], "heis-3")
        self.assertEqual(report["verdict"], "pass")
        self.assertEqual(report["environment"]["samples"], 4)
        self.assertEqual(report["environment"]["order"], 3)
        self.assertIn("thm31:rbar", [c["name"] for c in report["checks"]])
        self.assertIn("cor31:equivalence", [c["name"] for c in report["checks"]])
        self.assertNotIn("fail", [c["verdict"] for c in report["checks"]])

        status, out, err = self.run_main("check", "--manifest", self.manifest_path("flat_all"))
        self.assertEqual(status, 0, err)
        names = [c["name"] for c in json.loads(out)["checks"]]
        self.assertIn("curvature:second-bianchi", names)
        self.assertNotIn("sasakian", names)

        status, out, err = self.run_main("check", "--manifest", self.manifest_path("twist"))
        self.assertEqual(status, 0, err)
        report = json.loads(out)
        self.assertEqual(report["manifold"], "twist(sphere-2, f = 2 + x1, F = 2 + sin(t))")
        self.assertIn("base:crosscheck", [c["name"] for c in report["checks"]])

    def test_check_overrides(self):
        status, out, _ = self.run_main(
            "check", "--manifest", self.manifest_path("flat_all"), "--samples", "2", "--seed", "7", "--order", "2"
        )
        self.assertEqual(status, 0)
        report = json.loads(out)
        self.assertEqual(report["environment"]["samples"], 2)
        self.assertEqual(report["environment"]["seed"], 7)
        self.assertNotIn("curvature:second-bianchi", [c["name"] for c in report["checks"]])

    def test_check_fails(self):
        status, out, _ = self.run_main("check", "--manifest", self.manifest_path("r5_wobble"))
        self.assertEqual(status, 1)
        report = json.loads(out)
        self.assertEqual(report["verdict"], "fail")
        self.assertEqual(
            [c["verdict"] for c in report["checks"]],
            ["fail", "fail", "fail", "pass"],
        )

    def test_check_json_file(self):
        handle, path = tempfile.mkstemp(suffix=".json")
        os.close(handle)
        try:
            status, out, _ = self.run_main("check", "--manifest", self.manifest_path("custom_flat"), "--json", path)
            self.assertEqual(status, 0)
            self.assertTrue(out.startswith("compatibility "))
            self.assertTrue(out.endswith("overall: pass\n"))

            with open(path, encoding="utf-8") as f:
                self.assertEqual(json.load(f)["verdict"], "pass")
        finally:
            os.remove(path)

    def test_input_errors(self):
        status, out, err = self.run_main("check", "--manifest", self.manifest_path("bad_catalog"))
        self.assertEqual(status, 2)
        self.assertEqual(out, "")
        self.assertEqual(err, "E_CATALOG: Unknown catalog manifold 'nope'\n")

        status, _, err = self.run_main("check", "--manifest", self.manifest_path("custom_parse_error"))
        self.assertEqual(status, 2)
        self.assertEqual(err, "E_PARSE: Unexpected end of input at offset 3 in '1 +'\n")

        status, _, err = self.run_main("check", "--manifest", self.manifest_path("missing"))
        self.assertEqual(status, 2)
        self.assertTrue(err.startswith("E_MANIFEST: Cannot read manifest"))

        status, _, err = self.run_main("check", "--manifest", self.manifest_path("heis"), "--order", "4")
        self.assertEqual(status, 2)
        self.assertEqual(err, "E_MANIFEST: order must be one of 2, 3, got 4\n")

        status, out, err = self.run_main("check", "--manifest", self.manifest_path("custom_domain_error"))
        self.assertEqual(status, 2)
        self.assertEqual(out, "")
        self.assertTrue(err.startswith("E_DOMAIN: Square root of a non-positive value"), err)
        self.assertTrue(err.endswith("in sub-expression 'sqrt(x1 - 2)'\n"), err)

    def test_check_is_deterministic(self):
        outputs = {}
        for name in ("heis", "twist"):
            status, first, _ = self.run_main("check", "--manifest", self.manifest_path(name))
            _, second, _ = self.run_main("check", "--manifest", self.manifest_path(name))
            self.assertEqual(status, 0)
            self.assertEqual(first.encode("utf-8"), second.encode("utf-8"))
            outputs[name] = first

        _, out, _ = self.run_main("check", "--manifest", self.manifest_path("heis"), "--seed", "43")
        self.assertEqual(json.loads(out)["environment"]["seed"], 43)
        self.assertNotEqual(out, outputs["heis"])
