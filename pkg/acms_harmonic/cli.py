"""
Command line entry point: reads a manifest, sweeps the requested identities over deterministic sample points and
writes a JSON report. Exit status is 0 when every check passes, 1 when any fails and 2 on input errors.
"""

import argparse
import json
import logging
import numbers
import sys
import time

import numpy as np

from . import VERSION
from .exceptions import AcmsException, ManifestError
from .geometry import (
    ChartManifold,
    Germ,
    contract,
    curvature_antisymmetry_residuals,
    endomorphism_norm,
    first_bianchi_residual,
    metricity_residual,
    riemann,
    second_bianchi_residual,
    second_covariant_derivative,
    torsion_residual,
)
from .reports import Environment, EquivalenceReport, Report, ResidualReport
from .serialization import (
    DictField,
    FloatField,
    IntegerField,
    ListField,
    ObjectField,
    SerializableObject,
    StringField,
)
from .structures import acms, catalog, fibration, harmonicity
from .structures.acms import AcmStructure
from .structures.catalog import CatalogManifold
from .utils import DEFAULT_SEED, PASS, sample_points

logger = logging.getLogger(__name__)

DEFAULT_CHECKS = ("compatibility", "normality")
DEFAULT_SAMPLES = 20
DEFAULT_TOLERANCE = 1e-6
DEFAULT_ORDER = 3
ORDERS = (2, 3)


# =====================================================================
# Manifest
# =====================================================================


class CustomManifold(SerializableObject):
    dim = IntegerField(required=True)
    domain = ListField()
    periodic = ListField()
    metric = ListField(required=True)
    theta = ListField(required=True)
    xi = ListField(required=True)
    eta = ListField()
    variables = ListField()

    def build(self):
        chart = ChartManifold(
            self.dim,
            self.metric,
            domain=self.domain,
            periodic=self.periodic or (),
            variables=self.variables,
            label="custom",
        )
        structure = AcmStructure(chart, self.theta, self.xi, self.eta, label="custom")
        return CatalogManifold("custom", structure)

    def validate(self):
        if self.dim is None or self.dim < 1:
            raise ManifestError("dim must be a positive integer")
        if self.domain is None:
            return
        intervals_ok = len(self.domain) == self.dim and all(
            isinstance(interval, list)
            and len(interval) == 2
            and all(isinstance(v, numbers.Real) and not isinstance(v, bool) for v in interval)
            for interval in self.domain
        )
        if not intervals_ok:
            raise ManifestError("domain must be %d intervals [lo, hi], got %s" % (self.dim, json.dumps(self.domain)))


class ManifoldSpec(SerializableObject):
    catalog = StringField()
    params = DictField()
    custom = ObjectField(item_class=CustomManifold)

    def build(self):
        if (self.catalog is None) == (self.custom is None):
            raise ManifestError("Manifold must give exactly one of 'catalog' or 'custom'")
        if self.custom is not None:
            return self.custom.build()
        return catalog.build(self.catalog, self.params)


class Manifest(SerializableObject):
    manifold = ObjectField(item_class=ManifoldSpec, required=True)
    checks = ListField()
    samples = IntegerField(default=DEFAULT_SAMPLES)
    seed = IntegerField(default=DEFAULT_SEED)
    tolerance = FloatField(default=DEFAULT_TOLERANCE)
    order = IntegerField(default=DEFAULT_ORDER)

    @classmethod
    def read(cls, path):
        try:
            with open(path, encoding="utf-8") as f:
                item = json.load(f)
        except OSError as ex:
            raise ManifestError("Cannot read manifest %s: %s" % (path, ex.strerror))
        except json.JSONDecodeError as ex:
            raise ManifestError("Manifest %s is not valid JSON: %s" % (path, ex))
        return cls.deserialize(item)

    def validate(self):
        if self.samples is None or self.samples < 1:
            raise ManifestError("samples must be a positive integer")
        if self.tolerance is None or self.tolerance <= 0:
            raise ManifestError("tolerance must be positive")
        if self.order not in ORDERS:
            raise ManifestError("order must be one of %s, got %s" % (", ".join(map(str, ORDERS)), self.order))
        for name in self.checks or ():
            if not isinstance(name, str):
                raise ManifestError("Check names must be strings, got '%s'" % name)
        if self.manifold.custom is not None:
            self.manifold.custom.validate()


# =====================================================================
# Checks
# =====================================================================


def _max_norm(point, vectors):
    return max((point.norm(v) for v in vectors), default=0.0)


def _sweep(name, points, tolerance, function):
    report = ResidualReport(name, tolerance)
    for p in points:
        report.add(function(p))
    return report


def check_compatibility(m, points, tolerance):
    return [acms.check_compatibility(m.structure, points, tolerance)]


def check_normality(m, points, tolerance, route=None):
    s = m.structure
    routes = acms.normality_routes
    if route is not None:
        return [_sweep("normality:%s" % route, points, tolerance, lambda p: routes(s, p)[route])]

    reports = {name: ResidualReport("normality:%s" % name, tolerance) for name in ("nijenhuis", "prop1", "lift")}
    equivalence = EquivalenceReport("normality:equivalence", tolerance)
    for p in points:
        values = routes(s, p)
        for name, value in values.items():
            reports[name].add(value)
        equivalence.add_pair(*values.values())
    return list(reports.values()) + [equivalence]


def check_consequences(m, points, tolerance):
    s = m.structure
    names = ("eqa2", "eqa3", "eqa4")
    reports = {name: ResidualReport("consequences:%s" % name, tolerance) for name in names}
    for p in points:
        for name, value in acms.consequence_norms(s, p).items():
            reports[name].add(value)
    return list(reports.values())


def check_killing(m, points, tolerance):
    s = m.structure
    reports = {
        name: ResidualReport("killing:%s" % name, tolerance)
        for name in ("killing", "geodesic", "theta_invariant", "bracket", "ricci")
    }
    for p in points:
        for name, value in acms.killing_norms(s, p).items():
            reports[name].add(value)
        reports["bracket"].add(acms.killing_bracket_norm(s, p))
        reports["ricci"].add(p.norm(acms.ricci_killing_residual(s, p)))
    return list(reports.values())


def check_sasakian(m, points, tolerance):
    return [_sweep("sasakian", points, tolerance, lambda p: acms.sasakian_residual(m.structure, p))]


def check_cor1(m, points, tolerance):
    return [_sweep("cor1", points, tolerance, lambda p: acms.corollary1_norm(m.structure, p))]


def check_lemma2(m, points, tolerance):
    s = m.structure

    def residual(p):
        horizontal = s.at(p).frame.horizontal
        return _max_norm(p, [harmonicity.lemma2_residual(s, p, e) for e in horizontal])

    return [_sweep("lemma2", points, tolerance, residual)]


def check_lemma33(m, points, tolerance):
    s = m.structure
    return [
        _sweep("lemma33", points, tolerance, lambda p: p.norm(harmonicity.lemma33_residual(s, p))),
        _sweep("lemma33:nabla-bar-xi", points, tolerance, lambda p: harmonicity.nabla_bar_xi_residual(s, p)),
    ]


def check_thm31(m, points, tolerance):
    s = m.structure

    def identity(p):
        difference = harmonicity.hse1_residual(s, p) - harmonicity.hse1_curvature_form(s, p)
        return endomorphism_norm(p, difference)

    return [
        _sweep("thm31", points, tolerance, identity),
        _sweep("thm31:rbar", points, tolerance, lambda p: harmonicity.rbar_residual(s, p)),
        _sweep("thm31:eqr", points, tolerance, lambda p: endomorphism_norm(p, harmonicity.eqr_residual(s, p))),
    ]


def check_thm32(m, points, tolerance):
    s = m.structure
    equivalence = EquivalenceReport("thm32:equivalence", tolerance)
    for p in points:
        direct = p.norm(harmonicity.hse2_residual(s, p))
        equivalence.add_pair(direct, p.norm(harmonicity.hse2_curvature_form(s, p)))
    identity = _sweep("thm32", points, tolerance, lambda p: p.norm(harmonicity.hse2_sub_identity_residual(s, p)))
    return [identity, equivalence]


def check_cor31(m, points, tolerance):
    s = m.structure
    block = ResidualReport("cor31:block", tolerance)
    column = ResidualReport("cor31:xi-column", tolerance)
    for p in points:
        block_residual, column_residual = harmonicity.combined_block_residuals(s, p)
        block.add(block_residual)
        column.add(column_residual)
    return [harmonicity.corollary31_equivalence(s, points, tolerance), block, column]


def check_harmonic_section(m, points, tolerance):
    s = m.structure
    return [
        _sweep(
            "harmonic-section:hse1",
            points,
            tolerance,
            lambda p: endomorphism_norm(p, harmonicity.hse1_residual(s, p)),
        ),
        _sweep("harmonic-section:hse2", points, tolerance, lambda p: p.norm(harmonicity.hse2_residual(s, p))),
    ]


def check_harmonic_map(m, points, tolerance):
    s = m.structure
    energy = EquivalenceReport("harmonic-map:xi-energy", tolerance)
    for p in points:
        energy.add_pair(abs(harmonicity.xi_energy_derivative(s, p)), abs(harmonicity.xi_map_scalar(s, p)))
    return [_sweep("harmonic-map", points, tolerance, lambda p: harmonicity.harmonic_map_norm(s, p)), energy]


def check_xi_harmonic(m, points, tolerance):
    s = m.structure
    return [_sweep("xi-harmonic", points, tolerance, lambda p: p.norm(harmonicity.xi_harmonic_residual(s, p)))]


def _ricci_identity(structure, p):
    basis = np.eye(p.dim)
    worst = 0.0
    for x in basis:
        for y in basis:
            xy = second_covariant_derivative(structure.xi, p, x, y)
            yx = second_covariant_derivative(structure.xi, p, y, x)
            rhs = riemann(p.chart, p, x, y, structure.xi.at(p))
            worst = max(worst, p.norm(xy - yx - rhs))
    return worst


def _torsion(structure, p):
    local = structure.at(p)
    fields = [local.xi] + [contract("ab,b->a", local.theta, Germ.constant(e, p.dim, p.order)) for e in np.eye(p.dim)]
    return max(p.norm(torsion_residual(x, y, p)) for x in fields for y in fields)


def check_curvature(m, points, tolerance):
    s = m.structure
    reports = [
        _sweep("curvature:metricity", points, tolerance, metricity_residual),
        _sweep("curvature:torsion", points, tolerance, lambda p: _torsion(s, p)),
        _sweep("curvature:antisymmetry", points, tolerance, lambda p: max(curvature_antisymmetry_residuals(p))),
        _sweep("curvature:first-bianchi", points, tolerance, first_bianchi_residual),
        _sweep("curvature:ricci-identity", points, tolerance, lambda p: _ricci_identity(s, p)),
    ]
    if points and points[0].order >= 3:
        reports.append(_sweep("curvature:second-bianchi", points, tolerance, second_bianchi_residual))
    return reports


def _submersion(m, name):
    if m.submersion is None:
        raise ManifestError("Check '%s' needs a manifold fibred over a base with constant warping" % name)
    return m.submersion


def _twisted(m, name):
    if m.twisted is None:
        raise ManifestError("Check '%s' needs a twisted product manifold" % name)
    return m.twisted


def check_oneill(m, points, tolerance):
    ctx = _submersion(m, "oneill")
    names = ("t_xi", "a_antisymmetry", "a_bracket")
    reports = {name: ResidualReport("oneill:%s" % name.replace("_", "-"), tolerance) for name in names}
    for p in points:
        for name, value in fibration.oneill_residuals(ctx, p).items():
            reports[name].add(value)
    return [
        _sweep("oneill:projections", points, tolerance, ctx.projection_residual),
        _sweep("oneill:metric", points, tolerance, ctx.metric_residual),
        *reports.values(),
        _sweep("oneill:curvature", points, tolerance, lambda p: fibration.curvature_expansion_residual(ctx, p)),
    ]


def check_thm41(m, points, tolerance):
    return fibration.theorem41_crosscheck(_twisted(m, "thm41"), points, tolerance)


def check_base(m, points, tolerance):
    tp = _twisted(m, "base")
    block = ResidualReport("base:crosscheck", tolerance)
    mixed = ResidualReport("base:mixed", tolerance)
    for p in points:
        block_residual, mixed_residual = fibration.base_crosscheck(tp, p)
        block.add(block_residual)
        mixed.add(mixed_residual)
    base_points = [tp.base_coords(p) for p in points]
    return fibration.base_residuals(tp.base, tp.f, base_points, tolerance) + [block, mixed]


def check_conformal(m, points, tolerance):
    tp = _twisted(m, "conformal")
    reports = {
        name: ResidualReport("conformal:%s" % name, tolerance)
        for name in ("lee", "lee-term", "curvature", "curvature-unscaled")
    }
    for p in points:
        base_point = tp.base.chart.at(tp.base_coords(p), p.order)
        lee, lee_term = fibration.conformal_lee_check(tp.base, tp.f, base_point)
        curvature, unscaled = fibration.conformal_curvature_check(tp.base, tp.f, base_point)
        for name, value in zip(reports, (lee, lee_term, curvature, unscaled)):
            reports[name].add(value)
    return list(reports.values())


CHECKS = {
    "compatibility": check_compatibility,
    "normality": check_normality,
    "consequences": check_consequences,
    "killing": check_killing,
    "sasakian": check_sasakian,
    "cor1": check_cor1,
    "lemma2": check_lemma2,
    "lemma33": check_lemma33,
    "thm31": check_thm31,
    "thm32": check_thm32,
    "cor31": check_cor31,
    "harmonic-section": check_harmonic_section,
    "harmonic-map": check_harmonic_map,
    "xi-harmonic": check_xi_harmonic,
    "curvature": check_curvature,
    "oneill": check_oneill,
    "thm41": check_thm41,
    "base": check_base,
    "conformal": check_conformal,
}

NORMALITY_ROUTES = ("nijenhuis", "prop1", "lift")


def applicable_checks(m):
    """
    Every check that makes sense for the given manifold, in registry order
    """
    names = [name for name in CHECKS if name != "sasakian" or m.sasakian]
    if m.submersion is None:
        names.remove("oneill")
    if m.twisted is None:
        names = [name for name in names if name not in ("thm41", "base", "conformal")]
    elif not m.twisted.f.is_constant():
        names.remove("thm41")
    return names


def _resolve(name):
    check, _, route = name.partition(":")
    if check not in CHECKS:
        raise ManifestError("Unknown check '%s'" % name)
    if route:
        if check != "normality" or route not in NORMALITY_ROUTES:
            raise ManifestError("Unknown check '%s'" % name)
        return lambda m, points, tolerance: check_normality(m, points, tolerance, route)
    return CHECKS[check]


def run_checks(manifest):
    """
    Builds the manifold and runs every requested check over the same sample points
    """
    manifest.validate()
    m = manifest.manifold.build()

    names = list(manifest.checks or DEFAULT_CHECKS)
    if names == ["all"]:
        names = applicable_checks(m)
    functions = [(name, _resolve(name)) for name in names]

    chart = m.chart
    coords = sample_points(chart.domain, manifest.samples, manifest.seed, periodic=chart.periodic)
    points = [chart.at(c, manifest.order) for c in coords]

    reports = []
    for name, function in functions:
        start = time.perf_counter()
        results = function(m, points, manifest.tolerance)
        logger.info("check %s done in %.2fs" % (name, time.perf_counter() - start))
        if logger.isEnabledFor(logging.DEBUG):
            for r in results:
                logger.debug("%r" % r)
        reports.extend(results)

    environment = Environment.create(
        seed=manifest.seed,
        tolerance=manifest.tolerance,
        samples=manifest.samples,
        order=manifest.order,
        version=VERSION,
    )
    label = m.name if m.twisted is None else m.structure.label
    return Report.build(label, environment, reports)


# =====================================================================
# Command line
# =====================================================================


def build_parser():
    parser = argparse.ArgumentParser(
        prog="acms-harmonic", description="Numerical checks of almost contact metric structure identities."
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="log progress (repeat for debug output)")
    commands = parser.add_subparsers(dest="command", required=True)

    check = commands.add_parser("check", help="run the checks listed in a manifest")
    check.add_argument("--manifest", required=True, metavar="PATH", help="manifest JSON file")
    check.add_argument("--samples", type=int, metavar="N", help="number of sample points")
    check.add_argument("--seed", type=int, metavar="S", help="sampling seed")
    check.add_argument("--tol", type=float, metavar="T", help="residual tolerance")
    check.add_argument("--order", type=int, metavar="K", help="jet order, 2 or 3")
    check.add_argument("--json", metavar="PATH", help="write the report here instead of standard output")

    listing = commands.add_parser("catalog", help="catalog operations")
    listing.add_argument("action", choices=["list"])
    listing.add_argument("--json", action="store_true", help="print the listing as JSON")

    return parser


def _configure_logging(verbosity):
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _check(args):
    manifest = Manifest.read(args.manifest)
    overrides = {"samples": args.samples, "seed": args.seed, "tolerance": args.tol, "order": args.order}
    for attr, value in overrides.items():
        if value is not None:
            setattr(manifest, attr, value)

    report = run_checks(manifest)
    output = report.to_json()

    if args.json:
        with open(args.json, "w", encoding="utf-8") as f:
            f.write(output)
        for c in report.checks:
            print("%-28s %-12s max %.3g" % (c.name, c.verdict, c.max_residual))
        print("overall: %s" % report.verdict)
    else:
        sys.stdout.write(output)

    return 0 if report.verdict == PASS else 1


def _catalog(args):
    entries = catalog.catalog_list()
    if args.json:
        sys.stdout.write(json.dumps(entries, indent=2, ensure_ascii=False) + "\n")
        return 0

    for entry in entries:
        print("%-14s %s" % (entry["name"], entry["description"]))
        for name, param in entry.get("params", {}).items():
            detail = "required" if param["required"] else "default %s" % param["default"]
            print("%14s   %s (%s, %s)" % ("", name, param["type"], detail))
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)

    try:
        if args.command == "check":
            return _check(args)
        return _catalog(args)
    except AcmsException as ex:
        print("%s: %s" % (ex.code, ex), file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
