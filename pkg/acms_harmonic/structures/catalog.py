"""
Built-in manifolds with almost contact metric structures, addressable by id from manifests
"""

import logging

from ..exceptions import CatalogError
from ..geometry import ChartManifold, TensorField
from .acms import AcmStructure
from .fibration import HermitianBase, SubmersionContext, build_twisted_product

logger = logging.getLogger(__name__)


class CatalogManifold:
    """
    A built catalog entry: the structure and, where there is one, the submersion onto a base and the twisted product
    it came from
    """

    def __init__(self, name, structure, submersion=None, twisted=None, sasakian=False, normal=True):
        self.name = name
        self.structure = structure
        self.submersion = submersion
        self.twisted = twisted
        self.sasakian = sasakian
        self.normal = normal

    @property
    def chart(self):
        return self.structure.chart

    def __repr__(self):
        return "CatalogManifold(%s)" % self.name


def _flat(dim):
    return [[1 if i == j else 0 for j in range(dim)] for i in range(dim)]


def _scaled(factor, dim):
    return [[factor if i == j else 0 for j in range(dim)] for i in range(dim)]


def _standard_j(dim):
    """
    Ĵ∂_{2k−1} = ∂_{2k}
    """
    j = [[0] * dim for _ in range(dim)]
    for k in range(0, dim, 2):
        j[k + 1][k] = 1
        j[k][k + 1] = -1
    return j


def flat_cosymplectic():
    chart = ChartManifold(3, _flat(3), label="flat-cosym-3")
    structure = AcmStructure(chart, [[0, -1, 0], [1, 0, 0], [0, 0, 0]], [0, 0, 1], [0, 0, 1])
    return CatalogManifold("flat-cosym-3", structure)


def heisenberg():
    """
    η = ½(dx3 − x2 dx1), ξ = 2∂3 and g = η⊗η + ¼(dx1² + dx2²), fibred over the plane with metric ¼(dx1² + dx2²)
    """
    metric = [
        ["x2^2/4 + 1/4", 0, "-x2/4"],
        [0, "1/4", 0],
        ["-x2/4", 0, "1/4"],
    ]
    chart = ChartManifold(3, metric, label="heis-3")
    theta = [[0, 1, 0], [-1, 0, 0], [0, "x2", 0]]
    structure = AcmStructure(chart, theta, [0, 0, 2], ["-x2/2", 0, "1/2"])

    base = ChartManifold(2, _scaled("1/4", 2), label="heis-3 base")
    return CatalogManifold("heis-3", structure, submersion=SubmersionContext(structure, base), sasakian=True)


def sphere():
    """
    Round S³ in stereographic coordinates with the Hopf field and θ = −∇ξ
    """
    metric = _scaled("4/(1 + x1^2 + x2^2 + x3^2)^2", 3)
    chart = ChartManifold(3, metric, label="sphere-3")
    xi = TensorField(chart, "u", ["-x2 - x1*x3", "x1 - x2*x3", "(x1^2 + x2^2 - x3^2 - 1)/2"], label="ξ")
    theta = TensorField(chart, "ud", evaluator=lambda p: -1.0 * p.nabla(xi), label="θ")
    return CatalogManifold("sphere-3", AcmStructure(chart, theta, xi), sasakian=True)


def r5_wobble():
    """
    Flat ℝ⁵ with a complex structure on the first four coordinates rotating with x3, which is not integrable
    """
    theta = [[0] * 5 for _ in range(5)]
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
        theta[row][col] = value

    chart = ChartManifold(5, _flat(5), label="r5-wobble")
    structure = AcmStructure(chart, theta, [0, 0, 0, 0, 1], [0, 0, 0, 0, 1])
    return CatalogManifold("r5-wobble", structure, normal=False)


BASES = {
    "flat-c1": lambda: HermitianBase(ChartManifold(2, _flat(2), label="flat-c1"), _standard_j(2)),
    "sphere-2": lambda: HermitianBase(
        ChartManifold(2, _scaled("4/(1 + x1^2 + x2^2)^2", 2), label="sphere-2"), _standard_j(2)
    ),
    "flat-c2": lambda: HermitianBase(ChartManifold(4, _flat(4), label="flat-c2"), _standard_j(4)),
}


def hermitian_base(name):
    if name not in BASES:
        raise CatalogError("Unknown Hermitian base '%s', expected one of %s" % (name, ", ".join(BASES)))
    return BASES[name]()


def twist(base=None, f="1", F="1"):
    """
    The twisted product of a catalog Hermitian base with S¹
    """
    if base is None:
        raise CatalogError("Catalog manifold 'twist' requires a 'base' parameter")

    tp = build_twisted_product(hermitian_base(base), f, F)
    submersion = tp.submersion() if tp.f.is_constant() else None
    return CatalogManifold("twist", tp.structure, submersion=submersion, twisted=tp)


CATALOG = {
    "flat-cosym-3": (flat_cosymplectic, 3, "Flat ℝ³ with θ∂1 = ∂2 and ξ = ∂3, cosymplectic", None),
    "heis-3": (heisenberg, 3, "Heisenberg group, Sasakian, η = ½(dx3 − x2 dx1), ξ = 2∂3", None),
    "sphere-3": (sphere, 3, "Round S³ in a stereographic chart with the Hopf field, Sasakian", None),
    "r5-wobble": (r5_wobble, 5, "Flat ℝ⁵ with a coordinate-dependent complex block, not normal", None),
    "twist": (
        twist,
        None,
        "Twisted product B×S¹ with metric f²g + F²dt² over a Hermitian base",
        {
            "base": {"type": "string", "required": True, "choices": list(BASES)},
            "f": {"type": "expression", "required": False, "default": "1"},
            "F": {"type": "expression", "required": False, "default": "1"},
        },
    ),
}


def catalog_list():
    """
    Describes every catalog entry and, for parameterized ones, their parameters
    """
    entries = []
    for name, (_, dim, description, params) in CATALOG.items():
        entry = {"name": name, "dim": dim, "description": description}
        if params:
            entry["params"] = params
        entries.append(entry)
    return entries


def build(name, params=None):
    """
    Builds a catalog manifold by id
    """
    if name not in CATALOG:
        raise CatalogError("Unknown catalog manifold '%s'" % name)

    builder, _, _, schema = CATALOG[name]
    params = params or {}
    unknown = set(params) - set(schema or {})
    if unknown:
        raise CatalogError("Catalog manifold '%s' has no parameter '%s'" % (name, sorted(unknown)[0]))

    logger.info("building catalog manifold %s %s" % (name, params or ""))
    return builder(**params)
