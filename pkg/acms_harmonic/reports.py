import json

from .serialization import FloatField, IntegerField, ObjectField, ObjectListField, SerializableObject, StringField
from .utils import FAIL, INCONCLUSIVE, PASS, classify, consistent, verdict


class ResidualReport:
    """
    Residual norms of one identity at a sweep of points, judged against a tolerance
    """

    def __init__(self, name, tolerance, residuals=None):
        self.name = name
        self.tolerance = tolerance
        self.residuals = list(residuals) if residuals else []

    def add(self, value):
        self.residuals.append(float(value))

    @property
    def points(self):
        return len(self.residuals)

    @property
    def maximum(self):
        return max(self.residuals) if self.residuals else 0.0

    @property
    def verdict(self):
        return verdict(self.maximum, self.tolerance)

    def summary(self):
        return CheckSummary.create(
            name=self.name,
            points=self.points,
            max_residual=self.maximum,
            tolerance=self.tolerance,
            verdict=self.verdict,
        )

    def __repr__(self):
        return "ResidualReport(%s, max=%.3g, %s)" % (self.name, self.maximum, self.verdict)


class EquivalenceReport(ResidualReport):
    """
    Check of an equivalence between residuals. At each point every side is classified with the dead band; a point
    where one side is small and another large fails the report, and any unclassifiable side makes it inconclusive.
    """

    def __init__(self, name, tolerance):
        super().__init__(name, tolerance)
        self.pairs = []

    def add_pair(self, *sides):
        sides = tuple(float(s) for s in sides)
        self.pairs.append(sides)
        self.add(max(sides))

    @property
    def verdict(self):
        verdicts = [tuple(classify(s) for s in sides) for sides in self.pairs]
        if any(not consistent(*pair) for pair in verdicts):
            return FAIL
        if any(INCONCLUSIVE in pair for pair in verdicts):
            return INCONCLUSIVE
        return PASS


# =====================================================================
# Serialized report
# =====================================================================


class CheckSummary(SerializableObject):
    name = StringField()
    points = IntegerField()
    max_residual = FloatField()
    tolerance = FloatField()
    verdict = StringField()


class Environment(SerializableObject):
    seed = IntegerField()
    tolerance = FloatField()
    samples = IntegerField()
    order = IntegerField()
    version = StringField()


class Report(SerializableObject):
    manifold = StringField()
    environment = ObjectField(item_class=Environment)
    checks = ObjectListField(item_class=CheckSummary)
    verdict = StringField()

    @classmethod
    def build(cls, manifold, environment, residual_reports):
        checks = [r.summary() for r in residual_reports]
        overall = FAIL if any(c.verdict == FAIL for c in checks) else PASS
        return cls.create(manifold=manifold, environment=environment, checks=checks, verdict=overall)

    def to_json(self):
        return json.dumps(self.serialize(), indent=2) + "\n"
