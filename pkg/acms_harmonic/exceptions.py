E_PARSE = "E_PARSE"
E_CATALOG = "E_CATALOG"
E_DOMAIN = "E_DOMAIN"
E_MANIFEST = "E_MANIFEST"


class AcmsException(Exception):
    code = None
    message = "Verification error"

    def __str__(self):
        return self.message


class ExpressionSyntaxError(AcmsException):
    code = E_PARSE

    def __init__(self, message, source, offset):
        self.message = message
        self.source = source
        self.offset = offset

    def __str__(self):
        return "%s at offset %d in '%s'" % (self.message, self.offset, self.source)


class UnknownIdentifierError(ExpressionSyntaxError):
    def __init__(self, name, source, offset):
        super().__init__("Unknown identifier '%s'" % name, source, offset)
        self.name = name


class ArityError(ExpressionSyntaxError):
    def __init__(self, function, expected, given, source, offset):
        super().__init__(
            "Function '%s' takes %d argument%s but %d given"
            % (function, expected, "" if expected == 1 else "s", given),
            source,
            offset,
        )
        self.function = function


class ExpressionDomainError(AcmsException):
    """
    Raised when an expression is evaluated outside the domain of one of its operations
    """

    code = E_DOMAIN

    def __init__(self, message, expression):
        self.message = message
        self.expression = expression

    def __str__(self):
        return "%s in sub-expression '%s'" % (self.message, self.expression)


class DegenerateMetricError(AcmsException):
    code = E_DOMAIN

    def __init__(self, coords, reason="metric is not positive definite"):
        self.coords = tuple(float(c) for c in coords)
        self.message = "Degenerate metric at %s: %s" % (_format_coords(self.coords), reason)


class DegenerateInputError(AcmsException):
    code = E_DOMAIN

    def __init__(self, message):
        self.message = message


class NotHorizontalError(DegenerateInputError):
    def __init__(self, what, eta_value):
        super().__init__("%s is not horizontal (eta component %.3g)" % (what, eta_value))


class WarpingError(AcmsException):
    code = E_DOMAIN
    message = "Warping function %s comes within %.0e of zero on the domain (minimum %.3g)"

    def __init__(self, name, minimum, threshold):
        self.name = name
        self.minimum = minimum
        self.threshold = threshold

    def __str__(self):
        return self.message % (self.name, self.threshold, self.minimum)


class NonHermitianBaseError(AcmsException):
    code = E_DOMAIN

    def __init__(self, invariant, residual):
        self.message = "Base is not Hermitian: %s residual %.3g" % (invariant, residual)


class CatalogError(AcmsException):
    code = E_CATALOG

    def __init__(self, message):
        self.message = message


class ManifestError(AcmsException):
    code = E_MANIFEST

    def __init__(self, message):
        self.message = message


class StructureError(ManifestError):
    pass


class JetOrderError(ManifestError):
    def __init__(self, required, available, quantity):
        super().__init__("%s needs jet order %d but only %d is available" % (quantity, required, available))
        self.required = required
        self.available = available


class NonRiemannianSubmersionError(ManifestError):
    message = "Warping function f must be constant for the projection to be a Riemannian submersion (got '%s')"

    def __init__(self, expression):
        self.expression = expression

    def __str__(self):
        return self.message % self.expression


def _format_coords(coords):
    return "(%s)" % ", ".join("%.6g" % c for c in coords)
