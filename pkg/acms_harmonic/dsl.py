"""
Scalar expressions of chart coordinates.

Expressions are parsed once into an immutable tree and evaluated on :class:`Jet` values, which carry raw
derivatives (not divided by factorials) up to order 3 along a batch of seeding directions.
"""

import logging
import math
import numbers
import re
from abc import ABCMeta, abstractmethod
from dataclasses import dataclass

import numpy as np

from .exceptions import ArityError, ExpressionDomainError, ExpressionSyntaxError, JetOrderError, UnknownIdentifierError

logger = logging.getLogger(__name__)

MAX_ORDER = 3

CONSTANTS = {"pi": math.pi}

DEFAULT_VARIABLE = re.compile(r"^(x[1-9][0-9]*|t)$")


class Jet:
    """
    Truncated Taylor expansion along one direction, batched over many directions at once. The coefficients array
    has shape (order + 1,) + batch and coefficients[k] is the k-th derivative.
    """

    __slots__ = ("coefficients",)

    def __init__(self, coefficients):
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape[0] - 1 > MAX_ORDER:
            raise JetOrderError(coefficients.shape[0] - 1, MAX_ORDER, "Jet arithmetic")
        self.coefficients = coefficients

    @classmethod
    def constant(cls, value, order, shape=()):
        coefficients = np.zeros((order + 1,) + tuple(shape))
        coefficients[0] = value
        return cls(coefficients)

    @classmethod
    def variable(cls, value, seed, order):
        """
        Creates a jet for a coordinate with the given value, moving at rate seed along each batched direction
        """
        seed = np.asarray(seed, dtype=float)
        coefficients = np.zeros((order + 1,) + seed.shape)
        coefficients[0] = value
        if order >= 1:
            coefficients[1] = seed
        return cls(coefficients)

    @property
    def order(self):
        return self.coefficients.shape[0] - 1

    @property
    def value(self):
        return self.coefficients[0]

    def derivative(self, k):
        return self.coefficients[k]

    def _lift(self, other):
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, self.order, self.coefficients.shape[1:])

    def __add__(self, other):
        other = self._lift(other)
        return Jet(self.coefficients + other.coefficients)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._lift(other)
        return Jet(self.coefficients - other.coefficients)

    def __rsub__(self, other):
        return self._lift(other) - self

    def __neg__(self):
        return Jet(-self.coefficients)

    def __mul__(self, other):
        other = self._lift(other)
        a, b = self.coefficients, other.coefficients
        out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
        for k in range(out.shape[0]):
            for j in range(k + 1):
                out[k] += math.comb(k, j) * a[j] * b[k - j]
        return Jet(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * self._lift(other).reciprocal()

    def __rtruediv__(self, other):
        return self._lift(other) * self.reciprocal()

    def __pow__(self, exponent):
        if not isinstance(exponent, int):
            return (self.log() * exponent).exp()
        if exponent < 0:
            return (self ** (-exponent)).reciprocal()

        result = Jet.constant(1.0, self.order, self.coefficients.shape[1:])
        base = self
        while exponent:
            if exponent & 1:
                result = result * base
            exponent >>= 1
            if exponent:
                base = base * base
        return result

    def _chain(self, f0, f1, f2, f3):
        """
        Composes an outer function, given by its derivatives at the current value, with this jet
        """
        u = self.coefficients
        out = np.empty_like(u)
        out[0] = f0
        if self.order >= 1:
            out[1] = f1 * u[1]
        if self.order >= 2:
            out[2] = f2 * u[1] ** 2 + f1 * u[2]
        if self.order >= 3:
            out[3] = f3 * u[1] ** 3 + 3.0 * f2 * u[1] * u[2] + f1 * u[3]
        return Jet(out)

    def sin(self):
        s, c = np.sin(self.value), np.cos(self.value)
        return self._chain(s, c, -s, -c)

    def cos(self):
        s, c = np.sin(self.value), np.cos(self.value)
        return self._chain(c, -s, -c, s)

    def tan(self):
        t = np.tan(self.value)
        sec2 = 1.0 + t * t
        return self._chain(t, sec2, 2.0 * t * sec2, (2.0 + 6.0 * t * t) * sec2)

    def exp(self):
        e = np.exp(self.value)
        return self._chain(e, e, e, e)

    def sinh(self):
        s, c = np.sinh(self.value), np.cosh(self.value)
        return self._chain(s, c, s, c)

    def cosh(self):
        s, c = np.sinh(self.value), np.cosh(self.value)
        return self._chain(c, s, c, s)

    def log(self):
        u = self.value
        return self._chain(np.log(u), 1.0 / u, -1.0 / u**2, 2.0 / u**3)

    def sqrt(self):
        s = np.sqrt(self.value)
        return self._chain(s, 0.5 / s, -0.25 / s**3, 0.375 / s**5)

    def reciprocal(self):
        u = self.value
        return self._chain(1.0 / u, -1.0 / u**2, 2.0 / u**3, -6.0 / u**4)

    def __repr__(self):
        return "Jet(%s)" % np.array2string(self.coefficients, precision=6)


# =====================================================================
# Expression tree
# =====================================================================

PRECEDENCE_ADD = 1
PRECEDENCE_MUL = 2
PRECEDENCE_NEG = 3
PRECEDENCE_POW = 4
PRECEDENCE_ATOM = 5


class Node(metaclass=ABCMeta):
    precedence = PRECEDENCE_ATOM

    @abstractmethod
    def evaluate(self, env):  # pragma: no cover
        pass

    @abstractmethod
    def pretty(self):  # pragma: no cover
        pass

    @abstractmethod
    def names(self):  # pragma: no cover
        pass


@dataclass(frozen=True)
class Number(Node):
    value: float

    @property
    def precedence(self):
        return PRECEDENCE_NEG if self.value < 0 else PRECEDENCE_ATOM

    def evaluate(self, env):
        return Jet.constant(self.value, env.order, env.shape)

    def pretty(self):
        if float(self.value).is_integer() and abs(self.value) < 1e15:
            return "%d" % self.value
        return repr(float(self.value))

    def names(self):
        return set()

    def is_integer(self):
        return float(self.value).is_integer()


@dataclass(frozen=True)
class Variable(Node):
    name: str

    def evaluate(self, env):
        return env.values[self.name]

    def pretty(self):
        return self.name

    def names(self):
        return {self.name}


@dataclass(frozen=True)
class Negate(Node):
    operand: Node
    precedence = PRECEDENCE_NEG

    def evaluate(self, env):
        return -self.operand.evaluate(env)

    def pretty(self):
        return "-" + _wrap(self.operand, self.operand.precedence < PRECEDENCE_NEG)

    def names(self):
        return self.operand.names()


@dataclass(frozen=True)
class BinaryOp(Node):
    op: str
    left: Node
    right: Node

    @property
    def precedence(self):
        return {"+": PRECEDENCE_ADD, "-": PRECEDENCE_ADD, "*": PRECEDENCE_MUL, "/": PRECEDENCE_MUL}.get(
            self.op, PRECEDENCE_POW
        )

    def evaluate(self, env):
        if self.op == "^":
            return self._power(env)

        left, right = self.left.evaluate(env), self.right.evaluate(env)
        if self.op == "+":
            return left + right
        elif self.op == "-":
            return left - right
        elif self.op == "*":
            return left * right

        if np.any(right.value == 0.0):
            raise ExpressionDomainError("Division by zero", self.pretty())
        return left / right

    def _power(self, env):
        exponent = _integer_exponent(self.right)
        base = self.left.evaluate(env)

        if exponent is not None:
            if exponent < 0 and np.any(base.value == 0.0):
                raise ExpressionDomainError("Negative power of zero", self.pretty())
            return base**exponent

        if np.any(base.value <= 0.0):
            raise ExpressionDomainError("Non-integer power of a non-positive base", self.pretty())
        return (base.log() * self.right.evaluate(env)).exp()

    def pretty(self):
        prec = self.precedence
        if self.op == "^":
            left = _wrap(self.left, self.left.precedence <= prec)
            right = _wrap(self.right, self.right.precedence < PRECEDENCE_NEG)
            return "%s^%s" % (left, right)

        left = _wrap(self.left, self.left.precedence < prec)
        right = _wrap(self.right, self.right.precedence <= prec)
        return "%s %s %s" % (left, self.op, right)

    def names(self):
        return self.left.names() | self.right.names()


@dataclass(frozen=True)
class Call(Node):
    function: str
    argument: Node

    def evaluate(self, env):
        arg = self.argument.evaluate(env)
        value = arg.value

        if self.function == "log" and np.any(value <= 0.0):
            raise ExpressionDomainError("Logarithm of a non-positive value", self.pretty())
        if self.function == "sqrt" and (np.any(value < 0.0) or (arg.order > 0 and np.any(value == 0.0))):
            raise ExpressionDomainError("Square root of a non-positive value", self.pretty())

        return getattr(arg, self.function)()

    def pretty(self):
        return "%s(%s)" % (self.function, self.argument.pretty())

    def names(self):
        return self.argument.names()


FUNCTIONS = {name: 1 for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh")}


def _wrap(node, parenthesize):
    text = node.pretty()
    return "(%s)" % text if parenthesize else text


def _integer_exponent(node):
    if isinstance(node, Number) and node.is_integer():
        return int(node.value)
    if isinstance(node, Negate) and isinstance(node.operand, Number) and node.operand.is_integer():
        return -int(node.operand.value)
    return None


class _Environment:
    def __init__(self, values, order, shape):
        self.values = values
        self.order = order
        self.shape = shape


# =====================================================================
# Parsing
# =====================================================================

TOKEN_REGEX = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


class _Parser:
    """
    Recursive descent parser: ^ (right associative) binds tighter than unary minus, then * /, then + -
    """

    def __init__(self, source, variables):
        self.source = source
        self.variables = variables
        self.tokens = self._tokenize(source)
        self.pos = 0

    def _offset(self, index):
        return len(self.source[:index].encode("utf-8"))

    def _tokenize(self, source):
        tokens = []
        index = 0
        while index < len(source):
            if source[index:].strip() == "":
                break
            match = TOKEN_REGEX.match(source, index)
            if not match:
                stripped = len(source[index:]) - len(source[index:].lstrip())
                raise ExpressionSyntaxError(
                    "Unexpected character '%s'" % source[index + stripped], source, self._offset(index + stripped)
                )
            kind = match.lastgroup
            tokens.append((kind, match.group(kind), self._offset(match.start(kind))))
            index = match.end()
        tokens.append(("end", None, self._offset(len(source))))
        return tokens

    def _peek(self):
        return self.tokens[self.pos]

    def _next(self):
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def _expect(self, text):
        kind, value, offset = self._next()
        if value != text:
            found = "end of input" if kind == "end" else "'%s'" % value
            raise ExpressionSyntaxError("Expected '%s' but found %s" % (text, found), self.source, offset)

    def parse(self):
        node = self._expression()
        kind, value, offset = self._peek()
        if kind != "end":
            raise ExpressionSyntaxError("Unexpected '%s'" % value, self.source, offset)
        return node

    def _expression(self):
        node = self._term()
        while self._peek()[1] in ("+", "-") and self._peek()[0] == "op":
            op = self._next()[1]
            node = BinaryOp(op, node, self._term())
        return node

    def _term(self):
        node = self._unary()
        while self._peek()[1] in ("*", "/") and self._peek()[0] == "op":
            op = self._next()[1]
            node = BinaryOp(op, node, self._unary())
        return node

    def _unary(self):
        if self._peek()[1] == "-" and self._peek()[0] == "op":
            self._next()
            return Negate(self._unary())
        return self._power()

    def _power(self):
        node = self._primary()
        if self._peek()[1] == "^":
            self._next()
            node = BinaryOp("^", node, self._unary())
        return node

    def _primary(self):
        kind, value, offset = self._next()

        if kind == "number":
            return Number(float(value))

        if kind == "name":
            if self._peek()[1] == "(":
                return self._call(value, offset)
            if value in CONSTANTS:
                return Number(CONSTANTS[value])
            if not self._is_variable(value):
                raise UnknownIdentifierError(value, self.source, offset)
            return Variable(value)

        if value == "(":
            node = self._expression()
            self._expect(")")
            return node

        found = "end of input" if kind == "end" else "'%s'" % value
        raise ExpressionSyntaxError("Unexpected %s" % found, self.source, offset)

    def _call(self, name, offset):
        if name not in FUNCTIONS:
            raise UnknownIdentifierError(name, self.source, offset)

        self._expect("(")
        args = []
        if self._peek()[1] != ")":
            args.append(self._expression())
            while self._peek()[1] == ",":
                self._next()
                args.append(self._expression())
        self._expect(")")

        if len(args) != FUNCTIONS[name]:
            raise ArityError(name, FUNCTIONS[name], len(args), self.source, offset)
        return Call(name, args[0])

    def _is_variable(self, name):
        if self.variables is None:
            return bool(DEFAULT_VARIABLE.match(name))
        return name in self.variables


class ScalarExpr:
    """
    An immutable parsed expression together with the variable names it may refer to
    """

    def __init__(self, ast, variables=None, source=None):
        self.ast = ast
        self.variables = tuple(variables) if variables is not None else tuple(sorted(ast.names(), key=_name_key))
        self.source = source if source is not None else ast.pretty()

    @property
    def free_variables(self):
        return self.ast.names()

    def is_constant(self):
        return not self.ast.names()

    def pretty(self):
        return self.ast.pretty()

    def evaluate(self, values):
        """
        Evaluates at a point given as a mapping or a sequence of numbers or jets aligned with the variables
        """
        if not isinstance(values, dict):
            values = dict(zip(self.variables, values))

        jets = [v for v in values.values() if isinstance(v, Jet)]
        if jets:
            order, shape = jets[0].order, jets[0].coefficients.shape[1:]
            env_values = {k: v if isinstance(v, Jet) else Jet.constant(v, order, shape) for k, v in values.items()}
        else:
            order, shape = 0, ()
            env_values = {k: Jet.constant(v, 0) for k, v in values.items()}

        missing = self.free_variables - set(env_values)
        if missing:
            raise ExpressionDomainError("No value for %s" % ", ".join(sorted(missing)), self.source)

        result = self.ast.evaluate(_Environment(env_values, order, shape))
        if not np.all(np.isfinite(result.coefficients)):
            raise ExpressionDomainError("Non-finite value", self.source)

        return result if jets else float(result.value)

    __call__ = evaluate

    def _combine(self, op, other, swap=False):
        other = _as_expr(other)
        left, right = (other, self) if swap else (self, other)
        variables = left.variables + tuple(v for v in right.variables if v not in left.variables)
        return ScalarExpr(BinaryOp(op, left.ast, right.ast), variables)

    def __add__(self, other):
        return self._combine("+", other)

    def __radd__(self, other):
        return self._combine("+", other, swap=True)

    def __sub__(self, other):
        return self._combine("-", other)

    def __rsub__(self, other):
        return self._combine("-", other, swap=True)

    def __mul__(self, other):
        return self._combine("*", other)

    def __rmul__(self, other):
        return self._combine("*", other, swap=True)

    def __truediv__(self, other):
        return self._combine("/", other)

    def __rtruediv__(self, other):
        return self._combine("/", other, swap=True)

    def __pow__(self, other):
        return self._combine("^", other)

    def __neg__(self):
        return ScalarExpr(Negate(self.ast), self.variables)

    def __eq__(self, other):
        return isinstance(other, ScalarExpr) and self.ast == other.ast

    def __hash__(self):
        return hash(self.ast)

    def __repr__(self):
        return "ScalarExpr('%s')" % self.pretty()


def _as_expr(value):
    if isinstance(value, ScalarExpr):
        return value
    value = float(value)
    return ScalarExpr(Number(value) if value >= 0 else Negate(Number(-value)), ())


def _name_key(name):
    match = re.match(r"^x(\d+)$", name)
    return (0, int(match.group(1)), "") if match else (1, 0, name)


def parse(src, variables=None):
    """
    Parses the given source text into an expression
    :param src: the expression source, e.g. "1/(1+x1^2+x2^2)"
    :param variables: the allowed variable names, defaults to x1, x2, ... and t
    :return: the expression
    """
    if isinstance(src, ScalarExpr):
        return src
    if isinstance(src, numbers.Real):
        return _as_expr(src)
    if not src or not src.strip():
        raise ExpressionSyntaxError("Empty expression", src or "", 0)

    ast = _Parser(src, variables).parse()
    if variables is None:
        variables = sorted(ast.names(), key=_name_key)

    if logger.isEnabledFor(logging.DEBUG):
        logger.debug("parsed '%s' as %s" % (src, ast.pretty()))
    return ScalarExpr(ast, variables, src)


def evaluate(expr, point):
    """
    Evaluates an expression at a point of numbers or jets
    """
    return parse(expr).evaluate(point)
