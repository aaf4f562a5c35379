# business_logic/expr.py
# Metric component expressions: parser, printer, exact partial derivatives and vectorised evaluation

import math
import re
from dataclasses import dataclass, field
from functools import singledispatch, singledispatchmethod
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from data_access.models import (
    ArityError, ExpressionDomainError, ExpressionSyntaxError, UnknownIdentifierError
)

FUNCTIONS = ('sin', 'cos', 'tan', 'sinh', 'cosh', 'exp', 'ln', 'sqrt')
BINARY_SYMBOLS = {'add': '+', 'sub': '-', 'mul': '*', 'div': '/', 'pow': '^'}
BINARY_PRECEDENCE = {'add': 1, 'sub': 1, 'mul': 2, 'div': 2, 'pow': 4}
NEG_PRECEDENCE = 3
ATOM_PRECEDENCE = 5


class ExprAST:
    """Immutable expression node; arithmetic operators build simplified trees"""
    precedence = ATOM_PRECEDENCE

    @property
    def children(self) -> Tuple['ExprAST', ...]:
        return ()

    def __str__(self):
        return to_string(self)

    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __pow__(self, other):
        return power(self, _coerce(other))

    def __neg__(self):
        return neg(self)


@dataclass(frozen=True, eq=False)
class Constant(ExprAST):
    value: float
    derivatives: Dict[int, ExprAST] = field(default_factory=dict, init=False, repr=False)

    def __repr__(self):
        return f"Constant({self.value!r})"


@dataclass(frozen=True, eq=False)
class Variable(ExprAST):
    index: int
    name: str
    derivatives: Dict[int, ExprAST] = field(default_factory=dict, init=False, repr=False)

    def __repr__(self):
        return f"Variable({self.index}, {self.name!r})"


@dataclass(frozen=True, eq=False)
class UnaryOp(ExprAST):
    op: str
    operand: ExprAST
    derivatives: Dict[int, ExprAST] = field(default_factory=dict, init=False, repr=False)

    @property
    def precedence(self):
        return NEG_PRECEDENCE if self.op == 'neg' else ATOM_PRECEDENCE

    @property
    def children(self):
        return (self.operand,)

    def __repr__(self):
        return f"{self.op}({self.operand!r})"


@dataclass(frozen=True, eq=False)
class BinaryOp(ExprAST):
    op: str
    left: ExprAST
    right: ExprAST
    derivatives: Dict[int, ExprAST] = field(default_factory=dict, init=False, repr=False)

    @property
    def precedence(self):
        return BINARY_PRECEDENCE[self.op]

    @property
    def children(self):
        return (self.left, self.right)

    def __repr__(self):
        return f"{self.op}({self.left!r}, {self.right!r})"


ZERO = Constant(0.0)
ONE = Constant(1.0)


def _coerce(value) -> ExprAST:
    if isinstance(value, ExprAST):
        return value
    return Constant(float(value))


def _is_const(e: ExprAST, value: Optional[float] = None) -> bool:
    return isinstance(e, Constant) and (value is None or e.value == value)


def _is_integer_const(e: ExprAST) -> bool:
    return isinstance(e, Constant) and float(e.value).is_integer()


# ---------------------------------------------------------------------------
# Smart constructors (safe local simplification only)
# ---------------------------------------------------------------------------

def _fold(fn, *values) -> Optional[Constant]:
    try:
        result = fn(*values)
    except (ArithmeticError, ValueError):
        return None
    if isinstance(result, complex) or not math.isfinite(result):
        return None
    return Constant(float(result))


def add(a: ExprAST, b: ExprAST) -> ExprAST:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return _fold(lambda x, y: x + y, a.value, b.value) or BinaryOp('add', a, b)
    return BinaryOp('add', a, b)


def sub(a: ExprAST, b: ExprAST) -> ExprAST:
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    if _is_const(a) and _is_const(b):
        return _fold(lambda x, y: x - y, a.value, b.value) or BinaryOp('sub', a, b)
    return BinaryOp('sub', a, b)


def mul(a: ExprAST, b: ExprAST) -> ExprAST:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return _fold(lambda x, y: x * y, a.value, b.value) or BinaryOp('mul', a, b)
    return BinaryOp('mul', a, b)


def div(a: ExprAST, b: ExprAST) -> ExprAST:
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return ZERO
    if _is_const(a) and _is_const(b) and b.value != 0.0:
        return _fold(lambda x, y: x / y, a.value, b.value) or BinaryOp('div', a, b)
    return BinaryOp('div', a, b)


def power(a: ExprAST, b: ExprAST) -> ExprAST:
    if _is_const(b, 1.0):
        return a
    if _is_const(b, 0.0):
        return ONE
    if _is_const(a) and _is_const(b):
        if a.value < 0 and not _is_integer_const(b):
            return BinaryOp('pow', a, b)
        if a.value == 0 and b.value < 0:
            return BinaryOp('pow', a, b)
        return _fold(lambda x, y: x ** y, a.value, b.value) or BinaryOp('pow', a, b)
    return BinaryOp('pow', a, b)


def neg(a: ExprAST) -> ExprAST:
    if isinstance(a, Constant):
        return Constant(-a.value) if a.value != 0.0 else ZERO
    if isinstance(a, UnaryOp) and a.op == 'neg':
        return a.operand
    return UnaryOp('neg', a)


_SCALAR_FUNCTIONS = {
    'sin': math.sin, 'cos': math.cos, 'tan': math.tan, 'sinh': math.sinh, 'cosh': math.cosh,
    'exp': math.exp, 'ln': math.log, 'sqrt': math.sqrt,
}


def apply_function(name: str, a: ExprAST) -> ExprAST:
    if name not in _SCALAR_FUNCTIONS:
        raise ValueError(f"unknown function '{name}'")
    if isinstance(a, Constant):
        folded = _fold(_SCALAR_FUNCTIONS[name], a.value)
        if folded is not None:
            return folded
    return UnaryOp(name, a)


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

def _wrap(text: str, needed: bool) -> str:
    return f"({text})" if needed else text


@singledispatch
def _render(node: ExprAST) -> str:
    raise TypeError(f"cannot print {type(node).__name__}")


@_render.register
def _(node: Constant) -> str:
    text = repr(float(node.value))
    # a leading minus is only legal in factor position
    return _wrap(text, math.copysign(1.0, node.value) < 0)


@_render.register
def _(node: Variable) -> str:
    return node.name


@_render.register
def _(node: UnaryOp) -> str:
    if node.op == 'neg':
        return '-' + _wrap(_render(node.operand), node.operand.precedence < BINARY_PRECEDENCE['pow'])
    return f"{node.op}({_render(node.operand)})"


@_render.register
def _(node: BinaryOp) -> str:
    symbol = BINARY_SYMBOLS[node.op]
    left, right = _render(node.left), _render(node.right)
    if node.op == 'pow':
        # right-associative; the exponent is a factor, so a leading minus is fine there
        left = _wrap(left, node.left.precedence <= BINARY_PRECEDENCE['pow'])
        right = _wrap(right, node.right.precedence < NEG_PRECEDENCE)
        return f"{left}^{right}"
    # parentheses keep the tree shape exactly so reparsing evaluates bit-identically
    left = _wrap(left, node.left.precedence < node.precedence)
    right = _wrap(right, node.right.precedence <= node.precedence)
    if node.op in ('add', 'sub'):
        return f"{left} {symbol} {right}"
    return f"{left}{symbol}{right}"


def to_string(e: ExprAST) -> str:
    """Print with minimal parentheses in the input grammar"""
    return _render(e)


def _short(e: ExprAST, limit: int = 200) -> str:
    text = to_string(e)
    return text if len(text) <= limit else text[:limit - 3] + "..."


def variables(e: ExprAST) -> Set[int]:
    """Indices of the coordinates an expression depends on"""
    seen: Set[int] = set()
    found: Set[int] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if isinstance(node, Variable):
            found.add(node.index)
        stack.extend(node.children)
    return found


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r'\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)'
    r'|(?P<name>[A-Za-z_][A-Za-z_0-9]*)'
    r'|(?P<op>[-+*/^(),]))'
)


def _tokenize(text: str) -> List[Tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        match = _TOKEN.match(text, pos)
        if not match or match.end() == pos:
            raise ExpressionSyntaxError(f"unexpected character '{text[pos]}'", pos, text)
        kind = match.lastgroup
        start = match.start(kind)
        tokens.append((kind, match.group(kind), start))
        pos = match.end()
    tokens.append(('end', '', len(text)))
    return tokens


class _Parser:
    """Recursive descent over the expression grammar"""

    def __init__(self, text: str, coords: Sequence[str]):
        self.text = text
        self.coords = {name: i for i, name in enumerate(coords)}
        self.tokens = _tokenize(text)
        self.pos = 0

    @property
    def current(self) -> Tuple[str, str, int]:
        return self.tokens[self.pos]

    def _advance(self) -> Tuple[str, str, int]:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def _error(self, message: str, cls=ExpressionSyntaxError):
        _, _, position = self.current
        return cls(message, position, self.text)

    def _describe(self) -> str:
        kind, value, _ = self.current
        return "end of input" if kind == 'end' else f"'{value}'"

    def _expect(self, value: str):
        if self.current[0] != 'op' or self.current[1] != value:
            raise self._error(f"expected '{value}' but found {self._describe()}")
        self._advance()

    def parse(self) -> ExprAST:
        if self.current[0] == 'end':
            raise self._error("empty expression")
        node = self.expr()
        if self.current[0] != 'end':
            raise self._error(f"unexpected {self._describe()}")
        return node

    def expr(self) -> ExprAST:
        node = self.term()
        while self.current[0] == 'op' and self.current[1] in '+-':
            op = self._advance()[1]
            rhs = self.term()
            node = BinaryOp('add' if op == '+' else 'sub', node, rhs)
        return node

    def term(self) -> ExprAST:
        node = self.factor()
        while self.current[0] == 'op' and self.current[1] in '*/':
            op = self._advance()[1]
            rhs = self.factor()
            node = BinaryOp('mul' if op == '*' else 'div', node, rhs)
        return node

    def factor(self) -> ExprAST:
        if self.current[0] == 'op' and self.current[1] == '-':
            self._advance()
            return UnaryOp('neg', self.power())
        return self.power()

    def power(self) -> ExprAST:
        base = self.atom()
        if self.current[0] == 'op' and self.current[1] == '^':
            self._advance()
            return BinaryOp('pow', base, self.factor())
        return base

    def atom(self) -> ExprAST:
        kind, value, position = self.current
        if kind == 'number':
            number = float(value)
            if not math.isfinite(number):
                raise self._error(f"numeric literal '{value}' is out of range")
            self._advance()
            return Constant(number)
        if kind == 'name':
            self._advance()
            is_call = self.current[0] == 'op' and self.current[1] == '('
            if value in FUNCTIONS:
                if not is_call:
                    raise ArityError(f"function '{value}' needs one parenthesised argument", position, self.text)
                self._advance()
                argument = self.expr()
                if self.current[0] == 'op' and self.current[1] == ',':
                    raise self._error(f"function '{value}' takes exactly one argument", ArityError)
                self._expect(')')
                return UnaryOp(value, argument)
            if value in self.coords:
                if is_call:
                    raise ArityError(f"coordinate '{value}' is not a function", position, self.text)
                return Variable(self.coords[value], value)
            raise UnknownIdentifierError(f"unknown identifier '{value}'", position, self.text)
        if kind == 'op' and value == '(':
            self._advance()
            node = self.expr()
            self._expect(')')
            return node
        raise self._error(f"unexpected {self._describe()}")


def parse(text: str, coords: Sequence[str]) -> ExprAST:
    """Parse expression text over the given ordered coordinate names"""
    coords = list(coords)
    if not coords:
        raise ValueError("at least one coordinate name is required")
    if len(set(coords)) != len(coords):
        raise ValueError(f"coordinate names must be distinct: {coords}")
    for name in coords:
        if not re.fullmatch(r'[A-Za-z_][A-Za-z_0-9]*', name) or name in FUNCTIONS:
            raise ValueError(f"invalid coordinate name '{name}'")
    return _Parser(text, coords).parse()


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------

def differentiate(e: ExprAST, i: int) -> ExprAST:
    """Exact partial derivative d/dx_i; results are cached on the node"""
    cached = e.derivatives.get(i)
    if cached is None:
        cached = _derive(e, i)
        e.derivatives[i] = cached
    return cached


def differentiate_multi(e: ExprAST, indices: Sequence[int]) -> ExprAST:
    for i in indices:
        e = differentiate(e, i)
    return e


@singledispatch
def _derive(node: ExprAST, i: int) -> ExprAST:
    raise TypeError(f"cannot differentiate {type(node).__name__}")


@_derive.register
def _(node: Constant, i: int) -> ExprAST:
    return ZERO


@_derive.register
def _(node: Variable, i: int) -> ExprAST:
    return ONE if node.index == i else ZERO


@_derive.register
def _(node: UnaryOp, i: int) -> ExprAST:
    u = node.operand
    du = differentiate(u, i)
    if _is_const(du, 0.0):
        return ZERO
    op = node.op
    if op == 'neg':
        return neg(du)
    if op == 'sin':
        return mul(apply_function('cos', u), du)
    if op == 'cos':
        return neg(mul(apply_function('sin', u), du))
    if op == 'tan':
        return div(du, power(apply_function('cos', u), Constant(2.0)))
    if op == 'sinh':
        return mul(apply_function('cosh', u), du)
    if op == 'cosh':
        return mul(apply_function('sinh', u), du)
    if op == 'exp':
        return mul(node, du)
    if op == 'ln':
        return div(du, u)
    if op == 'sqrt':
        return div(du, mul(Constant(2.0), node))
    raise TypeError(f"unknown unary operator '{op}'")


@_derive.register
def _(node: BinaryOp, i: int) -> ExprAST:
    u, v = node.left, node.right
    du, dv = differentiate(u, i), differentiate(v, i)
    op = node.op
    if op == 'add':
        return add(du, dv)
    if op == 'sub':
        return sub(du, dv)
    if op == 'mul':
        return add(mul(du, v), mul(u, dv))
    if op == 'div':
        if _is_const(dv, 0.0):
            return div(du, v)
        return div(sub(mul(du, v), mul(u, dv)), power(v, Constant(2.0)))
    if op == 'pow':
        if _is_integer_const(v):
            c = v.value
            return mul(mul(Constant(c), power(u, Constant(c - 1.0))), du)
        # u^v = exp(v ln u)
        if _is_const(dv, 0.0):
            return mul(node, mul(v, div(du, u)))
        log_term = mul(dv, apply_function('ln', u))
        return mul(node, add(log_term, mul(v, div(du, u))))
    raise TypeError(f"unknown binary operator '{op}'")


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

class Evaluator:
    """Evaluates expressions over a batch of points, memoising shared subtrees"""

    def __init__(self, points: np.ndarray):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[None, :]
        self.points = points
        self.count = points.shape[0]
        self._memo: Dict[int, np.ndarray] = {}
        # keeps memoised nodes alive so ids stay unique during this evaluation
        self._keep: List[ExprAST] = []

    def __call__(self, e: ExprAST) -> np.ndarray:
        cached = self._memo.get(id(e))
        if cached is not None:
            return cached
        with np.errstate(all='ignore'):
            value = self._compute(e)
        bad = ~np.isfinite(value)
        if np.any(bad):
            self._fail("value overflows to a non-finite number", e, bad)
        self._memo[id(e)] = value
        self._keep.append(e)
        return value

    def _fail(self, message: str, node: ExprAST, mask: np.ndarray):
        where = int(np.argmax(mask))
        raise ExpressionDomainError(message, _short(node), self.points[where])

    @singledispatchmethod
    def _compute(self, node: ExprAST) -> np.ndarray:
        raise TypeError(f"cannot evaluate {type(node).__name__}")

    @_compute.register
    def _(self, node: Constant) -> np.ndarray:
        return np.full(self.count, node.value)

    @_compute.register
    def _(self, node: Variable) -> np.ndarray:
        if node.index >= self.points.shape[1]:
            raise ValueError(f"variable {node.name} has index {node.index} outside a "
                             f"{self.points.shape[1]}-dimensional point")
        return self.points[:, node.index].copy()

    @_compute.register
    def _(self, node: UnaryOp) -> np.ndarray:
        u = self(node.operand)
        op = node.op
        if op == 'neg':
            return -u
        if op == 'ln':
            bad = u <= 0
            if np.any(bad):
                self._fail("logarithm of a non-positive value", node, bad)
            return np.log(u)
        if op == 'sqrt':
            bad = u < 0
            if np.any(bad):
                self._fail("square root of a negative value", node, bad)
            return np.sqrt(u)
        return _NUMPY_FUNCTIONS[op](u)

    @_compute.register
    def _(self, node: BinaryOp) -> np.ndarray:
        u, v = self(node.left), self(node.right)
        op = node.op
        if op == 'add':
            return u + v
        if op == 'sub':
            return u - v
        if op == 'mul':
            return u * v
        if op == 'div':
            bad = v == 0
            if np.any(bad):
                self._fail("division by zero", node, bad)
            return u / v
        if _is_integer_const(node.right):
            bad = (u == 0) & (v < 0)
            if np.any(bad):
                self._fail("division by zero", node, bad)
            return np.power(u, v)
        bad = u < 0
        if np.any(bad):
            self._fail("negative base with a non-integer exponent", node, bad)
        bad = (u == 0) & (v < 0)
        if np.any(bad):
            self._fail("division by zero", node, bad)
        return np.power(u, v)


_NUMPY_FUNCTIONS = {
    'sin': np.sin, 'cos': np.cos, 'tan': np.tan, 'sinh': np.sinh, 'cosh': np.cosh, 'exp': np.exp,
}


def evaluate(e: ExprAST, p) -> float:
    """Value of e at a single point"""
    return float(Evaluator(np.asarray(p, dtype=float))(e)[0])


def evaluate_batch(e: ExprAST, points: np.ndarray) -> np.ndarray:
    """Values of e at each row of points"""
    return Evaluator(points)(e).copy()


def evaluate_many(exprs: Sequence[ExprAST], points: np.ndarray) -> np.ndarray:
    """Values of several expressions at each row of points, shape (len(exprs), m)"""
    evaluator = Evaluator(points)
    if not exprs:
        return np.zeros((0, evaluator.count))
    return np.vstack([evaluator(e) for e in exprs])
