"""Immutable expression trees over named real variables.

Trees are built either by :func:`parse` (no simplification, the tree mirrors
the input text) or through the folding constructors :func:`add`, :func:`mul`,
... which apply constant folding and the 0/1 identities only.  Symbolic
partials come from :func:`diff`.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence, Union

__all__ = [
    "Expr", "Const", "Var", "Unary", "Binary",
    "ExprError", "ExprSyntaxError", "UnboundVariableError", "EvalDomainError",
    "parse", "evaluate", "diff", "jacobian", "to_str", "free_vars", "subs",
    "compile_expr", "as_expr", "const", "var",
    "add", "sub", "mul", "div", "power", "neg", "apply_func", "FUNCTIONS",
    "simplify", "is_zero", "linear_combination",
]


class ExprError(Exception):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, text: str = ""):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.text = text


class UnboundVariableError(ExprError, KeyError):
    def __init__(self, name: str):
        super().__init__(f"unbound variable {name!r}")
        self.name = name

    def __str__(self):
        return self.args[0]


class EvalDomainError(ExprError, ArithmeticError):
    pass


class Expr:
    """Base class of the four node types."""

    __slots__ = ()

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __pow__(self, other):
        return power(self, as_expr(other))

    def __neg__(self):
        return neg(self)

    def __str__(self):
        return to_str(self)


@dataclass(frozen=True, repr=False)
class Const(Expr):
    value: float

    def __repr__(self):
        return f"Const({self.value!r})"


@dataclass(frozen=True, repr=False)
class Var(Expr):
    name: str

    def __post_init__(self):
        if not _IDENT.fullmatch(self.name):
            raise ExprError(f"invalid variable name {self.name!r}")

    def __repr__(self):
        return f"Var({self.name!r})"


@dataclass(frozen=True, repr=False)
class Unary(Expr):
    op: str
    arg: Expr

    def __repr__(self):
        return f"Unary({self.op!r}, {self.arg!r})"


@dataclass(frozen=True, repr=False)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr

    def __repr__(self):
        return f"Binary({self.op!r}, {self.left!r}, {self.right!r})"


_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")

# name -> scalar implementation; extend to register new functions
FUNCTIONS: dict[str, Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
}

BINARY_OPS = ("add", "sub", "mul", "div", "pow")
ZERO = Const(0.0)
ONE = Const(1.0)


def const(value: float) -> Const:
    return Const(float(value))


def var(name: str) -> Var:
    return Var(name)


def as_expr(x: Union[Expr, float, int, str]) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, str):
        return parse(x)
    return Const(float(x))


# ---------------------------------------------------------------- folding constructors

def _is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


def _fold(op: str, a: float, b: float) -> Expr | None:
    try:
        v = _BIN_IMPL[op](a, b)
    except ArithmeticError:
        return None
    if not math.isfinite(v):
        return None
    return Const(v + 0.0)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold("add", a.value, b.value) or Binary("add", a, b)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Binary("add", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold("sub", a.value, b.value) or Binary("sub", a, b)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Binary("sub", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold("mul", a.value, b.value) or Binary("mul", a, b)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a, -1.0):
        return neg(b)
    if _is_const(b, -1.0):
        return neg(a)
    # fold nested constant factors: c1*(c2*x) -> (c1*c2)*x
    if isinstance(b, Const):
        a, b = b, a
    if isinstance(a, Const) and isinstance(b, Binary) and b.op == "mul" and isinstance(b.left, Const):
        folded = _fold("mul", a.value, b.left.value)
        if folded is not None:
            return mul(folded, b.right)
    return Binary("mul", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold("div", a.value, b.value) or Binary("div", a, b)
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return ZERO
    return Binary("div", a, b)


def power(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold("pow", a.value, b.value) or Binary("pow", a, b)
    if _is_const(b, 0.0):
        return ONE
    if _is_const(b, 1.0):
        return a
    return Binary("pow", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(0.0 - a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    if isinstance(a, Binary) and a.op == "sub":
        return Binary("sub", a.right, a.left)
    return Unary("neg", a)


def apply_func(name: str, a: Expr) -> Expr:
    if name not in FUNCTIONS:
        raise ExprError(f"unknown function {name!r}")
    if isinstance(a, Const):
        try:
            v = FUNCTIONS[name](a.value)
        except (ValueError, ArithmeticError):
            return Unary(name, a)
        if math.isfinite(v):
            return Const(v)
    return Unary(name, a)


_CONSTRUCTORS = {"add": add, "sub": sub, "mul": mul, "div": div, "pow": power}


def _pow_impl(a: float, b: float) -> float:
    try:
        return math.pow(a, b)
    except ValueError as exc:
        raise EvalDomainError(f"pow({a!r}, {b!r}) is undefined") from exc


def _div_impl(a: float, b: float) -> float:
    if b == 0.0:
        raise EvalDomainError("division by zero")
    return a / b


_BIN_IMPL: dict[str, Callable[[float, float], float]] = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": _div_impl,
    "pow": _pow_impl,
}


# ---------------------------------------------------------------- parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))"
)


class _Parser:
    # expr   := term (('+'|'-') term)*
    # term   := factor (('*'|'/') factor)*
    # factor := base ('^' factor)?
    # base   := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')' | '-' base

    def __init__(self, text: str):
        self.text = text
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                start = pos + len(text[pos:]) - len(text[pos:].lstrip())
                raise ExprSyntaxError(f"unexpected character {text[start]!r}", start, text)
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.end = len(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else ("eof", "", self.end)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, off = self.take()
        if val != value or kind != "op":
            what = "end of input" if kind == "eof" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {what}", off, self.text)

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "eof":
            raise ExprSyntaxError(f"unexpected {val!r}", off, self.text)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            e = Binary("add" if op == "+" else "sub", e, self.term())
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            e = Binary("mul" if op == "*" else "div", e, self.factor())
        return e

    def factor(self) -> Expr:
        b = self.base()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return Binary("pow", b, self.factor())
        return b

    def base(self) -> Expr:
        kind, val, off = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "ident":
            if self.peek()[:2] == ("op", "("):
                if val not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {val!r}", off, self.text)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Unary(val, arg)
            return Var(val)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "op" and val == "-":
            return Unary("neg", self.base())
        what = "end of input" if kind == "eof" else repr(val)
        raise ExprSyntaxError(f"unexpected {what}", off, self.text)


def parse(text: str) -> Expr:
    """Parse infix text into an unsimplified tree.

    >>> parse("x + 2*y")
    Binary('add', Var('x'), Binary('mul', Const(2.0), Var('y')))
    """
    return _Parser(text).parse()


# ---------------------------------------------------------------- printing

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "pow": 3}
_SYM = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}


def _fmt_const(v: float) -> str:
    if v.is_integer() and abs(v) < 1e16:
        s = str(int(v))
    else:
        s = repr(v)
    return s


def _is_base(e: Expr) -> bool:
    # atoms that the grammar accepts as `base` without extra parentheses
    if isinstance(e, Var):
        return True
    if isinstance(e, Const):
        return e.value >= 0 or math.copysign(1.0, e.value) > 0
    return isinstance(e, Unary) and e.op != "neg"


def to_str(e: Expr) -> str:
    """Print ``e`` so that ``parse(to_str(e))`` evaluates identically."""
    if isinstance(e, Const):
        s = _fmt_const(abs(e.value))
        return s if math.copysign(1.0, e.value) > 0 else f"-{s}"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = to_str(e.arg)
            return f"-{inner}" if _is_base(e.arg) else f"-({inner})"
        return f"{e.op}({to_str(e.arg)})"
    p = _PREC[e.op]
    ls, rs = to_str(e.left), to_str(e.right)
    if e.op == "pow":
        if not _is_base(e.left):
            ls = f"({ls})"
        if isinstance(e.right, Binary) and e.right.op != "pow":
            rs = f"({rs})"
        elif isinstance(e.right, (Unary, Const)) and not _is_base(e.right):
            rs = f"({rs})"
        return f"{ls}^{rs}"
    if isinstance(e.left, Binary) and _PREC[e.left.op] < p:
        ls = f"({ls})"
    if isinstance(e.right, Binary) and _PREC[e.right.op] <= p and e.right.op != "pow":
        rs = f"({rs})"
    return f"{ls} {_SYM[e.op]} {rs}"


# ---------------------------------------------------------------- evaluation

def evaluate(e: Expr, binding: Mapping[str, float]) -> float:
    """IEEE-double evaluation; raises on unbound names and domain errors."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return float(binding[e.name])
        except KeyError:
            raise UnboundVariableError(e.name) from None
    if isinstance(e, Unary):
        a = evaluate(e.arg, binding)
        if e.op == "neg":
            return -a
        return _call(e.op, a)
    a = evaluate(e.left, binding)
    b = evaluate(e.right, binding)
    try:
        return _BIN_IMPL[e.op](a, b)
    except OverflowError as exc:
        raise EvalDomainError(f"overflow in {e.op}") from exc


def _call(name: str, a: float) -> float:
    if name == "log" and a <= 0.0:
        raise EvalDomainError(f"log of non-positive value {a!r}")
    if name == "sqrt" and a < 0.0:
        raise EvalDomainError(f"sqrt of negative value {a!r}")
    try:
        return FUNCTIONS[name](a)
    except (ValueError, OverflowError) as exc:
        raise EvalDomainError(f"{name}({a!r}) is undefined") from exc


def free_vars(e: Expr) -> frozenset[str]:
    return _free_vars(e)


@lru_cache(maxsize=4096)
def _free_vars(e: Expr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, Unary):
        return _free_vars(e.arg)
    return _free_vars(e.left) | _free_vars(e.right)


def compile_expr(e: Expr, names: Sequence[str]) -> Callable[[Sequence[float]], float]:
    """Compile ``e`` to a function of a positional value vector ordered as ``names``.

    Much faster than :func:`evaluate` for repeated use inside Newton loops.
    Domain errors surface as :class:`EvalDomainError`.
    """
    index = {n: i for i, n in enumerate(names)}
    missing = free_vars(e) - index.keys()
    if missing:
        raise UnboundVariableError(sorted(missing)[0])
    src = _codegen(e, index)
    code = compile(f"lambda v: {src}", "<expr>", "eval")
    fn = eval(code, {"_pow": _pow_impl, "_div": _div_impl, "_call": _call})

    def run(values):
        try:
            return fn(values)
        except OverflowError as exc:
            raise EvalDomainError(str(exc)) from exc

    run.source = src
    return run


def _codegen(e: Expr, index: Mapping[str, int]) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return f"v[{index[e.name]}]"
    if isinstance(e, Unary):
        a = _codegen(e.arg, index)
        return f"(-{a})" if e.op == "neg" else f"_call({e.op!r}, {a})"
    a, b = _codegen(e.left, index), _codegen(e.right, index)
    if e.op == "div":
        return f"_div({a}, {b})"
    if e.op == "pow":
        return f"_pow({a}, {b})"
    return f"({a} {_SYM[e.op]} {b})"


# ---------------------------------------------------------------- calculus

def diff(e: Expr, v: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to variable ``v``."""
    return _diff(e, v)


@lru_cache(maxsize=8192)
def _diff(e: Expr, v: str) -> Expr:
    if v not in free_vars(e):
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Unary):
        da = _diff(e.arg, v)
        a = e.arg
        if e.op == "neg":
            return neg(da)
        if e.op == "sin":
            return mul(apply_func("cos", a), da)
        if e.op == "cos":
            return mul(neg(apply_func("sin", a)), da)
        if e.op == "exp":
            return mul(e, da)
        if e.op == "log":
            return div(da, a)
        if e.op == "sqrt":
            return div(da, mul(Const(2.0), e))
        raise ExprError(f"no derivative rule for {e.op!r}")
    a, b = e.left, e.right
    da, db = _diff(a, v), _diff(b, v)
    if e.op == "add":
        return add(da, db)
    if e.op == "sub":
        return sub(da, db)
    if e.op == "mul":
        return add(mul(da, b), mul(a, db))
    if e.op == "div":
        return div(sub(mul(da, b), mul(a, db)), power(b, Const(2.0)))
    # pow
    if v not in free_vars(b):
        return mul(mul(b, power(a, sub(b, ONE))), da)
    # a^b = exp(b log a)
    return mul(e, add(mul(db, apply_func("log", a)), div(mul(b, da), a)))


def jacobian(es: Sequence[Expr], vs: Sequence[str]) -> list[list[Expr]]:
    return [[diff(e, v) for v in vs] for e in es]


def subs(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Substitute expressions for variables, refolding constants."""
    if not mapping or not (free_vars(e) & mapping.keys()):
        return e
    if isinstance(e, Var):
        return as_expr(mapping[e.name])
    if isinstance(e, Unary):
        a = subs(e.arg, mapping)
        return neg(a) if e.op == "neg" else apply_func(e.op, a)
    return _CONSTRUCTORS[e.op](subs(e.left, mapping), subs(e.right, mapping))


def simplify(e: Expr) -> Expr:
    """Rebuild ``e`` bottom-up through the folding constructors."""
    if isinstance(e, (Const, Var)):
        return e
    if isinstance(e, Unary):
        a = simplify(e.arg)
        return neg(a) if e.op == "neg" else apply_func(e.op, a)
    return _CONSTRUCTORS[e.op](simplify(e.left), simplify(e.right))


def is_zero(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0.0


def linear_combination(coeffs: Iterable[float], es: Iterable[Expr]) -> Expr:
    out: Expr = ZERO
    for c, x in zip(coeffs, es):
        if c != 0.0:
            out = add(out, mul(Const(float(c)), x))
    return out
