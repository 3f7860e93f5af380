"""Expression grammar for polynomial vector fields.

A field file holds one expression per component, either named::

    xdot = y
    ydot = z
    zdot = -z - (T - R + R*x^2)*y - T*x

or as three bare expression lines in x, y, z order. Lines of the form
``NAME = <number>`` define default parameter values. ``#`` starts a comment.

Operators are ``+ - * / ^`` with the usual precedence, unary minus, and
parentheses. ``^`` takes a nonnegative integer literal exponent only.
Division is allowed only by expressions free of x, y, z, which keeps every
field polynomial.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Union

from .errors import ParseError

STATE_VARS = ("x", "y", "z")
COMPONENT_NAMES = ("xdot", "ydot", "zdot")


@dataclass(frozen=True)
class Num:
    value: float
    pos: tuple = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Var:
    name: str
    pos: tuple = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Neg:
    arg: "Node"
    pos: tuple = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"
    pos: tuple = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int
    pos: tuple = field(default=(0, 0), compare=False, repr=False)


Node = Union[Num, Var, Neg, BinOp, Pow]


# --------------------------------------------------------------------------- lexing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#.*)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()=])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # "num", "ident", "op", "end"
    text: str
    line: int
    col: int


def tokenize_line(text: str, line_no: int) -> list[Token]:
    text = text.replace("−", "-")
    tokens = []
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise ParseError("unexpected character", line_no, i + 1, text[i])
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line_no, i + 1))
        i = m.end()
    tokens.append(Token("end", "<end of line>", line_no, len(text) + 1))
    return tokens


# --------------------------------------------------------------------------- parsing


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def _error(self, message: str) -> ParseError:
        t = self.tok
        return ParseError(message, t.line, t.col, t.text)

    def advance(self) -> Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect_op(self, text: str) -> Token:
        if self.tok.kind == "op" and self.tok.text == text:
            return self.advance()
        raise self._error(f"expected {text!r}")

    def parse_expr(self) -> Node:
        node = self.parse_term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            t = self.advance()
            node = BinOp(t.text, node, self.parse_term(), (t.line, t.col))
        return node

    def parse_term(self) -> Node:
        node = self.parse_unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            t = self.advance()
            node = BinOp(t.text, node, self.parse_unary(), (t.line, t.col))
        return node

    def parse_unary(self) -> Node:
        if self.tok.kind == "op" and self.tok.text == "-":
            t = self.advance()
            return Neg(self.parse_unary(), (t.line, t.col))
        if self.tok.kind == "op" and self.tok.text == "+":
            self.advance()
            return self.parse_unary()
        return self.parse_power()

    def parse_power(self) -> Node:
        base = self.parse_atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            t = self.advance()
            exp_tok = self.tok
            if exp_tok.kind != "num" or not re.fullmatch(r"\d+", exp_tok.text):
                raise self._error("exponent must be a nonnegative integer literal")
            self.advance()
            if self.tok.kind == "op" and self.tok.text == "^":
                raise self._error("chained '^' is not supported; use parentheses")
            return Pow(base, int(exp_tok.text), (t.line, t.col))
        return base

    def parse_atom(self) -> Node:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Num(float(t.text), (t.line, t.col))
        if t.kind == "ident":
            self.advance()
            return Var(t.text, (t.line, t.col))
        if t.kind == "op" and t.text == "(":
            self.advance()
            node = self.parse_expr()
            self.expect_op(")")
            return node
        raise self._error("expected a number, identifier or '('")


def parse_expression(text: str, line_no: int = 1) -> Node:
    """Parse a single expression occupying the whole of ``text``."""
    p = _Parser(tokenize_line(text, line_no))
    node = p.parse_expr()
    if p.tok.kind != "end":
        raise p._error("unexpected token after expression")
    return node


@dataclass(frozen=True)
class FieldDefinition:
    """Parsed field file: three component expressions plus parameter defaults."""

    components: tuple  # (Node, Node, Node)
    defaults: tuple  # ((name, value), ...)
    source: str

    @property
    def parameters(self) -> tuple:
        """Names of free parameters used by the components, sorted."""
        names: set[str] = set()
        for c in self.components:
            names |= free_names(c)
        return tuple(sorted(names - set(STATE_VARS)))


def parse_field(source: str) -> FieldDefinition:
    """Parse a field file; see the module docstring for the format."""
    named: dict[str, Node] = {}
    bare: list[Node] = []
    defaults: dict[str, float] = {}
    last_line = 1
    for line_no, raw in enumerate(source.splitlines(), start=1):
        last_line = line_no
        tokens = tokenize_line(raw, line_no)
        if tokens[0].kind == "end":
            continue
        if (
            len(tokens) > 2
            and tokens[0].kind == "ident"
            and tokens[1].kind == "op"
            and tokens[1].text == "="
        ):
            name_tok = tokens[0]
            p = _Parser(tokens[2:])
            node = p.parse_expr()
            if p.tok.kind != "end":
                raise p._error("unexpected token after expression")
            name = name_tok.text
            if name in COMPONENT_NAMES:
                if name in named:
                    raise ParseError("component defined twice", line_no, name_tok.col, name)
                named[name] = node
            elif name in STATE_VARS:
                raise ParseError("cannot assign to a state variable", line_no, name_tok.col, name)
            else:
                if free_names(node):
                    raise ParseError(
                        "parameter default must be a constant", line_no, name_tok.col, name
                    )
                defaults[name] = _const_value(node, {})
            continue
        p = _Parser(tokens)
        node = p.parse_expr()
        if p.tok.kind != "end":
            raise p._error("unexpected token after expression")
        bare.append(node)

    if named and bare:
        raise ParseError("mix of named and unnamed components", last_line, 1, "")
    if named:
        missing = [n for n in COMPONENT_NAMES if n not in named]
        if missing:
            raise ParseError(f"missing component(s) {', '.join(missing)}", last_line, 1, "")
        comps = tuple(named[n] for n in COMPONENT_NAMES)
    else:
        if len(bare) != 3:
            raise ParseError(f"expected 3 component expressions, found {len(bare)}", last_line, 1, "")
        comps = tuple(bare)
    for c in comps:
        check_polynomial(c)
    return FieldDefinition(comps, tuple(sorted(defaults.items())), source)


# --------------------------------------------------------------------------- analysis


def free_names(node: Node) -> set[str]:
    if isinstance(node, Num):
        return set()
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Neg):
        return free_names(node.arg)
    if isinstance(node, Pow):
        return free_names(node.base)
    return free_names(node.left) | free_names(node.right)


def _depends_on_state(node: Node) -> bool:
    return bool(free_names(node) & set(STATE_VARS))


def check_polynomial(node: Node) -> None:
    """Raise ParseError if ``node`` divides by something involving x, y or z."""
    if isinstance(node, (Num, Var)):
        return
    if isinstance(node, Neg):
        check_polynomial(node.arg)
    elif isinstance(node, Pow):
        check_polynomial(node.base)
    else:
        check_polynomial(node.left)
        check_polynomial(node.right)
        if node.op == "/" and _depends_on_state(node.right):
            line, col = node.pos
            raise ParseError("division by an expression in x, y, z is not polynomial", line, col, "/")


def _const_value(node: Node, env: Mapping[str, float]) -> float:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        if node.name not in env:
            line, col = node.pos
            raise ParseError("unknown parameter", line, col, node.name)
        return float(env[node.name])
    if isinstance(node, Neg):
        return -_const_value(node.arg, env)
    if isinstance(node, Pow):
        return _const_value(node.base, env) ** node.exponent
    a = _const_value(node.left, env)
    b = _const_value(node.right, env)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if b == 0:
        line, col = node.pos
        raise ParseError("division by zero", line, col, "/")
    return a / b


# --------------------------------------------------------------------------- differentiation


def _is_num(node: Node, value: float) -> bool:
    return isinstance(node, Num) and node.value == value


def _add(a: Node, b: Node) -> Node:
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    return BinOp("+", a, b)


def _sub(a: Node, b: Node) -> Node:
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return Neg(b)
    return BinOp("-", a, b)


def _mul(a: Node, b: Node) -> Node:
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    return BinOp("*", a, b)


def differentiate(node: Node, var: str) -> Node:
    """Symbolic partial derivative with light zero/one folding."""
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0) if node.name == var else Num(0.0)
    if isinstance(node, Neg):
        d = differentiate(node.arg, var)
        return Num(0.0) if _is_num(d, 0.0) else Neg(d)
    if isinstance(node, Pow):
        n = node.exponent
        if n == 0:
            return Num(0.0)
        db = differentiate(node.base, var)
        inner = node.base if n == 2 else (Num(1.0) if n == 1 else Pow(node.base, n - 1))
        return _mul(_mul(Num(float(n)), inner), db)
    da = differentiate(node.left, var)
    db = differentiate(node.right, var)
    if node.op == "+":
        return _add(da, db)
    if node.op == "-":
        return _sub(da, db)
    if node.op == "*":
        return _add(_mul(da, node.right), _mul(node.left, db))
    # right operand is state-free for polynomial fields
    if _is_num(da, 0.0):
        return Num(0.0)
    return BinOp("/", da, node.right)


# --------------------------------------------------------------------------- polynomials

Monomial = tuple  # (i, j, k) exponents of x, y, z


def _poly_add(p: dict, q: dict, sign: float = 1.0) -> dict:
    out = dict(p)
    for m, c in q.items():
        out[m] = out.get(m, 0.0) + sign * c
    return out


def _poly_mul(p: dict, q: dict) -> dict:
    out: dict = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            m = (m1[0] + m2[0], m1[1] + m2[1], m1[2] + m2[2])
            out[m] = out.get(m, 0.0) + c1 * c2
    return out


def to_polynomial(node: Node, env: Mapping[str, float]) -> dict:
    """Expand ``node`` into ``{(i, j, k): coefficient}`` with parameters substituted.

    Zero coefficients are dropped.
    """
    poly = _expand(node, env)
    return {m: c for m, c in poly.items() if c != 0.0}


def _expand(node: Node, env: Mapping[str, float]) -> dict:
    if isinstance(node, Num):
        return {(0, 0, 0): node.value}
    if isinstance(node, Var):
        if node.name in STATE_VARS:
            m = [0, 0, 0]
            m[STATE_VARS.index(node.name)] = 1
            return {tuple(m): 1.0}
        return {(0, 0, 0): _const_value(node, env)}
    if isinstance(node, Neg):
        return {m: -c for m, c in _expand(node.arg, env).items()}
    if isinstance(node, Pow):
        base = _expand(node.base, env)
        out = {(0, 0, 0): 1.0}
        for _ in range(node.exponent):
            out = _poly_mul(out, base)
        return out
    a = _expand(node.left, env)
    if node.op == "/":
        return {m: c / _const_value(node.right, env) for m, c in a.items()}
    b = _expand(node.right, env)
    if node.op == "+":
        return _poly_add(a, b)
    if node.op == "-":
        return _poly_add(a, b, -1.0)
    return _poly_mul(a, b)


def poly_degree(poly: dict) -> int:
    return max((sum(m) for m in poly), default=-1)


# --------------------------------------------------------------------------- code generation


def to_source(node: Node, env: Mapping[str, float]) -> str:
    """Python source for ``node``; parameters are inlined as float literals."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        if node.name in STATE_VARS:
            return node.name
        return f"({_const_value(node, env)!r})"
    if isinstance(node, Neg):
        return f"(-{to_source(node.arg, env)})"
    if isinstance(node, Pow):
        return f"({to_source(node.base, env)}**{node.exponent})"
    return f"({to_source(node.left, env)} {node.op} {to_source(node.right, env)})"


def compile_components(nodes, env: Mapping[str, float], name: str = "_fn"):
    """Compile expressions into ``f(x, y, z) -> tuple``.

    The generated code uses only arithmetic, so it works on floats and on
    broadcastable numpy arrays alike.
    """
    for n in nodes:
        for ident in free_names(n) - set(STATE_VARS):
            if ident not in env:
                line, col = _find_pos(n, ident)
                raise ParseError("unknown parameter", line, col, ident)
            if not math.isfinite(float(env[ident])):
                raise ParseError("parameter value is not finite", 0, 0, ident)
    body = ", ".join(to_source(n, env) for n in nodes)
    src = f"def {name}(x, y, z):\n    return ({body},)\n"
    namespace: dict = {}
    exec(compile(src, f"<{name}>", "exec"), {"__builtins__": {}}, namespace)
    fn = namespace[name]
    fn.source = src
    return fn


def _find_pos(node: Node, ident: str) -> tuple:
    if isinstance(node, Var) and node.name == ident:
        return node.pos
    for child in _children(node):
        pos = _find_pos(child, ident)
        if pos != (0, 0):
            return pos
    return (0, 0)


def _children(node: Node):
    if isinstance(node, Neg):
        return (node.arg,)
    if isinstance(node, Pow):
        return (node.base,)
    if isinstance(node, BinOp):
        return (node.left, node.right)
    return ()


def format_expression(node: Node) -> str:
    """Human-readable infix rendering (fully parenthesised where needed)."""
    if isinstance(node, Num):
        v = node.value
        return repr(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"-({format_expression(node.arg)})"
    if isinstance(node, Pow):
        return f"({format_expression(node.base)})^{node.exponent}"
    return f"({format_expression(node.left)} {node.op} {format_expression(node.right)})"
