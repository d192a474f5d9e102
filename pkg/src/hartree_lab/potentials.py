"""External potentials: built-in catalog and a small expression language.

Catalog entries are selected by ``name`` or ``name:p1,p2,...``; anything
else is parsed as an expression in x1..xn with +, -, *, /, ^, exp, cos.
"""

from __future__ import annotations

from typing import Callable, List, Optional, Sequence

import numpy as np


# ---------------------------------------------------------------------------
# expression parser (recursive descent)
# ---------------------------------------------------------------------------

_FUNCTIONS = ("exp", "cos")


class ExpressionError(ValueError):
    pass


def _tokenize(text: str) -> List[tuple]:
    tokens = []
    i = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "+-*/^()":
            tokens.append(("op", c))
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            while j < len(text) and (text[j].isdigit() or text[j] in ".eE" or
                                     (text[j] in "+-" and text[j - 1] in "eE")):
                j += 1
            try:
                tokens.append(("num", float(text[i:j])))
            except ValueError as exc:
                raise ExpressionError(f"bad number {text[i:j]!r}") from exc
            i = j
            continue
        if c.isalpha():
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("name", text[i:j]))
            i = j
            continue
        raise ExpressionError(f"unexpected character {c!r} in expression")
    tokens.append(("end", None))
    return tokens


class _Parser:
    """expr := term (('+'|'-') term)* ; term := unary (('*'|'/') unary)* ;
    unary := '-' unary | power ; power := atom ('^' unary)? ;
    atom := number | xK | func '(' expr ')' | '(' expr ')'"""

    def __init__(self, text: str, dim: int):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.dim = dim

    def peek(self):
        return self.tokens[self.pos]

    def take(self, kind=None, value=None):
        tok = self.tokens[self.pos]
        if kind is not None and tok[0] != kind:
            raise ExpressionError(f"expected {kind}, got {tok}")
        if value is not None and tok[1] != value:
            raise ExpressionError(f"expected {value!r}, got {tok}")
        self.pos += 1
        return tok

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise ExpressionError(f"trailing input at {self.peek()}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            op = self.take()[1]
            rhs = self.term()
            node = (op, node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            op = self.take()[1]
            rhs = self.unary()
            node = (op, node, rhs)
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            return ("neg", self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            return ("^", node, self.unary())
        return node

    def atom(self):
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return ("num", val)
        if kind == "name":
            self.take()
            if val in _FUNCTIONS:
                self.take("op", "(")
                arg = self.expr()
                self.take("op", ")")
                return (val, arg)
            if val.startswith("x") and val[1:].isdigit():
                idx = int(val[1:])
                if not (1 <= idx <= self.dim):
                    raise ExpressionError(
                        f"variable {val} out of range for dimension {self.dim}"
                    )
                return ("var", idx - 1)
            raise ExpressionError(f"unknown identifier {val!r}")
        if (kind, val) == ("op", "("):
            self.take()
            node = self.expr()
            self.take("op", ")")
            return node
        raise ExpressionError(f"unexpected token {self.peek()}")


def _eval_node(node, pts: np.ndarray):
    op = node[0]
    if op == "num":
        return np.full(pts.shape[0], node[1])
    if op == "var":
        return pts[:, node[1]]
    if op == "neg":
        return -_eval_node(node[1], pts)
    if op in ("exp", "cos"):
        return getattr(np, op)(_eval_node(node[1], pts))
    a = _eval_node(node[1], pts)
    b = _eval_node(node[2], pts)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    if op == "^":
        return a**b
    raise ExpressionError(f"unknown node {op!r}")


def compile_expression(text: str, dim: int) -> Callable[[np.ndarray], np.ndarray]:
    """Compile an expression in x1..x<dim> to a vectorized callable."""
    tree = _Parser(text, dim).parse()

    def func(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return _eval_node(tree, pts)

    return func


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------

def quadratic(dim: int, curvature: float = 1.0, center: Optional[Sequence[float]] = None):
    """V(x) = curvature * |x - center|^2."""
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)

    def value(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return curvature * np.sum((pts - c) ** 2, axis=1)

    def grad(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return 2.0 * curvature * (pts - c)

    return value, grad


def double_well(dim: int, a: float = 1.0, b: float = 1.0):
    """V(x) = a (x1^2 - 1)^2 + b sum_{i>=2} x_i^2: two minima at x1 = +-1
    and a saddle at the origin."""

    def value(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return a * (pts[:, 0] ** 2 - 1.0) ** 2 + b * np.sum(pts[:, 1:] ** 2, axis=1)

    def grad(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        g = np.empty_like(pts)
        g[:, 0] = 4.0 * a * pts[:, 0] * (pts[:, 0] ** 2 - 1.0)
        g[:, 1:] = 2.0 * b * pts[:, 1:]
        return g

    return value, grad


def ring(dim: int, radius: float = 1.0, a: float = 1.0, b: float = 1.0):
    """V(x) = a (x1^2 + x2^2 - radius^2)^2 + b sum_{i>=3} x_i^2: a
    nondegenerate critical circle of minima plus a critical point on the
    axis."""
    if dim < 2:
        raise ValueError("ring potential needs dimension >= 2")

    def value(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        s = pts[:, 0] ** 2 + pts[:, 1] ** 2 - radius**2
        return a * s**2 + b * np.sum(pts[:, 2:] ** 2, axis=1)

    def grad(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        s = pts[:, 0] ** 2 + pts[:, 1] ** 2 - radius**2
        g = np.empty_like(pts)
        g[:, 0] = 4.0 * a * s * pts[:, 0]
        g[:, 1] = 4.0 * a * s * pts[:, 1]
        g[:, 2:] = 2.0 * b * pts[:, 2:]
        return g

    return value, grad


CATALOG = {
    "quadratic": quadratic,
    "double_well": double_well,
    "ring": ring,
}


def make_potential_functions(spec: str, dim: int):
    """Resolve a potential spec string to (value, gradient_or_None).

    ``name`` or ``name:p1,p2,...`` selects a catalog entry; anything else is
    compiled as an expression over x1..xn (finite-difference gradients).
    """
    text = spec.strip()
    head, _, rest = text.partition(":")
    name = head.strip()
    if name in CATALOG:
        params = []
        if rest.strip():
            params = [float(tok) for tok in rest.split(",") if tok.strip()]
        return CATALOG[name](dim, *params)
    return compile_expression(text, dim), None
