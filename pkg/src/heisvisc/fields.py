"""Scalar fields: parsed analytic expressions with exact jets, and grid samples.

Analytic fields are built from a small expression language over the group
coordinates::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := ('+' | '-') factor | power
    power  := atom ('^' factor)?
    atom   := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'

Identifiers are the coordinate variables ``x1..xn``, ``y1..yn``, ``t`` (plus
any declared extra variables such as ``s`` for solution-dependent
coefficients) and the functions ``exp``, ``log``, ``min``, ``max``.  There is
no implicit multiplication and no named constants.

Values and first/second derivatives are propagated through the syntax tree in
forward mode, so jets are exact up to rounding: no finite differences are
involved on the analytic side.  ``min``/``max`` evaluate everywhere but have
no jet on their kink set; requesting one raises :class:`NonSmoothError`.

Grid fields store samples of a scalar on a uniform lattice over a coordinate
box, together with an optional mask of nodes where discrete jets would be
polluted by a kink.  Discrete jets are plain second-order central differences
at the native grid spacing.
"""

import logging
import re
from dataclasses import dataclass, field

import numpy as np

from .core import Jet2, Point, dist_coords

__all__ = [
    "ParseError",
    "EvaluationDomainError",
    "NonSmoothError",
    "AnalyticField",
    "GridField",
    "Domain",
    "parse_field",
    "sample",
    "jet2_fd",
    "gamma_interior",
    "const",
    "coord_var",
    "exp_of",
    "log_of",
    "min_of",
    "max_of",
    "z_norm_sq",
]

log = logging.getLogger(__name__)

KINK_TOL = 1e-12


class ParseError(ValueError):
    """Syntax or name error in an expression, with a 1-based position."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EvaluationDomainError(ValueError):
    """Evaluation left the domain of a primitive (log of nonpositive, etc.)."""


class NonSmoothError(ValueError):
    """A jet was requested at (or next to) a kink of min/max."""


# -- expression nodes -------------------------------------------------------
#
# Each node evaluates under an environment mapping variable names to scalars
# or broadcastable arrays, and propagates (value, gradient, Hessian) jets
# under an ordered variable list.  Jets are scalar-point only.


@dataclass(frozen=True)
class Node:
    def __add__(self, other):
        return Add(self, _as_node(other))

    def __radd__(self, other):
        return Add(_as_node(other), self)

    def __sub__(self, other):
        return Sub(self, _as_node(other))

    def __rsub__(self, other):
        return Sub(_as_node(other), self)

    def __mul__(self, other):
        return Mul(self, _as_node(other))

    def __rmul__(self, other):
        return Mul(_as_node(other), self)

    def __truediv__(self, other):
        return Div(self, _as_node(other))

    def __rtruediv__(self, other):
        return Div(_as_node(other), self)

    def __pow__(self, other):
        other = _as_node(other)
        if not isinstance(other, Const):
            return exp_of(other * log_of(self))
        return Pow(self, other.value)

    def __neg__(self):
        return Neg(self)


def _as_node(v):
    if isinstance(v, Node):
        return v
    return Const(float(v))


@dataclass(frozen=True)
class Const(Node):
    value: float

    def evaluate(self, env):
        return self.value

    def jet(self, env, order, kink_tol):
        d = len(order)
        return self.value, np.zeros(d), np.zeros((d, d))

    def to_source(self):
        return repr(self.value)

    def variables(self, out):
        pass


@dataclass(frozen=True)
class Var(Node):
    name: str

    def evaluate(self, env):
        return env[self.name]

    def jet(self, env, order, kink_tol):
        d = len(order)
        g = np.zeros(d)
        g[order.index(self.name)] = 1.0
        return float(env[self.name]), g, np.zeros((d, d))

    def to_source(self):
        return self.name

    def variables(self, out):
        out.add(self.name)


@dataclass(frozen=True)
class _Binary(Node):
    a: Node
    b: Node

    def variables(self, out):
        self.a.variables(out)
        self.b.variables(out)


class Add(_Binary):
    def evaluate(self, env):
        return self.a.evaluate(env) + self.b.evaluate(env)

    def jet(self, env, order, kink_tol):
        va, ga, ha = self.a.jet(env, order, kink_tol)
        vb, gb, hb = self.b.jet(env, order, kink_tol)
        return va + vb, ga + gb, ha + hb

    def to_source(self):
        return f"({self.a.to_source()} + {self.b.to_source()})"


class Sub(_Binary):
    def evaluate(self, env):
        return self.a.evaluate(env) - self.b.evaluate(env)

    def jet(self, env, order, kink_tol):
        va, ga, ha = self.a.jet(env, order, kink_tol)
        vb, gb, hb = self.b.jet(env, order, kink_tol)
        return va - vb, ga - gb, ha - hb

    def to_source(self):
        return f"({self.a.to_source()} - {self.b.to_source()})"


class Mul(_Binary):
    def evaluate(self, env):
        return self.a.evaluate(env) * self.b.evaluate(env)

    def jet(self, env, order, kink_tol):
        va, ga, ha = self.a.jet(env, order, kink_tol)
        vb, gb, hb = self.b.jet(env, order, kink_tol)
        cross = np.outer(ga, gb)
        return va * vb, va * gb + vb * ga, va * hb + vb * ha + cross + cross.T

    def to_source(self):
        return f"({self.a.to_source()} * {self.b.to_source()})"


class Div(_Binary):
    def evaluate(self, env):
        num = self.a.evaluate(env)
        den = self.b.evaluate(env)
        if np.any(den == 0.0):
            raise EvaluationDomainError("division by zero")
        return num / den

    def jet(self, env, order, kink_tol):
        va, ga, ha = self.a.jet(env, order, kink_tol)
        vb, gb, hb = self.b.jet(env, order, kink_tol)
        if vb == 0.0:
            raise EvaluationDomainError("division by zero")
        v = va / vb
        g = (ga - v * gb) / vb
        cross = np.outer(g, gb)
        h = (ha - v * hb - cross - cross.T) / vb
        return v, g, h

    def to_source(self):
        return f"({self.a.to_source()} / {self.b.to_source()})"


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: float

    def evaluate(self, env):
        a = np.asarray(self.base.evaluate(env))
        c = self.exponent
        if float(c).is_integer():
            if c < 0 and np.any(a == 0.0):
                raise EvaluationDomainError("zero raised to a negative power")
        else:
            if np.any(a < 0.0) or (c < 0 and np.any(a == 0.0)):
                raise EvaluationDomainError("fractional power of a negative base")
        out = np.power(a, c)
        return out if out.ndim else float(out)

    def jet(self, env, order, kink_tol):
        va, ga, ha = self.base.jet(env, order, kink_tol)
        c = self.exponent
        if c == 0.0:
            d = len(order)
            return 1.0, np.zeros(d), np.zeros((d, d))
        integer = float(c).is_integer()
        if va == 0.0 and (c < 2 and c != 1.0):
            raise EvaluationDomainError("power jet undefined at zero base")
        if va < 0.0 and not integer:
            raise EvaluationDomainError("fractional power of a negative base")
        v = float(np.power(va, c))
        d1 = c * float(np.power(va, c - 1))
        d2 = c * (c - 1) * float(np.power(va, c - 2)) if c != 1.0 else 0.0
        return v, d1 * ga, d1 * ha + d2 * np.outer(ga, ga)

    def to_source(self):
        return f"({self.base.to_source()} ^ {self.exponent!r})"

    def variables(self, out):
        self.base.variables(out)


@dataclass(frozen=True)
class Neg(Node):
    a: Node

    def evaluate(self, env):
        return -self.a.evaluate(env)

    def jet(self, env, order, kink_tol):
        v, g, h = self.a.jet(env, order, kink_tol)
        return -v, -g, -h

    def to_source(self):
        return f"(-{self.a.to_source()})"

    def variables(self, out):
        self.a.variables(out)


@dataclass(frozen=True)
class Exp(Node):
    a: Node

    def evaluate(self, env):
        return np.exp(self.a.evaluate(env))

    def jet(self, env, order, kink_tol):
        v, g, h = self.a.jet(env, order, kink_tol)
        ev = float(np.exp(v))
        return ev, ev * g, ev * (h + np.outer(g, g))

    def to_source(self):
        return f"exp({self.a.to_source()})"

    def variables(self, out):
        self.a.variables(out)


@dataclass(frozen=True)
class Log(Node):
    a: Node

    def evaluate(self, env):
        v = self.a.evaluate(env)
        if np.any(np.asarray(v) <= 0.0):
            raise EvaluationDomainError("log of a nonpositive value")
        return np.log(v)

    def jet(self, env, order, kink_tol):
        v, g, h = self.a.jet(env, order, kink_tol)
        if v <= 0.0:
            raise EvaluationDomainError("log of a nonpositive value")
        gg = g / v
        return float(np.log(v)), gg, h / v - np.outer(gg, gg)

    def to_source(self):
        return f"log({self.a.to_source()})"

    def variables(self, out):
        self.a.variables(out)


class _MinMax(_Binary):
    op = None
    pick_first_when_positive = None  # sign of (a - b) that selects branch a

    def evaluate(self, env):
        return self.op(self.a.evaluate(env), self.b.evaluate(env))

    def jet(self, env, order, kink_tol):
        ja = self.a.jet(env, order, kink_tol)
        jb = self.b.jet(env, order, kink_tol)
        gap = ja[0] - jb[0]
        if abs(gap) <= kink_tol * (1.0 + abs(ja[0]) + abs(jb[0])):
            raise NonSmoothError(f"{self.name}: jet requested on the kink set")
        if (gap > 0) == self.pick_first_when_positive:
            return ja
        return jb

    def to_source(self):
        return f"{self.name}({self.a.to_source()}, {self.b.to_source()})"


class Min(_MinMax):
    name = "min"
    op = staticmethod(np.minimum)
    pick_first_when_positive = False


class Max(_MinMax):
    name = "max"
    op = staticmethod(np.maximum)
    pick_first_when_positive = True


def const(c):
    return Const(float(c))


def coord_var(name):
    return Var(name)


def exp_of(a):
    return Exp(_as_node(a))


def log_of(a):
    return Log(_as_node(a))


def min_of(a, b):
    return Min(_as_node(a), _as_node(b))


def max_of(a, b):
    return Max(_as_node(a), _as_node(b))


def z_norm_sq(n):
    """Expression for |z|^2 = sum_i x_i^2 + y_i^2."""
    out = Const(0.0)
    for i in range(1, n + 1):
        out = out + Var(f"x{i}") ** 2 + Var(f"y{i}") ** 2
    return out


# -- parser -----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)

_FUNCTIONS = {"exp": (Exp, 1), "log": (Log, 1), "min": (Min, 2), "max": (Max, 2)}


class _Parser:
    def __init__(self, text, names):
        self.text = text
        self.names = names
        self.tokens = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None or m.end() == pos:
                stripped = text[pos:].lstrip()
                if not stripped:
                    break
                bad_at = len(text) - len(stripped) + 1
                raise ParseError(f"unexpected character {stripped[0]!r}", bad_at)
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind), m.start(kind) + 1))
            pos = m.end()
        self.tokens.append(("end", "", len(text) + 1))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, symbol):
        kind, value, pos = self.peek()
        if kind != "op" or value != symbol:
            raise ParseError(f"expected {symbol!r}", pos)
        self.advance()

    def parse(self):
        node = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {value!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.advance()
                rhs = self.term()
                node = Add(node, rhs) if value == "+" else Sub(node, rhs)
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.advance()
                rhs = self.factor()
                node = Mul(node, rhs) if value == "*" else Div(node, rhs)
            else:
                return node

    def factor(self):
        kind, value, _ = self.peek()
        if kind == "op" and value in "+-":
            self.advance()
            inner = self.factor()
            return inner if value == "+" else Neg(inner)
        return self.power()

    def power(self):
        base = self.atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.advance()
            exponent = self.factor()
            if isinstance(exponent, Const):
                return Pow(base, exponent.value)
            if isinstance(exponent, Neg) and isinstance(exponent.a, Const):
                return Pow(base, -exponent.a.value)
            # non-constant exponent: rewrite through exp/log
            return Exp(Mul(exponent, Log(base)))
        return base

    def atom(self):
        kind, value, pos = self.advance()
        if kind == "number":
            return Const(float(value))
        if kind == "ident":
            nxt_kind, nxt_value, _ = self.peek()
            if nxt_kind == "op" and nxt_value == "(":
                if value not in _FUNCTIONS:
                    raise ParseError(f"unknown function {value!r}", pos)
                cls, arity = _FUNCTIONS[value]
                self.advance()
                args = [self.expr()]
                while True:
                    k2, v2, p2 = self.peek()
                    if k2 == "op" and v2 == ",":
                        self.advance()
                        args.append(self.expr())
                    else:
                        break
                self.expect_op(")")
                if len(args) != arity:
                    raise ParseError(
                        f"{value} takes {arity} argument(s), got {len(args)}", pos
                    )
                return cls(*args)
            if value not in self.names:
                raise ParseError(f"unknown identifier {value!r}", pos)
            return Var(value)
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        shown = value if value else "end of input"
        raise ParseError(f"expected an operand, got {shown!r}", pos)


def _standard_names(n, extra_vars):
    names = tuple(f"x{i}" for i in range(1, n + 1)) + tuple(
        f"y{i}" for i in range(1, n + 1)
    ) + ("t",) + tuple(extra_vars)
    return names


@dataclass(frozen=True)
class AnalyticField:
    """An expression over the coordinates x1..xn, y1..yn, t (plus extras).

    Wraps a syntax tree together with the ambient dimension; evaluation
    broadcasts over arrays, jets are exact forward-mode at single points.
    """

    root: Node
    n: int
    extra_vars: tuple = ()

    @property
    def names(self):
        return _standard_names(self.n, self.extra_vars)

    @classmethod
    def parse(cls, text, n, extra_vars=()):
        names = _standard_names(n, tuple(extra_vars))
        root = _Parser(text, set(names)).parse()
        return cls(root, n, tuple(extra_vars))

    def source(self):
        return self.root.to_source()

    def _env_from_coords(self, coords, extra):
        coords = np.asarray(coords, dtype=float)
        if coords.shape[-1] != 2 * self.n + 1:
            raise ValueError(
                f"expected {2 * self.n + 1} coordinates, got {coords.shape[-1]}"
            )
        env = {}
        for a, name in enumerate(self.names[: 2 * self.n + 1]):
            env[name] = coords[..., a]
        for name in self.extra_vars:
            if name not in extra:
                raise ValueError(f"missing value for extra variable {name!r}")
            env[name] = extra[name]
        return env

    def __call__(self, at, **extra):
        if isinstance(at, Point):
            at = at.coords()
        out = self.root.evaluate(self._env_from_coords(at, extra))
        out = np.asarray(out, dtype=float)
        return float(out) if out.ndim == 0 else out

    def jet_all(self, at, kink_tol=KINK_TOL, **extra):
        """Exact (value, gradient, Hessian) over all declared variables."""
        if isinstance(at, Point):
            at = at.coords()
        env = self._env_from_coords(at, extra)
        order = list(self.names)
        return self.root.jet(env, order, kink_tol)

    def jet2(self, at, kink_tol=KINK_TOL, **extra):
        """Exact Euclidean jet over the 2n+1 group coordinates as a Jet2."""
        v, g, h = self.jet_all(at, kink_tol=kink_tol, **extra)
        d = 2 * self.n + 1
        return Jet2(v, g[:d], h[:d, :d])


def parse_field(text, n, extra_vars=()):
    """Parse an expression into an AnalyticField; see the module grammar."""
    return AnalyticField.parse(text, n, extra_vars)


def parse_expr(text, names):
    """Parse an expression over an arbitrary variable set into a syntax tree.

    Same grammar as :func:`parse_field`; used for expressions that do not
    live over the group coordinates (e.g. functions of eigenvalues).
    """
    return _Parser(text, set(names)).parse()


# -- grids ------------------------------------------------------------------


@dataclass(frozen=True)
class Domain:
    """A closed coordinate box [lo_1, hi_1] x ... x [lo_{2n+1}, hi_{2n+1}]."""

    box: np.ndarray

    def __post_init__(self):
        box = np.asarray(self.box, dtype=float)
        if box.ndim != 2 or box.shape[1] != 2 or box.shape[0] % 2 != 1:
            raise ValueError("box must have shape (2n+1, 2)")
        if not np.all(np.isfinite(box)):
            raise ValueError("box bounds must be finite")
        if not np.all(box[:, 0] < box[:, 1]):
            raise ValueError("box must satisfy lo < hi on every axis")
        object.__setattr__(self, "box", box)

    @property
    def n(self):
        return (self.box.shape[0] - 1) // 2

    def contains(self, p, tol=0.0):
        c = p.coords() if isinstance(p, Point) else np.asarray(p, dtype=float)
        return bool(
            np.all(c >= self.box[:, 0] - tol) and np.all(c <= self.box[:, 1] + tol)
        )

    def sample_points(self, gen, count):
        """Uniform coordinate samples, shape (count, 2n+1)."""
        lo, hi = self.box[:, 0], self.box[:, 1]
        return lo + (hi - lo) * gen.random((count, self.box.shape[0]))


@dataclass
class GridField:
    """Samples of a scalar on a uniform lattice over a coordinate box.

    ``values`` has one axis per coordinate in the flat layout; ``jet_invalid``
    optionally marks nodes whose discrete jets straddle a kink.
    """

    n: int
    box: np.ndarray
    values: np.ndarray
    jet_invalid: np.ndarray = None

    def __post_init__(self):
        self.box = np.asarray(self.box, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        d = 2 * self.n + 1
        if self.box.shape != (d, 2):
            raise ValueError(f"box must have shape ({d}, 2)")
        if self.values.ndim != d:
            raise ValueError(f"values must have {d} axes, got {self.values.ndim}")
        if any(r < 2 for r in self.values.shape):
            raise ValueError("each axis needs at least 2 nodes")
        if self.jet_invalid is not None:
            self.jet_invalid = np.asarray(self.jet_invalid, dtype=bool)
            if self.jet_invalid.shape != self.values.shape:
                raise ValueError("jet_invalid mask must match the value shape")

    @property
    def res(self):
        return self.values.shape

    @property
    def spacing(self):
        return (self.box[:, 1] - self.box[:, 0]) / (np.array(self.res) - 1)

    def axes(self):
        return [
            np.linspace(self.box[a, 0], self.box[a, 1], r)
            for a, r in enumerate(self.res)
        ]

    def coords_full(self):
        """Full coordinate tensor of shape res + (2n+1,)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def coords_at(self, index):
        axes = self.axes()
        flat = np.array([axes[a][i] for a, i in enumerate(index)])
        return Point.from_coords(flat, self.n)

    def boundary_mask(self):
        mask = np.zeros(self.res, dtype=bool)
        for a in range(len(self.res)):
            sl = [slice(None)] * len(self.res)
            sl[a] = 0
            mask[tuple(sl)] = True
            sl[a] = -1
            mask[tuple(sl)] = True
        return mask

    def interior_mask(self):
        return ~self.boundary_mask()

    def copy(self):
        mask = None if self.jet_invalid is None else self.jet_invalid.copy()
        return GridField(self.n, self.box.copy(), self.values.copy(), mask)


def _kink_mask(root, env, shape):
    """Nodes within one cell of a min/max branch switch, or on a tie."""
    mask = np.zeros(shape, dtype=bool)

    def walk(node):
        if isinstance(node, _MinMax):
            a = np.broadcast_to(np.asarray(node.a.evaluate(env), dtype=float), shape)
            b = np.broadcast_to(np.asarray(node.b.evaluate(env), dtype=float), shape)
            gap = a - b
            tie = np.abs(gap) <= KINK_TOL * (1.0 + np.abs(a) + np.abs(b))
            mask[tie] = True
            sgn = gap > 0
            for axis in range(len(shape)):
                flip = np.diff(sgn, axis=axis) != 0
                lead = [slice(None)] * len(shape)
                lag = [slice(None)] * len(shape)
                lead[axis] = slice(0, -1)
                lag[axis] = slice(1, None)
                mask[tuple(lead)] |= flip
                mask[tuple(lag)] |= flip
        for child in ("a", "b", "base"):
            sub = getattr(node, child, None)
            if isinstance(sub, Node):
                walk(sub)

    walk(root)
    return mask if mask.any() else None


def sample(f, domain, res, detect_kinks=True, **extra):
    """Evaluate an analytic field on a uniform lattice over the domain box.

    ``res`` is an int (same node count on every axis) or a per-axis tuple.
    When the expression contains min/max, nodes within one cell of a branch
    switch are flagged in ``jet_invalid``.
    """
    if f.n != domain.n:
        raise ValueError(f"dimension mismatch: field n={f.n} vs domain n={domain.n}")
    d = 2 * f.n + 1
    if np.isscalar(res):
        res = (int(res),) * d
    res = tuple(int(r) for r in res)
    if len(res) != d or any(r < 2 for r in res):
        raise ValueError(f"res must give at least 2 nodes on each of {d} axes")
    axes = [np.linspace(domain.box[a, 0], domain.box[a, 1], r) for a, r in enumerate(res)]
    mesh = np.meshgrid(*axes, indexing="ij")
    env = {name: mesh[a] for a, name in enumerate(f.names[:d])}
    for name in f.extra_vars:
        if name not in extra:
            raise ValueError(f"missing value for extra variable {name!r}")
        env[name] = extra[name]
    values = np.broadcast_to(np.asarray(f.root.evaluate(env), dtype=float), res).copy()
    mask = _kink_mask(f.root, env, res) if detect_kinks else None
    return GridField(f.n, domain.box.copy(), values, mask)


def jet2_fd(g, index, check_kinks=True):
    """Second-order central-difference jet at a grid node.

    Uses the native grid spacing.  The node must have the full 3^d stencil
    inside the lattice; nodes whose stencil touches a kink-flagged node raise
    :class:`NonSmoothError`.
    """
    d = len(g.res)
    index = tuple(int(i) for i in index)
    if len(index) != d:
        raise ValueError(f"index must have {d} entries")
    for a, i in enumerate(index):
        if not (1 <= i <= g.res[a] - 2):
            raise ValueError(f"stencil out of range on axis {a} at index {index}")
    if check_kinks and g.jet_invalid is not None:
        cube = tuple(slice(i - 1, i + 2) for i in index)
        if g.jet_invalid[cube].any():
            raise NonSmoothError(f"discrete jet at {index} straddles a kink")
    u = g.values
    h = g.spacing
    value = u[index]
    grad = np.zeros(d)
    hess = np.zeros((d, d))

    def at(offset):
        return u[tuple(i + o for i, o in zip(index, offset))]

    for a in range(d):
        e = [0] * d
        e[a] = 1
        up, dn = at(e), at([-o for o in e])
        grad[a] = (up - dn) / (2.0 * h[a])
        hess[a, a] = (up - 2.0 * value + dn) / (h[a] * h[a])
    for a in range(d):
        for b in range(a + 1, d):
            e = [0] * d
            e[a], e[b] = 1, 1
            pp = at(e)
            e[b] = -1
            pm = at(e)
            e[a], e[b] = -1, 1
            mp = at(e)
            e[b] = -1
            mm = at(e)
            hess[a, b] = hess[b, a] = (pp - pm - mp + mm) / (4.0 * h[a] * h[b])
    return Jet2(value, grad, hess)


def gamma_interior(g, gamma, block=4096):
    """Interior nodes at gauge distance >= gamma from every boundary-shell node.

    Returns a boolean mask over the full lattice (False on the shell).  An
    empty result is legitimate for large gamma and is logged.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    coords = g.coords_full().reshape(-1, 2 * g.n + 1)
    shell = g.boundary_mask().ravel()
    interior_idx = np.nonzero(~shell)[0]
    shell_coords = coords[shell]
    keep = np.ones(interior_idx.shape[0], dtype=bool)
    for start in range(0, interior_idx.shape[0], block):
        chunk = interior_idx[start : start + block]
        dmin = np.min(
            dist_coords(coords[chunk][:, None, :], shell_coords[None, :, :], g.n),
            axis=1,
        )
        keep[start : start + chunk.shape[0]] = dmin >= gamma
    mask = np.zeros(coords.shape[0], dtype=bool)
    mask[interior_idx[keep]] = True
    mask = mask.reshape(g.res)
    if not mask.any():
        log.warning("gamma_interior: no interior node at distance >= %g", gamma)
    return mask
