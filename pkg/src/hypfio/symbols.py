"""
Expression-tree symbols p(t, x, xi) in one space dimension.

Trees are immutable and hashable.  Arithmetic operators build new trees with
light constant folding; no other simplification is attempted.  Evaluation is
vectorised over numpy arrays and always returns complex values.

The text form accepted by :func:`parse` is ordinary infix arithmetic over the
variables ``t``, ``x``, ``xi`` with the functions ``sin``, ``cos``, ``exp``,
``tanh``, ``abs_smooth``, ``jb`` (the Japanese bracket ``(1 + u**2)**0.5``) and
``pow(e, k)`` for integer ``k``.  ``str(expr)`` produces text that parses back
to an equal tree.
"""
from __future__ import annotations

import ast
import math
from functools import lru_cache

import numpy as np

from .errors import DomainError, ParseError

VARIABLES = ("t", "x", "xi")
DIV_EPS = 1e-14
ABS_SMOOTH_EPS = 1e-10

# smooth functions admitted in symbols; data-only functions may not be differentiated
SMOOTH_FUNCS = ("sin", "cos", "exp", "tanh", "abs_smooth", "jb")
DATA_FUNCS = ("heaviside", "abs", "sqrt")


def _as_expr(value) -> "Expr":
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float, complex, np.number)):
        return Const(value)
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


class Expr:
    """Base node.  Subclasses implement ``_eval``, ``diff``, ``key`` and ``__str__``."""

    __slots__ = ("declared_order",)

    def __init__(self):
        self.declared_order = None

    # -- construction -----------------------------------------------------
    def with_order(self, order: int | None) -> "Expr":
        """Return a copy carrying ``declared_order``."""
        clone = object.__new__(type(self))
        for cls in type(self).__mro__:
            for slot in getattr(cls, "__slots__", ()):
                if hasattr(self, slot):
                    object.__setattr__(clone, slot, getattr(self, slot))
        clone.declared_order = order
        return clone

    def __add__(self, other):
        return add(self, _as_expr(other))

    def __radd__(self, other):
        return add(_as_expr(other), self)

    def __sub__(self, other):
        return sub(self, _as_expr(other))

    def __rsub__(self, other):
        return sub(_as_expr(other), self)

    def __mul__(self, other):
        return mul(self, _as_expr(other))

    def __rmul__(self, other):
        return mul(_as_expr(other), self)

    def __truediv__(self, other):
        return div(self, _as_expr(other))

    def __rtruediv__(self, other):
        return div(_as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, k):
        if isinstance(k, Const):
            k = k.value
        if isinstance(k, complex) or int(k) != k:
            raise ValueError("only integer powers are supported")
        return power(self, int(round(float(np.real(k)))))

    # -- structure --------------------------------------------------------
    def key(self) -> tuple:
        raise NotImplementedError

    def __eq__(self, other):
        return isinstance(other, Expr) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"Expr({str(self)!r})"

    def children(self) -> tuple:
        return ()

    def free_vars(self) -> frozenset:
        out = frozenset()
        for c in self.children():
            out |= c.free_vars()
        return out

    def depends_on(self, var: str) -> bool:
        return var in self.free_vars()

    @property
    def is_zero(self) -> bool:
        return isinstance(self, Const) and self.value == 0

    # -- numerics ---------------------------------------------------------
    def __call__(self, t=0.0, x=0.0, xi=0.0):
        return evaluate(self, t, x, xi)

    def _eval(self, env):
        raise NotImplementedError

    def diff(self, var: str) -> "Expr":
        raise NotImplementedError

    def subs(self, **repl) -> "Expr":
        """Substitute variables by expressions or numbers."""
        repl = {k: _as_expr(v) for k, v in repl.items()}
        return self._subs(repl)

    def _subs(self, repl):
        raise NotImplementedError


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        super().__init__()
        value = complex(value)
        if value.imag == 0:
            value = float(value.real)
        self.value = value

    def key(self):
        return ("c", self.value)

    def __str__(self):
        v = self.value
        if isinstance(v, complex):
            return f"({v.real!r}+{v.imag!r}j)" if v.real else f"{v.imag!r}j"
        if v == int(v) and abs(v) < 1e15:
            return str(int(v)) if v >= 0 else f"({int(v)})"
        return repr(v) if v >= 0 else f"({v!r})"

    def _eval(self, env):
        return np.asarray(self.value, dtype=complex)

    def diff(self, var):
        return ZERO

    def _subs(self, repl):
        return self


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        super().__init__()
        if name not in VARIABLES:
            raise ParseError(f"unknown variable {name!r}")
        self.name = name

    def key(self):
        return ("v", self.name)

    def __str__(self):
        return self.name

    def free_vars(self):
        return frozenset((self.name,))

    def _eval(self, env):
        return env[self.name]

    def diff(self, var):
        return ONE if var == self.name else ZERO

    def _subs(self, repl):
        return repl.get(self.name, self)


class _Binary(Expr):
    __slots__ = ("a", "b")
    op = "?"

    def __init__(self, a: Expr, b: Expr):
        super().__init__()
        self.a = a
        self.b = b

    def key(self):
        return (self.op, self.a.key(), self.b.key())

    def children(self):
        return (self.a, self.b)

    def __str__(self):
        return f"({self.a} {self.op} {self.b})"


class Add(_Binary):
    __slots__ = ()
    op = "+"

    def _eval(self, env):
        return self.a._eval(env) + self.b._eval(env)

    def diff(self, var):
        return add(self.a.diff(var), self.b.diff(var))

    def _subs(self, repl):
        return add(self.a._subs(repl), self.b._subs(repl))


class Sub(_Binary):
    __slots__ = ()
    op = "-"

    def _eval(self, env):
        return self.a._eval(env) - self.b._eval(env)

    def diff(self, var):
        return sub(self.a.diff(var), self.b.diff(var))

    def _subs(self, repl):
        return sub(self.a._subs(repl), self.b._subs(repl))


class Mul(_Binary):
    __slots__ = ()
    op = "*"

    def _eval(self, env):
        return self.a._eval(env) * self.b._eval(env)

    def diff(self, var):
        return add(mul(self.a.diff(var), self.b), mul(self.a, self.b.diff(var)))

    def _subs(self, repl):
        return mul(self.a._subs(repl), self.b._subs(repl))


class Div(_Binary):
    __slots__ = ()
    op = "/"

    def _eval(self, env):
        den = self.b._eval(env)
        if np.any(np.abs(den) < DIV_EPS):
            raise DomainError(f"division by ~0 in {self}")
        return self.a._eval(env) / den

    def diff(self, var):
        num = sub(mul(self.a.diff(var), self.b), mul(self.a, self.b.diff(var)))
        return div(num, power(self.b, 2))

    def _subs(self, repl):
        return div(self.a._subs(repl), self.b._subs(repl))


class Neg(Expr):
    __slots__ = ("a",)

    def __init__(self, a: Expr):
        super().__init__()
        self.a = a

    def key(self):
        return ("neg", self.a.key())

    def children(self):
        return (self.a,)

    def __str__(self):
        return f"(-{self.a})"

    def _eval(self, env):
        return -self.a._eval(env)

    def diff(self, var):
        return neg(self.a.diff(var))

    def _subs(self, repl):
        return neg(self.a._subs(repl))


class Pow(Expr):
    __slots__ = ("base", "k")

    def __init__(self, base: Expr, k: int):
        super().__init__()
        self.base = base
        self.k = int(k)

    def key(self):
        return ("pow", self.base.key(), self.k)

    def children(self):
        return (self.base,)

    def __str__(self):
        return f"pow({self.base}, {self.k})"

    def _eval(self, env):
        b = self.base._eval(env)
        if self.k < 0 and np.any(np.abs(b) < DIV_EPS):
            raise DomainError(f"negative power of ~0 in {self}")
        return b ** self.k

    def diff(self, var):
        db = self.base.diff(var)
        if db.is_zero:
            return ZERO
        return mul(mul(Const(self.k), power(self.base, self.k - 1)), db)

    def _subs(self, repl):
        return power(self.base._subs(repl), self.k)


def _heaviside(u):
    return np.where(np.real(u) > 0, 1.0, np.where(np.real(u) < 0, 0.0, 0.5)).astype(complex)


_NUMPY_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "tanh": np.tanh,
    "abs_smooth": lambda u: np.sqrt(u * u + ABS_SMOOTH_EPS**2),
    "jb": lambda u: np.sqrt(1.0 + u * u),
    "heaviside": _heaviside,
    "abs": lambda u: np.abs(u).astype(complex),
    "sqrt": np.sqrt,
}


class Func(Expr):
    __slots__ = ("name", "arg")

    def __init__(self, name: str, arg: Expr):
        super().__init__()
        if name not in _NUMPY_FUNCS:
            raise ParseError(f"unknown function {name!r}")
        self.name = name
        self.arg = arg

    def key(self):
        return ("f", self.name, self.arg.key())

    def children(self):
        return (self.arg,)

    def __str__(self):
        return f"{self.name}({self.arg})"

    def _eval(self, env):
        return _NUMPY_FUNCS[self.name](self.arg._eval(env))

    def diff(self, var):
        da = self.arg.diff(var)
        if da.is_zero:
            return ZERO
        u = self.arg
        n = self.name
        if n == "sin":
            outer = Func("cos", u)
        elif n == "cos":
            outer = neg(Func("sin", u))
        elif n == "exp":
            outer = self
        elif n == "tanh":
            outer = sub(ONE, power(self, 2))
        elif n in ("jb", "abs_smooth"):
            outer = div(u, self)
        else:
            raise ValueError(f"{n}() is data-only and has no derivative")
        return mul(outer, da)

    def _subs(self, repl):
        return func(self.name, self.arg._subs(repl))


ZERO = Const(0.0)
ONE = Const(1.0)
T = Var("t")
X = Var("x")
XI = Var("xi")


# -- smart constructors (constant folding and a - a only) ------------------------

def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if a.is_zero:
        return b
    if b.is_zero:
        return a
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if b.is_zero:
        return a
    if a.is_zero:
        return neg(b)
    if a.key() == b.key():
        return ZERO
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if a.is_zero or b.is_zero:
        return ZERO
    if isinstance(a, Const) and a.value == 1:
        return b
    if isinstance(b, Const) and b.value == 1:
        return a
    if isinstance(a, Const) and a.value == -1:
        return neg(b)
    if isinstance(b, Const) and b.value == -1:
        return neg(a)
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(b, Const):
        if b.value == 0:
            raise DomainError("division by constant zero")
        if isinstance(a, Const):
            return Const(a.value / b.value)
        if b.value == 1:
            return a
    if a.is_zero:
        return ZERO
    return Div(a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def power(base: Expr, k: int) -> Expr:
    k = int(k)
    if k == 0:
        return ONE
    if k == 1:
        return base
    if isinstance(base, Const):
        if base.value == 0 and k < 0:
            raise DomainError("negative power of zero")
        return Const(base.value ** k)
    if isinstance(base, Pow):
        return power(base.base, base.k * k)
    return Pow(base, k)


def func(name: str, arg: Expr) -> Expr:
    if isinstance(arg, Const) and name in _NUMPY_FUNCS:
        return Const(complex(_NUMPY_FUNCS[name](np.asarray(arg.value, dtype=complex))))
    return Func(name, arg)


def jb(arg: Expr = XI) -> Expr:
    """Japanese bracket ``<arg> = (1 + arg**2)**0.5``."""
    return func("jb", _as_expr(arg))


def sin(arg):
    return func("sin", _as_expr(arg))


def cos(arg):
    return func("cos", _as_expr(arg))


def exp(arg):
    return func("exp", _as_expr(arg))


def tanh(arg):
    return func("tanh", _as_expr(arg))


# -- evaluation ---------------------------------------------------------------

def evaluate(expr: Expr, t=0.0, x=0.0, xi=0.0) -> np.ndarray | complex:
    """Evaluate ``expr`` at broadcastable arrays ``t, x, xi``.

    Raises :class:`DomainError` when a division meets a denominator smaller
    than ``1e-14`` in magnitude.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    shape = np.broadcast_shapes(t.shape, x.shape, xi.shape)
    env = {"t": t.astype(complex), "x": x.astype(complex), "xi": xi.astype(complex)}
    out = np.broadcast_to(np.asarray(expr._eval(env), dtype=complex), shape)
    if out.ndim == 0:
        return complex(out)
    return np.array(out)


def differentiate(expr: Expr, var: str) -> Expr:
    """Exact partial derivative of ``expr`` with respect to ``t``, ``x`` or ``xi``."""
    if var not in VARIABLES:
        raise ValueError(f"unknown variable {var!r}")
    return _diff_cached(expr, var)


@lru_cache(maxsize=4096)
def _diff_cached(expr, var):
    return expr.diff(var)


def poisson_bracket(f: Expr, g: Expr) -> Expr:
    """``{f, g} = f_xi g_x - f_x g_xi``."""
    return sub(
        mul(differentiate(f, "xi"), differentiate(g, "x")),
        mul(differentiate(f, "x"), differentiate(g, "xi")),
    )


def iterated_bracket(lam_j: Expr, lam_k: Expr, n: int) -> Expr:
    """``{lam_j, {lam_j, ... {lam_j, lam_k}}}`` with ``n`` brackets."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = lam_k
    for _ in range(n):
        out = poisson_bracket(lam_j, out)
    return out


def elementary_symmetric(values: list[Expr]) -> list[Expr]:
    """e_0..e_m of the given expressions (e_0 = 1)."""
    e = [ONE]
    for v in values:
        nxt = [ONE]
        for k in range(1, len(e) + 1):
            prev = e[k] if k < len(e) else ZERO
            nxt.append(add(prev, mul(v, e[k - 1])))
        e = nxt
    return e


# -- parsing ------------------------------------------------------------------

_NAMES = {"pi": Const(math.pi), "I": Const(1j), "j": Const(1j)}


def parse(text: str, allow_data_functions: bool = False) -> Expr:
    """Parse the infix mini-language into an expression tree.

    >>> str(parse("x*xi"))
    '(x * xi)'
    """
    if not isinstance(text, str):
        return _as_expr(text)
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ParseError(f"cannot parse {text!r}: {exc.msg}") from None
    allowed = SMOOTH_FUNCS + (DATA_FUNCS if allow_data_functions else ())
    return _convert(tree.body, allowed, text)


def _const_int(node: ast.AST, text: str) -> int:
    val = _convert(node, (), text)
    if not isinstance(val, Const) or isinstance(val.value, complex) or val.value != int(val.value):
        raise ParseError(f"exponent must be an integer constant in {text!r}")
    return int(val.value)


def _convert(node, allowed, text) -> Expr:
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float, complex)):
            raise ParseError(f"bad literal {node.value!r} in {text!r}")
        return Const(node.value)
    if isinstance(node, ast.Name):
        if node.id in VARIABLES:
            return Var(node.id)
        if node.id in _NAMES:
            return _NAMES[node.id]
        raise ParseError(f"unknown name {node.id!r} in {text!r}")
    if isinstance(node, ast.UnaryOp):
        operand = _convert(node.operand, allowed, text)
        if isinstance(node.op, ast.USub):
            return neg(operand)
        if isinstance(node.op, ast.UAdd):
            return operand
        raise ParseError(f"unsupported unary operator in {text!r}")
    if isinstance(node, ast.BinOp):
        if isinstance(node.op, ast.Pow):
            return power(_convert(node.left, allowed, text), _const_int(node.right, text))
        a = _convert(node.left, allowed, text)
        b = _convert(node.right, allowed, text)
        ops = {ast.Add: add, ast.Sub: sub, ast.Mult: mul, ast.Div: div}
        for cls, fn in ops.items():
            if isinstance(node.op, cls):
                return fn(a, b)
        raise ParseError(f"unsupported operator in {text!r}")
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        name = node.func.id
        if node.keywords:
            raise ParseError(f"keyword arguments not allowed in {text!r}")
        if name == "pow":
            if len(node.args) != 2:
                raise ParseError(f"pow takes two arguments in {text!r}")
            return power(_convert(node.args[0], allowed, text), _const_int(node.args[1], text))
        if name not in allowed:
            raise ParseError(f"unknown function {name!r} in {text!r}")
        if len(node.args) != 1:
            raise ParseError(f"{name} takes one argument in {text!r}")
        return func(name, _convert(node.args[0], allowed, text))
    raise ParseError(f"unsupported syntax in {text!r}")
