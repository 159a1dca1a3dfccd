"""Expression DAGs for rational functions and log-linear potentials.

Expressions are hash-consed: structurally identical subtrees are interned to a
single node, so differentiation and model construction share subexpressions
aggressively.  Constants are exact ``Fraction`` values; conversion to a
floating scalar kind happens only at evaluation time.  Reciprocal nodes are
the only source of denominators -- systems are never cleared to polynomial
form, and the gradient of a log-linear potential keeps each denominator as
the original probability expression.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

__all__ = [
    "Expression",
    "ExpressionError",
    "SingularEvaluationError",
    "Potential",
    "RationalSystem",
    "const",
    "variable",
    "parameter",
    "add",
    "mul",
    "neg",
    "recip",
    "ipow",
    "differentiate",
    "substitute",
    "build_potential",
    "gradient",
]

Scalar = Union[int, Fraction]

# Node kinds.
K_CONST, K_VAR, K_PARAM, K_SUM, K_PROD, K_POW, K_NEG, K_RECIP = range(8)

_KIND_NAMES = {
    K_CONST: "const",
    K_VAR: "var",
    K_PARAM: "param",
    K_SUM: "sum",
    K_PROD: "prod",
    K_POW: "pow",
    K_NEG: "neg",
    K_RECIP: "recip",
}


class ExpressionError(ValueError):
    """Malformed expression construction."""


class SingularEvaluationError(ArithmeticError):
    """A reciprocal (or an interval enclosing one) evaluated to zero."""


class Expression:
    """One interned node of a rational-expression DAG.

    Nodes are immutable and deduplicated: building the same subtree twice
    returns the same object, so ``a is b`` coincides with structural
    equality.  ``uid`` increases from children to parents, which makes any
    uid-sorted reachable set a valid topological order.
    """

    __slots__ = ("kind", "data", "children", "uid", "vmax", "pmax")

    kind: int
    data: object
    children: tuple
    uid: int
    vmax: int  # largest variable index used, -1 if none
    pmax: int  # largest parameter index used, -1 if none

    def __repr__(self):
        return f"<Expression {self!s}>"

    def __str__(self):
        return _format(self)

    # Interned nodes: identity is structural equality.
    def __hash__(self):
        return self.uid

    def __eq__(self, other):
        return self is other

    @property
    def is_zero(self) -> bool:
        return self.kind == K_CONST and self.data == 0

    @property
    def is_constant(self) -> bool:
        return self.kind == K_CONST

    # Arithmetic sugar used by the model builders.
    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return add(self, neg(_coerce(other)))

    def __rsub__(self, other):
        return add(_coerce(other), neg(self))

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return mul(self, recip(_coerce(other)))

    def __rtruediv__(self, other):
        return mul(_coerce(other), recip(self))

    def __neg__(self):
        return neg(self)

    def __pow__(self, k):
        if not isinstance(k, int):
            raise ExpressionError("only integer powers are supported")
        return ipow(self, k)


_pool: dict = {}
_uid_counter = itertools.count()


def _mk(kind: int, data, children: tuple) -> Expression:
    key = (kind, data, tuple(c.uid for c in children))
    node = _pool.get(key)
    if node is not None:
        return node
    node = Expression.__new__(Expression)
    node.kind = kind
    node.data = data
    node.children = children
    node.uid = next(_uid_counter)
    node.vmax = max((c.vmax for c in children), default=-1)
    node.pmax = max((c.pmax for c in children), default=-1)
    if kind == K_VAR:
        node.vmax = max(node.vmax, data)
    elif kind == K_PARAM:
        node.pmax = max(node.pmax, data)
    _pool[key] = node
    return node


def _coerce(value) -> Expression:
    if isinstance(value, Expression):
        return value
    if isinstance(value, (int, Fraction)):
        return const(value)
    raise ExpressionError(f"cannot use {value!r} in an expression")


def const(value: Scalar) -> Expression:
    """Exact rational constant.  Floats are rejected; models carry exact data."""
    if isinstance(value, float):
        # Permit floats from random model generation: binary floats are
        # themselves exact rationals.
        value = Fraction(value)
    if not isinstance(value, (int, Fraction)):
        raise ExpressionError(f"constant must be rational, got {type(value).__name__}")
    return _mk(K_CONST, Fraction(value), ())


def variable(index: int) -> Expression:
    if index < 0:
        raise ExpressionError("variable index must be nonnegative")
    return _mk(K_VAR, index, ())


def parameter(index: int) -> Expression:
    if index < 0:
        raise ExpressionError("parameter index must be nonnegative")
    return _mk(K_PARAM, index, ())


def add(*terms: Expression) -> Expression:
    """n-ary sum; flattens nested sums, folds constants, drops zeros."""
    flat: list[Expression] = []
    acc = Fraction(0)
    for t in terms:
        t = _coerce(t)
        if t.kind == K_SUM:
            for c in t.children:
                if c.kind == K_CONST:
                    acc += c.data
                else:
                    flat.append(c)
        elif t.kind == K_CONST:
            acc += t.data
        else:
            flat.append(t)
    if acc != 0:
        flat.append(const(acc))
    if not flat:
        return const(0)
    if len(flat) == 1:
        return flat[0]
    flat.sort(key=lambda e: e.uid)
    return _mk(K_SUM, None, tuple(flat))


def mul(*factors: Expression) -> Expression:
    """n-ary product; flattens, folds constants, extracts signs, annihilates on zero."""
    flat: list[Expression] = []
    acc = Fraction(1)
    negate = False
    stack = [_coerce(f) for f in factors]
    for f in stack:
        if f.kind == K_NEG:
            negate = not negate
            f = f.children[0]
        if f.kind == K_PROD:
            for c in f.children:
                if c.kind == K_CONST:
                    acc *= c.data
                else:
                    flat.append(c)
        elif f.kind == K_CONST:
            acc *= f.data
        else:
            flat.append(f)
    if acc == 0:
        return const(0)
    if negate:
        acc = -acc
    if acc < 0:
        # Keep products sign-free; a single leading NEG wraps the result.
        return neg(mul(const(-acc), *flat))
    if acc != 1:
        flat.append(const(acc))
    if not flat:
        return const(1)
    if len(flat) == 1:
        return flat[0]
    flat.sort(key=lambda e: e.uid)
    return _mk(K_PROD, None, tuple(flat))


def neg(e: Expression) -> Expression:
    e = _coerce(e)
    if e.kind == K_CONST:
        return const(-e.data)
    if e.kind == K_NEG:
        return e.children[0]
    return _mk(K_NEG, None, (e,))


def recip(e: Expression) -> Expression:
    e = _coerce(e)
    if e.kind == K_CONST:
        if e.data == 0:
            raise ExpressionError("reciprocal of the zero constant")
        return const(Fraction(1) / e.data)
    if e.kind == K_RECIP:
        return e.children[0]
    if e.kind == K_NEG:
        return neg(recip(e.children[0]))
    return _mk(K_RECIP, None, (e,))


def ipow(e: Expression, k: int) -> Expression:
    e = _coerce(e)
    if k < 0:
        return recip(ipow(e, -k))
    if k == 0:
        return const(1)
    if k == 1:
        return e
    if e.kind == K_CONST:
        return const(e.data**k)
    if e.kind == K_POW:
        return ipow(e.children[0], e.data * k)
    if e.kind == K_NEG:
        inner = ipow(e.children[0], k)
        return inner if k % 2 == 0 else neg(inner)
    if e.kind == K_RECIP:
        # Keep the shared reciprocal node; square the quotient, not the base.
        return _mk(K_POW, k, (e,))
    return _mk(K_POW, k, (e,))


def _format(e: Expression, _depth=0) -> str:
    if _depth > 12:
        return "..."
    k = e.kind
    if k == K_CONST:
        return str(e.data)
    if k == K_VAR:
        return f"x{e.data}"
    if k == K_PARAM:
        return f"s{e.data}"
    if k == K_SUM:
        return "(" + " + ".join(_format(c, _depth + 1) for c in e.children) + ")"
    if k == K_PROD:
        return "*".join(_format(c, _depth + 1) for c in e.children)
    if k == K_POW:
        return f"{_format(e.children[0], _depth + 1)}^{e.data}"
    if k == K_NEG:
        return f"-{_format(e.children[0], _depth + 1)}"
    if k == K_RECIP:
        return f"1/{_format(e.children[0], _depth + 1)}"
    raise AssertionError(k)


# --------------------------------------------------------------------------
# Differentiation


_diff_cache: dict[tuple[int, int], Expression] = {}


def differentiate(e: Expression, index: int) -> Expression:
    """Partial derivative with respect to variable ``index``, shared on the DAG."""
    key = (e.uid, index)
    hit = _diff_cache.get(key)
    if hit is not None:
        return hit
    k = e.kind
    if k in (K_CONST, K_PARAM):
        d = const(0)
    elif k == K_VAR:
        d = const(1 if e.data == index else 0)
    elif k == K_SUM:
        d = add(*(differentiate(c, index) for c in e.children))
    elif k == K_PROD:
        terms = []
        cs = e.children
        for i, c in enumerate(cs):
            dc = differentiate(c, index)
            if not dc.is_zero:
                terms.append(mul(dc, *(cs[j] for j in range(len(cs)) if j != i)))
        d = add(*terms)
    elif k == K_POW:
        base = e.children[0]
        db = differentiate(base, index)
        d = const(0) if db.is_zero else mul(const(e.data), ipow(base, e.data - 1), db)
    elif k == K_NEG:
        d = neg(differentiate(e.children[0], index))
    elif k == K_RECIP:
        base = e.children[0]
        db = differentiate(base, index)
        d = const(0) if db.is_zero else neg(mul(db, ipow(recip(base), 2)))
    else:
        raise AssertionError(k)
    _diff_cache[key] = d
    return d


def substitute(e: Expression, replacements: Mapping[int, Expression], _memo=None) -> Expression:
    """Replace variables by expressions (used by positive reparametrizations)."""
    if _memo is None:
        _memo = {}
    hit = _memo.get(e.uid)
    if hit is not None:
        return hit
    k = e.kind
    if k == K_VAR:
        out = replacements.get(e.data, e)
    elif k in (K_CONST, K_PARAM):
        out = e
    else:
        kids = tuple(substitute(c, replacements, _memo) for c in e.children)
        if k == K_SUM:
            out = add(*kids)
        elif k == K_PROD:
            out = mul(*kids)
        elif k == K_POW:
            out = ipow(kids[0], e.data)
        elif k == K_NEG:
            out = neg(kids[0])
        elif k == K_RECIP:
            out = recip(kids[0])
        else:
            raise AssertionError(k)
    _memo[e.uid] = out
    return out


# --------------------------------------------------------------------------
# Potentials and rational systems


class Potential:
    """A log-linear objective sum(s_i * log(arg_i)) kept symbolic.

    The logarithm is never evaluated, only differentiated: the gradient is a
    pure rational system with the arguments as denominators.
    """

    __slots__ = ("terms", "n_vars", "n_params", "linear", "_grad")

    def __init__(self, terms: Sequence[tuple[int, Expression]], n_vars: int,
                 n_params: int, linear: bool = False):
        terms = tuple((int(i), t) for i, t in terms)
        if not terms:
            raise ExpressionError("potential needs at least one term")
        for i, (pidx, arg) in enumerate(terms):
            if arg.is_zero:
                raise ExpressionError(f"term {i} (parameter {pidx}) has identically zero argument")
            if not 0 <= pidx < n_params:
                raise ExpressionError(f"term {i} uses parameter {pidx} outside arity {n_params}")
            if arg.vmax >= n_vars:
                raise ExpressionError(f"term {i} uses variable {arg.vmax} outside arity {n_vars}")
            if arg.pmax >= 0:
                raise ExpressionError("potential arguments must not contain parameters")
        self.terms = terms
        self.n_vars = n_vars
        self.n_params = n_params
        self.linear = bool(linear)
        self._grad = None

    def gradient(self) -> "RationalSystem":
        if self._grad is None:
            self._grad = gradient(self)
        return self._grad

    def __repr__(self):
        return (f"Potential({len(self.terms)} terms, d={self.n_vars}, "
                f"n_params={self.n_params}, linear={self.linear})")


class RationalSystem:
    """Square system of rational expressions F(x; s) with cached Jacobian.

    Systems produced by :func:`gradient` are linear in the parameters s,
    which the path tracker exploits for the homotopy velocity term.
    """

    __slots__ = ("equations", "n_vars", "n_params", "potential", "linear",
                 "param_linear", "_jac")

    def __init__(self, equations: Sequence[Expression], n_vars: int, n_params: int,
                 potential: Potential | None = None, linear: bool = False,
                 param_linear: bool = False):
        equations = tuple(equations)
        if len(equations) != n_vars:
            raise ExpressionError(
                f"system must be square: {len(equations)} equations, {n_vars} unknowns")
        for eq in equations:
            if eq.vmax >= n_vars:
                raise ExpressionError("equation uses a variable outside the declared arity")
            if eq.pmax >= n_params:
                raise ExpressionError("equation uses a parameter outside the declared arity")
        self.equations = equations
        self.n_vars = n_vars
        self.n_params = n_params
        self.potential = potential
        self.linear = bool(linear)
        self.param_linear = bool(param_linear)
        self._jac = None

    def jacobian_expressions(self) -> tuple[tuple[Expression, ...], ...]:
        if self._jac is None:
            self._jac = tuple(
                tuple(differentiate(eq, j) for j in range(self.n_vars))
                for eq in self.equations)
        return self._jac

    def __repr__(self):
        return f"RationalSystem(d={self.n_vars}, n_params={self.n_params})"


def build_potential(model) -> Potential:
    """Potential of a model: one term s_i * log(p_i) per state.

    ``model`` supplies ``probabilities`` (expressions), ``n_vars`` and an
    optional ``linear`` flag; probabilities that sum to one need no
    normalization term, since its logarithm vanishes identically.
    """
    probs = list(model.probabilities)
    if not probs:
        raise ExpressionError("model has no states")
    labels = list(getattr(model, "states", range(len(probs))))
    for lbl, p in zip(labels, probs):
        if p.is_zero:
            raise ExpressionError(f"state {lbl!r} has identically zero probability")
    terms = [(i, p) for i, p in enumerate(probs)]
    return Potential(terms, n_vars=model.n_vars, n_params=len(probs),
                     linear=getattr(model, "linear", False))


def gradient(potential: Potential) -> RationalSystem:
    """Likelihood equations of a potential: d/dx_j sum s_i log(p_i) = sum s_i p_i'/p_i.

    No log nodes remain and no denominator is ever expanded; each term keeps
    the probability itself behind a single shared reciprocal node.
    """
    eqs = []
    for j in range(potential.n_vars):
        terms = []
        for pidx, arg in potential.terms:
            darg = differentiate(arg, j)
            if darg.is_zero:
                continue
            terms.append(mul(parameter(pidx), darg, recip(arg)))
        eqs.append(add(*terms))
    return RationalSystem(eqs, potential.n_vars, potential.n_params,
                          potential=potential, linear=potential.linear,
                          param_linear=True)
