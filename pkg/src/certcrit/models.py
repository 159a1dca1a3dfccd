"""Model constructors: moduli-space configuration, random linear, low-rank
tensor, simplex and binary-independence families, plus positive
reparametrizations onto the orthant.

Every constructor yields an immutable :class:`ModelSpec` whose probability
expressions use exact rational coefficients, so identities such as
sum-to-one hold exactly and certification can ingest exact parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, permutations
from typing import Callable, Optional, Sequence

import numpy as np

from . import expr as ex
from .expr import Expression, Potential, build_potential

__all__ = [
    "ModelSpec",
    "PositiveChart",
    "GroupAction",
    "chy_model",
    "cegm3_model",
    "random_linear_model",
    "tensor_model",
    "simplex_model",
    "independence_model",
    "positive_chart",
    "chy_states",
    "cegm_states",
    "cegm_excluded_triples",
    "tensor_states",
    "pair_label",
    "triple_label",
    "tensor_label",
    "chy_ordering_signature",
]

DOMAIN_TOL = 1e-10

# Known solution counts used as monodromy targets when preparing start
# systems.  Formula-backed families are exact; tensor entries are
# experimentally established reference counts (gradient zeros, i.e. ML
# degree times k!).
TENSOR_KNOWN_ZEROS = {
    (2, 2, 4): 24, (2, 2, 5): 78, (2, 2, 6): 164, (2, 2, 7): 316,
    (2, 2, 8): 536, (2, 2, 9): 854, (2, 2, 10): 1268,
    (3, 2, 3): 242, (3, 2, 4): 2898,
}
CEGM_KNOWN_COUNTS = {6: 26, 7: 1272, 8: 188112}


@dataclass(frozen=True)
class GroupAction:
    """Finite group acting on solution coordinates by affine maps x -> Ax + b."""

    matrices: tuple  # tuple of (d, d) float arrays
    offsets: tuple   # tuple of (d,) float arrays

    @property
    def order(self) -> int:
        return len(self.matrices)

    def orbit(self, points: np.ndarray) -> np.ndarray:
        """All images of points (B, d) under the group; shape (order, B, d)."""
        points = np.atleast_2d(points)
        return np.stack([points @ A.T + b for A, b in zip(self.matrices, self.offsets)])


@dataclass(frozen=True)
class PositiveChart:
    """Positive reparametrization data for a model over the open orthant.

    ``substitutions`` express the base coordinates in the chart coordinates.
    ``factor_exprs``/``factor_rows`` decompose log L = sum_f e_f(s) log f(x)
    up to an additive constant; coordinate factors feed the u-map and the
    remaining ones the v-map (with q^-v convention, v = -e).
    """

    dim: int
    substitutions: tuple
    factor_exprs: tuple
    factor_rows: np.ndarray          # (n_factors, n_states) integer
    factor_names: tuple
    u_map: np.ndarray                # (dim, n_states) integer
    from_base: Optional[Callable[[np.ndarray], np.ndarray]]

    def v_map(self) -> tuple[np.ndarray, tuple]:
        """Exponent map for non-coordinate factors, q_j^{-v_j} convention."""
        coord = [i for i, e in enumerate(self.factor_exprs) if e.kind == ex.K_VAR]
        rest = [i for i in range(len(self.factor_exprs)) if i not in coord]
        return -self.factor_rows[rest], tuple(self.factor_names[i] for i in rest)

    def hypothesis_report(self, s: Sequence[float]) -> dict:
        s = np.asarray([float(v) for v in s])
        u = self.u_map @ s
        vm, names = self.v_map()
        v = vm @ s
        return {
            "u": u.tolist(),
            "v": {name: val for name, val in zip(names, v.tolist())},
            "all_v_positive": bool(np.all(v > 0)),
        }


class ModelSpec:
    """A named parametrized model: states, probability expressions, domain."""

    def __init__(self, name: str, family: str, descriptor: dict, n_vars: int,
                 states: Sequence[str], probabilities: Sequence[Expression],
                 domain: str, linear: bool = False, sum_to_one: bool = True,
                 group_action: GroupAction | None = None,
                 chart: PositiveChart | None = None,
                 base_model: "ModelSpec | None" = None,
                 expected_count: int | None = None,
                 interior: np.ndarray | None = None,
                 meta: dict | None = None):
        self.name = name
        self.family = family
        self.descriptor = dict(descriptor)
        self.n_vars = n_vars
        self.states = tuple(states)
        self.probabilities = tuple(probabilities)
        self.domain = domain
        self.linear = linear
        self.sum_to_one = sum_to_one
        self.group_action = group_action
        self.chart = chart
        self.base_model = base_model
        self.expected_count = expected_count
        self._interior = interior
        self.meta = meta or {}
        self._potential: Potential | None = None
        if len(self.states) != len(self.probabilities):
            raise ValueError("state/probability count mismatch")

    @property
    def n_states(self) -> int:
        return len(self.states)

    def potential(self) -> Potential:
        if self._potential is None:
            self._potential = build_potential(self)
        return self._potential

    def state_index(self) -> dict:
        return {lbl: i for i, lbl in enumerate(self.states)}

    def interior_point(self) -> np.ndarray:
        if self._interior is None:
            raise ValueError(f"model {self.name} has no distinguished interior point")
        return np.array(self._interior, dtype=float)

    def in_domain(self, points: np.ndarray, probs: np.ndarray,
                  tol: float = DOMAIN_TOL) -> np.ndarray:
        """Strict domain membership for real points (B, d), given p-values (B, n)."""
        points = np.atleast_2d(points.real)
        ok = np.all(probs.real > tol, axis=1)
        if self.domain == "orthant":
            ok &= np.all(points > tol, axis=1)
        elif self.domain == "product-simplex":
            m, k = self.descriptor["m"], self.descriptor["k"]
            x = points[:, : k * (m - 1)].reshape(-1, k, m - 1)
            y = points[:, k * (m - 1):]
            ok &= np.all(x > tol, axis=(1, 2))
            ok &= np.all(x.sum(axis=2) < 1 - tol, axis=1)
            ok &= np.all(y > tol, axis=1)
            ok &= y.sum(axis=1) < 1 - tol
        # "probability-region" domains (CHY, linear) are exactly p_i > 0.
        return ok

    def __repr__(self):
        return (f"ModelSpec({self.name}: d={self.n_vars}, "
                f"states={self.n_states}, domain={self.domain})")


# --------------------------------------------------------------------------
# State label helpers


def pair_label(i: int, j: int, m: int) -> str:
    return f"{i}{j}" if m <= 9 else f"{i},{j}"


def triple_label(i: int, j: int, k: int, m: int) -> str:
    return f"{i}{j}{k}" if m <= 9 else f"{i},{j},{k}"


def tensor_label(index: tuple) -> str:
    return "(" + ",".join(str(i) for i in index) + ")"


def chy_states(m: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(2, m + 1) for j in range(i + 1, m + 1)
            if (i, j) != (2, m)]


def cegm_excluded_triples(m: int) -> list[tuple[int, int, int]]:
    return [(1, 2, j) for j in range(3, m + 1)] + [(1, 3, 4), (2, 3, 4)]


def cegm_states(m: int) -> list[tuple[int, int, int]]:
    excluded = set(cegm_excluded_triples(m))
    return [t for t in combinations(range(1, m + 1), 3) if t not in excluded]


def tensor_states(m: int, l: int) -> list[tuple]:
    def rec(rest, slots):
        if slots == 1:
            return [(rest,)]
        return [(h,) + t for h in range(rest, -1, -1) for t in rec(rest - h, slots - 1)]

    return rec(l, m)


# --------------------------------------------------------------------------
# Moduli of points on the line (k = 2)


def _chy_alpha(i: int, j: int, m: int) -> Fraction:
    if j == m:
        return Fraction(1, m - 3)
    if i == 2:
        return Fraction(2 * m - 2 * j - 1, (m - 3) ** 2)
    return Fraction(1, (m - 3) ** 2)


def _chy_minor_coeffs(i: int, j: int, m: int) -> list[Fraction]:
    """Coefficient vector (c0, c1..c_{m-3}) of the 2x2 minor q_ij.

    Columns of the defining 2 x m matrix: (0,-1), (1,0), (1,x_1) ...
    (1,x_{m-3}), (1,1); the minor of columns i,j is a_i b_j - a_j b_i.
    """
    d = m - 3

    def col(c):
        a = 0 if c == 1 else 1
        b = [Fraction(0)] * (d + 1)
        if c == 1:
            b[0] = Fraction(-1)
        elif c == 2:
            pass
        elif c == m:
            b[0] = Fraction(1)
        else:
            b[c - 2] = Fraction(1)
        return a, b

    ai, bi = col(i)
    aj, bj = col(j)
    return [ai * bj[t] - aj * bi[t] for t in range(d + 1)]


def _linear_expr(coeffs: Sequence[Fraction]) -> Expression:
    terms = []
    if coeffs[0] != 0:
        terms.append(ex.const(coeffs[0]))
    for t, c in enumerate(coeffs[1:]):
        if c != 0:
            terms.append(ex.mul(ex.const(c), ex.variable(t)))
    return ex.add(*terms)


def chy_model(m: int) -> ModelSpec:
    """Configurations of m marked points on the line as a linear model.

    States are the pairs (i,j), 2 <= i < j <= m, (i,j) != (2,m); each
    probability is a positive rational multiple of a 2x2 minor, with the
    constants chosen so the probabilities sum to one exactly.
    """
    if m < 4:
        raise ValueError("need at least 4 points")
    d = m - 3
    pairs = chy_states(m)
    states, probs, rows = [], [], []
    for (i, j) in pairs:
        alpha = _chy_alpha(i, j, m)
        coeffs = [alpha * c for c in _chy_minor_coeffs(i, j, m)]
        states.append(pair_label(i, j, m))
        probs.append(_linear_expr(coeffs))
        rows.append(coeffs)
    total = [sum(r[t] for r in rows) for t in range(d + 1)]
    assert total[0] == 1 and all(c == 0 for c in total[1:]), "sum-to-one is structural"
    interior = np.array([(t + 1) / (m - 2) for t in range(d)])
    return ModelSpec(
        name=f"chy-m{m}", family="chy", descriptor={"family": "chy", "m": m},
        n_vars=d, states=states, probabilities=probs,
        domain="ordered-simplex", linear=True, sum_to_one=True,
        expected_count=math.factorial(m - 3), interior=interior,
        meta={"m": m, "pairs": pairs, "linear_coeffs": rows})


def chy_ordering_signature(points: np.ndarray, tol: float = 1e-9):
    """Ordering permutation of each real solution, or None if outside (0,1)."""
    points = np.atleast_2d(points.real)
    out = []
    for p in points:
        if np.all(p > tol) and np.all(p < 1 - tol):
            out.append(tuple(int(t) for t in np.argsort(p)))
        else:
            out.append(None)
    return out


# --------------------------------------------------------------------------
# Higher configuration models (k = 3)


def cegm3_model(m: int) -> ModelSpec:
    """Configurations of m points in the plane; minors of a 3 x m frame.

    The p_I are bilinear minors and do not sum to one: the model is
    potential-only, and the m minors fixed to 1 never enter the potential.
    """
    if m < 5:
        raise ValueError("need at least 5 points")
    d = 2 * m - 8
    nfree = m - 4

    def col(c):
        if c == 1:
            return (ex.const(0), ex.const(0), ex.const(1))
        if c == 2:
            return (ex.const(0), ex.const(-1), ex.const(0))
        if c == 3:
            return (ex.const(1), ex.const(0), ex.const(0))
        if c == 4:
            return (ex.const(1), ex.const(1), ex.const(1))
        t = c - 5
        return (ex.const(1), ex.variable(t), ex.variable(nfree + t))

    cols = {c: col(c) for c in range(1, m + 1)}

    def det3(ci, cj, ck):
        (a1, a2, a3), (b1, b2, b3), (c1, c2, c3) = cols[ci], cols[cj], cols[ck]
        return ex.add(
            ex.mul(a1, b2, c3), ex.neg(ex.mul(a1, b3, c2)),
            ex.neg(ex.mul(a2, b1, c3)), ex.mul(a2, b3, c1),
            ex.mul(a3, b1, c2), ex.neg(ex.mul(a3, b2, c1)))

    triples = cegm_states(m)
    states = [triple_label(*t, m) for t in triples]
    probs = [det3(*t) for t in triples]
    interior = _cegm_chart_point(m, np.ones(nfree), np.ones(nfree))
    return ModelSpec(
        name=f"cegm3-m{m}", family="cegm3", descriptor={"family": "cegm3", "m": m},
        n_vars=d, states=states, probabilities=probs,
        domain="positive-minors", linear=False, sum_to_one=False,
        expected_count=CEGM_KNOWN_COUNTS.get(m), interior=interior,
        meta={"m": m, "triples": triples})


def _cegm_chart_point(m: int, z: np.ndarray, w: np.ndarray) -> np.ndarray:
    nfree = m - 4
    x = np.empty(nfree)
    y = np.empty(nfree)
    xprev, yprev = 1.0, 1.0
    wsum = 0.0
    for t in range(nfree):
        wsum += w[t]
        x[t] = xprev + z[t]
        y[t] = yprev + z[t] * (1.0 + wsum)
        xprev, yprev = x[t], y[t]
    return np.concatenate([x, y])


# --------------------------------------------------------------------------
# Random linear models


def random_linear_model(n: int, d: int, seed: int = 0) -> ModelSpec:
    """Dense affine-linear model with n+1 states; reproducible from seed.

    Constant terms are a normalized positive vector, so the origin is
    interior to the region where all states have positive probability; the
    last state is one minus the sum of the others, making sum-to-one
    structural.
    """
    if not 1 <= d <= n:
        raise ValueError("need 1 <= d <= n")
    rng = np.random.default_rng(seed)
    c = rng.random(n + 1)
    c_frac = [Fraction(v) for v in c]
    total = sum(c_frac)
    c_frac = [v / total for v in c_frac]
    coeffs = rng.standard_normal((n, d))
    rows = []
    for i in range(n):
        rows.append([c_frac[i]] + [Fraction(v) for v in coeffs[i]])
    last = [c_frac[n]] + [-sum(rows[i][1 + t] for i in range(n)) for t in range(d)]
    rows.append(last)
    probs = [_linear_expr(r) for r in rows]
    states = [str(i) for i in range(n + 1)]
    return ModelSpec(
        name=f"linear-n{n}-d{d}-s{seed}", family="linear",
        descriptor={"family": "linear", "n": n, "d": d, "seed": seed},
        n_vars=d, states=states, probabilities=probs,
        domain="probability-region", linear=True, sum_to_one=True,
        expected_count=math.comb(n, d), interior=np.zeros(d),
        meta={"linear_coeffs": rows})


# --------------------------------------------------------------------------
# Low-rank symmetric tensors (conditional independence)


def tensor_model(m: int, k: int, l: int) -> ModelSpec:
    """Mixture of k iid discrete variables on m states, observed l times.

    Unknowns are the k x (m-1) free entries of the row-stochastic matrix and
    the k-1 free mixture weights; the last column and weight are eliminated.
    Label swapping acts by permuting mixture components.
    """
    if m < 2 or k < 1 or l < 2:
        raise ValueError("need m >= 2, k >= 1, l >= 2")
    d = k * m - 1
    xvar = [[ex.variable(j * (m - 1) + i) for i in range(m - 1)] for j in range(k)]
    for j in range(k):
        free = list(xvar[j])
        xvar[j].append(ex.add(ex.const(1), ex.neg(ex.add(*free))))
    yvar = [ex.variable(k * (m - 1) + j) for j in range(k - 1)]
    yvar.append(ex.add(ex.const(1), ex.neg(ex.add(*yvar))) if k > 1 else ex.const(1))

    idx = tensor_states(m, l)
    states = [tensor_label(I) for I in idx]
    probs = []
    for I in idx:
        coeff = Fraction(math.factorial(l))
        for e in I:
            coeff /= math.factorial(e)
        mix = []
        for j in range(k):
            mono = [ex.ipow(xvar[j][i], I[i]) for i in range(m) if I[i] > 0]
            mix.append(ex.mul(yvar[j], *mono) if mono else yvar[j])
        probs.append(ex.mul(ex.const(coeff), ex.add(*mix)))

    group = _label_swap_action(m, k)
    interior = _tensor_interior(m, k)
    zeros = TENSOR_KNOWN_ZEROS.get((m, k, l))
    return ModelSpec(
        name=f"tensor-m{m}-k{k}-l{l}", family="tensor",
        descriptor={"family": "tensor", "m": m, "k": k, "l": l},
        n_vars=d, states=states, probabilities=probs,
        domain="product-simplex", linear=False, sum_to_one=True,
        group_action=group, expected_count=zeros, interior=interior,
        meta={"m": m, "k": k, "l": l})


def _tensor_interior(m: int, k: int) -> np.ndarray:
    x = np.empty((k, m - 1))
    for j in range(k):
        row = np.array([1.0 + i + 0.6 * j for i in range(m)])
        row /= row.sum()
        x[j] = row[:-1]
    y = np.array([1.0 + j for j in range(k)])
    y /= y.sum()
    return np.concatenate([x.ravel(), y[:-1]])


def _label_swap_action(m: int, k: int) -> GroupAction | None:
    if k < 2:
        return None
    d = k * (m - 1) + (k - 1)
    mats, offs = [], []
    for sigma in permutations(range(k)):
        A = np.zeros((d, d))
        b = np.zeros(d)
        for j in range(k):
            src = sigma[j]
            for i in range(m - 1):
                A[j * (m - 1) + i, src * (m - 1) + i] = 1.0
        for j in range(k - 1):
            row = k * (m - 1) + j
            src = sigma[j]
            if src < k - 1:
                A[row, k * (m - 1) + src] = 1.0
            else:
                # y_k is the eliminated weight: image is 1 - sum(y_1..y_{k-1}).
                b[row] = 1.0
                for t in range(k - 1):
                    A[row, k * (m - 1) + t] = -1.0
        mats.append(A)
        offs.append(b)
    return GroupAction(tuple(mats), tuple(offs))


# --------------------------------------------------------------------------
# Positive families and charts


def _content(coeffs: Sequence[Fraction]) -> Fraction:
    nz = [c for c in coeffs if c != 0]
    num = math.gcd(*(abs(c.numerator) for c in nz))
    den = math.lcm(*(c.denominator for c in nz))
    return Fraction(num, den)


def simplex_model(n: int) -> ModelSpec:
    """The full probability simplex on n+1 states, over the positive orthant."""
    if n < 1:
        raise ValueError("need n >= 1")
    xs = [ex.variable(i) for i in range(n)]
    den = ex.recip(ex.add(ex.const(1), *xs))
    probs = [den] + [ex.mul(x, den) for x in xs]
    states = [str(i) for i in range(n + 1)]
    dsum = ex.add(ex.const(1), *xs)
    rows = np.zeros((n + 1, n + 1), dtype=int)
    names = []
    factor_exprs = []
    u = np.zeros((n, n + 1), dtype=int)
    for i in range(n):
        factor_exprs.append(xs[i])
        names.append(f"x{i + 1}")
        rows[i, i + 1] = 1
        u[i, i + 1] = 1
    factor_exprs.append(dsum)
    names.append("1+x1+...+x%d" % n)
    rows[n, :] = -1
    chart = PositiveChart(dim=n, substitutions=tuple(xs),
                          factor_exprs=tuple(factor_exprs),
                          factor_rows=rows, factor_names=tuple(names),
                          u_map=u, from_base=None)
    return ModelSpec(
        name=f"simplex-n{n}", family="simplex",
        descriptor={"family": "simplex", "n": n},
        n_vars=n, states=states, probabilities=probs,
        domain="orthant", linear=False, sum_to_one=True,
        chart=chart, expected_count=1, interior=np.ones(n))


def independence_model() -> ModelSpec:
    """Independence of two binary variables: the 2x2 contingency quadric."""
    x1, x2 = ex.variable(0), ex.variable(1)
    f1 = ex.add(ex.const(1), x1)
    f2 = ex.add(ex.const(1), x2)
    den = ex.mul(ex.recip(f1), ex.recip(f2))
    probs = [den, ex.mul(x2, den), ex.mul(x1, den), ex.mul(x1, x2, den)]
    states = ["00", "01", "10", "11"]
    rows = np.array([
        [0, 0, 1, 1],    # x1 appears in p10, p11
        [0, 1, 0, 1],    # x2 appears in p01, p11
        [-1, -1, -1, -1],
        [-1, -1, -1, -1],
    ])
    u = rows[:2].copy()
    chart = PositiveChart(dim=2, substitutions=(x1, x2),
                          factor_exprs=(x1, x2, f1, f2),
                          factor_rows=rows,
                          factor_names=("x1", "x2", "1+x1", "1+x2"),
                          u_map=u, from_base=None)
    return ModelSpec(
        name="independence-2x2", family="independence",
        descriptor={"family": "independence"},
        n_vars=2, states=states, probabilities=probs,
        domain="orthant", linear=False, sum_to_one=True,
        chart=chart, expected_count=1, interior=np.ones(2))


def positive_chart(model: ModelSpec) -> ModelSpec:
    """Re-express a model over the positive orthant.

    Simplex-like families are already positive and returned as-is; the
    moduli families are rewritten through their stacked-coordinate charts.
    Solutions of the base model convert to chart coordinates through
    ``chart.from_base``.
    """
    if model.chart is not None:
        return model
    if model.family == "chy":
        return _chy_positive(model)
    if model.family == "cegm3":
        return _cegm_positive(model)
    raise ValueError(f"no positive chart for family {model.family!r}")


def _chy_positive(model: ModelSpec) -> ModelSpec:
    m = model.meta["m"]
    d = m - 3
    ys = [ex.variable(t) for t in range(d)]
    denom_sum = ex.add(ex.const(1), *ys)
    dinv = ex.recip(denom_sum)
    partial = [ex.add(*ys[: t + 1]) for t in range(d)]
    subs = tuple(ex.mul(partial[t], dinv) for t in range(d))

    factor_index: dict[int, int] = {}
    factor_exprs: list[Expression] = []
    factor_names: list[str] = []
    n = model.n_states
    rows_acc: list[np.ndarray] = []

    def factor_row(e: Expression) -> np.ndarray:
        fi = factor_index.get(e.uid)
        if fi is None:
            fi = len(factor_exprs)
            factor_index[e.uid] = fi
            factor_exprs.append(e)
            factor_names.append(str(e))
            rows_acc.append(np.zeros(n, dtype=int))
        return rows_acc[fi]

    probs = []
    for si, coeffs in enumerate(model.meta["linear_coeffs"]):
        c0 = coeffs[0]
        # p(x(y)) = N(y) / (1 + y_1 + ... + y_d) with
        # N = c0 + sum_k y_k * (c0 + sum_{j >= k} c_j).
        ncoef = [c0] + [c0 + sum(coeffs[1 + j] for j in range(t, d)) for t in range(d)]
        if any(c < 0 for c in ncoef):
            raise ValueError("chart numerator is not subtraction-free")
        cont = _content(ncoef)
        norm = [c / cont for c in ncoef]
        numer = _linear_expr(norm)
        probs.append(ex.mul(ex.const(cont), numer, dinv))
        if not numer.is_constant:
            factor_row(numer)[si] += 1
        factor_row(denom_sum)[si] -= 1

    rows = np.array(rows_acc, dtype=int)
    u = np.zeros((d, n), dtype=int)
    for fi, e in enumerate(factor_exprs):
        if e.kind == ex.K_VAR:
            u[e.data] = rows[fi]

    def from_base(points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        prev = np.concatenate([np.zeros((points.shape[0], 1), points.dtype),
                               points[:, :-1]], axis=1)
        return (points - prev) / (1.0 - points[:, -1:])

    chart = PositiveChart(dim=d, substitutions=subs,
                          factor_exprs=tuple(factor_exprs),
                          factor_rows=rows, factor_names=tuple(factor_names),
                          u_map=u, from_base=from_base)
    return ModelSpec(
        name=model.name + "+chart", family="chy-chart",
        descriptor={**model.descriptor, "chart": True},
        n_vars=d, states=model.states, probabilities=probs,
        domain="orthant", linear=False, sum_to_one=True,
        chart=chart, base_model=model, expected_count=model.expected_count,
        interior=np.ones(d), meta=dict(model.meta))


def _cegm_positive(model: ModelSpec) -> ModelSpec:
    m = model.meta["m"]
    nfree = m - 4
    d = 2 * nfree
    zs = [ex.variable(t) for t in range(nfree)]
    ws = [ex.variable(nfree + t) for t in range(nfree)]
    xsub, ysub = [], []
    xprev, yprev = ex.const(1), ex.const(1)
    for t in range(nfree):
        wsum = ex.add(ex.const(1), *ws[: t + 1])
        xprev = ex.add(xprev, zs[t])
        yprev = ex.add(yprev, ex.mul(zs[t], wsum))
        xsub.append(xprev)
        ysub.append(yprev)
    mapping = {t: xsub[t] for t in range(nfree)}
    mapping.update({nfree + t: ysub[t] for t in range(nfree)})

    probs = [ex.substitute(p, mapping) for p in model.probabilities]
    n = model.n_states
    rows = np.eye(n, dtype=int)
    names = tuple(f"p_{lbl}" for lbl in model.states)
    u = np.zeros((d, n), dtype=int)

    def from_base(points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        x = points[:, :nfree]
        y = points[:, nfree:]
        ones = np.ones((points.shape[0], 1), dtype=points.dtype)
        xa = np.concatenate([ones, x], axis=1)
        ya = np.concatenate([ones, y], axis=1)
        z = np.diff(xa, axis=1)
        ratio = np.diff(ya, axis=1) / z
        w = np.concatenate([ratio[:, :1] - 1.0, np.diff(ratio, axis=1)], axis=1)
        return np.concatenate([z, w], axis=1)

    chart = PositiveChart(dim=d, substitutions=tuple(xsub + ysub),
                          factor_exprs=tuple(probs), factor_rows=rows,
                          factor_names=names, u_map=u, from_base=from_base)
    return ModelSpec(
        name=model.name + "+chart", family="cegm3-chart",
        descriptor={**model.descriptor, "chart": True},
        n_vars=d, states=model.states, probabilities=probs,
        domain="orthant", linear=False, sum_to_one=False,
        chart=chart, base_model=model, expected_count=model.expected_count,
        interior=np.ones(d), meta=dict(model.meta))


# --------------------------------------------------------------------------
# Model registry used by the service and CLI


def make_model(family: str, **params) -> ModelSpec:
    if family == "chy":
        return chy_model(int(params["m"]))
    if family == "cegm3":
        return cegm3_model(int(params["m"]))
    if family == "linear":
        return random_linear_model(int(params["n"]), int(params["d"]),
                                   int(params.get("seed", 0)))
    if family == "tensor":
        return tensor_model(int(params["m"]), int(params["k"]), int(params["l"]))
    if family == "simplex":
        return simplex_model(int(params["n"]))
    if family == "independence":
        return independence_model()
    raise ValueError(f"unknown model family {family!r}")
