import math
import random
from fractions import Fraction

import numpy as np
import pytest

from certcrit import expr as ex
from certcrit.expr import SingularEvaluationError
from certcrit.program import evaluate
from certcrit.scalars import ComplexInterval, Dual, Interval, interval_hull


def test_hull_of_nonrepresentable_rational():
    iv = interval_hull(Fraction(1, 3))
    assert iv.lo < 1 / 3 < iv.hi or iv.lo <= 1 / 3 <= iv.hi
    assert Fraction(1, 3) > Fraction(iv.lo)
    assert Fraction(1, 3) < Fraction(iv.hi)
    exact = interval_hull(Fraction(1, 4))
    assert exact.lo == exact.hi == 0.25


def test_interval_ops_contain_samples():
    rng = random.Random(7)
    for _ in range(300):
        a, b = sorted(rng.uniform(-3, 3) for _ in range(2))
        c, d = sorted(rng.uniform(-3, 3) for _ in range(2))
        A, B = Interval(a, b), Interval(c, d)
        for _ in range(5):
            x = rng.uniform(a, b)
            y = rng.uniform(c, d)
            assert x + y in A + B
            assert x - y in A - B
            assert x * y in A * B
            assert x * x in A.square()
            if not B.contains_zero():
                assert x / y in A / B


def test_interval_reciprocal_zero_raises():
    with pytest.raises(SingularEvaluationError):
        Interval(-1.0, 2.0).reciprocal()


def test_complex_interval_reciprocal_sound():
    rng = random.Random(3)
    for _ in range(200):
        re = sorted(rng.uniform(0.2, 2) for _ in range(2))
        im = sorted(rng.uniform(0.1, 1) for _ in range(2))
        Z = ComplexInterval(Interval(*re), Interval(*im))
        for _ in range(5):
            z = complex(rng.uniform(*re), rng.uniform(*im))
            assert 1 / z in Z.reciprocal()
            assert z * z in Z * Z


def test_inclusion_monotonicity_fuzz():
    """Random expression DAGs: point values lie inside interval enclosures."""
    rng = random.Random(11)

    def random_expr(depth):
        r = rng.random()
        if depth == 0 or r < 0.25:
            return ex.variable(rng.randrange(3)) if rng.random() < 0.7 \
                else ex.const(Fraction(rng.randrange(-4, 5), rng.randrange(1, 5)))
        if r < 0.5:
            return ex.add(random_expr(depth - 1), random_expr(depth - 1))
        if r < 0.75:
            return ex.mul(random_expr(depth - 1), random_expr(depth - 1))
        if r < 0.85:
            return ex.neg(random_expr(depth - 1))
        if r < 0.95:
            return ex.ipow(random_expr(depth - 1), rng.randrange(2, 4))
        return ex.recip(random_expr(depth - 1))

    checked = 0
    trials = 0
    while checked < 400 and trials < 4000:
        trials += 1
        try:
            e = random_expr(4)
        except ex.ExpressionError:  # reciprocal of a folded zero constant
            continue
        x = [rng.uniform(-2, 2) for _ in range(3)]
        w = [rng.uniform(0, 0.05) for _ in range(3)]
        boxes = [Interval(v - wi, v + wi) for v, wi in zip(x, w)]
        try:
            v = evaluate(e, x, [], kind="real")
            iv = evaluate(e, boxes, [], kind="real-interval")
        except SingularEvaluationError:
            continue
        assert v in iv, f"{v} not in {iv} for {e}"
        checked += 1
    assert checked >= 300


def test_dual_arithmetic():
    d = Dual(2.0, 1.0)
    out = (d * d + 3) / d
    # f(x) = (x^2+3)/x, f'(x) = 1 - 3/x^2 at x=2 -> 0.25; f(2) = 3.5
    assert out.val == pytest.approx(3.5)
    assert out.eps == pytest.approx(0.25)


def test_interval_pow_even_nonnegative():
    iv = Interval(-2.0, 1.0) ** 2
    assert iv.lo == 0.0
    assert iv.hi >= 4.0
    iv4 = Interval(-2.0, 1.0) ** 4
    assert iv4.lo >= 0.0
    assert 16.0 <= iv4.hi
