import math

import numpy as np
import pytest
from fractions import Fraction

from certcrit import expr as ex
from certcrit.models import (cegm3_model, cegm_excluded_triples, chy_model,
                             chy_ordering_signature, independence_model,
                             make_model, positive_chart, random_linear_model,
                             simplex_model, tensor_model)
from certcrit.program import compiled, evaluate


def probs_at(model, x):
    return compiled(model.potential()).probabilities(np.asarray(x, dtype=float))[0]


def test_chy6_matches_published_linear_forms():
    model = chy_model(6)
    x1, x2, x3 = 0.21, 0.47, 0.83
    P = probs_at(model, [x1, x2, x3])
    expect = {
        "23": 5 * x1 / 9, "24": x2 / 3, "25": x3 / 9,
        "34": (x2 - x1) / 9, "35": (x3 - x1) / 9, "45": (x3 - x2) / 9,
        "36": (1 - x1) / 3, "46": (1 - x2) / 3, "56": (1 - x3) / 3,
    }
    for lbl, val in expect.items():
        assert P[model.states.index(lbl)] == pytest.approx(val, abs=1e-15)


def test_chy4_reduces_to_segment():
    model = chy_model(4)
    assert model.states == ("23", "34")
    P = probs_at(model, [0.3])
    assert P[0] == pytest.approx(0.3)
    assert P[1] == pytest.approx(0.7)


def test_chy10_state_count_and_sum():
    model = chy_model(10)
    assert model.n_states == 35
    rng = np.random.default_rng(1)
    for _ in range(5):
        x = np.sort(rng.uniform(0.01, 0.99, 7))
        assert abs(probs_at(model, x).sum() - 1) < 1e-12


@pytest.mark.parametrize("family,kwargs", [
    ("chy", {"m": 7}),
    ("linear", {"n": 6, "d": 3, "seed": 2}),
    ("tensor", {"m": 2, "k": 2, "l": 5}),
    ("tensor", {"m": 3, "k": 2, "l": 3}),
    ("simplex", {"n": 4}),
    ("independence", {}),
])
def test_sum_to_one_at_random_points(family, kwargs):
    model = make_model(family, **kwargs)
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = model.interior_point() * (1 + rng.uniform(-0.05, 0.05, model.n_vars))
        assert abs(probs_at(model, x).sum() - 1) < 1e-12


def test_state_count_formulas():
    for m in (4, 5, 6, 8, 10):
        assert chy_model(m).n_states == m * (m - 3) // 2
        assert chy_model(m).n_vars == m - 3
    for m in (5, 6, 7, 8):
        c = cegm3_model(m)
        assert c.n_states == math.comb(m, 3) - m
        assert c.n_vars == 2 * m - 8
    for (m, k, l) in [(2, 2, 4), (3, 2, 3), (3, 3, 4)]:
        t = tensor_model(m, k, l)
        assert t.n_states == math.comb(m + l - 1, l)
        assert t.n_vars == k * m - 1


def test_cegm6_minor_values():
    model = cegm3_model(6)
    assert model.n_states == 14
    # column layout: minor 135 is the unknown x1
    x = np.array([0.3, 0.8, 0.6, 0.9])  # x1 x2 y1 y2
    P = probs_at(model, x)
    assert P[model.states.index("135")] == pytest.approx(0.3)
    # excluded minors are identically one and never states
    for t in cegm_excluded_triples(6):
        lbl = "".join(str(i) for i in t)
        assert lbl not in model.states


def test_cegm_excluded_minors_identically_one():
    # rebuild the matrix and check det over random points
    model = cegm3_model(7)
    assert "125" not in model.states
    assert model.sum_to_one is False


def test_tensor_224_structure():
    model = tensor_model(2, 2, 4)
    assert model.states == ("(4,0)", "(3,1)", "(2,2)", "(1,3)", "(0,4)")
    assert model.n_vars == 3
    x11, x21, y1 = 0.3, 0.6, 0.4
    P = probs_at(model, [x11, x21, y1])
    mix22 = y1 * x11**2 * (1 - x11) ** 2 + (1 - y1) * x21**2 * (1 - x21) ** 2
    assert P[2] == pytest.approx(6 * mix22, rel=1e-13)


def test_tensor_rank_one_degeneration():
    model = tensor_model(2, 2, 4)
    # equal rows and y = (1, 0): plain binomial probabilities
    p = 0.35
    P = probs_at(model, [p, p, 1.0])
    for i, I in enumerate([(4, 0), (3, 1), (2, 2), (1, 3), (0, 4)]):
        coeff = math.comb(4, I[0])
        assert P[i] == pytest.approx(coeff * p ** I[0] * (1 - p) ** I[1], rel=1e-12)


def test_tensor_group_action_preserves_probabilities():
    model = tensor_model(3, 2, 3)
    cpv = compiled(model.potential())
    rng = np.random.default_rng(5)
    pts = model.interior_point() * (1 + rng.uniform(-0.1, 0.1, (4, model.n_vars)))
    orbit = model.group_action.orbit(pts)
    P0 = cpv.probabilities(pts)
    for img in orbit:
        Pi = cpv.probabilities(img)
        assert np.max(np.abs(Pi - P0)) < 1e-12


def test_linear_model_reproducible_and_interior():
    a = random_linear_model(12, 6, seed=9)
    b = random_linear_model(12, 6, seed=9)
    assert a.probabilities == b.probabilities  # interned DAGs coincide
    assert a.expected_count == math.comb(12, 6)
    P = probs_at(a, np.zeros(6))
    assert np.all(P > 0)
    assert abs(P.sum() - 1) < 1e-12
    c = random_linear_model(12, 6, seed=10)
    assert c.probabilities != a.probabilities


def test_chart_consistency_chy6():
    base = chy_model(6)
    chart = positive_chart(base)
    cpc = compiled(chart.potential())
    rng = np.random.default_rng(3)
    subs = chart.chart.substitutions
    for _ in range(20):
        y = rng.uniform(0.05, 3.0, 3)
        x = np.array([float(evaluate(s, y, [], kind="real")) for s in subs])
        direct = probs_at(base, x)
        via_chart = cpc.probabilities(y)[0]
        assert np.max(np.abs(direct - via_chart)) < 1e-12


def test_chart_inverse_roundtrip():
    base = chy_model(6)
    chart = positive_chart(base)
    rng = np.random.default_rng(8)
    y = rng.uniform(0.1, 2.0, (5, 3))
    x = np.empty_like(y)
    for i in range(len(y)):
        x[i] = [float(evaluate(s, y[i], [], kind="real")) for s in chart.chart.substitutions]
    back = chart.chart.from_base(x)
    assert np.max(np.abs(back - y)) < 1e-10


def test_cegm_chart_positive_and_invertible():
    base = cegm3_model(6)
    chart = positive_chart(base)
    rng = np.random.default_rng(2)
    zw = rng.uniform(0.1, 1.5, (4, 4))
    cpc = compiled(chart.potential())
    P = cpc.probabilities(zw)
    assert np.all(P.real > 0)
    # invert: substitute and map back
    xy = np.empty_like(zw)
    for i in range(len(zw)):
        xy[i] = [float(evaluate(s, zw[i], [], kind="real")) for s in chart.chart.substitutions]
    back = chart.chart.from_base(xy)
    assert np.max(np.abs(back - zw)) < 1e-10


def test_simplex_chart_form():
    model = simplex_model(2)
    P = probs_at(model, [2.0, 3.0])
    assert P == pytest.approx([1 / 6, 2 / 6, 3 / 6])
    assert model.chart is not None
    rep = model.chart.hypothesis_report([1, 1, 1])
    assert rep["all_v_positive"]


def test_independence_chart_umap():
    model = independence_model()
    rep = model.chart.hypothesis_report([1, 2, 3, 4])
    # u = (s10+s11, s01+s11)
    assert rep["u"] == [7.0, 6.0]


def test_ordering_signature():
    sig = chy_ordering_signature(np.array([[0.2, 0.5, 0.7], [0.5, 0.2, 0.7],
                                           [1.2, 0.5, 0.7]]))
    assert sig[0] == (0, 1, 2)
    assert sig[1] == (1, 0, 2)
    assert sig[2] is None


def test_invalid_sizes_rejected():
    with pytest.raises(ValueError):
        chy_model(3)
    with pytest.raises(ValueError):
        cegm3_model(4)
    with pytest.raises(ValueError):
        tensor_model(1, 2, 4)
    with pytest.raises(ValueError):
        random_linear_model(3, 5)
