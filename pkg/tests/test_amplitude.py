import numpy as np
import pytest
from fractions import Fraction

from certcrit.amplitude import AmplitudeError, amplitude, oracle_amplitude
from certcrit.inference import SolveOptions
from certcrit.kinematics import complete_k2
from certcrit.models import (chy_model, independence_model, positive_chart,
                             simplex_model)

DATA62 = {"23": 25, "24": 23, "25": 16, "34": 12, "35": 22, "45": 16,
          "36": 14, "46": 15, "56": 27}
EXACT_62 = Fraction(16074421, 56770632000)


@pytest.fixture()
def opts(tmp_path):
    return SolveOptions(cache_dir=tmp_path, seed=5)


def test_triangle_oracle_values():
    assert oracle_amplitude("triangle", (1, 1, 1)) == 3
    assert oracle_amplitude("triangle", (2, 3, 5)) == \
        Fraction(1, 6) + Fraction(1, 10) + Fraction(1, 15)


def test_square_oracle_values():
    assert oracle_amplitude("square", (1, 1, 1, 1)) == 1
    s = {"00": 2, "01": 3, "10": 5, "11": 7}
    total = 17
    assert oracle_amplitude("square", s) == \
        Fraction(total * total, (2 + 3) * (5 + 7) * (2 + 5) * (3 + 7))


def test_oracle_pole_error():
    with pytest.raises(AmplitudeError, match="pole"):
        oracle_amplitude("triangle", (0, 1, 1))


def test_associahedron_exact_published_value():
    K = complete_k2(DATA62, 6)
    assert oracle_amplitude("associahedron_m6", K) == EXACT_62


def test_amplitude_triangle_matches_oracle(opts):
    model = simplex_model(2)
    rng = np.random.default_rng(0)
    for _ in range(20):
        data = {lbl: int(v) for lbl, v in
                zip(model.states, rng.integers(1, 40, 3))}
        r = amplitude(model, data, options=opts)
        exact = float(oracle_amplitude("triangle", [data[s] for s in model.states]))
        assert abs(r.value - exact) / exact < 1e-9
        assert r.n_points == 1
        assert r.imag_residual < 1e-9


def test_amplitude_square_matches_oracle(opts):
    model = independence_model()
    rng = np.random.default_rng(1)
    for _ in range(20):
        data = {lbl: int(v) for lbl, v in
                zip(model.states, rng.integers(1, 40, 4))}
        r = amplitude(model, data, options=opts)
        exact = float(oracle_amplitude("square", data))
        assert abs(r.value - exact) / exact < 1e-9


def test_amplitude_chy6_exact_value(opts):
    chart = positive_chart(chy_model(6))
    r = amplitude(chart, DATA62, options=opts)
    assert r.n_points == 6
    assert abs(r.value - float(EXACT_62)) / float(EXACT_62) < 1e-9
    assert r.imag_residual < 1e-9
    assert not r.unreliable
    # the published data violate the volume-formula sign hypotheses
    assert not r.hypothesis["all_v_positive"]


def test_amplitude_chy6_random_data_oracle_agreement(opts):
    chart = positive_chart(chy_model(6))
    rng = np.random.default_rng(9)
    for _ in range(5):
        data = {lbl: int(v) for lbl, v in
                zip(chart.states, rng.integers(1, 60, 9))}
        r = amplitude(chart, data, options=opts)
        exact = float(oracle_amplitude("associahedron_m6", complete_k2(data, 6)))
        assert abs(r.value - exact) / abs(exact) < 1e-9


def test_scaling_covariance(opts):
    # s -> lambda s multiplies the amplitude by lambda^(-d)
    model = simplex_model(2)
    base = {"0": 3, "1": 4, "2": 5}
    lam = 7
    scaled = {k: lam * v for k, v in base.items()}
    r1 = amplitude(model, base, options=opts)
    r2 = amplitude(model, scaled, options=opts)
    assert r2.value == pytest.approx(r1.value / lam**2, rel=1e-9)


def test_critical_points_scale_invariant(opts):
    from certcrit.inference import solve_model
    model = chy_model(6)
    lam = 3
    scaled = {k: lam * v for k, v in DATA62.items()}
    a = solve_model(model, DATA62, opts)
    b = solve_model(model, scaled, opts)
    for p in a.points:
        assert min(np.max(np.abs(p - q)) for q in b.points) < 1e-10


def test_missing_chart_rejected(opts):
    model = chy_model(6)  # base model carries no chart
    with pytest.raises(AmplitudeError, match="chart"):
        amplitude(model, DATA62, options=opts)


def test_unknown_oracle():
    with pytest.raises(AmplitudeError, match="unknown"):
        oracle_amplitude("pentagon", (1, 2, 3))
