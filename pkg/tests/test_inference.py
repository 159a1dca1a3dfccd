import numpy as np
import pytest
from fractions import Fraction

from certcrit.inference import (InferenceError, SolveOptions, data_vector,
                                load_cache, ml_degree, mle, model_digest,
                                prepare_start_system, solve_model)
from certcrit.models import (chy_model, chy_ordering_signature, random_linear_model,
                             simplex_model, tensor_model)

DATA62 = {"23": 25, "24": 23, "25": 16, "34": 12, "35": 22, "45": 16,
          "36": 14, "46": 15, "56": 27}
MLE_62 = (0.240043275929170, 0.508172206739870, 0.777005866817260)
LEARNED_62 = {"23": 0.13336, "24": 0.16939, "25": 0.08633, "34": 0.02979,
              "35": 0.05966, "36": 0.25332, "45": 0.02987, "46": 0.16394,
              "56": 0.07433}


@pytest.fixture()
def opts(tmp_path):
    return SolveOptions(cache_dir=tmp_path, seed=11)


def test_data_vector_validation():
    model = chy_model(6)
    with pytest.raises(InferenceError, match="missing"):
        data_vector(model, {"23": 1})
    bad = dict(DATA62)
    bad["zz"] = 3
    with pytest.raises(InferenceError, match="unexpected"):
        data_vector(model, bad)
    vec, exact = data_vector(model, DATA62)
    assert vec[0] == 25.0
    assert exact[0] == Fraction(25)


def test_solve_chy6_certified_real(opts):
    sols = solve_model(chy_model(6), DATA62, opts)
    assert len(sols) == 6
    assert sols.meta["complete"]
    assert sols.certification.certified == 6
    assert sols.certification.real_certified == 6
    assert sols.certification.distinct == 6


def test_mle_example_regression(opts):
    result = mle(chy_model(6), DATA62, opts)
    assert np.max(np.abs(result.point - np.array(MLE_62))) < 1e-8
    for lbl, val in LEARNED_62.items():
        assert round(result.probabilities[lbl], 5) == pytest.approx(val, abs=1e-12)
    assert result.domain_critical_points == 1
    assert result.mode == "full"


def test_mle_fast_matches_full(opts):
    full = mle(chy_model(6), DATA62, opts)
    fast = mle(chy_model(6), DATA62,
               SolveOptions(cache_dir=opts.cache_dir, real_fast=True))
    assert np.max(np.abs(full.point - fast.point)) < 1e-10
    assert fast.mode == "real-fast"
    assert abs(full.log_likelihood - fast.log_likelihood) < 1e-8


def test_mle_fast_requires_linear(opts):
    model = tensor_model(2, 2, 4)
    data = {lbl: i + 1 for i, lbl in enumerate(model.states)}
    with pytest.raises(InferenceError, match="linear"):
        mle(model, data, SolveOptions(cache_dir=opts.cache_dir, real_fast=True))


def test_mle_simplex_closed_form(opts):
    result = mle(simplex_model(2), {"0": 2, "1": 3, "2": 5}, opts)
    assert result.point == pytest.approx([1.5, 2.5], abs=1e-10)
    assert result.probabilities["0"] == pytest.approx(0.2, abs=1e-12)


def test_mle_one_dimensional_closed_form(opts):
    result = mle(chy_model(4), {"23": 3, "34": 1}, opts)
    assert result.point[0] == pytest.approx(0.75, abs=1e-11)


def test_cache_roundtrip_identity(opts):
    model = chy_model(6)
    first = solve_model(model, DATA62, opts)
    cache = load_cache(model, "complex", opts.resolved_cache_dir())
    assert cache is not None
    assert len(cache.solutions) == 6
    again = solve_model(model, DATA62, opts)
    for p in first.points:
        assert min(np.max(np.abs(p - q)) for q in again.points) < 1e-10


def test_cache_rejects_other_model(opts, tmp_path):
    model = chy_model(6)
    prepare_start_system(model, opts)
    path = opts.resolved_cache_dir() / f"{model_digest(model)}.complex.json"
    other = chy_model(5)
    target = opts.resolved_cache_dir() / f"{model_digest(other)}.complex.json"
    target.write_text(path.read_text())
    with pytest.raises(InferenceError, match="different model"):
        load_cache(other, "complex", opts.resolved_cache_dir())


def test_varchenko_region_bijection(opts):
    model = chy_model(5)
    rng = np.random.default_rng(3)
    data = {lbl: int(v) for lbl, v in
            zip(model.states, rng.integers(1, 100, model.n_states))}
    sols = solve_model(model, data, opts)
    assert len(sols) == 2
    sigs = chy_ordering_signature(sols.points.real)
    assert set(sigs) == {(0, 1), (1, 0)}


def test_ml_degree_chy(opts):
    res = ml_degree(chy_model(4), opts)
    assert res.certified_lower_bound == 1
    assert res.stabilized_estimate == 1
    assert res.stabilized
    res5 = ml_degree(chy_model(5), opts)
    assert res5.certified_lower_bound == 2
    assert res5.raw_counts[-1] == 2


def test_ml_degree_group_divisor(opts):
    model = tensor_model(2, 2, 4)
    res = ml_degree(model, SolveOptions(cache_dir=opts.cache_dir, seed=3))
    assert res.orbit_divisor == 2
    assert res.solution_count == 24
    assert res.certified_lower_bound == 12
    assert res.stabilized_estimate == 12


def test_warn_on_nonpositive_data(opts):
    model = chy_model(4)
    with pytest.warns(UserWarning, match="nonpositive"):
        solve_model(model, {"23": 3, "34": -1}, opts)


def test_linear_model_real_count(opts):
    model = random_linear_model(6, 3, seed=1)
    rng = np.random.default_rng(5)
    data = {lbl: int(v) for lbl, v in
            zip(model.states, rng.integers(1, 50, model.n_states))}
    sols = solve_model(model, data, opts)
    assert len(sols) == 20  # C(6,3)
    assert sols.certification.real_certified == 20  # Varchenko: all real
