import numpy as np
import pytest

from certcrit.models import cegm3_model, chy_model, tensor_model
from certcrit.monodromy import (MonodromyError, MonodromyOptions, _kernel_pair,
                                monodromy_solve)
from certcrit.program import compiled
from certcrit.solutions import SolutionRegistry


def test_chy5_two_solutions():
    system = chy_model(5).potential().gradient()
    s_star, sols = monodromy_solve(system, options=MonodromyOptions(seed=1, target_count=2))
    assert len(sols) == 2
    assert np.max(sols.residuals) <= 1e-11


def test_reproducible_with_fixed_seed():
    system = chy_model(5).potential().gradient()
    a_star, a = monodromy_solve(system, options=MonodromyOptions(seed=6, target_count=2))
    b_star, b = monodromy_solve(system, options=MonodromyOptions(seed=6, target_count=2))
    assert np.array_equal(a_star, b_star)
    assert np.array_equal(a.points, b.points)


def test_cegm6_lower_bound():
    system = cegm3_model(6).potential().gradient()
    s_star, sols = monodromy_solve(system, options=MonodromyOptions(seed=1, target_count=26))
    assert len(sols) == 26


def test_tensor_224_count_and_orbits():
    model = tensor_model(2, 2, 4)
    system = model.potential().gradient()
    s_star, sols = monodromy_solve(
        system, options=MonodromyOptions(seed=2, target_count=24,
                                         group_action=model.group_action))
    assert len(sols) == 24
    # orbit closure: swapping components maps solutions to solutions
    orbit = model.group_action.orbit(sols.points)
    reg = SolutionRegistry(model.n_vars)
    reg.add_batch(sols.points)
    for img_set in orbit:
        for p in img_set:
            assert reg.find(p) is not None
    cp = compiled(model.potential())
    res = cp.residuals(orbit.reshape(-1, model.n_vars), s_star)
    assert np.max(res) <= 1e-10


def test_seeded_monodromy_accepts_partial_set():
    model = chy_model(6)
    system = model.potential().gradient()
    s_star, sols = monodromy_solve(system, options=MonodromyOptions(seed=4, target_count=6))
    partial = sols.points[:3]
    s2, full = monodromy_solve(system, seeds=partial, s_star=s_star,
                               options=MonodromyOptions(seed=5, target_count=6))
    assert np.array_equal(s2, s_star)
    assert len(full) == 6


def test_bad_seed_rejected():
    system = chy_model(5).potential().gradient()
    s_star = np.full(5, 0.5 + 0.5j)
    with pytest.raises(MonodromyError, match="seed"):
        monodromy_solve(system, seeds=np.array([[5.0, 5.0]]), s_star=s_star,
                        options=MonodromyOptions(seed=0))


def test_kernel_pair_is_exact_solution():
    model = chy_model(6)
    cp = compiled(model.potential())
    rng = np.random.default_rng(12)
    x0 = rng.uniform(-1, 1, 3) + 1j * rng.uniform(-1, 1, 3)
    s0 = _kernel_pair(cp, x0, rng)
    assert s0 is not None
    assert cp.residuals(x0.reshape(1, -1), s0)[0] < 1e-12


def test_kernel_pair_rejects_rank_deficient_locus():
    model = tensor_model(2, 2, 4)
    cp = compiled(model.potential())
    rng = np.random.default_rng(1)
    # equal rows: rank-one tensor, off the dominant component
    x0 = np.array([0.4, 0.4, 0.7], dtype=np.complex128)
    assert _kernel_pair(cp, x0, rng) is None


def test_monotone_counts_and_meta():
    system = chy_model(6).potential().gradient()
    s_star, sols = monodromy_solve(system, options=MonodromyOptions(seed=9, target_count=6))
    assert sols.meta["target_count"] == 6
    assert sols.meta["warning"] is None
    assert len(sols) == 6
