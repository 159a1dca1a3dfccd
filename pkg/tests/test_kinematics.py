from fractions import Fraction

import pytest

from certcrit.kinematics import (KinematicsError, MandelstamK2, complete_k2,
                                 complete_k3)
from certcrit.models import cegm_states, chy_states, pair_label, triple_label

DATA62 = {"23": 25, "24": 23, "25": 16, "34": 12, "35": 22, "45": 16,
          "36": 14, "46": 15, "56": 27}

DATA37 = {"135": 45, "235": 597, "145": 473, "245": 745, "345": 29, "136": 296,
          "236": 503, "146": 725, "246": 402, "346": 132, "156": 557,
          "256": 649, "356": 461, "456": 246, "137": 636, "237": 662,
          "147": 37, "247": 945, "347": 87, "157": 613, "257": 819,
          "357": 889, "457": 473, "167": 665, "267": 57, "367": 340,
          "467": 621, "567": 562}


def test_m6_completion_published_first_row():
    K = complete_k2(DATA62, 6)
    assert K[1, 2] == 106
    # the listed closed forms for the remaining first-row invariants
    assert K[1, 3] == -(25 + 12 + 22 + 14)
    assert K[1, 6] == 25 + 12 + 22 + 23 + 16 + 16
    assert K[1, 4] == -(23 + 12 + 16 + 15)
    assert K[1, 5] == -(16 + 22 + 16 + 27)
    assert K[2, 6] == -(25 + 12 + 22 + 14 + 23 + 16 + 15 + 16 + 27)


def test_zero_counts_complete_to_zero():
    zeros = {pair_label(i, j, 6): 0 for i, j in chy_states(6)}
    K = complete_k2(zeros, 6)
    assert all(K[i, j] == 0 for i in range(1, 7) for j in range(1, 7))


def test_m4_closed_form():
    a, b = Fraction(5), Fraction(9)
    K = complete_k2({"23": a, "34": b}, 4)
    assert K[1, 2] == b
    assert K[1, 4] == a
    assert K[1, 3] == -a - b
    assert K[2, 4] == -a - b


def test_row_sums_exactly_zero_rational_data():
    data = {pair_label(i, j, 7): Fraction(i * 7 + j, 3) for i, j in chy_states(7)}
    K = complete_k2(data, 7)
    for i in range(1, 8):
        assert K.row_sum(i) == 0


def test_restrict_completion_roundtrip():
    K = complete_k2(DATA62, 6)
    again = complete_k2(K.restrict(), 6)
    assert K.as_dict() == again.as_dict()


def test_label_mismatch_reported_exhaustively():
    bad = dict(DATA62)
    bad.pop("23")
    bad["99"] = 1
    with pytest.raises(KinematicsError) as err:
        complete_k2(bad, 6)
    assert "23" in str(err.value)
    assert "99" in str(err.value)


def test_k3_all_ones_slices_vanish():
    ones = {triple_label(*t, 6): 1 for t in cegm_states(6)}
    K = complete_k3(ones, 6)
    for i in range(1, 7):
        assert K.slice_sum(i) == 0


def test_k3_published_m7_data():
    K = complete_k3(DATA37, 7)
    for i in range(1, 8):
        assert K.slice_sum(i) == 0
    # restriction returns the inputs unchanged
    r = K.restrict()
    assert all(r[k] == v for k, v in DATA37.items())
    # excluded entries are reproducible rationals
    assert K[1, 2, 3] == -K.slice_sum(1) + K[1, 2, 3]  # trivially consistent


def test_k3_symmetry_and_zero_repeats():
    K = complete_k3(DATA37, 7)
    assert K[3, 1, 7] == K[1, 3, 7]
    assert K[2, 2, 5] == 0


def test_exactness_fractional_counts():
    data = {pair_label(i, j, 5): Fraction(1, (i + j)) for i, j in chy_states(5)}
    K = complete_k2(data, 5)
    for i in range(1, 6):
        assert K.row_sum(i) == 0
