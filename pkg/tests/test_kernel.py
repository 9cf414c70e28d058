from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from pmps.kernel import (ProbInterval, feasible_sum, format_rational, interval_add, interval_contains,
                         interval_hull, interval_subset, parse_rational, point)

probs = st.fractions(min_value=0, max_value=1, max_denominator=60)


@st.composite
def intervals(draw):
    a, b = sorted([draw(probs), draw(probs)])
    if a == b:
        return ProbInterval(a, b)
    return ProbInterval(a, b, draw(st.booleans()), draw(st.booleans()))


def test_point_intervals_add():
    assert interval_add(point(F(3, 10)), point(F(1, 2))) == point(F(4, 5))


def test_add_clamps_at_one():
    s = interval_add(ProbInterval(F(7, 10), F(9, 10)), ProbInterval(F(3, 20), F(1, 4)))
    assert (s.lo, s.hi) == (F(17, 20), F(1))


def test_zero_is_identity():
    d = ProbInterval(F(1, 5), F(2, 5), False, False)
    assert interval_add(point(0), d) == d


@pytest.mark.parametrize("p, d, expected", [
    (F(3, 10), ProbInterval(F(7, 10), F(9, 10)), False),
    (F(4, 5), ProbInterval(F(7, 10), F(9, 10)), True),
    (F(7, 10), ProbInterval(F(7, 10), F(9, 10), lo_closed=False), False),
])
def test_contains(p, d, expected):
    assert interval_contains(p, d) is expected


@pytest.mark.parametrize("p, expected", [(1, point(1)), (F(1, 5), ProbInterval(F(1, 5), F(1, 5)))])
def test_point(p, expected):
    assert point(p) == expected


def test_point_out_of_range():
    with pytest.raises(ValueError):
        point(F(3, 2))


def test_degenerate_open_interval_rejected():
    with pytest.raises(ValueError):
        ProbInterval(F(1, 2), F(1, 2), lo_closed=False)


@given(intervals(), intervals())
def test_add_commutes(a, b):
    assert interval_add(a, b) == interval_add(b, a)


@given(intervals(), intervals(), intervals())
def test_add_associates_on_bounds(a, b, c):
    x = interval_add(interval_add(a, b), c)
    y = interval_add(a, interval_add(b, c))
    assert (x.lo, x.hi) == (y.lo, y.hi)


@given(intervals(), intervals())
def test_add_stays_ordered_and_bounded(a, b):
    s = interval_add(a, b)
    assert s.lo <= s.hi <= 1


@given(probs)
def test_point_contains_itself(p):
    assert interval_contains(p, point(p))


@given(probs)
def test_rational_round_trip(r):
    assert parse_rational(format_rational(r)) == r


@given(intervals(), intervals())
def test_hull_contains_both(a, b):
    h = interval_hull(a, b)
    assert interval_subset(a, h) and interval_subset(b, h)


@given(intervals(), probs)
def test_subset_respects_membership(d, p):
    if interval_contains(p, d):
        assert interval_subset(point(p), d)


@given(st.lists(probs, min_size=1, max_size=4))
def test_points_summing_to_one_are_feasible(ps):
    total = sum(ps)
    if total == 0:
        return
    scaled = [p / total for p in ps]
    assert feasible_sum([point(p) for p in scaled])


def test_feasible_respects_open_ends():
    assert not feasible_sum([ProbInterval(F(1, 2), F(1, 2)), ProbInterval(0, F(1, 2), True, False)])
    assert feasible_sum([ProbInterval(F(1, 2), F(1, 2)), ProbInterval(0, F(1, 2))])


def test_parse_rational_forms():
    assert parse_rational("0.14") == F(7, 50)
    assert parse_rational("7/50") == F(7, 50)
    with pytest.raises(ValueError):
        parse_rational("1/0")
