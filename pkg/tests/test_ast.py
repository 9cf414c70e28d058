import pytest
from hypothesis import given, strategies as st

from pmps import ast as A
from pmps.syntax import parse_process, print_process
from tests.strategies import processes, values


def P(text):
    return parse_process(text)


def test_free_names_of_inaction():
    assert A.free_names(A.INACT) == frozenset()


def test_hiding_binds():
    assert A.free_names(P("new n in n!<1>; m!<2>")) == {"m"}


def test_recursion_binds_process_variable():
    assert A.free_vars(P("mu X. k!<1>; X")) == frozenset()


def test_subst_without_occurrence_is_identity():
    p = P("k!<1>; 0")
    assert A.subst_values(p, {"x": 3}) == p


def test_seller_receives_isbn(twobuyers):
    seller2 = twobuyers.procs["Seller2"]
    out = A.subst_values(seller2, {"ISBN": 195014766})
    assert "ISBN" not in A.free_names(out)
    assert isinstance(out, A.If)
    assert A.eval_expr(out.cond) is False


def test_subst_respects_shadowing():
    p = P("k?(x: nat); k!<x>")
    assert A.subst_values(p, {"x": 5}) == p


def test_unfold_mu_inaction():
    assert A.unfold(A.Rec("X", A.INACT)) == A.INACT


def test_unfold_once():
    p = P("mu X. k!<1>; X")
    out = A.unfold(p)
    assert isinstance(out, A.Send)
    assert out.branches[0].cont == p


def test_unfold_without_variable():
    body = P("k!<1>")
    assert A.unfold(A.Rec("X", body)) == body


@pytest.mark.parametrize("text, env, expected", [
    ("quote / 2", {"quote": 100}, 50),
    ("true and false", {}, False),
    ("7 / 2", {}, 3),
])
def test_eval(text, env, expected):
    from pmps.syntax import parse_expr
    assert A.eval_expr(parse_expr(text), env) == expected


def test_eval_sort_error():
    from pmps.syntax import parse_expr
    with pytest.raises(A.EvalError):
        A.eval_expr(parse_expr("not 3"))


def test_same_value_keeps_bool_apart_from_numbers():
    assert not A.same_value(True, 1)
    assert A.same_value(7, 7)


@given(processes())
def test_alpha_equivalent_terms_have_same_free_names(p):
    one = A.Hide(("k",), p)
    two = A.Hide(("z",), A.rename(p, {"k": "z"}))
    assert A.alpha_equal(one, two)
    assert A.free_names(one) == A.free_names(two)
    assert A.free_vars(one) == A.free_vars(two)


@given(processes())
def test_empty_substitution(p):
    assert A.subst_values(p, {}) == p


@given(processes(), values(), values())
def test_disjoint_substitutions_commute(p, v, w):
    one = A.subst_values(A.subst_values(p, {"x": v}), {"y": w})
    two = A.subst_values(A.subst_values(p, {"y": w}), {"x": v})
    assert A.alpha_equal(one, two)


@given(processes())
def test_bound_hide_names_are_not_free(p):
    q = A.Hide(("k",), p)
    assert "k" not in A.free_names(q)


def test_fresh_name_avoids():
    assert A.fresh_name("k", {"k", "k#1"}) not in {"k", "k#1"}


@given(processes())
def test_print_is_deterministic(p):
    assert print_process(p) == print_process(p)


@given(st.sampled_from(A.SORTS), values())
def test_value_fits_matches_class(sort, v):
    if A.value_fits(v, sort):
        assert A.value_kind(v) == A.sort_class(sort)
