import pytest
from hypothesis import given, strategies as st

from pmps import ast as A
from pmps import types as T
from pmps.syntax import (ParseError, parse_file, parse_global, parse_local, parse_process, print_global,
                         print_local, print_process)
from tests.strategies import processes


def test_alice_send_has_three_branches():
    p = parse_process('0.3: as!<"War and Peace">; 0 + 0.5: as!<"The Art of War">; 0 + 0.2: as!<0195014766>; 0')
    assert isinstance(p, A.Send)
    assert [b.prob for b in p.branches] == [A.Fraction(3, 10), A.Fraction(1, 2), A.Fraction(1, 5)]
    assert p.branches[2].exprs == (A.Lit(195014766),)


def test_seller_receive_has_two_branches():
    p = parse_process("as?(title: string); 0 + as?(ISBN: nat); 0")
    assert isinstance(p, A.Recv)
    assert [b.sorts for b in p.branches] == [("string",), ("nat",)]


def test_duplicate_label_rejected():
    with pytest.raises(ParseError, match="selected twice"):
        parse_process("0.5: s <+ ok; 0 + 0.5: s <+ ok; 0")


def test_receive_sorts_must_differ():
    with pytest.raises(ParseError):
        parse_process("k?(x: nat); 0 + k?(y: int); 0")


def test_print_inaction():
    assert print_process(A.INACT) == "0"


def test_alice_round_trip(twobuyers):
    alice = twobuyers.procs["Alice"]
    assert A.alpha_equal(parse_process(print_process(alice)), alice)


def test_global_round_trip(twobuyers):
    g = twobuyers.globals["Purchase"].gtype
    assert parse_global(print_global(g)) == g


def test_local_round_trip():
    text = "[0.7,0.9]: as!<string>. as?(int). 1: ab!<int>. end + [0.15,0.25]: as!<nat>. as?(int). 1: ab!<int>. end"
    t = parse_local(text)
    assert parse_local(print_local(t)) == t


def test_roles_resolve_by_name(twobuyers):
    assert twobuyers.roles == {"Alice": 1, "Seller": 2, "Bob": 3}
    assert T.pid(twobuyers.globals["Purchase"].gtype) == {1, 2, 3}


def test_declarations(twobuyers):
    assert set(twobuyers.systems) == {"TwoBuyers", "TwoBuyersVariant", "Open"}
    assert twobuyers.shared == {"a": "Purchase"}


def test_duplicate_declaration():
    with pytest.raises(ParseError, match="declared twice"):
        parse_file("proc P = 0\nproc P = 0\n")


def test_undefined_process_name():
    with pytest.raises(ParseError):
        parse_file("system S = Missing\n")


@given(processes())
def test_round_trip(p):
    assert A.alpha_equal(parse_process(print_process(p)), p)


@given(st.text(alphabet="abk!?<>();:.+|0123456789 \"{}", max_size=30))
def test_parse_errors_carry_spans(text):
    try:
        parse_process(text)
    except ParseError as e:
        assert e.span is not None
        lines = text.split("\n")
        assert 1 <= e.span.line <= len(lines)
        assert 1 <= e.span.col <= len(lines[e.span.line - 1]) + 1
