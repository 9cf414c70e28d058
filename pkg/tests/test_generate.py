from fractions import Fraction as F

from hypothesis import given, strategies as st

from pmps import ast as A
from pmps import semantics as M
from pmps import types as T
from pmps.generate import choose_probabilities, generate_system, generate_systems, perturb
from pmps.kernel import ProbInterval, interval_contains, point
from pmps.typing import is_typable

seeds = st.integers(0, 10 ** 6)


def test_generation_is_reproducible():
    assert generate_system(42) == generate_system(42)


def test_batch_uses_distinct_seeds():
    batch = generate_systems(5, seed=1)
    assert len({s.seed for s in batch}) == 5


@given(seeds)
def test_generated_systems_are_typable(seed):
    s = generate_system(seed)
    assert is_typable(s.gamma, s.process)
    assert 2 <= len(s.bodies) <= 4
    assert len(T.pid(s.protocol.gtype)) == len(s.bodies)


@given(seeds)
def test_no_delegation(seed):
    s = generate_system(seed)
    assert not any(isinstance(q, (A.Deleg, A.SessRecv)) for q in A.subterms(s.process))


@given(seeds)
def test_perturbation_breaks_the_sum(seed):
    s = perturb(generate_system(seed))
    assert not is_typable(s.gamma, s.process)
    assert M.build_graph(s.process, 12).error_edges()


def test_choose_probabilities_hits_intervals():
    import random
    ds = [ProbInterval(F(7, 10), F(9, 10)), ProbInterval(F(3, 20), F(1, 4), False, True)]
    ps = choose_probabilities(random.Random(0), ds)
    assert sum(ps) == 1
    assert all(interval_contains(p, d) for p, d in zip(ps, ds))


def test_choose_probabilities_infeasible():
    import random
    assert choose_probabilities(random.Random(0), [point(F(1, 2)), point(F(1, 4))]) is None
