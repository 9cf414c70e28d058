"""Hypothesis strategies for small process terms."""

from fractions import Fraction

from hypothesis import strategies as st

from pmps import ast as A

CHANS = ["k", "m", "r"]
VARS = ["x", "y"]


def values():
    return st.one_of(st.booleans(), st.integers(-20, 200), st.sampled_from(["", "a b", "War and Peace"]))


def exprs():
    leaf = st.one_of(values().map(A.Lit), st.sampled_from(VARS).map(A.Ref))
    return st.recursive(leaf, lambda e: st.one_of(
        st.builds(A.BinOp, st.sampled_from(["+", "-", "*", "/", "==", "<", "and", "or"]), e, e),
        st.builds(A.Not, e),
    ), max_leaves=4)


def _probs(n):
    return st.lists(st.integers(1, 9), min_size=n, max_size=n).map(
        lambda ws: [Fraction(w, sum(ws)) for w in ws])


@st.composite
def sends(draw, conts):
    n = draw(st.integers(1, 3))
    ps = draw(_probs(n))
    bs = tuple(A.SendBranch(p, (draw(exprs()),), draw(conts)) for p in ps)
    return A.Send(draw(st.sampled_from(CHANS)), bs)


@st.composite
def recvs(draw, conts):
    sorts = draw(st.lists(st.sampled_from(["nat", "bool", "string"]), min_size=1, max_size=3, unique=True))
    bs = tuple(A.RecvBranch(((draw(st.sampled_from(VARS)), s),), draw(conts)) for s in sorts)
    return A.Recv(draw(st.sampled_from(CHANS)), bs)


@st.composite
def selects(draw, conts):
    labels = draw(st.lists(st.sampled_from(["ok", "quit", "l1", "l2"]), min_size=1, max_size=3, unique=True))
    ps = draw(_probs(len(labels)))
    return A.Select(draw(st.sampled_from(CHANS)),
                    tuple(A.SelectBranch(p, l, draw(conts)) for p, l in zip(ps, labels)))


@st.composite
def branchings(draw, conts):
    labels = draw(st.lists(st.sampled_from(["ok", "quit", "l1", "l2"]), min_size=1, max_size=3, unique=True))
    return A.Branching(draw(st.sampled_from(CHANS)), tuple(A.OfferBranch(l, draw(conts)) for l in labels))


def processes(max_leaves=6):
    """Closed-under-recursion-variables process terms with free channels."""
    leaf = st.just(A.INACT)

    def extend(sub):
        return st.one_of(
            sends(sub), recvs(sub), selects(sub), branchings(sub),
            st.builds(A.Par, sub, sub),
            st.builds(A.If, exprs(), sub, sub),
            st.builds(lambda n, p: A.Hide((n,), p), st.sampled_from(CHANS + ["n"]), sub),
        )

    return st.recursive(leaf, extend, max_leaves=max_leaves)
