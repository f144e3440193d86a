from fractions import Fraction

from hypothesis import given, strategies as st

from elltrace.superpoly import SPoly, dz, dzbar, field, sort_word

# a few even and odd symbols at two points
SYMS = [field(1, 0, 0, 0, 0), field(1, 1, 0, 0, 1), field(2, 0, 1, 0, 0), field(2, 1, 0, 0, 1),
        dz(1), dzbar(2)]

monos = st.lists(st.sampled_from(SYMS), min_size=0, max_size=3)
polys = st.lists(st.tuples(monos, st.integers(-3, 3)), min_size=0, max_size=3).map(
    lambda ts: sum((SPoly.monomial(tuple(w), c=Fraction(c)) if sort_word(w)[0] else SPoly()
                    for w, c in ts), SPoly()))


def test_odd_square_vanishes():
    b = SPoly.monomial((field(1, 1, 0, 0, 1),))
    assert not (b * b)


def test_odd_swap_sign():
    x, y = SPoly.monomial((dz(1),)), SPoly.monomial((dzbar(1),))
    assert x * y == (y * x).scale(-1)


@given(polys, polys, polys)
def test_associative(a, b, c):
    assert (a * b) * c == a * (b * c)


@given(polys, polys, polys)
def test_distributive(a, b, c):
    assert a * (b + c) == a * b + a * c


def _parity(p):
    ps = {sum(s[5] for s in w) % 2 for (w, _, _) in p.terms}
    return ps.pop() if len(ps) == 1 else None


@given(polys, polys)
def test_graded_commutative(a, b):
    pa, pb = _parity(a), _parity(b)
    if pa is None or pb is None:
        return
    assert a * b == (b * a).scale((-1) ** (pa * pb))


@given(polys, polys)
def test_leibniz(a, b):
    x = SYMS[0]  # even symbol, so no sign
    assert (a * b).deriv(x) == a.deriv(x) * b + a * b.deriv(x)
