import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from elltrace.chains import (Chain, ChainError, CommutantError, SchemaError, check_commutant, d_ch,
                             d_tot, dbar_chain, insertion_chain, make_chain, make_term,
                             qme_residual, residual_norms, trace, trace_bv, trace_coset,
                             trace_poly, unit_chain, witness_chain, witness_expected)
from elltrace.elliptic import EllipticContext
from elltrace.fock import FockElement, bc, betagamma, direct_sum, parse_fock
from elltrace.suites import WITNESS_SPACES, coset_setup, qme_space, random_chain
from elltrace.superpoly import SPoly, dz, dzbar
from oracles import e2hat_qseries

TAU = 0.3 + 1.7j
CTX = EllipticContext(TAU)
BG = betagamma(1)


def gen(sp, name, k=0, dag=0):
    return FockElement.gen(sp, name, k, dag)


def pair_chain(bar1=False, bar2=False, props=()):
    return Chain(BG, make_term(BG, [(1, gen(BG, "b1"), True, bar1), (2, gen(BG, "g1"), True, bar2)],
                               1, props))


def scalar_part(poly):
    return {h: c for (w, h, p), c in poly.terms.items() if not w}


# ---------------------------------------------------------------- construction

def test_unit_chain():
    u = unit_chain(BG, CTX)
    assert u.poly == SPoly.monomial((dz(1), dzbar(1)), c=-math.pi / CTX.imtau)
    assert not dbar_chain(u, CTX)
    assert not d_tot(u, CTX)


def test_make_chain_json():
    desc = {"points": ["z", "w"], "terms": [{"insertions": [
        {"point": "z", "expr": "b1"}, {"point": "w", "expr": "g1"}]}]}
    assert make_chain(desc, BG).poly == pair_chain().poly
    assert not make_chain({"points": [], "terms": []}, BG)
    assert not d_tot(make_chain({"terms": []}, BG), CTX)


@pytest.mark.parametrize("desc,pointer", [
    ({"points": "z"}, "/points"),
    ({"points": ["z"], "terms": [{"insertions": [{"point": "w", "expr": "b1"}]}]},
     "/terms/0/insertions/0/point"),
    ({"points": ["z"], "terms": [{"insertions": [{"point": "z", "expr": "b1 +"}]}]},
     "/terms/0/insertions/0/expr"),
    ({"points": ["z", "w"], "terms": [{"coeff": {"props": [{"a": -1, "from": "z", "to": "w"}]}}]},
     "/terms/0/coeff/props/0"),
    ({"points": ["z"], "terms": [{"coeff": {"props": [{"a": 0, "from": "z", "to": "z"}]}}]},
     "/terms/0/coeff/props/0"),
    ({"points": ["z"], "terms": [{"colour": 1}]}, "/terms/0"),
    ({"points": ["z"], "terms": [{"insertions": [{"point": "z", "expr": "b1", "shift": "yes"}]}]},
     "/terms/0/insertions/0/shift"),
])
def test_make_chain_schema_errors(desc, pointer):
    with pytest.raises(SchemaError) as e:
        make_chain(desc, BG)
    assert e.value.pointer == pointer


# ---------------------------------------------------------------- differentials

def test_d_ch_pair():
    want = SPoly.monomial((dz(2),), 1, c=1j / math.pi)
    assert d_ch(pair_chain(), CTX).poly.is_close(want, 1e-15)
    assert d_tot(pair_chain(), CTX).poly.is_close(want, 1e-15)
    assert d_tot(pair_chain(), CTX, "bd").poly.is_close(SPoly.monomial((dz(2),), 1, c=-2), 1e-14)
    assert not d_ch(pair_chain(True, True), CTX)


def test_d_ch_with_propagator_has_jet_term():
    got = d_ch(pair_chain(props=[(0, 1, 2)]), CTX)
    assert any(t.jets for t in got.terms())
    plain = got.jet_free().poly.filter(lambda k: k[1] == 0)
    want = SPoly.monomial((dz(2),)) * (gen(BG, "b1") * gen(BG, "g1")).poly.relabel(
        lambda s: (s[0], 2, *s[2:])).scale(1j / math.pi)
    assert plain.is_close(want, 1e-15)


def test_dbar_chain_propagator():
    c = Chain(BG, SPoly.monomial((dz(1),)) * SPoly.monomial((), 0, ((0, 1, 2),)))
    got = dbar_chain(c, CTX).poly
    assert got.is_close(SPoly.monomial((dzbar(1), dz(1)), c=-1j / CTX.imtau) +
                        SPoly.monomial((dzbar(2), dz(1)), c=1j / CTX.imtau), 1e-15)


@pytest.mark.parametrize("conv", ["rescaled", "bd"])
def test_differentials_square_to_zero(conv):
    # d_ch^2 leaves only transverse jet tails of order >= 1, which the constant
    # test form (and hence every trace) kills
    ctx = EllipticContext(TAU, K=16)
    rng = random.Random(1)
    sp = qme_space()
    for _ in range(12):
        c = random_chain(sp, rng)
        assert not dbar_chain(dbar_chain(c, ctx), ctx)
        dd = d_tot(d_tot(c, ctx, conv), ctx, conv)
        assert dd.jet_free().max_abs() < 1e-10
        assert trace_poly(dd.poly, sp, ctx, conv).max_abs() < 1e-10


# ---------------------------------------------------------------- traces

def test_trace_unit():
    got = trace(unit_chain(BG, CTX), CTX)
    assert abs(got.poly.terms[((), 0, ())] - 1) < 1e-12 and len(got.poly) == 1
    assert not trace_bv(unit_chain(BG, CTX), CTX).coeffs


@pytest.mark.parametrize("tau", [1j, TAU, -0.4 + 0.8j])
def test_trace_d_beta_gamma(tau):
    ctx = EllipticContext(tau)
    got = trace_poly(insertion_chain(parse_fock("D b1*g1", BG), ctx).poly, BG, ctx)
    val = scalar_part(got)
    assert set(val) == {1}
    assert abs(val[1] + 1j * math.pi / 3 * e2hat_qseries(tau)) < 1e-10


def test_trace_bidegree_deficient():
    # no dz anywhere: the holomorphic degree can never reach the top
    c = Chain(BG, make_term(BG, [(1, gen(BG, "b1"), False, True)]))
    assert not trace_poly(c.poly, BG, CTX)
    c = Chain(BG, make_term(BG, [(1, gen(BG, "b1"), False, False), (2, gen(BG, "g1"), True, True)]))
    assert not trace_poly(c.poly, BG, CTX)


def test_trace_preserves_hodeg():
    rng = random.Random(11)
    sp = qme_space()
    ctx = EllipticContext(TAU, K=16)
    from elltrace.bv import hodeg
    for _ in range(20):
        c = random_chain(sp, rng)
        t = trace_poly(c.poly, sp, ctx)
        if t.max_abs() < 1e-12:
            continue
        hs = c.hodegs()
        assert {hodeg(sp, w) for (w, _, _), v in t.terms.items() if abs(v) > 1e-12} <= hs


@pytest.mark.parametrize("name,mk", WITNESS_SPACES)
def test_witness(name, mk):
    sp = mk()
    got = trace_poly(witness_chain(sp).poly, sp, CTX).filter(lambda k: k[1] == 0)
    want = witness_expected(sp, CTX)
    assert (got - want).max_abs() < 1e-10
    scal = next(iter(want.terms.values()))
    assert abs(abs(scal) - (CTX.imtau / math.pi) ** sp.dim) < 1e-14


def test_qme_examples():
    assert not residual_norms(qme_residual(unit_chain(BG, CTX), CTX))
    r = residual_norms(qme_residual(pair_chain(bar1=True), CTX))
    assert all(v < 1e-8 for v in r.values())


@pytest.mark.parametrize("conv", ["rescaled", "bd"])
def test_qme_seeded(conv):
    ctx = EllipticContext(TAU, K=16, convention=conv)
    rng = random.Random(21)
    sp = qme_space()
    for _ in range(25):
        c = random_chain(sp, rng)
        r = residual_norms(qme_residual(c, ctx, conv))
        assert all(v < 1e-8 for v in r.values())


# ---------------------------------------------------------------- coset

def test_commutant_rejection():
    with pytest.raises(CommutantError) as e:
        check_commutant([parse_fock("b1*g1", BG)], [gen(BG, "g1")])
    assert e.value.violations[0][1] == 0


def test_coset_unit_case():
    sp = direct_sum(betagamma(1), bc(1))
    alpha = unit_chain(sp, CTX)
    eta = witness_chain(sp)
    full = [gen(sp, n) for n in ("b1", "g1", "fb1", "fc1")]
    got = trace_coset(alpha, eta, CTX, alg=[], com=full)
    # the unit chain traces to 1, so the coset trace is Tr^BV(eta)
    assert got.is_close(trace_bv(eta, CTX), 1e-12)


def test_coset_chain_map():
    ctx, sp, A, C, alpha = coset_setup(TAU)
    ctx16 = ctx
    eta = Chain(sp, make_term(sp, [(1, gen(sp, "fb1"), True, True), (2, gen(sp, "fc1", 1), True, False)],
                              1, [(0, 1, 2)]))
    got = trace_coset(alpha, d_tot(eta, ctx16), ctx16, A, C)
    assert max([abs(v) for v in got.coeffs.values()] + [0.0]) < 1e-8
    with pytest.raises(CommutantError):
        trace_coset(alpha, eta, ctx, A, A)
