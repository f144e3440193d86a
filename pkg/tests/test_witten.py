import math
import random

import pytest
from hypothesis import given, strategies as st

from elltrace.elliptic import EllipticContext
from elltrace.fock import FockElement, bc, betagamma, direct_sum, parse_fock
from elltrace.superpoly import SPoly
from elltrace.witten import (Diagram, DiagramError, FieldCapError, FormalVectorField, GrammarError,
                             NilpotenceError, WittenError, atiyah, bracket, chern_char,
                             classify_diagram, cocycle, cocycle_residual, cycle_integral,
                             diagram_weight, field_from_json, field_space, format_field,
                             hbar_part, is_exact_oneform, lie_qme_residual, lift_rho,
                             mc_qme_check, parse_field, rho_anomaly, rho_bracket_defect,
                             theta_cochain, tr_at_power, trace_cochain, trace_lie, wheel_coefficient,
                             wheel_weight, witten_log, witten_log_coeff)
from elltrace.fock import format_poly
from oracles import cycle_integral_fourier, eisenstein_qseries, lattice_sum

CTX = EllipticContext(2j)
SP = field_space(2)
Q1 = parse_field("y1^2 d/dy_2", 2)
Q2 = parse_field("y2^2 d/dy_1 - 0.5*y1 y2 d/dy_2", 2)


def fmt(x):
    return format_poly(SP, x)


def add_forms(a, b):
    out = {m: dict(p) for m, p in a.items()}
    for m, p in b.items():
        q = out.setdefault(m, {})
        for e, c in p.items():
            q[e] = q.get(e, 0) + c
    return out


# ---------------------------------------------------------------- grammar and bracket

@pytest.mark.parametrize("text", [
    "y1^2 d/dy_2", "-0.5 * y1 y2 d/dy_1 + 3 * y2^3 d/dy_2", "d/dy_1 + [y2 dy_1]", "[2 * y1^2 dy_2]",
])
def test_grammar_roundtrip(text):
    X = parse_field(text, 2)
    assert parse_field(format_field(X), 2) == X


def test_json_form_matches_grammar():
    items = [{"coeff": 1, "exps": [2, 0], "dir": 2}, {"coeff": [0, 1], "exps": [0, 1], "form": 1}]
    assert field_from_json(items, 2) == parse_field("y1^2 d/dy_2 + [1j * y2 dy_1]", 2)
    with pytest.raises(GrammarError):
        field_from_json([{"exps": [1], "dir": 1}], 2)


@pytest.mark.parametrize("bad", ["y1^2 d/dy_", "y1 ** d/dy_1", "* y1 d/dy_1", "[y1 dy_1", "y1^2 d/dy_2 +"])
def test_grammar_errors(bad):
    with pytest.raises(WittenError):
        parse_field(bad, 2)


def test_caps_and_indices():
    with pytest.raises(FieldCapError):
        parse_field("y1^4 d/dy_1", 2)
    with pytest.raises(WittenError):
        parse_field("y3 d/dy_1", 2)
    with pytest.raises(FieldCapError):
        bracket(parse_field("y1^3 d/dy_2", 2), parse_field("y2^2 d/dy_1", 2))


def random_field(rng, N=2, maxdeg=2, cap=8):
    X = FormalVectorField(N, cap=cap)
    for _ in range(rng.randint(1, 3)):
        e = [0] * N
        for _ in range(rng.randint(0, maxdeg)):
            e[rng.randrange(N)] += 1
        X = X + FormalVectorField.term(N, rng.choice([1, -2, 0.5]), e, direction=rng.randint(1, N),
                                       cap=cap)
    return X


@given(st.integers(0, 10 ** 6))
def test_bracket_antisymmetry_and_jacobi(seed):
    rng = random.Random(seed)
    X, Y, Z = (random_field(rng) for _ in range(3))
    # the extension is by forms modulo exact ones, so antisymmetry holds in that quotient
    s = bracket(X, Y) + bracket(Y, X)
    assert all(abs(c) < 1e-12 for p in s.vec.values() for c in p.values())
    assert is_exact_oneform(s.form, 2, 1e-9)
    jac = bracket(X, bracket(Y, Z)) + bracket(Y, bracket(Z, X)) + bracket(Z, bracket(X, Y))
    assert all(abs(c) < 1e-9 for p in jac.vec.values() for c in p.values())
    # the form part is a coboundary class: it only has to vanish modulo exact forms
    assert is_exact_oneform(jac.form, 2, 1e-9)


# ---------------------------------------------------------------- lifts

def test_lift_examples():
    r = lift_rho(parse_field("d/dy_1", 2))
    assert r.poly.is_close(SPoly.monomial(((1, 0, 0, 0, 0, 0),), -1, c=math.pi / 1j), 1e-15)
    r = lift_rho(parse_field("[y1 dy_1]", 2))
    assert fmt(r.poly) == "g1*D^1 g1"


@given(st.integers(0, 10 ** 6))
def test_rho_anomaly_is_the_cocycle(seed):
    rng = random.Random(seed)
    X, Y = random_field(rng, cap=3), random_field(rng, cap=3)
    # rho(X)_(0) rho(Y) - rho([X,Y]) = -c(X,Y) modulo exact forms
    assert is_exact_oneform(add_forms(rho_anomaly(X, Y), cocycle(X, Y)), 2, 1e-9)
    assert is_exact_oneform(rho_bracket_defect(X, Y), 2, 1e-9)


# ---------------------------------------------------------------- characteristic classes

def test_atiyah_examples():
    A = atiyah(Q1)
    assert fmt(A[1][0]) == "2*g1!"
    assert not A[0][0] and not A[0][1] and not A[1][1]
    lin = atiyah(parse_field("y1 d/dy_2 + 3*y2 d/dy_1 + d/dy_1", 2))
    assert not any(e for row in lin for e in row)


def test_chern_coefficients():
    base = tr_at_power([Q1, Q2])
    ch = chern_char(2, [Q1, Q2])
    k = next(iter(base.terms))
    assert abs(ch.terms[k] / base.terms[k] + 1 / (8 * math.pi ** 2)) < 1e-15
    assert abs(witten_log_coeff(2) - 3 / (8 * math.pi ** 4)) < 1e-16
    lin = parse_field("y1 d/dy_2", 2)
    assert not chern_char(2, [lin, Q2])
    assert not witten_log([Q1, Q2], CTX)


def test_theta_examples():
    assert fmt(theta_cochain(parse_field("d/dy_1", 2))) == "b1!"
    assert fmt(theta_cochain(parse_field("y1 d/dy_1", 2))) == "b1*g1! + b1!*g1"
    assert theta_cochain(parse_field("y1^2 d/dy_2 + [y1 dy_2]", 2)) == theta_cochain(Q1)


# ---------------------------------------------------------------- Lie traces

def test_trace_lie_factorization():
    t1 = trace_lie(None, [Q1], CTX, normalized=True)
    assert {h for (_, h, _) in t1.poly.terms} == {-1}
    assert (hbar_part(t1, -1) - theta_cochain(Q1).scale(math.pi / 1j)).max_abs() < 1e-12
    t2 = trace_lie(None, [Q1, Q2], CTX, normalized=True)
    assert max(h for (_, h, _) in t2.poly.terms) <= 0
    want = (theta_cochain(Q1) * theta_cochain(Q2)).scale((math.pi / 1j) ** 2)
    assert (hbar_part(t2, -2) - want).max_abs() < 1e-12


def test_trace_lie_arity_zero():
    t = trace_lie(None, [], CTX)
    assert abs(t.poly.terms[((), 0, ())] - 1) < 1e-12


def test_cocycle_identities():
    Q3 = parse_field("y1 y2 d/dy_2", 2)
    assert cocycle_residual(2, [Q1, Q2, Q3], CTX) < 1e-10
    assert lie_qme_residual(1, [Q1, Q2], CTX) < 1e-10
    assert trace_cochain(2, CTX).antisymmetry_residual([Q1, Q2]) < 1e-12


# ---------------------------------------------------------------- diagrams and wheels

def test_classify_examples():
    assert classify_diagram(Diagram(["tree"])) == "tree-vertex"
    for k in (2, 3, 4):
        g = Diagram(["tree"] * k, [(i, (i + 1) % k, "gamma") for i in range(k)])
        assert classify_diagram(g) == "wheel"
    g = Diagram(["tree", "loop"], [(0, 1, "dgamma")])
    assert classify_diagram(g) == "I" and abs(diagram_weight(g, CTX)) < 1e-10


@pytest.mark.parametrize("g,tag", [
    (Diagram(["tree", "loop"], [(0, 1, "gamma")]), "III"),
    (Diagram(["tree", "tree", "loop"], [(0, 2, "dgamma"), (1, 2, "gamma")]), "II"),
    (Diagram(["tree"] * 3, [(0, 1, "gamma"), (1, 0, "gamma"), (2, 1, "gamma")]), "IV"),
    (Diagram(["tree"] * 2, [(0, 1, "gamma")]), "V"),
    (Diagram(["tree", "tree", "loop"], [(0, 2, "dgamma"), (1, 0, "gamma")]), "I"),
])
def test_vanishing_types(g, tag):
    assert classify_diagram(g) == tag
    assert abs(diagram_weight(g, CTX)) < 1e-10


def test_malformed_diagrams():
    with pytest.raises(DiagramError):
        classify_diagram(Diagram([]))
    with pytest.raises(DiagramError):
        classify_diagram(Diagram(["tree", "tree"]))
    with pytest.raises(DiagramError):
        classify_diagram(Diagram(["loop", "tree"], [(0, 1, "gamma")]))


@pytest.mark.parametrize("tau", [2j, 0.3 + 1.7j])
def test_cycle_integrals_match_lattice_sums(tau):
    ctx = EllipticContext(tau)
    assert abs(cycle_integral(4, ctx) - cycle_integral_fourier(tau, 4)) < 1e-9
    assert abs(cycle_integral(3, ctx) - cycle_integral_fourier(tau, 3)) < 1e-9
    assert abs(wheel_coefficient(4, ctx) - math.pi ** 4 / 45 * eisenstein_qseries(tau, 4)) < 1e-9


def test_wheel_weight_linear_is_zero():
    lin = [parse_field("y1 d/dy_2", 2), parse_field("y2 d/dy_1", 2)]
    assert not wheel_weight(2, lin, CTX)
    with pytest.raises(WittenError):
        wheel_weight(3, lin, CTX)


# ---------------------------------------------------------------- Maurer-Cartan

def test_mc_check():
    sp = direct_sum(bc(1), betagamma(1))
    assert mc_qme_check(parse_fock("0", sp), 3, CTX) == {}
    assert max(mc_qme_check(parse_fock("fc1*(b1+g1*g1)", sp), 3, CTX).values(), default=0) < 1e-8
    with pytest.raises(NilpotenceError):
        mc_qme_check(parse_fock("fc1*b1 + fb1*g1", sp), 2, CTX)
