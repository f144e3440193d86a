"""Seeded verification suites shared by the CLI selftest and the test-suite.

Every suite returns a list of ``Check`` rows.  Suites only use package code;
the independent oracles (mode algebra, q-series, Fourier sums) live in the
tests.
"""
from __future__ import annotations

import cmath
import itertools
import math
import random
from dataclasses import dataclass

from . import witten
from .bv import bv_delta, mult
from .chains import (Chain, CommutantError, check_commutant, d_tot, dbar_chain, hbar_delta,
                     insertion_chain, insertion_word, make_term, trace_coset, trace_poly,
                     unit_chain, witness_chain, witness_expected)
from .elliptic import EllipticContext
from .feynman import collapse_identities, dmodule_residual, place, w_map_poly
from .fock import FockElement, bc, betagamma, direct_sum, parse_fock
from .regint import dbar, pv_quadrature, prop, reg_integrate, stokes_corpus, stokes_residual, volume
from .superpoly import SPoly

TAU = 0.3 + 1.7j


@dataclass
class Check:
    name: str
    value: float
    tol: float
    passed: bool
    detail: str = ""

    @classmethod
    def below(cls, name, value, tol, detail=""):
        return cls(name, float(value), tol, bool(value < tol), detail)


def _series_max(s) -> float:
    return max([abs(complex(c)) for c in s.coeffs.values()] + [0.0])


# ------------------------------------------------------------------ random objects

def random_element(space, rng: random.Random, maxdeg=3, maxk=1, nterms=2, daggers=False):
    x = FockElement.scalar(space, 0)
    for _ in range(rng.randint(1, nterms)):
        m = FockElement.scalar(space, rng.choice([1, -1, 2, 0.5j]))
        for _ in range(rng.randint(1, maxdeg)):
            dag = rng.randint(0, 1) if daggers else 0
            k = 0 if dag else rng.choice([0, 0, 0, maxk])
            m = m * FockElement.gen(space, rng.randrange(space.dim), k, dag)
        x = x + m
    return x


def random_chain(space, rng: random.Random, max_points=3, p_dzbar=0.4, max_a=2, maxdeg=3):
    n = rng.randint(2, max_points)
    ins = [(p, random_element(space, rng, maxdeg), True, rng.random() < p_dzbar)
           for p in range(1, n + 1)]
    props = []
    for _ in range(rng.randint(0, 2)):
        x, y = rng.sample(range(1, n + 1), 2)
        props.append((rng.randint(0, max_a), x, y))
    return Chain(space, make_term(space, ins, 1, props))


def qme_space():
    return direct_sum(betagamma(1), bc(1)).with_cap(16)


# ------------------------------------------------------------------ analytic suites

def unit_suite(tau=TAU, tol=1e-12, **_):
    ctx = EllipticContext(tau)
    sp = betagamma(1)
    v = trace_poly(unit_chain(sp, ctx).poly, sp, ctx)
    val = sum(c for (w, h, p), c in v.terms.items() if not w and h == 0)
    return [Check.below("Tr(unit) - 1", abs(val - 1), tol)]


def propagator_suite(tau=TAU, seed=7, n=50, tol=1e-7, **_):
    """Finite-difference dbar_z P against the constant -i/Im tau."""
    ctx = EllipticContext(tau)
    rng = random.Random(seed)
    want = -1j / ctx.imtau
    h = 1e-4
    worst = 0.0
    for _ in range(n):
        while True:
            z = rng.random() + rng.random() * ctx.tau
            w = rng.random() + rng.random() * ctx.tau
            if abs(ctx.reduce(z - w)) > 0.2:
                break
        P = lambda u: ctx.propagator(u, w)
        dx = (-P(z + 2 * h) + 8 * P(z + h) - 8 * P(z - h) + P(z - 2 * h)) / (12 * h)
        dy = (-P(z + 2j * h) + 8 * P(z + 1j * h) - 8 * P(z - 1j * h) + P(z - 2j * h)) / (12 * h)
        worst = max(worst, abs(0.5 * (dx + 1j * dy) - want))
    return [Check.below(f"dbar P + i/Im tau at {n} points", worst, tol)]


def qtable_rows(tau=TAU, kmax=8):
    ctx = EllipticContext(tau, K=kmax + 1)
    rows = []
    for k in range(kmax + 1):
        for l in range(kmax + 1 - k):
            rows.append((k, l, ctx.q_coeff(k, l),
                         abs(ctx.q_coeff(k + 1, l) + ctx.q_coeff(k, l + 1))))
    return rows


def qtable_suite(tau=TAU, kmax=8, tol=1e-12, **_):
    worst = max(r[3] for r in qtable_rows(tau, kmax))
    return [Check.below(f"Q(k+1,l) + Q(k,l+1), k+l <= {kmax}", worst, tol)]


def modular_suite(tol=1e-9, **_):
    out = []
    for tau in (1j, TAU):
        ctx = EllipticContext(tau)
        d = abs(ctx.q_coeff(1, 0) + 1j * math.pi / 3 * ctx.e2hat())
        out.append(Check.below(f"Q(1,0) + (i pi/3) E2hat at tau={tau}", d, tol))
    out.append(Check.below("E2hat(i)", abs(EllipticContext(1j).e2hat()), 1e-10))
    return out


def moments_suite(tau=0.3 + 1.1j, tol=1e-8, **_):
    ctx = EllipticContext(tau)
    out = []
    for a, name in ((0, "P"), (1, "dP")):
        f = prop(a, 1, 2) * volume([1, 2])
        sym = _series_max(reg_integrate(f, ctx))
        num = max([abs(v) for v in pv_quadrature(f, ctx).values.values()] + [0.0])
        out.append(Check.below(f"int {name} d2z (closed form)", sym, tol))
        out.append(Check.below(f"int {name} d2z (quadrature)", num, tol))
    return out


def stokes_suite(tau=0.3 + 1.1j, convention="bd", tol=1e-8, **_):
    ctx = EllipticContext(tau)
    corpus = stokes_corpus()
    worst = max(stokes_residual(e, ctx, convention) for e in corpus)
    return [Check.below(f"Stokes[{convention}] over {len(corpus)} monomials", worst, tol)]


# ------------------------------------------------------------------ algebraic suites

def _exact_space():
    return direct_sum(betagamma(2, exact=True), bc(1, exact=True))


def collapse_suite(seed=3, n=20, R=3, **_):
    sp = _exact_space()
    rng = random.Random(seed)
    bad = {}
    for _ in range(n):
        poly = place([random_element(sp, rng, maxk=2, nterms=3) for _ in range(3)])
        for name, r in collapse_identities(poly, sp, 1, 2, 3, R=R).items():
            bad[name] = max(bad.get(name, 0.0), r.max_abs())
    return [Check.below(f"collapse {k}", v, 1e-12) for k, v in sorted(bad.items())]


def _hb(p: SPoly) -> SPoly:
    return SPoly({(w, h + 1, pr): c for (w, h, pr), c in p.terms.items()})


def bv_suite(seed=3, n=20, tau=TAU, **_):
    sp = _exact_space()
    rng = random.Random(seed)
    d = lambda x: bv_delta(x, sp, 1)
    sq = comm = wc = 0.0
    for _ in range(n):
        t = place([random_element(sp, rng, daggers=True, maxk=0) for _ in range(2)])
        sq = max(sq, d(d(t)).max_abs())
        comm = max(comm, (d(mult(t)) - mult(d(t))).max_abs())
        co = prop(rng.randint(0, 1), 1, 2) * prop(0, 2, 3)
        t3 = co * place([random_element(sp, rng, maxdeg=2) for _ in range(3)])
        W = lambda x: w_map_poly(x, sp, None)
        wc = max(wc, (dbar(W(t3), 1) + _hb(d(W(t3))) - W(dbar(t3, 1))).max_abs())
    sp2 = direct_sum(betagamma(1), bc(1)).with_cap(12)
    ctx = EllipticContext(tau, K=12)
    dm = 0.0
    for _ in range(n):
        poly = place([random_element(sp2, rng, maxdeg=2) for _ in range(3)])
        for i in (1, 2, 3):
            dm = max(dm, dmodule_residual(poly, sp2, i, ctx).max_abs())
    return [Check.below("Delta^2", sq, 1e-12),
            Check.below("Delta Mult - Mult Delta", comm, 1e-12),
            Check.below("[L_-1 + d/dz, exp(hbar P + hbar Q + D)]", dm, 1e-10),
            Check.below("dbar W + hbar Delta W - W dbar", wc, 1e-12)]


# ------------------------------------------------------------------ traces

def qme_suite(seed=7, n=100, tau=TAU, conventions=("rescaled", "bd"), tol=1e-8, **_):
    """Tr(d_tot c) - hbar Delta Tr(c) on seeded chains; the opposite sign is reported for info."""
    space = qme_space()
    out = []
    for conv in conventions:
        ctx = EllipticContext(tau, K=16, convention=conv)
        rng = random.Random(seed)
        minus = plus = 0.0
        nontrivial = 0
        for _ in range(n):
            c = random_chain(space, rng)
            lhs = trace_poly(d_tot(c, ctx, conv).poly, space, ctx, conv)
            rhs = hbar_delta(trace_poly(c.poly, space, ctx, conv), space, ctx)
            if rhs.max_abs() > 1e-9:
                nontrivial += 1
            minus = max(minus, (lhs - rhs).max_abs())
            plus = max(plus, (lhs + rhs).max_abs())
        out.append(Check.below(f"qme[{conv}] Tr(d c) - hbar Delta Tr(c)", minus, tol,
                               f"{nontrivial}/{n} chains with nonzero Delta Tr; "
                               f"opposite sign gives {plus:.3g}"))
    return out


def dbeta_gamma_value(tau=TAU):
    ctx = EllipticContext(tau)
    sp = betagamma(1)
    got = trace_poly(insertion_chain(parse_fock("D b1*g1", sp), ctx).poly, sp, ctx)
    return {h: c for (w, h, p), c in got.terms.items() if not w}


def dbeta_gamma_suite(tau=TAU, tol=1e-10, **_):
    ctx = EllipticContext(tau)
    val = dbeta_gamma_value(tau).get(1, 0)
    want = -1j * math.pi / 3 * ctx.e2hat()
    return [Check.below("Tr(d beta gamma) + (i pi hbar/3) E2hat", abs(val - want), tol)]


WITNESS_SPACES = (("bc(1)", lambda: bc(1)), ("betagamma(1)", lambda: betagamma(1)),
                  ("betagamma(1)+bc(1)", lambda: direct_sum(betagamma(1), bc(1))),
                  ("bc(2)", lambda: bc(2)), ("betagamma(2)", lambda: betagamma(2)))


def witness_suite(tau=TAU, tol=1e-10, **_):
    ctx = EllipticContext(tau)
    out = []
    for name, mk in WITNESS_SPACES:
        sp = mk()
        got = trace_poly(witness_chain(sp).poly, sp, ctx).filter(lambda k: k[1] == 0)
        out.append(Check.below(f"witness {name} (dim L = {sp.dim})",
                               (got - witness_expected(sp, ctx)).max_abs(), tol))
    return out


def coset_setup(tau=TAU):
    """betagamma(1)+bc(1): A = <b1, g1>, the bc pair sits in the commutant.

    alpha is the betagamma half of the witness chain; d_tot alpha is a
    vacuum one-point dz chain, which every trace kills.
    """
    ctx = EllipticContext(tau)
    sp = direct_sum(betagamma(1), bc(1))
    gen = lambda s, k=0: FockElement.gen(sp, s, k)
    A, C = [gen("b1"), gen("g1")], [gen("fb1"), gen("fc1")]
    alpha = Chain(sp, insertion_word(gen("b1").poly, 1, True, False) *
                  insertion_word(gen("g1").poly, 2, True, False))
    return ctx, sp, A, C, alpha


def coset_corpus(sp):
    """u dz (dzbar) (x) v dw (dwbar), one dzbar missing, up to two propagators."""
    els = [FockElement.gen(sp, n, k) for n in ("fb1", "fc1") for k in (0, 1)]
    pm = [()] + [(a,) for a in range(3)] + list(itertools.combinations_with_replacement(range(3), 2))
    for u, v in itertools.product(els, els):
        for props in pm:
            for miss in (1, 2):
                yield Chain(sp, make_term(sp, [(1, u, True, miss != 1), (2, v, True, miss != 2)],
                                          1, [(a, 1, 2) for a in props]))


def coset_suite(tau=TAU, tol=1e-8, **_):
    ctx, sp, A, C, alpha = coset_setup(tau)
    check_commutant(A, C)
    try:
        check_commutant(A, A)
        rejected = False
    except CommutantError:
        rejected = True
    worst = 0.0
    live = n = 0
    for eta in coset_corpus(sp):
        n += 1
        if _series_max(trace_coset(alpha, dbar_chain(eta, ctx), ctx, A, C)) > 1e-9:
            live += 1
        worst = max(worst, _series_max(trace_coset(alpha, d_tot(eta, ctx), ctx, A, C)))
    return [Check.below(f"Tr_alpha(d_tot eta) over {n} chains", worst, tol,
                        f"{live} chains with nonzero dbar part cancelled by d_ch"),
            Check("commutant check rejects <b,g> against itself", float(not rejected), 0.5, rejected)]


# ------------------------------------------------------------------ Lie cochains

def witten_fields(N=2):
    """Quadratic test fields."""
    if N != 2:
        raise ValueError("the one-loop comparison uses N = 2")
    return [witten.parse_field(t, 2) for t in ("y1^2 d/dy_2", "y2^2 d/dy_1 - 0.5*y1 y2 d/dy_2")]


def four_wheel_fields():
    return [witten.parse_field(t, 4) for t in
            ("y1^2 d/dy_2 + y3 y1 d/dy_4", "y2^2 d/dy_3", "y3^2 d/dy_4 + 0.5*y3 y4 d/dy_1",
             "y4^2 d/dy_1")]


def witten_measurement(tau=2j, N=2):
    """Measured hbar^0 arity-2 part against (1/32 pi^4) E2hat tr(At^2)."""
    ctx = EllipticContext(tau)
    xs = witten_fields(N)
    sp = witten.field_space(N)
    got = witten.hbar_part(witten.trace_lie(None, xs, ctx, normalized=True), 0)
    pred = witten.one_loop_prediction(xs, ctx, sp)
    base = witten.tr_at_power(xs, sp).scale(ctx.e2hat())
    key = max(base.terms, key=lambda k: abs(base.terms[k]))
    coeff = complex(got.terms.get(key, 0) / base.terms[key])
    return {"got": got, "pred": pred, "coeff": coeff, "ref_coeff": 1 / (32 * math.pi ** 4),
            "residual": (got - pred).max_abs(),
            "fit_residual": (got - base.scale(coeff)).max_abs()}


def e4_ratios(taus=(2j, TAU)):
    xs = four_wheel_fields()
    sp = witten.field_space(4)
    ratios = []
    for tau in taus:
        ctx = EllipticContext(tau)
        w = witten.wheel_weight(4, xs, ctx, sp)
        key = max(w.terms, key=lambda k: abs(w.terms[k]))
        ratios.append(complex(w.terms[key] / ctx.eisenstein(4)))
    return ratios


def witten_suite(N=2, tol=1e-6, tol_e4=1e-5, **_):
    m = witten_measurement(2j, N)
    r = e4_ratios()
    rel = abs(r[0] - r[1]) / abs(r[0])
    return [
        Check.below("witten hbar^0 arity-2 vs (1/32 pi^4) E2hat tr(At^2)", m["residual"], tol,
                    f"measured coefficient {m['coeff'].real:.10g} vs {m['ref_coeff']:.10g}; "
                    f"fit residual {m['fit_residual']:.2e}"),
        Check.below("witten 4-wheel / E4 across two tau (relative)", rel, tol_e4,
                    f"ratios {r[0].real:.10g}, {r[1].real:.10g}"),
    ]


def mc_suite(tau=2j, tol=1e-8, **_):
    ctx = EllipticContext(tau)
    sp = direct_sum(bc(1), betagamma(1))
    S = parse_fock("fc1*(b1+g1*g1)", sp)
    res = witten.mc_qme_check(S, 3, ctx)
    return [Check.below("Maurer-Cartan QME residual", max(res.values(), default=0.0), tol)]


SUITES = {
    "unit": unit_suite,
    "propagator": propagator_suite,
    "qtable": qtable_suite,
    "modular": modular_suite,
    "collapse": collapse_suite,
    "bv": bv_suite,
    "qme": qme_suite,
    "stokes": stokes_suite,
    "moments": moments_suite,
    "witness": witness_suite,
    "witten": witten_suite,
    "coset": coset_suite,
    "dbeta-gamma": dbeta_gamma_suite,
    "mc": mc_suite,
}


def run_suite(name: str, **kw):
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name](**kw)
