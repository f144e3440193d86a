"""Feynman dressing of Fock tensors on X^n.

A tensor ``v_1 (x) ... (x) v_n`` is stored as one :class:`SPoly` whose field
variables carry their point label.  The dressing ``exp(hbar P + hbar Q + D)``
contracts variables across points with propagators, self-contracts at a point
with the diagonal data Q, and turns variables into daggers with a dzbar.

Propagator coefficients stay symbolic (``(a, x, y)`` prop symbols).  Q is
numeric when an :class:`EllipticContext` is given and symbolic otherwise,
``Q(k, l) = (-1)^l q_{k+l}`` with ``q_m`` the prop symbol ``(-2, m, 0)``.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from math import factorial
from typing import Callable, Dict, List, Optional, Sequence

from .elliptic import EllipticContext
from .fock import (FockElement, SymplecticSpace, exp_sing, lminus, lminus_power, move_point,
                   check_cap)
from .superpoly import (SPoly, dword, dzbar, exp_nilpotent, merge_props, norm_prop, sort_word,
                        QSYM_TAG, U_TAG)


# ------------------------------------------------------------------ helpers

def place(factors: Sequence[FockElement]) -> SPoly:
    """``v_1 (x) ... (x) v_n`` with factor i at point i (1-based)."""
    out = SPoly.one()
    for i, v in enumerate(factors, start=1):
        out = out * move_point(v.poly, 0, i)
    return out


def _syms(word, dagger=0):
    seen = []
    for x in word:
        if x[0] == 1 and x[4] == dagger and x not in seen:
            seen.append(x)
    return seen


def _dd(word, x, y):
    """Left derivative ``d_x d_y`` (y applied first): (factor, word) or None."""
    r1 = dword(word, y)
    if r1 is None:
        return None
    r2 = dword(r1[1], x)
    if r2 is None:
        return None
    return r1[0] * r2[0], r2[1]


class QTable:
    """Numeric or symbolic diagonal data."""

    def __init__(self, ctx: Optional[EllipticContext] = None):
        self.ctx = ctx

    def __call__(self, k, l):
        """(coefficient, extra props) for Q(k, l)."""
        if self.ctx is None:
            # the regular part is odd, so q_m vanishes for even m
            if (k + l) % 2 == 0:
                return 0, ()
            return (-1) ** l, ((QSYM_TAG, k + l, 0),)
        return self.ctx._q(k, l), ()


def contract(poly: SPoly, space: SymplecticSpace, rule: Callable) -> SPoly:
    """Generic single contraction.

    ``rule(x, y)`` returns None or ``(coeff, props)`` for the ordered pair of
    non-dagger variables ``(x, y)``; the result carries one extra hbar.
    """
    out: Dict = defaultdict(int)
    om = space.omega_eff
    for (w, h, props), c in poly.terms.items():
        syms = _syms(w)
        for x in syms:
            for y in syms:
                wpq = om[x[2]][y[2]]
                if wpq == 0:
                    continue
                r = rule(x, y)
                if r is None:
                    continue
                cf, extra = r
                if cf == 0:
                    continue
                d = _dd(w, x, y)
                if d is None:
                    continue
                f, w2 = d
                out[(w2, h + 1, merge_props(props, tuple(sorted(extra))))] += f * wpq * cf * c
    return SPoly(out)


def _prop_coeff(k, l, x, y):
    """P_{xy}(k, l) = d^k_{z_x} d^l_{z_y} P(z_x, z_y) as (coeff, props)."""
    s, sym = norm_prop(k + l, x, y)
    return (-1) ** l * s, (sym,)


def rule_P(points: Optional[set] = None):
    """Cross-point contractions (optionally restricted to a set of points)."""
    def rule(x, y):
        if x[1] >= y[1]:
            return None
        if points is not None and (x[1] not in points or y[1] not in points):
            return None
        return _prop_coeff(x[3], y[3], x[1], y[1])
    return rule


def rule_Q(qt: QTable, points: Optional[set] = None):
    def rule(x, y):
        if x[1] != y[1] or (points is not None and x[1] not in points):
            return None
        cf, extra = qt(x[3], y[3])
        return Fraction(1, 2) * cf if isinstance(cf, int) else 0.5 * cf, extra
    return rule


def op_D(poly: SPoly, space: SymplecticSpace, point: int) -> SPoly:
    """D_i: d^k a^s -> (-1)^{p(s)} d^k a^{s!} dzbar_i, as an even derivation."""
    def step(key, c):
        w, h, props = key
        for idx, x in enumerate(w):
            if x[0] != 1 or x[1] != point or x[4]:
                continue
            y = (1, point, x[2], x[3], 1, x[5] ^ 1)
            sign, w2 = sort_word(w[:idx] + (y, dzbar(point)) + w[idx + 1:])
            if sign:
                yield (w2, h, props), sign * (-1) ** x[5] * c
    return poly.map_terms(step)


def field_points(poly: SPoly) -> List[int]:
    return sorted({x[1] for (w, _, _) in poly.terms for x in w if x[0] == 1})


# ------------------------------------------------------------------ dressing

@dataclass
class DressedTensor:
    space: SymplecticSpace
    points: tuple
    poly: SPoly


def dress_poly(poly: SPoly, space: SymplecticSpace, ctx: Optional[EllipticContext] = None,
               points: Optional[Sequence[int]] = None) -> SPoly:
    qt = QTable(ctx)
    rp, rq = rule_P(), rule_Q(qt)
    op = lambda t: contract(t, space, rp) + contract(t, space, rq)
    out = exp_nilpotent(op, poly)
    for p in (points if points is not None else field_points(poly)):
        out = out + op_D(out, space, p)
    return out


def dress(factors, space: SymplecticSpace = None, ctx: Optional[EllipticContext] = None) -> DressedTensor:
    """Apply ``exp(hbar P + hbar Q + D)`` to a tensor (list of FockElements or SPoly)."""
    if isinstance(factors, SPoly):
        poly = factors
        pts = tuple(field_points(poly))
    else:
        space = space or factors[0].space
        for v in factors:
            check_cap(v.poly, space.K)
        poly = place(factors)
        pts = tuple(range(1, len(factors) + 1))
    return DressedTensor(space, pts, dress_poly(poly, space, ctx, pts))


def mult_all(poly: SPoly, target: int = 0) -> SPoly:
    return poly.relabel(lambda s: (1, target, *s[2:]) if s[0] == 1 else s)


def p_bv(poly: SPoly) -> SPoly:
    return poly.filter(lambda k: all(x[0] != 1 or x[3] == 0 for x in k[0]))


def w_map_poly(poly: SPoly, space: SymplecticSpace, ctx: Optional[EllipticContext] = None) -> SPoly:
    """``p_BV . Mult . exp(hbar P + hbar Q + D)`` keeping the coefficient symbols."""
    return p_bv(mult_all(dress_poly(poly, space, ctx)))


# ------------------------------------------------------------------ Wick collapse

def wick_mu(f: Dict[int, object], v1: FockElement, v2: FockElement) -> Dict[int, FockElement]:
    """Collapse of ``f(u) v1(z1) v2(z2)`` at the diagonal, ``u = z1 - z2``.

    ``f`` maps powers of u to coefficients.  The result maps the jet order m
    to the Fock element multiplying ``d^m`` in the transfer factor.
    """
    space = v1.space
    two = move_point(v1.poly, 0, 1) * move_point(v2.poly, 0, 2)
    out: Dict[int, SPoly] = defaultdict(SPoly)
    for e, poly in exp_sing(two, space, 1, 2).items():
        for fe, fc in f.items():
            # total power e + fe + R + m = -1 with R from exp(u L_-1)
            top = -1 - e - fe
            for R in range(0, top + 1):
                m = top - R
                piece = lminus_power(poly, R, 1).scale(fc * Fraction(1, factorial(m)))
                out[m] = out[m] + piece
    res = {}
    for m, p in out.items():
        p = move_point(move_point(p, 1, 0), 2, 0)
        if p:
            res[m] = FockElement(space, p, v1.window)
    return res


# ------------------------------------------------------------------ collapse identities

def u_series_lminus(poly: SPoly, point: int, R: int) -> SPoly:
    """``exp(u L_-1)`` at a point, u a formal symbol truncated at u^R."""
    out = poly
    term = poly
    for r in range(1, R + 1):
        term = lminus(term, point).scale(Fraction(1, r))
        if not term:
            break
        out = out + SPoly({(w, h, merge_props(p, ((U_TAG, 0, 0),) * r)): c
                           for (w, h, p), c in term.terms.items()})
    return out


def u_truncate(poly: SPoly, R: int) -> SPoly:
    return poly.filter(lambda k: k[2].count((U_TAG, 0, 0)) <= R)


def rule_pair(p1: int, p2: int, coeff: Callable):
    """Contractions between variables at p1 (left slot) and p2 (right slot)."""
    def rule(x, y):
        if x[1] == p1 and y[1] == p2:
            return coeff(x[3], y[3])
        return None
    return rule


def _exp(space, rules, R=None):
    def op(t):
        out = SPoly()
        for r in rules:
            out = out + contract(t, space, r)
        return u_truncate(out, R) if R is not None else out
    return lambda x: exp_nilpotent(op, x)


def collapse_identities(poly: SPoly, space: SymplecticSpace, i: int, j: int, b: int,
                        R: int = 4, ctx: Optional[EllipticContext] = None) -> Dict[str, SPoly]:
    """Residuals (LHS - RHS) of the six collapse identities on a 3-point tensor.

    ``u = z_i - z_j`` is the formal symbol ``(U_TAG, 0, 0)``; everything is
    truncated at ``u^R``.
    """
    qt = QTable(ctx)
    P_jb = lambda k, l: _prop_coeff(k, l, j, b)
    mult = lambda t: move_point(t, i, j)
    Li = lambda t: u_series_lminus(t, i, R)
    Qi, Qj = rule_Q(qt, {i}), rule_Q(qt, {j})
    res = {}

    lhs = _exp(space, [rule_pair(j, b, P_jb)])(mult(poly))
    rhs = mult(_exp(space, [rule_pair(i, b, P_jb), rule_pair(j, b, P_jb)])(poly))
    res["PMultCommute"] = lhs - rhs

    lhs = _exp(space, [Qj])(mult(poly))
    rhs = mult(_exp(space, [Qj, Qi, rule_pair(i, j, qt)])(poly))
    res["QMultCommute"] = lhs - rhs

    for name, rq in (("QiCommute", Qi), ("QjCommute", Qj)):
        lhs = u_truncate(_exp(space, [rq], R)(Li(poly)), R)
        rhs = u_truncate(Li(_exp(space, [rq], R)(poly)), R)
        res[name] = lhs - rhs

    lhs = u_truncate(_exp(space, [rule_pair(i, b, P_jb)], R)(Li(poly)), R)
    rhs = u_truncate(Li(_exp_shift(space, poly, i, b, P_jb, R)), R)
    res["PLCommute"] = lhs - rhs

    lhs = u_truncate(_exp(space, [rule_pair(i, j, qt)], R)(Li(poly)), R)
    rhs = u_truncate(Li(_exp_shift(space, poly, i, j, qt, R)), R)
    res["QLCommute"] = lhs - rhs
    return res


def _exp_shift(space, poly, p1, p2, base, R):
    """``exp(hbar sum_r base(k + r, l) u^r/r! d_(k,p1) d_(l,p2))`` truncated at u^R."""
    U = (U_TAG, 0, 0)

    def op(t):
        out = SPoly()
        for r in range(R + 1):
            def rule(x, y, r=r):
                if x[1] == p1 and y[1] == p2:
                    cf, extra = base(x[3] + r, y[3])
                    return cf * Fraction(1, factorial(r)), tuple(extra) + (U,) * r
                return None
            out = out + contract(t, space, rule)
        return u_truncate(out, R)
    return exp_nilpotent(op, poly)


# ------------------------------------------------------------------ D-module compatibility

def dz_props(poly: SPoly, i: int) -> SPoly:
    """``d/dz_i`` on propagator symbols: ``d^a P(z_x - z_y)`` gains one derivative."""
    def step(key, c):
        w, h, props = key
        for t, p in enumerate(props):
            if p[0] < 0 or i not in (p[1], p[2]):
                continue
            sgn = 1 if p[1] == i else -1
            rest = props[:t] + props[t + 1:]
            yield (w, h, merge_props(rest, ((p[0] + 1, p[1], p[2]),))), sgn * c
    return poly.map_terms(step)


def dmodule_residual(poly: SPoly, space: SymplecticSpace, i: int,
                     ctx: Optional[EllipticContext] = None) -> SPoly:
    """``[(L_-1)_i + d/dz_i, exp(hbar P + hbar Q + D)]`` applied to a tensor."""
    pts = field_points(poly)
    op = lambda t: lminus(t, i) + dz_props(t, i)
    return op(dress_poly(poly, space, ctx, pts)) - dress_poly(op(poly), space, ctx, pts)
