"""Desk-scale chiral chains, their differentials and the trace map.

A chain is one :class:`SPoly` over points 1..n.  The word of a term holds the
Dolbeault/shift forms (``dz_i`` marks the ``[1]`` shift of the insertion at
point i, ``dzbar_i`` its antiholomorphic volume) and the field variables of the
insertions labelled by point.  Coefficients are propagator symbols.  Jet tails
``(JET_TAG, point, m)`` record transverse derivatives produced by collapses;
the trace pairs chains with the constant test form, so any tail of order
``m >= 1`` is dropped by it.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from math import factorial
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .bv import bv_delta, bv_integrate_top, delta_kappa, hodeg as bv_hodeg
from .elliptic import EllipticContext
from .feynman import w_map_poly, field_points
from .fock import (DerivativeCapError, FockElement, ParseError, ScalarSeries, SymplecticSpace,
                   exp_sing, lminus_power, nth_product, parse_fock, var_degree, format_poly)
from .regint import (_pull_form, _relabel_word, dbar, expand_collapse, reg_integrate_poly,
                     prop as prop_form)
from .superpoly import SPoly, JET_TAG, dz, dzbar, merge_props, sort_word


class ChainError(ValueError):
    pass


class SchemaError(ChainError):
    def __init__(self, msg, pointer="/"):
        super().__init__(f"{pointer}: {msg}")
        self.pointer = pointer


class CommutantError(ChainError):
    def __init__(self, violations):
        msg = "; ".join(f"{a}_({n}) {v} != 0" for a, n, v in violations)
        super().__init__(f"commutant check failed: {msg}")
        self.violations = violations


# ------------------------------------------------------------------ data

@dataclass(frozen=True)
class ChainTerm:
    """Structured view of one term (used for printing and JSON output)."""
    coeff: complex
    hbar: int
    points: tuple
    dz: tuple
    dzbar: tuple
    props: tuple
    jets: tuple
    fields: tuple


class Chain:
    """ScalarSeries-linear combination of chain terms."""

    def __init__(self, space: SymplecticSpace, poly: Optional[SPoly] = None, window=(-4, 4),
                 names: Optional[Dict[int, str]] = None):
        self.space = space
        self.poly = poly if poly is not None else SPoly()
        self.window = tuple(window)
        self.names = names or {}

    def _wrap(self, poly):
        return Chain(self.space, poly, self.window, self.names)

    def __add__(self, other):
        return self._wrap(self.poly + other.poly)

    def __sub__(self, other):
        return self._wrap(self.poly - other.poly)

    def __neg__(self):
        return self._wrap(self.poly.scale(-1))

    def __mul__(self, other):
        if isinstance(other, Chain):
            return self._wrap(self.poly * other.poly)
        return self._wrap(self.poly.scale(other))

    __rmul__ = __mul__

    def __bool__(self):
        return bool(self.poly)

    def __len__(self):
        return len(self.poly)

    def points(self):
        return chain_points(self.poly)

    def jet_free(self):
        return self._wrap(jet_free(self.poly))

    def terms(self) -> List[ChainTerm]:
        out = []
        for (w, h, props), c in self.poly.terms.items():
            out.append(ChainTerm(
                c, h, tuple(chain_points(SPoly({(w, h, props): 1}))),
                tuple(s[1] for s in w if s[0] == 0 and s[2] == 0),
                tuple(s[1] for s in w if s[0] == 0 and s[2] == 1),
                tuple(p for p in props if p[0] >= 0),
                tuple((p[1], p[2]) for p in props if p[0] == JET_TAG),
                tuple(s for s in w if s[0] == 1)))
        return out

    def hodegs(self):
        return {term_hodeg(self.space, k) for k in self.poly.terms}

    def max_abs(self):
        return self.poly.max_abs()

    def __repr__(self):
        return format_chain(self)


def chain_points(poly: SPoly) -> List[int]:
    pts = set()
    for (w, _, props) in poly.terms:
        pts.update(s[1] for s in w)
        for p in props:
            if p[0] >= 0:
                pts.update((p[1], p[2]))
            elif p[0] == JET_TAG:
                pts.add(p[1])
    return sorted(pts)


def jet_free(poly: SPoly) -> SPoly:
    return poly.filter(lambda k: not any(p[0] == JET_TAG for p in k[2]))


def term_hodeg(space, key) -> int:
    """``-q + |T| - p - |a|`` with q the dzbar count and p = 0 on stored strata."""
    w, _, props = key
    pts = {s[1] for s in w}
    q = sum(1 for s in w if s[0] == 0 and s[2] == 1)
    a = sum(var_degree(space, s) for s in w if s[0] == 1)
    return -q + len(pts) - a


# ------------------------------------------------------------------ construction

def insertion_word(v: SPoly, point: int, shift=True, bar=False) -> SPoly:
    """``v_i`` then ``dz_i`` (shift) then ``dzbar_i``, all at point i."""
    out = v.relabel(lambda s: (s[0], point, *s[2:]))
    tail = ()
    if shift:
        tail += (dz(point),)
    if bar:
        tail += (dzbar(point),)
    return out * SPoly.monomial(tail)


def coefficient(scalar=1, props=(), dzbar_pts=(), dz_pts=()) -> SPoly:
    """Coefficient forms: the dzbar list, then the dz list, then propagators."""
    out = SPoly.one(scalar)
    for (a, x, y) in props:
        out = out * prop_form(a, x, y)
    w = tuple(dzbar(p) for p in dzbar_pts) + tuple(dz(p) for p in dz_pts)
    return SPoly.monomial(w) * out


def make_term(space, insertions: Sequence[Tuple[int, FockElement, bool, bool]], scalar=1,
              props=(), dzbar_pts=(), dz_pts=()) -> SPoly:
    out = coefficient(scalar, props, dzbar_pts, dz_pts)
    for (pt, v, shift, bar) in insertions:
        out = out * insertion_word(v.poly, pt, shift, bar)
    return out


def _scalar(text, space, imtau, ptr):
    try:
        x = parse_fock(text, space, imtau)
    except ParseError as e:
        raise SchemaError(f"bad scalar: {e}", ptr)
    out = {}
    for (w, h, _), c in x.poly.terms.items():
        if w:
            raise SchemaError("scalar must not contain generators", ptr)
        out[h] = c
    return out


def make_chain(desc: dict, space: SymplecticSpace, imtau=None, window=(-4, 4)) -> Chain:
    """Build a chain from its JSON description (see the README for the schema)."""
    if not isinstance(desc, dict):
        raise SchemaError("chain description must be an object", "")
    pts = desc.get("points", [])
    if not isinstance(pts, list) or not all(isinstance(p, str) for p in pts):
        raise SchemaError("points must be a list of names", "/points")
    if len(set(pts)) != len(pts):
        raise SchemaError("duplicate point names", "/points")
    idx = {p: i + 1 for i, p in enumerate(pts)}

    def point(name, ptr):
        if name not in idx:
            raise SchemaError(f"unknown point {name!r}", ptr)
        return idx[name]

    terms = desc.get("terms", [])
    if not isinstance(terms, list):
        raise SchemaError("terms must be a list", "/terms")
    out = SPoly()
    for t, term in enumerate(terms):
        base = f"/terms/{t}"
        if not isinstance(term, dict):
            raise SchemaError("term must be an object", base)
        unknown = set(term) - {"coeff", "insertions"}
        if unknown:
            raise SchemaError(f"unknown keys {sorted(unknown)}", base)
        co = term.get("coeff", {})
        if not isinstance(co, dict):
            raise SchemaError("coeff must be an object", base + "/coeff")
        bad = set(co) - {"scalar", "props", "dzbar", "dz"}
        if bad:
            raise SchemaError(f"unknown keys {sorted(bad)}", base + "/coeff")
        scal = _scalar(str(co.get("scalar", "1")), space, imtau, base + "/coeff/scalar")
        props = []
        for k, p in enumerate(co.get("props", [])):
            ptr = f"{base}/coeff/props/{k}"
            if not isinstance(p, dict) or not isinstance(p.get("a", 0), int) or p.get("a", 0) < 0:
                raise SchemaError("prop needs a nonnegative integer 'a'", ptr)
            x, y = point(p.get("from"), ptr + "/from"), point(p.get("to"), ptr + "/to")
            if x == y:
                raise SchemaError("propagator endpoints coincide", ptr)
            props.append((p.get("a", 0), x, y))
        dzb = [point(n, f"{base}/coeff/dzbar/{k}") for k, n in enumerate(co.get("dzbar", []))]
        dzs = [point(n, f"{base}/coeff/dz/{k}") for k, n in enumerate(co.get("dz", []))]
        ins = []
        for k, it in enumerate(term.get("insertions", [])):
            ptr = f"{base}/insertions/{k}"
            if not isinstance(it, dict) or "point" not in it or "expr" not in it:
                raise SchemaError("insertion needs 'point' and 'expr'", ptr)
            bad = set(it) - {"point", "expr", "shift", "dzbar"}
            if bad:
                raise SchemaError(f"unknown keys {sorted(bad)}", ptr)
            try:
                v = parse_fock(str(it["expr"]), space, imtau, window)
            except (ParseError, ValueError) as e:
                raise SchemaError(str(e), ptr + "/expr")
            for key in ("shift", "dzbar"):
                if key in it and not isinstance(it[key], bool):
                    raise SchemaError(f"{key} must be a boolean", f"{ptr}/{key}")
            ins.append((point(it["point"], ptr + "/point"), v, it.get("shift", True),
                        it.get("dzbar", False)))
        for h, c in scal.items():
            out = out + make_term(space, ins, c, props, dzb, dzs).map_terms(
                lambda key, cc, h=h: [((key[0], key[1] + h, key[2]), cc)])
    return Chain(space, out, window, {i: p for p, i in idx.items()})


# ------------------------------------------------------------------ presets

def unit_chain(space, ctx: EllipticContext, point=1, window=(-4, 4)) -> Chain:
    """The normalized constant section ``-(pi / Im tau) |0> dz dzbar``."""
    c = -math.pi / ctx.imtau
    return Chain(space, SPoly.monomial((dz(point), dzbar(point)), c=c), window)


def insertion_chain(v: FockElement, ctx: EllipticContext, point=1) -> Chain:
    """``v`` sitting on the unit chain's volume."""
    c = -math.pi / ctx.imtau
    return Chain(v.space, insertion_word(v.poly, point, True, True).scale(c), v.window)


def witness_chain(space) -> Chain:
    """The top chain: psi dz dzbar (x) psi^v dw dwbar for odd pairs, phi dz (x) phi^v dw for even.

    Pairs ``(p, q)`` with ``omega_pq = 1`` and ``deg p >= 0`` play (phi, phi^v) or
    (psi, psi^v).  All odd pairs come first, then the even ones.
    """
    pairs = witness_pairs(space)
    odd = [pq for pq in pairs if space.parity(pq[0])]
    even = [pq for pq in pairs if not space.parity(pq[0])]
    out = SPoly.one()
    pt = 1
    # Psi: all psi first, then all psi^v
    for which in (0, 1):
        for pq in odd:
            out = out * insertion_word(_gen(space, pq[which]), pt, True, True)
            pt += 1
    for (p, q) in even:
        out = out * insertion_word(_gen(space, p), pt, True, False)
        out = out * insertion_word(_gen(space, q), pt + 1, True, False)
        pt += 2
    return Chain(space, out)


def witness_pairs(space):
    """Dual pairs ``(p, q)`` with ``omega_pq = 1``; raises if the space is not in such a basis."""
    pairs, used = [], set()
    for p in range(space.dim):
        if p in used:
            continue
        qs = [q for q in range(space.dim) if space.omega[p][q] != 0]
        if len(qs) != 1:
            raise ChainError("witness needs a pairing with one partner per generator")
        q = qs[0]
        first, second = (p, q) if (space.omega[p][q] == 1 and space.degree(p) >= 0) else (q, p)
        if space.omega[first][second] != 1:
            raise ChainError("witness needs a normalized basis with omega = 1 on pairs")
        pairs.append((first, second))
        used.update((p, q))
    return pairs


def witness_expected(space, ctx: EllipticContext) -> SPoly:
    """``(-Im tau/pi)^dim L`` times psi...psi^v... phi!...phi^v!... in the stated order."""
    pairs = witness_pairs(space)
    odd = [pq for pq in pairs if space.parity(pq[0])]
    even = [pq for pq in pairs if not space.parity(pq[0])]
    word = [space_var(space, p, 0) for (p, _) in odd] + [space_var(space, q, 0) for (_, q) in odd]
    for (p, q) in even:
        word += [space_var(space, p, 1), space_var(space, q, 1)]
    sign, w = sort_word(word)
    return SPoly.monomial(w, c=sign * (-ctx.imtau / math.pi) ** space.dim)


def space_var(space, s, dag):
    from .fock import var
    return var(space, s, 0, dag, 0)


def _gen(space, s):
    return FockElement.gen(space, s).poly


# ------------------------------------------------------------------ differentials

def dbar_chain(c: Chain, ctx: EllipticContext) -> Chain:
    return c._wrap(dbar(c.poly, ctx=ctx))


def _jets(props, i, j):
    ni = nj = 0
    rest = []
    for p in props:
        if p[0] == JET_TAG and p[1] == i:
            ni += p[2]
        elif p[0] == JET_TAG and p[1] == j:
            nj += p[2]
        else:
            rest.append(p)
    return ni, nj, tuple(rest)


def collapse(poly: SPoly, space: SymplecticSpace, i: int, j: int, ctx: EllipticContext,
             K: Optional[int] = None) -> SPoly:
    """The chiral operation merging point i into point j.

    Singular Wick contractions in ``u = z_i - z_j``, the shift ``exp(u L_-1)`` at
    i, the Laurent/Taylor expansion of the coefficient, and the residue against
    ``dz_i`` with the transfer factor ``exp(u d)`` recorded as a jet tail.
    """
    K = space.K if K is None else K
    out: Dict = defaultdict(complex)
    for (w, h, props), c in poly.terms.items():
        if dz(j) not in w:
            continue
        s0, w1 = _pull_form(w, dz(i))
        if not s0:
            continue
        ni, nj, base = _jets(props, i, j)
        fmin = sum(-(p[0] + 1) for p in base
                   if p[0] >= 0 and {p[1], p[2]} == {i, j})
        single = SPoly({(w1, h, base): s0 * c})
        for e_w, P in exp_sing(single, space, i, j).items():
            rmax = -1 - e_w - fmin
            for R in range(0, rmax + 1):
                PR = lminus_power(P, R, i) if R else P
                if not PR:
                    break
                for (w2, h2, p2), c2 in PR.terms.items():
                    if any(s[0] == 1 and s[3] > K for s in w2):
                        raise DerivativeCapError(f"collapse exceeds derivative cap K={K}")
                    s1, w3 = _relabel_word(w2, i, j)
                    if not s1:
                        continue
                    for e_f, d in expand_collapse(p2, i, j, ctx, -1 - e_w - R).items():
                        m = -1 - e_w - R - e_f
                        if m < 0:
                            continue
                        jet = ni + nj + m
                        if jet > K:
                            continue
                        extra = ((JET_TAG, j, jet),) if jet else ()
                        f = s1 * c2 * Fraction(1, factorial(m))
                        for p3, c3 in d.items():
                            out[(w3, h2, merge_props(p3, extra))] += f * c3
    return SPoly(out)


def d_ch_poly(poly: SPoly, space, ctx, K=None) -> SPoly:
    pts = chain_points(poly)
    out = SPoly()
    for a, i in enumerate(pts):
        for j in pts[a + 1:]:
            out = out + collapse(poly, space, i, j, ctx, K)
    return out


def d_ch(c: Chain, ctx: EllipticContext) -> Chain:
    return c._wrap(d_ch_poly(c.poly, c.space, ctx))


def d_tot(c: Chain, ctx: EllipticContext, convention: Optional[str] = None) -> Chain:
    """``dbar + d_ch`` (rescaled) or ``dbar + 2 pi i d_ch`` (bd)."""
    convention = convention or ctx.convention
    ch = d_ch_poly(c.poly, c.space, ctx)
    if convention == "bd":
        ch = ch.scale(2j * math.pi)
    return c._wrap(dbar(c.poly, ctx=ctx) + ch)


# ------------------------------------------------------------------ trace

def integrate_all(poly: SPoly, ctx: EllipticContext, convention: Optional[str] = None) -> SPoly:
    """Integrate every point of each term; terms whose bidegree is not top drop out."""
    groups: Dict[tuple, SPoly] = defaultdict(SPoly)
    for key, c in poly.terms.items():
        w, _, props = key
        pts = {s[1] for s in w if s[0] == 0}
        pts.update(x for p in props if p[0] >= 0 for x in (p[1], p[2]))
        groups[tuple(sorted(pts))].add_term(key, c)
    out = SPoly()
    for pts, part in groups.items():
        out = out + reg_integrate_poly(part, ctx, pts, convention)
    return out.filter(lambda k: not any(s[0] == 0 for s in k[0]) and not k[2])


def trace_poly(poly: SPoly, space, ctx: EllipticContext, convention=None) -> SPoly:
    """``tr . W``; each term is integrated over every point it lives on, insertions included."""
    groups: Dict[tuple, SPoly] = defaultdict(SPoly)
    for key, c in jet_free(poly).terms.items():
        groups[tuple(chain_points(SPoly({key: 1})))].add_term(key, c)
    out = SPoly()
    for pts, part in groups.items():
        w = w_map_poly(part, space, ctx)
        out = out + reg_integrate_poly(w, ctx, pts, convention)
    return out.filter(lambda k: not any(s[0] == 0 for s in k[0]) and not k[2])


def trace(c: Chain, ctx: EllipticContext, convention=None) -> FockElement:
    return FockElement(c.space, trace_poly(c.poly, c.space, ctx, convention), c.window)


def trace_bv(c: Chain, ctx: EllipticContext, fermions=None, convention=None) -> ScalarSeries:
    return bv_integrate_top(trace_poly(c.poly, c.space, ctx, convention), c.space, fermions,
                            c.window)


def hbar_delta(x: SPoly, space, ctx) -> SPoly:
    d = bv_delta(x, space, delta_kappa(ctx.imtau))
    return SPoly({(w, h + 1, p): v for (w, h, p), v in d.terms.items()})


def qme_residual(c: Chain, ctx: EllipticContext, convention=None) -> FockElement:
    """``Tr(d_tot c) - hbar Delta Tr(c)``.

    With the signs fixed by the Koszul rule above (dbar acting from the left,
    Delta with the odd-corrected pairing) the chain-map identity reads
    ``Tr d_tot = hbar Delta Tr``; see the README for the convention.
    """
    convention = convention or ctx.convention
    lhs = trace_poly(d_tot(c, ctx, convention).poly, c.space, ctx, convention)
    rhs = hbar_delta(trace_poly(c.poly, c.space, ctx, convention), c.space, ctx)
    return FockElement(c.space, lhs - rhs, c.window)


def residual_norms(x: FockElement) -> Dict[int, float]:
    out: Dict[int, float] = defaultdict(float)
    for (w, h, _), c in x.poly.terms.items():
        out[h] = max(out[h], abs(complex(c)))
    return dict(out)


# ------------------------------------------------------------------ coset

def commutant_violations(alg: Sequence[FockElement], other: Sequence[FockElement], nmax=None):
    """All ``(a, n, v)`` with ``a_(n) v != 0``, ``n >= 0``."""
    bad = []
    for a in alg:
        for v in other:
            two = exp_sing(_at(a.poly, 1) * _at(v.poly, 2), a.space, 1, 2)
            top = max([-e for e in two] + [0])
            for n in range(0, top if nmax is None else min(top, nmax)):
                if nth_product(a, n, v):
                    bad.append((a, n, v))
    return bad


def _at(poly, pt):
    return poly.relabel(lambda s: (s[0], pt, *s[2:]))


def check_commutant(alg, other):
    bad = commutant_violations(alg, other)
    if bad:
        raise CommutantError(bad)


def trace_coset(alpha: Chain, eta: Chain, ctx: EllipticContext, alg=(), com=(), fermions=None,
                convention=None) -> ScalarSeries:
    """``Tr^BV(alpha (x) eta)``: alpha's points are shifted past eta's."""
    check_commutant(list(alg), list(com))
    shift = max(eta.points() + [0])
    moved = alpha.poly.relabel(lambda s: (s[0], s[1] + shift, *s[2:]))
    moved = SPoly({(w, h, tuple(sorted((p[0], p[1] + shift, p[2] + shift) if p[0] >= 0 else
                                       (p[0], p[1] + shift, p[2]) if p[0] == JET_TAG else p
                                       for p in props))): c
                   for (w, h, props), c in moved.terms.items()})
    return trace_bv(Chain(eta.space, moved * eta.poly, eta.window), ctx, fermions, convention)


# ------------------------------------------------------------------ printing

def format_chain(c: Chain) -> str:
    if not c.poly:
        return "0"
    name = lambda p: c.names.get(p, f"z{p}")
    parts = []
    for (w, h, props), v in sorted(c.poly.terms.items(), key=lambda kv: repr(kv[0])):
        bits = [repr(v)]
        if h:
            bits.append(f"hbar^{h}")
        for p in props:
            if p[0] >= 0:
                bits.append(f"P{p[0]}[{name(p[1])},{name(p[2])}]")
            elif p[0] == JET_TAG:
                bits.append(f"jet{p[2]}[{name(p[1])}]")
        for s in w:
            if s[0] == 0:
                bits.append(("dzbar" if s[2] else "dz") + f"[{name(s[1])}]")
        fields = SPoly.monomial(tuple(s[:1] + (0,) + s[2:] for s in w if s[0] == 1))
        fs = format_poly(c.space, fields)
        pts = [name(s[1]) for s in w if s[0] == 1]
        if pts:
            bits.append(f"({fs})@" + ",".join(pts))
        parts.append("*".join(bits))
    return " + ".join(parts)
