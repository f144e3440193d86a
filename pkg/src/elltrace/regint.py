"""Regularized integrals and residues of propagator-valued forms on X^n.

A form is an :class:`SPoly` whose words hold dz / dzbar symbols (and possibly
field variables riding along) and whose ``props`` hold propagator symbols
``(a, x, y)`` meaning ``d^a_{z_x} P(z_x - z_y)`` with ``x < y``.

The one-variable integral is done exactly.  Writing ``X_k = P(z_i - z_k)`` and
``E = sum_k d/dX_k`` one has ``dbar_i F(X) = kappa E F`` with
``kappa = -i / Im tau``; the antiderivative

    A = kappa^-1 sum_r (-1)^r X_j^{r+1} / (r+1)!  E^r G

solves ``dbar_i A = G`` and the integral of ``G dz_i dzbar_i`` becomes the
sum of residues of ``A dz_i`` at the neighbouring points.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from math import factorial
import itertools
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .elliptic import EllipticContext, richardson
from .fock import ScalarSeries
from .superpoly import SPoly, dz, dzbar, norm_prop, sort_word, DZ, DZBAR


class RegIntError(ValueError):
    pass


class QuadratureError(RegIntError):
    def __init__(self, msg, ladder=None):
        super().__init__(msg)
        self.ladder = ladder


# ------------------------------------------------------------------ builders

def prop(a: int, x: int, y: int, c=1) -> SPoly:
    """The form ``c * d^a_{z_x} P(z_x - z_y)`` (no form symbols)."""
    s, sym = norm_prop(a, x, y)
    return SPoly({((), 0, (sym,)): s * c})


def forms(*syms) -> SPoly:
    return SPoly.monomial(tuple(syms))


def volume(points: Sequence[int]) -> SPoly:
    w = []
    for p in points:
        w += [dz(p), dzbar(p)]
    return SPoly.monomial(tuple(w))


def points_of(poly: SPoly) -> List[int]:
    pts = set()
    for (w, _, props) in poly.terms:
        for s in w:
            if s[0] == 0:
                pts.add(s[1])
        for p in props:
            if p[0] >= 0:
                pts.update((p[1], p[2]))
    return sorted(pts)


# ------------------------------------------------------------------ dbar / d

def _insert_form(w, sym):
    return sort_word((sym,) + w)


def dbar(poly: SPoly, kappa_bar=None, ctx: Optional[EllipticContext] = None) -> SPoly:
    """Antiholomorphic differential acting from the left on the coefficient."""
    if kappa_bar is None:
        kappa_bar = -1j / ctx.imtau
    def step(key, c):
        w, h, props = key
        done = set()
        for idx, p in enumerate(props):
            if p[0] != 0 or p in done:
                continue
            done.add(p)
            mult = props.count(p)
            rest = props[:idx] + props[idx + 1:]
            for pt, sg in ((p[1], 1), (p[2], -1)):
                sign, w2 = _insert_form(w, dzbar(pt))
                if sign:
                    yield (w2, h, rest), sign * sg * mult * kappa_bar * c
    return poly.map_terms(step)


def dhol(poly: SPoly) -> SPoly:
    """Holomorphic differential acting from the left on the coefficient."""
    def step(key, c):
        w, h, props = key
        done = set()
        for idx, p in enumerate(props):
            if p[0] < 0 or p in done:
                continue
            done.add(p)
            mult = props.count(p)
            rest = props[:idx] + props[idx + 1:]
            newp = tuple(sorted(rest + ((p[0] + 1, p[1], p[2]),)))
            for pt, sg in ((p[1], 1), (p[2], -1)):
                sign, w2 = _insert_form(w, dz(pt))
                if sign:
                    yield (w2, h, newp), sign * sg * mult * c
    return poly.map_terms(step)


# ------------------------------------------------------------------ expansions

def _laurent(ctx: EllipticContext, a: int, maxpow: int) -> Dict[int, complex]:
    """``d^a P(u)`` around u = 0 with u-bar dropped: {power: coeff}."""
    out = {-(a + 1): 1j / math.pi * (-1) ** a * factorial(a)}
    for r in range(0, maxpow + 1):
        v = ctx.reg_coeff(a + r) * factorial(a + r) / factorial(r)
        if v != 0:
            out[r] = v
    return out


def expand_collapse(props: tuple, i: int, j: int, ctx: EllipticContext, maxpow: int = -1,
                    extra_min: int = 0):
    """Expand every propagator touching ``i`` around ``z_i = z_j``.

    Returns ``{upow: {props': coeff}}`` with ``u = z_i - z_j``; only powers that
    can still reach ``<= maxpow`` after multiplying by something of minimal
    power ``extra_min`` are kept.
    """
    base = []
    factors = []   # list of (minpow, builder(maxp) -> {pow: {props: c}})
    for p in props:
        a, x, y = p
        if a < 0 or (x != i and y != i):
            base.append(p)
            continue
        other = y if x == i else x
        sgn = 1 if x == i else (-1) ** (a + 1)
        if other == j:
            factors.append((-(a + 1), _pole_factor(ctx, a, sgn)))
        else:
            factors.append((0, _taylor_factor(a, j, other, sgn)))
    mins = [f[0] for f in factors]
    total_min = sum(mins) + extra_min
    acc = {0: {tuple(sorted(base)): 1}}
    for idx, (mn, build) in enumerate(factors):
        # the remaining factors can lower the power by at most this much
        rem_min = sum(mins[idx + 1:]) + extra_min
        cap = maxpow - rem_min
        fser = build(cap - min(acc) if acc else cap)
        new: Dict[int, Dict[tuple, complex]] = defaultdict(lambda: defaultdict(complex))
        for e1, d1 in acc.items():
            for e2, d2 in fser.items():
                e = e1 + e2
                if e > cap:
                    continue
                for p1, c1 in d1.items():
                    for p2, c2 in d2.items():
                        new[e][tuple(sorted(p1 + p2))] += c1 * c2
        acc = {e: dict(d) for e, d in new.items()}
    if total_min > maxpow:
        return {}
    return {e: d for e, d in acc.items() if e <= maxpow - extra_min}


def _pole_factor(ctx, a, sgn):
    def build(maxp):
        return {e: {(): sgn * v} for e, v in _laurent(ctx, a, max(maxp, -1)).items() if e <= maxp}
    return build


def _taylor_factor(a, j, other, sgn):
    def build(maxp):
        out = {}
        for r in range(0, max(maxp, -1) + 1):
            s, sym = norm_prop(a + r, j, other)
            out[r] = {(sym,): sgn * s * Fraction(1, factorial(r))}
        return out
    return build


def _pull_form(w, sym):
    """Remove ``sym`` from a canonical word, moving it to the front first."""
    try:
        idx = w.index(sym)
    except ValueError:
        return 0, None
    npar = sum(x[5] for x in w[:idx])
    return (-1 if npar & 1 else 1), w[:idx] + w[idx + 1:]


def _relabel_word(w, i, j):
    return sort_word(tuple((s[0], j, *s[2:]) if s[1] == i else s for s in w))


def residue(poly: SPoly, i: int, j: int, ctx: EllipticContext) -> SPoly:
    """``Res_{z_i -> z_j}``: coefficient of ``(z_i - z_j)^-1 dz_i``, point i renamed j."""
    if i == j:
        raise RegIntError("residue needs two distinct points")
    def step(key, c):
        w, h, props = key
        s0, w1 = _pull_form(w, dz(i))
        if not s0:
            return
        s1, w2 = _relabel_word(w1, i, j)
        if not s1:
            return
        for e, d in expand_collapse(props, i, j, ctx, -1).items():
            if e != -1:
                continue
            for p2, c2 in d.items():
                yield (w2, h, p2), s0 * s1 * c2 * c
    return poly.map_terms(step)


# ------------------------------------------------------------------ integration

def _orient(props, i):
    """Split props into i-oriented pieces ``(a, k)`` and the rest, with sign."""
    mine, rest, sign = [], [], 1
    for p in props:
        a, x, y = p
        if a >= 0 and x == i:
            mine.append((a, y))
        elif a >= 0 and y == i:
            mine.append((a, x))
            sign *= (-1) ** (a + 1)
        else:
            rest.append(p)
    return tuple(sorted(mine)), tuple(rest), sign


def _apply_E(poly: Dict[tuple, object]) -> Dict[tuple, object]:
    out: Dict[tuple, object] = defaultdict(int)
    for mono, c in poly.items():
        seen = set()
        for idx, f in enumerate(mono):
            if f[0] != 0 or f in seen:
                continue
            seen.add(f)
            mult = mono.count(f)
            out[mono[:idx] + mono[idx + 1:]] += mult * c
    return {m: c for m, c in out.items() if c != 0}


def _antiderivative(mono: tuple, kappa_bar) -> Dict[tuple, object]:
    """kappa^-1 sum_r (-1)^r X_j^{r+1}/(r+1)! E^r G with j the first a=0 neighbour."""
    zeros = [k for (a, k) in mono if a == 0]
    j0 = min(k for (_, k) in mono) if not zeros else min(zeros)
    out: Dict[tuple, object] = defaultdict(int)
    term = {mono: 1}
    r = 0
    while term:
        f = (-1) ** r * Fraction(1, factorial(r + 1))
        for m, c in term.items():
            out[tuple(sorted(m + ((0, j0),) * (r + 1)))] += f * c / kappa_bar
        term = _apply_E(term)
        r += 1
    return dict(out)


def integrate_point(poly: SPoly, i: int, ctx: EllipticContext) -> SPoly:
    """Rescaled regularized integral over the single variable ``z_i``."""
    kappa_bar = -1j / ctx.imtau
    vol = -ctx.imtau / math.pi
    def step(key, c):
        w, h, props = key
        s0, w1 = _pull_form(w, dz(i))
        if not s0:
            return
        s1, w2 = _pull_form(w1, dzbar(i))
        if not s1:
            return
        mono, rest, sg = _orient(props, i)
        coef = s0 * s1 * sg * c
        if not mono:
            yield (w2, h, props), coef * vol
            return
        nbrs = sorted({k for (_, k) in mono})
        anti = _antiderivative(mono, kappa_bar)
        for m, ca in anti.items():
            ps = list(rest)
            sg2 = 1
            for (a, k) in m:
                s, sym = norm_prop(a, i, k)
                sg2 *= s
                ps.append(sym)
            ps = tuple(sorted(ps))
            for k in nbrs:
                for e, d in expand_collapse(ps, i, k, ctx, -1).items():
                    if e != -1:
                        continue
                    for p2, c2 in d.items():
                        yield (w2, h, p2), coef * ca * sg2 * c2
    return poly.map_terms(step)


def reg_integrate_poly(poly: SPoly, ctx: EllipticContext, points: Optional[Sequence[int]] = None,
                       convention: Optional[str] = None) -> SPoly:
    """Iterated integral over ``points`` (default: all, ascending)."""
    convention = convention or ctx.convention
    pts = list(points) if points is not None else points_of(poly)
    for p in pts:
        poly = integrate_point(poly, p, ctx)
    if convention == "bd":
        poly = poly.scale((2j * math.pi) ** len(pts))
    return poly


def to_series(poly: SPoly, window=(-4, 4)) -> ScalarSeries:
    out = defaultdict(complex)
    for (w, h, props), c in poly.terms.items():
        if w or props:
            raise RegIntError("form is not fully integrated")
        out[h] += c
    return ScalarSeries(dict(out), window)


def reg_integrate(poly: SPoly, ctx: EllipticContext, convention: Optional[str] = None,
                  order: Optional[Sequence[int]] = None, window=(-4, 4)) -> ScalarSeries:
    pts = list(order) if order is not None else points_of(poly)
    out = reg_integrate_poly(poly, ctx, pts, convention)
    # leftover forms mean the bidegree was not top: those terms integrate to 0
    out = out.filter(lambda k: not any(s[0] == 0 for s in k[0]))
    return to_series(out, window)


def trace_unit(poly: SPoly, ctx: EllipticContext, window=(-4, 4)) -> ScalarSeries:
    return reg_integrate(poly, ctx, "rescaled", window=window)


# ------------------------------------------------------------------ quadrature

@dataclass
class QuadratureResult:
    values: Dict[int, complex]
    ladder: List[Dict[int, complex]]
    numeric: bool = True


def _ray_hits(p0, e, d):
    """Distance along unit direction(s) d to the line p0 + s e, and the edge parameter s."""
    den = d.real * e.imag - d.imag * e.real
    rho = (p0.real * e.imag - p0.imag * e.real) / den
    s = (p0.real * d.imag - p0.imag * d.real) / den
    return rho, s


def _cell_polar(ctx, n_phi=48):
    """Gauss nodes in the polar angle over the centred fundamental cell.

    Returns (phi, weight, R(phi)) with the angle split at the corners so the
    boundary distance is smooth on every segment.
    """
    tau = ctx.tau
    verts = [0.5 + tau / 2, -0.5 + tau / 2, -0.5 - tau / 2, 0.5 - tau / 2]
    edges = [(verts[k], verts[(k + 1) % 4] - verts[k]) for k in range(4)]
    angs = sorted(math.atan2(v.imag, v.real) % (2 * math.pi) for v in verts)
    angs = angs + [angs[0] + 2 * math.pi]
    xg, wg = np.polynomial.legendre.leggauss(n_phi)
    phis, wts, Rs = [], [], []
    for a0, a1 in zip(angs, angs[1:]):
        mid = complex(math.cos(0.5 * (a0 + a1)), math.sin(0.5 * (a0 + a1)))
        edge = None
        for p0, e in edges:
            if abs(mid.real * e.imag - mid.imag * e.real) < 1e-14:
                continue
            rho, s = _ray_hits(p0, e, mid)
            if rho > 0 and -1e-12 <= s <= 1 + 1e-12:
                edge = (p0, e)
                break
        ph = 0.5 * (a1 - a0) * xg + 0.5 * (a1 + a0)
        rho, _ = _ray_hits(edge[0], edge[1], np.exp(1j * ph))
        phis.append(ph)
        wts.append(0.5 * (a1 - a0) * wg)
        Rs.append(rho)
    return np.concatenate(phis), np.concatenate(wts), np.concatenate(Rs)


def _integrand(props_by_h, ctx, u):
    """Evaluate {h: sum c * prod P^{(a)}(u)} on an array of u."""
    cache = {}
    out = {}
    for h, terms in props_by_h.items():
        acc = np.zeros(u.shape, dtype=complex)
        for props, c in terms.items():
            val = np.full(u.shape, complex(c))
            for (a, x, y) in props:
                if a not in cache:
                    cache[a] = ctx.pderiv_array(u, a)
                val = val * cache[a]
            acc += val
        out[h] = acc
    return out


def pv_quadrature(poly: SPoly, ctx: EllipticContext, eps0: float = 0.05, levels: int = 6,
                  convention: Optional[str] = None, n_phi: int = 48, n_r: int = 64,
                  check: float = 1e-7) -> QuadratureResult:
    """Principal-value quadrature for forms on at most two points."""
    convention = convention or ctx.convention
    pts = points_of(poly)
    if len(pts) > 2:
        raise RegIntError("pv_quadrature handles at most two points")
    # strip the volume forms in canonical order; anything else is not top degree
    by_h: Dict[int, Dict[tuple, complex]] = defaultdict(lambda: defaultdict(complex))
    for (w, h, props), c in poly.terms.items():
        full = []
        for p in pts:
            full += [dz(p), dzbar(p)]
        if w != tuple(full):
            if any(s[0] == 1 for s in w):
                raise RegIntError("field variables are not supported by quadrature")
            continue
        by_h[h][props] += c
    vol = -ctx.imtau / math.pi
    if len(pts) <= 1:
        vals = {h: sum(d.values()) * (vol if pts else 1) for h, d in by_h.items()}
        for d in by_h.values():
            if any(p for p in d):
                raise RegIntError("one-point integrand cannot carry propagators")
        scale = (2j * math.pi) ** len(pts) if convention == "bd" else 1
        return QuadratureResult({h: v * scale for h, v in vals.items()}, [])
    x, y = pts
    phi, wphi, R = _cell_polar(ctx, n_phi)
    xr, wr = np.polynomial.legendre.leggauss(n_r)
    ladder = []
    for lev in range(levels):
        eps = eps0 / 2 ** lev
        t0 = math.log(eps)
        t1 = np.log(R)
        t = 0.5 * np.multiply.outer(t1 - t0, xr) + 0.5 * np.add.outer(t1, t0 * np.ones_like(xr))
        wt = 0.5 * np.multiply.outer(t1 - t0, wr)
        rho = np.exp(t)
        u = rho * np.exp(1j * phi)[:, None]
        vals = _integrand(by_h, ctx, u)
        ladder.append({h: complex(np.sum(v * rho ** 2 * wt * wphi[:, None])) for h, v in vals.items()})
    hs = sorted({h for l in ladder for h in l})
    out = {}
    for h in hs:
        seq = [l.get(h, 0j) for l in ladder]
        est = richardson(seq)
        prev = richardson(seq[:-1])
        if abs(est - prev) > check * max(1.0, abs(est)):
            raise QuadratureError(f"extrapolation did not settle at hbar^{h}", ladder)
        # d^2u = dx dy, and the regularized measure dz dzbar = -2i dx dy, rescaled by 2 pi i
        out[h] = -est / math.pi * vol
    if convention == "bd":
        out = {h: v * (2j * math.pi) ** 2 for h, v in out.items()}
    return QuadratureResult(out, ladder)


# ------------------------------------------------------------------ Stokes

def stokes_residual(eta: SPoly, ctx: EllipticContext, convention: Optional[str] = None) -> float:
    """``|int (dbar + d) eta + c sum_{i<j} int Res_{z_i -> z_j} eta|``.

    Both sides are integrated in the given convention; ``c`` is 1 (rescaled) or
    ``2 pi i`` (bd).
    """
    convention = convention or ctx.convention
    pts = points_of(eta)
    lhs = reg_integrate(dbar(eta, ctx=ctx) + dhol(eta), ctx, convention, order=pts)
    fac = 2j * math.pi if convention == "bd" else 1
    diff = dict(lhs.coeffs)
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            i, j = pts[a], pts[b]
            rest = [p for p in pts if p != i]
            r = reg_integrate(residue(eta, i, j, ctx), ctx, convention, order=rest)
            for h, c in r.coeffs.items():
                diff[h] = diff.get(h, 0) + fac * c
    return max([abs(complex(c)) for c in diff.values()] + [0.0])


def stokes_corpus(max_points: int = 3, max_a: int = 2) -> List[SPoly]:
    """Propagator monomials on 2..max_points points, one dzbar missing.

    Up to three propagators on two points and up to two on three, every point
    choice for the missing dzbar.
    """
    out = []
    for n in range(2, max_points + 1):
        syms = [(a, x, y) for x in range(1, n + 1) for y in range(x + 1, n + 1)
                for a in range(max_a + 1)]
        nmax = 3 if n == 2 else 2
        for k in range(1, nmax + 1):
            for combo in itertools.combinations_with_replacement(syms, k):
                f = SPoly.one()
                for (a, x, y) in combo:
                    f = f * prop(a, x, y)
                for miss in range(1, n + 1):
                    w = []
                    for p in range(1, n + 1):
                        w.append(dz(p))
                        if p != miss:
                            w.append(dzbar(p))
                    out.append(f * SPoly.monomial(tuple(w)))
    return out
