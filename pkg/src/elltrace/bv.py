"""BV algebra on zero-jet variables a^s, a^{s!}.

Elements are SPolys whose field variables all have derivative order 0.  A
tensor keeps its factors at points 1..n; a plain BV element sits at point 0.
"""
from __future__ import annotations

import math
from collections import defaultdict
from typing import Dict, Iterable, Optional, Sequence, Set, Tuple

from .fock import FockElement, ScalarSeries, SymplecticSpace, var, var_degree
from .feynman import _dd, mult_all, p_bv
from .superpoly import SPoly

MAX_VARS = 12


class BVError(ValueError):
    pass


def delta_kappa(imtau=None, exact=False):
    return 1 if exact or imtau is None else -1j / imtau


def bv_delta(x: SPoly, space: SymplecticSpace, kappa) -> SPoly:
    """``kappa * sum omega_pq d_{a^p} d_{a^q!}`` over all pairs of points.

    The dagger derivative is applied first.  Only zero-jet variables are
    paired; jet variables ride along.
    """
    om = space.omega_eff
    out: Dict = defaultdict(int)
    for (w, h, props), c in x.terms.items():
        plain, dag = [], []
        for s in w:
            if s[0] != 1 or s[3] != 0:
                continue
            if s[4]:
                if s not in dag:
                    dag.append(s)
            elif s not in plain:
                plain.append(s)
        for a in plain:
            for b in dag:
                wpq = om[a[2]][b[2]]
                if wpq == 0:
                    continue
                d = _dd(w, a, b)
                if d is None:
                    continue
                f, w2 = d
                out[(w2, h, props)] += kappa * wpq * f * c
    return SPoly(out)


def check_dagger_parity(space: SymplecticSpace):
    """Runtime check that paired variables have equal parity (bullet_1 = bullet_2)."""
    for p in range(space.dim):
        for q in range(space.dim):
            if space.omega[p][q] != 0 and space.parity(p) != space.parity(q):
                raise BVError(f"pairing of {space.generators[p].name} and "
                              f"{space.generators[q].name} mixes parities")


def mult(x: SPoly) -> SPoly:
    return mult_all(x)


def project_bv(x: SPoly) -> SPoly:
    return p_bv(x)


def hodeg(space: SymplecticSpace, word) -> int:
    return -sum(var_degree(space, s) for s in word if s[0] == 1)


def default_polarization(space: SymplecticSpace) -> Set[Tuple[int, int]]:
    """Fermions are the odd zero-jet variables: even daggers and odd generators."""
    return {(s, d) for s in range(space.dim) for d in (0, 1) if space.parity(s) ^ d}


def check_polarization(space: SymplecticSpace, fermions: Set[Tuple[int, int]]):
    for p in range(space.dim):
        for q in range(space.dim):
            if space.omega[p][q] == 0:
                continue
            a, b = (p, 0) in fermions, (q, 1) in fermions
            if a == b:
                raise BVError(f"polarization is not Lagrangian for the pair "
                              f"({space.generators[p].name}, {space.generators[q].name}!)")
    for (s, d) in fermions:
        if not space.parity(s) ^ d:
            raise BVError("fermions must be odd variables")


def top_fermion(space: SymplecticSpace, fermions=None, point: int = 0) -> SPoly:
    fermions = default_polarization(space) if fermions is None else fermions
    return SPoly.monomial(tuple(var(space, s, 0, d, point) for (s, d) in sorted(fermions)))


def bv_integrate_top(x: SPoly, space: SymplecticSpace, fermions=None, window=(-4, 4)) -> ScalarSeries:
    """Coefficient of the top fermion at the coordinate origin."""
    fermions = default_polarization(space) if fermions is None else set(fermions)
    check_polarization(space, fermions)
    top = next(iter(top_fermion(space, fermions).terms))[0]
    out = defaultdict(complex)
    for (w, h, props), c in x.terms.items():
        if props:
            raise BVError("BV element still carries coefficient symbols")
        if w == top:
            out[h] += c
    return ScalarSeries(dict(out), window)


def bracket(a: SPoly, b: SPoly, space, kappa, deg_a: int) -> SPoly:
    """Derived bracket ``Delta(ab) - (Delta a) b - (-1)^|a| a Delta b``."""
    d = lambda t: bv_delta(t, space, kappa)
    return d(a * b) - d(a) * b - (a * d(b)).scale((-1) ** deg_a)


class BVElement(FockElement):
    """A FockElement with zero-jet variables only."""

    def __init__(self, space, poly=None, window=(-4, 4), overflow=False):
        super().__init__(space, poly, window, overflow)
        for (w, _, _) in self.poly.terms:
            if any(s[0] == 1 and s[3] != 0 for s in w):
                raise BVError("BV elements cannot contain derivative variables")
            if len(w) > MAX_VARS:
                raise BVError(f"monomial exceeds the {MAX_VARS}-variable cap")

    def delta(self, imtau=None):
        k = delta_kappa(imtau, self.space.exact)
        return BVElement(self.space, bv_delta(self.poly, self.space, k), self.window)

    def integrate_top(self, fermions=None):
        return bv_integrate_top(self.poly, self.space, fermions, self.window)

    def hodegs(self):
        return {hodeg(self.space, w) for (w, _, _) in self.poly.terms}
