"""Fock space of the free beta-gamma / b-c system.

The Fock space is the polynomial algebra on the variables ``d^k a^s`` (plus the
daggered copies ``d^k a^{s!}`` in the extended algebra).  Elements are stored
on top of :class:`SPoly` with every variable sitting at point 0.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .superpoly import SPoly, exp_nilpotent, sort_word, field

DEFAULT_WINDOW = (-4, 4)
DEFAULT_K = 8
RESERVED = {"D", "i", "pi", "hbar", "imtau", "j"}


class FockError(ValueError):
    pass


class DerivativeCapError(FockError):
    pass


class ParseError(FockError):
    def __init__(self, msg, pos=None):
        super().__init__(msg if pos is None else f"{msg} at position {pos}")
        self.pos = pos


# ---------------------------------------------------------------- scalars

class ScalarSeries:
    """Truncated Laurent polynomial in hbar."""

    __slots__ = ("coeffs", "window", "overflow")

    def __init__(self, coeffs=None, window=DEFAULT_WINDOW, overflow=False):
        self.window = tuple(window)
        self.overflow = bool(overflow)
        self.coeffs: Dict[int, object] = {}
        for m, c in (coeffs or {}).items():
            if c == 0:
                continue
            if self.window[0] <= m <= self.window[1]:
                self.coeffs[m] = c
            else:
                self.overflow = True

    @classmethod
    def const(cls, c, window=DEFAULT_WINDOW):
        return cls({0: c}, window)

    def __getitem__(self, m):
        return self.coeffs.get(m, 0)

    def __add__(self, other):
        other = _as_series(other, self.window)
        out = dict(self.coeffs)
        for m, c in other.coeffs.items():
            out[m] = out.get(m, 0) + c
        return ScalarSeries(out, self.window, self.overflow or other.overflow)

    __radd__ = __add__

    def __neg__(self):
        return ScalarSeries({m: -c for m, c in self.coeffs.items()}, self.window, self.overflow)

    def __sub__(self, other):
        return self + (-_as_series(other, self.window))

    def __mul__(self, other):
        other = _as_series(other, self.window)
        out: Dict[int, object] = {}
        for m1, c1 in self.coeffs.items():
            for m2, c2 in other.coeffs.items():
                out[m1 + m2] = out.get(m1 + m2, 0) + c1 * c2
        return ScalarSeries(out, self.window, self.overflow or other.overflow)

    __rmul__ = __mul__

    def is_zero(self, tol=0.0):
        return all(abs(complex(c)) <= tol for c in self.coeffs.values())

    def is_close(self, other, tol=1e-12):
        return (self - other).is_zero(tol)

    def __eq__(self, other):
        if isinstance(other, (int, float, complex, Fraction)):
            other = ScalarSeries.const(other, self.window)
        if not isinstance(other, ScalarSeries):
            return NotImplemented
        return self.coeffs == other.coeffs

    def __repr__(self):
        if not self.coeffs:
            return "0"
        return " + ".join(f"({c})*hbar^{m}" for m, c in sorted(self.coeffs.items()))


def _as_series(x, window):
    if isinstance(x, ScalarSeries):
        return x
    return ScalarSeries.const(x, window)


# ---------------------------------------------------------------- spaces

@dataclass(frozen=True)
class Generator:
    name: str
    parity: int
    degree: int
    weight: Fraction = Fraction(0)


@dataclass
class SymplecticSpace:
    generators: List[Generator]
    omega: List[List[object]]
    exact: bool = False
    K: int = DEFAULT_K
    index: Dict[str, int] = dc_field(default_factory=dict)

    def __post_init__(self):
        self.index = {g.name: s for s, g in enumerate(self.generators)}
        # contractions use left derivatives with the later point differentiated
        # first; the (-1)^p twist makes a^p_(0) a^q = (i hbar/pi) omega_pq for
        # odd generators as well
        n = len(self.generators)
        self.omega_eff = [[(-1) ** self.generators[p].parity * self.omega[p][q] for q in range(n)]
                          for p in range(n)]
        self.partners = [[(q, self.omega_eff[p][q]) for q in range(n) if self.omega_eff[p][q] != 0]
                         for p in range(n)]

    @property
    def ope(self):
        """Simple-pole constant of the generator OPE (i/pi, or 1 in exact mode)."""
        return Fraction(1) if self.exact else 1j / math.pi

    @property
    def dim(self):
        return len(self.generators)

    def parity(self, s):
        return self.generators[s].parity

    def degree(self, s):
        return self.generators[s].degree

    def exact_copy(self):
        return SymplecticSpace(list(self.generators), [list(r) for r in self.omega], True, self.K)

    def with_cap(self, K):
        return SymplecticSpace(list(self.generators), [list(r) for r in self.omega], self.exact, K)

    def __eq__(self, other):
        return (isinstance(other, SymplecticSpace) and self.generators == other.generators
                and self.omega == other.omega and self.exact == other.exact)

    def __hash__(self):
        return hash(tuple(self.generators))


def make_space(gens: Sequence, omega, exact=False, K=DEFAULT_K) -> SymplecticSpace:
    """Validate a generator list plus pairing matrix.

    ``gens`` holds ``(name, parity, degree[, weight])`` tuples or Generators;
    parity may be 0/1 or 'even'/'odd'.
    """
    out = []
    for g in gens:
        if isinstance(g, Generator):
            out.append(g)
            continue
        name, par, deg, *rest = g
        if isinstance(par, str):
            par = {"even": 0, "odd": 1}[par]
        out.append(Generator(name, int(par), int(deg), Fraction(rest[0]) if rest else Fraction(0)))
    names = [g.name for g in out]
    if len(set(names)) != len(names):
        raise FockError("duplicate generator names")
    for n in names:
        if n in RESERVED or not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", n):
            raise FockError(f"bad generator name {n!r}")
    n = len(out)
    om = [list(r) for r in omega]
    if len(om) != n or any(len(r) != n for r in om):
        raise FockError("pairing matrix has the wrong shape")
    for p in range(n):
        for q in range(n):
            w = om[p][q]
            a, b = out[p], out[q]
            if w != 0 and a.parity != b.parity:
                raise FockError(f"pairing <{a.name},{b.name}> is not even")
            if w != 0 and a.degree + b.degree != 0:
                raise FockError(f"pairing <{a.name},{b.name}> violates the degree constraint")
            sign = -1 if a.parity * b.parity else 1
            if w != -sign * om[q][p]:
                raise FockError(f"pairing <{a.name},{b.name}> is not graded antisymmetric")
    if n and np.linalg.matrix_rank(np.array(om, dtype=complex)) < n:
        raise FockError("pairing is degenerate")
    return SymplecticSpace(out, om, exact, K)


def betagamma(N=1, exact=False, K=DEFAULT_K) -> SymplecticSpace:
    gens, n = [], 2 * N
    om = [[0] * n for _ in range(n)]
    for i in range(N):
        gens += [(f"b{i + 1}", 0, 0, 1), (f"g{i + 1}", 0, 0, 0)]
        om[2 * i][2 * i + 1] = 1
        om[2 * i + 1][2 * i] = -1
    return make_space(gens, om, exact, K)


def bc(M=1, exact=False, K=DEFAULT_K) -> SymplecticSpace:
    gens, n = [], 2 * M
    om = [[0] * n for _ in range(n)]
    for i in range(M):
        gens += [(f"fb{i + 1}", 1, -1, 1), (f"fc{i + 1}", 1, 1, 0)]
        om[2 * i][2 * i + 1] = 1
        om[2 * i + 1][2 * i] = 1
    return make_space(gens, om, exact, K)


def direct_sum(*spaces: SymplecticSpace) -> SymplecticSpace:
    gens, blocks = [], []
    for s in spaces:
        gens += s.generators
        blocks.append(s.omega)
    n = len(gens)
    om = [[0] * n for _ in range(n)]
    off = 0
    for b in blocks:
        for p, row in enumerate(b):
            for q, w in enumerate(row):
                om[off + p][off + q] = w
        off += len(b)
    exact = all(s.exact for s in spaces) if spaces else False
    K = min((s.K for s in spaces), default=DEFAULT_K)
    return make_space(gens, om, exact, K)


# ---------------------------------------------------------------- variables

def var(space: SymplecticSpace, s: int, k: int = 0, dag: int = 0, point: int = 0):
    return field(point, s, k, dag, space.parity(s) ^ dag)


def var_degree(space, sym) -> int:
    return space.degree(sym[2]) - sym[4]


def check_cap(poly: SPoly, K: int):
    for (w, _, _) in poly.terms:
        for x in w:
            if x[0] == 1 and x[3] > K:
                raise DerivativeCapError(f"derivative order {x[3]} exceeds cap K={K}")


def lminus(poly: SPoly, point: int = 0) -> SPoly:
    """Translation operator on the variables sitting at ``point``."""
    def step(key, c):
        w, h, p = key
        for idx, x in enumerate(w):
            if x[0] == 1 and x[1] == point:
                y = (1, point, x[2], x[3] + 1, x[4], x[5])
                sign, w2 = sort_word(w[:idx] + (y,) + w[idx + 1:])
                if sign:
                    yield (w2, h, p), sign * c
    return poly.map_terms(step)


def lminus_power(poly: SPoly, R: int, point: int = 0) -> SPoly:
    """``L_{-1}^R / R!`` at one point."""
    for _ in range(R):
        poly = lminus(poly, point)
    return poly.scale(Fraction(1, math.factorial(R))) if R > 1 else poly


def contract_pair(poly: SPoly, space, x, y, coeff) -> SPoly:
    """``coeff * d_x d_y poly`` with the right derivative applied first."""
    return poly.deriv(y).deriv(x).scale(coeff)


def field_syms(word, point):
    seen = []
    for x in word:
        if x[0] == 1 and x[1] == point and x not in seen:
            seen.append(x)
    return seen


def sing_contraction(poly_by_u: Dict[int, SPoly], space, p1: int, p2: int) -> Dict[int, SPoly]:
    """One application of the singular Wick contraction between two points.

    Input and output are dicts ``upow -> SPoly`` with ``u = z_{p1} - z_{p2}``.
    """
    kappa = space.ope
    out: Dict[int, SPoly] = {}
    for e, poly in poly_by_u.items():
        for key, c in poly.terms.items():
            w = key[0]
            single = SPoly({key: c})
            for x in field_syms(w, p1):
                if x[4]:
                    continue
                for y in field_syms(w, p2):
                    if y[4]:
                        continue
                    wpq = _omega(space, x[2], y[2])
                    if wpq == 0:
                        continue
                    k, l = x[3], y[3]
                    cf = kappa * wpq * (-1) ** k * math.factorial(k + l)
                    r = contract_pair(single, space, x, y, cf)
                    r = SPoly({(kk[0], kk[1] + 1, kk[2]): v for kk, v in r.terms.items()})
                    ee = e - (k + l + 1)
                    out[ee] = out.get(ee, SPoly()) + r
    return {e: p for e, p in out.items() if p}


def _omega(space, p, q):
    return space.omega_eff[p][q]


def exp_sing(poly: SPoly, space, p1: int, p2: int) -> Dict[int, SPoly]:
    """``exp(hbar P^Sing)`` as a dict ``upow -> SPoly``."""
    total = {0: poly}
    term = {0: poly}
    n = 0
    while term:
        n += 1
        term = sing_contraction(term, space, p1, p2)
        term = {e: p.scale(Fraction(1, n)) for e, p in term.items()}
        for e, p in term.items():
            total[e] = total.get(e, SPoly()) + p
    return {e: p for e, p in total.items() if p}


def move_point(poly: SPoly, src: int, dst: int) -> SPoly:
    return poly.relabel(lambda s: (s[0], dst, *s[2:]) if s[1] == src else s)


# ---------------------------------------------------------------- elements

class FockElement:
    """Polynomial in ``d^k a^s`` (and daggers) with hbar-series coefficients."""

    __slots__ = ("space", "poly", "window", "overflow")

    def __init__(self, space: SymplecticSpace, poly: Optional[SPoly] = None,
                 window=DEFAULT_WINDOW, overflow=False):
        self.space = space
        self.window = tuple(window)
        self.overflow = overflow
        poly = poly if poly is not None else SPoly()
        lo, hi = self.window
        keep = {}
        for key, c in poly.terms.items():
            if lo <= key[1] <= hi:
                keep[key] = c
            else:
                self.overflow = True
        self.poly = SPoly(keep)

    # constructors
    @classmethod
    def scalar(cls, space, c=1, h=0, window=DEFAULT_WINDOW):
        return cls(space, SPoly({((), h, ()): c}) if c != 0 else SPoly(), window)

    @classmethod
    def gen(cls, space, name_or_index, k=0, dag=0, window=DEFAULT_WINDOW):
        s = space.index[name_or_index] if isinstance(name_or_index, str) else name_or_index
        if k > space.K:
            raise DerivativeCapError(f"derivative order {k} exceeds cap K={space.K}")
        return cls(space, SPoly.monomial((var(space, s, k, dag),)), window)

    def _wrap(self, poly, overflow=False):
        return FockElement(self.space, poly, self.window, self.overflow or overflow)

    def _check(self, other):
        if not isinstance(other, FockElement):
            return FockElement.scalar(self.space, other, window=self.window)
        if other.space != self.space:
            raise FockError("elements live over different spaces")
        return other

    # arithmetic
    def __add__(self, other):
        other = self._check(other)
        return self._wrap(self.poly + other.poly, other.overflow)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._check(other)
        return self._wrap(self.poly - other.poly, other.overflow)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return self._wrap(self.poly.scale(-1))

    def __mul__(self, other):
        if not isinstance(other, FockElement):
            return self._wrap(self.poly.scale(other))
        other = self._check(other)
        return self._wrap(self.poly * other.poly, other.overflow)

    def __rmul__(self, other):
        return self._wrap(self.poly.scale(other))

    def __bool__(self):
        return bool(self.poly)

    def __eq__(self, other):
        if not isinstance(other, FockElement):
            other = FockElement.scalar(self.space, other)
        return self.space == other.space and self.poly.terms == other.poly.terms

    def __hash__(self):
        return hash(frozenset(self.poly.terms.items()))

    def is_close(self, other, tol=1e-12):
        return (self - other).poly.max_abs() <= tol

    # queries
    def terms(self):
        return self.poly.terms

    def coeff(self, mono: FockElement | tuple = ()) -> ScalarSeries:
        word = mono if isinstance(mono, tuple) else next(iter(mono.poly.terms))[0]
        return ScalarSeries({h: c for (w, h, _), c in self.poly.terms.items() if w == word},
                            self.window)

    def scalar_part(self) -> ScalarSeries:
        return self.coeff(())

    def is_homogeneous_parity(self):
        ps = {sum(x[5] for x in w) % 2 for (w, _, _) in self.poly.terms}
        return len(ps) <= 1

    def parity(self):
        ps = {sum(x[5] for x in w) % 2 for (w, _, _) in self.poly.terms}
        if len(ps) > 1:
            raise FockError("element is not parity homogeneous")
        return ps.pop() if ps else 0

    def degrees(self):
        return {sum(var_degree(self.space, x) for x in w) for (w, _, _) in self.poly.terms}

    def max_deriv(self):
        return max((x[3] for (w, _, _) in self.poly.terms for x in w), default=0)

    def __repr__(self):
        return format_fock(self)

    __str__ = __repr__


def vacuum(space, window=DEFAULT_WINDOW) -> FockElement:
    return FockElement.scalar(space, 1, window=window)


def normal_product(x: FockElement, y: FockElement) -> FockElement:
    return x * y


def translate(x: FockElement) -> FockElement:
    out = lminus(x.poly, 0)
    check_cap(out, x.space.K)
    return x._wrap(out)


def nth_product(a: FockElement, n: int, b: FockElement) -> FockElement:
    """``a_(n) b`` via the operator form of the Wick theorem.

    Put ``a`` at point 1 and ``b`` at point 2, exhaust singular contractions
    (each carrying a pole in ``u = z1 - z2``), shift point 1 by ``exp(u L_-1)``,
    take the residue of ``u^n`` times the result and merge both points.
    """
    b = a._check(b)
    space = a.space
    two = move_point(a.poly, 0, 1) * move_point(b.poly, 0, 2)
    out = SPoly()
    for e, poly in exp_sing(two, space, 1, 2).items():
        R = -1 - n - e
        if R < 0:
            continue
        out = out + lminus_power(poly, R, 1)
    merged = move_point(move_point(out, 1, 0), 2, 0)
    check_cap(merged, space.K)
    return a._wrap(merged, b.overflow)


def derivation_action(a: FockElement, b: FockElement) -> FockElement:
    return nth_product(a, 0, b)


def vanishing_order(a: FockElement, b: FockElement) -> int:
    """Smallest N with ``a_(n) b = 0`` for all n >= N (max pole order)."""
    two = move_point(a.poly, 0, 1) * move_point(b.poly, 0, 2)
    es = [e for e in exp_sing(two, a.space, 1, 2)]
    return max([-e for e in es] + [0])


# ---------------------------------------------------------------- printing

def _fmt_coeff(c) -> str:
    if isinstance(c, Fraction):
        return str(c.numerator) if c.denominator == 1 else f"({c.numerator}/{c.denominator})"
    if isinstance(c, complex):
        return repr(c) if c.imag != 0 else repr(c.real)
    return repr(c)


def format_var(space, x) -> str:
    s = space.generators[x[2]].name + ("!" if x[4] else "")
    return f"D^{x[3]} {s}" if x[3] else s


def format_poly(space, poly: SPoly) -> str:
    if not poly:
        return "0"
    parts = []
    for (w, h, _), c in sorted(poly.terms.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        fs = []
        if c != 1 or (not w and not h):
            fs.append(_fmt_coeff(c))
        if h:
            fs.append(f"hbar^{h}")
        fs += [format_var(space, x) for x in w]
        parts.append("*".join(fs))
    return " + ".join(parts)


def format_fock(x: FockElement) -> str:
    return format_poly(x.space, x.poly)


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?j?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()!])
""", re.VERBOSE)


def _tokenize(text):
    pos, out = 0, []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            out.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    out.append(("end", "", pos))
    return out


class _Parser:
    def __init__(self, text, space, imtau, window):
        self.toks = _tokenize(text)
        self.i = 0
        self.space = space
        self.imtau = imtau
        self.window = window

    def peek(self):
        return self.toks[self.i]

    def take(self, value=None):
        t = self.toks[self.i]
        if value is not None and t[1] != value:
            raise ParseError(f"expected {value!r}, got {t[1]!r}", t[2])
        self.i += 1
        return t

    def const(self, c):
        return FockElement.scalar(self.space, c, window=self.window)

    def parse(self):
        v = self.expr()
        t = self.peek()
        if t[0] != "end":
            raise ParseError(f"unexpected token {t[1]!r}", t[2])
        return v

    def expr(self):
        v = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            r = self.term()
            v = v + r if op == "+" else v - r
        return v

    def term(self):
        v = self.unary()
        while self.peek()[1] in ("*", "/"):
            _, op, pos = self.take()
            r = self.unary()
            if op == "*":
                v = v * r
            else:
                terms = r.poly.terms
                if len(terms) != 1 or next(iter(terms))[0] != ():
                    raise ParseError("division by a non-scalar", pos)
                (key, c), = terms.items()
                v = FockElement(self.space, SPoly({(w, h - key[1], p): _div(x, c)
                                                   for (w, h, p), x in v.poly.terms.items()}),
                                self.window)
        return v

    def unary(self):
        t = self.peek()
        if t[1] == "-":
            self.take()
            return -self.unary()
        if t[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        v = self.atom()
        if self.peek()[1] == "^":
            self.take()
            neg = self.peek()[1] == "-"
            if neg:
                self.take()
            t = self.take()
            if t[0] != "num" or not t[1].isdigit():
                raise ParseError("exponent must be an integer", t[2])
            e = int(t[1])
            if neg:
                terms = v.poly.terms
                if len(terms) != 1 or next(iter(terms))[0] != () or next(iter(terms.values())) != 1:
                    raise ParseError("negative exponent only allowed on hbar", t[2])
                h = next(iter(terms))[1]
                return FockElement.scalar(self.space, 1, -h * e, self.window)
            out = self.const(1)
            for _ in range(e):
                out = out * v
            v = out
        return v

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            if val.endswith("j"):
                return self.const(complex(val))
            if re.fullmatch(r"\d+", val):
                return self.const(int(val))
            return self.const(float(val))
        if val == "(":
            v = self.expr()
            self.take(")")
            return v
        if kind != "name":
            raise ParseError(f"unexpected token {val!r}", pos)
        if val == "i":
            return self.const(1j)
        if val == "pi":
            return self.const(math.pi)
        if val == "hbar":
            return FockElement.scalar(self.space, 1, 1, self.window)
        if val == "imtau":
            if self.imtau is None:
                raise ParseError("imtau needs a modulus", pos)
            return self.const(self.imtau)
        k = 0
        if val == "D":
            k = 1
            if self.peek()[1] == "^":
                self.take()
                t = self.take()
                if t[0] != "num" or not t[1].isdigit():
                    raise ParseError("derivative order must be an integer", t[2])
                k = int(t[1])
            kind, val, pos = self.take()
            if kind != "name":
                raise ParseError("expected a generator after D", pos)
        if val not in self.space.index:
            raise ParseError(f"unknown generator {val!r}", pos)
        dag = 0
        if self.peek()[1] == "!":
            self.take()
            dag = 1
        return FockElement.gen(self.space, val, k, dag, self.window)


def _div(x, c):
    if isinstance(x, (int, Fraction)) and isinstance(c, (int, Fraction)):
        return Fraction(x) / c
    return x / c


def parse_fock(text: str, space: SymplecticSpace, imtau=None, window=DEFAULT_WINDOW) -> FockElement:
    return _Parser(text, space, imtau, window).parse()
