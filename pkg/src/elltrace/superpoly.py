"""Graded-commutative polynomials with Koszul signs.

Everything downstream (Fock space, BV algebra, dressed tensors, chains) is an
element of one free graded-commutative algebra.  A term key is the triple
``(word, h, props)``:

``word``
    sorted tuple of symbols.  A symbol is a 6-tuple
    ``(kind, point, a, b, c, parity)``.  Kind 0 are differential forms
    (``a = 0`` for dz, ``a = 1`` for dzbar), kind 1 are field variables
    (``a`` generator index, ``b`` derivative order, ``c`` dagger flag).
    Forms sort before fields, so a canonical word always reads
    ``dz1 dzbar1 dz2 dzbar2 ... fields``.
``h``
    power of hbar.
``props``
    sorted tuple of even commuting symbols ``(tag, x, y)``.  ``tag >= 0`` is
    the propagator derivative ``d^tag_{z_x} P(z_x, z_y)`` with ``x < y``.
    Negative tags are bookkeeping symbols (formal ``z_x - z_y``, symbolic Q
    values, jet tails).

Coefficients are plain numbers (complex, int or Fraction).
"""
from __future__ import annotations

from collections import defaultdict
from fractions import Fraction
from math import factorial
from typing import Callable, Dict, Iterable, Optional, Tuple

Symbol = Tuple[int, int, int, int, int, int]
Key = Tuple[tuple, int, tuple]

DZ, DZBAR = 0, 1
U_TAG = -1      # formal (z_x - z_y)
QSYM_TAG = -2   # symbolic Q(m, 0)
JET_TAG = -3    # jet tail d^m at a point


def form(point: int, t: int) -> Symbol:
    return (0, point, t, 0, 0, 1)


def dz(point: int) -> Symbol:
    return (0, point, DZ, 0, 0, 1)


def dzbar(point: int) -> Symbol:
    return (0, point, DZBAR, 0, 0, 1)


def field(point: int, s: int, k: int, dag: int, parity: int) -> Symbol:
    return (1, point, s, k, dag, parity)


def is_zero(c) -> bool:
    return c == 0


def sort_word(syms: Iterable[Symbol]):
    """Sort a word, returning ``(sign, word)`` or ``(0, None)`` if it vanishes."""
    w = list(syms)
    sign = 1
    for i in range(1, len(w)):
        x = w[i]
        j = i
        while j > 0 and w[j - 1] > x:
            if x[5] and w[j - 1][5]:
                sign = -sign
            w[j] = w[j - 1]
            j -= 1
        w[j] = x
    for a, b in zip(w, w[1:]):
        if a == b and a[5]:
            return 0, None
    return sign, tuple(w)


def merge_props(p1: tuple, p2: tuple) -> tuple:
    if not p1:
        return p2
    if not p2:
        return p1
    return tuple(sorted(p1 + p2))


def norm_prop(a: int, x: int, y: int):
    """Normalise ``d^a P(z_x - z_y)`` to ``x < y`` using oddness of P."""
    if x < y:
        return 1, (a, x, y)
    if x == y:
        raise ValueError("propagator on the diagonal")
    return (-1 if (a + 1) % 2 else 1), (a, y, x)


class SPoly:
    """Sparse element of the graded-commutative engine algebra."""

    __slots__ = ("terms",)

    def __init__(self, terms: Optional[Dict[Key, object]] = None):
        self.terms: Dict[Key, object] = {}
        if terms:
            for k, v in terms.items():
                if not is_zero(v):
                    self.terms[k] = v

    # construction -------------------------------------------------------
    @classmethod
    def one(cls, c=1) -> "SPoly":
        return cls({((), 0, ()): c})

    @classmethod
    def monomial(cls, word=(), h=0, props=(), c=1) -> "SPoly":
        sign, w = sort_word(word)
        if sign == 0:
            return cls()
        return cls({(w, h, tuple(sorted(props))): sign * c})

    def copy(self) -> "SPoly":
        return SPoly(dict(self.terms))

    # arithmetic ---------------------------------------------------------
    def __bool__(self):
        return bool(self.terms)

    def __len__(self):
        return len(self.terms)

    def __eq__(self, other):
        if not isinstance(other, SPoly):
            return NotImplemented
        return self.terms == other.terms

    __hash__ = None

    def __iter__(self):
        return iter(self.terms.items())

    def add_term(self, key: Key, c) -> None:
        v = self.terms.get(key, 0) + c
        if is_zero(v):
            self.terms.pop(key, None)
        else:
            self.terms[key] = v

    def __add__(self, other: "SPoly") -> "SPoly":
        out = SPoly(dict(self.terms))
        for k, v in other.terms.items():
            out.add_term(k, v)
        return out

    def __sub__(self, other: "SPoly") -> "SPoly":
        return self + other.scale(-1)

    def __neg__(self):
        return self.scale(-1)

    def scale(self, c) -> "SPoly":
        if is_zero(c):
            return SPoly()
        return SPoly({k: v * c for k, v in self.terms.items()})

    def __mul__(self, other: "SPoly") -> "SPoly":
        out: Dict[Key, object] = defaultdict(int)
        for (w1, h1, p1), c1 in self.terms.items():
            for (w2, h2, p2), c2 in other.terms.items():
                sign, w = sort_word(w1 + w2)
                if sign == 0:
                    continue
                out[(w, h1 + h2, merge_props(p1, p2))] += sign * c1 * c2
        return SPoly(out)

    def map_terms(self, fn: Callable[[Key, object], Iterable[Tuple[Key, object]]]) -> "SPoly":
        out: Dict[Key, object] = defaultdict(int)
        for k, c in self.terms.items():
            for k2, c2 in fn(k, c):
                out[k2] += c2
        return SPoly(out)

    def filter(self, pred: Callable[[Key], bool]) -> "SPoly":
        return SPoly({k: v for k, v in self.terms.items() if pred(k)})

    def relabel(self, fn: Callable[[Symbol], Symbol]) -> "SPoly":
        """Apply ``fn`` to every symbol of every word and re-sort."""
        def step(key, c):
            w, h, p = key
            sign, w2 = sort_word(fn(s) for s in w)
            if sign:
                yield (w2, h, p), sign * c
        return self.map_terms(step)

    def deriv(self, sym: Symbol) -> "SPoly":
        """Left derivative with respect to ``sym``."""
        def step(key, c):
            r = dword(key[0], sym)
            if r is not None:
                f, w2 = r
                yield (w2, key[1], key[2]), f * c
        return self.map_terms(step)

    def max_abs(self) -> float:
        return max((abs(complex(v)) for v in self.terms.values()), default=0.0)

    def is_close(self, other: "SPoly", tol: float = 0.0) -> bool:
        return (self - other).max_abs() <= tol

    def __repr__(self):
        return f"SPoly({len(self.terms)} terms)"


def dword(word: tuple, sym: Symbol):
    """Left derivative of a canonical word: ``(factor, word')`` or None."""
    try:
        idx = word.index(sym)
    except ValueError:
        return None
    if sym[5]:
        npar = 0
        for x in word[:idx]:
            npar += x[5]
        return (-1 if npar & 1 else 1), word[:idx] + word[idx + 1:]
    m = 1
    while idx + m < len(word) and word[idx + m] == sym:
        m += 1
    return m, word[:idx] + word[idx + 1:]


def exp_nilpotent(op: Callable[[SPoly], SPoly], x: SPoly, max_steps: int = 64) -> SPoly:
    """``exp(op) x`` for an operator that is nilpotent on ``x``."""
    total = x.copy()
    term = x
    for n in range(1, max_steps + 1):
        term = op(term)
        if not term:
            return total
        term = term.scale(Fraction(1, n))
        total = total + term
    raise RuntimeError("operator exponential did not terminate")


def taylor_weights(n: int):
    return [Fraction(1, factorial(r)) for r in range(n + 1)]
