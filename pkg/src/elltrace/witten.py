"""Lie-algebra cochain traces for formal vector fields.

Vector fields ``f(y) d/dy_l`` (plus one-form classes ``[g dy_m]``) are lifted to
the rank-N betagamma system, traced, and compared with the Atiyah-class data
(Chern characters, the Witten-genus log, the theta cochain).  Forms on the
formal disk are BV elements in the gamma variables: ``gamma_i -> y_i`` and
``gamma_i! -> dy_i``.
"""
from __future__ import annotations

import itertools
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .bv import bv_delta, delta_kappa
from .chains import Chain, make_term, trace_poly
from .elliptic import EllipticContext
from .fock import FockElement, SymplecticSpace, betagamma, derivation_action, var
from .regint import prop, reg_integrate, volume
from .superpoly import SPoly

DEFAULT_CAP = 3
MAX_POINTS = 6

Exps = Tuple[int, ...]


class WittenError(ValueError):
    pass


class FieldCapError(WittenError):
    pass


class GrammarError(WittenError):
    def __init__(self, msg, pos=None):
        super().__init__(msg if pos is None else f"{msg} (at {pos})")
        self.pos = pos


class NilpotenceError(WittenError):
    pass


class DiagramError(WittenError):
    pass


# ------------------------------------------------------------------ polynomials in y

def _add(d: Dict, k, c):
    v = d.get(k, 0) + c
    if v == 0:
        d.pop(k, None)
    else:
        d[k] = v


def _dpoly(poly: Dict[Exps, complex], i: int) -> Dict[Exps, complex]:
    out: Dict[Exps, complex] = {}
    for e, c in poly.items():
        if e[i]:
            e2 = list(e)
            e2[i] -= 1
            _add(out, tuple(e2), c * e[i])
    return out


def _pmul(a: Dict[Exps, complex], b: Dict[Exps, complex]) -> Dict[Exps, complex]:
    out: Dict[Exps, complex] = {}
    for e1, c1 in a.items():
        for e2, c2 in b.items():
            _add(out, tuple(x + y for x, y in zip(e1, e2)), c1 * c2)
    return out


def _deg(poly) -> int:
    return max((sum(e) for e in poly), default=0)


# ------------------------------------------------------------------ vector fields

@dataclass
class FormalVectorField:
    """``sum_l f^l(y) d/dy_l + [sum_m g_m(y) dy_m]``.

    ``vec[l]`` and ``form[m]`` are polynomials ``{exponents: coeff}``.
    """
    N: int
    vec: Dict[int, Dict[Exps, complex]] = field(default_factory=dict)
    form: Dict[int, Dict[Exps, complex]] = field(default_factory=dict)
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        self.vec = {l: dict(p) for l, p in self.vec.items() if p}
        self.form = {m: dict(p) for m, p in self.form.items() if p}
        for part in (self.vec, self.form):
            for l, p in part.items():
                if not 0 <= l < self.N:
                    raise WittenError(f"index {l + 1} outside 1..{self.N}")
                for e in p:
                    if len(e) != self.N:
                        raise WittenError("exponent vector has the wrong length")
        if self.degree() > self.cap:
            raise FieldCapError(f"polynomial degree {self.degree()} exceeds cap {self.cap}")

    @classmethod
    def term(cls, N, coeff, exps, direction=None, oneform=None, cap=DEFAULT_CAP):
        """One monomial ``coeff * y^exps d/dy_direction`` (or ``[.. dy_oneform]``), 1-based."""
        e = tuple(exps)
        if direction is not None:
            return cls(N, {direction - 1: {e: coeff}}, cap=cap)
        return cls(N, form={oneform - 1: {e: coeff}}, cap=cap)

    def degree(self) -> int:
        return max([_deg(p) for p in self.vec.values()] + [_deg(p) for p in self.form.values()]
                   + [0])

    def vector_part(self) -> "FormalVectorField":
        return FormalVectorField(self.N, self.vec, cap=self.cap)

    def is_linear(self) -> bool:
        return all(sum(e) <= 1 for p in self.vec.values() for e in p)

    def __add__(self, other):
        vec = {l: dict(p) for l, p in self.vec.items()}
        form = {m: dict(p) for m, p in self.form.items()}
        for src, dst in ((other.vec, vec), (other.form, form)):
            for l, p in src.items():
                q = dst.setdefault(l, {})
                for e, c in p.items():
                    _add(q, e, c)
        return FormalVectorField(self.N, vec, form, max(self.cap, other.cap))

    def scale(self, c):
        return FormalVectorField(self.N, {l: {e: c * x for e, x in p.items()} for l, p in self.vec.items()},
                                 {m: {e: c * x for e, x in p.items()} for m, p in self.form.items()},
                                 self.cap)

    def __neg__(self):
        return self.scale(-1)

    def __sub__(self, other):
        return self + (-other)

    def apply(self, poly: Dict[Exps, complex]) -> Dict[Exps, complex]:
        """The derivation ``sum_l f^l d_l`` on a polynomial."""
        out: Dict[Exps, complex] = {}
        for l, f in self.vec.items():
            for e, c in _pmul(f, _dpoly(poly, l)).items():
                _add(out, e, c)
        return out

    def __repr__(self):
        return format_field(self)


def _oneform_lie(X: FormalVectorField, form: Dict[int, Dict]) -> Dict[int, Dict]:
    """Lie derivative ``L_X (sum g_m dy_m) = sum X(g_m) dy_m + g_m d(X^m)``."""
    out: Dict[int, Dict] = defaultdict(dict)
    for m, g in form.items():
        for e, c in X.apply(g).items():
            _add(out[m], e, c)
        fm = X.vec.get(m, {})
        for k in range(X.N):
            for e, c in _pmul(g, _dpoly(fm, k)).items():
                _add(out[k], e, c)
    return {k: v for k, v in out.items() if v}


def cocycle(X: FormalVectorField, Y: FormalVectorField) -> Dict[int, Dict]:
    """``c(f d_i, g d_j) = d(df/dy_j) * dg/dy_i``, bilinearly extended."""
    out: Dict[int, Dict] = defaultdict(dict)
    for i, f in X.vec.items():
        for j, g in Y.vec.items():
            a = _dpoly(f, j)
            b = _dpoly(g, i)
            for k in range(X.N):
                for e, c in _pmul(_dpoly(a, k), b).items():
                    _add(out[k], e, c)
    return {k: v for k, v in out.items() if v}


# rho(X)_(0) rho(Y) - rho([X, Y]) comes out as -c(X, Y) mod exact forms, so the
# extension uses -c to keep rho a Lie map
COCYCLE_SIGN = -1


def bracket(X: FormalVectorField, Y: FormalVectorField, extended=True) -> FormalVectorField:
    """Bracket in the extension: vector-field commutator, Lie action on forms, cocycle."""
    if X.N != Y.N:
        raise WittenError("fields live in different dimensions")
    dx, dy = X.degree(), Y.degree()
    if X.vec and Y.vec and dx + dy - 1 > max(X.cap, Y.cap):
        raise FieldCapError(f"bracket degree {dx + dy - 1} exceeds cap {max(X.cap, Y.cap)}")
    vec: Dict[int, Dict] = defaultdict(dict)
    for j in range(X.N):
        for e, c in X.apply(Y.vec.get(j, {})).items():
            _add(vec[j], e, c)
        for e, c in Y.apply(X.vec.get(j, {})).items():
            _add(vec[j], e, -c)
    form: Dict[int, Dict] = defaultdict(dict)
    if extended:
        for src, sgn in ((_oneform_lie(X, Y.form), 1), (_oneform_lie(Y, X.form), -1),
                         (cocycle(X, Y), COCYCLE_SIGN)):
            for m, p in src.items():
                for e, c in p.items():
                    _add(form[m], e, sgn * c)
    return FormalVectorField(X.N, dict(vec), dict(form), max(X.cap, Y.cap))


def is_exact_oneform(form: Dict[int, Dict], N: int, tol=1e-12) -> bool:
    """Formal one-forms are exact iff closed."""
    for i in range(N):
        for j in range(i + 1, N):
            a = _dpoly(form.get(j, {}), i)
            b = _dpoly(form.get(i, {}), j)
            for e in set(a) | set(b):
                if abs(a.get(e, 0) - b.get(e, 0)) > tol:
                    return False
    return True


# ------------------------------------------------------------------ grammar

_TOK = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>\(\s*[-+]?[0-9.eE+-]+\s*[-+]\s*[0-9.eE]*j\s*\)|[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?j?)
  | (?P<dd>d/dy_?(?P<ddi>[0-9]+))
  | (?P<dy>dy_?(?P<dyi>[0-9]+))
  | (?P<y>y_?(?P<yi>[0-9]+))
  | (?P<op>[-+*^\[\]])
""", re.VERBOSE)


def _tokens(text):
    pos, out = 0, []
    while pos < len(text):
        m = _TOK.match(text, pos)
        if not m:
            raise GrammarError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind in ("ddi", "dyi", "yi"):
            kind = {"ddi": "dd", "dyi": "dy", "yi": "y"}[kind]
        if kind == "ws":
            pos = m.end()
            continue
        if m.group("dd"):
            out.append(("dd", int(m.group("ddi")), pos))
        elif m.group("dy"):
            out.append(("dy", int(m.group("dyi")), pos))
        elif m.group("y"):
            out.append(("y", int(m.group("yi")), pos))
        elif m.group("num"):
            s = m.group("num").replace(" ", "")
            out.append(("num", complex(s) if "j" in s else float(s), pos))
        else:
            out.append(("op", m.group("op"), pos))
        pos = m.end()
    out.append(("end", None, pos))
    return out


def parse_field(text: str, N: int, cap: int = DEFAULT_CAP) -> FormalVectorField:
    """Parse ``c * y1^a y2^b d/dy_j + ... + [c * y1 dy_m]``."""
    toks = _tokens(text)
    i = 0
    out = FormalVectorField(N, cap=cap)

    def peek():
        return toks[i]

    def monomial():
        # [sign] [coeff] [*] y-factors
        nonlocal i
        c = 1
        e = [0] * N
        seen = False
        while True:
            kind, val, pos = peek()
            if kind == "num":
                c *= val
                i += 1
                seen = True
            elif kind == "y":
                if not 1 <= val <= N:
                    raise GrammarError(f"variable y{val} outside 1..{N}", pos)
                i += 1
                p = 1
                if peek()[:2] == ("op", "^"):
                    i += 1
                    k2, v2, p2 = peek()
                    if k2 != "num" or not float(v2.real if isinstance(v2, complex) else v2).is_integer():
                        raise GrammarError("exponent must be an integer", p2)
                    p = int(v2.real if isinstance(v2, complex) else v2)
                    i += 1
                e[val - 1] += p
                seen = True
            elif kind == "op" and val == "*":
                if not seen:
                    raise GrammarError("'*' needs a factor on its left", pos)
                i += 1
                if peek()[:2] == ("op", "*"):
                    raise GrammarError("repeated '*'", peek()[2])
            else:
                break
        return c, tuple(e), seen

    sign = 1
    expect_term = True
    while True:
        kind, val, pos = peek()
        if kind == "end":
            if expect_term:
                raise GrammarError("expected a term", pos)
            break
        if kind == "op" and val in "+-":
            sign = sign * (-1 if val == "-" else 1)
            i += 1
            expect_term = True
            continue
        if not expect_term:
            raise GrammarError("expected + or -", pos)
        if kind == "op" and val == "[":
            i += 1
            inner_sign = 1
            while True:
                k2, v2, p2 = peek()
                if k2 == "op" and v2 in "+-":
                    inner_sign *= -1 if v2 == "-" else 1
                    i += 1
                    continue
                c, e, _ = monomial()
                k3, v3, p3 = peek()
                if k3 != "dy":
                    raise GrammarError("expected dy_m inside brackets", p3)
                if not 1 <= v3 <= N:
                    raise GrammarError(f"dy{v3} outside 1..{N}", p3)
                i += 1
                out = out + FormalVectorField.term(N, sign * inner_sign * c, e, oneform=v3, cap=cap)
                inner_sign = 1
                k4, v4, p4 = peek()
                if k4 == "op" and v4 == "]":
                    i += 1
                    break
                if not (k4 == "op" and v4 in "+-"):
                    raise GrammarError("expected ] or +/-", p4)
        else:
            c, e, _ = monomial()
            k3, v3, p3 = peek()
            if k3 != "dd":
                raise GrammarError("expected d/dy_j", p3)
            if not 1 <= v3 <= N:
                raise GrammarError(f"d/dy{v3} outside 1..{N}", p3)
            i += 1
            out = out + FormalVectorField.term(N, sign * c, e, direction=v3, cap=cap)
        sign = 1
        expect_term = False
    return out


def field_from_json(items: Sequence[dict], N: int, cap: int = DEFAULT_CAP) -> FormalVectorField:
    """List form: ``{"coeff": c or [re, im], "exps": [...], "dir": j}`` or ``"form": m``."""
    out = FormalVectorField(N, cap=cap)
    for k, it in enumerate(items):
        c = it.get("coeff", 1)
        if isinstance(c, (list, tuple)):
            c = complex(c[0], c[1])
        exps = it.get("exps")
        if exps is None or len(exps) != N:
            raise GrammarError(f"item {k}: exps must have length {N}")
        if ("dir" in it) == ("form" in it):
            raise GrammarError(f"item {k}: give exactly one of dir / form")
        if "dir" in it:
            out = out + FormalVectorField.term(N, c, exps, direction=int(it["dir"]), cap=cap)
        else:
            out = out + FormalVectorField.term(N, c, exps, oneform=int(it["form"]), cap=cap)
    return out


def _fmt_c(c):
    if isinstance(c, complex):
        if c.imag == 0:
            c = c.real
        else:
            return f"({c.real:g}{c.imag:+g}j)"
    return f"{c:g}" if isinstance(c, float) else str(c)


def _fmt_mono(e):
    return " ".join(f"y{i + 1}" + (f"^{p}" if p > 1 else "") for i, p in enumerate(e) if p)


def format_field(X: FormalVectorField) -> str:
    parts = []
    for l in sorted(X.vec):
        for e, c in sorted(X.vec[l].items()):
            m = _fmt_mono(e)
            parts.append(f"{_fmt_c(c)} * {m + ' ' if m else ''}d/dy_{l + 1}")
    for m_ in sorted(X.form):
        for e, c in sorted(X.form[m_].items()):
            m = _fmt_mono(e)
            parts.append(f"[{_fmt_c(c)} * {m + ' ' if m else ''}dy_{m_ + 1}]")
    return " + ".join(parts) if parts else "0"


# ------------------------------------------------------------------ lifts to betagamma

def field_space(N: int, K: int = 8) -> SymplecticSpace:
    return betagamma(N, K=K)


def _beta(space, l, dag=0, point=0):
    return var(space, 2 * l, 0, dag, point)


def _gamma(space, l, dag=0, point=0, k=0):
    return var(space, 2 * l + 1, k, dag, point)


def gamma_poly(space, poly: Dict[Exps, complex], point=0) -> SPoly:
    out = SPoly()
    for e, c in poly.items():
        w = []
        for i, p in enumerate(e):
            w += [_gamma(space, i, point=point)] * p
        out = out + SPoly.monomial(tuple(w), c=c)
    return out


def lift_rho(X: FormalVectorField, space: Optional[SymplecticSpace] = None, window=(-4, 4)) -> FockElement:
    """``(pi / i hbar) f(gamma) beta^l`` plus ``g(gamma) d gamma^m`` for the one-form part."""
    space = space or field_space(X.N)
    if space.dim != 2 * X.N:
        raise WittenError("space does not match the number of variables")
    out = SPoly()
    pref = math.pi / 1j
    for l, f in X.vec.items():
        out = out + (gamma_poly(space, f) * SPoly.monomial((_beta(space, l),))).scale(pref)
    out = SPoly({(w, h - 1, p): c for (w, h, p), c in out.terms.items()})
    for m, g in X.form.items():
        out = out + gamma_poly(space, g) * SPoly.monomial((_gamma(space, m, k=1),))
    return FockElement(space, out, window)


def rho_anomaly(X: FormalVectorField, Y: FormalVectorField, space=None):
    """``rho(X)_(0) rho(Y) - rho([X, Y]_W)``: the hbar^0 remainder as a one-form.

    Returns ``{m: g_m}`` read off from ``sum g_m(gamma) d gamma^m``; anything else
    raises.
    """
    space = space or field_space(X.N)
    a = derivation_action(lift_rho(X.vector_part(), space), lift_rho(Y.vector_part(), space))
    diff = a - lift_rho(bracket(X.vector_part(), Y.vector_part(), extended=False), space)
    return _read_oneform(diff, X.N)


def rho_bracket_defect(X: FormalVectorField, Y: FormalVectorField, space=None):
    """``rho(X)_(0) rho(Y) - rho([X, Y])`` as a one-form; exact when rho is a Lie map."""
    space = space or field_space(X.N)
    diff = derivation_action(lift_rho(X, space), lift_rho(Y, space)) - lift_rho(bracket(X, Y), space)
    return _read_oneform(diff, X.N)


def _read_oneform(diff: FockElement, N: int):
    form: Dict[int, Dict] = defaultdict(dict)
    for (w, h, props), c in diff.poly.terms.items():
        if abs(c) < 1e-12:
            continue
        dg = [s for s in w if s[3] == 1]
        if h != 0 or len(dg) != 1 or any(s[3] > 1 or s[4] or s[2] % 2 == 0 for s in w):
            raise WittenError("remainder is not of the form g(gamma) d gamma")
        m = dg[0][2] // 2
        e = [0] * N
        for s in w:
            if s[3] == 0:
                e[s[2] // 2] += 1
        _add(form[m], tuple(e), c)
    return {k: v for k, v in form.items() if v}


# ------------------------------------------------------------------ cochain traces

def constant_section(xis: Sequence[FormalVectorField], space, first_point: int) -> SPoly:
    """``rho(xi_1) dz_1 [1] (x) ... (x) rho(xi_m) dz_m [1]`` at consecutive points."""
    ins = [(first_point + j, lift_rho(x, space), True, False) for j, x in enumerate(xis)]
    return make_term(space, ins)


def trace_lie(a: Optional[Chain], xis: Sequence[FormalVectorField], ctx: EllipticContext,
              normalized=False, convention=None, space=None) -> FockElement:
    """``Tr(a (x) xi)`` with ``xi`` the constant section of lifted insertions.

    ``a = None`` means the unit chain.  The insertions are odd (each carries a
    dz), so the value is antisymmetric in ``xis`` without further averaging.
    ``normalized`` multiplies by ``pi / Im tau`` per insertion: D puts the dzbar
    in front of the dz, so this is the unit-chain normalization up to that swap.
    """
    from .chains import unit_chain
    if not xis and a is None:
        space = space or field_space(1)
    N = xis[0].N if xis else None
    space = space or (a.space if a is not None else field_space(N))
    if a is None:
        a = unit_chain(space, ctx)
    npts = max(a.points(), default=0)
    if npts + len(xis) > MAX_POINTS:
        raise WittenError(f"more than {MAX_POINTS} points")
    poly = a.poly * constant_section(xis, space, npts + 1)
    out = trace_poly(poly, space, ctx, convention)
    if normalized:
        out = out.scale((math.pi / ctx.imtau) ** len(xis))
    return FockElement(space, out, a.window)


def hbar_part(x: FockElement, h: int) -> SPoly:
    return SPoly({(w, 0, p): c for (w, hh, p), c in x.poly.terms.items() if hh == h})


# ------------------------------------------------------------------ forms as BV elements

def dy(space, i) -> SPoly:
    return SPoly.monomial((_gamma(space, i, dag=1),))


def d_poly(space, poly: Dict[Exps, complex]) -> SPoly:
    """de Rham differential of a polynomial, as a one-form in gamma, gamma!."""
    out = SPoly()
    for k in range(len(next(iter(poly))) if poly else 0):
        out = out + gamma_poly(space, _dpoly(poly, k)) * dy(space, k)
    return out


def is_form(x: SPoly) -> bool:
    """No beta, no beta!, no derivatives, no coefficient symbols."""
    return all(not p and all(s[0] == 1 and s[2] % 2 == 1 and s[3] == 0 for s in w)
               for (w, h, p) in x.terms)


def lie_derivative(X: FormalVectorField, x: SPoly, space) -> SPoly:
    """Even derivation with ``y_l -> f^l`` and ``dy_l -> d f^l``."""
    from .superpoly import dword
    out = SPoly()
    for l, f in X.vec.items():
        for dag, rep in ((0, gamma_poly(space, f)), (1, d_poly(space, f))):
            v = _gamma(space, l, dag=dag)
            for (w, h, p), c in x.terms.items():
                r = dword(w, v)
                if r is None:
                    continue
                fac, w2 = r
                out = out + rep * SPoly({(w2, h, p): fac * c})
    return out


def atiyah(X: FormalVectorField, space=None) -> List[List[SPoly]]:
    """``At(X)[i][k] = d(d_k f^i)``: an N x N matrix of one-forms."""
    space = space or field_space(X.N)
    N = X.N
    return [[d_poly(space, _dpoly(X.vec[i], k)) if i in X.vec else SPoly() for k in range(N)]
            for i in range(N)]


def _matmul(A, B):
    n = len(A)
    return [[sum((A[i][k] * B[k][j] for k in range(n)), SPoly()) for j in range(n)]
            for i in range(n)]


def _trace(A):
    return sum((A[i][i] for i in range(len(A))), SPoly())


def _perm_sign(p):
    s = 1
    p = list(p)
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            s = -s
    return s


def tr_at_power(xis: Sequence[FormalVectorField], space=None) -> SPoly:
    """Cup power ``tr(At^k)(xi_1..xi_k) = sum_sigma sgn(sigma) tr(At(xi_s1) ... At(xi_sk))``."""
    if not xis:
        return SPoly.one()
    space = space or field_space(xis[0].N)
    ats = [atiyah(x, space) for x in xis]
    out = SPoly()
    for perm in itertools.permutations(range(len(xis))):
        M = ats[perm[0]]
        for j in perm[1:]:
            M = _matmul(M, ats[j])
        out = out + _trace(M).scale(_perm_sign(perm))
    return out


def chern_char(k: int, xis: Sequence[FormalVectorField], space=None) -> SPoly:
    if len(xis) != k:
        raise WittenError("ch_k takes k arguments")
    return tr_at_power(xis, space).scale(1 / ((-2j * math.pi) ** k * math.factorial(k)))


def witten_log_coeff(k: int) -> complex:
    """Coefficient of ``E_2k ch_2k`` in the Witten-genus log."""
    return math.factorial(2 * k - 1) / (2j * math.pi) ** (2 * k)


def witten_log(xis: Sequence[FormalVectorField], ctx: EllipticContext, max_k: int = 2,
               space=None) -> SPoly:
    """``sum_{k>=2} (2k-1)!/(2 pi i)^2k E_2k ch_2k`` evaluated on ``xis`` (k <= max_k)."""
    n = len(xis)
    if n % 2 or n < 4 or n // 2 > max_k:
        return SPoly()
    k = n // 2
    return chern_char(n, xis, space).scale(witten_log_coeff(k) * ctx.eisenstein(2 * k))


def one_loop_prediction(xis, ctx: EllipticContext, space=None) -> SPoly:
    """The reference arity-2 one-loop term ``(1/32 pi^4) E2hat tr(At^2)``."""
    return tr_at_power(xis, space).scale(ctx.e2hat() / (32 * math.pi ** 4))


def theta_cochain(X: FormalVectorField, space=None) -> SPoly:
    """``sum_k (df^l/dgamma_k) gamma_k! beta^l + f^l beta^l!``; one-form parts drop out."""
    space = space or field_space(X.N)
    out = SPoly()
    for l, f in X.vec.items():
        out = out + d_poly(space, f) * SPoly.monomial((_beta(space, l),))
        out = out + gamma_poly(space, f) * SPoly.monomial((_beta(space, l, dag=1),))
    return out


# ------------------------------------------------------------------ wheels

def cycle_integral(n: int, ctx: EllipticContext) -> complex:
    """``int P(z1-z2) P(z2-z3) ... P(zn-z1)`` over X^n, unit-area measure, via regint."""
    if n < 1:
        raise WittenError("cycle needs a vertex")
    if n == 1:
        return complex(ctx._q(0, 0))
    f = volume(range(1, n + 1))
    for i in range(1, n + 1):
        f = f * prop(0, i, i % n + 1)
    raw = reg_integrate(f, ctx)[0]
    return complex(raw * (-math.pi / ctx.imtau) ** n)


def wheel_weight(n: int, xis: Sequence[FormalVectorField], ctx: EllipticContext,
                 space=None) -> SPoly:
    """Sum over n-cycles of the wheel graph on the n insertions (normalized trace).

    Vertex k's beta^{l} feeds the gamma^{l} of the next vertex on the cycle; each
    vertex keeps ``d(d_l f_k)``, so a cycle pi gives
    ``(pi/i)^n I_n prod_k At(xi_k)[i_k][i_{pi^-1 k}]`` with I_n the cyclic
    propagator integral.
    """
    if len(xis) != n:
        raise WittenError("wheel_weight needs n fields")
    space = space or field_space(xis[0].N)
    N = xis[0].N
    if n > 4:
        raise WittenError("wheels are evaluated for n <= 4")
    In = cycle_integral(n, ctx)
    ats = [atiyah(x, space) for x in xis]
    total = SPoly()
    for rest in itertools.permutations(range(1, n)):
        order = (0,) + rest
        pinv = {order[(t + 1) % n]: order[t] for t in range(n)}
        for idx in itertools.product(range(N), repeat=n):
            term = SPoly.one()
            for k in range(n):
                term = term * ats[k][idx[k]][idx[pinv[k]]]
                if not term:
                    break
            total = total + term
    return total.scale((math.pi / 1j) ** n * In)


def wheel_coefficient(n: int, ctx: EllipticContext) -> complex:
    """``(pi/i)^n I_n``; equals the lattice sum ``sum' lambda^-n`` for even n."""
    return (math.pi / 1j) ** n * cycle_integral(n, ctx)


# ------------------------------------------------------------------ diagrams

@dataclass
class Diagram:
    """Contraction graph.

    ``kinds[v]`` is 'tree' (f beta vertex) or 'loop' (g d gamma vertex).  An
    edge ``(u, v, leg)`` is a propagator from the beta of u to a gamma of v;
    ``leg='dgamma'`` means it lands on the d gamma of a loop vertex.
    """
    kinds: List[str]
    edges: List[Tuple[int, int, str]] = field(default_factory=list)


TAGS = ("I", "II", "III", "IV", "V", "wheel", "tree-vertex")


def _validate(g: Diagram):
    n = len(g.kinds)
    if n == 0:
        raise DiagramError("empty graph")
    for k in g.kinds:
        if k not in ("tree", "loop"):
            raise DiagramError(f"unknown vertex kind {k!r}")
    out_deg = [0] * n
    dg_in = [0] * n
    for (u, v, leg) in g.edges:
        if not (0 <= u < n and 0 <= v < n):
            raise DiagramError("edge endpoint out of range")
        if g.kinds[u] != "tree":
            raise DiagramError("only tree vertices carry a beta leg")
        if leg not in ("gamma", "dgamma"):
            raise DiagramError(f"unknown leg {leg!r}")
        if leg == "dgamma":
            if g.kinds[v] != "loop":
                raise DiagramError("d gamma legs belong to loop vertices")
            dg_in[v] += 1
        out_deg[u] += 1
    if any(d > 1 for d in out_deg) or any(d > 1 for d in dg_in):
        raise DiagramError("a leg is contracted twice")
    # connectivity
    adj = defaultdict(set)
    for (u, v, _) in g.edges:
        adj[u].add(v)
        adj[v].add(u)
    seen, todo = {0}, [0]
    while todo:
        x = todo.pop()
        for y in adj[x] - seen:
            seen.add(y)
            todo.append(y)
    if len(seen) != n:
        raise DiagramError("graph is not connected")
    return out_deg, dg_in


def classify_diagram(g: Diagram) -> str:
    out_deg, dg_in = _validate(g)
    n = len(g.kinds)
    deg = [0] * n
    for (u, v, _) in g.edges:
        deg[u] += 1
        deg[v] += 1
    loops = [v for v in range(n) if g.kinds[v] == "loop"]
    if loops:
        for v in loops:
            if not dg_in[v]:
                return "III"
        for v in loops:
            if deg[v] == 1:
                return "I"
        return "II"
    if n == 1 and not g.edges:
        return "tree-vertex"
    if len(g.edges) == n and all(d == 2 for d in deg):
        return "wheel"
    if len(g.edges) >= n:
        return "IV"
    return "V"


def diagram_weight(g: Diagram, ctx: EllipticContext) -> complex:
    """Regularized integral of the propagator product over all vertices (unit-area measure).

    Type III is zero by projection (a free d gamma dies in the BV algebra).
    """
    tag = classify_diagram(g)
    if tag == "III":
        return 0j
    if tag == "tree-vertex":
        return 1 + 0j
    n = len(g.kinds)
    f = volume(range(1, n + 1))
    for (u, v, leg) in g.edges:
        if u == v:
            return complex(ctx._q(0, 0))
        if leg == "dgamma":
            # d_{z_v} P(z_u - z_v) = -P'(z_u - z_v)
            f = f * prop(1, u + 1, v + 1, -1)
        else:
            f = f * prop(0, u + 1, v + 1)
    raw = reg_integrate(f, ctx)[0]
    return complex(raw * (-math.pi / ctx.imtau) ** n)


# ------------------------------------------------------------------ Lie-cochain structure

class LieCochain:
    """An m-linear map from fields to BV elements."""

    def __init__(self, arity: int, fn: Callable[[Sequence[FormalVectorField]], SPoly]):
        self.arity = arity
        self.fn = fn

    def __call__(self, *xis):
        if len(xis) != self.arity:
            raise WittenError(f"cochain of arity {self.arity} got {len(xis)} arguments")
        return self.fn(list(xis))

    def antisymmetry_residual(self, xis) -> float:
        base = self(*xis)
        worst = 0.0
        for i in range(len(xis) - 1):
            sw = list(xis)
            sw[i], sw[i + 1] = sw[i + 1], sw[i]
            worst = max(worst, (base + self(*sw)).max_abs())
        return worst


def trace_cochain(k: int, ctx: EllipticContext, h: int = 0, normalized=False) -> LieCochain:
    """``xi -> Tr_(k),h {xi}``: the hbar^h part of the Lie trace on the unit chain."""
    return LieCochain(k, lambda xs: hbar_part(trace_lie(None, xs, ctx, normalized), h))


def lie_differential_terms(T: LieCochain, xis: Sequence[FormalVectorField], space,
                           extended=True) -> Tuple[SPoly, SPoly]:
    """Bracket part ``sum_{i<j} (-1)^{i+j} T([xi_i, xi_j], ...)`` and action part
    ``sum_j (-1)^{j+1} L_{xi_j} T(..hat j..)`` of the Chevalley-Eilenberg differential."""
    n = len(xis)
    br = SPoly()
    for i in range(n):
        for j in range(i + 1, n):
            rest = [x for t, x in enumerate(xis) if t not in (i, j)]
            br = br + T(bracket(xis[i], xis[j], extended), *rest).scale((-1) ** (i + j))
    act = SPoly()
    for j in range(n):
        rest = [x for t, x in enumerate(xis) if t != j]
        act = act + lie_derivative(xis[j], T(*rest), space).scale((-1) ** j)
    return br, act


def cocycle_residual(k: int, xis, ctx: EllipticContext, space=None) -> float:
    """``|d_CE Tr_(k),0|`` on k+1 fields, Omega-valued with the Lie-derivative action."""
    space = space or field_space(xis[0].N)
    T = trace_cochain(k, ctx, 0)
    br, act = lie_differential_terms(T, xis, space)
    return (br + act).max_abs()


def lie_qme_residual(k: int, xis, ctx: EllipticContext, space=None) -> float:
    """``|hbar Delta Tr_(k+1) + d_Lie Tr_(k)|`` (bracket part only: the coefficients are scalars)."""
    space = space or field_space(xis[0].N)
    big = trace_lie(None, xis, ctx)
    kap = delta_kappa(ctx.imtau)
    dl = bv_delta(big.poly, space, kap)
    dl = SPoly({(w, h + 1, p): c for (w, h, p), c in dl.terms.items()})
    T = LieCochain(k, lambda xs: trace_lie(None, xs, ctx).poly)
    br, _ = lie_differential_terms(T, xis, space, extended=True)
    return (dl + br).max_abs()


# ------------------------------------------------------------------ Maurer-Cartan check

def check_nilpotent(S: FockElement, tol=1e-12):
    """``(S_(0))^2 = 0`` on every generator."""
    for s in range(S.space.dim):
        g = FockElement.gen(S.space, s, window=S.window)
        r = derivation_action(S, derivation_action(S, g))
        if r.poly.max_abs() > tol:
            raise NilpotenceError(f"(S_(0))^2 does not vanish on {S.space.generators[s].name}")


def mc_chain(S: FockElement, arity: int, ctx: EllipticContext) -> SPoly:
    """``1 (x) (S/hbar) dz (x) ... (x) (S/hbar) dz / k!`` for one arity k."""
    from .chains import unit_chain
    space = S.space
    out = unit_chain(space, ctx).poly
    Sh = SPoly({(w, h - 1, p): c for (w, h, p), c in S.poly.terms.items()})
    for j in range(arity):
        out = out * make_term(space, [(2 + j, FockElement(space, Sh, S.window), True, False)])
    return out.scale(1 / math.factorial(arity))


def mc_qme_check(S: FockElement, truncation: int, ctx: EllipticContext, check=True):
    """``hbar Delta Tr(1 e^{S/hbar})`` truncated at the given arity; returns per-hbar max norms."""
    if check:
        check_nilpotent(S)
    space = S.space
    if truncation + 1 > MAX_POINTS:
        raise WittenError(f"more than {MAX_POINTS} points")
    total = SPoly()
    for k in range(truncation + 1):
        total = total + trace_poly(mc_chain(S, k, ctx), space, ctx)
    d = bv_delta(total, space, delta_kappa(ctx.imtau))
    res: Dict[int, float] = {}
    for (w, h, p), c in d.terms.items():
        res[h + 1] = max(res.get(h + 1, 0.0), abs(c))
    return res
