"""Theta function, propagator, diagonal Taylor data and Eisenstein series.

Conventions: ``theta1(z) = 2 sum_{n>=0} (-1)^n e^{pi i tau (n+1/2)^2} sin((2n+1) pi z)``
and ``P(z, w) = (i/pi) d_z log theta1(z - w) - 2 Im(z - w) / Im tau``.
"""
from __future__ import annotations

import cmath
import math
import threading
from dataclasses import dataclass
from math import comb, factorial
from typing import Dict, List

import numpy as np
from scipy.special import zeta

MIN_IMTAU = 0.2


class EllipticError(ValueError):
    pass


class ConditioningError(EllipticError):
    pass


class SingularityError(EllipticError):
    pass


class CapError(EllipticError):
    pass


@dataclass(frozen=True)
class LaurentJet:
    """Laurent data of ``d^a P`` at the diagonal, ``c[j]`` for j from -pole to order."""
    pole: int
    coeffs: tuple

    def __getitem__(self, j):
        i = j + self.pole
        if i < 0 or i >= len(self.coeffs):
            return 0j if i < 0 else self._missing(j)
        return self.coeffs[i]

    def _missing(self, j):
        raise IndexError(f"jet coefficient {j} not stored")

    @property
    def order(self):
        return len(self.coeffs) - 1 - self.pole


def richardson(values: List[complex], ratio: float = 2.0) -> complex:
    """Polynomial extrapolation in h -> 0 for samples at h, h/ratio, h/ratio^2, ..."""
    table = [complex(v) for v in values]
    for j in range(1, len(values)):
        f = ratio ** j
        table = [(f * table[i + 1] - table[i]) / (f - 1) for i in range(len(table) - 1)]
    return table[0]


class EllipticContext:
    """Everything that depends on the modulus tau.

    The theta nodes and the diagonal Laurent table are built eagerly; Eisenstein
    values are cached lazily behind a lock.
    """

    def __init__(self, tau, tol: float = 1e-16, K: int = 8, convention: str = "rescaled",
                 table_order: int = 40):
        tau = complex(tau)
        if not tau.imag > 0:
            raise EllipticError("Im tau must be positive")
        if tau.imag < MIN_IMTAU:
            raise ConditioningError(f"Im tau = {tau.imag} < {MIN_IMTAU}: series too ill conditioned")
        if convention not in ("rescaled", "bd"):
            raise EllipticError(f"unknown convention {convention!r}")
        self.tau = tau
        self.imtau = tau.imag
        self.q = cmath.exp(2j * math.pi * tau)
        self.tol = tol
        self.K = K
        self.convention = convention
        self._lock = threading.Lock()
        self._eis: Dict[object, complex] = {}
        self._build_theta()
        self._build_laurent(table_order)

    # ------------------------------------------------------------ theta
    def _build_theta(self):
        # growth of sin on the reduced cell is at most e^{(2n+1) pi Im tau / 2}
        c, w = [], []
        n = 0
        while True:
            mag = math.exp(-math.pi * self.imtau * (n + 0.5) ** 2)
            grown = math.exp(-math.pi * self.imtau * (n + 0.5) * (n - 0.5))
            if n > 0 and grown < self.tol * 1e-3:
                break
            c.append((-1) ** n * cmath.exp(1j * math.pi * self.tau * (n + 0.5) ** 2))
            w.append((2 * n + 1) * math.pi)
            n += 1
        self._c = np.array(c)
        self._w = np.array(w)

    def theta1(self, z, deriv: int = 0) -> complex:
        z = complex(z)
        ph = self._w * z + deriv * math.pi / 2
        return complex(2 * np.sum(self._c * self._w ** deriv * np.sin(ph)))

    def reduce(self, u: complex) -> complex:
        u = complex(u)
        y = u.imag / self.imtau
        x = u.real - y * self.tau.real
        return u - (round(x) + round(y) * self.tau)

    # ------------------------------------------------------------ propagator
    def logtheta_derivs(self, u: complex, m: int) -> List[complex]:
        """``g^{(j)}(u)`` for j <= m with g = theta1'/theta1."""
        th = [self.theta1(u, j) for j in range(m + 2)]
        if abs(th[0]) < 1e-300:
            raise SingularityError("theta1 vanishes")
        g: List[complex] = []
        for j in range(m + 1):
            acc = th[j + 1]
            for i in range(j):
                acc -= comb(j, i) * g[i] * th[j - i]
            g.append(acc / th[0])
        return g

    def pderiv(self, u, m: int) -> complex:
        """``d_u^m P(u)`` including the non-holomorphic zero-mode piece."""
        u = self.reduce(u)
        if abs(u) < 1e-12:
            raise SingularityError("propagator evaluated on the diagonal; use q_coeff or laurent_jet")
        val = 1j / math.pi * self.logtheta_derivs(u, m)[m]
        if m == 0:
            val += -2 * u.imag / self.imtau
        elif m == 1:
            val += 1j / self.imtau
        return val

    def propagator(self, z, w, a: int = 0, b: int = 0) -> complex:
        if a + b > self.K:
            raise CapError(f"derivative order {a + b} exceeds cap K={self.K}")
        return (-1) ** b * self.pderiv(complex(z) - complex(w), a + b)

    def pderiv_array(self, u: np.ndarray, m: int) -> np.ndarray:
        """Vectorized ``d_u^m P`` on reduced points (used by quadrature)."""
        u = np.asarray(u, dtype=complex)
        ph = np.multiply.outer(u, self._w)
        th = [2 * np.sum(self._c * self._w ** j * np.sin(ph + j * math.pi / 2), axis=-1)
              for j in range(m + 2)]
        g = []
        for j in range(m + 1):
            acc = th[j + 1].copy()
            for i in range(j):
                acc -= comb(j, i) * g[i] * th[j - i]
            g.append(acc / th[0])
        val = 1j / math.pi * g[m]
        if m == 0:
            val = val - 2 * u.imag / self.imtau
        elif m == 1:
            val = val + 1j / self.imtau
        return val

    # ------------------------------------------------------------ diagonal data
    def _build_laurent(self, M: int):
        # theta1(z) = z T(z); T has only even powers
        nT = M // 2 + 2
        T = np.zeros(2 * nT + 1, dtype=complex)
        for j in range(nT):
            T[2 * j] = 2 * np.sum(self._c * self._w ** (2 * j + 1)) * (-1) ** j / factorial(2 * j + 1)
        dT = np.array([(i + 1) * T[i + 1] for i in range(len(T) - 1)])
        S = np.zeros(M + 1, dtype=complex)
        for m in range(M + 1):
            acc = dT[m]
            for i in range(1, m + 1):
                acc -= T[i] * S[m - i]
            S[m] = acc / T[0]
        # regular part of P at the diagonal with the antiholomorphic piece dropped
        r = 1j / math.pi * S
        r[1] += 1j / self.imtau
        self._r = r
        self._laurent_log = S

    def reg_coeff(self, m: int) -> complex:
        """Coefficient of u^m in the regular part of P (u-bar dropped)."""
        if m < 0:
            return 0j
        if m >= len(self._r):
            self._build_laurent(2 * m + 8)
        return complex(self._r[m])

    def q_coeff(self, k: int, l: int) -> complex:
        if k + l > self.K:
            raise CapError(f"derivative order {k + l} exceeds cap K={self.K}")
        return self._q(k, l)

    def _q(self, k: int, l: int) -> complex:
        m = k + l
        return (-1) ** l * factorial(m) * self.reg_coeff(m)

    def laurent_jet(self, a: int, order: int) -> LaurentJet:
        if a + order > self.K:
            raise CapError(f"jet order {a + order} exceeds cap K={self.K}")
        return self._jet(a, order)

    def _jet(self, a: int, order: int) -> LaurentJet:
        pole = a + 1
        cs = [0j] * (pole + order + 1)
        cs[0] = 1j / math.pi * (-1) ** a * factorial(a)
        for j in range(0, order + 1):
            cs[pole + j] = self.reg_coeff(j + a) * factorial(j + a) / factorial(j)
        return LaurentJet(pole, tuple(cs))

    # ------------------------------------------------------------ Eisenstein
    def eisenstein(self, weight) -> complex:
        if weight == "hat2":
            return self.eisenstein(2) - 3 / (math.pi * self.imtau)
        if not isinstance(weight, int) or weight < 2 or weight % 2:
            raise EllipticError(f"weight must be an even integer >= 2 or 'hat2', got {weight!r}")
        with self._lock:
            if weight in self._eis:
                return self._eis[weight]
        val = _eisenstein_e2(self.tau) if weight == 2 else _eisenstein_lattice(self.tau, weight)
        with self._lock:
            self._eis.setdefault(weight, val)
        return val

    def e2hat(self) -> complex:
        return self.eisenstein("hat2")


def _eisenstein_lattice(tau: complex, weight: int, levels: int = 6) -> complex:
    """Normalised lattice sum ``sum' (m tau + n)^-w / (2 zeta(w))``.

    Partial sums over the rectangle |n| <= M, |m| <= M / r (r ~ |tau| keeps the
    box roughly square in the plane), extrapolated in 1/M.
    """
    r = max(1, int(round(abs(tau))))
    vals = []
    for lev in range(levels):
        M = 16 * r * 2 ** lev
        mm = M // r
        m = np.arange(-mm, mm + 1)
        n = np.arange(-M, M + 1)
        lam = np.add.outer(m * tau, n).ravel()
        lam = lam[lam != 0]
        vals.append(np.sum(lam ** (-weight)))
    return complex(richardson(vals) / (2 * zeta(weight)))


def _eisenstein_e2(tau: complex, levels: int = 7) -> complex:
    """Eisenstein order: inner sum over n (extrapolated), outer over m."""
    imt = tau.imag
    mmax = int(math.ceil(8.0 / imt)) + 2
    total = 2 * zeta(2)
    for m in range(1, mmax + 1):
        vals = []
        N0 = 64 + 8 * int(abs(m * tau))
        for lev in range(levels):
            N = N0 * 2 ** lev
            n = np.arange(-N, N + 1)
            vals.append(np.sum((m * tau + n) ** -2.0))
        inner = richardson(vals)
        total += 2 * inner   # m and -m contribute equally
    return complex(total / (2 * zeta(2)))


# thin functional wrappers --------------------------------------------------

def theta1(z, ctx: EllipticContext, deriv: int = 0) -> complex:
    return ctx.theta1(z, deriv)


def propagator(z, w, a, b, ctx: EllipticContext) -> complex:
    return ctx.propagator(z, w, a, b)


def q_coeff(k, l, ctx: EllipticContext) -> complex:
    return ctx.q_coeff(k, l)


def eisenstein(weight, ctx: EllipticContext) -> complex:
    return ctx.eisenstein(weight)


def laurent_jet(a, order, ctx: EllipticContext) -> LaurentJet:
    return ctx.laurent_jet(a, order)
