"""Independent reference computations used to pin values in the tests.

None of these touch the package's internals: the Wick oracle works with
explicit mode operators, the modular forms come from q-expansions, the theta
function from its product formula, and the lattice sums are brute force.
"""
import cmath
import itertools
import math
from fractions import Fraction

import numpy as np


# ------------------------------------------------------------------ mode algebra

class ModeAlgebra:
    """Free fields with ``[a^p_m, a^q_n] = hbar * omega[p][q] * delta_{m+n,-1}``.

    States are dicts ``(ops, hpow) -> coeff`` where ``ops`` is a sorted tuple of
    creation operators ``(p, m)`` with ``m < 0``.
    """

    def __init__(self, parities, omega):
        self.par = list(parities)
        self.omega = omega

    def _sort(self, ops):
        ops = list(ops)
        sign = 1
        # bubble sort keeps track of odd swaps
        for i in range(len(ops)):
            for j in range(len(ops) - 1 - i):
                if ops[j] > ops[j + 1]:
                    if self.par[ops[j][0]] and self.par[ops[j + 1][0]]:
                        sign = -sign
                    ops[j], ops[j + 1] = ops[j + 1], ops[j]
        for a, b in zip(ops, ops[1:]):
            if a == b and self.par[a[0]]:
                return 0, ()
        return sign, tuple(ops)

    def create(self, p, m, state):
        out = {}
        for (ops, h), c in state.items():
            s, new = self._sort(((p, m),) + ops)
            if s:
                out[(new, h)] = out.get((new, h), 0) + s * c
        return {k: v for k, v in out.items() if v != 0}

    def annihilate(self, p, m, state):
        out = {}
        for (ops, h), c in state.items():
            sign = 1
            for i, (q, n) in enumerate(ops):
                w = self.omega[p][q]
                if w and m + n == -1:
                    rest = ops[:i] + ops[i + 1:]
                    key = (rest, h + 1)
                    out[key] = out.get(key, 0) + sign * w * c
                if self.par[p] and self.par[q]:
                    sign = -sign
        return {k: v for k, v in out.items() if v != 0}

    def apply(self, p, m, state):
        return self.create(p, m, state) if m < 0 else self.annihilate(p, m, state)

    def state(self, factors):
        """``prod d^k a^p`` as ``prod k! a^p_(-k-1) |0>``, left to right."""
        st = {((), 0): Fraction(1)}
        coef = 1
        for (p, k) in reversed(factors):
            st = self.create(p, -k - 1, st)
            coef *= math.factorial(k)
        return {key: v * coef for key, v in st.items()}

    def nth(self, afactors, acoef, N, b):
        """``a_(N) b`` for ``a = acoef * :prod d^k a^p:`` and a state ``b``."""
        if not afactors:
            return {key: v * acoef for key, v in b.items()} if N == -1 else {}
        kb = max([-m - 1 for (ops, _) in b for (_, m) in ops] + [0])
        ks = [k for (_, k) in afactors]
        out = {}
        ranges = []
        for i, k in enumerate(ks):
            lo = N - k - sum(kb + 1 + kj for j, kj in enumerate(ks) if j != i)
            ranges.append(range(min(lo, -1), kb + 1))
        for modes in itertools.product(*ranges):
            if sum(n + 1 + k for n, k in zip(modes, ks)) != N + 1:
                continue
            cf = acoef
            for n, k in zip(modes, ks):
                for j in range(1, k + 1):
                    cf *= (-n - j)
            if cf == 0:
                continue
            idx = list(range(len(afactors)))
            cre = [i for i in idx if modes[i] < 0]
            ann = [i for i in idx if modes[i] >= 0]
            order = cre + ann
            # Koszul sign of moving annihilators to the right
            sign = 1
            for x in range(len(order)):
                for y in range(x + 1, len(order)):
                    i, j = order[x], order[y]
                    if i > j and self.par[afactors[i][0]] and self.par[afactors[j][0]]:
                        sign = -sign
            st = dict(b)
            for i in reversed(order):
                st = self.apply(afactors[i][0], modes[i], st)
                if not st:
                    break
            for key, v in st.items():
                out[key] = out.get(key, 0) + sign * cf * v
        return {k: v for k, v in out.items() if v != 0}


# ------------------------------------------------------------------ modular forms

def _sigma(n, k):
    return sum(d ** k for d in range(1, n + 1) if n % d == 0)


def e2_qseries(tau, terms=200):
    q = cmath.exp(2j * math.pi * tau)
    return 1 - 24 * sum(_sigma(n, 1) * q ** n for n in range(1, terms))


def e2hat_qseries(tau, terms=200):
    return e2_qseries(tau, terms) - 3 / (math.pi * tau.imag)


def eisenstein_qseries(tau, k, terms=200):
    """Normalised ``E_k`` for even ``k >= 4`` via Bernoulli numbers."""
    bern = {4: Fraction(-1, 30), 6: Fraction(1, 42), 8: Fraction(-1, 30), 10: Fraction(5, 66),
            12: Fraction(-691, 2730)}
    c = float(-2 * k / bern[k])
    q = cmath.exp(2j * math.pi * tau)
    return 1 + c * sum(_sigma(n, k - 1) * q ** n for n in range(1, terms))


def lattice_sum(tau, n, M=12, K=20000):
    """``sum' (m tau - k)^(-n)`` for n >= 3, brute force.

    For m != 0 the k-sum is exponentially small in |m| Im tau, so a modest
    M suffices; the k tail is O(K^(1-n)).
    """
    ks = np.arange(-K, K + 1, dtype=float)
    tot = 0j
    for m in range(-M, M + 1):
        x = m * tau - ks
        if m == 0:
            x = x[ks != 0]
        tot += np.sum(x.astype(complex) ** (-n))
    return complex(tot)


def cycle_integral_fourier(tau, n):
    """Unit-area cyclic integral of n propagators: ``(i/pi)^n sum' (m tau - k)^(-n)``."""
    return (1j / math.pi) ** n * lattice_sum(tau, n)


# ------------------------------------------------------------------ theta, propagator

def theta1_product(z, tau, terms=60):
    q = cmath.exp(2j * math.pi * tau)
    e = cmath.exp(2j * math.pi * z)
    out = 2 * cmath.exp(1j * math.pi * tau / 4) * cmath.sin(math.pi * z)
    for n in range(1, terms):
        qn = q ** n
        out *= (1 - qn) * (1 - qn * e) * (1 - qn / e)
    return out


def propagator_oracle(z, w, tau, h=1e-5):
    """``(i/pi) d log theta1 - 2 Im(z-w)/Im tau`` with a central difference."""
    u = z - w
    dlog = (cmath.log(theta1_product(u + h, tau)) - cmath.log(theta1_product(u - h, tau))) / (2 * h)
    return 1j / math.pi * dlog - 2 * u.imag / tau.imag


def fd_complex(f, z, h=1e-4):
    """Holomorphic-direction derivative ``d/dz = (d_x - i d_y)/2`` by 4-point differences."""
    dx = (-f(z + 2 * h) + 8 * f(z + h) - 8 * f(z - h) + f(z - 2 * h)) / (12 * h)
    dy = (-f(z + 2j * h) + 8 * f(z + 1j * h) - 8 * f(z - 1j * h) + f(z - 2j * h)) / (12 * h)
    return 0.5 * (dx - 1j * dy), 0.5 * (dx + 1j * dy)


def g2hat_lattice(tau, M=60):
    """Eisenstein-summed ``G_2`` (inner sum over n in closed form) minus ``pi/Im tau``."""
    g2 = math.pi ** 2 / 3
    for m in range(1, M + 1):
        g2 += 2 * math.pi ** 2 / cmath.sin(math.pi * m * tau) ** 2
    return g2 - math.pi / tau.imag
