import cmath
import math
import random

import pytest
from hypothesis import given, strategies as st

from elltrace.elliptic import (CapError, ConditioningError, EllipticContext, EllipticError,
                               SingularityError)
from elltrace.suites import propagator_suite
from oracles import (e2hat_qseries, eisenstein_qseries, fd_complex, propagator_oracle,
                     theta1_product)

TAUS = [1j, 0.3 + 1.7j, -0.45 + 0.9j]


@pytest.fixture(scope="module", params=TAUS)
def ctx(request):
    return EllipticContext(request.param)


def test_bad_tau():
    with pytest.raises(EllipticError):
        EllipticContext(1 - 1j)
    with pytest.raises(ConditioningError):
        EllipticContext(0.5 + 1e-4j)


# ---------------------------------------------------------------- theta

def test_theta_zero_and_odd(ctx):
    assert abs(ctx.theta1(0)) < 1e-15
    rng = random.Random(1)
    for _ in range(10):
        z = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
        assert abs(ctx.theta1(-z) + ctx.theta1(z)) < 1e-12 * max(1, abs(ctx.theta1(z)))


def test_theta_product_formula(ctx):
    for z in (0.3, 0.3 + 0.2j, -0.1 + 0.4j):
        assert abs(ctx.theta1(z) - theta1_product(z, ctx.tau)) < 1e-13


# ---------------------------------------------------------------- propagator

def test_propagator_oracle(ctx):
    for z, w in ((0.3 + 0.1j, 0), (0.7 - 0.2j, 0.1 + 0.3j)):
        assert abs(ctx.propagator(z, w) - propagator_oracle(z, w, ctx.tau)) < 1e-8


def test_propagator_odd_and_doubly_periodic(ctx):
    rng = random.Random(2)
    for _ in range(10):
        z = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
        w = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
        if abs(ctx.reduce(z - w)) < 0.05:
            continue
        p = ctx.propagator(z, w)
        assert abs(ctx.propagator(w, z) + p) < 1e-11
        assert abs(ctx.propagator(z + 1, w) - p) < 1e-11
        assert abs(ctx.propagator(z + ctx.tau, w) - p) < 1e-10


def test_propagator_derivative_fd(ctx):
    z, w = 0.31 + 0.17j, -0.05j
    dz, dzb = fd_complex(lambda u: ctx.propagator(u, w), z)
    assert abs(dz - ctx.propagator(z, w, 1, 0)) < 1e-8
    assert abs(dzb + 1j / ctx.imtau) < 1e-8
    dw, _ = fd_complex(lambda u: ctx.propagator(z, u), w)
    assert abs(dw - ctx.propagator(z, w, 0, 1)) < 1e-8


def test_dbar_of_derivative_vanishes(ctx):
    z, w = 0.2 + 0.3j, 0
    _, dzb = fd_complex(lambda u: ctx.propagator(u, w, 1, 0), z)
    assert abs(dzb) < 1e-7


def test_dbar_suite():
    (c,) = propagator_suite(n=50)
    assert c.passed, c


def test_propagator_singular(ctx):
    with pytest.raises(SingularityError):
        ctx.propagator(0.2, 0.2)
    with pytest.raises(SingularityError):
        ctx.propagator(0.2 + ctx.tau + 1, 0.2)


def test_near_diagonal_limit(ctx):
    # P - i/(pi u) -> regular value Q(0,0) = 0
    for eps in (1e-3, 1e-4):
        u = eps * cmath.exp(0.7j)
        rest = ctx.propagator(u, 0) - 1j / (math.pi * u)
        assert abs(rest) < 10 * eps


def test_cap(ctx):
    with pytest.raises(CapError):
        ctx.propagator(0.3, 0, ctx.K, 1)


# ---------------------------------------------------------------- diagonal data

def test_q_antisymmetry(ctx):
    ctx = EllipticContext(ctx.tau, K=9)
    assert ctx.q_coeff(0, 0) == 0
    for k in range(9):
        for l in range(9 - k):
            assert abs(ctx.q_coeff(k + 1, l) + ctx.q_coeff(k, l + 1)) < 1e-12


@given(st.floats(-0.5, 0.5), st.floats(0.6, 3.0))
def test_q10_is_e2hat(re, im):
    tau = complex(re, im)
    c = EllipticContext(tau)
    assert abs(c.q_coeff(1, 0) + 1j * math.pi / 3 * e2hat_qseries(tau)) < 1e-9


def test_e2hat_at_i():
    assert abs(EllipticContext(1j).e2hat()) < 1e-10
    assert abs(e2hat_qseries(1j)) < 1e-12


def test_eisenstein_qseries(ctx):
    for k in (4, 6, 8):
        assert abs(ctx.eisenstein(k) - eisenstein_qseries(ctx.tau, k)) < 1e-9
    assert abs(ctx.e2hat() - e2hat_qseries(ctx.tau)) < 1e-10


def test_eisenstein_large_imtau():
    assert abs(EllipticContext(10j).eisenstein(4) - 1) < 1e-10


@pytest.mark.parametrize("w", [3, 0, -2, "e2", 2.0])
def test_eisenstein_bad_weight(w):
    with pytest.raises(EllipticError):
        EllipticContext(1j).eisenstein(w)


def test_jets(ctx):
    j0 = ctx.laurent_jet(0, 3)
    assert j0[-1] == pytest.approx(1j / math.pi)
    assert j0[0] == 0
    assert j0[1] == pytest.approx(ctx.q_coeff(1, 0))
    g4 = 2 * math.pi ** 4 / 90 * eisenstein_qseries(ctx.tau, 4)
    assert abs(j0[3] + 1j / math.pi * g4) < 1e-10
    j1 = ctx.laurent_jet(1, 2)
    assert j1[-2] == pytest.approx(-1j / math.pi)
    assert j1[-1] == 0
