import math

import numpy as np
import pytest

from matchmask.errors import DesignError, DomainError, ParameterError
from matchmask.piecewise import PiecewiseLinear, preset, sample_interpolant
from matchmask.polyfit import (
    FlattenSpec,
    assemble_T,
    build_T1,
    derivative_targets,
    fit,
    flatten_amplitudes,
    frequencies,
    pick_epsilon1,
    polyline_error,
    solve_flatten,
    vallee_poussin,
    verify_T,
)
from matchmask.trigpoly import TrigPoly, derivative_at

PI = math.pi


def test_pick_epsilon1_examples():
    assert pick_epsilon1(0.1, math.inf, math.inf) == 0.05
    assert pick_epsilon1(0.1, 0.01, 0.5) == pytest.approx(0.0025)
    assert pick_epsilon1(0.2, 1, 1) == pytest.approx(0.1)
    with pytest.raises(DomainError):
        pick_epsilon1(0.1, 0.0, 1.0)


def test_vallee_poussin_weights():
    c = TrigPoly(np.ones(2 * 7 + 1, complex))  # degree 7 = 2n - 1 for n = 4
    v = vallee_poussin(c, 4)
    assert v.coef(4) == 1 and v.coef(-3) == 1
    assert v.coef(5) == pytest.approx(0.75) and v.coef(7) == pytest.approx(0.25)


def test_build_T1_constant():
    T1, n = build_T1(sample_interpolant(preset("one"), 8), 0.05)
    assert n == 1 and T1.degree == 0 and T1.coef(0) == pytest.approx(1)


def test_build_T1_cosine_polyline():
    f3 = sample_interpolant(preset("cos"), 64)
    T1, _ = build_T1(f3, 0.05)
    x = -PI + 2 * PI * np.arange(2**14) / 2**14
    assert np.max(np.abs(T1(x).real - f3(x))) < 0.025
    assert T1.is_real_valued()


def test_build_T1_triangle_decay():
    tri = PiecewiseLinear(np.array([-PI, 0.0]), np.array([-1.0, 1.0]))
    errs = []
    for eps1 in (0.2, 0.1, 0.05, 0.025):
        T1, n = build_T1(tri, eps1, refine=False)
        errs.append((n, sum(polyline_error(tri, T1))))
    ns = [n for n, _ in errs]
    assert ns == sorted(ns) and ns[-1] > ns[0]
    assert all(e < eps / 2 for (_, e), eps in zip(errs, (0.2, 0.1, 0.05, 0.025)))
    with pytest.raises(ParameterError):
        build_T1(tri, 0.0)


def test_flatten_flat_input_is_zero():
    spec = solve_flatten(TrigPoly.constant(1.0), 3, 0.05)
    assert spec.s == 1 and spec.max_amplitude == 0


def test_flatten_single_equation():
    T1 = TrigPoly.from_cos_sin(1.0, sin=[0.3])  # gamma_1 = 0.3
    N, K, a, b = flatten_amplitudes(derivative_targets(T1, 1), 1, 8)
    assert N == [] and K == [8]
    assert abs(b[0]) == pytest.approx(0.0375)
    # the correction cancels the first derivative
    T2 = FlattenSpec(1, (), (8,), (), (float(b[0]),), 8).poly()
    assert abs(derivative_at(T1 + T2, 1)) < 1e-15


def test_flatten_even_system_against_direct_inverse():
    gam = np.array([0.0, 0.1, 0.0, -0.2])
    N, K, a, b = flatten_amplitudes(gam, 4, 3)
    V = np.array([[float(n) ** (2 * k) for n in N] for k in (1, 2)])
    rhs = np.array([gam[1], -gam[3]])  # sum a N^{2k} = (-1)^{k+1} gamma_{2k}
    assert np.max(np.abs(a - np.linalg.inv(V) @ rhs)) < 1e-10
    assert np.allclose(b, 0)


def test_flatten_cancels_derivatives():
    f3 = sample_interpolant(preset("cos"), 64)
    T1, _ = build_T1(f3, 0.05)
    J = 4
    spec = solve_flatten(T1, J, 0.05, offset=False)
    assert spec.max_amplitude < 0.05 / (2 * J)
    N, K = frequencies(J, spec.s, offset=False)
    assert list(spec.cos_freqs) == N and list(spec.sin_freqs) == K
    T = T1 + spec.poly()
    k = np.abs(T.indices).astype(float)
    for j in range(1, J + 1):
        assert abs(derivative_at(T, j)) <= 1e-8 * max(1.0, np.sum(k**j * np.abs(T.coeffs)))


def test_frequencies_distinct_with_offset():
    N, K = frequencies(5, 4, offset=True)
    assert N == [4, 8] and K == [12, 16, 20]
    assert len(set(N) | set(K)) == 5


def test_assemble_examples():
    empty = FlattenSpec(2, (), (), (), (), 1)
    assert assemble_T(TrigPoly.constant(1.0), empty).T.coef(0) == 1
    T1 = TrigPoly.from_cos_sin(0.98)
    spec = FlattenSpec(1, (), (), (), (), 1)
    r = assemble_T(T1 + 0.01, spec)
    assert r.T(0.0) == pytest.approx(1, abs=1e-15)
    with pytest.raises(DesignError):
        assemble_T(TrigPoly.constant(0.3), empty)


def test_fit_produces_flat_real_T():
    f3 = sample_interpolant(preset("cos"), 64)
    r = fit(f3, 0.04, 4)
    assert r.T(0.0) == pytest.approx(1, abs=1e-12)
    assert r.T.is_real_valued()
    assert r.sup_error < 0.04 and r.defects.empty


def test_verify_T_examples():
    one = sample_interpolant(preset("one"), 8)
    rep = verify_T(TrigPoly.constant(1.0), one, 0.05)
    assert rep.passed and rep.sup_error == 0
    cos1 = sample_interpolant(preset("cos"), 512)
    rep = verify_T(TrigPoly.from_cos_sin(0.0, cos=[1.0]), cos1, 0.05)
    assert not rep.passed and any("symmetric pair" in m for m in rep.messages)
    planted = TrigPoly.from_cos_sin(-1.0, cos=[2.0])  # 2 cos xi - 1, roots at +-pi/3
    target = PiecewiseLinear(-PI + 2 * PI * np.arange(512) / 512, planted(-PI + 2 * PI * np.arange(512) / 512).real)
    rep = verify_T(planted, target, 0.05)
    assert not rep.passed and any("cycle" in m for m in rep.messages)
