import math

import numpy as np
import pytest

from matchmask.errors import ParameterError
from matchmask.refinable import (
    analysis_matrix,
    analyze,
    cascade_time,
    filterbank_energy,
    first_nonvanishing,
    matched_mask_error,
    moments_check,
    one_minus_mod2_derivatives,
    order_at_pi,
    partition_of_unity,
    phihat_grid,
    refinement_residual,
    stability_check,
    wavelet_time,
    zero_order_at,
)
from matchmask.tau_mask import build_tau, find_K0
from matchmask.trigpoly import TrigPoly, power
from matchmask.uep_masks import MaskSet, masks_from_b, wavelet_masks

HAAR = TrigPoly(np.array([0, 0.5, 0.5]))
HAT = TrigPoly(np.array([0.25, 0.5, 0.25]))


def design_masks(N0, T=None):
    d = find_K0(T if T is not None else TrigPoly.constant(1.0), build_tau(N0))
    return d, wavelet_masks(d)


def test_phihat_closed_forms():
    v = phihat_grid(HAAR, [math.pi / 2]).values[0]
    assert abs(v) == pytest.approx(2 * math.sqrt(2) / math.pi, abs=1e-12)
    v = phihat_grid(HAT, [math.pi]).values[0]
    assert v.real == pytest.approx((2 / math.pi) ** 2, abs=1e-12)
    xi = np.linspace(-20, 20, 401)
    s = phihat_grid(HAT, xi).values
    ref = np.sinc(xi / (2 * math.pi)) ** 2
    assert np.max(np.abs(s - ref)) < 1e-11
    assert phihat_grid(design_masks(2)[1].m0, [0.0]).values[0] == 1
    with pytest.raises(ParameterError):
        phihat_grid(TrigPoly.constant(0.5), [0.0])


@pytest.mark.parametrize("N0", [0, 1, 2])
def test_refinement_identity(N0):
    m0 = design_masks(N0)[1].m0
    xi = np.linspace(-4 * math.pi, 4 * math.pi, 1001)
    assert refinement_residual(m0, xi) < 1e-10


def test_cascade_hat_and_haar():
    phi = cascade_time(HAT, 6)
    assert phi.x_min == -1 and phi.x_max == 1
    assert phi.at([0.0])[0] == pytest.approx(1) and phi.at([0.5, -0.5]) == pytest.approx([0.5, 0.5])
    assert np.max(np.abs(phi.values - np.maximum(0, 1 - np.abs(phi.x)))) < 1e-14
    h = cascade_time(HAAR, 5)
    assert set(np.round(h.values.real, 12)) <= {0.0, 1.0}
    assert h.integral().real == pytest.approx(1, abs=h.step)


@pytest.mark.parametrize("N0", [0, 1, 2])
def test_partition_of_unity(N0):
    phi = cascade_time(design_masks(N0)[1].m0, 8)
    assert partition_of_unity(phi) < 1e-6
    assert phi.step * (phi.values.size - 1) == pytest.approx(phi.x_max - phi.x_min, abs=1e-12)


def test_cascade_matches_phihat():
    m0 = design_masks(1)[1].m0
    phi = cascade_time(m0, 10)
    for xi in (0.5, 1.0, 2.0, 4.0):
        ft = phi.step * np.sum(phi.values * np.exp(-1j * phi.x * xi))
        assert abs(ft - phihat_grid(m0, [xi]).values[0]) < 1e-4


def test_wavelets_haar_and_integrals():
    ms = masks_from_b(HAAR, TrigPoly.zero())
    psi1, psi2, psi3 = wavelet_time(ms, 5)
    assert set(np.round(psi1.values.real, 12)) <= {-1.0, 0.0, 1.0}
    assert np.all(psi2.values == 0)
    _, ms = design_masks(0)
    phi = cascade_time(ms.m0, 8)
    psis = wavelet_time(ms, phi=phi)
    for p in psis:
        assert abs(p.integral()) < 1e-8


def test_moments_examples():
    d, ms = design_masks(1)
    rep = moments_check(ms, 1, d.K0, d.tau.c)
    assert rep.passed and rep.order == 4
    assert d.tau.c == pytest.approx(3 / 16)
    assert rep.value == pytest.approx(9, rel=1e-9)
    haar = masks_from_b(HAAR, TrigPoly.zero())
    assert moments_check(haar, 0).order == 2
    assert abs(ms.m1(0.0)) < 1e-15 and abs(ms.m0(math.pi)) < 1e-15


def test_one_minus_mod2_leibniz():
    vals = one_minus_mod2_derivatives(HAT, 4)
    # 1 - cos^4(xi/2) = xi^2/2 - ...
    assert vals[0] == pytest.approx(0, abs=1e-15) and vals[2] == pytest.approx(1.0)
    assert first_nonvanishing(vals, 1.0) == 2
    assert first_nonvanishing(np.zeros(3), 1.0) == -1


def test_stability_examples():
    for N0 in (0, 1, 2):
        assert stability_check(design_masks(N0)[1].m0).empty
    m0 = design_masks(1)[1].m0
    cos1 = TrigPoly.from_cos_sin(0.0, cos=[1.0])
    assert stability_check(m0 * cos1).symmetric_pairs
    planted = TrigPoly.from_cos_sin(-1.0, cos=[2.0])  # zeros at +-pi/3
    assert stability_check(m0 * planted).cycles


def test_order_at_pi_examples():
    assert order_at_pi(design_masks(0)[1].m0) == 2
    assert order_at_pi(design_masks(1)[1].m0) == 4
    assert order_at_pi(design_masks(2)[1].m0) == 6
    assert order_at_pi(HAAR) == 1
    assert order_at_pi(power(HAT, 3)) == 6
    assert zero_order_at(TrigPoly.from_cos_sin(1.0, cos=[-1.0]), 1.0) == 2
    with pytest.raises(ParameterError):
        order_at_pi(TrigPoly.zero())


@pytest.mark.parametrize("N0", [0, 1, 2])
def test_filterbank_energy_random(N0):
    _, ms = design_masks(N0)
    rng = np.random.default_rng(N0)
    for _ in range(100):
        rep = filterbank_energy(ms, rng.standard_normal(1024))
        assert abs(rep.ratio - 1) < 1e-10


def test_filterbank_haar_constant():
    ms = masks_from_b(HAAR, TrigPoly.zero())
    rep = filterbank_energy(ms, np.ones(64))
    assert rep.bands[0] == pytest.approx(64) and max(rep.bands[1:]) < 1e-28
    with pytest.raises(ParameterError):
        analyze(ms, np.ones(7))


def test_filterbank_planted_perturbation():
    _, ms = design_masks(1)
    c = ms.m2.coeffs.copy()
    c[np.argmax(np.abs(c))] += 1e-3
    bad = MaskSet(ms.m0, ms.m1, TrigPoly(c), ms.m3)
    rng = np.random.default_rng(5)
    rep = filterbank_energy(bad, rng.standard_normal(1024))
    assert abs(rep.ratio - 1) > 1e-6


@pytest.mark.parametrize("N0", [0, 1])
def test_analysis_matrix_isometry(N0):
    _, ms = design_masks(N0)
    A = analysis_matrix(ms, 16)
    s = np.linalg.svd(A, compute_uv=False)
    assert np.max(np.abs(s - 1)) < 1e-10
    x = np.random.default_rng(0).standard_normal(16)
    assert np.allclose(A @ x, np.concatenate(analyze(ms, x)), atol=1e-13)


def test_matched_mask_error_constant():
    assert matched_mask_error(lambda x: np.ones_like(x), TrigPoly.constant(1.0)) == 0
