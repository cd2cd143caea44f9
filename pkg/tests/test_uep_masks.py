import math

import numpy as np
import pytest

from matchmask.errors import DomainError, ParameterError
from matchmask.tau_mask import build_tau, find_K0
from matchmask.trigpoly import TrigPoly, conj_poly, grid_values, mod_squared, reflect_pi, shift
from matchmask.uep_masks import (
    MaskSet,
    compress,
    expand,
    factor_pi_periodic,
    partner_mask,
    load_masks,
    masks_from_b,
    pair_product,
    riesz_factor,
    verify_uep,
    wavelet_masks,
)

R2 = math.sqrt(2)
HAAR = TrigPoly(np.array([0, 0.5, 0.5]))  # (1 + e^{i xi}) / 2


def coef_dist(p, q):
    d = max(p.degree, q.degree)
    return float(np.max(np.abs(p.padded(d) - q.padded(d))))


def test_riesz_sin_squared_half():
    P = TrigPoly(np.array([-1 / 8, 0, 1 / 4, 0, -1 / 8]))  # sin^2(xi) / 2
    b = riesz_factor(P)
    assert coef_dist(mod_squared(b), P) < 1e-15
    # (1 - e^{2i xi}) / (2 sqrt 2) up to the phase that makes the top coefficient positive
    ref = TrigPoly(np.array([0, 0, -1, 0, 1]) / (2 * R2))
    assert coef_dist(b, ref) < 1e-15


def test_riesz_zero_and_double_circle_roots():
    assert riesz_factor(TrigPoly.zero()).is_zero
    P = TrigPoly(np.array([0.25, 0, 0.5, 0, 0.25]))  # (1 + cos 2xi) / 2 = cos^2 xi
    b = riesz_factor(P)
    assert coef_dist(mod_squared(b), P) < 1e-14
    assert abs(b(math.pi / 2)) < 1e-12 and abs(b(-math.pi / 2)) < 1e-12


def test_riesz_rejects_negative():
    with pytest.raises(DomainError):
        riesz_factor(TrigPoly.from_cos_sin(0.0, cos=[1.0]))


def test_riesz_random_nonnegative():
    rng = np.random.default_rng(3)
    for _ in range(20):
        q = TrigPoly(rng.standard_normal(9) + 1j * rng.standard_normal(9))
        P = mod_squared(q)
        b = riesz_factor(P)
        assert coef_dist(mod_squared(b), P) <= 1e-10 * (1 + P.norm2())
        top = b.coeffs[-1]
        assert top.real > 0 and abs(top.imag) < 1e-12


def test_compress_expand_roundtrip():
    P = TrigPoly(np.array([1, 0, 2, 0, 5, 0, 2, 0, 1], complex))
    assert compress(P).degree == 2
    assert coef_dist(expand(compress(P)), P) == 0
    with pytest.raises(DomainError):
        compress(TrigPoly(np.array([1, 1, 1], complex)))


def test_factor_pi_periodic_structure():
    P = TrigPoly(np.array([-1 / 8, 0, 1 / 4, 0, -1 / 8]))
    b = factor_pi_periodic(P, 1e-8, zero_order=2)
    assert np.all(b.coeffs[b.indices % 2 != 0] == 0)
    assert coef_dist(mod_squared(b), reflect_pi(mod_squared(b))) < 1e-16
    assert abs(b(0.0)) < 1e-15


def test_design_N0_zero_masks():
    d = find_K0(TrigPoly.constant(1.0), build_tau(0))
    ms = wavelet_masks(d)
    assert coef_dist(ms.m1, TrigPoly(np.array([0, 0, -0.25, 0.5, -0.25]))) < 1e-15
    assert coef_dist(d.P, TrigPoly(np.array([-1 / 8, 0, 1 / 4, 0, -1 / 8]))) < 1e-15
    m2 = TrigPoly(np.array([0, 0, -1, 0, 1]) / (2 * R2)) * HAAR
    assert coef_dist(mod_squared(ms.m2), mod_squared(m2)) < 1e-15
    rep = verify_uep(ms)
    assert rep.r1 < 1e-12 and rep.r2 < 1e-12 and rep.passed()
    for m in (ms.m1, ms.m2, ms.m3):
        assert abs(m(0.0)) < 1e-14


def test_haar_maskset():
    ms = masks_from_b(HAAR, TrigPoly.zero())
    assert ms.m2.is_zero and ms.m3.is_zero
    assert coef_dist(ms.m1, TrigPoly(np.array([0, -0.5, 0.5]))) < 1e-16
    rep = verify_uep(ms)
    assert rep.r1 < 1e-14 and rep.r2 < 1e-14


def test_planted_fault_m2_zeroed():
    d = find_K0(TrigPoly.constant(1.0), build_tau(1))
    good = wavelet_masks(d)
    bad = MaskSet(good.m0, good.m1, TrigPoly.zero(), good.m3)
    rep = verify_uep(bad)
    expected = float(np.max(np.abs(grid_values(good.m2, 4096)) ** 2))
    assert rep.r1 == pytest.approx(expected, rel=1e-9) and rep.r1 > 1e-3
    assert not rep.passed()


def test_energy_split():
    d = find_K0(TrigPoly.constant(1.0), build_tau(2))
    ms = wavelet_masks(d)
    split = mod_squared(ms.m2) + mod_squared(ms.m3)
    assert coef_dist(split, mod_squared(ms.b)) < 1e-14


def test_verify_grid_precondition():
    ms = masks_from_b(HAAR, TrigPoly.zero())
    with pytest.raises(ParameterError):
        verify_uep(ms, M=3)


def test_pair_cancellation_random():
    # 200 random trig polynomials of degree <= 20
    rng = np.random.default_rng(20)
    for _ in range(200):
        d = int(rng.integers(0, 21))
        m = TrigPoly(rng.standard_normal(2 * d + 1) + 1j * rng.standard_normal(2 * d + 1))
        mp = shift(conj_poly(reflect_pi(m)), 1)
        assert coef_dist(mp, partner_mask(m)) == 0
        lhs, rhs = pair_product(mp), -pair_product(m)
        scale = max(1.0, float(np.max(np.abs(rhs.coeffs))))
        assert coef_dist(lhs, rhs) <= 1e-12 * scale


def test_masks_json_roundtrip(tmp_path):
    import json

    d = find_K0(TrigPoly.constant(1.0), build_tau(1))
    ms = wavelet_masks(d, provenance={"source": "one"})
    p = tmp_path / "masks.json"
    p.write_text(json.dumps(ms.to_json()))
    back = load_masks(p)
    assert back.N0 == 1 and back.K0 == 1 and back.provenance["source"] == "one"
    for a, b in zip(back.masks, ms.masks):
        assert coef_dist(a, b) == 0
    p.write_text('{"q": 3, "masks": []}')
    with pytest.raises(ParameterError):
        load_masks(p)
