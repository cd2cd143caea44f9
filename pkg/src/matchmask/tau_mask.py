"""Correction factor tau and the search for the smallest admissible power K0.

tau(xi) = 1 - (int_0^xi sin^{2N0+1}) / W with W = int_0^pi sin^{2N0+1}. With u = cos t
the integrand becomes (1 - u^2)^N0, so tau = 1/2 + F(cos xi)/W where F is the odd
antiderivative of (1 - u^2)^N0. Everything up to the final float conversion is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DesignError, MatchMaskError, ParameterError
from .trigpoly import TrigPoly, grid_values, mod_squared, next_pow2, power, reflect_pi

K_CAP = 64
AK_TOL = 1e-12
# factorization residual accepted as a certificate; tight enough for 1e-10 UEP residuals
CERT_TOL = 1e-11


def wallis(N0: int) -> Fraction:
    """W = int_0^pi sin^{2N0+1} t dt = 2 (2^N0 N0!)^2 / (2N0+1)!."""
    return Fraction(2 * (2**N0 * math.factorial(N0)) ** 2, math.factorial(2 * N0 + 1))


def tau_cos_coeffs(N0: int) -> dict[int, Fraction]:
    """Exact cosine coefficients {m: a_m} with tau = sum a_m cos(m xi)."""
    if N0 < 0:
        raise ParameterError("N0 must be nonnegative")
    W = wallis(N0)
    out: dict[int, Fraction] = {0: Fraction(1, 2)}
    for j in range(N0 + 1):
        n = 2 * j + 1
        coef = Fraction(math.comb(N0, j) * (-1) ** j, n) / W
        # cos^n = 2^{1-n} sum_{k < n/2} C(n,k) cos((n-2k) xi)  (n odd)
        for k in range((n + 1) // 2):
            m = n - 2 * k
            out[m] = out.get(m, Fraction(0)) + coef * Fraction(math.comb(n, k), 2 ** (n - 1))
    return {m: a for m, a in out.items() if a != 0}


@dataclass(frozen=True, eq=False)
class TauPoly:
    N0: int
    poly: TrigPoly
    W: float
    c: float
    exact: dict

    def __call__(self, xi):
        return self.poly(xi)


def build_tau(N0: int) -> TauPoly:
    exact = tau_cos_coeffs(N0)
    W = wallis(N0)
    terms = {0: complex(exact[0])}
    for m, a in exact.items():
        if m:
            terms[m] = terms[-m] = float(a) / 2
    c = 1 / ((2 * N0 + 2) * W)
    return TauPoly(N0, TrigPoly.from_dict(terms), float(W), float(c), exact)


def build_AK(T: TrigPoly, tau: TauPoly, K: int) -> TrigPoly:
    """A_K = |tau^K T|^2 + the same at xi + pi."""
    if K < 0:
        raise ParameterError("K must be nonnegative")
    q = mod_squared(power(tau.poly, K) * T)
    A = q + reflect_pi(q)
    # odd harmonics cancel exactly in theory
    c = np.array(A.coeffs)
    c[(A.indices % 2) != 0] = 0
    c = 0.5 * (c + np.conj(c[::-1]))
    return TrigPoly(c)


def ak_grid_max(A: TrigPoly) -> float:
    M = max(64, next_pow2(8 * max(A.degree, 1)))
    return float(np.max(grid_values(A, M).real))


@dataclass(frozen=True, eq=False)
class MaskDesign:
    m0: TrigPoly
    T: TrigPoly
    tau: TauPoly
    K0: int
    P: TrigPoly
    ak_max: float
    b: TrigPoly | None = None
    history: tuple = ()


def find_K0(T: TrigPoly, tau: TauPoly, cap: int = K_CAP, tol: float = CERT_TOL) -> MaskDesign:
    """Smallest K whose A_K passes the grid pre-check and whose 1 - A_K factors."""
    from .uep_masks import factor_pi_periodic

    if abs(T(0.0) - 1) > 1e-12:
        raise ParameterError(f"T(0) must be 1, got {T(0.0)}")
    history = []
    for K in range(1, cap + 1):
        A = build_AK(T, tau, K)
        amax = ak_grid_max(A)
        if amax > 1 + AK_TOL:
            history.append((K, amax, "grid"))
            continue
        P = TrigPoly.constant(1.0) - A
        try:
            b = factor_pi_periodic(P, tol, zero_order=2 * tau.N0 + 2)
        except MatchMaskError as exc:
            history.append((K, amax, f"factor: {exc}"))
            continue
        m0 = power(tau.poly, K) * T
        return MaskDesign(m0, T, tau, K, P, amax, b, tuple(history))
    raise DesignError(
        f"no admissible K up to {cap}",
        stage="tau_mask",
        diagnostics={"history": history},
    )
