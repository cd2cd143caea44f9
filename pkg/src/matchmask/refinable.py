"""Refinable function, wavelets and the checks that certify a mask set.

Convention: phihat(xi) = int phi(x) e^{-i x xi} dx, so the refinement relation
phihat(2 xi) = m0(xi) phihat(xi) reads phi(x) = 2 sum_k c_k phi(2x + k) in time and
phi is supported in [-k_max, -k_min].
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import ParameterError
from .piecewise import DEFECT_TOL, StabilityDefects, find_defects
from .trigpoly import TrigPoly, derivative_at, evaluate, grid_values, mod_squared, torus_roots
from .uep_masks import MaskSet

MOMENT_TOL = 1e-8
ORDER_TOL = 1e-6
# a few ulps: the coefficient vector itself is only known to rounding
PI_ORDER_TOL = 1e-15
TAIL_TOL = 1e-12


class CascadeWarning(RuntimeWarning):
    pass


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class SampledFunction:
    x: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def x_min(self) -> float:
        return float(self.x[0])

    @property
    def x_max(self) -> float:
        return float(self.x[-1])

    @property
    def step(self) -> float:
        return float(self.x[1] - self.x[0]) if self.x.size > 1 else 0.0

    def integral(self) -> complex:
        """Trapezoid rule on the uniform grid."""
        v = self.values
        if v.size < 2:
            return 0j
        return complex(self.step * (v.sum() - 0.5 * (v[0] + v[-1])))

    def at(self, x) -> np.ndarray:
        """Values at grid points (zero outside the support); x must lie on the grid."""
        x = np.asarray(x, dtype=float)
        h = self.step or 1.0
        idx = np.rint((x - self.x_min) / h).astype(int)
        inside = (idx >= 0) & (idx < self.values.size)
        out = np.zeros(x.shape, dtype=self.values.dtype)
        out[inside] = self.values[idx[inside]]
        return out


def _span(p: TrigPoly) -> tuple[int, int]:
    nz = np.nonzero(np.abs(p.coeffs) > 0)[0]
    if nz.size == 0:
        return 0, 0
    return int(p.indices[nz[0]]), int(p.indices[nz[-1]])


# ---------------------------------------------------------------------------
# frequency side


def phihat_grid(m0: TrigPoly, xi, J_max: int = 64) -> SampledFunction:
    """Truncated infinite product prod_j m0(xi / 2^j)."""
    if J_max < 10:
        raise ParameterError("J_max must be at least 10")
    if abs(m0(0.0) - 1) > 1e-12:
        raise ParameterError("m0(0) must equal 1")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    prod = np.ones(xi.shape, dtype=complex)
    depth = J_max
    tail = math.inf
    for j in range(1, J_max + 1):
        v = evaluate(m0, xi / 2.0**j)
        prod *= v
        tail = float(np.max(np.abs(v - 1))) if xi.size else 0.0
        if tail < TAIL_TOL:
            depth = j
            break
    else:
        warnings.warn(f"phihat product not converged after {J_max} factors (tail {tail:.3g})", ConvergenceWarning)
    prod[xi == 0] = 1.0
    return SampledFunction(xi, prod, {"depth": depth, "tail": tail})


def refinement_residual(m0: TrigPoly, xi, J_max: int = 64) -> float:
    """max |phihat(2 xi) - m0(xi) phihat(xi)| on the given points."""
    xi = np.asarray(xi, dtype=float)
    lhs = phihat_grid(m0, 2 * xi, J_max).values
    rhs = evaluate(m0, xi) * phihat_grid(m0, xi, J_max).values
    return float(np.max(np.abs(lhs - rhs)))


# ---------------------------------------------------------------------------
# time side


def cascade_time(m0: TrigPoly, levels: int) -> SampledFunction:
    """Subdivision phi_{j+1}(x) = 2 sum_k c_k phi_j(2x + k) from the hat sampled at the integers."""
    if levels < 0:
        raise ParameterError("levels must be nonnegative")
    if abs(m0(0.0) - 1) > 1e-12:
        raise ParameterError("m0(0) must equal 1")
    kmin, kmax = _span(m0)
    even = sum(m0.coef(k) for k in range(kmin, kmax + 1) if k % 2 == 0)
    odd = sum(m0.coef(k) for k in range(kmin, kmax + 1) if k % 2)
    if abs(even - 0.5) > 1e-8 or abs(odd - 0.5) > 1e-8:
        raise ParameterError(f"mask sums over even/odd indices must be 1/2 (got {even:.6g}, {odd:.6g})")
    D = kmax - kmin
    c = np.array([m0.coef(k) for k in range(kmin, kmax + 1)])
    v = np.zeros(D + 1, dtype=complex)
    v[kmax] = 1.0  # x = 0 sits at index kmax on the grid starting at -kmax
    sup_prev = 1.0
    diverged = False
    for j in range(levels):
        w = np.zeros(D * 2**j + 1, dtype=complex)
        w[(kmax - np.arange(kmin, kmax + 1)) * 2**j] = c
        v = 2 * _conv(v, w)
        sup = float(np.max(np.abs(v)))
        if sup > 2 * sup_prev and sup > 4:
            diverged = True
        sup_prev = sup
    if diverged:
        warnings.warn("unstable cascade: sup norm doubled across iterations", CascadeWarning)
    x = -kmax + np.arange(v.size) / 2.0**levels
    return SampledFunction(x, v, {"levels": levels, "diverged": diverged})


def _conv(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if min(a.size, b.size) < 64:
        return np.convolve(a, b)
    return fftconvolve(a, b)


def wavelet_time(ms: MaskSet, levels: int | None = None, phi: SampledFunction | None = None):
    """psi_r(x) = 2 sum_k c_k^(r) phi(2x + k) for r = 1, 2, 3 on phi's grid spacing."""
    if phi is None:
        if levels is None:
            raise ParameterError("give levels or phi")
        phi = cascade_time(ms.m0, levels)
    L = int(phi.meta.get("levels", levels or 0))
    k0min, k0max = _span(ms.m0)
    out = []
    for m in (ms.m1, ms.m2, ms.m3):
        kmin, kmax = _span(m)
        start = (-k0max - kmax) / 2
        count = ((k0max - k0min) + (kmax - kmin)) * 2**L // 2 + 1
        x = start + np.arange(count) / 2.0**L
        if m.is_zero:
            out.append(SampledFunction(x, np.zeros(count, dtype=complex), {"levels": L}))
            continue
        w = np.zeros((kmax - kmin) * 2**L + 1, dtype=complex)
        w[(kmax - np.arange(kmin, kmax + 1)) * 2**L] = [m.coef(k) for k in range(kmin, kmax + 1)]
        y = _conv(phi.values, w)
        out.append(SampledFunction(x, 2 * y[0 : 2 * count : 2], {"levels": L}))
    return tuple(out)


def partition_of_unity(phi: SampledFunction) -> float:
    """max over x in [0, 1) of |sum_k phi(x + k) - 1| on the sample grid."""
    n = int(round(1 / phi.step)) if phi.step else 1
    offset = int(round((phi.x_min - math.floor(phi.x_min)) * n)) % n
    total = np.zeros(n, dtype=complex)
    pos = (offset + np.arange(phi.values.size)) % n
    np.add.at(total, pos, phi.values)
    return float(np.max(np.abs(total - 1)))


# ---------------------------------------------------------------------------
# certificates


@dataclass
class MomentsReport:
    moments: list  # moments[r-1][j] = |m_r^{(j)}(0)|
    order: int
    value: float
    expected: float
    tol: float
    N0: int

    @property
    def moments_ok(self) -> bool:
        return all(v < self.tol for row in self.moments for v in row)

    @property
    def order_ok(self) -> bool:
        return self.order == 2 * self.N0 + 2

    @property
    def value_ok(self) -> bool:
        if not math.isfinite(self.expected):
            return True
        return abs(self.value - self.expected) <= 0.01 * abs(self.expected)

    @property
    def passed(self) -> bool:
        return self.moments_ok and self.order_ok and self.value_ok

    def to_json(self) -> dict:
        return {
            "moments": self.moments,
            "order_at_0": self.order,
            "leading_derivative": self.value,
            "expected_leading_derivative": self.expected,
            "passed": self.passed,
        }


def _derivs_at0(p: TrigPoly, n: int) -> np.ndarray:
    return np.array([derivative_at(p, j, 0.0) for j in range(n + 1)])


def one_minus_mod2_derivatives(m0: TrigPoly, n: int) -> np.ndarray:
    """Derivatives 0..n of 1 - |m0|^2 at 0 by the Leibniz rule on m0's own derivatives."""
    d = _derivs_at0(m0, n)
    dc = np.conj(d)
    out = np.empty(n + 1)
    for j in range(n + 1):
        out[j] = -sum(math.comb(j, i) * d[i] * dc[j - i] for i in range(j + 1)).real
    out[0] += 1
    return out


def first_nonvanishing(values: np.ndarray, norm: float, tol: float = ORDER_TOL) -> int:
    """Smallest j with |values[j]| > tol * j! * norm, or -1."""
    for j, v in enumerate(values):
        if abs(v) > tol * math.factorial(j) * norm:
            return j
    return -1


def moments_check(ms: MaskSet, N0: int, K0: int | None = None, c: float | None = None,
                  tol: float = MOMENT_TOL) -> MomentsReport:
    moments = [[float(abs(v)) for v in _derivs_at0(m, N0)] for m in (ms.m1, ms.m2, ms.m3)]
    J = 2 * N0 + 2
    vals = one_minus_mod2_derivatives(ms.m0, J + 2)
    norm = max(1.0, mod_squared(ms.m0).norm1())
    order = first_nonvanishing(vals, norm)
    value = float(vals[order]) if order >= 0 else 0.0
    if K0 is not None and c is not None:
        expected = math.factorial(J) * 2 * K0 * c
    else:
        expected = math.nan
    return MomentsReport(moments, order, value, expected, tol, N0)


def stability_check(m0: TrigPoly, tol: float = DEFECT_TOL) -> StabilityDefects:
    return find_defects(torus_roots(m0), tol)


def _signed_basis(n: int, M: int, sign: float) -> np.ndarray:
    """Orthonormal basis of {sign^k p(k): deg p < M} on k = 0..n (Chebyshev columns, then QR)."""
    k = np.arange(n + 1)
    t = 2 * k / max(n, 1) - 1
    cols = np.polynomial.chebyshev.chebvander(t, M - 1)
    q, _ = np.linalg.qr(cols * (sign**k)[:, None])
    return q


def zero_order_at(p: TrigPoly, z0: float, tol: float = PI_ORDER_TOL) -> int:
    """Numerical multiplicity of the root z0 = +-1 of z^d p(z).

    The largest m such that the coefficient vector lies within tol (relative) of the
    polynomials divisible by (z - z0)^m. The orthogonal complement of those is spanned by
    z0^k q(k), deg q < m, so every distance is one projection onto a stable basis.
    """
    a = np.array(p.coeffs)
    nz = np.nonzero(np.abs(a) > 0)[0]
    if nz.size == 0:
        raise ParameterError("the zero polynomial has no finite root order")
    a = a[nz[0] : nz[-1] + 1]
    n = a.size - 1
    if n == 0:
        return 0
    norm = float(np.linalg.norm(a))
    M = min(n, 96)
    Q = _signed_basis(n, M, z0)
    proj = np.abs(Q.T @ a) ** 2
    dist = np.sqrt(np.cumsum(proj))
    m = int(np.searchsorted(dist > tol * norm, True))
    return m


def order_at_pi(m0: TrigPoly, tol: float = PI_ORDER_TOL) -> int:
    return zero_order_at(m0, -1.0, tol)


# ---------------------------------------------------------------------------
# filter bank


@dataclass
class EnergyReport:
    bands: list
    total: float
    ratio: float

    def to_json(self) -> dict:
        return {"bands": self.bands, "total": self.total, "ratio": self.ratio}


def analyze(ms: MaskSet, x) -> list[np.ndarray]:
    """y_r[n] = sqrt(2) sum_k conj(c_k) x[(2n + k) mod L] for r = 0..3 (circular)."""
    x = np.asarray(x, dtype=complex).ravel()
    L = x.size
    if L == 0 or L % 2:
        raise ParameterError(f"signal length must be even and positive, got {L}")
    X = np.fft.fft(x)
    out = []
    idx = (-np.arange(L)) % L
    for m in ms.masks:
        mv = grid_values(m, L, start=0.0)[idx]  # m at -2 pi j / L, folded for L <= deg
        y = np.fft.ifft(X * np.conj(mv))
        out.append(math.sqrt(2) * y[::2])
    return out


def filterbank_energy(ms: MaskSet, x) -> EnergyReport:
    x = np.asarray(x).ravel()
    total = float(np.sum(np.abs(x) ** 2))
    if total == 0:
        raise ParameterError("signal has zero energy")
    bands = [float(np.sum(np.abs(y) ** 2)) for y in analyze(ms, x)]
    return EnergyReport(bands, total, sum(bands) / total)


def analysis_matrix(ms: MaskSet, L: int) -> np.ndarray:
    """Brute-force (2L x L) matrix of the one-level analysis operator."""
    if L <= 0 or L % 2:
        raise ParameterError("L must be even and positive")
    A = np.zeros((2 * L, L), dtype=complex)
    row = 0
    for m in ms.masks:
        for n in range(L // 2):
            for k, ck in zip(m.indices, m.coeffs):
                if ck != 0:
                    A[row, (2 * n + k) % L] += math.sqrt(2) * np.conj(ck)
            row += 1
    return A


def matched_mask_error(f, T: TrigPoly, M: int = 8192) -> float:
    """Grid sup |f - T|; equals |f - tau^{-K0} m0| since m0 = tau^K0 T."""
    xs = -math.pi + 2 * math.pi * np.arange(M) / M
    return float(np.max(np.abs(np.asarray(f(xs)) - grid_values(T, M))))
