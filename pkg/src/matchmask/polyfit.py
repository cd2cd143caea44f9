"""Trigonometric approximation of the repaired polyline, flattened at the origin.

``T1`` is a de la Vallee Poussin mean of the exact polyline Fourier series.
``T2`` is a sparse high-frequency correction whose cosine and sine amplitudes
solve two small Vandermonde systems, so that T1 + T2 has vanishing derivatives
of orders 1..J at 0. ``T`` is the sum normalized to T(0) = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DesignError, DomainError, NumericalError, ParameterError
from .piecewise import DEFECT_TOL, PiecewiseLinear, StabilityDefects, find_defects, fourier_coeffs_pl
from .trigpoly import TWO_PI, TrigPoly, derivative_at, evaluate, grid_values, next_pow2, torus_roots

T1_DEGREE_CAP = 2**16
S_CAP = 2**30
DERIV_RTOL = 1e-8


@dataclass(frozen=True)
class FlattenSpec:
    J: int
    cos_freqs: tuple[int, ...]
    sin_freqs: tuple[int, ...]
    alphas: tuple[float, ...]
    betas: tuple[float, ...]
    s: int
    gammas: tuple[float, ...] = ()

    def poly(self) -> TrigPoly:
        """T2 = sum alpha_i cos(N_i xi) + sum beta_i sin(K_i xi)."""
        terms: dict[int, complex] = {}
        for N, a in zip(self.cos_freqs, self.alphas):
            terms[N] = terms.get(N, 0) + a / 2
            terms[-N] = terms.get(-N, 0) + a / 2
        for K, b in zip(self.sin_freqs, self.betas):
            terms[K] = terms.get(K, 0) + b / 2j
            terms[-K] = terms.get(-K, 0) - b / 2j
        return TrigPoly.from_dict(terms) if terms else TrigPoly.zero()

    @property
    def max_amplitude(self) -> float:
        return max([abs(a) for a in self.alphas] + [abs(b) for b in self.betas], default=0.0)

    @property
    def l1(self) -> float:
        return sum(abs(a) for a in self.alphas) + sum(abs(b) for b in self.betas)

    def to_json(self) -> dict:
        return {
            "J": self.J,
            "s": self.s,
            "cos_freqs": list(self.cos_freqs),
            "sin_freqs": list(self.sin_freqs),
            "alphas": list(self.alphas),
            "betas": list(self.betas),
        }


@dataclass(frozen=True, eq=False)
class FitResult:
    T: TrigPoly
    T1: TrigPoly
    T2: TrigPoly
    eps1: float
    sup_error: float
    defects: StabilityDefects
    flatten: FlattenSpec
    T1_order: int = 0
    max_derivative: float = 0.0


@dataclass
class VerifyReport:
    passed: bool
    sup_error: float
    defects: StabilityDefects
    messages: list[str] = field(default_factory=list)


def pick_epsilon1(eps: float, alpha: float, a: float) -> float:
    """eps1 = min(eps/2, alpha*a/2)."""
    if eps <= 0 or alpha <= 0 or a <= 0:
        raise DomainError("eps, alpha and a must be positive")
    prod = alpha * a
    if prod == 0:
        raise DomainError("alpha * a vanishes")
    return min(eps / 2, prod / 2)


# ---------------------------------------------------------------------------
# T1


def vallee_poussin(coeffs: TrigPoly, n: int) -> TrigPoly:
    """V_n = 2 sigma_{2n} - sigma_n applied to a Fourier series truncated at 2n - 1."""
    k = np.abs(coeffs.indices)
    w = np.where(k <= n, 1.0, np.clip(2.0 - k / n, 0.0, None))
    return TrigPoly(coeffs.coeffs * w)


def _check_grid(f3: PiecewiseLinear, M: int) -> np.ndarray:
    pts = np.union1d(-math.pi + TWO_PI * np.arange(M) / M, f3.xs)
    return pts


def polyline_error(f3: PiecewiseLinear, T: TrigPoly, M: int = 2**14) -> tuple[float, float]:
    """(grid sup |f3 - T|, guard) with the grid containing every node of f3.

    Between consecutive grid points f3 - T has second derivative bounded by
    sum k^2 |c_k|, so the continuum sup exceeds the grid sup by at most
    guard = that bound * gap^2 / 8.
    """
    M = max(M, next_pow2(64 * max(T.degree, 1)))
    uniform = grid_values(T, M).real
    xs_u = -math.pi + TWO_PI * np.arange(M) / M
    err = float(np.max(np.abs(f3(xs_u) - uniform)))
    err = max(err, float(np.max(np.abs(f3(f3.xs) - evaluate(T, f3.xs).real))))
    pts = _check_grid(f3, M)
    gap = float(np.max(np.diff(np.r_[pts, pts[0] + TWO_PI])))
    bound2 = float(np.sum(T.indices.astype(float) ** 2 * np.abs(T.coeffs)))
    return err, bound2 * gap**2 / 8


def build_T1(f3: PiecewiseLinear, eps1: float, degree_cap: int = T1_DEGREE_CAP, refine: bool = True):
    """Smallest de la Vallee Poussin mean within eps1/2 of f3 (certified); returns (T1, n).

    Doubles n until the bound holds, then bisects back down when ``refine``.
    """
    if eps1 <= 0:
        raise ParameterError("eps1 must be positive")
    target = eps1 / 2
    coeffs_cache: dict[int, TrigPoly] = {}

    def attempt(n):
        d = 2 * n - 1
        if d not in coeffs_cache:
            coeffs_cache[d] = fourier_coeffs_pl(f3, max(d, 1))
        T1 = vallee_poussin(coeffs_cache[d], n)
        T1 = TrigPoly(0.5 * (T1.coeffs + np.conj(T1.coeffs[::-1])))
        err, guard = polyline_error(f3, T1)
        return T1, err + guard

    n = 1
    history = []
    while True:
        T1, bound = attempt(n)
        history.append((n, bound))
        if bound < target:
            break
        if 2 * n - 1 > degree_cap:
            raise NumericalError(
                f"eps1 unreachable: error {bound:.3g} >= {target:.3g} at degree {2 * n - 1}",
                stage="polyfit",
                diagnostics={"history": history},
            )
        n *= 2
    if refine and n > 1:
        lo, hi = n // 2, n  # lo fails, hi passes
        best = T1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            cand, bound = attempt(mid)
            if bound < target:
                hi, best = mid, cand
            else:
                lo = mid
        T1, n = best, hi
    return T1, n


# ---------------------------------------------------------------------------
# T2


def derivative_targets(T1: TrigPoly, J: int) -> np.ndarray:
    """gamma_j = T1^{(j)}(0), j = 1..J (real for real T1)."""
    return np.array([derivative_at(T1, j, 0.0).real for j in range(1, J + 1)])


def frequencies(J: int, s: int, offset: bool = True) -> tuple[list[int], list[int]]:
    """Cosine frequencies s*i and sine frequencies s*i (+ s*floor(J/2) when ``offset``)."""
    n_cos, n_sin = J // 2, (J + 1) // 2
    shift = s * n_cos if offset else 0
    return [s * i for i in range(1, n_cos + 1)], [s * i + shift for i in range(1, n_sin + 1)]


def _equilibrated_solve(V: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if V.size == 0:
        return np.zeros(0)
    r = 1.0 / np.max(np.abs(V), axis=1)
    Vr = V * r[:, None]
    c = 1.0 / np.max(np.abs(Vr), axis=0)
    y = np.linalg.solve(Vr * c[None, :], rhs * r)
    x = y * c
    resid = np.max(np.abs((V @ x - rhs) * r)) if rhs.size else 0.0
    scale = max(float(np.max(np.abs(rhs * r))), 1e-300)
    if np.any(rhs) and resid > 1e-6 * scale:
        raise NumericalError(f"Vandermonde solve residual {resid:.3g} too large", stage="polyfit")
    return x


def flatten_amplitudes(gammas: np.ndarray, J: int, s: int, offset: bool = True):
    """Solve both systems for frequency multiplier s; returns (N, K, alphas, betas).

    T2^{(2k)}(0) = (-1)^k sum alpha_i N_i^{2k} and
    T2^{(2k-1)}(0) = (-1)^{k-1} sum beta_i K_i^{2k-1}; both are set to -gamma.
    """
    N, K = frequencies(J, s, offset)
    g = np.asarray(gammas, dtype=float)
    ke = np.arange(1, len(N) + 1)
    ko = np.arange(1, len(K) + 1)
    Ve = np.array([[float(n) ** (2 * k) for n in N] for k in ke]).reshape(len(ke), len(N))
    Vo = np.array([[float(m) ** (2 * k - 1) for m in K] for k in ko]).reshape(len(ko), len(K))
    rhs_e = np.array([(-1.0) ** (k + 1) * g[2 * k - 1] for k in ke])
    rhs_o = np.array([(-1.0) ** k * g[2 * k - 2] for k in ko])
    return N, K, _equilibrated_solve(Ve, rhs_e), _equilibrated_solve(Vo, rhs_o)


def solve_flatten(T1: TrigPoly, J: int, eps1: float, s0: int = 1, offset: bool = True, refine: bool = True) -> FlattenSpec:
    """Grow the frequency multiplier until every amplitude is below eps1/(2J)."""
    if J < 1:
        raise ParameterError("J must be >= 1")
    gammas = derivative_targets(T1, J)
    bound = eps1 / (2 * J)

    def attempt(s):
        N, K, a, b = flatten_amplitudes(gammas, J, s, offset)
        spec = FlattenSpec(J, tuple(N), tuple(K), tuple(a), tuple(b), s, tuple(gammas))
        # one step of iterative refinement against the assembled derivatives
        resid = derivative_targets(T1 + spec.poly(), J)
        if np.any(resid):
            _, _, da, db = flatten_amplitudes(resid, J, s, offset)
            spec = FlattenSpec(J, tuple(N), tuple(K), tuple(a + da), tuple(b + db), s, tuple(gammas))
        return FlattenSpec(J, spec.cos_freqs, spec.sin_freqs, tuple(map(float, spec.alphas)),
                           tuple(map(float, spec.betas)), s, tuple(map(float, gammas)))

    s = max(1, int(s0))
    spec = attempt(s)
    while spec.max_amplitude >= bound:
        if s > S_CAP:
            raise NumericalError(f"frequency multiplier exceeded {S_CAP}", stage="polyfit")
        s *= 2
        spec = attempt(s)
    if refine and s > max(1, int(s0)):
        lo, hi = s // 2, s
        while hi - lo > 1:
            mid = (lo + hi) // 2
            cand = attempt(mid)
            if cand.max_amplitude < bound:
                hi, spec = mid, cand
            else:
                lo = mid
    return spec


# ---------------------------------------------------------------------------
# T


def assemble_T(T1: TrigPoly, spec: FlattenSpec, tol: float = DEFECT_TOL, eps1: float = math.nan,
               f3: PiecewiseLinear | None = None) -> FitResult:
    T2 = spec.poly()
    S = T1 + T2
    norm = S(0.0).real
    if abs(norm) < 0.5:
        raise DesignError(f"normalization too far from 1: T1(0)+T2(0) = {norm:.3g}", stage="polyfit")
    T = S / norm
    T = TrigPoly(0.5 * (T.coeffs + np.conj(T.coeffs[::-1])))
    # relative to the size of the terms that cancel in the j-th derivative sum
    k = np.abs(T.indices).astype(float)
    mag = np.abs(T.coeffs)
    worst = 0.0
    for j in range(1, spec.J + 1):
        worst = max(worst, abs(derivative_at(T, j)) / max(1.0, float(np.sum(k**j * mag))))
    if abs(T(0.0) - 1) > 1e-12 or worst > DERIV_RTOL:
        raise NumericalError(
            f"flattening failed: |T(0)-1| = {abs(T(0.0) - 1):.2g}, max relative derivative {worst:.3g}", stage="polyfit"
        )
    defects = find_defects(torus_roots(T), tol)
    err = math.nan
    if f3 is not None:
        e, guard = polyline_error(f3, T)
        err = e + guard
    return FitResult(T, T1, T2, eps1, err, defects, spec, max_derivative=worst)


def verify_T(T: TrigPoly, f3: PiecewiseLinear, eps1: float, alpha: float = math.inf, a: float = math.inf,
             tol: float = DEFECT_TOL) -> VerifyReport:
    """Sup-distance below eps1 and a defect-free root set, reported as data."""
    err, guard = polyline_error(f3, T)
    msgs = []
    if not err + guard < eps1:
        msgs.append(f"sup error {err + guard:.3g} >= eps1 {eps1:.3g}")
    roots = torus_roots(T)
    defects = find_defects(roots, tol)
    for p, q in defects.symmetric_pairs:
        msgs.append(f"symmetric pair: roots {p:.6f} and {q:.6f}")
    for cyc in defects.cycles:
        msgs.append(f"cycle (m={cyc.m}, n={cyc.n}): beta = {', '.join(f'{b:.6f}' for b in cyc.betas)}")
    if math.isfinite(alpha) and math.isfinite(a) and not eps1 < alpha * a:
        msgs.append(f"eps1 {eps1:.3g} not below alpha*a = {alpha * a:.3g}")
    return VerifyReport(not msgs, err + guard, defects, msgs)


def fit(f3: PiecewiseLinear, eps1: float, J: int, tol: float = DEFECT_TOL, offset: bool = False) -> FitResult:
    """T1, flattening and assembly in one call."""
    T1, n = build_T1(f3, eps1)
    spec = solve_flatten(T1, J, eps1, offset=offset)
    res = assemble_T(T1, spec, tol, eps1, f3)
    return FitResult(res.T, res.T1, res.T2, eps1, res.sup_error, res.defects, spec, n, res.max_derivative)
