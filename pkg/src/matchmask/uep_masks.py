"""Spectral factorization of P = 1 - |m0|^2 - |m0(.+pi)|^2 and the three wavelet masks.

m1 = e^{i xi} conj(m0(xi+pi)), m2 = b (1 + e^{i xi})/2, m3 = e^{i xi} conj(m2(xi+pi)),
with |b|^2 = P. Together with m0 these satisfy the unitary extension identities

    sum_r |m_r(xi)|^2 = 1,    sum_r m_r(xi) conj(m_r(xi+pi)) = 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve
from scipy.sparse.linalg import LinearOperator, lsqr

from .errors import DomainError, NumericalError, ParameterError
from .trigpoly import (
    COMPANION_MAX_DEGREE,
    TrigPoly,
    conj_poly,
    deflate,
    grid_values,
    mod_squared,
    next_pow2,
    reflect_pi,
    shift,
)

RIESZ_TOL = 1e-8
CIRCLE_TOL = 1e-6
ZERO_TOL = 1e-13
CEPSTRUM_MAX = 2**22
DENSE_POLISH_MAX = 1024
LSQR_ITER = 4000


# ---------------------------------------------------------------------------
# Riesz factorization


def _from_ascending(beta: np.ndarray) -> TrigPoly:
    """TrigPoly sum beta_k e^{ik xi}, k = 0..len-1."""
    d = beta.size - 1
    c = np.zeros(2 * d + 1, dtype=complex)
    c[d:] = beta
    return TrigPoly(c)


def _companion_core(q: np.ndarray, nfft: int) -> np.ndarray | None:
    """Monic-up-to-scale factor of q from the roots inside the disc plus half the circle roots.

    Returns ascending coefficients, or None when the root split is inconsistent.
    """
    n = q.size - 1
    if n == 0:
        return np.ones(1, dtype=complex)
    roots = np.roots(q[::-1])
    radius = np.abs(roots)
    on = np.abs(radius - 1) <= CIRCLE_TOL
    inside = roots[(~on) & (radius < 1)]
    circ = roots[on]
    if circ.size % 2:
        return None
    # pair circle roots with their nearest angular neighbour
    ang = np.sort(np.angle(circ))
    if ang.size:
        gaps = np.diff(np.r_[ang, ang[0] + 2 * math.pi])
        start = 0 if gaps[0::2].sum() <= gaps[1::2].sum() else 1
        ang = np.roll(ang, -start)
        first, second = ang[0::2], ang[1::2]
        second = np.where(second < first, second + 2 * math.pi, second)
        circ_half = np.exp(1j * (first + second) / 2)
    else:
        circ_half = np.zeros(0, dtype=complex)
    chosen = np.r_[inside, circ_half]
    if 2 * chosen.size != n:
        return None
    # evaluate the product on a half-shifted grid through logarithms, then transform
    w = 2 * math.pi * (np.arange(nfft) + 0.5) / nfft
    z = np.exp(1j * w)
    logs = np.zeros(nfft, dtype=complex)
    for r in chosen:
        logs += np.log(z - r)
    logs -= np.mean(logs.real)
    vals = np.exp(logs)
    k = np.arange(nfft)
    beta = np.fft.fft(vals) / nfft * np.exp(-1j * math.pi * k / nfft)
    return beta[: chosen.size + 1]


def _cepstral_core(R: TrigPoly, nfft: int) -> np.ndarray | None:
    """Spectral factor of a strictly positive Laurent polynomial via the real cepstrum."""
    d = R.degree
    vals = grid_values(R, nfft, start=0.0).real
    sign = 1.0 if np.median(vals) > 0 else -1.0
    vals = sign * vals
    if np.min(vals) <= 0:
        return None
    g = np.fft.fft(0.5 * np.log(vals)) / nfft
    G = np.zeros(nfft, dtype=complex)
    G[0] = g[0]
    G[1 : nfft // 2] = 2 * g[1 : nfft // 2]
    G[nfft // 2] = g[nfft // 2]
    h = np.exp(nfft * np.fft.ifft(G))
    beta = np.fft.fft(h) / nfft
    h_coef = beta[: d + 1]
    # zeros of the minimum-phase factor lie outside; reverse to put them inside
    return np.conj(h_coef[::-1])


def riesz_factor(P: TrigPoly, tol: float = RIESZ_TOL, method: str = "auto", zero_order: int | None = None) -> TrigPoly:
    """b with |b|^2 = P, highest-index coefficient real positive.

    ``zero_order`` is the (even) order of a zero of P at z = 1 known from the construction;
    it is then imposed on b exactly instead of being detected from rounded coefficients.
    """
    if not P.is_real_valued(1e-10 * max(1.0, P.norm1())):
        raise DomainError("P is not real-valued", stage="uep_masks")
    if P.is_zero or float(np.max(np.abs(P.coeffs))) <= ZERO_TOL:
        return TrigPoly.zero()
    if method not in ("auto", "companion", "cepstral"):
        raise ParameterError(f"unknown factorization method {method!r}")
    d = P.degree
    pv = grid_values(P, max(64, next_pow2(8 * (d + 1)))).real
    if np.min(pv) < -tol * (1 + P.norm1()):
        raise DomainError(f"P is negative on the grid (min {np.min(pv):.3g})", stage="uep_masks")
    pnorm = float(np.linalg.norm(P.coeffs))
    if zero_order and zero_order % 2:
        raise ParameterError("zero_order must be even")
    if zero_order and d <= DENSE_POLISH_MAX:
        # the matrix-free polish does not converge on the structured problem, so large degrees skip it
        b = _structured_factor(P, zero_order, tol)
        if b is not None and np.linalg.norm((mod_squared(b) - P).padded(d)) <= tol * (1 + pnorm):
            return b
    a = np.array(P.coeffs)
    a, m_plus = deflate(a, 1.0)
    a, m_minus = deflate(a, -1.0)
    if m_plus % 2 or m_minus % 2:
        raise DomainError(
            f"P not nonnegative (or degenerate) at tolerance: odd zero order at z = +-1 ({m_plus}, {m_minus})",
            stage="uep_masks",
        )
    rest = a.size - 1
    nfft = max(64, next_pow2(4 * (rest + 1)))
    routes = [method] if method != "auto" else (
        ["companion", "cepstral"] if rest // 2 <= COMPANION_MAX_DEGREE else ["cepstral", "companion"]
    )
    best = None
    tried = []
    for route in routes:
        if route == "companion":
            if rest // 2 > 4 * COMPANION_MAX_DEGREE:
                continue
            cands = [_companion_core(a, nfft)]
        else:
            R = TrigPoly(a)
            cands = []
            n = max(nfft, next_pow2(16 * (rest + 1)))
            while n <= CEPSTRUM_MAX:
                cands.append((n, R))
                n *= 4
        for cand in cands:
            core = _cepstral_core(cand[1], cand[0]) if route == "cepstral" else cand
            if core is None:
                continue
            b = _finish(core, m_plus // 2, m_minus // 2, P)
            res = float(np.linalg.norm((mod_squared(b) - P).padded(d)))
            tried.append((route, res))
            if best is None or res < best[1]:
                best = (b, res)
            if res <= tol * (1 + pnorm):
                return b
    if best is None:
        raise DomainError("P not nonnegative (or degenerate) at tolerance: no consistent root split", stage="uep_masks")
    raise NumericalError(
        f"factorization residual {best[1]:.3g} exceeds {tol * (1 + pnorm):.3g}",
        stage="uep_masks",
        diagnostics={"tried": tried},
    )


def _finish(core: np.ndarray, k_plus: int, k_minus: int, P: TrigPoly) -> TrigPoly:
    beta = np.asarray(core, dtype=complex)
    for _ in range(k_plus):
        beta = np.convolve(beta, [-1.0, 1.0])
    for _ in range(k_minus):
        beta = np.convolve(beta, [1.0, 1.0])
    b0 = _from_ascending(beta)
    S = mod_squared(b0)
    D = max(S.degree, P.degree)
    s, p = S.padded(D), P.padded(D)
    lam = float(np.real(np.vdot(s, p)) / np.real(np.vdot(s, s)))
    if lam <= 0:
        raise DomainError("P not nonnegative (or degenerate) at tolerance", stage="uep_masks")
    b = _polish(b0 * math.sqrt(lam), P)
    top = b.coeffs[-1]
    return b * (abs(top) / top)


def _polish(b: TrigPoly, P: TrigPoly, steps: int = 20, w: np.ndarray | None = None) -> TrigPoly:
    """Newton steps on |b|^2 = P with b = w * h and w fixed (ascending coefficients).

    Each step solves conj(b) (w delta) + b conj(w delta) = P - |b|^2 for delta in least
    squares: densely for small degree, matrix-free (LSQR with FFT products) above.
    """
    d = b.degree
    if d == 0 or not np.allclose(b.coeffs[:d], 0):
        return b
    beta = b.coeffs[d:].copy()  # b has indices 0..d only
    w = np.ones(1) if w is None else np.asarray(w, dtype=complex)
    dh = d - (w.size - 1)
    if dh < 0:
        return b
    h = _deconvolve(beta, w, dh)
    D = max(d, P.degree)
    p = P.padded(D)[D : D + d + 1]  # P_m, m = 0..d
    solve = _dense_step if d <= DENSE_POLISH_MAX else _lsqr_step

    def resid(bt):
        s = fftconvolve(bt, np.conj(bt[::-1]))  # indices -d..d
        return p - s[d:]

    r = resid(beta)
    best = float(np.max(np.abs(r)))
    floor = 1e-15 * max(1.0, float(np.max(np.abs(p))))
    for _ in range(steps):
        if best <= floor:
            break
        step = solve(beta, w, dh, r)
        t = 1.0
        while t > 1e-3:  # backtracking
            cand = np.convolve(w, h + t * step)
            rc = resid(cand)
            err = float(np.max(np.abs(rc)))
            if err < best:
                break
            t /= 4
        else:
            break
        stalled = err > 0.9 * best
        beta, h, r, best = cand, h + t * step, rc, err
        if stalled:
            break
    return _from_ascending(beta)


def _corr_kernel(bt: np.ndarray, w: np.ndarray) -> np.ndarray:
    """u_q = sum_i w_i conj(b_{q+i}) for q = -K..d, K = deg w."""
    return np.convolve(np.conj(bt), w[::-1])


def _dense_step(bt, w, dh, r):
    d = bt.size - 1
    K = w.size - 1
    u = _corr_kernel(bt, w)

    def uq(q):  # zero outside -K..d
        q = np.asarray(q)
        ok = (q >= -K) & (q <= d)
        return np.where(ok, u[np.clip(q + K, 0, d + K)], 0)

    m = np.arange(d + 1)[:, None]
    j = np.arange(dh + 1)[None, :]
    A1 = uq(j - m)
    A2 = np.conj(uq(j + m))
    J = np.block([[(A1 + A2).real, (A2.imag - A1.imag)], [(A1 + A2).imag, (A1 - A2).real]])
    x = np.linalg.lstsq(J, np.r_[r.real, r.imag], rcond=1e-13)[0]
    return x[: dh + 1] + 1j * x[dh + 1 :]


def _lsqr_step(bt, w, dh, r):
    d = bt.size - 1
    n = dh + 1
    kb = np.conj(bt[::-1])

    def conv(a, k):
        return fftconvolve(a, k) if min(a.size, k.size) > 32 else np.convolve(a, k)

    def conv_adj(z, k):  # adjoint of a -> conv(a, k), full mode
        return fftconvolve(z, np.conj(k[::-1]), mode="valid") if k.size > 32 else np.convolve(z, np.conj(k[::-1]), mode="valid")

    def mv(x):
        delta = x[:n] + 1j * x[n:]
        c = conv(conv(delta, w), kb)
        y = c[d:] + np.conj(c[d::-1])
        return np.r_[y.real, y.imag]

    def rmv(y):
        y = y[: d + 1] + 1j * y[d + 1 :]
        z = np.zeros(2 * d + 1, dtype=complex)
        z[d:] += y
        z[d::-1] += np.conj(y)
        g = conv_adj(conv_adj(z, kb), w)
        return np.r_[g.real, g.imag]

    op = LinearOperator((2 * (d + 1), 2 * n), matvec=mv, rmatvec=rmv, dtype=float)
    x = lsqr(op, np.r_[r.real, r.imag], atol=1e-15, btol=1e-15, iter_lim=LSQR_ITER)[0]
    return x[:n] + 1j * x[n:]


def _deconvolve(beta: np.ndarray, w: np.ndarray, dh: int) -> np.ndarray:
    if w.size == 1:
        return beta / w[0]
    q = np.linalg.lstsq(
        np.array([[w[i - j] if 0 <= i - j < w.size else 0 for j in range(dh + 1)] for i in range(beta.size)]),
        beta,
        rcond=None,
    )[0]
    return q


def _structured_factor(P: TrigPoly, m: int, tol: float) -> TrigPoly | None:
    """b = (z - 1)^(m/2) h for P with a zero of known even order m at z = 1.

    h comes from the cepstrum of P / |z - 1|^m evaluated on a grid. Where that quotient
    is dominated by rounding (close to z = 1) it is replaced by its value at the edge
    of the reliable band; Newton polishing then repairs h with the factor held fixed.
    """
    d = P.degree
    k = m // 2
    dh = d - k
    if dh < 0:
        return None
    nfft = max(256, next_pow2(32 * (d + 1)))
    om = 2 * math.pi * np.arange(nfft) / nfft
    pv = grid_values(P, nfft, start=0.0).real
    w2 = (2 * np.abs(np.sin(om / 2))) ** m
    pmax = float(np.max(np.abs(pv)))
    reliable = pv > 1e-9 * pmax
    # the unreliable band around omega = 0 is contiguous in a wrapped sense
    dist = np.minimum(om, 2 * math.pi - om)
    edge = dist[reliable].min() if reliable.any() else math.pi
    band = dist < edge
    R = np.empty(nfft)
    R[~band] = pv[~band] / w2[~band]
    if band.any():
        lo = np.where(~band & (om < math.pi), om, np.inf).argmin()
        hi = np.where(~band & (om > math.pi), -om, np.inf).argmin()
        R[band] = 0.5 * (R[lo] + R[hi])
    R = np.maximum(R, 1e-14 * float(np.max(R)))
    g = np.fft.fft(0.5 * np.log(R)) / nfft
    G = np.zeros(nfft, dtype=complex)
    G[0] = g[0]
    G[1 : nfft // 2] = 2 * g[1 : nfft // 2]
    G[nfft // 2] = g[nfft // 2]
    hv = np.exp(nfft * np.fft.ifft(G))
    h = np.conj((np.fft.fft(hv) / nfft)[: dh + 1][::-1])
    w = np.array([1.0])
    for _ in range(k):
        w = np.convolve(w, [-1.0, 1.0])
    b0 = _from_ascending(np.convolve(w, h))
    S = mod_squared(b0)
    D = max(S.degree, P.degree)
    s_, p_ = S.padded(D), P.padded(D)
    lam = float(np.real(np.vdot(s_, p_)) / np.real(np.vdot(s_, s_)))
    if lam <= 0:
        return None
    b = _polish(b0 * math.sqrt(lam), P, steps=40, w=w)
    top = b.coeffs[-1]
    return _impose_zero(b * (abs(top) / top), k)


def _impose_zero(b: TrigPoly, k: int) -> TrigPoly:
    """Smallest coefficient change giving sum_n n^j beta_n = 0 for j < k (zero of order k at z = 1).

    Rounding in w * h leaves the zero only approximately; the correction is at rounding level.
    """
    d = b.degree
    if k == 0 or d == 0:
        return b
    beta = np.array(b.coeffs[d:])
    t = np.arange(d + 1) / d  # scaled powers keep the k x k system well conditioned
    V = np.vstack([t**j for j in range(k)])
    mom = np.array([complex(math.fsum((v * beta.real).tolist()), math.fsum((v * beta.imag).tolist())) for v in V])
    delta = V.T @ np.linalg.solve(V @ V.T, mom)
    return _from_ascending(beta - delta)


def compress(P: TrigPoly) -> TrigPoly:
    """Q(omega) = P(omega / 2) for P with only even harmonics."""
    c = P.coeffs
    odd = np.abs(c[(P.indices % 2) != 0])
    if odd.size and float(np.max(odd)) > 1e-12 * max(1.0, float(np.max(np.abs(c)))):
        raise DomainError("P is not pi-periodic (odd harmonics present)", stage="uep_masks")
    return TrigPoly(c[(P.indices % 2) == 0])


def expand(Q: TrigPoly) -> TrigPoly:
    """b(xi) = Q(2 xi)."""
    c = np.zeros(4 * Q.degree + 1, dtype=complex)
    c[::2] = Q.coeffs
    return TrigPoly(c)


def factor_pi_periodic(P: TrigPoly, tol: float = RIESZ_TOL, zero_order: int | None = None) -> TrigPoly:
    """Factor in omega = 2 xi so that b is pi-periodic.

    A zero of order m at xi = 0 stays a zero of order m at omega = 0.
    """
    return expand(riesz_factor(compress(P), tol, zero_order=zero_order))


# ---------------------------------------------------------------------------
# masks


@dataclass(frozen=True, eq=False)
class MaskSet:
    m0: TrigPoly
    m1: TrigPoly
    m2: TrigPoly
    m3: TrigPoly
    N0: int = 0
    K0: int = 1
    J: int = 0
    b: TrigPoly = field(default_factory=TrigPoly.zero)
    provenance: dict = field(default_factory=dict)

    @property
    def masks(self) -> tuple[TrigPoly, TrigPoly, TrigPoly, TrigPoly]:
        return (self.m0, self.m1, self.m2, self.m3)

    @property
    def max_degree(self) -> int:
        return max(m.degree for m in self.masks)

    def to_json(self) -> dict:
        return {
            "q": 3,
            "N0": self.N0,
            "K0": self.K0,
            "J": self.J,
            "masks": [m.to_json() for m in self.masks],
            "b": self.b.to_json(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_json(cls, obj) -> "MaskSet":
        try:
            if obj.get("q", 3) != 3 or len(obj["masks"]) != 4:
                raise ParameterError("masks file must hold exactly four masks (q = 3)", stage="input")
            ms = [TrigPoly.from_json(m) for m in obj["masks"]]
            b = TrigPoly.from_json(obj["b"]) if obj.get("b") else TrigPoly.zero()
            return cls(*ms, N0=int(obj.get("N0", 0)), K0=int(obj.get("K0", 1)), J=int(obj.get("J", 0)),
                       b=b, provenance=dict(obj.get("provenance", {})))
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            if isinstance(exc, ParameterError):
                raise
            raise ParameterError(f"malformed masks file: {exc}", stage="input") from exc


def partner_mask(m: TrigPoly) -> TrigPoly:
    """e^{i xi} conj(m(xi + pi))."""
    return shift(conj_poly(reflect_pi(m)), 1)


def masks_from_b(m0: TrigPoly, b: TrigPoly, **meta) -> MaskSet:
    m1 = partner_mask(m0)
    m2 = b * TrigPoly(np.array([0, 0.5, 0.5]))
    m3 = partner_mask(m2)
    return MaskSet(m0, m1, m2, m3, b=b, **meta)


def wavelet_masks(design, tol: float = RIESZ_TOL, **meta) -> MaskSet:
    """Masks for a MaskDesign; reuses its certified factor when present."""
    b = design.b if getattr(design, "b", None) is not None else factor_pi_periodic(design.P, tol, 2 * design.tau.N0 + 2)
    meta.setdefault("N0", design.tau.N0)
    meta.setdefault("K0", design.K0)
    return masks_from_b(design.m0, b, **meta)


def load_masks(path) -> MaskSet:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParameterError(f"cannot read masks file {path}: {exc}", stage="input") from exc
    return MaskSet.from_json(obj)


# ---------------------------------------------------------------------------
# verification


@dataclass
class UEPReport:
    r1: float
    r2: float
    coef1: float
    coef2: float
    M: int

    def passed(self, tol: float = 1e-10) -> bool:
        return max(self.r1, self.r2, self.coef1, self.coef2) < tol

    def to_json(self) -> dict:
        return {"r1": self.r1, "r2": self.r2, "coef_r1": self.coef1, "coef_r2": self.coef2, "M": self.M}


def pair_product(m: TrigPoly) -> TrigPoly:
    """m(xi) conj(m(xi + pi)) as a polynomial."""
    return m * conj_poly(reflect_pi(m))


def verify_uep(ms: MaskSet, M: int = 4096) -> UEPReport:
    """Grid and coefficient residuals of both identities (coefficient ones relative)."""
    if M < 2 * ms.max_degree + 2:
        raise ParameterError(f"grid size {M} below 2*(max degree)+2 = {2 * ms.max_degree + 2}")
    vals = [grid_values(m, M) for m in ms.masks]
    half = M // 2 if M % 2 == 0 else None
    r1 = float(np.max(np.abs(sum(np.abs(v) ** 2 for v in vals) - 1)))
    if half is not None:
        r2 = float(np.max(np.abs(sum(v * np.conj(np.roll(v, -half)) for v in vals))))
    else:
        xs = -math.pi + 2 * math.pi * np.arange(M) / M
        r2 = float(np.max(np.abs(sum(m(xs) * np.conj(m(xs + math.pi)) for m in ms.masks))))
    S1 = sum((mod_squared(m) for m in ms.masks), TrigPoly.zero()) - 1.0
    S2 = sum((pair_product(m) for m in ms.masks), TrigPoly.zero())
    scale1 = max(1.0, sum(m.norm2() ** 2 for m in ms.masks))
    c1 = float(np.max(np.abs(S1.coeffs))) / scale1
    c2 = float(np.max(np.abs(S2.coeffs))) / scale1
    return UEPReport(r1, r2, c1, c2, M)
