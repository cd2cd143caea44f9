"""Two-sided trigonometric (Laurent) polynomials on the torus.

A :class:`TrigPoly` of degree ``d`` stores the coefficients ``c_k`` of
``sum_{k=-d}^{d} c_k exp(i k xi)`` in a read-only complex array, index ``k + d``.
Real-valued polynomials are the conjugate-symmetric ones (``c_{-k} = conj(c_k)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, NumericalError, ParameterError

TWO_PI = 2.0 * math.pi

# canonicalization drops |c_{+-d}| below this fraction of max|c_k|
TRIM_RTOL = 1e-14
# relative remainder accepted when deflating a root at z = +-1
DEFLATE_RTOL = 1e-10
# above this algebraic degree real polynomials switch from eigenvalues to a grid scan
COMPANION_MAX_DEGREE = 400


def wrap_angle(xi):
    """Map angles into [-pi, pi)."""
    out = np.mod(np.asarray(xi, dtype=float) + math.pi, TWO_PI) - math.pi
    if np.ndim(out) == 0:
        return float(out)
    return out


def next_pow2(n: int) -> int:
    return 1 << max(0, int(math.ceil(math.log2(max(n, 1)))))


@dataclass(frozen=True, eq=False)
class TrigPoly:
    """Immutable trigonometric polynomial with canonical degree."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex).ravel()
        if c.size % 2 == 0:
            raise ParameterError("coefficient array must have odd length 2d+1")
        c = _trim(c)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # -- construction -------------------------------------------------------

    @classmethod
    def constant(cls, value) -> "TrigPoly":
        return cls(np.array([value], dtype=complex))

    @classmethod
    def zero(cls) -> "TrigPoly":
        return cls.constant(0.0)

    @classmethod
    def monomial(cls, k: int, value=1.0) -> "TrigPoly":
        return cls.from_dict({k: value})

    @classmethod
    def from_dict(cls, terms: Mapping[int, complex]) -> "TrigPoly":
        d = max((abs(int(k)) for k in terms), default=0)
        c = np.zeros(2 * d + 1, dtype=complex)
        for k, v in terms.items():
            c[int(k) + d] += v
        return cls(c)

    @classmethod
    def from_cos_sin(cls, a0=0.0, cos: Sequence[float] = (), sin: Sequence[float] = ()) -> "TrigPoly":
        """Real polynomial ``a0 + sum a_k cos(k xi) + sum b_k sin(k xi)`` (k starts at 1)."""
        terms: dict[int, complex] = {0: a0}
        for k, a in enumerate(cos, start=1):
            terms[k] = terms.get(k, 0) + a / 2
            terms[-k] = terms.get(-k, 0) + a / 2
        for k, b in enumerate(sin, start=1):
            terms[k] = terms.get(k, 0) + b / 2j
            terms[-k] = terms.get(-k, 0) - b / 2j
        return cls.from_dict(terms)

    # -- basic properties ---------------------------------------------------

    @property
    def degree(self) -> int:
        return (self.coeffs.size - 1) // 2

    @property
    def indices(self) -> np.ndarray:
        d = self.degree
        return np.arange(-d, d + 1)

    def coef(self, k: int) -> complex:
        d = self.degree
        if abs(k) > d:
            return 0j
        return complex(self.coeffs[k + d])

    @property
    def is_zero(self) -> bool:
        return self.degree == 0 and self.coeffs[0] == 0

    def is_real_valued(self, tol: float = 1e-12) -> bool:
        c = self.coeffs
        scale = max(1.0, float(np.max(np.abs(c))))
        return bool(np.max(np.abs(c - np.conj(c[::-1]))) <= tol * scale)

    def norm1(self) -> float:
        return float(np.sum(np.abs(self.coeffs)))

    def norm2(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def padded(self, d: int) -> np.ndarray:
        """Coefficients on the index range -d..d (d >= degree)."""
        own = self.degree
        if d < own:
            raise ParameterError("cannot pad to a smaller degree")
        out = np.zeros(2 * d + 1, dtype=complex)
        out[d - own : d + own + 1] = self.coeffs
        return out

    # -- evaluation ---------------------------------------------------------

    def __call__(self, xi):
        return evaluate(self, xi)

    def grid_values(self, M: int, start: float = -math.pi) -> np.ndarray:
        """Values at ``start + 2 pi j / M``, j = 0..M-1, via one FFT (exact for any M)."""
        return grid_values(self, M, start)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = _as_poly(other)
        d = max(self.degree, other.degree)
        return TrigPoly(self.padded(d) + other.padded(d))

    __radd__ = __add__

    def __neg__(self):
        return TrigPoly(-self.coeffs)

    def __sub__(self, other):
        return self + (-_as_poly(other))

    def __rsub__(self, other):
        return _as_poly(other) - self

    def __mul__(self, other):
        if isinstance(other, TrigPoly):
            return mul(self, other)
        return TrigPoly(self.coeffs * complex(other))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return TrigPoly(self.coeffs / complex(scalar))

    def __pow__(self, n: int):
        return power(self, n)

    def __repr__(self):
        return f"TrigPoly(degree={self.degree})"

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        d = self.degree
        triples = [
            [int(k), float(c.real), float(c.imag)]
            for k, c in zip(range(-d, d + 1), self.coeffs)
            if c != 0
        ]
        return {"degree": d, "coeffs": triples}

    @classmethod
    def from_json(cls, obj: Mapping) -> "TrigPoly":
        try:
            terms = {int(k): complex(float(re), float(im)) for k, re, im in obj["coeffs"]}
            declared = int(obj["degree"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParameterError(f"malformed TrigPoly object: {exc}") from exc
        if any(abs(k) > declared for k in terms):
            raise ParameterError("coefficient index exceeds declared degree")
        return cls.from_dict(terms) if terms else cls.zero()


def _as_poly(x) -> TrigPoly:
    if isinstance(x, TrigPoly):
        return x
    return TrigPoly.constant(complex(x))


def _trim(c: np.ndarray) -> np.ndarray:
    big = float(np.max(np.abs(c))) if c.size else 0.0
    if big == 0.0:
        return np.zeros(1, dtype=complex)
    thresh = TRIM_RTOL * big
    d = (c.size - 1) // 2
    while d > 0 and abs(c[0]) < thresh and abs(c[-1]) < thresh:
        c = c[1:-1]
        d -= 1
    return c.copy()


# ---------------------------------------------------------------------------
# operations


def evaluate(p: TrigPoly, xi):
    """Direct evaluation of sum c_k e^{i k xi}; accepts scalars or arrays."""
    x = np.asarray(xi, dtype=float)
    k = p.indices
    flat = x.ravel()
    out = np.empty(flat.shape, dtype=complex)
    chunk = max(1, 2_000_000 // k.size)
    for s in range(0, flat.size, chunk):
        part = flat[s : s + chunk]
        out[s : s + chunk] = np.exp(1j * np.outer(part, k)) @ p.coeffs
    if x.ndim == 0:
        return complex(out[0])
    return out.reshape(x.shape)


def grid_values(p: TrigPoly, M: int, start: float = -math.pi) -> np.ndarray:
    if M < 1:
        raise ParameterError("grid size must be positive")
    k = p.indices
    # fold coefficients onto k mod M after absorbing the start phase
    folded = np.zeros(M, dtype=complex)
    np.add.at(folded, np.mod(k, M), p.coeffs * np.exp(1j * k * start))
    return np.fft.ifft(folded) * M


def grid(M: int, start: float = -math.pi) -> np.ndarray:
    return start + TWO_PI * np.arange(M) / M


def mul(p: TrigPoly, q: TrigPoly) -> TrigPoly:
    if p.is_zero or q.is_zero:
        return TrigPoly.zero()
    return TrigPoly(np.convolve(p.coeffs, q.coeffs))


def power(p: TrigPoly, n: int) -> TrigPoly:
    if n < 0:
        raise ParameterError("negative powers are not polynomials")
    result = TrigPoly.constant(1.0)
    base = p
    while n:
        if n & 1:
            result = mul(result, base)
        n >>= 1
        if n:
            base = mul(base, base)
    return result


def scale(p: TrigPoly, lam) -> TrigPoly:
    return TrigPoly(p.coeffs * complex(lam))


def shift(p: TrigPoly, j: int) -> TrigPoly:
    """Multiply by e^{i j xi}."""
    d = p.degree
    D = d + abs(j)
    c = np.zeros(2 * D + 1, dtype=complex)
    c[D - d + j : D + d + j + 1] = p.coeffs
    return TrigPoly(c)


def reflect_pi(p: TrigPoly) -> TrigPoly:
    """q(xi) = p(xi + pi)."""
    sign = np.where(p.indices % 2 == 0, 1.0, -1.0)
    return TrigPoly(p.coeffs * sign)


def conj_poly(p: TrigPoly) -> TrigPoly:
    """q(xi) = conj(p(xi)) for real xi."""
    return TrigPoly(np.conj(p.coeffs[::-1]))


def mod_squared(p: TrigPoly) -> TrigPoly:
    """|p|^2 as a polynomial, with exact conjugate symmetry enforced."""
    s = np.convolve(p.coeffs, np.conj(p.coeffs[::-1]))
    s = 0.5 * (s + np.conj(s[::-1]))
    return TrigPoly(s)


def derivative(p: TrigPoly, j: int = 1) -> TrigPoly:
    if j < 0:
        raise ParameterError("derivative order must be nonnegative")
    if j == 0:
        return p
    return TrigPoly(p.coeffs * (1j * p.indices) ** j)


def derivative_at(p: TrigPoly, j: int, xi: float = 0.0) -> complex:
    """p^{(j)}(xi) without materializing the derivative polynomial."""
    k = p.indices.astype(float)
    return complex(np.sum(p.coeffs * (1j * k) ** j * np.exp(1j * k * xi)))


def default_grid_size(d: int) -> int:
    return max(16, next_pow2(16 * max(d, 1)))


def sup_norm_certified(p: TrigPoly, M: int | None = None) -> float:
    """Upper bound on max|p| from an M-point grid, inflated by Bernstein's inequality.

    Between grid points |p| can exceed the grid maximum by at most
    ``||p'|| delta/2 <= d ||p|| delta/2``, which rearranges to the returned bound.
    """
    if not p.is_real_valued():
        raise DomainError("certified sup norm is implemented for real-valued polynomials")
    d = p.degree
    if M is None:
        M = default_grid_size(d)
    delta = TWO_PI / M
    if d * delta >= 2:
        raise ParameterError(f"grid too coarse: d*delta = {d * delta:.3g} >= 2")
    if p.is_zero:
        return 0.0
    gmax = float(np.max(np.abs(grid_values(p, M))))
    return gmax / (1.0 - d * delta / 2.0)


# ---------------------------------------------------------------------------
# roots on the torus


@dataclass(frozen=True)
class TorusRootSet:
    """Roots on [-pi, pi) with multiplicities."""

    angles: tuple[float, ...] = ()
    multiplicities: tuple[int, ...] = ()
    tol: float = 1e-8

    def __post_init__(self):
        if len(self.angles) != len(self.multiplicities):
            raise ParameterError("angles and multiplicities differ in length")
        order = np.argsort(self.angles)
        object.__setattr__(self, "angles", tuple(float(self.angles[i]) for i in order))
        object.__setattr__(self, "multiplicities", tuple(int(self.multiplicities[i]) for i in order))

    def __len__(self):
        return len(self.angles)

    def __iter__(self):
        return iter(zip(self.angles, self.multiplicities))

    @property
    def total_multiplicity(self) -> int:
        return sum(self.multiplicities)

    def contains(self, xi: float, tol: float | None = None) -> bool:
        tol = self.tol if tol is None else tol
        return any(angular_distance(a, xi) <= tol for a in self.angles)

    def multiplicity_at(self, xi: float, tol: float | None = None) -> int:
        tol = self.tol if tol is None else tol
        return sum(m for a, m in self if angular_distance(a, xi) <= tol)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, int]], tol: float = 1e-8) -> "TorusRootSet":
        pairs = list(pairs)
        return cls(tuple(wrap_angle(a) for a, _ in pairs), tuple(m for _, m in pairs), tol)


def angular_distance(a: float, b: float) -> float:
    return abs(wrap_angle(a - b))


def algebraic_coeffs(p: TrigPoly) -> np.ndarray:
    """Ascending coefficients of z^d p(z), a polynomial of degree <= 2d."""
    return np.array(p.coeffs, dtype=complex)


def deflate(a: np.ndarray, z0: complex, rtol: float = DEFLATE_RTOL) -> tuple[np.ndarray, int]:
    """Divide ascending coefficients ``a`` by (z - z0) as often as the remainder is negligible."""
    m = 0
    a = np.asarray(a, dtype=complex)
    while a.size > 1:
        b = a[::-1]
        q = np.empty(b.size - 1, dtype=complex)
        acc = 0j
        for i in range(b.size - 1):
            acc = b[i] + z0 * acc
            q[i] = acc
        rem = b[-1] + z0 * acc
        if abs(rem) > rtol * float(np.sum(np.abs(b))):
            break
        a = q[::-1]
        m += 1
    return a, m


def _cluster(points: np.ndarray, tol: float) -> list[np.ndarray]:
    remaining = list(range(points.size))
    clusters = []
    while remaining:
        seed = remaining.pop(0)
        members = [seed]
        grew = True
        while grew:
            grew = False
            for idx in list(remaining):
                if np.min(np.abs(points[members] - points[idx])) <= tol:
                    members.append(idx)
                    remaining.remove(idx)
                    grew = True
        clusters.append(np.array(members))
    return clusters


def torus_roots(p: TrigPoly, tol: float = 1e-8, cluster_tol: float = 1e-6, method: str = "auto") -> TorusRootSet:
    """Roots of p on the unit circle, as angles with multiplicities.

    Works on the algebraic polynomial ``z^d p(z)``. Roots at z = -1 and z = 1
    (frequent high-order zeros of masks) are deflated first by synthetic
    division. What remains goes to companion-matrix eigenvalues, or for large
    real-valued inputs to a sign-change scan with Brent refinement.
    """
    if p.is_zero:
        raise DomainError("the zero polynomial has no isolated roots")
    a = algebraic_coeffs(p)
    nz = np.nonzero(np.abs(a) > 0)[0]
    a = a[nz[0] : nz[-1] + 1]  # roots at 0 and infinity are off the circle
    found: list[tuple[float, int]] = []
    a, m_minus = deflate(a, -1.0)
    if m_minus:
        found.append((-math.pi, m_minus))
    a, m_plus = deflate(a, 1.0)
    if m_plus:
        found.append((0.0, m_plus))
    n = a.size - 1
    if n >= 1:
        if method not in ("auto", "companion", "grid"):
            raise ParameterError(f"unknown root method {method!r}")
        use_grid = method == "grid" or (
            method == "auto" and n > COMPANION_MAX_DEGREE and p.is_real_valued()
        )
        if use_grid:
            found.extend(_circle_roots_grid(a, m_minus + m_plus, p.degree))
        else:
            found.extend(_circle_roots_companion(a, tol, cluster_tol))
    merged = _merge_close(found, cluster_tol)
    return TorusRootSet.from_pairs(merged, tol=tol)


def _circle_roots_companion(a: np.ndarray, tol: float, cluster_tol: float):
    try:
        r = np.roots(a[::-1])
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalError(f"eigenvalue solver failed: {exc}", stage="roots") from exc
    if not np.all(np.isfinite(r)):
        raise NumericalError("eigenvalue solver returned non-finite roots", stage="roots")
    near = r[np.abs(np.abs(r) - 1.0) <= max(tol, cluster_tol)]
    out = []
    for members in _cluster(near, cluster_tol):
        centre = near[members].mean()
        if abs(abs(centre) - 1.0) <= tol:
            out.append((wrap_angle(np.angle(centre)), int(members.size)))
    return out


def _circle_roots_grid(a: np.ndarray, deflated: int, d: int):
    """Real-valued case: scan R(xi) = phase * e^{i(deflated/2 - d) xi} r(e^{i xi})."""
    n = a.size - 1
    M = next_pow2(32 * (n + 1))
    xs = grid(M)
    shift_k = deflated / 2.0 - d
    vals = np.exp(1j * shift_k * xs) * _poly_on_grid(a, M, xs[0])
    big = int(np.argmax(np.abs(vals)))
    phase = np.conj(vals[big]) / abs(vals[big])
    real = (vals * phase).real
    scale_ = float(np.max(np.abs(real)))
    noise = 1e-12 * scale_
    desc = a[::-1]

    def f(x):
        return float((np.exp(1j * shift_k * x) * np.polyval(desc, np.exp(1j * x)) * phase).real)

    sign = np.where(np.abs(real) <= noise, 0, np.sign(real)).astype(int)
    out = []
    for i in range(M):
        j = (i + 1) % M
        if sign[i] == 0:
            # neighbours beyond the noise floor decide crossing vs touching
            left = next((sign[(i - t) % M] for t in range(1, 8) if sign[(i - t) % M]), 0)
            right = next((sign[(i + t) % M] for t in range(1, 8) if sign[(i + t) % M]), 0)
            if sign[i - 1] == 0 and abs(real[i - 1]) <= abs(real[i]):
                continue  # keep one representative per near-zero run
            if sign[j] == 0 and abs(real[j]) < abs(real[i]):
                continue
            out.append((wrap_angle(xs[i]), 1 if left * right < 0 else 2))
        elif sign[j] != 0 and sign[i] != sign[j]:
            lo = xs[i]
            hi = xs[i] + TWO_PI / M
            flo, fhi = f(lo), f(hi)
            root = brentq(f, lo, hi, xtol=1e-15) if flo * fhi < 0 else (lo if abs(flo) <= abs(fhi) else hi)
            out.append((wrap_angle(root), 1))
        else:
            l, r = abs(real[i - 1]), abs(real[j])
            if sign[i - 1] == sign[i] == sign[j] and abs(real[i]) < min(l, r) and abs(real[i]) < 1e-8 * scale_:
                out.append((wrap_angle(xs[i]), 2))
    return out


def _poly_on_grid(a: np.ndarray, M: int, start: float) -> np.ndarray:
    j = np.arange(a.size)
    folded = np.zeros(M, dtype=complex)
    np.add.at(folded, np.mod(j, M), a * np.exp(1j * j * start))
    return np.fft.ifft(folded) * M


def _merge_close(pairs, tol):
    pairs = sorted(pairs)
    merged: list[list] = []
    for ang, mult in pairs:
        if merged and angular_distance(merged[-1][0], ang) <= tol:
            merged[-1][1] += mult
        else:
            merged.append([ang, mult])
    if len(merged) > 1 and angular_distance(merged[0][0], merged[-1][0]) <= tol:
        merged[0][1] += merged[-1][1]
        merged.pop()
    return [(a, m) for a, m in merged]
