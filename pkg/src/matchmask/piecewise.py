"""Periodic piecewise-linear approximations of the target function.

Pipeline order: :func:`sample_interpolant` (nodes chosen by :func:`choose_n`),
:func:`repair_plateaus`, :func:`displace_roots`. The result has finitely many
roots, no symmetric root pairs and no nontrivial cycles, and its Fourier
coefficients are available in closed form (:func:`fourier_coeffs_pl`).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import DesignError, DomainError, NumericalError, ParameterError
from .trigpoly import TWO_PI, TorusRootSet, TrigPoly, angular_distance, wrap_angle

DEFECT_TOL = 1e-6
MAX_NODES = 2**20
# node abscissae closer than this are merged
_NODE_EPS = 1e-13


@dataclass(frozen=True)
class Evaluator:
    """A real function on the torus with f(0) = 1."""

    func: Callable
    name: str = "f"

    def __post_init__(self):
        v0 = float(np.real(self.func(np.array([0.0]))[0]))
        if not abs(v0 - 1.0) <= 1e-12:
            raise ParameterError(f"{self.name}: f(0) = {v0!r}, expected 1", stage="input")

    def __call__(self, xi):
        x = np.asarray(xi, dtype=float)
        out = np.asarray(self.func(np.atleast_1d(wrap_angle(x))), dtype=float)
        return out.reshape(x.shape) if x.ndim else float(out.ravel()[0])


@dataclass(frozen=True, eq=False)
class PiecewiseLinear:
    """Periodic polyline through (x_k, y_k); x_0 = -pi and x strictly increasing below pi."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.array(self.xs, dtype=float)
        ys = np.array(self.ys, dtype=float)
        if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 2:
            raise ParameterError("need at least two nodes with matching x/y arrays")
        if xs[0] != -math.pi or np.any(np.diff(xs) <= 0) or xs[-1] >= math.pi:
            raise ParameterError("nodes must start at -pi and increase strictly below pi")
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @classmethod
    def from_points(cls, xs, ys) -> "PiecewiseLinear":
        """Normalize arbitrary points: wrap into [-pi, pi), sort, merge, ensure a node at -pi."""
        xs = wrap_angle(np.asarray(xs, dtype=float))
        ys = np.asarray(ys, dtype=float)
        order = np.argsort(xs, kind="stable")
        xs, ys = xs[order], ys[order]
        keep = np.ones(xs.size, dtype=bool)
        keep[1:] = np.diff(xs) > _NODE_EPS
        xs, ys = xs[keep], ys[keep]
        if xs[-1] > math.pi - _NODE_EPS:  # merge a node sitting at +pi into -pi
            xs, ys = np.r_[-math.pi, xs[:-1]], np.r_[ys[-1], ys[:-1]]
            if xs.size > 1 and xs[1] - xs[0] <= _NODE_EPS:
                xs, ys = np.r_[xs[0], xs[2:]], np.r_[ys[0], ys[2:]]
        if abs(xs[0] + math.pi) <= _NODE_EPS:
            xs = xs.copy()
            xs[0] = -math.pi
        else:
            y_at = np.interp(-math.pi, xs, ys, period=TWO_PI)
            xs, ys = np.r_[-math.pi, xs], np.r_[y_at, ys]
        return cls(xs, ys)

    @property
    def n(self) -> int:
        return self.xs.size

    def __call__(self, xi):
        return np.interp(xi, self.xs, self.ys, period=TWO_PI)

    def links(self):
        """Yield (x0, y0, x1, y1) for every link, including the closing one (x1 unwrapped)."""
        xs, ys = self.xs, self.ys
        for k in range(xs.size):
            if k + 1 < xs.size:
                yield xs[k], ys[k], xs[k + 1], ys[k + 1]
            else:
                yield xs[k], ys[k], xs[0] + TWO_PI, ys[0]

    def slopes(self) -> np.ndarray:
        return np.array([(y1 - y0) / (x1 - x0) for x0, y0, x1, y1 in self.links()])

    def lipschitz(self) -> float:
        return float(np.max(np.abs(self.slopes())))

    def to_rows(self):
        return list(zip(self.xs.tolist(), self.ys.tolist()))


@dataclass(frozen=True)
class RootRelocation:
    old: float
    new: float
    mechanism: str  # "node-shift" | "link-split"
    h: float = 0.0

    def to_json(self) -> dict:
        return {"old": self.old, "new": self.new, "mechanism": self.mechanism, "h": self.h}


@dataclass(frozen=True)
class Cycle:
    betas: tuple[float, ...]
    m: int
    n: int


@dataclass(frozen=True)
class StabilityDefects:
    symmetric_pairs: tuple[tuple[float, float], ...] = ()
    cycles: tuple[Cycle, ...] = ()

    @property
    def empty(self) -> bool:
        return not self.symmetric_pairs and not self.cycles

    def roots_involved(self) -> list[float]:
        out = [r for pair in self.symmetric_pairs for r in pair]
        for cyc in self.cycles:
            out.extend(wrap_angle(b + math.pi) for b in cyc.betas)
        return out

    def to_json(self) -> dict:
        return {
            "symmetric_pairs": [list(p) for p in self.symmetric_pairs],
            "cycles": [{"betas": list(c.betas), "m": c.m, "n": c.n} for c in self.cycles],
        }


# ---------------------------------------------------------------------------
# step 1a: interpolation


def sample_interpolant(f: Evaluator, n: int) -> PiecewiseLinear:
    if n < 4:
        raise ParameterError("need n >= 4 nodes")
    xs = -math.pi + TWO_PI * np.arange(n) / n
    ys = np.asarray(f(xs), dtype=float)
    # rounding residue at exact zeros (cos(pi/2) = 6e-17) is snapped to 0
    ys = np.where(np.abs(ys) <= 1e-14 * max(1.0, float(np.max(np.abs(ys)))), 0.0, ys)
    return PiecewiseLinear(xs, ys)


def choose_n(f: Evaluator, eps: float, cap: int = MAX_NODES) -> int:
    """Smallest power of two n >= 8 whose interpolant is within eps/6 on a 16x finer grid."""
    if eps <= 0:
        raise ParameterError("epsilon must be positive")
    n = 8
    while n <= cap:
        f1 = sample_interpolant(f, n)
        fine = -math.pi + TWO_PI * np.arange(16 * n) / (16 * n)
        if float(np.max(np.abs(f1(fine) - f(fine)))) < eps / 6:
            return n
        n *= 2
    raise NumericalError(f"function too rough for eps={eps}: more than {cap} nodes needed", stage="piecewise")


# ---------------------------------------------------------------------------
# step 1b: zero plateaus


def _zero_runs(ys: np.ndarray) -> list[tuple[int, int]]:
    """Maximal cyclic runs (start, length) of exactly-zero nodes with length >= 2."""
    n = ys.size
    zero = ys == 0.0
    if zero.all():
        raise DomainError("function vanishes identically")
    start = int(np.argmin(zero))  # a nonzero node: runs cannot wrap past it
    runs = []
    i = 0
    while i < n:
        k = (start + i) % n
        if zero[k]:
            length = 0
            while zero[(k + length) % n]:
                length += 1
            if length >= 2:
                runs.append((k, length))
            i += length
        else:
            i += 1
    return runs


def repair_plateaus(f1: PiecewiseLinear, eps: float) -> PiecewiseLinear:
    """Lift, lower, or rotate every segment on which f1 vanishes identically.

    Same signs on both flanks raise (lower) the plateau to the level
    min{eps/12, flank values} (max{-eps/12, ...}) between the points where the
    flanking links cross that level; opposite signs replace it with a single
    link between gamma3 and gamma4 of the flank signs.
    """
    if eps <= 0:
        raise ParameterError("epsilon must be positive")
    xs, ys = f1.xs, f1.ys
    n = xs.size
    runs = _zero_runs(ys)
    if not runs:
        return f1
    drop: set[int] = set()
    extra_x: list[float] = []
    extra_y: list[float] = []
    new_y = ys.copy()

    for i, length in runs:
        j = i + length - 1
        left, right = (i - 1) % n, (j + 1) % n
        yl, yr = ys[left], ys[right]
        x_im1 = xs[left]
        x_i = x_im1 + ((xs[i % n] - x_im1) % TWO_PI)
        x_j = x_im1 + ((xs[j % n] - x_im1) % TWO_PI)
        x_jp1 = x_im1 + ((xs[right] - x_im1) % TWO_PI)
        if yl > 0 and yr > 0 or yl < 0 and yr < 0:
            if yl > 0:
                g = min(eps / 12, yl, yr)
            else:
                g = max(-eps / 12, yl, yr)
            x_star = g * (x_im1 - x_i) / yl + x_i
            x_2star = g * (x_jp1 - x_j) / yr + x_j
            for t in range(i, j + 1):
                drop.add(t % n)
            extra_x += [x_star, x_2star]
            extra_y += [g, g]
        else:
            g3 = math.copysign(min(eps / 12, abs(yl)), yl)
            g4 = math.copysign(min(eps / 12, abs(yr)), yr)
            new_y[i % n] = g3
            new_y[j % n] = g4
            for t in range(i + 1, j):
                drop.add(t % n)
    keep = [k for k in range(n) if k not in drop]
    out_x = np.r_[xs[keep], extra_x]
    out_y = np.r_[new_y[keep], extra_y]
    return PiecewiseLinear.from_points(out_x, out_y)


# ---------------------------------------------------------------------------
# roots and defects


def find_roots_pl(g: PiecewiseLinear, tol: float = DEFECT_TOL) -> TorusRootSet:
    """Exact roots of a plateau-free polyline; touching zeros count twice."""
    xs, ys = g.xs, g.ys
    n = xs.size
    angles, mults = [], []
    for k, (x0, y0, x1, y1) in enumerate(g.links()):
        if y0 == 0.0 and y1 == 0.0:
            raise DomainError("polyline vanishes on a whole link; repair plateaus first", stage="piecewise")
        if y0 == 0.0:
            prev, nxt = ys[(k - 1) % n], y1
            angles.append(x0)
            mults.append(2 if prev * nxt > 0 else 1)
        elif y0 * y1 < 0:
            angles.append(x0 - y0 * (x1 - x0) / (y1 - y0))
            mults.append(1)
    return TorusRootSet.from_pairs(zip(angles, mults), tol=tol)


def find_defects(roots: TorusRootSet, tol: float = DEFECT_TOL, max_cycle: int = 40) -> StabilityDefects:
    """Symmetric root pairs and nontrivial cycles among ``roots``.

    A cycle of length n consists of the points beta = 2 pi m 2^{t-1} / (2^n - 1)
    (t = 1..n) such that beta + pi is a root for each of them.
    """
    angles = list(roots.angles)
    pairs = []
    for a in range(len(angles)):
        for b in range(a + 1, len(angles)):
            if abs(angular_distance(angles[a], angles[b]) - math.pi) <= tol:
                pairs.append((angles[a], angles[b]))

    def is_root(x):
        return any(angular_distance(x, r) <= tol for r in angles)

    cycles: list[Cycle] = []
    seen: set[tuple[int, int]] = set()
    n_max = min(len(angles), max_cycle)
    for n in range(2, n_max + 1):
        den = (1 << n) - 1
        for rho in angles:
            beta = (rho - math.pi) % TWO_PI
            m = round(beta * den / TWO_PI) % den
            if m == 0 or angular_distance(beta, TWO_PI * m / den) > tol:
                continue
            orbit = []
            cur = m
            for _ in range(n):
                orbit.append(cur)
                cur = (2 * cur) % den
            if cur != m or len(set(orbit)) != n:
                continue  # not of exact period n
            key = (n, min(orbit))
            if key in seen:
                continue
            if all(is_root(TWO_PI * t / den + math.pi) for t in orbit):
                seen.add(key)
                ms = sorted(orbit)
                cycles.append(Cycle(tuple(float(Fraction(t, den) * TWO_PI) for t in ms), ms[0], n))
    return StabilityDefects(tuple(pairs), tuple(cycles))


# ---------------------------------------------------------------------------
# step 1c: root displacement


def displace_roots(
    f2: PiecewiseLinear, eps: float, tol: float = DEFECT_TOL, max_iter: int = 100
) -> tuple[PiecewiseLinear, list[RootRelocation]]:
    """Move defect roots until the polyline has no symmetric pairs or cycles."""
    g = f2
    moves: list[RootRelocation] = []
    for _ in range(max_iter):
        roots = find_roots_pl(g, tol)
        defects = find_defects(roots, tol)
        if defects.empty:
            return g, moves
        target = _pick_root(defects, moves)
        g, move = _relocate(g, target, roots, eps, tol)
        moves.append(move)
    residual = find_defects(find_roots_pl(g, tol), tol)
    raise NumericalError(
        f"root displacement did not converge in {max_iter} steps",
        stage="piecewise",
        diagnostics=residual.to_json(),
    )


def _pick_root(defects: StabilityDefects, moves: Sequence[RootRelocation]) -> float:
    candidates = defects.roots_involved()
    fresh = [r for r in candidates if all(angular_distance(r, mv.new) > 1e-12 for mv in moves)]
    pool = fresh or candidates
    return max(pool)


def _relocate(g: PiecewiseLinear, root: float, roots: TorusRootSet, eps: float, tol: float):
    xs, ys = g.xs, g.ys
    n = xs.size
    k_node = int(np.argmin([angular_distance(x, root) for x in xs]))
    min_move = 10 * tol
    if angular_distance(xs[k_node], root) <= 1e-12:
        if abs(xs[k_node]) <= 1e-15:
            raise DesignError("root at the protected node xi = 0", stage="piecewise")
        prev_x = xs[k_node - 1] if k_node > 0 else xs[-1] - TWO_PI
        next_x = xs[k_node + 1] if k_node + 1 < n else xs[0] + TWO_PI
        others = [r for r in roots.angles if angular_distance(r, root) > 1e-12]
        gap = min([xs[k_node] - prev_x, next_x - xs[k_node]] + [angular_distance(r, root) for r in others])
        slope_l = abs(ys[k_node] - ys[k_node - 1]) / (xs[k_node] - prev_x)
        slope_r = abs(ys[(k_node + 1) % n] - ys[k_node]) / (next_x - xs[k_node])
        local_l = max(slope_l, slope_r)
        delta = gap / 2
        if local_l > 0:
            delta = min(delta, 0.99 * eps / (6 * local_l))
        if delta < min_move:
            raise NumericalError("no room to shift the root node", stage="piecewise")
        # move away from the nearest neighbouring node
        direction = 1.0 if next_x - xs[k_node] >= xs[k_node] - prev_x else -1.0
        new_x = xs[k_node] + direction * delta
        if abs(wrap_angle(new_x)) <= 1e-15:
            direction, new_x = -direction, xs[k_node] - direction * delta
        nx, ny = xs.copy(), ys.copy()
        nx[k_node], ny[k_node] = new_x, 0.0
        out = PiecewiseLinear.from_points(nx, ny)
        return out, RootRelocation(float(root), float(wrap_angle(new_x)), "node-shift", 0.0)
    # root strictly inside a link: split it
    for k, (x0, y0, x1, y1) in enumerate(g.links()):
        xr = x0 + ((root - x0) % TWO_PI)
        if x0 < xr < x1 and y0 * y1 < 0:
            break
    else:  # pragma: no cover - roots always lie on some link
        raise DomainError(f"root {root} not found on any link")
    big, small = (y1, y0) if abs(y1) >= abs(y0) else (y0, y1)
    h = math.copysign(min(eps / 12, abs(small) / 2), big)
    # new root lies on the sub-link whose far end has the opposite sign of h
    if (h > 0) == (y0 > 0):
        new_root = xr + (0 - h) * (x1 - xr) / (y1 - h)
    else:
        new_root = x0 + (0 - y0) * (xr - x0) / (h - y0)
    if abs(new_root - xr) < min_move:
        raise NumericalError("link split moves the root too little", stage="piecewise")
    out = PiecewiseLinear.from_points(np.r_[xs, xr], np.r_[ys, h])
    return out, RootRelocation(float(root), float(wrap_angle(new_root)), "link-split", float(h))


def alpha_and_a(f3: PiecewiseLinear, relocations: Sequence[RootRelocation], links: str = "all") -> tuple[float, float]:
    """Half the smallest root displacement, and the smallest nonzero link slope.

    ``links="roots"`` restricts the slope minimum to links that contain a root
    of f3, which is where the parallelogram argument needs it.
    """
    alpha = min((abs(wrap_angle(r.new - r.old)) / 2 for r in relocations), default=math.inf)
    slopes = f3.slopes()
    if links == "roots":
        mask = np.zeros(slopes.size, dtype=bool)
        for k, (x0, y0, x1, y1) in enumerate(f3.links()):
            mask[k] = y0 * y1 < 0 or y0 == 0.0 or y1 == 0.0
        slopes = slopes[mask]
    elif links != "all":
        raise ParameterError(f"unknown link selection {links!r}")
    nonzero = np.abs(slopes[slopes != 0])
    a = float(nonzero.min()) if nonzero.size else math.inf
    return alpha, a


# ---------------------------------------------------------------------------
# Fourier coefficients


def fourier_coeffs_pl(g: PiecewiseLinear, d: int) -> TrigPoly:
    """Exact coefficients c_k, |k| <= d, of the periodic polyline.

    Two integrations by parts leave only the slope jumps at the nodes:
    c_k = -1/(2 pi k^2) * sum_j (s_j - s_{j-1}) e^{-i k x_j} for k != 0.
    """
    if d < 1:
        raise ParameterError("degree must be >= 1")
    s = g.slopes()
    jumps = s - np.roll(s, 1)
    k = np.arange(1, d + 1)
    phases = np.exp(-1j * np.outer(k, g.xs))
    pos = -(phases @ jumps) / (TWO_PI * k.astype(float) ** 2)
    c0 = 0.0
    for x0, y0, x1, y1 in g.links():
        c0 += 0.5 * (y0 + y1) * (x1 - x0)
    c0 /= TWO_PI
    coeffs = np.r_[np.conj(pos[::-1]), c0, pos]
    return TrigPoly(coeffs)


# ---------------------------------------------------------------------------
# inputs


def _cycle_demo(x):
    # roots exactly at +-pi/3, kinks only at dyadic angles
    pts_x = np.array([-math.pi, -math.pi / 2, 0.0, math.pi / 2])
    pts_y = np.array([-0.25, -0.5, 1.0, -0.5])
    return np.interp(x, pts_x, pts_y, period=TWO_PI)


PRESETS: dict[str, Callable] = {
    "one": lambda x: np.ones_like(np.asarray(x, dtype=float)),
    "cos": np.cos,
    "sin-bump": lambda x: 1.0 + 0.5 * np.sin(x),
    "sym-pair": np.cos,
    "cycle": _cycle_demo,
}


def preset(name: str) -> Evaluator:
    try:
        return Evaluator(PRESETS[name], name)
    except KeyError:
        raise ParameterError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}", stage="input") from None


def evaluator_from_csv(path) -> Evaluator:
    """Periodic linear interpolant of rows ``xi,value`` (xi ascending in [-pi, pi))."""
    xs, ys = [], []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    x, y = float(row[0]), float(row[1])
                except ValueError:
                    if not xs:  # header line
                        continue
                    raise
                xs.append(x)
                ys.append(y)
    except (OSError, ValueError, IndexError) as exc:
        raise ParameterError(f"cannot read samples from {path}: {exc}", stage="input") from exc
    xs_a, ys_a = np.array(xs), np.array(ys)
    if xs_a.size < 2 or np.any(np.diff(xs_a) <= 0) or xs_a[0] < -math.pi or xs_a[-1] >= math.pi:
        raise ParameterError("samples must have ascending xi in [-pi, pi)", stage="input")

    def f(x):
        return np.interp(x, xs_a, ys_a, period=TWO_PI)

    return Evaluator(f, str(path))
