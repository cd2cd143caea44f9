"""End-to-end design: polyline repair, trigonometric fit, correction factor, masks, checks."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ParameterError
from .piecewise import (
    DEFECT_TOL,
    Evaluator,
    PiecewiseLinear,
    alpha_and_a,
    choose_n,
    displace_roots,
    repair_plateaus,
    sample_interpolant,
)
from .polyfit import FitResult, fit, pick_epsilon1, verify_T
from .refinable import (
    MOMENT_TOL,
    SampledFunction,
    cascade_time,
    filterbank_energy,
    matched_mask_error,
    moments_check,
    order_at_pi,
    stability_check,
    wavelet_time,
)
from .tau_mask import K_CAP, MaskDesign, build_tau, find_K0
from .trigpoly import next_pow2
from .uep_masks import MaskSet, verify_uep, wavelet_masks

UEP_TOL = 1e-10
EPS1_RETRIES = 6
CHECK_GRID = 8192


@dataclass
class DesignConfig:
    eps: float
    N0: int
    grid: int = 4096
    tol_defect: float = DEFECT_TOL
    tol_uep: float = UEP_TOL
    tol_moments: float = MOMENT_TOL
    levels: int = 8
    seed: int = 0
    k_cap: int = K_CAP
    source: str = ""

    def validate(self):
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise ParameterError("epsilon must be positive", stage="input")
        if self.N0 < 0:
            raise ParameterError("moments (N0) must be nonnegative", stage="input")
        if self.grid < 1024 or self.grid & (self.grid - 1):
            raise ParameterError("grid must be a power of two >= 1024", stage="input")
        if self.levels < 0:
            raise ParameterError("levels must be nonnegative", stage="input")


@dataclass
class Design:
    config: DesignConfig
    f3: PiecewiseLinear
    fit: FitResult
    mask: MaskDesign
    masks: MaskSet
    report: dict
    timing: dict = field(default_factory=dict)


def run_design(f: Evaluator, cfg: DesignConfig) -> Design:
    """Run every stage and collect the report; raises MatchMaskError with the failing stage."""
    cfg.validate()
    t0 = time.perf_counter()
    timing = {}
    eps, N0, tol = cfg.eps, cfg.N0, cfg.tol_defect
    J = 2 * N0 + 2

    n = choose_n(f, eps)
    f1 = sample_interpolant(f, n)
    f2 = repair_plateaus(f1, eps)
    f3, moves = displace_roots(f2, eps, tol)
    alpha, a = alpha_and_a(f3, moves, links="roots")
    eps1 = pick_epsilon1(eps, alpha, a)
    timing["piecewise"] = time.perf_counter() - t0

    res = None
    attempts = []
    for _ in range(EPS1_RETRIES):
        res = fit(f3, eps1, J, tol, offset=False)
        check = verify_T(res.T, f3, eps1, alpha, a, tol)
        attempts.append({"eps1": eps1, "passed": check.passed, "messages": check.messages})
        if check.passed:
            break
        eps1 /= 2
    else:
        raise NumericalError("no eps1 gave a defect-free T", stage="polyfit", diagnostics={"attempts": attempts})
    T = res.T
    timing["polyfit"] = time.perf_counter() - t0 - sum(timing.values())

    tau = build_tau(N0)
    design = find_K0(T, tau, cap=cfg.k_cap)
    timing["tau_mask"] = time.perf_counter() - t0 - sum(timing.values())

    provenance = {
        "source": cfg.source,
        "epsilon": eps,
        "grid": cfg.grid,
        "nodes": n,
        "relocations": [m.to_json() for m in moves],
    }
    ms = wavelet_masks(design, N0=N0, K0=design.K0, J=J, provenance=provenance)
    timing["uep_masks"] = time.perf_counter() - t0 - sum(timing.values())

    report = build_report(f, cfg, f3, res, design, ms, alpha, a, eps1, attempts)
    timing["checks"] = time.perf_counter() - t0 - sum(timing.values())
    return Design(cfg, f3, res, design, ms, report, timing)


def check_grid(ms: MaskSet, M: int) -> int:
    return max(M, next_pow2(2 * ms.max_degree + 2))


def build_report(f, cfg: DesignConfig, f3, res: FitResult, design: MaskDesign, ms: MaskSet,
                 alpha: float, a: float, eps1: float, attempts) -> dict:
    N0, K0 = cfg.N0, design.K0
    uep = verify_uep(ms, check_grid(ms, cfg.grid))
    mom = moments_check(ms, N0, K0, design.tau.c, cfg.tol_moments)
    defects = stability_check(ms.m0, cfg.tol_defect)
    opi = order_at_pi(ms.m0)
    rng = np.random.default_rng(cfg.seed)
    energy = filterbank_energy(ms, rng.standard_normal(1024))
    sup_err = matched_mask_error(f, res.T, CHECK_GRID)
    notes = []
    if N0 == 0:
        notes.append("N0 = 0 is below the range where vanishing moments are guaranteed")
    passed = {
        "sup_error": sup_err < cfg.eps,
        "uep": uep.passed(cfg.tol_uep),
        "moments": mom.passed,
        "stability": defects.empty,
        "order_at_pi": opi >= K0 * (2 * N0 + 2),
        "filterbank": abs(energy.ratio - 1) < cfg.tol_uep,
    }
    return {
        "source": cfg.source,
        "epsilon": cfg.eps,
        "epsilon1": eps1,
        "eps1_attempts": len(attempts),
        "N0": N0,
        "J": 2 * N0 + 2,
        "K0": K0,
        "alpha": alpha,
        "a": a,
        "nodes": len(f3.xs),
        "deg_T1": res.T1.degree,
        "deg_T": res.T.degree,
        "flatten_s": res.flatten.s,
        "deg_m0": ms.m0.degree,
        "deg_b": ms.b.degree,
        "sup_error": sup_err,
        "fit_error_certified": res.sup_error,
        "ak_max": design.ak_max,
        "uep": uep.to_json(),
        "moments": mom.to_json(),
        "order_at_pi": opi,
        "order_at_pi_expected_min": K0 * (2 * N0 + 2),
        "stability": defects.to_json(),
        "filterbank_ratio": energy.ratio,
        "passed": passed,
        "verified": all(passed.values()),
        "notes": notes,
    }


# ---------------------------------------------------------------------------
# output


def _fmt(x) -> str:
    if isinstance(x, bool) or x is None:
        return {True: "true", False: "false", None: "null"}[x]
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return "null"
        if x == 0:
            return "0.0"
        return format(x, ".17g") if x != int(x) or abs(x) >= 1e17 else format(x, ".1f")
    if isinstance(x, str):
        import json

        return json.dumps(x, ensure_ascii=False)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def dumps(obj, indent: int = 1, _level: int = 0) -> str:
    """JSON with every float written to 17 significant digits (reproducible output)."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_fmt(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_fmt(v) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    return _fmt(obj)


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj) + "\n")


def write_samples(path, phi: SampledFunction, psis) -> None:
    """Rows x,phi,psi1,psi2,psi3 on the union grid; imaginary parts appended when present."""
    funcs = [phi, *psis]
    h = phi.step
    lo = min(s.x_min for s in funcs)
    hi = max(s.x_max for s in funcs)
    count = int(round((hi - lo) / h)) + 1 if h else 1
    x = lo + h * np.arange(count)
    cols = [s.at(x) for s in funcs]
    cplx = any(np.max(np.abs(c.imag), initial=0.0) > 1e-12 for c in cols)
    names = ["phi", "psi1", "psi2", "psi3"]
    header = ["x"] + names + ([n + "_im" for n in names] if cplx else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(count):
            row = [format(float(x[i]), ".17g")] + [format(float(c[i].real), ".17g") for c in cols]
            if cplx:
                row += [format(float(c[i].imag), ".17g") for c in cols]
            w.writerow(row)


def sample_functions(ms: MaskSet, levels: int):
    phi = cascade_time(ms.m0, levels)
    return phi, wavelet_time(ms, phi=phi)
