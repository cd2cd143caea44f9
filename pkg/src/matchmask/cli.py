"""matchmask command line: design, verify, sample, analyze."""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from .errors import DesignError, MatchMaskError, NumericalError, ParameterError
from .piecewise import DEFECT_TOL, evaluator_from_csv, preset
from .pipeline import (
    UEP_TOL,
    DesignConfig,
    check_grid,
    run_design,
    sample_functions,
    write_json,
    write_samples,
)
from .refinable import MOMENT_TOL, CascadeWarning, filterbank_energy, moments_check, order_at_pi, stability_check
from .tau_mask import build_tau
from .uep_masks import MaskSet, verify_uep

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
ANALYZE_TOL = 1e-8


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _exit_for(exc: MatchMaskError) -> int:
    _err(f"error [{exc.stage}]: {exc}")
    if isinstance(exc, (NumericalError, DesignError)):
        return EXIT_NUMERIC
    return EXIT_INPUT


def _read_masks(path) -> tuple[MaskSet, dict]:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParameterError(f"cannot read masks file {path}: {exc}", stage="input") from exc
    if not isinstance(raw, dict):
        raise ParameterError("masks file must hold a JSON object", stage="input")
    return MaskSet.from_json(raw), raw


# ---------------------------------------------------------------------------
# design


def cmd_design(args) -> int:
    f = preset(args.preset) if args.preset else evaluator_from_csv(args.input)
    cfg = DesignConfig(
        eps=args.epsilon,
        N0=args.moments,
        grid=args.grid,
        tol_defect=args.tol_defect,
        tol_uep=args.tol_uep,
        tol_moments=args.tol_moments,
        levels=args.levels,
        seed=args.seed,
        source=args.preset or str(args.input),
    )
    d = run_design(f, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(d.masks.to_json(), out / "masks.json")
    write_json(d.report, out / "report.json")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CascadeWarning)
        phi, psis = sample_functions(d.masks, cfg.levels)
    write_samples(out / "samples.csv", phi, psis)

    r = d.report
    print(f"source        {r['source']}  eps={r['epsilon']}  N0={r['N0']}")
    print(f"K0            {r['K0']}")
    print(f"deg T / m0    {r['deg_T']} / {r['deg_m0']}")
    print(f"sup |f - T|   {r['sup_error']:.3e}")
    print(f"UEP r1, r2    {r['uep']['r1']:.3e}, {r['uep']['r2']:.3e}")
    print(f"order at pi   {r['order_at_pi']} (>= {r['order_at_pi_expected_min']})")
    print(f"filter bank   {r['filterbank_ratio'] - 1:+.3e}")
    for note in r["notes"]:
        print(f"note          {note}")
    failed = [k for k, ok in r["passed"].items() if not ok]
    print("verified" if not failed else "FAILED: " + ", ".join(failed))
    return EXIT_OK if not failed else EXIT_FAIL


# ---------------------------------------------------------------------------
# verify


def verify_maskset(ms: MaskSet, raw: dict, grid: int, tol_uep: float, tol_defect: float,
                   tol_moments: float) -> dict:
    """All checks that make sense for an arbitrary MaskSet; design-specific ones only when K0 is recorded."""
    designed = "K0" in raw
    uep = verify_uep(ms, check_grid(ms, grid))
    c = build_tau(ms.N0).c if designed else None
    mom = moments_check(ms, ms.N0, ms.K0 if designed else None, c, tol_moments)
    defects = stability_check(ms.m0, tol_defect)
    opi = order_at_pi(ms.m0)
    rows = {
        "uep": (uep.passed(tol_uep), f"r1={uep.r1:.3e} r2={uep.r2:.3e} coef={uep.coef1:.3e},{uep.coef2:.3e}"),
        "stability": (defects.empty, "pair-free, cycle-free" if defects.empty else
                      f"{len(defects.symmetric_pairs)} pairs, {len(defects.cycles)} cycles"),
        "moments": (mom.passed, f"max |m_r^(j)(0)|={max(max(r) for r in mom.moments):.3e} "
                                f"order={mom.order} value={mom.value:.6g}"),
    }
    if designed:
        need = ms.K0 * (2 * ms.N0 + 2)
        rows["order_at_pi"] = (opi >= need, f"{opi} (>= {need})")
    else:
        rows["order_at_pi"] = (True, f"{opi} (informational)")
    return rows


def cmd_verify(args) -> int:
    ms, raw = _read_masks(args.masks)
    rows = verify_maskset(ms, raw, args.grid, args.tol_uep, args.tol_defect, args.tol_moments)
    for name, (ok, detail) in rows.items():
        print(f"{name:12s} {'pass' if ok else 'FAIL'}  {detail}")
    return EXIT_OK if all(ok for ok, _ in rows.values()) else EXIT_FAIL


# ---------------------------------------------------------------------------
# sample / analyze


def cmd_sample(args) -> int:
    ms, _ = _read_masks(args.masks)
    if args.levels < 0:
        raise ParameterError("levels must be nonnegative", stage="input")
    with warnings.catch_warnings():
        warnings.simplefilter("error", CascadeWarning)
        try:
            phi, psis = sample_functions(ms, args.levels)
        except CascadeWarning as w:
            raise NumericalError(str(w), stage="refinable") from None
    out = Path(args.out)
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "samples.csv"
    write_samples(out, phi, psis)
    print(f"wrote {out} ({phi.values.size} phi samples, step 2^-{args.levels})")
    return EXIT_OK


def _load_signal(path) -> np.ndarray:
    try:
        x = np.loadtxt(path, delimiter=",", ndmin=1, dtype=float, comments="#")
    except (OSError, ValueError) as exc:
        raise ParameterError(f"cannot read signal {path}: {exc}", stage="input") from exc
    return x.ravel()


def cmd_analyze(args) -> int:
    ms, _ = _read_masks(args.masks)
    if args.random is not None:
        L, seed = args.random
        x = np.random.default_rng(seed).standard_normal(L)
    elif args.signal is not None:
        x = _load_signal(args.signal)
    else:
        raise ParameterError("give a signal path or --random L SEED", stage="input")
    L = x.size
    if L % 2 or L <= 2 * ms.max_degree:
        raise ParameterError(f"signal length {L} must be even and > 2*max degree = {2 * ms.max_degree}",
                             stage="input")
    rep = filterbank_energy(ms, x)
    for r, e in enumerate(rep.bands):
        print(f"band {r}  {e:.17g}")
    print(f"total  {rep.total:.17g}")
    print(f"ratio  {rep.ratio:.17g}")
    return EXIT_OK if abs(rep.ratio - 1) <= ANALYZE_TOL else EXIT_FAIL


# ---------------------------------------------------------------------------


def _pow2_grid(s: str) -> int:
    v = int(s)
    if v < 1024 or v & (v - 1):
        raise argparse.ArgumentTypeError("grid must be a power of two >= 1024")
    return v


def _positive(s: str) -> float:
    v = float(s)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("must be a positive number")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="matchmask", description="Parseval wavelet frames with matched refinement masks.")
    sub = p.add_subparsers(dest="command", required=True)

    def tolerances(sp):
        sp.add_argument("--grid", type=_pow2_grid, default=4096)
        sp.add_argument("--tol-defect", type=_positive, default=DEFECT_TOL)
        sp.add_argument("--tol-uep", type=_positive, default=UEP_TOL)
        sp.add_argument("--tol-moments", type=_positive, default=MOMENT_TOL)

    d = sub.add_parser("design", help="design masks matching a function")
    src = d.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset")
    src.add_argument("--input", type=Path)
    d.add_argument("--epsilon", type=_positive, default=0.1)
    d.add_argument("--moments", type=int, default=1)
    d.add_argument("--out", default=".")
    d.add_argument("--levels", type=int, default=8)
    d.add_argument("--seed", type=int, default=0)
    tolerances(d)
    d.set_defaults(func=cmd_design)

    v = sub.add_parser("verify", help="certify a masks.json")
    v.add_argument("masks", type=Path)
    tolerances(v)
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sample", help="cascade samples of phi and psi_r")
    s.add_argument("masks", type=Path)
    s.add_argument("--levels", type=int, default=8)
    s.add_argument("--out", default="samples.csv")
    s.set_defaults(func=cmd_sample)

    a = sub.add_parser("analyze", help="one-level filter-bank energy check")
    a.add_argument("masks", type=Path)
    a.add_argument("signal", nargs="?", type=Path)
    a.add_argument("--random", nargs=2, type=int, metavar=("L", "SEED"))
    a.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except MatchMaskError as exc:
        return _exit_for(exc)


if __name__ == "__main__":
    sys.exit(main())
