"""Command-line front end.

Exit status: 0 when every check in the selected mode passes, 1 on a failed
verification, 2 on a configuration error, 3 when the solver fails.

The environment variable ``QMA_THREADS`` caps the BLAS/FFT thread pools; it
must be read before numpy is imported, so heavy imports happen inside
:func:`run`.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _apply_threads() -> None:
    threads = os.environ.get("QMA_THREADS")
    if threads:
        for var in THREAD_VARS:
            os.environ[var] = threads


def _jsonable(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2) + "\n")


class SolveFailed(Exception):
    pass


def _grid_and_field(cfg):
    from qma.fieldio import read_field
    from qma.torus import SpectralGrid, harmonic_field

    if cfg.F_file:
        grid, F = read_field(cfg.F_file)
        if grid.n != cfg.n:
            from qma.config import ConfigError

            raise ConfigError(f"F_file has n={grid.n} but the config says n={cfg.n}", "F_file")
        return grid, F
    grid = SpectralGrid.from_labels(cfg.n, cfg.active_labels, cfg.N)
    return grid, harmonic_field(grid, cfg.harmonics)


def _solver_config(cfg):
    from qma.solver import SolveConfig

    return SolveConfig(continuity_steps=cfg.continuity_steps, newton_tol=cfg.newton_tol,
                       max_newton=cfg.max_newton, damping=cfg.damping,
                       linear_tol=cfg.linear_tol)


def run_identities(cfg, out: Path) -> bool:
    from qma.suites import wedge_suite

    res = wedge_suite(tuple(range(1, cfg.n + 1)))
    write_json(out / "identities.json", res)
    return res["passed"]


def run_diagonalize(cfg, out: Path, rng_seq) -> bool:
    import numpy as np

    from qma.suites import lemma2_suite, lemma3_suite

    seeds = rng_seq.spawn(5)
    rows = [lemma3_suite(n, cfg.trials, np.random.default_rng(seeds[n - 1])) for n in range(1, 5)]
    l2 = lemma2_suite(cfg.lemma2_instances, np.random.default_rng(seeds[4]))
    res = {"lemma3": rows, "lemma2": l2, "passed": all(r["passed"] for r in rows) and l2["passed"]}
    write_json(out / "diagonalize.json", res)
    return res["passed"]


def run_operators(cfg, out: Path, rng_seq) -> bool:
    import numpy as np

    from qma.suites import operator_suite

    res = operator_suite(cfg.operator_fields, np.random.default_rng(rng_seq))
    write_json(out / "operators.json", res)
    return res["passed"]


def run_solve(cfg, out: Path) -> bool:
    import numpy as np

    from qma.fieldio import field_to_csv, write_field, write_table
    from qma.solver import SolverError, solve_linear_n1, solve_qma
    from qma.torus import Torus

    grid, F = _grid_and_field(cfg)
    torus = Torus(grid)
    try:
        if grid.n == 1:
            rep = solve_linear_n1(torus, F)
        else:
            rep = solve_qma(torus, F, _solver_config(cfg))
    except SolverError as exc:
        write_json(out / "solve.json", {"error": str(exc), "passed": False})
        raise SolveFailed(str(exc)) from None
    doc = rep.to_dict()
    doc["residual_tol"] = cfg.residual_tol
    doc["passed"] = bool(rep.residual <= cfg.residual_tol and rep.min_eigenvalue >= -1e-9)
    write_json(out / "solve.json", doc)
    write_field(out / "phi.qmaf", grid, rep.phi)
    write_field(out / "F.qmaf", grid, F)
    field_to_csv(out / "phi.csv", grid, rep.phi, "phi")
    hist = [(j + 1, k, r) for j, h in enumerate(rep.residual_history) for k, r in enumerate(h)]
    write_table(out / "newton.csv", ["step", "iteration", "residual"], hist)
    return doc["passed"] and bool(np.isfinite(rep.phi).all())


def run_estimates(cfg, out: Path) -> bool:
    from qma.config import ConfigError
    from qma.estimates import default_family, scaled_family_table, theorem_a_study
    from qma.fieldio import write_table
    from qma.solver import SolverError
    from qma.torus import SpectralGrid

    if cfg.F_file:
        raise ConfigError("estimates need a harmonic F, not F_file", "F_file")
    grid = SpectralGrid.from_labels(cfg.n, cfg.active_labels, cfg.N)
    q = cfg.exponent
    scfg = _solver_config(cfg)
    try:
        target, members = default_family(grid, q, cfg.family_size, cfg.seed,
                                         calibration=cfg.harmonics)
        study = theorem_a_study(grid, members, q, target, scfg, refine=cfg.refine)
        scaled = scaled_family_table(grid, cfg.harmonics, cfg.scales, q, scfg)
    except SolverError as exc:
        write_json(out / "estimates.json", {"error": str(exc), "passed": False})
        raise SolveFailed(str(exc)) from None
    doc = study.to_dict()
    doc["members"] = [{"label": m.label, "harmonics": m.harmonics, "scale": m.scale,
                       "shift": m.shift} for m in members]
    scaled_ok = all(r[-1] for r in scaled)
    doc["scaled_family_passed"] = scaled_ok
    write_json(out / "estimates.json", doc)
    c = study.constants
    write_table(out / "cherrier.csv", ["instance", "p", "ratio", "fitted_C"],
                [(r.label, p, v, c.cherrier) for r in study.instances for p, v in r.cherrier])
    write_table(out / "lemma4.csv", ["instance", "i", "p", "lhs", "rhs"],
                [(r.label, *row) for r in study.instances for row in r.lemma4])
    write_table(out / "stokes.csv", ["instance", "p", "residual"],
                [(r.label, s["p"], s["residual"]) for r in study.instances for s in r.stokes])
    write_table(out / "moser.csv", ["instance", "k", "exponent", "log_norm", "log_norm_normalized"],
                [(r.label, k, e, a, b) for r in study.instances
                 for k, (e, a, b) in enumerate(zip(r.moser["exponents"], r.moser["log_norms"],
                                                   r.moser["log_norms_normalized"]))])
    write_table(out / "theorem_a.csv",
                ["instance", "sup_abs_phi", "minus_inf_phi", "l1_norm", "C", "passed"],
                [(r.label, r.sup_abs_phi, -r.inf_phi, r.l1_norm, c.C, r.passed)
                 for r in study.instances])
    write_table(out / "scaled.csv",
                ["s", "norm_exp_F_q", "sup_abs_phi", "l1_norm", "lemma5_log_lhs",
                 "lemma5_log_rhs", "passed"], scaled)
    return study.passed and scaled_ok


def run(cfg) -> int:
    """Execute ``cfg.mode`` and write artifacts under ``cfg.out``."""
    import numpy as np

    from qma.config import ConfigError
    from qma.fieldio import FieldFormatError

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    seq = np.random.SeedSequence(cfg.seed)
    diag_seq, op_seq = seq.spawn(2)
    results = {}
    try:
        if cfg.mode in ("identities", "full"):
            results["identities"] = run_identities(cfg, out)
        if cfg.mode in ("diagonalize", "full"):
            results["diagonalize"] = run_diagonalize(cfg, out, diag_seq)
        if cfg.mode == "full":
            results["operators"] = run_operators(cfg, out, op_seq)
        if cfg.mode in ("solve", "full"):
            results["solve"] = run_solve(cfg, out)
        if cfg.mode in ("estimates", "full"):
            results["estimates"] = run_estimates(cfg, out)
    except SolveFailed as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        results["solver_error"] = str(exc)
        write_json(out / "summary.json", {"mode": cfg.mode, "results": results, "passed": False})
        return EXIT_SOLVER
    except (ConfigError, FieldFormatError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    passed = all(results.values())
    write_json(out / "summary.json", {"mode": cfg.mode, "seed": cfg.seed, "results": results,
                                      "passed": passed})
    for name, ok in results.items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    return EXIT_OK if passed else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qma", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--mode", choices=("identities", "diagonalize", "solve", "estimates", "full"))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_threads()
    from qma.config import ConfigError, ExperimentConfig, load_config, with_overrides

    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig().validate()
        cfg = with_overrides(cfg, mode=args.mode, seed=args.seed, out=args.out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
