"""Command-line front end.

Exit codes: 0 success, 1 operational error, 2 statistical check failed
(or a descent did not converge).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, theory
from .dynamics import NonConvergenceError, descend_exact, descend_hybrid, descend_quantized
from .experiments import FIGURES, ExperimentConfig, table_passed, table_to_csv
from .problem import (
    UNIFORM_SIGMA,
    MatrixParseError,
    generate_instance,
    load_instance,
    random_state,
    save_instance,
)
from .quantizer import (
    build_uniform_quantizer,
    dump_quantized_csv,
    optimize_l0,
    quantize_matrix,
    sample_moments,
    save_quantized,
)

EXIT_OK, EXIT_ERROR, EXIT_FLAGGED = 0, 1, 2


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _spin_string(s) -> str:
    return "".join("+" if v > 0 else "-" for v in s)


def _write_manifest(out: Path, command: str, config: dict, seed, outputs: list[Path], status: str,
                    started: float, flags: dict | None = None) -> Path:
    path = out / f"{command}_manifest.json"
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "artifact_version": __version__,
        "outputs": [str(p) for p in outputs],
        "status": status,
        "wall_time_s": round(time.time() - started, 3),
        "flags": flags or {},
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _instance_from_args(args):
    if getattr(args, "matrix", None):
        return load_instance(args.matrix, args.field)
    sigma = UNIFORM_SIGMA if args.dist == "uniform" else 1.0
    return generate_instance(args.n, args.dist, args.a0 * sigma, args.beta, args.seed)


def _add_generator_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=500, help="problem dimension N")
    p.add_argument("--dist", choices=("uniform", "gaussian"), default="uniform")
    p.add_argument("--a0", type=float, default=0.0, help="mean coupling A0 in units of sigma_A")
    p.add_argument("--beta", type=float, default=0.0, help="field level: B_i = beta*sqrt(N)*sigma_A")
    p.add_argument("--seed", type=int, default=0)


def cmd_generate(args) -> int:
    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inst = _instance_from_args(args)
    a_path, b_path = out / "A.csv", out / "B.csv"
    save_instance(inst, a_path, b_path)
    config = {k: getattr(args, k) for k in ("n", "dist", "a0", "beta")}
    _write_manifest(out, "generate", config, args.seed, [a_path, b_path], "ok", started)
    return EXIT_OK


def cmd_quantize(args) -> int:
    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inst = load_instance(args.matrix, args.field)
    if args.l0_mode == "optimize":
        q = optimize_l0(inst, args.m)
    else:
        q = build_uniform_quantizer(args.m, half_width=math.sqrt(3.0) * inst.sigma_A)
    qp = quantize_matrix(inst, q)
    mom = sample_moments(inst, q)
    bin_path, csv_path, rep_path = out / "quantized.bin", out / "quantized.csv", out / "report.json"
    save_quantized(qp, bin_path)
    dump_quantized_csv(qp, csv_path)
    report = {
        "N": inst.N,
        "m": q.m,
        "C": q.C,
        "l0": q.l0,
        "edges": list(q.edges),
        "a0": qp.a0,
        "sigma_a2": mom.sigma_a2,
        "cross": mom.cross,
        "rho_min": mom.rho_min,
        "degenerate": mom.degenerate,
        "P_worst_case": theory.error_worst_case(mom.rho_min),
        "P_max_asymptotic": theory.asymptotic_random(q.m)[1],
    }
    rep_path.write_text(json.dumps(report, indent=2) + "\n")
    print(json.dumps(report, indent=2))
    config = {"matrix": str(args.matrix), "m": args.m, "l0_mode": args.l0_mode}
    _write_manifest(out, "quantize", config, None, [bin_path, csv_path, rep_path], "ok", started)
    return EXIT_OK


def cmd_descend(args) -> int:
    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inst = _instance_from_args(args)
    start = random_state(inst.N, np.random.default_rng([args.seed, 1]))
    rng = np.random.default_rng([args.seed, 2])
    status = "ok"
    result: dict = {"mode": args.mode, "N": inst.N}
    trace_rows = None
    try:
        if args.mode == "exact":
            rec = descend_exact(inst, start, rng, args.max_sweeps, trace=args.trace)
        elif args.mode == "quantized":
            qp = quantize_matrix(inst, build_uniform_quantizer(args.m, math.sqrt(3.0) * inst.sigma_A))
            rec = descend_quantized(qp, start, rng, args.max_sweeps, trace=args.trace, sigma_A=inst.sigma_A)
        else:
            qp = quantize_matrix(inst, build_uniform_quantizer(args.m, math.sqrt(3.0) * inst.sigma_A))
            res = descend_hybrid(inst, qp, start, rng, args.max_sweeps)
            rec = None
            result.update(
                m=args.m, s_star=_spin_string(res.s_star), s0=_spin_string(res.s0), E_star=res.E_star,
                E0=res.E0, delta_E=res.delta_E, d=res.d, r=res.r,
            )
    except NonConvergenceError as exc:
        status, rec = "non-converged", exc.record
    if rec is not None:
        result.update(state=_spin_string(rec.state), energy=rec.energy, flips=rec.flips, sweeps=rec.sweeps, r=rec.r)
        if args.mode == "quantized":
            result["m"] = args.m
        trace_rows = rec.trace
    res_path = out / "descend.json"
    res_path.write_text(json.dumps(result, indent=2) + "\n")
    outputs = [res_path]
    if args.trace and trace_rows:
        tr_path = out / "trace.csv"
        with open(tr_path, "w") as fh:
            fh.write("sweep,flips,energy\n")
            for sweep, flips, e in trace_rows:
                fh.write(f"{sweep},{flips},{e!r}\n")
        outputs.append(tr_path)
    config = {k: getattr(args, k, None) for k in ("matrix", "n", "dist", "a0", "beta", "mode", "m", "max_sweeps")}
    _write_manifest(out, "descend", config, args.seed, outputs, status, started)
    return EXIT_OK if status == "ok" else EXIT_FLAGGED


def theory_report(m: int, A0: float, sigma_A: float, beta: float, N: int, r: float) -> dict:
    """All analytic predictions for one parameter set; ``A0`` in units of ``sigma_A``."""
    a0 = A0 * sigma_A
    up = theory.uniform_params(m, a0, sigma_A)
    B = beta * math.sqrt(N) * sigma_A
    stats = theory.field_stats(N, a0, sigma_A, a0 * up.a0_factor, up.sigma_a2, up.cross, B, B * up.a0_factor)
    P_random = theory.error_random_point(stats)
    rho_min, P_max = theory.asymptotic_random(m)
    P_min = theory.error_at_minimum(m, r)
    return {
        "m": m, "A0": a0, "sigma_A": sigma_A, "beta": beta, "N": N, "r": r,
        "C": up.C, "sigma_a2": up.sigma_a2, "cross": up.cross, "rho": stats.rho, "rho_min": rho_min,
        "P_random": P_random, "P_worst_case": theory.error_worst_case(rho_min), "P_max": P_max,
        "P_min": P_min, "P_min_asymptotic": theory.asymptotic_minimum(m),
        "delta_E": theory.predicted_delta_E(P_min), "d": theory.predicted_distance(N, P_random),
    }


def cmd_theory(args) -> int:
    print(json.dumps(theory_report(args.m, args.a0, args.sigma_a, args.beta, args.n, args.r), indent=2))
    return EXIT_OK


def cmd_experiment(args) -> int:
    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kw = dict(
        N=args.n, trials=args.trials, samples_per_trial=args.samples, seed=args.seed,
        baseline_binarized=args.baseline_binarized, dist=args.dist,
    )
    if args.m is not None:
        kw["m_list"] = args.m
    if args.a0_grid is not None:
        kw["A0_grid"] = args.a0_grid
    if args.beta is not None:
        kw["beta_list"] = args.beta
    cfg = ExperimentConfig(**kw)
    table = FIGURES[args.figure](cfg)
    csv_path = out / f"{args.figure}.csv"
    csv_path.write_text(table_to_csv(table))
    flags = {f"{name}@{r.x!r}": r.passed for name, rows in table.items() for r in rows}
    ok = table_passed(table)
    _write_manifest(out, args.figure, asdict(cfg), cfg.seed, [csv_path], "ok" if ok else "failed", started, flags)
    print(csv_path.read_text(), end="")
    return EXIT_OK if ok else EXIT_FLAGGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hopquant",
        description="Hopfield descent with a discretized coupling matrix.",
        epilog="Set HOPQUANT_WORKERS to run experiment trials in parallel processes.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a random instance and write A.csv / B.csv")
    _add_generator_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("quantize", help="quantize a matrix file")
    p.add_argument("matrix", help="CSV of N rows x N columns")
    p.add_argument("--field", help="one-column CSV with B")
    p.add_argument("--m", type=int, default=1, help="levels per sign (2m+1 total)")
    p.add_argument("--l0-mode", choices=("uniform", "optimize"), default="uniform")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("descend", help="run one descent (exact, quantized or hybrid)")
    p.add_argument("--matrix", help="CSV matrix; if omitted an instance is generated")
    p.add_argument("--field")
    _add_generator_flags(p)
    p.add_argument("--mode", choices=("exact", "quantized", "hybrid"), default="exact")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--max-sweeps", type=int, default=200)
    p.add_argument("--trace", action="store_true", help="write per-sweep trace.csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_descend)

    p = sub.add_parser("theory", help="print analytic predictions as JSON")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--a0", type=float, default=0.0, help="A0 in units of sigma_A")
    p.add_argument("--sigma-a", type=float, default=UNIFORM_SIGMA)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--r", type=float, default=1.37, help="normalized depth of the minimum")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("experiment", help="run a figure experiment and write CSV + manifest")
    p.add_argument("figure", choices=sorted(FIGURES))
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--m", type=_ints, help="comma-separated level counts")
    p.add_argument("--a0-grid", type=_floats, help="comma-separated A0/sigma_A values")
    p.add_argument("--beta", type=_floats, help="comma-separated field levels")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--samples", type=int, default=2000, help="samples per trial (random-point error)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dist", choices=("uniform", "gaussian"), default="uniform")
    p.add_argument("--baseline-binarized", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MatrixParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
