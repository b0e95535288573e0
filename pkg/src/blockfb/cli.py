"""Command-line entry point: ``blockfb gen|solve|experiment|reference|verify``.

Exit status is 0 on success, 2 when the input fails validation, and 1 on
any other runtime failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from importlib import resources

import jsonschema
import numpy as np

from .core import ValidationError
from .experiment import (
    custom_certificate,
    generate_lasso_instance,
    load_problem,
    make_certificate,
    run_experiment,
    write_instance,
)
from .sampling import SamplingScheme, beta_by_enumeration, beta_tau_nice, make_rng, scheme_from_config
from .smoothness import SeparabilityStructure, nu_s1, nu_s2, verify_eso_s1, verify_eso_s2
from .solver import SolverConfig, atomic_write_text, reference_solve, run

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


def load_schema() -> dict:
    return json.loads(resources.files("blockfb").joinpath("schema/config.schema.json").read_text())


def load_config(path: str, overrides: argparse.Namespace) -> dict:
    """Read and validate a JSON config, then apply command-line overrides."""
    with open(path) as fh:
        cfg = json.load(fh)
    for key in ("seed", "out", "max_iters"):
        value = getattr(overrides, key, None)
        if value is not None:
            cfg[key] = value
    if getattr(overrides, "max_iters", None) is not None:
        cfg.pop("epochs", None)
    jsonschema.validate(cfg, load_schema())
    return cfg


def worker_count() -> int:
    raw = os.environ.get("BLOCKFB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValidationError(f"BLOCKFB_THREADS must be an integer, got {raw!r}")


def cmd_gen(args) -> int:
    inst = generate_lasso_instance(args.p, args.m, args.nnz_per_row, args.seed, args.x_density)
    info = write_instance(inst, args.out)
    print(json.dumps(info, sort_keys=True))
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = load_config(args.config, args)
    base = os.path.dirname(os.path.abspath(args.config))
    problem, digest = load_problem(cfg["problem"], base)
    s_cfg = cfg.get("sampling", {"kind": "serial"})
    if isinstance(s_cfg, list):
        if len(s_cfg) != 1:
            raise ValidationError("solve takes a single sampling scheme")
        s_cfg = s_cfg[0]
    scheme = scheme_from_config(s_cfg, problem.m)
    cert_name = cfg.get("certificates", ["s1_tau_nice"])
    if len(cert_name) != 1 or len(cfg.get("deltas", [1.0])) != 1:
        raise ValidationError("solve takes a single certificate and delta; use experiment for grids")
    cert_name = cert_name[0]
    cert = custom_certificate(cfg["custom_nu"]) if cert_name == "custom" else make_certificate(problem, scheme, cert_name)
    config = SolverConfig(
        delta=cfg.get("deltas", [1.0])[0],
        certificate=cert,
        scheme=scheme,
        max_iters=cfg.get("max_iters", 1000),
        tol=cfg.get("tol", 1e-8),
        monotone=cfg.get("monotone", False),
        seed=cfg.get("seed", 0),
        record_every=cfg.get("record_every", 100),
        bitrepro=cfg.get("bitrepro", True),
    )
    report = run(problem, config, input_hash=digest)
    report.config = {"experiment": cfg, "cell": report.config}
    out = cfg.get("out", "run")
    os.makedirs(out, exist_ok=True)
    report.write_csv(os.path.join(out, "run.csv"))
    report.write_metadata(os.path.join(out, "run.json"))
    np.savetxt(os.path.join(out, "x.csv"), report.x, fmt="%.17g")
    last = report.rows[-1]
    print(json.dumps({"iter": last["iter"], "F": last["F"], "residual_norm": last["residual_norm"], "out": out}))
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = load_config(args.config, args)
    base = os.path.dirname(os.path.abspath(args.config))
    summary = run_experiment(cfg, cfg.get("out", "results"), base, worker_count())
    print(json.dumps({"F_star": summary["F_star"], "eta": summary["eta"], "runs": len(summary["files"]["runs"])}))
    return EXIT_OK


def cmd_reference(args) -> int:
    cfg = load_config(args.config, args)
    base = os.path.dirname(os.path.abspath(args.config))
    problem, digest = load_problem(cfg["problem"], base)
    ref = reference_solve(problem, tol=args.tol, max_iters=args.max_ref_iters)
    out = cfg.get("out", "reference")
    os.makedirs(out, exist_ok=True)
    np.savetxt(os.path.join(out, "x_ref.csv"), ref.x, fmt="%.17g")
    info = {"F_star": ref.F_star, "residual": ref.residual, "iterations": ref.iterations, "input_hash": digest}
    atomic_write_text(os.path.join(out, "reference.json"), json.dumps(info, indent=2, sort_keys=True))
    print(json.dumps(info))
    return EXIT_OK if ref.residual <= args.tol else EXIT_RUNTIME


def cmd_verify(args) -> int:
    """Beta enumeration against closed forms, then ESO checks on random least squares."""
    from .problems import make_lasso

    rng = make_rng(args.seed)
    m, tau = args.m, args.tau
    if args.structure:
        with open(args.structure) as fh:
            structure = SeparabilityStructure.from_json(json.load(fh))
        m = structure.m
    else:
        structure = None
    scheme = SamplingScheme.tau_nice(m, tau)
    failures = []
    for trial in range(args.trials):
        A = np.zeros((args.rows, m))
        for k in range(args.rows):
            cols = rng.choice(m, rng.integers(1, min(args.max_row_nnz, m) + 1), replace=False)
            A[k, cols] = rng.uniform(-1, 1, cols.size)
        problem = make_lasso(A, rng.standard_normal(args.rows), 0.1)
        st = structure if structure is not None else problem.structure
        betas = beta_by_enumeration(scheme, st)
        if np.all(st.group_sizes == st.eta) and m > 1:
            closed = beta_tau_nice(m, st.eta, tau)
            err = float(np.abs(betas.beta1[st.covered] - closed).max())
            if err > 1e-12:
                failures.append(f"trial {trial}: enumeration differs from closed form by {err:.3e}")
        if structure is None:
            s1 = verify_eso_s1(problem, scheme, nu_s1(st, betas), args.probes, rng)
            s2 = verify_eso_s2(problem, scheme, nu_s2(st, scheme), args.probes, rng)
            for name, rep in (("S1", s1), ("S2", s2)):
                if not rep.valid:
                    failures.append(f"trial {trial}: {name} min slack {rep.min_slack:.3e}")
    print(json.dumps({"m": m, "tau": tau, "trials": args.trials, "failures": failures}))
    return EXIT_OK if not failures else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockfb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a sparse random Lasso instance")
    gen.add_argument("--p", type=int, required=True, help="rows of A")
    gen.add_argument("--m", type=int, required=True, help="columns of A (blocks)")
    gen.add_argument("--nnz-per-row", type=int, required=True)
    gen.add_argument("--x-density", type=float, default=0.1)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen)

    for name, func, text in (
        ("solve", cmd_solve, "single run from a config"),
        ("experiment", cmd_experiment, "grid of runs with aggregate CSVs"),
        ("reference", cmd_reference, "high-accuracy reference solve"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--max-iters", type=int, dest="max_iters")
        p.set_defaults(func=func)
        if name == "reference":
            p.add_argument("--tol", type=float, default=1e-12)
            p.add_argument("--max-ref-iters", type=int, default=100_000)

    ver = sub.add_parser("verify", help="check beta constants and ESO inequalities by enumeration")
    ver.add_argument("--m", type=int, default=6)
    ver.add_argument("--tau", type=int, default=2)
    ver.add_argument("--rows", type=int, default=8)
    ver.add_argument("--max-row-nnz", type=int, default=3)
    ver.add_argument("--trials", type=int, default=5)
    ver.add_argument("--probes", type=int, default=20)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--structure", help="structure JSON with index_sets and block_lipschitz")
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        return args.func(args)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        print(f"error: config invalid at {where}: {exc.message}", file=sys.stderr)
        return EXIT_INVALID
    except (ValidationError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
