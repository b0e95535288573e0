"""Instance generation and experiment grids behind the command-line tool."""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .core import ValidationError
from .problems import (
    CompositeProblem,
    make_lasso,
    make_min_norm_dual,
    make_ridge_dual,
    make_svm_dual,
    read_matrix,
    read_vector,
    write_matrix_market,
    write_vector,
)
from .sampling import SamplingScheme, beta_by_enumeration, make_rng, scheme_from_config, tau_nice_betas
from .smoothness import SmoothnessCertificate, nu_s1, nu_s1_refined, nu_s2, nu_s3
from .solver import (
    RunReport,
    SolverConfig,
    atomic_write_csv,
    atomic_write_text,
    content_hash,
    epoch_iterations,
    reference_solve,
    run,
)
from .core import DiagonalMetric

NOISE_SCALE = 0.06


@dataclass
class LassoInstance:
    A: sp.csc_matrix
    b: np.ndarray
    x_true: np.ndarray
    seed: int

    @property
    def eta(self) -> int:
        """Largest number of nonzeros in a row."""
        return int(np.diff(self.A.tocsr().indptr).max())

    @property
    def max_column_support(self) -> int:
        return int(np.diff(self.A.indptr).max())


def generate_lasso_instance(p: int, m: int, nnz_per_row: int, seed: int, x_density: float = 0.1, noise: float = NOISE_SCALE) -> LassoInstance:
    """Sparse random design with a fixed count of nonzeros per row.

    Entries are uniform on [-1, 1]; the ground truth has
    ``ceil(x_density * m)`` standard normal nonzeros; the response is
    ``A x_true + noise * N(0, I)``.
    """
    if not 1 <= nnz_per_row <= m:
        raise ValidationError(f"nonzeros per row must lie in [1, {m}]")
    if not 0 < x_density <= 1:
        raise ValidationError("x_density must lie in (0, 1]")
    rng = make_rng(seed)
    cols = np.concatenate([np.sort(rng.choice(m, nnz_per_row, replace=False)) for _ in range(p)])
    vals = rng.uniform(-1.0, 1.0, size=p * nnz_per_row)
    indptr = np.arange(0, p * nnz_per_row + 1, nnz_per_row)
    A = sp.csr_matrix((vals, cols, indptr), shape=(p, m)).tocsc()
    x_true = np.zeros(m)
    support = rng.choice(m, math.ceil(x_density * m), replace=False)
    x_true[support] = rng.standard_normal(support.size)
    b = A @ x_true + noise * rng.standard_normal(p)
    return LassoInstance(A, b, x_true, seed)


def write_instance(instance: LassoInstance, out_dir) -> dict:
    """Write ``A.mtx``, ``b.csv``, ``x_true.csv`` and ``instance.json``."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {k: os.path.join(out_dir, f) for k, f in (("A", "A.mtx"), ("b", "b.csv"), ("x_true", "x_true.csv"))}
    tmp = paths["A"] + ".tmp.mtx"
    write_matrix_market(tmp, instance.A)
    os.replace(tmp, paths["A"])
    for key in ("b", "x_true"):
        tmp = paths[key] + ".tmp"
        write_vector(tmp, getattr(instance, key))
        os.replace(tmp, paths[key])
    info = {
        "p": instance.A.shape[0],
        "m": instance.A.shape[1],
        "seed": instance.seed,
        "eta": instance.eta,
        "max_column_support": instance.max_column_support,
        "nnz": int(instance.A.nnz),
        "files": {k: os.path.basename(v) for k, v in paths.items()},
    }
    atomic_write_text(os.path.join(out_dir, "instance.json"), json.dumps(info, indent=2, sort_keys=True))
    return info


def lambda_for_sparsity(A, b, fraction: float = 0.1) -> float:
    """``fraction`` of the smallest weight for which zero is optimal."""
    return fraction * float(np.abs(sp.csc_matrix(A).T @ b).max())


def load_problem(section: dict, base_dir: str = ".") -> tuple:
    """Problem from a config ``problem`` section; returns (problem, input hash)."""
    kind = section["kind"]

    def path(key):
        p = section[key]
        full = p if os.path.isabs(p) else os.path.join(base_dir, p)
        if not os.path.exists(full):
            raise ValidationError(f"file not found: {full}")
        return full

    if "generate" in section:
        g = section["generate"]
        inst = generate_lasso_instance(g["p"], g["m"], g["nnz_per_row"], g.get("seed", 0), g.get("x_density", 0.1))
        A, rhs = inst.A, inst.b
        digest = content_hash(json.dumps(g, sort_keys=True).encode())
    else:
        mat_path = path("matrix")
        vec_path = path("vector")
        A, rhs = read_matrix(mat_path), read_vector(vec_path)
        with open(mat_path, "rb") as fa, open(vec_path, "rb") as fb:
            digest = content_hash(fa.read(), fb.read())
    if kind == "lasso":
        lam = section.get("lambda")
        if lam is None:
            lam = lambda_for_sparsity(A, rhs, section.get("lambda_fraction", 0.1))
        return make_lasso(A, rhs, lam), digest
    if kind == "min_norm":
        return make_min_norm_dual(A, rhs), digest
    if kind == "ridge":
        return make_ridge_dual(_dense(A), rhs, section["lambda"]), digest
    if kind == "svm":
        return make_svm_dual(_dense(A), rhs, section["lambda"]), digest
    raise ValidationError(f"unknown problem kind {kind!r}")


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A)


def make_certificate(problem: CompositeProblem, scheme: SamplingScheme, choice: str) -> SmoothnessCertificate:
    """Certificate by name.

    ``s1_tau_nice`` uses the closed-form beta_1 (enumerated for other
    schemes), ``s1_refined`` the per-group tau-nice sum, ``s2`` the
    almost-sure minimum, ``s3`` the full-displacement norms, and
    ``beta2_conservative`` the plain ``min(tau_max, eta) L_i``.
    """
    st = problem.structure
    if choice == "s1_tau_nice":
        if scheme.kind.value == "tau_nice":
            betas = tau_nice_betas(scheme.m, st.eta, scheme.tau)
        else:
            betas = beta_by_enumeration(scheme, st)
        return nu_s1(st, betas)
    if choice == "s1_refined":
        if scheme.kind.value != "tau_nice":
            raise ValidationError("the refined formula needs tau-nice sampling")
        return nu_s1_refined(st, scheme.m, scheme.tau)
    if choice == "s2":
        return nu_s2(st, scheme)
    if choice == "s3":
        return nu_s3(st, problem.operator_norms)
    if choice == "beta2_conservative":
        beta2 = min(st.eta, scheme.tau_max)
        return SmoothnessCertificate(beta2 * st.block_lipschitz, "S2", {"formula": "min(eta, tau_max)*L"})
    raise ValidationError(f"unknown certificate {choice!r}")


def custom_certificate(nu) -> SmoothnessCertificate:
    return SmoothnessCertificate(np.asarray(nu, dtype=np.float64), "S1", {"formula": "user supplied"})


def _bound_columns(report: RunReport, problem, scheme, gamma, x0, ref, delta):
    from .theory import RateBoundInputs, sublinear_bound, sublinear_bound_v2

    part = problem.partition
    dist_w = float(np.dot(1.0 / (gamma * scheme.marginals), part.block_sq_norms(x0 - ref.x)))
    f0_gap = max(problem.objective(x0) - ref.F_star, 0.0)
    inputs = RateBoundInputs(dist_w, f0_gap, scheme.p_min, delta)
    iters = report.iters
    report.add_column("gap", report.F - ref.F_star)
    report.add_column("sublinear_bound", [sublinear_bound(inputs, int(n)) if n >= 1 else math.inf for n in iters])
    report.add_column("sublinear_bound_v2", [sublinear_bound_v2(inputs, int(n)) for n in iters])


def _run_cell(args):
    problem, config, x0, ref, digest = args
    report = run(problem, config, x0, input_hash=digest)
    gamma = config.stepsizes()
    _bound_columns(report, problem, config.scheme, gamma, x0, ref, config.delta)
    return report


def run_experiment(cfg: dict, out_dir: str, base_dir: str = ".", workers: int = 1) -> dict:
    """Run every (sampling, certificate, delta, seed) cell of a config.

    Writes one telemetry CSV and JSON sidecar per cell under ``runs/``, one
    aggregate CSV of mean optimality gap per sampling/certificate/delta
    under ``aggregate/``, and ``reference.json`` with the optimal value used
    for the gaps. Returns a summary dictionary, also written as
    ``summary.json``.
    """
    problem, digest = load_problem(cfg["problem"], base_dir)
    m = problem.m
    ref = reference_solve(problem)
    os.makedirs(os.path.join(out_dir, "runs"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "aggregate"), exist_ok=True)
    atomic_write_text(
        os.path.join(out_dir, "reference.json"),
        json.dumps({"F_star": ref.F_star, "residual": ref.residual, "iterations": ref.iterations}, indent=2),
    )
    samplings = cfg.get("sampling", {"kind": "serial"})
    samplings = samplings if isinstance(samplings, list) else [samplings]
    certificates = cfg.get("certificates", ["s1_tau_nice"])
    deltas = cfg.get("deltas", [1.0])
    seed0 = cfg.get("seed", 0)
    seeds = [seed0 + k for k in range(cfg.get("n_seeds", 1))]
    x0 = np.zeros(problem.partition.n_total)

    groups = []
    cells = []
    for s_cfg in samplings:
        scheme = scheme_from_config(s_cfg, m)
        per_epoch = math.ceil(m / scheme.expected_size)
        if "epochs" in cfg:
            record_every = cfg.get("record_every", per_epoch)
            budget = epoch_iterations(m, scheme.expected_size, cfg["epochs"])
            budget = math.ceil(budget / record_every) * record_every
        else:
            record_every = cfg.get("record_every", 1)
            budget = cfg.get("max_iters", 1000)
        for cert_name in certificates:
            cert = custom_certificate(cfg["custom_nu"]) if cert_name == "custom" else make_certificate(problem, scheme, cert_name)
            for delta in deltas:
                label = f"{cert_name}_{_scheme_label(s_cfg)}_delta{delta:g}"
                members = []
                for seed in seeds:
                    config = SolverConfig(
                        delta=delta,
                        certificate=cert,
                        scheme=scheme,
                        max_iters=budget,
                        tol=None,
                        monotone=cfg.get("monotone", False),
                        seed=seed,
                        record_every=record_every,
                        bitrepro=cfg.get("bitrepro", True),
                    )
                    members.append(len(cells))
                    cells.append((label, seed, (problem, config, x0, ref, digest)))
                groups.append((label, members))

    if workers > 1 and len(cells) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_cell, [c[2] for c in cells]))
    else:
        reports = [_run_cell(c[2]) for c in cells]

    files = {"runs": [], "aggregate": []}
    for (label, seed, _), report in zip(cells, reports):
        stem = os.path.join(out_dir, "runs", f"{label}_seed{seed}")
        report.config = {"experiment": cfg, "cell": report.config}
        report.write_csv(stem + ".csv")
        report.write_metadata(stem + ".json")
        files["runs"].append(os.path.relpath(stem + ".csv", out_dir))
    for label, members in groups:
        gaps = np.array([reports[k].column("gap") for k in members])
        first = reports[members[0]]
        se = gaps.std(axis=0, ddof=1) / math.sqrt(len(members)) if len(members) > 1 else np.zeros(gaps.shape[1])
        lines = [["iter", "epoch", "mean_gap", "se_gap", "sublinear_bound"]]
        for k in range(gaps.shape[1]):
            lines.append(
                [
                    str(int(first.rows[k]["iter"])),
                    repr(float(first.rows[k]["epoch"])),
                    repr(float(gaps[:, k].mean())),
                    repr(float(se[k])),
                    repr(float(first.extra_columns["sublinear_bound"][k])),
                ]
            )
        path = os.path.join(out_dir, "aggregate", f"{label}.csv")
        atomic_write_csv(path, lines)
        files["aggregate"].append(os.path.relpath(path, out_dir))
    summary = {"F_star": ref.F_star, "m": m, "eta": problem.structure.eta, "input_hash": digest, "files": files}
    atomic_write_text(os.path.join(out_dir, "summary.json"), json.dumps(summary, indent=2, sort_keys=True))
    return summary


def _scheme_label(s_cfg: dict) -> str:
    kind = s_cfg["kind"]
    return f"tau{s_cfg['tau']}" if kind == "tau_nice" else kind
