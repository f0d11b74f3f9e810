"""Command-line front end: ``podnn {qmc,sample,pod,train,eval,study}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import io
from .analysis import (
    StageError,
    coefficient_error,
    projection_error,
    run_study,
    surrogate_l2_error,
)
from .config import ConfigError, load_config
from .nn import fit_normalizations, mlp_init, size_apriori, train
from .pod import (
    APRIORI,
    assemble_snapshots,
    pod_basis,
    project_coeffs,
    rank_apriori,
    rank_by_tolerance,
    split_real_imag,
)
from .problem import FemSpace, assemble_gram
from .qmc import halton_points, parameter_points, to_parameter_cube

log = logging.getLogger("podnn")


class CliError(RuntimeError):
    def __init__(self, stage: str, message: str, code: int = 1):
        super().__init__(message)
        self.stage = stage
        self.code = code


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError("input", f"{what} file not found: {p}", 2)
    return p


def _json_out(payload: dict, path) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_qmc(cfg, out, threads=None) -> None:
    pts = to_parameter_cube(halton_points(cfg.qmc))
    io.write_points_csv(out, pts)
    log.info("wrote %d points of dimension %d to %s", *pts.shape, out)


def cmd_sample(cfg, out, threads=None) -> None:
    q = cfg.qmc
    pts = parameter_points(q.s, q.n_points, q.start_index)
    snap = assemble_snapshots(cfg.problem, pts, threads=threads)
    io.write_snapshots(out, snap)
    log.info("wrote %d snapshots (N_h=%d) to %s", snap.n_samples, snap.n_dof, out)


def cmd_pod(snapshots_path, cfg, out, threads=None) -> dict:
    snap = io.read_snapshots(_require(snapshots_path, "snapshot"))
    g = assemble_gram(FemSpace(snap.n_dof))
    full, diag = pod_basis(snap, g)
    N = snap.n_samples
    if cfg["pod"]["rank_mode"] == "apriori":
        J, tol = min(rank_apriori(N, cfg.rates), full.full_rank), APRIORI
    else:
        tol = cfg.tolerance(N)
        J = rank_by_tolerance(full, tol)
    basis = full.truncate(J, tolerance=tol)
    io.write_basis(out, basis)
    diagnostics = {
        "J": J,
        "full_rank": full.full_rank,
        "n_samples": N,
        "s": snap.s,
        "tolerance": tol,
        "empirical_error": float(diag.tail_per_rank[J]),
        "singular_values": [float(v) for v in full.singular_values],
        "tail_per_rank": [float(v) for v in diag.tail_per_rank],
        "zero_snapshots": diag.flagged_zero,
    }
    _json_out(diagnostics, str(out) + ".json")
    return diagnostics


def cmd_train(snapshots_path, basis_path, cfg, out, threads=None) -> dict:
    snap = io.read_snapshots(_require(snapshots_path, "snapshot"))
    basis_path = _require(basis_path, "basis")
    basis = io.read_basis(basis_path)
    if basis.basis.shape[0] != snap.n_dof:
        raise CliError("input", f"basis has {basis.basis.shape[0]} dofs, snapshots {snap.n_dof}", 2)
    if basis.rank == 0:
        raise CliError("training", "basis has rank 0, nothing to learn")
    g = assemble_gram(FemSpace(snap.n_dof))
    N = snap.n_samples
    targets = split_real_imag(project_coeffs(snap.snapshots, basis, g)).T
    sizing = size_apriori(N, cfg.rates)
    tcfg = replace(cfg.train, stop_threshold=cfg.stop_threshold(N))
    model = fit_normalizations(mlp_init(sizing.dims(snap.s, 2 * basis.rank), tcfg.seed),
                               snap.params, targets)
    model, hist = train(model, snap.params, targets, tcfg)
    io.write_model(out, model, io.file_id(basis_path))
    io.write_history_csv(str(out) + ".history.csv", hist)
    summary = {
        "dims": list(model.dims),
        "epochs": hist.epochs,
        "stop_reason": hist.stop_reason,
        "best_loss": hist.best_loss,
        "stop_threshold": tcfg.stop_threshold,
    }
    log.info("training: %s", summary)
    return summary


def cmd_eval(model_path, basis_path, cfg, out=None, threads=None) -> dict:
    model, basis_id = io.read_model(_require(model_path, "model"))
    basis_path = _require(basis_path, "basis")
    if basis_id != io.file_id(basis_path):
        raise CliError("input", "model was trained against a different basis file", 2)
    basis = io.read_basis(basis_path)
    problem = cfg.problem
    if problem.fem.n_dof != basis.basis.shape[0]:
        raise CliError("input", "config n_dof does not match the basis", 2)
    s = model.dims[0]
    test_pts = parameter_points(s, cfg["study"]["test_size"], cfg.test_start)
    test_S = assemble_snapshots(problem, test_pts, threads=threads).snapshots
    g = assemble_gram(problem.fem)
    metrics = {
        "n_test": int(test_pts.shape[0]),
        "test_start": cfg.test_start,
        "J": basis.rank,
        "pod_gen_err": projection_error(basis, g, test_S),
        "nn_gen_err": coefficient_error(model, basis, problem, test_pts, test_snapshots=test_S),
        "total_l2_err": surrogate_l2_error(model, basis, problem, test_pts, test_snapshots=test_S),
    }
    _json_out(metrics, out)
    return metrics


def cmd_study(cfg, out_dir, threads=None):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = run_study(cfg.study(threads))
    io.write_report_csv(out_dir / "report.csv", report)
    io.write_report_json(out_dir / "report.json", report, cfg.to_dict())
    return report


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file (INI style)")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads for snapshot solves (default: all cores)")
    common.add_argument("--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="podnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("qmc", parents=[common], help="write Halton parameter points as CSV")
    p.add_argument("--out", required=True)
    p = sub.add_parser("sample", parents=[common], help="solve snapshots at Halton points")
    p.add_argument("--out", required=True)
    p = sub.add_parser("pod", parents=[common], help="build a reduced basis from snapshots")
    p.add_argument("snapshots")
    p.add_argument("--out", required=True)
    p = sub.add_parser("train", parents=[common], help="train the coefficient network")
    p.add_argument("snapshots")
    p.add_argument("basis")
    p.add_argument("--out", required=True)
    p = sub.add_parser("eval", parents=[common], help="held-out error metrics as JSON")
    p.add_argument("model")
    p.add_argument("basis")
    p.add_argument("--out", default=None)
    p = sub.add_parser("study", parents=[common], help="N-convergence study")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def _error_line(stage: str, exc: Exception) -> None:
    line = {"error": str(exc), "stage": stage, "type": type(exc).__name__}
    sys.stderr.write(json.dumps(line) + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        _error_line("config", exc)
        return 2
    try:
        if args.command == "qmc":
            cmd_qmc(cfg, args.out, threads)
        elif args.command == "sample":
            cmd_sample(cfg, args.out, threads)
        elif args.command == "pod":
            cmd_pod(args.snapshots, cfg, args.out, threads)
        elif args.command == "train":
            cmd_train(args.snapshots, args.basis, cfg, args.out, threads)
        elif args.command == "eval":
            cmd_eval(args.model, args.basis, cfg, args.out, threads)
        elif args.command == "study":
            cmd_study(cfg, args.out, threads)
    except CliError as exc:
        _error_line(exc.stage, exc)
        return exc.code
    except io.FormatError as exc:
        _error_line("input", exc)
        return 2
    except StageError as exc:
        _error_line(exc.stage, exc)
        return 1
    except Exception as exc:  # surfaced as a machine-readable line, not a traceback
        _error_line(args.command, exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
