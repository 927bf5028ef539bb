"""The ``dca`` command line: ingestion, manifests, and four commands.

``test`` runs the two-step neighborhood comparison on a pair of CSV
datasets, ``quant`` runs the permutation baseline on the same inputs,
``simulate`` executes a simulation config, and ``check`` prints the
coverage diagnostics for a covariance matrix.  Every output document
embeds a manifest (command, resolved options, seeds, library version,
input checksums) so a run can be reproduced from its output alone;
rerunning with the same inputs reproduces every byte except the
timestamp and wall-time fields.

Exit codes: 0 success, 2 bad input or configuration, 3 numerical
failure.  Argument-parsing errors also exit with 2, via argparse.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .comparators import quant_all_pvalues
from .conditions import condition_report, restricted_eigenvalue
from .dca import CvPolicy, DcaConfig, dca_network
from .errors import (
    InputError,
    NonNumericCell,
    NumericalError,
    ParseError,
    ZeroVarianceColumn,
)
from .experiments import (
    config_from_dict,
    desk_config,
    full_config,
    metrics_rows,
    report_as_dict,
    run_simulation,
)
from .inference import holm

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Dataset:
    """One ingested data matrix and where it came from."""

    matrix: np.ndarray
    variable_names: tuple[str, ...] | None
    source: str
    excluded_columns: tuple[int, ...] = ()

    def name_of(self, j: int) -> str:
        if self.variable_names is not None:
            return self.variable_names[j]
        return f"x{j}"


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to reproduce a run from its output document."""

    command: str
    config: dict
    seeds: dict
    library_version: str
    input_checksums: dict
    created_at: str

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "seeds": self.seeds,
            "library_version": self.library_version,
            "input_checksums": self.input_checksums,
            "created_at": self.created_at,
        }


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_manifest(command: str, config: dict, seeds: dict, inputs: tuple) -> RunManifest:
    return RunManifest(
        command=command,
        config=config,
        seeds=seeds,
        library_version=__version__,
        input_checksums={path: _sha256(path) for path in sorted(inputs)},
        created_at=datetime.now(timezone.utc).isoformat(),
    )


def _read_rows(path: str) -> list[list[str]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return [row for row in csv.reader(fh) if row]
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise ParseError(f"{path} is not UTF-8 text") from None


def ingest_csv(path: str, has_header: bool = False, standardize: bool = False) -> Dataset:
    """Read a samples-by-variables CSV into a :class:`Dataset`.

    Cells must parse as finite decimal numbers; RFC-4180 quoting is
    accepted.  With ``standardize`` each column is centered and scaled
    to unit sample standard deviation.  A constant column can neither
    be scaled nor carry any association signal, so it is dropped with a
    :class:`ZeroVarianceColumn` warning whether or not standardizing,
    and its index recorded in ``excluded_columns``.
    """
    rows = _read_rows(path)
    if not rows:
        raise ParseError(f"{path} is empty")
    names = None
    first_data_row = 1
    if has_header:
        names = tuple(cell.strip() for cell in rows[0])
        rows = rows[1:]
        first_data_row = 2
        if not rows:
            raise ParseError(f"{path} has a header but no data rows")
    p = len(rows[0])
    data = np.empty((len(rows), p), dtype=np.float64)
    for i, row in enumerate(rows):
        if len(row) != p:
            raise ParseError(
                f"expected {p} cells, found {len(row)}",
                row=first_data_row + i,
                column=None,
            )
        for jcol, cell in enumerate(row):
            try:
                value = float(cell.strip())
            except ValueError:
                raise NonNumericCell(
                    f"cell {cell.strip()!r} is not a number",
                    row=first_data_row + i,
                    column=jcol + 1,
                ) from None
            if not math.isfinite(value):
                raise NonNumericCell(
                    f"cell {cell.strip()!r} is not finite",
                    row=first_data_row + i,
                    column=jcol + 1,
                )
            data[i, jcol] = value
    if names is not None and len(names) != p:
        raise ParseError(f"header has {len(names)} names for {p} columns")
    sd = np.std(data, axis=0, ddof=1) if data.shape[0] > 1 else np.zeros(p)
    constant = np.flatnonzero(sd == 0.0)
    for jcol in constant:
        label = names[jcol] if names is not None else f"column {jcol + 1}"
        warnings.warn(f"{label} is constant and was excluded", ZeroVarianceColumn)
    keep = np.setdiff1d(np.arange(p), constant)
    if keep.size == 0:
        raise ParseError(f"{path} has no non-constant columns")
    data = data[:, keep]
    if names is not None:
        names = tuple(names[k] for k in keep)
    if standardize:
        data = (data - np.mean(data, axis=0)) / np.std(data, axis=0, ddof=1)
    return Dataset(
        matrix=data,
        variable_names=names,
        source=path,
        excluded_columns=tuple(int(c) for c in constant),
    )


def _read_square_matrix(path: str) -> np.ndarray:
    """Read a covariance matrix CSV: no header, exact float grid."""
    rows = _read_rows(path)
    if not rows:
        raise ParseError(f"{path} is empty")
    try:
        mat = np.array([[float(cell) for cell in row] for row in rows])
    except ValueError:
        raise NonNumericCell(f"{path} contains a non-numeric cell") from None
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InputError(f"expected a square matrix, got shape {mat.shape}")
    return mat


def _write_json(path: str, doc: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _marker(value):
    """JSON-safe scalar: non-finite and missing values become a marker."""
    if value is None:
        return "not-computed"
    value = float(value)
    if not math.isfinite(value):
        return "not-computed"
    return value


def _resolve_threads(flag_value: int | None) -> int:
    if flag_value is not None:
        if flag_value < 1:
            raise InputError(f"--threads must be positive, got {flag_value}")
        return flag_value
    env = os.environ.get("DCA_THREADS")
    if env is not None:
        try:
            value = int(env)
        except ValueError:
            raise InputError(f"DCA_THREADS must be an integer, got {env!r}") from None
        if value < 1:
            raise InputError(f"DCA_THREADS must be positive, got {value}")
        return value
    return os.cpu_count() or 1


def _load_pair(args) -> tuple[Dataset, Dataset]:
    d1 = ingest_csv(args.data1, has_header=args.has_header, standardize=args.standardize)
    d2 = ingest_csv(args.data2, has_header=args.has_header, standardize=args.standardize)
    if d1.matrix.shape[1] != d2.matrix.shape[1]:
        raise InputError(
            f"variable counts differ: {d1.matrix.shape[1]} in {args.data1}, "
            f"{d2.matrix.shape[1]} in {args.data2}"
        )
    return d1, d2


def _pvalue_entries(pset) -> list[dict]:
    entries = []
    for label, raw, adj in zip(pset.labels, pset.pvalues, pset.adjusted):
        network, candidate = label
        entries.append(
            {
                "network": network,
                "candidate": None if candidate is None else int(candidate),
                "pvalue": float(raw),
                "adjusted": float(adj),
            }
        )
    return entries


def cmd_test(args) -> int:
    threads = _resolve_threads(args.threads)
    d1, d2 = _load_pair(args)
    cfg = DcaConfig(
        alpha=args.alpha,
        estimation_mode=args.mode,
        test_kind=args.test,
        edge_rule=args.edge_rule,
        lambda_policy=CvPolicy(folds=args.folds),
        perms=args.perms,
        seed=args.seed,
    )
    result = dca_network(d1.matrix, d2.matrix, cfg, threads=threads)
    manifest = build_manifest(
        command="test",
        config={
            "alpha": args.alpha,
            "mode": args.mode,
            "test": args.test,
            "edge_rule": args.edge_rule,
            "folds": args.folds,
            "perms": args.perms,
            "standardize": args.standardize,
            "has_header": args.has_header,
        },
        seeds={"seed": args.seed},
        inputs=(args.data1, args.data2),
    )
    doc = {
        "schema_version": SCHEMA_VERSION,
        "manifest": manifest.as_dict(),
        "nodes": [
            {
                "j": node.node,
                "name": d1.name_of(node.node),
                "ne0": sorted(int(k) for k in node.common_neighborhood),
                "pvalues": _pvalue_entries(node.pvalues),
                "node_pvalue": _marker(node.node_pvalue),
                "reject": bool(node.reject),
                "partners": sorted(int(k) for k in node.differential_partners),
                "error": node.error,
            }
            for node in result.nodes
        ],
        "differential_edges": sorted(
            [int(a), int(b)] for a, b in result.differential_edges
        ),
        "network_reject": bool(result.network_reject),
    }
    _write_json(args.out, doc)
    return 0


def cmd_quant(args) -> int:
    _resolve_threads(args.threads)
    d1, d2 = _load_pair(args)
    stats, pvalues = quant_all_pvalues(
        d1.matrix, d2.matrix, perms=args.perms, seed=args.seed
    )
    decision = holm(pvalues, args.alpha)
    manifest = build_manifest(
        command="quant",
        config={
            "alpha": args.alpha,
            "perms": args.perms,
            "standardize": args.standardize,
            "has_header": args.has_header,
        },
        seeds={"seed": args.seed},
        inputs=(args.data1, args.data2),
    )
    doc = {
        "schema_version": SCHEMA_VERSION,
        "manifest": manifest.as_dict(),
        "nodes": [
            {
                "j": j,
                "name": d1.name_of(j),
                "statistic": float(stats[j]),
                "pvalue": float(pvalues[j]),
                "perms": args.perms,
                "reject_holm": bool(decision.reject[j]),
            }
            for j in range(len(pvalues))
        ],
        "rejected_nodes": [int(j) for j in np.flatnonzero(decision.reject)],
    }
    _write_json(args.out, doc)
    return 0


def cmd_simulate(args) -> int:
    threads = _resolve_threads(args.threads)
    try:
        with open(args.config, encoding="utf-8") as fh:
            document = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {args.config}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{args.config} is not valid JSON: {exc}") from None
    base = full_config() if args.full_scale else desk_config()
    cfg = config_from_dict(document, base=base)
    report = run_simulation(cfg, workers=threads)
    manifest = build_manifest(
        command="simulate",
        config={"full_scale": args.full_scale},
        seeds={"seed": cfg.seed, "rep_seeds": list(report.rep_seeds)},
        inputs=(args.config,),
    )
    os.makedirs(args.out, exist_ok=True)
    _write_json(
        os.path.join(args.out, "report.json"),
        {
            "schema_version": SCHEMA_VERSION,
            "manifest": manifest.as_dict(),
            "report": report_as_dict(report),
        },
    )
    with open(os.path.join(args.out, "metrics.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "n", "metric", "value"])
        for method, n, metric, value in metrics_rows(report):
            writer.writerow([method, n, metric, "" if value is None else repr(value)])
    return 0


def cmd_check(args) -> int:
    _resolve_threads(args.threads)
    sigma = _read_square_matrix(args.sigma)
    if not np.allclose(sigma, sigma.T, atol=1e-8):
        raise InputError("covariance matrix is not symmetric")
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise InputError("covariance matrix is not positive definite") from None
    p = sigma.shape[0]
    if not 0 <= args.node < p:
        raise InputError(f"--node {args.node} out of range for a {p}-variable matrix")
    report = condition_report(sigma, args.node, args.lam, args.n)
    extra_re = None
    if args.re_support:
        support = _parse_support(args.re_support, p, args.node)
        keep = [k for k in range(p) if k != args.node]
        sub = sigma[np.ix_(keep, keep)]
        reduced = [k - (k > args.node) for k in support]
        extra_re = restricted_eigenvalue(sub, reduced)
    manifest = build_manifest(
        command="check",
        config={
            "node": args.node,
            "lambda": args.lam,
            "n": args.n,
            "re_support": args.re_support,
        },
        seeds={},
        inputs=(args.sigma,),
    )
    a2 = report.a2_terms
    a3 = report.a3_terms
    doc = {
        "schema_version": SCHEMA_VERSION,
        "manifest": manifest.as_dict(),
        "node": report.node,
        "q": report.q,
        "b_min": _marker(report.b_min),
        "a2": {
            "coefficient_sup": _marker(a2[0]),
            "sample_requirement": _marker(a2[1]),
            "signal_ratio": _marker(a2[2]),
        },
        "a3": {
            "irrepresentability_sup": _marker(a3[0]),
            "margin": _marker(a3[1]),
            "false_selection_ratio": _marker(a3[2]),
        },
        "restricted_eigenvalue": _marker(report.re_constant),
        "restricted_eigenvalue_at_support": _marker(extra_re),
    }
    if args.out:
        _write_json(args.out, doc)
    else:
        json.dump(doc, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    return 0


def _parse_support(text: str, p: int, node: int) -> list[int]:
    try:
        support = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise InputError(f"--re-support must be comma-separated integers, got {text!r}") from None
    if not support:
        raise InputError("--re-support is empty")
    for k in support:
        if not 0 <= k < p:
            raise InputError(f"support index {k} out of range")
        if k == node:
            raise InputError(f"support may not contain the node itself ({node})")
    return support


def _add_pair_flags(sub):
    sub.add_argument("--data1", required=True, help="CSV for the first population")
    sub.add_argument("--data2", required=True, help="CSV for the second population")
    sub.add_argument("--alpha", type=float, default=0.1, help="test level")
    sub.add_argument("--seed", type=int, default=0, help="random seed")
    sub.add_argument("--out", required=True, help="output JSON path")
    sub.add_argument(
        "--standardize",
        action="store_true",
        help="center and scale each column (advised for real data)",
    )
    sub.add_argument(
        "--has-header", action="store_true", help="first CSV row holds variable names"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dca",
        description="Differential connectivity analysis between two populations.",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker threads (default: DCA_THREADS env var, then logical cores)",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    test = commands.add_parser("test", help="two-step neighborhood comparison")
    _add_pair_flags(test)
    test.add_argument("--mode", choices=("naive", "split"), default="naive")
    test.add_argument("--test", choices=("individual", "group"), default="individual")
    test.add_argument("--edge-rule", choices=("or", "and"), default="or")
    test.add_argument("--perms", type=int, default=999, help="group-test permutations")
    test.add_argument("--folds", type=int, default=10, help="cross-validation folds")
    test.set_defaults(func=cmd_test)

    quant = commands.add_parser("quant", help="quantitative permutation baseline")
    _add_pair_flags(quant)
    quant.add_argument("--perms", type=int, default=999, help="permutations")
    quant.set_defaults(func=cmd_quant)

    simulate = commands.add_parser("simulate", help="run a simulation config")
    simulate.add_argument("--config", required=True, help="JSON config path")
    simulate.add_argument("--out", required=True, help="output directory")
    simulate.add_argument(
        "--full-scale",
        action="store_true",
        help="absent fields default to the full-scale design instead of the desk one",
    )
    simulate.set_defaults(func=cmd_simulate)

    check = commands.add_parser("check", help="coverage diagnostics for a covariance")
    check.add_argument("--sigma", required=True, help="CSV square covariance matrix")
    check.add_argument("--node", type=int, required=True)
    check.add_argument("--lambda", type=float, required=True, dest="lam")
    check.add_argument("--n", type=int, default=100, help="sample size for the A2 bound")
    check.add_argument(
        "--re-support",
        default=None,
        help="comma-separated variable indices for an extra restricted-eigenvalue check",
    )
    check.add_argument("--out", default=None, help="output JSON path (default: stdout)")
    check.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
