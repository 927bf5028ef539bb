"""Simulation harness for the paired-network study design.

Each repetition draws a power-law graph, rewires it by knocking out a
few of its best-connected nodes, builds a precision-matrix pair that
shares values on shared edges, samples one dataset per network, and
runs every selected analysis method.  Per-node decisions are then
pooled across repetitions into two summaries:

* the false positive rate over nodes whose two neighborhoods are
  identical (the qualitative null), and
* the power over nodes whose neighborhoods differ by at least ``t``
  members, for ``t`` in 1, 3, 5, 10.

Repetitions are independent and may run in worker processes; every
random draw is keyed off ``SimConfig.seed``, so a report is a pure
function of its config (wall time aside).
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .comparators import quant_all_pvalues
from .dca import DcaConfig, dca_network
from .errors import DomainError, SimulationError, UndefinedMetric
from .graphs import build_pair, gen_power_law_graph, hub_knockout, neighborhood
from .numerics import derive_seed, sample_mvn

METHODS = (
    "dca_naive_individual",
    "dca_split_individual",
    "dca_naive_group",
    "dca_split_group",
    "quant",
)
POWER_THRESHOLDS = (1, 3, 5, 10)

# Histogram support for the nonzero partial correlations of the first
# network, emitted as descriptive output alongside the metrics.
_HIST_BINS = np.linspace(-1.0, 1.0, 41)

# Seed substreams within one repetition.
_GRAPH_STREAM = 1
_KNOCKOUT_STREAM = 2
_VALUES_STREAM = 3
_DATA_STREAM = 4
_METHOD_STREAM = 5


@dataclass(frozen=True)
class SimConfig:
    """Full description of one simulation run.

    ``methods`` may be given in any order and is stored sorted;
    ``n_values`` is stored sorted and deduplicated.  Each method sees
    the same datasets within a repetition, so methods can be compared
    pairwise on identical draws.
    """

    p: int
    edge_count: int
    power: float
    hub_pool: int
    knockout: int
    magnitude: float
    min_eig: float
    n_values: tuple[int, ...]
    reps: int
    dca: DcaConfig
    methods: tuple[str, ...]
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(sorted(set(int(n) for n in self.n_values))))
        object.__setattr__(self, "methods", tuple(sorted(set(self.methods))))
        if self.p < 2:
            raise DomainError(f"need at least two nodes, got p={self.p}")
        if not 1 <= self.edge_count <= self.p * (self.p - 1) // 2:
            raise DomainError(f"edge_count={self.edge_count} out of range for p={self.p}")
        if self.power <= 1.0:
            raise DomainError(f"power must exceed 1, got {self.power}")
        if not 0 <= self.knockout <= self.hub_pool <= self.p:
            raise DomainError(
                f"need 0 <= knockout <= hub_pool <= p, got "
                f"{self.knockout}, {self.hub_pool}, {self.p}"
            )
        if self.magnitude <= 0 or self.min_eig <= 0:
            raise DomainError("magnitude and min_eig must be positive")
        if not self.n_values:
            raise DomainError("n_values must be nonempty")
        if min(self.n_values) < 20:
            raise DomainError("every sample size must be at least 20")
        if self.reps < 1:
            raise DomainError(f"reps must be at least 1, got {self.reps}")
        if not isinstance(self.dca, DcaConfig):
            raise DomainError("dca must be a DcaConfig")
        if not self.methods:
            raise DomainError("methods must be nonempty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise DomainError(f"unknown methods {unknown}; choose from {METHODS}")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise DomainError(f"seed must be a non-negative integer, got {self.seed!r}")


def desk_config(**overrides) -> SimConfig:
    """Laptop-scale defaults: p=50, tuned so every headline effect shows.

    Shrinking p from the full design forces three linked choices.  The
    knockout concentrates on the true hubs (hub_pool close to knockout)
    so nodes whose neighborhoods differ by ten or more elements still
    exist at p=50.  The edge budget stays sparse (mean degree below 3)
    and the edge values strong, so that nodes with equal neighborhoods
    keep few, strong edges and half-sample selection still covers them.
    Density or value choices much above or below these lose one of the
    measured contrasts: denser graphs push the splitting estimator's
    selection misses (and with them its false positive rate) up, weaker
    values starve the value-shift test of power at n=200.
    """
    base = SimConfig(
        p=50,
        edge_count=70,
        power=5.0,
        hub_pool=10,
        knockout=8,
        magnitude=0.8,
        min_eig=0.1,
        n_values=(100, 200, 400),
        reps=100,
        dca=DcaConfig(alpha=0.1),
        methods=("dca_naive_individual",),
        seed=0,
    )
    return replace(base, **overrides) if overrides else base


def full_config(**overrides) -> SimConfig:
    """Full-scale defaults: p=200, hours of compute."""
    base = SimConfig(
        p=200,
        edge_count=398,
        power=5.0,
        hub_pool=100,
        knockout=20,
        magnitude=0.5,
        min_eig=0.1,
        n_values=(100, 200, 400, 800),
        reps=100,
        dca=DcaConfig(alpha=0.1),
        methods=("dca_naive_individual", "dca_split_individual", "quant"),
        seed=0,
    )
    return replace(base, **overrides) if overrides else base


@dataclass(frozen=True)
class MetricValue:
    """A rate stored as its defining counts; undefined when nothing is eligible."""

    rejections: int
    eligible: int

    @property
    def value(self) -> float | None:
        if self.eligible == 0:
            return None
        return self.rejections / self.eligible


@dataclass(frozen=True)
class CellSummary:
    """Aggregated decisions for one (method, sample size) pair."""

    method: str
    n: int
    t1er: MetricValue
    power: tuple[tuple[int, MetricValue], ...]
    mean_flagged_edges: float | None
    node_errors: int

    def power_at(self, t: int) -> MetricValue:
        for threshold, metric in self.power:
            if threshold == t:
                return metric
        raise DomainError(f"no power entry for t={t}")


@dataclass(frozen=True, eq=False)
class SimulationReport:
    config: SimConfig
    cells: tuple[CellSummary, ...]
    rep_seeds: tuple[int, ...]
    failures: tuple[tuple[int, str], ...]
    completed_reps: int
    histogram_edges: tuple[float, ...]
    histogram_counts: tuple[int, ...]
    wall_time: float

    def cell(self, method: str, n: int) -> CellSummary:
        for c in self.cells:
            if c.method == method and c.n == n:
                return c
        raise DomainError(f"no cell for method={method!r}, n={n}")


def _ratio(z: np.ndarray, mask: np.ndarray) -> float:
    eligible = int(mask.sum())
    if eligible == 0:
        raise UndefinedMetric("no eligible nodes")
    return float(np.logical_and(z, mask).sum() / eligible)


def t1er(z, null_mask) -> float:
    """Rejection rate over null nodes: sum_r sum_{j null} z / sum_r #nulls."""
    z = np.asarray(z, dtype=bool)
    mask = np.asarray(null_mask, dtype=bool)
    if z.shape != mask.shape:
        raise DomainError(f"shape mismatch: {z.shape} vs {mask.shape}")
    return _ratio(z, mask)


def power_t(z, diff_sizes, t: int) -> float:
    """Rejection rate over nodes whose neighborhoods differ by >= t members."""
    if t < 1:
        raise DomainError(f"threshold must be at least 1, got {t}")
    z = np.asarray(z, dtype=bool)
    sizes = np.asarray(diff_sizes)
    if z.shape != sizes.shape:
        raise DomainError(f"shape mismatch: {z.shape} vs {sizes.shape}")
    return _ratio(z, sizes >= t)


def _partial_corr_histogram(omega: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.diag(omega))
    rho = -omega / np.outer(d, d)
    vals = rho[np.triu_indices_from(rho, k=1)]
    vals = vals[np.abs(vals) > 1e-12]
    counts, _ = np.histogram(vals, bins=_HIST_BINS)
    return counts


def _method_dca(cfg: SimConfig, method: str, seed: int) -> DcaConfig:
    _, mode, kind = method.split("_")
    return replace(cfg.dca, estimation_mode=mode, test_kind=kind, seed=seed)


def _run_rep(cfg: SimConfig, r: int, rep_seed: int) -> dict:
    """Execute one repetition; any failure is captured, not raised."""
    try:
        g1 = gen_power_law_graph(
            cfg.p, cfg.edge_count, cfg.power, derive_seed(rep_seed, _GRAPH_STREAM)
        )
        g2 = hub_knockout(
            g1, cfg.hub_pool, cfg.knockout, derive_seed(rep_seed, _KNOCKOUT_STREAM)
        )
        m1, m2 = build_pair(
            g1, g2, cfg.magnitude, cfg.min_eig, derive_seed(rep_seed, _VALUES_STREAM)
        )
        ne1 = [neighborhood(g1, j) for j in range(cfg.p)]
        ne2 = [neighborhood(g2, j) for j in range(cfg.p)]
        out = {
            "rep": r,
            "error": None,
            "null_mask": np.array([a == b for a, b in zip(ne1, ne2)]),
            "diff_sizes": np.array([len(a ^ b) for a, b in zip(ne1, ne2)]),
            "hist": _partial_corr_histogram(m1.omega),
            "decisions": {},
            "valid": {},
            "edges": {},
        }
        for n in cfg.n_values:
            x1 = sample_mvn(m1.sigma, n, derive_seed(rep_seed, _DATA_STREAM, n, 1))
            x2 = sample_mvn(m2.sigma, n, derive_seed(rep_seed, _DATA_STREAM, n, 2))
            for method in cfg.methods:
                mseed = derive_seed(rep_seed, _METHOD_STREAM, n, METHODS.index(method))
                if method == "quant":
                    _, pvals = quant_all_pvalues(x1, x2, perms=cfg.dca.perms, seed=mseed)
                    z = pvals <= cfg.dca.alpha
                    ok = np.ones(cfg.p, dtype=bool)
                    flagged = None
                else:
                    res = dca_network(x1, x2, _method_dca(cfg, method, mseed))
                    ok = np.array([node.error is None for node in res.nodes])
                    z = np.array([node.reject for node in res.nodes]) & ok
                    flagged = (
                        len(res.differential_edges)
                        if res.config.test_kind == "individual"
                        else None
                    )
                out["decisions"][(method, n)] = z
                out["valid"][(method, n)] = ok
                out["edges"][(method, n)] = flagged
        return out
    except Exception as exc:  # noqa: BLE001 - repetitions are isolated by contract
        return {"rep": r, "error": f"{type(exc).__name__}: {exc}"}


def _summarize(cfg: SimConfig, good: list[dict]) -> tuple[CellSummary, ...]:
    cells = []
    for method in cfg.methods:
        for n in cfg.n_values:
            z = np.vstack([o["decisions"][(method, n)] for o in good])
            ok = np.vstack([o["valid"][(method, n)] for o in good])
            nulls = np.vstack([o["null_mask"] for o in good]) & ok
            sizes = np.vstack([o["diff_sizes"] for o in good])
            power = tuple(
                (
                    t,
                    MetricValue(
                        int((z & (sizes >= t) & ok).sum()),
                        int(((sizes >= t) & ok).sum()),
                    ),
                )
                for t in POWER_THRESHOLDS
            )
            counts = [o["edges"][(method, n)] for o in good]
            counts = [c for c in counts if c is not None]
            cells.append(
                CellSummary(
                    method=method,
                    n=n,
                    t1er=MetricValue(int((z & nulls).sum()), int(nulls.sum())),
                    power=power,
                    mean_flagged_edges=float(np.mean(counts)) if counts else None,
                    node_errors=int((~ok).sum()),
                )
            )
    return tuple(cells)


def run_simulation(cfg: SimConfig, workers: int | None = None) -> SimulationReport:
    """Run every repetition of ``cfg`` and aggregate the decisions.

    Repetitions that fail are excluded and reported; the run aborts only
    when more than a tenth of them fail.  ``workers`` bounds the process
    pool; 1 runs everything inline.
    """
    start = time.perf_counter()
    rep_seeds = tuple(derive_seed(cfg.seed, r) for r in range(cfg.reps))
    if workers is None:
        workers = min(cfg.reps, os.cpu_count() or 1)
    if workers <= 1 or cfg.reps == 1:
        outcomes = [_run_rep(cfg, r, s) for r, s in enumerate(rep_seeds)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_rep, cfg, r, s) for r, s in enumerate(rep_seeds)
            ]
            outcomes = [f.result() for f in futures]
    failures = tuple((o["rep"], o["error"]) for o in outcomes if o["error"] is not None)
    if len(failures) > 0.10 * cfg.reps:
        raise SimulationError(
            f"{len(failures)} of {cfg.reps} repetitions failed; "
            f"first failure: {failures[0][1]}"
        )
    good = [o for o in outcomes if o["error"] is None]
    hist = np.sum([o["hist"] for o in good], axis=0)
    return SimulationReport(
        config=cfg,
        cells=_summarize(cfg, good),
        rep_seeds=rep_seeds,
        failures=failures,
        completed_reps=len(good),
        histogram_edges=tuple(float(b) for b in _HIST_BINS),
        histogram_counts=tuple(int(c) for c in hist),
        wall_time=time.perf_counter() - start,
    )


def _policy_as_dict(policy) -> dict:
    if hasattr(policy, "folds"):
        return {
            "kind": "cv",
            "folds": policy.folds,
            "grid_size": policy.grid_size,
            "grid_ratio": policy.grid_ratio,
        }
    return {"kind": "fixed", "lam1": policy.lam1, "lam2": policy.lam2}


def _policy_from_dict(d: dict):
    from .dca import CvPolicy, FixedPolicy

    kind = d.get("kind")
    if kind == "cv":
        return CvPolicy(
            folds=int(d.get("folds", 10)),
            grid_size=int(d.get("grid_size", 50)),
            grid_ratio=float(d.get("grid_ratio", 1e-3)),
        )
    if kind == "fixed":
        return FixedPolicy(lam1=float(d["lam1"]), lam2=float(d["lam2"]))
    raise DomainError(f"unknown lambda policy kind {kind!r}")


def dca_as_dict(dca: DcaConfig) -> dict:
    return {
        "alpha": dca.alpha,
        "estimation_mode": dca.estimation_mode,
        "test_kind": dca.test_kind,
        "edge_rule": dca.edge_rule,
        "lambda_policy": _policy_as_dict(dca.lambda_policy),
        "perms": dca.perms,
        "seed": dca.seed,
    }


def dca_from_dict(d: dict) -> DcaConfig:
    base = DcaConfig()
    return DcaConfig(
        alpha=float(d.get("alpha", base.alpha)),
        estimation_mode=d.get("estimation_mode", base.estimation_mode),
        test_kind=d.get("test_kind", base.test_kind),
        edge_rule=d.get("edge_rule", base.edge_rule),
        lambda_policy=(
            _policy_from_dict(d["lambda_policy"])
            if "lambda_policy" in d
            else base.lambda_policy
        ),
        perms=int(d.get("perms", base.perms)),
        seed=int(d.get("seed", base.seed)),
    )


def config_as_dict(cfg: SimConfig) -> dict:
    return {
        "p": cfg.p,
        "edge_count": cfg.edge_count,
        "power": cfg.power,
        "hub_pool": cfg.hub_pool,
        "knockout": cfg.knockout,
        "magnitude": cfg.magnitude,
        "min_eig": cfg.min_eig,
        "n_values": list(cfg.n_values),
        "reps": cfg.reps,
        "dca": dca_as_dict(cfg.dca),
        "methods": list(cfg.methods),
        "seed": cfg.seed,
    }


def config_from_dict(d: dict, base: SimConfig | None = None) -> SimConfig:
    """Build a config from parsed JSON; absent fields keep ``base`` values.

    ``base`` defaults to the desk configuration.
    """
    if not isinstance(d, dict):
        raise DomainError("config document must be a JSON object")
    if base is None:
        base = desk_config()
    known = set(config_as_dict(base))
    unknown = set(d) - known
    if unknown:
        raise DomainError(f"unknown config fields {sorted(unknown)}")
    fields = {}
    for key in known - {"dca", "n_values", "methods"}:
        if key in d:
            fields[key] = d[key]
    if "n_values" in d:
        fields["n_values"] = tuple(d["n_values"])
    if "methods" in d:
        fields["methods"] = tuple(d["methods"])
    if "dca" in d:
        fields["dca"] = dca_from_dict(d["dca"])
    try:
        return replace(base, **fields)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"bad config value: {exc}") from None


def _metric_as_dict(m: MetricValue) -> dict:
    return {"value": m.value, "rejections": m.rejections, "eligible": m.eligible}


def report_as_dict(report: SimulationReport) -> dict:
    """Plain-types view of a report, ready for ``json.dump``."""
    return {
        "config": config_as_dict(report.config),
        "cells": [
            {
                "method": c.method,
                "n": c.n,
                "t1er": _metric_as_dict(c.t1er),
                "power": {str(t): _metric_as_dict(m) for t, m in c.power},
                "mean_flagged_edges": c.mean_flagged_edges,
                "node_errors": c.node_errors,
            }
            for c in report.cells
        ],
        "rep_seeds": list(report.rep_seeds),
        "failures": [[r, msg] for r, msg in report.failures],
        "completed_reps": report.completed_reps,
        "partial_correlation_histogram": {
            "bin_edges": list(report.histogram_edges),
            "counts": list(report.histogram_counts),
        },
        "wall_time": report.wall_time,
    }


def metrics_rows(report: SimulationReport) -> list[tuple[str, int, str, float | None]]:
    """Flat (method, n, metric, value) rows for a plotting-friendly CSV."""
    rows = []
    for c in report.cells:
        rows.append((c.method, c.n, "t1er", c.t1er.value))
        for t, m in c.power:
            rows.append((c.method, c.n, f"p{t}", m.value))
    return rows
