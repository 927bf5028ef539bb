"""Node-wise differential connectivity analysis.

For each node ``j`` the pipeline runs two steps:

1. estimate the *common neighborhood*: fit a penalized regression of
   ``x_j`` on the rest in each population and intersect the supports;
2. test every remaining variable for conditional association with
   ``x_j`` given that common neighborhood, separately per population,
   and reject the node if either population shows any association.

Step 2's validity leans on step 1 over-selecting rather than missing
true common neighbors, which is why the penalty is tuned by prediction
error.  In ``naive`` mode the same rows serve both steps; in ``split``
mode each population is halved, estimation taking the larger half when
``n`` is odd.

Per-family control within a node uses Holm at a level chosen so that
two families (one per population) jointly spend the node's ``alpha``.
Across nodes, a second Holm pass on the per-node p-values yields the
network-level differential node set.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.stats import norm

from .errors import (
    DomainError,
    InsufficientSamples,
    NotConverged,
    NumericalError,
    RankDeficient,
    ZeroVarianceColumn,
)
from .inference import PValueSet, holm, holm_adjusted, sidak_level
from .inference import group_test as _group_test
from .lasso import cv_lambda, default_lambda_grid, estimated_neighborhood, lasso_cd
from .numerics import derive_seed, residual_matrix, rng_stream

# Substream tags so the split, the CV folds, and the permutation tests
# draw from disjoint deterministic streams of the same base seed.
_SPLIT_STREAM = 101
_CV_STREAM = 102
_GROUP_STREAM = 103


@dataclass(frozen=True)
class CvPolicy:
    """Tune the penalty per node by k-fold cross-validation."""

    folds: int = 10
    grid_size: int = 50
    grid_ratio: float = 1e-3

    def __post_init__(self):
        if self.folds < 2:
            raise DomainError(f"folds must be at least 2, got {self.folds}")
        if self.grid_size < 1 or not 0.0 < self.grid_ratio < 1.0:
            raise DomainError("bad lambda grid parameters")


@dataclass(frozen=True)
class FixedPolicy:
    """Use one fixed penalty per population."""

    lam1: float
    lam2: float

    def __post_init__(self):
        if self.lam1 < 0.0 or self.lam2 < 0.0:
            raise DomainError("fixed penalties must be non-negative")

    def lam(self, m: int) -> float:
        return self.lam1 if m == 0 else self.lam2


LambdaPolicy = Union[CvPolicy, FixedPolicy]


@dataclass(frozen=True)
class DcaConfig:
    """Settings for one differential connectivity analysis."""

    alpha: float = 0.1
    estimation_mode: str = "naive"
    test_kind: str = "individual"
    edge_rule: str = "or"
    lambda_policy: LambdaPolicy = field(default_factory=CvPolicy)
    perms: int = 999
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.estimation_mode not in ("naive", "split"):
            raise DomainError(f"unknown estimation_mode {self.estimation_mode!r}")
        if self.test_kind not in ("individual", "group"):
            raise DomainError(f"unknown test_kind {self.test_kind!r}")
        if self.edge_rule not in ("or", "and"):
            raise DomainError(f"unknown edge_rule {self.edge_rule!r}")
        if self.test_kind == "group" and self.perms < 99:
            raise DomainError(f"group tests need at least 99 permutations, got {self.perms}")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise DomainError(f"seed must be a non-negative integer, got {self.seed!r}")


@dataclass(frozen=True, eq=False)
class NodeTestResult:
    """Decision and evidence for one node.

    ``node_pvalue`` summarizes the node for the across-node Holm pass:
    in individual mode the smallest Holm-adjusted candidate p-value over
    both populations; in group mode the two group p-values combined as
    ``1 - (1 - min)^2``.  ``error`` is a message when the node's
    analysis failed and every other field is a placeholder.
    """

    node: int
    common_neighborhood: frozenset
    candidates: tuple
    pvalues: PValueSet
    reject: bool
    node_pvalue: float
    differential_partners: frozenset
    error: str | None = None


@dataclass(frozen=True, eq=False)
class NetworkTestResult:
    """All node results plus the network-level aggregates.

    ``differential_edges`` is empty in group mode: a group test reports
    that *some* candidate associates with the node but not which one, so
    no edge can be named.
    """

    config: DcaConfig
    nodes: tuple
    differential_nodes: frozenset
    differential_edges: frozenset
    network_reject: bool


def _estimation_rows(x: np.ndarray, m: int, cfg: DcaConfig):
    """Estimation/test row split for population ``m`` (0-based)."""
    n = x.shape[0]
    if cfg.estimation_mode == "naive":
        return x, x
    perm = rng_stream(cfg.seed, _SPLIT_STREAM, m).permutation(n)
    cut = (n + 1) // 2
    return x[perm[:cut]], x[perm[cut:]]


def estimate_common_neighborhood(
    x1: np.ndarray, x2: np.ndarray, j: int, cfg: DcaConfig
) -> tuple[frozenset, tuple[np.ndarray, np.ndarray]]:
    """Intersection of the two estimated neighborhoods of node ``j``.

    Returns the common neighborhood and the pair of test-row matrices
    (the full inputs in ``naive`` mode, the held-out halves in ``split``
    mode).  Raises :class:`NotConverged` if either penalized fit fails
    to converge.
    """
    supports = []
    test_parts = []
    for m, x in enumerate((x1, x2)):
        x = np.asarray(x, dtype=np.float64)
        est, test = _estimation_rows(x, m, cfg)
        if isinstance(cfg.lambda_policy, CvPolicy):
            pol = cfg.lambda_policy
            grid = default_lambda_grid(est, j, pol.grid_size, pol.grid_ratio)
            lam = cv_lambda(
                est, j, pol.folds, grid, seed=derive_seed(cfg.seed, _CV_STREAM, m, j)
            )
        else:
            lam = cfg.lambda_policy.lam(m)
        fit = lasso_cd(est, j, lam)
        if not fit.converged:
            raise NotConverged(
                f"estimation fit for node {j} in population {m + 1} did not converge"
            )
        supports.append(estimated_neighborhood(fit))
        test_parts.append(test)
    return frozenset(supports[0] & supports[1]), (test_parts[0], test_parts[1])


def _fisher_pvalues(xt: np.ndarray, j: int, cond: tuple, candidates: tuple) -> np.ndarray:
    """Fisher-z p-values of all candidates against ``x_j`` given ``cond``."""
    n = xt.shape[0]
    df = n - len(cond) - 3
    if df <= 0:
        raise InsufficientSamples(
            f"need n > |cond| + 3 for the z test, got n={n}, |cond|={len(cond)}"
        )
    res = residual_matrix(xt, cond, (j,) + candidates)
    e_j = res[:, 0]
    e_c = res[:, 1:]
    ss_j = float(e_j @ e_j)
    ss_c = np.sum(e_c**2, axis=0)
    if ss_j <= 0.0 or np.any(ss_c <= 0.0):
        raise RankDeficient("a residual vector vanished while testing candidates")
    r = np.clip((e_j @ e_c) / np.sqrt(ss_j * ss_c), -1.0, 1.0)
    with np.errstate(divide="ignore"):
        z = np.arctanh(r) * np.sqrt(df)
    return 2.0 * norm.sf(np.abs(z))


def _empty_result(j: int, ne0: frozenset, error: str | None = None) -> NodeTestResult:
    empty = PValueSet(labels=(), pvalues=np.zeros(0), adjusted=np.zeros(0))
    return NodeTestResult(
        node=j,
        common_neighborhood=ne0,
        candidates=(),
        pvalues=empty,
        reject=False,
        node_pvalue=1.0,
        differential_partners=frozenset(),
        error=error,
    )


def test_node(
    x1_test: np.ndarray,
    x2_test: np.ndarray,
    j: int,
    common: frozenset,
    cfg: DcaConfig,
    excluded: frozenset = frozenset(),
) -> NodeTestResult:
    """Test whether node ``j`` has partners outside its common neighborhood.

    Candidates are all columns except ``j``, the common neighborhood,
    and any excluded (constant) columns.  With no candidates the node is
    trivially not rejected and its p-value is 1.
    """
    x1_test = np.asarray(x1_test, dtype=np.float64)
    x2_test = np.asarray(x2_test, dtype=np.float64)
    p = x1_test.shape[1]
    common = frozenset(int(i) for i in common) - frozenset(excluded)
    cond = tuple(sorted(common))
    candidates = tuple(
        k for k in range(p) if k != j and k not in common and k not in excluded
    )
    if not candidates:
        return _empty_result(j, common)

    level = sidak_level(cfg.alpha)
    if cfg.test_kind == "individual":
        labels = []
        raws = []
        adjs = []
        partners = set()
        node_p = 1.0
        for m, xt in enumerate((x1_test, x2_test)):
            pv = _fisher_pvalues(xt, j, cond, candidates)
            adj = holm_adjusted(pv)
            labels.extend((m + 1, k) for k in candidates)
            raws.append(pv)
            adjs.append(adj)
            node_p = min(node_p, float(np.min(adj)))
            partners.update(k for k, a in zip(candidates, adj) if a <= level)
        pset = PValueSet(
            labels=tuple(labels),
            pvalues=np.concatenate(raws),
            adjusted=np.concatenate(adjs),
        )
        return NodeTestResult(
            node=j,
            common_neighborhood=common,
            candidates=candidates,
            pvalues=pset,
            reject=node_p <= level,
            node_pvalue=node_p,
            differential_partners=frozenset(partners),
            error=None,
        )

    group_ps = []
    for m, xt in enumerate((x1_test, x2_test)):
        seed = derive_seed(cfg.seed, _GROUP_STREAM, m, j)
        group_ps.append(_group_test(xt, j, candidates, cond, cfg.perms, seed))
    smallest = min(group_ps)
    pset = PValueSet(
        labels=((1, None), (2, None)),
        pvalues=np.array(group_ps),
        adjusted=np.array(group_ps),
    )
    return NodeTestResult(
        node=j,
        common_neighborhood=common,
        candidates=candidates,
        pvalues=pset,
        reject=smallest <= level,
        node_pvalue=float(1.0 - (1.0 - smallest) ** 2),
        differential_partners=frozenset(),
        error=None,
    )


def partners_at(result: NodeTestResult, level: float) -> frozenset:
    """Candidates of a node flagged when its families run at ``level``."""
    if result.error is not None:
        return frozenset()
    cut = sidak_level(level)
    out = set()
    for (network, k), adj in zip(result.pvalues.labels, result.pvalues.adjusted):
        if k is not None and adj <= cut:
            out.add(k)
    return frozenset(out)


def differential_edges(results, rule: str, level: float) -> frozenset:
    """Edge set implied by per-node partner flags at a common node level.

    ``or`` flags an edge when either endpoint's test names it; ``and``
    requires both.  At any single ``level`` the ``and`` set is contained
    in the ``or`` set.
    """
    if rule not in ("or", "and"):
        raise DomainError(f"unknown edge rule {rule!r}")
    flags = {res.node: partners_at(res, level) for res in results}
    edges = set()
    for j, partners in flags.items():
        for k in partners:
            edge = (j, k) if j < k else (k, j)
            if rule == "or":
                edges.add(edge)
            elif j in flags.get(k, frozenset()):
                edges.add(edge)
    return frozenset(edges)


def _zero_variance_columns(x1: np.ndarray, x2: np.ndarray) -> frozenset:
    out = set()
    for x in (x1, x2):
        spread = np.max(x, axis=0) - np.min(x, axis=0)
        out.update(int(i) for i in np.nonzero(spread == 0.0)[0])
    return frozenset(out)


def _analyze_node(x1, x2, j, cfg, excluded):
    if j in excluded:
        return _empty_result(j, frozenset(), error="zero-variance target column")
    try:
        common, (x1t, x2t) = estimate_common_neighborhood(x1, x2, j, cfg)
        return test_node(x1t, x2t, j, common, cfg, excluded)
    except NumericalError as exc:
        return _empty_result(j, frozenset(), error=str(exc))


def dca_network(
    x1: np.ndarray, x2: np.ndarray, cfg: DcaConfig, threads: int = 1
) -> NetworkTestResult:
    """Run the full two-step analysis on every node.

    Node analyses are independent and may run on ``threads`` worker
    threads; results are ordered by node regardless.  A node whose
    analysis fails numerically is reported with an error marker and
    excluded from the across-node Holm pass.

    Edge flags follow the configured rule: ``or`` runs the node-wise
    tests at ``alpha / 2`` (an edge needs only one endpoint to name it),
    ``and`` runs them at ``alpha`` (it needs both).  Group-mode runs
    produce no edge flags.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.ndim != 2 or x2.ndim != 2 or x1.shape[1] != x2.shape[1]:
        raise DomainError(
            f"populations must share a variable count, got {x1.shape} and {x2.shape}"
        )
    if x1.shape[1] < 2:
        raise DomainError("need at least two variables")
    if min(x1.shape[0], x2.shape[0]) < 20:
        raise DomainError("need at least 20 rows per population")
    if not np.all(np.isfinite(x1)) or not np.all(np.isfinite(x2)):
        raise DomainError("data contains non-finite entries")
    p = x1.shape[1]
    excluded = _zero_variance_columns(x1, x2)
    for col in sorted(excluded):
        warnings.warn(
            f"column {col} is constant and is excluded from candidacy",
            ZeroVarianceColumn,
            stacklevel=2,
        )
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            nodes = list(
                pool.map(lambda j: _analyze_node(x1, x2, j, cfg, excluded), range(p))
            )
    else:
        nodes = [_analyze_node(x1, x2, j, cfg, excluded) for j in range(p)]

    usable = [res for res in nodes if res.error is None]
    decision = holm([res.node_pvalue for res in usable], cfg.alpha)
    differential = frozenset(
        res.node for res, rej in zip(usable, decision.reject) if rej
    )
    if cfg.test_kind == "individual":
        level = cfg.alpha / 2 if cfg.edge_rule == "or" else cfg.alpha
        edges = differential_edges(nodes, cfg.edge_rule, level)
    else:
        edges = frozenset()
    return NetworkTestResult(
        config=cfg,
        nodes=tuple(nodes),
        differential_nodes=differential,
        differential_edges=edges,
        network_reject=bool(differential),
    )
