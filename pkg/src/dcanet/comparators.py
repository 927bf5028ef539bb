"""Permutation test for equality of association strengths.

This is the baseline the node-wise pipeline is compared against.  Where
that pipeline asks a qualitative question (did any conditional
association appear or vanish), this test asks a quantitative one: did
the partial correlation *values* around a node move.  It is exact under
the strong null of identical distributions, because rows of the two
samples are then exchangeable.  It also has power against value changes
that leave every neighborhood intact, which is precisely why it cannot
stand in for the qualitative test: on data where supports agree but
magnitudes shift it rejects freely.

The node statistic sums squared differences of order-1 partial
correlations: for each partner ``k`` the conditioning variable is the
single strongest common covariate of ``j`` and ``k`` in the *pooled*
correlation matrix.  Pooling keeps the covariate choice invariant under
label permutations, which is what makes the test exact rather than
approximate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InsufficientSamples, RankDeficient
from .numerics import rng_stream

MIN_GROUP_ROWS = 8


@dataclass(frozen=True)
class QuantTestResult:
    """Permutation outcome for one node."""

    node: int
    statistic: float
    pvalue: float
    perms: int


def _validate_pair(x1: np.ndarray, x2: np.ndarray, perms: int):
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.ndim != 2 or x2.ndim != 2 or x1.shape[1] != x2.shape[1]:
        raise DomainError(
            f"populations must share a variable count, got {x1.shape} and {x2.shape}"
        )
    if x1.shape[1] < 2:
        raise DomainError("need at least two variables")
    if min(x1.shape[0], x2.shape[0]) < MIN_GROUP_ROWS:
        raise InsufficientSamples(
            f"need at least {MIN_GROUP_ROWS} rows per group for order-1 partial correlations"
        )
    if not np.all(np.isfinite(x1)) or not np.all(np.isfinite(x2)):
        raise DomainError("data contains non-finite entries")
    if perms < 99:
        raise DomainError(f"need at least 99 permutations, got {perms}")
    return x1, x2


def _standardized(x: np.ndarray) -> np.ndarray:
    """Columns centered and scaled so that Z.T @ Z is the correlation matrix."""
    z = x - np.mean(x, axis=0)
    norms = np.sqrt(np.sum(z**2, axis=0))
    if np.any(norms <= 0.0):
        raise RankDeficient("a column is constant within one group")
    return z / norms


def _covariate_choice(pooled: np.ndarray) -> np.ndarray:
    """For every pair (j, k), the index of the strongest common covariate.

    Strength of candidate ``l`` is min(|C_jl|, |C_kl|) in the pooled
    correlation matrix, so the winner is correlated with both endpoints.
    With p = 2 there is no candidate and the entry is -1, which callers
    read as "condition on nothing".
    """
    absc = np.abs(_standardized(pooled).T @ _standardized(pooled))
    p = absc.shape[0]
    if p == 2:
        return np.full((2, 2), -1, dtype=np.int64)
    choice = np.empty((p, p), dtype=np.int64)
    for j in range(p):
        # strength[l, k] = min(|C_jl|, |C_kl|), candidates l down the rows
        strength = np.minimum(absc[:, j][:, None], absc)
        strength[j, :] = -1.0
        np.fill_diagonal(strength, -1.0)  # forbid l == k
        choice[j] = np.argmax(strength, axis=0)
    return choice


def _rho_matrix(r: np.ndarray, choice: np.ndarray) -> np.ndarray:
    """Order-1 partial correlations rho[j, k] given choice[j, k].

    Entries with choice -1 fall back to the plain correlation; the
    diagonal is zeroed.
    """
    p = r.shape[0]
    land = np.where(choice < 0, 0, choice)
    rjl = np.take_along_axis(r, land, axis=1)
    rkl = r[np.arange(p)[None, :], land]
    den_sq = (1.0 - rjl**2) * (1.0 - rkl**2)
    off = ~np.eye(p, dtype=bool)
    if np.any(den_sq[off] <= 0.0):
        raise RankDeficient("a conditioning covariate is perfectly correlated")
    rho = np.where(choice < 0, r, (r - rjl * rkl) / np.sqrt(den_sq))
    np.fill_diagonal(rho, 0.0)
    return rho


def _all_statistics(g1: np.ndarray, g2: np.ndarray, choice: np.ndarray) -> np.ndarray:
    z1 = _standardized(g1)
    z2 = _standardized(g2)
    rho1 = _rho_matrix(z1.T @ z1, choice)
    rho2 = _rho_matrix(z2.T @ z2, choice)
    return np.sum((rho1 - rho2) ** 2, axis=1)


def _node_statistic(g1: np.ndarray, g2: np.ndarray, j: int, choice: np.ndarray) -> float:
    """Single-node statistic without forming full correlation matrices."""
    p = g1.shape[1]
    ks = np.array([k for k in range(p) if k != j])
    ls = choice[j, ks]
    diffs = []
    for g in (g1, g2):
        z = _standardized(g)
        r_jk = z[:, j] @ z[:, ks]
        if p == 2:
            diffs.append(r_jk)
            continue
        r_jl = z[:, j] @ z[:, ls]
        r_kl = np.sum(z[:, ks] * z[:, ls], axis=0)
        den_sq = (1.0 - r_jl**2) * (1.0 - r_kl**2)
        if np.any(den_sq <= 0.0):
            raise RankDeficient("a conditioning covariate is perfectly correlated")
        diffs.append((r_jk - r_jl * r_kl) / np.sqrt(den_sq))
    return float(np.sum((diffs[0] - diffs[1]) ** 2))


def quant_node_test(
    x1: np.ndarray, x2: np.ndarray, j: int, perms: int = 999, seed: int = 0
) -> QuantTestResult:
    """Permutation p-value for a value shift around node ``j``.

    Group labels are shuffled over the pooled rows, preserving the two
    group sizes; the p-value uses the add-one rule so it is never zero.
    """
    x1, x2 = _validate_pair(x1, x2, perms)
    p = x1.shape[1]
    if not 0 <= j < p:
        raise DomainError(f"node {j} out of range for p={p}")
    n1 = x1.shape[0]
    pooled = np.vstack([x1, x2])
    choice = _covariate_choice(pooled)
    observed = _node_statistic(x1, x2, j, choice)
    rng = rng_stream(seed)
    hits = 1
    for _ in range(perms):
        perm = rng.permutation(pooled.shape[0])
        stat = _node_statistic(pooled[perm[:n1]], pooled[perm[n1:]], j, choice)
        hits += stat >= observed
    return QuantTestResult(
        node=j, statistic=observed, pvalue=hits / (perms + 1), perms=perms
    )


def quant_all_pvalues(
    x1: np.ndarray, x2: np.ndarray, perms: int = 999, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Statistics and permutation p-values for every node at once.

    Shares one permutation stream across nodes, so each shuffle is
    priced at two correlation matrices instead of per-node work.  With
    the same seed, node ``j`` here and :func:`quant_node_test` see the
    identical sequence of group assignments.
    """
    x1, x2 = _validate_pair(x1, x2, perms)
    n1 = x1.shape[0]
    pooled = np.vstack([x1, x2])
    choice = _covariate_choice(pooled)
    observed = _all_statistics(x1, x2, choice)
    rng = rng_stream(seed)
    hits = np.ones(x1.shape[1])
    for _ in range(perms):
        perm = rng.permutation(pooled.shape[0])
        stats = _all_statistics(pooled[perm[:n1]], pooled[perm[n1:]], choice)
        hits += stats >= observed
    return observed, hits / (perms + 1)
