"""P-values for conditional association and family-wise error control.

Two test shapes are provided for the question "is variable ``k``
conditionally associated with ``x_j`` given a conditioning set":

- :func:`individual_test` answers it for a single ``k`` via the Fisher
  z-transform of the sample partial correlation, and is combined across
  candidates with :func:`holm`;
- :func:`group_test` answers it for a whole candidate set at once by a
  permutation score test on residuals.

Both are conditional tests: their validity needs the conditioning set
to contain the target's true neighborhood, which is exactly what the
neighborhood-estimation step is for.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import DomainError, InsufficientSamples
from .numerics import partial_correlation, residual_matrix, rng_stream


@dataclass(frozen=True, eq=False)
class PValueSet:
    """P-values labeled by (network, candidate).

    ``labels[i]`` is a pair ``(network, candidate)`` with network 1 or 2
    and candidate an original column index, or ``None`` for a group
    test that has no per-candidate resolution.  ``adjusted`` holds the
    Holm-adjusted values within each network family (equal to
    ``pvalues`` when no adjustment applies).
    """

    labels: tuple
    pvalues: np.ndarray
    adjusted: np.ndarray

    def __post_init__(self):
        if len(self.labels) != len(self.pvalues) or len(self.labels) != len(self.adjusted):
            raise DomainError("labels and p-values must align")


@dataclass(frozen=True, eq=False)
class MultiplicityDecision:
    """Outcome of a family-wise procedure over one p-value family."""

    reject: np.ndarray
    level: float
    procedure: str


def sidak_level(alpha: float) -> float:
    """Per-family level splitting ``alpha`` over two independent families.

    Solves ``1 - (1 - level)^2 = alpha``.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must be in (0, 1), got {alpha}")
    return 1.0 - np.sqrt(1.0 - alpha)


def _check_pvalues(pvalues: np.ndarray) -> np.ndarray:
    pvalues = np.asarray(pvalues, dtype=np.float64)
    if pvalues.ndim != 1:
        raise DomainError("p-values must form a vector")
    if pvalues.size and (np.any(pvalues < 0.0) or np.any(pvalues > 1.0) or np.any(np.isnan(pvalues))):
        raise DomainError("p-values must lie in [0, 1]")
    return pvalues


def holm(pvalues, alpha: float) -> MultiplicityDecision:
    """Holm step-down procedure at family-wise level ``alpha``.

    Rejects the sorted p-values while ``p_(i) <= alpha / (m - i + 1)``
    and stops at the first failure.  An empty family yields an empty
    decision.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must be in (0, 1), got {alpha}")
    pvalues = _check_pvalues(pvalues)
    m = pvalues.size
    reject = np.zeros(m, dtype=bool)
    order = np.argsort(pvalues, kind="stable")
    for rank, idx in enumerate(order):
        if pvalues[idx] <= alpha / (m - rank):
            reject[idx] = True
        else:
            break
    return MultiplicityDecision(reject=reject, level=float(alpha), procedure="holm")


def holm_adjusted(pvalues) -> np.ndarray:
    """Holm-adjusted p-values: reject at level ``a`` iff adjusted <= ``a``."""
    pvalues = _check_pvalues(pvalues)
    m = pvalues.size
    if m == 0:
        return np.zeros(0)
    order = np.argsort(pvalues, kind="stable")
    adjusted = np.empty(m)
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, min(1.0, (m - rank) * pvalues[idx]))
        adjusted[idx] = running
    return adjusted


def fisher_z_pvalue(r: float, n: int, cond_size: int) -> float:
    """Two-sided normal p-value for a sample partial correlation."""
    df = n - cond_size - 3
    if df <= 0:
        raise InsufficientSamples(
            f"need n > cond_size + 3, got n={n}, cond_size={cond_size}"
        )
    with np.errstate(divide="ignore"):
        z = np.arctanh(min(1.0, max(-1.0, r))) * np.sqrt(df)
    return float(2.0 * norm.sf(abs(z)))


def individual_test(x: np.ndarray, j: int, k: int, cond: tuple = ()) -> float:
    """Test whether column ``k`` is partially correlated with column ``j``.

    Fisher z-transform of the sample partial correlation given
    ``cond``, referred to the standard normal.  Exactly symmetric in
    ``(j, k)``.
    """
    x = np.asarray(x, dtype=np.float64)
    cond = tuple(int(c) for c in cond)
    if k in cond or j in cond:
        raise DomainError("tested columns cannot appear in the conditioning set")
    n = x.shape[0]
    if n - len(cond) - 3 <= 0:
        raise InsufficientSamples(
            f"need n > |cond| + 3, got n={n}, |cond|={len(cond)}"
        )
    r = partial_correlation(x, j, k, cond)
    return fisher_z_pvalue(r, n, len(cond))


def group_test(
    x: np.ndarray,
    j: int,
    candidates: tuple,
    cond: tuple = (),
    perms: int = 999,
    seed: int = 0,
) -> float:
    """Permutation score test of all candidates against ``x_j`` at once.

    The statistic is the sum over candidates of squared mean
    cross-products between the residual of ``x_j`` on the conditioning
    set and the residual of each candidate on the same set.  The null
    distribution comes from permuting the entries of the ``x_j``
    residual, which is exchangeable when ``x_j`` is conditionally
    independent of every candidate.  P-value uses the add-one rule, so
    it is never zero.  An empty candidate set returns 1.0.
    """
    if perms < 99:
        raise DomainError(f"need at least 99 permutations, got {perms}")
    candidates = tuple(int(c) for c in candidates)
    cond = tuple(int(c) for c in cond)
    if not candidates:
        return 1.0
    if set(candidates) & (set(cond) | {j}) or j in cond:
        raise DomainError("candidates, target, and conditioning set must be disjoint")
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    res = residual_matrix(x, cond, (j,) + candidates)
    r = res[:, 0]
    cand_res = res[:, 1:]
    scores = r @ cand_res / n
    t_obs = float(scores @ scores)
    rng = rng_stream(seed)
    perm_rows = rng.permuted(np.tile(r, (perms, 1)), axis=1)
    t_perm = np.sum((perm_rows @ cand_res / n) ** 2, axis=1)
    return float((1 + int(np.sum(t_perm >= t_obs))) / (perms + 1))
