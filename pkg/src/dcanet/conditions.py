"""Finite-sample diagnostics behind the pipeline's validity assumptions.

Neighborhood coverage rests on conditions that are stated as limits, so
nothing here returns pass/fail.  The module computes the finite-n
quantities those conditions bound (penalty-to-coefficient ratios, dual
subgradient margins, and an empirical restricted eigenvalue) and
leaves interpretation to the caller.

The restricted-eigenvalue search is a diagnostic approximation, not a
certificate: cone pieces are enumerated as every size-q index set with
one augmented coordinate, and each piece is minimized by projected
gradient descent from several starts.  Every iterate is retracted into
the cone before evaluation, so the reported value is always attained by
a feasible vector; it can only overestimate the exact cone minimum,
never undershoot the global eigenvalue floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DimensionTooLarge, DomainError
from .lasso import estimated_neighborhood, noiseless_lasso, subgradient_tau
from .numerics import as_symmetric, extreme_eigenvalues, invert_spd

RE_DIMENSION_CAP = 15
# Coefficients this far below the largest one count as numerically zero;
# needed because precision matrices obtained by inversion carry rounding
# noise where exact zeros belong.
SUPPORT_RTOL = 1e-10
_PG_ITERATIONS = 300
_PG_RANDOM_STARTS = 2
_PG_SEED = 20240
_PIECE_CHUNK = 16384


def _support_mask(values: np.ndarray) -> np.ndarray:
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    if scale <= 0.0:
        return np.zeros(values.shape, dtype=bool)
    return np.abs(values) > SUPPORT_RTOL * scale


@dataclass(frozen=True)
class ConditionReport:
    """All diagnostics for one node at one penalty.

    Infinite entries mark quantities whose defining set is empty (no
    true neighbors, or no falsely selected coordinate); ``re_constant``
    is None when the matrix is too large for the brute-force search.
    """

    node: int
    q: int
    b_min: float
    a2_terms: tuple
    a3_terms: tuple
    re_constant: float | None


def population_coefficients(omega: np.ndarray, j: int) -> np.ndarray:
    """Regression coefficients of node ``j`` on the rest, from a precision matrix."""
    omega = as_symmetric(omega, "omega")
    p = omega.shape[0]
    if not 0 <= j < p:
        raise DomainError(f"node {j} out of range for p={p}")
    keep = [k for k in range(p) if k != j]
    return -omega[keep, j] / omega[j, j]


def a2_quantities(omega: np.ndarray, j: int, lam: float, n: int) -> tuple:
    """Penalty-scale diagnostics (λq, √(log p / n)·q/λ, λ√q / b_min).

    ``q`` counts the true neighbors of ``j`` and ``b_min`` is the
    smallest nonzero coefficient magnitude; with no neighbors the third
    term has nothing to bound and is reported as infinity.
    """
    if lam <= 0.0:
        raise DomainError(f"lambda must be positive, got {lam}")
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    beta = population_coefficients(omega, j)
    support = _support_mask(beta)
    q = int(np.sum(support))
    p = omega.shape[0]
    first = lam * q
    second = math.sqrt(math.log(p) / n) * q / lam
    if q == 0:
        return (first, second, math.inf)
    b_min = float(np.min(np.abs(beta[support])))
    return (first, second, lam * math.sqrt(q) / b_min)


def a3_quantities(sigma: np.ndarray, j: int, lam: float) -> tuple:
    """Dual-margin diagnostics of the noiseless fit at penalty ``lam``.

    Returns (sup-norm of the subgradient off the selected set, its
    margin to 1, and the smallest rescaled dual magnitude over falsely
    selected coordinates).  The margin is computed as ``1 - sup`` so the
    two always add back to 1 exactly.  The third term is infinite when
    nothing false was selected.
    """
    sigma = as_symmetric(sigma, "sigma")
    fit = noiseless_lasso(sigma, j, lam)
    tau = subgradient_tau(sigma, j, lam, fit).tau
    selected = fit.coefficients != 0.0
    off = np.abs(tau[~selected])
    sup = float(np.max(off)) if off.size else 0.0
    margin = 1.0 - sup

    ne_hat = estimated_neighborhood(fit)
    omega = invert_spd(sigma)
    keep = [k for k in range(sigma.shape[0]) if k != j]
    row_mask = _support_mask(omega[j, keep])
    true_ne = frozenset(k for k, on in zip(keep, row_mask) if on)
    false_sel = sorted(ne_hat - true_ne)
    if not false_sel:
        return (sup, margin, math.inf)
    sel_nodes = sorted(ne_hat)
    sub = sigma[np.ix_(sel_nodes, sel_nodes)]
    tau_sel = tau[[k if k < j else k - 1 for k in sel_nodes]]
    rescaled = np.linalg.solve(sub, tau_sel)
    pos = {node: i for i, node in enumerate(sel_nodes)}
    third = float(min(abs(rescaled[pos[k]]) for k in false_sel))
    return (sup, margin, third)


def _retract(b: np.ndarray, q: int, c: float) -> np.ndarray:
    """Pull iterates back into the cone and onto the unit sphere.

    ``b`` has shape (pieces, dim, starts) with the q base coordinates
    first and the augmented coordinate last; the cone per column is
    |b_last| ≤ c·‖b_base‖₁.
    """
    base = np.sum(np.abs(b[:, :q, :]), axis=1)
    allowed = c * base
    last = b[:, -1, :]
    b[:, -1, :] = np.clip(last, -allowed, allowed)
    norms = np.sqrt(np.sum(b**2, axis=1, keepdims=True))
    norms[norms == 0.0] = 1.0
    return b / norms


def _chunk_minimum(ms: np.ndarray, q: int, c: float, rng: np.random.Generator) -> float:
    """Smallest feasible Rayleigh value over one chunk of cone pieces."""
    pieces, d, _ = ms.shape
    eigvals, eigvecs = np.linalg.eigh(ms)
    steps = 1.0 / (2.0 * np.maximum(eigvals[:, -1], 1e-12))

    starts = np.zeros((pieces, d, q + 1 + _PG_RANDOM_STARTS))
    for i in range(q):
        starts[:, i, i] = 1.0
    starts[:, :, q] = eigvecs[:, :, 0]
    starts[:, :, q + 1 :] = rng.standard_normal((pieces, d, _PG_RANDOM_STARTS))

    b = _retract(starts, q, c)
    best = np.inf
    for _ in range(_PG_ITERATIONS):
        mb = np.matmul(ms, b)
        f = np.sum(b * mb, axis=1)
        best = min(best, float(np.min(f)))
        b = _retract(b - steps[:, None, None] * (mb - b * f[:, None, :]), q, c)
    mb = np.matmul(ms, b)
    best = min(best, float(np.min(np.sum(b * mb, axis=1))))
    return best


def restricted_eigenvalue(sigma_hat: np.ndarray, support, c: float = 3.0) -> float:
    """Empirical restricted eigenvalue over single-augmentation cone pieces.

    ``support`` fixes the base-set size q; the search enumerates every
    size-q index set I and augmented coordinate l, minimizing b'Ab over
    ‖b_{∖I}‖₁ ≤ c·‖b_I‖₁ restricted to I ∪ {l}.  Feasible iterates make
    the result an upper estimate of the exact cone minimum that still
    respects the global eigenvalue floor.
    """
    a = as_symmetric(sigma_hat, "sigma_hat")
    d = a.shape[0]
    if d > RE_DIMENSION_CAP:
        raise DimensionTooLarge(
            f"restricted eigenvalue search caps at dimension {RE_DIMENSION_CAP}, got {d}"
        )
    support = sorted(int(k) for k in set(support))
    if not support:
        raise DomainError("support must be nonempty")
    if support[0] < 0 or support[-1] >= d:
        raise DomainError(f"support {support} out of range for dimension {d}")
    if c <= 0.0:
        raise DomainError(f"cone constant must be positive, got {c}")
    q = len(support)
    if q >= d:
        # No coordinate left to augment: the cone covers the whole space.
        return float(extreme_eigenvalues(a)[0])

    index_sets = []
    for base in combinations(range(d), q):
        outside = [l for l in range(d) if l not in base]
        for l in outside:
            index_sets.append(list(base) + [l])
    idx = np.asarray(index_sets)

    rng = np.random.default_rng(_PG_SEED)
    best = np.inf
    for lo in range(0, idx.shape[0], _PIECE_CHUNK):
        block = idx[lo : lo + _PIECE_CHUNK]
        ms = a[block[:, :, None], block[:, None, :]]
        best = min(best, _chunk_minimum(ms, q, c, rng))
    return best


def condition_report(sigma: np.ndarray, j: int, lam: float, n: int) -> ConditionReport:
    """Bundle every diagnostic for node ``j`` into one record."""
    sigma = as_symmetric(sigma, "sigma")
    omega = invert_spd(sigma)
    beta = population_coefficients(omega, j)
    on = _support_mask(beta)
    q = int(np.sum(on))
    b_min = float(np.min(np.abs(beta[on]))) if q else math.inf
    re_val = None
    p = sigma.shape[0]
    if q >= 1 and p - 1 <= RE_DIMENSION_CAP:
        keep = [k for k in range(p) if k != j]
        sub = sigma[np.ix_(keep, keep)]
        re_val = restricted_eigenvalue(sub, list(np.nonzero(on)[0]), 3.0)
    return ConditionReport(
        node=j,
        q=q,
        b_min=b_min,
        a2_terms=a2_quantities(omega, j, lam, n),
        a3_terms=a3_quantities(sigma, j, lam),
        re_constant=re_val,
    )
