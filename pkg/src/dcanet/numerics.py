"""Dense linear algebra and sampling primitives.

All matrices are ``numpy.float64`` arrays.  Symmetric inputs are
validated exactly (``a[i, j] == a[j, i]``); anything produced here that
is meant to be symmetric is symmetrized explicitly before returning, so
exact symmetry can be assumed downstream.

Randomness is always explicit: every stochastic routine takes an integer
seed and builds its own PCG64 generator through :func:`rng_stream`, so
results are reproducible bit for bit.  Substreams are keyed by appending
integers to the seed (e.g. ``rng_stream(seed, rep, 3)``), which maps to
a ``numpy.random.SeedSequence`` over the full key.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DomainError, NotPositiveDefinite, RankDeficient

# Relative pivot floor used by the Cholesky factorization.
PIVOT_RTOL = 1e-12


def as_symmetric(a: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Validate that ``a`` is a square, finite, exactly symmetric array."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"{what} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{what} contains non-finite entries")
    if not np.array_equal(a, a.T):
        raise DomainError(f"{what} is not symmetric")
    return a


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Build a PCG64 generator keyed by ``(seed, *key)``.

    Parameters
    ----------
    seed : int
        Non-negative base seed.
    *key : int
        Optional substream indices.  Distinct keys yield independent
        streams for the same base seed.
    """
    parts = (seed,) + key
    for part in parts:
        if not isinstance(part, (int, np.integer)) or part < 0:
            raise DomainError(f"seeds must be non-negative integers, got {part!r}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(parts)))


def derive_seed(seed: int, *key: int) -> int:
    """Deterministic child seed for handing to APIs that take one integer.

    Hashes ``(seed, *key)`` through a ``SeedSequence``; distinct keys
    give (for all practical purposes) independent child seeds.
    """
    parts = (seed,) + key
    for part in parts:
        if not isinstance(part, (int, np.integer)) or part < 0:
            raise DomainError(f"seeds must be non-negative integers, got {part!r}")
    return int(np.random.SeedSequence(parts).generate_state(1, dtype=np.uint32)[0])


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower-triangular Cholesky factor of a symmetric positive definite matrix.

    Parameters
    ----------
    a : ndarray
        Symmetric matrix.

    Returns
    -------
    ndarray
        Lower-triangular ``L`` with ``L @ L.T == a`` up to roundoff.

    Raises
    ------
    NotPositiveDefinite
        If any pivot falls at or below ``PIVOT_RTOL`` times the largest
        diagonal entry of ``a``.
    """
    a = as_symmetric(a)
    p = a.shape[0]
    if p == 0:
        raise DomainError("matrix must be non-empty")
    floor = PIVOT_RTOL * float(np.max(np.diag(a)))
    if floor <= 0.0:
        raise NotPositiveDefinite("matrix has no positive diagonal entry")
    low = np.zeros_like(a)
    for j in range(p):
        pivot = a[j, j] - low[j, :j] @ low[j, :j]
        if pivot <= floor:
            raise NotPositiveDefinite(f"pivot {pivot:.3e} at index {j} below floor {floor:.3e}")
        low[j, j] = np.sqrt(pivot)
        if j + 1 < p:
            low[j + 1 :, j] = (a[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j]) / low[j, j]
    return low


def invert_spd(a: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix.

    Uses the Cholesky factor, then symmetrizes so the result is exactly
    symmetric.
    """
    low = cholesky(a)
    inv = scipy.linalg.cho_solve((low, True), np.eye(a.shape[0]))
    return (inv + inv.T) / 2.0


def extreme_eigenvalues(a: np.ndarray) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric matrix.

    Computed with the full symmetric eigensolver; for the matrix sizes
    used here that is cheap and has no convergence corner cases.
    """
    vals = np.linalg.eigvalsh(as_symmetric(a))
    return float(vals[0]), float(vals[-1])


def sample_mvn(sigma: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` rows from a centered Gaussian with covariance ``sigma``.

    Parameters
    ----------
    sigma : ndarray
        Symmetric positive definite covariance matrix.
    n : int
        Number of rows; must be positive.
    seed : int
        Seed for the generator; equal seeds give bitwise-equal samples.

    Returns
    -------
    ndarray
        Array of shape ``(n, p)``.
    """
    if not isinstance(n, (int, np.integer)) or n <= 0:
        raise DomainError(f"sample size must be a positive integer, got {n!r}")
    low = cholesky(sigma)
    z = rng_stream(seed).standard_normal((int(n), sigma.shape[0]))
    return z @ low.T


def residual_matrix(x: np.ndarray, cond: tuple[int, ...], targets: tuple[int, ...]) -> np.ndarray:
    """Residuals of target columns after regressing out conditioning columns.

    Each target column of ``x`` is regressed on an intercept plus the
    columns indexed by ``cond``; the residuals are returned column by
    column in a single array of shape ``(n, len(targets))``.

    Raises
    ------
    RankDeficient
        If the design ``[1, x[:, cond]]`` does not have full column rank.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    design = np.empty((n, len(cond) + 1))
    design[:, 0] = 1.0
    if cond:
        design[:, 1:] = x[:, list(cond)]
    y = x[:, list(targets)]
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        raise RankDeficient(
            f"conditioning design has rank {rank} < {design.shape[1]} columns"
        )
    return y - design @ coef


def partial_correlation(x: np.ndarray, j: int, k: int, s: tuple[int, ...] = ()) -> float:
    """Sample partial correlation of columns ``j`` and ``k`` given columns ``s``.

    Both columns are residualized on an intercept plus ``x[:, s]`` and
    the Pearson correlation of the residuals is returned.  This
    regression route is the quantity the node-wise tests use directly.

    Parameters
    ----------
    x : ndarray
        Data matrix of shape ``(n, p)``.
    j, k : int
        Distinct column indices, neither contained in ``s``.
    s : tuple of int
        Conditioning column indices (possibly empty).

    Returns
    -------
    float
        Partial correlation in ``[-1, 1]``.  Symmetric in ``(j, k)``.

    Raises
    ------
    RankDeficient
        If the conditioning design is rank deficient or either residual
        vector is identically zero.
    """
    x = np.asarray(x, dtype=np.float64)
    p = x.shape[1]
    s = tuple(int(i) for i in s)
    for idx in (j, k):
        if not 0 <= idx < p:
            raise DomainError(f"column index {idx} out of range for p={p}")
    if j == k or j in s or k in s:
        raise DomainError(f"indices j={j}, k={k}, s={s} must be disjoint")
    if len(set(s)) != len(s):
        raise DomainError(f"conditioning set {s} has repeated indices")
    res = residual_matrix(x, s, (j, k))
    ss_j = float(res[:, 0] @ res[:, 0])
    ss_k = float(res[:, 1] @ res[:, 1])
    if ss_j <= 0.0 or ss_k <= 0.0:
        raise RankDeficient("a residual vector is identically zero")
    r = float(res[:, 0] @ res[:, 1]) / np.sqrt(ss_j * ss_k)
    return float(min(1.0, max(-1.0, r)))
