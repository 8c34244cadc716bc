"""Feature-selection stability measures.

Two chance-corrected measures over a family of selected feature sets:

* ``smu`` compares sets by plain intersection size.
* ``sma`` additionally credits a feature in one set that has a similar
  (similarity >= theta) partner in the other set.

Similarities are looked up through :class:`SimilarityMatrix` objects, which
only need to answer "is sim(a, b) >= theta" for index arrays. A dense matrix
and an implicit block-exchangeable variant are provided.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_THETA = 0.9
DEFAULT_MC_SAMPLES = 10_000

# elements per chunk when drawing random subsets (rows * p)
_MC_CHUNK_ELEMS = 2_000_000
_DEN_EPS = 1e-12


class StabilityError(ValueError):
    """Raised when a stability score is undefined for the given input."""


def as_feature_set(indices: Iterable[int], p: Optional[int] = None) -> frozenset:
    """Validate feature indices and return them as a frozenset."""
    out = frozenset(int(i) for i in indices)
    if any(i < 0 for i in out):
        raise ValueError("feature indices must be non-negative")
    if p is not None and any(i >= p for i in out):
        raise ValueError(f"feature index out of range for p={p}")
    return out


# --------------------------------------------------------------------------
# similarity
# --------------------------------------------------------------------------


class SimilarityMatrix:
    """Symmetric feature similarity in [0, 1] with a threshold ``theta``.

    Parameters
    ----------
    values : ndarray of shape (p, p)
        Similarity values. Must be symmetric with unit diagonal.
    theta : float
        Two distinct features count as similar when ``values >= theta``.
    """

    def __init__(self, values, theta: float = DEFAULT_THETA, check: bool = True):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("similarity values must be a square matrix")
        _check_theta(theta)
        if check:
            if not np.all(np.isfinite(values)):
                raise ValueError("similarity values must be finite")
            if values.min() < 0.0 or values.max() > 1.0:
                raise ValueError("similarity values must lie in [0, 1]")
            if not np.allclose(values, values.T, rtol=0.0, atol=1e-12):
                raise ValueError("similarity matrix must be symmetric")
            if not np.allclose(np.diag(values), 1.0, rtol=0.0, atol=1e-12):
                raise ValueError("similarity matrix must have unit diagonal")
        self.values = values
        self.theta = float(theta)
        self._above = values >= self.theta

    @property
    def p(self) -> int:
        return self.values.shape[0]

    def similar(self, a, b) -> np.ndarray:
        """Boolean array ``sim(a, b) >= theta`` with numpy broadcasting."""
        return self._above[a, b]

    def has_similar_pairs(self) -> bool:
        """True if some off-diagonal entry reaches the threshold."""
        off = self._above.copy()
        np.fill_diagonal(off, False)
        return bool(off.any())

    def with_theta(self, theta: float) -> "SimilarityMatrix":
        return SimilarityMatrix(self.values, theta, check=False)


class BlockSimilarity(SimilarityMatrix):
    """Exchangeable blocks: similarity 1 within a block of consecutive
    features, 0 between blocks. Stored implicitly so large ``p`` is cheap.
    If ``block_size`` does not divide ``p`` the last block is shorter."""

    def __init__(self, p: int, block_size: int, theta: float = DEFAULT_THETA):
        if p < 1 or block_size < 1:
            raise ValueError("p and block_size must be positive")
        _check_theta(theta)
        self._p = int(p)
        self.block_size = int(block_size)
        self.theta = float(theta)

    @property
    def p(self) -> int:
        return self._p

    @property
    def values(self) -> np.ndarray:
        blocks = np.arange(self._p) // self.block_size
        return (blocks[:, None] == blocks[None, :]).astype(float)

    def similar(self, a, b) -> np.ndarray:
        a = np.asarray(a)
        b = np.asarray(b)
        return (a // self.block_size) == (b // self.block_size)

    def has_similar_pairs(self) -> bool:
        return self.block_size > 1 and self._p > 1

    def with_theta(self, theta: float) -> "BlockSimilarity":
        return BlockSimilarity(self._p, self.block_size, theta)


def _check_theta(theta: float) -> None:
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")


def similarity_from_data(x, theta: float = DEFAULT_THETA) -> SimilarityMatrix:
    """Absolute Pearson correlation between the columns of ``x``.

    Constant columns get similarity 0 to every other feature and 1 to
    themselves.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need a 2-d array with at least two rows")
    xc = x - x.mean(axis=0)
    norms = np.sqrt((xc * xc).sum(axis=0))
    const = norms <= 1e-12 * max(1.0, float(np.abs(x).max(initial=0.0)))
    norms[const] = 1.0
    xc = xc / norms
    corr = np.abs(xc.T @ xc)
    corr[const, :] = 0.0
    corr[:, const] = 0.0
    np.clip(corr, 0.0, 1.0, out=corr)
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    return SimilarityMatrix(corr, theta, check=False)


# --------------------------------------------------------------------------
# building blocks
# --------------------------------------------------------------------------


def expected_intersection(c1: int, c2: int, p: int) -> float:
    """Mean overlap of two uniformly random subsets of sizes c1 and c2."""
    if p < 1:
        raise ValueError("p must be at least 1")
    if not (0 <= c1 <= p and 0 <= c2 <= p):
        raise ValueError(f"invalid cardinalities ({c1}, {c2}) for p={p}")
    return c1 * c2 / p


def _directed_adjustment(vi, vj, sim: SimilarityMatrix) -> int:
    only_i = sorted(set(vi) - set(vj))
    only_j = sorted(set(vj) - set(vi))
    if not only_i or not only_j:
        return 0
    hits = sim.similar(np.array(only_i)[:, None], np.array(only_j)[None, :])
    return int(hits.any(axis=1).sum())


def adjustment(vi, vj, sim: SimilarityMatrix) -> int:
    """Number of non-shared features with a similar partner, taking the
    smaller count over the two directions."""
    return min(_directed_adjustment(vi, vj, sim), _directed_adjustment(vj, vi, sim))


def _random_subsets(rng: np.random.Generator, rows: int, p: int, c: int) -> np.ndarray:
    if c == 0:
        return np.empty((rows, 0), dtype=np.int64)
    if c == p:
        return np.tile(np.arange(p), (rows, 1))
    keys = rng.random((rows, p))
    return np.argpartition(keys, c - 1, axis=1)[:, :c]


def _adjusted_overlap_batch(u: np.ndarray, w: np.ndarray, sim: SimilarityMatrix) -> np.ndarray:
    """|U ∩ W| + Adj(U, W) for each row of the index arrays u, w."""
    eq = u[:, :, None] == w[:, None, :]
    u_in_w = eq.any(axis=2)
    w_in_u = eq.any(axis=1)
    inter = u_in_w.sum(axis=1)
    close = sim.similar(u[:, :, None], w[:, None, :])
    a_uw = ((close & ~w_in_u[:, None, :]).any(axis=2) & ~u_in_w).sum(axis=1)
    a_wu = ((close & ~u_in_w[:, :, None]).any(axis=1) & ~w_in_u).sum(axis=1)
    return inter + np.minimum(a_uw, a_wu)


def expected_adjusted_intersection(
    c1: int,
    c2: int,
    sim: SimilarityMatrix,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
) -> float:
    """Expected ``|U ∩ W| + Adj(U, W)`` for random subsets of sizes c1, c2.

    Uses the exact hypergeometric mean when no pair of distinct features is
    similar; otherwise a Monte-Carlo average over ``mc_samples`` draws. The
    random stream depends only on ``(seed, min(c1, c2), max(c1, c2))``.
    """
    p = sim.p
    if not (0 <= c1 <= p and 0 <= c2 <= p):
        raise ValueError(f"invalid cardinalities ({c1}, {c2}) for p={p}")
    if mc_samples < 1:
        raise ValueError("mc_samples must be at least 1")
    if c1 == 0 or c2 == 0:
        return 0.0
    if not sim.has_similar_pairs():
        return expected_intersection(c1, c2, p)
    lo, hi = min(c1, c2), max(c1, c2)
    rng = np.random.default_rng([int(seed), lo, hi])
    rows = max(1, _MC_CHUNK_ELEMS // p)
    total = 0
    done = 0
    while done < mc_samples:
        b = min(rows, mc_samples - done)
        u = _random_subsets(rng, b, p, lo)
        w = _random_subsets(rng, b, p, hi)
        total += int(_adjusted_overlap_batch(u, w, sim).sum())
        done += b
    return total / mc_samples


# --------------------------------------------------------------------------
# measures
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StabilityResult:
    score: float
    measure_kind: str  # "unadjusted" | "adjusted"
    mc_samples_used: int = 0
    n_pairs: int = 0
    n_skipped: int = 0


def _pairwise_average(sets, p, numerator, expectation, kind, mc_used) -> StabilityResult:
    m = len(sets)
    if m < 2:
        raise StabilityError("need at least two feature sets")
    scores = []
    skipped = 0
    for i in range(m - 1):
        for j in range(i + 1, m):
            vi, vj = sets[i], sets[j]
            if not vi or not vj:
                scores.append(0.0)
                continue
            e = expectation(len(vi), len(vj))
            den = math.sqrt(len(vi) * len(vj)) - e
            if abs(den) <= _DEN_EPS:
                skipped += 1
                continue
            scores.append((numerator(vi, vj) - e) / den)
    if skipped:
        warnings.warn(f"{skipped} pair(s) with zero denominator skipped", RuntimeWarning, stacklevel=3)
    if not scores:
        raise StabilityError("undefined stability: every pair is degenerate")
    score = math.fsum(scores) / len(scores)
    return StabilityResult(min(score, 1.0), kind, mc_used, len(scores), skipped)


def _check_sets(sets: Sequence, p: int) -> list:
    return [as_feature_set(s, p) for s in sets]


def smu(sets: Sequence[Iterable[int]], p: int) -> StabilityResult:
    """Unadjusted stability of a family of feature sets over ``p`` features.

    Examples
    --------
    >>> smu([{1, 2}, {2, 3}], p=4).score
    0.0
    """
    sets = _check_sets(sets, p)
    return _pairwise_average(
        sets,
        p,
        lambda a, b: len(a & b),
        lambda c1, c2: expected_intersection(c1, c2, p),
        "unadjusted",
        0,
    )


def sma(
    sets: Sequence[Iterable[int]],
    sim: SimilarityMatrix,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
    cache: Optional[dict] = None,
) -> StabilityResult:
    """Adjusted stability: intersections are credited with similar features.

    ``cache`` may be a dict shared across calls on the same ``sim``,
    ``mc_samples`` and ``seed``; it memoises expectations by set sizes.
    """
    p = sim.p
    sets = _check_sets(sets, p)
    exact = not sim.has_similar_pairs()
    memo = {} if cache is None else cache

    def expectation(c1, c2):
        key = (min(c1, c2), max(c1, c2))
        if key not in memo:
            memo[key] = expected_adjusted_intersection(c1, c2, sim, mc_samples, seed)
        return memo[key]

    return _pairwise_average(
        sets,
        p,
        lambda a, b: len(a & b) + adjustment(a, b, sim),
        expectation,
        "adjusted",
        0 if exact else mc_samples,
    )
