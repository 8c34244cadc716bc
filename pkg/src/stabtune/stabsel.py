"""Stability selection with the L0 logistic solver as base selector.

The base selector picks ``q`` features on each of ``n_subsamples``
half-samples (drawn as complementary pairs). Features selected on at least a
``cutoff`` fraction of the subsamples form the stable set. ``q`` follows from
``cutoff`` and the per-family error rate (PFER) through the usual error bound
``PFER <= q^2 / ((2 cutoff - 1) p)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .l0logreg import Dataset, SolverOptions, accuracy, fit_l0_path, fit_logistic
from .tuning import ConfigPerformance, CVSplits, single_criteria_select

log = logging.getLogger(__name__)

CUTOFF_RANGE = (0.55, 0.99)
PFER_RANGE = (0.1, 10.0)


@dataclass(frozen=True)
class StabSelParams:
    cutoff: float
    pfer: float
    n_subsamples: int = 50
    seed: int = 0

    def __post_init__(self):
        if not 0.5 < self.cutoff <= 1.0:
            raise ValueError("cutoff must lie in (0.5, 1]")
        if not self.pfer > 0:
            raise ValueError("pfer must be positive")
        if self.n_subsamples < 2 or self.n_subsamples % 2:
            raise ValueError("n_subsamples must be a positive even number")


@dataclass
class SelectionFrequencies:
    freq: np.ndarray
    q_used: int
    n_subsamples: int


def sub_seed(seed: int, *keys: int) -> int:
    """Integer seed derived from ``seed`` and ``keys``; order-independent
    of any other draw."""
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)[0])


def complementary_subsamples(n: int, n_subsamples: int, seed: int = 0) -> List[np.ndarray]:
    """``n_subsamples / 2`` random splits of ``range(n)`` into halves of
    size floor(n/2) and ceil(n/2); consecutive entries form a pair."""
    if n_subsamples < 2 or n_subsamples % 2:
        raise ValueError("n_subsamples must be a positive even number")
    if n < 4:
        raise ValueError("need at least four observations")
    rng = np.random.default_rng(seed)
    half = n // 2
    out = []
    for _ in range(n_subsamples // 2):
        perm = rng.permutation(n)
        out.append(np.sort(perm[:half]))
        out.append(np.sort(perm[half:]))
    return out


def derive_q(params: StabSelParams, p: int) -> int:
    """Number of features the base selector picks on every subsample."""
    q = math.floor(math.sqrt(params.pfer * (2.0 * params.cutoff - 1.0) * p))
    return min(max(1, q), p)


def _max_q(n: int) -> int:
    # largest q with q < floor(n / 2) - 1
    return n // 2 - 2


def subsample_supports(
    data: Dataset, q_max: int, n_subsamples: int, seed: int, opts: SolverOptions = SolverOptions()
) -> List[List[frozenset]]:
    """Supports of sizes 0..q_max on each subsample, as ``out[s][q]``.

    A subsample whose solver fails selects nothing for every q.
    """
    out = []
    for s, rows in enumerate(complementary_subsamples(data.n, n_subsamples, seed)):
        try:
            path = fit_l0_path(data.subset(rows), q_max, opts)
            out.append([frozenset(m.support) for m in path])
        except Exception as exc:
            log.warning("subsample %d: selection failed (%s); counted as empty", s, exc)
            out.append([frozenset()] * (q_max + 1))
    return out


def _frequencies(supports: List[List[frozenset]], q: int, p: int) -> np.ndarray:
    counts = np.zeros(p, dtype=np.int64)
    for path in supports:
        counts[list(path[q])] += 1
    return counts / len(supports)


def selection_frequencies(data: Dataset, params: StabSelParams, opts: SolverOptions = SolverOptions()) -> SelectionFrequencies:
    """Per-feature share of subsamples on which the size-q model selected it."""
    q = derive_q(params, data.p)
    if q > _max_q(data.n):
        raise ValueError(f"q={q} too large for {data.n} observations (need q < floor(n/2) - 1)")
    supports = subsample_supports(data, q, params.n_subsamples, params.seed, opts)
    return SelectionFrequencies(_frequencies(supports, q, data.p), q, params.n_subsamples)


def stable_set(freqs: SelectionFrequencies, cutoff: float) -> frozenset:
    if not 0.5 < cutoff <= 1.0:
        raise ValueError("cutoff must lie in (0.5, 1]")
    return frozenset(np.flatnonzero(freqs.freq >= cutoff - 1e-12).tolist())


def random_candidates(
    n_points: int, seed: int, n_subsamples: int = 50, cutoff_range=CUTOFF_RANGE, pfer_range=PFER_RANGE
) -> List[StabSelParams]:
    """Random-search points: cutoff uniform, PFER log-uniform."""
    if n_points < 1:
        raise ValueError("n_points must be at least 1")
    rng = np.random.default_rng(seed)
    cut = rng.uniform(*cutoff_range, size=n_points)
    pfer = np.exp(rng.uniform(math.log(pfer_range[0]), math.log(pfer_range[1]), size=n_points))
    sel_seed = sub_seed(seed, 1)
    return [StabSelParams(float(c), float(e), n_subsamples, sel_seed) for c, e in zip(cut, pfer)]


def tune_stabsel(
    data: Dataset,
    splits: CVSplits,
    n_points: int = 50,
    seed: int = 0,
    opts: SolverOptions = SolverOptions(),
    n_subsamples: int = 50,
    cutoff_range=CUTOFF_RANGE,
    pfer_range=PFER_RANGE,
) -> Tuple[StabSelParams, ConfigPerformance]:
    """Random search over (cutoff, PFER) scored by the cross-validated
    accuracy of a plain logistic model on the stable set.

    All candidates of a fold share the same subsamples, so selection paths
    are computed once per fold up to the largest q needed.
    """
    candidates = random_candidates(n_points, seed, n_subsamples, cutoff_range, pfer_range)
    qs = [derive_q(c, data.p) for c in candidates]
    fold_sets: List[List[frozenset]] = [[] for _ in candidates]
    fold_accs: List[List[float]] = [[] for _ in candidates]
    valid = [True] * len(candidates)
    for i in range(splits.n_folds):
        train_idx, test_idx = splits.train_test(i)
        train, test = data.subset(train_idx), data.subset(test_idx)
        usable = [j for j, q in enumerate(qs) if valid[j] and q <= _max_q(train.n)]
        for j in set(range(len(candidates))) - set(usable):
            valid[j] = False
        if not usable:
            break
        q_max = max(qs[j] for j in usable)
        supports = subsample_supports(train, q_max, n_subsamples, sub_seed(seed, 2, i), opts)
        freq_by_q: Dict[int, np.ndarray] = {}
        for j in usable:
            q = qs[j]
            if q not in freq_by_q:
                freq_by_q[q] = _frequencies(supports, q, data.p)
            chosen = stable_set(SelectionFrequencies(freq_by_q[q], q, n_subsamples), candidates[j].cutoff)
            if len(chosen) > train.n - 2:
                valid[j] = False
                continue
            try:
                model = fit_logistic(train, chosen, opts)
            except Exception as exc:
                log.warning("fold %d, candidate %d invalid: %s", i, j, exc)
                valid[j] = False
                continue
            fold_sets[j].append(chosen)
            fold_accs[j].append(accuracy(model, test))
    scored = [
        (candidates[j], ConfigPerformance(qs[j], float(np.mean(fold_accs[j])), None, fold_sets[j], fold_accs[j]))
        for j in range(len(candidates))
        if valid[j]
    ]
    if not scored:
        raise RuntimeError("no valid stability-selection candidate")
    best = single_criteria_select([c for _, c in scored], sub_seed(seed, 3))
    for params, config in scored:
        if config is best:
            return params, config
    raise AssertionError("unreachable")
