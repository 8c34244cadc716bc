"""Grid tuning of the support size with cross-validated accuracy and
feature-selection stability, plus the configuration selection rules."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np

from .l0logreg import Dataset, SolverOptions, accuracy, fit_l0, fit_l0_path
from .stability import (
    DEFAULT_MC_SAMPLES,
    DEFAULT_THETA,
    BlockSimilarity,
    SimilarityMatrix,
    sma,
    similarity_from_data,
    smu,
)

log = logging.getLogger(__name__)

# boundary slack for the filter comparisons, so e.g. 0.875 survives a
# threshold computed as 0.9 - 0.025
_CMP_TOL = 1e-12


@dataclass(frozen=True)
class CVSplits:
    folds: tuple
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "folds", tuple(np.sort(np.asarray(f, dtype=np.int64)) for f in self.folds))

    @property
    def n_folds(self) -> int:
        return len(self.folds)

    @property
    def n(self) -> int:
        return sum(f.size for f in self.folds)

    def train_test(self, i: int):
        test = self.folds[i]
        train = np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != i]))
        return train, test


def make_cv_splits(n: int, folds: int = 10, seed: int = 0) -> CVSplits:
    """Random partition of ``range(n)`` into ``folds`` parts of near-equal size."""
    if folds < 2:
        raise ValueError("need at least two folds")
    if folds > n:
        raise ValueError(f"cannot split {n} rows into {folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return CVSplits(tuple(np.array_split(perm, folds)), seed)


@dataclass(frozen=True)
class MeasureSpec:
    """How stability is scored during tuning.

    ``similarity`` is ``"block"`` (exact exchangeable blocks of
    ``block_size`` consecutive features) or ``"correlation"`` (absolute
    Pearson correlation on the tuning data).
    """

    kind: str = "adjusted"
    theta: float = DEFAULT_THETA
    mc_samples: int = DEFAULT_MC_SAMPLES
    similarity: str = "correlation"
    block_size: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("adjusted", "unadjusted"):
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if self.similarity not in ("block", "correlation"):
            raise ValueError(f"unknown similarity source {self.similarity!r}")
        if self.similarity == "block" and self.kind == "adjusted" and not self.block_size:
            raise ValueError("block similarity needs block_size")

    def similarity_matrix(self, data: Dataset) -> SimilarityMatrix:
        if self.similarity == "block":
            return BlockSimilarity(data.p, self.block_size, self.theta)
        return similarity_from_data(data.x, self.theta)


@dataclass
class ConfigPerformance:
    k: int
    mean_accuracy: float
    stability: Optional[float]
    fold_feature_sets: List[frozenset]
    fold_accuracies: List[float]

    def __post_init__(self):
        if len(self.fold_feature_sets) != len(self.fold_accuracies):
            raise ValueError("one feature set and one accuracy per fold")


@dataclass(frozen=True)
class SelectionParams:
    acc_const: float = 0.025
    stab_const: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.acc_const < 0 or self.stab_const < 0:
            raise ValueError("selection constants must be non-negative")


# --------------------------------------------------------------------------
# evaluation on CV folds
# --------------------------------------------------------------------------


def _config(k: int, sets: List[frozenset], accs: List[float]) -> ConfigPerformance:
    return ConfigPerformance(k, float(np.mean(accs)), None, sets, accs)


def score_stability(configs: Sequence[ConfigPerformance], data: Dataset, measure: MeasureSpec) -> List[ConfigPerformance]:
    """Copies of ``configs`` with stability computed over the fold supports."""
    if measure.kind == "unadjusted":
        scorer = lambda sets: smu(sets, data.p).score  # noqa: E731
    else:
        sim = measure.similarity_matrix(data)
        cache: dict = {}
        scorer = lambda sets: sma(sets, sim, measure.mc_samples, measure.seed, cache).score  # noqa: E731
    return [replace(c, stability=float(scorer(c.fold_feature_sets))) for c in configs]


def evaluate_config(
    data: Dataset,
    k: int,
    splits: CVSplits,
    measure: Optional[MeasureSpec] = None,
    opts: SolverOptions = SolverOptions(),
) -> ConfigPerformance:
    """Cross-validated accuracy (and stability, if ``measure`` is given) of
    the size-``k`` model."""
    sets, accs = [], []
    for i in range(splits.n_folds):
        train, test = splits.train_test(i)
        try:
            model = fit_l0(data.subset(train), k, opts)
        except Exception as exc:
            raise RuntimeError(f"fold {i}, k={k}: {exc}") from exc
        sets.append(frozenset(model.support))
        accs.append(accuracy(model, data.subset(test)))
    config = _config(k, sets, accs)
    if measure is not None:
        config = score_stability([config], data, measure)[0]
    return config


def grid_tune(
    data: Dataset,
    k_grid: Sequence[int],
    splits: CVSplits,
    measure: Optional[MeasureSpec] = None,
    opts: SolverOptions = SolverOptions(),
) -> List[ConfigPerformance]:
    """:func:`evaluate_config` for every k in ``k_grid`` (order kept).

    Each fold computes one solution path up to ``max(k_grid)``. Grid points
    whose fit failed on any fold are dropped with a warning.
    """
    k_grid = [int(k) for k in k_grid]
    if not k_grid:
        raise ValueError("empty k grid")
    k_max = max(k_grid)
    per_fold = []
    for i in range(splits.n_folds):
        train, test = splits.train_test(i)
        test_data = data.subset(test)
        try:
            path = fit_l0_path(data.subset(train), k_max, opts)
        except Exception as exc:
            log.warning("fold %d: solution path failed (%s); affected grid points dropped", i, exc)
            per_fold.append(None)
            continue
        per_fold.append({k: (frozenset(path[k].support), accuracy(path[k], test_data)) for k in set(k_grid)})
    configs = []
    for k in k_grid:
        if any(f is None for f in per_fold):
            log.warning("k=%d excluded: solver failed on a fold", k)
            continue
        configs.append(_config(k, [f[k][0] for f in per_fold], [f[k][1] for f in per_fold]))
    if measure is not None:
        configs = score_stability(configs, data, measure)
    return configs


# --------------------------------------------------------------------------
# selection
# --------------------------------------------------------------------------


def _dominates(a: ConfigPerformance, b: ConfigPerformance) -> bool:
    return (
        a.mean_accuracy >= b.mean_accuracy
        and a.stability >= b.stability
        and (a.mean_accuracy > b.mean_accuracy or a.stability > b.stability)
    )


def _require_stability(configs: Sequence[ConfigPerformance]) -> None:
    if any(c.stability is None for c in configs):
        raise ValueError("every configuration needs a stability value")


def pareto_front(configs: Sequence[ConfigPerformance]) -> List[ConfigPerformance]:
    """Configurations not strictly dominated in (accuracy, stability)."""
    _require_stability(configs)
    return [c for c in configs if not any(_dominates(o, c) for o in configs if o is not c)]


def _random_pick(candidates: List[ConfigPerformance], seed: int) -> ConfigPerformance:
    if len(candidates) == 1:
        return candidates[0]
    return candidates[int(np.random.default_rng(seed).integers(len(candidates)))]


def epsilon_constraint_select(configs: Sequence[ConfigPerformance], params: SelectionParams = SelectionParams()) -> ConfigPerformance:
    """Pick one compromise configuration from accuracy/stability pairs.

    Keeps configurations within ``acc_const`` of the best accuracy, then
    those within ``stab_const`` of the best remaining stability, then the
    most accurate and the most stable of those; remaining ties are broken
    at random with ``params.seed``.
    """
    if not configs:
        raise ValueError("no configurations to select from")
    _require_stability(configs)
    rest = list(configs)
    acc_max = max(c.mean_accuracy for c in rest)
    rest = [c for c in rest if c.mean_accuracy >= acc_max - params.acc_const - _CMP_TOL]
    stab_max = max(c.stability for c in rest)
    rest = [c for c in rest if c.stability >= stab_max - params.stab_const - _CMP_TOL]
    acc_end = max(c.mean_accuracy for c in rest)
    rest = [c for c in rest if c.mean_accuracy >= acc_end]
    if len(rest) > 1:
        s_end = max(c.stability for c in rest)
        rest = [c for c in rest if c.stability >= s_end]
    return _random_pick(rest, params.seed)


def single_criteria_select(configs: Sequence[ConfigPerformance], seed: int = 0) -> ConfigPerformance:
    """Most accurate configuration; ties broken at random with ``seed``."""
    if not configs:
        raise ValueError("no configurations to select from")
    best = max(c.mean_accuracy for c in configs)
    return _random_pick([c for c in configs if c.mean_accuracy >= best], seed)
