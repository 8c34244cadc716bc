"""Final models per approach, block-aware error counts, simulation
replications and nested cross-validation.

Approaches:

``adj``    support size tuned on accuracy and adjusted stability
``unadj``  same with unadjusted stability
``acc``    support size tuned on accuracy only
``stabs``  stability selection followed by a plain logistic fit
``truth``  plain logistic fit on the generating features (simulation only)
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple


from .l0logreg import Dataset, SolverOptions, SparseModel, accuracy, fit_l0_path, fit_logistic
from .simdata import GroundTruth, ScenarioSpec, block_of, sample_dataset, sample_test_dataset
from .stabsel import StabSelParams, derive_q, selection_frequencies, stable_set, sub_seed, tune_stabsel
from .tuning import (
    ConfigPerformance,
    CVSplits,
    MeasureSpec,
    SelectionParams,
    epsilon_constraint_select,
    grid_tune,
    make_cv_splits,
    score_stability,
    single_criteria_select,
)

log = logging.getLogger(__name__)

APPROACHES = ("adj", "unadj", "acc", "stabs", "truth")
GRID_APPROACHES = ("adj", "unadj", "acc")

RESULT_COLUMNS = [
    "scenario_id",
    "replication",
    "approach",
    "test_accuracy",
    "false_positives",
    "false_negatives",
    "n_selected",
    "chosen_k",
    "wall_time_ms",
    "error",
]


@dataclass(frozen=True)
class ExperimentConfig:
    """Tuning settings shared by every approach in an experiment."""

    k_max: int = 20
    folds: int = 10
    acc_const: float = 0.025
    stab_const: float = 0.1
    theta: float = 0.9
    mc_samples: int = 10_000
    similarity: str = "block"  # "block" or "correlation"
    n_points: int = 50
    n_subsamples: int = 50
    record_timing: bool = False
    solver: SolverOptions = field(default_factory=SolverOptions)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "solver" in d and isinstance(d["solver"], dict):
            d["solver"] = SolverOptions(**d["solver"])
        return cls(**d)


@dataclass
class ApproachResult:
    approach: str
    final_support: frozenset
    test_accuracy: float
    false_positives: Optional[int]
    false_negatives: Optional[int]
    chosen: dict


def false_counts(selected, truth: GroundTruth) -> Tuple[int, int]:
    """(false positives, false negatives) treating features of one block as
    exchangeable: a relevant block is covered by any of its features, and
    every further feature from a covered block counts as redundant."""
    relevant = truth.relevant_blocks
    per_block: Dict[int, int] = {}
    for f in selected:
        b = block_of(int(f), truth.block_size)
        per_block[b] = per_block.get(b, 0) + 1
    fn = sum(1 for b in relevant if per_block.get(b, 0) == 0)
    fp = sum(c if b not in relevant else c - 1 for b, c in per_block.items())
    return fp, fn


# --------------------------------------------------------------------------
# tuning and final models per approach
# --------------------------------------------------------------------------


def _measure(kind: str, config: ExperimentConfig, block_size: Optional[int], seed: int) -> MeasureSpec:
    similarity = config.similarity if block_size is not None else "correlation"
    return MeasureSpec(kind, config.theta, config.mc_samples, similarity, block_size, seed)


def _k_grid(config: ExperimentConfig, data: Dataset, splits: CVSplits) -> List[int]:
    smallest_train = data.n - max(f.size for f in splits.folds)
    return list(range(0, min(config.k_max, data.p, smallest_train - 2) + 1))


def tune_approaches(
    data: Dataset,
    approaches: Sequence[str],
    splits: CVSplits,
    config: ExperimentConfig,
    seed: int,
    block_size: Optional[int] = None,
) -> Dict[str, object]:
    """Chosen configuration per approach; grid approaches share one set of
    fold fits. Values are ConfigPerformance (grid), StabSelParams (stabs)
    or None (truth)."""
    chosen: Dict[str, object] = {}
    grid_needed = [a for a in approaches if a in GRID_APPROACHES]
    if grid_needed:
        base = grid_tune(data, _k_grid(config, data, splits), splits, None, config.solver)
        if not base:
            raise RuntimeError("every grid point failed")
        select_seed = sub_seed(seed, 10)
        params = SelectionParams(config.acc_const, config.stab_const, select_seed)
        measure_seed = sub_seed(seed, 11)
        for a in grid_needed:
            if a == "acc":
                chosen[a] = single_criteria_select(base, select_seed)
            else:
                kind = "adjusted" if a == "adj" else "unadjusted"
                scored = score_stability(base, data, _measure(kind, config, block_size, measure_seed))
                chosen[a] = epsilon_constraint_select(scored, params)
    if "stabs" in approaches:
        params, _ = tune_stabsel(
            data, splits, config.n_points, sub_seed(seed, 12), config.solver, config.n_subsamples
        )
        chosen["stabs"] = params
    if "truth" in approaches:
        chosen["truth"] = None
    return chosen


def build_final_model(
    data: Dataset,
    approach: str,
    chosen,
    truth: Optional[GroundTruth] = None,
    opts: SolverOptions = SolverOptions(),
    path: Optional[List[SparseModel]] = None,
) -> SparseModel:
    """Refit the chosen configuration of ``approach`` on all of ``data``.

    ``chosen`` is a ConfigPerformance or support size (grid approaches), a
    StabSelParams (stabs) or ignored (truth). A precomputed solution
    ``path`` on ``data`` may be passed to avoid refitting grid models.
    """
    if approach in GRID_APPROACHES:
        k = chosen.k if isinstance(chosen, ConfigPerformance) else int(chosen)
        if path is not None and len(path) > k:
            return path[k]
        return fit_l0_path(data, k, opts)[k]
    if approach == "stabs":
        freqs = selection_frequencies(data, chosen, opts)
        return fit_logistic(data, stable_set(freqs, chosen.cutoff), opts)
    if approach == "truth":
        if truth is None:
            raise ValueError("truth approach needs the ground truth")
        return fit_logistic(data, truth.generating_features, opts)
    raise ValueError(f"unknown approach {approach!r}")


def _chosen_k(approach: str, chosen, data: Dataset, model: SparseModel):
    if approach in GRID_APPROACHES:
        return chosen.k
    if approach == "stabs":
        return derive_q(chosen, data.p)
    return model.k


def _chosen_record(chosen) -> dict:
    if isinstance(chosen, ConfigPerformance):
        return {"k": chosen.k, "mean_accuracy": chosen.mean_accuracy, "stability": chosen.stability}
    if isinstance(chosen, StabSelParams):
        return asdict(chosen)
    return {}


# --------------------------------------------------------------------------
# simulation replications
# --------------------------------------------------------------------------


def _ordered(approaches: Sequence[str]) -> List[str]:
    bad = set(approaches) - set(APPROACHES)
    if bad:
        raise ValueError(f"unknown approaches: {sorted(bad)}")
    return [a for a in APPROACHES if a in approaches]


def run_replication(spec: ScenarioSpec, replication: int, approaches: Sequence[str], seed: int, config: ExperimentConfig) -> List[dict]:
    """One training/test draw of ``spec``; one result row per approach."""
    approaches = _ordered(approaches)
    rep_seed = sub_seed(seed, spec.p, spec.block_size, spec.n, replication)
    rows = []
    try:
        train_spec = replace(spec, seed=rep_seed)
        train, truth = sample_dataset(train_spec)
        test, _ = sample_test_dataset(train_spec)
        splits = make_cv_splits(train.n, config.folds, sub_seed(rep_seed, 1))
        t0 = time.perf_counter()
        tune_time: Dict[str, float] = {}
        chosen: Dict[str, object] = {}
        grid = [a for a in approaches if a in GRID_APPROACHES]
        groups = ([grid] if grid else []) + [[a] for a in approaches if a not in GRID_APPROACHES]
        for group in groups:
            start = time.perf_counter()
            chosen.update(tune_approaches(train, group, splits, config, rep_seed, spec.block_size))
            for a in group:
                tune_time[a] = (time.perf_counter() - start) / len(group)
        path = None
        if grid:
            path = fit_l0_path(train, max(chosen[a].k for a in grid), config.solver)
        for a in approaches:
            start = time.perf_counter()
            try:
                model = build_final_model(train, a, chosen[a], truth, config.solver, path)
                fp, fn = false_counts(model.support, truth)
                row = {
                    "test_accuracy": accuracy(model, test),
                    "false_positives": fp,
                    "false_negatives": fn,
                    "n_selected": model.k,
                    "chosen_k": _chosen_k(a, chosen[a], train, model),
                    "error": "",
                }
            except Exception as exc:  # recorded, run continues
                log.warning("%s rep %d %s failed: %s", spec.scenario_id, replication, a, exc)
                row = _failed_row(exc)
            elapsed = tune_time[a] + time.perf_counter() - start
            row.update(
                scenario_id=spec.scenario_id,
                replication=replication,
                approach=a,
                wall_time_ms=round(1000 * elapsed) if config.record_timing else "",
            )
            rows.append(row)
        log.debug("%s rep %d done in %.1fs", spec.scenario_id, replication, time.perf_counter() - t0)
    except Exception as exc:
        log.warning("%s rep %d failed: %s", spec.scenario_id, replication, exc)
        rows = []
        for a in approaches:
            row = _failed_row(exc)
            row.update(scenario_id=spec.scenario_id, replication=replication, approach=a, wall_time_ms="")
            rows.append(row)
    return [{c: r.get(c, "") for c in RESULT_COLUMNS} for r in rows]


def _failed_row(exc: Exception) -> dict:
    msg = f"{type(exc).__name__}: {exc}".replace(",", ";").replace("\n", " ")
    return {
        "test_accuracy": "",
        "false_positives": "",
        "false_negatives": "",
        "n_selected": "",
        "chosen_k": "",
        "error": msg,
    }


def _run_task(args):
    return run_replication(*args)


def run_experiment(
    specs: Sequence[ScenarioSpec],
    replications: int,
    approaches: Sequence[str],
    seed: int = 0,
    config: ExperimentConfig = ExperimentConfig(),
    threads: Optional[int] = None,
) -> List[dict]:
    """Replications of every scenario; rows sorted by (scenario order,
    replication, approach order) regardless of completion order."""
    if replications < 1:
        raise ValueError("replications must be at least 1")
    approaches = _ordered(approaches)
    tasks = [(spec, r, approaches, seed, config) for spec in specs for r in range(replications)]
    threads = threads or os.cpu_count() or 1
    if threads == 1 or len(tasks) == 1:
        results = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(threads, len(tasks))) as pool:
            results = list(pool.map(_run_task, tasks))
    return [row for chunk in results for row in chunk]


def run_scenario(
    spec: ScenarioSpec,
    replications: int,
    approaches: Sequence[str],
    seed: int = 0,
    config: ExperimentConfig = ExperimentConfig(),
    threads: Optional[int] = None,
) -> List[dict]:
    return run_experiment([spec], replications, approaches, seed, config, threads)


# --------------------------------------------------------------------------
# nested cross-validation on real data
# --------------------------------------------------------------------------

NESTED_COLUMNS = ["outer_fold", "approach", "test_accuracy", "n_selected", "chosen_k"]


def run_nested_cv(
    data: Dataset,
    approach: str,
    outer_folds: int = 10,
    inner_folds: int = 10,
    seed: int = 0,
    config: ExperimentConfig = ExperimentConfig(similarity="correlation"),
) -> List[dict]:
    """Held-out accuracy and model size per outer fold.

    Outer splits and the inner splits of every outer fold depend only on
    ``seed``, so different approaches see identical partitions.
    """
    if approach not in APPROACHES or approach == "truth":
        raise ValueError(f"approach {approach!r} not available for real data")
    if outer_folds < 2 or inner_folds < 2:
        raise ValueError("need at least two outer and two inner folds")
    outer = make_cv_splits(data.n, outer_folds, sub_seed(seed, 0))
    rows = []
    for i in range(outer.n_folds):
        train_idx, test_idx = outer.train_test(i)
        train, test = data.subset(train_idx), data.subset(test_idx)
        inner = make_cv_splits(train.n, inner_folds, sub_seed(seed, 1, i))
        fold_seed = sub_seed(seed, 2, i)
        chosen = tune_approaches(train, [approach], inner, replace(config, similarity="correlation"), fold_seed)[approach]
        model = build_final_model(train, approach, chosen, None, config.solver)
        rows.append(
            {
                "outer_fold": i,
                "approach": approach,
                "test_accuracy": accuracy(model, test),
                "n_selected": model.k,
                "chosen_k": _chosen_k(approach, chosen, train, model),
            }
        )
    return rows
