"""Command-line interface.

Subcommands: ``simulate``, ``tune``, ``stabsel``, ``experiment``,
``nested-cv`` and ``measures``. Settings come from an optional JSON file
(``--config``) overridden by command-line flags. Exit codes: 0 success,
2 usage or configuration error, 3 runtime failure without output.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .evaluation import (
    APPROACHES,
    GRID_APPROACHES,
    NESTED_COLUMNS,
    RESULT_COLUMNS,
    ExperimentConfig,
    _measure,
    run_experiment,
    run_nested_cv,
)
from .l0logreg import Dataset
from .simdata import GRID_BLOCK_SIZES, GRID_N, GroundTruth, ScenarioSpec, sample_dataset, scenario_grid
from .stability import BlockSimilarity, as_feature_set, StabilityError, similarity_from_data, sma, smu
from .stabsel import selection_frequencies, stable_set, sub_seed, tune_stabsel
from .tuning import SelectionParams, epsilon_constraint_select, grid_tune, make_cv_splits, single_criteria_select

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3

COMMANDS = ("simulate", "tune", "stabsel", "experiment", "nested-cv", "measures")


class ConfigError(ValueError):
    """Invalid configuration or unusable input files (exit code 2)."""


@dataclass
class RunConfig:
    """Settings for one CLI invocation; round-trips through JSON."""

    command: str = "experiment"
    seed: int = 0
    threads: Optional[int] = None
    out: str = "."
    desk_scale: bool = False
    # simulate
    n: int = GRID_N
    p: int = 200
    block_size: int = 1
    within_corr: float = 0.95
    between_corr: float = 0.1
    n_generating: int = 5
    allow_partial_block: bool = False
    # input data
    data: Optional[str] = None
    label: str = "y"
    truth: Optional[str] = None
    # tune / nested-cv
    approach: str = "adj"
    approaches: List[str] = field(default_factory=lambda: list(APPROACHES))
    k_grid: Optional[List[int]] = None
    outer_folds: int = 10
    inner_folds: int = 10
    # experiment
    p_values: Optional[List[int]] = None
    block_sizes: Optional[List[int]] = None
    replications: int = 10
    # measures
    sets: Optional[str] = None
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if isinstance(d.get("experiment"), dict):
            try:
                d["experiment"] = ExperimentConfig.from_dict(d["experiment"])
            except TypeError as exc:
                raise ConfigError(f"bad experiment settings: {exc}") from exc
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be at least 1")
        ex = self.experiment
        if ex.folds < 2:
            raise ConfigError("folds must be at least 2")
        if ex.k_max < 0:
            raise ConfigError("k_max must be non-negative")
        if ex.acc_const < 0 or ex.stab_const < 0:
            raise ConfigError("acc_const and stab_const must be non-negative")
        if not 0.0 <= ex.theta <= 1.0:
            raise ConfigError("theta must lie in [0, 1]")
        if ex.mc_samples < 1 or ex.n_points < 1:
            raise ConfigError("mc_samples and n_points must be positive")
        if ex.n_subsamples < 2 or ex.n_subsamples % 2:
            raise ConfigError("n_subsamples must be a positive even number")
        if ex.similarity not in ("block", "correlation"):
            raise ConfigError("similarity must be 'block' or 'correlation'")
        if self.k_grid is not None and (not self.k_grid or min(self.k_grid) < 0):
            raise ConfigError("k_grid must be a non-empty list of non-negative integers")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if self.outer_folds < 2 or self.inner_folds < 2:
            raise ConfigError("outer_folds and inner_folds must be at least 2")
        bad = set(self.approaches) - set(APPROACHES)
        if bad:
            raise ConfigError(f"unknown approaches: {sorted(bad)}")
        if self.command == "tune" and self.approach not in GRID_APPROACHES:
            raise ConfigError(f"tune needs approach in {GRID_APPROACHES}, got {self.approach!r}")
        if self.command == "nested-cv" and "truth" in self.approaches:
            raise ConfigError("truth is not available for real data")
        if self.command in ("tune", "stabsel", "nested-cv") and not self.data:
            raise ConfigError(f"{self.command} needs --data")
        if self.command == "measures" and not self.sets:
            raise ConfigError("measures needs --sets")

    def scenario(self) -> ScenarioSpec:
        try:
            return ScenarioSpec(
                self.n, self.p, self.block_size, self.within_corr, self.between_corr, self.n_generating, self.seed,
                self.allow_partial_block,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


# --------------------------------------------------------------------------
# file helpers
# --------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_dataset(path: Path, data: Dataset, label: str = "y") -> None:
    names = data.feature_names or [f"x{j}" for j in range(data.p)]
    rows = ([*map(float, x), int(y)] for x, y in zip(data.x, data.y))
    write_csv(path, [*names, label], rows)


def read_dataset(path, label: str = "y") -> Dataset:
    """Numeric CSV with a header row; ``label`` names the 0/1 column."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"data file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ConfigError(f"{path}: need a header and at least one data row")
    header, body = rows[0], rows[1:]
    if label not in header:
        raise ConfigError(f"{path}: label column {label!r} not found")
    if any(len(r) != len(header) for r in body):
        raise ConfigError(f"{path}: ragged rows")
    try:
        values = np.array(body, dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric entry ({exc})") from exc
    j = header.index(label)
    feats = [i for i in range(len(header)) if i != j]
    try:
        return Dataset(values[:, feats], values[:, j], [header[i] for i in feats])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def truth_path_for(data_path) -> Path:
    p = Path(data_path)
    return p.with_name(p.stem + "_truth.json")


def read_truth(path) -> GroundTruth:
    try:
        return GroundTruth.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read ground truth {path}: {exc}") from exc


def _find_truth(cfg: RunConfig) -> Optional[GroundTruth]:
    if cfg.truth:
        return read_truth(cfg.truth)
    side = truth_path_for(cfg.data)
    return read_truth(side) if side.is_file() else None


def read_feature_sets(path) -> List[List[int]]:
    """One feature set per line, indices separated by commas or spaces;
    an empty line is an empty set. JSON lists of lists are also accepted."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"feature-set file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if text.lstrip().startswith("["):
            return [[int(i) for i in s] for s in json.loads(text)]
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines = lines[:-1]
        return [[int(t) for t in line.replace(",", " ").split()] for line in lines]
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: malformed feature sets ({exc})") from exc


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> List[Path]:
    spec = cfg.scenario()
    data, truth = sample_dataset(spec)
    out = Path(cfg.out)
    stem = f"{spec.scenario_id}_s{spec.seed}"
    data_path = out / f"{stem}.csv"
    write_dataset(data_path, data, cfg.label)
    truth_path = truth_path_for(data_path)
    write_json(truth_path, truth.to_dict())
    return [data_path, truth_path]


def cmd_tune(cfg: RunConfig) -> List[Path]:
    data = read_dataset(cfg.data, cfg.label)
    truth = _find_truth(cfg)
    ex = cfg.experiment
    splits = make_cv_splits(data.n, ex.folds, sub_seed(cfg.seed, 1))
    k_grid = cfg.k_grid if cfg.k_grid is not None else list(range(0, ex.k_max + 1))
    measure = None
    if cfg.approach != "acc":
        kind = "adjusted" if cfg.approach == "adj" else "unadjusted"
        block = truth.block_size if truth is not None else None
        measure = _measure(kind, ex, block, sub_seed(cfg.seed, 11))
    configs = grid_tune(data, k_grid, splits, measure, ex.solver)
    if not configs:
        raise RuntimeError("every grid point failed")
    select_seed = sub_seed(cfg.seed, 10)
    if cfg.approach == "acc":
        best = single_criteria_select(configs, select_seed)
    else:
        best = epsilon_constraint_select(configs, SelectionParams(ex.acc_const, ex.stab_const, select_seed))
    out = Path(cfg.out)
    rows = [
        (c.k, c.mean_accuracy, c.stability, ";".join(str(len(s)) for s in c.fold_feature_sets)) for c in configs
    ]
    write_csv(out / "tuning.csv", ["k", "mean_accuracy", "stability", "fold_support_sizes"], rows)
    chosen = {"approach": cfg.approach, "k": best.k, "mean_accuracy": best.mean_accuracy}
    if cfg.approach != "acc":
        chosen["stability"] = best.stability
        chosen["similarity"] = measure.similarity if measure.kind == "adjusted" else None
    write_json(out / "chosen.json", chosen)
    return [out / "tuning.csv", out / "chosen.json"]


def cmd_stabsel(cfg: RunConfig) -> List[Path]:
    data = read_dataset(cfg.data, cfg.label)
    ex = cfg.experiment
    splits = make_cv_splits(data.n, ex.folds, sub_seed(cfg.seed, 1))
    params, perf = tune_stabsel(data, splits, ex.n_points, sub_seed(cfg.seed, 12), ex.solver, ex.n_subsamples)
    freqs = selection_frequencies(data, params, ex.solver)
    names = data.feature_names or [f"x{j}" for j in range(data.p)]
    out = Path(cfg.out)
    write_csv(out / "frequencies.csv", ["feature", "frequency"], zip(names, freqs.freq))
    chosen = {
        "cutoff": params.cutoff,
        "pfer": params.pfer,
        "q": freqs.q_used,
        "n_subsamples": params.n_subsamples,
        "seed": params.seed,
        "mean_accuracy": perf.mean_accuracy,
        "stable_set": [names[i] for i in sorted(stable_set(freqs, params.cutoff))],
    }
    write_json(out / "chosen.json", chosen)
    return [out / "frequencies.csv", out / "chosen.json"]


def experiment_specs(cfg: RunConfig) -> List[ScenarioSpec]:
    specs = scenario_grid(cfg.desk_scale, cfg.seed)
    if cfg.p_values is not None:
        specs = [s for s in specs if s.p in cfg.p_values]
    if cfg.block_sizes is not None:
        bad = set(cfg.block_sizes) - set(GRID_BLOCK_SIZES)
        if bad:
            raise ConfigError(f"block sizes {sorted(bad)} not in the scenario grid {GRID_BLOCK_SIZES}")
        specs = [s for s in specs if s.block_size in cfg.block_sizes]
    if not specs:
        raise ConfigError("scenario filter selects no scenario")
    return specs


def cmd_experiment(cfg: RunConfig) -> List[Path]:
    specs = experiment_specs(cfg)
    rows = run_experiment(specs, cfg.replications, cfg.approaches, cfg.seed, cfg.experiment, cfg.threads)
    if not rows or all(r["error"] for r in rows):
        raise RuntimeError("no replication produced results")
    path = Path(cfg.out) / "results.csv"
    write_csv(path, RESULT_COLUMNS, [[r[c] for c in RESULT_COLUMNS] for r in rows])
    return [path]


def cmd_nested_cv(cfg: RunConfig) -> List[Path]:
    data = read_dataset(cfg.data, cfg.label)
    rows = []
    for a in cfg.approaches:
        rows += run_nested_cv(data, a, cfg.outer_folds, cfg.inner_folds, cfg.seed, cfg.experiment)
    path = Path(cfg.out) / "nested_cv.csv"
    write_csv(path, NESTED_COLUMNS, [[r[c] for c in NESTED_COLUMNS] for r in rows])
    return [path]


def cmd_measures(cfg: RunConfig) -> List[Path]:
    sets = read_feature_sets(cfg.sets)
    ex = cfg.experiment
    truth = read_truth(cfg.truth) if cfg.truth else None
    if cfg.data:
        data = read_dataset(cfg.data, cfg.label)
        p, sim = data.p, similarity_from_data(data.x, ex.theta)
    else:
        p = cfg.p
        sim = BlockSimilarity(p, truth.block_size if truth else 1, ex.theta)
    try:
        sets = [as_feature_set(s, p) for s in sets]
    except ValueError as exc:
        raise ConfigError(f"{cfg.sets}: {exc}") from exc
    result = {}
    for name, fn in (("smu", lambda: smu(sets, p)), ("sma", lambda: sma(sets, sim, ex.mc_samples, cfg.seed))):
        try:
            r = fn()
            result[name] = r.score
            result[f"{name}_skipped_pairs"] = r.n_skipped
        except StabilityError as exc:
            result[name] = None
            result[f"{name}_error"] = str(exc)
    path = Path(cfg.out) / "measures.json"
    write_json(path, result)
    print(json.dumps(result, sort_keys=True))
    return [path]


_HANDLERS = {
    "simulate": cmd_simulate,
    "tune": cmd_tune,
    "stabsel": cmd_stabsel,
    "experiment": cmd_experiment,
    "nested-cv": cmd_nested_cv,
    "measures": cmd_measures,
}


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _int_list(text: str) -> List[int]:
    try:
        return [int(t) for t in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _str_list(text: str) -> List[str]:
    return [t for t in text.replace(",", " ").split() if t]


def _k_range(text: str) -> List[int]:
    # "0..5" or "0,2,4"
    if ".." in text:
        lo, hi = text.split("..", 1)
        try:
            return list(range(int(lo), int(hi) + 1))
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad range {text!r}") from exc
    return _int_list(text)


# flag -> (RunConfig field, type); experiment settings are prefixed "experiment."
_FLAGS = {
    "simulate": ["n", "p", "block_size", "within_corr", "between_corr", "n_generating", "allow_partial_block",
                 "label"],
    "tune": ["data", "label", "truth", "approach", "k_grid", "experiment.folds", "experiment.k_max",
             "experiment.acc_const", "experiment.stab_const", "experiment.theta", "experiment.mc_samples"],
    "stabsel": ["data", "label", "experiment.folds", "experiment.n_points", "experiment.n_subsamples"],
    "experiment": ["p_values", "block_sizes", "replications", "approaches", "experiment.folds", "experiment.k_max",
                   "experiment.n_points", "experiment.n_subsamples", "experiment.mc_samples",
                   "experiment.record_timing"],
    "nested-cv": ["data", "label", "approaches", "outer_folds", "inner_folds", "experiment.k_max",
                  "experiment.n_points", "experiment.n_subsamples"],
    "measures": ["sets", "p", "data", "label", "truth", "experiment.theta", "experiment.mc_samples"],
}

_TYPES = {
    "n": int, "p": int, "block_size": int, "within_corr": float, "between_corr": float, "n_generating": int,
    "label": str, "data": str, "truth": str, "approach": str, "k_grid": _k_range, "p_values": _int_list,
    "block_sizes": _int_list, "replications": int, "approaches": _str_list, "outer_folds": int,
    "inner_folds": int, "sets": str, "folds": int, "k_max": int, "acc_const": float, "stab_const": float,
    "theta": float, "mc_samples": int, "n_points": int, "n_subsamples": int,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON RunConfig file; flags override its values")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--desk-scale", action="store_true", default=None, help="p = 200 scenarios only")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="stabtune", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd, parents=[common])
        for key in _FLAGS[cmd]:
            name = key.split(".")[-1]
            flag = "--" + name.replace("_", "-")
            if name in ("record_timing", "allow_partial_block"):
                sp.add_argument(flag, dest=key, action="store_true", default=None)
            else:
                sp.add_argument(flag, dest=key, type=_TYPES[name])
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        cfg = RunConfig.from_json(text)
    else:
        cfg = RunConfig()
    cfg = replace(cfg, command=args.command)
    for key in ("seed", "threads", "out", "desk_scale"):
        if getattr(args, key) is not None:
            cfg = replace(cfg, **{key: getattr(args, key)})
    ex_updates = {}
    for key, value in vars(args).items():
        if value is None or key in ("config", "command", "seed", "threads", "out", "desk_scale", "verbose"):
            continue
        if key.startswith("experiment."):
            ex_updates[key.split(".", 1)[1]] = value
        else:
            cfg = replace(cfg, **{key: value})
    if ex_updates:
        cfg = replace(cfg, experiment=replace(cfg.experiment, **ex_updates))
    cfg.validate()
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        paths = _HANDLERS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out = Path(cfg.out)
    write_json(out / f"{cfg.command}_config.json", cfg.to_dict())
    for p in paths:
        log.info("wrote %s", p)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
