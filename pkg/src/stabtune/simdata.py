"""Simulated classification data with block-correlated Gaussian features.

Features are drawn from N(0, Sigma) where Sigma has unit diagonal, a high
correlation inside blocks of consecutive features and a low correlation
between blocks. The label follows a logistic model on the sum of one feature
from each of the first ``n_generating`` blocks.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import List, Tuple

import numpy as np
from scipy.special import expit

from .l0logreg import Dataset

TEST_SEED_OFFSET = 1_000_003

GRID_N = 100
GRID_P = (200, 2_000, 10_000)
GRID_BLOCK_SIZES = (1, 5, 15, 25)


@dataclass(frozen=True)
class ScenarioSpec:
    n: int = GRID_N
    p: int = 200
    block_size: int = 1
    within_corr: float = 0.95
    between_corr: float = 0.1
    n_generating: int = 5
    seed: int = 0
    # when set, a trailing block holds the remaining p mod block_size features
    allow_partial_block: bool = False

    def __post_init__(self):
        if self.n < 1 or self.p < 1 or self.block_size < 1:
            raise ValueError("n, p and block_size must be positive")
        if self.p % self.block_size and not self.allow_partial_block:
            raise ValueError(f"p={self.p} is not divisible by block_size={self.block_size}")
        if self.n_blocks < self.n_generating:
            raise ValueError("need at least n_generating blocks")
        if self.n_generating < 0:
            raise ValueError("n_generating must be non-negative")
        if not 0.0 <= self.between_corr < self.within_corr <= 1.0:
            raise ValueError("need 0 <= between_corr < within_corr <= 1")

    @property
    def n_blocks(self) -> int:
        return -(-self.p // self.block_size)

    @property
    def scenario_id(self) -> str:
        return f"n{self.n}_p{self.p}_b{self.block_size}"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GroundTruth:
    generating_features: Tuple[int, ...]
    block_size: int

    def __post_init__(self):
        blocks = [block_of(f, self.block_size) for f in self.generating_features]
        if len(set(blocks)) != len(blocks):
            raise ValueError("generating features must lie in distinct blocks")

    @property
    def relevant_blocks(self) -> frozenset:
        return frozenset(block_of(f, self.block_size) for f in self.generating_features)

    def to_dict(self) -> dict:
        return {"generating_features": list(self.generating_features), "block_size": self.block_size}

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(tuple(int(i) for i in d["generating_features"]), int(d["block_size"]))


def block_of(feature: int, block_size: int) -> int:
    if feature < 0:
        raise ValueError("feature index must be non-negative")
    return feature // block_size


def _check_positive_definite(spec: ScenarioSpec) -> None:
    # Sigma = (1 - w) I + (w - b) B B' + b 1 1' with B the block indicator
    # matrix; the last two terms are PSD because 0 <= b < w, so Sigma is
    # PD when w < 1. For w == 1 it is singular as soon as a block has two
    # features and equals (1 - b) I + b 1 1' (PD) otherwise.
    if spec.within_corr < 1.0 or spec.block_size == 1:
        return
    raise ValueError("covariance parameters do not give a positive definite matrix")


def make_block_covariance(spec: ScenarioSpec) -> np.ndarray:
    """Block correlation matrix; raises if it is not positive definite."""
    _check_positive_definite(spec)
    blocks = np.arange(spec.p) // spec.block_size
    sigma = np.where(blocks[:, None] == blocks[None, :], spec.within_corr, spec.between_corr)
    np.fill_diagonal(sigma, 1.0)
    return sigma


def ground_truth(spec: ScenarioSpec) -> GroundTruth:
    """First feature of each of the first ``n_generating`` blocks."""
    return GroundTruth(tuple(i * spec.block_size for i in range(spec.n_generating)), spec.block_size)


def _block_factor_sample(spec: ScenarioSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw n rows from N(0, Sigma) through the factorisation Sigma = F F'
    with F = [sqrt(between) 1 | sqrt(within - between) B | sqrt(1 - within) I]
    (B the block indicator matrix): one shared factor, one factor per block
    and independent noise. Exact in distribution and O(n p) memory."""
    a2 = spec.between_corr
    c2 = spec.within_corr - spec.between_corr
    e2 = 1.0 - spec.within_corr
    g = rng.standard_normal((spec.n, 1))
    blocks = rng.standard_normal((spec.n, spec.n_blocks))
    e = rng.standard_normal((spec.n, spec.p))
    return np.sqrt(a2) * g + np.sqrt(c2) * blocks[:, np.arange(spec.p) // spec.block_size] + np.sqrt(e2) * e


def sample_dataset(spec: ScenarioSpec) -> Tuple[Dataset, GroundTruth]:
    """Training data for ``spec``; bit-identical for identical specs."""
    _check_positive_definite(spec)
    rng = np.random.default_rng(spec.seed)
    x = _block_factor_sample(spec, rng)
    truth = ground_truth(spec)
    eta = x[:, list(truth.generating_features)].sum(axis=1)
    y = (rng.random(spec.n) < expit(eta)).astype(np.int64)
    return Dataset(x, y, [f"x{j}" for j in range(spec.p)]), truth


def sample_test_dataset(spec: ScenarioSpec) -> Tuple[Dataset, GroundTruth]:
    """Independent data of the same size and with the same generating
    features, drawn with seed ``spec.seed + TEST_SEED_OFFSET``."""
    return sample_dataset(replace(spec, seed=spec.seed + TEST_SEED_OFFSET))


def scenario_grid(desk_scale: bool = False, seed: int = 0) -> List[ScenarioSpec]:
    """The twelve n = 100 scenarios; ``desk_scale`` keeps only p = 200.

    None of the p values is a multiple of 15, so those scenarios end with a
    shorter block.
    """
    ps = GRID_P[:1] if desk_scale else GRID_P
    return [
        ScenarioSpec(n=GRID_N, p=p, block_size=b, seed=seed, allow_partial_block=bool(p % b))
        for p in ps
        for b in GRID_BLOCK_SIZES
    ]
