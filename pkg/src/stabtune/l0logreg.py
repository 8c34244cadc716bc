"""Best-subset (L0-constrained) logistic regression.

The support of size ``k`` is found by greedy forward selection followed by a
single-feature swap local search. Candidate additions are ranked with a
score-test approximation of the objective decrease and the best ``n_verify``
of them are refitted exactly, so neighbourhoods with at most ``n_verify``
members are searched exhaustively.

All fitting happens on standardized columns with a small ridge term; the
objective minimised for a support ``S`` is::

    sum_i [log(1 + exp(eta_i)) - y_i * eta_i] + ridge / 2 * ||beta||^2

with ``eta = beta_0 + Z_S beta_S`` on the standardized design ``Z``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

import numpy as np
from scipy.special import expit

from ._kernels import newton_batch

__all__ = [
    "Dataset",
    "SparseModel",
    "SolverOptions",
    "DegenerateDesignError",
    "SupportTooLargeError",
    "fit_logistic",
    "fit_l0",
    "fit_l0_path",
    "fit_l0_exhaustive",
    "predict_class",
    "accuracy",
    "logistic_objective",
]


class DegenerateDesignError(RuntimeError):
    """The weighted normal equations could not be solved."""


class SupportTooLargeError(ValueError):
    """Requested support size exceeds what the data can identify."""


@dataclass
class Dataset:
    """Numeric design matrix ``x`` (n x p) with binary labels ``y``."""

    x: np.ndarray
    y: np.ndarray
    feature_names: Optional[List[str]] = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y)
        if self.x.ndim != 2:
            raise ValueError("x must be a 2-d array")
        n, p = self.x.shape
        if n < 1 or p < 1:
            raise ValueError("dataset needs at least one row and one column")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("x contains non-finite entries")
        if self.y.shape != (n,):
            raise ValueError("y must have one label per row")
        if not np.all((self.y == 0) | (self.y == 1)):
            raise ValueError("labels must be 0 or 1")
        self.y = self.y.astype(np.int64)
        if self.feature_names is not None:
            self.feature_names = [str(f) for f in self.feature_names]
            if len(self.feature_names) != p:
                raise ValueError("feature_names must have length p")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.x[rows], self.y[rows], self.feature_names)


@dataclass
class SparseModel:
    """Logistic model on a subset of features, coefficients on the
    original feature scale."""

    support: Tuple[int, ...]
    coefficients: np.ndarray
    intercept: float
    converged: bool
    loss: float = float("nan")
    n_iter: int = 0

    def __post_init__(self):
        self.support = tuple(int(i) for i in self.support)
        self.coefficients = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if len(self.support) != self.coefficients.size:
            raise ValueError("one coefficient per support feature required")
        if len(set(self.support)) != len(self.support):
            raise ValueError("support indices must be unique")
        if not np.all(np.isfinite(self.coefficients)) or not math.isfinite(self.intercept):
            raise ValueError("model parameters must be finite")

    @property
    def k(self) -> int:
        return len(self.support)

    def decision_function(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if not self.support:
            return np.full(x.shape[0], self.intercept)
        return self.intercept + x[:, list(self.support)] @ self.coefficients

    def predict(self, x) -> np.ndarray:
        return (self.decision_function(x) >= 0.0).astype(np.int64)


@dataclass(frozen=True)
class SolverOptions:
    """Numerical settings for the logistic fits and the subset search.

    ``tol_swap`` is relative to the current objective value.
    """

    ridge: float = 1e-6
    max_iter: int = 50
    tol_grad: float = 1e-6
    tol_swap: float = 1e-8
    n_verify: int = 24
    verify_chunk: int = 6
    max_swap_passes: int = 200


# --------------------------------------------------------------------------
# standardized design and batched Newton
# --------------------------------------------------------------------------


class _Design:
    """Standardized copy of a dataset used by every fit."""

    def __init__(self, data: Dataset, opts: SolverOptions):
        x = data.x
        self.mean = x.mean(axis=0)
        sd = x.std(axis=0)
        sd[sd <= 1e-12 * max(1.0, float(np.abs(x).max(initial=0.0)))] = 1.0
        self.scale = sd
        self.z = (x - self.mean) / sd
        self.z2 = self.z * self.z
        self.y = data.y.astype(float)
        self.n, self.p = x.shape
        self.opts = opts

    def columns(self, supports: np.ndarray) -> np.ndarray:
        """Design tensor (B, n, k + 1) with a leading intercept column."""
        b, k = supports.shape
        out = np.empty((b, self.n, k + 1))
        out[:, :, 0] = 1.0
        if k:
            out[:, :, 1:] = np.transpose(self.z[:, supports], (1, 0, 2))
        return out

    def to_model(self, support, beta, converged, loss, n_iter) -> SparseModel:
        support = np.asarray(support, dtype=np.int64)
        coef = beta[1:] / self.scale[support]
        intercept = float(beta[0] - coef @ self.mean[support])
        return SparseModel(tuple(support.tolist()), coef, intercept, bool(converged), float(loss), int(n_iter))


@dataclass
class _Fit:
    supports: np.ndarray  # (B, k)
    beta: np.ndarray  # (B, k + 1)
    loss: np.ndarray  # (B,)
    grad_norm: np.ndarray
    n_iter: np.ndarray
    converged: np.ndarray


def _newton(design: _Design, supports: np.ndarray, *starts: np.ndarray) -> _Fit:
    """Damped Newton (IRLS with ridge) for a batch of supports.

    Each of ``starts`` is a (B, k + 1) warm start; per fit the one with the
    lowest objective is used. Zeros when none is given.
    """
    opts = design.opts
    supports = np.asarray(supports, dtype=np.int64)
    if supports.ndim == 1:
        supports = supports[None, :]
    b, k = supports.shape
    if starts:
        init = np.stack([np.asarray(s, dtype=float).reshape(b, k + 1) for s in starts])
    else:
        init = np.zeros((1, b, k + 1))
    beta, loss, grad_norm, n_iter, separated, degenerate = newton_batch(
        design.z, design.y, supports, init, opts.ridge, opts.max_iter, opts.tol_grad
    )
    if degenerate or not np.all(np.isfinite(beta)):
        raise DegenerateDesignError("degenerate design")
    converged = (grad_norm <= opts.tol_grad) & ~separated
    return _Fit(supports, beta, loss, grad_norm, n_iter, converged)


def _pick_best(losses: np.ndarray, supports: np.ndarray) -> int:
    """Index of the smallest loss; near-ties go to the lexicographically
    smallest support."""
    best = float(np.min(losses))
    tie = np.flatnonzero(losses <= best + 1e-12 * max(1.0, abs(best)))
    if tie.size == 1:
        return int(tie[0])
    return int(min(tie, key=lambda i: tuple(supports[i].tolist())))


def _rank(approx: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Finite positions of ``approx`` in increasing order; ties broken by
    the rows of ``keys`` compared lexicographically."""
    finite = np.flatnonzero(np.isfinite(approx))
    order = np.lexsort(tuple(keys[finite].T[::-1]) + (approx[finite],))
    return finite[order]


class _State:
    """A fitted support plus the local quadratic model used for screening.

    For a candidate feature ``l`` outside the support, ``g[l]`` is the
    negative objective gradient of its (zero) coefficient, ``v[l]`` the
    Schur complement of its curvature, and ``u[l]`` = H^-1 X_S' W z_l.
    """

    def __init__(self, design: _Design, support: np.ndarray, beta: np.ndarray, loss: float):
        self.support = np.asarray(support, dtype=np.int64)
        self.beta = np.asarray(beta, dtype=float)
        self.loss = float(loss)
        ridge = design.opts.ridge
        xs = design.columns(self.support[None, :])[0]
        mu = expit(xs @ self.beta)
        w = mu * (1.0 - mu)
        wx = xs * w[:, None]
        hess = xs.T @ wx + ridge * np.eye(xs.shape[1])
        try:
            self.cov = np.linalg.inv(hess)
        except np.linalg.LinAlgError as exc:
            raise DegenerateDesignError("degenerate design") from exc
        cross = design.z.T @ wx
        self.u = cross @ self.cov
        self.g = (design.y - mu) @ design.z
        v = w @ design.z2 + ridge - (self.u * cross).sum(axis=1)
        self.v = np.maximum(v, 1e-12)

    @classmethod
    def from_fit(cls, design: _Design, fit: _Fit, i: int) -> "_State":
        return cls(design, fit.supports[i], fit.beta[i], fit.loss[i])


def _with_features(support: np.ndarray, coefs: np.ndarray, new: np.ndarray, new_coefs: np.ndarray, drop=None):
    """Batch version of adding feature ``new[i]`` (coefficient
    ``new_coefs[i]``) to ``support`` and, if given, removing support position
    ``drop[i]``. ``coefs`` holds one intercept-first vector per row. Returns
    sorted supports and matching coefficient rows."""
    m, k = new.size, support.size
    feats = np.concatenate([np.broadcast_to(support, (m, k)), new[:, None]], axis=1)
    vals = np.concatenate([coefs[:, 1:], new_coefs[:, None]], axis=1)
    if drop is not None:
        keep = np.ones((m, k + 1), dtype=bool)
        keep[np.arange(m), drop] = False
        feats = feats[keep].reshape(m, k)
        vals = vals[keep].reshape(m, k)
    order = np.argsort(feats, axis=1, kind="stable")
    feats = np.take_along_axis(feats, order, axis=1)
    vals = np.take_along_axis(vals, order, axis=1)
    return feats, np.concatenate([coefs[:, :1], vals], axis=1)


def _forward_step(design: _Design, state: _State) -> _State:
    opts = design.opts
    approx = state.loss - 0.5 * state.g**2 / state.v
    approx[state.support] = np.inf
    cand = _rank(approx, np.arange(design.p)[:, None])[: opts.n_verify]
    m = cand.size
    step = state.g[cand] / state.v[cand]
    base = np.broadcast_to(state.beta, (m, state.beta.size))
    sups, plain = _with_features(state.support, base, cand, np.zeros(m))
    _, shifted = _with_features(state.support, base - state.u[cand] * step[:, None], cand, step)
    fit = _newton(design, sups, plain, shifted)
    return _State.from_fit(design, fit, _pick_best(fit.loss, fit.supports))


def _swap_pass(design: _Design, state: _State) -> Optional[_State]:
    """One swap step; None if no swap improves the objective.

    Swaps (remove support position j, add feature l) are ranked by the
    quadratic model and refitted exactly in chunks of ``verify_chunk``; the
    first chunk containing an improving swap supplies the move.
    """
    opts = design.opts
    k = state.support.size
    p = design.p
    if k == 0 or k == p:
        return None
    g, v, u, cov, beta = state.g, state.v, state.u, state.cov, state.beta
    c = np.arange(1, k + 1)
    # quadratic-model objective after forcing coordinate c to zero and freeing l
    uc = u[:, c].T  # (k, p)
    diag = cov[c, c][:, None] + uc**2 / v
    approx = state.loss - 0.5 * g**2 / v + 0.5 * (beta[c][:, None] - uc * g / v) ** 2 / diag
    approx[:, state.support] = np.inf
    jj, ll = np.meshgrid(np.arange(k), np.arange(p), indexing="ij")
    keys = np.stack([state.support[jj].ravel(), ll.ravel()], axis=1)
    ranked = _rank(approx.ravel(), keys)[: opts.n_verify]
    for lo in range(0, ranked.size, opts.verify_chunk):
        j, l = np.divmod(ranked[lo : lo + opts.verify_chunk], p)
        m = j.size
        cj = j + 1
        rows = np.arange(m)
        base = np.broadcast_to(beta, (m, k + 1))
        sups, plain = _with_features(state.support, base, l, np.zeros(m), drop=j)
        # constrained minimiser of the quadratic model
        gv = (g[l] / v[l])[:, None]
        ul = u[l]
        ucj = ul[rows, cj][:, None]
        dstar = np.concatenate([-ul * gv, gv], axis=1)
        col = np.concatenate([cov[:, cj].T + ul * ucj / v[l][:, None], -ucj / v[l][:, None]], axis=1)
        delta = dstar + (-beta[cj] - dstar[rows, cj])[:, None] * col / col[rows, cj][:, None]
        ext = np.concatenate([base, np.zeros((m, 1))], axis=1) + delta
        _, quad = _with_features(state.support, ext[:, :-1], l, ext[:, -1], drop=j)
        fit = _newton(design, sups, plain, quad)
        best = _pick_best(fit.loss, fit.supports)
        if state.loss - fit.loss[best] > opts.tol_swap * abs(state.loss):
            return _State.from_fit(design, fit, best)
    return None


def _local_search(design: _Design, state: _State) -> _State:
    for _ in range(design.opts.max_swap_passes):
        nxt = _swap_pass(design, state)
        if nxt is None:
            break
        state = nxt
    return state


def _refit(design: _Design, support: np.ndarray) -> SparseModel:
    fit = _newton(design, np.asarray(support, dtype=np.int64)[None, :])
    return design.to_model(support, fit.beta[0], fit.converged[0], fit.loss[0], fit.n_iter[0])


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------


def _check_support(support: Iterable[int], p: int) -> np.ndarray:
    s = sorted({int(i) for i in support})
    if s and (s[0] < 0 or s[-1] >= p):
        raise ValueError(f"support index out of range for p={p}")
    return np.array(s, dtype=np.int64)


def fit_logistic(data: Dataset, support: Iterable[int], opts: SolverOptions = SolverOptions()) -> SparseModel:
    """Ridge-stabilised maximum-likelihood logistic fit on ``support``.

    ``converged`` is False when the iteration cap is hit or when the fitted
    predictor separates the training labels perfectly (the unpenalised
    estimate does not exist then).
    """
    s = _check_support(support, data.p)
    if s.size >= data.n:
        raise SupportTooLargeError(f"support of size {s.size} needs more than {data.n} rows")
    return _refit(_Design(data, opts), s)


def fit_l0_path(data: Dataset, k_max: int, opts: SolverOptions = SolverOptions()) -> List[SparseModel]:
    """Models for every support size ``0..k_max``.

    The size-k search starts from the size-(k-1) solution extended by the
    best forward addition, so training loss never increases along the path.
    Entry ``k`` equals ``fit_l0(data, k, opts)``.
    """
    limit = min(data.p, data.n - 2)
    if k_max < 0:
        raise ValueError("k must be non-negative")
    if k_max > limit:
        raise SupportTooLargeError(f"support too large: k={k_max} exceeds min(p, n - 2) = {limit}")
    design = _Design(data, opts)
    state = _State.from_fit(design, _newton(design, np.empty((1, 0), dtype=np.int64)), 0)
    models = [_refit(design, state.support)]
    for _ in range(k_max):
        state = _local_search(design, _forward_step(design, state))
        models.append(_refit(design, state.support))
    return models


def fit_l0(data: Dataset, k: int, opts: SolverOptions = SolverOptions()) -> SparseModel:
    """Logistic regression restricted to at most ``k`` features."""
    return fit_l0_path(data, k, opts)[k]


def fit_l0_exhaustive(
    data: Dataset, k: int, opts: SolverOptions = SolverOptions(), budget: int = 1_000_000
) -> SparseModel:
    """Exact best subset of size <= k by enumeration (test oracle)."""
    if k < 0:
        raise ValueError("k must be non-negative")
    limit = min(data.p, data.n - 2)
    if k > limit:
        raise SupportTooLargeError(f"support too large: k={k} exceeds min(p, n - 2) = {limit}")
    total = sum(math.comb(data.p, s) for s in range(k + 1))
    if total > budget:
        raise ValueError(f"combinatorial budget exceeded: {total} supports > {budget}")
    design = _Design(data, opts)
    best_loss, best_support = math.inf, ()
    for size in range(k + 1):
        combos = itertools.combinations(range(data.p), size)
        while True:
            chunk = list(itertools.islice(combos, 512))
            if not chunk:
                break
            sups = np.array(chunk, dtype=np.int64).reshape(len(chunk), size)
            fit = _newton(design, sups)
            i = _pick_best(fit.loss, sups)
            cand = float(fit.loss[i])
            tol = 1e-12 * max(1.0, abs(best_loss) if math.isfinite(best_loss) else 1.0)
            if cand < best_loss - tol or (abs(cand - best_loss) <= tol and tuple(chunk[i]) < best_support):
                best_loss, best_support = cand, tuple(chunk[i])
    return _refit(design, np.array(best_support, dtype=np.int64))


def predict_class(model: SparseModel, x_row) -> int:
    """Class label for one observation; probability 0.5 maps to 1."""
    x_row = np.asarray(x_row, dtype=float)
    if not np.all(np.isfinite(x_row)):
        raise ValueError("input must be finite")
    return int(model.predict(x_row)[0])


def accuracy(model: SparseModel, data: Dataset) -> float:
    if data.n == 0:
        raise ValueError("empty dataset")
    return float(np.mean(model.predict(data.x) == data.y))


def logistic_objective(model: SparseModel, data: Dataset, opts: SolverOptions = SolverOptions()) -> Tuple[float, np.ndarray]:
    """Penalised objective and its gradient for ``model`` on the
    standardized scale of ``data``; gradient order is (intercept, support)."""
    design = _Design(data, opts)
    s = np.asarray(model.support, dtype=np.int64)
    beta = np.concatenate([[model.intercept + model.coefficients @ design.mean[s]], model.coefficients * design.scale[s]])
    xb = design.columns(s[None, :])[0]
    eta = xb @ beta
    obj = float((np.logaddexp(0.0, eta) - design.y * eta).sum() + 0.5 * opts.ridge * beta @ beta)
    grad = xb.T @ (expit(eta) - design.y) + opts.ridge * beta
    return obj, grad
