"""Compiled inner loops for the logistic fits."""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _objective(x, y, beta, ridge):
    n, d = x.shape
    total = 0.0
    for i in range(n):
        eta = 0.0
        for j in range(d):
            eta += x[i, j] * beta[j]
        if eta > 0.0:
            total += eta + math.log1p(math.exp(-eta)) - y[i] * eta
        else:
            total += math.log1p(math.exp(eta)) - y[i] * eta
    pen = 0.0
    for j in range(d):
        pen += beta[j] * beta[j]
    return total + 0.5 * ridge * pen


@njit(cache=True)
def _cholesky_solve(a, b):
    """Solve a x = b for symmetric positive definite a; returns (x, ok)."""
    d = a.shape[0]
    low = np.zeros((d, d))
    for j in range(d):
        s = a[j, j]
        for k in range(j):
            s -= low[j, k] * low[j, k]
        if not s > 0.0:
            return b.copy(), False
        low[j, j] = math.sqrt(s)
        for i in range(j + 1, d):
            s = a[i, j]
            for k in range(j):
                s -= low[i, k] * low[j, k]
            low[i, j] = s / low[j, j]
    z = np.empty(d)
    for i in range(d):
        s = b[i]
        for k in range(i):
            s -= low[i, k] * z[k]
        z[i] = s / low[i, i]
    out = np.empty(d)
    for i in range(d - 1, -1, -1):
        s = z[i]
        for k in range(i + 1, d):
            s -= low[k, i] * out[k]
        out[i] = s / low[i, i]
    return out, True


@njit(cache=True)
def newton_batch(z, y, supports, starts, ridge, max_iter, tol_grad):
    """Damped Newton fits of the ridge-penalised logistic objective.

    ``starts`` has shape (S, B, k + 1): S alternative warm starts per fit;
    the one with the lowest objective is used. Returns beta, loss,
    gradient norm, iterations, separated flag and a degenerate flag.
    """
    n = z.shape[0]
    n_start, b, d = starts.shape
    beta_out = np.empty((b, d))
    loss_out = np.empty(b)
    gnorm_out = np.empty(b)
    iter_out = np.zeros(b, dtype=np.int64)
    sep_out = np.zeros(b, dtype=np.bool_)
    degenerate = False
    x = np.empty((n, d))
    eta = np.empty(n)
    resid = np.empty(n)
    w = np.empty(n)
    grad = np.empty(d)
    hess = np.empty((d, d))
    trial = np.empty(d)
    for c in range(b):
        for i in range(n):
            x[i, 0] = 1.0
            for j in range(1, d):
                x[i, j] = z[i, supports[c, j - 1]]
        beta = starts[0, c].copy()
        f = _objective(x, y, beta, ridge)
        for s in range(1, n_start):
            fs = _objective(x, y, starts[s, c], ridge)
            if fs < f:
                f = fs
                beta = starts[s, c].copy()
        it = 0
        gn = 0.0
        while True:
            for i in range(n):
                e = 0.0
                for j in range(d):
                    e += x[i, j] * beta[j]
                eta[i] = e
                if e >= 0.0:
                    q = math.exp(-e)
                    mu = 1.0 / (1.0 + q)
                else:
                    q = math.exp(e)
                    mu = q / (1.0 + q)
                resid[i] = mu - y[i]
                w[i] = mu * (1.0 - mu)
            gn = 0.0
            for j in range(d):
                g = ridge * beta[j]
                for i in range(n):
                    g += x[i, j] * resid[i]
                grad[j] = g
                gn += g * g
            gn = math.sqrt(gn)
            if gn <= tol_grad or it >= max_iter:
                break
            for j in range(d):
                for k in range(j, d):
                    h = 0.0
                    for i in range(n):
                        h += x[i, j] * w[i] * x[i, k]
                    hess[j, k] = h
                    hess[k, j] = h
                hess[j, j] += ridge
            step, ok = _cholesky_solve(hess, grad)
            if not ok:
                degenerate = True
                break
            slope = 0.0
            for j in range(d):
                slope += grad[j] * step[j]
            t = 1.0
            accepted = False
            f1 = f
            for _ in range(31):
                for j in range(d):
                    trial[j] = beta[j] - t * step[j]
                f1 = _objective(x, y, trial, ridge)
                if f1 <= f - 1e-4 * t * slope:
                    accepted = True
                    break
                t *= 0.5
            it += 1
            if accepted or f1 <= f:
                for j in range(d):
                    beta[j] = trial[j]
                f = f1
            else:
                break
        separated = True
        for i in range(n):
            if (2.0 * y[i] - 1.0) * eta[i] <= 0.0:
                separated = False
                break
        beta_out[c] = beta
        loss_out[c] = _objective(x, y, beta, ridge)
        gnorm_out[c] = gn
        iter_out[c] = it
        sep_out[c] = separated
    return beta_out, loss_out, gnorm_out, iter_out, sep_out, degenerate
