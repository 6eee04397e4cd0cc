"""Pure-numpy kernels; reference semantics for the compiled ``_ckernels``.

Network convention: ``weights[l]`` has shape ``(fan_in, fan_out)``; every
layer but the last applies the logistic sigmoid; the last is affine.
Loss is ``mean((out - t)**2) + l2 * sum(||W||^2)`` in scaled units.
"""

from __future__ import annotations

import numpy as np

from .errors import DivergenceError


def savgol_valid(X: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    w = coeffs.size
    windows = np.lib.stride_tricks.sliding_window_view(X, w, axis=1)
    return windows @ coeffs


def sigmoid(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def forward_pass(weights, biases, X):
    """Return the list of layer outputs, starting with ``X`` itself."""
    acts = [X]
    last = len(weights) - 1
    for l, (W, b) in enumerate(zip(weights, biases)):
        z = acts[-1] @ W + b
        acts.append(z if l == last else sigmoid(z))
    return acts


def backprop(weights, biases, X, t, l2):
    """Loss, plain MSE and gradients (lists aligned with weights/biases)."""
    acts = forward_pass(weights, biases, X)
    n = X.shape[0]
    r = acts[-1][:, 0] - t
    mse = float(r @ r) / n
    penalty = sum(float(np.sum(W * W)) for W in weights)
    g = (2.0 / n) * r[:, None]
    gW = [None] * len(weights)
    gb = [None] * len(weights)
    for l in range(len(weights) - 1, -1, -1):
        gW[l] = acts[l].T @ g + 2.0 * l2 * weights[l]
        gb[l] = g.sum(axis=0)
        if l > 0:
            H = acts[l]
            g = (g @ weights[l].T) * H * (1.0 - H)
    return mse + l2 * penalty, mse, gW, gb


def train_full_batch(Xs, t, Xv, tv, weights, biases, lr, decay, max_epochs, patience, l2):
    """Full-batch gradient descent with best-validation snapshotting.

    Epoch ``e`` evaluates the parameters *before* its update, so the
    recorded train/validation RMSE (scaled units) and the snapshot refer to
    the same parameter state. Returns ``(weights, biases, train_rmse,
    val_rmse, best_epoch)`` with the histories trimmed to the epochs run.
    """
    W = [np.array(a, dtype=float, copy=True) for a in weights]
    b = [np.array(a, dtype=float, copy=True) for a in biases]
    hist_t = np.empty(max_epochs)
    hist_v = np.empty(max_epochs)
    best = np.inf
    best_epoch = -1
    best_W, best_b = None, None
    bad = 0
    e = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for e in range(max_epochs):
            loss, mse, gW, gb = backprop(W, b, Xs, t, l2)
            if not np.isfinite(loss):
                raise DivergenceError(f"training loss became non-finite at epoch {e}", epoch=e)
            rv = forward_pass(W, b, Xv)[-1][:, 0] - tv
            vr = float(np.sqrt(rv @ rv / rv.size))
            hist_t[e] = np.sqrt(mse)
            hist_v[e] = vr
            if vr < best:
                best, best_epoch, bad = vr, e, 0
                best_W = [a.copy() for a in W]
                best_b = [a.copy() for a in b]
            else:
                bad += 1
                if bad >= patience:
                    break
            for l in range(len(W)):
                W[l] -= lr * gW[l]
                b[l] -= lr * gb[l]
            lr *= decay
    if best_W is None:
        raise DivergenceError("validation error never became finite", epoch=e)
    n = e + 1
    return best_W, best_b, hist_t[:n].copy(), hist_v[:n].copy(), best_epoch
