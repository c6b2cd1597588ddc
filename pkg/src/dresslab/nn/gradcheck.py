"""Centered finite-difference checks against the tape gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def numeric_gradient(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Centered-difference gradient of scalar fn w.r.t. every element of x.

    fn is called with a plain ndarray and must return a python float.
    """
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = fn(x)
        flat[i] = orig - h
        f_minus = fn(x)
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray,
                  atol: float = 1e-7) -> float:
    """Worst relative error, ignoring pairs that agree within atol."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    mask = diff > atol
    if not mask.any():
        return 0.0
    return float((diff[mask] / scale[mask]).max())


def check_gradient(make_loss, x0: np.ndarray, h: float = 1e-5) -> float:
    """Compare tape gradient w.r.t. x0 against centered differences.

    make_loss maps a Tensor to a scalar Tensor; the same builder is used
    for the analytic and the numeric side, so only the input varies.
    Returns the max relative error.
    """
    xt = Tensor(np.array(x0, dtype=np.float64), requires_grad=True)
    loss = make_loss(xt)
    loss.backward()
    analytic = xt.grad.copy()

    def scalar_fn(arr):
        return float(make_loss(Tensor(arr)).data)

    numeric = numeric_gradient(scalar_fn, x0, h=h)
    return max_rel_error(analytic, numeric)


def check_param_gradients(build_loss, store, h: float = 1e-5,
                          names=None) -> float:
    """Check tape gradients of store parameters against finite differences.

    build_loss() must rebuild the same scalar loss from the store's current
    parameter values. Returns the max relative error across all checked
    parameters (those with no gradient are compared against zero).
    """
    store.zero_grad()
    build_loss().backward()
    worst = 0.0
    for name, p in store.items():
        if names is not None and name not in names:
            continue
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)

        def fn(arr, p=p):
            old = p.data.copy()
            p.data[...] = arr
            val = float(build_loss().data)
            p.data[...] = old
            return val

        numeric = numeric_gradient(fn, p.data.copy(), h=h)
        worst = max(worst, max_rel_error(analytic, numeric))
    return worst
