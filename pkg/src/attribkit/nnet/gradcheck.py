"""Central finite-difference check of analytic gradients."""

from __future__ import annotations

import numpy as np

from .functional import loss_and_grad


def batch_loss(model, X, Y, loss: str):
    logits, _ = model.forward(X)
    return loss_and_grad(logits, Y, model.output_activation, loss)[0]


def analytic_grads(model, X, Y, loss: str) -> dict:
    logits, cache = model.forward(X)
    _, dlogits = loss_and_grad(logits, Y, model.output_activation, loss)
    return model.backward(dlogits, cache)


def numeric_grads(model, X, Y, loss: str, eps: float = 1e-5, dtype=np.longdouble) -> dict:
    """Central differences ``(L(p+eps) - L(p-eps)) / 2eps`` for every parameter entry.

    Losses are evaluated in ``dtype`` (extended precision by default) so that
    rounding noise stays far below the analytic values being checked.  The
    model's parameters are restored afterwards.
    """
    saved = model.params
    model.params = {k: v.astype(dtype) for k, v in saved.items()}
    Xd = np.asarray(X).astype(dtype)
    Yd = np.asarray(Y).astype(dtype)
    step = dtype(eps)
    out = {}
    try:
        for name, p in model.params.items():
            flat = p.reshape(-1)
            num = np.empty(flat.size)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up = batch_loss(model, Xd, Yd, loss)
                flat[i] = orig - step
                down = batch_loss(model, Xd, Yd, loss)
                flat[i] = orig
                num[i] = float((up - down) / (2 * step))
            out[name] = num.reshape(p.shape)
    finally:
        model.params = saved
    return out


def grad_check(model, X, Y, loss: str, eps: float = 1e-5, detail: bool = False):
    """Max over parameters of ``|a - n| / max(|a|, |n|, 1e-8)``.

    ``a`` is the backpropagated gradient (float64), ``n`` the central
    difference.  With ``detail`` a per-tensor breakdown is returned as well.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    grads = analytic_grads(model, X, Y, loss)
    numeric = numeric_grads(model, X, Y, loss, eps)
    per_param = {}
    for name in model.params:
        a, n = grads[name], numeric[name]
        rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        per_param[name] = float(rel.max())
    worst = max(per_param.values())
    return (worst, per_param) if detail else worst
