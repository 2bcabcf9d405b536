"""Finite-difference verification of analytic gradients.

The check drives the model with a fixed random projection loss
L = sum(forward(x) * R): simple, dense in every output, and exactly
differentiable. Analytic gradients come from one backward pass with
dL/dy = R; numerical ones from central differences on each parameter
entry. Models must be float64 — in float32 the difference quotient
drowns in rounding before it says anything.
"""

from __future__ import annotations

import numpy as np

from .layers import ReLU, Stack


def _require_f64(model):
    for p in model.parameters():
        if p.data.dtype != np.float64:
            raise ValueError(
                f"grad_check requires float64 parameters, found {p.data.dtype}"
            )


def relu_kink_margin(model, x: np.ndarray) -> float:
    """Smallest |pre-activation| entering any ReLU for this input.

    Central differences assume the loss is smooth within +-eps of the
    evaluation point; a pre-activation near zero breaks that. Callers
    redraw their random case while this margin is tiny.
    """
    layers = model.layers if isinstance(model, Stack) else [model]
    margin = np.inf
    for layer in layers:
        if isinstance(layer, ReLU) and x.size:
            margin = min(margin, float(np.abs(x).min()))
        x = layer.forward(x)
    return margin


def grad_check(model, x: np.ndarray, rng: np.random.Generator,
               eps: float = 1e-5, check_input: bool = False) -> float:
    """Max relative error between analytic and numerical gradients.

    Relative error for one entry is |ga - gf| / max(1, |ga|, |gf|); the
    maximum runs over every parameter entry (and every input entry when
    check_input is set, which requires the model to propagate input
    gradients).
    """
    _require_f64(model)
    x = np.asarray(x, dtype=np.float64)
    y = model.forward(x)
    r = rng.standard_normal(y.shape)
    dx = model.backward(r.copy())
    analytic = [p.grad.copy() for p in model.parameters()]

    def loss() -> float:
        return float(np.sum(model.forward(x) * r))

    worst = 0.0

    def compare(ga: float, gf: float):
        nonlocal worst
        err = abs(ga - gf) / max(1.0, abs(ga), abs(gf))
        worst = max(worst, err)

    for p, ga_arr in zip(model.parameters(), analytic):
        flat = p.data.reshape(-1)
        ga_flat = ga_arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss()
            flat[i] = orig - eps
            lm = loss()
            flat[i] = orig
            compare(float(ga_flat[i]), (lp - lm) / (2.0 * eps))

    if check_input:
        if dx is None:
            raise ValueError("check_input requires a model that propagates "
                             "input gradients (Stack(input_grad=True))")
        xf = x.reshape(-1)
        dxf = dx.reshape(-1)
        for i in range(xf.size):
            orig = xf[i]
            xf[i] = orig + eps
            lp = loss()
            xf[i] = orig - eps
            lm = loss()
            xf[i] = orig
            compare(float(dxf[i]), (lp - lm) / (2.0 * eps))

    return worst
