"""Reverse-mode gradients for the field regressor.

Each forward function in `model` records the arrays its mirror here
consumes; the pairing is structural rather than taped, so every backward
below must be read next to its forward. Gradients are exact reverse mode:
softmax, layer norm, GELU and the rotary rotation are all differentiated
analytically (the rotation is linear, so its adjoint is the rotation by
the negated angle).

`finite_difference_gradcheck` is the referee: central differences on
randomly chosen scalar parameters against the analytic values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backends
from .errors import ShapeError, UsageError
from .model import ModelConfig, ParameterStore, model_forward


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over all N*C entries of the squared difference."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff))


def mse_loss_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} vs target {target.shape}")
    return 2.0 * (pred - target) / pred.size


def layer_norm_backward(dout: np.ndarray, cache: dict):
    """Backward of per-row standardize + affine; returns (dx, dgain, dbias)."""
    xhat = cache["xhat"]
    inv_std = cache["inv_std"]
    dgain = np.sum(dout * xhat, axis=0)
    dbias = np.sum(dout, axis=0)
    dxhat = dout * cache["gain"]
    # standardization couples every entry of a row through mean and var
    row_mean = np.mean(dxhat, axis=1, keepdims=True)
    row_proj = np.mean(dxhat * xhat, axis=1, keepdims=True)
    dx = inv_std * (dxhat - row_mean - xhat * row_proj)
    return dx, dgain, dbias


def _derotate(grad: np.ndarray, phases) -> np.ndarray:
    # adjoint of a pairwise rotation by theta is the rotation by -theta
    if phases is None:
        return grad
    return backends.rotary_rotate(
        np.ascontiguousarray(grad), phases.cos, -phases.sin)


def attention_head_backward(dvalues: np.ndarray, cache: dict):
    """Backward of one head; returns grads w.r.t. unrotated q, k and v."""
    attn = cache["attn"]
    scale = cache["scale"]
    dattn = dvalues @ cache["v"].T
    dv = attn.T @ dvalues
    dscores = backends.softmax_rows_grad(attn, np.ascontiguousarray(dattn))
    dq_rot = (dscores @ cache["k_rot"]) * scale
    dk_rot = (dscores.T @ cache["q_rot"]) * scale
    phases = cache["phases"]
    return _derotate(dq_rot, phases), _derotate(dk_rot, phases), dv


def mha_backward(dout: np.ndarray, cache: dict, grads: dict, prefix: str):
    """Backward through concat heads + output projection; returns dx."""
    w_out = cache["w_out"]
    concat = cache["concat"]
    grads[f"{prefix}.attn.out.w"] += concat.T @ dout
    dconcat = dout @ w_out.T
    x = cache["x"]
    dx = np.zeros_like(x)
    d_h = cache["head_weights"][0][0].shape[1]
    for h, (w_q, w_k, w_v) in enumerate(cache["head_weights"]):
        dq, dk, dv = attention_head_backward(
            dconcat[:, h * d_h:(h + 1) * d_h], cache["heads"][h])
        grads[f"{prefix}.head{h}.q.w"] += x.T @ dq
        grads[f"{prefix}.head{h}.k.w"] += x.T @ dk
        grads[f"{prefix}.head{h}.v.w"] += x.T @ dv
        dx += dq @ w_q.T + dk @ w_k.T + dv @ w_v.T
    return dx


def encoder_backward(dout: np.ndarray, cache: dict, params: ParameterStore,
                     grads: dict) -> None:
    """Backward of the pointwise encoder MLP; input features are leaves."""
    a = cache["a"]
    grads["encoder.l2.w"] += a.T @ dout
    grads["encoder.l2.b"] += np.sum(dout, axis=0)
    da = dout @ params["encoder.l2.w"].T
    dh = backends.gelu_grad(cache["h"], da)
    grads["encoder.l1.w"] += cache["feats"].T @ dh
    grads["encoder.l1.b"] += np.sum(dh, axis=0)


def block_backward(dout: np.ndarray, cache: dict, params: ParameterStore,
                   t: int, grads: dict) -> np.ndarray:
    """Backward of one pre-norm block; returns gradient w.r.t. its input."""
    # out = x1 + ffn(ln2(x1)); x1 = x + mha(ln1(x))
    a = cache["a"]
    grads[f"block{t}.ffn.l2.w"] += a.T @ dout
    grads[f"block{t}.ffn.l2.b"] += np.sum(dout, axis=0)
    da = dout @ params[f"block{t}.ffn.l2.w"].T
    dh = backends.gelu_grad(cache["h"], da)
    grads[f"block{t}.ffn.l1.w"] += cache["v"].T @ dh
    grads[f"block{t}.ffn.l1.b"] += np.sum(dh, axis=0)
    dv = dh @ params[f"block{t}.ffn.l1.w"].T
    dx1_ln, dgain2, dbias2 = layer_norm_backward(dv, cache["ln2"])
    grads[f"block{t}.ln2.gain"] += dgain2
    grads[f"block{t}.ln2.bias"] += dbias2
    dx1 = dout + dx1_ln
    du = mha_backward(dx1, cache["mha"], grads, f"block{t}")
    dx_ln, dgain1, dbias1 = layer_norm_backward(du, cache["ln1"])
    grads[f"block{t}.ln1.gain"] += dgain1
    grads[f"block{t}.ln1.bias"] += dbias1
    return dx1 + dx_ln


def decoder_backward(dout: np.ndarray, cache: dict, params: ParameterStore,
                     grads: dict) -> np.ndarray:
    a = cache["a"]
    grads["decoder.l2.w"] += a.T @ dout
    grads["decoder.l2.b"] += np.sum(dout, axis=0)
    da = dout @ params["decoder.l2.w"].T
    dh = backends.gelu_grad(cache["h"], da)
    grads["decoder.l1.w"] += cache["block_in"].T @ dh
    grads["decoder.l1.b"] += np.sum(dh, axis=0)
    return dh @ params["decoder.l1.w"].T


def model_backward(dpred: np.ndarray, cache: dict | None, params: ParameterStore,
                   config: ModelConfig) -> dict:
    """Gradients of every parameter given d(loss)/d(pred)."""
    if cache is None:
        raise UsageError("backward called without a cached forward pass")
    grads = params.new_grads()
    dec_cache = dict(cache["dec"])
    dec_cache["block_in"] = cache["block_out"]
    dx = decoder_backward(dpred, dec_cache, params, grads)
    for t in range(config.num_blocks - 1, -1, -1):
        dx = block_backward(dx, cache["blocks"][t], params, t, grads)
    encoder_backward(dx, cache["enc"], params, grads)
    return grads


def loss_and_grads(coords: np.ndarray, target: np.ndarray,
                   params: ParameterStore, config: ModelConfig):
    """One forward/backward pass; returns (loss, grads, pred)."""
    pred, cache, _ = model_forward(coords, params, config, need_cache=True)
    loss = mse_loss(pred, target)
    grads = model_backward(mse_loss_grad(pred, target), cache, params, config)
    return loss, grads, pred


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_name: str
    worst_index: int
    count: int
    entries: list

    def __str__(self):
        return (f"gradcheck: {self.count} entries, max rel err "
                f"{self.max_rel_err:.3e} at {self.worst_name}[{self.worst_index}]")


def finite_difference_gradcheck(params: ParameterStore, config: ModelConfig,
                                coords: np.ndarray, target: np.ndarray,
                                step: float = 1e-5, count: int = 200,
                                seed: int = 0) -> GradCheckReport:
    """Central differences on `count` random scalar parameters.

    Relative error uses a max(|analytic|, |numeric|, 1e-8) denominator.
    Parameters are perturbed in place and restored exactly.
    """
    _, grads, _ = loss_and_grads(coords, target, params, config)
    names = params.names()
    sizes = np.array([params[n].size for n in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(count, total), replace=False)

    entries = []
    max_rel = 0.0
    worst_name, worst_index = names[0], 0
    for flat in picks:
        which = int(np.searchsorted(offsets, flat, side="right") - 1)
        name = names[which]
        idx = int(flat - offsets[which])
        arr = params[name]
        orig = arr.flat[idx]
        arr.flat[idx] = orig + step
        lp = mse_loss(model_forward(coords, params, config)[0], target)
        arr.flat[idx] = orig - step
        lm = mse_loss(model_forward(coords, params, config)[0], target)
        arr.flat[idx] = orig
        numeric = (lp - lm) / (2.0 * step)
        analytic = grads[name].flat[idx]
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        entries.append((name, idx, float(analytic), float(numeric), float(rel)))
        if rel > max_rel:
            max_rel = rel
            worst_name, worst_index = name, idx
    return GradCheckReport(
        max_rel_err=float(max_rel), worst_name=worst_name,
        worst_index=worst_index, count=len(entries), entries=entries)
