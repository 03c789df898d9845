"""Differentiable primitives on (n, c, h, w) tensors."""
from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autograd import Tensor, make_node
from .errors import InvalidArgument

# Upper bound on im2col buffer elements before a convolution is chunked over rows.
_COL_BUDGET = 1 << 24


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    return g.sum(axis=axes, keepdims=True)


def _check_broadcast(x: Tensor, y: Tensor, what: str) -> None:
    if x.ndim != y.ndim:
        raise InvalidArgument(f"{what}: rank mismatch {x.shape} vs {y.shape}")
    try:
        out = np.broadcast_shapes(x.shape, y.shape)
    except ValueError:
        raise InvalidArgument(f"{what}: shapes {x.shape} and {y.shape} do not broadcast") from None
    if out != x.shape:
        raise InvalidArgument(f"{what}: {y.shape} does not broadcast onto {x.shape}")


# ---------------------------------------------------------------------------
# convolution


def _row_chunks(n: int, h: int, w: int, per_pixel: int):
    rows = max(1, _COL_BUDGET // max(1, n * w * per_pixel))
    for r0 in range(0, h, rows):
        yield r0, min(h, r0 + rows)


def _cols(xp: np.ndarray, k: int, r0: int, r1: int, w: int) -> np.ndarray:
    n, c = xp.shape[:2]
    if k == 1:
        return xp[:, :, r0:r1, :].transpose(0, 2, 3, 1).reshape(-1, c)
    win = sliding_window_view(xp[:, :, r0:r1 + k - 1, :], (k, k), axis=(2, 3))
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * (r1 - r0) * w, c * k * k)


def _conv_forward(xp, wmat, k, h, w):
    n = xp.shape[0]
    co = wmat.shape[0]
    out = np.empty((n, h, w, co), dtype=np.result_type(xp, wmat))
    for r0, r1 in _row_chunks(n, h, w, wmat.shape[1]):
        out[:, r0:r1] = (_cols(xp, k, r0, r1, w) @ wmat.T).reshape(n, r1 - r0, w, co)
    return out


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, padding: int | None = None,
           groups: int = 1) -> Tensor:
    """Zero-padded, stride-1 2-D convolution (cross-correlation).

    ``padding`` defaults to ``(k - 1) // 2`` so odd kernels preserve size.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise InvalidArgument(f"conv2d expects 4-D input and weight, got {x.shape}, {weight.shape}")
    co, ci, k, k2 = weight.shape
    if k != k2 or k % 2 == 0:
        raise InvalidArgument(f"conv2d kernel must be square and odd, got {k}x{k2}")
    if groups < 1 or co % groups:
        raise InvalidArgument(f"out channels {co} not divisible by groups={groups}")
    n, c, h, w = x.shape
    if c != ci * groups:
        raise InvalidArgument(f"conv2d: input has {c} channels, weight expects {ci}*{groups}")
    if bias is not None and bias.shape != (co,):
        raise InvalidArgument(f"conv2d: bias shape {bias.shape} != ({co},)")
    p = (k - 1) // 2 if padding is None else int(padding)
    ho, wo = h + 2 * p - k + 1, w + 2 * p - k + 1
    if ho < 1 or wo < 1:
        raise InvalidArgument(f"conv2d: padding {p} too small for kernel {k} on {h}x{w}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    cog = co // groups
    outs = []
    for gi in range(groups):
        xg = xp[:, gi * ci:(gi + 1) * ci]
        wmat = weight.data[gi * cog:(gi + 1) * cog].reshape(cog, -1)
        outs.append(_conv_forward(xg, wmat, k, ho, wo))
    out = outs[0] if groups == 1 else np.concatenate(outs, axis=3)
    if bias is not None:
        out += bias.data
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def rule(g):
        gt = g.transpose(0, 2, 3, 1)  # (n, ho, wo, co)
        dxp = np.zeros_like(xp) if x.requires_grad else None
        dw = np.zeros_like(weight.data) if weight.requires_grad else None
        for gi in range(groups):
            xg = xp[:, gi * ci:(gi + 1) * ci]
            wg = weight.data[gi * cog:(gi + 1) * cog].reshape(cog, -1)
            for r0, r1 in _row_chunks(n, ho, wo, wg.shape[1]):
                go = np.ascontiguousarray(gt[:, r0:r1, :, gi * cog:(gi + 1) * cog]).reshape(-1, cog)
                if dw is not None:
                    dw[gi * cog:(gi + 1) * cog] += (go.T @ _cols(xg, k, r0, r1, wo)).reshape(cog, ci, k, k)
                if dxp is not None:
                    dcols = (go @ wg).reshape(n, r1 - r0, wo, ci, k, k)
                    for i in range(k):
                        for j in range(k):
                            dxp[:, gi * ci:(gi + 1) * ci, r0 + i:r1 + i, j:j + wo] += \
                                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        dx = None
        if dxp is not None:
            dx = dxp[:, :, p:p + h, p:p + w] if p else dxp
        db = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        return dx, dw, db

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(out, parents, rule)


# ---------------------------------------------------------------------------
# elementwise


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_node(x.data * mask, (x,), lambda g: (g * mask,))


def prelu(x: Tensor, alpha: Tensor) -> Tensor:
    """x where x >= 0 else alpha * x, with one learnable alpha per channel."""
    if alpha.shape != (x.shape[1],):
        raise InvalidArgument(f"prelu: alpha shape {alpha.shape} != ({x.shape[1]},)")
    a = alpha.data.reshape(1, -1, *([1] * (x.ndim - 2)))
    neg = x.data < 0
    out = np.where(neg, a * x.data, x.data)

    def rule(g):
        dx = np.where(neg, a * g, g)
        da = (g * x.data * neg).sum(axis=tuple(i for i in range(x.ndim) if i != 1))
        return dx, da

    return make_node(out, (x, alpha), rule)


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return make_node(out, (x,), lambda g: (g * out * (1.0 - out),))


def add(x: Tensor, y: Tensor) -> Tensor:
    _check_broadcast(x, y, "add")
    return make_node(x.data + y.data, (x, y), lambda g: (g, _unbroadcast(g, y.shape)))


def sub(x: Tensor, y: Tensor) -> Tensor:
    _check_broadcast(x, y, "sub")
    return make_node(x.data - y.data, (x, y), lambda g: (g, -_unbroadcast(g, y.shape)))


def mul(x: Tensor, y: Tensor) -> Tensor:
    _check_broadcast(x, y, "mul")
    return make_node(x.data * y.data, (x, y),
                     lambda g: (g * y.data, _unbroadcast(g * x.data, y.shape)))


def scale(x: Tensor, s: float) -> Tensor:
    s = x.dtype.type(s)
    return make_node(x.data * s, (x,), lambda g: (g * s,))


def add_scalar(x: Tensor, s: float) -> Tensor:
    return make_node(x.data + x.dtype.type(s), (x,), lambda g: (g,))


def square(x: Tensor) -> Tensor:
    return make_node(x.data * x.data, (x,), lambda g: (2 * g * x.data,))


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return make_node(out, (x,), lambda g: (g / (2 * out),))


def elementwise(x: Tensor, kind: str, arg=None) -> Tensor:
    """Dispatch by name: relu, prelu(alpha), sigmoid, add(y), mul(y), scale(s)."""
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "prelu":
        return prelu(x, arg)
    if kind == "add":
        return add(x, arg)
    if kind == "mul":
        return mul(x, arg)
    if kind == "scale":
        return scale(x, arg)
    raise InvalidArgument(f"unknown elementwise kind {kind!r}")


# ---------------------------------------------------------------------------
# reductions


def sum_all(x: Tensor) -> Tensor:
    return make_node(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape),))


def mean_all(x: Tensor) -> Tensor:
    inv = x.dtype.type(1.0 / x.data.size)
    return make_node(np.asarray(x.data.mean()), (x,),
                     lambda g: (np.broadcast_to(g * inv, x.shape),))


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over (h, w) per (n, c) -> (n, c, 1, 1)."""
    if x.ndim != 4 or x.data.size == 0:
        raise InvalidArgument(f"global_avg_pool needs a non-empty 4-D tensor, got {x.shape}")
    hw = x.shape[2] * x.shape[3]
    inv = x.dtype.type(1.0 / hw)
    return make_node(x.data.mean(axis=(2, 3), keepdims=True), (x,),
                     lambda g: (np.broadcast_to(g * inv, x.shape),))


def channel_mean(x: Tensor) -> Tensor:
    inv = x.dtype.type(1.0 / x.shape[1])
    return make_node(x.data.mean(axis=1, keepdims=True), (x,),
                     lambda g: (np.broadcast_to(g * inv, x.shape),))


def channel_max(x: Tensor) -> Tensor:
    """Max over channels; gradient goes to the first maximal channel."""
    idx = x.data.argmax(axis=1)[:, None]
    out = np.take_along_axis(x.data, idx, axis=1)

    def rule(g):
        dx = np.zeros_like(x.data)
        np.put_along_axis(dx, idx, g, axis=1)
        return (dx,)

    return make_node(out, (x,), rule)


# ---------------------------------------------------------------------------
# channel plumbing


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise InvalidArgument("concat_channels needs at least one tensor")
    n, _, h, w = parts[0].shape
    for p in parts:
        if p.ndim != 4 or (p.shape[0], p.shape[2], p.shape[3]) != (n, h, w):
            raise InvalidArgument(f"concat_channels: {p.shape} incompatible with {parts[0].shape}")
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])
    out = np.concatenate([p.data for p in parts], axis=1)
    return make_node(out, parts, lambda g: tuple(g[:, a:b] for a, b in zip(bounds[:-1], bounds[1:])))


def _slice_channels(x: Tensor, a: int, b: int) -> Tensor:
    def rule(g):
        dx = np.zeros_like(x.data)
        dx[:, a:b] = g
        return (dx,)

    return make_node(x.data[:, a:b], (x,), rule)


def split_channels(x: Tensor, sizes: Sequence[int]) -> list[Tensor]:
    if sum(sizes) != x.shape[1] or any(s < 1 for s in sizes):
        raise InvalidArgument(f"split sizes {list(sizes)} do not partition {x.shape[1]} channels")
    bounds = np.cumsum([0, *sizes])
    return [_slice_channels(x, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def softmax_over_branches(logits: Tensor, branches: int) -> Tensor:
    """Softmax across ``branches`` groups of channels: (n, L*c, 1, 1) -> same shape."""
    n, lc = logits.shape[:2]
    if branches < 1 or lc % branches:
        raise InvalidArgument(f"{lc} channels not divisible into {branches} branches")
    z = logits.data.reshape(n, branches, lc // branches, *logits.shape[2:])
    e = np.exp(z - z.max(axis=1, keepdims=True))
    s = e / e.sum(axis=1, keepdims=True)

    def rule(g):
        gz = g.reshape(s.shape)
        return ((s * (gz - (gz * s).sum(axis=1, keepdims=True))).reshape(logits.shape),)

    return make_node(s.reshape(logits.shape), (logits,), rule)
