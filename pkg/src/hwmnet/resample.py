"""Haar wavelets, pixel (un)shuffle, bilinear resizing and reflect pad/crop."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, make_node
from .errors import InvalidArgument


def _haar_analysis(x: np.ndarray) -> np.ndarray:
    a = x[:, :, 0::2, 0::2]
    b = x[:, :, 0::2, 1::2]
    c = x[:, :, 1::2, 0::2]
    d = x[:, :, 1::2, 1::2]
    ll = (a + b + c + d) * 0.5
    hl = (-a - b + c + d) * 0.5
    lh = (-a + b - c + d) * 0.5
    hh = (a - b - c + d) * 0.5
    return np.concatenate([ll, hl, lh, hh], axis=1)


def _haar_synthesis(y: np.ndarray) -> np.ndarray:
    n, c4, h, w = y.shape
    ll, hl, lh, hh = np.split(y, 4, axis=1)
    out = np.empty((n, c4 // 4, 2 * h, 2 * w), dtype=y.dtype)
    out[:, :, 0::2, 0::2] = (ll - hl - lh + hh) * 0.5
    out[:, :, 0::2, 1::2] = (ll - hl + lh - hh) * 0.5
    out[:, :, 1::2, 0::2] = (ll + hl - lh - hh) * 0.5
    out[:, :, 1::2, 1::2] = (ll + hl + lh + hh) * 0.5
    return out


def dwt_haar(x: Tensor) -> Tensor:
    """Single-level orthonormal 2-D Haar transform.

    Output channels are grouped by subband: [LL of every input channel, HL..., LH..., HH...].
    The transform is orthogonal, so its adjoint (used for the gradient) is ``iwt_haar``.
    """
    if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
        raise InvalidArgument(f"dwt_haar needs even spatial dims, got {x.shape}")
    return make_node(_haar_analysis(x.data), (x,), lambda g: (_haar_synthesis(g),))


def iwt_haar(y: Tensor) -> Tensor:
    """Inverse of :func:`dwt_haar`: (n, 4c, h, w) -> (n, c, 2h, 2w)."""
    if y.ndim != 4 or y.shape[1] % 4:
        raise InvalidArgument(f"iwt_haar needs channels divisible by 4, got {y.shape}")
    return make_node(_haar_synthesis(y.data), (y,), lambda g: (_haar_analysis(g),))


def _unshuffle(x: np.ndarray, r: int) -> np.ndarray:
    n, c, h, w = x.shape
    return (x.reshape(n, c, h // r, r, w // r, r)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(n, c * r * r, h // r, w // r))


def _shuffle(x: np.ndarray, r: int) -> np.ndarray:
    n, c, h, w = x.shape
    return (x.reshape(n, c // (r * r), r, r, h, w)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(n, c // (r * r), h * r, w * r))


def pixel_unshuffle(x: Tensor, r: int = 2) -> Tensor:
    if x.ndim != 4 or r < 1 or x.shape[2] % r or x.shape[3] % r:
        raise InvalidArgument(f"pixel_unshuffle: {x.shape} not divisible by r={r}")
    return make_node(_unshuffle(x.data, r), (x,), lambda g: (_shuffle(g, r),))


def pixel_shuffle(x: Tensor, r: int = 2) -> Tensor:
    if x.ndim != 4 or r < 1 or x.shape[1] % (r * r):
        raise InvalidArgument(f"pixel_shuffle: channels of {x.shape} not divisible by r^2={r * r}")
    return make_node(_shuffle(x.data, r), (x,), lambda g: (_unshuffle(g, r),))


def interp_matrix(n_in: int, n_out: int, dtype=np.float64) -> np.ndarray:
    """(n_out, n_in) linear interpolation weights with half-pixel centres and edge clamping."""
    s = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    s = np.clip(s, 0, n_in - 1)
    i0 = np.floor(s).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = s - i0
    m = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1.0 - frac)
    np.add.at(m, (rows, i1), frac)
    return m.astype(dtype)


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    if out_h < 1 or out_w < 1:
        raise InvalidArgument(f"bilinear_resize: output size {out_h}x{out_w} must be positive")
    _, _, h, w = x.shape
    if (h, w) == (out_h, out_w):
        return make_node(x.data.copy(), (x,), lambda g: (g,))
    ry = interp_matrix(h, out_h, x.dtype)
    rx = interp_matrix(w, out_w, x.dtype)
    out = ry @ x.data @ rx.T
    return make_node(out, (x,), lambda g: (ry.T @ g @ rx,))


@dataclass(frozen=True)
class PadSpec:
    right: int = 0
    bottom: int = 0
    mode: str = "reflect"

    @classmethod
    def to_multiple(cls, h: int, w: int, multiple: int) -> "PadSpec":
        return cls(right=-w % multiple, bottom=-h % multiple)


def _fold(g: np.ndarray, axis: int, size: int, pad: int) -> np.ndarray:
    """Adjoint of a right/bottom reflect pad along one axis."""
    if pad == 0:
        return g
    core = np.take(g, np.arange(size), axis=axis).copy()
    for j in range(pad):
        src = [slice(None)] * g.ndim
        dst = [slice(None)] * g.ndim
        src[axis] = size + j
        dst[axis] = size - 2 - j
        core[tuple(dst)] += g[tuple(src)]
    return core


def pad_reflect(x: Tensor, spec: PadSpec) -> Tensor:
    """Reflect-pad on the bottom and right edges (edge pixel not repeated)."""
    _, _, h, w = x.shape
    if spec.right < 0 or spec.bottom < 0:
        raise InvalidArgument(f"negative padding {spec}")
    if spec.bottom >= h or spec.right >= w:
        raise InvalidArgument(f"pad {spec} must be smaller than input dims {h}x{w}")
    if spec.right == 0 and spec.bottom == 0:
        return make_node(x.data.copy(), (x,), lambda g: (g,))
    out = np.pad(x.data, ((0, 0), (0, 0), (0, spec.bottom), (0, spec.right)), mode="reflect")
    return make_node(out, (x,), lambda g: (_fold(_fold(g, 2, h, spec.bottom), 3, w, spec.right),))


def crop(x: Tensor, spec: PadSpec) -> Tensor:
    """Undo :func:`pad_reflect` by dropping the padded rows/columns."""
    _, _, h, w = x.shape
    hh, ww = h - spec.bottom, w - spec.right
    if hh < 1 or ww < 1:
        raise InvalidArgument(f"crop {spec} removes all of {h}x{w}")

    def rule(g):
        dx = np.zeros_like(x.data)
        dx[:, :, :hh, :ww] = g
        return (dx,)

    return make_node(x.data[:, :, :hh, :ww].copy(), (x,), rule)
