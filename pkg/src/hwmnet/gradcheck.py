"""Central finite-difference gradient checking (double precision)."""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from . import ops
from .autograd import DOUBLE, Tensor, no_grad
from .errors import InvalidArgument


def projected(out: Tensor, seed: int = 0) -> Tensor:
    """Scalarize ``out`` as sum(out * R) with a fixed standard-normal R."""
    r = np.random.default_rng(seed).standard_normal(out.shape).astype(out.dtype)
    return ops.sum_all(ops.mul(out, Tensor(r)))


def _relative(analytic: np.ndarray, fd: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-12)
    return float(np.max(np.abs(analytic - fd) / denom)) if analytic.size else 0.0


def _indices(size: int, max_elements: int | None, rng) -> np.ndarray:
    if max_elements is None or size <= max_elements:
        return np.arange(size)
    return np.sort(rng.choice(size, max_elements, replace=False))


def grad_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5,
               params: Iterable[Tensor] = (), max_elements: int | None = None,
               seed: int = 0) -> float:
    """Max relative error between backprop and central differences.

    ``f`` maps a tensor to a scalar tensor.  The input and every tensor in
    ``params`` are checked; ``max_elements`` caps how many entries per tensor
    are probed (sampled with ``seed``).  Error per entry is
    |analytic - fd| / max(|analytic|, |fd|, 1e-12).
    """
    if not 1e-7 <= eps <= 1e-4:
        raise InvalidArgument(f"eps {eps} outside [1e-7, 1e-4]")
    x = np.array(x.data if isinstance(x, Tensor) else x, dtype=DOUBLE)
    params = list(params)
    for p in params:
        if p.dtype != DOUBLE:
            raise InvalidArgument("grad_check requires double-precision parameters")

    xt = Tensor(x, requires_grad=True)
    for p in params:
        p.grad = None
    loss = f(xt)
    loss.backward()
    targets = [(xt.data, xt.grad if xt.grad is not None else np.zeros_like(x))]
    targets += [(p.data, p.grad if p.grad is not None else np.zeros_like(p.data)) for p in params]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for arr, analytic in targets:
        flat = arr.reshape(-1)
        idx = _indices(flat.size, max_elements, rng)
        fd = np.empty(idx.size)
        with no_grad():
            for j, i in enumerate(idx):
                orig = flat[i]
                flat[i] = orig + eps
                fp = f(xt).item()
                flat[i] = orig - eps
                fm = f(xt).item()
                flat[i] = orig
                fd[j] = (fp - fm) / (2 * eps)
        worst = max(worst, _relative(analytic.reshape(-1)[idx], fd))
    return worst


def tiny_double_net(levels=3, width=8, seed=0):
    from .model import NetworkConfig, build

    return build(NetworkConfig(levels=levels, base_width=width), seed=seed, dtype=DOUBLE)


def suite(quick: bool = False) -> list[tuple[str, float, float]]:
    """Run the double-precision gradient suite: (name, max relative error, tolerance) per check.

    Primitives are held to 1e-6, blocks to 1e-5 and the tiny end-to-end
    network (levels=3, width=8, 16x16 input, checked w.r.t. the input) to 1e-4.
    """
    from .blocks import DAU, HWAB, SKFF, AttentionConfig, ChannelAttention, SpatialAttention
    from .model import charbonnier_loss, forward
    from .params import ParamStore
    from .resample import PadSpec, bilinear_resize, crop, dwt_haar, iwt_haar, pad_reflect, pixel_shuffle, pixel_unshuffle

    rng = np.random.default_rng(1234)

    def rand(*shape):
        return rng.standard_normal(shape)

    def leaf(*shape):
        return Tensor(rand(*shape), requires_grad=True)

    results = []

    def check(name, f, x, tol, params=(), max_elements=None):
        results.append((name, grad_check(f, x, 1e-5, params, max_elements), tol))

    w, b = leaf(4, 3, 3, 3), leaf(4)
    check("conv2d", lambda t: projected(ops.conv2d(t, w, b)), rand(2, 3, 6, 6), 1e-6, [w, b])
    wg = leaf(4, 2, 3, 3)
    check("conv2d/groups", lambda t: projected(ops.conv2d(t, wg, None, groups=2)), rand(1, 4, 5, 5), 1e-6, [wg])
    alpha = Tensor(np.full(3, 0.25), requires_grad=True)
    check("prelu", lambda t: projected(ops.prelu(t, alpha)), rand(2, 3, 4, 4), 1e-6, [alpha])
    check("relu", lambda t: projected(ops.relu(t)), rand(2, 3, 4, 4), 1e-6)
    check("sigmoid", lambda t: projected(ops.sigmoid(t)), rand(2, 3, 4, 4), 1e-6)
    y = leaf(2, 3, 1, 1)
    check("add/broadcast", lambda t: projected(ops.add(t, y)), rand(2, 3, 4, 4), 1e-6, [y])
    check("mul/broadcast", lambda t: projected(ops.mul(t, y)), rand(2, 3, 4, 4), 1e-6, [y])
    check("global_avg_pool", lambda t: projected(ops.global_avg_pool(t)), rand(2, 3, 4, 5), 1e-6)
    check("channel_mean", lambda t: projected(ops.channel_mean(t)), rand(2, 3, 4, 4), 1e-6)
    check("channel_max", lambda t: projected(ops.channel_max(t)), rand(2, 3, 4, 4), 1e-6)
    check("concat/split", lambda t: projected(ops.concat_channels(ops.split_channels(t, [2, 3])[::-1])),
          rand(1, 5, 3, 3), 1e-6)
    check("softmax_over_branches", lambda t: projected(ops.softmax_over_branches(t, 3)), rand(2, 12, 1, 1), 1e-6)
    check("dwt_haar", lambda t: projected(dwt_haar(t)), rand(2, 3, 6, 8), 1e-6)
    check("iwt_haar", lambda t: projected(iwt_haar(t)), rand(2, 8, 3, 4), 1e-6)
    check("pixel_unshuffle", lambda t: projected(pixel_unshuffle(t)), rand(1, 3, 4, 6), 1e-6)
    check("pixel_shuffle", lambda t: projected(pixel_shuffle(t)), rand(1, 8, 3, 2), 1e-6)
    check("bilinear_down", lambda t: projected(bilinear_resize(t, 3, 5)), rand(1, 2, 8, 9), 1e-6)
    check("bilinear_up", lambda t: projected(bilinear_resize(t, 10, 7)), rand(1, 2, 5, 4), 1e-6)
    spec = PadSpec(right=2, bottom=3)
    check("pad_reflect", lambda t: projected(pad_reflect(t, spec)), rand(1, 2, 5, 4), 1e-6)
    check("crop", lambda t: projected(crop(t, spec)), rand(1, 2, 8, 6), 1e-6)
    target = Tensor(rand(2, 3, 4, 4))
    check("charbonnier/mean", lambda t: charbonnier_loss(t, target), rand(2, 3, 4, 4), 1e-6)
    check("charbonnier/global", lambda t: charbonnier_loss(t, target, mode="global-norm"), rand(2, 3, 4, 4), 1e-6)

    cap = 12 if quick else 40
    store = ParamStore(seed=7, dtype=DOUBLE)
    ca = ChannelAttention(store, "ca", 8, 4)
    check("channel_attention", lambda t: projected(ca(t)), rand(1, 8, 5, 5), 1e-5, store.values(), cap)
    store = ParamStore(seed=8, dtype=DOUBLE)
    sa = SpatialAttention(store, "sa", 7)
    check("spatial_attention", lambda t: projected(sa(t)), rand(1, 4, 6, 6), 1e-5, store.values(), cap)
    att = AttentionConfig()
    store = ParamStore(seed=9, dtype=DOUBLE)
    dau = DAU(store, "dau", 8, att)
    check("dau", lambda t: projected(dau(t)), rand(1, 8, 8, 8), 1e-5, store.values(), cap)
    store = ParamStore(seed=10, dtype=DOUBLE)
    hwab = HWAB(store, "hwab", 8, att)
    check("hwab", lambda t: projected(hwab(t)), rand(1, 8, 16, 16), 1e-5, store.values(), cap)
    store = ParamStore(seed=11, dtype=DOUBLE)
    skff = SKFF(store, "skff", 8)
    other = Tensor(rand(1, 8, 6, 6), requires_grad=True)
    check("skff", lambda t: projected(skff([t, other])), rand(1, 8, 6, 6), 1e-5, [*store.values(), other], cap)

    net = tiny_double_net()
    gt = Tensor(rng.random((1, 3, 16, 16)))
    # With respect to the input image; parameter gradients are covered block by block above.
    check("hwmnet/end-to-end", lambda t: charbonnier_loss(forward(net, t), gt),
          rng.random((1, 3, 16, 16)), 1e-4, max_elements=96 if quick else None)
    return results
