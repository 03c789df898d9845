"""Attention blocks: channel/spatial attention, DAU, HWAB and SKFF."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from . import ops
from .autograd import Tensor
from .errors import InvalidArgument
from .params import ParamStore
from .resample import dwt_haar, iwt_haar


@dataclass(frozen=True)
class AttentionConfig:
    ca_reduction: int = 8
    sa_kernel: int = 7
    skff_reduction: int = 8
    skff_floor: int = 4

    def __post_init__(self):
        if self.ca_reduction < 1 or self.skff_reduction < 1 or self.skff_floor < 1:
            raise InvalidArgument(f"reductions must be positive: {self}")
        if self.sa_kernel < 1 or self.sa_kernel % 2 == 0:
            raise InvalidArgument(f"sa_kernel must be odd, got {self.sa_kernel}")


class Conv:
    def __init__(self, store: ParamStore, name: str, cin: int, cout: int, k: int):
        self.name, self.cin, self.cout, self.k = name, cin, cout, k
        self.weight = store.weight(f"{name}.weight", (cout, cin, k, k))
        self.bias = store.zeros(f"{name}.bias", (cout,))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias)


class PReLU:
    def __init__(self, store: ParamStore, name: str, channels: int, init: float = 0.25):
        self.alpha = store.constant(f"{name}.alpha", (channels,), init)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.prelu(x, self.alpha)


class ChannelAttention:
    """Squeeze-and-excitation gate: x * sigmoid(fc2(relu(fc1(GAP(x)))))."""

    def __init__(self, store: ParamStore, name: str, channels: int, reduction: int = 8):
        if channels < reduction:
            raise InvalidArgument(f"channel attention: {channels} channels < reduction {reduction}")
        hidden = channels // reduction
        self.channels = channels
        self.fc1 = Conv(store, f"{name}.fc1", channels, hidden, 1)
        self.fc2 = Conv(store, f"{name}.fc2", hidden, channels, 1)

    def gate(self, x: Tensor) -> Tensor:
        return ops.sigmoid(self.fc2(ops.relu(self.fc1(ops.global_avg_pool(x)))))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.channels:
            raise InvalidArgument(f"channel attention expects {self.channels} channels, got {x.shape}")
        return ops.mul(x, self.gate(x))


class SpatialAttention:
    """Per-position gate from a k x k conv over the channel-mean and channel-max maps."""

    def __init__(self, store: ParamStore, name: str, kernel: int = 7):
        if kernel % 2 == 0:
            raise InvalidArgument(f"spatial attention kernel must be odd, got {kernel}")
        self.conv = Conv(store, f"{name}.conv", 2, 1, kernel)

    def gate(self, x: Tensor) -> Tensor:
        pooled = ops.concat_channels([ops.channel_mean(x), ops.channel_max(x)])
        return ops.sigmoid(self.conv(pooled))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.mul(x, self.gate(x))


class DAU:
    """Dual attention unit: conv-PReLU-conv trunk, CA and SA in parallel, 1x1 merge, residual add."""

    def __init__(self, store: ParamStore, name: str, channels: int, cfg: AttentionConfig):
        if channels % 2 or channels < cfg.ca_reduction:
            raise InvalidArgument(f"DAU needs even channels >= {cfg.ca_reduction}, got {channels}")
        self.channels = channels
        self.conv1 = Conv(store, f"{name}.body.conv1", channels, channels, 3)
        self.act = PReLU(store, f"{name}.body.act", channels)
        self.conv2 = Conv(store, f"{name}.body.conv2", channels, channels, 3)
        self.ca = ChannelAttention(store, f"{name}.ca", channels, cfg.ca_reduction)
        self.sa = SpatialAttention(store, f"{name}.sa", cfg.sa_kernel)
        self.merge = Conv(store, f"{name}.merge", 2 * channels, channels, 1)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise InvalidArgument(f"DAU expects {self.channels} channels, got {x.shape}")
        t = self.conv2(self.act(self.conv1(x)))
        return ops.add(x, self.merge(ops.concat_channels([self.ca(t), self.sa(t)])))


class HWAB:
    """Half wavelet attention block.

    Half the channels pass through untouched; the other half goes through
    DWT -> DAU -> IWT.  The halves are re-joined by conv3x3 + PReLU and a 1x1
    shortcut of the full input is added.
    """

    def __init__(self, store: ParamStore, name: str, channels: int, cfg: AttentionConfig):
        if channels % 2:
            raise InvalidArgument(f"HWAB needs an even channel count, got {channels}")
        self.channels = channels
        self.dau = DAU(store, f"{name}.dau", 2 * channels, cfg)
        self.fuse = Conv(store, f"{name}.fuse", channels, channels, 3)
        self.act = PReLU(store, f"{name}.act", channels)
        self.shortcut = Conv(store, f"{name}.shortcut", channels, channels, 1)

    def __call__(self, f_in: Tensor) -> Tensor:
        c = self.channels
        if f_in.ndim != 4 or f_in.shape[1] != c or f_in.shape[2] % 2 or f_in.shape[3] % 2:
            raise InvalidArgument(f"HWAB expects (n, {c}, even, even), got {f_in.shape}")
        f_identity, f_t = ops.split_channels(f_in, [c // 2, c // 2])
        f_t_hat = iwt_haar(self.dau(dwt_haar(f_t)))
        f_r = self.act(self.fuse(ops.concat_channels([f_t_hat, f_identity])))
        return ops.add(f_r, self.shortcut(f_in))


class SKFF:
    """Selective kernel feature fusion of ``branches`` same-shape inputs."""

    def __init__(self, store: ParamStore, name: str, channels: int, branches: int = 2,
                 reduction: int = 8, floor: int = 4):
        if branches < 2:
            raise InvalidArgument(f"SKFF needs at least two branches, got {branches}")
        d = max(channels // reduction, floor)
        self.channels, self.branches = channels, branches
        self.squeeze = Conv(store, f"{name}.squeeze", channels, d, 1)
        self.select = [Conv(store, f"{name}.select{i}", d, channels, 1) for i in range(branches)]

    def weights(self, feats: Sequence[Tensor]) -> Tensor:
        """Softmax-normalized per-channel branch weights, shape (n, L*c, 1, 1)."""
        total = feats[0]
        for f in feats[1:]:
            total = ops.add(total, f)
        z = ops.relu(self.squeeze(ops.global_avg_pool(total)))
        logits = ops.concat_channels([conv(z) for conv in self.select])
        return ops.softmax_over_branches(logits, self.branches)

    def __call__(self, feats: Sequence[Tensor]) -> Tensor:
        if len(feats) != self.branches:
            raise InvalidArgument(f"SKFF built for {self.branches} branches, got {len(feats)}")
        shape = feats[0].shape
        if any(f.shape != shape for f in feats) or shape[1] != self.channels:
            raise InvalidArgument(f"SKFF branch shapes differ or wrong width: {[f.shape for f in feats]}")
        w = ops.split_channels(self.weights(feats), [self.channels] * self.branches)
        out = ops.mul(feats[0], w[0])
        for f, wi in zip(feats[1:], w[1:]):
            out = ops.add(out, ops.mul(f, wi))
        return out
