"""The HWMNet enhancement network (M-Net+ topology) and the Charbonnier loss."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import ops
from .autograd import SINGLE, Tensor
from .blocks import HWAB, SKFF, AttentionConfig, Conv
from .errors import InvalidArgument
from .params import ParamStore
from .resample import PadSpec, bilinear_resize, crop, pad_reflect, pixel_unshuffle

CHARBONNIER_EPS = 1e-3


@dataclass(frozen=True)
class NetworkConfig:
    levels: int = 4
    base_width: int = 96
    width_schedule: tuple[int, ...] | None = None
    in_channels: int = 3
    attention: AttentionConfig = field(default_factory=AttentionConfig)
    global_residual: bool = True

    def __post_init__(self):
        if self.width_schedule is None:
            object.__setattr__(self, "width_schedule", (self.base_width,) * self.levels)
        else:
            object.__setattr__(self, "width_schedule", tuple(int(w) for w in self.width_schedule))
        self.validate()

    def validate(self) -> None:
        if self.levels < 2:
            raise InvalidArgument(f"levels must be >= 2, got {self.levels}")
        if len(self.width_schedule) != self.levels:
            raise InvalidArgument(f"width_schedule {self.width_schedule} must have {self.levels} entries")
        for w in self.width_schedule:
            if w < 8 or w % 2:
                raise InvalidArgument(f"every width must be even and >= 8, got {w}")
        if self.width_schedule[0] != self.base_width:
            raise InvalidArgument("width_schedule[0] must equal base_width (gatepost conv width)")
        if self.in_channels < 1:
            raise InvalidArgument(f"in_channels must be positive, got {self.in_channels}")
        if 2 * min(self.width_schedule) < self.attention.ca_reduction:
            raise InvalidArgument("narrowest wavelet DAU would be smaller than ca_reduction")

    @property
    def pad_multiple(self) -> int:
        # The deepest level runs at 1/2^(levels-1) scale and its HWAB halves it once more.
        return 2 ** self.levels

    def to_dict(self) -> dict:
        d = asdict(self)
        d["width_schedule"] = list(self.width_schedule)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        d = dict(d)
        att = d.pop("attention", None)
        if isinstance(att, dict):
            d["attention"] = AttentionConfig(**att)
        elif att is not None:
            d["attention"] = att
        known = {"levels", "base_width", "width_schedule", "in_channels", "attention", "global_residual"}
        unknown = set(d) - known
        if unknown:
            raise InvalidArgument(f"unknown network config keys: {sorted(unknown)}")
        if "width_schedule" not in d and "base_width" in d:
            d["width_schedule"] = None
        return cls(**d)

    @classmethod
    def small(cls, levels: int = 3, width: int = 16, **kw) -> "NetworkConfig":
        return cls(levels=levels, base_width=width, **kw)


class HWMNet:
    """M-Net+ encoder/decoder with HWAB blocks at every level.

    Encoder level i sees the input bilinearly resized to 1/2^(i-1) and passed
    through one 3x3 conv shared by all levels (the gatepost path).  From level 2
    on, the previous level's features are pixel-unshuffled, concatenated with
    the gatepost features and merged back to the level width by a 1x1 conv.
    Decoder levels fuse the upsampled deeper features with the encoder skip via
    SKFF before their own HWAB.
    """

    def __init__(self, config: NetworkConfig, params: ParamStore):
        self.config = config
        self.params = params
        cfg, widths = config, config.width_schedule
        att = cfg.attention
        self.gatepost = Conv(params, "gatepost", cfg.in_channels, cfg.base_width, 3)
        self.enc = [HWAB(params, f"enc.L{i + 1}.hwab", widths[i], att) for i in range(cfg.levels)]
        self.merge = {i: Conv(params, f"enc.L{i + 1}.merge", 4 * widths[i - 1] + cfg.base_width, widths[i], 1)
                      for i in range(1, cfg.levels)}
        self.up = {i: Conv(params, f"dec.L{i + 1}.up", widths[i + 1], widths[i], 1)
                   for i in reversed(range(cfg.levels - 1))}
        self.skff = {i: SKFF(params, f"dec.L{i + 1}.skff", widths[i], 2, att.skff_reduction, att.skff_floor)
                     for i in reversed(range(cfg.levels - 1))}
        self.dec = {i: HWAB(params, f"dec.L{i + 1}.hwab", widths[i], att)
                    for i in reversed(range(cfg.levels - 1))}
        self.out = Conv(params, "out", cfg.base_width, cfg.in_channels, 3)

    def __call__(self, y: Tensor) -> Tensor:
        return forward(self, y)


def build(config: NetworkConfig, seed: int = 0, dtype=SINGLE) -> HWMNet:
    """Construct a network with deterministic parameters drawn from ``seed``."""
    config.validate()
    return HWMNet(config, ParamStore(seed=seed, dtype=dtype))


def _body(net: HWMNet, y: Tensor) -> Tensor:
    cfg = net.config
    _, _, h, w = y.shape
    enc = []
    for i in range(cfg.levels):
        g = net.gatepost(bilinear_resize(y, h >> i, w >> i))
        if i == 0:
            feat = g
        else:
            feat = net.merge[i](ops.concat_channels([pixel_unshuffle(enc[-1], 2), g]))
        enc.append(net.enc[i](feat))
    u = enc[-1]
    for i in reversed(range(cfg.levels - 1)):
        _, _, hi, wi = enc[i].shape
        up = net.up[i](bilinear_resize(u, hi, wi))
        u = net.dec[i](net.skff[i]([up, enc[i]]))
    return net.out(u)


def forward(net: HWMNet, y: Tensor) -> Tensor:
    """Enhance ``y`` (n, in_channels, h, w); any h, w >= pad_multiple.

    Inputs are reflect-padded on the bottom/right to a multiple of
    ``pad_multiple`` and the result is cropped back, so the output shape always
    equals the input shape.
    """
    cfg = net.config
    if y.ndim != 4 or y.shape[1] != cfg.in_channels:
        raise InvalidArgument(f"expected (n, {cfg.in_channels}, h, w) input, got {y.shape}")
    m = cfg.pad_multiple
    _, _, h, w = y.shape
    if h < m or w < m:
        raise InvalidArgument(f"input {h}x{w} smaller than pad multiple {m}")
    spec = PadSpec.to_multiple(h, w, m)
    if spec.bottom >= h or spec.right >= w:
        raise InvalidArgument(f"input {h}x{w} too small to reflect-pad to a multiple of {m}")
    padded = pad_reflect(y, spec) if (spec.bottom or spec.right) else y
    out = _body(net, padded)
    if spec.bottom or spec.right:
        out = crop(out, spec)
    return ops.add(out, y) if cfg.global_residual else out


def charbonnier_loss(x_hat: Tensor, x: Tensor, eps: float = CHARBONNIER_EPS,
                     mode: str = "elementwise-mean") -> Tensor:
    """Smooth L1: mean of sqrt(d^2 + eps^2), or sqrt(||d||^2 + eps^2) with mode="global-norm"."""
    if x_hat.shape != x.shape:
        raise InvalidArgument(f"charbonnier_loss shape mismatch {x_hat.shape} vs {x.shape}")
    sq = ops.square(ops.sub(x_hat, x))
    e2 = eps * eps
    if mode in ("elementwise-mean", "mean"):
        # Averaging the excess over eps keeps identical inputs at exactly eps.
        return ops.add_scalar(ops.mean_all(ops.add_scalar(ops.sqrt(ops.add_scalar(sq, e2)), -eps)), eps)
    if mode in ("global-norm", "global"):
        return ops.sqrt(ops.add_scalar(ops.sum_all(sq), e2))
    raise InvalidArgument(f"unknown charbonnier mode {mode!r}")


def enhance(net: HWMNet, image: np.ndarray) -> np.ndarray:
    """Inference helper: (3, h, w) or (n, 3, h, w) array in, same-shaped float32 array out (unclamped)."""
    from .autograd import no_grad

    arr = np.asarray(image, dtype=net.params.dtype)
    squeeze = arr.ndim == 3
    if squeeze:
        arr = arr[None]
    with no_grad():
        out = forward(net, Tensor(arr)).data
    return out[0] if squeeze else out
