"""Analytic FLOPs and parameter accounting for HWMNet.

Conventions (one forward pass, batch 1):

* convolution: 2 FLOPs per multiply-accumulate, 2 * k^2 * c_in * c_out * h * w
  (bias adds not counted); parameters k^2 * c_in * c_out + c_out
* ReLU / PReLU / add / gating multiply: 1 FLOP per output element
* sigmoid: 4 FLOPs per element; softmax: 3 per element
* mean / max pooling: 1 FLOP per input element
* bilinear resize: 6 FLOPs per output element (2 taps, 2 axes)
* Haar DWT / IWT: 4 FLOPs per output element
* split / concat / pixel (un)shuffle / pad / crop: free

Costs are taken at the padded size the network actually runs at.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .model import NetworkConfig
from .resample import PadSpec

REFERENCE_FLOPS_400x592 = 0.92e12


@dataclass(frozen=True)
class LayerCost:
    name: str
    kind: str
    flops: int
    params: int = 0


@dataclass
class CostReport:
    input_shape: tuple[int, int, int, int]
    layers: list[LayerCost] = field(default_factory=list)

    @property
    def flops(self) -> int:
        return sum(l.flops for l in self.layers)

    @property
    def params(self) -> int:
        return sum(l.params for l in self.layers)

    def by_kind(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for l in self.layers:
            out[l.kind] = out.get(l.kind, 0) + l.flops
        return out

    def to_csv(self) -> str:
        lines = ["layer,kind,flops,params"]
        lines += [f"{l.name},{l.kind},{l.flops},{l.params}" for l in self.layers]
        lines.append(f"total,,{self.flops},{self.params}")
        return "\n".join(lines) + "\n"

    def to_text(self, reference_flops: float | None = None) -> str:
        n, c, h, w = self.input_shape
        lines = [f"input {n}x{c}x{h}x{w}", f"{'kind':<10} {'GFLOPs':>12} {'share':>7}"]
        total = self.flops
        for kind, f in sorted(self.by_kind().items(), key=lambda kv: -kv[1]):
            lines.append(f"{kind:<10} {f / 1e9:12.3f} {100 * f / total:6.2f}%")
        lines.append(f"{'total':<10} {total / 1e9:12.3f}  ({total / 1e12:.4f} T)")
        lines.append(f"parameters {self.params}")
        if reference_flops:
            lines.append(f"reference  {reference_flops / 1e12:.2f} T  ratio {total / reference_flops:.3f}")
        return "\n".join(lines) + "\n"


class _Counter:
    def __init__(self, report: CostReport):
        self.r = report

    def add(self, name, kind, flops, params=0):
        self.r.layers.append(LayerCost(name, kind, int(flops), int(params)))

    def conv(self, name, cin, cout, k, h, w):
        self.add(name, "conv", 2 * k * k * cin * cout * h * w, k * k * cin * cout + cout)

    def ca(self, name, c, h, w, r):
        hid = c // r
        self.add(f"{name}.pool", "pool", c * h * w)
        self.conv(f"{name}.fc1", c, hid, 1, 1, 1)
        self.add(f"{name}.relu", "act", hid)
        self.conv(f"{name}.fc2", hid, c, 1, 1, 1)
        self.add(f"{name}.sigmoid", "act", 4 * c)
        self.add(f"{name}.gate", "elementwise", c * h * w)

    def sa(self, name, c, h, w, k):
        self.add(f"{name}.pool", "pool", 2 * c * h * w)
        self.conv(f"{name}.conv", 2, 1, k, h, w)
        self.add(f"{name}.sigmoid", "act", 4 * h * w)
        self.add(f"{name}.gate", "elementwise", c * h * w)

    def dau(self, name, c, h, w, att):
        self.conv(f"{name}.body.conv1", c, c, 3, h, w)
        self.add(f"{name}.body.act", "act", c * h * w, c)
        self.conv(f"{name}.body.conv2", c, c, 3, h, w)
        self.ca(f"{name}.ca", c, h, w, att.ca_reduction)
        self.sa(f"{name}.sa", c, h, w, att.sa_kernel)
        self.conv(f"{name}.merge", 2 * c, c, 1, h, w)
        self.add(f"{name}.residual", "elementwise", c * h * w)

    def hwab(self, name, c, h, w, att):
        half = c // 2
        self.add(f"{name}.dwt", "wavelet", 4 * half * h * w)
        self.dau(f"{name}.dau", 2 * c, h // 2, w // 2, att)
        self.add(f"{name}.iwt", "wavelet", 4 * half * h * w)
        self.conv(f"{name}.fuse", c, c, 3, h, w)
        self.add(f"{name}.act", "act", c * h * w, c)
        self.conv(f"{name}.shortcut", c, c, 1, h, w)
        self.add(f"{name}.add", "elementwise", c * h * w)

    def skff(self, name, c, h, w, att):
        d = max(c // att.skff_reduction, att.skff_floor)
        self.add(f"{name}.sum", "elementwise", c * h * w)
        self.add(f"{name}.pool", "pool", c * h * w)
        self.conv(f"{name}.squeeze", c, d, 1, 1, 1)
        self.add(f"{name}.relu", "act", d)
        for i in range(2):
            self.conv(f"{name}.select{i}", d, c, 1, 1, 1)
        self.add(f"{name}.softmax", "act", 3 * 2 * c)
        self.add(f"{name}.fuse", "elementwise", 3 * c * h * w)


def count_cost(config: NetworkConfig, h: int = 400, w: int = 592, batch: int = 1) -> CostReport:
    """Per-layer FLOPs/parameters of one forward pass on an ``h`` x ``w`` image."""
    spec = PadSpec.to_multiple(h, w, config.pad_multiple)
    H, W = h + spec.bottom, w + spec.right
    cin = config.in_channels
    widths = config.width_schedule
    att = config.attention
    report = CostReport((batch, cin, h, w))
    k = _Counter(report)

    for i in range(config.levels):
        hi, wi = H >> i, W >> i
        if i:
            k.add(f"enc.L{i + 1}.resize", "resize", 6 * cin * hi * wi)
        gate_name = "gatepost" if i == 0 else f"gatepost@L{i + 1}"
        gate_params = 9 * cin * config.base_width + config.base_width if i == 0 else 0
        k.add(gate_name, "conv", 2 * 9 * cin * config.base_width * hi * wi, gate_params)
        if i:
            k.conv(f"enc.L{i + 1}.merge", 4 * widths[i - 1] + config.base_width, widths[i], 1, hi, wi)
        k.hwab(f"enc.L{i + 1}.hwab", widths[i], hi, wi, att)
    for i in reversed(range(config.levels - 1)):
        hi, wi = H >> i, W >> i
        k.add(f"dec.L{i + 1}.resize", "resize", 6 * widths[i + 1] * hi * wi)
        k.conv(f"dec.L{i + 1}.up", widths[i + 1], widths[i], 1, hi, wi)
        k.skff(f"dec.L{i + 1}.skff", widths[i], hi, wi, att)
        k.hwab(f"dec.L{i + 1}.hwab", widths[i], hi, wi, att)
    k.conv("out", config.base_width, cin, 3, H, W)
    if config.global_residual:
        k.add("residual", "elementwise", cin * h * w)

    if batch != 1:
        report.layers = [LayerCost(l.name, l.kind, l.flops * batch, l.params) for l in report.layers]
    return report
