"""Adam + cosine-annealed training loop with bitwise-resumable checkpoints."""
from __future__ import annotations

import dataclasses
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .autograd import Tensor, no_grad
from .checkpoint import Checkpoint, OptimizerState, load_checkpoint, save_checkpoint
from .data import PATCHES_PER_IMAGE, apply_patch, center_crop, draw_patch, quantize, sample_rng
from .errors import InvalidArgument, InvalidState, NonFiniteLoss
from .metrics import MetricReport
from .model import HWMNet, NetworkConfig, build, charbonnier_loss, forward
from .params import ParamStore

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 100_000
    batch: int = 2
    patch: int = 256
    lr_start: float = 1e-4
    lr_end: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    eval_every: int = 0
    checkpoint_every: int = 0
    loss_mode: str = "elementwise-mean"
    flips: bool = True
    patches_per_image: int = PATCHES_PER_IMAGE
    eval_crop: int = 256
    clip_grad: float | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidArgument(f"iterations must be >= 1, got {self.iterations}")
        if self.batch < 1:
            raise InvalidArgument(f"batch must be >= 1, got {self.batch}")
        if self.lr_end > self.lr_start:
            raise InvalidArgument(f"lr_end {self.lr_end} exceeds lr_start {self.lr_start}")
        if self.patches_per_image < 1:
            raise InvalidArgument("patches_per_image must be >= 1")
        if self.loss_mode not in ("elementwise-mean", "global-norm"):
            raise InvalidArgument(f"unknown loss_mode {self.loss_mode!r}")

    @classmethod
    def desk(cls, **kw) -> "TrainConfig":
        """Test-scale preset: 64x64 patches, 2000 iterations."""
        base = dict(iterations=2000, patch=64, eval_crop=64)
        base.update(kw)
        return cls(**base)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def cosine_lr(t: int, total: int, lr_start: float = 1e-4, lr_end: float = 1e-6) -> float:
    """lr_end + (lr_start - lr_end) * (1 + cos(pi t / T)) / 2, held at lr_end past T."""
    if total < 1:
        raise InvalidArgument(f"schedule length must be >= 1, got {total}")
    if t < 0:
        raise InvalidArgument(f"negative iteration {t}")
    if t >= total:
        return lr_end
    if t == 0:
        return lr_start
    return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + math.cos(math.pi * t / total))


class Adam:
    """Adam with bias correction; moments kept per parameter name in the parameter dtype."""

    def __init__(self, params: ParamStore, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state = OptimizerState(
            0,
            OrderedDict((k, np.zeros_like(t.data)) for k, t in params.items()),
            OrderedDict((k, np.zeros_like(t.data)) for k, t in params.items()),
        )

    def step(self, lr: float) -> None:
        missing = [k for k, t in self.params.items() if t.grad is None]
        if missing:
            raise InvalidState(f"no gradient for {len(missing)} parameters, e.g. {missing[0]}")
        st = self.state
        st.step += 1
        dt = self.params.dtype.type
        b1, b2 = dt(self.beta1), dt(self.beta2)
        c1 = dt(1.0 - self.beta1 ** st.step)
        c2 = dt(1.0 - self.beta2 ** st.step)
        lr_, eps = dt(lr), dt(self.eps)
        for k, p in self.params.items():
            g = p.grad
            m = st.m[k]
            v = st.v[k]
            m *= b1
            m += (dt(1) - b1) * g
            v *= b2
            v += (dt(1) - b2) * (g * g)
            p.data -= lr_ * (m / c1) / (np.sqrt(v / c2) + eps)

    def load(self, state: OptimizerState) -> None:
        if set(state.m) != set(self.state.m):
            raise InvalidArgument("optimizer state does not match parameters")
        self.state.step = state.step
        for k in self.state.m:
            self.state.m[k][...] = state.m[k]
            self.state.v[k][...] = state.v[k]


def _clip(params: ParamStore, max_norm: float) -> None:
    total = math.sqrt(sum(float(np.sum(t.grad.astype(np.float64) ** 2)) for t in params.values()))
    if total > max_norm:
        s = params.dtype.type(max_norm / total)
        for t in params.values():
            t.grad = t.grad * s


class Trainer:
    """Iteration-based trainer.

    Sample ``s = iteration * batch + slot`` is fully determined by
    ``(seed, s)``: an epoch of ``len(source) * patches_per_image`` samples is
    shuffled with a per-epoch stream, and each crop/flip draw uses a stream
    keyed by (seed, record, s).  Resuming therefore needs only the iteration
    counter, parameters and Adam moments.
    """

    def __init__(self, net: HWMNet, source, cfg: TrainConfig, eval_source=None):
        if len(source) == 0:
            raise InvalidArgument("training source is empty")
        if cfg.patch % net.config.pad_multiple:
            raise InvalidArgument(f"patch {cfg.patch} not a multiple of {net.config.pad_multiple}")
        self.net, self.source, self.cfg, self.eval_source = net, source, cfg, eval_source
        self.optimizer = Adam(net.params, cfg.beta1, cfg.beta2, cfg.adam_eps)
        self.iteration = 0
        self.history: list[tuple[int, float, float]] = []
        self.evals: list[tuple[int, float, float]] = []
        self._epoch_cache: tuple[int, np.ndarray] | None = None

    # sampling -----------------------------------------------------------
    def _epoch_order(self, epoch: int) -> np.ndarray:
        if self._epoch_cache is None or self._epoch_cache[0] != epoch:
            n = len(self.source) * self.cfg.patches_per_image
            order = np.random.default_rng([self.cfg.seed, epoch, 0x5EED]).permutation(n)
            self._epoch_cache = (epoch, order)
        return self._epoch_cache[1]

    def sample(self, s: int):
        n = len(self.source) * self.cfg.patches_per_image
        record = int(self._epoch_order(s // n)[s % n]) // self.cfg.patches_per_image
        pair = self.source.pair(record)
        h, w = pair[0].shape[-2:]
        ps = draw_patch(record, h, w, self.cfg.patch, sample_rng(self.cfg.seed, record, s), self.cfg.flips)
        low, gt = apply_patch(pair, ps)
        return low, gt, ps

    def batch(self, t: int):
        items = [self.sample(t * self.cfg.batch + b) for b in range(self.cfg.batch)]
        dtype = self.net.params.dtype
        low = np.stack([i[0] for i in items]).astype(dtype)
        gt = np.stack([i[1] for i in items]).astype(dtype)
        return low, gt, [i[2] for i in items]

    # optimization -------------------------------------------------------
    def lr(self, t: int) -> float:
        return cosine_lr(t, self.cfg.iterations, self.cfg.lr_start, self.cfg.lr_end)

    def step(self) -> float:
        t = self.iteration
        lr = self.lr(t)
        low, gt, samples = self.batch(t)
        self.net.params.zero_grad()
        loss = charbonnier_loss(forward(self.net, Tensor(low)), Tensor(gt), mode=self.cfg.loss_mode)
        value = loss.item()
        if not math.isfinite(value):
            ids = [(self.source.names()[s.record], s.origin, s.hflip, s.vflip) for s in samples]
            raise NonFiniteLoss(f"non-finite loss {value} at iteration {t}, lr {lr:.3e}, batch {ids}")
        loss.backward()
        if self.cfg.clip_grad:
            _clip(self.net.params, self.cfg.clip_grad)
        self.optimizer.step(lr)
        self.history.append((t, lr, value))
        self.iteration += 1
        return value

    def evaluate(self, source=None, crop: int | None = None) -> MetricReport:
        """PSNR/SSIM of the exported (clamped, 8-bit) outputs on center crops."""
        source = source if source is not None else self.eval_source
        return evaluate(self.net, source, crop if crop is not None else self.cfg.eval_crop)

    def run(self, until: int | None = None, out_dir=None,
            on_step: Callable[[int, float, float], None] | None = None) -> list[tuple[int, float, float]]:
        """Train up to iteration ``until`` (default: cfg.iterations); returns the new log rows."""
        until = self.cfg.iterations if until is None else min(until, self.cfg.iterations)
        out = Path(out_dir) if out_dir is not None else None
        start = len(self.history)
        while self.iteration < until:
            value = self.step()
            t = self.iteration
            if on_step:
                on_step(t - 1, self.history[-1][1], value)
            if self.cfg.eval_every and self.eval_source is not None and t % self.cfg.eval_every == 0:
                rep = self.evaluate()
                self.evals.append((t, rep.mean_psnr, rep.mean_ssim))
                log.info("iter %d eval psnr %.3f ssim %.4f", t, rep.mean_psnr, rep.mean_ssim)
            if out is not None and self.cfg.checkpoint_every and t % self.cfg.checkpoint_every == 0:
                save_checkpoint(out / f"ckpt_{t:07d}.hwmn", self.checkpoint())
        if out is not None:
            save_checkpoint(out / "last.hwmn", self.checkpoint())
            write_loss_csv(out / "loss.csv", self.history)
        return self.history[start:]

    # persistence --------------------------------------------------------
    def checkpoint(self) -> Checkpoint:
        st = self.optimizer.state
        return Checkpoint(
            network=self.net.config.to_dict(),
            params=self.net.params.state(),
            iteration=self.iteration,
            train=self.cfg.to_dict(),
            rng={"seed": self.cfg.seed, "next_sample": self.iteration * self.cfg.batch},
            optimizer=OptimizerState(st.step, OrderedDict((k, a.copy()) for k, a in st.m.items()),
                                     OrderedDict((k, a.copy()) for k, a in st.v.items())),
        )

    @classmethod
    def resume(cls, ck: Checkpoint | str | Path, source, eval_source=None, cfg: TrainConfig | None = None) -> "Trainer":
        if not isinstance(ck, Checkpoint):
            ck = load_checkpoint(ck)
        if cfg is None:
            if ck.train is None:
                raise InvalidArgument("checkpoint carries no training config")
            cfg = TrainConfig.from_dict(ck.train)
        net = network_from_checkpoint(ck)
        tr = cls(net, source, cfg, eval_source)
        if ck.optimizer is not None:
            tr.optimizer.load(ck.optimizer)
        tr.iteration = ck.iteration
        return tr


def network_from_checkpoint(ck: Checkpoint | str | Path) -> HWMNet:
    if not isinstance(ck, Checkpoint):
        ck = load_checkpoint(ck)
    net = build(NetworkConfig.from_dict(ck.network), seed=0)
    net.params.load_state(ck.params)
    return net


def evaluate(net: HWMNet, source, crop: int | None = None) -> MetricReport:
    report = MetricReport()
    names = source.names()
    for i in range(len(source)):
        low, gt = source.pair(i)
        if crop:
            low, gt = center_crop(low, crop), center_crop(gt, crop)
        with no_grad():
            out = forward(net, Tensor(low[None].astype(net.params.dtype))).data[0]
        report.add(names[i], quantize(out), gt)
    return report


def write_loss_csv(path, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        f.write("iteration,lr,loss\n")
        for t, lr, loss in rows:
            f.write(f"{t},{lr!r},{loss!r}\n")


def train(net: HWMNet, source, cfg: TrainConfig, out_dir=None, eval_source=None) -> Trainer:
    """Run a full training job and return the finished trainer (history, evals, checkpoint())."""
    tr = Trainer(net, source, cfg, eval_source)
    tr.run(out_dir=out_dir)
    return tr
