"""Command-line interface: train, infer, eval, flops, gradcheck, selfcheck.

Exit codes: 0 success, 1 validation failure, 2 I/O or format error.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .errors import (CheckpointIOError, HWMNetError, ImageIOError, InvalidArgument, UnsupportedCheckpoint,
                     UnsupportedFormat)

log = logging.getLogger("hwmnet")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class UsageError(InvalidArgument):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _threads():
    """Cap BLAS threads from HWMNET_THREADS (unset: library default)."""
    n = os.environ.get("HWMNET_THREADS")
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    try:
        return threadpool_limits(limits=max(1, int(n)))
    except ValueError:
        raise InvalidArgument(f"HWMNET_THREADS={n!r} is not an integer") from None


def _read_config(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except OSError as exc:
        raise ImageIOError(f"--config {path}: cannot read ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise UnsupportedFormat(f"--config {path}: invalid JSON ({exc})") from exc
    if not isinstance(d, dict):
        raise UnsupportedFormat(f"--config {path}: expected a JSON object")
    return d


def _network_config(args, file_cfg: dict, desk: bool = False):
    from .model import NetworkConfig

    net = dict(file_cfg.get("network", {}))
    if desk:
        net.setdefault("levels", 3)
        net.setdefault("base_width", 16)
    if getattr(args, "levels", None) is not None:
        net["levels"] = args.levels
    if getattr(args, "net_width", None) is not None:
        net["base_width"] = args.net_width
        net.pop("width_schedule", None)
    return NetworkConfig.from_dict(net)


def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--config", help="JSON file with optional 'network' and 'train' sections")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hwmnet", description="HWMNet low-light enhancement toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train on a <root>/low + <root>/high dataset")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--desk", action="store_true", help="test-scale preset: levels 3, width 16, 64px, 2000 iters")
    p.add_argument("--iters", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--patch", type=int)
    p.add_argument("--width", dest="net_width", type=int)
    p.add_argument("--levels", type=int)
    p.add_argument("--loss", choices=["mean", "global"])
    p.add_argument("--lr", type=float, help="initial learning rate")
    p.add_argument("--lr-end", type=float)
    p.add_argument("--no-flips", action="store_true")
    p.add_argument("--eval-data", help="held-out <root>/low + <root>/high for the eval hook")
    p.add_argument("--eval-every", type=int)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--resume", help="checkpoint to continue from")

    p = sub.add_parser("infer", help="enhance an image or a directory of images")
    _add_common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    p = sub.add_parser("eval", help="PSNR/SSIM of low (or enhanced low) against gt")
    _add_common(p)
    p.add_argument("--weights", help="enhance --low with this checkpoint first; omit to score --low as-is")
    p.add_argument("--low", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--center-crop", type=int)
    p.add_argument("--out", help="directory for metrics.csv, metrics.txt and metrics.png")

    p = sub.add_parser("flops", help="FLOPs/parameter report")
    _add_common(p)
    p.add_argument("--height", type=int, default=400)
    p.add_argument("--width", type=int, default=592)
    p.add_argument("--levels", type=int)
    p.add_argument("--net-width", type=int)
    p.add_argument("--out", help="directory for flops.csv and flops.png")

    p = sub.add_parser("gradcheck", help="double-precision finite-difference suite")
    _add_common(p)
    p.add_argument("--quick", action="store_true", help="sample fewer entries per tensor")

    p = sub.add_parser("selfcheck", help="fast invariant checks")
    _add_common(p)
    return parser


# verbs ------------------------------------------------------------------


def cmd_train(args) -> int:
    from .data import index_root
    from .model import build
    from .plotting import plot_loss_curve
    from .train import Trainer, TrainConfig, write_loss_csv

    file_cfg = _read_config(args.config)
    tc = dict(TrainConfig.desk().to_dict() if args.desk else TrainConfig().to_dict())
    tc.update(file_cfg.get("train", {}))
    overrides = {"iterations": args.iters, "batch": args.batch, "patch": args.patch, "lr_start": args.lr,
                 "lr_end": args.lr_end, "eval_every": args.eval_every, "checkpoint_every": args.checkpoint_every}
    tc.update({k: v for k, v in overrides.items() if v is not None})
    if args.loss:
        tc["loss_mode"] = {"mean": "elementwise-mean", "global": "global-norm"}[args.loss]
    if args.no_flips:
        tc["flips"] = False
    tc["seed"] = args.seed
    cfg = TrainConfig.from_dict(tc)

    source = index_root(args.data, "train")
    for orphan in source.orphans:
        log.warning("unpaired file ignored: %s", orphan)
    eval_source = index_root(args.eval_data, "test") if args.eval_data else None
    out = Path(args.out)
    if args.resume:
        trainer = Trainer.resume(args.resume, source, eval_source, cfg)
    else:
        net = build(_network_config(args, file_cfg, args.desk), seed=args.seed)
        trainer = Trainer(net, source, cfg, eval_source)
    print(f"training {len(source)} pairs, {net_summary(trainer.net)}, {cfg.iterations} iterations")
    every = max(1, cfg.iterations // 20)

    def report(t, lr, loss):
        if t % every == 0 or t == cfg.iterations - 1:
            print(f"iter {t:7d}  lr {lr:.3e}  loss {loss:.6f}", flush=True)

    trainer.run(out_dir=out, on_step=report)
    write_loss_csv(out / "loss.csv", trainer.history)
    plot_loss_curve(trainer.history, out / "loss_curve.png")
    if trainer.evals:
        with (out / "eval.csv").open("w") as f:
            f.write("iteration,psnr_db,ssim\n")
            for t, p, s in trainer.evals:
                f.write(f"{t},{p:.6f},{s:.6f}\n")
    print(f"wrote {out / 'last.hwmn'}, {out / 'loss.csv'}, {out / 'loss_curve.png'}")
    return EXIT_OK


def net_summary(net) -> str:
    c = net.config
    return f"levels={c.levels} widths={list(c.width_schedule)} params={net.params.count()}"


def _list_images(path: Path) -> list[Path]:
    from .data import IMAGE_SUFFIXES

    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    if path.is_file():
        return [path]
    raise ImageIOError(f"--input {path}: no such file or directory")


def _check_config_matches(args, net) -> None:
    file_cfg = _read_config(args.config)
    if "network" in file_cfg:
        from .model import NetworkConfig

        want = NetworkConfig.from_dict(file_cfg["network"])
        if want != net.config:
            raise InvalidArgument(f"--config network {want} does not match checkpoint {net.config}")


def cmd_infer(args) -> int:
    from .data import load_image, save_image
    from .model import enhance
    from .train import network_from_checkpoint

    net = network_from_checkpoint(args.weights)
    _check_config_matches(args, net)
    out_dir = Path(args.output)
    images = _list_images(Path(args.input))
    if not images:
        raise ImageIOError(f"--input {args.input}: no PNG/JPEG images found")
    for path in images:
        result = enhance(net, load_image(path).data[0])
        target = out_dir / f"{path.stem}.png"
        save_image(result, target)
        print(f"{path} -> {target}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .data import center_crop, index_dataset, quantize
    from .metrics import MetricReport
    from .model import enhance
    from .plotting import plot_metrics
    from .train import network_from_checkpoint

    index = index_dataset(args.low, args.gt, "test")
    for orphan in index.orphans:
        log.warning("unpaired file ignored: %s", orphan)
    net = None
    if args.weights:
        net = network_from_checkpoint(args.weights)
        _check_config_matches(args, net)
    report = MetricReport()
    for i, name in enumerate(index.names()):
        low, gt = index.pair(i)
        if args.center_crop:
            low, gt = center_crop(low, args.center_crop), center_crop(gt, args.center_crop)
        pred = quantize(enhance(net, low)) if net is not None else low
        report.add(name, pred, gt)
    print(report.to_text(), end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(report.to_csv())
        (out / "metrics.txt").write_text(report.to_text())
        plot_metrics(report, out / "metrics.png")
    return EXIT_OK


def cmd_flops(args) -> int:
    from .cost import REFERENCE_FLOPS_400x592, count_cost
    from .plotting import plot_cost

    ns = argparse.Namespace(levels=args.levels, net_width=args.net_width)
    cfg = _network_config(ns, _read_config(args.config))
    report = count_cost(cfg, args.height, args.width)
    ref = REFERENCE_FLOPS_400x592 if (args.height, args.width) == (400, 592) else None
    print(report.to_text(ref), end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "flops.csv").write_text(report.to_csv())
        plot_cost(report, out / "flops.png", ref)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import suite

    failed = 0
    for name, err, tol in suite(quick=args.quick):
        ok = err < tol
        failed += not ok
        print(f"{name:<24} max rel err {err:.3e}  (tol {tol:.0e})  {'ok' if ok else 'FAIL'}")
    return EXIT_OK if not failed else EXIT_INVALID


def selfcheck(seed: int = 0) -> list[tuple[str, bool, str]]:
    """Quick invariants: wavelet reconstruction, shuffle round trip, zero-init identity, metric closed forms."""
    from .autograd import Tensor, no_grad
    from .metrics import psnr, ssim
    from .model import NetworkConfig, build, charbonnier_loss, forward
    from .resample import dwt_haar, iwt_haar, pixel_shuffle, pixel_unshuffle

    rng = np.random.default_rng(seed)
    out = []
    x = Tensor(rng.standard_normal((2, 6, 16, 16)))
    err = float(np.abs(iwt_haar(dwt_haar(x)).data - x.data).max())
    out.append(("wavelet reconstruction", err < 1e-12, f"max abs err {err:.2e}"))
    e = abs(np.linalg.norm(dwt_haar(x).data) - np.linalg.norm(x.data)) / np.linalg.norm(x.data)
    out.append(("wavelet energy", e < 1e-5, f"rel diff {e:.2e}"))
    xs = Tensor(rng.standard_normal((2, 8, 8, 8)).astype(np.float32))
    same = np.array_equal(pixel_shuffle(pixel_unshuffle(xs)).data, xs.data)
    out.append(("pixel shuffle round trip", same, "bitwise" if same else "mismatch"))
    net = build(NetworkConfig.small(3, 8), seed=seed)
    net.params.fill(0.0)
    y = Tensor(rng.random((1, 3, 20, 28)).astype(np.float32))
    with no_grad():
        ident = np.array_equal(forward(net, y).data, y.data)
    out.append(("zero-init identity", ident, "output == input" if ident else "output differs"))
    c = charbonnier_loss(y, y).item()
    out.append(("charbonnier(x, x)", abs(c - 1e-3) < 1e-9, f"{c:.6g}"))
    p = psnr(np.full((3, 16, 16), 0.5), np.zeros((3, 16, 16)))
    out.append(("psnr closed form", abs(p - 6.0206) < 1e-3, f"{p:.4f} dB"))
    s = ssim(np.full((3, 16, 16), 0.25), np.full((3, 16, 16), 0.75))
    out.append(("ssim closed form", abs(s - 0.6) < 1e-3, f"{s:.4f}"))
    return out


def cmd_selfcheck(args) -> int:
    results = selfcheck(args.seed)
    for name, ok, detail in results:
        print(f"{name:<26} {'ok' if ok else 'FAIL':<5} {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_INVALID


VERBS = {"train": cmd_train, "infer": cmd_infer, "eval": cmd_eval, "flops": cmd_flops,
         "gradcheck": cmd_gradcheck, "selfcheck": cmd_selfcheck}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _read_config(args.config)
        with _threads():
            return VERBS[args.verb](args)
    except (ImageIOError, CheckpointIOError, UnsupportedFormat, UnsupportedCheckpoint) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except HWMNetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
