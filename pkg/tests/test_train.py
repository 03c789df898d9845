import math

import numpy as np
import pytest

from hwmnet.checkpoint import Checkpoint, MAGIC, decode, encode, load_checkpoint, save_checkpoint
from hwmnet.data import ArrayPairs
from hwmnet.errors import CheckpointIOError, InvalidArgument, InvalidState, NonFiniteLoss, UnsupportedCheckpoint
from hwmnet.model import NetworkConfig, build
from hwmnet.train import Adam, TrainConfig, Trainer, cosine_lr, network_from_checkpoint, train
from oracles import hwmnet_params

TINY = NetworkConfig.small(3, 8)


def tiny_source(n=2, size=32, seed=0):
    r = np.random.default_rng(seed)
    pairs = []
    for _ in range(n):
        gt = r.random((3, size, size)).astype(np.float32)
        pairs.append((gt * 0.25, gt))
    return ArrayPairs(pairs)


def tiny_cfg(**kw):
    base = dict(iterations=12, batch=2, patch=16, eval_crop=16, lr_start=1e-3, seed=5)
    base.update(kw)
    return TrainConfig(**base)


class TestSchedule:
    def test_endpoints(self):
        assert cosine_lr(0, 100_000) == 1e-4
        assert cosine_lr(100_000, 100_000) == 1e-6
        assert cosine_lr(50_000, 100_000) == pytest.approx(5.05e-5, rel=1e-12)

    def test_clamped_past_end(self):
        assert cosine_lr(250_000, 100_000) == 1e-6

    def test_monotone(self):
        lrs = [cosine_lr(t, 1000) for t in range(1001)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))

    def test_invalid(self):
        with pytest.raises(InvalidArgument):
            cosine_lr(-1, 10)
        with pytest.raises(InvalidArgument):
            cosine_lr(0, 0)


class TestAdam:
    def test_zero_grad_is_noop(self):
        net = build(TINY, seed=1)
        before = net.params.state()
        for p in net.params.values():
            p.grad = np.zeros_like(p.data)
        Adam(net.params).step(1e-3)
        assert all(np.array_equal(before[k], net.params[k].data) for k in before)

    def test_first_step(self, rng):
        net = build(TINY, seed=1)
        before = {k: v.astype(np.float64) for k, v in net.params.state().items()}
        grads = {}
        for k, p in net.params.items():
            grads[k] = rng.standard_normal(p.shape).astype(np.float32)
            p.grad = grads[k]
        Adam(net.params).step(1e-3)
        for k, p in net.params.items():
            g = grads[k].astype(np.float64)
            expect = before[k] - 1e-3 * g / (np.abs(g) + 1e-8)
            np.testing.assert_allclose(p.data, expect, rtol=1e-5, atol=1e-7)

    def test_missing_grads(self):
        net = build(TINY, seed=1)
        with pytest.raises(InvalidState):
            Adam(net.params).step(1e-3)


class TestCheckpoint:
    def _trained(self, tmp_path):
        tr = Trainer(build(TINY, seed=1), tiny_source(), tiny_cfg(iterations=3))
        tr.run()
        return tr

    def test_round_trip_bytes(self, tmp_path):
        ck = self._trained(tmp_path).checkpoint()
        save_checkpoint(tmp_path / "a.hwmn", ck)
        save_checkpoint(tmp_path / "b.hwmn", load_checkpoint(tmp_path / "a.hwmn"))
        a, b = (tmp_path / "a.hwmn").read_bytes(), (tmp_path / "b.hwmn").read_bytes()
        assert a == b and a[:4] == MAGIC

    def test_contents(self, tmp_path):
        tr = self._trained(tmp_path)
        ck = decode(encode(tr.checkpoint()))
        assert ck.iteration == 3 and ck.optimizer.step == 3
        assert ck.param_count() == hwmnet_params([8, 8, 8])
        assert NetworkConfig.from_dict(ck.network) == TINY
        assert TrainConfig.from_dict(ck.train) == tr.cfg
        net = network_from_checkpoint(ck)
        assert all(np.array_equal(net.params[k].data, tr.net.params[k].data) for k in net.params)

    def test_default_config_count(self):
        ck = Checkpoint(network=NetworkConfig().to_dict(), params=build(NetworkConfig()).params.state())
        assert decode(encode(ck)).param_count() == 6_062_916

    def test_bad_magic_and_version(self, tmp_path):
        data = bytearray(encode(self._trained(tmp_path).checkpoint()))
        with pytest.raises(UnsupportedCheckpoint):
            decode(b"XXXX" + bytes(data[4:]))
        data[4] = 99
        with pytest.raises(UnsupportedCheckpoint):
            decode(bytes(data))

    def test_truncated_and_trailing(self, tmp_path):
        data = encode(self._trained(tmp_path).checkpoint())
        for cut in (3, 10, len(data) // 2, len(data) - 1):
            with pytest.raises(CheckpointIOError):
                decode(data[:cut])
        with pytest.raises(UnsupportedCheckpoint):
            decode(data + b"\0")

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointIOError):
            load_checkpoint(tmp_path / "none.hwmn")


class TestTrainer:
    def test_iteration_zero_identity_loss(self):
        gt = np.random.default_rng(0).random((3, 32, 32)).astype(np.float32)
        net = build(TINY, seed=1)
        net.params.fill(0.0)
        tr = Trainer(net, ArrayPairs([(gt, gt)]), tiny_cfg(iterations=1))
        assert tr.step() == pytest.approx(1e-3, rel=1e-5)

    def test_loss_decreases(self):
        tr = Trainer(build(TINY, seed=1), tiny_source(n=1), tiny_cfg(iterations=60, batch=1, flips=False))
        tr.run()
        losses = [r[2] for r in tr.history]
        assert np.mean(losses[-10:]) < np.mean(losses[:10])

    def test_resume_is_bitwise(self, tmp_path):
        src = tiny_source()
        full = Trainer(build(TINY, seed=1), src, tiny_cfg())
        full.run()
        part = Trainer(build(TINY, seed=1), src, tiny_cfg())
        part.run(until=5, out_dir=tmp_path)
        resumed = Trainer.resume(tmp_path / "last.hwmn", src)
        assert resumed.iteration == 5
        resumed.run()
        for k in full.net.params:
            assert full.net.params[k].data.tobytes() == resumed.net.params[k].data.tobytes()
        assert [r[2] for r in full.history[5:]] == [r[2] for r in resumed.history]

    def test_sampling_is_stateless(self):
        tr = Trainer(build(TINY, seed=1), tiny_source(n=3), tiny_cfg())
        a = tr.batch(7)
        tr.batch(2)
        b = tr.batch(7)
        assert np.array_equal(a[0], b[0]) and a[2] == b[2]

    def test_epoch_covers_every_patch_slot(self):
        tr = Trainer(build(TINY, seed=1), tiny_source(n=3), tiny_cfg(batch=1))
        records = [tr.sample(s)[2].record for s in range(30)]
        assert sorted(records) == sorted([0, 1, 2] * 10)

    def test_non_finite(self):
        gt = np.full((3, 32, 32), np.nan, np.float32)
        tr = Trainer(build(TINY, seed=1), ArrayPairs([(gt, gt)]), tiny_cfg())
        with pytest.raises(NonFiniteLoss, match="iteration 0"):
            tr.step()

    def test_patch_must_fit_pad_multiple(self):
        with pytest.raises(InvalidArgument):
            Trainer(build(TINY), tiny_source(), tiny_cfg(patch=12))

    def test_outputs(self, tmp_path):
        src = tiny_source()
        cfg = tiny_cfg(iterations=4, eval_every=2, checkpoint_every=2)
        tr = train(build(TINY, seed=1), src, cfg, out_dir=tmp_path, eval_source=src)
        assert (tmp_path / "ckpt_0000002.hwmn").exists() and (tmp_path / "last.hwmn").exists()
        lines = (tmp_path / "loss.csv").read_text().splitlines()
        assert lines[0] == "iteration,lr,loss" and len(lines) == 5
        assert [e[0] for e in tr.evals] == [2, 4]
        assert math.isfinite(tr.evaluate().mean_psnr)

    def test_config_validation(self):
        with pytest.raises(InvalidArgument):
            TrainConfig(lr_start=1e-6, lr_end=1e-4)
        with pytest.raises(InvalidArgument):
            TrainConfig(loss_mode="l2")
        assert TrainConfig.from_dict(TrainConfig.desk().to_dict()) == TrainConfig.desk()
