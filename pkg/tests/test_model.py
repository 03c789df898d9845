import math

import numpy as np
import pytest

from hwmnet.autograd import DOUBLE, Tensor, no_grad
from hwmnet.errors import InvalidArgument
from hwmnet.gradcheck import grad_check, tiny_double_net
from hwmnet.model import NetworkConfig, build, charbonnier_loss, enhance, forward
from oracles import hwmnet_params


class TestBuild:
    def test_default_param_count_matches_closed_form(self):
        net = build(NetworkConfig(), seed=0)
        assert net.params.count() == hwmnet_params([96] * 4) == 6_062_916

    @pytest.mark.parametrize("widths", [(16, 16, 16), (8, 12, 16, 20), (32, 16)])
    def test_schedules(self, widths):
        cfg = NetworkConfig(levels=len(widths), base_width=widths[0], width_schedule=widths)
        assert build(cfg).params.count() == hwmnet_params(list(widths))

    def test_seed_determinism(self):
        a, b = build(NetworkConfig.small(), 42), build(NetworkConfig.small(), 42)
        assert list(a.params) == list(b.params)
        assert all(a.params[k].data.tobytes() == b.params[k].data.tobytes() for k in a.params)
        c = build(NetworkConfig.small(), 43)
        assert any(not np.array_equal(a.params[k].data, c.params[k].data) for k in a.params)

    @pytest.mark.parametrize("kw", [dict(base_width=7), dict(levels=1), dict(base_width=6),
                                    dict(width_schedule=(96, 96)), dict(base_width=16, width_schedule=(16, 15, 16, 16))])
    def test_invalid(self, kw):
        with pytest.raises(InvalidArgument):
            NetworkConfig(**kw)

    def test_config_dict_round_trip(self):
        cfg = NetworkConfig(levels=3, base_width=16, width_schedule=(16, 24, 32), global_residual=False)
        assert NetworkConfig.from_dict(cfg.to_dict()) == cfg

    def test_pad_multiple(self):
        assert NetworkConfig(levels=4).pad_multiple == 16


class TestForward:
    @pytest.mark.parametrize("h,w", [(64, 64), (100, 150), (33, 47), (16, 16)])
    def test_shape_contract(self, rng, h, w):
        net = build(NetworkConfig.small(3, 8), seed=1)
        y = Tensor(rng.random((1, 3, h, w)).astype(np.float32))
        with no_grad():
            assert forward(net, y).shape == (1, 3, h, w)

    def test_zero_init_identity(self, rng):
        net = build(NetworkConfig.small(3, 8), seed=1)
        net.params.fill(0.0)
        y = rng.random((2, 3, 37, 50)).astype(np.float32)
        assert np.array_equal(forward(net, Tensor(y)).data, y)

    def test_no_residual_zero_init_is_zero(self, rng):
        net = build(NetworkConfig.small(3, 8, global_residual=False), seed=1)
        net.params.fill(0.0)
        assert np.all(forward(net, Tensor(rng.random((1, 3, 16, 16)))).data == 0)

    def test_wrong_channels(self):
        net = build(NetworkConfig.small(3, 8))
        with pytest.raises(InvalidArgument):
            forward(net, Tensor(np.zeros((1, 4, 16, 16), np.float32)))

    def test_too_small(self):
        net = build(NetworkConfig.small(3, 8))
        with pytest.raises(InvalidArgument):
            forward(net, Tensor(np.zeros((1, 3, 7, 16), np.float32)))

    def test_batch_independence(self, rng):
        net = build(NetworkConfig.small(3, 8), seed=2, dtype=DOUBLE)
        y = rng.random((2, 3, 16, 24))
        both = enhance(net, y)
        np.testing.assert_allclose(both[1], enhance(net, y[1]), rtol=0, atol=1e-10)

    def test_end_to_end_gradcheck(self, rng):
        net = tiny_double_net()
        gt = Tensor(rng.random((1, 3, 16, 16)))
        err = grad_check(lambda t: charbonnier_loss(forward(net, t), gt), rng.random((1, 3, 16, 16)),
                         max_elements=120)
        assert err < 1e-4

    def test_descent_step(self, rng):
        net = build(NetworkConfig.small(3, 8), seed=3, dtype=DOUBLE)
        y, x = Tensor(rng.random((1, 3, 16, 16)) * 0.3), Tensor(rng.random((1, 3, 16, 16)))
        loss = charbonnier_loss(forward(net, y), x)
        loss.backward()
        before = loss.item()
        for p in net.params.values():
            p.data -= 1e-4 * p.grad
        with no_grad():
            assert charbonnier_loss(forward(net, y), x).item() < before


class TestCharbonnier:
    @pytest.mark.parametrize("mode", ["elementwise-mean", "global-norm"])
    def test_identical_is_eps(self, rng, mode):
        x = rng.random((2, 3, 4, 4))
        assert charbonnier_loss(Tensor(x), Tensor(x), mode=mode).item() == 1e-3

    def test_single_element(self):
        v = charbonnier_loss(Tensor(np.array([3e-3])), Tensor(np.array([0.0]))).item()
        assert v == pytest.approx(math.sqrt(9e-6 + 1e-6), rel=1e-12)
        assert v == pytest.approx(3.1623e-3, abs=1e-7)

    def test_l1_asymptote(self):
        v = charbonnier_loss(Tensor(np.array([1.0])), Tensor(np.array([0.0]))).item()
        assert v == pytest.approx(1.0000005, abs=1e-9)

    def test_global_norm_is_literal_formula(self, rng):
        a, b = rng.random((2, 3, 4, 4)), rng.random((2, 3, 4, 4))
        v = charbonnier_loss(Tensor(a), Tensor(b), mode="global-norm").item()
        assert v == pytest.approx(math.sqrt(np.sum((a - b) ** 2) + 1e-6), rel=1e-12)

    @pytest.mark.parametrize("mode", ["elementwise-mean", "global-norm"])
    def test_positivity(self, rng, mode):
        a = rng.random((1, 3, 4, 4))
        assert charbonnier_loss(Tensor(a), Tensor(a + 1e-4), mode=mode).item() > 1e-3

    def test_single_precision_identity(self, rng):
        x = rng.random((1, 3, 8, 8)).astype(np.float32)
        assert charbonnier_loss(Tensor(x), Tensor(x)).item() == pytest.approx(1e-3, rel=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgument):
            charbonnier_loss(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((1, 3, 4, 5))))

    def test_gradient_at_zero_residual(self):
        x = Tensor(np.zeros((1, 1, 2, 2)), requires_grad=True)
        charbonnier_loss(x, Tensor(np.zeros((1, 1, 2, 2)))).backward()
        assert np.all(np.isfinite(x.grad)) and np.all(x.grad == 0)
