"""HWMNet: half wavelet attention M-Net+ for low-light image enhancement, in numpy."""
from .autograd import DOUBLE, SINGLE, Tensor, backward, no_grad
from .blocks import DAU, HWAB, SKFF, AttentionConfig, ChannelAttention, SpatialAttention
from .cost import CostReport, count_cost
from .metrics import MetricReport, psnr, ssim
from .model import HWMNet, NetworkConfig, build, charbonnier_loss, enhance, forward
from .params import ParamStore
from .train import Adam, Trainer, TrainConfig, cosine_lr, train

__version__ = "0.1.0"

__all__ = [
    "DOUBLE", "SINGLE", "Tensor", "backward", "no_grad",
    "DAU", "HWAB", "SKFF", "AttentionConfig", "ChannelAttention", "SpatialAttention",
    "CostReport", "count_cost", "MetricReport", "psnr", "ssim",
    "HWMNet", "NetworkConfig", "build", "charbonnier_loss", "enhance", "forward",
    "ParamStore", "Adam", "Trainer", "TrainConfig", "cosine_lr", "train",
]
