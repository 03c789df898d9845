"""Full-reference quality metrics on [0, 1] float images."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autograd import Tensor
from .errors import InvalidArgument

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
K1, K2 = 0.01, 0.03


def _array(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)


def psnr(x_hat, x, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE) with one MSE over every element; capped at 100 dB."""
    a, b = _array(x_hat), _array(x)
    if a.shape != b.shape:
        raise InvalidArgument(f"psnr shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak * peak / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r * r) / (2 * sigma * sigma))
    return g / g.sum()


def _filter(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable 'valid' Gaussian filtering over the last two axes."""
    k = g.size
    out = sliding_window_view(img, k, axis=-1) @ g
    return sliding_window_view(out, k, axis=-2) @ g


def ssim_map(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> np.ndarray:
    g = gaussian_window()
    c1, c2 = (K1 * data_range) ** 2, (K2 * data_range) ** 2
    mu_a, mu_b = _filter(a, g), _filter(b, g)
    var_a = _filter(a * a, g) - mu_a ** 2
    var_b = _filter(b * b, g) - mu_b ** 2
    cov = _filter(a * b, g) - mu_a * mu_b
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))


def ssim(x_hat, x, data_range: float = 1.0) -> float:
    """Single-scale SSIM, 11x11 Gaussian window (sigma 1.5), per channel then averaged."""
    a, b = _array(x_hat), _array(x)
    if a.shape != b.shape:
        raise InvalidArgument(f"ssim shape mismatch {a.shape} vs {b.shape}")
    if a.ndim < 2 or min(a.shape[-2:]) < SSIM_WINDOW:
        raise InvalidArgument(f"ssim needs images at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}")
    per_channel = ssim_map(a, b, data_range).mean(axis=(-2, -1))
    return float(np.mean(per_channel))


@dataclass
class MetricReport:
    names: list[str] = field(default_factory=list)
    psnr: list[float] = field(default_factory=list)
    ssim: list[float] = field(default_factory=list)

    def add(self, name: str, x_hat, x) -> None:
        self.names.append(name)
        self.psnr.append(psnr(x_hat, x))
        self.ssim.append(ssim(x_hat, x))

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr)) if self.psnr else float("nan")

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim)) if self.ssim else float("nan")

    def rows(self):
        yield from zip(self.names, self.psnr, self.ssim)

    def to_csv(self) -> str:
        lines = ["image,psnr_db,ssim"]
        lines += [f"{n},{p:.6f},{s:.6f}" for n, p, s in self.rows()]
        lines.append(f"mean,{self.mean_psnr:.6f},{self.mean_ssim:.6f}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        width = max([len("image"), len("mean")] + [len(n) for n in self.names])
        lines = [f"{'image':<{width}}  {'PSNR(dB)':>9}  {'SSIM':>7}"]
        lines += [f"{n:<{width}}  {p:9.4f}  {s:7.4f}" for n, p, s in self.rows()]
        lines.append(f"{'mean':<{width}}  {self.mean_psnr:9.4f}  {self.mean_ssim:7.4f}")
        return "\n".join(lines) + "\n"
