"""PSNR and SSIM with the dynamic range taken from the reference image."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = ["SsimSpec", "dynamic_range", "psnr", "ssim"]


@dataclass(frozen=True)
class SsimSpec:
    window: int = 7
    k1: float = 0.01
    k2: float = 0.03
    stride: int = 1

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("window size must be odd and >= 3")
        if self.k1 <= 0 or self.k2 <= 0 or self.stride < 1:
            raise ValueError("k1, k2 must be positive and stride >= 1")


def dynamic_range(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return float(x.max() - x.min())


def _pair(xhat, x):
    xhat = np.asarray(xhat, dtype=float)
    x = np.asarray(x, dtype=float)
    if xhat.shape != x.shape:
        raise ValueError(f"shape mismatch {xhat.shape} vs {x.shape}")
    return xhat, x


def psnr(xhat: np.ndarray, x: np.ndarray, data_range: float | None = None) -> float:
    """``10 log10(L^2 / MSE)`` with ``L = max(x) - min(x)``.

    Returns ``inf`` for identical images.  Raises for a constant reference.
    """
    xhat, x = _pair(xhat, x)
    L = dynamic_range(x) if data_range is None else float(data_range)
    if L <= 0:
        raise ValueError("reference image is constant; PSNR undefined")
    mse = float(np.mean((xhat - x) ** 2))
    if mse == 0:
        return float("inf")
    return float(10 * np.log10(L * L / mse))


def ssim(
    xhat: np.ndarray,
    x: np.ndarray,
    spec: SsimSpec = SsimSpec(),
    data_range: float | None = None,
) -> float:
    """Mean SSIM over all valid uniform windows.

    Window statistics use population moments (divide by the window size).
    """
    xhat, x = _pair(xhat, x)
    w = spec.window
    if xhat.ndim != 2 or w > min(x.shape):
        raise ValueError(f"window {w} does not fit image of shape {x.shape}")
    L = dynamic_range(x) if data_range is None else float(data_range)
    c1 = (spec.k1 * L) ** 2
    c2 = (spec.k2 * L) ** 2
    if c1 == 0 and np.array_equal(xhat, x):
        return 1.0

    a = sliding_window_view(xhat, (w, w))[:: spec.stride, :: spec.stride]
    b = sliding_window_view(x, (w, w))[:: spec.stride, :: spec.stride]
    mu_a = a.mean(axis=(-2, -1))
    mu_b = b.mean(axis=(-2, -1))
    da = a - mu_a[..., None, None]
    db = b - mu_b[..., None, None]
    var_a = (da * da).mean(axis=(-2, -1))
    var_b = (db * db).mean(axis=(-2, -1))
    cov = (da * db).mean(axis=(-2, -1))
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
