"""Analytic ellipse phantoms on the unit square ``[-0.5, 0.5]^2``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = ["Ellipse", "ellipse_phantom", "shepp_logan", "PRESETS", "preset"]


@dataclass(frozen=True)
class Ellipse:
    intensity: float
    axes: tuple[float, float]  # semi-axes (a along x', b along y')
    center: tuple[float, float] = (0.0, 0.0)
    angle: float = 0.0  # degrees, counter-clockwise

    def __post_init__(self):
        if self.axes[0] <= 0 or self.axes[1] <= 0:
            raise ValueError("ellipse axes must be positive")


# Modified Shepp-Logan (Toft), table on [-1, 1]^2: intensity, a, b, x0, y0, phi.
_SHEPP_LOGAN = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0),
]


def _pixel_grid(size: int):
    c = (np.arange(size) - (size - 1) / 2) / size
    return np.meshgrid(c, -c)


def ellipse_phantom(spec: Iterable[Ellipse], size: int) -> np.ndarray:
    """Sum of ellipse indicators times intensities, clamped to ``[0, 1]``.

    A pixel belongs to an ellipse when its centre does.
    """
    X, Y = _pixel_grid(size)
    img = np.zeros((size, size))
    for e in spec:
        th = np.deg2rad(e.angle)
        dx, dy = X - e.center[0], Y - e.center[1]
        u = dx * np.cos(th) + dy * np.sin(th)
        v = -dx * np.sin(th) + dy * np.cos(th)
        img += e.intensity * ((u / e.axes[0]) ** 2 + (v / e.axes[1]) ** 2 <= 1.0)
    return np.clip(img, 0.0, 1.0)


def _shepp_logan_ellipses(symmetric: bool = False) -> list[Ellipse]:
    out = [
        Ellipse(i, (a / 2, b / 2), (x / 2, y / 2), phi)
        for i, a, b, x, y, phi in _SHEPP_LOGAN
    ]
    if symmetric:
        # pair every ellipse with its 180 degree rotation at half intensity
        out = [Ellipse(e.intensity / 2, e.axes, c, e.angle)
               for e in out for c in (e.center, (-e.center[0], -e.center[1]))]
    return out


def shepp_logan(size: int, symmetric: bool = False) -> np.ndarray:
    """Modified Shepp-Logan phantom with values in ``[0, 1]``.

    ``symmetric=True`` averages every ellipse with its point reflection,
    giving a phantom invariant under 180 degree rotation.
    """
    if size < 16:
        raise ValueError("shepp_logan needs size >= 16")
    return ellipse_phantom(_shepp_logan_ellipses(symmetric), size)


def _e(i, a, b, x=0.0, y=0.0, phi=0.0):
    return Ellipse(i, (a, b), (x, y), phi)


# Three distinct stand-in test images.
PRESETS: dict[str, Sequence[Ellipse]] = {
    "shepp-logan": _shepp_logan_ellipses(),
    "disks": [
        _e(0.5, 0.42, 0.38),
        _e(0.4, 0.10, 0.10, -0.18, 0.12),
        _e(0.3, 0.07, 0.07, 0.17, 0.15),
        _e(-0.3, 0.12, 0.05, 0.05, -0.18, 30),
        _e(0.5, 0.04, 0.04, 0.12, -0.05),
    ],
    "abdomen": [
        _e(0.45, 0.45, 0.33),
        _e(0.25, 0.15, 0.10, -0.15, 0.05, 20),
        _e(0.2, 0.08, 0.12, 0.18, 0.02, -10),
        _e(0.55, 0.05, 0.05, 0.0, -0.22),
        _e(-0.2, 0.06, 0.03, 0.05, 0.18, 45),
        _e(0.3, 0.03, 0.03, -0.25, -0.12),
    ],
}


def preset(name: str, size: int) -> np.ndarray:
    try:
        spec = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown phantom {name!r}; choose from {sorted(PRESETS)}") from None
    return ellipse_phantom(spec, size)
