"""Measurement noise and data-fidelity losses.

Random draws use numpy's counter-based Philox bit generator seeded with the
integer seed.  A single vectorised draw assigns the ``i``-th variate of the
stream to bin ``i`` in C order, so results depend only on ``(seed, shape)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NoiseSpec",
    "rng",
    "add_gaussian_noise",
    "sample_poisson",
    "apply_noise",
    "realized_snr_db",
    "l2_fidelity",
    "poisson_fidelity",
    "POSITIVITY_FLOOR",
]

POSITIVITY_FLOOR = 1e-8


def rng(seed: int, stream: int | None = None) -> np.random.Generator:
    """Philox-backed generator for ``seed``.

    ``stream`` selects an independent substream of the same seed, keyed
    through ``SeedSequence([seed, stream])``.
    """
    if stream is None:
        return np.random.Generator(np.random.Philox(int(seed)))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "gaussian"
    sigma: float = 0.03
    seed: int = 0
    # mean photon count per bin after rescaling (poisson only)
    mean_counts: float = 1000.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "poisson"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "gaussian" and not self.sigma > 0:
            raise ValueError("gaussian noise needs sigma > 0")
        if self.kind == "poisson" and not self.mean_counts > 0:
            raise ValueError("poisson noise needs mean_counts > 0")


def add_gaussian_noise(f: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    """Return ``f + eps`` with ``eps ~ N(0, sigma^2)`` i.i.d."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    f = np.asarray(f, dtype=float)
    return f + sigma * rng(seed).standard_normal(f.shape)


def sample_poisson(f: np.ndarray, seed: int) -> np.ndarray:
    """Independent Poisson counts with rates ``f`` (returned as float array)."""
    f = np.asarray(f, dtype=float)
    if np.any(f < 0) or not np.all(np.isfinite(f)):
        raise ValueError("poisson rates must be finite and nonnegative")
    return rng(seed).poisson(f).astype(float)


def apply_noise(f: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    if spec.kind == "gaussian":
        return add_gaussian_noise(f, spec.sigma, spec.seed)
    return sample_poisson(f, spec.seed)


def realized_snr_db(clean: np.ndarray, noisy: np.ndarray) -> float:
    """``10 log10(||f||^2 / ||y - f||^2)``."""
    err = np.sum((np.asarray(noisy) - clean) ** 2)
    if err == 0:
        return float("inf")
    return float(10 * np.log10(np.sum(np.asarray(clean) ** 2) / err))


def _same_shape(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def l2_fidelity(ax: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Value and gradient of ``0.5 * ||Ax - y||^2`` with respect to ``Ax``."""
    ax, y = _same_shape(ax, y)
    r = ax - y
    return 0.5 * float(np.vdot(r, r)), r


def poisson_fidelity(
    ax: np.ndarray, y: np.ndarray, floor: float = POSITIVITY_FLOOR
) -> tuple[float, np.ndarray]:
    """Value and gradient of ``<1, Ax> - <y, log Ax>``.

    ``Ax`` is clamped at ``floor`` before the logarithm; the gradient is zero
    for clamped entries.
    """
    ax, y = _same_shape(ax, y)
    if not np.all(np.isfinite(ax)):
        raise ValueError("non-finite forward projection")
    clamped = np.maximum(ax, floor)
    if np.any(clamped <= 0):
        raise ValueError("forward projection is not positive after flooring")
    value = float(np.sum(clamped) - np.vdot(y, np.log(clamped)))
    grad = np.where(ax > floor, 1.0 - y / clamped, 0.0)
    return value, grad
