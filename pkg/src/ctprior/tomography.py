"""Discrete Radon transforms, their adjoints, and the classical baselines.

Images are 2-D float arrays indexed ``[row, col]``; row 0 is the top edge
(largest ``y``).  The image occupies a square of side ``extent`` centred at
the origin, so the pixel size is ``extent / width``.  Sinograms are arrays of
shape ``(num_angles, num_detectors)``.

Both forward operators are assembled as sparse system matrices whose entries
are the exact chord lengths of each ray through each pixel (Siddon's
method).  The adjoint is the transposed matrix, so the dot-product test holds
to round-off.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ParallelGeometry",
    "FanGeometry",
    "Projector",
    "projector",
    "radon_parallel",
    "radon_fan",
    "radon_adjoint",
    "backproject",
    "fbp",
    "cgne",
]


def _check_angles(angles: tuple[float, ...], upper: float) -> None:
    a = np.asarray(angles, dtype=float)
    if a.ndim != 1 or a.size < 1:
        raise ValueError("need at least one projection angle")
    if np.any(a < 0) or np.any(a >= upper):
        raise ValueError(f"angles must lie in [0, {upper:.6g})")
    if np.any(np.diff(a) <= 0):
        raise ValueError("angles must be strictly increasing")


@dataclass(frozen=True)
class ParallelGeometry:
    """Parallel-beam acquisition over ``angles`` in ``[0, pi)``.

    Detector bin ``j`` sits at signed offset
    ``(j - (num_detectors - 1) / 2) * detector_spacing`` from the rotation
    centre.  The ray for angle ``phi`` and offset ``s`` is
    ``s * (cos phi, sin phi) + t * (-sin phi, cos phi)``.
    """

    image_shape: tuple[int, int]
    angles: tuple[float, ...]
    num_detectors: int
    detector_spacing: float
    extent: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        object.__setattr__(self, "image_shape", tuple(int(n) for n in self.image_shape))
        _check_image_shape(self.image_shape, self.extent)
        _check_angles(self.angles, math.pi)
        if self.num_detectors < 1 or self.detector_spacing <= 0:
            raise ValueError("need num_detectors >= 1 and detector_spacing > 0")
        half_span = self.num_detectors * self.detector_spacing / 2
        h, w = self.image_shape
        half_diag = 0.5 * self.pixel_size * math.hypot(h, w)
        if half_span < half_diag * (1 - 1e-12):
            raise ValueError(
                f"detector half-span {half_span:.4g} does not cover the image "
                f"half-diagonal {half_diag:.4g}; projections would be truncated"
            )

    @classmethod
    def default(cls, size: int, num_angles: int = 100, extent: float = 1.0) -> "ParallelGeometry":
        """Equispaced angles on ``[0, pi)``; one detector per pixel of the diagonal.

        The detector count is rounded up to an even number so that the bins
        sit at pixel centres at 0 and 90 degrees instead of on grid lines.
        """
        n_det = math.ceil(size * math.sqrt(2.0))
        n_det += n_det % 2
        angles = np.arange(num_angles) * (math.pi / num_angles)
        return cls((size, size), tuple(angles), n_det, extent / size, extent)

    @property
    def num_angles(self) -> int:
        return len(self.angles)

    @property
    def pixel_size(self) -> float:
        return self.extent / self.image_shape[1]

    @property
    def detector_offsets(self) -> np.ndarray:
        n = self.num_detectors
        return (np.arange(n) - (n - 1) / 2) * self.detector_spacing

    @property
    def sino_shape(self) -> tuple[int, int]:
        return (self.num_angles, self.num_detectors)


@dataclass(frozen=True)
class FanGeometry:
    """Fan-beam acquisition with a flat detector over ``angles`` in ``[0, 2 pi)``.

    At angle ``beta`` the source sits at ``source_distance * (cos b, sin b)``
    and the detector centre at ``-detector_distance * (cos b, sin b)``; pixel
    ``j`` is offset along ``(-sin b, cos b)`` by
    ``(j - (n - 1) / 2) * detector_pixel_spacing``.
    """

    image_shape: tuple[int, int]
    angles: tuple[float, ...]
    source_distance: float
    detector_distance: float
    num_detector_pixels: int
    detector_pixel_spacing: float
    extent: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        object.__setattr__(self, "image_shape", tuple(int(n) for n in self.image_shape))
        _check_image_shape(self.image_shape, self.extent)
        _check_angles(self.angles, 2 * math.pi)
        if self.source_distance <= 0 or self.detector_distance <= 0:
            raise ValueError("source and detector distances must be positive")
        if self.num_detector_pixels < 1 or self.detector_pixel_spacing <= 0:
            raise ValueError("need num_detector_pixels >= 1 and positive spacing")

    @classmethod
    def scaled(cls, size: int, num_angles: int | None = None, extent: float = 1.0) -> "FanGeometry":
        """Fan geometry scaled from a 512-unit reference setup.

        Source and detector sit ``size`` pixel widths from the centre and
        detector pixels are 2 pixel widths apart, as in the reference.  The
        detector pixel count is the smallest even number whose fan covers the
        whole image square (corners included); the view count defaults to
        ``size``.
        """
        px = extent / size
        num_angles = size if num_angles is None else num_angles
        angles = np.arange(num_angles) * (2 * math.pi / num_angles)
        dist, spacing = size * px, 2.0 * px
        half_diag = 0.5 * extent * math.sqrt(2.0)
        half_fan = math.asin(min(half_diag / dist, 1.0))
        half_width = 2 * dist * math.tan(half_fan) if half_fan < math.pi / 2 - 1e-9 else math.inf
        if not math.isfinite(half_width):
            raise ValueError("source inside the image square; fan cannot cover it")
        n_det = math.ceil(2 * half_width / spacing) + 1
        n_det += n_det % 2
        return cls((size, size), tuple(angles), dist, dist, n_det, spacing, extent)

    @property
    def num_angles(self) -> int:
        return len(self.angles)

    @property
    def num_detectors(self) -> int:
        return self.num_detector_pixels

    @property
    def pixel_size(self) -> float:
        return self.extent / self.image_shape[1]

    @property
    def detector_offsets(self) -> np.ndarray:
        n = self.num_detector_pixels
        return (np.arange(n) - (n - 1) / 2) * self.detector_pixel_spacing

    @property
    def sino_shape(self) -> tuple[int, int]:
        return (self.num_angles, self.num_detector_pixels)


Geometry = Union[ParallelGeometry, FanGeometry]


def _check_image_shape(shape: tuple[int, int], extent: float) -> None:
    if len(shape) != 2 or shape[0] < 1 or shape[1] < 1:
        raise ValueError(f"invalid image shape {shape}")
    if not extent > 0:
        raise ValueError("extent must be positive")


def _ray_segments(p0, d, length, shape, pixel):
    """Exact pixel intersections for a batch of rays ``p0 + t d``, ``0 <= t <= length``.

    Returns ``(ray_index, pixel_index, chord_length)`` triplets.
    """
    h, w = shape
    xlo, xhi = -0.5 * w * pixel, 0.5 * w * pixel
    ylo, yhi = -0.5 * h * pixel, 0.5 * h * pixel
    xs = xlo + pixel * np.arange(w + 1)
    ys = ylo + pixel * np.arange(h + 1)
    n = p0.shape[0]

    t_enter = np.zeros(n)
    t_exit = np.broadcast_to(np.asarray(length, dtype=float), (n,)).copy()
    crossings = []
    for axis, lo, hi, planes in ((0, xlo, xhi, xs), (1, ylo, yhi, ys)):
        o, dd = p0[:, axis], d[:, axis]
        moving = np.abs(dd) > 1e-15
        safe = np.where(moving, dd, 1.0)
        t_lo = (lo - o) / safe
        t_hi = (hi - o) / safe
        t_min = np.where(moving, np.minimum(t_lo, t_hi), -np.inf)
        t_max = np.where(moving, np.maximum(t_lo, t_hi), np.inf)
        inside = (o >= lo) & (o <= hi)
        t_min = np.where(moving | inside, t_min, np.inf)
        t_max = np.where(moving | inside, t_max, -np.inf)
        t_enter = np.maximum(t_enter, t_min)
        t_exit = np.minimum(t_exit, t_max)
        tc = (planes[None, :] - o[:, None]) / safe[:, None]
        crossings.append(np.where(moving[:, None], tc, 0.0))

    hit = t_exit > t_enter
    t_enter = np.where(hit, t_enter, 0.0)
    t_exit = np.where(hit, t_exit, 0.0)
    t = np.concatenate(crossings + [t_enter[:, None], t_exit[:, None]], axis=1)
    t = np.clip(t, t_enter[:, None], t_exit[:, None])
    t.sort(axis=1)
    seg = np.diff(t, axis=1)
    mid = 0.5 * (t[:, 1:] + t[:, :-1])
    mx = p0[:, 0:1] + mid * d[:, 0:1]
    my = p0[:, 1:2] + mid * d[:, 1:2]
    col = np.floor((mx - xlo) / pixel).astype(np.int64)
    row = np.floor((yhi - my) / pixel).astype(np.int64)
    keep = (seg > 1e-12 * pixel) & (col >= 0) & (col < w) & (row >= 0) & (row < h)
    ray = np.broadcast_to(np.arange(n)[:, None], seg.shape)[keep]
    return ray, (row * w + col)[keep], seg[keep]


def _ray_endpoints(geom: Geometry) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Start points, unit directions and lengths of every ray, angle-major."""
    angles = np.asarray(geom.angles)
    offsets = geom.detector_offsets
    c = np.cos(angles)[:, None]
    s = np.sin(angles)[:, None]
    if isinstance(geom, ParallelGeometry):
        h, w = geom.image_shape
        reach = geom.pixel_size * math.hypot(h, w)
        sx = offsets[None, :] * c
        sy = offsets[None, :] * s
        p0 = np.stack([sx + reach * s, sy - reach * c], axis=-1).reshape(-1, 2)
        d = np.stack([-s + 0 * sx, c + 0 * sy], axis=-1).reshape(-1, 2)
        length = np.full(p0.shape[0], 2 * reach)
        return p0, d, length
    src = np.stack([geom.source_distance * c + 0 * offsets, geom.source_distance * s + 0 * offsets], axis=-1)
    det = np.stack(
        [-geom.detector_distance * c - offsets * s, -geom.detector_distance * s + offsets * c], axis=-1
    )
    src = src.reshape(-1, 2)
    vec = det.reshape(-1, 2) - src
    length = np.linalg.norm(vec, axis=1)
    return src, vec / length[:, None], length


class Projector:
    """Sparse system matrix of a geometry with forward and adjoint application."""

    def __init__(self, geom: Geometry):
        self.geom = geom
        self.image_shape = geom.image_shape
        self.sino_shape = geom.sino_shape
        p0, d, length = _ray_endpoints(geom)
        n_rays = p0.shape[0]
        per_ray = sum(self.image_shape) + 4
        chunk = max(1, 2_000_000 // per_ray)
        rows, cols, vals = [], [], []
        for start in range(0, n_rays, chunk):
            sl = slice(start, start + chunk)
            r, c, v = _ray_segments(p0[sl], d[sl], length[sl], self.image_shape, geom.pixel_size)
            rows.append(r + start)
            cols.append(c)
            vals.append(v)
        rows = np.concatenate(rows)
        if rows.size == 0:
            raise ValueError("no ray intersects the image support; check geometry scaling")
        n_pix = self.image_shape[0] * self.image_shape[1]
        self.matrix = sp.csr_matrix(
            (np.concatenate(vals), (rows, np.concatenate(cols))), shape=(n_rays, n_pix)
        )
        self.matrix.sum_duplicates()
        self._matrix_t = self.matrix.T.tocsr()

    def forward(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=float)
        if image.shape != self.image_shape:
            raise ValueError(f"image shape {image.shape} != geometry {self.image_shape}")
        return (self.matrix @ image.ravel()).reshape(self.sino_shape)

    def adjoint(self, sino: np.ndarray) -> np.ndarray:
        sino = np.asarray(sino, dtype=float)
        if sino.shape != self.sino_shape:
            raise ValueError(f"sinogram shape {sino.shape} != geometry {self.sino_shape}")
        return (self._matrix_t @ sino.ravel()).reshape(self.image_shape)

    __call__ = forward

    def norm_estimate(self, iterations: int = 50, seed: int = 0) -> float:
        """Largest singular value by power iteration on ``A^T A``."""
        x = np.random.default_rng(seed).standard_normal(self.image_shape)
        s = 0.0
        for _ in range(iterations):
            x = self.adjoint(self.forward(x))
            s = np.linalg.norm(x)
            x /= s
        return math.sqrt(s)


@functools.lru_cache(maxsize=16)
def projector(geom: Geometry) -> Projector:
    """Cached :class:`Projector` for ``geom``."""
    return Projector(geom)


def _finite(arr: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")
    return arr


def radon_parallel(image: np.ndarray, geom: ParallelGeometry) -> np.ndarray:
    """Parallel-beam line integrals of a pixel-constant image."""
    if not isinstance(geom, ParallelGeometry):
        raise TypeError("radon_parallel needs a ParallelGeometry")
    return projector(geom).forward(_finite(image, "image"))


def radon_fan(image: np.ndarray, geom: FanGeometry) -> np.ndarray:
    """Fan-beam line integrals along each source-to-detector-pixel segment."""
    if not isinstance(geom, FanGeometry):
        raise TypeError("radon_fan needs a FanGeometry")
    return projector(geom).forward(_finite(image, "image"))


def radon_adjoint(sino: np.ndarray, geom: Geometry) -> np.ndarray:
    """Exact transpose of the forward operator for ``geom``."""
    return projector(geom).adjoint(_finite(sino, "sinogram"))


# ---------------------------------------------------------------- FBP

def _ramp_response(n: int, spacing: float, window: str) -> tuple[np.ndarray, int]:
    """Frequency response of the band-limited ramp for ``n`` samples.

    Built as the FFT of the spatial Ram-Lak kernel on a zero-padded grid,
    which avoids the DC offset of sampling ``|nu|`` directly.
    """
    size = max(64, int(2 ** math.ceil(math.log2(2 * n))))
    k = np.concatenate([np.arange(0, size // 2 + 1), np.arange(-size // 2 + 1, 0)])
    kernel = np.zeros(size)
    kernel[0] = 1.0 / (4 * spacing**2)
    odd = k % 2 == 1
    kernel[odd] = -1.0 / (np.pi * k[odd] * spacing) ** 2
    response = np.real(np.fft.fft(kernel)) * spacing
    if window == "hann":
        freq = np.fft.fftfreq(size)
        response *= 0.5 * (1 + np.cos(2 * np.pi * freq))
    elif window != "ramp":
        raise ValueError(f"unknown filter {window!r}; use 'ramp' or 'hann'")
    return response, size


def ramp_filter(sino: np.ndarray, spacing: float, filter: str = "ramp") -> np.ndarray:
    """Filter each sinogram row with the (optionally Hann-windowed) ramp."""
    n = sino.shape[1]
    response, size = _ramp_response(n, spacing, filter)
    spec = np.fft.fft(sino, n=size, axis=1) * response
    return np.real(np.fft.ifft(spec, axis=1))[:, :n]


def _pixel_centres(shape, pixel):
    h, w = shape
    x = (np.arange(w) - (w - 1) / 2) * pixel
    y = ((h - 1) / 2 - np.arange(h)) * pixel
    return np.meshgrid(x, y)


def backproject(sino: np.ndarray, geom: ParallelGeometry) -> np.ndarray:
    """Pixel-driven linear-interpolation backprojection, ``sum_phi q(x.theta) dphi``."""
    sino = np.asarray(sino, dtype=float)
    X, Y = _pixel_centres(geom.image_shape, geom.pixel_size)
    offsets = geom.detector_offsets
    out = np.zeros(geom.image_shape)
    for phi, row in zip(geom.angles, sino):
        s = X * math.cos(phi) + Y * math.sin(phi)
        out += np.interp(s, offsets, row, left=0.0, right=0.0)
    return out * (math.pi / geom.num_angles)


def fbp(sino: np.ndarray, geom: Geometry, filter: str = "ramp") -> np.ndarray:
    """Filtered backprojection.

    Parallel data use the standard ramp-filter-then-backproject formula.  Fan
    data from a full ``2 pi`` scan use cosine pre-weighting on the virtual
    detector through the isocentre and a distance-weighted backprojection.
    """
    sino = _finite(sino, "sinogram")
    if sino.shape != geom.sino_shape:
        raise ValueError(f"sinogram shape {sino.shape} != geometry {geom.sino_shape}")
    if geom.num_detectors < 2:
        raise ValueError("FBP needs at least two detector bins")
    if isinstance(geom, ParallelGeometry):
        q = ramp_filter(sino, geom.detector_spacing, filter)
        return backproject(q, geom)
    return _fbp_fan(sino, geom, filter)


def _fbp_fan(sino: np.ndarray, geom: FanGeometry, filter: str) -> np.ndarray:
    D = geom.source_distance
    mag = D / (D + geom.detector_distance)
    p = geom.detector_offsets * mag
    dp = geom.detector_pixel_spacing * mag
    weighted = sino * (D / np.sqrt(D**2 + p**2))[None, :]
    q = ramp_filter(weighted, dp, filter)
    X, Y = _pixel_centres(geom.image_shape, geom.pixel_size)
    out = np.zeros(geom.image_shape)
    for beta, row in zip(geom.angles, q):
        c, s = math.cos(beta), math.sin(beta)
        depth = D - (X * c + Y * s)
        p_img = D * (-X * s + Y * c) / depth
        out += np.interp(p_img, p, row, left=0.0, right=0.0) * (D / depth) ** 2
    dbeta = 2 * math.pi / geom.num_angles
    return 0.5 * dbeta * out


# ---------------------------------------------------------------- CGNE

def cgne(
    y: np.ndarray,
    geom: Geometry,
    iterations: int,
    x0: np.ndarray | None = None,
    return_residuals: bool = False,
):
    """Conjugate gradients on ``A^T A x = A^T y`` (the CGLS recursion).

    With ``return_residuals=True`` also returns the data residual norms
    ``||A x_k - y||`` for ``k = 0..iterations``; these are non-increasing.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    op = projector(geom)
    y = _finite(y, "sinogram")
    if y.shape != op.sino_shape:
        raise ValueError(f"sinogram shape {y.shape} != geometry {op.sino_shape}")
    x = np.zeros(op.image_shape) if x0 is None else np.array(x0, dtype=float)
    r = y - op.forward(x)
    s = op.adjoint(r)
    p = s.copy()
    gamma = float(np.vdot(s, s))
    residuals = [float(np.linalg.norm(r))]
    for _ in range(iterations):
        if gamma == 0.0:
            residuals.append(residuals[-1])
            continue
        q = op.forward(p)
        qq = float(np.vdot(q, q))
        if qq == 0.0:
            residuals.append(residuals[-1])
            continue
        alpha = gamma / qq
        x += alpha * p
        r -= alpha * q
        s = op.adjoint(r)
        gamma_new = float(np.vdot(s, s))
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
        residuals.append(float(np.linalg.norm(r)))
    if return_residuals:
        return x, np.array(residuals)
    return x
