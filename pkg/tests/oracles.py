"""Independent reference computations shared by the test modules."""

import math

import cvxpy as cp
import numpy as np

from ctprior.priors import prox_tv_objective


def supersampled_line_integrals(image, p0, d, length, pixel, steps_per_pixel=1000):
    """Midpoint-rule line integrals of a pixel-constant image, far finer than the pixel grid."""
    h, w = image.shape
    out = np.zeros(len(p0))
    for k in range(len(p0)):
        n = int(math.ceil(length[k] / pixel * steps_per_pixel))
        dt = length[k] / n
        t = (np.arange(n) + 0.5) * dt
        x = p0[k, 0] + t * d[k, 0]
        y = p0[k, 1] + t * d[k, 1]
        col = np.floor(x / pixel + w / 2).astype(int)
        row = np.floor(h / 2 - y / pixel).astype(int)
        ok = (col >= 0) & (col < w) & (row >= 0) & (row < h)
        out[k] = image[row[ok], col[ok]].sum() * dt
    return out


def parallel_rays(geom):
    reach = 2.0
    rays = []
    for phi in geom.angles:
        for s in geom.detector_offsets:
            start = np.array([s * math.cos(phi) + reach * math.sin(phi), s * math.sin(phi) - reach * math.cos(phi)])
            rays.append((start, np.array([-math.sin(phi), math.cos(phi)])))
    p0, d = map(np.array, zip(*rays))
    return p0, d, np.full(len(p0), 2 * reach)


def fan_rays(geom):
    rays = []
    for b in geom.angles:
        c, s = math.cos(b), math.sin(b)
        src = geom.source_distance * np.array([c, s])
        for u in geom.detector_offsets:
            det = -geom.detector_distance * np.array([c, s]) + u * np.array([-s, c])
            rays.append((src, det - src))
    p0, v = map(np.array, zip(*rays))
    length = np.linalg.norm(v, axis=1)
    return p0, v / length[:, None], length


def tv_oracle_minimum(v, weight, edge=1.0):
    """Exact prox objective minimum from an interior-point conic solve."""
    x = cp.Variable(v.shape)
    obj = 0.5 * cp.sum_squares(x - v) + weight * edge * (
        cp.sum(cp.abs(x[:, 1:] - x[:, :-1])) + cp.sum(cp.abs(x[1:, :] - x[:-1, :]))
    )
    prob = cp.Problem(cp.Minimize(obj))
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return prox_tv_objective(x.value, v, weight, edge)
