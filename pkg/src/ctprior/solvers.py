"""Generator-based reconstruction loops: DIP, PnP-DIP and MCDIP-ADMM.

All three fit the weights of an untrained generator to the data.  The ADMM
variants split the image into the generator output ``G`` and a TV-regular
copy ``x`` coupled through the scaled dual ``u``; each iteration is

    x <- prox_{(lam / rho) TV}(G - u)
    theta <- one Adam step on the augmented Lagrangian at (x, u)
    u <- u + x - G

and the reported image is ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import generator as gen
from .autodiff import Tensor
from .metrics import psnr, ssim
from .noise import l2_fidelity, poisson_fidelity
from .priors import TvSpec, prox_tv, tv
from .tomography import Projector

__all__ = [
    "NumericalError",
    "SolverConfig",
    "DataTerm",
    "TraceRecord",
    "RunTrace",
    "Adam",
    "adam_step",
    "learning_rate",
    "lagrangian_value",
    "augmented_lagrangian",
    "run_dip",
    "run_pnp_dip",
    "run_mcdip_admm",
]


class NumericalError(FloatingPointError):
    """A reconstruction produced a non-finite value."""


@dataclass(frozen=True)
class SolverConfig:
    rho: float = 1.0
    lam: float = 4.0
    num_codes: int = 20
    iterations: int = 5000
    base_lr: float = 0.02
    lr_halving_period: int = 1000
    fidelity: str = "l2"
    seed: int = 0
    record_every: int = 25
    prox_iterations: int = 100
    # TV edge weight; None means the pixel side length of the image
    tv_edge_length: float | None = None
    freeze_alphas: bool = False

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.num_codes < 1 or self.iterations < 1 or self.record_every < 1:
            raise ValueError("num_codes, iterations and record_every must be >= 1")
        if self.fidelity not in ("l2", "poisson"):
            raise ValueError("fidelity must be 'l2' or 'poisson'")
        if not self.base_lr > 0 or self.lr_halving_period < 1:
            raise ValueError("invalid learning-rate schedule")


class DataTerm:
    """``F(c * A x, y)`` with its image-space gradient.

    ``scale`` multiplies the projector (photon-count normalisation for the
    Poisson model; 1 otherwise).
    """

    def __init__(self, projector: Projector, y: np.ndarray, kind: str = "l2", scale: float = 1.0):
        self.projector = projector
        self.y = np.asarray(y, dtype=float)
        if self.y.shape != projector.sino_shape:
            raise ValueError(f"data shape {self.y.shape} != {projector.sino_shape}")
        if kind not in ("l2", "poisson"):
            raise ValueError(f"unknown fidelity {kind!r}")
        self.kind = kind
        self.scale = float(scale)

    def forward(self, image: np.ndarray) -> np.ndarray:
        return self.scale * self.projector.forward(image)

    def value_and_grad(self, image: np.ndarray) -> tuple[float, np.ndarray]:
        ax = self.forward(image)
        f = l2_fidelity if self.kind == "l2" else poisson_fidelity
        value, g = f(ax, self.y)
        return value, self.scale * self.projector.adjoint(g)

    def value(self, image: np.ndarray) -> float:
        ax = self.forward(image)
        f = l2_fidelity if self.kind == "l2" else poisson_fidelity
        return f(ax, self.y)[0]


# ---------------------------------------------------------------- Adam

def learning_rate(t: int, base_lr: float = 0.02, halving_period: int = 1000) -> float:
    """``base_lr * 0.5 ** floor(t / halving_period)``."""
    return base_lr * 0.5 ** (t // halving_period)


def adam_step(param, grad, moments, t, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns ``(new_param, (m, v))``."""
    m, v = moments
    m = beta1 * m + (1 - beta1) * grad
    v = beta2 * v + (1 - beta2) * grad * grad
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps), (m, v)


class Adam:
    def __init__(self, tensors: dict[str, Tensor], base_lr: float = 0.02, halving_period: int = 1000):
        self.tensors = tensors
        self.base_lr = base_lr
        self.halving_period = halving_period
        self.t = 0
        self.moments = {k: (np.zeros_like(p.value), np.zeros_like(p.value)) for k, p in tensors.items()}

    @property
    def lr(self) -> float:
        return learning_rate(self.t, self.base_lr, self.halving_period)

    def step(self) -> None:
        self.t += 1
        lr = self.lr
        for k, p in self.tensors.items():
            if p.grad is None:
                continue
            p.value, self.moments[k] = adam_step(p.value, p.grad, self.moments[k], self.t, lr)


# ---------------------------------------------------------------- traces

@dataclass
class TraceRecord:
    t: int
    psnr: float
    ssim: float
    fidelity: float
    lagrangian: float

    FIELDS = ("t", "psnr", "ssim", "fidelity", "lagrangian")

    def as_row(self) -> dict:
        return {k: getattr(self, k) for k in self.FIELDS}


@dataclass
class RunTrace:
    records: list[TraceRecord] = field(default_factory=list)
    final_image: np.ndarray | None = None
    best_image: np.ndarray | None = None
    best_t: int | None = None

    def add(self, rec: TraceRecord, image: np.ndarray) -> None:
        if self.records and rec.t <= self.records[-1].t:
            raise ValueError("trace iterations must increase")
        self.records.append(rec)
        if not math.isnan(rec.psnr) and (self.best_t is None or rec.psnr > self.best.psnr):
            self.best_t = rec.t
            self.best_image = image.copy()

    @property
    def best(self) -> TraceRecord:
        for r in self.records:
            if r.t == self.best_t:
                return r
        raise ValueError("no PSNR recorded; ground truth was not supplied")

    @property
    def final(self) -> TraceRecord:
        return self.records[-1]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def rows(self) -> list[dict]:
        return [r.as_row() for r in self.records]


# ---------------------------------------------------------------- objective

def _edge_length(config: SolverConfig, projector: Projector) -> float:
    if config.tv_edge_length is not None:
        return config.tv_edge_length
    return projector.geom.pixel_size


def lagrangian_value(x, g, u, data: DataTerm, lam: float, rho: float, edge_length: float) -> float:
    """``F(A g, y) + lam TV(x) + rho/2 ||x - g + u||^2 - rho/2 ||u||^2``."""
    r = x - g + u
    value = (
        data.value(g)
        + lam * tv(x, TvSpec(edge_length))
        + 0.5 * rho * float(np.vdot(r, r))
        - 0.5 * rho * float(np.vdot(u, u))
    )
    if not math.isfinite(value):
        raise NumericalError("augmented Lagrangian is not finite")
    return value


def augmented_lagrangian(
    x: np.ndarray,
    params: gen.GeneratorParams,
    codes: np.ndarray,
    u: np.ndarray,
    data: DataTerm,
    config: SolverConfig,
    multi_code: bool = True,
    return_grad: bool = False,
):
    """Value of the augmented Lagrangian at ``(x, theta, u)``.

    With ``return_grad`` the gradients with respect to every generator
    parameter are accumulated into the parameter tensors' ``.grad`` (after
    zeroing) and the value is returned alongside the output image.
    """
    forward = gen.mcdip_forward if multi_code else gen.dip_forward
    out = forward(codes, params)
    g = gen.image_of(out)
    edge = _edge_length(config, data.projector)
    value = lagrangian_value(x, g, u, data, config.lam, config.rho, edge)
    if return_grad:
        _, dfdg = data.value_and_grad(g)
        grad_g = dfdg - config.rho * (x - g + u)
        params.zero_grad()
        out.backward(grad_g[None, None])
    return value


# ---------------------------------------------------------------- loops

def _guard(fn: Callable, t: int):
    try:
        return fn()
    except FloatingPointError as exc:
        raise NumericalError(f"non-finite value at iteration {t}: {exc}") from exc


def _record(trace, t, image, data, truth, lagrangian):
    fid = data.value(image)
    if truth is not None:
        p, s = psnr(image, truth), ssim(image, truth)
    else:
        p = s = float("nan")
    if not (math.isfinite(fid) and math.isfinite(lagrangian)):
        raise NumericalError(f"non-finite loss at iteration {t}")
    trace.add(TraceRecord(t, p, s, fid, lagrangian), image)


def _should_record(t, config):
    return t % config.record_every == 0 or t == config.iterations


def run_dip(
    data: DataTerm,
    config: SolverConfig,
    truth: np.ndarray | None = None,
    gen_config: gen.GeneratorConfig | None = None,
    callback: Callable | None = None,
) -> tuple[np.ndarray, RunTrace]:
    """Plain DIP: Adam on ``F(A G(z; theta), y)`` for ``config.iterations`` steps.

    ``callback(t, image)`` is called after every step.
    """
    gcfg = gen_config or gen.GeneratorConfig.for_image(data.projector.image_shape[0])
    params = gen.init_params(gcfg, config.seed)
    z = gen.sample_codes(gcfg, 1, config.seed)
    opt = Adam(params.tensors(), config.base_lr, config.lr_halving_period)
    trace = RunTrace()
    out = _guard(lambda: gen.dip_forward(z, params), 0)
    for t in range(1, config.iterations + 1):
        g = gen.image_of(out)
        _, dfdg = data.value_and_grad(g)
        params.zero_grad()
        out.backward(dfdg[None, None])
        opt.step()
        out = _guard(lambda: gen.dip_forward(z, params), t)
        if callback is not None:
            callback(t, gen.image_of(out))
        if _should_record(t, config):
            g = gen.image_of(out)
            _record(trace, t, g, data, truth, data.value(g))
    trace.final_image = gen.image_of(out).copy()
    return trace.final_image, trace


def _admm(data, config, truth, params, forward, opt, callback=None):
    edge = _edge_length(config, data.projector)
    weight = config.lam / config.rho
    trace = RunTrace()
    out = _guard(forward, 0)
    g = gen.image_of(out)
    x = g.copy()
    u = np.zeros_like(g)
    for t in range(1, config.iterations + 1):
        x = prox_tv(g - u, weight, edge, max_iter=config.prox_iterations)
        _, dfdg = data.value_and_grad(g)
        grad_g = dfdg - config.rho * (x - g + u)
        params.zero_grad()
        out.backward(grad_g[None, None])
        opt.step()
        out = _guard(forward, t)
        g = gen.image_of(out)
        u = u + (x - g)
        if not np.all(np.isfinite(u)):
            raise NumericalError(f"non-finite dual variable at iteration {t}")
        if callback is not None:
            callback(t, x, g, u)
        if _should_record(t, config):
            lag = lagrangian_value(x, g, u, data, config.lam, config.rho, edge)
            _record(trace, t, x, data, truth, lag)
    trace.final_image = x.copy()
    return x, trace, u


def run_pnp_dip(
    data: DataTerm,
    config: SolverConfig,
    truth: np.ndarray | None = None,
    gen_config: gen.GeneratorConfig | None = None,
    callback: Callable | None = None,
) -> tuple[np.ndarray, RunTrace]:
    """ADMM with a single-code generator (no composition layer).

    ``callback(t, x, g, u)`` sees the split variable, the generator output
    and the scaled dual after every iteration.
    """
    gcfg = gen_config or gen.GeneratorConfig.for_image(data.projector.image_shape[0])
    params = gen.init_params(gcfg, config.seed)
    z = gen.sample_codes(gcfg, 1, config.seed)
    opt = Adam(params.tensors(), config.base_lr, config.lr_halving_period)
    x, trace, _ = _admm(data, config, truth, params, lambda: gen.dip_forward(z, params), opt, callback)
    return x, trace


def run_mcdip_admm(
    data: DataTerm,
    config: SolverConfig,
    truth: np.ndarray | None = None,
    gen_config: gen.GeneratorConfig | None = None,
    callback: Callable | None = None,
) -> tuple[np.ndarray, RunTrace]:
    """ADMM with the multi-code generator; theta and channel weights train jointly.

    ``config.freeze_alphas`` keeps the channel weights at one.  ``callback``
    as for :func:`run_pnp_dip`.
    """
    gcfg = gen_config or gen.GeneratorConfig.for_image(data.projector.image_shape[0])
    params = gen.init_params(gcfg, config.seed, num_codes=config.num_codes)
    codes = gen.sample_codes(gcfg, config.num_codes, config.seed)
    if config.freeze_alphas:
        params.alphas.requires_grad = False
    opt = Adam(params.tensors(include_alphas=not config.freeze_alphas),
               config.base_lr, config.lr_halving_period)
    x, trace, _ = _admm(data, config, truth, params, lambda: gen.mcdip_forward(codes, params), opt, callback)
    return x, trace


def with_overrides(config: SolverConfig, **kw) -> SolverConfig:
    return replace(config, **kw)
