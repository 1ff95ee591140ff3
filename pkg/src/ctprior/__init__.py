"""CT reconstruction with untrained generator priors.

Radon operators (parallel and fan beam), noise models, TV priors, a small
reverse-mode autodiff engine with a convolutional generator, and the DIP,
PnP-DIP and multi-code ADMM solvers built on them.
"""

from .metrics import psnr, ssim
from .noise import NoiseSpec, add_gaussian_noise, sample_poisson
from .phantoms import preset, shepp_logan
from .solvers import DataTerm, SolverConfig, run_dip, run_mcdip_admm, run_pnp_dip
from .tomography import FanGeometry, ParallelGeometry, cgne, fbp, projector

__version__ = "0.1.0"

__all__ = [
    "psnr",
    "ssim",
    "NoiseSpec",
    "add_gaussian_noise",
    "sample_poisson",
    "preset",
    "shepp_logan",
    "DataTerm",
    "SolverConfig",
    "run_dip",
    "run_pnp_dip",
    "run_mcdip_admm",
    "FanGeometry",
    "ParallelGeometry",
    "cgne",
    "fbp",
    "projector",
]
