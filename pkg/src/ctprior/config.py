"""Experiment configuration files.

An experiment is described by one INI file with the sections ``[phantom]``,
``[geometry]``, ``[noise]``, ``[solver]`` and ``[experiment]``.  Every key is
optional; missing keys take the defaults below.  ``dump`` writes every field,
so ``load(dump(cfg)) == cfg``.

The TV weight ``lam`` is tied to the sinogram and image units.  The defaults
here were picked on a validation phantom for the unit-square geometry; the
values reported for 256/512 px clinical data are available as
``clinical_hyperparameters(kind)`` but over-smooth badly at these units.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .noise import NoiseSpec
from .phantoms import PRESETS
from .solvers import SolverConfig
from .tomography import FanGeometry, ParallelGeometry

__all__ = [
    "ConfigError",
    "METHODS",
    "PhantomSpec",
    "GeometrySpec",
    "ExperimentConfig",
    "desk_defaults",
    "clinical_hyperparameters",
    "load",
    "loads",
    "dump",
    "dumps",
]

METHODS = ("fbp", "cgne", "dip", "pnp-dip", "mcdip-admm")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PhantomSpec:
    name: str = "shepp-logan"
    size: int = 64


@dataclass(frozen=True)
class GeometrySpec:
    kind: str = "parallel"
    # 0 means the default for the kind: 100 parallel angles, one fan angle per pixel row
    num_angles: int = 0
    # parallel only; 0 means the image diagonal in pixels
    num_detectors: int = 0
    extent: float = 1.0

    def build(self, size: int):
        if self.kind == "parallel":
            n = self.num_angles or 100
            g = ParallelGeometry.default(size, num_angles=n, extent=self.extent)
            if self.num_detectors:
                g = replace(g, num_detectors=self.num_detectors)
            return g
        return FanGeometry.scaled(size, num_angles=self.num_angles or None, extent=self.extent)


# validated desk-scale TV weights (unit-square geometry, TV edge length 1)
_DESK = {
    "parallel": dict(lam=0.003, num_codes=20),
    "fan": dict(lam=8.0, num_codes=15),
}
_CLINICAL = {
    "parallel": dict(lam=4.0, num_codes=20, rho=1.0),
    "fan": dict(lam=8.0, num_codes=15, rho=1.0),
}


def desk_defaults(kind: str) -> dict:
    return dict(_DESK[kind])


def clinical_hyperparameters(kind: str) -> dict:
    """The clinical-scale values for ``kind`` ('parallel' or 'fan')."""
    return dict(_CLINICAL[kind])


@dataclass(frozen=True)
class ExperimentConfig:
    phantom: PhantomSpec = field(default_factory=PhantomSpec)
    geometry: GeometrySpec = field(default_factory=GeometrySpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(**_DESK["parallel"], tv_edge_length=1.0))
    method: str = "mcdip-admm"
    seeds: tuple[int, ...] = (0,)
    output: str = "runs/default"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.phantom.name not in PRESETS:
            raise ConfigError(f"unknown phantom {self.phantom.name!r}")
        if self.geometry.kind not in ("parallel", "fan"):
            raise ConfigError(f"unknown geometry {self.geometry.kind!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.solver.fidelity == "poisson" and self.noise.kind != "poisson":
            raise ConfigError("poisson fidelity needs poisson noise")
        if self.noise.kind == "poisson" and self.solver.fidelity != "poisson" and self.method in ("dip", "pnp-dip", "mcdip-admm"):
            raise ConfigError("poisson noise should be fitted with fidelity = poisson")

    def build_geometry(self):
        return self.geometry.build(self.phantom.size)


# ---------------------------------------------------------------- INI mapping

def _parse_value(raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def _section(cp, name, cls, base, skip=()):
    if not cp.has_section(name):
        return base
    values = {}
    defaults = asdict(base)
    for key, raw in cp.items(name):
        key = key.replace("-", "_")
        if key not in defaults or key in skip:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        default = defaults[key]
        try:
            if key == "tv_edge_length":
                values[key] = None if raw.strip().lower() in ("", "none", "pixel") else float(raw)
            else:
                values[key] = _parse_value(raw, default)
        except ValueError as exc:
            raise ConfigError(f"[{name}] {key}: {exc}") from None
    try:
        return replace(base, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}] {exc}") from None


def loads(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    known = {"phantom", "geometry", "noise", "solver", "experiment"}
    extra = set(cp.sections()) - known
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")

    phantom = _section(cp, "phantom", PhantomSpec, PhantomSpec())
    geometry = _section(cp, "geometry", GeometrySpec, GeometrySpec())
    if geometry.kind not in ("parallel", "fan"):
        raise ConfigError(f"unknown geometry {geometry.kind!r}")
    noise = _section(cp, "noise", NoiseSpec, NoiseSpec(kind="poisson" if geometry.kind == "fan" else "gaussian"),
                     skip=("seed",))
    base_solver = SolverConfig(**_DESK[geometry.kind], tv_edge_length=1.0,
                               fidelity="poisson" if noise.kind == "poisson" else "l2")
    solver = _section(cp, "solver", SolverConfig, base_solver, skip=("seed",))

    method, seeds, output = "mcdip-admm", (0,), "runs/default"
    if cp.has_section("experiment"):
        sec = cp["experiment"]
        extra = set(sec) - {"method", "seeds", "output"}
        if extra:
            raise ConfigError(f"[experiment] unknown key(s): {', '.join(sorted(extra))}")
        method = sec.get("method", method).strip()
        if "seeds" in sec:
            try:
                seeds = tuple(int(s) for s in sec["seeds"].replace(",", " ").split())
            except ValueError:
                raise ConfigError(f"[experiment] seeds: not a list of integers: {sec['seeds']!r}") from None
        output = sec.get("output", output).strip()
    try:
        return ExperimentConfig(phantom, geometry, noise, solver, method, seeds, output)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return loads(text)


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dumps(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp["phantom"] = {k: _fmt(v) for k, v in asdict(cfg.phantom).items()}
    cp["geometry"] = {k: _fmt(v) for k, v in asdict(cfg.geometry).items()}
    cp["noise"] = {k: _fmt(v) for k, v in asdict(cfg.noise).items() if k != "seed"}
    cp["solver"] = {k: _fmt(v) for k, v in asdict(cfg.solver).items() if k != "seed"}
    cp["experiment"] = {
        "method": cfg.method,
        "seeds": " ".join(str(s) for s in cfg.seeds),
        "output": cfg.output,
    }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def dump(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(dumps(cfg))
