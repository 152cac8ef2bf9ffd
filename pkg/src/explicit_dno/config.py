"""Experiment configuration: TOML schema 1, named field generators, env overrides.

A minimal configuration::

    schema = 1

    [grid]
    n = 256                 # or [64, 64] for two horizontal dimensions
    length = 6.283185307179586

    [bathymetry]
    shape = "cosine_bump"   # constant | cosine_bump | gaussian_bump | file
    depth = 1.0
    amplitude = 0.2
    k = 1

    [surface]
    shape = "cosine"        # zero | cosine | stokes_like | file
    amplitude = 0.1
    k = 1

    [potential]
    shape = "cosine"        # cosine | harmonic | random | file

Any scalar key can be overridden from the environment with
``EXPLICIT_DNO_<SECTION>__<KEY>=<toml value>``, e.g.
``EXPLICIT_DNO_OPERATOR__MAX_TERMS=32``.
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import tomli

from .series import OperatorConfig
from .spectral import Grid, ScalarField, read_fld1

SCHEMA_VERSION = 1
ENV_PREFIX = "EXPLICIT_DNO_"

_OPERATOR_KEYS = {"max_terms", "term_tol", "pad_factor", "solver_tol", "solver_max_iters", "restart", "max_gain", "series_max_gain", "kmax", "refine"}
_SECTIONS = {"grid", "bathymetry", "surface", "potential", "operator", "experiment", "converge", "moving", "validate", "output"}


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


def _parse_env_value(raw: str) -> Any:
    try:
        return tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        return raw


def apply_env_overrides(data: dict, environ: Mapping[str, str] | None = None) -> dict:
    """Return a copy of ``data`` with ``EXPLICIT_DNO_SECTION__KEY`` variables applied."""
    environ = os.environ if environ is None else environ
    out = copy.deepcopy(data)
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX) or "__" not in name:
            continue
        section, key = name[len(ENV_PREFIX):].lower().split("__", 1)
        if section not in _SECTIONS:
            raise ConfigError(f"environment override {name} names unknown section '{section}'")
        out.setdefault(section, {})[key] = _parse_env_value(raw)
    return out


@dataclass
class ExperimentConfig:
    """Parsed configuration.  ``raw`` keeps the (override-applied) TOML tables."""

    raw: dict
    base_dir: Path = field(default_factory=Path.cwd)

    def section(self, name: str) -> dict:
        return dict(self.raw.get(name, {}))

    @property
    def grid(self) -> Grid:
        g = self.section("grid")
        n = g.get("n", 256)
        length = g.get("length", 2 * np.pi)
        try:
            return Grid.periodic(n, length)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[grid]: {exc}") from exc

    @property
    def operator(self) -> OperatorConfig:
        op = self.section("operator")
        unknown = set(op) - _OPERATOR_KEYS
        if unknown:
            raise ConfigError(f"[operator]: unknown keys {sorted(unknown)}")
        try:
            return OperatorConfig(**op)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[operator]: {exc}") from exc

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def load_config(path: str | os.PathLike, environ: Mapping[str, str] | None = None) -> ExperimentConfig:
    p = Path(path)
    try:
        with open(p, "rb") as fh:
            data = tomli.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {p}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc
    return config_from_dict(data, p.parent, environ)


def config_from_dict(data: dict, base_dir: Path | None = None, environ=None) -> ExperimentConfig:
    data = apply_env_overrides(data, environ)
    if data.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"config must declare schema = {SCHEMA_VERSION} (got {data.get('schema')!r})")
    unknown = set(data) - _SECTIONS - {"schema"}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    return ExperimentConfig(data, base_dir or Path.cwd())


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------

def _wavenumber_units(grid: Grid, k) -> np.ndarray:
    """Phase ``k.x`` with integer ``k`` counted in fundamental modes of the box."""
    ks = [k] if np.ndim(k) == 0 else list(k)
    if len(ks) == 1 and grid.dimension == 2:
        ks = ks + [0]
    if len(ks) != grid.dimension:
        raise ConfigError(f"wavenumber {k!r} does not match a {grid.dimension}-D grid")
    xs = grid.coordinates()
    return sum(float(kj) * 2 * np.pi / L * x for kj, x, L in zip(ks, xs, grid.extents))


def _read_field(cfg: ExperimentConfig, spec: dict, grid: Grid, what: str) -> ScalarField:
    if "path" not in spec:
        raise ConfigError(f"[{what}] shape 'file' needs a 'path'")
    path = cfg.resolve(spec["path"])
    if not path.exists():
        raise ConfigError(f"[{what}] file not found: {path}")
    f = read_fld1(path)
    if f.grid.sizes != grid.sizes or not np.allclose(f.grid.extents, grid.extents):
        raise ConfigError(f"[{what}] file {path} is on grid {f.grid.sizes}, expected {grid.sizes}")
    return f


def make_depth(cfg: ExperimentConfig, grid: Grid) -> ScalarField:
    spec = cfg.section("bathymetry")
    shape = spec.get("shape", "constant")
    d0 = float(spec.get("depth", 1.0))
    if shape == "constant":
        vals = np.full(grid.shape, d0)
    elif shape == "cosine_bump":
        vals = d0 + float(spec.get("amplitude", 0.1)) * np.cos(_wavenumber_units(grid, spec.get("k", 1)))
    elif shape == "gaussian_bump":
        a = float(spec.get("amplitude", 0.1))
        w = float(spec.get("width", 0.5))
        x0 = spec.get("x0", [L / 2 for L in grid.extents])
        x0 = [x0] if np.ndim(x0) == 0 else list(x0)
        r2 = 0.0
        for x, c, L in zip(grid.coordinates(), x0, grid.extents):
            dx = (x - float(c) + L / 2) % L - L / 2  # periodic distance
            r2 = r2 + dx * dx
        # a bump rising from the bed reduces the depth
        vals = d0 - a * np.exp(-r2 / (w * w))
    elif shape == "file":
        return _read_field(cfg, spec, grid, "bathymetry")
    else:
        raise ConfigError(f"[bathymetry] unknown shape '{shape}'")
    if np.min(vals) <= 0:
        raise ConfigError(f"[bathymetry] shape parameters give min(d) = {np.min(vals):.4g} <= 0")
    return ScalarField(grid, vals)


def make_eta(cfg: ExperimentConfig, grid: Grid) -> ScalarField:
    spec = cfg.section("surface")
    shape = spec.get("shape", "zero")
    a = float(spec.get("amplitude", 0.0))
    if shape == "zero":
        return ScalarField.constant(grid, 0.0)
    if shape == "cosine":
        return ScalarField(grid, a * np.cos(_wavenumber_units(grid, spec.get("k", 1))))
    if shape == "stokes_like":
        k = spec.get("k", 1)
        th = _wavenumber_units(grid, k)
        kk = float(np.linalg.norm(np.atleast_1d(k) * 2 * np.pi / np.asarray(grid.extents[: np.size(k)])))
        # second-order Stokes profile (deep-water coefficients)
        return ScalarField(grid, a * np.cos(th) + 0.5 * kk * a * a * np.cos(2 * th))
    if shape == "file":
        return _read_field(cfg, spec, grid, "surface")
    raise ConfigError(f"[surface] unknown shape '{shape}'")


def random_field(grid: Grid, rng: np.random.Generator, modes: int = 3, amplitude: float = 1.0) -> ScalarField:
    """Zero-mean random trigonometric polynomial with wavenumbers up to ``modes`` per axis."""
    spec = np.zeros(grid.spectral_shape, dtype=complex)
    ints = [np.rint(k * L / (2 * np.pi)) * np.ones(grid.spectral_shape) for k, L in zip(grid.wavenumbers, grid.extents)]
    sel = np.ones(grid.spectral_shape, bool)
    for m in ints:
        sel &= np.abs(m) <= modes
    sel &= grid.k_abs > 0
    count = int(sel.sum())
    spec[sel] = rng.standard_normal(count) + 1j * rng.standard_normal(count)
    f = ScalarField.from_spectrum(grid, spec)
    return f * (amplitude / max(f.max_abs(), 1e-300))


def make_phi(cfg: ExperimentConfig, grid: Grid, eta: ScalarField, depth: ScalarField, seed: int) -> ScalarField:
    spec = cfg.section("potential")
    shape = spec.get("shape", "cosine")
    a = float(spec.get("amplitude", 1.0))
    k = spec.get("k", 1)
    if shape == "cosine":
        return ScalarField(grid, a * np.cos(_wavenumber_units(grid, k)))
    if shape == "harmonic":
        if not depth.is_constant():
            raise ConfigError("[potential] 'harmonic' requires a constant-depth bathymetry")
        from .oracle import AnalyticSolution

        kv = _kvector(grid, k)
        sol = AnalyticSolution("nonlinear_flat_harmonic", kv, a, depth.mean())
        return sol.phi_s(eta)
    if shape == "random":
        rng = np.random.default_rng(seed)
        return random_field(grid, rng, int(spec.get("modes", 3)), a)
    if shape == "file":
        return _read_field(cfg, spec, grid, "potential")
    raise ConfigError(f"[potential] unknown shape '{shape}'")


def _kvector(grid: Grid, k) -> tuple[float, ...]:
    ks = [k] if np.ndim(k) == 0 else list(k)
    if len(ks) == 1 and grid.dimension == 2:
        ks = ks + [0]
    return tuple(float(kj) * 2 * np.pi / L for kj, L in zip(ks, grid.extents))


def make_rate(cfg: ExperimentConfig, grid: Grid) -> ScalarField:
    spec = cfg.section("moving")
    shape = spec.get("rate_shape", "cosine")
    r = float(spec.get("rate_amplitude", 0.0))
    if shape == "zero":
        return ScalarField.constant(grid, 0.0)
    if shape == "cosine":
        return ScalarField(grid, r * np.cos(_wavenumber_units(grid, spec.get("rate_k", 1))))
    if shape == "constant":
        # deliberately volume-changing; rejected downstream by the gauge check
        return ScalarField.constant(grid, r)
    if shape == "file":
        return _read_field(cfg, {"path": spec.get("rate_path")} if "rate_path" in spec else {}, grid, "moving")
    raise ConfigError(f"[moving] unknown rate_shape '{shape}'")
