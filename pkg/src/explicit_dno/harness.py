"""Experiment drivers behind the command-line interface.

Each ``cmd_*`` function takes an :class:`~explicit_dno.config.ExperimentConfig`
and returns a :class:`RunResult`: a deterministic report (plain JSON-ready
data), optional output fields and CSV rows, and wall-clock timings kept apart
so that identical inputs give identical report bytes.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import ConfigError, ExperimentConfig, make_depth, make_eta, make_phi, make_rate, random_field
from .dno import (
    Bathymetry,
    SurfaceState,
    apply_I_nd,
    band_limit as dno_band_limit,
    dno_apply_1d,
    dno_apply_nd,
    dno_flat,
    linear_symbol,
    surface_streamfunction,
)
from .expansions import cs_sum, full_J, shallow_J
from .moving import MovingBathymetry, dno_moving_1d, dno_moving_nd
from .oracle import AnalyticSolution, OracleGrid, analytic_dno, fd_dno
from .series import (
    OperatorConfig,
    apply_cosh_dD,
    apply_cosh_Deta,
    apply_Dinv_sinh_Deta,
    apply_exp_Dh,
    apply_sinh_dD_Dinv,
)
from .spectral import Grid, ScalarField, laplacian, semi_laplacian


@dataclass
class RunResult:
    report: dict
    fields: dict[str, ScalarField] = field(default_factory=dict)
    csv_rows: list[dict] | None = None
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.report.get("passed", True))


def _rel(a: ScalarField, b: ScalarField, norm: str = "inf") -> float:
    diff = a.values - b.values
    if norm == "inf":
        return float(np.max(np.abs(diff)) / max(np.max(np.abs(b.values)), 1e-300))
    return float(np.linalg.norm(diff) / max(np.linalg.norm(b.values), 1e-300))


def _state(cfg: ExperimentConfig, seed: int, grid: Grid | None = None):
    grid = grid or cfg.grid
    depth = make_depth(cfg, grid)
    eta = make_eta(cfg, grid)
    phi = make_phi(cfg, grid, eta, depth, seed)
    return Bathymetry(depth), SurfaceState(eta, phi)


def _evaluate(method: str, bathy: Bathymetry, surf: SurfaceState, opc: OperatorConfig):
    if method == "real":
        return dno_apply_1d(bathy, surf, opc)
    if method == "nd":
        return dno_apply_nd(bathy, surf, opc)
    if method in ("flat_a", "flat_b"):
        if not bathy.is_flat:
            raise ConfigError(f"method '{method}' requires a constant-depth bathymetry")
        return dno_flat(bathy.mean_depth, surf, opc, path=method[-1])
    raise ConfigError(f"unknown method '{method}' (real | nd | flat_a | flat_b)")


def _default_method(grid: Grid) -> str:
    return "real" if grid.dimension == 1 else "nd"


def _reference(cfg: ExperimentConfig, bathy, surf, kind: str):
    """Return ``(name, field)`` for the chosen reference solution, or ``(None, None)``."""
    pot = cfg.section("potential")
    grid = surf.grid
    if kind == "auto":
        if bathy.is_flat and pot.get("shape") == "harmonic":
            kind = "analytic"
        elif bathy.is_flat and not np.any(surf.eta.values) and pot.get("shape", "cosine") == "cosine":
            kind = "linear"
        elif grid.dimension == 1:
            kind = "oracle"
        else:
            kind = "none"
    if kind == "none":
        return None, None
    if kind == "analytic":
        if pot.get("shape") != "harmonic" or not bathy.is_flat:
            raise ConfigError("reference 'analytic' needs a flat bottom and potential shape 'harmonic'")
        from .config import _kvector

        sol = AnalyticSolution("nonlinear_flat_harmonic", _kvector(grid, pot.get("k", 1)), float(pot.get("amplitude", 1.0)), bathy.mean_depth)
        return "analytic", analytic_dno(sol, surf.eta)
    if kind == "linear":
        if not bathy.is_flat or np.any(surf.eta.values):
            raise ConfigError("reference 'linear' needs a flat bottom and eta = 0")
        mult = linear_symbol(grid.k_abs, bathy.mean_depth)
        return "linear", ScalarField.from_spectrum(grid, surf.phi_s.spectrum * mult)
    if kind == "oracle":
        if grid.dimension != 1:
            raise ConfigError("reference 'oracle' is one-dimensional")
        layers = int(cfg.section("experiment").get("oracle_layers", max(16, grid.sizes[0] // 4)))
        return "oracle", fd_dno(bathy, surf, OracleGrid(grid.sizes[0], layers))
    raise ConfigError(f"unknown reference '{kind}' (auto | none | analytic | linear | oracle)")


# --------------------------------------------------------------------------
# apply
# --------------------------------------------------------------------------

def cmd_apply(cfg: ExperimentConfig, seed: int = 0) -> RunResult:
    """Evaluate the DNO for the configured inputs and compare with a reference."""
    exp = cfg.section("experiment")
    opc = cfg.operator
    bathy, surf = _state(cfg, seed)
    method = exp.get("method", _default_method(surf.grid))
    t0 = time.perf_counter()
    rep = _evaluate(method, bathy, surf, opc)
    t_engine = time.perf_counter() - t0
    fields = {"G": rep.result}
    report: dict = {
        "command": "apply",
        "method": method,
        "seed": seed,
        "grid": {"sizes": list(surf.grid.sizes), "extents": list(surf.grid.extents)},
        "iterations": rep.iterations,
        "inner_iterations": rep.inner_iterations,
        "final_residual": rep.final_residual,
        "truncation_terms_used": rep.truncation_terms_used,
        "warnings": rep.warnings,
        "mean_G": rep.result.mean(),
    }
    if exp.get("stream_function", surf.grid.dimension == 1) and surf.grid.dimension == 1:
        fields["psi"] = surface_streamfunction(bathy, surf, opc)
    t0 = time.perf_counter()
    name, ref = _reference(cfg, bathy, surf, exp.get("reference", "auto"))
    t_ref = time.perf_counter() - t0
    if ref is not None:
        report["reference"] = name
        report["error_rel_linf"] = _rel(rep.result, ref)
        report["error_rel_l2"] = _rel(rep.result, ref, "l2")
        if name == "linear":
            report["dispersion_error"] = report["error_rel_linf"]
    return RunResult(report, fields, timings={"engine_s": t_engine, "reference_s": t_ref})


# --------------------------------------------------------------------------
# validate
# --------------------------------------------------------------------------

def _ensemble(grid: Grid, rng: np.random.Generator, depth: float):
    d = ScalarField(grid, depth + random_field(grid, rng, 2, 0.1 * depth).values)
    eta = random_field(grid, rng, 2, 0.1 * depth)
    u = random_field(grid, rng, 4, 1.0)
    v = random_field(grid, rng, 4, 1.0)
    rate = random_field(grid, rng, 3, 0.1)
    return Bathymetry(d), eta, u, v, rate


def _prop(name: str, value: float, bound: float, passed: bool | None = None, relation: str = "<") -> dict:
    ok = (value < bound if relation == "<" else value > bound) if passed is None else passed
    return {"property": name, "value": float(value), "bound": float(bound), "relation": relation, "passed": bool(ok)}


def cmd_validate(cfg: ExperimentConfig, seed: int = 0, workers: int = 1) -> RunResult:
    """Run the invariant battery on a seeded random ensemble."""
    grid = cfg.grid
    opc = cfg.operator
    vcfg = cfg.section("validate")
    draws = int(vcfg.get("draws", 4))
    depth = float(vcfg.get("depth", 0.5))
    tol_sa = max(1e-10, 10 * opc.solver_tol)
    rng = np.random.default_rng(seed)
    cases = [_ensemble(grid, rng, depth) for _ in range(draws)]
    # the configured bathymetry and surface go through the guards as well
    make_bathy, make_surf = _state(cfg, seed, grid)
    from .dno import check_total_depth

    check_total_depth(make_bathy, make_surf.eta)
    evaluate = dno_apply_1d if grid.dimension == 1 else dno_apply_nd

    def run_case(case):
        bathy, eta, u, v, rate = case
        gu = evaluate(bathy, SurfaceState(eta, u), opc).result
        gv = evaluate(bathy, SurfaceState(eta, v), opc).result
        gc = evaluate(bathy, SurfaceState(eta, ScalarField.constant(grid, 1.0)), opc).result
        out = {
            "asym": abs(u.inner(gv) - gu.inner(v)) / max(u.norm() * gv.norm(), 1e-300),
            "quad": u.inner(gu) / u.norm() ** 2,
            "mean": abs(gu.mean()) / max(gu.max_abs(), 1e-300),
            "const": gc.max_abs(),
        }
        if grid.dimension == 1:
            out["dual"] = _rel(dno_apply_nd(bathy, SurfaceState(eta, u), opc).result, gu, "l2")
            mb0 = MovingBathymetry(bathy.depth, ScalarField.constant(grid, 0.0))
            out["static"] = float(np.max(np.abs(dno_moving_1d(mb0, SurfaceState(eta, u), opc).result.values - gu.values)))
            gm = dno_moving_1d(MovingBathymetry(bathy.depth, rate), SurfaceState(eta, u), opc).result
            out["budget"] = abs(gm.mean())
        return out

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_case, cases))
    else:
        results = [run_case(c) for c in cases]

    props = [
        _prop("self_adjoint", max(r["asym"] for r in results), tol_sa),
        _prop("positive_semidefinite", min(r["quad"] for r in results), -1e-10, relation=">"),
        _prop("zero_mean_output", max(r["mean"] for r in results), 1e-12),
        _prop("constants_annihilated", max(r["const"] for r in results), 1e-12),
    ]
    if grid.dimension == 1:
        props += [
            _prop("dual_formula", max(r["dual"] for r in results), 10 * 3 * opc.solver_tol),
            _prop("static_reduction", max(r["static"] for r in results), 0.0, passed=all(r["static"] == 0.0 for r in results), relation="=="),
            _prop("volume_budget", max(r["budget"] for r in results), 1e-11),
        ]
    props += appendix_identities(grid, opc)
    props.append(non_commutation_witness(grid, opc))
    passed = all(p["passed"] for p in props)
    report = {"command": "validate", "seed": seed, "draws": draws, "grid": list(grid.sizes), "properties": props, "passed": passed}
    return RunResult(report)


def appendix_identities(grid: Grid, opc: OperatorConfig, depth: float = 1.0, eta_amp: float = 0.2, kf: int = 2) -> list[dict]:
    """Constant-depth addition and exponential-split identities on a band-limited field."""
    xs = grid.coordinates()
    base = 2 * np.pi / np.asarray(grid.extents)
    th = sum(b * x for b, x in zip(base, xs))
    eta = ScalarField(grid, eta_amp * np.cos(th + 0.3))
    f = ScalarField(grid, np.cos(th) + 0.5 * np.sin(kf * th))
    h = eta + depth
    kw = {"kmax": opc.band_limit(h.max_abs(), standalone=True)}
    fmax = f.max_abs()
    d_f = ScalarField.constant(grid, depth)
    cosh_h = apply_cosh_Deta(h, f, opc, **kw)
    sinh_h_over_d = apply_Dinv_sinh_Deta(h, f, opc, **kw)
    lhs1 = apply_cosh_dD(d_f, apply_cosh_Deta(eta, f, opc, **kw), opc, **kw) + apply_sinh_dD_Dinv(
        d_f, -laplacian(apply_Dinv_sinh_Deta(eta, f, opc, **kw)), opc, **kw
    )
    lhs2 = apply_I_nd(Bathymetry(d_f), eta, f, opc, kmax=kw["kmax"])
    sinh_h = semi_laplacian(sinh_h_over_d)
    plus = apply_exp_Dh(h, f, +1, opc, **kw)
    minus = apply_exp_Dh(h, f, -1, opc, **kw)
    bound = 1e-10
    return [
        _prop("appendix_cosh_addition", (lhs1 - cosh_h).max_abs() / fmax, bound),
        _prop("appendix_sinh_addition", (lhs2 - sinh_h_over_d).max_abs() / fmax, bound),
        _prop("appendix_exp_plus", (cosh_h + sinh_h - plus).max_abs() / fmax, bound),
        _prop("appendix_exp_minus", (cosh_h - sinh_h - minus).max_abs() / fmax, bound),
    ]


def non_commutation_witness(grid: Grid, opc: OperatorConfig) -> dict:
    """``cosh(d D) f`` differs from ``cosh(D d) f`` when ``d`` varies."""
    xs = grid.coordinates()
    th = sum(2 * np.pi / L * x for L, x in zip(grid.extents, xs))
    d = ScalarField(grid, 1 + 0.2 * np.cos(th))
    f = ScalarField(grid, np.cos(2 * th))
    gap = (apply_cosh_dD(d, f, opc) - apply_cosh_Deta(d, f, opc)).max_abs()
    return _prop("non_commutation", gap, 1e-3, relation=">")


# --------------------------------------------------------------------------
# converge
# --------------------------------------------------------------------------

def _slopes(params: list[float], errors: list[float]) -> list[dict]:
    out = []
    for (p0, e0), (p1, e1) in zip(zip(params, errors), zip(params[1:], errors[1:])):
        ratio = e0 / e1 if e1 > 0 else math.inf
        order = math.log(ratio) / math.log(p0 / p1) if e1 > 0 and e0 > 0 and p0 != p1 else math.nan
        out.append({"from": p0, "to": p1, "ratio": ratio, "order": order})
    return out


def _finite(x: float) -> float | None:
    return float(x) if math.isfinite(x) else None


def cmd_converge(cfg: ExperimentConfig, seed: int = 0, workers: int = 1) -> RunResult:
    """Sweep one parameter and record error, iterations and time per point."""
    conv = cfg.section("converge")
    sweep = conv.get("sweep", "terms")
    exp = cfg.section("experiment")
    base_opc = cfg.operator
    method = exp.get("method", _default_method(cfg.grid))

    def point(value) -> dict:
        t0 = time.perf_counter()
        iters = 0
        if sweep == "terms":
            bathy, surf = _state(cfg, seed)
            # keep the band of the base settings: the DNO band shrinks with
            # max_terms, which would mix band and truncation effects
            kmax = base_opc.kmax or dno_band_limit(base_opc, bathy, surf.eta)
            opc = OperatorConfig(**{**_opc_dict(base_opc), "max_terms": int(value), "kmax": kmax})
            rep = _evaluate(method, bathy, surf, opc)
            ref = _sweep_reference(cfg, bathy, surf, method, base_opc, seed)
            err, iters = _rel(rep.result, ref), rep.iterations
        elif sweep == "resolution":
            grid = Grid.periodic([int(value)] * cfg.grid.dimension, list(cfg.grid.extents))
            bathy, surf = _state(cfg, seed, grid)
            rep = _evaluate(method, bathy, surf, base_opc)
            _, ref = _reference(cfg, bathy, surf, exp.get("reference", "auto"))
            if ref is None:
                raise ConfigError("resolution sweep needs a reference (analytic, linear or oracle)")
            err, iters = _rel(rep.result, ref), rep.iterations
        elif sweep == "steepness":
            cfg2 = _with(cfg, "surface", amplitude=float(value))
            bathy, surf = _state(cfg2, seed)
            rep = _evaluate(method, bathy, surf, base_opc)
            _, ref = _reference(cfg2, bathy, surf, exp.get("reference", "auto"))
            err = _rel(rep.result, ref) if ref is not None else math.nan
            iters = rep.iterations
        elif sweep == "cs_amplitude":
            cfg2 = _with(cfg, "surface", amplitude=float(value))
            bathy, surf = _state(cfg2, seed)
            rep = _evaluate(method, bathy, surf, base_opc)
            err = (rep.result - cs_sum(bathy, surf.eta, surf.phi_s, 2, base_opc)).norm()
            iters = rep.iterations
        elif sweep == "shallow":
            err = _shallow_point(cfg, float(value), base_opc)
        else:
            raise ConfigError(f"unknown sweep '{sweep}' (terms | resolution | steepness | cs_amplitude | shallow)")
        return {"parameter": value, "error": err, "iterations": iters, "time": time.perf_counter() - t0}

    values = list(conv.get("values", _default_values(sweep)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(point, values))
    else:
        rows = [point(v) for v in values]
    params = [float(r["parameter"]) for r in rows]
    errors = [float(r["error"]) for r in rows]
    report = {
        "command": "converge",
        "sweep": sweep,
        "seed": seed,
        "points": [{k: (_finite(r[k]) if k == "error" else r[k]) for k in ("parameter", "error", "iterations")} for r in rows],
        "slopes": [{k: _finite(v) if isinstance(v, float) else v for k, v in s.items()} for s in _slopes(params, errors)],
    }
    timings = {f"point_{i}_s": r["time"] for i, r in enumerate(rows)}
    return RunResult(report, csv_rows=rows, timings=timings)


def _default_values(sweep: str) -> list:
    return {
        "terms": [4, 8, 12, 16, 24, 32],
        "resolution": [32, 64, 128, 256],
        "steepness": [0.05, 0.1, 0.2, 0.3],
        "cs_amplitude": [0.04, 0.02, 0.01],
        "shallow": [0.2, 0.1, 0.05],
    }[sweep]


def _opc_dict(opc: OperatorConfig) -> dict:
    from dataclasses import asdict

    return asdict(opc)


def _with(cfg: ExperimentConfig, section: str, **kw) -> ExperimentConfig:
    raw = dict(cfg.raw)
    raw[section] = {**cfg.section(section), **kw}
    return ExperimentConfig(raw, cfg.base_dir)


def _sweep_reference(cfg, bathy, surf, method, opc, seed):
    name, ref = _reference(cfg, bathy, surf, cfg.section("experiment").get("reference", "auto"))
    if ref is not None and name != "oracle":
        return ref
    # no exact reference: use a long truncation as the converged value
    hi = OperatorConfig(**{**_opc_dict(opc), "max_terms": 64})
    return _evaluate(method, bathy, surf, hi).result


def _shallow_point(cfg: ExperimentConfig, sigma: float, opc: OperatorConfig) -> float:
    """Relative distance between the full ``J`` and ``J0 + J2`` at shallowness ``sigma``."""
    sw = cfg.section("converge")
    n = int(sw.get("shallow_n", 64))
    depth = float(sw.get("shallow_depth", 1.0))
    corr = float(sw.get("shallow_bottom", 0.2))
    amp = float(sw.get("shallow_eta", 0.2))
    k0 = sigma / depth
    grid = Grid.periodic(n, 2 * np.pi / k0)
    (x,) = grid.coordinates()
    bathy = Bathymetry(ScalarField(grid, depth * (1 + corr * np.cos(k0 * x))))
    eta = ScalarField(grid, amp * depth * np.cos(k0 * x + 0.5))
    f = ScalarField(grid, np.cos(k0 * x) + 0.3 * np.sin(2 * k0 * x))
    jf = full_J(bathy, eta, f, opc)
    js = shallow_J(bathy, eta, f, opc)
    js = js - js.mean()
    return (jf - js).norm() / jf.norm()


# --------------------------------------------------------------------------
# moving
# --------------------------------------------------------------------------

def cmd_moving(cfg: ExperimentConfig, seed: int = 0) -> RunResult:
    """Bottom-forced surface response, static reduction and volume budget."""
    grid = cfg.grid
    opc = cfg.operator
    depth = make_depth(cfg, grid)
    rate = make_rate(cfg, grid)
    mb = MovingBathymetry(depth, rate)
    bathy, surf = _state(cfg, seed, grid)
    moving = dno_moving_1d if grid.dimension == 1 else dno_moving_nd
    static = dno_apply_1d if grid.dimension == 1 else dno_apply_nd
    rep = moving(mb, surf, opc)
    props = [_prop("volume_budget", abs(rep.result.mean()), 1e-11)]
    g_static = static(bathy, surf, opc).result
    g_zero = moving(MovingBathymetry(depth, ScalarField.constant(grid, 0.0)), surf, opc).result
    diff = float(np.max(np.abs(g_static.values - g_zero.values)))
    props.append(_prop("static_reduction", diff, 0.0, passed=diff == 0.0, relation="=="))
    mv = cfg.section("moving")
    report = {"command": "moving", "seed": seed, "iterations": rep.iterations, "mean_G": rep.result.mean()}
    if bathy.is_flat and mv.get("rate_shape", "cosine") == "cosine":
        # pure wavemaker: response of a still, flat layer to r cos(k.x)
        z = ScalarField.constant(grid, 0.0)
        resp = moving(mb, SurfaceState(z, z), opc).result
        from .config import _kvector

        kv = np.asarray(_kvector(grid, mv.get("rate_k", 1)))
        expected = ScalarField(grid, -rate.values / np.cosh(np.linalg.norm(kv) * bathy.mean_depth))
        err = (resp - expected).max_abs() / max(expected.max_abs(), 1e-300)
        props.append(_prop("wavemaker_response", err, 1e-10))
    report["properties"] = props
    report["passed"] = all(p["passed"] for p in props)
    return RunResult(report, {"G": rep.result})


COMMANDS: dict[str, Callable] = {
    "apply": cmd_apply,
    "validate": cmd_validate,
    "converge": cmd_converge,
    "moving": cmd_moving,
}
