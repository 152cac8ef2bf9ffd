"""Approximate DNOs: small-amplitude terms, long-wave terms, first variation.

Small amplitude (any depth profile, ``G0`` from :func:`~explicit_dno.dno.dno_G0`)::

    G1 = -div(eta grad .) - G0 eta G0
    G2 = 1/2 Lap(eta^2 G0 .) - G0 eta G1 - 1/2 G0 div(eta^2 grad .)

Long waves (one horizontal dimension, ``G = -dx J dx``)::

    J0 = h
    J2 = 1/2 h^2 d_xx + h h_x d_x - h d_x^2 + 1/3 dx h^3 dx

First variation in constant depth, with ``C = cosh(D h)`` and
``S = sinh(D h)``::

    dG f = -C^-1 div C(dh grad f) - C^-1 D S(dh G f)

The sign of the last term is fixed by the flat limit
``d/dh [k tanh(k h)] = k^2 sech^2(k h)``.
"""

from __future__ import annotations

import numpy as np

from .dno import (
    Bathymetry,
    Tally,
    _band,
    _sech,
    _solve,
    apply_J,
    band_limit,
    dno_flat,
    dno_G0,
    SurfaceState,
)
from .series import OperatorConfig, apply_cosh_Deta, apply_Dinv_sinh_Deta
from .spectral import (
    ScalarField,
    VectorField,
    check_same_grid,
    dealiased_product,
    derivative,
    divergence,
    gradient,
    laplacian,
)

ORDERS = (0, 1, 2)


def _div_coef_grad(c: ScalarField, f: ScalarField, pad: float) -> ScalarField:
    return divergence(gradient(f).map(lambda g: dealiased_product(c, g, pad)))


def cs_term(
    bathy: Bathymetry,
    eta: ScalarField,
    f: ScalarField,
    order: int,
    cfg: OperatorConfig | None = None,
) -> ScalarField:
    """Term of order ``order`` (0, 1 or 2) in the small-amplitude expansion of ``G f``.

    Order 0 is :func:`dno_G0` itself, so ``cs_term(..., 0)`` and ``dno_G0``
    share one code path.
    """
    if order not in ORDERS:
        raise ValueError(f"order must be one of {ORDERS}, got {order}")
    cfg = cfg or OperatorConfig()
    check_same_grid(bathy.depth, eta, f)
    tally = Tally()
    kmax = band_limit(cfg, bathy)
    pad = cfg.pad_factor

    def g0(u):
        return dno_G0(bathy, u, cfg, kmax=kmax, tally=tally)

    g0f = g0(f)
    if order == 0:
        return g0f
    g1f = -_div_coef_grad(eta, f, pad) - g0(dealiased_product(eta, g0f, pad))
    if order == 1:
        return g1f
    eta2 = dealiased_product(eta, eta, pad)
    return (
        0.5 * laplacian(dealiased_product(eta2, g0f, pad))
        - g0(dealiased_product(eta, g1f, pad))
        - 0.5 * g0(_div_coef_grad(eta2, f, pad))
    )


def cs_sum(bathy, eta, f, order: int = 2, cfg: OperatorConfig | None = None) -> ScalarField:
    """``G0 f + ... + G_order f``."""
    total = cs_term(bathy, eta, f, 0, cfg)
    for n in range(1, order + 1):
        total = total + cs_term(bathy, eta, f, n, cfg)
    return total


def shallow_J_term(bathy: Bathymetry, eta: ScalarField, f: ScalarField, order: int, cfg=None) -> ScalarField:
    """Long-wave term ``J0 f`` or ``J2 f`` (one horizontal dimension)."""
    if order not in (0, 2):
        raise ValueError("shallow-water terms exist for order 0 and 2 only")
    cfg = cfg or OperatorConfig()
    if f.grid.dimension != 1:
        raise ValueError("shallow_J_term is one-dimensional")
    d = bathy.depth
    check_same_grid(d, eta, f)
    pad = cfg.pad_factor
    h = d + eta
    if order == 0:
        return dealiased_product(h, f, pad)
    h2 = dealiased_product(h, h, pad)
    h3 = dealiased_product(h2, h, pad)
    dx, dxx = derivative(d), derivative(d, order=2)
    hx = derivative(h)
    coef = 0.5 * dealiased_product(h2, dxx, pad) + dealiased_product(dealiased_product(h, hx, pad), dx, pad)
    coef = coef - dealiased_product(h, dealiased_product(dx, dx, pad), pad)
    return dealiased_product(coef, f, pad) + derivative(dealiased_product(h3, derivative(f), pad)) / 3.0


def shallow_J(bathy, eta, f, cfg=None) -> ScalarField:
    """``(J0 + J2) f``."""
    return shallow_J_term(bathy, eta, f, 0, cfg) + shallow_J_term(bathy, eta, f, 2, cfg)


def shallow_dno(bathy, eta, phi_s, cfg=None) -> ScalarField:
    """Long-wave DNO ``-dx (J0 + J2) dx phi_s``."""
    return -derivative(shallow_J(bathy, eta, derivative(phi_s), cfg))


def full_J(bathy, eta, f, cfg=None) -> ScalarField:
    """Reference ``J = R^-1 I`` (zero-mean gauge) for comparisons with the long-wave terms."""
    return apply_J(bathy, eta, f, cfg)


def dno_first_variation(
    depth_const: float,
    h: ScalarField,
    delta_h: ScalarField,
    f: ScalarField,
    cfg: OperatorConfig | None = None,
    form: int = 1,
) -> ScalarField:
    """First variation ``dG f`` of the constant-depth DNO with respect to ``h``.

    Parameters
    ----------
    depth_const
        Still-water depth; ``h = eta + depth_const`` is the total depth.
    form
        1 uses ``-C^-1 D S(dh G f)``.  2 rewrites that term as
        ``-G(dh G f) + C^-1 div C(grad h dh G f)``.  Both agree to solver
        tolerance.
    """
    if form not in (1, 2):
        raise ValueError("form must be 1 or 2")
    cfg = cfg or OperatorConfig()
    grid = check_same_grid(h, delta_h, f)
    pad = cfg.pad_factor
    eta = h - depth_const
    tally = Tally()
    kmax = cfg.band_limit(h.max_abs())
    band = _band(grid, kmax)
    pre = band * _sech(grid.k_abs * h.mean())

    def c_op(u):
        return apply_cosh_Deta(h, u, cfg, kmax=kmax, stats=tally.stats)

    def c_inv(u):
        x, _ = _solve(grid, c_op, u, pre, cfg, "outer")
        return x

    def g_of(u):
        return dno_flat(depth_const, SurfaceState(eta, u), cfg).result

    gf = g_of(f)
    dh_gf = dealiased_product(delta_h, gf, pad)
    flux = gradient(f).map(lambda g: c_op(dealiased_product(delta_h, g, pad)))
    out = -c_inv(divergence(flux))
    if form == 1:
        # D sinh(D h) u = -Lap (D^-1 sinh(D h) u)
        ds = -laplacian(apply_Dinv_sinh_Deta(h, dh_gf, cfg, kmax=kmax, stats=tally.stats))
        return out - c_inv(ds)
    flux2 = VectorField(grid, tuple(c_op(dealiased_product(hx, dh_gf, pad)) for hx in gradient(h)))
    return out - g_of(dh_gf) + c_inv(divergence(flux2))
