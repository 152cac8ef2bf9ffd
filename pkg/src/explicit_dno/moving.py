"""Generalized DNO for a moving bottom.

With a time-dependent depth the bottom is no longer a streamline.  Its
stream function is ``psi_b = dx^-1 d_t d`` and the surface kinematics become
``d_t eta = G(phi_s)`` with::

    G(phi_s) = G phi_s - dx R^-1 psi_b                          (1-D)
    G(phi_s) = Q^-1 div cosh(d D)^-1 (D^-2 grad d_t d - I grad phi_s)   (N-D)

On a periodic box the antiderivative of ``d_t d`` exists only when the
bottom motion conserves volume, so a rate with nonzero mean is rejected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dno import Bathymetry, DnoReport, SurfaceState, Tally, _dno_nd, _require_1d, _stream_1d
from .series import OperatorConfig
from .spectral import (
    GaugeError,
    ScalarField,
    antiderivative,
    check_same_grid,
    derivative,
    gradient,
    inverse_laplacian,
)


@dataclass(frozen=True, eq=False)
class MovingBathymetry:
    """Depth at the evaluation instant and its time derivative."""

    depth: ScalarField
    depth_rate: ScalarField
    gauge_tol: float = 1e-12

    def __post_init__(self):
        check_same_grid(self.depth, self.depth_rate)
        Bathymetry(self.depth)  # positivity check
        scale = max(self.depth_rate.max_abs(), 1e-300)
        mean = self.depth_rate.mean()
        if abs(mean) > self.gauge_tol * scale:
            raise GaugeError(
                f"depth_rate has mean {mean:.6g}: a periodic bottom stream function exists only for "
                "volume-conserving bottom motion (the antiderivative of the rate is otherwise undefined)",
                mean,
            )

    @property
    def bathymetry(self) -> Bathymetry:
        return Bathymetry(self.depth)

    @property
    def is_static(self) -> bool:
        return not np.any(self.depth_rate.values)


def bottom_streamfunction(mb: MovingBathymetry) -> ScalarField:
    """Zero-mean ``psi_b = dx^-1 d_t d`` (one horizontal dimension)."""
    _require_1d(mb.depth.grid)
    return antiderivative(mb.depth_rate, tol_mean=mb.gauge_tol * max(mb.depth_rate.max_abs(), 1e-300))


def dno_moving_1d(mb: MovingBathymetry, surf: SurfaceState, cfg: OperatorConfig | None = None) -> DnoReport:
    """``G(phi_s) = -dx R^-1 (I dx phi_s + psi_b)``.

    A static bottom goes through exactly the same code as
    :func:`~explicit_dno.dno.dno_apply_1d`.
    """
    cfg = cfg or OperatorConfig()
    _require_1d(surf.grid)
    tally = Tally()
    forcing = None if mb.is_static else bottom_streamfunction(mb)
    psi = _stream_1d(mb.bathymetry, surf, cfg, tally, forcing)
    return tally.report(-derivative(psi))


def dno_moving_nd(mb: MovingBathymetry, surf: SurfaceState, cfg: OperatorConfig | None = None) -> DnoReport:
    """N-dimensional generalized DNO; ``dx^-1`` becomes ``grad Lap^-1`` on the zero-mean rate."""
    cfg = cfg or OperatorConfig()
    tally = Tally()
    forcing = None
    if not mb.is_static:
        # -D^-2 grad d_t d = grad Lap^-1 d_t d, which is psi_b in one dimension
        forcing = gradient(inverse_laplacian(mb.depth_rate, tol_mean=mb.gauge_tol * mb.depth_rate.max_abs()))
    return tally.report(_dno_nd(mb.bathymetry, surf, cfg, tally, forcing))
