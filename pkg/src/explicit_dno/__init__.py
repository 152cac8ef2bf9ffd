"""Explicit Dirichlet-Neumann operator for water waves over varying bathymetry."""

from .dno import (
    Bathymetry,
    DepthError,
    DnoReport,
    SurfaceState,
    apply_I,
    apply_J,
    apply_R,
    dno_apply_1d,
    dno_apply_nd,
    dno_flat,
    dno_G0,
    solve_R,
    surface_streamfunction,
)
from .expansions import cs_term, dno_first_variation, shallow_J_term
from .krylov import SolverError
from .moving import MovingBathymetry, bottom_streamfunction, dno_moving_1d, dno_moving_nd
from .oracle import AnalyticSolution, OracleGrid, analytic_dno, fd_dno, linear_dispersion_check
from .series import OperatorConfig, SeriesKind, apply_series
from .spectral import GaugeError, Grid, ScalarField, VectorField

__version__ = "0.1.0"
