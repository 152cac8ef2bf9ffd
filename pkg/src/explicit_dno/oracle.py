"""Independent references for the DNO.

``fd_dno`` solves the Laplace problem in the fluid layer ``-d(x) <= y <= eta(x)``
directly.  The layer is flattened with ``s = (y + d)/h`` so the transformed
equation

    phi_xx + 2 a phi_xs + (a^2 + 1/h^2) phi_ss + b phi_s = 0,
    a = (d_x - s h_x)/h,   b = a_x + a a_s,

lives on the rectangle ``[0, L) x [0, 1]``.  It is discretized with centred
differences (fourth order along the layer, second order across it), a ghost
row for the bottom Neumann
condition and a third-order one-sided surface derivative, and the sparse
system is factorized directly.  Geometry derivatives come from a local FFT
helper; nothing here calls into the series engine.

``analytic_dno`` evaluates exact harmonic solutions
``phi = A cosh(|k| (y + d)) cos(k.x)`` over a flat bottom.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .spectral import Grid, ScalarField


class OracleError(RuntimeError):
    """The finite-difference system could not be solved accurately."""


def _fft_derivative(values: np.ndarray, length: float, order: int = 1, axis: int = 0) -> np.ndarray:
    """Spectral derivative of periodic samples (oracle-local helper)."""
    n = values.shape[axis]
    k = 2 * np.pi * np.fft.fftfreq(n, d=length / n)
    mult = (1j * k) ** order
    if order % 2 == 1:
        mult[n // 2] = 0.0
    shape = [1] * values.ndim
    shape[axis] = n
    return np.real(np.fft.ifft(np.fft.fft(values, axis=axis) * mult.reshape(shape), axis=axis))


@dataclass(frozen=True)
class OracleGrid:
    """Horizontal sample count and number of vertical layers of the mapped box."""

    horizontal: int
    vertical_layers: int = 64

    def __post_init__(self):
        if self.horizontal < 4 or self.horizontal % 2:
            raise ValueError("horizontal size must be even and >= 4")
        if self.vertical_layers < 16 or self.vertical_layers % 2:
            raise ValueError("vertical_layers must be even and >= 16")

    def refined(self) -> "OracleGrid":
        return OracleGrid(2 * self.horizontal, 2 * self.vertical_layers)


def _resample(values: np.ndarray, n: int) -> np.ndarray:
    m = values.size
    if m == n:
        return values
    spec = np.fft.rfft(values)
    out = np.zeros(n // 2 + 1, dtype=complex)
    keep = min(m, n) // 2
    out[:keep] = spec[:keep]
    if n > m:
        out[keep] = spec[keep] / 2 if m % 2 == 0 else spec[keep]
    return np.fft.irfft(out, n) * (n / m)


def fd_dno(bathy, surf, og: OracleGrid) -> ScalarField:
    """Surface normal derivative ``phi_y - eta_x phi_x`` from a finite-difference Laplace solve.

    ``bathy`` and ``surf`` are the engine's one-dimensional inputs.  When the
    oracle's horizontal size differs from their grid the (band-limited)
    samples are resampled spectrally, and the result lives on a grid of
    ``og.horizontal`` points.
    """
    grid = surf.eta.grid
    if grid.dimension != 1:
        raise ValueError("the finite-difference oracle is one-dimensional")
    L = grid.extents[0]
    nx, ns = og.horizontal, og.vertical_layers
    d = _resample(np.asarray(bathy.depth.values, float), nx)
    eta = _resample(np.asarray(surf.eta.values, float), nx)
    phis = _resample(np.asarray(surf.phi_s.values, float), nx)
    h = d + eta
    if np.min(h) <= 0:
        raise OracleError("total depth must be positive")
    dx_, ds = L / nx, 1.0 / ns
    d_x, d_xx = _fft_derivative(d, L), _fft_derivative(d, L, 2)
    h_x, h_xx = _fft_derivative(h, L), _fft_derivative(h, L, 2)
    eta_x = _fft_derivative(eta, L)
    phis_x = _fft_derivative(phis, L)

    s = np.arange(ns + 1) * ds
    S, _ = np.meshgrid(s, np.arange(nx), indexing="xy")  # shape (nx, ns+1)
    H = h[:, None]
    Hx = h_x[:, None]
    a = (d_x[:, None] - S * Hx) / H
    a_s = -Hx / H
    # a_x at fixed s: derivative of (d_x - s h_x)/h
    a_x = (d_xx[:, None] - S * h_xx[:, None]) / H - a * Hx / H
    b = a_x + a * a_s
    c_xx = np.ones_like(S)
    c_xs = 2 * a
    c_ss = a * a + 1.0 / (H * H)
    c_s = b

    def idx(i, j):
        return (i % nx) * ns + j

    rows, cols, vals = [], [], []
    rhs = np.zeros(nx * ns)
    bottom_g = -h * d_x / (1 + d_x * d_x)  # phi_s = g * phi_xi at s = 0

    # fourth-order centred weights in x (offsets -2..2); the vertical
    # direction stays second order, so the scheme is second order overall
    # with a clean (uncancelled) leading error term
    w1 = {-2: 1 / 12, -1: -8 / 12, 1: 8 / 12, 2: -1 / 12}
    w2 = {-2: -1 / 12, -1: 16 / 12, 0: -30 / 12, 1: 16 / 12, 2: -1 / 12}

    def add(r, i, j, v):
        """Add coefficient v for node (i, j), folding ghosts and Dirichlet data."""
        if j == ns:
            rhs[r] -= v * phis[i % nx]
        elif j == -1:
            # phi(i,-1) = phi(i,1) - 2 ds g_i phi_x(i,0)
            gi = bottom_g[i % nx]
            add(r, i, 1, v)
            for o, w in w1.items():
                add(r, i + o, 0, -2 * v * ds * gi * w / dx_)
        else:
            rows.append(r)
            cols.append(idx(i, j))
            vals.append(v)

    for i in range(nx):
        for j in range(ns):
            r = idx(i, j)
            cxx, cxs, css, cs = c_xx[i, j], c_xs[i, j], c_ss[i, j], c_s[i, j]
            for o, w in w2.items():
                add(r, i + o, j, cxx * w / dx_**2)
            add(r, i, j, -2 * css / ds**2)
            add(r, i, j + 1, css / ds**2 + cs / (2 * ds))
            add(r, i, j - 1, css / ds**2 - cs / (2 * ds))
            for o, w in w1.items():
                q = cxs * w / (dx_ * 2 * ds)
                add(r, i + o, j + 1, q)
                add(r, i + o, j - 1, -q)

    A = sp.csc_matrix((vals, (rows, cols)), shape=(nx * ns, nx * ns))
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:  # singular factorization
        raise OracleError(f"sparse factorization failed: {exc}") from exc
    phi = lu.solve(rhs)
    res = float(np.linalg.norm(A @ phi - rhs)) / max(float(np.linalg.norm(rhs)), 1e-300)
    if not np.isfinite(res) or res > 1e-10:
        raise OracleError(f"linear solve residual {res:.3e} exceeds 1e-10")
    P = phi.reshape(nx, ns)
    top = (11 * phis - 18 * P[:, ns - 1] + 9 * P[:, ns - 2] - 2 * P[:, ns - 3]) / (6 * ds)
    G = top * (1 + eta_x**2) / h - eta_x * phis_x
    return ScalarField(Grid((L,), (nx,)), G)


class SolutionKind(enum.Enum):
    LINEAR_MODE = "linear_mode"
    NONLINEAR_FLAT_HARMONIC = "nonlinear_flat_harmonic"


@dataclass(frozen=True)
class AnalyticSolution:
    """Exact harmonic potential over a flat bottom.

    ``linear_mode`` is normalized to ``A cos(k.x)`` on ``y = 0`` and is only
    evaluated with ``eta = 0``; ``nonlinear_flat_harmonic`` is
    ``A cosh(|k| (y + d)) cos(k.x)`` traced on any surface ``y = eta``.
    """

    kind: SolutionKind
    wavevector: tuple[float, ...]
    amplitude: float = 1.0
    depth_const: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SolutionKind(self.kind))
        object.__setattr__(self, "wavevector", tuple(float(k) for k in self.wavevector))
        if self.depth_const <= 0:
            raise ValueError("depth_const must be positive")

    @property
    def kabs(self) -> float:
        return float(np.sqrt(sum(k * k for k in self.wavevector)))

    def _phase(self, grid: Grid) -> np.ndarray:
        if len(self.wavevector) != grid.dimension:
            raise ValueError("wavevector length must equal the grid dimension")
        xs = grid.coordinates()
        return sum(k * x for k, x in zip(self.wavevector, xs))

    def _norm(self) -> float:
        if self.kind is SolutionKind.LINEAR_MODE:
            return self.amplitude / np.cosh(self.kabs * self.depth_const)
        return self.amplitude

    def _check_eta(self, eta: ScalarField) -> None:
        if self.kind is SolutionKind.LINEAR_MODE and np.any(eta.values):
            raise ValueError("linear_mode solutions are evaluated on eta = 0 only")

    def phi_s(self, eta: ScalarField) -> ScalarField:
        """Surface trace ``phi(x, eta(x))``."""
        self._check_eta(eta)
        h = eta.values + self.depth_const
        return ScalarField(eta.grid, self._norm() * np.cosh(self.kabs * h) * np.cos(self._phase(eta.grid)))


def analytic_dno(sol: AnalyticSolution, eta: ScalarField) -> ScalarField:
    """Exact ``[phi_y - grad eta . grad phi]`` at ``y = eta`` for ``sol``."""
    sol._check_eta(eta)
    grid = eta.grid
    k = sol.kabs
    h = eta.values + sol.depth_const
    th = sol._phase(grid)
    grad_eta_dot_k = sum(
        kj * _fft_derivative(eta.values, grid.extents[ax], 1, ax) for ax, kj in enumerate(sol.wavevector)
    )
    g = k * np.sinh(k * h) * np.cos(th) + grad_eta_dot_k * np.sin(th) * np.cosh(k * h)
    return ScalarField(grid, sol._norm() * g)


def linear_dispersion_check(depth_const: float, k: int, n: int = 64, cfg=None) -> float:
    """Relative error of the engine's ``G0`` eigenvalue against ``k tanh(k d)`` (2 pi box)."""
    from .dno import Bathymetry, dno_G0

    if not 0 < k < n // 2:
        raise ValueError("k must be a resolved, nonzero integer mode")
    grid = Grid.periodic(n)
    (x,) = grid.coordinates()
    mode = np.cos(k * x)
    out = dno_G0(Bathymetry.constant(grid, depth_const), ScalarField(grid, mode), cfg)
    exact = k * np.tanh(k * depth_const)
    return float(np.max(np.abs(out.values - exact * mode)) / exact)
