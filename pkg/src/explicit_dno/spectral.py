"""Periodic grids, fields and Fourier-space calculus.

Every field lives on a uniform periodic box in one or two horizontal
dimensions.  Transforms use the real FFT (``numpy.fft.rfftn``) so that real
inputs always produce real outputs; there is no imaginary residue to cast
away.

Conventions
-----------
* node ``j`` along an axis of length ``L`` with ``n`` samples is at ``j L / n``;
* axis wavenumbers are ``2 pi m / L`` for ``m`` in the symmetric FFT band;
* inverses of ``d/dx`` and of the semi-Laplacian use the zero-mean gauge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np


class GridMismatchError(ValueError):
    """Fields that must share a grid do not."""


class GaugeError(ValueError):
    """An inverse derivative was asked to integrate a field with nonzero mean."""

    def __init__(self, message: str, mean: float):
        super().__init__(message)
        self.mean = mean


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid in one or two dimensions."""

    extents: tuple[float, ...]
    sizes: tuple[int, ...]

    def __post_init__(self):
        extents = tuple(float(e) for e in self.extents)
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "sizes", sizes)
        if len(extents) != len(sizes) or len(sizes) not in (1, 2):
            raise ValueError("grid dimension must be 1 or 2 with one extent per size")
        if any(not (e > 0.0 and math.isfinite(e)) for e in extents):
            raise ValueError(f"extents must be positive, got {extents}")
        if any(s < 4 or s % 2 for s in sizes):
            raise ValueError(f"sizes must be even and >= 4, got {sizes}")

    @classmethod
    def periodic(cls, n: int | Sequence[int], length: float | Sequence[float] = 2 * np.pi) -> "Grid":
        sizes = (n,) if np.isscalar(n) else tuple(n)
        extents = (length,) * len(sizes) if np.isscalar(length) else tuple(length)
        return cls(extents, sizes)

    @property
    def dimension(self) -> int:
        return len(self.sizes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.sizes

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return self.sizes[:-1] + (self.sizes[-1] // 2 + 1,)

    @property
    def cell_volume(self) -> float:
        return float(np.prod([e / s for e, s in zip(self.extents, self.sizes)]))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Node coordinates, one broadcast array per axis (``indexing='ij'``)."""
        axes = [np.arange(n) * (L / n) for L, n in zip(self.extents, self.sizes)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Per-axis wavenumbers shaped to broadcast against a spectrum."""
        out = []
        dim = self.dimension
        for ax, (L, n) in enumerate(zip(self.extents, self.sizes)):
            if ax == dim - 1:
                k = 2 * np.pi * np.fft.rfftfreq(n, d=L / n)
            else:
                k = 2 * np.pi * np.fft.fftfreq(n, d=L / n)
            shape = [1] * dim
            shape[ax] = k.size
            out.append(k.reshape(shape))
        return tuple(out)

    @cached_property
    def k_squared(self) -> np.ndarray:
        return sum(k ** 2 for k in self.wavenumbers) * np.ones(self.spectral_shape)

    @cached_property
    def k_abs(self) -> np.ndarray:
        return np.sqrt(self.k_squared)

    @cached_property
    def nyquist_masks(self) -> tuple[np.ndarray, ...]:
        """Boolean masks of the Nyquist plane of each axis."""
        masks = []
        for ax, n in enumerate(self.sizes):
            m = np.zeros(self.spectral_shape, dtype=bool)
            idx = [slice(None)] * self.dimension
            idx[ax] = n // 2
            m[tuple(idx)] = True
            masks.append(m)
        return tuple(masks)

    def fft(self, values: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(values, axes=tuple(range(self.dimension)))

    def ifft(self, spectrum: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(spectrum, s=self.sizes, axes=tuple(range(self.dimension)))

    def band_mask(self, kmax: float | None) -> np.ndarray | None:
        """Mask of modes with ``|k| <= kmax`` (``None`` keeps everything).

        A finite band also drops the Nyquist planes: odd derivatives vanish
        there, which would leave band-limited solves singular.
        """
        if kmax is None or not math.isfinite(kmax):
            return None
        mask = self.k_abs <= kmax * (1 + 1e-12)
        for nyq in self.nyquist_masks:
            mask &= ~nyq
        return mask

    def padded(self, factor: float) -> "Grid":
        sizes = tuple(max(n, 2 * int(math.ceil(n * factor / 2))) for n in self.sizes)
        return Grid(self.extents, sizes)


def _resize_spectrum(spec: np.ndarray, old: tuple[int, ...], new: tuple[int, ...]) -> np.ndarray:
    """Zero-pad or truncate an rfftn spectrum between grid sizes.

    Nyquist coefficients are split evenly between ``+n/2`` and ``-n/2`` when
    padding and recombined when truncating, so padding followed by truncation is
    the identity.  Amplitudes are rescaled to the new sample count.
    """
    out = spec
    dim = len(old)
    # last (half-spectrum) axis first: its Nyquist recombination needs the
    # mirrored index along the full axes at their current size
    n, m = old[-1], new[-1]
    if m != n:
        shape = out.shape[:-1] + (m // 2 + 1,)
        res = np.zeros(shape, dtype=complex)
        if m > n:
            res[..., : n // 2] = out[..., : n // 2]
            res[..., n // 2] = 0.5 * out[..., n // 2]
        else:
            res[..., : m // 2] = out[..., : m // 2]
            col = out[..., m // 2]
            mirrored = col
            for ax in range(dim - 1):
                mirrored = np.roll(np.flip(mirrored, axis=ax), 1, axis=ax)
            res[..., m // 2] = col + np.conj(mirrored)
        out = res
    for ax in range(dim - 1):
        n, m = old[ax], new[ax]
        if m == n:
            continue
        shape = list(out.shape)
        shape[ax] = m
        res = np.zeros(shape, dtype=complex)

        def sl(a, b):
            idx = [slice(None)] * dim
            idx[ax] = slice(a, b)
            return tuple(idx)

        def at(i):
            idx = [slice(None)] * dim
            idx[ax] = i
            return tuple(idx)

        if m > n:
            res[sl(0, n // 2)] = out[sl(0, n // 2)]
            res[sl(m - n // 2 + 1, m)] = out[sl(n // 2 + 1, n)]
            res[at(n // 2)] = 0.5 * out[at(n // 2)]
            res[at(m - n // 2)] = 0.5 * out[at(n // 2)]
        else:
            res[sl(0, m // 2)] = out[sl(0, m // 2)]
            res[sl(m // 2 + 1, m)] = out[sl(n - m // 2 + 1, n)]
            res[at(m // 2)] = out[at(m // 2)] + out[at(n - m // 2)]
        out = res
    return out * (np.prod(new) / np.prod(old))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real samples of a function on a periodic grid.  Immutable."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values of shape {v.shape} do not match grid {self.grid.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_spectrum(cls, grid: Grid, spectrum: np.ndarray) -> "ScalarField":
        return cls(grid, grid.ifft(spectrum))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    @cached_property
    def spectrum(self) -> np.ndarray:
        s = self.grid.fft(self.values)
        s.setflags(write=False)
        return s

    def mean(self) -> float:
        return float(np.mean(self.values))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def norm(self) -> float:
        """Discrete L2 norm, ``sqrt(sum f^2 dV)``."""
        return math.sqrt(float(np.sum(self.values ** 2)) * self.grid.cell_volume)

    def inner(self, other: "ScalarField") -> float:
        check_same_grid(self, other)
        return float(np.sum(self.values * other.values)) * self.grid.cell_volume

    def is_constant(self, rtol: float = 1e-14) -> bool:
        v = self.values
        return float(np.ptp(v)) <= rtol * max(float(np.max(np.abs(v))), 1e-300)

    def _coerce(self, other):
        if isinstance(other, ScalarField):
            check_same_grid(self, other)
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other):
        # pointwise product; use dealiased_product for nonlinear terms
        return ScalarField(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.grid, self.values / self._coerce(other))

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def __repr__(self):
        return f"ScalarField(sizes={self.grid.sizes}, max|f|={self.max_abs():.3g})"


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid
    components: tuple[ScalarField, ...] = field(default_factory=tuple)

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) != self.grid.dimension:
            raise ValueError("component count must equal the grid dimension")
        for c in comps:
            if c.grid != self.grid:
                raise GridMismatchError("vector components live on a different grid")
        object.__setattr__(self, "components", comps)

    def __iter__(self) -> Iterator[ScalarField]:
        return iter(self.components)

    def __getitem__(self, i: int) -> ScalarField:
        return self.components[i]

    def map(self, fn) -> "VectorField":
        return VectorField(self.grid, tuple(fn(c) for c in self.components))


def check_same_grid(*fields) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError(f"grid mismatch: {f.grid} vs {grid}")
    return grid


def _axis_multiplier(grid: Grid, axis: int, order: int) -> np.ndarray:
    k = grid.wavenumbers[axis]
    mult = (1j * k) ** order * np.ones(grid.spectral_shape)
    if order % 2:
        mult = np.where(grid.nyquist_masks[axis], 0.0, mult)
    return mult


def derivative(f: ScalarField, axis: int = 0, order: int = 1) -> ScalarField:
    """Spectral derivative of ``f`` along ``axis``."""
    if not 0 <= axis < f.grid.dimension:
        raise ValueError(f"axis {axis} out of range for a {f.grid.dimension}-D grid")
    if order < 1:
        raise ValueError("order must be >= 1")
    return ScalarField.from_spectrum(f.grid, f.spectrum * _axis_multiplier(f.grid, axis, order))


def gradient(f: ScalarField) -> VectorField:
    return VectorField(f.grid, tuple(derivative(f, ax) for ax in range(f.grid.dimension)))


def divergence(v: VectorField) -> ScalarField:
    grid = check_same_grid(*v.components)
    spec = sum(c.spectrum * _axis_multiplier(grid, ax, 1) for ax, c in enumerate(v))
    return ScalarField.from_spectrum(grid, spec)


def laplacian(f: ScalarField) -> ScalarField:
    # consistent with divergence(gradient(.)): odd Nyquist planes are dropped
    grid = f.grid
    mult = sum(_axis_multiplier(grid, ax, 1) ** 2 for ax in range(grid.dimension))
    return ScalarField.from_spectrum(grid, f.spectrum * mult)


def semi_laplacian(f: ScalarField) -> ScalarField:
    """``(-Laplacian)^(1/2)``: multiplier ``|k|``."""
    return ScalarField.from_spectrum(f.grid, f.spectrum * f.grid.k_abs)


def _check_gauge(f: ScalarField, bad: np.ndarray, tol_mean: float | None, what: str) -> None:
    scale = max(f.max_abs(), 1e-300)
    tol = 1e-12 * scale if tol_mean is None else tol_mean
    n = np.prod(f.grid.sizes)
    offending = np.abs(f.spectrum[bad]) / n
    if offending.size and float(offending.max()) > tol:
        mean = float(f.spectrum.flat[0].real / n)
        raise GaugeError(
            f"{what} needs a zero-mean argument; mean = {mean:.6g} "
            f"(worst offending coefficient {float(offending.max()):.3g} > {tol:.3g})",
            mean,
        )


def antiderivative(f: ScalarField, axis: int = 0, tol_mean: float | None = None) -> ScalarField:
    """Zero-mean periodic antiderivative along ``axis``.

    Raises :class:`GaugeError` when ``f`` has a component that is constant
    along ``axis`` (in 1-D: a nonzero mean), since no periodic antiderivative
    exists then.
    """
    grid = f.grid
    if not 0 <= axis < grid.dimension:
        raise ValueError(f"axis {axis} out of range for a {grid.dimension}-D grid")
    k = grid.wavenumbers[axis] * np.ones(grid.spectral_shape)
    _check_gauge(f, k == 0, tol_mean, "antiderivative")
    mult = np.zeros(grid.spectral_shape, dtype=complex)
    nz = (k != 0) & ~grid.nyquist_masks[axis]
    mult[nz] = 1.0 / (1j * k[nz])
    return ScalarField.from_spectrum(grid, f.spectrum * mult)


def inverse_semi_laplacian(f: ScalarField, tol_mean: float | None = None) -> ScalarField:
    """Multiplier ``1/|k|`` on nonzero modes, zero on the mean."""
    grid = f.grid
    kabs = grid.k_abs
    _check_gauge(f, kabs == 0, tol_mean, "inverse_semi_laplacian")
    mult = np.zeros(grid.spectral_shape)
    mult[kabs > 0] = 1.0 / kabs[kabs > 0]
    return ScalarField.from_spectrum(grid, f.spectrum * mult)


def inverse_laplacian(f: ScalarField, tol_mean: float | None = None) -> ScalarField:
    """Zero-mean solution ``u`` of ``Laplacian u = f``."""
    grid = f.grid
    k2 = grid.k_squared
    _check_gauge(f, k2 == 0, tol_mean, "inverse_laplacian")
    mult = np.zeros(grid.spectral_shape)
    mult[k2 > 0] = -1.0 / k2[k2 > 0]
    return ScalarField.from_spectrum(grid, f.spectrum * mult)


def dealiased_spectral_product(grid: Grid, a_hat: np.ndarray, b_hat: np.ndarray, pad_factor: float = 1.5) -> np.ndarray:
    """Spectrum of ``a*b`` computed on a zero-padded grid and truncated back."""
    if pad_factor <= 1.0:
        return grid.fft(grid.ifft(a_hat) * grid.ifft(b_hat))
    big = grid.padded(pad_factor)
    a = big.ifft(_resize_spectrum(a_hat, grid.sizes, big.sizes))
    b = big.ifft(_resize_spectrum(b_hat, grid.sizes, big.sizes))
    return _resize_spectrum(big.fft(a * b), big.sizes, grid.sizes)


def dealiased_product(f: ScalarField, g: ScalarField, pad_factor: float = 1.5) -> ScalarField:
    """Pointwise product evaluated on a grid padded by ``pad_factor``.

    Exact for band-limited factors whose product fits in the padded band; the
    default 3/2 suffices for one quadratic product.
    """
    grid = check_same_grid(f, g)
    return ScalarField.from_spectrum(grid, dealiased_spectral_product(grid, f.spectrum, g.spectrum, pad_factor))


def interpolate(f: ScalarField, grid: Grid) -> ScalarField:
    """Band-limited (Fourier) interpolation of ``f`` onto another grid of the same box."""
    if grid.extents != f.grid.extents:
        raise GridMismatchError("interpolation needs identical extents")
    if grid.sizes == f.grid.sizes:
        return f
    return ScalarField.from_spectrum(grid, _resize_spectrum(f.spectrum, f.grid.sizes, grid.sizes))


# --- FLD1 text format --------------------------------------------------------

FLD1_MAGIC = "FLD1"


def write_fld1(path, f: ScalarField) -> None:
    """Write ``f`` as FLD1 text: magic, ``dim``/``extents``/``sizes`` headers, samples."""
    grid = f.grid
    lines = [
        FLD1_MAGIC,
        f"dim {grid.dimension}",
        "extents " + " ".join(f"{e:.17g}" for e in grid.extents),
        "sizes " + " ".join(str(s) for s in grid.sizes),
    ]
    lines.extend(f"{v:.17g}" for v in f.values.ravel(order="C"))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_fld1(path) -> ScalarField:
    with open(path, encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != FLD1_MAGIC:
        raise ValueError(f"{path}: not an FLD1 file")
    header = {}
    for ln in lines[1:4]:
        key, _, rest = ln.partition(" ")
        header[key] = rest.split()
    try:
        dim = int(header["dim"][0])
        extents = tuple(float(x) for x in header["extents"])
        sizes = tuple(int(x) for x in header["sizes"])
    except (KeyError, IndexError, ValueError) as exc:
        raise ValueError(f"{path}: malformed FLD1 header") from exc
    if dim != len(extents) or dim != len(sizes):
        raise ValueError(f"{path}: header dimension mismatch")
    grid = Grid(extents, sizes)
    data = np.array([float(x) for x in lines[4:]])
    if data.size != np.prod(sizes):
        raise ValueError(f"{path}: expected {np.prod(sizes)} samples, found {data.size}")
    return ScalarField(grid, data.reshape(sizes))
