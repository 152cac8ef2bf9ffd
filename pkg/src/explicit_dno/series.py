"""Truncated power series of pseudo-differential operators.

All operators here are sums of the form ``sum_n w_n(k) [coef^p(n) , f]`` where
``w_n`` is a Fourier multiplier (a power of ``d/dx`` or of the Laplacian
divided by a factorial) and the coefficient power either multiplies *after*
differentiation (``coef^p * D^n f``) or *before* it (``D^n (coef^p f)``).

Two numerical safeguards apply to every series:

* multipliers are built by ratio updates, ``w_n = w_{n-1} * k^2/((2n-1) 2n)``,
  so no factorial is ever formed;
* outputs are band limited to ``|k| <= kmax``.  Cosh-type multipliers grow
  like ``exp(|k| h)`` and would otherwise amplify round-off in the top modes
  without bound.  A standalone application keeps ``cosh(kmax h)`` below
  :attr:`OperatorConfig.series_max_gain`, since nothing undoes its amplified
  round-off.  Inside a DNO evaluation every growing series is followed by the
  inverse of a similar operator, so the assemblies use a wider band and pass
  it down as ``kmax``.  That band is capped twice: by
  :attr:`OperatorConfig.max_gain` and by the reach of an ``max_terms``-term
  Taylor series (:func:`series_reach`).  Beyond the reach the truncated
  series is inaccurate and, because the tail test stops at an input-dependent
  term, no longer linear, which stalls the Krylov solves.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .spectral import Grid, ScalarField, check_same_grid, dealiased_spectral_product


def series_reach(max_terms: int, term_tol: float) -> float:
    """Largest ``x`` at which ``max_terms`` Taylor terms resolve ``cosh(x)``.

    Solves ``x^(2M) / (2M)! = term_tol * cosh(x)`` for ``x``: the first
    omitted term of the cosh series is then at the tail tolerance relative
    to the sum.  The left side minus the right is increasing on ``(0, 2M)``,
    so the root is unique.
    """
    m2 = 2 * max_terms

    def excess(x):
        log_cosh = x + math.log1p(math.exp(-2.0 * x)) - math.log(2.0)
        return m2 * math.log(x) - math.lgamma(m2 + 1) - log_cosh - math.log(term_tol)

    lo = 1e-6
    if excess(lo) >= 0.0:
        return lo
    return brentq(excess, lo, float(m2), xtol=1e-10)


class SeriesDivergenceWarning(RuntimeWarning):
    """Series hit ``max_terms`` while its terms were still growing."""


@dataclass(frozen=True)
class OperatorConfig:
    """Truncation, dealiasing and solver settings shared by every operator."""

    max_terms: int = 24
    term_tol: float = 1e-14
    pad_factor: float = 2.0
    solver_tol: float = 1e-12
    solver_max_iters: int = 200
    restart: int = 30
    refine: int = 1
    max_gain: float = 1e5
    series_max_gain: float = 1e4
    kmax: float | None = None

    def __post_init__(self):
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")
        for name in ("term_tol", "solver_tol"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.pad_factor < 1.0:
            raise ValueError("pad_factor must be >= 1")
        if self.solver_max_iters < 1 or self.restart < 1:
            raise ValueError("solver_max_iters and restart must be positive")
        if self.refine < 0:
            raise ValueError("refine must be >= 0")
        if self.max_gain <= 1.0 or self.series_max_gain <= 1.0:
            raise ValueError("max_gain and series_max_gain must exceed 1")
        if self.kmax is not None and self.kmax <= 0:
            raise ValueError("kmax must be positive")

    def band_limit(self, *scales: float, standalone: bool = False) -> float:
        """Largest retained wavenumber for coefficients of magnitude ``scales``.

        ``standalone=True`` selects the narrower band of a series applied on
        its own (``series_max_gain``).  DNO assemblies use ``max_gain``,
        further capped by :func:`series_reach` so that every retained mode is
        resolved by ``max_terms`` terms.  An explicit ``kmax`` overrides both.
        """
        if self.kmax is not None:
            return float(self.kmax)
        h = max((abs(float(s)) for s in scales), default=0.0)
        if h == 0.0:
            return math.inf
        if standalone:
            return math.acosh(self.series_max_gain) / h
        return min(math.acosh(self.max_gain), series_reach(self.max_terms, self.term_tol)) / h


@dataclass
class SeriesStats:
    """Mutable tally filled in by series evaluations (terms used, warnings)."""

    max_terms_used: int = 0
    evaluations: int = 0
    warnings: list[str] = field(default_factory=list)

    def record(self, terms: int, warning: str | None = None) -> None:
        self.evaluations += 1
        self.max_terms_used = max(self.max_terms_used, terms)
        if warning and warning not in self.warnings:
            self.warnings.append(warning)


class SeriesKind(enum.Enum):
    C = "C"
    S = "S"
    C_ADJ = "C_adj"
    S_ADJ = "S_adj"


@dataclass(frozen=True)
class _Family:
    first_power: int  # coefficient power of the n = 0 term
    step: int  # power increment per term
    w0: Callable[[Grid], np.ndarray]
    ratio: Callable[[Grid, int], np.ndarray]
    multiply_first: bool
    label: str
    terms_per_index: int = 1  # exp series: one truncation index = one cosh/sinh pair


def _odd_axis0(grid: Grid, sign: float) -> np.ndarray:
    k = grid.wavenumbers[0] * np.ones(grid.spectral_shape)
    return np.where(grid.nyquist_masks[0], 0.0, sign * 1j * k)


def _ones(grid: Grid) -> np.ndarray:
    return np.ones(grid.spectral_shape)


def _kx2(grid):
    return grid.wavenumbers[0] ** 2 * np.ones(grid.spectral_shape)


def _even_ratio(k2: Callable[[Grid], np.ndarray]):
    return lambda g, n: k2(g) / ((2 * n - 1) * (2 * n))


def _odd_ratio(k2: Callable[[Grid], np.ndarray]):
    return lambda g, n: k2(g) / ((2 * n) * (2 * n + 1))


def _absk2(grid):
    return grid.k_squared


_FAMILIES = {
    # (-1)^n/(2n)! g^2n d^2n  ->  multiplier k^2n/(2n)!
    SeriesKind.C: _Family(0, 2, _ones, _even_ratio(_kx2), False, "C"),
    SeriesKind.C_ADJ: _Family(0, 2, _ones, _even_ratio(_kx2), True, "C_adj"),
    # (-1)^n/(2n+1)! g^(2n+1) d^(2n+1)  ->  i k^(2n+1)/(2n+1)!
    SeriesKind.S: _Family(1, 2, lambda g: _odd_axis0(g, 1.0), _odd_ratio(_kx2), False, "S"),
    SeriesKind.S_ADJ: _Family(1, 2, lambda g: _odd_axis0(g, -1.0), _odd_ratio(_kx2), True, "S_adj"),
    "cosh_dD": _Family(0, 2, _ones, _even_ratio(_absk2), False, "cosh(dD)"),
    "cosh_Deta": _Family(0, 2, _ones, _even_ratio(_absk2), True, "cosh(D eta)"),
    "sinh_dD_Dinv": _Family(1, 2, _ones, _odd_ratio(_absk2), False, "sinh(dD)/D"),
    "Dinv_sinh_Deta": _Family(1, 2, _ones, _odd_ratio(_absk2), True, "sinh(D eta)/D"),
    "sinhc_Dh": _Family(0, 2, _ones, _odd_ratio(_absk2), True, "sinhc(D h)"),
}


def _exp_family(sign: float) -> _Family:
    return _Family(0, 1, _ones, lambda g, n: sign * g.k_abs / n, True, f"exp({'+' if sign > 0 else '-'}D h)", 2)


def _spec_norm(a: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.abs(a) ** 2)))


def sum_series(
    family: _Family,
    grid: Grid,
    coef: np.ndarray | float,
    f_hat: np.ndarray,
    cfg: OperatorConfig,
    kmax: float | None,
    stats: SeriesStats | None = None,
) -> np.ndarray:
    """Sum a series in Fourier space; returns the band-limited output spectrum.

    ``coef`` is either a scalar (constant coefficient, diagonal fast path) or
    an array of nodal values.
    """
    mask = grid.band_mask(kmax)
    w = family.w0(grid)
    if mask is not None:
        w = w * mask
    const = np.ndim(coef) == 0
    if not const:
        coef = np.asarray(coef, dtype=float)
        if np.ptp(coef) <= 1e-14 * max(float(np.max(np.abs(coef))), 1e-300):
            coef, const = float(coef.flat[0]), True

    if const:
        c = float(coef)
        c_step = c ** family.step
        scale = c ** family.first_power
        base = f_hat
    elif family.multiply_first:
        step_hat = grid.fft(coef ** family.step)
        if family.first_power:
            base = dealiased_spectral_product(grid, grid.fft(coef ** family.first_power), f_hat, cfg.pad_factor)
        else:
            base = f_hat
    else:
        power = coef ** family.first_power if family.first_power else None
        coef_step = coef ** family.step
        f_band = f_hat if mask is None else f_hat * mask

    total = np.zeros(grid.spectral_shape, dtype=complex)
    norms: list[float] = []
    small = 0
    converged = False
    n_used = 0
    n_terms = cfg.max_terms * family.terms_per_index
    for n in range(n_terms):
        if n > 0:
            w = w * family.ratio(grid, n)
        if const:
            term = (w * scale) * base
            scale *= c_step
        elif family.multiply_first:
            term = w * base
            if n + 1 < n_terms:
                base = dealiased_spectral_product(grid, base, step_hat, cfg.pad_factor)
        else:
            g_hat = w * f_band
            if power is None:
                term = g_hat
            else:
                term = dealiased_spectral_product(grid, grid.fft(power), g_hat, cfg.pad_factor)
            power = coef_step if power is None else power * coef_step
        if mask is not None and not (const or family.multiply_first):
            term = term * mask
        total += term
        n_used = n + 1
        tn = _spec_norm(term)
        norms.append(tn)
        if tn <= cfg.term_tol * _spec_norm(total):
            small += 1
            if small >= 2 or tn == 0.0:
                converged = True
                break
        else:
            small = 0

    warning = None
    if not converged and len(norms) >= 4 and norms[-1] > norms[-2] > norms[-3] > norms[-4]:
        warning = (
            f"series {family.label} not converged after {cfg.max_terms} terms; "
            f"last term norms growing ({norms[-1]:.3g})"
        )
    if stats is not None:
        stats.record(n_used, warning)
    elif warning:
        warnings.warn(warning, SeriesDivergenceWarning, stacklevel=3)
    return total


def _apply(family, coef, f, cfg, kmax, stats) -> ScalarField:
    if isinstance(coef, ScalarField):
        check_same_grid(coef, f)
        cvals = coef.values
        scale = coef.max_abs()
    else:
        cvals = float(coef)
        scale = abs(cvals)
    cfg = cfg or OperatorConfig()
    if kmax is None:
        kmax = cfg.band_limit(scale, standalone=True)
    spec = sum_series(family, f.grid, cvals, f.spectrum, cfg, kmax, stats)
    return ScalarField.from_spectrum(f.grid, spec)


def apply_series(
    kind: SeriesKind,
    gamma: ScalarField | float,
    f: ScalarField,
    cfg: OperatorConfig | None = None,
    *,
    kmax: float | None = None,
    stats: SeriesStats | None = None,
) -> ScalarField:
    """Apply one of the cosine/sine series operators in ``gamma d/dx`` to ``f``.

    ``C`` and ``S`` multiply by ``gamma^p`` after differentiating; their
    adjoints ``C_ADJ`` and ``S_ADJ`` differentiate after multiplying.  Only the
    first grid axis is used.
    """
    if f.grid.dimension != 1:
        raise ValueError("apply_series acts on 1-D grids; use the Laplacian-series operators in 2-D")
    return _apply(_FAMILIES[SeriesKind(kind)], gamma, f, cfg, kmax, stats)


def apply_cosh_dD(d, f: ScalarField, cfg: OperatorConfig | None = None, *, kmax=None, stats=None) -> ScalarField:
    """``cosh(d D) f = sum (-1)^n d^2n Lap^n f / (2n)!`` (depth multiplies last)."""
    return _apply(_FAMILIES["cosh_dD"], d, f, cfg, kmax, stats)


def apply_sinh_dD_Dinv(d, f: ScalarField, cfg: OperatorConfig | None = None, *, kmax=None, stats=None) -> ScalarField:
    """``sinh(d D) D^-1 f = sum (-1)^n d^(2n+1) Lap^n f / (2n+1)!``."""
    return _apply(_FAMILIES["sinh_dD_Dinv"], d, f, cfg, kmax, stats)


def apply_cosh_Deta(eta, f: ScalarField, cfg: OperatorConfig | None = None, *, kmax=None, stats=None) -> ScalarField:
    """``cosh(D eta) f = sum (-1)^n Lap^n (eta^2n f) / (2n)!`` (elevation multiplies first)."""
    return _apply(_FAMILIES["cosh_Deta"], eta, f, cfg, kmax, stats)


def apply_Dinv_sinh_Deta(eta, f: ScalarField, cfg: OperatorConfig | None = None, *, kmax=None, stats=None) -> ScalarField:
    """``D^-1 sinh(D eta) f = sum (-1)^n Lap^n (eta^(2n+1) f) / (2n+1)!``."""
    return _apply(_FAMILIES["Dinv_sinh_Deta"], eta, f, cfg, kmax, stats)


def apply_sinhc_Dh(h, f: ScalarField, cfg: OperatorConfig | None = None, *, kmax=None, stats=None) -> ScalarField:
    """``sinhc(D h) f = sum D^2n (h^2n f) / (2n+1)!``."""
    return _apply(_FAMILIES["sinhc_Dh"], h, f, cfg, kmax, stats)


def apply_exp_Dh(h, f: ScalarField, sign: int = 1, cfg: OperatorConfig | None = None, *, kmax=None, stats=None) -> ScalarField:
    """``exp(+-D h) f = sum (+-D)^n (h^n f) / n!``; odd powers use the nonlocal ``D``.

    One truncation index covers a (cosh, sinh) pair of powers, so ``max_terms``
    means the same highest power ``2 M - 1`` as in the cosh/sinh series.
    """
    return _apply(_exp_family(1.0 if sign > 0 else -1.0), h, f, cfg, kmax, stats)


def apply_sech_dD_const(d_const: float, f: ScalarField) -> ScalarField:
    """Exact ``sech(|k| d)`` multiplier for a constant depth."""
    x = f.grid.k_abs * float(d_const)
    e = np.exp(-x)
    return ScalarField.from_spectrum(f.grid, f.spectrum * (2 * e / (1 + e * e)))


def apply_cosh_dD_const(d_const: float, f: ScalarField) -> ScalarField:
    return ScalarField.from_spectrum(f.grid, f.spectrum * np.cosh(f.grid.k_abs * float(d_const)))


def euler_numbers(count: int) -> list[int]:
    """Even-index Euler numbers ``E_0, E_2, ..., E_{2(count-1)}`` (exact integers)."""
    out = [1]
    for n in range(1, count):
        # sum_{j<=n} C(2n, 2j) E_2j = 0
        out.append(-sum(math.comb(2 * n, 2 * j) * out[j] for j in range(n)))
    return out


def sech_maclaurin(z: float, terms: int) -> float:
    """Partial sum of ``sum E_2n z^2n / (2n)!``; converges only for ``|z| < pi/2``."""
    total = 0.0
    for n, e in enumerate(euler_numbers(terms)):
        total += e * z ** (2 * n) / math.factorial(2 * n)
    return total
