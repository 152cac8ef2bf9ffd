import numpy as np
import pytest

from explicit_dno.krylov import SolverError, gmres


def nonsymmetric(n, rng, skew=0.3):
    a = np.eye(n) * 4 + rng.standard_normal((n, n)) * skew / np.sqrt(n)
    return a


def test_solves_nonsymmetric_system(rng):
    a = nonsymmetric(80, rng)
    b = rng.standard_normal(80)
    x, info = gmres(lambda v: a @ v, b, tol=1e-12, max_iters=200, restart=30)
    assert info.converged
    assert np.linalg.norm(a @ x - b) <= 1e-12 * np.linalg.norm(b)
    assert info.residual == pytest.approx(np.linalg.norm(a @ x - b) / np.linalg.norm(b), rel=1e-3, abs=1e-15)


def test_exact_preconditioner_needs_one_step(rng):
    d = np.exp(rng.uniform(-3, 3, 50))
    b = rng.standard_normal(50)
    x, info = gmres(lambda v: d * v, b, lambda v: v / d, tol=1e-13, max_iters=10)
    assert info.iterations == 1
    assert np.allclose(x, b / d, rtol=1e-13)


def test_restarts_reach_tolerance(rng):
    a = nonsymmetric(120, rng, skew=2.0)
    b = rng.standard_normal(120)
    x, info = gmres(lambda v: a @ v, b, tol=1e-10, max_iters=600, restart=5)
    assert info.converged and info.iterations > 5
    assert len(info.history) >= 2
    assert np.linalg.norm(a @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_zero_rhs():
    x, info = gmres(lambda v: 2 * v, np.zeros(7))
    assert info.converged and not np.any(x)


def test_failure_carries_best_iterate_and_history(rng):
    n = 60
    # rotation-like operator: GMRES stagnates for small Krylov spaces
    a = np.roll(np.eye(n), 1, axis=0)
    b = np.zeros(n)
    b[0] = 1.0
    with pytest.raises(SolverError) as info:
        gmres(lambda v: a @ v, b, tol=1e-12, max_iters=20, restart=4, level="inner")
    err = info.value
    assert err.level == "inner"
    assert "[inner]" in str(err)
    assert err.best.shape == (n,)
    assert err.history and all(np.isfinite(err.history))
    assert np.linalg.norm(a @ err.best - b) <= np.linalg.norm(b) + 1e-15
