"""Restarted GMRES with left or right preconditioning, acting on flat real vectors.

SciPy's ``gmres`` does not return the residual history or a best iterate on
failure.  The operator inverses in this package need both, so the (short)
algorithm lives here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Operator = Callable[[np.ndarray], np.ndarray]


class SolverError(RuntimeError):
    """Krylov iteration failed to reach its tolerance.

    Attributes
    ----------
    best : ndarray
        Iterate with the smallest true residual seen.
    history : list of float
        Relative true residual after every restart cycle.
    level : str
        Which solve failed (``"outer"``, ``"inner"``, ``"R"`` ...).
    """

    def __init__(self, message: str, best: np.ndarray, history: list[float], level: str = "outer"):
        super().__init__(f"[{level}] {message}")
        self.best = best
        self.history = history
        self.level = level


@dataclass
class SolveInfo:
    iterations: int = 0
    residual: float = 0.0
    history: list[float] = field(default_factory=list)
    converged: bool = False


def gmres(
    apply_a: Operator,
    rhs: np.ndarray,
    precond: Operator | None = None,
    *,
    tol: float = 1e-12,
    max_iters: int = 200,
    restart: int = 30,
    x0: np.ndarray | None = None,
    level: str = "outer",
    side: str = "right",
) -> tuple[np.ndarray, SolveInfo]:
    """Solve ``A x = b`` to ``||b - A x|| <= tol ||b||``.

    Parameters
    ----------
    apply_a, precond
        Matrix-free maps on 1-D float arrays.  The preconditioner ``M``
        approximates ``A^-1``.
    side
        ``"right"`` solves ``A M y = b``, so the residual that is minimized
        and tested is the true one.  ``"left"`` solves ``M A x = M b``; the
        tolerance then applies to ``||M (b - A x)|| / ||M b||``.
    max_iters
        Total Krylov steps over all restart cycles.

    Raises
    ------
    SolverError
        When ``max_iters`` steps do not reach ``tol``.
    """
    b = np.asarray(rhs, dtype=float).ravel()
    n = b.size
    m_inv = precond if precond is not None else (lambda v: v)
    if side == "left":
        # GMRES on M A x = M b: the minimized residual is the preconditioned one
        op, left = apply_a, m_inv
        b = left(b)

        def apply_a(v):
            return left(op(v))

        m_inv = lambda v: v  # noqa: E731
    elif side != "right":
        raise ValueError("side must be 'left' or 'right'")
    bnorm = float(np.linalg.norm(b))
    info = SolveInfo()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float).ravel()
    if bnorm == 0.0:
        info.converged = True
        info.history.append(0.0)
        return np.zeros(n), info

    r = b - apply_a(x) if x0 is not None else b.copy()
    rel = float(np.linalg.norm(r)) / bnorm
    info.history.append(rel)
    best, best_rel = x.copy(), rel
    steps = 0
    stagnant = 0
    while rel > tol and steps < max_iters:
        m = min(restart, max_iters - steps)
        beta = float(np.linalg.norm(r))
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        V[0] = r / beta
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        j_done = 0
        for j in range(m):
            w = apply_a(m_inv(V[j]))
            # modified Gram-Schmidt with one reorthogonalization pass
            for _ in range(2):
                for i in range(j + 1):
                    hij = float(V[i] @ w)
                    H[i, j] += hij
                    w = w - hij * V[i]
            H[j + 1, j] = float(np.linalg.norm(w))
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = (1.0, 0.0) if denom == 0 else (H[j, j] / denom, H[j + 1, j] / denom)
            hnext = H[j + 1, j]
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            j_done = j + 1
            steps += 1
            if abs(g[j + 1]) <= 0.5 * tol * bnorm or hnext <= 1e-300:
                break
            V[j + 1] = w / hnext
        y = np.linalg.solve(np.triu(H[:j_done, :j_done]), g[:j_done]) if j_done else np.zeros(0)
        x = x + m_inv(V[:j_done].T @ y)
        r = b - apply_a(x)
        new_rel = float(np.linalg.norm(r)) / bnorm
        info.history.append(new_rel)
        stagnant = stagnant + 1 if new_rel > 0.9 * rel else 0
        rel = new_rel
        if rel < best_rel:
            best, best_rel = x.copy(), rel
        if stagnant >= 3:
            break
    info.iterations = steps
    info.residual = best_rel
    info.converged = best_rel <= tol
    if not info.converged:
        raise SolverError(
            f"GMRES stopped after {steps} steps at relative residual {best_rel:.3e} (tol {tol:.1e})",
            best,
            info.history,
            level,
        )
    return best, info
