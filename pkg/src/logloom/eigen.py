"""Self-contained symmetric eigensolver: cyclic Jacobi rotations.

Pairs are visited in round-robin tournament order; the pairs of one phase
act on disjoint planes, so their rotations commute and apply exactly as one
vectorized two-sided update. Elements already below a per-element threshold
derived from the target off-diagonal norm are skipped; once every element
sits under that threshold the norm target is met, so skipping never blocks
convergence.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation, EigenFailure

DEFAULT_TOL = 1e-10
MAX_SWEEPS = 100


def _off_fro(a: np.ndarray) -> float:
    # Sum off-diagonal squares directly; subtracting the diagonal from the
    # full norm cancels catastrophically once the remainder is tiny.
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.sqrt(np.sum(off * off)))


def _round_robin_phases(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Tournament schedule: n-1 phases of disjoint pairs covering all (p, q)."""
    players = list(range(n))
    if n % 2 == 1:
        players.append(-1)  # bye
    half = len(players) // 2
    phases = []
    for _ in range(len(players) - 1):
        ps, qs = [], []
        for i in range(half):
            a, b = players[i], players[-1 - i]
            if a != -1 and b != -1:
                ps.append(min(a, b))
                qs.append(max(a, b))
        phases.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return phases


def jacobi_eigh(
    matrix: np.ndarray, tol: float = DEFAULT_TOL, max_sweeps: int = MAX_SWEEPS
) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by Jacobi rotations.

    Returns (eigenvalues ascending, eigenvectors as matching columns).
    Convergence: off-diagonal Frobenius norm below ``tol`` scaled by the
    matrix norm (absolute ``tol`` for norms <= 1). Raises EigenFailure after
    ``max_sweeps`` sweeps.
    """
    a = np.array(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractViolation("matrix must be square")
    if not (a == a.T).all():
        raise ContractViolation("matrix must be symmetric")
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v

    scale = max(1.0, float(np.linalg.norm(a)))
    target = tol * scale
    # Elements below this can all remain and still keep off_fro under target.
    skip = target / np.sqrt(n * (n - 1))
    phases = _round_robin_phases(n)

    converged = False
    for _ in range(max_sweeps):
        if _off_fro(a) < target:
            converged = True
            break
        for all_p, all_q in phases:
            apq = a[all_p, all_q]
            active = np.abs(apq) > skip
            if not active.any():
                continue
            p = all_p[active]
            q = all_q[active]
            apq = apq[active]
            app = a[p, p]
            aqq = a[q, q]

            tau = (aqq - app) / (2.0 * apq)
            t = np.sign(tau) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            t = np.where(tau == 0.0, 1.0, t)  # 45-degree rotation for equal diagonals
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c

            cols_p = a[:, p]
            cols_q = a[:, q]
            a[:, p] = c * cols_p - s * cols_q
            a[:, q] = s * cols_p + c * cols_q
            rows_p = a[p, :]
            rows_q = a[q, :]
            a[p, :] = c[:, None] * rows_p - s[:, None] * rows_q
            a[q, :] = s[:, None] * rows_p + c[:, None] * rows_q
            a[p, q] = 0.0
            a[q, p] = 0.0

            vec_p = v[:, p]
            vec_q = v[:, q]
            v[:, p] = c * vec_p - s * vec_q
            v[:, q] = s * vec_p + c * vec_q
    if not converged and _off_fro(a) >= target:
        raise EigenFailure(
            f"Jacobi did not converge in {max_sweeps} sweeps "
            f"(off-diagonal norm {_off_fro(a):.3e}, target {target:.3e})"
        )

    eigenvalues = a.diagonal().copy()
    order = np.argsort(eigenvalues, kind="stable")
    return eigenvalues[order], v[:, order]
