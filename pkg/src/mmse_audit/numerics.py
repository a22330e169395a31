"""Dense linear algebra and moment kernels (float64 throughout).

The symmetric eigensolver is a cyclic Jacobi method. All matrices in this
package are at most a few dozen rows, where Jacobi is accurate to machine
precision and gives a reproducible ordering and sign convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ContractError, NumericalError

JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 100
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class SymEig:
    """Spectral decomposition M = Q diag(eigenvalues) Q^T.

    Eigenvalues are sorted in descending order; each eigenvector column is
    signed so that its largest-magnitude entry is positive.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T


def _as_square(m, name: str = "matrix") -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ContractError(f"{name} has non-finite entries")
    return m


def _check_symmetric(m: np.ndarray) -> None:
    scale = np.max(np.abs(m)) if m.size else 0.0
    asym = np.max(np.abs(m - m.T)) if m.size else 0.0
    if asym > SYMMETRY_TOL * max(scale, 1e-300):
        raise ContractError(f"matrix is not symmetric (max |M - M^T| = {asym:.3e})")


def sym_eig(m) -> SymEig:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps stop once the off-diagonal Frobenius norm drops below
    ``1e-13 * ||M||_F``; more than 100 sweeps raises :class:`NumericalError`.
    """
    m = _as_square(m)
    _check_symmetric(m)
    d = m.shape[0]
    v = np.eye(d)
    # Work on M / max|M| so tiny or huge entries neither underflow nor overflow.
    scale = np.max(np.abs(m)) if m.size else 0.0
    if scale == 0.0 or d == 1:
        return _ordered(np.diag(m).copy(), v)
    a = 0.5 * (m + m.T) / scale
    frob = np.linalg.norm(a)

    for _ in range(JACOBI_MAX_SWEEPS):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off < JACOBI_TOL * frob:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # Classic stable rotation angle (Golub & Van Loan 8.4).
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                else:
                    t = np.copysign(1.0, tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise NumericalError("Jacobi eigensolver did not converge in 100 sweeps")
    return _ordered(np.diag(a) * scale, v)


def _ordered(w: np.ndarray, v: np.ndarray) -> SymEig:
    order = np.argsort(-w, kind="stable")
    w = w[order]
    v = v[:, order]
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return SymEig(eigenvalues=w, eigenvectors=v * signs)


def cholesky(m) -> np.ndarray:
    """Lower-triangular L with L L^T = M; raises ContractError if M is not PD."""
    m = _as_square(m)
    _check_symmetric(m)
    try:
        return np.linalg.cholesky(0.5 * (m + m.T))
    except np.linalg.LinAlgError as exc:
        raise ContractError("matrix is not positive definite") from exc


def is_positive_definite(m) -> bool:
    try:
        cholesky(m)
    except ContractError:
        return False
    return True


def spd_sqrt(m) -> np.ndarray:
    """Symmetric positive-definite square root R with R @ R = M."""
    cholesky(m)  # contract check only
    eig = sym_eig(m)
    if eig.eigenvalues[-1] <= 0.0:
        raise ContractError("matrix is not positive definite")
    q = eig.eigenvectors
    r = (q * np.sqrt(eig.eigenvalues)) @ q.T
    return 0.5 * (r + r.T)


def spd_solve(m, rhs) -> np.ndarray:
    """Solve M x = rhs for symmetric positive-definite M via Cholesky."""
    try:
        lower = cholesky(m)
    except ContractError as exc:
        raise NumericalError("cannot solve: matrix is singular or indefinite") from exc
    y = np.linalg.solve(lower, rhs)
    return np.linalg.solve(lower.T, y)


class EmpiricalStats(NamedTuple):
    mean_x: np.ndarray
    var_x: np.ndarray
    mean_y: float
    cov_xy: np.ndarray
    var_y: float


def emp_stats(xs, ys) -> EmpiricalStats:
    """Unbiased (n - 1 normalized) first and second sample moments of (X, Y)."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 1:
        xs = xs[:, None]
    ys = np.asarray(ys, dtype=np.float64).ravel()
    n = xs.shape[0]
    if n < 2:
        raise ContractError("emp_stats needs at least two samples")
    if ys.shape[0] != n:
        raise ContractError(f"row mismatch: {n} inputs vs {ys.shape[0]} targets")
    # Shift by the first row before centring; constant columns then give exact zeros.
    xs0 = xs - xs[0]
    ys0 = ys - ys[0]
    xc = xs0 - xs0.mean(axis=0)
    yc = ys0 - ys0.mean()
    mean_x = xs[0] + xs0.mean(axis=0)
    mean_y = float(ys[0] + ys0.mean())
    var_x = (xc.T @ xc) / (n - 1)
    cov_xy = (xc.T @ yc) / (n - 1)
    var_y = float(yc @ yc) / (n - 1)
    return EmpiricalStats(mean_x, var_x, mean_y, cov_xy, var_y)
