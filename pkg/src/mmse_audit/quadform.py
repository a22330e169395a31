"""Quadratic log-odds of two Gaussian classes observed through Gaussian noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ParameterError
from .numerics import cholesky, spd_solve


@dataclass(frozen=True)
class QuadraticForm:
    """theta(x) = x^T A x + b^T x + c with A symmetric."""

    A: np.ndarray
    b: np.ndarray
    c: float

    def __post_init__(self):
        a = np.asarray(self.A, dtype=np.float64)
        if np.max(np.abs(a - a.T), initial=0.0) > 1e-12 * max(np.max(np.abs(a), initial=0.0), 1e-300):
            raise ContractError("quadratic form matrix must be symmetric")

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :] if self.dim > 1 or x.shape[0] == 1 else x[:, None]
        return np.einsum("ni,ij,nj->n", x, self.A, x) + x @ self.b + self.c


def _logdet(m: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(cholesky(m)))))


def ccg_quadratic_coeffs(p, mu0, mu1, sigma0, sigma1, sigma) -> QuadraticForm:
    """Log-odds coefficients for X|S=s ~ N(mu_s, Sigma_s) seen through N(0, sigma^2 I).

    With T_s = Sigma_s + sigma^2 I::

        A = (T0^-1 - T1^-1) / 2
        b = T1^-1 mu1 - T0^-1 mu0
        c = mu0' T0^-1 mu0 / 2 - mu1' T1^-1 mu1 / 2 + log(|T0| / |T1|) / 2 + log(p / (1 - p))
    """
    if not 0.0 < p < 1.0:
        raise ParameterError(f"prior p must lie in (0, 1), got {p}")
    mu0 = np.atleast_1d(np.asarray(mu0, dtype=np.float64))
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=np.float64))
    d = mu0.shape[0]
    eye = np.eye(d)
    t0 = np.atleast_2d(np.asarray(sigma0, dtype=np.float64)) + sigma**2 * eye
    t1 = np.atleast_2d(np.asarray(sigma1, dtype=np.float64)) + sigma**2 * eye
    t0_inv = spd_solve(t0, eye)
    t1_inv = spd_solve(t1, eye)
    t0_inv = 0.5 * (t0_inv + t0_inv.T)
    t1_inv = 0.5 * (t1_inv + t1_inv.T)
    A = 0.5 * (t0_inv - t1_inv)
    b = t1_inv @ mu1 - t0_inv @ mu0
    c = (
        0.5 * mu0 @ t0_inv @ mu0
        - 0.5 * mu1 @ t1_inv @ mu1
        + 0.5 * (_logdet(t0) - _logdet(t1))
        + np.log(p / (1.0 - p))
    )
    return QuadraticForm(A=A, b=b, c=float(c))
