"""Approximation error eps_A = E[(eta^sigma(X) - h*(X))^2] of a hypothesis class.

Monte-Carlo estimation works for any hypothesis. For the logistic class the
quarter-Lipschitz property of the sigmoid gives::

    eps_A <= (1/4) [Var(theta) - Cov(theta, X) Var(X)^-1 Cov(X, theta)]

which has closed forms for Gaussian classes (via moments of quadratic forms)
and a truncated large-sigma series for the binary symmetric channel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .distributions import (
    CCGDiag,
    CCGGeneral,
    JointModel,
    MCEstimate,
    eta_sigma,
    monte_carlo,
    sample,
    theta_sigma,
)
from .errors import ConsistencyError, ContractError, DomainError, NumericalError
from .models import Hypothesis, predict
from .numerics import emp_stats, spd_solve, spd_sqrt, sym_eig
from .quadform import QuadraticForm, ccg_quadratic_coeffs

__all__ = [
    "QuadraticForm",
    "ccg_quadratic_coeffs",
    "ClassMoments",
    "ccg_class_moments",
    "MomentBlocks",
    "ccg_moment_blocks",
    "eps_a_ccg_general",
    "eps_a_ccg_diag",
    "eps_a_ccg_diag_forms",
    "bsc_series_terms",
    "eps_a_bsc_series",
    "bsc_series_tag",
    "prop5_linear_gap",
    "eps_a_mc",
]

DIAG_AGREEMENT_TOL = 1e-9
BSC_CERTIFIED_SIGMA = 1.0


@dataclass(frozen=True)
class ClassMoments:
    """Mean M and variance V of theta(X^sigma) given S = s."""

    mean: float
    var: float

    def __post_init__(self):
        if self.var < 0:
            raise NumericalError(f"negative conditional variance {self.var}")


def ccg_class_moments(qf: QuadraticForm, mu_s, sigma_s_tilde) -> ClassMoments:
    """Moments of x^T A x + b^T x + c for x ~ N(mu_s, Sigma~_s).

    With R = Sigma~^(1/2) and R A R = Q diag(lambda) Q^T::

        M = sum(lambda) + b^T mu + mu^T A mu + c
        V = sum(2 lambda^2 + u^2),   u = Q^T R (b + 2 A mu)
    """
    mu = np.atleast_1d(np.asarray(mu_s, dtype=np.float64))
    r = spd_sqrt(sigma_s_tilde)
    eig = sym_eig(0.5 * (r @ qf.A @ r + (r @ qf.A @ r).T))
    lam = eig.eigenvalues
    u = eig.eigenvectors.T @ r @ (qf.b + 2.0 * qf.A @ mu)
    mean = float(lam.sum() + qf.b @ mu + mu @ qf.A @ mu + qf.c)
    var = float(np.sum(2.0 * lam * lam + u * u))
    return ClassMoments(mean, max(var, 0.0))


class MomentBlocks(NamedTuple):
    """Var(theta), Cov(X, theta) as a length-d vector, and Var(X), all at noise sigma."""

    var1: float
    cov: np.ndarray
    var2: np.ndarray
    moments: tuple[ClassMoments, ClassMoments]
    qf: QuadraticForm


def ccg_moment_blocks(p, mu0, mu1, sigma0, sigma1, sigma) -> MomentBlocks:
    mu0 = np.atleast_1d(np.asarray(mu0, dtype=np.float64))
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=np.float64))
    d = mu0.shape[0]
    s0 = np.atleast_2d(np.asarray(sigma0, dtype=np.float64))
    s1 = np.atleast_2d(np.asarray(sigma1, dtype=np.float64))
    eye = np.eye(d)
    s2 = sigma * sigma
    qf = ccg_quadratic_coeffs(p, mu0, mu1, s0, s1, sigma)
    A, b = qf.A, qf.b
    pb = 1.0 - p
    m0 = ccg_class_moments(qf, mu0, s0 + s2 * eye)
    m1 = ccg_class_moments(qf, mu1, s1 + s2 * eye)
    md = mu1 - mu0
    var1 = p * m1.var + pb * m0.var + p * pb * (m1.mean - m0.mean) ** 2
    cov = (
        2.0 * p * mu1 @ A @ s1
        + 2.0 * pb * mu0 @ A @ s0
        + 2.0 * s2 * (p * mu1 + pb * mu0) @ A
        + p * pb * (np.trace(A @ (s1 - s0)) + mu1 @ A @ mu1 - mu0 @ A @ mu0) * md
        + b @ (p * s1 + pb * s0 + s2 * eye + p * pb * np.outer(md, md))
    )
    var2 = p * s1 + pb * s0 + p * pb * np.outer(md, md) + s2 * eye
    return MomentBlocks(float(var1), cov, 0.5 * (var2 + var2.T), (m0, m1), qf)


def eps_a_ccg_general(p, mu0, mu1, sigma0, sigma1, sigma) -> float:
    """(1/4) (VAR1 - COV VAR2^-1 COV^T) for class-conditional Gaussians."""
    blocks = ccg_moment_blocks(p, mu0, mu1, sigma0, sigma1, sigma)
    try:
        sol = spd_solve(blocks.var2, blocks.cov)
    except NumericalError as exc:
        raise NumericalError("Var(X^sigma) is singular") from exc
    return 0.25 * float(blocks.var1 - blocks.cov @ sol)


def eps_a_ccg_diag_forms(p, mu0, mu1, var0, var1, sigma, d) -> tuple[float, float]:
    """The rational (q, r) form and the dimension-polynomial (c1..c4) form.

    Both depend on the means only through m2 = ||mu1 - mu0||^2.
    """
    mu0 = np.broadcast_to(np.atleast_1d(np.asarray(mu0, dtype=np.float64)), (d,))
    mu1 = np.broadcast_to(np.atleast_1d(np.asarray(mu1, dtype=np.float64)), (d,))
    m2 = float(np.sum((mu1 - mu0) ** 2))
    v0, v1 = float(var0), float(var1)
    pb = 1.0 - p
    s2 = sigma * sigma

    q1 = (
        m2**2 * (p**2 * pb * v1 + p * pb**2 * v0)
        + 2 * d * v0**3
        - d**2 * p**3 * (v1 - v0) ** 3
        + 2 * p * pb * (2 + d) * v0 * v1 * m2
        + p**2 * (
            d * (5 * d - 2) * v0**2 * v1
            - 2 * d * (2 * d + 1) * v0 * v1**2
            + d * (2 + d) * v1**3
            - 2 * d * (d - 1) * v0**3
        )
        + p * (d * (d - 4) * v0**3 - 2 * d * (d - 1) * v0**2 * v1 + d * (2 + d) * v0 * v1**2)
    )
    q2 = (
        p * pb * m2 * (m2 + 2 * (2 + d) * (v0 + v1))
        - p**2 * d * (d - 4) * (v1 - v0) ** 2
        + p * (d * (d - 10) * v0**2 - 2 * d * (d - 4) * v0 * v1 + d * (2 + d) * v1**2)
        + 6 * d * v0**2
    )
    q3 = 2 * p * pb * (2 + d) * m2 + 6 * d * (p * v1 + pb * v0)

    r1 = v0**2 * v1**2 * (p * pb * m2 + p * v1 + pb * v0)
    r2 = v0 * v1 * (2 * p * pb * (v1 + v0) * m2 + 2 * p * v1**2 + 2 * pb * v0**2 + 3 * v0 * v1)
    r3 = (
        p * pb * (v0**2 + 4 * v0 * v1 + v1**2) * m2
        + p * v1**3
        + 3 * (1 + p) * v0 * v1**2
        + 3 * (2 - p) * v0**2 * v1
        + pb * v0**3
    )
    r4 = 2 * p * pb * (v1 + v0) * m2 + (2 * p + 1) * v1**2 + (3 - 2 * p) * v0**2 + 6 * v0 * v1
    r5 = p * pb * m2 + (3 - p) * v0 + (2 + p) * v1
    den = r1 + r2 * s2 + r3 * s2**2 + r4 * s2**3 + r5 * s2**4 + s2**5

    rational = (v1 - v0) ** 2 * (q1 + q2 * s2 + q3 * s2**2 + 2 * d * s2**3) / (16 * den)

    c1 = p * pb * (v1 - v0) ** 4 * (s2 + p * v1 + pb * v0)
    c2 = 2 * (v1 - v0) ** 2 * (
        (v0 + s2) ** 3
        + p * pb * m2 * (v0 + s2) * (v1 + s2)
        + p**2 * (v1 - v0) ** 2 * (v1 + v0 + 2 * s2)
        + p * (v0 + s2) * (v1 - v0) * (v1 + 2 * v0 + 3 * s2)
    )
    c3 = p * pb * m2 * (v1 - v0) ** 2 * (4 * (v0 + s2) * (v1 + s2) + m2 * (p * v1 + pb * v0 + s2))
    poly = (c1 * d**2 + c2 * d + c3) / (16 * den)
    return float(rational), float(poly)


def eps_a_ccg_diag(p, mu0, mu1, var0, var1, sigma, d) -> float:
    """Closed-form bound for scalar class covariances var_s I in R^d.

    Evaluates both algebraic forms and raises :class:`ConsistencyError` if
    they differ by more than 1e-9.
    """
    if not (var0 > 0 and var1 > 0):
        raise ContractError("class variances must be > 0")
    rational, poly = eps_a_ccg_diag_forms(p, mu0, mu1, var0, var1, sigma, d)
    if abs(rational - poly) > DIAG_AGREEMENT_TOL * max(1.0, abs(rational)):
        raise ConsistencyError(f"diagonal forms disagree: {rational!r} vs {poly!r}")
    return rational


def bsc_series_terms(p: float, p_noise: float, sigma: float) -> np.ndarray:
    """The four explicit terms of the large-sigma BSC expansion, in order."""
    if not sigma > 0:
        raise DomainError("the BSC series diverges at sigma = 0")
    pb, pnb = 1.0 - p, 1.0 - p_noise
    q = p_noise * pb + pnb * p
    qq = q * (1.0 - q)
    k = (1.0 - 2.0 * p_noise) ** 2
    s2 = sigma * sigma
    return np.array([
        3.0 * k / (4.0 * s2),
        -k / (4.0 * (qq + s2)),
        k * (5.0 - 4.0 * p_noise + 4.0 * p_noise**2 + 14.0 * q - 2.0 * q * q) / (8.0 * s2 * s2),
        2.0 * k * (p_noise * pnb - qq) / (4.0 * s2 * (qq + s2)),
    ])


def eps_a_bsc_series(p: float, p_noise: float, sigma: float, terms: int = 4) -> float:
    """Sum of the first ``terms`` explicit series terms (remainders omitted).

    The truncation is not a certified upper bound for small sigma; see
    :func:`bsc_series_tag`.
    """
    if terms not in (1, 2, 3, 4):
        raise ContractError(f"terms must be in 1..4, got {terms}")
    return float(np.sum(bsc_series_terms(p, p_noise, sigma)[:terms]))


def bsc_series_tag(sigma: float) -> str:
    return "series" if sigma >= BSC_CERTIFIED_SIGMA else "series, uncertified for sigma < 1"


def prop5_linear_gap(
    model: JointModel,
    sigma: float,
    n: int = 10**6,
    seed: int = 0,
    closed_form: bool = True,
) -> float:
    """Quarter of the residual variance of theta after its best affine fit in X.

    Uses exact Gaussian moments for CCG models when ``closed_form`` is set,
    otherwise unbiased moments over n fresh samples.
    """
    if closed_form and isinstance(model, (CCGDiag, CCGGeneral)):
        s0, s1 = model.covariances()
        return eps_a_ccg_general(model.p, model.mu0, model.mu1, s0, s1, sigma)
    data = sample(model, n, sigma, seed)
    theta = theta_sigma(model, sigma, data.xs)
    if not np.all(np.isfinite(theta)):
        raise NumericalError("log-odds are infinite on the sample")
    st = emp_stats(data.xs, theta)
    if st.var_y == 0.0:
        return 0.0
    try:
        explained = float(st.cov_xy @ spd_solve(st.var_x, st.cov_xy))
    except NumericalError as exc:
        raise NumericalError("empirical Var(X^sigma) is singular") from exc
    return 0.25 * max(st.var_y - explained, 0.0)


def eps_a_mc(model: JointModel, sigma: float, h: Hypothesis, n_mc: int, seed: int) -> MCEstimate:
    """Monte-Carlo mean of (eta^sigma(X^sigma) - h(X^sigma))^2 and its standard error."""

    def gap(ds):
        r = eta_sigma(model, ds.sigma, ds.xs) - predict(h, ds.xs)
        return r * r

    return monte_carlo(model, sigma, n_mc, seed, gap)
