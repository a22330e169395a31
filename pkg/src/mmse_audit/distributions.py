"""Joint laws of a binary sensitive label S and features X, seen through noise.

Each model samples ``(X^sigma, S)`` with ``X^sigma = X + sigma' Z`` and
evaluates the exact posterior log-odds ``theta^sigma`` and posterior mean
``eta^sigma = sigmoid(theta^sigma)``. The ring mixture uses the effective
noise scale ``sigma' = sigma / n_modes``; every other model uses ``sigma``.

Config schema (``to_dict`` / ``model_from_dict``)::

    {"kind": "bsc", "p": 0.25, "p_noise": 0.25}
    {"kind": "ccg_diag", "p": 0.25, "mu0": [-1.0], "mu1": [1.0], "var0": 1.0, "var1": 3.0}
    {"kind": "ccg_general", "p": 0.5, "mu0": [...], "mu1": [...],
     "sigma0": [[...], ...], "sigma1": [[...], ...]}
    {"kind": "ring", "p": 0.5, "n_modes": 3, "radius": 2.0}

Scalar means in ``ccg_diag`` are broadcast to the dimension given by ``"d"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Union

import numpy as np
from scipy.special import logsumexp

from . import rng as _rng
from .errors import ContractError, DomainError, ParameterError
from .numerics import cholesky
from .quadform import QuadraticForm, ccg_quadratic_coeffs

MC_CHUNK = 1 << 18

_LOG_2PI = math.log(2.0 * math.pi)


def sigmoid(z):
    """Logistic function evaluated branch-wise so that it never overflows."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_prior(p) -> float:
    p = float(p)
    if not (0.0 < p < 1.0):
        raise ParameterError(f"prior p must lie strictly inside (0, 1), got {p}")
    return p


def _check_sigma(sigma) -> float:
    sigma = float(sigma)
    if not (sigma >= 0.0 and math.isfinite(sigma)):
        raise ParameterError(f"noise std must be finite and >= 0, got {sigma}")
    return sigma


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


def as_points(x, dim: int) -> np.ndarray:
    """Coerce ``x`` to an (n, dim) array; 1-D input is one point unless dim == 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[:, None] if dim == 1 else x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ContractError(f"points have shape {x.shape}, model dimension is {dim}")
    return x


def _gauss_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    lower = cholesky(cov)
    w = np.linalg.solve(lower, (x - mean).T)
    logdet = 2.0 * np.sum(np.log(np.diag(lower)))
    return -0.5 * (np.sum(w * w, axis=0) + logdet + mean.shape[0] * _LOG_2PI)


@dataclass(frozen=True)
class BSC:
    """S ~ Ber(p), X = S xor N with N ~ Ber(p_noise).

    ``p_noise`` may sit on the closed interval [0, 1] so that the noiseless
    identity channel (p_noise = 0) is expressible.
    """

    p: float
    p_noise: float

    kind = "bsc"
    dim = 1

    def __post_init__(self):
        _check_prior(self.p)
        if not 0.0 <= self.p_noise <= 1.0:
            raise ParameterError(f"crossover probability must lie in [0, 1], got {self.p_noise}")

    @property
    def q(self) -> float:
        """Marginal P(X = 1)."""
        return self.p_noise * (1.0 - self.p) + (1.0 - self.p_noise) * self.p

    def noise_scale(self, sigma: float) -> float:
        return sigma

    def sample_clean(self, gen, s: np.ndarray) -> np.ndarray:
        flip = _rng.bernoulli(gen, self.p_noise, s.shape[0])
        return np.abs(s - flip)[:, None]

    def log_odds(self, x: np.ndarray, sigma: float) -> np.ndarray:
        x = x[:, 0]
        with np.errstate(divide="ignore"):
            log_pn, log_qn = np.log(self.p_noise), np.log1p(-self.p_noise)
        prior = math.log(self.p / (1.0 - self.p))
        if sigma == 0.0:
            if not np.all((x == 0.0) | (x == 1.0)):
                raise DomainError("noiseless BSC posterior is only defined at x in {0, 1}")
            return prior + np.where(x == 1.0, log_qn - log_pn, log_pn - log_qn)
        t = (2.0 * x - 1.0) / (2.0 * sigma * sigma)
        return prior + np.logaddexp(log_pn, log_qn + t) - np.logaddexp(log_qn, log_pn + t)

    def class_log_density(self, x: np.ndarray, sigma: float, s: int) -> np.ndarray:
        """log f_s^sigma(x) for sigma > 0."""
        if sigma <= 0.0:
            raise DomainError("BSC has no density at sigma = 0")
        x = x[:, 0]
        w1 = 1.0 - self.p_noise if s == 1 else self.p_noise
        v = sigma * sigma
        with np.errstate(divide="ignore"):
            return -0.5 * (_LOG_2PI + math.log(v)) + np.logaddexp(
                np.log(1.0 - w1) - x * x / (2.0 * v),
                np.log(w1) - (x - 1.0) ** 2 / (2.0 * v),
            )

    def to_dict(self) -> dict:
        return {"kind": self.kind, "p": self.p, "p_noise": self.p_noise}


@dataclass(frozen=True, eq=False)
class CCGDiag:
    """X | S=s ~ N(mu_s, var_s I) in R^d."""

    p: float
    mu0: np.ndarray
    mu1: np.ndarray
    var0: float
    var1: float
    d: int | None = None

    kind = "ccg_diag"

    def __post_init__(self):
        _check_prior(self.p)
        mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=np.float64))
        mu1 = np.atleast_1d(np.asarray(self.mu1, dtype=np.float64))
        d = self.d if self.d is not None else max(mu0.shape[0], mu1.shape[0])
        if int(d) < 1:
            raise ParameterError(f"dimension must be >= 1, got {d}")
        d = int(d)
        mu0 = np.broadcast_to(mu0, (d,)) if mu0.shape[0] == 1 else mu0
        mu1 = np.broadcast_to(mu1, (d,)) if mu1.shape[0] == 1 else mu1
        if mu0.shape != (d,) or mu1.shape != (d,):
            raise ParameterError(f"means must have length {d}")
        if not (self.var0 > 0 and self.var1 > 0):
            raise ParameterError("class variances must be > 0")
        if not (np.all(np.isfinite(mu0)) and np.all(np.isfinite(mu1))):
            raise ParameterError("means must be finite")
        object.__setattr__(self, "mu0", _frozen(mu0))
        object.__setattr__(self, "mu1", _frozen(mu1))
        object.__setattr__(self, "var0", float(self.var0))
        object.__setattr__(self, "var1", float(self.var1))
        object.__setattr__(self, "d", d)

    @property
    def dim(self) -> int:
        return self.d

    def __eq__(self, other):
        return isinstance(other, CCGDiag) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(repr(self.to_dict()))

    def covariances(self) -> tuple[np.ndarray, np.ndarray]:
        eye = np.eye(self.d)
        return self.var0 * eye, self.var1 * eye

    def with_dimension(self, d: int) -> CCGDiag:
        """Same squared mean gap, spread evenly as (g / sqrt(d)) * ones, centred at 0."""
        gap = float(np.linalg.norm(self.mu1 - self.mu0))
        half = 0.5 * gap / math.sqrt(d) * np.ones(d)
        return CCGDiag(self.p, -half, half, self.var0, self.var1, d)

    def noise_scale(self, sigma: float) -> float:
        return sigma

    def sample_clean(self, gen, s: np.ndarray) -> np.ndarray:
        z = _rng.standard_normal(gen, (s.shape[0], self.d))
        one = s[:, None] == 1.0
        scale = np.where(one, math.sqrt(self.var1), math.sqrt(self.var0))
        return np.where(one, self.mu1, self.mu0) + scale * z

    def quadratic_form(self, sigma: float) -> QuadraticForm:
        s0, s1 = self.covariances()
        return ccg_quadratic_coeffs(self.p, self.mu0, self.mu1, s0, s1, sigma)

    def log_odds(self, x: np.ndarray, sigma: float) -> np.ndarray:
        t0, t1 = self.var0 + sigma**2, self.var1 + sigma**2
        r0 = np.sum((x - self.mu0) ** 2, axis=1)
        r1 = np.sum((x - self.mu1) ** 2, axis=1)
        return (
            math.log(self.p / (1.0 - self.p))
            + 0.5 * self.d * math.log(t0 / t1)
            + 0.5 * (r0 / t0 - r1 / t1)
        )

    def class_log_density(self, x: np.ndarray, sigma: float, s: int) -> np.ndarray:
        var = (self.var1 if s == 1 else self.var0) + sigma**2
        mu = self.mu1 if s == 1 else self.mu0
        return _gauss_logpdf(x, mu, var * np.eye(self.d))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "p": self.p,
            "mu0": self.mu0.tolist(),
            "mu1": self.mu1.tolist(),
            "var0": self.var0,
            "var1": self.var1,
            "d": self.d,
        }


@dataclass(frozen=True, eq=False)
class CCGGeneral:
    """X | S=s ~ N(mu_s, Sigma_s) with symmetric positive-definite Sigma_s."""

    p: float
    mu0: np.ndarray
    mu1: np.ndarray
    sigma0: np.ndarray
    sigma1: np.ndarray

    kind = "ccg_general"

    def __post_init__(self):
        _check_prior(self.p)
        mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=np.float64))
        mu1 = np.atleast_1d(np.asarray(self.mu1, dtype=np.float64))
        d = mu0.shape[0]
        if mu1.shape != (d,):
            raise ParameterError("mean vectors must have equal length")
        covs = []
        for name, cov in (("sigma0", self.sigma0), ("sigma1", self.sigma1)):
            cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
            if cov.shape != (d, d):
                raise ParameterError(f"{name} must be {d}x{d}, got {cov.shape}")
            try:
                cholesky(cov)
            except ContractError as exc:
                raise ParameterError(f"{name} must be symmetric positive definite") from exc
            covs.append(cov)
        object.__setattr__(self, "mu0", _frozen(mu0))
        object.__setattr__(self, "mu1", _frozen(mu1))
        object.__setattr__(self, "sigma0", _frozen(covs[0]))
        object.__setattr__(self, "sigma1", _frozen(covs[1]))
        object.__setattr__(self, "_chol", (cholesky(covs[0]), cholesky(covs[1])))

    @property
    def dim(self) -> int:
        return self.mu0.shape[0]

    def __eq__(self, other):
        return isinstance(other, CCGGeneral) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(repr(self.to_dict()))

    def covariances(self) -> tuple[np.ndarray, np.ndarray]:
        return self.sigma0, self.sigma1

    def noise_scale(self, sigma: float) -> float:
        return sigma

    def sample_clean(self, gen, s: np.ndarray) -> np.ndarray:
        z = _rng.standard_normal(gen, (s.shape[0], self.dim))
        l0, l1 = self._chol
        one = s[:, None] == 1.0
        return np.where(one, self.mu1 + z @ l1.T, self.mu0 + z @ l0.T)

    def quadratic_form(self, sigma: float) -> QuadraticForm:
        return ccg_quadratic_coeffs(self.p, self.mu0, self.mu1, self.sigma0, self.sigma1, sigma)

    def log_odds(self, x: np.ndarray, sigma: float) -> np.ndarray:
        try:
            return self.quadratic_form(sigma)(x)
        except ArithmeticError as exc:
            raise DomainError("effective covariance is singular") from exc

    def class_log_density(self, x: np.ndarray, sigma: float, s: int) -> np.ndarray:
        cov = (self.sigma1 if s == 1 else self.sigma0) + sigma**2 * np.eye(self.dim)
        return _gauss_logpdf(x, self.mu1 if s == 1 else self.mu0, cov)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "p": self.p,
            "mu0": self.mu0.tolist(),
            "mu1": self.mu1.tolist(),
            "sigma0": self.sigma0.tolist(),
            "sigma1": self.sigma1.tolist(),
        }


@dataclass(frozen=True)
class RingMixture:
    """Interleaved 2-D Gaussian modes on a circle.

    ``2 * n_modes`` means sit at angles ``2 pi j / (2 n_modes)``; even ``j``
    belong to class 0 and odd ``j`` to class 1. Each component has covariance
    ``I / n_modes**2`` and the additive noise std is ``sigma / n_modes``.
    """

    n_modes: int
    radius: float
    p: float = 0.5

    kind = "ring"
    dim = 2

    def __post_init__(self):
        _check_prior(self.p)
        if int(self.n_modes) != self.n_modes or self.n_modes < 1:
            raise ParameterError(f"n_modes must be an integer >= 1, got {self.n_modes}")
        if not self.radius > 0:
            raise ParameterError(f"radius must be > 0, got {self.radius}")

    @property
    def component_var(self) -> float:
        return 1.0 / self.n_modes**2

    def means(self, s: int) -> np.ndarray:
        j = np.arange(s, 2 * self.n_modes, 2)
        ang = np.pi * j / self.n_modes
        return self.radius * np.column_stack([np.cos(ang), np.sin(ang)])

    def with_modes(self, n_modes: int) -> RingMixture:
        return RingMixture(int(n_modes), self.radius, self.p)

    def noise_scale(self, sigma: float) -> float:
        return sigma / self.n_modes

    def sample_clean(self, gen, s: np.ndarray) -> np.ndarray:
        n = s.shape[0]
        k = np.minimum((_rng.uniform(gen, n) * self.n_modes).astype(np.int64), self.n_modes - 1)
        z = _rng.standard_normal(gen, (n, 2))
        centres = np.where(s[:, None] == 1.0, self.means(1)[k], self.means(0)[k])
        return centres + z / self.n_modes

    def _mixture_lse(self, x: np.ndarray, sigma: float, s: int) -> np.ndarray:
        v = (1.0 + sigma * sigma) / self.n_modes**2
        diff = x[:, None, :] - self.means(s)[None, :, :]
        return logsumexp(-np.sum(diff * diff, axis=2) / (2.0 * v), axis=1)

    def log_odds(self, x: np.ndarray, sigma: float) -> np.ndarray:
        return (
            math.log(self.p / (1.0 - self.p))
            + self._mixture_lse(x, sigma, 1)
            - self._mixture_lse(x, sigma, 0)
        )

    def class_log_density(self, x: np.ndarray, sigma: float, s: int) -> np.ndarray:
        v = (1.0 + sigma * sigma) / self.n_modes**2
        return self._mixture_lse(x, sigma, s) - math.log(self.n_modes) - _LOG_2PI - math.log(v)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "p": self.p, "n_modes": self.n_modes, "radius": self.radius}


JointModel = Union[BSC, CCGDiag, CCGGeneral, RingMixture]

_KINDS = {
    "bsc": lambda c: BSC(c["p"], c["p_noise"]),
    "ccg_diag": lambda c: CCGDiag(c["p"], c["mu0"], c["mu1"], c["var0"], c["var1"], c.get("d")),
    "ccg_general": lambda c: CCGGeneral(c["p"], c["mu0"], c["mu1"], c["sigma0"], c["sigma1"]),
    "ring": lambda c: RingMixture(c["n_modes"], c["radius"], c.get("p", 0.5)),
}


def model_from_dict(cfg: dict) -> JointModel:
    """Inverse of ``model.to_dict()``."""
    kind = cfg.get("kind")
    if kind not in _KINDS:
        raise ParameterError(f"unknown model kind {kind!r}; expected one of {sorted(_KINDS)}")
    try:
        return _KINDS[kind](cfg)
    except KeyError as exc:
        raise ParameterError(f"model config for {kind!r} is missing key {exc.args[0]!r}") from exc


@dataclass(frozen=True, eq=False)
class NoisyDataset:
    """n noisy feature rows ``xs`` with labels ``ss`` drawn at noise level ``sigma``."""

    xs: np.ndarray
    ss: np.ndarray
    sigma: float
    seed: int

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.float64)
        if xs.ndim == 1:
            xs = xs[:, None]
        ss = np.asarray(self.ss, dtype=np.float64).ravel()
        if xs.shape[0] != ss.shape[0]:
            raise ContractError(f"{xs.shape[0]} feature rows but {ss.shape[0]} labels")
        if ss.size and (ss.min() < 0.0 or ss.max() > 1.0):
            raise ContractError("labels must lie in [0, 1]")
        object.__setattr__(self, "xs", _frozen(xs))
        object.__setattr__(self, "ss", _frozen(ss))

    @property
    def n(self) -> int:
        return self.ss.shape[0]

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    def __len__(self) -> int:
        return self.n


def sample(model: JointModel, n: int, sigma: float, seed: int) -> NoisyDataset:
    """Draw n i.i.d. pairs: S first, then X | S, then the additive noise."""
    if int(n) != n or n < 1:
        raise ContractError(f"n must be an integer >= 1, got {n}")
    sigma = _check_sigma(sigma)
    gen = _rng.generator(seed)
    s = _rng.bernoulli(gen, model.p, int(n))
    x = model.sample_clean(gen, s)
    z = _rng.standard_normal(gen, x.shape)
    return NoisyDataset(x + model.noise_scale(sigma) * z, s, sigma, seed)


def theta_sigma(model: JointModel, sigma: float, x) -> np.ndarray:
    """Posterior log-odds log(p f1^sigma(x) / ((1 - p) f0^sigma(x)))."""
    sigma = _check_sigma(sigma)
    return model.log_odds(as_points(x, model.dim), sigma)


def eta_sigma(model: JointModel, sigma: float, x) -> np.ndarray:
    """Posterior mean E[S | X^sigma = x] = sigmoid(theta^sigma(x))."""
    return sigmoid(theta_sigma(model, sigma, x))


class MCEstimate(NamedTuple):
    value: float
    se: float


def monte_carlo(
    model: JointModel,
    sigma: float,
    n: int,
    seed: int,
    fn: Callable[[NoisyDataset], np.ndarray],
    chunk: int = MC_CHUNK,
) -> MCEstimate:
    """Mean and standard error of ``fn`` over n fresh samples.

    Draws are taken in fixed-size chunks with derived seeds and merged in
    chunk order (Chan et al. pairwise update), so the result depends only on
    ``(seed, n, chunk)``.
    """
    if int(n) != n or n < 1:
        raise ContractError(f"n_mc must be an integer >= 1, got {n}")
    total, mean, m2 = 0, 0.0, 0.0
    for i, start in enumerate(range(0, int(n), chunk)):
        k = min(chunk, int(n) - start)
        vals = np.asarray(fn(sample(model, k, sigma, _rng.derive_seed(seed, i))), dtype=np.float64)
        cm = float(vals.mean())
        cm2 = float(np.sum((vals - cm) ** 2))
        new = total + k
        delta = cm - mean
        mean += delta * k / new
        m2 += cm2 + delta * delta * total * k / new
        total = new
    se = math.sqrt(m2 / (total - 1) / total) if total > 1 else 0.0
    return MCEstimate(mean, se)


def true_mmse_mc(model: JointModel, sigma: float, n_mc: int, seed: int) -> MCEstimate:
    """Monte-Carlo estimate of E[(S - eta^sigma(X^sigma))^2] and its standard error."""

    def sq_err(ds: NoisyDataset) -> np.ndarray:
        return (ds.ss - eta_sigma(model, ds.sigma, ds.xs)) ** 2

    return monte_carlo(model, sigma, n_mc, seed, sq_err)
