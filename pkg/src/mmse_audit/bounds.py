"""Concentration and generalization terms, and the assembled MMSE lower bounds.

Training bound::

    MMSE >= MSE_train(h_hat) - eps_C - eps_A

Validation bound, each probabilistic term at confidence delta / 3::

    MMSE >= MSE_val(h_hat) - eps_C_tilde - eps_G - eps_C - eps_A

Bounds are never clamped. A value <= 0 is returned as-is and flagged vacuous.

When eps_A comes from a Monte-Carlo estimate its standard error is stored in
the report metadata only. It is treated as exact and is not folded into the
failure probability delta.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConsistencyError, ContractError

EPS_A_MODES = ("closed_form", "monte_carlo")


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ContractError(f"delta must lie in (0, 1), got {delta}")


def _check_n(n, minimum: int = 1) -> None:
    if int(n) != n or n < minimum:
        raise ContractError(f"sample count must be an integer >= {minimum}, got {n}")


def eps_c_hoeffding(n: int, delta: float) -> float:
    """sqrt(log(1/delta) / (2 n))."""
    _check_n(n)
    _check_delta(delta)
    return math.sqrt(math.log(1.0 / delta) / (2.0 * n))


def sample_variance_pairwise(w) -> float:
    """(1 / (n (n-1))) * sum_{i<j} (w_i - w_j)^2, evaluated in O(n^2) for testing."""
    w = np.asarray(w, dtype=np.float64).ravel()
    n = w.shape[0]
    if n < 2:
        raise ContractError("pairwise variance needs n >= 2")
    diff = w[:, None] - w[None, :]
    return float(np.sum(np.triu(diff * diff, 1)) / (n * (n - 1)))


def eps_c_bernstein(w, delta: float) -> float:
    """Empirical Bernstein deviation for i.i.d. W_i in [0, 1].

    sqrt(2 Var_n(W) log(2/delta) / n) + 7 log(2/delta) / (3 (n - 1)), with
    Var_n the unbiased sample variance (equal to the pairwise form).
    """
    w = np.asarray(w, dtype=np.float64).ravel()
    n = w.shape[0]
    _check_n(n, 2)
    _check_delta(delta)
    if not np.all(np.isfinite(w)) or w.min() < 0.0 or w.max() > 1.0:
        raise ContractError("Bernstein bound requires every W_i in [0, 1]")
    var = float(np.var(w, ddof=1))
    log_term = math.log(2.0 / delta)
    return math.sqrt(2.0 * var * log_term / n) + 7.0 * log_term / (3.0 * (n - 1))


def eps_g_compression(c_bits: float, n: int, delta: float) -> float:
    """sqrt((C log 2 + 2 log C + log(1/delta)) / (2 n)) for a C-bit description."""
    if not c_bits >= 1:
        raise ContractError(f"c_bits must be >= 1, got {c_bits}")
    _check_n(n)
    _check_delta(delta)
    num = c_bits * math.log(2.0) + 2.0 * math.log(c_bits) + math.log(1.0 / delta)
    return math.sqrt(num / (2.0 * n))


class AssembledBound(NamedTuple):
    value: float
    vacuous: bool


def assemble_train_bound(mse_train: float, eps_c: float, eps_a: float) -> AssembledBound:
    if min(mse_train, eps_c, eps_a) < 0:
        raise ContractError("MSE and epsilon terms must be >= 0")
    value = mse_train - eps_c - eps_a
    return AssembledBound(value, value <= 0.0)


def assemble_val_bound(
    mse_val: float,
    eps_c_tilde: float,
    eps_g: float,
    eps_c: float,
    eps_a: float,
    delta: float | None = None,
    term_deltas: dict | None = None,
) -> AssembledBound:
    """Validation bound with overall confidence 1 - delta.

    ``term_deltas`` maps each probabilistic term name to the delta it was
    computed at. Every entry must equal delta / 3 (union bound over the three
    terms); any mismatch raises :class:`ConsistencyError`.
    """
    if min(mse_val, eps_c_tilde, eps_g, eps_c, eps_a) < 0:
        raise ContractError("MSE and epsilon terms must be >= 0")
    if term_deltas:
        if delta is None:
            raise ContractError("term_deltas given without the overall delta")
        for name, d in term_deltas.items():
            if not math.isclose(d, delta / 3.0, rel_tol=1e-12):
                raise ConsistencyError(f"{name} was computed at delta={d}, expected delta/3={delta / 3.0}")
    value = mse_val - eps_c_tilde - eps_g - eps_c - eps_a
    return AssembledBound(value, value <= 0.0)


@dataclass(frozen=True)
class BoundReport:
    """All terms of one audit. Optional fields are None when not computed.

    ``eps_c`` is the term used in the training bound (``eps_c_kind`` says
    which). The validation bound uses ``eps_c_val``, ``eps_c_tilde`` and
    ``eps_g``, all computed at delta / 3.
    """

    n: int
    delta: float
    mse_train: float
    eps_c_hoeffding: float
    eps_a: float
    eps_a_mode: str
    eps_c_bernstein: float | None = None
    eps_c_kind: str = "hoeffding"
    m: int | None = None
    mse_val: float | None = None
    eps_c_tilde: float | None = None
    eps_g: float | None = None
    eps_c_val: float | None = None
    c_bits: int | None = None
    eps_a_se: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.eps_a_mode not in EPS_A_MODES:
            raise ContractError(f"eps_a_mode must be one of {EPS_A_MODES}")
        if self.eps_c_kind not in ("hoeffding", "bernstein"):
            raise ContractError("eps_c_kind must be 'hoeffding' or 'bernstein'")
        if self.eps_c_kind == "bernstein" and self.eps_c_bernstein is None:
            raise ContractError("eps_c_kind='bernstein' needs eps_c_bernstein")
        for name in ("eps_c_hoeffding", "eps_c_bernstein", "eps_a", "eps_c_tilde", "eps_g", "eps_c_val"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ContractError(f"{name} must be >= 0, got {v}")

    @property
    def eps_c(self) -> float:
        return self.eps_c_bernstein if self.eps_c_kind == "bernstein" else self.eps_c_hoeffding

    @property
    def train(self) -> AssembledBound:
        return assemble_train_bound(self.mse_train, self.eps_c, self.eps_a)

    @property
    def lower_bound_train(self) -> float:
        return self.train.value

    @property
    def has_val(self) -> bool:
        return None not in (self.mse_val, self.eps_c_tilde, self.eps_g, self.eps_c_val)

    @property
    def val(self) -> AssembledBound | None:
        if not self.has_val:
            return None
        return assemble_val_bound(self.mse_val, self.eps_c_tilde, self.eps_g, self.eps_c_val, self.eps_a)

    @property
    def lower_bound_val(self) -> float | None:
        v = self.val
        return None if v is None else v.value

    def to_row(self) -> dict:
        """Flat mapping used for one CSV row."""
        val = self.val
        return {
            "n": self.n,
            "m": self.m,
            "mse_train": self.mse_train,
            "mse_val": self.mse_val,
            "eps_c_h": self.eps_c_hoeffding,
            "eps_c_b": self.eps_c_bernstein,
            "eps_c_tilde": self.eps_c_tilde,
            "eps_g": self.eps_g,
            "eps_a": self.eps_a,
            "eps_a_mode": self.eps_a_mode,
            "lb_train": self.lower_bound_train,
            "lb_val": None if val is None else val.value,
            "vacuous_train": self.train.vacuous,
            "vacuous_val": None if val is None else val.vacuous,
            "eps_c_kind": self.eps_c_kind,
            "eps_c_val": self.eps_c_val,
            "eps_a_se": self.eps_a_se,
            "c_bits": self.c_bits,
        }

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lower_bound_train"] = self.lower_bound_train
        out["lower_bound_val"] = self.lower_bound_val
        return out
