"""Config-driven audit sweeps and their CSV tables.

For each grid point and run the pipeline is:

1. Oracle stage. Draw a fit set and an evaluation set of ``n_oracle`` rows
   each. Fit the population-optimal h* on the fit set (closed-form logistic,
   or a network trained with ``oracle_train``). Estimate the MMSE and eps_A on
   the evaluation set.
2. Draw ``n_train`` training rows (and ``m_val`` validation rows if set) and
   train h_hat.
3. Compute every epsilon term and assemble both bounds.

Seeds come from ``derive_seed(master, stage, grid_value_bits, run)``. Adding
or removing grid points therefore never changes the other points. On an
``n_train`` sweep the oracle seed ignores the grid value, so all points of a
run share one oracle, which is computed once per process.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .approx import bsc_series_tag, eps_a_bsc_series, eps_a_ccg_general
from .bounds import BoundReport, eps_c_bernstein, eps_c_hoeffding, eps_g_compression
from .distributions import (
    BSC,
    CCGDiag,
    JointModel,
    RingMixture,
    eta_sigma,
    model_from_dict,
    sample,
)
from .errors import AuditError, ParameterError
from .models import (
    TrainConfig,
    compressed_size_bits,
    emp_mse,
    fit_logistic_closed_form,
    predict,
    sq_residuals,
    train,
)
from .rng import derive_seed

AXES = ("sigma", "dimension", "n_train", "modes")
HYPOTHESES = ("logistic", "shallow_net")

STAGE_ORACLE_FIT = 1
STAGE_ORACLE_EVAL = 2
STAGE_TRAIN = 3
STAGE_VAL = 4
STAGE_INIT = 5
STAGE_ORACLE_INIT = 6

CSV_COLUMNS = [
    "point_id", "run", "sigma", "d", "n", "m",
    "mse_train", "mse_val", "eps_c_h", "eps_c_b", "eps_c_tilde", "eps_g", "eps_a", "eps_a_mode",
    "lb_train", "lb_val", "mmse_mc", "mmse_se", "vacuous_train", "vacuous_val",
]
EXTRA_COLUMNS = [
    "x", "hypothesis", "eps_c_kind", "eps_c_val", "eps_a_se", "eps_a_note", "c_bits", "lr", "error",
]
AGG_METRICS = [
    "mse_train", "mse_val", "eps_c_h", "eps_c_b", "eps_c_tilde", "eps_g", "eps_a",
    "lb_train", "lb_val", "mmse_mc", "eps_c_val", "c_bits", "vacuous_train", "vacuous_val",
]
STD_COLUMNS = ["std_" + k for k in AGG_METRICS]
ALL_COLUMNS = CSV_COLUMNS + EXTRA_COLUMNS + STD_COLUMNS


def _train_config(spec: dict | None, hypothesis: str) -> TrainConfig:
    spec = dict(spec or {})
    if hypothesis == "logistic":
        return TrainConfig.logistic(**spec)
    return TrainConfig.shallow_net(**spec)


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep. See ``from_dict`` for the JSON keys and their defaults."""

    model: JointModel
    axis: str
    grid: tuple
    hypothesis: str
    train: TrainConfig
    sigma: float = 1.0
    oracle_train: TrainConfig | None = None
    n_train: int = 500
    m_val: int = 0
    n_oracle: int = 10**6
    n_oracle_fit: int | None = None
    runs: int = 30
    delta: float = 0.05
    eps_a_mode: str = "monte_carlo"
    eps_c_kind: str = "bernstein"
    lr_search: tuple | None = None
    seed: int = 0
    figures: tuple = ()

    def __post_init__(self):
        if self.axis not in AXES:
            raise ParameterError(f"axis must be one of {AXES}, got {self.axis!r}")
        if self.hypothesis not in HYPOTHESES:
            raise ParameterError(f"hypothesis must be one of {HYPOTHESES}")
        grid = tuple(float(g) for g in self.grid)
        if not grid:
            raise ParameterError("grid must be non-empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ParameterError("grid must be strictly increasing")
        if self.axis in ("dimension", "n_train", "modes") and any(g != int(g) or g < 1 for g in grid):
            raise ParameterError(f"{self.axis} grid values must be positive integers")
        if self.axis == "dimension" and not isinstance(self.model, CCGDiag):
            raise ParameterError("dimension sweeps need a ccg_diag model")
        if self.axis == "modes" and not isinstance(self.model, RingMixture):
            raise ParameterError("modes sweeps need a ring model")
        if self.runs < 1:
            raise ParameterError("runs must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise ParameterError("delta must lie in (0, 1)")
        if self.eps_a_mode not in ("closed_form", "monte_carlo"):
            raise ParameterError("eps_a_mode must be 'closed_form' or 'monte_carlo'")
        if self.eps_a_mode == "closed_form" and (
            self.hypothesis != "logistic" or isinstance(self.model, RingMixture)
        ):
            raise ParameterError("closed-form eps_A exists only for logistic h on BSC or CCG models")
        if self.eps_c_kind not in ("hoeffding", "bernstein"):
            raise ParameterError("eps_c_kind must be 'hoeffding' or 'bernstein'")
        if self.n_oracle < 2 or self.n_train < 2 or self.m_val < 0:
            raise ParameterError("n_oracle and n_train must be >= 2, m_val >= 0")
        object.__setattr__(self, "grid", grid)
        if self.lr_search is not None:
            object.__setattr__(self, "lr_search", tuple(float(x) for x in self.lr_search))

    @classmethod
    def from_dict(cls, cfg: dict) -> ExperimentConfig:
        """Build from the JSON schema.

        Required keys: ``model``, ``axis``, ``grid``, ``hypothesis``. Optional:
        ``sigma`` (1.0), ``train`` and ``oracle_train`` (TrainConfig fields;
        per-class defaults), ``n_train`` (500), ``m_val`` (0 = no validation
        bound), ``n_oracle`` (1e6 per half), ``n_oracle_fit`` (defaults to
        n_oracle), ``runs`` (30), ``delta`` (0.05), ``eps_a_mode``
        ("monte_carlo"), ``eps_c_kind`` ("bernstein"), ``lr_search`` (list of
        learning rates; the one with the lowest training MSE is kept),
        ``seed`` (0), ``figures`` (list of plot specs).
        """
        cfg = dict(cfg)
        known = set(cls.__dataclass_fields__) | {"output"}
        unknown = set(cfg) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        for key in ("model", "axis", "grid", "hypothesis"):
            if key not in cfg:
                raise ParameterError(f"config is missing required key {key!r}")
        hyp = cfg["hypothesis"]
        if hyp not in HYPOTHESES:
            raise ParameterError(f"hypothesis must be one of {HYPOTHESES}")
        cfg.pop("output", None)
        cfg["model"] = model_from_dict(cfg["model"])
        cfg["train"] = _train_config(cfg.get("train"), hyp)
        if cfg.get("oracle_train") is not None:
            cfg["oracle_train"] = _train_config(cfg["oracle_train"], hyp)
        cfg["grid"] = tuple(cfg["grid"])
        cfg["figures"] = tuple(cfg.get("figures", ()))
        return cls(**cfg)

    def to_dict(self) -> dict:
        out = {}
        for k in self.__dataclass_fields__:
            v = getattr(self, k)
            if hasattr(v, "to_dict"):
                v = v.to_dict()
            elif isinstance(v, tuple):
                v = list(v)
            out[k] = v
        return out

    def point(self, value: float) -> tuple[JointModel, float, int]:
        """(model, sigma, n_train) at one grid value."""
        model, sigma, n = self.model, self.sigma, self.n_train
        if self.axis == "sigma":
            sigma = value
        elif self.axis == "dimension":
            model = model.with_dimension(int(value))
        elif self.axis == "n_train":
            n = int(value)
        else:
            model = model.with_modes(int(value))
        return model, sigma, n


def _bits(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


@dataclass(frozen=True)
class OracleResult:
    h_star: object
    mmse: float
    mmse_se: float
    eps_a: float
    eps_a_se: float | None
    eps_a_mode: str


def _closed_form_eps_a(model: JointModel, sigma: float) -> float:
    if isinstance(model, BSC):
        return eps_a_bsc_series(model.p, model.p_noise, sigma)
    s0, s1 = model.covariances()
    return eps_a_ccg_general(model.p, model.mu0, model.mu1, s0, s1, sigma)


@functools.lru_cache(maxsize=16)
def _oracle_cached(model_json, sigma, hypothesis, train_json, n_fit, n_eval, seed_fit, seed_eval, mode):
    model = model_from_dict(json.loads(model_json))
    fit = sample(model, n_fit, sigma, seed_fit)
    if hypothesis == "logistic":
        h_star = fit_logistic_closed_form(fit, model)
    else:
        h_star = train(hypothesis, TrainConfig(**json.loads(train_json)), fit)
    ev = sample(model, n_eval, sigma, seed_eval)
    eta = eta_sigma(model, sigma, ev.xs)
    sq = (ev.ss - eta) ** 2
    mmse, mmse_se = float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(n_eval))
    if mode == "closed_form":
        eps_a, eps_a_se = _closed_form_eps_a(model, sigma), None
    else:
        gap = (eta - predict(h_star, ev.xs)) ** 2
        eps_a, eps_a_se = float(gap.mean()), float(gap.std(ddof=1) / math.sqrt(n_eval))
    return OracleResult(h_star, mmse, mmse_se, eps_a, eps_a_se, mode)


def oracle_stage(cfg: ExperimentConfig, model: JointModel, sigma: float, pop_key: int, run: int) -> OracleResult:
    ocfg = (cfg.oracle_train or cfg.train).with_seed(derive_seed(cfg.seed, STAGE_ORACLE_INIT, pop_key, run))
    return _oracle_cached(
        json.dumps(model.to_dict(), sort_keys=True),
        float(sigma),
        cfg.hypothesis,
        json.dumps(ocfg.to_dict(), sort_keys=True),
        int(cfg.n_oracle_fit or cfg.n_oracle),
        int(cfg.n_oracle),
        derive_seed(cfg.seed, STAGE_ORACLE_FIT, pop_key, run),
        derive_seed(cfg.seed, STAGE_ORACLE_EVAL, pop_key, run),
        cfg.eps_a_mode,
    )


def _fit_finite_sample(cfg: ExperimentConfig, data, init_seed: int):
    base = cfg.train.with_seed(init_seed)
    lrs = cfg.lr_search or (base.learning_rate,)
    best = None
    for lr in lrs:
        h = train(cfg.hypothesis, replace(base, learning_rate=lr), data)
        mse = emp_mse(h, data)
        if best is None or mse < best[1]:
            best = (h, mse, lr)
    return best


def audit_point(cfg: ExperimentConfig, point_id: int, run: int) -> dict:
    """One (grid point, run) audit as a CSV row mapping."""
    value = cfg.grid[point_id]
    model, sigma, n = cfg.point(value)
    row = {"point_id": point_id, "run": run, "sigma": sigma, "d": model.dim, "n": n,
           "m": cfg.m_val or None, "x": value, "hypothesis": cfg.hypothesis}
    try:
        key = _bits(value)
        pop_key = 0 if cfg.axis == "n_train" else key
        orc = oracle_stage(cfg, model, sigma, pop_key, run)
        data = sample(model, n, sigma, derive_seed(cfg.seed, STAGE_TRAIN, key, run))
        h_hat, mse_train, lr = _fit_finite_sample(cfg, data, derive_seed(cfg.seed, STAGE_INIT, key, run))
        delta = cfg.delta
        w_star = sq_residuals(orc.h_star, data)
        c_bits = compressed_size_bits(h_hat)
        kw = {}
        if cfg.m_val:
            val = sample(model, cfg.m_val, sigma, derive_seed(cfg.seed, STAGE_VAL, key, run))
            third = delta / 3.0
            eps_c_val = eps_c_bernstein(w_star, third) if cfg.eps_c_kind == "bernstein" else eps_c_hoeffding(n, third)
            kw = dict(
                m=cfg.m_val,
                mse_val=emp_mse(h_hat, val),
                eps_c_tilde=eps_c_bernstein(sq_residuals(h_hat, val), third),
                eps_g=eps_g_compression(c_bits, n, third),
                eps_c_val=eps_c_val,
            )
        report = BoundReport(
            n=n,
            delta=delta,
            mse_train=mse_train,
            eps_c_hoeffding=eps_c_hoeffding(n, delta),
            eps_c_bernstein=eps_c_bernstein(w_star, delta),
            eps_c_kind=cfg.eps_c_kind,
            eps_a=max(orc.eps_a, 0.0),
            eps_a_mode=orc.eps_a_mode,
            eps_a_se=orc.eps_a_se,
            c_bits=c_bits,
            **kw,
        )
        row.update(report.to_row())
        row.update(mmse_mc=orc.mmse, mmse_se=orc.mmse_se, lr=lr)
        if orc.eps_a_mode == "closed_form" and isinstance(model, BSC):
            row["eps_a_note"] = bsc_series_tag(sigma)
        for flag in ("vacuous_train", "vacuous_val"):
            if row.get(flag) is not None:
                row[flag] = int(row[flag])
    except (AuditError, ArithmeticError, ValueError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _job(args):
    cfg, point_id, run = args
    return audit_point(cfg, point_id, run)


def run_audit(cfg: ExperimentConfig, jobs: int = 1) -> list[dict]:
    """All (point, run) rows in deterministic (point, run) order."""
    tasks = [(cfg, i, r) for i in range(len(cfg.grid)) for r in range(cfg.runs)]
    if jobs <= 1:
        return [_job(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_job, tasks))


def aggregate(rows: list[dict]) -> list[dict]:
    """Raw rows interleaved with one mean/std row per point (run = "agg").

    Error rows are excluded from the aggregates; std uses ddof=1, or 0 for a
    single run.
    """
    out = []
    by_point: dict = {}
    for row in rows:
        by_point.setdefault(row["point_id"], []).append(row)
    for pid in sorted(by_point):
        group = by_point[pid]
        out.extend(group)
        ok = [r for r in group if not r.get("error")]
        agg = {k: group[0].get(k) for k in ("point_id", "sigma", "d", "n", "m", "x", "hypothesis",
                                            "eps_a_mode", "eps_c_kind")}
        agg["run"] = "agg"
        for k in AGG_METRICS:
            vals = [float(r[k]) for r in ok if r.get(k) is not None]
            if not vals:
                continue
            arr = np.array(vals)
            agg[k] = float(arr.mean())
            agg["std_" + k] = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        mmse = [float(r["mmse_se"]) for r in ok if r.get("mmse_se") is not None]
        if mmse:
            agg["mmse_se"] = float(np.mean(mmse))
        out.append(agg)
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def emit_csv(rows: list[dict], path, with_aggregates: bool = True) -> Path:
    """Write rows under the fixed header; floats are written with repr (round-trip exact)."""
    path = Path(path)
    table = aggregate(rows) if with_aggregates and rows else rows
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ALL_COLUMNS)
    for row in table:
        writer.writerow([_fmt(row.get(c)) for c in ALL_COLUMNS])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    return path


def read_csv(path) -> list[dict]:
    """Rows of a results table; empty cells become None, numbers become float."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        parsed = {}
        for k, v in row.items():
            if v == "":
                parsed[k] = None
                continue
            try:
                parsed[k] = float(v)
            except ValueError:
                parsed[k] = v
        out.append(parsed)
    return out


def write_report(cfg: ExperimentConfig, rows: list[dict], path) -> Path:
    path = Path(path)
    summary = [r for r in aggregate(rows) if r["run"] == "agg"]
    errors = [{"point_id": r["point_id"], "run": r["run"], "error": r["error"]}
              for r in rows if r.get("error")]
    doc = {"config": cfg.to_dict(), "points": summary, "errors": errors}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(f"cannot serialize {type(v).__name__}")
