"""Hypothesis classes, their fitting, and their compressed description length.

Two classes are supported::

    Logistic:    h(x) = sigmoid(a^T x + b)
    ShallowNet:  h(x) = sigmoid(w2^T relu(W1 x + b1) + b2)

Training is full-batch AdamW on the mean squared error with a cosine
learning-rate decay. Rows are put in a canonical order before training so the
fitted parameters do not depend on the order of the input data.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from . import rng as _rng
from .distributions import JointModel, NoisyDataset, sigmoid, theta_sigma
from .errors import ContractError, NumericalError, ParameterError, TrainingError
from .numerics import emp_stats, spd_solve

WEIGHT_MAGIC = b"MMSEH1"
_TAGS = {"logistic": 0, "shallow_net": 1}


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Logistic:
    a: np.ndarray
    b: float

    kind = "logistic"

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=np.float64))
        if a.ndim != 1 or not np.all(np.isfinite(a)) or not math.isfinite(self.b):
            raise ParameterError("logistic parameters must be a finite vector and scalar")
        object.__setattr__(self, "a", _readonly(a))
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def logits(self, x: np.ndarray) -> np.ndarray:
        return x @ self.a + self.b


@dataclass(frozen=True, eq=False)
class ShallowNet:
    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float

    kind = "shallow_net"

    def __post_init__(self):
        W1 = np.atleast_2d(np.asarray(self.W1, dtype=np.float64))
        b1 = np.atleast_1d(np.asarray(self.b1, dtype=np.float64))
        w2 = np.atleast_1d(np.asarray(self.w2, dtype=np.float64))
        width = W1.shape[0]
        if b1.shape != (width,) or w2.shape != (width,):
            raise ParameterError(f"hidden width mismatch: W1 {W1.shape}, b1 {b1.shape}, w2 {w2.shape}")
        if not all(np.all(np.isfinite(v)) for v in (W1, b1, w2)) or not math.isfinite(self.b2):
            raise ParameterError("network parameters must be finite")
        object.__setattr__(self, "W1", _readonly(W1))
        object.__setattr__(self, "b1", _readonly(b1))
        object.__setattr__(self, "w2", _readonly(w2))
        object.__setattr__(self, "b2", float(self.b2))

    @property
    def dim(self) -> int:
        return self.W1.shape[1]

    @property
    def width(self) -> int:
        return self.W1.shape[0]

    def logits(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(x @ self.W1.T + self.b1, 0.0) @ self.w2 + self.b2


Hypothesis = Union[Logistic, ShallowNet]


def _points(h: Hypothesis, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[:, None] if h.dim == 1 else x[None, :]
    if x.ndim != 2 or x.shape[1] != h.dim:
        raise ContractError(f"input has shape {x.shape}, hypothesis expects dimension {h.dim}")
    return x


def predict(h: Hypothesis, x) -> np.ndarray:
    """h(x) for each row of x."""
    return sigmoid(h.logits(_points(h, x)))


def emp_mse(h: Hypothesis, data: NoisyDataset) -> float:
    """Mean of (S - h(X^sigma))^2 over the dataset."""
    if data.n == 0:
        raise ContractError("empty dataset")
    r = data.ss - predict(h, data.xs)
    return float(np.mean(r * r))


def sq_residuals(h: Hypothesis, data: NoisyDataset) -> np.ndarray:
    r = data.ss - predict(h, data.xs)
    return r * r


def fit_logistic_closed_form(data: NoisyDataset, model: JointModel) -> Logistic:
    """Least-squares affine fit of the true log-odds on the sample.

    ``a* = Var(X)^-1 Cov(X, theta(X))`` and ``b* = E theta - a*^T E X`` with
    unbiased sample moments.
    """
    if data.n < data.dim + 2:
        raise ContractError(f"need at least d + 2 = {data.dim + 2} rows, got {data.n}")
    theta = theta_sigma(model, data.sigma, data.xs)
    if not np.all(np.isfinite(theta)):
        raise NumericalError("log-odds are infinite on the sample; the affine fit is undefined")
    st = emp_stats(data.xs, theta)
    try:
        a = spd_solve(st.var_x, st.cov_xy)
    except NumericalError as exc:
        raise NumericalError("empirical Var(X) is singular") from exc
    return Logistic(a, st.mean_y - float(st.mean_x @ a))


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings for ``train``.

    The class defaults (beta1, beta2, weight decay, cosine schedule) are the
    standard settings; use :meth:`logistic` and :meth:`shallow_net` for the
    per-class learning rate, epoch count and width.
    """

    learning_rate: float
    epochs: int
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    schedule: str = "cosine"
    seed: int = 0
    width: int | None = None
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ParameterError(f"learning_rate must be > 0, got {self.learning_rate}")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ParameterError(f"epochs must be an integer >= 1, got {self.epochs}")
        for name in ("beta1", "beta2"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ParameterError(f"{name} must lie in (0, 1)")
        if self.weight_decay < 0:
            raise ParameterError("weight_decay must be >= 0")
        if self.schedule not in ("cosine", "constant"):
            raise ParameterError(f"schedule must be 'cosine' or 'constant', got {self.schedule!r}")
        if self.width is not None and self.width < 1:
            raise ParameterError("width must be >= 1")

    @classmethod
    def logistic(cls, seed: int = 0, **kw) -> TrainConfig:
        return cls(**{"learning_rate": 0.1, "epochs": 5000, "seed": seed, **kw})

    @classmethod
    def shallow_net(cls, width: int = 10, epochs: int = 10000, seed: int = 0, **kw) -> TrainConfig:
        return cls(**{"learning_rate": 0.01, "epochs": epochs, "seed": seed, "width": width, **kw})

    def with_seed(self, seed: int) -> TrainConfig:
        return replace(self, seed=seed)

    def lr_at(self, t: int) -> float:
        if self.schedule == "constant":
            return self.learning_rate
        return 0.5 * self.learning_rate * (1.0 + math.cos(math.pi * t / self.epochs))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class _Layout:
    """Flat parameter vector with named views, for one hypothesis shape."""

    def __init__(self, kind: str, d: int, width: int):
        self.kind, self.d, self.width = kind, d, width
        if kind == "logistic":
            self.shapes = [("a", (d,)), ("b", ())]
        elif kind == "shallow_net":
            self.shapes = [("W1", (width, d)), ("b1", (width,)), ("w2", (width,)), ("b2", ())]
        else:
            raise ParameterError(f"unknown hypothesis class {kind!r}")
        self.size = sum(int(np.prod(s)) for _, s in self.shapes)

    def views(self, flat: np.ndarray) -> dict:
        out, i = {}, 0
        for name, shape in self.shapes:
            k = int(np.prod(shape))
            out[name] = flat[i:i + k].reshape(shape) if shape else flat[i:i + 1]
            i += k
        return out

    def init(self, seed: int) -> np.ndarray:
        gen = _rng.generator(_rng.derive_seed(seed, 0))
        flat = np.empty(self.size)
        v = self.views(flat)
        if self.kind == "logistic":
            bound = 1.0 / math.sqrt(self.d)
            v["a"][:] = (2.0 * _rng.uniform(gen, self.d) - 1.0) * bound
            v["b"][:] = (2.0 * _rng.uniform(gen, 1) - 1.0) * bound
        else:
            b_in, b_out = 1.0 / math.sqrt(self.d), 1.0 / math.sqrt(self.width)
            v["W1"][:] = (2.0 * _rng.uniform(gen, (self.width, self.d)) - 1.0) * b_in
            v["b1"][:] = (2.0 * _rng.uniform(gen, self.width) - 1.0) * b_in
            v["w2"][:] = (2.0 * _rng.uniform(gen, self.width) - 1.0) * b_out
            v["b2"][:] = (2.0 * _rng.uniform(gen, 1) - 1.0) * b_out
        return flat

    def to_hypothesis(self, flat: np.ndarray) -> Hypothesis:
        v = self.views(flat.copy())
        if self.kind == "logistic":
            return Logistic(v["a"], float(v["b"][0]))
        return ShallowNet(v["W1"], v["b1"], v["w2"], float(v["b2"][0]))

    @staticmethod
    def from_hypothesis(h: Hypothesis) -> tuple[_Layout, np.ndarray]:
        if isinstance(h, Logistic):
            return _Layout("logistic", h.dim, 0), np.concatenate([h.a, [h.b]])
        return (
            _Layout("shallow_net", h.dim, h.width),
            np.concatenate([h.W1.ravel(), h.b1, h.w2, [h.b2]]),
        )


class _LossGrad:
    """Square-loss value and gradient with buffers reused across epochs.

    Features are stored transposed (d x n) so the hidden layer is a single
    (width x d) @ (d x n) product.
    """

    def __init__(self, layout: _Layout, xs: np.ndarray, ss: np.ndarray):
        self.layout = layout
        self.xt = np.ascontiguousarray(xs.T)
        self.ss = ss
        n = ss.shape[0]
        self.n = n
        self.z = np.empty(n)
        self.g = np.empty(n)
        if layout.kind == "shallow_net":
            self.hid = np.empty((layout.width, n))
            self.dh = np.empty((layout.width, n))

    def __call__(self, flat: np.ndarray, grad: np.ndarray) -> float:
        v = self.layout.views(flat)
        gv = self.layout.views(grad)
        z, g = self.z, self.g
        if self.layout.kind == "logistic":
            np.dot(v["a"], self.xt, out=z)
            z += v["b"][0]
        else:
            np.dot(v["W1"], self.xt, out=self.hid)
            self.hid += v["b1"][:, None]
            np.maximum(self.hid, 0.0, out=self.hid)
            np.dot(v["w2"], self.hid, out=z)
            z += v["b2"][0]
        # sigmoid(z) = (1 + tanh(z / 2)) / 2 never overflows.
        np.multiply(z, 0.5, out=z)
        np.tanh(z, out=z)
        h = z
        h += 1.0
        h *= 0.5
        np.subtract(h, self.ss, out=g)
        loss = float(g @ g) / self.n
        # dL/dz = 2 (h - s) h (1 - h) / n
        g *= h
        g *= 1.0 - h
        g *= 2.0 / self.n
        if self.layout.kind == "logistic":
            np.dot(self.xt, g, out=gv["a"])
            gv["b"][0] = g.sum()
        else:
            np.dot(self.hid, g, out=gv["w2"])
            gv["b2"][0] = g.sum()
            np.multiply(v["w2"][:, None], g[None, :], out=self.dh)
            self.dh *= self.hid > 0.0
            np.dot(self.dh, self.xt.T, out=gv["W1"])
            np.sum(self.dh, axis=1, out=gv["b1"])
        return loss


def loss_and_grad(h: Hypothesis, xs, ss) -> tuple[float, Hypothesis]:
    """Mean squared error of h on (xs, ss) and its gradient, shaped like h."""
    layout, flat = _Layout.from_hypothesis(h)
    xs = _points(h, xs)
    ss = np.asarray(ss, dtype=np.float64).ravel()
    grad = np.zeros_like(flat)
    loss = _LossGrad(layout, xs, ss)(flat, grad)
    return loss, layout.to_hypothesis(grad)


def canonical_order(xs: np.ndarray, ss: np.ndarray) -> np.ndarray:
    """Row permutation that sorts by (x_1, ..., x_d, s) lexicographically."""
    keys = (ss,) + tuple(xs[:, j] for j in range(xs.shape[1] - 1, -1, -1))
    return np.lexsort(keys)


def train(kind: str, cfg: TrainConfig, data: NoisyDataset) -> Hypothesis:
    """Full-batch AdamW on the square loss; returns the final-epoch parameters.

    Raises :class:`TrainingError` with the epoch index if the loss becomes
    non-finite.
    """
    if data.n == 0:
        raise ContractError("cannot train on an empty dataset")
    if kind == "shallow_net" and cfg.width is None:
        raise ParameterError("shallow_net training needs cfg.width")
    layout = _Layout(kind, data.dim, cfg.width or 0)
    order = canonical_order(data.xs, data.ss)
    lossgrad = _LossGrad(layout, data.xs[order], data.ss[order])

    theta = layout.init(cfg.seed)
    grad = np.zeros_like(theta)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    step = np.empty_like(theta)
    b1, b2 = cfg.beta1, cfg.beta2
    for t in range(cfg.epochs):
        loss = lossgrad(theta, grad)
        if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
            raise TrainingError("loss became non-finite", t)
        lr = cfg.lr_at(t)
        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * grad * grad
        bc1 = 1.0 - b1 ** (t + 1)
        bc2 = 1.0 - b2 ** (t + 1)
        # Decoupled weight decay, then the bias-corrected Adam step.
        theta *= 1.0 - lr * cfg.weight_decay
        np.sqrt(v / bc2, out=step)
        step += cfg.eps
        np.divide(m, step, out=step)
        step *= lr / bc1
        theta -= step
    if not np.all(np.isfinite(theta)):
        raise TrainingError("parameters became non-finite", cfg.epochs)
    return layout.to_hypothesis(theta)


def dump_weights(h: Hypothesis) -> bytes:
    """Canonical byte form: magic, class tag, (d, width) as uint32 LE, float64 LE parameters."""
    layout, flat = _Layout.from_hypothesis(h)
    header = WEIGHT_MAGIC + bytes([_TAGS[layout.kind]]) + struct.pack("<II", layout.d, layout.width)
    return header + flat.astype("<f8").tobytes()


def load_weights(blob: bytes) -> Hypothesis:
    if blob[:6] != WEIGHT_MAGIC:
        raise ContractError("not a weight blob (bad magic)")
    tag = blob[6]
    kinds = {v: k for k, v in _TAGS.items()}
    if tag not in kinds:
        raise ContractError(f"unknown class tag {tag}")
    d, width = struct.unpack("<II", blob[7:15])
    layout = _Layout(kinds[tag], d, width)
    flat = np.frombuffer(blob[15:], dtype="<f8").astype(np.float64)
    if flat.shape[0] != layout.size:
        raise ContractError(f"expected {layout.size} parameters, found {flat.shape[0]}")
    return layout.to_hypothesis(flat)


def compressed_size_bits(h: Hypothesis) -> int:
    """8 x the length of the raw DEFLATE (level 9) stream of ``dump_weights(h)``."""
    comp = zlib.compressobj(9, zlib.DEFLATED, -15)
    data = comp.compress(dump_weights(h)) + comp.flush()
    return 8 * len(data)
