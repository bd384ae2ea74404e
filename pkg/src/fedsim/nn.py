"""Minimal dense-network trainer: init, forward, gradients, SGD, averaging.

Everything here is a pure function over immutable inputs. Parameters live in
one flat float64 vector; per layer the ``(n_in, n_out)`` weight block comes
first (row-major), followed by ``n_out`` biases.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._backend import kernels

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NetworkSpec:
    layer_sizes: tuple[int, ...]
    hidden_activation: str = "relu"
    output_activation: str = "softmax"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise ValueError("a network needs at least an input and an output layer")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be >= 1, got {sizes}")
        if self.hidden_activation != "relu":
            raise ValueError(f"unsupported hidden activation {self.hidden_activation!r}")
        if self.output_activation != "softmax":
            raise ValueError(f"unsupported output activation {self.output_activation!r}")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def class_count(self) -> int:
        return self.layer_sizes[-1]

    @property
    def param_count(self) -> int:
        s = self.layer_sizes
        return sum(a * b + b for a, b in zip(s[:-1], s[1:]))

    @property
    def spec_hash(self) -> str:
        dims = "-".join(map(str, self.layer_sizes))
        return f"{self.hidden_activation}/{self.output_activation}:{dims}"

    def layer_slices(self):
        """Yield ``(weight_slice, bias_slice, n_in, n_out)`` per layer."""
        off = 0
        for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            yield slice(off, off + a * b), slice(off + a * b, off + a * b + b), a, b
            off += a * b + b


@dataclass(frozen=True)
class ModelParams:
    """The unit of federation traffic: a flat parameter vector bound to a spec."""

    values: np.ndarray = field(repr=False)
    spec_hash: str

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError("model parameters must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]

    def nbytes(self) -> int:
        return self.values.nbytes

    def check(self, spec: NetworkSpec):
        if self.spec_hash != spec.spec_hash or len(self) != spec.param_count:
            raise ValueError(
                f"params bound to {self.spec_hash!r} ({len(self)} values) "
                f"do not fit network {spec.spec_hash!r} ({spec.param_count} values)"
            )


@dataclass(frozen=True)
class Batch:
    features: np.ndarray
    labels: np.ndarray


def _as_inputs(spec: NetworkSpec, features, labels=None):
    x = np.ascontiguousarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_size:
        raise ValueError(
            f"feature matrix shape {x.shape} does not match input size {spec.input_size}"
        )
    if x.shape[0] < 1:
        raise ValueError("empty batch")
    if labels is None:
        return x, None
    y = np.ascontiguousarray(labels, dtype=np.int64)
    if y.shape != (x.shape[0],):
        raise ValueError(f"{y.shape[0]} labels for {x.shape[0]} examples")
    if y.min() < 0 or y.max() >= spec.class_count:
        raise ValueError(f"labels must lie in [0, {spec.class_count})")
    return x, y


def init_params(spec: NetworkSpec, seed: int) -> ModelParams:
    rng = np.random.default_rng(seed)
    values = np.zeros(spec.param_count)
    for w, _, n_in, n_out in spec.layer_slices():
        limit = math.sqrt(6.0 / (n_in + n_out))
        values[w] = rng.uniform(-limit, limit, size=n_in * n_out)
    return ModelParams(values, spec.spec_hash)


def zero_params(spec: NetworkSpec) -> ModelParams:
    return ModelParams(np.zeros(spec.param_count), spec.spec_hash)


def forward(params: ModelParams, spec: NetworkSpec, features) -> np.ndarray:
    """Class probabilities, one row per example."""
    params.check(spec)
    x, _ = _as_inputs(spec, features)
    return kernels.mlp_forward(params.values, spec.layer_sizes, x)


def loss_and_grad(params: ModelParams, spec: NetworkSpec, batch) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over ``batch`` and its gradient w.r.t. the flat parameters.

    The true-class probability is floored at 1e-12 before the log; the
    gradient is the usual ``softmax - onehot`` one regardless.
    """
    params.check(spec)
    x, y = _as_inputs(spec, batch.features, batch.labels)
    return kernels.mlp_loss_grad(params.values, spec.layer_sizes, x, y)


def sgd_step(params: ModelParams, grad, lr: float) -> ModelParams:
    g = np.asarray(grad, dtype=np.float64)
    if g.shape != params.values.shape:
        raise ValueError(f"gradient length {g.size} != parameter count {len(params)}")
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient has non-finite entries")
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    return ModelParams(params.values - lr * g, params.spec_hash)


def epoch_order(n: int, seed, epoch: int) -> np.ndarray:
    """Example order for one epoch of a sampler seeded with ``seed``."""
    return np.random.default_rng([*_seed_words(seed), epoch]).permutation(n)


def _seed_words(seed) -> list[int]:
    if isinstance(seed, (int, np.integer)):
        return [int(seed)]
    return [int(s) for s in seed]


def batch_indices(n: int, batch_size: int, seed, start_step: int, steps: int):
    """Indices of mini-batches ``start_step .. start_step + steps - 1``.

    The stream is a pure function of ``(n, batch_size, seed)``: epoch ``e`` is
    a fresh permutation, cut into ``ceil(n / batch_size)`` batches with a
    short final batch when ``batch_size`` does not divide ``n``.
    """
    per_epoch = -(-n // batch_size)
    cached_epoch, order = None, None
    for step in range(start_step, start_step + steps):
        epoch, pos = divmod(step, per_epoch)
        if epoch != cached_epoch:
            order = epoch_order(n, seed, epoch)
            cached_epoch = epoch
        yield order[pos * batch_size:(pos + 1) * batch_size]


def effective_batch_size(n: int, batch_size: int) -> int:
    if batch_size > n:
        log.warning("batch size %d exceeds %d local examples; clamped", batch_size, n)
        return n
    return batch_size


def train_local(
    params: ModelParams,
    spec: NetworkSpec,
    data,
    steps: int,
    batch_size: int,
    lr: float,
    rng_seed,
    start_step: int = 0,
) -> ModelParams:
    """Run exactly ``steps`` SGD steps on mini-batches of ``data``.

    ``start_step`` resumes the seeded batch stream, so that training in
    chunks (one call per federation round) visits the same batches as one
    long call.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    n = len(data.labels)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    if steps == 0:
        return params
    params.check(spec)
    b = effective_batch_size(n, batch_size)
    x_all = np.asarray(data.features, dtype=np.float64)
    y_all = np.asarray(data.labels, dtype=np.int64)
    values = params.values.copy()
    sizes = spec.layer_sizes
    for idx in batch_indices(n, b, rng_seed, start_step, steps):
        _, g = kernels.mlp_loss_grad(values, sizes, x_all[idx], y_all[idx])
        values -= lr * g
    return ModelParams(values, params.spec_hash)


def evaluate(params: ModelParams, spec: NetworkSpec, data, chunk: int = 4096):
    """``(accuracy, mean_loss)``; argmax ties go to the lowest class index."""
    params.check(spec)
    n = len(data.labels)
    if n == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    correct = 0
    loss = 0.0
    for lo in range(0, n, chunk):
        x, y = _as_inputs(spec, data.features[lo:lo + chunk], data.labels[lo:lo + chunk])
        p = kernels.mlp_forward(params.values, spec.layer_sizes, x)
        correct += int(np.count_nonzero(np.argmax(p, axis=1) == y))
        loss -= float(np.log(np.maximum(p[np.arange(len(y)), y], 1e-12)).sum())
    return correct / n, loss / n


def predict(params: ModelParams, spec: NetworkSpec, features, chunk: int = 4096) -> np.ndarray:
    out = []
    for lo in range(0, len(features), chunk):
        out.append(np.argmax(forward(params, spec, features[lo:lo + chunk]), axis=1))
    return np.concatenate(out)


def average_params(entries: Iterable[tuple[ModelParams, float]]) -> ModelParams:
    """Weighted mean of parameter vectors, summed in the order given.

    Callers pass entries in ascending agency id, which fixes the floating
    point reduction order and makes the result bit-reproducible.
    """
    entries = list(entries)
    if not entries:
        raise ValueError("nothing to average")
    tag = entries[0][0].spec_hash
    for p, _ in entries:
        if p.spec_hash != tag or len(p) != len(entries[0][0]):
            raise ValueError(f"cannot average params of {p.spec_hash!r} with {tag!r}")
    weights = np.array([float(w) for _, w in entries])
    if np.any(weights <= 0):
        raise ValueError("averaging weights must be positive")
    if len(entries) == 1:
        return entries[0][0]
    stack = np.stack([p.values for p, _ in entries])
    return ModelParams(kernels.weighted_average(stack, weights), tag)


def param_count(layer_sizes: Sequence[int]) -> int:
    return NetworkSpec(tuple(layer_sizes)).param_count
