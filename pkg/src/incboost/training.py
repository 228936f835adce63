"""Minibatch Adam training with hold-out model selection."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from incboost.data import Dataset
from incboost.layers import Params
from incboost.network import Network, loss_and_grad, predict

logger = logging.getLogger(__name__)

DTYPES = ("float32", "float64")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    deterministic: bool = True
    workers: int = 1
    dtype: str = "float32"

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("TrainConfig.epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("TrainConfig.batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("TrainConfig.learning_rate must be > 0")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("TrainConfig.beta1 and beta2 must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ValueError("TrainConfig.epsilon must be > 0")
        if self.workers < 1:
            raise ValueError("TrainConfig.workers must be >= 1")
        if self.dtype not in DTYPES:
            raise ValueError(f"TrainConfig.dtype must be one of {', '.join(DTYPES)}")

    def with_seed(self, seed: int, epochs: Optional[int] = None) -> "TrainConfig":
        return replace(self, seed=int(seed), epochs=self.epochs if epochs is None else int(epochs))

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "TrainConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown train fields: {', '.join(sorted(unknown))}")
        return cls(**dict(data))  # type: ignore[arg-type]


@dataclass(frozen=True)
class TrainReport:
    validation_errors: Tuple[float, ...]
    train_losses: Tuple[float, ...]
    best_epoch: int
    wall_time: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "validation_errors", tuple(float(e) for e in self.validation_errors))
        object.__setattr__(self, "train_losses", tuple(float(v) for v in self.train_losses))
        if not self.validation_errors:
            raise ValueError("TrainReport needs at least one epoch")
        if self.best_epoch != best_epoch(self.validation_errors):
            raise ValueError("TrainReport.best_epoch must be the first minimum of the series")
        if self.wall_time < 0:
            raise ValueError("TrainReport.wall_time must be >= 0")

    @property
    def epochs(self) -> int:
        return len(self.validation_errors)

    @property
    def best_validation_error(self) -> float:
        return self.validation_errors[self.best_epoch]

    def to_dict(self) -> Dict[str, object]:
        return {
            "validation_errors": list(self.validation_errors),
            "train_losses": list(self.train_losses),
            "best_epoch": self.best_epoch,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "TrainReport":
        return cls(
            validation_errors=tuple(data["validation_errors"]),  # type: ignore[arg-type]
            train_losses=tuple(data.get("train_losses", ())),  # type: ignore[arg-type]
            best_epoch=int(data["best_epoch"]),  # type: ignore[arg-type]
            wall_time=float(data["wall_time"]),  # type: ignore[arg-type]
        )


def best_epoch(errors: Sequence[float]) -> int:
    """Index of the smallest error; the earliest epoch wins ties."""

    return int(np.argmin(np.asarray(errors, dtype=np.float64)))


class Adam:
    """Adam over a list of per-layer parameter dicts, updated in place.

    Uses the epsilon-hat form: the bias corrections fold into the step size,
    lr * sqrt(1 - beta2^t) / (1 - beta1^t), and ``epsilon`` is added to the
    raw sqrt(v) rather than to its bias-corrected value.
    """

    def __init__(
        self,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ) -> None:
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: Dict[Tuple[int, str], np.ndarray] = {}
        self.v: Dict[Tuple[int, str], np.ndarray] = {}
        self.t = 0

    def step(self, params: Sequence[Params], grads: Sequence[Params]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        step_size = self.learning_rate * np.sqrt(bc2) / bc1

        for index, (layer_params, layer_grads) in enumerate(zip(params, grads)):
            for name, value in layer_params.items():
                g = layer_grads[name]
                key = (index, name)
                if key not in self.m:
                    self.m[key] = np.zeros_like(value)
                    self.v[key] = np.zeros_like(value)
                m, v = self.m[key], self.v[key]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * (g * g)
                denom = np.sqrt(v) + self.epsilon
                value -= (step_size * m / denom).astype(value.dtype, copy=False)


def validation_error(net: Network, data: Dataset) -> float:
    return float(np.mean(predict(net, data.examples) != data.labels))


def _shard_grad(
    net: Network,
    x: np.ndarray,
    y: np.ndarray,
    seed: int,
    shard: int,
) -> Tuple[float, Tuple[Params, ...]]:
    rng = np.random.default_rng([seed, shard])
    return loss_and_grad(net, x, y, rng=rng)


def _minibatch_grad(
    net: Network,
    x: np.ndarray,
    y: np.ndarray,
    seed: int,
    cfg: TrainConfig,
    pool: Optional[ThreadPoolExecutor],
) -> Tuple[float, List[Params]]:
    if pool is None or len(x) < 2:
        value, grads = _shard_grad(net, x, y, seed, 0)
        return value, list(grads)

    bounds = np.array_split(np.arange(len(x)), min(cfg.workers, len(x)))
    futures = {
        pool.submit(_shard_grad, net, x[part], y[part], seed, shard): part
        for shard, part in enumerate(bounds)
    }
    ordered = list(futures) if cfg.deterministic else list(as_completed(futures))

    total = 0.0
    summed: Optional[List[Params]] = None
    for future in ordered:
        weight = len(futures[future]) / len(x)
        value, grads = future.result()
        total += weight * value
        if summed is None:
            summed = [{name: weight * g for name, g in layer.items()} for layer in grads]
        else:
            for acc, layer in zip(summed, grads):
                for name, g in layer.items():
                    acc[name] += weight * g
    assert summed is not None
    return total, summed


def train(
    net: Network,
    train_set: Dataset,
    valid_set: Dataset,
    cfg: TrainConfig,
) -> Tuple[Network, TrainReport]:
    """Train ``net`` with Adam and return the lowest-validation-error snapshot.

    The input network is left untouched. Shuffling and dropout draw from a
    generator seeded with ``cfg.seed``.
    """

    if len(train_set) == 0 or len(valid_set) == 0:
        raise ValueError("training and validation sets must be non-empty")
    for name, data in (("training", train_set), ("validation", valid_set)):
        if data.num_classes != net.num_classes:
            raise ValueError(
                f"{name} set has {data.num_classes} classes, network outputs {net.num_classes}"
            )
        if data.input_shape != net.input_shape:
            raise ValueError(
                f"{name} examples have shape {data.input_shape}, network expects {net.input_shape}"
            )

    working = [{name: np.array(value, copy=True) for name, value in layer.items()} for layer in net.params]
    live = Network(spec=net.spec, params=tuple(working), seed=net.seed)
    optimizer = Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
    rng = np.random.default_rng(cfg.seed)
    examples = np.asarray(train_set.examples, dtype=net.dtype)
    labels = np.asarray(train_set.labels)
    n = len(train_set)

    errors: List[float] = []
    losses: List[float] = []
    best_error = np.inf
    snapshot: Tuple[Params, ...] = net.params
    pool = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    start = time.perf_counter()
    try:
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            epoch_loss = 0.0
            for offset in range(0, n, cfg.batch_size):
                batch = order[offset:offset + cfg.batch_size]
                batch_seed = int(rng.integers(0, 2**63 - 1))
                value, grads = _minibatch_grad(
                    live, examples[batch], labels[batch], batch_seed, cfg, pool
                )
                optimizer.step(working, grads)
                epoch_loss += value * len(batch)
            losses.append(epoch_loss / n)
            error = validation_error(live, valid_set)
            errors.append(error)
            if error < best_error:
                best_error = error
                snapshot = live.with_params(working).params
            logger.debug(
                "epoch %d/%d: loss %.4f, validation error %.4f",
                epoch + 1, cfg.epochs, losses[-1], error,
            )
    finally:
        if pool is not None:
            pool.shutdown()
    elapsed = time.perf_counter() - start

    report = TrainReport(
        validation_errors=tuple(errors),
        train_losses=tuple(losses),
        best_epoch=best_epoch(errors),
        wall_time=max(elapsed, 0.0),
    )
    return Network(spec=net.spec, params=snapshot, seed=net.seed), report
