"""Network descriptions, parameter state and the forward/backward passes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from incboost.layers import LayerShapeError, LayerSpec, Params, Shape

DEFAULT_DTYPE = np.float32
EVAL_BATCH_SIZE = 1024


class NetworkSpecError(ValueError):
    def __init__(self, layer_index: int, message: str) -> None:
        super().__init__(f"layer {layer_index}: {message}")
        self.layer_index = layer_index


class NonFiniteError(ArithmeticError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    """Input shape plus an ordered list of layers ending in softmax.

    Shape compatibility is checked here, once, so every later pass can trust
    ``shapes``.
    """

    input_shape: Tuple[int, ...]
    layers: Tuple[LayerSpec, ...]
    shapes: Tuple[Shape, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.input_shape or min(self.input_shape) < 1:
            raise NetworkSpecError(0, f"invalid input shape {self.input_shape}")
        if not self.layers:
            raise NetworkSpecError(0, "a network needs at least one layer")
        shapes: List[Shape] = [self.input_shape]
        last = len(self.layers) - 1
        for index, layer in enumerate(self.layers):
            if layer.kind == "softmax" and index != last:
                raise NetworkSpecError(index, "softmax may only be the final layer")
            try:
                shapes.append(layer.output_shape(shapes[-1]))
            except LayerShapeError as exc:
                raise NetworkSpecError(index, f"{layer.kind}: {exc}") from exc
        if self.layers[last].kind != "softmax":
            raise NetworkSpecError(last, "the final layer must be softmax")
        object.__setattr__(self, "shapes", tuple(shapes))

    @property
    def num_classes(self) -> int:
        return self.shapes[-1][0]

    def layer_input_shape(self, index: int) -> Shape:
        return self.shapes[index]

    def param_shapes(self) -> Tuple[Dict[str, Shape], ...]:
        return tuple(
            layer.param_shapes(self.shapes[index]) for index, layer in enumerate(self.layers)
        )

    def insert(self, position: int, layer: LayerSpec) -> "NetworkSpec":
        layers = list(self.layers)
        layers.insert(position, layer)
        return NetworkSpec(input_shape=self.input_shape, layers=tuple(layers))

    def to_dict(self) -> Dict[str, object]:
        return {
            "input_shape": list(self.input_shape),
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "NetworkSpec":
        try:
            input_shape = data["input_shape"]
            layers = data["layers"]
        except KeyError as exc:
            raise NetworkSpecError(0, f"network description is missing {exc}") from exc
        return cls(
            input_shape=tuple(input_shape),  # type: ignore[arg-type]
            layers=tuple(LayerSpec.from_dict(entry) for entry in layers),  # type: ignore[union-attr]
        )


def freeze_params(params: Iterable[Mapping[str, np.ndarray]]) -> Tuple[Params, ...]:
    """Copy parameter arrays and mark the copies read-only."""

    frozen = []
    for layer_params in params:
        copied = {}
        for name, value in layer_params.items():
            array = np.array(value, copy=True)
            array.setflags(write=False)
            copied[name] = array
        frozen.append(copied)
    return tuple(frozen)


@dataclass(frozen=True)
class Network:
    spec: NetworkSpec
    params: Tuple[Params, ...]
    seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", tuple(self.params))
        expected = self.spec.param_shapes()
        if len(expected) != len(self.params):
            raise NetworkSpecError(
                len(self.params), f"expected {len(expected)} parameter groups, got {len(self.params)}"
            )
        for index, (shapes, params) in enumerate(zip(expected, self.params)):
            actual = {name: tuple(value.shape) for name, value in params.items()}
            if actual != shapes:
                raise NetworkSpecError(index, f"parameter shapes {actual} do not match {shapes}")

    @property
    def dtype(self) -> np.dtype:
        for params in self.params:
            for value in params.values():
                return value.dtype
        return np.dtype(DEFAULT_DTYPE)

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return self.spec.input_shape

    def with_params(self, params: Iterable[Mapping[str, np.ndarray]]) -> "Network":
        return Network(spec=self.spec, params=freeze_params(params), seed=self.seed)


def build_network(spec: NetworkSpec, seed: int, dtype: object = DEFAULT_DTYPE) -> Network:
    """Initialise every layer in order from one generator seeded with ``seed``."""

    rng = np.random.default_rng(seed)
    dtype = np.dtype(dtype)
    params = [
        layer.init_params(spec.shapes[index], rng, dtype)
        for index, layer in enumerate(spec.layers)
    ]
    return Network(spec=spec, params=freeze_params(params), seed=int(seed))


def _check_batch(net: Network, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch)
    if batch.ndim != len(net.input_shape) + 1 or tuple(batch.shape[1:]) != net.input_shape:
        raise ValueError(
            f"batch shape {tuple(batch.shape)} does not match network input "
            f"(n, {', '.join(str(d) for d in net.input_shape)})"
        )
    return batch.astype(net.dtype, copy=False)


def _check_labels(net: Network, labels: Sequence[int], count: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (count,):
        raise ValueError(f"expected {count} labels, got shape {labels.shape}")
    if count and (labels.min() < 0 or labels.max() >= net.num_classes):
        raise ValueError(f"labels must lie in [0, {net.num_classes})")
    return labels.astype(np.int64, copy=False)


def _run_layers(
    net: Network,
    x: np.ndarray,
    stop: int,
    rng: Optional[np.random.Generator],
) -> Tuple[List[np.ndarray], List[dict]]:
    outputs: List[np.ndarray] = []
    caches: List[dict] = []
    for layer, params in zip(net.spec.layers[:stop], net.params[:stop]):
        x, cache = layer.forward(params, x, rng=rng)
        outputs.append(x)
        caches.append(cache)
    return outputs, caches


def activations(
    net: Network,
    batch: np.ndarray,
    train_mode: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> List[np.ndarray]:
    """Output of every layer, in order."""

    x = _check_batch(net, batch)
    if train_mode and rng is None:
        rng = np.random.default_rng(net.seed)
    outputs, _ = _run_layers(net, x, len(net.spec.layers), rng if train_mode else None)
    return outputs


def forward(
    net: Network,
    batch: np.ndarray,
    train_mode: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    probs = activations(net, batch, train_mode=train_mode, rng=rng)[-1]
    if not np.all(np.isfinite(probs)):
        raise NonFiniteError("network produced non-finite outputs")
    return probs


def predict_proba(net: Network, examples: np.ndarray, batch_size: int = EVAL_BATCH_SIZE) -> np.ndarray:
    """Evaluation-mode class scores in float64, computed in chunks."""

    examples = np.asarray(examples)
    if len(examples) == 0:
        return np.zeros((0, net.num_classes), dtype=np.float64)
    chunks = [
        forward(net, examples[start:start + batch_size]).astype(np.float64)
        for start in range(0, len(examples), batch_size)
    ]
    return np.concatenate(chunks, axis=0)


def predict(net: Network, examples: np.ndarray) -> np.ndarray:
    return predict_proba(net, examples).argmax(axis=1)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    logits = logits.astype(np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss(net: Network, batch: np.ndarray, labels: Sequence[int]) -> float:
    """Mean cross-entropy in evaluation mode."""

    x = _check_batch(net, batch)
    y = _check_labels(net, labels, len(x))
    outputs, _ = _run_layers(net, x, len(net.spec.layers) - 1, None)
    logits = outputs[-1] if outputs else x
    value = float(-_log_softmax(logits)[np.arange(len(y)), y].mean())
    if not np.isfinite(value):
        raise NonFiniteError("cross-entropy is not finite")
    return value


def loss_and_grad(
    net: Network,
    batch: np.ndarray,
    labels: Sequence[int],
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, Tuple[Params, ...]]:
    """Mean cross-entropy and its gradient for every parameter group.

    Dropout is sampled only when ``rng`` is given. The final softmax is fused
    with the loss, so backpropagation starts from ``(p - onehot) / n``.
    """

    x = _check_batch(net, batch)
    y = _check_labels(net, labels, len(x))
    if len(x) == 0:
        raise ValueError("cannot take a gradient over an empty batch")
    head = len(net.spec.layers) - 1
    outputs, caches = _run_layers(net, x, head, rng)
    logits = outputs[-1] if outputs else x
    log_probs = _log_softmax(logits)
    n = len(y)
    value = float(-log_probs[np.arange(n), y].mean())
    if not np.isfinite(value):
        raise NonFiniteError("cross-entropy is not finite")
    delta = np.exp(log_probs)
    delta[np.arange(n), y] -= 1.0
    d = (delta / n).astype(net.dtype)

    grads: List[Params] = [{} for _ in net.spec.layers]
    for index in range(head - 1, -1, -1):
        layer = net.spec.layers[index]
        d, layer_grads = layer.backward(net.params[index], caches[index], d)
        grads[index] = {name: array.astype(net.dtype, copy=False) for name, array in layer_grads.items()}
    for layer_grads in grads:
        for array in layer_grads.values():
            if not np.all(np.isfinite(array)):
                raise NonFiniteError("gradient contains non-finite values")
    return value, tuple(grads)


def grad(
    net: Network,
    batch: np.ndarray,
    labels: Sequence[int],
    rng: Optional[np.random.Generator] = None,
) -> Tuple[Params, ...]:
    return loss_and_grad(net, batch, labels, rng=rng)[1]


__all__ = [
    "Network",
    "NetworkSpec",
    "NetworkSpecError",
    "NonFiniteError",
    "activations",
    "build_network",
    "forward",
    "freeze_params",
    "grad",
    "loss",
    "loss_and_grad",
    "predict",
    "predict_proba",
]
