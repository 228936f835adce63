"""Layer descriptions and the numpy kernels behind them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Dict, Mapping, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LAYER_KINDS = ("dense", "conv2d", "maxpool2d", "dropout", "softmax", "flatten", "relu")
PADDING_MODES = ("valid", "same")
ACTIVATIONS = ("relu",)

Shape = Tuple[int, ...]
Params = Dict[str, np.ndarray]
Cache = Dict[str, Any]


class LayerSpecError(ValueError):
    pass


class LayerShapeError(ValueError):
    pass


def _pair(value: object, name: str) -> Tuple[int, int]:
    if isinstance(value, int):
        return (value, value)
    try:
        first, second = value  # type: ignore[misc]
    except (TypeError, ValueError) as exc:
        raise LayerSpecError(f"{name} must be an int or a pair of ints") from exc
    return (int(first), int(second))


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a network description.

    Only the fields belonging to ``kind`` are meaningful; the classmethod
    constructors fill in the right ones.
    """

    kind: str
    units: Optional[int] = None
    channels: Optional[int] = None
    kernel: Optional[Tuple[int, int]] = None
    stride: int = 1
    padding: str = "valid"
    window: Optional[Tuple[int, int]] = None
    rate: float = 0.0
    activation: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in LAYER_KINDS:
            raise LayerSpecError(f"unknown layer kind '{self.kind}'")
        if self.activation is not None:
            if self.activation not in ACTIVATIONS:
                raise LayerSpecError(f"unknown activation '{self.activation}'")
            if self.kind not in ("dense", "conv2d"):
                raise LayerSpecError("only dense and conv2d layers take an activation")
        if self.kind == "dense":
            if self.units is None or self.units < 1:
                raise LayerSpecError("dense layer needs units >= 1")
        elif self.kind == "conv2d":
            if self.channels is None or self.channels < 1:
                raise LayerSpecError("conv2d layer needs channels >= 1")
            kernel = _pair(self.kernel, "kernel")
            if min(kernel) < 1:
                raise LayerSpecError("conv2d kernel dimensions must be >= 1")
            object.__setattr__(self, "kernel", kernel)
            if self.stride < 1:
                raise LayerSpecError("conv2d stride must be >= 1")
            if self.padding not in PADDING_MODES:
                raise LayerSpecError(f"unknown padding '{self.padding}'")
            if self.padding == "same" and (
                self.stride != 1 or kernel[0] % 2 == 0 or kernel[1] % 2 == 0
            ):
                raise LayerSpecError("'same' padding needs stride 1 and odd kernels")
        elif self.kind == "maxpool2d":
            window = _pair(self.window, "window")
            if min(window) < 1:
                raise LayerSpecError("maxpool2d window dimensions must be >= 1")
            object.__setattr__(self, "window", window)
        elif self.kind == "dropout":
            if not 0.0 <= self.rate < 1.0:
                raise LayerSpecError("dropout rate must lie in [0, 1)")

    @classmethod
    def dense(cls, units: int, activation: Optional[str] = None) -> "LayerSpec":
        return cls(kind="dense", units=units, activation=activation)

    @classmethod
    def conv2d(
        cls,
        channels: int,
        kernel: object,
        *,
        stride: int = 1,
        padding: str = "valid",
        activation: Optional[str] = None,
    ) -> "LayerSpec":
        return cls(
            kind="conv2d",
            channels=channels,
            kernel=kernel,  # type: ignore[arg-type]
            stride=stride,
            padding=padding,
            activation=activation,
        )

    @classmethod
    def maxpool2d(cls, window: object) -> "LayerSpec":
        return cls(kind="maxpool2d", window=window)  # type: ignore[arg-type]

    @classmethod
    def dropout(cls, rate: float) -> "LayerSpec":
        return cls(kind="dropout", rate=rate)

    @classmethod
    def softmax(cls) -> "LayerSpec":
        return cls(kind="softmax")

    @classmethod
    def flatten(cls) -> "LayerSpec":
        return cls(kind="flatten")

    @classmethod
    def relu(cls) -> "LayerSpec":
        return cls(kind="relu")

    @property
    def has_params(self) -> bool:
        return self.kind in ("dense", "conv2d")

    def to_dict(self) -> Dict[str, object]:
        data: Dict[str, object] = {"kind": self.kind}
        if self.kind == "dense":
            data["units"] = self.units
        elif self.kind == "conv2d":
            data.update(
                channels=self.channels,
                kernel=list(self.kernel or ()),
                stride=self.stride,
                padding=self.padding,
            )
        elif self.kind == "maxpool2d":
            data["window"] = list(self.window or ())
        elif self.kind == "dropout":
            data["rate"] = self.rate
        if self.activation is not None:
            data["activation"] = self.activation
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "LayerSpec":
        known = {
            "kind", "units", "channels", "kernel", "stride",
            "padding", "window", "rate", "activation",
        }
        unknown = set(data) - known
        if unknown:
            raise LayerSpecError(f"unknown layer fields: {', '.join(sorted(unknown))}")
        if "kind" not in data:
            raise LayerSpecError("layer entry needs a 'kind'")
        return cls(**dict(data))  # type: ignore[arg-type]

    def _padding_amount(self) -> Tuple[int, int]:
        if self.padding == "same":
            kh, kw = self.kernel  # type: ignore[misc]
            return ((kh - 1) // 2, (kw - 1) // 2)
        return (0, 0)

    def output_shape(self, input_shape: Shape) -> Shape:
        """Shape of one example after this layer, given one example before it."""

        if self.kind == "dense":
            if len(input_shape) != 1:
                raise LayerShapeError(
                    f"dense expects a flat input, got {tuple(input_shape)}; add a flatten layer"
                )
            return (int(self.units),)  # type: ignore[arg-type]
        if self.kind == "conv2d":
            if len(input_shape) != 3:
                raise LayerShapeError(
                    f"conv2d expects (channels, height, width), got {tuple(input_shape)}"
                )
            _, height, width = input_shape
            kh, kw = self.kernel  # type: ignore[misc]
            ph, pw = self._padding_amount()
            if height + 2 * ph < kh or width + 2 * pw < kw:
                raise LayerShapeError(
                    f"input {height}x{width} is smaller than the {kh}x{kw} kernel"
                )
            out_h = (height + 2 * ph - kh) // self.stride + 1
            out_w = (width + 2 * pw - kw) // self.stride + 1
            return (int(self.channels), out_h, out_w)  # type: ignore[arg-type]
        if self.kind == "maxpool2d":
            if len(input_shape) != 3:
                raise LayerShapeError(
                    f"maxpool2d expects (channels, height, width), got {tuple(input_shape)}"
                )
            channels, height, width = input_shape
            wh, ww = self.window  # type: ignore[misc]
            if height < wh or width < ww:
                raise LayerShapeError(
                    f"input {height}x{width} is smaller than the {wh}x{ww} pooling window"
                )
            return (channels, height // wh, width // ww)
        if self.kind == "flatten":
            return (int(np.prod(input_shape)),)
        if self.kind == "softmax":
            if len(input_shape) != 1:
                raise LayerShapeError(f"softmax expects a flat input, got {tuple(input_shape)}")
            return tuple(input_shape)
        return tuple(input_shape)

    def param_shapes(self, input_shape: Shape) -> Dict[str, Shape]:
        if self.kind == "dense":
            return {"W": (input_shape[0], int(self.units)), "b": (int(self.units),)}  # type: ignore[arg-type]
        if self.kind == "conv2d":
            kh, kw = self.kernel  # type: ignore[misc]
            channels = int(self.channels)  # type: ignore[arg-type]
            return {"W": (channels, input_shape[0], kh, kw), "b": (channels,)}
        return {}

    def init_params(self, input_shape: Shape, rng: np.random.Generator, dtype: np.dtype) -> Params:
        """Glorot-uniform weights, zero biases."""

        shapes = self.param_shapes(input_shape)
        if not shapes:
            return {}
        weight_shape = shapes["W"]
        if self.kind == "dense":
            fan_in, fan_out = weight_shape
        else:
            receptive = weight_shape[2] * weight_shape[3]
            fan_in = weight_shape[1] * receptive
            fan_out = weight_shape[0] * receptive
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-limit, limit, size=weight_shape).astype(dtype)
        bias = np.zeros(shapes["b"], dtype=dtype)
        return {"W": weights, "b": bias}

    def forward(
        self,
        params: Params,
        x: np.ndarray,
        *,
        rng: Optional[np.random.Generator] = None,
    ) -> Tuple[np.ndarray, Cache]:
        """Apply the layer to a batch. ``rng`` switches dropout sampling on."""

        return _FORWARD[self.kind](self, params, x, rng)

    def backward(self, params: Params, cache: Cache, dout: np.ndarray) -> Tuple[np.ndarray, Params]:
        return _BACKWARD[self.kind](self, params, cache, dout)


def _apply_activation(layer: LayerSpec, z: np.ndarray, cache: Cache) -> np.ndarray:
    if layer.activation == "relu":
        mask = z > 0
        cache["mask"] = mask
        return z * mask
    return z


def _activation_grad(layer: LayerSpec, cache: Cache, dout: np.ndarray) -> np.ndarray:
    if layer.activation == "relu":
        return dout * cache["mask"]
    return dout


def _dense_forward(layer: LayerSpec, params: Params, x: np.ndarray, rng) -> Tuple[np.ndarray, Cache]:
    cache: Cache = {"x": x}
    z = x @ params["W"] + params["b"]
    return _apply_activation(layer, z, cache), cache


def _dense_backward(layer: LayerSpec, params: Params, cache: Cache, dout: np.ndarray):
    dz = _activation_grad(layer, cache, dout)
    x = cache["x"]
    grads = {
        "W": x.T @ dz,
        "b": dz.sum(axis=0, dtype=np.float64).astype(dz.dtype),
    }
    return dz @ params["W"].T, grads


def _conv_windows(layer: LayerSpec, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    ph, pw = layer._padding_amount()
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    kh, kw = layer.kernel  # type: ignore[misc]
    s = layer.stride
    # (N, C, H_out, W_out, kh, kw)
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]
    return x, windows


def _conv_forward(layer: LayerSpec, params: Params, x: np.ndarray, rng) -> Tuple[np.ndarray, Cache]:
    padded, windows = _conv_windows(layer, x)
    z = np.tensordot(windows, params["W"], axes=([1, 4, 5], [1, 2, 3]))
    z = z.transpose(0, 3, 1, 2) + params["b"][None, :, None, None]
    cache: Cache = {"windows": windows, "padded_shape": padded.shape, "x_shape": x.shape}
    return _apply_activation(layer, np.ascontiguousarray(z), cache), cache


def _conv_backward(layer: LayerSpec, params: Params, cache: Cache, dout: np.ndarray):
    dz = _activation_grad(layer, cache, dout)
    windows = cache["windows"]
    weights = params["W"]
    grads = {
        "W": np.tensordot(dz, windows, axes=([0, 2, 3], [0, 2, 3])),
        "b": dz.sum(axis=(0, 2, 3), dtype=np.float64).astype(dz.dtype),
    }
    kh, kw = layer.kernel  # type: ignore[misc]
    s = layer.stride
    out_h, out_w = dz.shape[2], dz.shape[3]
    dpadded = np.zeros(cache["padded_shape"], dtype=dz.dtype)
    # (N, H_out, W_out, C, kh, kw)
    spread = np.tensordot(dz, weights, axes=([1], [0]))
    for i in range(kh):
        for j in range(kw):
            dpadded[:, :, i:i + s * out_h:s, j:j + s * out_w:s] += spread[..., i, j].transpose(0, 3, 1, 2)
    ph, pw = layer._padding_amount()
    _, _, height, width = cache["x_shape"]
    return dpadded[:, :, ph:ph + height, pw:pw + width], grads


def _pool_columns(layer: LayerSpec, x: np.ndarray) -> np.ndarray:
    wh, ww = layer.window  # type: ignore[misc]
    n, c, height, width = x.shape
    out_h, out_w = height // wh, width // ww
    cropped = x[:, :, :out_h * wh, :out_w * ww]
    blocks = cropped.reshape(n, c, out_h, wh, out_w, ww).transpose(0, 1, 2, 4, 3, 5)
    return blocks.reshape(n, c, out_h, out_w, wh * ww)


def _maxpool_forward(layer: LayerSpec, params: Params, x: np.ndarray, rng) -> Tuple[np.ndarray, Cache]:
    columns = _pool_columns(layer, x)
    # first maximum wins on ties
    argmax = columns.argmax(axis=-1)
    out = np.take_along_axis(columns, argmax[..., None], axis=-1)[..., 0]
    return out, {"argmax": argmax, "x_shape": x.shape}


def _maxpool_backward(layer: LayerSpec, params: Params, cache: Cache, dout: np.ndarray):
    wh, ww = layer.window  # type: ignore[misc]
    n, c, height, width = cache["x_shape"]
    out_h, out_w = dout.shape[2], dout.shape[3]
    columns = np.zeros((n, c, out_h, out_w, wh * ww), dtype=dout.dtype)
    np.put_along_axis(columns, cache["argmax"][..., None], dout[..., None], axis=-1)
    blocks = columns.reshape(n, c, out_h, out_w, wh, ww).transpose(0, 1, 2, 4, 3, 5)
    dx = np.zeros((n, c, height, width), dtype=dout.dtype)
    dx[:, :, :out_h * wh, :out_w * ww] = blocks.reshape(n, c, out_h * wh, out_w * ww)
    return dx, {}


def _dropout_forward(layer: LayerSpec, params: Params, x: np.ndarray, rng) -> Tuple[np.ndarray, Cache]:
    if rng is None or layer.rate == 0.0:
        return x, {"scale": None}
    # inverted dropout: survivors are rescaled now so evaluation is the identity
    keep = rng.random(x.shape) >= layer.rate
    scale = (keep / (1.0 - layer.rate)).astype(x.dtype)
    return x * scale, {"scale": scale}


def _dropout_backward(layer: LayerSpec, params: Params, cache: Cache, dout: np.ndarray):
    scale = cache["scale"]
    return (dout if scale is None else dout * scale), {}


def _relu_forward(layer: LayerSpec, params: Params, x: np.ndarray, rng) -> Tuple[np.ndarray, Cache]:
    mask = x > 0
    return x * mask, {"mask": mask}


def _relu_backward(layer: LayerSpec, params: Params, cache: Cache, dout: np.ndarray):
    return dout * cache["mask"], {}


def _flatten_forward(layer: LayerSpec, params: Params, x: np.ndarray, rng) -> Tuple[np.ndarray, Cache]:
    return x.reshape(x.shape[0], -1), {"x_shape": x.shape}


def _flatten_backward(layer: LayerSpec, params: Params, cache: Cache, dout: np.ndarray):
    return dout.reshape(cache["x_shape"]), {}


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _softmax_forward(layer: LayerSpec, params: Params, x: np.ndarray, rng) -> Tuple[np.ndarray, Cache]:
    probs = softmax(x)
    return probs, {"probs": probs}


def _softmax_backward(layer: LayerSpec, params: Params, cache: Cache, dout: np.ndarray):
    probs = cache["probs"]
    return probs * (dout - (dout * probs).sum(axis=1, keepdims=True)), {}


_FORWARD: Dict[str, Callable[..., Tuple[np.ndarray, Cache]]] = {
    "dense": _dense_forward,
    "conv2d": _conv_forward,
    "maxpool2d": _maxpool_forward,
    "dropout": _dropout_forward,
    "relu": _relu_forward,
    "flatten": _flatten_forward,
    "softmax": _softmax_forward,
}

_BACKWARD: Dict[str, Callable[..., Tuple[np.ndarray, Params]]] = {
    "dense": _dense_backward,
    "conv2d": _conv_backward,
    "maxpool2d": _maxpool_backward,
    "dropout": _dropout_backward,
    "relu": _relu_backward,
    "flatten": _flatten_backward,
    "softmax": _softmax_backward,
}
