"""Copy-and-grow: insert one layer into a trained network and carry its weights over."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from incboost.layers import LayerSpec, Params
from incboost.network import Network, NetworkSpec, NetworkSpecError, freeze_params

logger = logging.getLogger(__name__)


class SurgeryError(ValueError):
    def __init__(self, position: int, input_shape: Tuple[int, ...], message: str) -> None:
        super().__init__(f"cannot insert at position {position} (input {tuple(input_shape)}): {message}")
        self.position = position
        self.input_shape = tuple(input_shape)


class GrowthPolicyError(ValueError):
    def __init__(self, round_index: int, position: int, message: str) -> None:
        super().__init__(f"growth fails at round {round_index}, position {position}: {message}")
        self.round_index = round_index
        self.position = position


@dataclass(frozen=True)
class GrowthPolicy:
    """Which layer to insert each round, and where.

    ``max_insertions`` caps growth; once reached (or when it is 0) rounds still
    copy every weight but add nothing. ``preserve_spatial`` rejects layers that
    change the height/width of the feature maps they are inserted into.
    ``reinit_above`` re-initialises every parametrised layer above the insertion
    point instead of copying it.
    """

    layer: LayerSpec
    position: int
    max_insertions: Optional[int] = None
    preserve_spatial: bool = True
    reinit_above: bool = False

    def __post_init__(self) -> None:
        if self.position < 0:
            raise ValueError("GrowthPolicy.position must be >= 0")
        if self.max_insertions is not None and self.max_insertions < 0:
            raise ValueError("GrowthPolicy.max_insertions must be >= 0")
        if self.layer.kind == "softmax":
            raise ValueError("GrowthPolicy cannot insert a softmax layer")

    def inserts_at(self, round_index: int) -> bool:
        """Round ``t >= 1`` inserts its layer while fewer than the cap have been added."""

        if round_index < 1:
            return False
        return self.max_insertions is None or round_index <= self.max_insertions

    def insertions_by(self, round_index: int) -> int:
        if round_index < 1:
            return 0
        if self.max_insertions is None:
            return round_index
        return min(round_index, self.max_insertions)

    def to_dict(self) -> Dict[str, object]:
        return {
            "layer": self.layer.to_dict(),
            "position": self.position,
            "max_insertions": self.max_insertions,
            "preserve_spatial": self.preserve_spatial,
            "reinit_above": self.reinit_above,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "GrowthPolicy":
        unknown = set(data) - {"layer", "position", "max_insertions", "preserve_spatial", "reinit_above"}
        if unknown:
            raise ValueError(f"unknown growth fields: {', '.join(sorted(unknown))}")
        return cls(
            layer=LayerSpec.from_dict(data["layer"]),  # type: ignore[arg-type]
            position=int(data["position"]),  # type: ignore[arg-type]
            max_insertions=data.get("max_insertions"),  # type: ignore[arg-type]
            preserve_spatial=bool(data.get("preserve_spatial", True)),
            reinit_above=bool(data.get("reinit_above", False)),
        )


def grown_spec(spec: NetworkSpec, policy: GrowthPolicy) -> NetworkSpec:
    """``spec`` with the policy's layer inserted, or a SurgeryError."""

    position = policy.position
    if position > len(spec.layers) - 1:
        raise SurgeryError(
            position, spec.shapes[-1], f"network has {len(spec.layers)} layers; cannot insert after softmax"
        )
    input_shape = spec.shapes[position]
    try:
        grown = spec.insert(position, policy.layer)
    except NetworkSpecError as exc:
        raise SurgeryError(position, input_shape, str(exc)) from exc
    output_shape = grown.shapes[position + 1]
    if policy.preserve_spatial and len(input_shape) == 3:
        if len(output_shape) != 3 or output_shape[1:] != input_shape[1:]:
            raise SurgeryError(
                position,
                input_shape,
                f"{policy.layer.kind} changes the feature map shape to {tuple(output_shape)}",
            )
    return grown


def _copy(params: Params) -> Params:
    return {name: np.array(value, copy=True) for name, value in params.items()}


def grow(
    trained: Network,
    policy: GrowthPolicy,
    *,
    seed: int,
    round_index: int = 1,
) -> Network:
    """Round ``round_index``'s starting network built from the previous round's.

    Every layer that keeps its parameter shapes is copied bit-for-bit; the
    inserted layer, and any layer whose shapes no longer fit, is initialised
    from ``seed``. ``trained`` is never modified.
    """

    if not policy.inserts_at(round_index):
        return Network(spec=trained.spec, params=freeze_params(trained.params), seed=int(seed))

    spec = grown_spec(trained.spec, policy)
    position = policy.position
    rng = np.random.default_rng(seed)
    dtype = trained.dtype
    params: List[Params] = []
    for index, layer in enumerate(spec.layers):
        input_shape = spec.shapes[index]
        if index == position:
            params.append(layer.init_params(input_shape, rng, dtype))
            continue
        source = trained.params[index if index < position else index - 1]
        expected = layer.param_shapes(input_shape)
        actual = {name: tuple(value.shape) for name, value in source.items()}
        if index > position and expected and (policy.reinit_above or actual != expected):
            logger.debug("layer %d (%s) re-initialised after insertion", index, layer.kind)
            params.append(layer.init_params(input_shape, rng, dtype))
        else:
            params.append(_copy(source))
    return Network(spec=spec, params=freeze_params(params), seed=int(seed))


def validate_policy(spec: NetworkSpec, policy: GrowthPolicy, rounds: int) -> Tuple[NetworkSpec, ...]:
    """Simulate growth for ``rounds`` boosting rounds before any training.

    Returns the spec each round will train; raises GrowthPolicyError naming
    the first round whose insertion does not fit.
    """

    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    specs = [spec]
    current = spec
    for round_index in range(1, rounds):
        if policy.inserts_at(round_index):
            try:
                current = grown_spec(current, policy)
            except SurgeryError as exc:
                raise GrowthPolicyError(round_index, policy.position, str(exc)) from exc
        specs.append(current)
    return tuple(specs)
