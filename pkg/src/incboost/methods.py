"""Training methods the experiment harness can run."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

from incboost.boosting import Ensemble, RoundCallback, RoundFailedError, run_adaboost_m2, run_single
from incboost.data import Dataset
from incboost.dib import DibConfig, OverlapReport, measure_overlap, run_dib
from incboost.network import NetworkSpec
from incboost.surgery import GrowthPolicy
from incboost.training import TrainConfig


@dataclass(frozen=True)
class MethodRequest:
    """Everything one repetition of one method needs."""

    base: Dataset
    valid: Dataset
    spec: NetworkSpec
    train: TrainConfig
    rounds: int
    later_epochs: int
    policy: GrowthPolicy
    on_round: Optional[RoundCallback] = None


MethodRunner = Callable[[MethodRequest], Tuple[Ensemble, Optional[OverlapReport]]]


@dataclass(frozen=True)
class Method:
    """A named way of producing an ensemble."""

    name: str
    description: str
    run: MethodRunner

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("Method.name must be non-empty")
        if not self.description:
            raise ValueError("Method.description must be non-empty")
        if not callable(self.run):
            raise TypeError("Method.run must be callable")


def _run_single(request: MethodRequest) -> Tuple[Ensemble, Optional[OverlapReport]]:
    ensemble = run_single(
        request.base, request.valid, request.spec, request.train, on_round=request.on_round
    )
    return ensemble, None


def _run_adaboost(request: MethodRequest) -> Tuple[Ensemble, Optional[OverlapReport]]:
    pairs = []
    state: Dict[str, object] = {}

    def on_round(round_, sample, dist) -> None:
        if "sample" in state:
            pairs.append(
                measure_overlap(len(pairs), state["member"], state["sample"], sample)  # type: ignore[arg-type]
            )
        state["sample"] = sample
        state["member"] = round_.member
        if request.on_round is not None:
            request.on_round(round_, sample, dist)

    try:
        ensemble = run_adaboost_m2(
            request.base,
            request.valid,
            request.spec,
            request.train,
            request.rounds,
            on_round=on_round,
        )
    except RoundFailedError as exc:
        exc.overlap = OverlapReport(tuple(pairs))
        raise
    return ensemble, OverlapReport(tuple(pairs))


def _run_dib(request: MethodRequest) -> Tuple[Ensemble, Optional[OverlapReport]]:
    cfg = DibConfig(
        policy=request.policy,
        rounds=request.rounds,
        first_epochs=request.train.epochs,
        later_epochs=request.later_epochs,
        train=request.train,
        base_seed=request.train.seed,
    )
    return run_dib(request.base, request.valid, request.spec, cfg, on_round=request.on_round)


METHODS: Dict[str, Method] = {
    method.name: method
    for method in (
        Method(name="single", description="one network on the full training set", run=_run_single),
        Method(
            name="adaboost-m2",
            description="AdaBoost.M2, fresh network every round",
            run=_run_adaboost,
        ),
        Method(
            name="dib",
            description="Deep Incremental Boosting, copy-and-grow between rounds",
            run=_run_dib,
        ),
    )
}


def get_method(name: str) -> Method:
    method = METHODS.get(name)
    if method is None:
        available = ", ".join(sorted(METHODS))
        raise KeyError(f"unknown method '{name}'. Available: {available}")
    return method


__all__ = ["METHODS", "Method", "MethodRequest", "get_method"]
