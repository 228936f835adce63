"""Deep Incremental Boosting driver and resample-overlap diagnostics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from incboost.boosting import (
    BoostRound,
    Ensemble,
    RoundCallback,
    RoundFailedError,
    fit_round,
    round_seed,
    init_distribution,
    resample,
)
from incboost.data import Dataset
from incboost.network import Network, NetworkSpec, build_network, predict
from incboost.surgery import GrowthPolicy, grow, validate_policy
from incboost.training import TrainConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DibConfig:
    """Schedule for Deep Incremental Boosting.

    Round 0 trains ``first_epochs`` (N); every later round trains the grown
    network for ``later_epochs`` (M).
    """

    policy: GrowthPolicy
    rounds: int = 10
    first_epochs: int = 20
    later_epochs: int = 5
    train: TrainConfig = field(default_factory=TrainConfig)
    base_seed: int = 0

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ValueError("DibConfig.rounds must be >= 1")
        if self.first_epochs < 1:
            raise ValueError("DibConfig.first_epochs must be >= 1")
        if not 1 <= self.later_epochs <= self.first_epochs:
            raise ValueError("DibConfig.later_epochs must lie in [1, first_epochs]")

    @property
    def total_epochs(self) -> int:
        return self.first_epochs + (self.rounds - 1) * self.later_epochs


@dataclass(frozen=True)
class RoundOverlap:
    """Unique-id comparison of the resamples of rounds ``round_index`` and ``round_index + 1``.

    The mistake counts are those of round ``round_index``'s member, split over
    the shared examples and each side's own.
    """

    round_index: int
    jaccard: float
    intersection: int
    symmetric_difference: int
    mistakes_common: int = 0
    mistakes_previous_only: int = 0
    mistakes_next_only: int = 0

    def to_dict(self) -> Dict[str, object]:
        return {
            "round": self.round_index,
            "jaccard": self.jaccard,
            "intersection": self.intersection,
            "symmetric_difference": self.symmetric_difference,
            "mistakes_common": self.mistakes_common,
            "mistakes_previous_only": self.mistakes_previous_only,
            "mistakes_next_only": self.mistakes_next_only,
        }


@dataclass(frozen=True)
class OverlapReport:
    pairs: Tuple[RoundOverlap, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "pairs", tuple(self.pairs))
        for pair in self.pairs:
            if not 0.0 <= pair.jaccard <= 1.0:
                raise ValueError(f"Jaccard similarity {pair.jaccard!r} outside [0, 1]")

    @property
    def jaccards(self) -> Tuple[float, ...]:
        return tuple(pair.jaccard for pair in self.pairs)

    def to_dict(self) -> List[Dict[str, object]]:
        return [pair.to_dict() for pair in self.pairs]


def _unique_ids(data: Dataset) -> np.ndarray:
    if len(data) == 0:
        raise ValueError("dataset carries no example ids")
    return np.unique(data.ids)


def jaccard(a: Dataset, b: Dataset) -> float:
    """|A ∩ B| / |A ∪ B| over the unique example ids of both sets."""

    ids_a, ids_b = _unique_ids(a), _unique_ids(b)
    common = len(np.intersect1d(ids_a, ids_b, assume_unique=True))
    union = len(np.union1d(ids_a, ids_b))
    return common / union


def mistake_count(member: Network, data: Dataset) -> int:
    if len(data) == 0:
        return 0
    return int(np.count_nonzero(predict(member, data.examples) != data.labels))


def overlap_decomposition(member: Network, a: Dataset, b: Dataset) -> Tuple[int, int, int]:
    """Mistakes on the shared unique examples, on those only in ``a`` and only in ``b``."""

    unique_a, unique_b = a.unique(), b.unique()
    in_b = np.isin(unique_a.ids, unique_b.ids, assume_unique=True)
    in_a = np.isin(unique_b.ids, unique_a.ids, assume_unique=True)
    common = mistake_count(member, unique_a.subset(np.flatnonzero(in_b)))
    a_only = mistake_count(member, unique_a.subset(np.flatnonzero(~in_b)))
    b_only = mistake_count(member, unique_b.subset(np.flatnonzero(~in_a)))
    return common, a_only, b_only


def measure_overlap(
    round_index: int,
    member: Optional[Network],
    previous: Dataset,
    current: Dataset,
) -> RoundOverlap:
    ids_prev, ids_next = _unique_ids(previous), _unique_ids(current)
    intersection = len(np.intersect1d(ids_prev, ids_next, assume_unique=True))
    union = len(np.union1d(ids_prev, ids_next))
    mistakes = (0, 0, 0)
    if member is not None:
        mistakes = overlap_decomposition(member, previous, current)
    return RoundOverlap(
        round_index=round_index,
        jaccard=intersection / union,
        intersection=intersection,
        symmetric_difference=union - intersection,
        mistakes_common=mistakes[0],
        mistakes_previous_only=mistakes[1],
        mistakes_next_only=mistakes[2],
    )


def run_dib(
    base: Dataset,
    valid: Dataset,
    spec: NetworkSpec,
    cfg: DibConfig,
    *,
    on_round: Optional[RoundCallback] = None,
) -> Tuple[Ensemble, OverlapReport]:
    """Deep Incremental Boosting.

    Each round resamples first, then grows the previous member, then trains
    it; the distribution and vote weights follow AdaBoost.M2 exactly. A failing
    round raises RoundFailedError carrying the finished rounds and overlaps.
    """

    validate_policy(spec, cfg.policy, cfg.rounds)
    if cfg.rounds > 1 and 2 * cfg.later_epochs >= cfg.first_epochs:
        logger.warning(
            "later rounds train %d of %d epochs; the schedule expects M << N",
            cfg.later_epochs, cfg.first_epochs,
        )

    dist = init_distribution(len(base))
    finished: List[BoostRound] = []
    pairs: List[RoundOverlap] = []
    previous: Optional[Dataset] = None
    for t in range(cfg.rounds):
        seed = round_seed(cfg.base_seed, t)
        try:
            sample = resample(base, dist, seed)
            if previous is not None:
                pairs.append(measure_overlap(t - 1, finished[-1].member, previous, sample))
            if t == 0:
                net = build_network(spec, seed, dtype=cfg.train.dtype)
                epochs = cfg.first_epochs
            else:
                net = grow(finished[-1].member, cfg.policy, seed=seed, round_index=t)
                epochs = cfg.later_epochs
            round_, next_dist = fit_round(
                net, base, sample, valid, dist, cfg.train.with_seed(seed, epochs), t, seed
            )
        except Exception as exc:
            partial = Ensemble(tuple(finished), spec.num_classes) if finished else None
            logger.error("round %d failed after %d finished rounds: %s", t, len(finished), exc)
            raise RoundFailedError(t, exc, partial, OverlapReport(tuple(pairs))) from exc
        finished.append(round_)
        if on_round is not None:
            on_round(round_, sample, dist)
        previous = sample
        dist = next_dist
    return Ensemble(rounds=tuple(finished), num_classes=spec.num_classes), OverlapReport(tuple(pairs))
