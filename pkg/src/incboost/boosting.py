"""AdaBoost.M2 algebra: distributions, resampling, pseudo-loss and weighted voting."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from incboost.data import Dataset
from incboost.network import Network, NetworkSpec, build_network, predict_proba
from incboost.training import TrainConfig, TrainReport, train

logger = logging.getLogger(__name__)

EPSILON_FLOOR = 1e-4
EPSILON_CEILING = 0.5 - 1e-4
DISTRIBUTION_TOLERANCE = 1e-9


@dataclass(frozen=True)
class WeightDistribution:
    """Sampling weights over the examples of the base training set."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        weights = np.array(self.weights, dtype=np.float64, copy=True)
        if weights.ndim != 1 or len(weights) == 0:
            raise ValueError("weights must be a non-empty vector")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("weights must be finite and non-negative")
        total = math.fsum(weights)
        if abs(total - 1.0) > DISTRIBUTION_TOLERANCE:
            raise ValueError(f"weights sum to {total!r}, not 1")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return len(self.weights)


# Called after every finished round with the round, its resample and D_t.
RoundCallback = Callable[["BoostRound", Dataset, WeightDistribution], None]


@dataclass(frozen=True)
class BoostRound:
    member: Network
    beta: float
    pseudo_loss: float
    train_report: TrainReport
    resample_seed: Optional[int] = None
    raw_pseudo_loss: Optional[float] = None
    alpha: float = field(init=False)

    def __post_init__(self) -> None:
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta!r}")
        if not 0.0 < self.pseudo_loss < 0.5:
            raise ValueError(f"pseudo_loss must lie in (0, 0.5), got {self.pseudo_loss!r}")
        object.__setattr__(self, "alpha", 1.0 / self.beta)

    @property
    def vote_weight(self) -> float:
        return math.log(self.alpha)

    @property
    def clamped(self) -> bool:
        return self.raw_pseudo_loss is not None and self.raw_pseudo_loss != self.pseudo_loss


@dataclass(frozen=True)
class Ensemble:
    rounds: Tuple[BoostRound, ...]
    num_classes: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "rounds", tuple(self.rounds))
        if not self.rounds:
            raise ValueError("an ensemble needs at least one round")
        shape = self.rounds[0].member.input_shape
        for index, round_ in enumerate(self.rounds):
            if round_.member.num_classes != self.num_classes:
                raise ValueError(
                    f"round {index} outputs {round_.member.num_classes} classes, expected {self.num_classes}"
                )
            if round_.member.input_shape != shape:
                raise ValueError(f"round {index} expects input {round_.member.input_shape}, not {shape}")

    def __len__(self) -> int:
        return len(self.rounds)

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return self.rounds[0].member.input_shape

    @property
    def vote_weights(self) -> np.ndarray:
        return np.array([round_.vote_weight for round_ in self.rounds])


class RoundFailedError(RuntimeError):
    """A boosting round raised; carries everything finished before it."""

    def __init__(
        self,
        round_index: int,
        cause: BaseException,
        ensemble: Optional[Ensemble],
        overlap: Optional[object] = None,
    ) -> None:
        super().__init__(f"round {round_index} failed: {cause}")
        self.round_index = round_index
        self.cause = cause
        self.ensemble = ensemble
        self.overlap = overlap

    def __reduce__(self):
        return (type(self), (self.round_index, self.cause, self.ensemble, self.overlap))


def init_distribution(m: int) -> WeightDistribution:
    if m < 1:
        raise ValueError("a distribution needs at least one example")
    return WeightDistribution(np.full(m, 1.0 / m))


def resample(base: Dataset, dist: WeightDistribution, seed: int) -> Dataset:
    """Draw ``len(base)`` examples with replacement according to ``dist``."""

    if len(dist) != len(base):
        raise ValueError(f"distribution has {len(dist)} weights for {len(base)} examples")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(base), size=len(base), replace=True, p=dist.weights)
    return base.subset(picks)


def _check_scores(scores: np.ndarray, labels: np.ndarray, dist: WeightDistribution) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != len(labels) or len(labels) != len(dist):
        raise ValueError(
            f"scores {scores.shape}, labels {labels.shape} and {len(dist)} weights disagree"
        )
    if scores.shape[1] < 2:
        raise ValueError("pseudo-loss needs at least two classes")
    return scores, labels


def pseudo_loss_from_scores(scores: np.ndarray, labels: np.ndarray, dist: WeightDistribution) -> float:
    """Pseudo-loss over every mislabel pair (i, y != y_i).

    Each example's pair sum is divided by K - 1, so a member that outputs
    1/K everywhere scores exactly 1/2.
    """

    scores, labels = _check_scores(scores, labels, dist)
    k = scores.shape[1]
    rows = np.arange(len(labels))
    true_scores = scores[rows, labels]
    wrong_total = scores.sum(axis=1) - true_scores
    pair_sum = (k - 1) * (1.0 - true_scores) + wrong_total
    return 0.5 * float(np.dot(dist.weights, pair_sum / (k - 1)))


def pseudo_loss(member: Network, base: Dataset, dist: WeightDistribution) -> float:
    if member.num_classes != base.num_classes:
        raise ValueError(
            f"member outputs {member.num_classes} classes, data has {base.num_classes}"
        )
    return pseudo_loss_from_scores(predict_proba(member, base.examples), base.labels, dist)


def clamp_pseudo_loss(epsilon: float) -> float:
    return min(max(float(epsilon), EPSILON_FLOOR), EPSILON_CEILING)


def beta(epsilon: float) -> float:
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"pseudo-loss {epsilon!r} is outside (0, 1); clamp it first")
    return epsilon / (1.0 - epsilon)


def margins(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """h(x_i, y_i) minus the strongest wrong-class score."""

    scores = np.asarray(scores, dtype=np.float64)
    rows = np.arange(len(labels))
    others = scores.copy()
    others[rows, labels] = -np.inf
    return scores[rows, labels] - others.max(axis=1)


def reweight(
    dist: WeightDistribution,
    scores: np.ndarray,
    labels: np.ndarray,
    beta_t: float,
) -> WeightDistribution:
    scores, labels = _check_scores(scores, labels, dist)
    if not 0.0 < beta_t < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta_t!r}")
    exponent = 0.5 * (1.0 + margins(scores, labels))
    unnormalised = dist.weights * np.power(beta_t, exponent)
    return WeightDistribution(unnormalised / math.fsum(unnormalised))


def update_distribution(
    dist: WeightDistribution,
    member: Network,
    base: Dataset,
    beta_t: float,
) -> WeightDistribution:
    return reweight(dist, predict_proba(member, base.examples), base.labels, beta_t)


def ensemble_scores(
    ens: Ensemble,
    x: np.ndarray,
    vote_weights: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """Weighted class scores: sum over rounds of log(alpha_t) * h_t(x, y)."""

    weights = ens.vote_weights if vote_weights is None else np.asarray(vote_weights, dtype=np.float64)
    if len(weights) != len(ens):
        raise ValueError(f"{len(weights)} vote weights for {len(ens)} rounds")
    x = np.asarray(x)
    total = np.zeros((len(x), ens.num_classes), dtype=np.float64)
    for weight, round_ in zip(weights, ens.rounds):
        total += weight * predict_proba(round_.member, x)
    return total


def ensemble_predict(
    ens: Ensemble,
    x: np.ndarray,
    vote_weights: Optional[Sequence[float]] = None,
):
    """Class with the highest weighted vote; lowest index wins ties.

    Accepts a single example (returns an int) or a batch (returns an array).
    """

    x = np.asarray(x)
    single = x.shape == ens.input_shape
    batch = x[None] if single else x
    labels = ensemble_scores(ens, batch, vote_weights).argmax(axis=1)
    return int(labels[0]) if single else labels


def fit_round(
    net: Network,
    base: Dataset,
    sample: Dataset,
    valid: Dataset,
    dist: WeightDistribution,
    cfg: TrainConfig,
    round_index: int,
    resample_seed: Optional[int],
) -> Tuple[BoostRound, WeightDistribution]:
    """Train one member and derive its beta and the next distribution."""

    member, report = train(net, sample, valid, cfg)
    scores = predict_proba(member, base.examples)
    raw = pseudo_loss_from_scores(scores, base.labels, dist)
    epsilon = clamp_pseudo_loss(raw)
    if epsilon != raw:
        logger.warning(
            "round %d: pseudo-loss %.6g clamped to %.6g", round_index, raw, epsilon
        )
    beta_t = beta(epsilon)
    round_ = BoostRound(
        member=member,
        beta=beta_t,
        pseudo_loss=epsilon,
        train_report=report,
        resample_seed=resample_seed,
        raw_pseudo_loss=raw,
    )
    logger.info(
        "round %d: pseudo-loss %.4f, beta %.4f, best epoch %d/%d, %.1fs",
        round_index, epsilon, beta_t, report.best_epoch, report.epochs, report.wall_time,
    )
    return round_, reweight(dist, scores, base.labels, beta_t)


def round_seed(run_seed: int, round_index: int) -> int:
    """Seed of one boosting round.

    Both indices feed one SeedSequence, so rounds of neighbouring runs never
    share a seed the way ``run_seed + round_index`` would.
    """

    return int(np.random.SeedSequence([run_seed, round_index]).generate_state(1)[0])


def run_single(
    base: Dataset,
    valid: Dataset,
    spec: NetworkSpec,
    cfg: TrainConfig,
    *,
    on_round: Optional[RoundCallback] = None,
) -> Ensemble:
    """One network trained on the whole base set, wrapped as a one-round ensemble."""

    dist = init_distribution(len(base))
    seed = round_seed(cfg.seed, 0)
    net = build_network(spec, seed, dtype=cfg.dtype)
    try:
        round_, _ = fit_round(net, base, base, valid, dist, cfg.with_seed(seed), 0, None)
    except Exception as exc:
        raise RoundFailedError(0, exc, None) from exc
    if on_round is not None:
        on_round(round_, base, dist)
    return Ensemble(rounds=(round_,), num_classes=spec.num_classes)


def run_adaboost_m2(
    base: Dataset,
    valid: Dataset,
    spec: NetworkSpec,
    cfg: TrainConfig,
    rounds: int,
    *,
    on_round: Optional[RoundCallback] = None,
) -> Ensemble:
    """AdaBoost.M2 with a freshly initialised network every round.

    Round ``t`` resamples, initialises and shuffles with ``round_seed(cfg.seed, t)``.
    """

    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    dist = init_distribution(len(base))
    finished = []
    for t in range(rounds):
        seed = round_seed(cfg.seed, t)
        try:
            sample = resample(base, dist, seed)
            net = build_network(spec, seed, dtype=cfg.dtype)
            round_, next_dist = fit_round(
                net, base, sample, valid, dist, cfg.with_seed(seed), t, seed
            )
        except Exception as exc:
            partial = Ensemble(tuple(finished), spec.num_classes) if finished else None
            raise RoundFailedError(t, exc, partial) from exc
        finished.append(round_)
        if on_round is not None:
            on_round(round_, sample, dist)
        dist = next_dist
    return Ensemble(rounds=tuple(finished), num_classes=spec.num_classes)
