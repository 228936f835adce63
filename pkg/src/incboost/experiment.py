"""Experiment harness: configs, paired-seed repetitions, metrics records and summaries."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from incboost.boosting import BoostRound, RoundFailedError, WeightDistribution, ensemble_predict
from incboost.data import (
    CIFAR_CLASSES,
    SYNTHETIC_KINDS,
    Dataset,
    SplitError,
    balanced_counts,
    check_split,
    holdout,
    load_cifar,
    load_idx,
    make_synthetic,
    split,
    stratified_subset,
)
from incboost.layers import LayerSpec
from incboost.methods import METHODS, MethodRequest, get_method
from incboost.network import NetworkSpec
from incboost.serialization import save_model
from incboost.surgery import GrowthPolicy, GrowthPolicyError, validate_policy
from incboost.training import TrainConfig

logger = logging.getLogger(__name__)

ENV_OUTPUT_DIR = "INCBOOST_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "runs"
DATA_SOURCES = ("synthetic", "idx", "cifar")
METHOD_ORDER = ("single", "adaboost-m2", "dib")

PathLike = Union[str, Path]


class ConfigError(ValueError):
    pass


class SummaryError(ValueError):
    pass


@dataclass(frozen=True)
class Preset:
    spec: NetworkSpec
    growth: GrowthPolicy


def _mnist_full() -> Preset:
    spec = NetworkSpec(
        input_shape=(1, 28, 28),
        layers=(
            LayerSpec.conv2d(64, 5, activation="relu"),
            LayerSpec.maxpool2d(2),
            LayerSpec.conv2d(128, 5, activation="relu"),
            LayerSpec.maxpool2d(2),
            LayerSpec.flatten(),
            LayerSpec.dense(1024, activation="relu"),
            LayerSpec.dropout(0.5),
            LayerSpec.dense(10),
            LayerSpec.softmax(),
        ),
    )
    growth = GrowthPolicy(LayerSpec.conv2d(64, 3, padding="same", activation="relu"), position=4)
    return Preset(spec, growth)


def _mnist_desk() -> Preset:
    spec = NetworkSpec(
        input_shape=(1, 28, 28),
        layers=(
            LayerSpec.conv2d(32, 5, activation="relu"),
            LayerSpec.maxpool2d(2),
            LayerSpec.conv2d(64, 5, activation="relu"),
            LayerSpec.maxpool2d(2),
            LayerSpec.flatten(),
            LayerSpec.dense(128, activation="relu"),
            LayerSpec.dropout(0.5),
            LayerSpec.dense(10),
            LayerSpec.softmax(),
        ),
    )
    growth = GrowthPolicy(LayerSpec.conv2d(64, 3, padding="same", activation="relu"), position=4)
    return Preset(spec, growth)


def _cifar_full(num_classes: int) -> Preset:
    layers: List[LayerSpec] = []
    for channels in (64, 128, 256):
        for _ in range(2):
            layers.append(LayerSpec.conv2d(channels, 3, padding="same", activation="relu"))
            layers.append(LayerSpec.dropout(0.25))
        layers.append(LayerSpec.maxpool2d(2))
    layers += [
        LayerSpec.flatten(),
        LayerSpec.dense(1024, activation="relu"),
        LayerSpec.dropout(0.5),
        LayerSpec.dense(num_classes),
        LayerSpec.softmax(),
    ]
    spec = NetworkSpec(input_shape=(3, 32, 32), layers=tuple(layers))
    # index 10 sits right after the second max-pool
    growth = GrowthPolicy(LayerSpec.conv2d(128, 3, padding="same", activation="relu"), position=10)
    return Preset(spec, growth)


def _moons_mlp() -> Preset:
    spec = NetworkSpec(
        input_shape=(2,),
        layers=(
            LayerSpec.dense(32, activation="relu"),
            LayerSpec.dense(32, activation="relu"),
            LayerSpec.dense(2),
            LayerSpec.softmax(),
        ),
    )
    return Preset(spec, GrowthPolicy(LayerSpec.dense(32, activation="relu"), position=2))


PRESETS = {
    "mnist-full": _mnist_full,
    "mnist-desk": _mnist_desk,
    "cifar10-full": partial(_cifar_full, 10),
    "cifar100-full": partial(_cifar_full, 100),
    "moons-mlp": _moons_mlp,
}


def get_preset(name: str) -> Preset:
    factory = PRESETS.get(name)
    if factory is None:
        raise ConfigError(f"unknown network preset '{name}'. Available: {', '.join(sorted(PRESETS))}")
    return factory()


def _reject_unknown(section: str, data: Mapping[str, object], allowed: Sequence[str]) -> None:
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown {section} keys: {', '.join(sorted(unknown))}")


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    kind: str = "two-moons"
    n: int = 1000
    classes: int = 2
    noise: float = 0.1
    fractions: Tuple[float, ...] = (0.6, 0.2, 0.2)
    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    train_files: Tuple[str, ...] = ()
    test_files: Tuple[str, ...] = ()
    label_kind: Optional[str] = None
    subset: Optional[int] = None
    valid_size: int = 1000
    center: bool = False
    seed: int = 0

    def to_dict(self) -> Dict[str, object]:
        data = asdict(self)
        data["fractions"] = list(self.fractions)
        data["train_files"] = list(self.train_files)
        data["test_files"] = list(self.test_files)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "DataConfig":
        _reject_unknown("data", data, list(cls.__dataclass_fields__))
        values = dict(data)
        for key in ("fractions", "train_files", "test_files"):
            if key in values:
                values[key] = tuple(values[key])  # type: ignore[arg-type]
        return cls(**values)  # type: ignore[arg-type]


@dataclass(frozen=True)
class ExperimentConfig:
    network: NetworkSpec
    growth: GrowthPolicy
    method: str = "dib"
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    rounds: int = 10
    later_epochs: int = 5
    repetitions: int = 1
    base_seed: int = 0
    workers: int = 1
    output_dir: Optional[str] = None

    def to_dict(self) -> Dict[str, object]:
        return {
            "method": self.method,
            "data": self.data.to_dict(),
            "network": self.network.to_dict(),
            "train": self.train.to_dict(),
            "boosting": {"rounds": self.rounds},
            "dib": {"later_epochs": self.later_epochs, "growth": self.growth.to_dict()},
            "repetitions": self.repetitions,
            "base_seed": self.base_seed,
            "workers": self.workers,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "ExperimentConfig":
        _reject_unknown(
            "config",
            data,
            ("method", "data", "network", "train", "boosting", "dib",
             "repetitions", "base_seed", "workers", "output_dir"),
        )
        try:
            network = data.get("network", "moons-mlp")
            if isinstance(network, str):
                preset = get_preset(network)
                spec, growth = preset.spec, preset.growth
            else:
                spec = NetworkSpec.from_dict(network)  # type: ignore[arg-type]
                growth = None
            boosting = dict(data.get("boosting", {}))  # type: ignore[arg-type]
            _reject_unknown("boosting", boosting, ("rounds",))
            dib = dict(data.get("dib", {}))  # type: ignore[arg-type]
            _reject_unknown("dib", dib, ("later_epochs", "growth"))
            if "growth" in dib:
                growth = GrowthPolicy.from_dict(dib["growth"])  # type: ignore[arg-type]
            if growth is None:
                raise ConfigError("an explicit network needs a dib.growth policy")
            return cls(
                network=spec,
                growth=growth,
                method=str(data.get("method", "dib")),
                data=DataConfig.from_dict(data.get("data", {})),  # type: ignore[arg-type]
                train=TrainConfig.from_dict(data.get("train", {})),  # type: ignore[arg-type]
                rounds=int(boosting.get("rounds", 10)),
                later_epochs=int(dib.get("later_epochs", 5)),
                repetitions=int(data.get("repetitions", 1)),  # type: ignore[arg-type]
                base_seed=int(data.get("base_seed", 0)),  # type: ignore[arg-type]
                workers=int(data.get("workers", 1)),  # type: ignore[arg-type]
                output_dir=data.get("output_dir"),  # type: ignore[arg-type]
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc


def load_config(path: PathLike) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return ExperimentConfig.from_dict(data)


def _require_files(paths: Sequence[Optional[str]], what: str) -> None:
    for path in paths:
        if not path:
            raise ConfigError(f"{what} path is missing")
        if not os.path.exists(path):
            raise ConfigError(f"{what} file not found: {path}")


def validate_config(cfg: ExperimentConfig) -> Tuple[NetworkSpec, ...]:
    """Check everything that can be checked before training.

    Returns the network spec each round will train (one entry per round; the
    same spec repeated for methods that do not grow).
    """

    if cfg.method not in METHODS:
        raise ConfigError(f"unknown method '{cfg.method}'. Available: {', '.join(sorted(METHODS))}")
    if cfg.repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    if cfg.rounds < 1:
        raise ConfigError("boosting.rounds must be >= 1")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if not 1 <= cfg.later_epochs <= cfg.train.epochs:
        raise ConfigError("dib.later_epochs must lie in [1, train.epochs]")

    data = cfg.data
    if data.source not in DATA_SOURCES:
        raise ConfigError(f"unknown data source '{data.source}'")
    if data.source == "synthetic":
        if data.kind not in SYNTHETIC_KINDS:
            raise ConfigError(f"unknown synthetic kind '{data.kind}'")
        if len(data.fractions) != 3:
            raise ConfigError("data.fractions needs (train, valid, test)")
        if not 1 <= data.classes <= data.n:
            raise ConfigError("data.n must be >= data.classes >= 1")
        try:
            check_split(balanced_counts(data.n, data.classes), data.fractions)
        except SplitError as exc:
            raise ConfigError(f"data.n={data.n} cannot be split: {exc}") from exc
        if cfg.network.input_shape != (2,):
            raise ConfigError(f"synthetic data is 2-dimensional, network expects {cfg.network.input_shape}")
        if cfg.network.num_classes != data.classes:
            raise ConfigError(
                f"network outputs {cfg.network.num_classes} classes, data has {data.classes}"
            )
    elif data.subset is not None and data.subset <= data.valid_size:
        raise ConfigError("data.subset counts the validation examples and must exceed data.valid_size")
    if data.source == "idx":
        _require_files(
            [data.train_images, data.train_labels, data.test_images, data.test_labels], "IDX"
        )
    elif data.source == "cifar":
        if not data.train_files or not data.test_files:
            raise ConfigError("cifar data needs train_files and test_files")
        if data.label_kind not in CIFAR_CLASSES:
            raise ConfigError(f"unknown CIFAR label kind '{data.label_kind}'")
        if cfg.network.num_classes != CIFAR_CLASSES[data.label_kind]:
            raise ConfigError(
                f"network outputs {cfg.network.num_classes} classes, "
                f"CIFAR labels of kind {data.label_kind} have {CIFAR_CLASSES[data.label_kind]}"
            )
        _require_files(list(data.train_files) + list(data.test_files), "CIFAR")

    if cfg.method == "dib":
        try:
            return validate_policy(cfg.network, cfg.growth, cfg.rounds)
        except GrowthPolicyError as exc:
            raise ConfigError(str(exc)) from exc
    rounds = 1 if cfg.method == "single" else cfg.rounds
    return (cfg.network,) * rounds


@dataclass(frozen=True)
class DataSplits:
    train: Dataset
    valid: Dataset
    test: Dataset


def load_data(cfg: DataConfig) -> DataSplits:
    """Build the (train, validation, test) sets; the training set gets ids 0..m-1."""

    if cfg.source == "synthetic":
        full = make_synthetic(cfg.kind, cfg.n, cfg.classes, cfg.noise, cfg.seed)
        train_set, valid_set, test_set = split(full, tuple(cfg.fractions), cfg.seed)  # type: ignore[arg-type]
        return DataSplits(train_set.reindexed(), valid_set, test_set)

    if cfg.source == "idx":
        full = load_idx(cfg.train_images, cfg.train_labels, center=cfg.center)  # type: ignore[arg-type]
        test_set = load_idx(
            cfg.test_images, cfg.test_labels, num_classes=full.num_classes, center=cfg.center  # type: ignore[arg-type]
        )
    elif cfg.source == "cifar":
        full = load_cifar(cfg.train_files, label_kind=cfg.label_kind)
        test_set = load_cifar(cfg.test_files, label_kind=cfg.label_kind)
    else:
        raise ConfigError(f"unknown data source '{cfg.source}'")
    if cfg.subset is not None:
        full = stratified_subset(full, cfg.subset, cfg.seed)
    train_set, valid_set = holdout(full, cfg.valid_size, cfg.seed)
    return DataSplits(train_set.reindexed(), valid_set, test_set)


@dataclass(frozen=True)
class RoundMetrics:
    round_index: int
    pseudo_loss: float
    raw_pseudo_loss: float
    beta: float
    best_epoch: int
    epochs: int
    wall_time: float
    layers: int
    unique_fraction: float

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "RoundMetrics":
        return cls(**{name: data[name] for name in cls.__dataclass_fields__})  # type: ignore[arg-type]


@dataclass(frozen=True)
class MetricsRecord:
    run_id: str
    seed: int
    method: str
    rounds: Tuple[RoundMetrics, ...]
    test_error: float
    total_wall_time: float
    jaccard: Tuple[float, ...] = ()
    overlaps: Tuple[Dict[str, object], ...] = ()
    config: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "rounds", tuple(self.rounds))
        object.__setattr__(self, "jaccard", tuple(self.jaccard))
        object.__setattr__(self, "overlaps", tuple(self.overlaps))
        if not 0.0 <= self.test_error <= 1.0:
            raise ValueError("test_error must lie in [0, 1]")
        if self.total_wall_time < 0 or any(r.wall_time < 0 for r in self.rounds):
            raise ValueError("wall times must be >= 0")

    @property
    def total_epochs(self) -> int:
        return sum(r.epochs for r in self.rounds)

    @property
    def final_best_epoch(self) -> int:
        return self.rounds[-1].best_epoch if self.rounds else 0

    def to_dict(self) -> Dict[str, object]:
        return {
            "run_id": self.run_id,
            "seed": self.seed,
            "method": self.method,
            "rounds": [r.to_dict() for r in self.rounds],
            "test_error": self.test_error,
            "total_wall_time": self.total_wall_time,
            "total_epochs": self.total_epochs,
            "jaccard": list(self.jaccard),
            "overlaps": list(self.overlaps),
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "MetricsRecord":
        return cls(
            run_id=str(data["run_id"]),
            seed=int(data["seed"]),  # type: ignore[arg-type]
            method=str(data["method"]),
            rounds=tuple(RoundMetrics.from_dict(r) for r in data["rounds"]),  # type: ignore[union-attr]
            test_error=float(data["test_error"]),  # type: ignore[arg-type]
            total_wall_time=float(data["total_wall_time"]),  # type: ignore[arg-type]
            jaccard=tuple(data.get("jaccard", ())),  # type: ignore[arg-type]
            overlaps=tuple(data.get("overlaps", ())),  # type: ignore[arg-type]
            config=dict(data.get("config", {})),  # type: ignore[arg-type]
        )


def _append_line(path: Path, payload: Mapping[str, object]) -> None:
    with open(path, "a", encoding="utf-8") as handle:
        handle.write(json.dumps(payload, sort_keys=True))
        handle.write("\n")


def run_id(method: str, run_index: int) -> str:
    return f"{method}-run{run_index:03d}"


def _round_metrics(round_index: int, round_: BoostRound, sample: Dataset, m: int) -> RoundMetrics:
    report = round_.train_report
    return RoundMetrics(
        round_index=round_index,
        pseudo_loss=round_.pseudo_loss,
        raw_pseudo_loss=float(round_.raw_pseudo_loss if round_.raw_pseudo_loss is not None else round_.pseudo_loss),
        beta=round_.beta,
        best_epoch=report.best_epoch,
        epochs=report.epochs,
        wall_time=report.wall_time,
        layers=len(round_.member.spec.layers),
        unique_fraction=len(np.unique(sample.ids)) / m,
    )


def execute_run(
    cfg: ExperimentConfig,
    run_index: int,
    out_dir: PathLike,
    data: Optional[DataSplits] = None,
) -> MetricsRecord:
    """One repetition: seed ``base_seed + run_index``, own metrics and model files."""

    out_dir = Path(out_dir)
    seed = cfg.base_seed + run_index
    data = data if data is not None else load_data(cfg.data)
    name = run_id(cfg.method, run_index)
    metrics_path = out_dir / f"{name}.jsonl"
    metrics_path.write_text("", encoding="utf-8")
    rounds: List[RoundMetrics] = []

    def on_round(round_: BoostRound, sample: Dataset, dist: WeightDistribution) -> None:
        metrics = _round_metrics(len(rounds), round_, sample, len(data.train))
        rounds.append(metrics)
        _append_line(metrics_path, {"event": "round", "run_id": name, **metrics.to_dict()})

    request = MethodRequest(
        base=data.train,
        valid=data.valid,
        spec=cfg.network,
        train=cfg.train.with_seed(seed),
        rounds=cfg.rounds,
        later_epochs=cfg.later_epochs,
        policy=cfg.growth,
        on_round=on_round,
    )
    logger.info("%s: seed %d, %d training examples", name, seed, len(data.train))
    try:
        ensemble, overlap = get_method(cfg.method).run(request)
    except RoundFailedError as exc:
        if exc.ensemble is not None:
            save_model(exc.ensemble, out_dir / f"{name}.partial.model", config=cfg.to_dict())
        overlaps = exc.overlap.to_dict() if exc.overlap is not None else []
        _append_line(
            metrics_path,
            {"event": "aborted", "run_id": name, "round": exc.round_index,
             "error": str(exc.cause), "overlaps": overlaps},
        )
        logger.error("%s aborted in round %d; finished rounds saved", name, exc.round_index)
        raise

    predictions = ensemble_predict(ensemble, data.test.examples)
    record = MetricsRecord(
        run_id=name,
        seed=seed,
        method=cfg.method,
        rounds=tuple(rounds),
        test_error=float(np.mean(predictions != data.test.labels)),
        total_wall_time=float(sum(r.wall_time for r in rounds)),
        jaccard=overlap.jaccards if overlap is not None else (),
        overlaps=tuple(overlap.to_dict()) if overlap is not None else (),
        config=cfg.to_dict(),
    )
    _append_line(metrics_path, {"event": "record", **record.to_dict()})
    save_model(ensemble, out_dir / f"{name}.model", config=cfg.to_dict())
    logger.info("%s: test error %.4f in %.1fs", name, record.test_error, record.total_wall_time)
    return record


def resolve_output_dir(cfg: ExperimentConfig, out_dir: Optional[PathLike] = None) -> Path:
    return Path(out_dir or cfg.output_dir or os.getenv(ENV_OUTPUT_DIR) or DEFAULT_OUTPUT_DIR)


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: Optional[PathLike] = None,
    workers: Optional[int] = None,
) -> List[MetricsRecord]:
    """Run ``cfg.repetitions`` paired-seed repetitions; run ``r`` uses ``base_seed + r``."""

    validate_config(cfg)
    out = resolve_output_dir(cfg, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"{cfg.method}-config.json", "w", encoding="utf-8") as handle:
        json.dump(cfg.to_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")

    workers = workers or cfg.workers
    indices = range(cfg.repetitions)
    if workers > 1 and cfg.repetitions > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(execute_run, cfg, index, out) for index in indices]
            return [future.result() for future in futures]
    data = load_data(cfg.data)
    return [execute_run(cfg, index, out, data) for index in indices]


def load_records(records_dir: PathLike) -> List[MetricsRecord]:
    """Final records of every run file; lines left half-written by a killed run are skipped."""

    records = []
    for path in sorted(Path(records_dir).glob("*.jsonl")):
        last = None
        with open(path, "r", encoding="utf-8") as handle:
            for line in handle:
                try:
                    payload = json.loads(line)
                except json.JSONDecodeError:
                    continue
                if isinstance(payload, dict) and payload.get("event") == "record":
                    last = payload
        if last is not None:
            records.append(MetricsRecord.from_dict(last))
    return records


@dataclass(frozen=True)
class MethodSummary:
    method: str
    runs: int
    mean_error: float
    std_error: float
    mean_wall_time: float
    mean_best_epoch: float
    mean_epochs: float


@dataclass(frozen=True)
class PairedComparison:
    """DIB against AdaBoost.M2 on the seeds both were run with."""

    pairs: int
    dib_wins: int
    ties: int
    mean_error_difference: float


@dataclass(frozen=True)
class Summary:
    methods: Tuple[MethodSummary, ...]
    paired: Optional[PairedComparison] = None


def _method_rank(method: str) -> Tuple[int, str]:
    return (METHOD_ORDER.index(method) if method in METHOD_ORDER else len(METHOD_ORDER), method)


def _summarize_method(method: str, records: Sequence[MetricsRecord]) -> MethodSummary:
    errors = np.array([r.test_error for r in records], dtype=np.float64)
    return MethodSummary(
        method=method,
        runs=len(records),
        mean_error=float(errors.mean()),
        std_error=float(errors.std(ddof=1)) if len(errors) > 1 else 0.0,
        mean_wall_time=float(np.mean([r.total_wall_time for r in records])),
        mean_best_epoch=float(np.mean([r.final_best_epoch for r in records])),
        mean_epochs=float(np.mean([r.total_epochs for r in records])),
    )


def _paired(records: Sequence[MetricsRecord]) -> Optional[PairedComparison]:
    ada = {r.seed: r.test_error for r in records if r.method == "adaboost-m2"}
    dib = {r.seed: r.test_error for r in records if r.method == "dib"}
    seeds = sorted(set(ada) & set(dib))
    if not seeds:
        return None
    differences = np.array([dib[s] - ada[s] for s in seeds], dtype=np.float64)
    return PairedComparison(
        pairs=len(seeds),
        dib_wins=int(np.count_nonzero(differences < 0)),
        ties=int(np.count_nonzero(differences == 0)),
        mean_error_difference=float(differences.mean()),
    )


def summarize(records_dir: PathLike) -> Summary:
    records = load_records(records_dir)
    if not records:
        raise SummaryError(f"no finished run records in {records_dir}")
    grouped: Dict[str, List[MetricsRecord]] = {}
    for record in records:
        grouped.setdefault(record.method, []).append(record)
    methods = tuple(
        _summarize_method(method, grouped[method]) for method in sorted(grouped, key=_method_rank)
    )
    return Summary(methods=methods, paired=_paired(records))


CSV_COLUMNS = ("method", "runs", "mean_error", "std_error", "mean_wall_time", "mean_best_epoch", "mean_epochs")


def summary_csv(summary: Summary) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in summary.methods:
        writer.writerow([getattr(row, column) for column in CSV_COLUMNS])
    return buffer.getvalue()


def render_summary(summary: Summary) -> str:
    lines = [
        f"{'method':<14}{'runs':>6}{'test error':>20}{'wall time (s)':>16}{'best epoch':>12}{'epochs':>9}"
    ]
    for row in summary.methods:
        error = f"{100 * row.mean_error:.2f}% ± {100 * row.std_error:.2f}"
        lines.append(
            f"{row.method:<14}{row.runs:>6}{error:>20}{row.mean_wall_time:>16.1f}"
            f"{row.mean_best_epoch:>12.1f}{row.mean_epochs:>9.1f}"
        )
    if summary.paired is not None:
        paired = summary.paired
        lines.append("")
        lines.append(
            f"paired seeds: {paired.pairs}, DIB better in {paired.dib_wins}, ties {paired.ties}, "
            f"mean error difference {100 * paired.mean_error_difference:+.2f} points"
        )
    return "\n".join(lines) + "\n"
