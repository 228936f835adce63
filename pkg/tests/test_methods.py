from __future__ import annotations

import unittest
from unittest.mock import patch

import tests

from incboost import boosting
from incboost.boosting import RoundFailedError
from incboost.data import make_synthetic, split
from incboost.layers import LayerSpec
from incboost.methods import METHODS, Method, MethodRequest, get_method
from incboost.network import NetworkSpec
from incboost.surgery import GrowthPolicy
from incboost.training import TrainConfig


def _request(rounds: int = 3, **overrides) -> MethodRequest:
    data = make_synthetic("two-moons", 160, noise=0.15, seed=2)
    train_set, valid, _ = split(data, (0.6, 0.2, 0.2), seed=2)
    values = dict(
        base=train_set.reindexed(),
        valid=valid,
        spec=NetworkSpec((2,), (LayerSpec.dense(8, activation="relu"), LayerSpec.dense(2), LayerSpec.softmax())),
        train=TrainConfig(epochs=3, batch_size=16, learning_rate=0.01, seed=5),
        rounds=rounds,
        later_epochs=1,
        policy=GrowthPolicy(LayerSpec.dense(8, activation="relu"), position=1),
    )
    values.update(overrides)
    return MethodRequest(**values)


class TestRegistry(unittest.TestCase):
    def test_known_methods(self) -> None:
        self.assertEqual(set(METHODS), {"single", "adaboost-m2", "dib"})
        self.assertIs(get_method("dib"), METHODS["dib"])

    def test_unknown_method_lists_the_alternatives(self) -> None:
        with self.assertRaises(KeyError) as ctx:
            get_method("bagging")
        self.assertIn("adaboost-m2", str(ctx.exception))

    def test_method_validation(self) -> None:
        with self.assertRaises(ValueError):
            Method(name="", description="x", run=lambda request: None)
        with self.assertRaises(ValueError):
            Method(name="x", description="", run=lambda request: None)
        with self.assertRaises(TypeError):
            Method(name="x", description="y", run=42)  # type: ignore[arg-type]


class TestRunners(unittest.TestCase):
    def test_single_trains_one_network_on_everything(self) -> None:
        calls = []
        request = _request(on_round=lambda round_, sample, dist: calls.append(len(sample)))
        ensemble, overlap = get_method("single").run(request)
        self.assertEqual(len(ensemble), 1)
        self.assertIsNone(overlap)
        self.assertEqual(calls, [len(request.base)])

    def test_adaboost_reports_consecutive_overlaps(self) -> None:
        calls = []
        request = _request(on_round=lambda round_, sample, dist: calls.append(round_))
        ensemble, overlap = get_method("adaboost-m2").run(request)
        self.assertEqual(len(ensemble), 3)
        self.assertEqual([pair.round_index for pair in overlap.pairs], [0, 1])
        self.assertEqual(len(calls), 3)
        layer_counts = {len(r.member.spec.layers) for r in ensemble.rounds}
        self.assertEqual(layer_counts, {len(request.spec.layers)})

    def test_dib_grows_and_uses_the_later_schedule(self) -> None:
        ensemble, overlap = get_method("dib").run(_request())
        self.assertEqual([r.train_report.epochs for r in ensemble.rounds], [3, 1, 1])
        self.assertEqual(len(overlap.pairs), 2)

    def test_adaboost_failure_keeps_the_overlaps_measured_so_far(self) -> None:
        real_fit_round = boosting.fit_round
        calls = []

        def failing(*args, **kwargs):
            calls.append(1)
            if len(calls) == 3:
                raise FloatingPointError("diverged")
            return real_fit_round(*args, **kwargs)

        with patch("incboost.boosting.fit_round", side_effect=failing):
            with self.assertRaises(RoundFailedError) as ctx:
                get_method("adaboost-m2").run(_request())
        self.assertEqual(ctx.exception.round_index, 2)
        self.assertEqual(len(ctx.exception.ensemble), 2)
        self.assertEqual(len(ctx.exception.overlap.pairs), 1)


if __name__ == "__main__":
    unittest.main()
