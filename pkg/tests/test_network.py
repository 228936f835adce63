from __future__ import annotations

import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

import tests

from incboost.layers import LayerSpec
from incboost.network import (
    Network,
    NetworkSpec,
    NetworkSpecError,
    activations,
    build_network,
    forward,
    freeze_params,
    grad,
    loss,
    loss_and_grad,
    predict,
)

# (input shape, hidden layers); every micro-net gets a dense head and softmax.
MICRO_NETS = [
    ((4,), []),
    ((5,), [LayerSpec.dense(4, activation="relu")]),
    ((4,), [LayerSpec.dense(6), LayerSpec.relu()]),
    ((4,), [LayerSpec.dense(6, activation="relu"), LayerSpec.dropout(0.3)]),
    ((2, 5, 5), [LayerSpec.conv2d(3, 3), LayerSpec.flatten()]),
    ((1, 4, 4), [LayerSpec.conv2d(2, 3, padding="same", activation="relu"), LayerSpec.flatten()]),
    ((1, 5, 5), [LayerSpec.conv2d(2, 3, stride=2), LayerSpec.flatten()]),
    ((1, 6, 6), [LayerSpec.conv2d(2, 3, activation="relu"), LayerSpec.maxpool2d(2), LayerSpec.flatten()]),
    ((2, 5, 5), [LayerSpec.maxpool2d(2), LayerSpec.flatten()]),
    ((1, 4, 5), [LayerSpec.conv2d(2, (2, 3)), LayerSpec.relu(), LayerSpec.flatten()]),
]

STEP = 1e-6
TOLERANCE = 1e-4
# central differences on an O(1) loss carry ~1e-10 of rounding noise
ABSOLUTE_FLOOR = 1e-8
ENTRIES_PER_ARRAY = 8


def _micro_spec(input_shape, hidden, classes=3) -> NetworkSpec:
    return NetworkSpec(
        input_shape=input_shape,
        layers=tuple(hidden) + (LayerSpec.dense(classes), LayerSpec.softmax()),
    )


def _perturbed(net: Network, layer: int, name: str, index, delta: float) -> Network:
    params = [{key: np.array(value) for key, value in group.items()} for group in net.params]
    params[layer][name][index] += delta
    return net.with_params(params)


def _dropout_loss(net: Network, x: np.ndarray, y: np.ndarray, seed: int) -> float:
    return loss_and_grad(net, x, y, rng=np.random.default_rng(seed))[0]


class TestBuildNetwork(unittest.TestCase):
    def test_parameter_shapes_follow_the_spec(self) -> None:
        spec = NetworkSpec((6,), (LayerSpec.dense(5), LayerSpec.relu(), LayerSpec.dense(3), LayerSpec.softmax()))
        net = build_network(spec, seed=7)
        self.assertEqual(net.params[0]["W"].shape, (6, 5))
        self.assertEqual(net.params[2]["b"].shape, (3,))
        self.assertEqual(net.params[1], {})
        self.assertEqual(net.num_classes, 3)

    def test_same_seed_gives_bit_identical_parameters(self) -> None:
        spec = _micro_spec((1, 6, 6), MICRO_NETS[7][1])
        first, second = build_network(spec, seed=11), build_network(spec, seed=11)
        for a, b in zip(first.params, second.params):
            for name in a:
                assert_array_equal(a[name], b[name])
        other = build_network(spec, seed=12)
        self.assertFalse(np.array_equal(first.params[0]["W"], other.params[0]["W"]))

    def test_conv_on_mnist_input(self) -> None:
        spec = NetworkSpec((1, 28, 28), (LayerSpec.conv2d(64, 3), LayerSpec.flatten(), LayerSpec.dense(10), LayerSpec.softmax()))
        self.assertEqual(build_network(spec, seed=0).params[0]["W"].shape, (64, 1, 3, 3))

    def test_incompatible_spec_names_the_layer(self) -> None:
        with self.assertRaises(NetworkSpecError) as ctx:
            NetworkSpec((1, 4, 4), (LayerSpec.conv2d(2, 3), LayerSpec.conv2d(2, 3), LayerSpec.flatten(), LayerSpec.dense(2), LayerSpec.softmax()))
        self.assertEqual(ctx.exception.layer_index, 1)

    def test_softmax_only_last(self) -> None:
        with self.assertRaises(NetworkSpecError):
            NetworkSpec((3,), (LayerSpec.softmax(), LayerSpec.dense(2), LayerSpec.softmax()))
        with self.assertRaises(NetworkSpecError):
            NetworkSpec((3,), (LayerSpec.dense(2),))

    def test_parameters_are_read_only(self) -> None:
        net = build_network(_micro_spec((4,), []), seed=0)
        with self.assertRaises(ValueError):
            net.params[0]["W"][0, 0] = 1.0

    def test_wrong_parameter_shapes_rejected(self) -> None:
        spec = _micro_spec((4,), [])
        with self.assertRaises(NetworkSpecError):
            Network(spec=spec, params=freeze_params([{"W": np.zeros((3, 3)), "b": np.zeros(3)}, {}]), seed=0)


class TestForward(unittest.TestCase):
    def test_rows_sum_to_one(self) -> None:
        for input_shape, hidden in MICRO_NETS:
            net = build_network(_micro_spec(input_shape, hidden), seed=1)
            x = np.random.default_rng(2).standard_normal((9,) + input_shape) * 10
            probs = forward(net, x)
            self.assertTrue(np.all(probs >= 0))
            assert_allclose(probs.sum(axis=1), np.ones(9), atol=1e-6)

    def test_zero_rate_dropout_is_the_same_in_both_modes(self) -> None:
        spec = NetworkSpec((4,), (LayerSpec.dense(5), LayerSpec.dropout(0.0), LayerSpec.dense(2), LayerSpec.softmax()))
        net = build_network(spec, seed=3)
        x = np.random.default_rng(4).standard_normal((6, 4))
        assert_array_equal(
            forward(net, x, train_mode=True, rng=np.random.default_rng(9)),
            forward(net, x, train_mode=False),
        )

    def test_identity_weights_pick_the_hot_class(self) -> None:
        spec = NetworkSpec((3,), (LayerSpec.dense(3), LayerSpec.softmax()))
        net = Network(
            spec=spec,
            params=freeze_params([{"W": 5.0 * np.eye(3), "b": np.zeros(3)}, {}]),
            seed=0,
        )
        assert_array_equal(predict(net, np.eye(3)), [0, 1, 2])

    def test_activations_lists_every_layer(self) -> None:
        input_shape, hidden = MICRO_NETS[7]
        net = build_network(_micro_spec(input_shape, hidden), seed=0)
        outputs = activations(net, np.zeros((2,) + input_shape))
        self.assertEqual([o.shape[1:] for o in outputs], list(net.spec.shapes[1:]))

    def test_shape_mismatch_is_an_error(self) -> None:
        net = build_network(_micro_spec((4,), []), seed=0)
        with self.assertRaises(ValueError):
            forward(net, np.zeros((2, 5)))
        with self.assertRaises(ValueError):
            forward(net, np.zeros(4))


class TestGradients(unittest.TestCase):
    def test_matches_central_differences_on_micro_nets(self) -> None:
        for case, (input_shape, hidden) in enumerate(MICRO_NETS):
            for seed in (0, 1):
                with self.subTest(case=case, seed=seed):
                    self._check(input_shape, hidden, seed)

    def _check(self, input_shape, hidden, seed: int) -> None:
        rng = np.random.default_rng(100 + seed)
        net = build_network(_micro_spec(input_shape, hidden), seed=seed, dtype=np.float64)
        x = rng.standard_normal((5,) + input_shape)
        y = rng.integers(0, 3, size=5)
        dropout_seed = 1000 + seed
        _, grads = loss_and_grad(net, x, y, rng=np.random.default_rng(dropout_seed))

        for layer, group in enumerate(net.params):
            for name, value in group.items():
                flat = rng.choice(value.size, size=min(ENTRIES_PER_ARRAY, value.size), replace=False)
                for position in flat:
                    index = np.unravel_index(position, value.shape)
                    plus = _dropout_loss(_perturbed(net, layer, name, index, STEP), x, y, dropout_seed)
                    minus = _dropout_loss(_perturbed(net, layer, name, index, -STEP), x, y, dropout_seed)
                    numeric = (plus - minus) / (2 * STEP)
                    analytic = grads[layer][name][index]
                    error = abs(numeric - analytic)
                    relative = error / max(abs(numeric) + abs(analytic), 1e-12)
                    self.assertTrue(
                        error < ABSOLUTE_FLOOR or relative < TOLERANCE,
                        f"layer {layer} {name}{index}: analytic {analytic!r}, numeric {numeric!r}",
                    )

    def test_gradient_shapes_mirror_parameters(self) -> None:
        input_shape, hidden = MICRO_NETS[7]
        net = build_network(_micro_spec(input_shape, hidden), seed=0)
        grads = grad(net, np.ones((3,) + input_shape), [0, 1, 2])
        for group, grad_group in zip(net.params, grads):
            self.assertEqual({k: v.shape for k, v in group.items()}, {k: v.shape for k, v in grad_group.items()})

    def test_zero_weight_head_with_balanced_labels_has_zero_bias_gradient(self) -> None:
        spec = NetworkSpec((3,), (LayerSpec.dense(3), LayerSpec.softmax()))
        net = Network(spec=spec, params=freeze_params([{"W": np.zeros((3, 3)), "b": np.zeros(3)}, {}]), seed=0)
        grads = grad(net, np.random.default_rng(0).standard_normal((3, 3)), [0, 1, 2])
        assert_allclose(grads[0]["b"], np.zeros(3), atol=1e-12)

    def test_duplicated_example_has_the_single_example_gradient(self) -> None:
        net = build_network(_micro_spec((4,), [LayerSpec.dense(4, activation="relu")]), seed=5, dtype=np.float64)
        x = np.random.default_rng(6).standard_normal((1, 4))
        single = grad(net, x, [2])
        double = grad(net, np.concatenate([x, x]), [2, 2])
        for a, b in zip(single, double):
            for name in a:
                assert_allclose(a[name], b[name], rtol=1e-12, atol=1e-15)

    def test_label_out_of_range(self) -> None:
        net = build_network(_micro_spec((4,), []), seed=0)
        with self.assertRaises(ValueError):
            grad(net, np.zeros((2, 4)), [0, 3])
        with self.assertRaises(ValueError):
            loss(net, np.zeros((2, 4)), [-1, 0])


if __name__ == "__main__":
    unittest.main()
