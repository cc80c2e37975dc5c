import numpy as np
import pytest

from src.exceptions import ContainerFormatError, ShapeMismatchError
from src.training.mlp import (
    PROBABILITY_FLOOR,
    Gradients,
    MlpArchitecture,
    MlpModel,
    TrainConfig,
    adam_step,
    backward,
    class_indices,
    cross_entropy,
    forward,
    init_model,
    load_checkpoint,
    predict,
    save_checkpoint,
    softmax,
)


def test_default_architecture_shapes():
    model = init_model(MlpArchitecture.for_bands(66))
    assert [w.shape for w in model.weights] == [(128, 66), (256, 128), (512, 256), (256, 512), (2, 256)]
    assert [b.shape for b in model.biases] == [(128,), (256,), (512,), (256,), (2,)]
    assert MlpArchitecture.for_bands(103).hidden_sizes == (256, 512, 256, 128)


def test_init_is_seeded_and_bounded():
    arch = MlpArchitecture(10, (6, 4))
    first, again, other = init_model(arch, seed=4), init_model(arch, seed=4), init_model(arch, seed=5)
    for w, w_again, w_other, fan_in in zip(first.weights, again.weights, other.weights, arch.layer_sizes):
        assert w.dtype == np.float32
        np.testing.assert_array_equal(w, w_again)
        assert not np.array_equal(w, w_other)
        assert np.all(np.abs(w) <= np.sqrt(6.0 / fan_in) * (1 + 1e-6))
    assert all(np.all(b == 0) for b in first.biases)
    assert all(np.all(m == 0) for m in first.weight_moments + first.bias_second_moments)


def test_model_rejects_misshapen_layers():
    arch = MlpArchitecture(3, (2,))
    with pytest.raises(ShapeMismatchError, match='Layer 1'):
        MlpModel(arch, [np.zeros((2, 3)), np.zeros((2, 3))], [np.zeros(2), np.zeros(2)])


def _identity_model():
    arch = MlpArchitecture(2, ())
    return MlpModel(arch, [np.eye(2)], [np.zeros(2)])


def test_forward_known_values():
    probabilities, _ = forward(_identity_model(), [[0.0, 0.0], [np.log(3.0), 0.0]])
    np.testing.assert_allclose(probabilities, [[0.5, 0.5], [0.75, 0.25]])
    assert cross_entropy(probabilities[:1], [1]) == pytest.approx(np.log(2.0))


def test_forward_checks_feature_count():
    model = init_model(MlpArchitecture(66, (4,)))
    with pytest.raises(ShapeMismatchError, match='expected 66 features per sample'):
        forward(model, np.zeros((3, 65)))


def test_softmax_is_shift_invariant_and_stable(rng):
    logits = rng.normal(size=(5, 2))
    np.testing.assert_allclose(softmax(logits + 1000.0), softmax(logits), rtol=1e-10)
    np.testing.assert_allclose(softmax(np.array([[1e4, 0.0]])), [[1.0, 0.0]])


def test_cross_entropy_matches_loop(rng):
    probabilities = softmax(rng.normal(size=(20, 2)))
    labels = rng.integers(1, 3, size=20)
    expected = -sum(np.log(p[label - 1]) for p, label in zip(probabilities, labels)) / 20
    assert cross_entropy(probabilities, labels) == pytest.approx(expected, rel=1e-12)


def test_cross_entropy_clamps_zero_probability():
    assert cross_entropy([[0.0, 1.0]], [1]) == pytest.approx(-np.log(PROBABILITY_FLOOR))
    assert cross_entropy([[1.0, 0.0]], [1]) == 0.0


def test_labels_must_be_class_codes():
    np.testing.assert_array_equal(class_indices([1, 2, 2], 2), [0, 1, 1])
    with pytest.raises(ValueError, match='Labels must lie in 1..2'):
        class_indices([0, 1], 2)


def _loss(model, features, labels):
    return cross_entropy(forward(model, features)[0], labels)


def test_backward_matches_finite_differences():
    h = 1e-6
    for seed in range(20):
        rng = np.random.default_rng(seed)
        model = init_model(MlpArchitecture(4, (5, 3)), seed=seed, dtype=np.float64)
        features, labels = rng.normal(size=(8, 4)), rng.integers(1, 3, size=8)
        _, cache = forward(model, features)
        gradients = backward(model, cache, labels)
        for params, grads in ((model.weights, gradients.weights), (model.biases, gradients.biases)):
            for param, grad in zip(params, grads):
                numeric = np.zeros_like(param)
                for index in np.ndindex(param.shape):
                    original = param[index]
                    param[index] = original + h
                    upper = _loss(model, features, labels)
                    param[index] = original - h
                    lower = _loss(model, features, labels)
                    param[index] = original
                    numeric[index] = (upper - lower) / (2 * h)
                np.testing.assert_allclose(grad, numeric, rtol=1e-4, atol=1e-7)


def test_zero_input_gives_zero_weight_gradients():
    model = init_model(MlpArchitecture(3, (4,)), dtype=np.float64)
    _, cache = forward(model, np.zeros((5, 3)))
    gradients = backward(model, cache, [1, 2, 1, 1, 2])
    for grad in gradients.weights:
        np.testing.assert_array_equal(grad, 0.0)
    np.testing.assert_allclose(gradients.biases[-1], [-0.1, 0.1])


def test_duplicated_batch_has_same_gradient(rng):
    model = init_model(MlpArchitecture(4, (6,)), seed=2, dtype=np.float64)
    features, labels = rng.normal(size=(3, 4)), np.array([1, 2, 2])
    single = backward(model, forward(model, features)[1], labels)
    doubled = backward(model, forward(model, np.vstack([features, features]))[1], np.tile(labels, 2))
    for a, b in zip(single.weights + single.biases, doubled.weights + doubled.biases):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_backward_checks_label_count():
    model = init_model(MlpArchitecture(2, (2,)))
    _, cache = forward(model, np.ones((3, 2)))
    with pytest.raises(ShapeMismatchError):
        backward(model, cache, [1, 2])


def _scalar_model():
    return MlpModel(MlpArchitecture(1, (), 1), [np.array([[0.0]])], [np.array([0.0])])


def test_first_adam_step_moves_by_learning_rate():
    model = _scalar_model()
    adam_step(model, Gradients([np.array([[1.0]])], [np.array([0.0])]), TrainConfig())
    assert model.step == 1
    assert model.weights[0][0, 0] == pytest.approx(-1e-4 / (1 + 1e-8), rel=1e-12)
    assert model.biases[0][0] == 0.0


def test_adam_with_zero_gradient_leaves_parameters():
    model = _scalar_model()
    for _ in range(3):
        adam_step(model, Gradients([np.array([[0.0]])], [np.array([0.0])]), TrainConfig())
    assert model.weights[0][0, 0] == 0.0 and model.step == 3


def test_adam_descends_a_quadratic():
    model = _scalar_model()
    model.weights[0][0, 0] = 1.0
    cfg = TrainConfig(learning_rate=0.005)
    trace = [1.0]
    for _ in range(100):
        theta = model.weights[0][0, 0]
        adam_step(model, Gradients([np.array([[2 * theta]])], [np.array([0.0])]), cfg)
        trace.append(model.weights[0][0, 0])
    assert abs(trace[-1]) < 0.9
    assert np.all(np.diff(trace) < 0)


def test_predict_is_row_independent(rng):
    model = init_model(MlpArchitecture(5, (7, 3)), seed=9, dtype=np.float64)
    features = rng.normal(size=(30, 5))
    batched = predict(model, features)
    assert set(batched.tolist()) <= {1, 2}
    np.testing.assert_array_equal(batched, [predict(model, row)[0] for row in features])


def _trained_model():
    model = init_model(MlpArchitecture(4, (3,)), seed=1)
    features = np.random.default_rng(0).normal(size=(6, 4))
    gradients = backward(model, forward(model, features)[1], [1, 2, 1, 2, 2, 1])
    return adam_step(model, gradients, TrainConfig())


def test_checkpoint_round_trip(tmp_path):
    model = _trained_model()
    cfg = TrainConfig(epochs=7, learning_rate=1e-3, batch_size=32, seed=4)
    path = save_checkpoint(model, cfg, tmp_path / 'model.ckpt', extra={'grid': [430.0, 434.0]})
    loaded, loaded_cfg, extra = load_checkpoint(path)
    assert loaded.architecture == model.architecture
    assert loaded_cfg == cfg
    assert loaded.step == 1
    assert extra == {'grid': [430.0, 434.0]}
    for name in ('weights', 'biases', 'weight_moments', 'weight_second_moments', 'bias_moments',
                 'bias_second_moments'):
        for a, b in zip(getattr(loaded, name), getattr(model, name)):
            np.testing.assert_array_equal(a, b)


def test_checkpoint_bytes_are_stable(tmp_path):
    model = _trained_model()
    first = save_checkpoint(model, TrainConfig(), tmp_path / 'a.ckpt')
    loaded, cfg, _ = load_checkpoint(first)
    second = save_checkpoint(loaded, cfg, tmp_path / 'b.ckpt')
    assert first.read_bytes() == second.read_bytes()


def test_checkpoint_layout(tmp_path):
    model = _trained_model()
    raw = save_checkpoint(model, TrainConfig(), tmp_path / 'm.ckpt').read_bytes()
    blob = np.frombuffer(raw[raw.index(b'\n') + 1:], dtype='<f4')
    assert blob.size == 3 * (12 + 3) + 3 * (6 + 2)
    np.testing.assert_array_equal(blob[:12], model.weights[0].reshape(-1))
    np.testing.assert_array_equal(blob[12:15], model.biases[0])
    np.testing.assert_array_equal(blob[15:27], model.weight_moments[0].reshape(-1))


def test_checkpoint_rejects_truncation_and_foreign_format(tmp_path):
    path = save_checkpoint(_trained_model(), TrainConfig(), tmp_path / 'm.ckpt')
    raw = path.read_bytes()
    path.write_bytes(raw[:-4])
    with pytest.raises(ContainerFormatError, match='payload length mismatch'):
        load_checkpoint(path)
    path.write_bytes(raw.replace(b'spectral-fusion-mlp/1', b'other-format/9'))
    with pytest.raises(ContainerFormatError, match='^format:'):
        load_checkpoint(path)


@pytest.mark.parametrize('kwargs', [{'epochs': 0}, {'batch_size': 0}, {'learning_rate': 0.0}])
def test_train_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_architecture_parsing():
    assert MlpArchitecture.parse('66', 66).hidden_sizes == (128, 256, 512, 256)
    assert MlpArchitecture.parse('custom:8,4', 10) == MlpArchitecture(10, (8, 4))
    with pytest.raises(ShapeMismatchError):
        MlpArchitecture.parse('103', 66)
    with pytest.raises(ValueError, match='unknown architecture'):
        MlpArchitecture.parse('resnet', 66)
    with pytest.raises(ValueError, match='integer widths'):
        MlpArchitecture.parse('custom:a,b', 66)
