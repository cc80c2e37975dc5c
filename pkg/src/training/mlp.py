from dataclasses import dataclass, field
import json
import logging
from pathlib import Path

import numpy as np

from src.config import DEFAULT_HIDDEN_103, DEFAULT_HIDDEN_66
from src.exceptions import ContainerFormatError, ShapeMismatchError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 'spectral-fusion-mlp/1'

# Clamp applied to probabilities before taking logs
PROBABILITY_FLOOR = 1e-12


@dataclass(frozen=True)
class MlpArchitecture:
    input_size: int
    hidden_sizes: tuple = DEFAULT_HIDDEN_66
    output_size: int = 2

    def __post_init__(self):
        object.__setattr__(self, 'hidden_sizes', tuple(int(h) for h in self.hidden_sizes))
        sizes = self.layer_sizes
        if any(s < 1 for s in sizes):
            raise ValueError(f"All layer sizes must be >= 1, got {sizes}")

    @property
    def layer_sizes(self) -> tuple:
        return (self.input_size, *self.hidden_sizes, self.output_size)

    @classmethod
    def for_bands(cls, bands: int) -> 'MlpArchitecture':
        """Default architecture for a band count: the 103-band variant for 103 inputs, the 66-band one otherwise."""
        hidden = DEFAULT_HIDDEN_103 if bands == 103 else DEFAULT_HIDDEN_66
        return cls(bands, hidden)

    @classmethod
    def parse(cls, text: str, bands: int | None = None) -> 'MlpArchitecture':
        """
        Parse ``66``, ``103`` or ``custom:H1,H2,...``; custom layouts take their input size from ``bands``.
        """
        if text in ('66', '103'):
            arch = cls.for_bands(int(text))
            if bands is not None and bands != arch.input_size:
                raise ShapeMismatchError(f"Architecture {text} expects {arch.input_size} bands, data has {bands}")
            return arch
        if text.startswith('custom:'):
            if bands is None:
                raise ValueError("Custom architectures need the input band count")
            try:
                hidden = tuple(int(h) for h in text[len('custom:'):].split(',') if h.strip())
            except ValueError:
                raise ValueError(f"Custom architecture must list integer widths, got {text!r}")
            return cls(bands, hidden)
        raise ValueError(f"unknown architecture {text!r} (expected 66, 103 or custom:H1,H2,...)")

    def to_dict(self) -> dict:
        return {'input_size': self.input_size, 'hidden_sizes': list(self.hidden_sizes),
                'output_size': self.output_size}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    learning_rate: float = 1e-4
    batch_size: int = 2048
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")

    def to_dict(self) -> dict:
        return {
            'epochs': self.epochs,
            'learning_rate': self.learning_rate,
            'batch_size': self.batch_size,
            'seed': self.seed,
            'beta1': self.beta1,
            'beta2': self.beta2,
            'epsilon': self.epsilon,
        }


@dataclass(eq=False)
class MlpModel:
    """
    Fully connected classifier with its Adam state.

    ``weights[i]`` has shape (fan_out, fan_in) and ``biases[i]`` shape (fan_out,); the moment lists
    mirror the parameter lists.
    """
    architecture: MlpArchitecture
    weights: list
    biases: list
    weight_moments: list = field(default_factory=list)
    weight_second_moments: list = field(default_factory=list)
    bias_moments: list = field(default_factory=list)
    bias_second_moments: list = field(default_factory=list)
    step: int = 0

    def __post_init__(self):
        sizes = self.architecture.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ShapeMismatchError(f"Expected {len(sizes) - 1} layers, got {len(self.weights)}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i + 1], sizes[i]) or b.shape != (sizes[i + 1],):
                raise ShapeMismatchError(
                    f"Layer {i}: weight {w.shape} / bias {b.shape}, expected {(sizes[i + 1], sizes[i])}")
        if not self.weight_moments:
            self.weight_moments = [np.zeros_like(w) for w in self.weights]
            self.weight_second_moments = [np.zeros_like(w) for w in self.weights]
            self.bias_moments = [np.zeros_like(b) for b in self.biases]
            self.bias_second_moments = [np.zeros_like(b) for b in self.biases]

    @property
    def dtype(self):
        return self.weights[0].dtype

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list:
        """Every parameter array in checkpoint order: W0, b0, W1, b1, ..."""
        return [p for pair in zip(self.weights, self.biases) for p in pair]


@dataclass(frozen=True)
class Gradients:
    weights: list
    biases: list


@dataclass(frozen=True, eq=False)
class ForwardCache:
    inputs: np.ndarray
    pre_activations: list
    activations: list
    probabilities: np.ndarray

    @property
    def batch_size(self) -> int:
        return self.inputs.shape[0]


def init_model(arch: MlpArchitecture, seed: int = 0, dtype=np.float32) -> MlpModel:
    """
    Weights drawn uniformly from ±sqrt(6 / fan_in) (He-uniform, suited to ReLU), biases zero.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    sizes = arch.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return MlpModel(arch, weights, biases)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _as_batch(model: MlpModel, features) -> np.ndarray:
    batch = np.asarray(features, dtype=model.dtype)
    if batch.ndim == 1:
        batch = batch[np.newaxis, :]
    if batch.ndim != 2 or batch.shape[1] != model.architecture.input_size:
        raise ShapeMismatchError(
            f"expected {model.architecture.input_size} features per sample, got {batch.shape[-1]}")
    return batch


def forward(model: MlpModel, features) -> tuple:
    """
    Returns the per-sample class probabilities and the cache backward() needs.
    """
    x = _as_batch(model, features)
    pre_activations, activations = [], [x]
    a = x
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w.T + b
        pre_activations.append(z)
        if i < model.n_layers - 1:
            a = np.maximum(z, 0)
            activations.append(a)
    probabilities = softmax(pre_activations[-1])
    return probabilities, ForwardCache(x, pre_activations, activations, probabilities)


def class_indices(labels, n_classes: int) -> np.ndarray:
    """Map class labels 1..n_classes onto output indices 0..n_classes-1."""
    labels = np.asarray(labels).reshape(-1)
    indices = labels.astype(np.int64) - 1
    if np.any((indices < 0) | (indices >= n_classes)):
        raise ValueError(f"Labels must lie in 1..{n_classes}, got {sorted(set(labels.tolist()))}")
    return indices


def cross_entropy(probabilities, labels) -> float:
    """Mean of -log p[true class] over the batch; labels are class codes 1 and 2."""
    probabilities = np.asarray(probabilities)
    indices = class_indices(labels, probabilities.shape[1])
    if indices.size != probabilities.shape[0]:
        raise ShapeMismatchError(f"{probabilities.shape[0]} predictions, {indices.size} labels")
    picked = probabilities[np.arange(indices.size), indices]
    return float(-np.mean(np.log(np.maximum(picked, PROBABILITY_FLOOR))))


def backward(model: MlpModel, cache: ForwardCache, labels) -> Gradients:
    """Exact gradients of the mean cross-entropy with respect to every weight and bias."""
    indices = class_indices(labels, model.architecture.output_size)
    if indices.size != cache.batch_size:
        raise ShapeMismatchError(f"cache holds {cache.batch_size} samples, got {indices.size} labels")

    delta = cache.probabilities.copy()
    delta[np.arange(indices.size), indices] -= 1
    delta /= indices.size

    weight_grads, bias_grads = [None] * model.n_layers, [None] * model.n_layers
    for i in reversed(range(model.n_layers)):
        weight_grads[i] = delta.T @ cache.activations[i]
        bias_grads[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i]) * (cache.pre_activations[i - 1] > 0)
    return Gradients(weight_grads, bias_grads)


def _adam_update(param, grad, m, v, cfg: TrainConfig, step: int):
    m *= cfg.beta1
    m += (1 - cfg.beta1) * grad
    v *= cfg.beta2
    v += (1 - cfg.beta2) * grad * grad
    m_hat = m / (1 - cfg.beta1 ** step)
    v_hat = v / (1 - cfg.beta2 ** step)
    param -= (cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)).astype(param.dtype)


def adam_step(model: MlpModel, gradients: Gradients, cfg: TrainConfig) -> MlpModel:
    """Apply one bias-corrected Adam update in place; returns the model."""
    if len(gradients.weights) != model.n_layers or len(gradients.biases) != model.n_layers:
        raise ShapeMismatchError(f"Expected gradients for {model.n_layers} layers")
    model.step += 1
    for i in range(model.n_layers):
        _adam_update(model.weights[i], gradients.weights[i], model.weight_moments[i],
                     model.weight_second_moments[i], cfg, model.step)
        _adam_update(model.biases[i], gradients.biases[i], model.bias_moments[i],
                     model.bias_second_moments[i], cfg, model.step)
    return model


def predict(model: MlpModel, features) -> np.ndarray:
    """Predicted class codes (1-based)."""
    probabilities, _ = forward(model, features)
    return probabilities.argmax(axis=1).astype(np.int32) + 1


def _checkpoint_arrays(model: MlpModel) -> list:
    arrays = []
    for i in range(model.n_layers):
        arrays += [model.weights[i], model.biases[i],
                   model.weight_moments[i], model.bias_moments[i],
                   model.weight_second_moments[i], model.bias_second_moments[i]]
    return arrays


def save_checkpoint(model: MlpModel, cfg: TrainConfig, path, extra: dict | None = None) -> Path:
    """
    One JSON header line followed by a little-endian float32 blob holding, per layer,
    W, b, their first moments and their second moments.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        'format': CHECKPOINT_FORMAT,
        'architecture': model.architecture.to_dict(),
        'step': model.step,
        'config': cfg.to_dict(),
        'dtype': 'f32',
        'byte_order': 'little-endian',
        'extra': extra or {},
    }
    blob = b''.join(np.ascontiguousarray(a, dtype='<f4').tobytes() for a in _checkpoint_arrays(model))
    path.write_bytes(json.dumps(header, sort_keys=True).encode('utf-8') + b'\n' + blob)
    logger.info("Saved checkpoint (step %d) to %s", model.step, path)
    return path


def load_checkpoint(path) -> tuple:
    """Returns (model, train config, extra metadata)."""
    raw = Path(path).read_bytes()
    line_end = raw.find(b'\n')
    if line_end < 0:
        raise ContainerFormatError('header', 'missing checkpoint header line')
    try:
        header = json.loads(raw[:line_end].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerFormatError('header', f"invalid JSON: {e}")
    if header.get('format') != CHECKPOINT_FORMAT:
        raise ContainerFormatError('format', f"unsupported checkpoint format {header.get('format')!r}")
    try:
        arch_fields = header['architecture']
        arch = MlpArchitecture(int(arch_fields['input_size']), tuple(arch_fields['hidden_sizes']),
                               int(arch_fields['output_size']))
        cfg = TrainConfig(**header['config'])
        step = int(header['step'])
    except (KeyError, TypeError) as e:
        raise ContainerFormatError('architecture', f"incomplete checkpoint header: {e}")

    values = np.frombuffer(raw[line_end + 1:], dtype='<f4')
    sizes = arch.layer_sizes
    shapes = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        shapes += [(fan_out, fan_in), (fan_out,)] * 3
    expected = sum(int(np.prod(s)) for s in shapes)
    if values.size != expected:
        raise ContainerFormatError('payload', f"payload length mismatch: expected {expected} values, got {values.size}")

    arrays, offset = [], 0
    for shape in shapes:
        count = int(np.prod(shape))
        arrays.append(values[offset:offset + count].reshape(shape).astype(np.float32))
        offset += count
    layers = [arrays[i:i + 6] for i in range(0, len(arrays), 6)]
    model = MlpModel(
        arch,
        weights=[layer[0] for layer in layers],
        biases=[layer[1] for layer in layers],
        weight_moments=[layer[2] for layer in layers],
        bias_moments=[layer[3] for layer in layers],
        weight_second_moments=[layer[4] for layer in layers],
        bias_second_moments=[layer[5] for layer in layers],
        step=step,
    )
    return model, cfg, header.get('extra', {})
