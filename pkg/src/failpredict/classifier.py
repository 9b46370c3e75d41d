"""Fully connected multi-class classifier written directly on numpy.

Hidden layers are affine + ReLU, the output layer is affine + softmax over
``f_max + 1`` classes (the last class is the invalid failure). Training
minimizes cross-entropy with Adam over shuffled mini-batches.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_features, check_labels

MODEL_FORMAT_VERSION = 1

# decided class for an under-confident valid-class argmax
INVALID = -1

# floor applied to probabilities inside log()
PROB_FLOOR = 1e-12


class TrainingDivergedError(ArithmeticError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"non-finite loss {value!r} in epoch {epoch}")
        self.epoch = epoch
        self.value = value


@dataclass(frozen=True)
class MLPArchitecture:
    n_features: int
    n_classes: int
    hidden_layers: int = 5
    hidden_width: int | None = None

    def __post_init__(self):
        if self.hidden_layers < 1:
            raise ValueError("need at least one hidden layer")
        if self.n_features < 1 or self.n_classes < 2:
            raise ValueError("need n_features >= 1 and n_classes >= 2")
        if self.hidden_width is None:
            object.__setattr__(self, "hidden_width", self.n_features)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.n_features] + [self.hidden_width] * self.hidden_layers + [self.n_classes]

    @classmethod
    def for_catalog(cls, catalog, hidden_layers: int = 5) -> "MLPArchitecture":
        return cls(catalog.schema.e_max, catalog.n_classes, hidden_layers)


@dataclass(frozen=True)
class TrainConfig:
    n_epochs: int = 40
    m_batch: int = 100
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    d_thres: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_epochs < 1:
            raise ValueError("n_epochs must be >= 1")
        if self.m_batch < 1:
            raise ValueError("m_batch must be >= 1")
        if not 0 < self.d_thres < 1:
            raise ValueError(f"d_thres must lie in (0, 1), got {self.d_thres}")
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ValueError("learning_rate and epsilon must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")


@dataclass(eq=False)
class TrainedModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    architecture: MLPArchitecture
    config: TrainConfig | None = None
    loss_trace: list[float] = field(default_factory=list)
    mapping: dict | None = None

    def __post_init__(self):
        sizes = self.architecture.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("parameter count does not match the architecture")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise ValueError(f"layer {i} has shapes {W.shape}/{b.shape}, expected "
                                 f"{(sizes[i], sizes[i + 1])}/{(sizes[i + 1],)}")

    @property
    def n_features(self) -> int:
        return self.architecture.n_features

    @property
    def n_classes(self) -> int:
        return self.architecture.n_classes

    @property
    def invalid_index(self) -> int:
        return self.n_classes - 1

    def header(self) -> dict:
        return {
            "format": "failpredict.model",
            "version": MODEL_FORMAT_VERSION,
            "architecture": asdict(self.architecture),
            "config": asdict(self.config) if self.config is not None else None,
            "seed": self.config.seed if self.config is not None else None,
            "loss_trace": list(self.loss_trace),
            "mapping": self.mapping,
        }

    def save(self, path) -> None:
        arrays = {"header": np.array(json.dumps(self.header()))}
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"W{i}"] = W
            arrays[f"b{i}"] = b
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> "TrainedModel":
        with np.load(Path(path), allow_pickle=False) as npz:
            header = json.loads(str(npz["header"]))
            if header.get("format") != "failpredict.model":
                raise ValueError(f"{path} is not a model file")
            if header.get("version") != MODEL_FORMAT_VERSION:
                raise ValueError(f"unsupported model version {header.get('version')}")
            arch = MLPArchitecture(**header["architecture"])
            n_layers = len(arch.layer_sizes) - 1
            weights = [npz[f"W{i}"] for i in range(n_layers)]
            biases = [npz[f"b{i}"] for i in range(n_layers)]
        config = TrainConfig(**header["config"]) if header.get("config") else None
        return cls(weights, biases, arch, config, header.get("loss_trace", []), header.get("mapping"))

    def equals(self, other: "TrainedModel") -> bool:
        return self.header() == other.header() and all(
            np.array_equal(a, b)
            for a, b in zip(self.weights + self.biases, other.weights + other.biases)
        )

    def save_loss_trace(self, path) -> None:
        """Two columns, epoch and mean cross-entropy, for any plotting tool."""
        lines = ["# epoch loss"] + [f"{i} {v!r}" for i, v in enumerate(self.loss_trace, start=1)]
        Path(path).write_text("\n".join(lines) + "\n")


def init_params(arch: MLPArchitecture, rng: np.random.Generator):
    # He-style uniform, bound sqrt(6 / fan_in); biases start at zero
    sizes = arch.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(weights, biases, X):
    """Return (layer inputs, hidden pre-activations, probabilities)."""
    inputs, pre = [], []
    a = X
    for W, b in zip(weights[:-1], biases[:-1]):
        inputs.append(a)
        z = a @ W + b
        pre.append(z)
        a = np.maximum(z, 0.0)
    inputs.append(a)
    return inputs, pre, softmax(a @ weights[-1] + biases[-1])


def _backward(weights, inputs, pre, probs, Y):
    """Gradients of the batch-mean cross-entropy."""
    n = probs.shape[0]
    delta = (probs - Y) / n
    grad_w = [None] * len(weights)
    grad_b = [None] * len(weights)
    for layer in range(len(weights) - 1, -1, -1):
        grad_w[layer] = inputs[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer:
            delta = (delta @ weights[layer].T) * (pre[layer - 1] > 0)
    return grad_w, grad_b


def cross_entropy(probs, labels) -> float:
    """Summed cross-entropy ``-sum_i sum_k y_ik log p_ik`` over a batch."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    labels = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    if probs.shape != labels.shape:
        raise ValueError(f"probabilities {probs.shape} and labels {labels.shape} differ in shape")
    return float(-(labels * np.log(np.maximum(probs, PROB_FLOOR))).sum())


loss = cross_entropy


class Adam:
    def __init__(self, learning_rate=0.001, beta1=0.9, beta2=0.999, epsilon=1e-7):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        lr_t = self.learning_rate * np.sqrt(1 - self.beta2 ** self.t) / (1 - self.beta1 ** self.t)
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g * g)
            # epsilon-hat form, as in the keras/tensorflow Adam
            p -= lr_t * m / (np.sqrt(v) + self.epsilon)


def _onehot(y: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((y.shape[0], n_classes))
    out[np.arange(y.shape[0]), y] = 1.0
    return out


def fit_mlp(X, y, arch: MLPArchitecture, config: TrainConfig, mapping=None) -> TrainedModel:
    """Train from scratch; ``y`` holds class indices."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != arch.n_features:
        raise ValueError(f"X has {X.shape[1]} features, architecture expects {arch.n_features}")
    Y = _onehot(np.asarray(y), arch.n_classes)
    rng = np.random.default_rng(config.seed)
    weights, biases = init_params(arch, rng)
    params = weights + biases
    opt = Adam(config.learning_rate, config.beta1, config.beta2, config.epsilon)
    n = X.shape[0]
    trace = []
    for epoch in range(1, config.n_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        # overflow shows up as a non-finite loss below; no need for numpy warnings too
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, config.m_batch):
                idx = order[start:start + config.m_batch]
                inputs, pre, probs = _forward(weights, biases, X[idx])
                total += cross_entropy(probs, Y[idx])
                gw, gb = _backward(weights, inputs, pre, probs, Y[idx])
                opt.step(params, gw + gb)
        mean_loss = total / n
        if not np.isfinite(mean_loss) or not all(np.isfinite(p).all() for p in params):
            raise TrainingDivergedError(epoch, mean_loss)
        trace.append(mean_loss)
    return TrainedModel(weights, biases, arch, config, trace, mapping)


def train(dataset, arch: MLPArchitecture, config: TrainConfig) -> TrainedModel:
    """Train on the training split of a :class:`~failpredict.synth.Dataset`."""
    if dataset.e_max != arch.n_features or dataset.n_classes != arch.n_classes:
        raise ValueError(
            f"dataset is {dataset.e_max} features / {dataset.n_classes} classes, architecture is "
            f"{arch.n_features} / {arch.n_classes}"
        )
    mapping = dataset.table.to_dict() if dataset.table is not None else None
    return fit_mlp(dataset.X_train, dataset.y_train, arch, config, mapping)


def forward(model: TrainedModel, x) -> np.ndarray:
    """Class probabilities for one input vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.n_features or x.ndim not in (1, 2):
        raise ValueError(f"input has shape {x.shape}, model expects {model.n_features} features")
    return _forward(model.weights, model.biases, np.atleast_2d(x))[2].reshape(
        x.shape[:-1] + (model.n_classes,)
    )


def decide(probs: np.ndarray, d_thres: float) -> tuple[np.ndarray, np.ndarray]:
    """Return (decided, argmax) for rows of probabilities.

    The invalid class is the last column. A valid-class argmax below
    ``d_thres`` is demoted to INVALID.
    """
    probs = np.atleast_2d(probs)
    top = probs.argmax(axis=1)  # first maximum wins ties
    confident = probs[np.arange(len(top)), top] >= d_thres
    decided = np.where(confident | (top == probs.shape[1] - 1), top, INVALID)
    return decided, top


@dataclass(frozen=True)
class Prediction:
    probabilities: np.ndarray
    decided_class: int
    argmax_class: int

    @property
    def is_invalid(self) -> bool:
        return self.decided_class == INVALID or self.decided_class == len(self.probabilities) - 1

    def one_hot(self) -> np.ndarray:
        """One-hot over ``f_max + 1`` classes; INVALID decisions map to the invalid class."""
        out = np.zeros(len(self.probabilities), dtype=np.int64)
        out[len(out) - 1 if self.is_invalid else self.decided_class] = 1
        return out


def predict(model: TrainedModel, x, d_thres: float = 0.5) -> Prediction:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("predict takes a single feature vector")
    probs = forward(model, x)
    decided, top = decide(probs, d_thres)
    return Prediction(probs, int(decided[0]), int(top[0]))


def count_errors(decided: np.ndarray, y: np.ndarray, invalid_index: int) -> int:
    is_invalid = (decided == INVALID) | (decided == invalid_index)
    correct = np.where(y == invalid_index, is_invalid, decided == y)
    return int((~correct).sum())


def evaluate(model: TrainedModel, X, y, d_thres: float = 0.5) -> float:
    """Percentage of misclassified rows.

    Rows of the invalid class count as correct when the decision is either
    the invalid class or INVALID.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y, _ = check_labels(y, X.shape[0], model.n_classes)
    if X.shape[0] == 0:
        raise ValueError("cannot evaluate on an empty test set")
    decided, _ = decide(forward(model, X), d_thres)
    return 100.0 * count_errors(decided, y, model.invalid_index) / X.shape[0]


def parameter_gradients(model: TrainedModel, x, label: int):
    """Analytic gradients of the single-example cross-entropy."""
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    Y = _onehot(np.array([label]), model.n_classes)
    inputs, pre, probs = _forward(model.weights, model.biases, X)
    return _backward(model.weights, inputs, pre, probs, Y)


def gradient_check(model: TrainedModel, x, label: int, perturbation: float = 1e-5,
                   floor: float = 1e-6) -> float:
    """Max relative deviation between backprop and central differences.

    Deviation per parameter is ``|a - n| / max(|a|, |n|, floor)``; the floor
    keeps exactly-zero gradients (dead ReLU paths) from dividing by zero.
    """
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    Y = _onehot(np.array([label]), model.n_classes)
    gw, gb = parameter_gradients(model, x, label)
    worst = 0.0
    for params, grads in ((model.weights, gw), (model.biases, gb)):
        for p, g in zip(params, grads):
            flat, gflat = p.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + perturbation
                up = cross_entropy(_forward(model.weights, model.biases, X)[2], Y)
                flat[i] = orig - perturbation
                down = cross_entropy(_forward(model.weights, model.biases, X)[2], Y)
                flat[i] = orig
                numeric = (up - down) / (2 * perturbation)
                dev = abs(gflat[i] - numeric) / max(abs(gflat[i]), abs(numeric), floor)
                worst = max(worst, dev)
    return worst


class FailureClassifier(ClassifierMixin, BaseEstimator):
    """Multi-class failure classifier with an explicit invalid class.

    ``predict`` returns class indices; the last index is the invalid class
    and :data:`INVALID` (-1) marks a valid-class argmax whose probability
    falls below ``d_thres``.
    """

    def __init__(self, hidden_layers=5, hidden_width=None, n_epochs=40, batch_size=100,
                 learning_rate=0.001, beta1=0.9, beta2=0.999, epsilon=1e-7, d_thres=0.5,
                 n_classes=None, random_state=0):
        self.hidden_layers = hidden_layers
        self.hidden_width = hidden_width
        self.n_epochs = n_epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.d_thres = d_thres
        self.n_classes = n_classes
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(self.n_epochs, self.batch_size, self.learning_rate, self.beta1,
                           self.beta2, self.epsilon, self.d_thres, self.random_state or 0)

    def fit(self, X, y):
        X = check_features(X)
        y, n_classes = check_labels(y, X.shape[0], self.n_classes)
        arch = MLPArchitecture(X.shape[1], n_classes, self.hidden_layers, self.hidden_width)
        self.model_ = fit_mlp(X, y, arch, self._config())
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.arange(n_classes)
        self.loss_curve_ = list(self.model_.loss_trace)
        return self

    @classmethod
    def from_model(cls, model: TrainedModel, d_thres: float | None = None) -> "FailureClassifier":
        cfg = model.config or TrainConfig()
        est = cls(model.architecture.hidden_layers, model.architecture.hidden_width, cfg.n_epochs,
                  cfg.m_batch, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon,
                  cfg.d_thres if d_thres is None else d_thres, model.n_classes, cfg.seed)
        est.model_ = model
        est.n_features_in_ = model.n_features
        est.classes_ = np.arange(model.n_classes)
        est.loss_curve_ = list(model.loss_trace)
        return est

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return forward(self.model_, check_features(X, self.n_features_in_))

    def predict(self, X):
        return decide(self.predict_proba(X), self.d_thres)[0]

    def error_rate(self, X, y) -> float:
        check_is_fitted(self, "model_")
        return evaluate(self.model_, check_features(X, self.n_features_in_), y, self.d_thres)

    def score(self, X, y, sample_weight=None):
        """Accuracy under the same scoring rule as :meth:`error_rate`."""
        if sample_weight is not None:
            raise ValueError("sample weights are not supported")
        return 1.0 - self.error_rate(X, y) / 100.0
