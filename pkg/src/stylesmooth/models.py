"""Toy base classifier, its softmax output and ERM training.

Smoothing only needs black-box access: anything with ``predict(X)`` is a
labels-only classifier; adding ``predict_proba(X)`` makes it soft-capable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .checkpoint import load_checkpoint, make_checkpoint, parse_checkpoint
from .errors import CapabilityError, InputError
from .nn import Network, he_uniform, sgd_step
from .tensor import Tensor, conv2d, log_softmax, no_grad, pick, relu, softmax, tmean
from .validation import check_image, check_images, check_labels


def seed_streams(seed: int, n: int) -> list[np.random.Generator]:
    """Independent generators derived from one integer seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


class ClassifierNet(Network):
    """conv (k x k) -> relu -> global average pool -> dense -> logits."""

    def __init__(self, n_channels: int, n_classes: int, n_filters: int = 8, kernel_size: int = 3,
                 rng: np.random.Generator | None = None):
        super().__init__()
        rng = np.random.default_rng(0) if rng is None else rng
        self.n_channels = n_channels
        self.n_classes = n_classes
        self.n_filters = n_filters
        self.kernel_size = kernel_size
        k = kernel_size
        self._param("conv0.weight", he_uniform(rng, (n_filters, n_channels, k, k), n_channels * k * k))
        self._param("conv0.bias", np.zeros(n_filters))
        self._param("dense.weight", he_uniform(rng, (n_filters, n_classes), n_filters))
        self._param("dense.bias", np.zeros(n_classes))

    def arch(self) -> dict:
        return {"n_channels": self.n_channels, "n_classes": self.n_classes,
                "n_filters": self.n_filters, "kernel_size": self.kernel_size}

    def forward(self, X) -> Tensor:
        h = relu(conv2d(X, self.params["conv0.weight"], self.params["conv0.bias"]))
        pooled = tmean(h, axis=(2, 3))
        return pooled @ self.params["dense.weight"] + self.params["dense.bias"]


def cross_entropy(logits: Tensor, y) -> Tensor:
    """Mean of ``-log softmax(logits)[y]`` over the batch."""
    return -tmean(pick(log_softmax(logits, axis=1), y))


@dataclass
class TrainConfig:
    steps: int = 2500
    lr: float = 0.05
    batch_size: int = 16
    seed: int = 0


def train_erm(net: ClassifierNet, X, y, config: TrainConfig) -> tuple[ClassifierNet, list[float]]:
    """Minibatch SGD on the pooled cross-entropy; returns the net and per-step losses."""
    X = check_images(X, allow_empty=True)
    if X.shape[0] == 0:
        raise InputError("train_erm: empty training set")
    y = check_labels(y, X.shape[0], net.n_classes)
    batch_rng = seed_streams(config.seed, 2)[0]
    params = net.parameters()
    history = []
    for _ in range(config.steps):
        idx = batch_rng.integers(0, X.shape[0], size=config.batch_size)
        loss = cross_entropy(net(X[idx]), y[idx])
        loss.backward()
        sgd_step(params, config.lr)
        history.append(loss.item())
    return net, history


class ToyClassifier(ClassifierMixin, BaseEstimator):
    """ERM-trained convolutional classifier with a scikit-learn interface.

    Parameters
    ----------
    n_classes : int or None
        Number of classes K. Inferred as ``max(y) + 1`` when None.
    n_filters, kernel_size : int
        Width and kernel of the single conv stage.
    steps, learning_rate, batch_size : training budget for plain SGD.
    random_state : int
        Seeds initialisation and minibatch sampling.
    """

    def __init__(self, n_classes=None, n_filters=8, kernel_size=3, steps=2500,
                 learning_rate=0.05, batch_size=16, random_state=0):
        self.n_classes = n_classes
        self.n_filters = n_filters
        self.kernel_size = kernel_size
        self.steps = steps
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.random_state = random_state

    capabilities = "softmax"

    def _init_net(self, X, y) -> None:
        n_classes = self.n_classes if self.n_classes is not None else int(y.max()) + 1
        if n_classes < 2:
            raise InputError("need at least two classes")
        init_rng = seed_streams(self.random_state, 3)[2]
        self.net_ = ClassifierNet(X.shape[1], n_classes, self.n_filters, self.kernel_size, init_rng)
        self.classes_ = np.arange(n_classes)
        self.input_shape_ = tuple(X.shape[1:])

    def _train_config(self) -> TrainConfig:
        return TrainConfig(self.steps, self.learning_rate, self.batch_size, self.random_state)

    def fit(self, X, y):
        X = check_images(X)
        y = check_labels(y, X.shape[0], self.n_classes)
        self._init_net(X, y)
        _, self.history_ = train_erm(self.net_, X, y, self._train_config())
        return self

    def _check_input(self, X) -> np.ndarray:
        check_is_fitted(self, "net_")
        X = check_images(X, self.net_.n_channels)
        if tuple(X.shape[1:]) != self.input_shape_:
            raise InputError(f"expected images of shape {self.input_shape_}, got {tuple(X.shape[1:])}")
        return X

    def decision_function(self, X) -> np.ndarray:
        X = self._check_input(X)
        with no_grad():
            return self.net_(X).data

    def predict_proba(self, X) -> np.ndarray:
        X = self._check_input(X)
        with no_grad():
            return softmax(self.net_(X), axis=1).data

    def predict(self, X) -> np.ndarray:
        # np.argmax returns the first maximum: lowest-index tie-break
        return np.argmax(self.predict_proba(X), axis=1)

    def to_checkpoint(self) -> dict:
        check_is_fitted(self, "net_")
        arch = dict(self.net_.arch(), input_shape=list(self.input_shape_), estimator=type(self).__name__)
        return make_checkpoint("classifier", arch, self.net_.state_dict())

    @classmethod
    def from_checkpoint(cls, doc_or_path) -> "ToyClassifier":
        doc = (parse_checkpoint(doc_or_path, "classifier") if isinstance(doc_or_path, dict)
               else load_checkpoint(doc_or_path, "classifier"))
        arch = doc["arch"]
        clf = cls(n_classes=arch["n_classes"], n_filters=arch["n_filters"], kernel_size=arch["kernel_size"])
        clf.net_ = ClassifierNet(arch["n_channels"], arch["n_classes"], arch["n_filters"], arch["kernel_size"])
        clf.net_.load_state_dict(doc["tensors"])
        clf.net_.freeze()
        clf.classes_ = np.arange(arch["n_classes"])
        clf.input_shape_ = tuple(arch["input_shape"])
        return clf


class LabelOnlyClassifier:
    """Hides the softmax of a wrapped classifier, leaving only hard labels."""

    capabilities = "labels"

    def __init__(self, classifier):
        self._classifier = classifier

    def predict(self, X) -> np.ndarray:
        return np.asarray(self._classifier.predict(X))


def has_softmax(f) -> bool:
    return callable(getattr(f, "predict_proba", None))


def soft_predict(f, x) -> np.ndarray:
    """Softmax vector of a soft-capable classifier on one image."""
    if not has_softmax(f):
        raise CapabilityError(f"{type(f).__name__} exposes labels only; no softmax available")
    x = check_image(x)
    return np.asarray(f.predict_proba(x[None]))[0]


def predict(f, x) -> int:
    """Hard label on one image; argmax of the softmax when one is exposed."""
    x = check_image(x)
    if has_softmax(f):
        return int(np.argmax(soft_predict(f, x)))
    return int(np.asarray(f.predict(x[None]))[0])
