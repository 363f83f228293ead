"""Shared test utilities: finite-difference gradient checks and stub stylizers/classifiers."""

from __future__ import annotations

import numpy as np

from stylesmooth.evaluation import ScoredPrediction
from stylesmooth.oracles import finite_diff_grad, relative_error
from stylesmooth.tensor import Tensor


def analytic_grads(fn, arrays):
    leaves = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    out = fn(*leaves)
    out.backward()
    return [np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad for leaf in leaves]


def numeric_grads(fn, arrays, h=1e-6):
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    grads = []
    for i in range(len(arrays)):
        def loss(p, i=i):
            args = [Tensor(p if j == i else a) for j, a in enumerate(arrays)]
            return fn(*args).item()
        grads.append(finite_diff_grad(loss, arrays[i], h))
    return grads


def max_grad_error(fn, arrays, h=1e-6) -> float:
    """Largest norm-wise relative error between analytic and central-difference gradients."""
    return max(relative_error(a, n) for a, n in zip(analytic_grads(fn, arrays), numeric_grads(fn, arrays, h)))


def network_grad_error(net, loss_fn, h=1e-6) -> float:
    """Relative error of the backprop gradient of ``loss_fn()`` w.r.t. every parameter of ``net``."""
    names = [name for name, _ in net.named_parameters()]
    net.unfreeze()
    for p in net.parameters():
        p.grad = None
    loss_fn().backward()
    analytic = np.concatenate([net.params[n].grad.ravel() for n in names])
    net.freeze()
    shapes = [net.params[n].data.shape for n in names]
    flat = np.concatenate([net.params[n].data.ravel() for n in names])

    def loss_at(p):
        offset = 0
        for n, shape in zip(names, shapes):
            size = int(np.prod(shape))
            net.params[n].data = p[offset:offset + size].reshape(shape)
            offset += size
        return loss_fn().item()

    numeric = finite_diff_grad(loss_at, flat, h)
    loss_at(flat)
    return relative_error(analytic, numeric)


class StyleIsOutput:
    """Stylizer stub: the stylized image is the style image plus the content."""

    def __init__(self):
        self.calls = 0

    def transform(self, X, S):
        self.calls += len(X)
        return np.asarray(S) + np.asarray(X)


class ThresholdClassifier:
    """Class = index of the first mean-pixel bin; counts queries."""

    def __init__(self, edges):
        self.edges = np.asarray(edges)
        self.classes_ = np.arange(len(edges) + 1)
        self.queries = 0

    def predict(self, X):
        X = np.asarray(X)
        self.queries += len(X)
        return np.searchsorted(self.edges, X.mean(axis=(1, 2, 3)))

    def predict_proba(self, X):
        labels = self.predict(X)
        out = np.full((len(labels), len(self.classes_)), 0.1 / (len(self.classes_) - 1))
        out[np.arange(len(labels)), labels] = 0.9
        return out


def P(score, correct, i=0):
    """Scored prediction with true label 1 that is right iff ``correct``."""
    return ScoredPrediction(str(i), 1, 1 if correct else 0, score)
