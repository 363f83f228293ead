"""Neural style smoothing training: ERM plus stylized-misclassification and style-consistency losses."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, InputError
from .models import ClassifierNet, ToyClassifier, cross_entropy, seed_streams
from .nn import sgd_step
from .stylizer import adain_from_stats
from .tensor import Tensor, as_tensor, clamp_min, log, log_softmax, no_grad, pick, reshape, softmax, tmean, tsum
from .validation import check_images, check_labels

PROB_FLOOR = 1e-12


@dataclass
class NssConfig:
    k: int = 4
    w_aug: float = 1.0
    w_cons: float = 1.0
    batch_size: int = 16
    steps: int = 2500
    lr: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k (styles per sample) must be >= 1, got {self.k}")
        if self.w_aug < 0 or self.w_cons < 0:
            raise ConfigError("loss weights must be non-negative")


@dataclass
class LossReport:
    erm: float
    stylized_aug: float
    kl: float
    cross_entropy: float
    total: float

    @property
    def consistency(self) -> float:
        return self.kl + self.cross_entropy


def kl_divergence(p, q, floor: float = PROB_FLOOR) -> Tensor:
    """sum_i p_i (log p_i - log q_i) over the last axis, with 0 log 0 = 0 and floored logs."""
    p, q = as_tensor(p), as_tensor(q)
    return tsum(p * (log(clamp_min(p, floor)) - log(clamp_min(q, floor))), axis=-1)


def consistency_terms(probs, y, floor: float = PROB_FLOOR) -> tuple[Tensor, Tensor]:
    """KL and label cross-entropy parts of the consistency loss.

    ``probs`` is B x k x K (softmax of each of the k stylizations of each sample);
    both terms are averaged over the batch.
    """
    probs = as_tensor(probs)
    if probs.ndim == 2:
        probs = reshape(probs, (1, *probs.shape))
        y = np.atleast_1d(y)
    mean_p = tmean(probs, axis=1)  # B x K
    b, _, n_classes = probs.shape
    avg = reshape(mean_p, (b, 1, n_classes))
    kl = tmean(kl_divergence(avg, probs, floor))
    ce = -tmean(log(clamp_min(pick(mean_p, y), floor)))
    return kl, ce


def _net(model) -> ClassifierNet:
    return model.net_ if isinstance(model, ToyClassifier) else model


def _stylize_batch(x, styles, stylizer) -> np.ndarray:
    X = check_images(x)
    S = check_images(styles, X.shape[1])
    k = S.shape[0]
    return stylizer.transform(np.repeat(X, k, axis=0), np.tile(S, (X.shape[0], 1, 1, 1)))


def stylized_aug_loss(x, y, styles, stylizer, model) -> Tensor:
    """(1/k) sum_j CE(F(h(adain(g(x), g(style_j)))), y); the stylizer is treated as fixed."""
    S = check_images(styles)
    stylized = _stylize_batch(x, S, stylizer)
    labels = np.repeat(np.atleast_1d(y), S.shape[0])
    return cross_entropy(_net(model)(stylized), labels)


def consistency_loss(x, y, styles, stylizer, model) -> Tensor:
    """Mean KL from the average stylized softmax to each stylized softmax, plus CE of the average."""
    S = check_images(styles)
    stylized = _stylize_batch(x, S, stylizer)
    probs = softmax(_net(model)(stylized), axis=1)
    y = np.atleast_1d(y)
    probs = reshape(probs, (len(y), S.shape[0], probs.shape[-1]))
    kl, ce = consistency_terms(probs, y)
    return kl + ce


def train_nss(net: ClassifierNet, X, y, stylizer, cfg: NssConfig, styles=None) -> tuple[ClassifierNet, list[LossReport]]:
    """Minibatch SGD on erm + w_aug * stylized_aug + w_cons * consistency.

    Styles for each sample are redrawn every step from ``styles`` (default: the
    pooled training images). Minibatches come from the same stream as
    :func:`train_erm`, so zero weights reproduce ERM step for step.
    """
    X = check_images(X, allow_empty=True)
    if X.shape[0] == 0:
        raise InputError("train_nss: empty training set")
    y = check_labels(y, X.shape[0], net.n_classes)
    S = X if styles is None else check_images(styles, X.shape[1])
    batch_rng, style_rng = seed_streams(cfg.seed, 2)

    # frozen stylizer: encode every content image and style statistic once
    enc, dec = stylizer.encoder_, stylizer.decoder_
    with no_grad():
        content_feats = enc.final(X).data
    style_mu, style_sd = stylizer.style_stats(S)

    params = net.parameters()
    history = []
    k = cfg.k
    for _ in range(cfg.steps):
        idx = batch_rng.integers(0, X.shape[0], size=cfg.batch_size)
        sidx = style_rng.integers(0, S.shape[0], size=(cfg.batch_size, k)).reshape(-1)
        with no_grad():
            t = adain_from_stats(np.repeat(content_feats[idx], k, axis=0), style_mu[sidx], style_sd[sidx])
            stylized = dec(t).data
        yb = y[idx]
        erm = cross_entropy(net(X[idx]), yb)
        logits = net(stylized)
        aug = -tmean(pick(log_softmax(logits, axis=1), np.repeat(yb, k)))
        probs = reshape(softmax(logits, axis=1), (cfg.batch_size, k, net.n_classes))
        kl, ce = consistency_terms(probs, yb)
        total = erm + cfg.w_aug * aug + cfg.w_cons * (kl + ce)
        total.backward()
        sgd_step(params, cfg.lr)
        history.append(LossReport(erm.item(), aug.item(), kl.item(), ce.item(), total.item()))
    return net, history


def write_loss_history(path, history: list[LossReport]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "erm", "stylized_aug", "kl", "cross_entropy", "total"])
        for step, r in enumerate(history):
            writer.writerow([step, repr(r.erm), repr(r.stylized_aug), repr(r.kl), repr(r.cross_entropy), repr(r.total)])


class NSSClassifier(ToyClassifier):
    """:class:`ToyClassifier` trained with the style-smoothing losses.

    ``stylizer`` must be a fitted :class:`~stylesmooth.stylizer.AdaINStylizer`.
    ``k`` styles are drawn per sample and step from the training images (or
    from ``styles`` passed to ``fit``).
    """

    def __init__(self, stylizer=None, k=4, w_aug=1.0, w_cons=1.0, n_classes=None, n_filters=8,
                 kernel_size=3, steps=2500, learning_rate=0.05, batch_size=16, random_state=0):
        super().__init__(n_classes=n_classes, n_filters=n_filters, kernel_size=kernel_size, steps=steps,
                         learning_rate=learning_rate, batch_size=batch_size, random_state=random_state)
        self.stylizer = stylizer
        self.k = k
        self.w_aug = w_aug
        self.w_cons = w_cons

    def fit(self, X, y, styles=None):
        if self.stylizer is None:
            raise InputError("NSSClassifier needs a fitted stylizer")
        X = check_images(X)
        y = check_labels(y, X.shape[0], self.n_classes)
        self._init_net(X, y)
        cfg = NssConfig(self.k, self.w_aug, self.w_cons, self.batch_size, self.steps, self.learning_rate,
                        self.random_state)
        _, self.loss_history_ = train_nss(self.net_, X, y, self.stylizer, cfg, styles)
        self.history_ = [r.total for r in self.loss_history_]
        return self


def report_dict(r: LossReport) -> dict:
    return dict(asdict(r), consistency=r.consistency)
