"""AdaIN style transfer on a small convolutional encoder/decoder pair.

The encoder is trained once as the bottom half of a reconstruction
autoencoder and then frozen. The decoder is trained to invert AdaIN
features: content loss on the final encoder stage, style loss on the
channel statistics of every selected stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .checkpoint import load_checkpoint, make_checkpoint, parse_checkpoint
from .errors import DimensionError, InputError
from .models import seed_streams
from .nn import ConvStack, sgd_step
from .tensor import EPS, Tensor, as_tensor, channel_stats, no_grad, reshape, square, tmean, tsum
from .validation import check_images

DEFAULT_WIDTHS = (8, 16, 16)


class Encoder(ConvStack):
    def __init__(self, n_channels: int = 3, widths=DEFAULT_WIDTHS, kernel_size: int = 3,
                 rng: np.random.Generator | None = None):
        rng = np.random.default_rng(0) if rng is None else rng
        super().__init__([n_channels, *widths], kernel_size, rng, prefix="enc")

    @property
    def n_channels(self) -> int:
        return self.widths[0]

    def final(self, x) -> Tensor:
        return self.forward(x)

    def arch(self) -> dict:
        return {"n_channels": self.widths[0], "widths": self.widths[1:], "kernel_size": self.kernel_size}


class Decoder(ConvStack):
    """Mirror of the encoder; the last conv maps back to image channels without a relu."""

    def __init__(self, n_channels: int = 3, widths=DEFAULT_WIDTHS, kernel_size: int = 3,
                 rng: np.random.Generator | None = None, init_bound: float = 0.05):
        rng = np.random.default_rng(0) if rng is None else rng
        mirrored = [*reversed(widths), n_channels]
        super().__init__(mirrored, kernel_size, rng, prefix="dec", init_bound=init_bound, final_linear=True)

    def arch(self) -> dict:
        return {"n_channels": self.widths[-1], "widths": self.widths[-2::-1], "kernel_size": self.kernel_size}


def _expand(stat: Tensor) -> Tensor:
    return reshape(stat, stat.shape + (1, 1))


def adain_from_stats(content_feat, style_mean, style_std, eps: float = EPS) -> Tensor:
    """Re-normalise ``content_feat`` to the given per-channel mean and std."""
    content_feat = as_tensor(content_feat)
    mu_c, sigma_c = channel_stats(content_feat, eps)
    return _expand(as_tensor(style_std)) * (content_feat - _expand(mu_c)) / _expand(sigma_c) + _expand(as_tensor(style_mean))


def adain(content_feat, style_feat, eps: float = EPS) -> Tensor:
    """t = sigma(s) * (c - mu(c)) / sigma(c) + mu(s), per channel.

    Spatial sizes may differ; channel counts (and batch sizes, if batched) must agree.
    """
    content_feat, style_feat = as_tensor(content_feat), as_tensor(style_feat)
    if content_feat.ndim < 3 or style_feat.ndim < 3 or content_feat.shape[-3] != style_feat.shape[-3]:
        raise DimensionError(f"adain: channel mismatch between {content_feat.shape} and {style_feat.shape}")
    mu_s, sigma_s = channel_stats(style_feat, eps)
    return adain_from_stats(content_feat, mu_s, sigma_s, eps)


def stylize(x_content, x_style, enc: Encoder, dec: Decoder) -> Tensor:
    """h(adain(g(x_content), g(x_style)))."""
    x_content, x_style = as_tensor(x_content), as_tensor(x_style)
    for name, x in (("content", x_content), ("style", x_style)):
        if x.ndim not in (3, 4) or x.shape[-3] != enc.n_channels:
            raise DimensionError(f"stylize: {name} image shape {x.shape} does not fit a {enc.n_channels}-channel encoder")
    return dec(adain(enc.final(x_content), enc.final(x_style)))


def _per_sample_mean(value: Tensor, trailing: int) -> Tensor:
    """Sum over the trailing axes; average over a leading batch axis if present."""
    axes = tuple(range(-trailing, 0))
    total = tsum(value, axis=axes)
    return tmean(total) if total.ndim else total


def content_loss(stylized, t, enc: Encoder) -> Tensor:
    """||g(stylized) - t||^2 (batch mean of per-image sums when batched)."""
    feat = enc.final(stylized)
    t = as_tensor(t)
    if feat.shape != t.shape:
        raise DimensionError(f"content_loss: features {feat.shape} vs target {t.shape}")
    return _per_sample_mean(square(feat - t), 3)


def style_loss(x_style, stylized, enc: Encoder, layers=None) -> Tensor:
    """Sum over selected stages of squared distances between channel means and stds."""
    layers = check_layers(layers, enc.n_stages)
    x_style, stylized = as_tensor(x_style), as_tensor(stylized)
    if x_style.ndim != stylized.ndim or x_style.shape[:-2] != stylized.shape[:-2]:
        raise DimensionError(f"style_loss: style {x_style.shape} vs stylized {stylized.shape}")
    return _stats_distance(enc.stages(x_style), enc.stages(stylized), layers)


def _stats_distance(style_stages, out_stages, layers) -> Tensor:
    total = None
    for i in layers:
        mu_s, sd_s = channel_stats(style_stages[i])
        mu_o, sd_o = channel_stats(out_stages[i])
        term = _per_sample_mean(square(mu_s - mu_o), 1) + _per_sample_mean(square(sd_s - sd_o), 1)
        total = term if total is None else total + term
    return total


def check_layers(layers, n_stages: int) -> tuple[int, ...]:
    if layers is None:
        return tuple(range(n_stages))
    layers = tuple(int(i) for i in layers)
    if not layers:
        raise InputError("style layer set must be non-empty")
    bad = [i for i in layers if not 0 <= i < n_stages]
    if bad:
        raise InputError(f"style layer indices {bad} out of range for {n_stages} encoder stages")
    return layers


@dataclass
class EncoderConfig:
    steps: int = 300
    lr: float = 0.05
    batch_size: int = 16
    seed: int = 0


@dataclass
class DecoderConfig:
    steps: int = 2000
    lr: float = 2e-3
    style_weight: float = 10.0
    batch_size: int = 8
    seed: int = 0
    layers: tuple[int, ...] | None = None
    max_grad_norm: float | None = 50.0


def train_encoder(images, enc: Encoder, config: EncoderConfig) -> tuple[Encoder, list[float]]:
    """Fit ``enc`` as the bottom of an autoencoder (mean squared reconstruction), then freeze it."""
    X = check_images(images, allow_empty=True)
    if X.shape[0] == 0:
        raise InputError("train_encoder: empty image set")
    init_rng, batch_rng = seed_streams(config.seed, 2)
    aux = Decoder(enc.n_channels, enc.widths[1:], enc.kernel_size, init_rng, init_bound=None)
    params = enc.parameters() + aux.parameters()
    enc.unfreeze()
    history = []
    for _ in range(config.steps):
        batch = X[batch_rng.integers(0, X.shape[0], size=config.batch_size)]
        loss = tmean(square(aux(enc(batch)) - batch))
        loss.backward()
        sgd_step(params, config.lr, max_grad_norm=10.0)
        history.append(loss.item())
    enc.freeze()
    return enc, history


def train_decoder(content_set, style_set, enc: Encoder, dec: Decoder,
                  config: DecoderConfig) -> tuple[Decoder, list[float]]:
    """SGD on content_loss + style_weight * style_loss over random (content, style) pairs."""
    C = check_images(content_set, allow_empty=True)
    S = check_images(style_set, allow_empty=True)
    if C.shape[0] == 0 or S.shape[0] == 0:
        raise InputError("train_decoder: content and style sets must be non-empty")
    layers = check_layers(config.layers, enc.n_stages)
    enc.freeze()
    dec.unfreeze()
    rng = seed_streams(config.seed, 2)[1]
    params = dec.parameters()
    history = []
    for _ in range(config.steps):
        xc = C[rng.integers(0, C.shape[0], size=config.batch_size)]
        xs = S[rng.integers(0, S.shape[0], size=config.batch_size)]
        with no_grad():
            style_stages = enc.stages(xs)
            t = adain(enc.final(xc), style_stages[-1])
        out = dec(t)
        out_stages = enc.stages(out)
        loss = _per_sample_mean(square(out_stages[-1] - t), 3)
        if config.style_weight:
            loss = loss + config.style_weight * _stats_distance(style_stages, out_stages, layers)
        loss.backward()
        sgd_step(params, config.lr, config.max_grad_norm)
        history.append(loss.item())
    dec.freeze()
    return dec, history


class AdaINStylizer(TransformerMixin, BaseEstimator):
    """Encoder/decoder style transfer fitted on source images.

    ``fit(X)`` trains the encoder as an autoencoder and then the decoder with X
    serving as both content and style pool. ``transform(X, styles)`` stylizes
    each image of X with the matching style image (a single style broadcasts).
    """

    def __init__(self, widths=DEFAULT_WIDTHS, kernel_size=3, encoder_steps=300, encoder_lr=0.05,
                 decoder_steps=2000, decoder_lr=2e-3, style_weight=10.0, batch_size=8,
                 style_layers=None, random_state=0):
        self.widths = widths
        self.kernel_size = kernel_size
        self.encoder_steps = encoder_steps
        self.encoder_lr = encoder_lr
        self.decoder_steps = decoder_steps
        self.decoder_lr = decoder_lr
        self.style_weight = style_weight
        self.batch_size = batch_size
        self.style_layers = style_layers
        self.random_state = random_state

    def fit(self, X, y=None, styles=None):
        X = check_images(X)
        S = X if styles is None else check_images(styles, X.shape[1])
        enc_rng, dec_rng = seed_streams(self.random_state, 2)
        self.encoder_ = Encoder(X.shape[1], tuple(self.widths), self.kernel_size, enc_rng)
        _, self.encoder_history_ = train_encoder(
            X, self.encoder_, EncoderConfig(self.encoder_steps, self.encoder_lr, 16, self.random_state))
        self.decoder_ = Decoder(X.shape[1], tuple(self.widths), self.kernel_size, dec_rng)
        config = DecoderConfig(self.decoder_steps, self.decoder_lr, self.style_weight, self.batch_size,
                               self.random_state, self.style_layers)
        _, self.decoder_history_ = train_decoder(X, S, self.encoder_, self.decoder_, config)
        return self

    def style_stats(self, styles) -> tuple[np.ndarray, np.ndarray]:
        """Final-stage channel mean and std of each style image (N x F each)."""
        check_is_fitted(self, "decoder_")
        S = check_images(styles, self.encoder_.n_channels)
        with no_grad():
            mu, sd = channel_stats(self.encoder_.final(S))
        return mu.data, sd.data

    def content_features(self, X) -> np.ndarray:
        check_is_fitted(self, "decoder_")
        X = check_images(X, self.encoder_.n_channels)
        with no_grad():
            return self.encoder_.final(X).data

    def decode_with_stats(self, features, style_mean, style_std) -> np.ndarray:
        """Decode content features re-normalised to the given style statistics."""
        check_is_fitted(self, "decoder_")
        with no_grad():
            t = adain_from_stats(features, np.asarray(style_mean), np.asarray(style_std))
            return self.decoder_(t).data

    def transform_with_stats(self, X, style_mean, style_std) -> np.ndarray:
        return self.decode_with_stats(self.content_features(X), style_mean, style_std)

    def transform(self, X, styles=None):
        check_is_fitted(self, "decoder_")
        X = check_images(X, self.encoder_.n_channels)
        S = X if styles is None else check_images(styles, self.encoder_.n_channels)
        if S.shape[0] not in (1, X.shape[0]):
            raise DimensionError(f"need one style or one per image; got {S.shape[0]} styles for {X.shape[0]} images")
        mu, sd = self.style_stats(S)
        return self.transform_with_stats(X, mu, sd)

    def to_checkpoints(self) -> tuple[dict, dict]:
        check_is_fitted(self, "decoder_")
        return (make_checkpoint("encoder", self.encoder_.arch(), self.encoder_.state_dict()),
                make_checkpoint("decoder", self.decoder_.arch(), self.decoder_.state_dict()))

    @classmethod
    def from_checkpoints(cls, encoder_doc, decoder_doc) -> "AdaINStylizer":
        encoder_doc = (parse_checkpoint(encoder_doc, "encoder") if isinstance(encoder_doc, dict)
                       else load_checkpoint(encoder_doc, "encoder"))
        decoder_doc = (parse_checkpoint(decoder_doc, "decoder") if isinstance(decoder_doc, dict)
                       else load_checkpoint(decoder_doc, "decoder"))
        ea, da = encoder_doc["arch"], decoder_doc["arch"]
        model = cls(widths=tuple(ea["widths"]), kernel_size=ea["kernel_size"])
        model.encoder_ = Encoder(ea["n_channels"], tuple(ea["widths"]), ea["kernel_size"])
        model.encoder_.load_state_dict(encoder_doc["tensors"])
        model.encoder_.freeze()
        model.decoder_ = Decoder(da["n_channels"], tuple(da["widths"]), da["kernel_size"])
        model.decoder_.load_state_dict(decoder_doc["tensors"])
        model.decoder_.freeze()
        return model
