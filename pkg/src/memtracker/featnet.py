"""Fully-convolutional feature extractor shared by the object and search
branches, plus the train-time auxiliary classification head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class ConvLayer:
    kernel: int
    stride: int
    channels: int
    relu: bool = True
    pool: tuple | None = None  # (kind "max"|"avg", size, stride)


@dataclass(frozen=True)
class FeatureNetConfig:
    object_size: int
    search_size: int
    layers: tuple[ConvLayer, ...]
    num_classes: int = 30
    cls_hidden: int = 1024

    @property
    def channels(self):
        return self.layers[-1].channels

    def spatial_out(self, size):
        """Forward shape arithmetic for one spatial extent."""
        for ly in self.layers:
            if ly.kernel > size:
                raise ValueError(f"layer kernel {ly.kernel} exceeds map extent {size}")
            size = (size - ly.kernel) // ly.stride + 1
            if ly.pool is not None:
                _, pn, ps = ly.pool
                if pn > size:
                    raise ValueError(f"pool window {pn} exceeds map extent {size}")
                size = (size - pn) // ps + 1
        return size

    @property
    def template_size(self):
        return self.spatial_out(self.object_size)

    @property
    def search_out(self):
        return self.spatial_out(self.search_size)

    @property
    def feature_stride(self):
        s = 1
        for ly in self.layers:
            s *= ly.stride
            if ly.pool is not None:
                s *= ly.pool[2]
        return s


def _glorot(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def init_feature_net(cfg: FeatureNetConfig, seed, dtype=np.float32):
    """Deterministic parameter dict keyed by 'featnet/...' names."""
    if cfg.template_size < 1 or cfg.search_out < cfg.template_size:
        raise ValueError("config produces degenerate feature shapes")
    rng = np.random.default_rng(seed)
    params = {}
    cin = 3
    for i, ly in enumerate(cfg.layers):
        shape = (ly.kernel, ly.kernel, cin, ly.channels)
        fan_in = ly.kernel * ly.kernel * cin
        fan_out = ly.kernel * ly.kernel * ly.channels
        params[f"featnet/conv{i}_w"] = Tensor(_glorot(rng, shape, fan_in, fan_out, dtype), requires_grad=True)
        params[f"featnet/conv{i}_b"] = Tensor(np.zeros(ly.channels, dtype=dtype), requires_grad=True)
        cin = ly.channels
    n, c = cfg.template_size, cfg.channels
    flat = n * n * c
    params["featnet/cls_w1"] = Tensor(_glorot(rng, (cfg.cls_hidden, flat), flat, cfg.cls_hidden, dtype), requires_grad=True)
    params["featnet/cls_b1"] = Tensor(np.zeros(cfg.cls_hidden, dtype=dtype), requires_grad=True)
    params["featnet/cls_w2"] = Tensor(_glorot(rng, (cfg.num_classes, cfg.cls_hidden), cfg.cls_hidden, cfg.num_classes, dtype), requires_grad=True)
    params["featnet/cls_b2"] = Tensor(np.zeros(cfg.num_classes, dtype=dtype), requires_grad=True)
    return params


def extract_features(patch, params, cfg: FeatureNetConfig):
    """Run a (H,W,3) image patch through the shared convolutional stack.

    The object and search branches call this with identical parameters; only
    the input size differs.
    """
    if not isinstance(patch, Tensor):
        patch = Tensor(patch)
    h = patch.data.shape[0]
    if patch.data.ndim != 3 or patch.data.shape[2] != 3 or patch.data.shape[1] != h:
        raise ValueError(f"expected a square (S,S,3) patch, got {patch.data.shape}")
    if h not in (cfg.object_size, cfg.search_size):
        raise ValueError(f"patch size {h} matches neither object ({cfg.object_size}) nor search ({cfg.search_size}) input")
    x = patch
    for i, ly in enumerate(cfg.layers):
        x = ad.conv2d(x, params[f"featnet/conv{i}_w"], ly.stride)
        x = ad.add(x, params[f"featnet/conv{i}_b"])
        if ly.relu:
            x = ad.relu(x)
        if ly.pool is not None:
            kind, pn, ps = ly.pool
            x = (ad.max_pool if kind == "max" else ad.avg_pool)(x, pn, ps)
    return x


def classify_object(template, params, cfg: FeatureNetConfig):
    """Class probabilities for an object template (training only)."""
    n, c = cfg.template_size, cfg.channels
    if template.data.shape != (n, n, c):
        raise ValueError(f"template shape {template.data.shape} != ({n},{n},{c})")
    flat = ad.reshape(template, (n * n * c,))
    hidden = ad.relu(ad.dense_affine(flat, params["featnet/cls_w1"], params["featnet/cls_b1"]))
    logits = ad.dense_affine(hidden, params["featnet/cls_w2"], params["featnet/cls_b2"])
    return ad.softmax(logits)


def param_count(cfg: FeatureNetConfig, include_head=False):
    total = 0
    cin = 3
    for ly in cfg.layers:
        total += ly.kernel * ly.kernel * cin * ly.channels + ly.channels
        cin = ly.channels
    if include_head:
        flat = cfg.template_size ** 2 * cfg.channels
        total += cfg.cls_hidden * flat + cfg.cls_hidden
        total += cfg.num_classes * cfg.cls_hidden + cfg.num_classes
    return total
