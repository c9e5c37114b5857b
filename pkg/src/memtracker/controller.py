"""LSTM controller and its memory-control heads.

The controller consumes the attended feature vector and emits, from its new
hidden state: a read key and read strength for content addressing, the
channel-wise residual gate, the skip/read/allocate write gates and the decay
rate used while writing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

GATES = ("i", "f", "o", "n")  # input, forget, output, candidate


@dataclass
class ControlSignals:
    read_key: Tensor       # (C,)
    read_strength: Tensor  # (1,), >= 1
    residual_gate: Tensor  # (C,), entries in (0,1)
    write_gates: Tensor    # (3,) simplex: skip, read, allocate
    decay_rate: Tensor     # (1,), in (0,1)


def init_controller(hidden, channels, seed, dtype=np.float32):
    """Parameter dict keyed 'ctrl/...'; forget-gate norm bias starts at 1."""
    rng = np.random.default_rng(seed)

    def glorot(shape, fi, fo):
        lim = np.sqrt(6.0 / (fi + fo))
        return Tensor(rng.uniform(-lim, lim, size=shape).astype(dtype), requires_grad=True)

    p = {}
    for g in GATES:
        p[f"ctrl/wx_{g}"] = glorot((hidden, channels), channels, hidden)
        p[f"ctrl/wh_{g}"] = glorot((hidden, hidden), hidden, hidden)
        p[f"ctrl/ln_{g}_gain"] = Tensor(np.ones(hidden, dtype=dtype), requires_grad=True)
        bias = np.ones(hidden, dtype=dtype) if g == "f" else np.zeros(hidden, dtype=dtype)
        p[f"ctrl/ln_{g}_bias"] = Tensor(bias, requires_grad=True)
    heads = {"key": channels, "beta": 1, "res": channels, "gates": 3, "decay": 1}
    for name, width in heads.items():
        p[f"ctrl/w_{name}"] = glorot((width, hidden), hidden, width)
        p[f"ctrl/b_{name}"] = Tensor(np.zeros(width, dtype=dtype), requires_grad=True)
    # initial-state maps from the pooled initial template
    p["ctrl/w_h0"] = glorot((hidden, channels), channels, hidden)
    p["ctrl/b_h0"] = Tensor(np.zeros(hidden, dtype=dtype), requires_grad=True)
    p["ctrl/w_c0"] = glorot((hidden, channels), channels, hidden)
    p["ctrl/b_c0"] = Tensor(np.zeros(hidden, dtype=dtype), requires_grad=True)
    return p


def init_state(template, params):
    """(h0, c0) from the spatial mean of the initial template, two tanh maps."""
    n = template.data.shape[0]
    pooled = ad.reshape(ad.avg_pool(template, n, 1), (template.data.shape[2],))
    h0 = ad.tanh(ad.dense_affine(pooled, params["ctrl/w_h0"], params["ctrl/b_h0"]))
    c0 = ad.tanh(ad.dense_affine(pooled, params["ctrl/w_c0"], params["ctrl/b_c0"]))
    return h0, c0


def lstm_step(x, h_prev, c_prev, params, mode="eval", keep_prob=0.8, rng=None):
    """One LSTM update with layer-normed gate pre-activations.

    Dropout (inverted, on the output h only) runs in train mode; eval mode is
    deterministic.
    """
    acts = {}
    for g in GATES:
        pre = ad.add(ad.matmul(params[f"ctrl/wx_{g}"], x), ad.matmul(params[f"ctrl/wh_{g}"], h_prev))
        acts[g] = ad.layer_norm(pre, params[f"ctrl/ln_{g}_gain"], params[f"ctrl/ln_{g}_bias"])
    i = ad.sigmoid(acts["i"])
    f = ad.sigmoid(acts["f"])
    o = ad.sigmoid(acts["o"])
    n = ad.tanh(acts["n"])
    c = ad.add(ad.mul(f, c_prev), ad.mul(i, n))
    h = ad.mul(o, ad.tanh(c))
    if mode == "train" and keep_prob < 1.0:
        if rng is None:
            raise ValueError("train-mode lstm_step needs an rng for dropout")
        mask = (rng.random(h.data.shape) < keep_prob).astype(h.data.dtype) / keep_prob
        h = ad.mul(h, Tensor(mask))
    return h, c


def control_signals(h, params):
    """Map the hidden state to all memory-control outputs."""
    key = ad.dense_affine(h, params["ctrl/w_key"], params["ctrl/b_key"])
    beta = ad.add(ad.softplus(ad.dense_affine(h, params["ctrl/w_beta"], params["ctrl/b_beta"])), 1.0)
    res = ad.sigmoid(ad.dense_affine(h, params["ctrl/w_res"], params["ctrl/b_res"]))
    gates = ad.softmax(ad.dense_affine(h, params["ctrl/w_gates"], params["ctrl/b_gates"]))
    decay = ad.sigmoid(ad.dense_affine(h, params["ctrl/w_decay"], params["ctrl/b_decay"]))
    return ControlSignals(read_key=key, read_strength=beta, residual_gate=res,
                          write_gates=gates, decay_rate=decay)
