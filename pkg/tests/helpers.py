"""Shared test utilities: independent scalar oracles and tiny model builders.

The oracles here deliberately avoid the library's vectorized code paths;
they recompute layer outputs coordinate by coordinate with plain Python
floats so agreement is evidence, not tautology.
"""

import math

import numpy as np

from cueflow.corpus import CueVocab, Vocab
from cueflow.model import Bundle, ModelDims


def scalar_sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def scalar_lstm_step(x, h_prev, c_prev, w_x, w_h, b, hidden):
    """Straight-line per-coordinate LSTM step with gate order [i|f|o|g]."""
    z = [0.0] * (4 * hidden)
    for j in range(4 * hidden):
        acc = b[j]
        for k in range(len(x)):
            acc += x[k] * w_x[k][j]
        for k in range(hidden):
            acc += h_prev[k] * w_h[k][j]
        z[j] = acc
    h_out = [0.0] * hidden
    c_out = [0.0] * hidden
    for j in range(hidden):
        i = scalar_sigmoid(z[j])
        f = scalar_sigmoid(z[hidden + j])
        o = scalar_sigmoid(z[2 * hidden + j])
        g = math.tanh(z[3 * hidden + j])
        c = f * c_prev[j] + i * g
        c_out[j] = c
        h_out[j] = o * math.tanh(c)
    return h_out, c_out


def scalar_lstm_sequence(xs, w_x, w_h, b, hidden):
    h = [0.0] * hidden
    c = [0.0] * hidden
    for x in xs:
        h, c = scalar_lstm_step(x, h, c, w_x, w_h, b, hidden)
    return h, c


def tiny_vocab(extra=()):
    words = ["alpha", "beta", "gamma", "delta", "eps", "zeta"] + list(extra)
    return Vocab(words, {w: 20 for w in words})


def tiny_cue_vocab():
    return CueVocab(["alpha", "gamma", "eps"], {"alpha": 9, "gamma": 5, "eps": 2})


def tiny_bundle(seed=1, embed=3, hidden=4, mode="rlcw"):
    return Bundle.new(tiny_vocab(), tiny_cue_vocab(),
                      ModelDims(embed, hidden, hidden), seed=seed, mode=mode)


def unit_table(words, dim=4, seed=0):
    """Embedding table of distinct unit vectors."""
    from cueflow.vectors import EmbeddingTable

    rng = np.random.default_rng(seed)
    vectors = {}
    for w in words:
        v = rng.normal(size=dim)
        vectors[w] = v / np.linalg.norm(v)
    return EmbeddingTable(vectors, dim)
