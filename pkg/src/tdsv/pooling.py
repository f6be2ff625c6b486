"""Frame-to-utterance aggregation: statistics pooling and attentive pooling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _frames(frames) -> np.ndarray:
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"frames must be a non-empty (T, F) matrix, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("frames contain non-finite values")
    return x


def tstp(frames) -> np.ndarray:
    """Temporal statistics pooling.

    Returns ``[mean ‖ std]`` over the time axis (length ``2F``), with the
    population (divide-by-T) standard deviation.
    """
    x = _frames(frames)
    mean = x.mean(axis=0)
    std = np.sqrt(np.mean((x - mean) ** 2, axis=0))
    return np.concatenate([mean, std])


@dataclass(frozen=True)
class AttentivePoolingParams:
    """Weights of the attentive pooling layer.

    ``w1``/``b1`` map each frame to a scalar attention score; ``w2``/``b2``
    project each frame to the output space.
    """

    w1: np.ndarray  # (F,)
    b1: float
    w2: np.ndarray  # (Dout, F)
    b2: np.ndarray  # (Dout,)

    def __post_init__(self):
        w1 = np.asarray(self.w1, dtype=np.float64)
        w2 = np.asarray(self.w2, dtype=np.float64)
        b2 = np.asarray(self.b2, dtype=np.float64)
        if w1.ndim != 1:
            raise ValueError(f"w1 must be a vector, got shape {w1.shape}")
        if w2.ndim != 2 or w2.shape[1] != w1.shape[0]:
            raise ValueError(f"w2 must have shape (Dout, {w1.shape[0]}), got {w2.shape}")
        if b2.shape != (w2.shape[0],):
            raise ValueError(f"b2 must have shape ({w2.shape[0]},), got {b2.shape}")
        for name, arr in (("w1", w1), ("w2", w2), ("b2", b2), ("b1", np.float64(self.b1))):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "b2", b2)
        object.__setattr__(self, "b1", float(self.b1))

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[0]

    @classmethod
    def random(cls, in_dim: int, out_dim: int, rng=None, scale: float = 1.0):
        rng = np.random.default_rng(rng)
        return cls(
            w1=scale * rng.standard_normal(in_dim),
            b1=float(scale * rng.standard_normal()),
            w2=scale * rng.standard_normal((out_dim, in_dim)),
            b2=scale * rng.standard_normal(out_dim),
        )


def attention_weights(frames, params: AttentivePoolingParams) -> np.ndarray:
    x = _frames(frames)
    if x.shape[1] != params.in_dim:
        raise ValueError(f"frames have {x.shape[1]} features, params expect {params.in_dim}")
    e = x @ params.w1 + params.b1
    e = e - e.max()
    a = np.exp(e)
    return a / a.sum()


def attentive_pool(frames, params: AttentivePoolingParams, return_weights: bool = False):
    """Softmax-attention weighted sum of projected frames.

    Each frame gets a scalar score ``w1·h_t + b1``; the scores are softmaxed
    over time and used to average ``w2 h_t + b2``.  With
    ``return_weights=True`` returns ``(pooled, weights)``.
    """
    x = _frames(frames)
    alpha = attention_weights(x, params)
    values = x @ params.w2.T + params.b2
    pooled = alpha @ values
    if return_weights:
        return pooled, alpha
    return pooled
