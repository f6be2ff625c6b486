"""
Pooling layers and the margin softmax
=====================================

Utterance-level pooling of a frame sequence, then the loss on the pooled
vector with its analytic gradient checked numerically.
"""

import numpy as np

from tdsv.losses import LossConfig, aam_softmax, finite_difference_grad, relative_error
from tdsv.pooling import AttentivePoolingParams, attention_weights, attentive_pool, tstp

rng = np.random.default_rng(1)
frames = rng.normal(size=(20, 8))

# statistics pooling: mean and standard deviation per feature
print("tstp length:", tstp(frames).shape[0])

# attentive pooling: one scalar score per frame, softmax, weighted projection
params = AttentivePoolingParams.random(in_dim=8, out_dim=6, rng=rng)
alpha = attention_weights(frames, params)
print("weights sum to", alpha.sum(), "largest on frame", int(alpha.argmax()))
emb = attentive_pool(frames, params)

# 7 classes with 2 prototypes each; the 3 hardest wrong classes get an extra margin
cfg = LossConfig(scale=32, margin=0.2, subcenters=2, topk=3, penalty_margin=0.06)
weights = rng.normal(size=(7, 2, 6))
res = aam_softmax(emb, weights, 4, cfg)
print("loss:", res.loss)

num = finite_difference_grad(lambda v: aam_softmax(v, weights, 4, cfg).loss, emb, 1e-4)
print("gradient relative error:", relative_error(res.grad_x, num))
