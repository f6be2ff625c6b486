"""
Cosine scoring with AS-Norm
===========================

Enroll a few models, score trials, then normalize against a cohort.
"""

import numpy as np

from tdsv.backend import ASNormConfig, asnorm, build_cohort, enroll, score_trials
from tdsv.data import EmbeddingStore, ModelDefinition, Trial

rng = np.random.default_rng(0)
dim = 64

# two speakers, four utterances each, clustered around a speaker mean
means = rng.normal(size=(2, dim))
ids, vecs = [], []
for s in range(2):
    for u in range(4):
        ids.append(f"s{s}_u{u}")
        vecs.append(means[s] + 0.3 * rng.normal(size=dim))
store = EmbeddingStore(ids, np.array(vecs, dtype=np.float32))

# a model is the mean of its three L2-normalized enrollment embeddings
models = [ModelDefinition(f"m{s}", 0, tuple(f"s{s}_u{u}" for u in range(3))) for s in range(2)]
model_vecs = enroll(models, store)

trials = [Trial("m0", "s0_u3"), Trial("m0", "s1_u3"), Trial("m1", "s1_u3"), Trial("m1", "s0_u3")]
raw = score_trials(trials, model_vecs, store)

# cohort: 40 unrelated speakers, two utterances each, averaged per speaker
c_ids = [f"c{i}" for i in range(80)]
cohort_store = EmbeddingStore(c_ids, rng.normal(size=(80, dim)).astype(np.float32))
cohort = build_cohort(cohort_store, {c: f"spk{i // 2}" for i, c in enumerate(c_ids)})

normed = asnorm(raw, model_vecs, store, cohort, ASNormConfig(top_n=10))
for r, n in zip(raw, normed):
    print(f"{r.model_id} vs {r.test_utt_id}: raw {r.score:+.4f}  as-norm {n.score:+.3f}")
