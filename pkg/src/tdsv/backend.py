"""Speaker scoring backend: enrollment averaging, cosine scoring, AS-Norm and
score fusion.

Trial scores use a fixed left-to-right summation over embedding dimensions,
so a score never depends on how trials are blocked or how many workers run.
Work is cut into fixed-size blocks and results are merged in input order.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import repeat
from typing import Mapping, Sequence

import numpy as np

from .data import ENROLL_UTTS, EmbeddingStore, ModelDefinition, ScoreRecord, Trial
from .errors import (
    DataError,
    DegenerateCentroidError,
    DegenerateCohortError,
    MisalignedScoresError,
    StrictEnrollmentError,
    UnresolvedIdError,
    ZeroNormError,
)

SCORE_BLOCK = 1 << 14
COHORT_BLOCK = 512


@dataclass(frozen=True)
class ModelEmbedding:
    model_id: str
    vector: np.ndarray


@dataclass(frozen=True)
class Cohort:
    speaker_ids: tuple[str, ...]
    centroids: np.ndarray  # (N, D) float64

    def __len__(self):
        return len(self.speaker_ids)

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True)
class ASNormConfig:
    top_n: int = 300
    epsilon_sigma: float = 1e-6

    def __post_init__(self):
        if self.top_n < 1:
            raise ValueError("top_n must be positive")
        if not self.epsilon_sigma > 0:
            raise ValueError("epsilon_sigma must be positive")


def default_workers() -> int:
    return os.cpu_count() or 1


def _run_blocks(fn, blocks, workers: int):
    if workers <= 1 or len(blocks) <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, blocks))


def _blocks(n: int, size: int) -> list[slice]:
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


# --- fixed-order kernels ------------------------------------------------------

def seq_dot(a_t: np.ndarray, b_t: np.ndarray) -> np.ndarray:
    """Column-wise dot products of two ``(D, n)`` arrays, summed over D
    strictly in order 0, 1, ..., D-1."""
    acc = a_t[0] * b_t[0]
    tmp = np.empty_like(acc)
    for k in range(1, a_t.shape[0]):
        np.multiply(a_t[k], b_t[k], out=tmp)
        acc += tmp
    return acc


def gathered_seq_dot(a_t: np.ndarray, b_t: np.ndarray, ai: np.ndarray, bi: np.ndarray) -> np.ndarray:
    """``seq_dot(a_t[:, ai], b_t[:, bi])`` without materializing the gathered
    ``(D, n)`` arrays; same summation order, same bits."""
    acc = a_t[0].take(ai) * b_t[0].take(bi)
    ta, tb = np.empty_like(acc), np.empty_like(acc)
    for k in range(1, a_t.shape[0]):
        a_t[k].take(ai, out=ta)
        b_t[k].take(bi, out=tb)
        ta *= tb
        acc += ta
    return acc


def seq_norms(rows: np.ndarray) -> np.ndarray:
    t = np.ascontiguousarray(np.asarray(rows, dtype=np.float64).T)
    return np.sqrt(seq_dot(t, t))


def _cosine_from_parts(dot, norm_a, norm_b):
    return np.clip(dot / (norm_a * norm_b), -1.0, 1.0)


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).reshape(-1, 1)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 1)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na, nb = seq_norms(a.T)[0], seq_norms(b.T)[0]
    if na == 0 or nb == 0:
        raise ZeroNormError("cosine of a zero-norm vector")
    return float(_cosine_from_parts(seq_dot(a, b)[0], na, nb))


def l2_normalize(rows, names: Sequence[str] | None = None) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    norms = np.linalg.norm(rows, axis=-1, keepdims=True)
    zero = np.flatnonzero(norms.reshape(-1) == 0)
    if zero.size:
        which = names[zero[0]] if names is not None else f"row {zero[0]}"
        raise ZeroNormError(f"zero-norm embedding {which}")
    return rows / norms


# --- enrollment and cohort ----------------------------------------------------

def _group_mean(store: EmbeddingStore, utts: Sequence[str]) -> np.ndarray:
    idx = [store.index_of(u) for u in utts]
    rows = store.matrix[idx].astype(np.float64)
    return l2_normalize(rows, utts).mean(axis=0)


def enroll(models: Sequence[ModelDefinition], store: EmbeddingStore, strict: bool = True) -> list[ModelEmbedding]:
    """Average the L2-normalized enrollment embeddings of each model."""
    out = []
    for m in models:
        if strict and len(m.enrollment_utts) != ENROLL_UTTS:
            raise StrictEnrollmentError(
                f"model {m.model_id}: {len(m.enrollment_utts)} enrollment utterances, strict mode needs {ENROLL_UTTS}")
        missing = [u for u in m.enrollment_utts if u not in store]
        if missing:
            raise UnresolvedIdError(f"model {m.model_id}: enrollment utterance {missing[0]!r} not in embeddings")
        out.append(ModelEmbedding(m.model_id, _group_mean(store, m.enrollment_utts)))
    return out


def build_cohort(store: EmbeddingStore, speaker_of: Mapping[str, str], min_norm: float = 1e-6) -> Cohort:
    """One centroid per speaker: mean of that speaker's L2-normalized
    embeddings.  Speakers are ordered by first appearance in ``speaker_of``."""
    groups: dict[str, list[str]] = {}
    for utt, spk in speaker_of.items():
        if utt not in store:
            raise UnresolvedIdError(f"cohort utterance {utt!r} not in embeddings")
        groups.setdefault(spk, []).append(utt)
    if not groups:
        raise DataError("empty cohort")
    ids, rows = [], []
    for spk, utts in groups.items():
        c = _group_mean(store, utts)
        if np.linalg.norm(c) < min_norm:
            raise DegenerateCentroidError(f"cohort speaker {spk!r} has a (near-)zero centroid")
        ids.append(spk)
        rows.append(c)
    centroids = np.stack(rows)
    centroids.flags.writeable = False
    return Cohort(tuple(ids), centroids)


def _records(mids, tids, scores: np.ndarray) -> list[ScoreRecord]:
    # tuple.__new__ skips the namedtuple constructor's Python frame
    return list(map(tuple.__new__, repeat(ScoreRecord), zip(mids, tids, scores.tolist())))


# --- trial scoring ------------------------------------------------------------

def _model_table(model_embeddings: Sequence[ModelEmbedding]):
    index = {}
    for i, me in enumerate(model_embeddings):
        if me.model_id in index:
            raise DataError(f"duplicate model embedding {me.model_id!r}")
        index[me.model_id] = i
    if not model_embeddings:
        return index, np.zeros((0, 0))
    return index, np.stack([np.asarray(me.vector, dtype=np.float64) for me in model_embeddings])


def _resolve(keys: Sequence[str], index: Mapping[str, int], what: str) -> np.ndarray:
    get = index.get
    idx = [get(k, -1) for k in keys]
    arr = np.fromiter(idx, dtype=np.intp, count=len(idx))
    bad = np.flatnonzero(arr < 0)
    if bad.size:
        i = int(bad[0])
        raise UnresolvedIdError(f"trial line {i + 1}: unknown {what} {keys[i]!r}")
    return arr


def _store_rows(store: EmbeddingStore, idx: np.ndarray):
    """Float64 copies of the store rows referenced by ``idx``, plus the
    inverse mapping into them."""
    uniq, inv = np.unique(idx, return_inverse=True)
    return store.matrix[uniq].astype(np.float64), inv, uniq


def pairwise_cosine(left: np.ndarray, right: np.ndarray, left_idx: np.ndarray, right_idx: np.ndarray,
                    workers: int = 1, left_names=None, right_names=None) -> np.ndarray:
    """Cosine of ``left[left_idx[i]]`` with ``right[right_idx[i]]`` for every i."""
    nl, nr = seq_norms(left), seq_norms(right)
    for norms, names in ((nl, left_names), (nr, right_names)):
        zero = np.flatnonzero(norms == 0)
        if zero.size:
            which = names[zero[0]] if names is not None else f"row {zero[0]}"
            raise ZeroNormError(f"zero-norm embedding {which}")
    lt = np.ascontiguousarray(left.T)
    rt = np.ascontiguousarray(right.T)

    def work(sl):
        li, ri = left_idx[sl], right_idx[sl]
        return _cosine_from_parts(gathered_seq_dot(lt, rt, li, ri), nl[li], nr[ri])

    parts = _run_blocks(work, _blocks(len(left_idx), SCORE_BLOCK), workers)
    return np.concatenate(parts) if parts else np.zeros(0)


def score_trials(trials: Sequence[Trial], model_embeddings: Sequence[ModelEmbedding], store: EmbeddingStore,
                 workers: int = 1) -> list[ScoreRecord]:
    """Cosine between each trial's model vector and test embedding, in trial
    order."""
    model_index, models = _model_table(model_embeddings)
    mids = [t.model_id for t in trials]
    tids = [t.test_utt_id for t in trials]
    mi = _resolve(mids, model_index, "model")
    ti = _resolve(tids, store.index, "test utterance")
    tests, tinv, tuniq = _store_rows(store, ti)
    scores = pairwise_cosine(models, tests, mi, tinv, workers,
                             left_names=[me.model_id for me in model_embeddings],
                             right_names=[store.ids[i] for i in tuniq])
    return _records(mids, tids, scores)


# --- AS-Norm ------------------------------------------------------------------

def top_n_stats(cohort_scores: np.ndarray, top_n: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise mean and population std of the ``top_n`` largest entries.

    The selected values are sorted before reduction so the result does not
    depend on the order :func:`numpy.partition` leaves them in.
    """
    s = np.atleast_2d(np.asarray(cohort_scores, dtype=np.float64))
    n = s.shape[1]
    if top_n > n:
        raise DataError(f"top_n={top_n} exceeds cohort size {n}")
    top = np.sort(np.partition(s, n - top_n, axis=1)[:, n - top_n:], axis=1)
    mu = top.mean(axis=1)
    sd = np.sqrt(np.mean((top - mu[:, None]) ** 2, axis=1))
    return mu, sd


def asnorm_from_cohort_scores(raw, enroll_cohort_scores, test_cohort_scores, top_n: int,
                              epsilon_sigma: float = 1e-6) -> np.ndarray:
    """Symmetric adaptive s-norm from precomputed cohort score matrices.

    Row i of each matrix holds the cohort scores for trial i's enrollment and
    test side respectively.
    """
    raw = np.asarray(raw, dtype=np.float64)
    mu_e, sd_e = top_n_stats(enroll_cohort_scores, top_n)
    mu_t, sd_t = top_n_stats(test_cohort_scores, top_n)
    for side, sd in (("enrollment", sd_e), ("test", sd_t)):
        bad = np.flatnonzero(sd < epsilon_sigma)
        if bad.size:
            raise DegenerateCohortError(f"trial {bad[0] + 1}: {side}-side cohort std {sd[bad[0]]:.3g} below epsilon")
    return 0.5 * ((raw - mu_e) / sd_e + (raw - mu_t) / sd_t)


def cohort_scores(vectors: np.ndarray, cohort: Cohort) -> np.ndarray:
    """Cosine of each row of ``vectors`` against every cohort centroid.

    One matrix product per call.  The BLAS kernel may round a row slightly
    differently depending on where it sits in the batch (last-ulp level), so
    callers that need reproducible bits must batch identically; the fixed
    blocks of :func:`embedding_cohort_stats` do.
    """
    c_unit = _unit_centroids(cohort)
    return l2_normalize(vectors) @ c_unit.T


_CENTROID_CACHE: dict[int, tuple[Cohort, np.ndarray]] = {}


def _unit_centroids(cohort: Cohort) -> np.ndarray:
    hit = _CENTROID_CACHE.get(id(cohort))
    if hit is not None and hit[0] is cohort:
        return hit[1]
    unit = np.ascontiguousarray(l2_normalize(cohort.centroids))
    _CENTROID_CACHE.clear()
    _CENTROID_CACHE[id(cohort)] = (cohort, unit)
    return unit


def embedding_cohort_stats(vectors: np.ndarray, cohort: Cohort, top_n: int, workers: int = 1):
    """Top-N cohort mean/std for each row of ``vectors``."""
    vectors = np.asarray(vectors, dtype=np.float64)

    def work(sl):
        return top_n_stats(cohort_scores(vectors[sl], cohort), top_n)

    parts = _run_blocks(work, _blocks(vectors.shape[0], COHORT_BLOCK), workers)
    if not parts:
        return np.zeros(0), np.zeros(0)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _check_sigma(sd, names, side, eps):
    bad = np.flatnonzero(sd < eps)
    if bad.size:
        i = int(bad[0])
        raise DegenerateCohortError(f"{side} embedding {names[i]!r}: top-N cohort std {sd[i]:.3g} below {eps:g}")


def asnorm(raw: Sequence[ScoreRecord], model_embeddings: Sequence[ModelEmbedding], store: EmbeddingStore,
           cohort: Cohort, config: ASNormConfig = ASNormConfig(), workers: int = 1,
           cache: bool = True) -> list[ScoreRecord]:
    """Adaptive symmetric score normalization of raw trial scores.

    With ``cache=True`` the top-N cohort statistics are computed once per
    distinct model and test embedding; with ``cache=False`` they are
    recomputed for every trial (slow; kept for verification).
    """
    if config.top_n > len(cohort):
        raise DataError(f"top_n={config.top_n} exceeds cohort size {len(cohort)}")
    model_index, models = _model_table(model_embeddings)
    mids = [r.model_id for r in raw]
    tids = [r.test_utt_id for r in raw]
    mi = _resolve(mids, model_index, "model")
    ti = _resolve(tids, store.index, "test utterance")
    s = np.fromiter((r.score for r in raw), dtype=np.float64, count=len(raw))
    eps = config.epsilon_sigma

    if cache:
        mu_uniq, mu_inv = np.unique(mi, return_inverse=True)
        mu_e, sd_e = embedding_cohort_stats(models[mu_uniq], cohort, config.top_n, workers)
        _check_sigma(sd_e, [model_embeddings[i].model_id for i in mu_uniq], "model", eps)
        tests, tinv, tuniq = _store_rows(store, ti)
        mu_t, sd_t = embedding_cohort_stats(tests, cohort, config.top_n, workers)
        _check_sigma(sd_t, [store.ids[i] for i in tuniq], "test", eps)
        mu_e, sd_e = mu_e[mu_inv], sd_e[mu_inv]
        mu_t, sd_t = mu_t[tinv], sd_t[tinv]
    else:
        mu_e, sd_e = embedding_cohort_stats(models[mi], cohort, config.top_n, workers)
        _check_sigma(sd_e, mids, "model", eps)
        mu_t, sd_t = embedding_cohort_stats(store.matrix[ti].astype(np.float64), cohort, config.top_n, workers)
        _check_sigma(sd_t, tids, "test", eps)

    normed = 0.5 * ((s - mu_e) / sd_e + (s - mu_t) / sd_t)
    return _records(mids, tids, normed)


# --- fusion -------------------------------------------------------------------

def fuse(score_sets: Sequence[Sequence[ScoreRecord]]) -> list[ScoreRecord]:
    """Equal-weight mean of aligned score lists."""
    if not score_sets:
        raise DataError("nothing to fuse")
    first = score_sets[0]
    keys = [(r.model_id, r.test_utt_id) for r in first]
    for k, other in enumerate(score_sets[1:], 2):
        if len(other) != len(first):
            raise MisalignedScoresError(f"score set {k} has {len(other)} trials, set 1 has {len(first)}")
        for i, (key, r) in enumerate(zip(keys, other)):
            if key != (r.model_id, r.test_utt_id):
                raise MisalignedScoresError(
                    f"score set {k}, line {i + 1}: trial {r.model_id}/{r.test_utt_id} does not match {key[0]}/{key[1]}")
    mat = np.array([[r.score for r in s] for s in score_sets], dtype=np.float64)
    mean = mat.mean(axis=0) if len(score_sets) > 1 else mat[0]
    return [ScoreRecord(m, t, v) for (m, t), v in zip(keys, mean.tolist())]
