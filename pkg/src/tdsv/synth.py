"""Deterministic synthetic speaker populations.

Speaker means are uniform on the unit sphere; each utterance is
``normalize(mean + within_noise * N(0, I))``.  Every random draw comes from a
generator keyed on ``(seed, tag, entity ids)``, so any entity can be
regenerated on its own and the output never depends on generation order.

Utterance 0..2 of every (speaker, phrase) pair is reserved for enrollment;
the remaining ones, plus the free-text recordings, form the test pool.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backend import ModelEmbedding
from .data import (
    ENROLL_UTTS,
    FREE_TEXT_CLASS,
    NUM_CLASSES,
    NUM_PHRASES,
    EmbeddingStore,
    ModelDefinition,
    PhrasePosterior,
    Trial,
    TrialLabel,
    write_embeddings,
    write_models,
    write_posteriors,
    write_speaker_map,
    write_trials,
)
from .errors import DataError

_SPEAKER, _MODELS, _TRIALS, _POSTERIOR, _COHORT, _BULK = range(1, 7)


@dataclass(frozen=True)
class SynthConfig:
    n_speakers: int = 50
    n_phrases: int = NUM_PHRASES
    utts_per_speaker_phrase: int = 6
    dim: int = 256
    within_noise: float = 0.6
    posterior_confusion: float = 0.01
    seed: int = 7
    models_per_speaker: int = 2
    free_text_per_speaker: int = 2
    tc_per_model: int = 3
    tw_per_model: int = 3
    ic_per_model: int = 6
    n_cohort_speakers: int = 200
    cohort_utts_per_speaker: int = 5

    def validate(self) -> None:
        n_test = self.utts_per_speaker_phrase - ENROLL_UTTS
        checks = [
            (self.n_speakers >= 2, "need at least 2 speakers"),
            (1 <= self.n_phrases <= NUM_PHRASES, f"n_phrases must lie in [1, {NUM_PHRASES}]"),
            (self.dim >= 1, "dim must be positive"),
            (self.within_noise >= 0, "within_noise must be >= 0"),
            (0 <= self.posterior_confusion <= 1, "posterior_confusion must lie in [0, 1]"),
            (self.seed >= 0, "seed must be non-negative"),
            (1 <= self.models_per_speaker <= self.n_phrases, "models_per_speaker must lie in [1, n_phrases]"),
            (n_test >= self.tc_per_model, "not enough test utterances per (speaker, phrase) for tc_per_model"),
            ((self.n_phrases - 1) * n_test + self.free_text_per_speaker >= self.tw_per_model,
             "not enough wrong-phrase utterances for tw_per_model"),
            ((self.n_speakers - 1) * n_test >= self.ic_per_model, "not enough imposter utterances for ic_per_model"),
            (self.n_cohort_speakers >= 1 and self.cohort_utts_per_speaker >= 1, "cohort must be non-empty"),
            (min(self.free_text_per_speaker, self.tc_per_model, self.tw_per_model, self.ic_per_model) >= 0,
             "counts must be non-negative"),
        ]
        for ok, msg in checks:
            if not ok:
                raise DataError(f"infeasible synthetic config: {msg}")


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([seed, *key])


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _sphere_point(rng, dim):
    while True:
        v = rng.standard_normal(dim)
        n = np.linalg.norm(v)
        if n > 0:
            return v / n


def utt_id(speaker: int, phrase: int | None, index: int) -> str:
    if phrase is None:
        return f"spk{speaker:04d}_ft_u{index:02d}"
    return f"spk{speaker:04d}_ph{phrase:02d}_u{index:02d}"


def model_id(speaker: int, phrase: int) -> str:
    return f"m_spk{speaker:04d}_ph{phrase:02d}"


@dataclass
class SynthDataset:
    config: SynthConfig
    embeddings: EmbeddingStore
    models: list[ModelDefinition]
    trials: list[Trial]
    posteriors: list[PhrasePosterior]
    cohort_embeddings: EmbeddingStore
    cohort_speaker_of: dict[str, str]
    utt_speaker: dict[str, str] = field(repr=False)
    utt_phrase: dict[str, int] = field(repr=False)

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "embeddings": out / "embeddings.bin",
            "cohort_embeddings": out / "cohort.bin",
            "speaker_map": out / "cohort_speakers.tsv",
            "models": out / "models.tsv",
            "trials": out / "trials.tsv",
            "posteriors": out / "posteriors.tsv",
            "utt_info": out / "utt_info.tsv",
        }
        write_embeddings(paths["embeddings"], self.embeddings)
        write_embeddings(paths["cohort_embeddings"], self.cohort_embeddings)
        write_speaker_map(paths["speaker_map"], self.cohort_speaker_of)
        write_models(paths["models"], self.models)
        write_trials(paths["trials"], self.trials)
        write_posteriors(paths["posteriors"], self.posteriors)
        info = "".join(f"{u}\t{self.utt_speaker[u]}\t{self.utt_phrase[u]}\n" for u in self.embeddings.ids)
        paths["utt_info"].write_text(info, encoding="utf-8")
        return paths


def _speaker_utterances(cfg: SynthConfig, s: int):
    """All (id, phrase, vector) for evaluation speaker ``s``."""
    rng = _rng(cfg.seed, _SPEAKER, s)
    mean = _sphere_point(rng, cfg.dim)
    out = []
    slots = [(p, u) for p in range(cfg.n_phrases) for u in range(cfg.utts_per_speaker_phrase)]
    slots += [(None, u) for u in range(cfg.free_text_per_speaker)]
    noise = rng.standard_normal((len(slots), cfg.dim))
    vecs = _unit(mean + cfg.within_noise * noise)
    for (p, u), v in zip(slots, vecs):
        out.append((utt_id(s, p, u), p, v))
    return out


def _posterior(cfg: SynthConfig, s: int, true_class: int, phrase_slot: int, u: int) -> np.ndarray:
    # one uniform draw and one wrong class per utterance, fixed across
    # confusion rates, so raising the rate only ever corrupts more utterances
    rng = _rng(cfg.seed, _POSTERIOR, s, phrase_slot, u)
    draw = rng.random()
    wrong = int(rng.integers(NUM_CLASSES - 1))
    cls = true_class
    if draw < cfg.posterior_confusion:
        cls = wrong if wrong < true_class else wrong + 1
    probs = np.zeros(NUM_CLASSES)
    probs[cls] = 1.0
    return probs


def _pick(rng, pool, k):
    idx = rng.choice(len(pool), size=k, replace=False)
    return [pool[i] for i in sorted(idx)]


def generate(config: SynthConfig = SynthConfig()) -> SynthDataset:
    cfg = config
    cfg.validate()
    n_test = cfg.utts_per_speaker_phrase - ENROLL_UTTS

    ids, vecs = [], []
    utt_speaker, utt_phrase = {}, {}
    posteriors = []
    for s in range(cfg.n_speakers):
        for uid, p, v in _speaker_utterances(cfg, s):
            ids.append(uid)
            vecs.append(v)
            utt_speaker[uid] = f"spk{s:04d}"
            utt_phrase[uid] = FREE_TEXT_CLASS if p is None else p
        for p in range(cfg.n_phrases):
            for u in range(ENROLL_UTTS, cfg.utts_per_speaker_phrase):
                posteriors.append(PhrasePosterior(utt_id(s, p, u), _posterior(cfg, s, p, p, u)))
        for u in range(cfg.free_text_per_speaker):
            posteriors.append(PhrasePosterior(utt_id(s, None, u),
                                              _posterior(cfg, s, FREE_TEXT_CLASS, FREE_TEXT_CLASS, u)))
    store = EmbeddingStore(ids, np.stack(vecs))

    def tests(s, p):
        return [utt_id(s, p, u) for u in range(ENROLL_UTTS, ENROLL_UTTS + n_test)]

    models, trials = [], []
    for s in range(cfg.n_speakers):
        phrases = sorted(_rng(cfg.seed, _MODELS, s).choice(cfg.n_phrases, cfg.models_per_speaker, replace=False))
        for p in map(int, phrases):
            mid = model_id(s, p)
            models.append(ModelDefinition(mid, p, tuple(utt_id(s, p, u) for u in range(ENROLL_UTTS))))
            rng = _rng(cfg.seed, _TRIALS, s, p)
            tw_pool = [x for q in range(cfg.n_phrases) if q != p for x in tests(s, q)]
            tw_pool += [utt_id(s, None, u) for u in range(cfg.free_text_per_speaker)]
            ic_pool = [x for o in range(cfg.n_speakers) if o != s for x in tests(o, p)]
            for utt in _pick(rng, tests(s, p), cfg.tc_per_model):
                trials.append(Trial(mid, utt, TrialLabel.TC))
            for utt in _pick(rng, tw_pool, cfg.tw_per_model):
                trials.append(Trial(mid, utt, TrialLabel.TW))
            for utt in _pick(rng, ic_pool, cfg.ic_per_model):
                trials.append(Trial(mid, utt, TrialLabel.IC))

    c_ids, c_vecs, c_map = [], [], {}
    for c in range(cfg.n_cohort_speakers):
        rng = _rng(cfg.seed, _COHORT, c)
        mean = _sphere_point(rng, cfg.dim)
        noise = rng.standard_normal((cfg.cohort_utts_per_speaker, cfg.dim))
        for u, v in enumerate(_unit(mean + cfg.within_noise * noise)):
            uid = f"coh{c:04d}_u{u:02d}"
            c_ids.append(uid)
            c_vecs.append(v)
            c_map[uid] = f"coh{c:04d}"
    cohort_store = EmbeddingStore(c_ids, np.stack(c_vecs))

    return SynthDataset(cfg, store, models, trials, posteriors, cohort_store, c_map, utt_speaker, utt_phrase)


def verify_labels(trials, models, utt_speaker, utt_phrase) -> list[tuple[int, Trial, TrialLabel]]:
    """Re-derive each trial's label from speaker/phrase metadata.

    Returns ``(line, trial, expected_label)`` for every disagreement.
    """
    model_spk, model_phrase = {}, {}
    for m in models:
        spks = {utt_speaker[u] for u in m.enrollment_utts}
        if len(spks) != 1:
            raise DataError(f"model {m.model_id}: enrollment utterances from several speakers")
        model_spk[m.model_id] = spks.pop()
        model_phrase[m.model_id] = m.phrase_id
    bad = []
    for line, t in enumerate(trials, 1):
        same_spk = utt_speaker[t.test_utt_id] == model_spk[t.model_id]
        same_phrase = utt_phrase[t.test_utt_id] == model_phrase[t.model_id]
        expected = TrialLabel(("T" if same_spk else "I") + ("C" if same_phrase else "W"))
        if t.label != expected:
            bad.append((line, t, expected))
    return bad


@dataclass
class BulkTrials:
    """Large random scoring workload (no labels, no phrase structure)."""

    store: EmbeddingStore
    model_embeddings: list[ModelEmbedding]
    trials: list[Trial]
    cohort_store: EmbeddingStore
    cohort_speaker_of: dict[str, str]


def bulk_trials(n_trials: int = 1_000_000, n_models: int = 2000, n_tests: int = 10000, n_cohort: int = 1620,
                dim: int = 256, within_noise: float = 0.6, seed: int = 0) -> BulkTrials:
    """Random (model, test) pairs over a speaker population, sized for
    throughput measurements.  Each cohort speaker contributes one
    utterance."""
    rng = _rng(seed, _BULK)
    n_spk = max(n_models, 1)
    means = _unit(rng.standard_normal((n_spk, dim)))
    models = _unit(means + within_noise * rng.standard_normal((n_models, dim)))
    spk_of_test = rng.integers(n_spk, size=n_tests)
    tests = _unit(means[spk_of_test] + within_noise * rng.standard_normal((n_tests, dim)))
    test_ids = [f"t{i:07d}" for i in range(n_tests)]
    model_ids = [f"m{i:06d}" for i in range(n_models)]
    mi = rng.integers(n_models, size=n_trials)
    ti = rng.integers(n_tests, size=n_trials)
    trials = [Trial(model_ids[a], test_ids[b]) for a, b in zip(mi.tolist(), ti.tolist())]
    cohort = _unit(rng.standard_normal((n_cohort, dim)))
    c_ids = [f"coh{i:05d}" for i in range(n_cohort)]
    return BulkTrials(
        EmbeddingStore(test_ids, tests),
        [ModelEmbedding(m, v) for m, v in zip(model_ids, models)],
        trials,
        EmbeddingStore(c_ids, cohort),
        {c: c for c in c_ids},
    )
