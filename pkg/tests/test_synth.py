import hashlib
from collections import Counter

import numpy as np
import pytest

from tdsv import errors
from tdsv.data import FREE_TEXT_CLASS, TrialLabel, read_embeddings, read_trials
from tdsv.synth import SynthConfig, bulk_trials, generate, verify_labels

SMALL = SynthConfig(n_speakers=6, dim=12, n_cohort_speakers=5, cohort_utts_per_speaker=2)


def _digest(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.iterdir())}


def test_same_seed_byte_identical(tmp_path):
    generate(SMALL).write(tmp_path / "a")
    generate(SMALL).write(tmp_path / "b")
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")


def test_different_seed_differs(tmp_path):
    generate(SMALL).write(tmp_path / "a")
    generate(SynthConfig(**{**SMALL.__dict__, "seed": 8})).write(tmp_path / "b")
    assert _digest(tmp_path / "a")["embeddings.bin"] != _digest(tmp_path / "b")["embeddings.bin"]


def test_files_parse(tmp_path):
    paths = generate(SMALL).write(tmp_path)
    store = read_embeddings(paths["embeddings"])
    assert store.dim == 12
    assert len(read_trials(paths["trials"])) == 6 * 2 * (3 + 3 + 6)


def test_exact_counts():
    ds = generate(SMALL)
    assert len(ds.models) == SMALL.n_speakers * SMALL.models_per_speaker
    per_model = Counter((t.model_id, t.label) for t in ds.trials)
    for m in ds.models:
        assert per_model[(m.model_id, TrialLabel.TC)] == SMALL.tc_per_model
        assert per_model[(m.model_id, TrialLabel.TW)] == SMALL.tw_per_model
        assert per_model[(m.model_id, TrialLabel.IC)] == SMALL.ic_per_model
        assert per_model[(m.model_id, TrialLabel.IW)] == 0
    assert len(ds.cohort_embeddings) == 10
    assert len(set(ds.cohort_speaker_of.values())) == 5


def test_labels_verified_independently():
    ds = generate(SynthConfig(n_speakers=12, dim=8, n_cohort_speakers=2))
    assert verify_labels(ds.trials, ds.models, ds.utt_speaker, ds.utt_phrase) == []


def test_checker_catches_wrong_label():
    ds = generate(SMALL)
    t = ds.trials[0]
    bad = [t._replace(label=TrialLabel.IC)] + ds.trials[1:]
    (line, _, expected), = verify_labels(bad, ds.models, ds.utt_speaker, ds.utt_phrase)
    assert line == 1 and expected == t.label


def test_enrollment_and_tests_disjoint():
    ds = generate(SMALL)
    enrolled = {u for m in ds.models for u in m.enrollment_utts}
    assert not enrolled & {t.test_utt_id for t in ds.trials}
    for m in ds.models:
        assert {ds.utt_phrase[u] for u in m.enrollment_utts} == {m.phrase_id}


def test_free_text_appears_in_tw():
    ds = generate(SynthConfig(n_speakers=10, dim=8, tw_per_model=20, n_cohort_speakers=2))
    tw = [t for t in ds.trials if t.label == TrialLabel.TW]
    assert any(ds.utt_phrase[t.test_utt_id] == FREE_TEXT_CLASS for t in tw)


def test_zero_noise_collapses_speakers():
    ds = generate(SynthConfig(n_speakers=3, dim=8, within_noise=0.0, n_cohort_speakers=2))
    by_spk = {}
    for u in ds.embeddings.ids:
        by_spk.setdefault(ds.utt_speaker[u], []).append(ds.embeddings[u])
    for vecs in by_spk.values():
        np.testing.assert_allclose(vecs, np.broadcast_to(vecs[0], np.shape(vecs)), atol=1e-7)


def test_unit_norm_embeddings():
    ds = generate(SMALL)
    np.testing.assert_allclose(np.linalg.norm(ds.embeddings.matrix, axis=1), 1.0, atol=1e-6)


def test_posteriors_clean_at_zero_confusion():
    ds = generate(SynthConfig(**{**SMALL.__dict__, "posterior_confusion": 0.0}))
    for p in ds.posteriors:
        assert int(np.argmax(p.probs)) == ds.utt_phrase[p.utt_id]


def test_full_confusion_always_wrong():
    ds = generate(SynthConfig(**{**SMALL.__dict__, "posterior_confusion": 1.0}))
    for p in ds.posteriors:
        assert int(np.argmax(p.probs)) != ds.utt_phrase[p.utt_id]


@pytest.mark.parametrize("kw", [
    {"tc_per_model": 4},
    {"n_speakers": 1},
    {"ic_per_model": 100, "n_speakers": 3},
    {"n_phrases": 11},
    {"posterior_confusion": 1.5},
    {"within_noise": -0.1},
])
def test_infeasible_config(kw):
    with pytest.raises(errors.DataError, match="infeasible"):
        generate(SynthConfig(**{**SMALL.__dict__, **kw}))


def test_bulk_trials_shape():
    b = bulk_trials(n_trials=1000, n_models=20, n_tests=50, n_cohort=30, dim=16)
    assert len(b.trials) == 1000 and len(b.model_embeddings) == 20
    assert b.store.dim == 16 and len(b.cohort_store) == 30
    again = bulk_trials(n_trials=1000, n_models=20, n_tests=50, n_cohort=30, dim=16)
    assert again.trials == b.trials
    assert np.array_equal(again.store.matrix, b.store.matrix)
