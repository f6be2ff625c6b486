import numpy as np
import pytest

from tdsv import errors
from tdsv.data import ModelDefinition, PhrasePosterior, ScoreRecord, Trial, TrialLabel
from tdsv.gate import DEFAULT_FLOOR, GateConfig, classify, format_decisions, gate
from tdsv.metrics import evaluate, map_labels
from tdsv.synth import SynthConfig, generate


def one_hot(k, n=11):
    p = np.zeros(n)
    p[k] = 1.0
    return p


MODEL = ModelDefinition("m", 2, ("e0", "e1", "e2"))


def _gate_one(pred, score=0.8, **kw):
    post = [PhrasePosterior("t", one_hot(pred))]
    return gate([Trial("m", "t")], [MODEL], post, [ScoreRecord("m", "t", score)], GateConfig(**kw))


class TestClassify:
    def test_one_hot(self):
        assert classify(PhrasePosterior("u", one_hot(4))) == 4

    def test_uniform_ties_to_lowest(self):
        assert classify(PhrasePosterior("u", np.full(11, 1 / 11))) == 0

    def test_free_text(self):
        p = np.full(11, 0.05)
        p[10] = 0.5
        assert classify(PhrasePosterior("u", p)) == 10

    def test_partial_tie(self):
        p = np.zeros(11)
        p[[3, 7]] = 0.5
        assert classify(p) == 3


class TestGate:
    def test_matching_phrase_accepts(self):
        gated, (d,) = _gate_one(2)
        assert gated == [ScoreRecord("m", "t", 0.8)]
        assert d.accept and d.predicted_class == 2

    def test_wrong_phrase_rejects(self):
        gated, (d,) = _gate_one(7)
        assert gated[0].score == DEFAULT_FLOOR
        assert not d.accept and d.predicted_class == 7

    def test_free_text_rejects(self):
        gated, (d,) = _gate_one(10)
        assert gated[0].score == -1000.0 and not d.accept

    def test_custom_floor(self):
        gated, _ = _gate_one(7, floor_score=-5.0)
        assert gated[0].score == -5.0

    def test_floor_not_below_accepted(self):
        with pytest.raises(errors.GateFloorError, match="line 1"):
            _gate_one(2, score=-2.0, floor_score=-2.0)

    def test_min_confidence(self):
        p = np.full(11, 0.04)
        p[2] = 0.6
        post = [PhrasePosterior("t", p)]
        args = ([Trial("m", "t")], [MODEL], post, [ScoreRecord("m", "t", 0.3)])
        assert gate(*args)[1][0].accept
        assert gate(*args, GateConfig(min_confidence=0.5))[1][0].accept
        assert not gate(*args, GateConfig(min_confidence=0.7))[1][0].accept

    def test_missing_posterior(self):
        with pytest.raises(errors.UnresolvedIdError, match="posterior.*'t'"):
            gate([Trial("m", "t")], [MODEL], [], [ScoreRecord("m", "t", 0.1)])

    def test_missing_model(self):
        post = [PhrasePosterior("t", one_hot(2))]
        with pytest.raises(errors.UnresolvedIdError, match="'x'"):
            gate([Trial("x", "t")], [MODEL], post, [ScoreRecord("x", "t", 0.1)])

    def test_misaligned(self):
        post = [PhrasePosterior("t", one_hot(2))]
        with pytest.raises(errors.MisalignedScoresError):
            gate([Trial("m", "t")], [MODEL], post, [])
        with pytest.raises(errors.MisalignedScoresError):
            gate([Trial("m", "t")], [MODEL], post, [ScoreRecord("m", "u", 0.1)])

    def test_pass_through_bit_identical(self, rng):
        models = [ModelDefinition(f"m{p}", p, ("a", "b", "c")) for p in range(10)]
        posts = [PhrasePosterior(f"t{i}", one_hot(i % 11)) for i in range(40)]
        trials = [Trial(f"m{rng.integers(10)}", f"t{rng.integers(40)}") for _ in range(300)]
        scores = [ScoreRecord(t.model_id, t.test_utt_id, float(s)) for t, s in zip(trials, rng.normal(size=300))]
        gated, decisions = gate(trials, models, posts, scores)
        for s, g, d in zip(scores, gated, decisions):
            assert d.accept == (d.predicted_class == int(d.model_id[1:]))
            if d.accept:
                assert g is s or g == s
                assert np.float64(g.score).tobytes() == np.float64(s.score).tobytes()
            else:
                assert g.score == DEFAULT_FLOOR

    def test_format_decisions(self):
        _, decisions = _gate_one(7)
        assert format_decisions(decisions) == "m\tt\t7\t0\n"


def _tw_accepts(confusion, seed):
    cfg = SynthConfig(n_speakers=8, dim=8, posterior_confusion=confusion, seed=seed, n_cohort_speakers=4)
    ds = generate(cfg)
    scores = [ScoreRecord(t.model_id, t.test_utt_id, 0.5) for t in ds.trials]
    _, decisions = gate(ds.trials, ds.models, ds.posteriors, scores)
    return sum(d.accept for t, d in zip(ds.trials, decisions) if t.label == TrialLabel.TW)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_tw_acceptance_monotone_in_confusion(seed):
    counts = [_tw_accepts(c, seed) for c in (0.0, 0.05, 0.2, 0.5, 0.9, 1.0)]
    assert counts[0] == 0
    assert counts == sorted(counts)


def test_separable_posteriors_give_zero_tc_vs_tw():
    ds = generate(SynthConfig(n_speakers=10, dim=16, within_noise=1.0, posterior_confusion=0.0, n_cohort_speakers=4))
    rng = np.random.default_rng(0)
    # raw scores deliberately uninformative: separation comes from the gate alone
    scores = [ScoreRecord(t.model_id, t.test_utt_id, float(x)) for t, x in zip(ds.trials, rng.normal(size=len(ds.trials)))]
    gated, _ = gate(ds.trials, ds.models, ds.posteriors, scores)
    rep = evaluate(*map_labels(ds.trials, gated, "tc-vs-tw"))
    assert rep.eer == 0.0 and rep.min_dcf == 0.0
