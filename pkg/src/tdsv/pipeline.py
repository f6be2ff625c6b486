"""End-to-end evaluation of a synthetic dataset: enroll, score, AS-Norm,
phrase gate, metrics."""
from __future__ import annotations

from dataclasses import dataclass

from .backend import ASNormConfig, asnorm, build_cohort, enroll, score_trials
from .data import ScoreRecord
from .gate import GateConfig, GateDecision, gate
from .metrics import EvalReport, MetricConfig, evaluate, map_labels
from .synth import SynthDataset


@dataclass
class PipelineResult:
    raw: list[ScoreRecord]
    normalized: list[ScoreRecord]
    gated: list[ScoreRecord]
    decisions: list[GateDecision]
    report: EvalReport


def run_pipeline(ds: SynthDataset, asnorm_config: ASNormConfig = ASNormConfig(top_n=50),
                 gate_config: GateConfig = GateConfig(), metric_config: MetricConfig = MetricConfig(),
                 subset: str | None = None, workers: int = 1) -> PipelineResult:
    model_vecs = enroll(ds.models, ds.embeddings)
    raw = score_trials(ds.trials, model_vecs, ds.embeddings, workers=workers)
    cohort = build_cohort(ds.cohort_embeddings, ds.cohort_speaker_of)
    normed = asnorm(raw, model_vecs, ds.embeddings, cohort, asnorm_config, workers=workers)
    gated, decisions = gate(ds.trials, ds.models, ds.posteriors, normed, gate_config)
    tar, non = map_labels(ds.trials, gated, subset)
    return PipelineResult(raw, normed, gated, decisions, evaluate(tar, non, metric_config))
