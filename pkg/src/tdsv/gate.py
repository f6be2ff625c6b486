"""Phrase gate: reject trials whose test utterance was not classified as the
model's enrolled phrase."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .data import FREE_TEXT_CLASS, PhrasePosterior, ScoreRecord, Trial
from .errors import GateFloorError, MisalignedScoresError, UnresolvedIdError

DEFAULT_FLOOR = -1000.0


@dataclass(frozen=True)
class GateConfig:
    floor_score: float = DEFAULT_FLOOR
    free_text_class: int = FREE_TEXT_CLASS
    # reject when the winning probability is below this; None disables
    min_confidence: float | None = None


class GateDecision(NamedTuple):
    index: int
    model_id: str
    test_utt_id: str
    predicted_class: int
    accept: bool


def classify(posterior: PhrasePosterior | np.ndarray) -> int:
    """Argmax class; ties resolve to the lowest index."""
    probs = posterior.probs if isinstance(posterior, PhrasePosterior) else np.asarray(posterior)
    return int(np.argmax(probs))


def _as_mapping(items, key: str) -> Mapping:
    if isinstance(items, Mapping):
        return items
    return {getattr(x, key): x for x in items}


def gate(trials: Sequence[Trial], models, posteriors, scores: Sequence[ScoreRecord],
         config: GateConfig = GateConfig()) -> tuple[list[ScoreRecord], list[GateDecision]]:
    """Apply the phrase decision to a score list aligned with ``trials``.

    Accepted trials keep their score untouched; rejected ones get
    ``config.floor_score``.  Raises :class:`GateFloorError` if any accepted
    score is not strictly above the floor.
    """
    models = _as_mapping(models, "model_id")
    posteriors = _as_mapping(posteriors, "utt_id")
    if len(scores) != len(trials):
        raise MisalignedScoresError(f"{len(scores)} scores for {len(trials)} trials")

    predicted: dict[str, tuple[int, float]] = {}
    gated, decisions = [], []
    floor = float(config.floor_score)
    for i, (t, rec) in enumerate(zip(trials, scores)):
        if (rec.model_id, rec.test_utt_id) != (t.model_id, t.test_utt_id):
            raise MisalignedScoresError(
                f"line {i + 1}: score for {rec.model_id}/{rec.test_utt_id}, trial is {t.model_id}/{t.test_utt_id}")
        model = models.get(t.model_id)
        if model is None:
            raise UnresolvedIdError(f"trial line {i + 1}: no definition for model {t.model_id!r}")
        pred = predicted.get(t.test_utt_id)
        if pred is None:
            post = posteriors.get(t.test_utt_id)
            if post is None:
                raise UnresolvedIdError(f"trial line {i + 1}: no posterior for utterance {t.test_utt_id!r}")
            c = classify(post)
            pred = predicted[t.test_utt_id] = (c, float(post.probs[c]))
        cls, conf = pred
        accept = cls == model.phrase_id and cls != config.free_text_class
        if accept and config.min_confidence is not None and conf < config.min_confidence:
            accept = False
        if accept:
            if not rec.score > floor:
                raise GateFloorError(
                    f"trial line {i + 1}: accepted score {rec.score} is not above the floor {floor}")
            gated.append(rec)
        else:
            gated.append(ScoreRecord(rec.model_id, rec.test_utt_id, floor))
        decisions.append(GateDecision(i, t.model_id, t.test_utt_id, cls, accept))
    return gated, decisions


def format_decisions(decisions: Sequence[GateDecision]) -> str:
    return "".join(f"{d.model_id}\t{d.test_utt_id}\t{d.predicted_class}\t{int(d.accept)}\n" for d in decisions)
