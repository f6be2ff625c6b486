"""Detection metrics: DET operating points, EER and normalized minimum DCF.

A trial is accepted when ``score >= threshold``.  The DET curve is swept at
every distinct score plus -inf and +inf, so the accept-all and reject-all
operating points are always present.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .data import ScoreRecord, Trial, TrialLabel
from .errors import EmptyClassError, MisalignedScoresError, NoTargetsError, UnlabeledTrialError

SUBSETS = {
    "all": frozenset({TrialLabel.TW, TrialLabel.IC, TrialLabel.IW}),
    "tc-vs-tw": frozenset({TrialLabel.TW}),
    "tc-vs-ic": frozenset({TrialLabel.IC}),
}


@dataclass(frozen=True)
class MetricConfig:
    p_target: float = 0.01
    c_miss: float = 10.0
    c_fa: float = 1.0

    def __post_init__(self):
        if not 0 < self.p_target < 1:
            raise ValueError("p_target must lie in (0, 1)")
        if not (self.c_miss > 0 and self.c_fa > 0):
            raise ValueError("costs must be positive")

    @property
    def normalizer(self) -> float:
        """Cost of the best trivial system (accept-all or reject-all)."""
        return min(self.c_miss * self.p_target, self.c_fa * (1 - self.p_target))


class DetPoint(NamedTuple):
    threshold: float
    p_miss: float
    p_fa: float


@dataclass(frozen=True)
class DetCurve:
    """Operating points ordered by increasing threshold."""

    thresholds: np.ndarray
    p_miss: np.ndarray
    p_fa: np.ndarray

    def __len__(self):
        return len(self.thresholds)

    def __iter__(self):
        return map(DetPoint, self.thresholds.tolist(), self.p_miss.tolist(), self.p_fa.tolist())

    def __getitem__(self, i) -> DetPoint:
        return DetPoint(float(self.thresholds[i]), float(self.p_miss[i]), float(self.p_fa[i]))

    def to_tsv(self) -> str:
        lines = ["threshold\tp_miss\tp_fa\n"]
        lines += [f"{t!r}\t{m!r}\t{f!r}\n" for t, m, f in self]
        return "".join(lines)


@dataclass
class EvalReport:
    eer: float
    min_dcf: float
    n_target: int
    n_nontarget: int
    det: DetCurve = field(repr=False)
    min_dcf_threshold: float = float("nan")

    def table_row(self) -> str:
        """``MinDCF & EER(%)`` in the style of a LaTeX results row."""
        return f"{self.min_dcf:.4f} & {100 * self.eer:.2f}"


def _scores(x, what) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise (NoTargetsError("no targets") if what == "targets" else EmptyClassError(f"no {what}"))
    if not np.isfinite(arr).all():
        raise ValueError(f"non-finite {what} score")
    return arr


def det_curve(targets, nontargets) -> DetCurve:
    """Miss and false-alarm rates at every distinct score, plus +-inf."""
    tar = np.sort(_scores(targets, "targets"))
    non = np.sort(_scores(nontargets, "nontargets"))
    thr = np.concatenate([[-np.inf], np.unique(np.concatenate([tar, non])), [np.inf]])
    # p_miss: targets strictly below threshold; p_fa: nontargets at/above it
    n_miss = np.searchsorted(tar, thr, side="left")
    n_fa = non.size - np.searchsorted(non, thr, side="left")
    return DetCurve(thr, n_miss / tar.size, n_fa / non.size)


def eer(det: DetCurve, method: str = "interp") -> float:
    """Equal error rate.

    ``"interp"`` linearly interpolates between the two operating points where
    ``p_miss - p_fa`` changes sign.  ``"minmax"`` takes the discrete
    ``min over points of max(p_miss, p_fa)``, which differs by O(1/n).
    """
    pm, pf = det.p_miss, det.p_fa
    if method == "minmax":
        return float(np.min(np.maximum(pm, pf)))
    if method != "interp":
        raise ValueError(f"unknown EER method {method!r}")
    d = pm - pf
    i = int(np.argmax(d >= 0))
    if d[i] == 0 or i == 0:
        return float(pm[i])
    t = -d[i - 1] / (d[i] - d[i - 1])
    return float(pm[i - 1] + t * (pm[i] - pm[i - 1]))


def detection_costs(det: DetCurve, config: MetricConfig = MetricConfig()) -> np.ndarray:
    """Normalized detection cost at each operating point."""
    cost = config.c_miss * det.p_miss * config.p_target + config.c_fa * det.p_fa * (1 - config.p_target)
    return cost / config.normalizer


def min_dcf(det: DetCurve, config: MetricConfig = MetricConfig(), return_threshold: bool = False):
    costs = detection_costs(det, config)
    i = int(np.argmin(costs))
    if return_threshold:
        return float(costs[i]), float(det.thresholds[i])
    return float(costs[i])


def evaluate(targets, nontargets, config: MetricConfig = MetricConfig(), eer_method: str = "interp") -> EvalReport:
    det = det_curve(targets, nontargets)
    dcf, thr = min_dcf(det, config, return_threshold=True)
    return EvalReport(eer(det, eer_method), dcf, int(np.size(targets)), int(np.size(nontargets)), det, thr)


def map_labels(trials: Sequence[Trial], scores: Sequence[ScoreRecord], subset: str | None = None):
    """Split scores into (targets, nontargets) by trial label.

    TC trials are targets; the non-target labels kept depend on ``subset``
    (``"all"``, ``"tc-vs-tw"``, ``"tc-vs-ic"``).  Scores are matched to
    trials by (model id, test utterance id).
    """
    keep = SUBSETS[subset or "all"]
    by_key = {(r.model_id, r.test_utt_id): r.score for r in scores}
    if len(by_key) != len(scores):
        raise MisalignedScoresError("score list contains duplicate trials")
    tar, non = [], []
    for lineno, t in enumerate(trials, 1):
        if t.label is None:
            raise UnlabeledTrialError(f"trial line {lineno} ({t.model_id}/{t.test_utt_id}) has no label")
        label = TrialLabel(t.label)
        if label is not TrialLabel.TC and label not in keep:
            continue
        try:
            s = by_key[(t.model_id, t.test_utt_id)]
        except KeyError:
            raise MisalignedScoresError(f"trial line {lineno}: no score for {t.model_id}/{t.test_utt_id}") from None
        (tar if label is TrialLabel.TC else non).append(s)
    if not tar:
        raise NoTargetsError("no targets")
    if not non:
        raise EmptyClassError("no nontargets")
    return np.array(tar), np.array(non)
