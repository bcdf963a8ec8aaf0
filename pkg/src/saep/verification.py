"""Cosine trial scoring and equal-error-rate computation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .model import SpeakerEmbedding

__all__ = ["Trial", "ScoredTrial", "TrialListError", "ZeroNormError",
           "cosine_score", "score_trials", "compute_eer", "det_points",
           "load_trials", "save_trials", "load_scores", "save_scores"]


class TrialListError(ValueError):
    """Malformed trial list or score file, or an unresolvable id."""


class ZeroNormError(ValueError):
    """Cosine scoring is undefined for a zero-norm embedding."""


@dataclass
class Trial:
    label: int  # 1 = target (same speaker), 0 = nontarget
    enroll_id: str
    test_id: str


@dataclass
class ScoredTrial:
    score: float
    label: int
    enroll_id: str
    test_id: str


def cosine_score(a: SpeakerEmbedding, b: SpeakerEmbedding) -> float:
    va = np.asarray(a.vector, dtype=np.float64)
    vb = np.asarray(b.vector, dtype=np.float64)
    if va.shape != vb.shape:
        raise ValueError("embedding widths differ: %s vs %s"
                         % (va.shape, vb.shape))
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0.0:
        raise ZeroNormError("embedding %r has zero norm" % a.utterance_id)
    if nb == 0.0:
        raise ZeroNormError("embedding %r has zero norm" % b.utterance_id)
    return float(np.dot(va, vb) / (na * nb))


def score_trials(trials: List[Trial],
                 embeddings: Dict[str, SpeakerEmbedding]) -> List[ScoredTrial]:
    scored = []
    for trial in trials:
        for utt_id in (trial.enroll_id, trial.test_id):
            if utt_id not in embeddings:
                raise TrialListError("no embedding for utterance %r" % utt_id)
        scored.append(ScoredTrial(
            score=cosine_score(embeddings[trial.enroll_id],
                               embeddings[trial.test_id]),
            label=trial.label,
            enroll_id=trial.enroll_id,
            test_id=trial.test_id))
    return scored


def _split_scores(scores: List[ScoredTrial]) -> Tuple[np.ndarray, np.ndarray]:
    targets = np.asarray([s.score for s in scores if s.label == 1])
    nontargets = np.asarray([s.score for s in scores if s.label == 0])
    if len(targets) == 0 or len(nontargets) == 0:
        raise TrialListError("need at least one target and one nontarget "
                             "trial (got %d/%d)"
                             % (len(targets), len(nontargets)))
    return targets, nontargets


def det_points(scores: List[ScoredTrial]) -> List[Tuple[float, float, float]]:
    """(threshold, FAR, FRR) at every distinct score threshold.

    Decisions accept when score >= threshold, so a nontarget exactly at the
    threshold counts as a false accept and a target below it as a false
    reject. FAR is non-increasing and FRR non-decreasing in the threshold.
    """
    targets, nontargets = _split_scores(scores)
    all_scores = np.concatenate([targets, nontargets])
    thresholds = np.unique(all_scores)
    # One threshold above the maximum closes the staircase at (0, 1).
    thresholds = np.append(thresholds, thresholds[-1] + 1.0)
    points = []
    for t in thresholds:
        far = float((nontargets >= t).mean())
        frr = float((targets < t).mean())
        points.append((float(t), far, frr))
    return points


def compute_eer(scores: List[ScoredTrial]) -> Tuple[float, float]:
    """Equal error rate and its threshold, by linear interpolation between
    the adjacent operating points where FAR - FRR changes sign."""
    points = det_points(scores)
    diffs = [far - frr for _, far, frr in points]
    for i, d in enumerate(diffs):
        if d == 0.0:
            return points[i][1], points[i][0]
        if i + 1 < len(diffs) and d > 0.0 and diffs[i + 1] < 0.0:
            t0, far0, frr0 = points[i]
            t1, far1, frr1 = points[i + 1]
            alpha = d / (d - diffs[i + 1])
            eer = 0.5 * ((far0 + alpha * (far1 - far0))
                         + (frr0 + alpha * (frr1 - frr0)))
            return float(eer), float(t0 + alpha * (t1 - t0))
    # FAR starts at 1/FRR at 0 and ends at 0/1, so a crossing always exists;
    # reaching here means every diff was positive except a terminal zero.
    raise AssertionError("no FAR/FRR crossing found")


# -- text formats ----------------------------------------------------------

def load_trials(path) -> List[Trial]:
    trials = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3 or parts[0] not in ("0", "1"):
                raise TrialListError(
                    "%s:%d: expected '<0|1> <enroll_id> <test_id>', got %r"
                    % (path, lineno, line))
            trials.append(Trial(label=int(parts[0]), enroll_id=parts[1],
                                test_id=parts[2]))
    if not trials:
        raise TrialListError("%s: trial list is empty" % path)
    return trials


def save_trials(trials: List[Trial], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in trials:
            fh.write("%d %s %s\n" % (t.label, t.enroll_id, t.test_id))


def save_scores(scores: List[ScoredTrial], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in scores:
            fh.write("%.6f %d %s %s\n" % (s.score, s.label,
                                          s.enroll_id, s.test_id))


def load_scores(path) -> List[ScoredTrial]:
    scores = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4 or parts[1] not in ("0", "1"):
                raise TrialListError(
                    "%s:%d: expected '<score> <0|1> <enroll_id> <test_id>', "
                    "got %r" % (path, lineno, line))
            scores.append(ScoredTrial(score=float(parts[0]),
                                      label=int(parts[1]),
                                      enroll_id=parts[2], test_id=parts[3]))
    if not scores:
        raise TrialListError("%s: score file is empty" % path)
    return scores
