import math

import numpy as np
import pytest

from saep.model import SpeakerEmbedding
from saep.verification import ScoredTrial, Trial, TrialListError, \
    ZeroNormError, compute_eer, cosine_score, det_points, load_scores, \
    load_trials, save_scores, save_trials, score_trials


def emb(vec, utt_id="u"):
    return SpeakerEmbedding(np.asarray(vec, dtype=np.float32), utt_id)


def scored(targets, nontargets):
    out = [ScoredTrial(s, 1, "e%d" % i, "t%d" % i)
           for i, s in enumerate(targets)]
    out += [ScoredTrial(s, 0, "e%d" % i, "t%d" % i)
            for i, s in enumerate(nontargets, len(targets))]
    return out


class TestCosineScore:
    def test_self_similarity_is_one(self):
        a = emb([1.0, 2.0, -3.0])
        assert cosine_score(a, a) == pytest.approx(1.0)

    def test_orthogonal_is_zero(self):
        assert cosine_score(emb([1.0, 0.0]), emb([0.0, 5.0])) \
            == pytest.approx(0.0)

    def test_hand_value(self):
        # [1, 0] . [1, 1] / (1 * sqrt(2)) = 1/sqrt(2)
        assert cosine_score(emb([1.0, 0.0]), emb([1.0, 1.0])) \
            == pytest.approx(1.0 / math.sqrt(2.0))

    def test_symmetry_and_scale_invariance(self):
        rng = np.random.default_rng(0)
        a = emb(rng.standard_normal(20))
        b = emb(rng.standard_normal(20))
        assert cosine_score(a, b) == pytest.approx(cosine_score(b, a))
        scaled = emb(7.0 * a.vector)
        assert cosine_score(scaled, b) == pytest.approx(cosine_score(a, b))

    def test_zero_norm_names_utterance(self):
        with pytest.raises(ZeroNormError, match="bad"):
            cosine_score(emb([0.0, 0.0], "bad"), emb([1.0, 0.0]))

    def test_width_mismatch(self):
        with pytest.raises(ValueError):
            cosine_score(emb([1.0]), emb([1.0, 0.0]))


class TestScoreTrials:
    def test_composition(self):
        embeddings = {"a": emb([1.0, 0.0], "a"), "b": emb([1.0, 1.0], "b")}
        trials = [Trial(1, "a", "b"), Trial(0, "a", "a")]
        out = score_trials(trials, embeddings)
        assert out[0].score == pytest.approx(1.0 / math.sqrt(2.0))
        assert out[1].score == pytest.approx(1.0)
        assert (out[0].label, out[1].label) == (1, 0)

    def test_missing_id(self):
        with pytest.raises(TrialListError, match="ghost"):
            score_trials([Trial(1, "a", "ghost")],
                         {"a": emb([1.0], "a")})


class TestDetPoints:
    @pytest.mark.parametrize("seed", range(50))
    def test_monotone_staircase(self, seed):
        rng = np.random.default_rng(seed)
        pts = det_points(scored(rng.standard_normal(30),
                                rng.standard_normal(40)))
        fars = [far for _, far, _ in pts]
        frrs = [frr for _, _, frr in pts]
        assert all(b <= a for a, b in zip(fars, fars[1:]))
        assert all(b >= a for a, b in zip(frrs, frrs[1:]))
        assert (fars[0], frrs[0]) == (1.0, 0.0)
        assert (fars[-1], frrs[-1]) == (0.0, 1.0)

    def test_single_pair(self):
        pts = det_points(scored([0.9], [0.1]))
        assert len(pts) == 3
        assert pts[0] == (0.1, 1.0, 0.0)
        assert pts[1] == (0.9, 0.0, 0.0)

    def test_needs_both_classes(self):
        with pytest.raises(TrialListError):
            det_points(scored([0.5], []))


class TestComputeEer:
    def test_perfectly_separated(self):
        eer, thr = compute_eer(scored([0.8, 0.9], [0.1, 0.2]))
        assert eer == 0.0
        assert 0.2 < thr <= 0.8

    def test_hand_case_is_exactly_one_third(self):
        # targets {0.9, 0.8, 0.2}, nontargets {0.7, 0.1, 0.05}: at
        # threshold 0.7 one of three targets is rejected and one of three
        # nontargets accepted, so FAR = FRR = 1/3 exactly.
        eer, thr = compute_eer(scored([0.9, 0.8, 0.2], [0.7, 0.1, 0.05]))
        assert eer == pytest.approx(1.0 / 3.0, abs=1e-12)
        assert thr == pytest.approx(0.7)

    def test_iid_scores_give_half(self):
        rng = np.random.default_rng(123)
        eer, _ = compute_eer(scored(rng.standard_normal(10000),
                                    rng.standard_normal(10000)))
        assert abs(eer - 0.5) < 0.02

    def test_label_shuffle_gives_half(self):
        rng = np.random.default_rng(5)
        values = rng.standard_normal(20000)
        labels = rng.integers(0, 2, size=20000)
        trials = [ScoredTrial(float(s), int(l), "e", "t")
                  for s, l in zip(values, labels)]
        eer, _ = compute_eer(trials)
        assert abs(eer - 0.5) < 0.02

    @pytest.mark.parametrize("seed", range(50))
    def test_invariant_under_monotone_transform(self, seed):
        rng = np.random.default_rng(seed)
        targets = rng.standard_normal(25) + 0.5
        nontargets = rng.standard_normal(25)
        eer, _ = compute_eer(scored(targets, nontargets))
        # tanh is strictly increasing, so error trade-offs are unchanged
        eer_t, _ = compute_eer(scored(np.tanh(targets),
                                      np.tanh(nontargets)))
        assert eer == pytest.approx(eer_t, abs=1e-9)

    def test_eer_between_zero_and_half_mostly(self):
        rng = np.random.default_rng(9)
        eer, _ = compute_eer(scored(rng.standard_normal(200) + 2.0,
                                    rng.standard_normal(200)))
        assert 0.0 <= eer < 0.2


class TestTextFormats:
    def test_trials_roundtrip(self, tmp_path):
        trials = [Trial(1, "a", "b"), Trial(0, "c", "d")]
        path = tmp_path / "trials.txt"
        save_trials(trials, path)
        assert load_trials(path) == trials

    def test_scores_roundtrip(self, tmp_path):
        trials = [ScoredTrial(0.123456, 1, "a", "b"),
                  ScoredTrial(-0.5, 0, "c", "d")]
        path = tmp_path / "scores.txt"
        save_scores(trials, path)
        loaded = load_scores(path)
        assert loaded[0].score == pytest.approx(0.123456, abs=1e-6)
        assert loaded[1].score == pytest.approx(-0.5, abs=1e-6)
        assert [(s.label, s.enroll_id, s.test_id) for s in loaded] \
            == [(1, "a", "b"), (0, "c", "d")]

    def test_bad_trial_label_reports_line(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1 a b\n2 c d\n")
        with pytest.raises(TrialListError, match=":2:"):
            load_trials(path)

    def test_empty_trial_list_rejected(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("\n")
        with pytest.raises(TrialListError, match="empty"):
            load_trials(path)
