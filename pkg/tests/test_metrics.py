import numpy as np
import pytest
from hypothesis import given, strategies as st

from corpus_forge.metrics import (
    ScoredTrial,
    der,
    der_many,
    distribution_overlap,
    eer,
    operating_point,
    pr_sweep,
    roc_points,
    scoring_region,
    segment_recall,
    segment_recall_by_class,
)
from corpus_forge.synth import SynthSpec, gen_diarization, gen_trials, oracle_der, oracle_eer
from corpus_forge.timeline import Annotation, Timeline


def ann(mapping):
    return Annotation.from_mapping(mapping)


class TestDer:
    def test_confusion_case(self):
        b = der(ann({"A": [(0, 10)]}), ann({"1": [(0, 8)], "2": [(8, 10)]}))
        assert (b.missed_ms, b.false_alarm_ms, b.confusion_ms, b.scored_speech_ms) == (0, 0, 2000, 10000)
        assert b.der == 0.2
        assert b.mapping == {"1": "A"}

    def test_identity_any_labels(self):
        ref = ann({"A": [(0, 3), (5, 7)], "B": [(2, 6)]})
        assert der(ref, ref.relabel({"A": "x", "B": "y"})).der == 0.0

    def test_empty_hypothesis(self):
        ref = ann({"A": [(0, 3)], "B": [(2, 6)]})
        b = der(ref, Annotation())
        assert b.missed_ms == b.scored_speech_ms == 7000
        assert b.der == 1.0

    def test_false_alarm_and_overlap(self):
        ref = ann({"A": [(0, 4)], "B": [(2, 4)]})
        hyp = ann({"x": [(0, 6)]})
        b = der(ref, hyp)
        assert b.scored_speech_ms == 6000
        assert (b.missed_ms, b.false_alarm_ms, b.confusion_ms) == (2000, 2000, 0)

    def test_collar(self):
        ref = ann({"A": [(0, 10)]})
        hyp = ann({"A": [(0.2, 10)]})
        assert der(ref, hyp, collar=0).missed_ms == 200
        assert der(ref, hyp, collar=0.25).der == 0.0
        region = scoring_region(ref, hyp, collar=0.25)
        assert region == Timeline.from_seconds([(0.25, 9.75)])

    def test_uem_restricts(self):
        ref = ann({"A": [(0, 10)]})
        hyp = ann({"A": [(0, 5)]})
        assert der(ref, hyp, uem=Timeline.from_seconds([(0, 5)])).der == 0.0

    def test_empty_region_is_error(self):
        with pytest.raises(ValueError):
            der(Annotation(), ann({"x": [(0, 1)]}))
        with pytest.raises(ValueError):
            der(ann({"A": [(0, 1)]}), Annotation(), collar=1.0)

    def test_negative_collar(self):
        with pytest.raises(ValueError):
            der(ann({"A": [(0, 1)]}), Annotation(), collar=-0.1)

    def test_many_files_pooled(self):
        refs = {"a": ann({"A": [(0, 10)]}), "b": ann({"A": [(0, 10)]})}
        hyps = {"a": ann({"x": [(0, 10)]})}
        total, per_file = der_many(refs, hyps)
        assert per_file["a"].der == 0.0 and per_file["b"].der == 1.0
        assert total.der == 0.5

    def test_summary(self):
        b = der(ann({"A": [(0, 10)]}), ann({"1": [(0, 8)], "2": [(8, 10)]}))
        assert b.summary().startswith("DER=20.00%")

    @pytest.mark.parametrize("seed", range(15))
    @pytest.mark.parametrize("collar", [0.0, 0.25])
    def test_matches_oracle(self, seed, collar):
        ref, hyp = gen_diarization(SynthSpec(n_speakers=3, doc_length=20, seed=seed))
        b = der(ref, hyp, collar)
        o = oracle_der(ref, hyp, collar)
        assert b.der == pytest.approx(o["der"], abs=1e-12)
        assert b.confusion == pytest.approx(o["confusion"], abs=1e-9)


class TestSegmentRecall:
    def test_identity_and_empty(self):
        ref = Timeline.from_seconds([(1.5, 4.2)])
        assert segment_recall(ref, ref) == 1.0
        assert segment_recall(ref, Timeline()) == 0.0

    def test_grid_count(self):
        ref = Timeline.from_seconds([(2, 5)])
        hyp = Timeline.from_seconds([(3, 6)])
        assert segment_recall(ref, hyp) == pytest.approx(2 / 3)

    def test_touching_boundary_is_not_overlap(self):
        assert segment_recall(Timeline.from_seconds([(0, 1)]), Timeline.from_seconds([(1, 2)])) == 0.0

    def test_by_class(self):
        ref = Annotation.from_seconds([(0, 2, "bg"), (5, 6, "fg")])
        out = segment_recall_by_class(ref, Timeline.from_seconds([(0.5, 0.6)]))
        assert out == {"bg": 0.5, "fg": 0.0}

    def test_errors(self):
        with pytest.raises(ValueError):
            segment_recall(Timeline(), Timeline())
        with pytest.raises(ValueError):
            segment_recall(Timeline.from_seconds([(0, 1)]), Timeline(), segment_length=0)


def trials(tgt, non):
    return np.array(list(tgt) + list(non)), np.array([True] * len(tgt) + [False] * len(non))


class TestEer:
    def test_separable(self):
        assert eer(trials([0.8, 0.9], [0.1, 0.2]))[0] == 0.0

    def test_identical(self):
        assert eer(trials([0.1, 0.5, 0.9], [0.1, 0.5, 0.9]))[0] == pytest.approx(0.5)

    def test_crafted(self):
        s, y = trials([0.6, 0.7, 0.9], [0.3, 0.65, 0.8])
        rate, thr = eer((s, y))
        assert rate == pytest.approx(1 / 3)
        assert rate == pytest.approx(oracle_eer(s, y), abs=1e-12)
        assert 0.65 < thr <= 0.8

    def test_scored_trial_input(self):
        ts = [ScoredTrial(0.9, True), ScoredTrial(0.1, False)]
        assert eer(ts)[0] == 0.0

    def test_needs_both_classes(self):
        with pytest.raises(ValueError):
            eer(trials([0.5], []))

    def test_non_finite(self):
        with pytest.raises(ValueError):
            ScoredTrial(float("nan"), True)
        with pytest.raises(ValueError):
            eer(trials([np.inf], [0.0]))

    def test_roc_endpoints(self):
        thr, far, frr = roc_points(trials([0.6, 0.7], [0.3]))
        assert far[0] == 1.0 and frr[0] == 0.0
        assert far[-1] == 0.0 and frr[-1] == 1.0
        assert np.all(np.diff(far) <= 0) and np.all(np.diff(frr) >= 0)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_sweep_oracle(self, seed):
        s, y = gen_trials(40, 60, 0.6, 0.4, 0.15, seed=seed)
        step = 1 / min(40, 60)
        assert eer((s, y))[0] == pytest.approx(oracle_eer(s, y), abs=step)


class TestOperatingPoints:
    def test_separable_has_perfect_point(self):
        pts = pr_sweep(trials([0.8, 0.9], [0.1, 0.2]))
        assert any(p.precision == 1.0 and p.recall == 1.0 for p in pts)

    def test_below_minimum(self):
        s, y = trials([0.8, 0.9], [0.1, 0.2, 0.3])
        op = operating_point((s, y), -1)
        assert op.recall == 1.0 and op.precision == pytest.approx(2 / 5)

    def test_nothing_accepted(self):
        op = operating_point(trials([0.8], [0.1]), 2.0)
        assert op.precision == 1.0 and op.recall == 0.0 and op.frr == 1.0

    def test_sweep_agrees_with_operating_point(self):
        s, y = gen_trials(30, 30, 0.6, 0.4, 0.1, seed=4)
        for p in pr_sweep((s, y)):
            assert p == operating_point((s, y), p.threshold)

    def test_monotone_recall(self):
        s, y = gen_trials(50, 50, 0.6, 0.4, 0.1, seed=5)
        rec = [p.recall for p in pr_sweep((s, y))]
        assert all(a >= b for a, b in zip(rec, rec[1:]))


class TestOverlap:
    def test_examples(self):
        assert distribution_overlap([1, 2, 3], [1, 2, 3]) == 1.0
        assert distribution_overlap([0, 0], [5, 5], bins=10) == 0.0
        assert distribution_overlap([0, 0, 1, 1], [1, 1, 2, 2], bins=2) == 0.5

    def test_errors(self):
        with pytest.raises(ValueError):
            distribution_overlap([], [1])


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=30), st.lists(st.floats(-1, 1), min_size=1, max_size=30))
def test_eer_is_a_rate(tgt, non):
    rate, _ = eer(trials(tgt, non))
    assert 0.0 <= rate <= 1.0
