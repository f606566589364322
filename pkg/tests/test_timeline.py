from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given, strategies as st

from corpus_forge.synth import mask_to_timeline
from corpus_forge.timeline import (
    Annotation,
    Segment,
    Timeline,
    coverage_ratio,
    filter_min_duration,
    intersect,
    normalize,
    subtract,
    to_ms,
    total_duration,
    union,
)

from conftest import mask, timelines


def tl(*pairs):
    return Timeline.from_seconds(pairs)


class TestConversion:
    def test_float_seconds_round_to_ms(self):
        assert to_ms(0.1) == 100
        assert to_ms(1.9) == 1900
        assert to_ms("0.0004") == 0

    def test_int_and_decimal(self):
        assert to_ms(3) == 3000
        assert to_ms(Decimal("0.25")) == 250

    @pytest.mark.parametrize("bad", [float("nan"), float("inf"), "abc", "1e30"])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            to_ms(bad)

    def test_rejects_bool(self):
        with pytest.raises(TypeError):
            to_ms(True)


class TestSegment:
    def test_zero_length_invalid(self):
        with pytest.raises(ValueError):
            Segment(5, 5)

    def test_negative_start_invalid(self):
        with pytest.raises(ValueError):
            Segment(-1, 5)

    def test_float_bounds_refused(self):
        with pytest.raises(TypeError):
            Segment(0.5, 1.0)

    def test_duration(self):
        s = Segment.from_seconds(0.5, 2.5)
        assert s.duration == 2000 and s.duration_s == 2.0


class TestNormalize:
    def test_overlap_merge(self):
        assert normalize(tl((0, 2), (1, 3))) == tl((0, 3))

    def test_adjacency_merge(self):
        assert normalize(tl((0, 1), (1, 2))) == tl((0, 2))

    def test_sort_only(self):
        assert normalize(tl((5, 6), (0, 1))) == tl((0, 1), (5, 6))

    def test_construction_does_not_merge(self):
        t = tl((0, 2), (1, 3))
        assert len(t) == 2 and not t.is_normalized


class TestSetOps:
    def test_union(self):
        assert union(tl((0, 1)), tl((2, 3))) == tl((0, 1), (2, 3))
        assert union(tl((0, 2)), tl((1, 3))) == tl((0, 3))
        x = tl((4, 5), (1, 2))
        assert union(Timeline(), x) == normalize(x)

    def test_intersect(self):
        assert intersect(tl((0, 2)), tl((1, 3))) == tl((1, 2))
        assert intersect(tl((0, 1)), tl((2, 3))) == Timeline()
        x = tl((0, 2), (1, 4), (6, 7))
        assert intersect(x, x) == normalize(x)

    def test_subtract(self):
        assert subtract(tl((0, 10)), tl((4, 6))) == tl((0, 4), (6, 10))
        assert subtract(tl((0, 10)), tl((0, 10))) == Timeline()
        assert subtract(tl((0, 5)), tl((5, 9))) == tl((0, 5))

    def test_operators(self):
        a, b = tl((0, 4)), tl((2, 6))
        assert a | b == tl((0, 6))
        assert a & b == tl((2, 4))
        assert a - b == tl((0, 2))


class TestDurations:
    def test_filter_min_duration(self):
        assert filter_min_duration(tl((0, 1.9), (3, 6)), 2) == tl((3, 6))
        assert filter_min_duration(tl((0, 2)), 2) == tl((0, 2))
        x = tl((0, 0.001), (0.5, 1), (0.9, 2))
        assert filter_min_duration(x, 0) == normalize(x)

    def test_filter_applies_after_merge(self):
        assert filter_min_duration(tl((0, 1), (1, 2.5)), 2) == tl((0, 2.5))

    def test_total_duration(self):
        assert total_duration(tl((0, 2), (1, 3))) == 3000
        assert total_duration(Timeline()) == 0
        assert total_duration(tl((0, 1), (2, 4))) == 3000

    def test_coverage_ratio(self):
        ref = tl((0, 10))
        assert coverage_ratio(ref, ref) == 1.0
        assert coverage_ratio(Timeline(), ref) == 0.0
        assert coverage_ratio(tl((0, 5)), ref) == 0.5

    def test_coverage_ratio_empty_reference(self):
        with pytest.raises(ValueError):
            coverage_ratio(tl((0, 1)), Timeline())

    def test_published_style_coverage_row(self):
        assert round(100 * 23980 / 72311, 1) == 33.2


class TestAnnotation:
    def test_by_label_and_timeline(self):
        ann = Annotation.from_seconds([(0, 2, "a"), (1, 3, "b"), (4, 5, "a")])
        assert ann.labels() == ["a", "b"]
        assert ann.label_timeline("a") == tl((0, 2), (4, 5))
        assert ann.timeline() == tl((0, 3), (4, 5))

    def test_normalize_merges_per_label_only(self):
        ann = Annotation.from_seconds([(0, 2, "a"), (2, 3, "a"), (1, 3, "b")])
        assert ann.normalize() == Annotation.from_seconds([(0, 3, "a"), (1, 3, "b")])

    def test_empty_label_rejected(self):
        with pytest.raises(ValueError):
            Annotation.from_seconds([(0, 1, "")])

    def test_crop_and_relabel(self):
        ann = Annotation.from_mapping({"a": [(0, 4)], "b": [(3, 8)]})
        cropped = ann.crop(tl((2, 5))).relabel({"a": "x"})
        assert cropped == Annotation.from_seconds([(2, 4, "x"), (3, 5, "b")])


# -- properties ---------------------------------------------------------------

@given(timelines())
def test_normalized_form_is_disjoint_and_non_adjacent(x):
    n = normalize(x)
    assert n.is_normalized
    assert all(a.end < b.start for a, b in zip(n, n[1:]))
    assert normalize(n) == n


@given(timelines(), timelines())
def test_ops_match_boolean_masks(a, b):
    ma, mb = mask(a), mask(b)
    assert np.array_equal(mask(union(a, b)), ma | mb)
    assert np.array_equal(mask(intersect(a, b)), ma & mb)
    assert np.array_equal(mask(subtract(a, b)), ma & ~mb)
    assert union(a, b) == mask_to_timeline(ma | mb)


@given(timelines(), timelines())
def test_inclusion_exclusion(a, b):
    assert total_duration(union(a, b)) == total_duration(a) + total_duration(b) - total_duration(intersect(a, b))


@given(timelines(), timelines())
def test_commutativity(a, b):
    assert union(a, b) == union(b, a)
    assert intersect(a, b) == intersect(b, a)


@given(timelines(), timelines(), timelines())
def test_subtract_distributes(a, b, c):
    assert subtract(a, union(b, c)) == subtract(subtract(a, b), c)


@given(timelines(), st.integers(0, 3000))
def test_filter_min_duration_keeps_only_long_segments(x, min_ms):
    out = filter_min_duration(x, Decimal(min_ms) / 1000)
    assert all(s.duration >= min_ms for s in out)
    assert set(out) <= set(normalize(x))
