import struct
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, strategies as st

from corpus_forge.formats import (
    AudioBuffer,
    EmbeddingSet,
    FormatError,
    RttmRecord,
    annotations_to_rttm,
    parse_rttm,
    parse_uem,
    read_cluster_mapping,
    read_embeddings,
    read_perceptual_csv,
    read_trials_csv,
    read_wav,
    rttm_to_annotations,
    write_eaf,
    write_embeddings,
    write_lab,
    write_rttm,
    write_trials_csv,
    write_uem,
    write_wav,
)
from corpus_forge.synth import validate_eaf_structure
from corpus_forge.timeline import Annotation, Segment, Timeline

from conftest import timelines


def wav_bytes(tag, channels, rate, bits, payload, extensible=False):
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", 0xFFFE if extensible else tag, channels, rate, rate * block, block, bits)
    if extensible:
        fmt += struct.pack("<HHIH", 22, bits, 0, tag) + b"\x00" * 14
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body


class TestRttm:
    def test_parse_line(self):
        (rec,) = parse_rttm("SPEAKER doc1 1 0.50 2.00 <NA> <NA> spkA <NA> <NA>\n")
        assert rec == RttmRecord("doc1", 1, 500, 2000, "spkA")
        assert rec.segment == Segment(500, 2500)

    def test_truncated_line_reports_line_number(self):
        text = "SPEAKER doc1 1 0 1 <NA> <NA> a <NA> <NA>\nSPEAKER doc1 1 0.50\n"
        with pytest.raises(FormatError) as err:
            parse_rttm(text)
        assert err.value.line == 2
        assert "line 2" in str(err.value)

    def test_negative_duration(self):
        with pytest.raises(FormatError, match="negative duration"):
            parse_rttm("SPEAKER d 1 0 -1 <NA> <NA> a <NA> <NA>")

    def test_skips_other_types_and_zero_duration(self, caplog):
        text = ("SPKR-INFO d 1 <NA> <NA> <NA> unknown a <NA> <NA>\n"
                "SPEAKER d 1 3 0 <NA> <NA> a <NA> <NA>\n"
                "SPEAKER d 1 3 1 <NA> <NA> a <NA> <NA>\n")
        recs = parse_rttm(text)
        assert [r.onset for r in recs] == [3000]
        assert "skipped 2" in caplog.text

    def test_comments_and_blank_lines(self):
        assert parse_rttm("# header\n\n;; note\n") == []

    def test_bytes_input_must_be_utf8(self):
        with pytest.raises(FormatError, match="UTF-8"):
            parse_rttm(b"\xff\xfe")

    def test_annotation_round_trip(self):
        ann = Annotation.from_seconds([(0, 1.5, "a"), (1, 2.25, "b")])
        text = write_rttm(annotations_to_rttm({"f": ann}))
        assert rttm_to_annotations(parse_rttm(text)) == {"f": ann}

    def test_record_validation(self):
        with pytest.raises(ValueError):
            RttmRecord("has space", 1, 0, 1, "a")
        with pytest.raises(ValueError):
            RttmRecord("f", 1, 0, 0, "a")


records = st.builds(
    RttmRecord,
    file_id=st.sampled_from(["f1", "f2", "doc-3"]),
    channel=st.integers(0, 2),
    onset=st.integers(0, 10**7),
    duration=st.integers(1, 10**6),
    speaker=st.from_regex(r"[A-Za-z0-9_]{1,8}", fullmatch=True),
)


@given(st.lists(records, max_size=30))
def test_rttm_round_trip(recs):
    text = write_rttm(recs)
    assert parse_rttm(text) == recs
    assert write_rttm(parse_rttm(text)) == text


class TestUem:
    def test_parse(self):
        uem = parse_uem("f 1 0.0 10.5\nf 1 20 30\ng 1 1 2\n")
        assert uem["f"] == Timeline.from_seconds([(0, 10.5), (20, 30)])
        assert set(uem) == {"f", "g"}

    @pytest.mark.parametrize("line", ["f 1 2 1", "f 1 0", "f x 0 1", "f 1 a 1"])
    def test_malformed(self, line):
        with pytest.raises(FormatError):
            parse_uem(line)

    @given(timelines())
    def test_round_trip(self, tl):
        uem = {"f": tl.normalize()} if len(tl) else {}
        text = write_uem(uem)
        assert parse_uem(text) == uem
        assert write_uem(parse_uem(text)) == text


class TestEmbeddings:
    def test_valid_and_round_trip(self):
        text = "#dim 2\nf\t0.000\t2.000\t1\t0\nf\t2.000\t4.000\t0.5\t0.5\n"
        es = read_embeddings(text)
        assert es.dim == 2 and len(es) == 2
        assert es.segments[1] == Segment(2000, 4000)
        assert write_embeddings(es) == text

    def test_dimension_mismatch_names_record(self):
        text = "#dim 3\nf\t0\t2\t1\t0\t0\ng\t2\t4\t1\t0\n"
        with pytest.raises(FormatError, match=r"record g \[2, 4\)") as err:
            read_embeddings(text)
        assert err.value.line == 3

    def test_zero_norm_rejected(self):
        with pytest.raises(FormatError, match="zero-norm"):
            read_embeddings("f\t0\t1\t0\t0\n")

    def test_nine_digit_round_trip(self, rng):
        vecs = rng.normal(size=(20, 7))
        es = EmbeddingSet(["a"] * 20, [Segment(i * 10, i * 10 + 5) for i in range(20)], vecs)
        back = read_embeddings(write_embeddings(es))
        np.testing.assert_allclose(back.vectors, vecs, rtol=1e-8)
        assert write_embeddings(back) == write_embeddings(es)

    def test_for_file(self):
        es = EmbeddingSet(["a", "b", "a"], [Segment(0, 1), Segment(0, 1), Segment(1, 2)], np.eye(3))
        assert es.for_file("a").segments == [Segment(0, 1), Segment(1, 2)]


class TestWav:
    def test_pcm16_scaling(self):
        data = wav_bytes(1, 1, 8000, 16, struct.pack("<3h", 16384, -32768, 0))
        audio = read_wav(data)
        assert audio.samples.tolist() == [0.5, -1.0, 0.0]
        assert audio.sample_rate == 8000

    def test_stereo_averaged(self):
        data = wav_bytes(3, 2, 8000, 32, np.array([0.2, 0.4, 0.2, 0.4], "<f4").tobytes())
        audio = read_wav(data)
        np.testing.assert_allclose(audio.samples, [0.3, 0.3], atol=1e-7)

    def test_extensible_pcm(self):
        data = wav_bytes(1, 1, 8000, 16, struct.pack("<h", 8192), extensible=True)
        assert read_wav(data).samples.tolist() == [0.25]

    def test_compressed_rejected_with_tag(self):
        data = wav_bytes(0x55, 1, 8000, 16, b"\x00" * 10)
        with pytest.raises(FormatError, match="0x0055"):
            read_wav(data)

    def test_truncated(self):
        data = wav_bytes(1, 1, 8000, 16, b"\x00" * 100)
        with pytest.raises(FormatError, match="truncated"):
            read_wav(data[:-10])

    @pytest.mark.parametrize("float32", [False, True])
    def test_round_trip(self, float32, rng):
        x = np.round(rng.uniform(-1, 1, 500) * 32767) / 32768
        audio = AudioBuffer(16000, x)
        back = read_wav(write_wav(audio, float32=float32))
        np.testing.assert_allclose(back.samples, x, atol=1e-7)


class TestEaf:
    def test_single_cluster(self):
        xml = write_eaf(Annotation.from_seconds([(0, 2, "cluster_0")]), "show.wav")
        root = ET.fromstring(xml)
        slots = root.findall("TIME_ORDER/TIME_SLOT")
        assert [s.get("TIME_VALUE") for s in slots] == ["0", "2000"]
        tiers = [t.get("TIER_ID") for t in root.findall("TIER")]
        assert "cluster_0" in tiers
        assert validate_eaf_structure(xml) == []

    def test_two_clusters_and_targets(self):
        ann = Annotation.from_seconds([(0, 2, "cluster_0"), (2, 5, "cluster_1"), (6, 7, "cluster_0")])
        xml = write_eaf(ann, "show.wav", ["Jane Doe", "John Roe"])
        root = ET.fromstring(xml)
        tier_ids = [t.get("TIER_ID") for t in root.findall("TIER")]
        assert len(tier_ids) == len(set(tier_ids))
        assert {"cluster_0", "cluster_1"} <= set(tier_ids)
        values = [e.text for e in root.iter("CVE_VALUE")]
        assert values == ["Jane Doe", "John Roe"]
        assert validate_eaf_structure(xml) == []

    def test_empty_is_error(self):
        with pytest.raises(ValueError):
            write_eaf(Annotation(), "x.wav")

    def test_validator_catches_dangling_reference(self):
        xml = write_eaf(Annotation.from_seconds([(0, 2, "c")]), "x.wav").replace('TIME_SLOT_REF2="ts2"',
                                                                                 'TIME_SLOT_REF2="ts9"')
        assert validate_eaf_structure(xml)

    def test_deterministic(self):
        ann = Annotation.from_seconds([(0, 2, "cluster_0")])
        assert write_eaf(ann, "a.wav") == write_eaf(ann, "a.wav")


class TestCsv:
    def test_trials_round_trip(self):
        text = write_trials_csv([0.5, -0.25], [True, False])
        scores, labels = read_trials_csv(text)
        assert scores.tolist() == [0.5, -0.25] and labels.tolist() == [True, False]

    def test_trials_bad_label(self):
        with pytest.raises(FormatError, match="line 2"):
            read_trials_csv("score,is_target\n0.5,maybe\n")

    def test_trials_missing_column(self):
        with pytest.raises(FormatError, match="missing column"):
            read_trials_csv("score\n0.5\n")

    def test_perceptual(self):
        text = ("extract_id,annotator_id,backchannel,several_speakers,music,noise,comment\n"
                "e1,a1,1,0,0,1,loud\ne1,a2,0,0,0,0,\n")
        rows = read_perceptual_csv(text)
        assert rows[0]["backchannel"] and rows[0]["noise"] and rows[0]["comment"] == "loud"
        assert rows[1]["comment"] is None

    def test_perceptual_duplicate(self):
        text = ("extract_id,annotator_id,backchannel,several_speakers,music,noise\n"
                "e1,a1,1,0,0,1\ne1,a1,0,0,0,0\n")
        with pytest.raises(FormatError, match="duplicate"):
            read_perceptual_csv(text)

    def test_cluster_mapping(self):
        m = read_cluster_mapping("file_id,cluster,speaker\nd,cluster_0,s1\nd,cluster_1,s2\n")
        assert m == {("d", "cluster_0"): "s1", ("d", "cluster_1"): "s2"}
        with pytest.raises(FormatError):
            read_cluster_mapping("file_id,cluster,speaker\nd,c,s1\nd,c,s2\n")

    def test_lab(self):
        assert write_lab(Timeline.from_seconds([(0.2, 0.4)])) == "0.200\t0.400\tnse\n"


PARSERS = [parse_rttm, parse_uem, read_embeddings, read_trials_csv, read_perceptual_csv,
           read_cluster_mapping, read_wav]


@pytest.mark.parametrize("parser", PARSERS, ids=lambda f: f.__name__)
@given(data=st.binary(max_size=300))
def test_parsers_fail_cleanly_on_random_bytes(parser, data):
    try:
        parser(data)
    except FormatError:
        pass


@pytest.mark.parametrize("parser", PARSERS[:-1], ids=lambda f: f.__name__)
@given(text=st.text(alphabet=" \t\n\r0123456789.-eE+#;,abcSPEAKR<NA>dimnf\x00", max_size=200))
def test_parsers_fail_cleanly_on_near_valid_text(parser, text):
    try:
        parser(text)
    except FormatError:
        pass
