import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accent_forge.manifest import (
    Manifest,
    ManifestError,
    UtteranceRecord,
    downsample,
    load_manifest,
    merge,
    save_manifest,
    split,
    summarize,
)
from conftest import make_records


def test_record_rejects_bad_label():
    with pytest.raises(ManifestError):
        UtteranceRecord("a", "a.wav", "genuine", "en", "x", "I")


def test_portion_two_must_be_spoof():
    with pytest.raises(ManifestError, match="portion II"):
        UtteranceRecord("a", "a.wav", "bona_fide", "en", "x", "II")


def test_duplicate_id_rejected():
    rec = UtteranceRecord("a", "a.wav", "spoof", "en", "x", "I")
    with pytest.raises(ManifestError, match="duplicate"):
        Manifest([rec, rec])


class TestLoadSave:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.mnf"
        path.write_text("")
        assert len(load_manifest(path)) == 0

    def test_order_preserved(self, tmp_path):
        m = Manifest(make_records(2, 2), name="m")
        save_manifest(m, tmp_path / "m.mnf")
        loaded = load_manifest(tmp_path / "m.mnf")
        assert loaded.records == m.records

    def test_duplicate_id_in_file(self, tmp_path):
        rec = UtteranceRecord("dup", "a.wav", "spoof", "en", "x", "I")
        path = tmp_path / "m.mnf"
        path.write_text(rec.to_json() + "\n" + rec.to_json() + "\n")
        with pytest.raises(ManifestError, match="dup"):
            load_manifest(path)

    def test_parse_error_has_line_number(self, tmp_path):
        path = tmp_path / "m.mnf"
        path.write_text('{"utt_id": "a"\n')
        with pytest.raises(ManifestError, match=":1:"):
            load_manifest(path)

    def test_non_ascii_round_trip(self, tmp_path):
        rec = UtteranceRecord("日本語-01", "a.wav", "bona_fide", "ja", "css10", "test")
        m = Manifest([rec])
        save_manifest(m, tmp_path / "m.mnf")
        assert load_manifest(tmp_path / "m.mnf").records == [rec]

    def test_unwritable_path(self, tmp_path):
        m = Manifest(make_records(1, 0))
        target = tmp_path / "m.mnf"
        target.mkdir()
        with pytest.raises(OSError):
            save_manifest(m, target)


class TestSplit:
    def test_exact_ratio(self):
        m = Manifest(make_records(5, 0))
        train, valid = split(m, 4, 1, seed=0)
        assert (len(train), len(valid)) == (4, 1)

    def test_empty_manifest(self):
        with pytest.raises(ManifestError):
            split(Manifest([]), 4, 1, seed=0)

    def test_deterministic_and_seed_sensitive(self):
        m = Manifest(make_records(40, 60))
        t1, v1 = split(m, 4, 1, seed=3)
        t2, v2 = split(m, 4, 1, seed=3)
        t3, _ = split(m, 4, 1, seed=4)
        assert [r.utt_id for r in t1] == [r.utt_id for r in t2]
        assert len(t3) == len(t1)
        assert {r.utt_id for r in t3} != {r.utt_id for r in t1}

    def test_partition(self):
        m = Manifest(make_records(13, 17))
        train, valid = split(m, 4, 1, seed=1)
        ids = sorted(r.utt_id for r in train) + sorted(r.utt_id for r in valid)
        assert sorted(ids) == sorted(r.utt_id for r in m)
        assert not set(r.utt_id for r in train) & set(r.utt_id for r in valid)

    @given(n_bona=st.integers(1, 60), n_spoof=st.integers(1, 60), seed=st.integers(0, 50))
    @settings(max_examples=60, deadline=None)
    def test_stratification_property(self, n_bona, n_spoof, seed):
        m = Manifest(make_records(n_bona, n_spoof))
        train, valid = split(m, 4, 1, seed=seed)
        assert len(train) + len(valid) == len(m)
        assert {r.utt_id for r in train} | {r.utt_id for r in valid} == {r.utt_id for r in m}
        if len(train):
            got = sum(1 for r in train if r.label == "bona_fide") / len(train)
            want = n_bona / len(m)
            assert abs(got - want) <= 1.0 / len(train) + 1e-12


class TestDownsample:
    def test_identity_at_full_size(self):
        m = Manifest(make_records(3, 3))
        out = downsample(m, 6, seed=0)
        assert sorted(r.utt_id for r in out) == sorted(r.utt_id for r in m)

    def test_proportions(self):
        m = Manifest(make_records(4, 6))
        out = downsample(m, 5, seed=0)
        assert out.counts() == {"bona_fide": 2, "spoof": 3, "total": 5}

    def test_too_large_target(self):
        m = Manifest(make_records(2, 2))
        with pytest.raises(ManifestError):
            downsample(m, 5, seed=0)

    def test_sorted_and_deterministic(self):
        m = Manifest(make_records(30, 30))
        a = downsample(m, 20, seed=9)
        b = downsample(m, 20, seed=9)
        assert [r.utt_id for r in a] == sorted(r.utt_id for r in a)
        assert [r.utt_id for r in a] == [r.utt_id for r in b]


class TestMerge:
    def test_single_input(self, small_manifest):
        merged = merge([small_manifest], name="same")
        assert merged.records == small_manifest.records

    def test_counts_additive(self):
        a = Manifest(make_records(3, 4, prefix="a"))
        b = Manifest(make_records(5, 6, prefix="b"))
        merged = merge([a, b], name="ab")
        assert merged.counts() == {"bona_fide": 8, "spoof": 10, "total": 18}

    def test_collision(self, small_manifest):
        with pytest.raises(ManifestError, match="duplicate"):
            merge([small_manifest, small_manifest], name="boom")


class TestSummarize:
    def test_empty(self):
        assert summarize(Manifest([]), ["language"]) == []

    def test_global_counts(self, small_manifest):
        rows = summarize(small_manifest, [])
        assert rows == [{"bona_fide": 4, "spoof": 6, "total": 10}]

    def test_by_language_balanced(self):
        records = []
        for lang, n in [("ca", 4), ("ha", 5)]:
            records += make_records(n, n, language=lang, prefix=lang)
        rows = summarize(Manifest(records), ["language"])
        assert rows == [
            {"language": "ca", "bona_fide": 4, "spoof": 4, "total": 8},
            {"language": "ha", "bona_fide": 5, "spoof": 5, "total": 10},
        ]

    def test_totals_additive_under_merge(self):
        a = Manifest(make_records(2, 3, prefix="a"))
        b = Manifest(make_records(4, 1, prefix="b"))
        merged = merge([a, b], name="ab")
        total = sum(r["total"] for r in summarize(merged, ["label"]))
        assert total == len(a) + len(b)

    def test_bad_field(self, small_manifest):
        with pytest.raises(ManifestError):
            summarize(small_manifest, ["speaker"])
