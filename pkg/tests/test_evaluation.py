import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accent_forge.evaluation import (
    EvalError,
    ScoreRecord,
    avg_relative_reduction,
    compute_eer,
    interpolate_eer,
    join_scores,
    per_language_report,
    read_score_file,
    relative_change,
    write_score_file,
)
from accent_forge.manifest import Manifest, UtteranceRecord
from conftest import make_records


def records_from(bona_scores, spoof_scores):
    recs = [ScoreRecord(f"b{i}", s, "bona_fide") for i, s in enumerate(bona_scores)]
    recs += [ScoreRecord(f"s{i}", s, "spoof") for i, s in enumerate(spoof_scores)]
    return recs


def brute_force_eer(bona_scores, spoof_scores):
    """Independent oracle: exhaustive sweep over midpoints between adjacent
    sorted scores (plus outer sentinels), FAR/FRR by direct counting, same
    crossing interpolation."""
    bona = np.asarray(bona_scores, float)
    spoof = np.asarray(spoof_scores, float)
    pool = np.unique(np.concatenate([bona, spoof]))
    candidates = [pool[0] - 1.0]
    candidates += [(a + b) / 2.0 for a, b in zip(pool[:-1], pool[1:])]
    candidates += [pool[-1] + 1.0]
    fars, frrs = [], []
    for t in candidates:
        fars.append(np.sum(spoof >= t) / len(spoof))
        frrs.append(np.sum(bona < t) / len(bona))
    return interpolate_eer(np.asarray(candidates), np.asarray(fars), np.asarray(frrs))[0]


class TestComputeEer:
    def test_perfect_separation(self):
        eer, _ = compute_eer(records_from([0.9, 0.8], [0.1, 0.2]))
        assert eer == 0.0

    def test_inverted_separation(self):
        eer, _ = compute_eer(records_from([0.1, 0.2], [0.9, 0.8]))
        assert eer == 1.0

    def test_single_class_rejected(self):
        with pytest.raises(EvalError):
            compute_eer(records_from([0.1, 0.2], []))

    def test_nonfinite_score_rejected(self):
        with pytest.raises(EvalError):
            ScoreRecord("a", float("nan"), "spoof")

    def test_matches_brute_force_on_overlap(self):
        rng = np.random.default_rng(42)
        bona = rng.normal(0.5, 1.0, 50)
        spoof = rng.normal(-0.5, 1.0, 50)
        eer, _ = compute_eer(records_from(bona, spoof))
        assert eer == pytest.approx(brute_force_eer(bona, spoof), abs=1e-9)

    @given(
        n_bona=st.integers(2, 40),
        n_spoof=st.integers(2, 40),
        seed=st.integers(0, 10_000),
    )
    @settings(max_examples=200, deadline=None)
    def test_oracle_equivalence_property(self, n_bona, n_spoof, seed):
        rng = np.random.default_rng(seed)
        bona = np.round(rng.normal(0.3, 1.0, n_bona), 2)  # rounding forces ties
        spoof = np.round(rng.normal(-0.3, 1.0, n_spoof), 2)
        eer, _ = compute_eer(records_from(bona, spoof))
        assert abs(eer - brute_force_eer(bona, spoof)) < 1e-9
        assert 0.0 <= eer <= 1.0

    def test_permutation_invariance(self):
        rng = np.random.default_rng(1)
        recs = records_from(rng.normal(0.5, 1, 30), rng.normal(-0.5, 1, 30))
        eer1, _ = compute_eer(recs)
        rng.shuffle(recs)
        eer2, _ = compute_eer(recs)
        assert eer1 == eer2

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(2)
        bona = rng.normal(0.5, 1, 25)
        spoof = rng.normal(-0.5, 1, 25)
        base, _ = compute_eer(records_from(bona, spoof))
        for transform in (lambda x: 2 * x + 1, np.exp, lambda x: x**3):
            eer, _ = compute_eer(records_from(transform(bona), transform(spoof)))
            assert eer == base


class TestRelativeChange:
    def test_published_increase_values(self):
        assert relative_change(30.31, 39.03) == pytest.approx(28.8, abs=0.05)
        assert relative_change(46.19, 53.36) == pytest.approx(15.5, abs=0.05)

    def test_equal_inputs(self):
        assert relative_change(4.2, 4.2) == 0.0

    def test_zero_reference(self):
        with pytest.raises(EvalError):
            relative_change(0.0, 1.0)


class TestAvgRelativeReduction:
    def test_published_reduction_values(self):
        assert avg_relative_reduction([33.54, 21.09], [25.34, 17.67]) == pytest.approx(-20.3, abs=0.05)
        assert avg_relative_reduction([35.68, 22.10], [25.21, 15.99]) == pytest.approx(-28.5, abs=0.05)

    def test_length_mismatch(self):
        with pytest.raises(EvalError):
            avg_relative_reduction([1.0], [1.0, 2.0])

    def test_sign_convention(self):
        assert avg_relative_reduction([10.0], [5.0]) == -50.0


class TestPerLanguageReport:
    def _manifest(self):
        recs = make_records(3, 3, language="de", prefix="de") + make_records(3, 3, language="fr", prefix="fr")
        return Manifest(recs, name="xl")

    def test_perfectly_separated_languages(self):
        manifest = self._manifest()
        scores = [
            ScoreRecord(r.utt_id, 1.0 if r.label == "bona_fide" else -1.0, r.label)
            for r in manifest.records
        ]
        report = per_language_report(scores, manifest)
        assert report.per_language == {"de": 0.0, "fr": 0.0}
        assert report.overall_eer == 0.0

    def test_single_class_language_is_undefined(self):
        recs = make_records(2, 2, language="de", prefix="de")
        recs.append(UtteranceRecord("nl-only", "x.wav", "bona_fide", "nl", "s", "test"))
        manifest = Manifest(recs)
        scores = [ScoreRecord(r.utt_id, 1.0 if r.label == "bona_fide" else 0.0, r.label) for r in recs]
        report = per_language_report(scores, manifest)
        assert report.per_language["nl"] is None
        assert report.per_language["de"] == 0.0

    def test_pooled_equals_direct(self):
        manifest = self._manifest()
        rng = np.random.default_rng(3)
        scores = [ScoreRecord(r.utt_id, float(rng.normal()), r.label) for r in manifest.records]
        report = per_language_report(scores, manifest)
        assert report.overall_eer == compute_eer(scores)[0]


def test_score_file_round_trip(tmp_path):
    path = tmp_path / "scores.txt"
    pairs = [("utt-1", 0.25), ("utt-2", -1.5)]
    write_score_file(path, pairs, model_id="ckpt-a")
    loaded, header = read_score_file(path)
    assert loaded == pairs
    assert header["polarity"] == "higher_is_bona_fide"
    assert header["model"] == "ckpt-a"


def test_join_scores_unknown_id():
    manifest = Manifest(make_records(1, 1))
    with pytest.raises(EvalError):
        join_scores([("ghost", 0.0)], manifest)
