import math

import numpy as np
import pytest

from accent_forge.expand import (
    EngineRegistry,
    ExpandError,
    MockSynthesisBackend,
    RemoteSynthesisBackend,
    SynthesisError,
    Transcript,
    TTSEngineSpec,
    assign_engines,
    expand,
    load_engine_registry,
    load_transcripts,
    register_engines,
    synthesize,
)


def engine_specs(n, language="en", prefix="en"):
    return [
        TTSEngineSpec(engine_id=f"{prefix}-{i:02d}", language_code=language, accent_tag=f"acc{i}" if language == "en" else "")
        for i in range(n)
    ]


def transcripts(n):
    return [Transcript(text=f"sample sentence number {i}", transcript_id=f"libri-{i:06d}") for i in range(n)]


class TestRegistry:
    def test_groups(self):
        registry = register_engines(engine_specs(14) + engine_specs(78, language="fr", prefix="fr"))
        assert len(registry.group("eng")) == 14
        assert len(registry.group("mix")) == 78

    def test_empty_registry(self):
        assert len(register_engines([])) == 0

    def test_duplicate_engine(self):
        spec = TTSEngineSpec("dup", "en")
        with pytest.raises(ExpandError):
            register_engines([spec, spec])

    def test_registry_file_round_trip(self, tmp_path):
        path = tmp_path / "engines.yaml"
        path.write_text(
            "- engine_id: en-au\n  language_code: en\n  accent_tag: australia\n"
            "- engine_id: tts-fr\n  language_code: fr\n"
        )
        registry = load_engine_registry(path)
        assert registry.get("en-au").accent_tag == "australia"
        assert registry.get("tts-fr").language_code == "fr"


class TestAssignEngines:
    def test_round_robin_order(self):
        engines = engine_specs(14)
        pairs = assign_engines(transcripts(3), engines, "round_robin", seed=0)
        assert [e for _, e in pairs] == ["en-00", "en-01", "en-02"]

    def test_empty_group(self):
        with pytest.raises(ExpandError):
            assign_engines(transcripts(2), [], "round_robin", seed=0)

    def test_empty_transcripts(self):
        assert assign_engines([], engine_specs(3), "uniform_random", seed=0) == []

    def test_uniform_random_binomial_bound(self):
        # each engine count within mean +/- 5 sigma of Binomial(1000, 1/14)
        engines = engine_specs(14)
        pairs = assign_engines(transcripts(1000), engines, "uniform_random", seed=123)
        counts = {e.engine_id: 0 for e in engines}
        for _, engine_id in pairs:
            counts[engine_id] += 1
        mean = 1000 / 14
        sigma = math.sqrt(1000 * (1 / 14) * (13 / 14))
        for c in counts.values():
            assert mean - 5 * sigma <= c <= mean + 5 * sigma

    def test_uniform_random_deterministic(self):
        engines = engine_specs(5)
        a = assign_engines(transcripts(50), engines, "uniform_random", seed=7)
        b = assign_engines(transcripts(50), engines, "uniform_random", seed=7)
        assert a == b


class TestMockBackend:
    def test_bit_identical_repeats(self):
        backend = MockSynthesisBackend()
        a, ra = backend.synthesize("en-gb", "hello")
        b, rb = backend.synthesize("en-gb", "hello")
        assert ra == rb
        assert np.array_equal(a, b)

    def test_engines_separate(self):
        backend = MockSynthesisBackend()
        a, _ = backend.synthesize("en-gb", "hello")
        b, _ = backend.synthesize("en-au", "hello")
        # hash-separation: distinct engines must yield distinct waveforms
        assert not np.array_equal(a, b)
        assert np.max(np.abs(a - b)) > 1e-3

    def test_empty_text_rejected(self):
        with pytest.raises(ExpandError):
            synthesize(MockSynthesisBackend(), "en-gb", "   ")

    def test_text_too_long(self):
        backend = MockSynthesisBackend()
        with pytest.raises(ExpandError):
            synthesize(backend, "en-gb", "x" * (backend.max_text_len + 1))

    def test_unknown_engine_with_registry(self):
        registry = register_engines(engine_specs(2))
        with pytest.raises(ExpandError):
            synthesize(MockSynthesisBackend(registry), "ghost", "hello")


class TestExpand:
    def test_cardinality_and_record_contract(self, tmp_path):
        registry = register_engines(engine_specs(14))
        result = expand(transcripts(5), registry, "eng", "round_robin", 0, tmp_path)
        assert len(result.manifest) == 5
        assert not result.failures
        for rec in result.manifest:
            assert rec.label == "spoof"
            assert rec.portion == "II"
            assert rec.accent
            assert rec.language == "en"
            assert (tmp_path / rec.audio_path).exists()

    def test_rerun_bit_identical(self, tmp_path):
        registry = register_engines(engine_specs(14))
        r1 = expand(transcripts(6), registry, "eng", "uniform_random", 3, tmp_path / "a")
        r2 = expand(transcripts(6), registry, "eng", "uniform_random", 3, tmp_path / "b")
        assert [r.utt_id for r in r1.manifest] == [r.utt_id for r in r2.manifest]
        for rec in r1.manifest:
            assert (tmp_path / "a" / rec.audio_path).read_bytes() == (tmp_path / "b" / rec.audio_path).read_bytes()

    def test_round_robin_covers_all_engines(self, tmp_path):
        registry = register_engines(engine_specs(14))
        result = expand(transcripts(14), registry, "eng", "round_robin", 0, tmp_path)
        assert {r.source for r in result.manifest} == {s.engine_id for s in registry.specs}

    def test_partial_failure_excluded(self, tmp_path):
        registry = register_engines(engine_specs(3))

        class FlakyBackend(MockSynthesisBackend):
            def synthesize(self, engine_id, text):
                if "0002" in text or text.endswith("2"):
                    raise SynthesisError("boom")
                return super().synthesize(engine_id, text)

        result = expand(transcripts(4), registry, "eng", "round_robin", 0, tmp_path, backend=FlakyBackend())
        assert len(result.manifest) == 3
        assert len(result.failures) == 1
        assert (tmp_path / "failures.jsonl").exists()

    def test_parallel_matches_serial(self, tmp_path):
        registry = register_engines(engine_specs(4))
        serial = expand(transcripts(8), registry, "eng", "round_robin", 0, tmp_path / "s", workers=1)
        parallel = expand(transcripts(8), registry, "eng", "round_robin", 0, tmp_path / "p", workers=4)
        assert [r.utt_id for r in serial.manifest] == [r.utt_id for r in parallel.manifest]


class TestTranscripts:
    def test_load_from_directory(self, tmp_path):
        (tmp_path / "book.txt").write_text("first line\n\nsecond line\n", encoding="utf-8")
        loaded = load_transcripts(tmp_path)
        assert [t.transcript_id for t in loaded] == ["book-000001", "book-000003"]

    def test_empty_text_rejected(self):
        with pytest.raises(ExpandError):
            Transcript(text="  ", transcript_id="x")


class TestRemoteBackend:
    def test_requires_endpoint(self, monkeypatch):
        monkeypatch.delenv("ACCENT_FORGE_TTS_ENDPOINT", raising=False)
        with pytest.raises(SynthesisError):
            RemoteSynthesisBackend()

    def test_bounded_retries(self):
        calls = []

        class FailingSession:
            def post(self, *a, **k):
                calls.append(1)
                raise ConnectionError("no route")

        backend = RemoteSynthesisBackend(endpoint="http://tts.invalid", max_retries=3, requests_per_second=1000, session=FailingSession())
        with pytest.raises(SynthesisError, match="after 3 retries"):
            backend.synthesize("en-gb", "hello")
        assert len(calls) == 3

    def test_successful_response(self):
        class OkSession:
            def post(self, *a, **k):
                class Resp:
                    status_code = 200

                    def json(self):
                        return {"samples": [0, 16384, -16384], "sample_rate": 22050}

                return Resp()

        backend = RemoteSynthesisBackend(endpoint="http://tts.invalid", requests_per_second=1000, session=OkSession())
        samples, rate = backend.synthesize("en-gb", "hello")
        assert rate == 22050
        assert samples == pytest.approx([0.0, 0.5, -0.5])
