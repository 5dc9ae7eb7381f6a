"""Accent-based dataset expansion: voice English transcripts through a bank
of multi-accent / multi-language TTS engines and emit spoof-labeled manifests.

A deterministic mock backend makes the whole pipeline testable offline; the
remote backend is an HTTP adapter behind the same interface.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from .frontend import save_audio
from .manifest import Manifest, UtteranceRecord

ENGLISH_GROUP = "eng"
MIX_GROUP = "mix"

REMOTE_ENDPOINT_ENV = "ACCENT_FORGE_TTS_ENDPOINT"
REMOTE_API_KEY_ENV = "ACCENT_FORGE_TTS_API_KEY"


class ExpandError(ValueError):
    pass


class SynthesisError(RuntimeError):
    pass


@dataclass(frozen=True)
class TTSEngineSpec:
    engine_id: str
    language_code: str
    accent_tag: str = ""
    output_sample_rate: int = 22050
    backend: Optional[object] = None


@dataclass(frozen=True)
class Transcript:
    text: str
    transcript_id: str
    source: str = ""

    def __post_init__(self):
        if not self.text.strip():
            raise ExpandError(f"transcript {self.transcript_id!r} has empty text")


class EngineRegistry:
    """Engines queryable by id, language, and accent group."""

    def __init__(self, specs: Sequence[TTSEngineSpec]):
        self._by_id: Dict[str, TTSEngineSpec] = {}
        for spec in specs:
            if spec.engine_id in self._by_id:
                raise ExpandError(f"duplicate engine_id {spec.engine_id!r}")
            self._by_id[spec.engine_id] = spec
        self.specs = list(specs)

    def __len__(self):
        return len(self.specs)

    def get(self, engine_id: str) -> TTSEngineSpec:
        try:
            return self._by_id[engine_id]
        except KeyError:
            raise ExpandError(f"unknown engine_id {engine_id!r}")

    def by_language(self, language_code: str) -> List[TTSEngineSpec]:
        return [s for s in self.specs if s.language_code == language_code]

    def group(self, name: str) -> List[TTSEngineSpec]:
        """"eng" = English-accent engines; "mix" = other-language engines."""
        if name in (ENGLISH_GROUP, "english-accents"):
            return [s for s in self.specs if s.language_code == "en"]
        if name in (MIX_GROUP, "other-language"):
            return [s for s in self.specs if s.language_code != "en"]
        raise ExpandError(f"unknown engine group {name!r}")


def register_engines(specs: Sequence[TTSEngineSpec]) -> EngineRegistry:
    return EngineRegistry(specs)


def load_engine_registry(path) -> EngineRegistry:
    """Reads a registry file: a YAML list of engine entries."""
    entries = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if not isinstance(entries, list):
        raise ExpandError(f"{path}: registry must be a list of engine entries")
    specs = []
    for entry in entries:
        specs.append(
            TTSEngineSpec(
                engine_id=entry["engine_id"],
                language_code=entry["language_code"],
                accent_tag=entry.get("accent_tag", ""),
                output_sample_rate=int(entry.get("output_sample_rate", 22050)),
            )
        )
    return EngineRegistry(specs)


def load_transcripts(directory) -> List[Transcript]:
    """One transcript per line from every *.txt file; ids are <stem>-<lineno>."""
    directory = Path(directory)
    transcripts = []
    for path in sorted(directory.glob("*.txt")):
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                text = line.strip()
                if not text:
                    continue
                transcripts.append(Transcript(text=text, transcript_id=f"{path.stem}-{lineno:06d}", source=path.stem))
    return transcripts


class MockSynthesisBackend:
    """Deterministic offline backend.

    The waveform is a fixed-length sum of sinusoids whose frequencies and
    phases derive from a stable hash of (engine_id, text), so repeated calls
    are bit-identical and distinct inputs separate with high probability.
    """

    max_text_len = 5000
    duration_sec = 0.5
    n_components = 4

    def __init__(self, registry: Optional[EngineRegistry] = None):
        self.registry = registry

    def supports(self, engine_id: str) -> bool:
        return self.registry is None or any(s.engine_id == engine_id for s in self.registry.specs)

    def synthesize(self, engine_id: str, text: str) -> Tuple[np.ndarray, int]:
        if self.registry is not None:
            rate = self.registry.get(engine_id).output_sample_rate
        else:
            rate = 22050
        digest = hashlib.sha256(f"{engine_id}\x00{text}".encode("utf-8")).digest()
        n = int(self.duration_sec * rate)
        t = np.arange(n) / rate
        wave = np.zeros(n)
        for k in range(self.n_components):
            chunk = digest[4 * k : 4 * k + 4]
            freq = 200.0 + (int.from_bytes(chunk[:2], "big") / 65535.0) * 3600.0
            phase = (int.from_bytes(chunk[2:], "big") / 65535.0) * 2 * np.pi
            wave += np.sin(2 * np.pi * freq * t + phase)
        return wave / self.n_components, rate


class RemoteSynthesisBackend:
    """HTTP client adapter with bounded retries and a requests-per-second cap.

    Expects a POST endpoint returning 16-bit PCM samples as JSON; endpoint
    and key come from environment variables unless given explicitly.
    """

    max_text_len = 5000

    def __init__(self, endpoint: Optional[str] = None, api_key: Optional[str] = None, max_retries: int = 3, requests_per_second: float = 5.0, session=None):
        self.endpoint = endpoint or os.environ.get(REMOTE_ENDPOINT_ENV)
        if not self.endpoint:
            raise SynthesisError(f"remote TTS endpoint not configured (set {REMOTE_ENDPOINT_ENV})")
        self.api_key = api_key or os.environ.get(REMOTE_API_KEY_ENV, "")
        self.max_retries = max_retries
        self.min_interval = 1.0 / requests_per_second if requests_per_second > 0 else 0.0
        self._last_request = 0.0
        if session is None:
            import requests

            session = requests.Session()
        self.session = session

    def synthesize(self, engine_id: str, text: str) -> Tuple[np.ndarray, int]:
        payload = {"engine_id": engine_id, "text": text}
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        last_error: Optional[Exception] = None
        for attempt in range(self.max_retries):
            wait = self.min_interval - (time.monotonic() - self._last_request)
            if wait > 0:
                time.sleep(wait)
            self._last_request = time.monotonic()
            try:
                resp = self.session.post(self.endpoint, json=payload, headers=headers, timeout=30)
                if resp.status_code == 200:
                    body = resp.json()
                    samples = np.asarray(body["samples"], dtype=np.float64) / 32768.0
                    return samples, int(body["sample_rate"])
                last_error = SynthesisError(f"TTS endpoint returned {resp.status_code}")
            except Exception as exc:  # transport errors retry
                last_error = exc
            time.sleep(min(2**attempt * 0.5, 4.0))
        raise SynthesisError(f"backend unreachable after {self.max_retries} retries: {last_error}")


def synthesize(backend, engine_id: str, text: str) -> Tuple[np.ndarray, int]:
    """Validated synthesis call returning (samples, rate)."""
    if not text.strip():
        raise ExpandError("text must be non-empty")
    limit = getattr(backend, "max_text_len", None)
    if limit is not None and len(text) > limit:
        raise ExpandError(f"text length {len(text)} exceeds backend limit {limit}")
    if hasattr(backend, "supports") and not backend.supports(engine_id):
        raise ExpandError(f"engine {engine_id!r} not supported by backend")
    samples, rate = backend.synthesize(engine_id, text)
    if len(samples) == 0:
        raise SynthesisError(f"backend returned empty waveform for {engine_id!r}")
    return samples, rate


def assign_engines(transcripts: Sequence[Transcript], engines: Sequence[TTSEngineSpec], policy: str, seed: int) -> List[Tuple[str, str]]:
    """Pairs every transcript with one engine from the group."""
    if not engines:
        raise ExpandError("engine group is empty")
    if policy == "round_robin":
        return [(t.transcript_id, engines[i % len(engines)].engine_id) for i, t in enumerate(transcripts)]
    if policy == "uniform_random":
        digest = hashlib.sha256(f"assign:{seed}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        picks = rng.integers(0, len(engines), size=len(transcripts))
        return [(t.transcript_id, engines[int(k)].engine_id) for t, k in zip(transcripts, picks)]
    raise ExpandError(f"unknown assignment policy {policy!r}")


@dataclass
class ExpansionResult:
    manifest: Manifest
    failures: List[Tuple[str, str]] = field(default_factory=list)  # (transcript_id, reason)


def expand(
    transcripts: Sequence[Transcript],
    registry: EngineRegistry,
    group: str,
    policy: str,
    seed: int,
    output_dir,
    backend=None,
    workers: int = 1,
) -> ExpansionResult:
    """Synthesizes one spoof-labeled recording per transcript.

    Records carry label=spoof, portion=II, language="en" (accent engines
    voice English text), source=engine_id, accent=the engine accent tag.
    Failed syntheses land in failures.jsonl and are excluded from the
    manifest. Output order is stable by transcript_id.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    if backend is None:
        backend = MockSynthesisBackend(registry)
    engines = registry.group(group)
    assignment = assign_engines(sorted(transcripts, key=lambda t: t.transcript_id), engines, policy, seed)
    by_id = {t.transcript_id: t for t in transcripts}

    def _render(pair):
        transcript_id, engine_id = pair
        transcript = by_id[transcript_id]
        spec = registry.get(engine_id)
        samples, rate = synthesize(backend, engine_id, transcript.text)
        utt_id = f"{transcript_id}__{engine_id}"
        filename = f"{utt_id}.wav"
        save_audio(output_dir / filename, samples, rate)
        return UtteranceRecord(
            utt_id=utt_id,
            audio_path=filename,
            label="spoof",
            language="en",
            accent=spec.accent_tag or spec.language_code,
            source=engine_id,
            portion="II",
            duration_sec=len(samples) / rate,
        )

    records = []
    failures: List[Tuple[str, str]] = []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda p: _try_render(_render, p), assignment))
    else:
        outcomes = [_try_render(_render, p) for p in assignment]
    for pair, outcome in zip(assignment, outcomes):
        if isinstance(outcome, Exception):
            failures.append((pair[0], str(outcome)))
        else:
            records.append(outcome)

    records.sort(key=lambda r: r.utt_id)
    manifest = Manifest(records, name=f"accent-{group}", root=output_dir)
    if failures:
        with (output_dir / "failures.jsonl").open("w", encoding="utf-8") as fh:
            for transcript_id, reason in failures:
                fh.write(json.dumps({"transcript_id": transcript_id, "reason": reason}) + "\n")
    return ExpansionResult(manifest=manifest, failures=failures)


def _try_render(fn, pair):
    try:
        return fn(pair)
    except Exception as exc:
        return exc
