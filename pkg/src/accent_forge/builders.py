"""Cross-lingual evaluation set builders.

Two recipes: a voice-conversion set where every bona fide utterance is
spoofed exactly once by converting it toward a random same-language target,
and a TTS set where each language gets a configurable multiple of spoof
samples synthesized from transcripts.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .expand import EngineRegistry, Transcript, synthesize
from .frontend import save_audio
from .manifest import Manifest, UtteranceRecord


class BuilderError(ValueError):
    pass


class MockVoiceConversionBackend:
    """Deterministic offline VC stand-in: waveform from a hash of (source, target)."""

    output_sample_rate = 16000
    duration_sec = 0.5

    def convert(self, source_wave: Optional[np.ndarray], source_id: str, target_id: str) -> Tuple[np.ndarray, int]:
        digest = hashlib.sha256(f"vc:{source_id}\x00{target_id}".encode("utf-8")).digest()
        rate = self.output_sample_rate
        n = int(self.duration_sec * rate)
        t = np.arange(n) / rate
        wave = np.zeros(n)
        for k in range(4):
            chunk = digest[4 * k : 4 * k + 4]
            freq = 150.0 + (int.from_bytes(chunk[:2], "big") / 65535.0) * 3000.0
            phase = (int.from_bytes(chunk[2:], "big") / 65535.0) * 2 * np.pi
            wave += np.sin(2 * np.pi * freq * t + phase)
        return wave / 4.0, rate


def _group_by_language(manifest: Manifest) -> Dict[str, List[UtteranceRecord]]:
    groups: Dict[str, List[UtteranceRecord]] = {}
    for rec in manifest.records:
        groups.setdefault(rec.language, []).append(rec)
    return groups


def build_vc_cl3(bona: Manifest, backend, seed: int, output_dir, source_tag: str = "vc") -> Manifest:
    """Balanced VC test set: each bona fide record is spoofed exactly once.

    The conversion target is drawn uniformly (seeded) from the same language
    group, excluding the source record itself (by speaker where speaker ids
    are available, else by record).
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    if any(r.label != "bona_fide" for r in bona.records):
        raise BuilderError("input manifest must contain only bona fide records")
    groups = _group_by_language(bona)
    records: List[UtteranceRecord] = list(bona.records)
    for language in sorted(groups):
        group = sorted(groups[language], key=lambda r: r.utt_id)
        if len(group) < 2:
            raise BuilderError(f"language {language!r} has a single record; no distinct conversion target")
        digest = hashlib.sha256(f"vc_cl3:{seed}:{language}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        for rec in group:
            candidates = [
                c for c in group
                if c.utt_id != rec.utt_id
                and (rec.speaker_id is None or c.speaker_id != rec.speaker_id)
            ]
            if not candidates:
                raise BuilderError(f"no distinct target speaker for {rec.utt_id!r} in language {language!r}")
            target = candidates[int(rng.integers(len(candidates)))]
            samples, rate = backend.convert(None, rec.utt_id, target.utt_id)
            utt_id = f"{rec.utt_id}__vc"
            filename = f"{utt_id}.wav"
            save_audio(output_dir / filename, samples, rate)
            records.append(
                UtteranceRecord(
                    utt_id=utt_id,
                    audio_path=filename,
                    label="spoof",
                    language=language,
                    source=source_tag,
                    portion="test",
                    speaker_id=target.speaker_id,
                    duration_sec=len(samples) / rate,
                )
            )
    return Manifest(records, name="vc-cl3", root=output_dir)


def build_tts_cl(
    bona: Manifest,
    transcripts: Sequence[Transcript],
    registry: EngineRegistry,
    tts_backend,
    vocoder_tag: str,
    output_dir,
    spoof_per_bona: float = 5.0,
    seed: int = 0,
) -> Manifest:
    """TTS cross-lingual set: ~spoof_per_bona spoof samples per bona record.

    Spoof records inherit the language of the bona subset; source is tagged
    "<engine_id>+<vocoder_tag>". Languages without a registered engine are
    rejected.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    if not transcripts:
        raise BuilderError("transcripts must be non-empty")
    groups = _group_by_language(bona)
    for language in sorted(groups):
        if not registry.by_language(language):
            raise BuilderError(f"no TTS engine registered for language {language!r}")
    transcripts = sorted(transcripts, key=lambda t: t.transcript_id)
    records: List[UtteranceRecord] = list(bona.records)
    for language in sorted(groups):
        engines = registry.by_language(language)
        n_spoof = int(round(len(groups[language]) * spoof_per_bona))
        for i in range(n_spoof):
            transcript = transcripts[i % len(transcripts)]
            engine = engines[i % len(engines)]
            samples, rate = synthesize(tts_backend, engine.engine_id, transcript.text)
            utt_id = f"ttscl-{language}-{i:06d}"
            filename = f"{utt_id}.wav"
            save_audio(output_dir / filename, samples, rate)
            records.append(
                UtteranceRecord(
                    utt_id=utt_id,
                    audio_path=filename,
                    label="spoof",
                    language=language,
                    source=f"{engine.engine_id}+{vocoder_tag}",
                    portion="test",
                    duration_sec=len(samples) / rate,
                )
            )
    return Manifest(records, name="tts-cl", root=output_dir)
