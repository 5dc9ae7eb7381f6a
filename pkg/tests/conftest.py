import numpy as np
import pytest

from accent_forge.manifest import Manifest, UtteranceRecord


def make_records(n_bona, n_spoof, language="en", prefix="u", portion="I", source="synth"):
    records = []
    for i in range(n_bona):
        records.append(
            UtteranceRecord(
                utt_id=f"{prefix}-bona-{i:07d}",
                audio_path=f"{prefix}-bona-{i:07d}.wav",
                label="bona_fide",
                language=language,
                source=source,
                portion=portion,
            )
        )
    for i in range(n_spoof):
        records.append(
            UtteranceRecord(
                utt_id=f"{prefix}-spoof-{i:07d}",
                audio_path=f"{prefix}-spoof-{i:07d}.wav",
                label="spoof",
                language=language,
                source=source,
                portion=portion,
            )
        )
    return records


@pytest.fixture
def small_manifest():
    return Manifest(make_records(4, 6), name="small")


def sine(freq=440.0, sr=16000, seconds=1.0, amp=0.5):
    t = np.arange(int(sr * seconds)) / sr
    return amp * np.sin(2 * np.pi * freq * t)


def dominant_freq(samples, sr):
    spec = np.abs(np.fft.rfft(samples * np.hanning(len(samples))))
    return np.fft.rfftfreq(len(samples), 1.0 / sr)[int(np.argmax(spec))]
