"""Scoring and metrics: EER, relative-change metrics, per-language reports.

Score polarity is fixed throughout: higher score = more bona fide. A sample
is accepted as bona fide when score >= threshold, so the false-acceptance
rate counts spoof trials at or above the threshold and the false-rejection
rate counts bona fide trials below it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .manifest import Manifest

SCORE_POLARITY = "higher_is_bona_fide"


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreRecord:
    utt_id: str
    score: float
    label: str

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise EvalError(f"non-finite score for {self.utt_id!r}")


def _operating_points(bona: np.ndarray, spoof: np.ndarray):
    """FAR/FRR step-function values over the sorted candidate thresholds.

    Candidates are the sorted unique scores plus a sentinel above the max,
    so the curve runs from (far=1, frr=0) to (far=0, frr=1).
    """
    thresholds = np.unique(np.concatenate([bona, spoof]))
    thresholds = np.concatenate([thresholds, [thresholds[-1] + 1.0]])
    spoof_sorted = np.sort(spoof)
    bona_sorted = np.sort(bona)
    # far(t) = P(spoof >= t), frr(t) = P(bona < t)
    far = (len(spoof) - np.searchsorted(spoof_sorted, thresholds, side="left")) / len(spoof)
    frr = np.searchsorted(bona_sorted, thresholds, side="left") / len(bona)
    return thresholds, far, frr


def compute_eer(scores: Sequence[ScoreRecord]) -> Tuple[float, float]:
    """Equal error rate and its threshold.

    Sweeps the sorted score set; FAR - FRR is non-increasing, so the EER is
    obtained by linear interpolation between the adjacent operating points
    where the sign flips.
    """
    bona = np.array([s.score for s in scores if s.label == "bona_fide"], dtype=float)
    spoof = np.array([s.score for s in scores if s.label == "spoof"], dtype=float)
    if len(bona) == 0 or len(spoof) == 0:
        raise EvalError("EER needs at least one record of each class")
    thresholds, far, frr = _operating_points(bona, spoof)
    return interpolate_eer(thresholds, far, frr)


def interpolate_eer(thresholds: np.ndarray, far: np.ndarray, frr: np.ndarray) -> Tuple[float, float]:
    """EER from a swept (threshold, far, frr) curve with far - frr non-increasing."""
    diff = far - frr
    idx = int(np.argmax(diff <= 0))
    if diff[idx] == 0:
        return float(far[idx]), float(thresholds[idx])
    d1, d2 = diff[idx - 1], diff[idx]
    alpha = d1 / (d1 - d2)
    eer = far[idx - 1] + alpha * (far[idx] - far[idx - 1])
    threshold = thresholds[idx - 1] + alpha * (thresholds[idx] - thresholds[idx - 1])
    return float(eer), float(threshold)


def relative_change(eer_ref: float, eer_new: float) -> float:
    """Percent change of eer_new relative to eer_ref (positive = increase)."""
    if eer_ref <= 0:
        raise EvalError("reference EER must be positive")
    return 100.0 * (eer_new - eer_ref) / eer_ref


def avg_relative_reduction(benchmark: Sequence[float], treated: Sequence[float]) -> float:
    """Mean percent change over aligned test sets (negative = reduction)."""
    if len(benchmark) != len(treated):
        raise EvalError("benchmark and treated lists must have the same length")
    if not benchmark:
        raise EvalError("need at least one test set")
    return float(np.mean([relative_change(b, t) for b, t in zip(benchmark, treated)]))


@dataclass
class EvalReport:
    overall_eer: float
    overall_threshold: float
    per_language: Dict[str, Optional[float]]
    metadata: dict = field(default_factory=dict)
    relative_changes: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "overall_eer": self.overall_eer,
            "overall_threshold": self.overall_threshold,
            "per_language": self.per_language,
            "relative_changes": self.relative_changes,
            "metadata": self.metadata,
        }


def join_scores(scores: Iterable[Tuple[str, float]], manifest: Manifest) -> List[ScoreRecord]:
    """Attaches manifest labels to (utt_id, score) pairs."""
    joined = []
    for utt_id, score in scores:
        try:
            rec = manifest.get(utt_id)
        except KeyError:
            raise EvalError(f"scored utt_id {utt_id!r} not found in manifest {manifest.name!r}")
        joined.append(ScoreRecord(utt_id=utt_id, score=score, label=rec.label))
    return joined


def per_language_report(scores: Sequence[ScoreRecord], manifest: Manifest, metadata: Optional[dict] = None) -> EvalReport:
    """Pooled EER overall and per language; single-class groups report None."""
    by_lang: Dict[str, list] = {}
    for s in scores:
        lang = manifest.get(s.utt_id).language
        by_lang.setdefault(lang, []).append(s)
    per_language: Dict[str, Optional[float]] = {}
    for lang in sorted(by_lang):
        group = by_lang[lang]
        labels = {s.label for s in group}
        if len(labels) < 2:
            per_language[lang] = None
        else:
            per_language[lang] = compute_eer(group)[0]
    overall_eer, threshold = compute_eer(scores)
    return EvalReport(
        overall_eer=overall_eer,
        overall_threshold=threshold,
        per_language=per_language,
        metadata=metadata or {},
    )


def write_score_file(path, scores: Iterable[Tuple[str, float]], model_id: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"# polarity={SCORE_POLARITY} model={model_id}\n")
        for utt_id, score in scores:
            fh.write(f"{utt_id} {score:.10g}\n")


def read_score_file(path) -> Tuple[List[Tuple[str, float]], dict]:
    path = Path(path)
    header: dict = {}
    pairs: List[Tuple[str, float]] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    if "=" in token:
                        key, value = token.split("=", 1)
                        header[key] = value
                continue
            parts = line.split()
            if len(parts) != 2:
                raise EvalError(f"{path}:{lineno}: expected 'utt_id score'")
            pairs.append((parts[0], float(parts[1])))
    return pairs, header


def write_report(report: EvalReport, out_dir) -> None:
    """Emits the report summary, per-language table, radar data, and radar figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    lines = ["language\teer"]
    for lang, eer in report.per_language.items():
        lines.append(f"{lang}\t{'undefined' if eer is None else f'{eer:.6f}'}")
    (out_dir / "per_language.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    radar_rows = [(lang, eer) for lang, eer in report.per_language.items() if eer is not None]
    radar_lines = ["language,eer"] + [f"{lang},{eer:.6f}" for lang, eer in radar_rows]
    (out_dir / "radar_data.csv").write_text("\n".join(radar_lines) + "\n", encoding="utf-8")
    if radar_rows:
        _write_radar_figure(radar_rows, out_dir / "radar.svg")


def _write_radar_figure(rows: Sequence[Tuple[str, float]], path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = [lang for lang, _ in rows]
    values = [100.0 * eer for _, eer in rows]
    angles = np.linspace(0, 2 * np.pi, len(labels), endpoint=False).tolist()
    values_closed = values + values[:1]
    angles_closed = angles + angles[:1]
    fig, ax = plt.subplots(subplot_kw={"projection": "polar"})
    ax.plot(angles_closed, values_closed, linewidth=1.5)
    ax.fill(angles_closed, values_closed, alpha=0.25)
    ax.set_xticks(angles)
    ax.set_xticklabels(labels)
    ax.set_title("EER (%) by language")
    fig.savefig(path, format="svg")
    plt.close(fig)
