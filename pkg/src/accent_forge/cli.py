"""accent-forge command line: expand, manifest ops, train, score, eval,
report, and the cross-lingual test-set builders."""

from __future__ import annotations

import argparse
import importlib.resources
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .augment import AugmentError
from .builders import BuilderError, MockVoiceConversionBackend, build_tts_cl, build_vc_cl3
from .config import ConfigError, load_run_config
from .evaluation import (
    EvalError,
    avg_relative_reduction,
    join_scores,
    per_language_report,
    read_score_file,
    relative_change,
    write_report,
    write_score_file,
)
from .expand import (
    ExpandError,
    MockSynthesisBackend,
    RemoteSynthesisBackend,
    expand,
    load_engine_registry,
    load_transcripts,
)
from .frontend import AudioError
from .manifest import (
    ManifestError,
    downsample,
    format_summary,
    load_manifest,
    merge,
    save_manifest,
    split,
    summarize,
)

log = logging.getLogger("accent_forge")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_VALIDATION = 3

VALIDATION_ERRORS = (ManifestError, ExpandError, BuilderError, ConfigError, EvalError, AugmentError, AudioError, ValueError)


def _write_provenance(out_dir: Optional[Path], args: argparse.Namespace, config_hash: str = "") -> None:
    record = {
        "command": args.command,
        "seed": getattr(args, "seed", None),
        "config_hash": config_hash,
        "version": __version__,
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "provenance.json").write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    log.info("provenance: %s", json.dumps(record))


def _backend_from_args(args, registry):
    if args.backend == "mock":
        return MockSynthesisBackend(registry)
    return RemoteSynthesisBackend()


def cmd_expand(args) -> int:
    registry = load_engine_registry(args.engines)
    transcripts = load_transcripts(args.transcripts)
    backend = _backend_from_args(args, registry)
    result = expand(
        transcripts,
        registry,
        group=args.group,
        policy=args.policy,
        seed=args.seed,
        output_dir=args.out,
        backend=backend,
        workers=args.workers,
    )
    save_manifest(result.manifest, Path(args.out) / "expanded.mnf")
    if result.failures:
        log.warning("%d syntheses failed; see failures.jsonl", len(result.failures))
    _write_provenance(Path(args.out), args)
    return EXIT_OK


def cmd_manifest(args) -> int:
    if args.action == "summarize":
        manifest = load_manifest(args.inp)
        table = format_summary(summarize(manifest, args.by or ()))
        sys.stdout.write(table)
        _write_provenance(None, args)
        return EXIT_OK
    if args.action == "split":
        manifest = load_manifest(args.inp)
        ratio_train, ratio_valid = (int(p) for p in args.ratio.split(":"))
        train, valid = split(manifest, ratio_train, ratio_valid, args.seed)
        save_manifest(train, args.out_train)
        save_manifest(valid, args.out_valid)
        _write_provenance(Path(args.out_train).parent, args)
        return EXIT_OK
    if args.action == "downsample":
        manifest = load_manifest(args.inp)
        save_manifest(downsample(manifest, args.target, args.seed), args.out)
        _write_provenance(Path(args.out).parent, args)
        return EXIT_OK
    if args.action == "merge":
        manifests = [load_manifest(p) for p in args.inputs]
        save_manifest(merge(manifests, name=args.name), args.out)
        _write_provenance(Path(args.out).parent, args)
        return EXIT_OK
    raise ManifestError(f"unknown manifest action {args.action!r}")


def cmd_train(args) -> int:
    from .models import build_model
    from .trainer import AudioFeatureSource, train

    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.trainer.seed = args.seed
    if args.deterministic:
        cfg.trainer.deterministic = True
    train_manifest = load_manifest(args.train_manifest)
    valid_manifest = load_manifest(args.valid_manifest)
    model = build_model(cfg.model, seed=cfg.trainer.seed)
    train_source = AudioFeatureSource(train_manifest, cfg.frontend, cfg.trainer.augment, cfg.trainer.seed, training=True)
    valid_source = AudioFeatureSource(valid_manifest, cfg.frontend, None, cfg.trainer.seed, training=False)
    checkpoint, history = train(model, train_manifest, valid_manifest, cfg.trainer, train_source, valid_source)
    checkpoint.save(args.out)
    log.info("best epoch %d, valid EER %.4f, stop: %s", history.best_epoch, history.best_metric, history.stop_reason)
    _write_provenance(Path(args.out).parent, args, cfg.config_hash)
    return EXIT_OK


def cmd_score(args) -> int:
    import numpy as np
    import torch

    from .models import BONA_FIDE_INDEX
    from .trainer import AudioFeatureSource, Checkpoint

    cfg = load_run_config(args.config)
    checkpoint = Checkpoint.load(args.checkpoint)
    model = checkpoint.build()
    manifest = load_manifest(args.manifest)
    source = AudioFeatureSource(manifest, cfg.frontend, None, 0, training=False)
    scores = []
    missing = []
    with torch.no_grad():
        for rec in manifest.records:
            if not manifest.resolve_path(rec).exists():
                missing.append(rec.utt_id)
                continue
            feats = torch.as_tensor(np.asarray(source(rec, 0)), dtype=torch.float32).unsqueeze(0)
            logp = model(feats)[0]
            scores.append((rec.utt_id, float(logp[BONA_FIDE_INDEX] - logp[1 - BONA_FIDE_INDEX])))
    if missing:
        report_path = Path(args.out).with_suffix(".missing.txt")
        report_path.write_text("\n".join(missing) + "\n", encoding="utf-8")
        if len(missing) > 0.01 * len(manifest):
            raise EvalError(f"{len(missing)} of {len(manifest)} records unresolvable (> 1%); see {report_path}")
        log.warning("%d records had missing audio; see %s", len(missing), report_path)
    write_score_file(args.out, scores, model_id=Path(args.checkpoint).stem)
    _write_provenance(Path(args.out).parent, args, cfg.config_hash)
    return EXIT_OK


def cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest)
    pairs, header = read_score_file(args.scores)
    scores = join_scores(pairs, manifest)
    report = per_language_report(scores, manifest, metadata={"model": header.get("model", ""), "manifest": manifest.name})
    write_report(report, args.out)
    sys.stdout.write(f"overall_eer\t{report.overall_eer:.6f}\n")
    for lang, eer in report.per_language.items():
        sys.stdout.write(f"{lang}\t{'undefined' if eer is None else f'{eer:.6f}'}\n")
    _write_provenance(Path(args.out), args)
    return EXIT_OK


def reproduce_tables(reference: Optional[dict] = None):
    """Recomputes the derived columns of the packaged reference tables.

    Returns (rows, all_ok); each row carries the recomputed value, the
    reported one, and a pass flag at the packaged tolerance.
    """
    if reference is None:
        reference = load_reference_results()
    rows = []
    inc = reference["relative_increase"]
    for row in inc["rows"]:
        computed = relative_change(row["eer_ref"], row["eer_new"])
        expected = row["reported_increase_pct"]
        rows.append(
            {
                "table": "relative_increase",
                "name": row["model"],
                "expected": expected,
                "computed": round(computed, 4),
                "ok": abs(computed - expected) <= inc["tolerance_pct_points"],
            }
        )
    red = reference["avg_relative_reduction"]
    for row in red["rows"]:
        computed = avg_relative_reduction(row["benchmark"], row["treated"])
        expected = row["reported_avg_reduction_pct"]
        rows.append(
            {
                "table": "avg_relative_reduction",
                "name": row["system"],
                "expected": expected,
                "computed": round(computed, 4),
                "ok": abs(computed - expected) <= red["tolerance_pct_points"],
            }
        )
    return rows, all(r["ok"] for r in rows)


def load_reference_results() -> dict:
    text = importlib.resources.files("accent_forge.data").joinpath("reference_results.json").read_text(encoding="utf-8")
    return json.loads(text)


def cmd_report(args) -> int:
    rows, all_ok = reproduce_tables()
    sys.stdout.write("table\tname\texpected\tcomputed\tstatus\n")
    for r in rows:
        status = "pass" if r["ok"] else "FAIL"
        sys.stdout.write(f"{r['table']}\t{r['name']}\t{r['expected']}\t{r['computed']}\t{status}\n")
    _write_provenance(None, args)
    return EXIT_OK if all_ok else EXIT_RUNTIME


def cmd_build_vc_cl3(args) -> int:
    bona = load_manifest(args.bona)
    manifest = build_vc_cl3(bona, MockVoiceConversionBackend(), seed=args.seed, output_dir=args.out)
    save_manifest(manifest, Path(args.out) / "vc-cl3.mnf")
    _write_provenance(Path(args.out), args)
    return EXIT_OK


def cmd_build_tts_cl(args) -> int:
    bona = load_manifest(args.bona)
    registry = load_engine_registry(args.engines)
    transcripts = load_transcripts(args.transcripts)
    backend = _backend_from_args(args, registry)
    manifest = build_tts_cl(
        bona,
        transcripts,
        registry,
        backend,
        vocoder_tag=args.vocoder_tag,
        output_dir=args.out,
        spoof_per_bona=args.ratio,
        seed=args.seed,
    )
    save_manifest(manifest, Path(args.out) / "tts-cl.mnf")
    _write_provenance(Path(args.out), args)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="accent-forge", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("expand", help="synthesize accent-expanded spoof data")
    p.add_argument("--transcripts", required=True)
    p.add_argument("--engines", required=True)
    p.add_argument("--group", choices=["eng", "mix"], required=True)
    p.add_argument("--policy", choices=["uniform_random", "round_robin"], default="uniform_random")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--backend", choices=["mock", "remote"], default="mock")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("manifest", help="manifest operations")
    ms = p.add_subparsers(dest="action", required=True)
    s = ms.add_parser("summarize")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--by", nargs="*", default=[])
    s = ms.add_parser("split")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--ratio", default="4:1")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-train", required=True)
    s.add_argument("--out-valid", required=True)
    s = ms.add_parser("downsample")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--target", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s = ms.add_parser("merge")
    s.add_argument("--in", dest="inputs", nargs="+", required=True)
    s.add_argument("--name", default="merged")
    s.add_argument("--out", required=True)
    p.set_defaults(func=cmd_manifest)

    p = sub.add_parser("train", help="train a classifier")
    p.add_argument("--config")
    p.add_argument("--train-manifest", required=True)
    p.add_argument("--valid-manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score a manifest with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="EER report from a score file")
    p.add_argument("--scores", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="recompute derived columns of the packaged reference tables")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("build-vc-cl3", help="build the balanced voice-conversion test set")
    p.add_argument("--bona", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_vc_cl3)

    p = sub.add_parser("build-tts-cl", help="build the TTS cross-lingual test set")
    p.add_argument("--bona", required=True)
    p.add_argument("--transcripts", required=True)
    p.add_argument("--engines", required=True)
    p.add_argument("--vocoder-tag", default="wavernn")
    p.add_argument("--ratio", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", choices=["mock", "remote"], default="mock")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_tts_cl)

    return parser


def dispatch(argv: List[str]) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        sys.stderr.write(f"E_VALIDATION: {exc}\n")
        return EXIT_VALIDATION
    except Exception as exc:
        sys.stderr.write(f"E_RUNTIME: {exc}\n")
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))
