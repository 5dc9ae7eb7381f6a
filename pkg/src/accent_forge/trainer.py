"""Training recipe: warmup + inverse-sqrt LR schedule, NLL loss, patience-based
early stopping with best-on-validation checkpointing, and the SSL freeze policy."""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from .augment import AugmentConfig, apply_random
from .evaluation import ScoreRecord, compute_eer
from .frontend import FeatureSpec, extract_features, fix_duration, load_audio
from .manifest import Manifest
from .models import BONA_FIDE_INDEX, ModelConfig, SSLRecurrentClassifier, build_model

LABEL_TO_INDEX = {"bona_fide": BONA_FIDE_INDEX, "spoof": 1 - BONA_FIDE_INDEX}

# Improvement must beat the best validation EER by more than this; ties do
# not reset patience.
IMPROVEMENT_EPS = 1e-6


class TrainError(RuntimeError):
    """Mid-run failures (divergence, bad state)."""


class TrainValidationError(ValueError):
    """Precondition failures detectable before training starts."""


@dataclass
class TrainConfig:
    base_lr: float = 3e-4
    warmup_steps: int = 1000
    weight_decay: float = 1e-4
    patience_epochs: int = 12
    batch_size: int = 32
    max_epochs: int = 100
    seed: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    schedule_kind: str = "inverse_sqrt"
    ssl_freeze_epochs: int = 10
    ssl_warmup_epochs: int = 5
    ssl_decay_gamma: float = 0.9
    deterministic: bool = False

    def __post_init__(self):
        if self.warmup_steps < 1:
            raise ValueError("warmup_steps must be >= 1")
        if self.patience_epochs < 1:
            raise ValueError("patience_epochs must be >= 1")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if self.schedule_kind not in ("inverse_sqrt", "ssl_exponential"):
            raise ValueError(f"unknown schedule_kind {self.schedule_kind!r}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_metric: float
    lr: float


@dataclass
class TrainHistory:
    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_metric: float = math.inf
    stop_reason: str = ""


@dataclass
class Checkpoint:
    model_config: ModelConfig
    state_dict: dict
    history: TrainHistory
    train_config: Optional[TrainConfig] = None

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(
            {
                "model_config": asdict(self.model_config),
                "state_dict": self.state_dict,
                "history": self.history,
                "train_config": asdict(self.train_config) if self.train_config else None,
            },
            path,
        )

    @classmethod
    def load(cls, path) -> "Checkpoint":
        payload = torch.load(Path(path), map_location="cpu", weights_only=False)
        cfg = payload["model_config"]
        cfg["gemini_time_freq_ratio"] = tuple(cfg["gemini_time_freq_ratio"])
        tc = payload.get("train_config")
        if tc is not None:
            tc["augment"] = AugmentConfig(**tc["augment"])
            tc = TrainConfig(**tc)
        return cls(
            model_config=ModelConfig(**cfg),
            state_dict=payload["state_dict"],
            history=payload["history"],
            train_config=tc,
        )

    def build(self) -> torch.nn.Module:
        model = build_model(self.model_config, seed=0)
        model.load_state_dict(self.state_dict)
        model.eval()
        return model


def lr_at(step: int, config: TrainConfig) -> float:
    """Linear warmup to base_lr, then inverse-square-root decay.

    lr = base_lr * min(step / warmup, sqrt(warmup / step)); the peak is
    exactly base_lr at step == warmup.
    """
    if step < 1:
        raise ValueError("step must be >= 1")
    w = config.warmup_steps
    return config.base_lr * min(step / w, math.sqrt(w / step))


def ssl_training_policy(epoch: int, config: TrainConfig) -> Tuple[bool, float]:
    """(encoder_frozen, lr_scale) for the SSL schedule at a 1-based epoch."""
    frozen = epoch <= config.ssl_freeze_epochs
    if epoch <= config.ssl_warmup_epochs:
        scale = epoch / config.ssl_warmup_epochs
    else:
        scale = config.ssl_decay_gamma ** (epoch - config.ssl_warmup_epochs)
    return frozen, scale


class AudioFeatureSource:
    """Default feature provider: load audio, fix duration, augment, extract."""

    def __init__(self, manifest: Manifest, feature_spec: FeatureSpec, augment: Optional[AugmentConfig], global_seed: int, training: bool):
        self.manifest = manifest
        self.spec = feature_spec
        self.augment = augment
        self.global_seed = global_seed
        self.training = training

    def __call__(self, record, epoch: int) -> np.ndarray:
        wave = load_audio(self.manifest.resolve_path(record), self.spec.sample_rate)
        wave = fix_duration(wave, self.spec.segment_sec, mode="tile")
        samples = wave.samples
        if self.training and self.augment is not None and self.augment.enabled:
            samples = apply_random(samples, self.augment, record.utt_id, epoch, self.global_seed, self.spec.sample_rate)
            if len(samples) != len(wave.samples):  # time stretch changes length
                wave = fix_duration(type(wave)(samples, wave.sample_rate), self.spec.segment_sec, mode="tile")
                samples = wave.samples
        feat = extract_features(type(wave)(samples, wave.sample_rate), self.spec)
        return feat.values


def _epoch_rng(seed: int, epoch: int) -> random.Random:
    digest = hashlib.sha256(f"epoch:{seed}:{epoch}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _score_split(model, manifest: Manifest, feature_fn, epoch: int) -> List[ScoreRecord]:
    model.eval()
    records = []
    with torch.no_grad():
        for rec in manifest.records:
            feats = torch.as_tensor(np.asarray(feature_fn(rec, epoch)), dtype=torch.float32).unsqueeze(0)
            logp = model(feats)[0]
            margin = float(logp[BONA_FIDE_INDEX] - logp[1 - BONA_FIDE_INDEX])
            records.append(ScoreRecord(utt_id=rec.utt_id, score=margin, label=rec.label))
    return records


def validation_eer(model, manifest: Manifest, feature_fn, epoch: int = 0) -> float:
    return compute_eer(_score_split(model, manifest, feature_fn, epoch))[0]


def train(
    model: torch.nn.Module,
    train_manifest: Manifest,
    valid_manifest: Manifest,
    config: TrainConfig,
    feature_fn: Callable,
    valid_feature_fn: Optional[Callable] = None,
    valid_metric_fn: Optional[Callable] = None,
    max_steps: Optional[int] = None,
) -> Tuple[Checkpoint, TrainHistory]:
    """Runs the full recipe and returns the best-on-validation checkpoint.

    feature_fn(record, epoch) -> feature array; valid_metric_fn, when given,
    replaces the validation-EER computation (used by tests to inject stub
    metrics). Deterministic given config.seed when config.deterministic.
    """
    if len(train_manifest) == 0 or len(valid_manifest) == 0:
        raise TrainValidationError("train and valid manifests must be non-empty")
    if len({r.label for r in train_manifest.records}) < 2:
        raise TrainValidationError("training manifest must contain both classes")
    if config.deterministic:
        torch.manual_seed(config.seed)
        torch.use_deterministic_algorithms(True)

    valid_feature_fn = valid_feature_fn or feature_fn
    optimizer = torch.optim.Adam(model.parameters(), lr=config.base_lr, weight_decay=config.weight_decay)
    history = TrainHistory()
    best_state = None
    step = 0
    stop_reason = "max_epochs"

    for epoch in range(1, config.max_epochs + 1):
        if config.schedule_kind == "ssl_exponential" and isinstance(model, SSLRecurrentClassifier):
            frozen, _ = ssl_training_policy(epoch, config)
            model.set_encoder_frozen(frozen)

        model.train()
        order = list(train_manifest.records)
        order.sort(key=lambda r: r.utt_id)
        _epoch_rng(config.seed, epoch).shuffle(order)
        losses = []
        lr = config.base_lr
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            feats = torch.as_tensor(
                np.stack([np.asarray(feature_fn(rec, epoch)) for rec in batch]), dtype=torch.float32
            )
            targets = torch.tensor([LABEL_TO_INDEX[rec.label] for rec in batch])
            step += 1
            lr = lr_at(step, config)
            if config.schedule_kind == "ssl_exponential":
                _, scale = ssl_training_policy(epoch, config)
                lr = config.base_lr * scale
            for group in optimizer.param_groups:
                group["lr"] = lr
            optimizer.zero_grad()
            loss = F.nll_loss(model(feats), targets)
            if not torch.isfinite(loss):
                raise TrainError(f"loss diverged to {loss.item()} at step {step}, epoch {epoch}")
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
            if max_steps is not None and step >= max_steps:
                break

        if valid_metric_fn is not None:
            metric = float(valid_metric_fn(model, epoch))
        else:
            metric = validation_eer(model, valid_manifest, valid_feature_fn, epoch=0)
        history.epochs.append(EpochRecord(epoch=epoch, train_loss=float(np.mean(losses)), valid_metric=metric, lr=lr))

        if metric < history.best_metric - IMPROVEMENT_EPS:
            history.best_metric = metric
            history.best_epoch = epoch
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        elif epoch - history.best_epoch >= config.patience_epochs:
            stop_reason = "patience"
            break
        if max_steps is not None and step >= max_steps:
            stop_reason = "max_steps"
            break

    history.stop_reason = stop_reason
    if best_state is not None:
        model.load_state_dict(best_state)
    model_config = getattr(model, "config", None) or ModelConfig()
    checkpoint = Checkpoint(
        model_config=model_config,
        state_dict={k: v.detach().clone() for k, v in model.state_dict().items()},
        history=history,
        train_config=config,
    )
    return checkpoint, history


def gradient_check(model: torch.nn.Module, feats: torch.Tensor, targets: torch.Tensor, n_coords: int = 120, h: float = 1e-6, seed: int = 0):
    """Compares analytic NLL gradients against central finite differences.

    Returns the fraction of sampled coordinates whose relative error is
    below 1e-3. Runs in double precision.
    """
    model = model.double()
    feats = feats.double()
    model.eval()

    def loss_value() -> float:
        return float(F.nll_loss(model(feats), targets))

    model.zero_grad()
    F.nll_loss(model(feats), targets).backward()
    params = [p for p in model.parameters() if p.requires_grad]
    rng = np.random.default_rng(seed)
    passed = 0
    total = 0
    for _ in range(n_coords):
        p = params[int(rng.integers(len(params)))]
        flat_idx = int(rng.integers(p.numel()))
        with torch.no_grad():
            orig = float(p.view(-1)[flat_idx])
            p.view(-1)[flat_idx] = orig + h
            plus = loss_value()
            p.view(-1)[flat_idx] = orig - h
            minus = loss_value()
            p.view(-1)[flat_idx] = orig
        numeric = (plus - minus) / (2 * h)
        analytic = float(p.grad.view(-1)[flat_idx])
        denom = max(abs(numeric), abs(analytic), 1e-8)
        total += 1
        if abs(numeric - analytic) / denom < 1e-3:
            passed += 1
    return passed / total
