"""Joint training of the attention and classifier stages, plus the full
ingest-to-filtered-export pipeline.

The joint objective blends the translational margin loss with the
classifier's cross-entropy: alpha picks the mix, with the endpoints
recovering each loss alone.  The pipeline runs embed -> attend -> encode
-> classify, aggregates per-key classes, estimates class half-lives,
scores validity, and flags outdated records.  Everything is deterministic
given the seed.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from . import autodiff as ad
from .attention import AttentionConfig, attend, embed_facts, margin_loss, sample_corruptions
from .autodiff import Tensor
from .dataset import Dataset, FactKey
from .encoder import (
    EncoderConfig,
    LABEL_ACTIVE,
    LABEL_INACTIVE,
    bce_loss,
    classifier_features,
    classify,
    derive_labels,
    encode_groups,
    project_facts,
    relation_groups,
)
from .halflife import (
    CLASS_NAMES,
    HalfLifeModel,
    ValidityScores,
    estimate_half_lives,
    expiration_days,
    keep_mask,
    score_dataset,
)
from .optim import make_optimizer

REPORT_SCHEMA_VERSION = 1


@dataclass
class TrainConfig:
    alpha: float = 0.5
    epochs: int = 200
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    batch_size: Optional[int] = None      # facts per step; None = full batch
    patience: Optional[int] = None        # early stop on held-out accuracy; None = off
    schedule: str = "joint"               # "joint" or "two-phase"

    def validate(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.batch_size is not None and self.batch_size <= 0:
            raise ValueError("batch_size must be positive when set")
        if self.patience is not None and self.patience <= 0:
            raise ValueError("patience must be positive when set")
        if self.schedule not in ("joint", "two-phase"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


def init_params(
    n_entities: int, n_relations: int, att_cfg: AttentionConfig, enc_cfg: EncoderConfig,
    rng: np.random.Generator,
) -> dict[str, Tensor]:
    """All learnable tensors, drawn in a fixed order from one generator."""
    params: dict[str, Tensor] = {}
    params["entity_emb"] = ad.init_embedding(rng, n_entities, att_cfg.entity_dim)
    params["relation_emb"] = ad.init_embedding(rng, n_relations, att_cfg.relation_dim)
    params["time_freq"] = ad.init_scalar(rng)
    params["time_bias"] = ad.init_scalar(rng)
    params["fact_proj"] = ad.init_linear(rng, att_cfg.concat_dim, att_cfg.output_dim)
    for m in range(att_cfg.heads):
        params[f"attn_score_{m}"] = ad.init_linear(rng, att_cfg.output_dim, 1)
    params["group_proj"] = ad.init_linear(rng, att_cfg.output_dim, enc_cfg.out_dim)
    for layer in range(enc_cfg.layers):
        params[f"gcn_weight_{layer}"] = ad.init_linear(rng, enc_cfg.out_dim, enc_cfg.out_dim)
    params["cls_weight"] = ad.init_linear(rng, enc_cfg.classifier_dim, 1)
    params["cls_bias"] = Tensor(np.zeros((1, 1)), requires_grad=True)
    return params


@dataclass
class ForwardPass:
    """Model outputs for one full-graph evaluation, in input row order."""

    fact_emb: Tensor
    weighted: Tensor
    entity_emb: Tensor
    entity_ids: np.ndarray
    probs: Tensor                 # (n, 1), input row order
    probs_np: np.ndarray          # convenience copy, flat


def forward_model(
    quads: np.ndarray, t_current: int, params: Mapping[str, Tensor],
    att_cfg: AttentionConfig, enc_cfg: EncoderConfig,
) -> ForwardPass:
    quads = np.asarray(quads, dtype=np.int64)
    fact_emb = embed_facts(
        quads[:, 0], quads[:, 1], quads[:, 2], quads[:, 3], params, att_cfg, t_current
    )
    weighted, entity_emb, entity_ids = attend(fact_emb, quads[:, 0], params, att_cfg)

    order, offsets, _ = relation_groups(quads[:, 1])
    projected = project_facts(ad.gather_rows(weighted, order), params["group_proj"])
    encoded = encode_groups(projected, offsets, params, enc_cfg)
    features = classifier_features(projected, encoded, enc_cfg)
    probs_sorted = classify(features, params["cls_weight"], params["cls_bias"])

    inverse = np.empty_like(order)
    inverse[order] = np.arange(order.size)
    probs = ad.gather_rows(probs_sorted, inverse)
    return ForwardPass(
        fact_emb, weighted, entity_emb, entity_ids, probs, probs.data.reshape(-1).copy()
    )


def joint_losses(
    quads: np.ndarray,
    labels: np.ndarray,
    fwd: ForwardPass,
    params: Mapping[str, Tensor],
    att_cfg: AttentionConfig,
    idx: np.ndarray,
    corruptions: np.ndarray,
) -> tuple[Tensor, Tensor]:
    """(margin loss, cross-entropy) restricted to the rows in ``idx``."""
    pos = quads[idx]
    l_margin = margin_loss(pos, corruptions, params, att_cfg)
    probs = ad.gather_rows(fwd.probs, idx)
    l_bce = bce_loss(probs, labels[idx])
    return l_margin, l_bce


def combine_losses(alpha: float, l_margin: Tensor, l_bce: Tensor) -> Tensor:
    return ad.add(ad.scale(l_margin, alpha), ad.scale(l_bce, 1.0 - alpha))


@dataclass
class TrainResult:
    params: dict[str, Tensor]
    log: list[dict]
    final_accuracy: float
    stopped_epoch: int


def labels_per_quad(quads: np.ndarray, key_labels: Mapping[FactKey, int]) -> np.ndarray:
    out = np.empty(quads.shape[0], dtype=np.int64)
    for i, (h, r) in enumerate(quads[:, :2].tolist()):
        out[i] = key_labels[FactKey(h, r)]
    return out


def train(
    dataset: Dataset,
    key_labels: Mapping[FactKey, int],
    att_cfg: AttentionConfig,
    enc_cfg: EncoderConfig,
    cfg: TrainConfig,
    params: Optional[dict[str, Tensor]] = None,
) -> TrainResult:
    """Minimize alpha*margin + (1-alpha)*cross-entropy by gradient descent.

    Per-epoch log rows carry both losses (evaluated full-batch with a
    fixed corruption sample, after the epoch's updates), the classifier
    accuracy on the evaluation rows, and wall time.
    """
    att_cfg.validate()
    enc_cfg.validate()
    cfg.validate()
    quads = dataset.quads
    n = quads.shape[0]
    y = labels_per_quad(quads, key_labels)

    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    init_rng = np.random.default_rng(seeds[0])
    corrupt_rng = np.random.default_rng(seeds[1])
    split_rng = np.random.default_rng(seeds[2])

    if params is None:
        params = init_params(
            dataset.vocab.n_entities, dataset.vocab.n_relations, att_cfg, enc_cfg, init_rng
        )
    optimizer = make_optimizer(cfg.optimizer, params, cfg.learning_rate)

    if cfg.patience is not None and n >= 10:
        holdout = split_rng.choice(n, size=max(1, n // 10), replace=False)
        holdout_mask = np.zeros(n, dtype=bool)
        holdout_mask[holdout] = True
        train_idx = np.flatnonzero(~holdout_mask)
        eval_idx = np.flatnonzero(holdout_mask)
    else:
        train_idx = np.arange(n)
        eval_idx = np.arange(n)

    # One fixed corruption sample keeps eval losses comparable across epochs.
    eval_corruptions = sample_corruptions(
        quads[train_idx], dataset.vocab.n_entities, np.random.default_rng(seeds[1]),
        att_cfg.negatives_per_positive,
    )

    phase_split = (cfg.epochs + 1) // 2
    log: list[dict] = []
    best_acc = -1.0
    best_epoch = 0
    stopped = cfg.epochs
    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        order = corrupt_rng.permutation(train_idx)
        step = cfg.batch_size if cfg.batch_size is not None else order.size
        for lo in range(0, order.size, step):
            idx = order[lo:lo + step]
            fwd = forward_model(quads, dataset.t_current, params, att_cfg, enc_cfg)
            corruptions = sample_corruptions(
                quads[idx], dataset.vocab.n_entities, corrupt_rng,
                att_cfg.negatives_per_positive,
            )
            l_margin, l_bce = joint_losses(
                quads, y, fwd, params, att_cfg, idx, corruptions
            )
            if cfg.schedule == "two-phase":
                loss = l_margin if epoch <= phase_split else l_bce
            else:
                loss = combine_losses(cfg.alpha, l_margin, l_bce)
            if not math.isfinite(loss.item()):
                raise RuntimeError(f"non-finite loss at epoch {epoch}")
            loss.backward()
            optimizer.step()

        fwd = forward_model(quads, dataset.t_current, params, att_cfg, enc_cfg)
        l_margin, l_bce = joint_losses(
            quads, y, fwd, params, att_cfg, train_idx, eval_corruptions
        )
        total = combine_losses(cfg.alpha, l_margin, l_bce).item()
        if not math.isfinite(total):
            raise RuntimeError(f"non-finite loss at epoch {epoch}")
        optimizer.zero_grad()
        predicted = fwd.probs_np >= 0.5
        accuracy = float(np.mean(predicted[eval_idx] == (y[eval_idx] == LABEL_INACTIVE)))
        log.append(
            {
                "epoch": epoch,
                "loss_margin": l_margin.item(),
                "loss_bce": l_bce.item(),
                "loss_total": total,
                "accuracy": accuracy,
                "seconds": time.perf_counter() - started,
            }
        )
        if accuracy > best_acc:
            best_acc = accuracy
            best_epoch = epoch
        if cfg.patience is not None and epoch - best_epoch >= cfg.patience:
            stopped = epoch
            break

    return TrainResult(params, log, log[-1]["accuracy"], stopped)


def write_training_log(path, log: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch,loss_margin,loss_bce,loss_total,accuracy,seconds\n")
        for row in log:
            fh.write(
                f"{row['epoch']},{row['loss_margin']!r},{row['loss_bce']!r},"
                f"{row['loss_total']!r},{row['accuracy']!r},{row['seconds']:.6f}\n"
            )


def predict_key_classes(
    dataset: Dataset, params: Mapping[str, Tensor],
    att_cfg: AttentionConfig, enc_cfg: EncoderConfig,
) -> tuple[dict[FactKey, int], dict[FactKey, float]]:
    """Classifier output aggregated per fact key.

    A key's probability is the mean over its records; at or above 0.5 the
    key is inactive.
    """
    fwd = forward_model(dataset.quads, dataset.t_current, params, att_cfg, enc_cfg)
    classes: dict[FactKey, int] = {}
    mean_probs: dict[FactKey, float] = {}
    for key, tl in dataset.timelines.items():
        p = float(np.mean(fwd.probs_np[tl.quad_indices]))
        mean_probs[key] = p
        classes[key] = LABEL_INACTIVE if p >= 0.5 else LABEL_ACTIVE
    return classes, mean_probs


@dataclass
class FilterSettings:
    theta: float = 0.5
    labels: str = "classifier"            # classifier | policy | oracle
    label_policy: str = "median-split"
    label_threshold: Optional[float] = None
    label_quantile: Optional[float] = None
    zero_superseded: bool = False
    missing_interval: str = "exclude"

    def validate(self) -> None:
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"filter threshold must lie in [0, 1], got {self.theta}")
        if self.labels not in ("classifier", "policy", "oracle"):
            raise ValueError(f"unknown label source {self.labels!r}")


@dataclass
class FilterReport:
    """Validity scores, staleness flags, and aggregate filter statistics."""

    theta: float
    t_current: int
    seed: Optional[int]
    label_source: str
    half_life_active: object        # Fraction
    half_life_inactive: object
    n_quadruples: int
    n_outdated: int
    key_class_counts: dict[str, int]
    quad_class_counts: dict[str, int]
    validity: list[float]
    outdated: list[bool]
    quad_labels: list[int]
    expiration: list[float]

    @property
    def filtered_fraction(self) -> float:
        return self.n_outdated / self.n_quadruples if self.n_quadruples else 0.0

    def to_json(self) -> str:
        payload = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "theta": self.theta,
            "t_current": self.t_current,
            "seed": self.seed,
            "label_source": self.label_source,
            "half_life_days": {
                "active": str(self.half_life_active),
                "inactive": str(self.half_life_inactive),
            },
            "half_life_days_float": {
                "active": float(self.half_life_active),
                "inactive": float(self.half_life_inactive),
            },
            "counts": {
                "quadruples": self.n_quadruples,
                "outdated": self.n_outdated,
                "kept": self.n_quadruples - self.n_outdated,
                "keys_by_class": self.key_class_counts,
                "quadruples_by_class": self.quad_class_counts,
            },
            "filtered_fraction": self.filtered_fraction,
            "per_fact": {
                "validity": self.validity,
                "outdated": [int(flag) for flag in self.outdated],
                "class": self.quad_labels,
                "expiration_day": [
                    "inf" if math.isinf(day) else day for day in self.expiration
                ],
            },
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


@dataclass
class PipelineResult:
    report: FilterReport
    keep: np.ndarray
    scores: ValidityScores
    key_classes: dict[FactKey, int]
    half_lives: HalfLifeModel
    params: Optional[dict[str, Tensor]]
    train_log: list[dict] = field(default_factory=list)


def pipeline_run(
    dataset: Dataset,
    att_cfg: AttentionConfig,
    enc_cfg: EncoderConfig,
    train_cfg: TrainConfig,
    settings: FilterSettings,
    class_override: Optional[Mapping[FactKey, int]] = None,
    params: Optional[dict[str, Tensor]] = None,
) -> PipelineResult:
    """Embed, attend, encode, classify, estimate half-lives, score, flag.

    ``class_override`` supplies ground-truth classes and bypasses both the
    label policy and the classifier.  Pre-trained ``params`` skip training
    in classifier mode.
    """
    settings.validate()
    train_log: list[dict] = []
    if settings.labels == "oracle":
        if class_override is None:
            raise ValueError("oracle label source requires class_override")
        key_classes = dict(class_override)
        missing = [k for k in dataset.timelines if k not in key_classes]
        if missing:
            raise ValueError(f"class_override misses {len(missing)} fact keys")
    else:
        derived = derive_labels(
            dataset.timelines,
            policy=settings.label_policy,
            threshold=settings.label_threshold,
            quantile=settings.label_quantile,
        )
        if settings.labels == "policy":
            key_classes = derived
        else:
            if params is None:
                result = train(dataset, derived, att_cfg, enc_cfg, train_cfg)
                params = result.params
                train_log = result.log
            key_classes, _ = predict_key_classes(dataset, params, att_cfg, enc_cfg)

    span = int(dataset.quads[:, 3].max() - dataset.quads[:, 3].min())
    half_lives = estimate_half_lives(
        key_classes,
        dataset.timelines,
        missing_interval=settings.missing_interval,
        time_span=max(span, 1),
    )
    scores = score_dataset(
        dataset, key_classes, half_lives, zero_superseded=settings.zero_superseded
    )
    keep = keep_mask(scores, settings.theta)
    expiry = expiration_days(dataset.quads, scores, settings.theta)

    key_counts = {"active": 0, "inactive": 0}
    for label in key_classes.values():
        key_counts[CLASS_NAMES[label]] += 1
    quad_counts = {
        "active": int(np.sum(scores.labels == LABEL_ACTIVE)),
        "inactive": int(np.sum(scores.labels == LABEL_INACTIVE)),
    }
    report = FilterReport(
        theta=settings.theta,
        t_current=dataset.t_current,
        seed=train_cfg.seed,
        label_source=settings.labels,
        half_life_active=half_lives.active,
        half_life_inactive=half_lives.inactive,
        n_quadruples=dataset.n_quadruples,
        n_outdated=int(np.sum(~keep)),
        key_class_counts=key_counts,
        quad_class_counts=quad_counts,
        validity=[float(v) for v in scores.scores],
        outdated=[bool(b) for b in ~keep],
        quad_labels=[int(c) for c in scores.labels],
        expiration=[float(e) for e in expiry],
    )
    return PipelineResult(report, keep, scores, key_classes, half_lives, params, train_log)
