"""Relation-grouped encoding and the active/inactive fact classifier.

Facts holding the same relation form one fully connected group.  With
self-loops and symmetric degree normalization, a convolution layer over
such a group reduces to the group mean, so layers are computed in O(n·d)
via mean -> linear map -> activation -> broadcast, never materializing
the n×n adjacency.  Because that collapse gives every fact in a group the
same representation, the classifier input concatenates each fact's own
projected feature with the group encoding (toggleable).
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dataset import FactKey, FactTimeline

PROB_EPS = 1e-12

LABEL_ACTIVE = 0
LABEL_INACTIVE = 1


@dataclass
class EncoderConfig:
    out_dim: int = 16            # width of the shared per-fact projection
    layers: int = 2
    concat_projected: bool = True
    leaky_slope: float = 0.2

    def validate(self) -> None:
        if self.out_dim <= 0:
            raise ValueError("out_dim must be positive")
        if self.layers <= 0:
            raise ValueError("layers must be positive")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ValueError("leaky_slope must lie in (0, 1)")

    @property
    def classifier_dim(self) -> int:
        return 2 * self.out_dim if self.concat_projected else self.out_dim


def relation_groups(relation_ids) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stable sort of fact rows into contiguous relation groups.

    Returns (row order, segment offsets, relation id per segment).
    """
    relation_ids = np.asarray(relation_ids, dtype=np.int64)
    order = np.argsort(relation_ids, kind="stable")
    uniq, starts = np.unique(relation_ids[order], return_index=True)
    offsets = np.concatenate([starts, [relation_ids.shape[0]]])
    return order, offsets, uniq


def project_facts(fact_emb: Tensor, weight: Tensor) -> Tensor:
    """Shared linear map applied to every fact row, regardless of group."""
    return ad.matmul(fact_emb, weight)


def group_mean_layer(
    hidden: Tensor, offsets: np.ndarray, weight: Tensor, slope: float
) -> Tensor:
    """One convolution layer over complete relation groups, in closed form.

    Normalized adjacency of a complete group with self-loops is the
    constant 1/n matrix, so the layer is σ(mean(H) @ W) broadcast back to
    every member row.
    """
    counts = np.diff(np.asarray(offsets, dtype=np.int64))
    pooled = ad.segment_mean(hidden, offsets)
    activated = ad.leaky_relu(ad.matmul(pooled, weight), slope)
    return ad.repeat_rows(activated, counts)


def encode_groups(
    projected: Tensor, offsets: np.ndarray, params: Mapping[str, Tensor], cfg: EncoderConfig
) -> Tensor:
    hidden = projected
    for layer in range(cfg.layers):
        hidden = group_mean_layer(hidden, offsets, params[f"gcn_weight_{layer}"], cfg.leaky_slope)
    return hidden


def classify(features: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Linear + sigmoid head; outputs are clamped inside (0, 1)."""
    logits = ad.add(ad.matmul(features, weight), bias)
    return ad.clip(ad.sigmoid(logits), PROB_EPS, 1.0 - PROB_EPS)


def classifier_features(projected: Tensor, encoded: Tensor, cfg: EncoderConfig) -> Tensor:
    if cfg.concat_projected:
        return ad.concat([encoded, projected], axis=1)
    return encoded


def bce_loss(predicted: Tensor, labels) -> Tensor:
    """Mean binary cross-entropy; label 1 marks an inactive fact."""
    y = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    if y.shape != predicted.shape:
        raise ValueError(f"labels shape {y.shape} does not match predictions {predicted.shape}")
    p = ad.clip(predicted, PROB_EPS, 1.0 - PROB_EPS)
    one_minus = ad.add(ad.scale(p, -1.0), Tensor(np.ones_like(y)))
    terms = ad.add(
        ad.mul(Tensor(y), ad.log(p)),
        ad.mul(Tensor(1.0 - y), ad.log(one_minus)),
    )
    return ad.scale(ad.tmean(terms), -1.0)


def derive_labels(
    timelines: Mapping[FactKey, FactTimeline],
    policy: str = "median-split",
    threshold: Optional[float] = None,
    quantile: Optional[float] = None,
) -> dict[FactKey, int]:
    """Assign activity labels from update statistics.

    ``median-split``: keys with at least one update and a mean interval at
    or below the median of all mean intervals are active; everything else
    (including never-updated keys) is inactive.  ``fixed`` compares the
    mean interval against ``threshold`` days; ``quantile`` against the
    given quantile of observed mean intervals.
    """
    means = {k: tl.mean_interval for k, tl in timelines.items()}
    observed = sorted(
        (m for m in means.values() if m is not None),
    )
    if policy == "median-split":
        if not observed:
            raise ValueError(
                "no timeline has an update; median-split is undefined - use the "
                "fixed-interval policy (policy='fixed', threshold=<days>)"
            )
        cut = statistics.median(observed)
    elif policy == "fixed":
        if threshold is None:
            raise ValueError("fixed policy requires a threshold in days")
        cut = Fraction(threshold)
    elif policy == "quantile":
        if quantile is None or not 0.0 <= quantile <= 1.0:
            raise ValueError("quantile policy requires a quantile in [0, 1]")
        if not observed:
            raise ValueError(
                "no timeline has an update; quantile is undefined - use the "
                "fixed-interval policy (policy='fixed', threshold=<days>)"
            )
        cut = Fraction(float(np.quantile(np.asarray([float(m) for m in observed]), quantile)))
    else:
        raise ValueError(f"unknown label policy {policy!r}")

    return {
        key: LABEL_ACTIVE if mean is not None and mean <= cut else LABEL_INACTIVE
        for key, mean in means.items()
    }
