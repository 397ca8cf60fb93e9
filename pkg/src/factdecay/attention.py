"""Time-aware fact embeddings and neighborhood attention.

Each record (head, relation, tail, day) is embedded as a linear map of
[head ‖ relation ‖ tail ‖ time feature], where the time feature is a
learnable cosine of the age of the record.  Records sharing a head entity
form a neighborhood; multi-head softmax scores weight each record, the
heads are averaged, and the weighted records are summed per entity to
produce attended entity embeddings.  Base embeddings are trained with a
translational margin loss against corrupted records.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class AttentionConfig:
    entity_dim: int = 32
    relation_dim: int = 32
    fact_dim: Optional[int] = None      # defaults to concat width 2*entity_dim + relation_dim + 1
    heads: int = 2
    leaky_slope: float = 0.2
    margin: float = 1.0
    negatives_per_positive: int = 1
    invert_margin: bool = False         # flip hinge orientation (penalize close valid facts)

    @property
    def concat_dim(self) -> int:
        return 2 * self.entity_dim + self.relation_dim + 1

    @property
    def output_dim(self) -> int:
        return self.fact_dim if self.fact_dim is not None else self.concat_dim

    def validate(self) -> None:
        if self.entity_dim <= 0 or self.relation_dim <= 0:
            raise ValueError("embedding dimensions must be positive")
        if self.entity_dim != self.relation_dim:
            raise ValueError(
                "entity_dim must equal relation_dim: the margin loss compares "
                "head + relation - tail in one space"
            )
        if self.heads <= 0:
            raise ValueError("heads must be positive")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ValueError("leaky_slope must lie in (0, 1)")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.negatives_per_positive <= 0:
            raise ValueError("negatives_per_positive must be positive")


def time_feature(t_update: int, t_now: int, freq: Tensor, bias: Tensor) -> Tensor:
    """Cosine time feature of the age t_now - t_update; differentiable."""
    return time_features(np.array([t_update]), t_now, freq, bias)


def time_features(timestamps, t_now: int, freq: Tensor, bias: Tensor) -> Tensor:
    """Column of cos(age * freq + bias) values, one per timestamp."""
    ts = np.asarray(timestamps, dtype=np.int64).reshape(-1, 1)
    if np.any(ts > t_now):
        worst = int(ts.max())
        raise ValueError(f"future-dated record: timestamp {worst} is after t_current {t_now}")
    ages = Tensor((t_now - ts).astype(np.float64))
    return ad.cos(ad.add(ad.mul(ages, freq), bias))


def embed_facts(
    heads, relations, tails, timestamps, params: dict[str, Tensor],
    cfg: AttentionConfig, t_now: int,
) -> Tensor:
    """Rows [e_head ‖ r ‖ e_tail ‖ φ(age)] mapped through the fact projection."""
    heads = np.asarray(heads, dtype=np.int64)
    relations = np.asarray(relations, dtype=np.int64)
    tails = np.asarray(tails, dtype=np.int64)
    n_ent = params["entity_emb"].shape[0]
    n_rel = params["relation_emb"].shape[0]
    if heads.size and (heads.max() >= n_ent or tails.max() >= n_ent):
        raise ValueError(f"entity id out of range for vocabulary of {n_ent}")
    if relations.size and relations.max() >= n_rel:
        raise ValueError(f"relation id out of range for vocabulary of {n_rel}")
    phi = time_features(timestamps, t_now, params["time_freq"], params["time_bias"])
    stacked = ad.concat(
        [
            ad.gather_rows(params["entity_emb"], heads),
            ad.gather_rows(params["relation_emb"], relations),
            ad.gather_rows(params["entity_emb"], tails),
            phi,
        ],
        axis=1,
    )
    return ad.matmul(stacked, params["fact_proj"])


def _head_scores(fact_emb: Tensor, params: dict[str, Tensor], cfg: AttentionConfig, m: int) -> Tensor:
    return ad.leaky_relu(ad.matmul(fact_emb, params[f"attn_score_{m}"]), cfg.leaky_slope)


def attend_entity(neighborhood: Tensor, params: dict[str, Tensor], cfg: AttentionConfig) -> Tensor:
    """Attention-aggregate one entity's neighborhood of fact embeddings."""
    if neighborhood.shape[0] == 0:
        raise ValueError("empty neighborhood: entity has no outgoing facts")
    offsets = np.array([0, neighborhood.shape[0]])
    weighted, _ = _attend_segments(neighborhood, offsets, params, cfg)
    return ad.leaky_relu(ad.segment_sum(weighted, offsets), cfg.leaky_slope)


def _attend_segments(fact_emb: Tensor, offsets: np.ndarray, params, cfg):
    """Head-averaged attention weights applied to each fact row.

    Returns (weighted fact rows, per-head weight columns).  Within every
    segment the per-head weights sum to one.
    """
    per_head = []
    weighted = None
    for m in range(cfg.heads):
        a = ad.segment_softmax(_head_scores(fact_emb, params, cfg, m), offsets)
        per_head.append(a)
        term = ad.mul(a, fact_emb)
        weighted = term if weighted is None else ad.add(weighted, term)
    return ad.scale(weighted, 1.0 / cfg.heads), per_head


def attend(
    fact_emb: Tensor, head_ids, params: dict[str, Tensor], cfg: AttentionConfig
) -> tuple[Tensor, Tensor, np.ndarray]:
    """Attention over every head-entity neighborhood at once.

    Returns (weighted fact embeddings in input row order, attended entity
    embeddings, the entity id of each attended row).  Entities with no
    facts simply do not appear; they keep their base embeddings.
    """
    head_ids = np.asarray(head_ids, dtype=np.int64)
    if head_ids.shape[0] != fact_emb.shape[0]:
        raise ValueError("head_ids must align with fact embedding rows")
    order = np.argsort(head_ids, kind="stable")
    sorted_heads = head_ids[order]
    uniq, starts = np.unique(sorted_heads, return_index=True)
    offsets = np.concatenate([starts, [head_ids.shape[0]]])

    emb_sorted = ad.gather_rows(fact_emb, order)
    weighted_sorted, _ = _attend_segments(emb_sorted, offsets, params, cfg)
    entity_emb = ad.leaky_relu(ad.segment_sum(weighted_sorted, offsets), cfg.leaky_slope)

    inverse = np.empty_like(order)
    inverse[order] = np.arange(order.size)
    weighted = ad.gather_rows(weighted_sorted, inverse)
    return weighted, entity_emb, uniq


def translational_distance(heads, relations, tails, params: dict[str, Tensor]) -> Tensor:
    """Row-wise L1 distance ‖e_head + r - e_tail‖₁ over base embeddings."""
    e_h = ad.gather_rows(params["entity_emb"], np.asarray(heads, dtype=np.int64))
    r = ad.gather_rows(params["relation_emb"], np.asarray(relations, dtype=np.int64))
    e_t = ad.gather_rows(params["entity_emb"], np.asarray(tails, dtype=np.int64))
    return ad.l1_norm_rowwise(ad.add(e_h, ad.add(r, ad.scale(e_t, -1.0))))


def sample_corruptions(
    quads: np.ndarray,
    n_entities: int,
    rng: np.random.Generator,
    per_positive: int = 1,
    max_tries: int = 100,
) -> np.ndarray:
    """Corrupt head or tail of each quadruple with a uniform random entity.

    Corruptions that collide with an existing quadruple are resampled, up
    to ``max_tries`` per slot.
    """
    quads = np.asarray(quads, dtype=np.int64)
    known = {tuple(q) for q in quads.tolist()}
    out = np.repeat(quads, per_positive, axis=0)
    for i in range(out.shape[0]):
        for _ in range(max_tries):
            candidate = out[i].copy()
            slot = 0 if rng.integers(2) == 0 else 2
            candidate[slot] = rng.integers(n_entities)
            if tuple(candidate.tolist()) not in known:
                out[i] = candidate
                break
        else:
            out[i, 0 if rng.integers(2) == 0 else 2] = rng.integers(n_entities)
    return out


def margin_loss(
    pos_quads: np.ndarray,
    neg_quads: np.ndarray,
    params: dict[str, Tensor],
    cfg: AttentionConfig,
) -> Tensor:
    """Summed hinge on the distance gap between valid and corrupted records.

    Default orientation pulls valid records at least ``margin`` closer
    than their corruptions; ``invert_margin`` flips the gap's sign.
    """
    pos = np.asarray(pos_quads, dtype=np.int64)
    neg = np.asarray(neg_quads, dtype=np.int64)
    k = cfg.negatives_per_positive
    if neg.shape[0] != pos.shape[0] * k:
        raise ValueError("corruptions must align with positives")
    pos_rep = np.repeat(pos, k, axis=0)
    d_pos = translational_distance(pos_rep[:, 0], pos_rep[:, 1], pos_rep[:, 2], params)
    d_neg = translational_distance(neg[:, 0], neg[:, 1], neg[:, 2], params)
    if cfg.invert_margin:
        gap = ad.add(d_neg, ad.scale(d_pos, -1.0))
    else:
        gap = ad.add(d_pos, ad.scale(d_neg, -1.0))
    return ad.tsum(ad.relu(ad.add(gap, Tensor(np.full((gap.shape[0], 1), cfg.margin)))))
