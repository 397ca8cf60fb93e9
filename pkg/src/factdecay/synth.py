"""Synthetic temporal-KG generation with known staleness, plus filter
evaluation and parameter sweeps.

Each generated fact key belongs to a class with a target mean update
interval; its tail changes at geometric inter-arrival times until the
horizon.  Every event except a key's last is superseded by a later tail
change, which is the staleness ground truth a filter is scored against.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .dataset import Dataset, FactKey, dataset_from_arrays
from .encoder import LABEL_ACTIVE, LABEL_INACTIVE
from .halflife import (
    HalfLifeModel,
    estimate_half_lives,
    keep_mask,
    score_dataset,
)


@dataclass
class SynthSpec:
    n_entities: int = 200
    n_relations: int = 20
    n_fact_keys: int = 1000
    fraction_active: float = 0.3
    mean_interval_active: int = 20
    mean_interval_inactive: int = 160
    horizon: int = 800
    seed: int = 0

    def validate(self) -> None:
        if self.n_entities < 2:
            raise ValueError("need at least 2 entities so tails can change")
        if self.n_relations < 1 or self.n_fact_keys < 1:
            raise ValueError("need at least one relation and one fact key")
        if self.n_entities * self.n_relations < self.n_fact_keys:
            raise ValueError("not enough (entity, relation) pairs for the requested keys")
        if not 0.0 <= self.fraction_active <= 1.0:
            raise ValueError("fraction_active must lie in [0, 1]")
        if self.mean_interval_active < 1 or self.mean_interval_inactive < 1:
            raise ValueError("mean intervals must be at least one day")
        if self.mean_interval_active >= self.mean_interval_inactive:
            raise ValueError("active facts must update faster than inactive ones")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")


@dataclass
class GroundTruth:
    """Generator-side truth: key classes, update times, per-record staleness."""

    key_order: list[FactKey]
    key_classes: dict[FactKey, int]
    update_times: dict[FactKey, list[int]]
    stale: np.ndarray               # per quadruple, aligned with the dataset rows
    quad_keys: list[FactKey]


def generate(spec: SynthSpec) -> tuple[Dataset, GroundTruth]:
    """Deterministic synthetic dataset plus its staleness ground truth."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n_active = round(spec.n_fact_keys * spec.fraction_active)
    if spec.horizon < spec.mean_interval_active:
        warnings.warn(
            "horizon is shorter than the active mean interval; few updates "
            "will be generated"
        )

    pair_ids = rng.choice(
        spec.n_entities * spec.n_relations, size=spec.n_fact_keys, replace=False
    )
    key_order = [
        FactKey(int(v) // spec.n_relations, int(v) % spec.n_relations) for v in pair_ids
    ]

    records = []   # (timestamp, key_idx, tail)
    key_classes: dict[FactKey, int] = {}
    update_times: dict[FactKey, list[int]] = {}
    for key_idx, key in enumerate(key_order):
        label = LABEL_ACTIVE if key_idx < n_active else LABEL_INACTIVE
        key_classes[key] = label
        mean = (
            spec.mean_interval_active if label == LABEL_ACTIVE
            else spec.mean_interval_inactive
        )
        t = 0
        tail = int(rng.integers(spec.n_entities))
        times = [t]
        records.append((t, key_idx, tail))
        while True:
            t += int(rng.geometric(1.0 / mean))
            if t > spec.horizon:
                break
            new_tail = int(rng.integers(spec.n_entities))
            while new_tail == tail:
                new_tail = int(rng.integers(spec.n_entities))
            tail = new_tail
            times.append(t)
            records.append((t, key_idx, tail))
        update_times[key] = times

    records.sort(key=lambda rec: (rec[0], rec[1]))
    quads = np.empty((len(records), 4), dtype=np.int64)
    stale = np.empty(len(records), dtype=bool)
    quad_keys: list[FactKey] = []
    for row, (t, key_idx, tail) in enumerate(records):
        key = key_order[key_idx]
        quads[row] = (key.head, key.relation, tail, t)
        stale[row] = t != update_times[key][-1]
        quad_keys.append(key)

    entities = [f"e{i}" for i in range(spec.n_entities)]
    relations = [f"r{i}" for i in range(spec.n_relations)]
    dataset = dataset_from_arrays(quads, entities, relations)
    return dataset, GroundTruth(key_order, key_classes, update_times, stale, quad_keys)


def write_ground_truth(path, truth: GroundTruth, dataset: Dataset) -> None:
    """Sidecar TSV: head, relation, class, comma-joined update times."""
    from .halflife import CLASS_NAMES

    ents = dataset.vocab.entities
    rels = dataset.vocab.relations
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("head\trelation\tclass\tupdate_times\n")
        for key in truth.key_order:
            times = ",".join(str(t) for t in truth.update_times[key])
            fh.write(
                f"{ents[key.head]}\t{rels[key.relation]}\t"
                f"{CLASS_NAMES[truth.key_classes[key]]}\t{times}\n"
            )


def read_ground_truth(path, dataset: Dataset) -> GroundTruth:
    """Load a sidecar against its dataset; staleness is re-derived from the
    event sequences (it is fully determined by them)."""
    key_order: list[FactKey] = []
    key_classes: dict[FactKey, int] = {}
    update_times: dict[FactKey, list[int]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("head\t"):
            raise ValueError(f"{path}: not a ground-truth sidecar")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise ValueError(f"{path}: line {lineno}: expected 4 fields")
            head, rel, cls, times = fields
            key = FactKey(
                dataset.vocab.entity_ids[head], dataset.vocab.relation_ids[rel]
            )
            key_order.append(key)
            key_classes[key] = LABEL_ACTIVE if cls == "active" else LABEL_INACTIVE
            update_times[key] = [int(t) for t in times.split(",")] if times else []

    stale = dataset.superseded_mask()
    quad_keys = [FactKey(h, r) for h, r in dataset.quads[:, :2].tolist()]
    return GroundTruth(key_order, key_classes, update_times, stale, quad_keys)


def evaluate_filter(keep: np.ndarray, stale: np.ndarray) -> dict:
    """Precision/recall/F1 with "outdated" as the positive class.

    Undefined ratios are reported as None: precision with no predicted
    positives, recall and F1 with no true positives.
    """
    keep = np.asarray(keep, dtype=bool)
    stale = np.asarray(stale, dtype=bool)
    if keep.shape != stale.shape:
        raise ValueError("mask and ground truth are not aligned")
    predicted = ~keep
    tp = int(np.sum(predicted & stale))
    fp = int(np.sum(predicted & ~stale))
    fn = int(np.sum(~predicted & stale))
    tn = int(np.sum(~predicted & ~stale))

    precision = tp / (tp + fp) if tp + fp > 0 else None
    recall = tp / (tp + fn) if tp + fn > 0 else None
    if precision is None or recall is None:
        f1 = None
    elif precision + recall == 0.0:
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "tp": tp,
        "fp": fp,
        "fn": fn,
        "tn": tn,
    }


@dataclass
class SweepRow:
    value: float
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    filtered_fraction: float


def sweep(
    parameter: str,
    grid: Sequence[float],
    dataset: Dataset,
    truth: GroundTruth,
    theta: float = 0.5,
    missing_interval: str = "exclude",
) -> tuple[list[SweepRow], Optional[SweepRow]]:
    """Grid sweep of the filter threshold or a global half-life override.

    Classes come from the ground truth (oracle labels); half-lives are
    estimated from the data once.  For ``t_hf`` sweeps both classes are
    overridden with the grid value and ``theta`` stays fixed.  Returns all
    rows plus the row with the best F1 (None-F1 rows never win).
    """
    if parameter not in ("theta", "t_hf"):
        raise ValueError(f"unknown sweep parameter {parameter!r} (theta or t_hf)")
    grid = list(grid)
    if not grid:
        raise ValueError("empty sweep grid")

    span = int(dataset.quads[:, 3].max() - dataset.quads[:, 3].min())
    base = estimate_half_lives(
        truth.key_classes, dataset.timelines,
        missing_interval=missing_interval, time_span=max(span, 1),
    )

    rows: list[SweepRow] = []
    best: Optional[SweepRow] = None
    for value in grid:
        if parameter == "theta":
            model = base
            threshold = float(value)
        else:
            if value <= 0:
                raise ValueError("half-life grid values must be positive")
            hl = Fraction(value).limit_denominator(10**9)
            model = HalfLifeModel(active=hl, inactive=hl)
            threshold = theta
        scores = score_dataset(dataset, truth.key_classes, model)
        keep = keep_mask(scores, threshold)
        metrics = evaluate_filter(keep, truth.stale)
        row = SweepRow(
            value=float(value),
            precision=metrics["precision"],
            recall=metrics["recall"],
            f1=metrics["f1"],
            filtered_fraction=float(np.mean(~keep)),
        )
        rows.append(row)
        if row.f1 is not None and (best is None or best.f1 is None or row.f1 > best.f1):
            best = row
    return rows, best


def write_sweep_csv(path, parameter: str, rows: list[SweepRow]) -> None:
    def cell(x):
        return "" if x is None else repr(x)

    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"{parameter},precision,recall,f1,filtered_fraction\n")
        for row in rows:
            fh.write(
                f"{row.value!r},{cell(row.precision)},{cell(row.recall)},"
                f"{cell(row.f1)},{row.filtered_fraction!r}\n"
            )


def toy_activity_dataset(
    n_entities: int = 20,
    n_relations: int = 3,
    n_quadruples: int = 200,
    seed: int = 7,
) -> tuple[Dataset, dict[FactKey, int]]:
    """Small dataset with cleanly separable activity labels.

    Keys headed by the first half of the entities update every few days
    (active); the rest update rarely (inactive), so a median split on the
    mean interval recovers the classes exactly and a classifier keyed on
    the head entity can separate them.
    """
    rng = np.random.default_rng(seed)
    half = n_entities // 2
    records = []
    labels: dict[FactKey, int] = {}
    keys = [
        FactKey(h, r) for h in range(n_entities) for r in range(n_relations)
    ]
    per_key = -(-n_quadruples // len(keys))  # ceil, then truncate to the exact count
    for key in keys:
        active = key.head < half
        labels[key] = LABEL_ACTIVE if active else LABEL_INACTIVE
        gap = int(rng.integers(2, 5)) if active else int(rng.integers(40, 60))
        t = int(rng.integers(0, 3))
        tail = int(rng.integers(n_entities))
        for _ in range(per_key):
            records.append((t, key.head, key.relation, tail))
            t += gap
            new_tail = int(rng.integers(n_entities))
            while new_tail == tail:
                new_tail = int(rng.integers(n_entities))
            tail = new_tail
    records.sort(key=lambda rec: rec[0])
    quads = np.array(
        [(h, r, tail, t) for t, h, r, tail in records[:n_quadruples]], dtype=np.int64
    )
    dataset = dataset_from_arrays(quads)
    present = {FactKey(h, r) for h, r in quads[:, :2].tolist()}
    return dataset, {k: v for k, v in labels.items() if k in present}
