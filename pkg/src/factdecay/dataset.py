"""Quadruple datasets, fact timelines, and update-interval extraction.

A temporal knowledge graph is a multiset of (head, relation, tail, day)
records.  All records sharing a (head, relation) pair form one fact
timeline; a tail change between two consecutive events on a timeline is
one update, and the day count between them is one update interval.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field
from datetime import date
from fractions import Fraction
from typing import NamedTuple, Optional, Sequence

import numpy as np

COMMENT_PREFIX = "#"


class FactKey(NamedTuple):
    head: int
    relation: int


class Quadruple(NamedTuple):
    head: int
    relation: int
    tail: int
    timestamp: int


@dataclass
class Vocab:
    """Dense name<->id maps for entities and relations.

    Ids are assigned by first appearance, so ingesting the same file twice
    yields identical assignments.  ``epoch`` is the earliest date in the
    source (ISO string, or an integer literal for numeric timestamps).
    """

    entities: list[str]
    relations: list[str]
    epoch: str
    entity_ids: dict[str, int] = field(default_factory=dict)
    relation_ids: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.entity_ids:
            self.entity_ids = {name: i for i, name in enumerate(self.entities)}
        if not self.relation_ids:
            self.relation_ids = {name: i for i, name in enumerate(self.relations)}

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)


@dataclass
class FactTimeline:
    """All events of one (head, relation) key, in time order.

    ``events`` is sorted ascending by timestamp (ties keep input order).
    ``intervals`` holds the positive day counts between consecutive events
    whose tails differ; same-tail pairs and same-day pairs contribute none.
    """

    key: FactKey
    events: list[tuple[int, int]]            # (timestamp, tail)
    quad_indices: list[int]                  # row in the dataset, aligned with events
    intervals: list[int]
    mean_interval: Optional[Fraction]

    @property
    def n_updates(self) -> int:
        return len(self.intervals)

    def superseded(self) -> list[bool]:
        """Flag each event whose tail was later replaced by a different one.

        An event is superseded when some strictly later event on the same
        timeline asserts a different tail.  Same-day events never supersede
        each other; re-assertions of the same tail do not supersede.
        """
        flags = [False] * len(self.events)
        later_tails: set[int] = set()
        i = len(self.events) - 1
        while i >= 0:
            j = i
            while j >= 0 and self.events[j][0] == self.events[i][0]:
                j -= 1
            for k in range(j + 1, i + 1):
                flags[k] = bool(later_tails - {self.events[k][1]})
            later_tails.update(self.events[k][1] for k in range(j + 1, i + 1))
            i = j
        return flags


@dataclass
class Dataset:
    """An ingested quadruple multiset plus derived timeline statistics."""

    quads: np.ndarray                        # (n, 4) int64: head, relation, tail, day
    vocab: Vocab
    timelines: dict[FactKey, FactTimeline]
    t_current: int
    raw_lines: list[str]                     # original input lines, for export

    @property
    def n_quadruples(self) -> int:
        return int(self.quads.shape[0])

    def with_t_current(self, t_current: int) -> "Dataset":
        if t_current < int(self.quads[:, 3].max()):
            raise ValueError(
                f"t_current={t_current} is earlier than the newest timestamp "
                f"{int(self.quads[:, 3].max())}"
            )
        return Dataset(self.quads, self.vocab, self.timelines, int(t_current), self.raw_lines)

    def superseded_mask(self) -> np.ndarray:
        """Per-quadruple flag: tail later replaced on the same timeline."""
        mask = np.zeros(self.n_quadruples, dtype=bool)
        for tl in self.timelines.values():
            for idx, flag in zip(tl.quad_indices, tl.superseded()):
                mask[idx] = flag
        return mask


def _parse_timestamp(text: str, lineno: int) -> tuple[str, object]:
    """Return ("int", value) or ("iso", date); raise on anything else."""
    try:
        return "int", int(text)
    except ValueError:
        pass
    try:
        return "iso", date.fromisoformat(text)
    except ValueError:
        raise ValueError(
            f"line {lineno}: unparseable date {text!r} (expected YYYY-MM-DD or integer)"
        ) from None


def _parse_lines(path, records: list, lines: list[str]) -> None:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith(COMMENT_PREFIX):
                continue
            fields = line.split("\t")
            if len(fields) < 4:
                raise ValueError(
                    f"{path}: line {lineno}: expected at least 4 tab-separated "
                    f"fields, got {len(fields)}"
                )
            head, rel, tail = fields[0], fields[1], fields[2]
            kind, value = _parse_timestamp(fields[3], lineno)
            records.append((head, rel, tail, kind, value))
            lines.append(line)


def _records_to_dataset(records: list, lines: list[str]) -> Dataset:
    kinds = {kind for _, _, _, kind, _ in records}
    if len(kinds) > 1:
        raise ValueError("mixed date formats: file combines integer and ISO dates")
    kind = kinds.pop()
    values = [value for _, _, _, _, value in records]
    earliest = min(values)
    if kind == "iso":
        days = [(v - earliest).days for v in values]
        epoch = earliest.isoformat()
    else:
        days = [v - earliest for v in values]
        epoch = str(earliest)

    entity_ids: dict[str, int] = {}
    relation_ids: dict[str, int] = {}

    def intern(name: str, table: dict[str, int]) -> int:
        if name not in table:
            table[name] = len(table)
        return table[name]

    quads = np.empty((len(records), 4), dtype=np.int64)
    for i, (head, rel, tail, _, _) in enumerate(records):
        quads[i, 0] = intern(head, entity_ids)
        quads[i, 1] = intern(rel, relation_ids)
        quads[i, 2] = intern(tail, entity_ids)
        quads[i, 3] = days[i]

    vocab = Vocab(list(entity_ids), list(relation_ids), epoch, entity_ids, relation_ids)
    timelines = build_timelines(quads)
    return Dataset(quads, vocab, timelines, int(quads[:, 3].max()), lines)


def ingest(path) -> Dataset:
    """Read a tab-separated quadruple file into a Dataset.

    Each data line is ``head<TAB>relation<TAB>tail<TAB>date`` with extra
    fields ignored; ``#`` lines and blank lines are skipped.  Dates may be
    ISO ``YYYY-MM-DD`` or plain integers, not mixed.  Timestamps are
    normalized to day indices relative to the earliest date in the file.
    """
    records: list = []
    lines: list[str] = []
    _parse_lines(path, records, lines)
    if not records:
        raise ValueError(f"{path}: no quadruples found")
    return _records_to_dataset(records, lines)


def ingest_many(paths: Sequence) -> tuple[Dataset, list[slice]]:
    """Ingest several files into one Dataset with a shared vocab and epoch.

    Returns the union dataset and one row slice per input file, in order.
    """
    records: list = []
    lines: list[str] = []
    bounds = [0]
    for path in paths:
        _parse_lines(path, records, lines)
        bounds.append(len(records))
    if not records:
        raise ValueError("no quadruples found in any input file")
    ds = _records_to_dataset(records, lines)
    slices = [slice(a, b) for a, b in zip(bounds, bounds[1:])]
    return ds, slices


def dataset_from_arrays(
    quads: np.ndarray,
    entities: Optional[Sequence[str]] = None,
    relations: Optional[Sequence[str]] = None,
    t_current: Optional[int] = None,
) -> Dataset:
    """Build a Dataset from an (n, 4) integer array of quadruples.

    Entity and relation names default to their decimal ids.  The epoch is
    day 0; timestamps are taken as-is (they must be non-negative).
    """
    quads = np.ascontiguousarray(np.asarray(quads, dtype=np.int64))
    if quads.ndim != 2 or quads.shape[1] != 4:
        raise ValueError(f"expected an (n, 4) quadruple array, got shape {quads.shape}")
    if quads.shape[0] == 0:
        raise ValueError("empty quadruple array")
    if quads.min() < 0:
        raise ValueError("quadruple fields must be non-negative integers")
    if entities is None:
        entities = [str(i) for i in range(int(quads[:, [0, 2]].max()) + 1)]
    if relations is None:
        relations = [str(i) for i in range(int(quads[:, 1].max()) + 1)]
    entities = list(entities)
    relations = list(relations)
    if int(quads[:, [0, 2]].max()) >= len(entities):
        raise ValueError("entity id out of range for the provided vocabulary")
    if int(quads[:, 1].max()) >= len(relations):
        raise ValueError("relation id out of range for the provided vocabulary")
    vocab = Vocab(entities, relations, epoch="0")
    lines = [
        f"{entities[h]}\t{relations[r]}\t{entities[t]}\t{d}"
        for h, r, t, d in quads.tolist()
    ]
    timelines = build_timelines(quads)
    t_max = int(quads[:, 3].max())
    if t_current is None:
        t_current = t_max
    elif t_current < t_max:
        raise ValueError(f"t_current={t_current} is earlier than the newest timestamp {t_max}")
    return Dataset(quads, vocab, timelines, int(t_current), lines)


def build_timelines(quads: np.ndarray) -> dict[FactKey, FactTimeline]:
    """Group quadruples by (head, relation) and extract update intervals.

    Events are ordered by timestamp with input order breaking ties.  An
    interval is recorded for each consecutive pair whose tails differ and
    whose timestamps differ; a same-day tail change has no positive length
    and is skipped.
    """
    if len(quads) == 0:
        raise ValueError("cannot build timelines from an empty quadruple list")
    grouped: dict[FactKey, list[tuple[int, int, int]]] = {}
    for idx, (h, r, t, d) in enumerate(np.asarray(quads, dtype=np.int64).tolist()):
        grouped.setdefault(FactKey(h, r), []).append((d, idx, t))

    timelines: dict[FactKey, FactTimeline] = {}
    for key, rows in grouped.items():
        rows.sort(key=lambda item: (item[0], item[1]))
        events = [(d, t) for d, _, t in rows]
        quad_indices = [idx for _, idx, _ in rows]
        intervals = [
            b_day - a_day
            for (a_day, a_tail), (b_day, b_tail) in zip(events, events[1:])
            if a_tail != b_tail and b_day > a_day
        ]
        mean = Fraction(sum(intervals), len(intervals)) if intervals else None
        timelines[key] = FactTimeline(key, events, quad_indices, intervals, mean)
    return timelines


def interval_histogram(timelines: dict[FactKey, FactTimeline]) -> dict[int, int]:
    """Exact counts of update-interval lengths across all timelines."""
    hist: dict[int, int] = {}
    for tl in timelines.values():
        for iv in tl.intervals:
            hist[iv] = hist.get(iv, 0) + 1
    return {k: hist[k] for k in sorted(hist)}


def export(dataset: Dataset, mask: np.ndarray, path) -> dict:
    """Write the quadruples selected by ``mask`` in the original format.

    Kept lines are written verbatim in input order, so an all-true mask
    reproduces the ingested content.  A ``<path>.stats.json`` sidecar
    records counts, vocab sizes, and the interval histogram of the kept
    subset.  Returns the stats dict.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (dataset.n_quadruples,):
        raise ValueError(
            f"mask length {mask.shape} does not match {dataset.n_quadruples} quadruples"
        )
    kept = int(mask.sum())
    if kept == 0:
        warnings.warn("mask drops every quadruple; writing an empty dataset")
        kept_hist: dict[int, int] = {}
    else:
        kept_hist = interval_histogram(build_timelines(dataset.quads[mask]))

    with open(path, "w", encoding="utf-8") as fh:
        for line, keep in zip(dataset.raw_lines, mask.tolist()):
            if keep:
                fh.write(line + "\n")

    stats = {
        "schema_version": 1,
        "input_quadruples": dataset.n_quadruples,
        "kept_quadruples": kept,
        "dropped_quadruples": dataset.n_quadruples - kept,
        "n_entities": dataset.vocab.n_entities,
        "n_relations": dataset.vocab.n_relations,
        "t_current": dataset.t_current,
        "interval_histogram": {str(k): v for k, v in kept_hist.items()},
    }
    stats_path = f"{os.fspath(path)}.stats.json"
    with open(stats_path, "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return stats
