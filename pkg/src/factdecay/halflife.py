"""Class half-life estimation, decay validity scoring, and staleness flags.

A class's half-life is half the average of its members' mean update
intervals.  A record's validity decays exponentially with age, reaching
1/2 after one half-life; records whose validity falls strictly below the
filter threshold are outdated.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Union

import numpy as np

from .dataset import Dataset, FactKey, FactTimeline
from .encoder import LABEL_ACTIVE, LABEL_INACTIVE

INITIAL_VALIDITY = 1.0

CLASS_NAMES = {LABEL_ACTIVE: "active", LABEL_INACTIVE: "inactive"}

HalfLife = Union[Fraction, float, int]


@dataclass(frozen=True)
class HalfLifeModel:
    """Per-class half-lives in days; decay rates are derived, never stored."""

    active: Fraction
    inactive: Fraction

    def __post_init__(self):
        if self.active <= 0 or self.inactive <= 0:
            raise ValueError("half-lives must be positive")

    def for_class(self, label: int) -> Fraction:
        return self.active if label == LABEL_ACTIVE else self.inactive

    def decay_rate(self, label: int) -> float:
        return math.log(2) / float(self.for_class(label))

    @property
    def initial_validity(self) -> float:
        return INITIAL_VALIDITY


def estimate_half_lives(
    labels: Mapping[FactKey, int],
    timelines: Mapping[FactKey, FactTimeline],
    missing_interval: str = "exclude",
    time_span: Optional[int] = None,
) -> HalfLifeModel:
    """Half the class-average mean update interval, per class.

    Keys without any update carry no interval; by default they are left
    out of their class average (``missing_interval="exclude"``).  With
    ``"timespan"`` they contribute the full dataset time span instead.  A
    class with nothing to average falls back to half the time span, with
    a warning.
    """
    if missing_interval not in ("exclude", "timespan"):
        raise ValueError(f"unknown missing_interval policy {missing_interval!r}")
    if missing_interval == "timespan" and time_span is None:
        raise ValueError("missing_interval='timespan' requires time_span")

    sums = {LABEL_ACTIVE: Fraction(0), LABEL_INACTIVE: Fraction(0)}
    counts = {LABEL_ACTIVE: 0, LABEL_INACTIVE: 0}
    for key, label in labels.items():
        tl = timelines.get(key)
        if tl is None:
            raise KeyError(f"no timeline for labeled key {key}")
        if tl.mean_interval is not None:
            sums[label] += tl.mean_interval
            counts[label] += 1
        elif missing_interval == "timespan":
            sums[label] += Fraction(time_span)
            counts[label] += 1

    values = {}
    for label in (LABEL_ACTIVE, LABEL_INACTIVE):
        if counts[label] > 0:
            values[label] = Fraction(1, 2) * sums[label] / counts[label]
        else:
            if time_span is None:
                raise ValueError(
                    f"class {CLASS_NAMES[label]!r} has no member with an update "
                    "and no time_span fallback was given"
                )
            fallback = Fraction(1, 2) * Fraction(max(int(time_span), 1))
            warnings.warn(
                f"class {CLASS_NAMES[label]!r} has no member with an update; "
                f"falling back to half the dataset time span ({float(fallback)} days)"
            )
            values[label] = fallback
    return HalfLifeModel(active=values[LABEL_ACTIVE], inactive=values[LABEL_INACTIVE])


def validity(t_event: int, t_now: int, half_life: HalfLife) -> float:
    """Decay score 2^(-(t_now - t_event)/half_life), 1.0 at zero age."""
    if half_life <= 0:
        raise ValueError(f"half-life must be positive, got {half_life}")
    if t_now < t_event:
        raise ValueError(f"future-dated record: t_now={t_now} before t_event={t_event}")
    elapsed = t_now - t_event
    if isinstance(half_life, Fraction):
        ratio = float(Fraction(elapsed) / half_life)
    else:
        ratio = elapsed / float(half_life)
    return 2.0 ** -ratio


def expiration_day(t_event: float, half_life: HalfLife, theta: float) -> float:
    """Day on which validity first falls below theta; inf when theta == 0."""
    if theta == 0.0:
        return math.inf
    return float(t_event) + float(half_life) * math.log2(1.0 / theta)


@dataclass
class ValidityScores:
    """Per-quadruple decay scores against a global current time."""

    scores: np.ndarray          # validity in (0, 1], or exactly 0 for zeroed records
    elapsed: np.ndarray         # day counts t_current - t_i
    labels: np.ndarray          # class per quadruple (0 active / 1 inactive)
    half_lives: np.ndarray      # float half-life applied per quadruple
    t_current: int


def score_dataset(
    dataset: Dataset,
    key_labels: Mapping[FactKey, int],
    model: HalfLifeModel,
    zero_superseded: bool = False,
) -> ValidityScores:
    """Score every quadruple with its class's decay curve.

    With ``zero_superseded``, records whose tail was later replaced are
    scored 0 outright instead of decaying smoothly.
    """
    quads = dataset.quads
    n = quads.shape[0]
    labels = np.empty(n, dtype=np.int64)
    for i, (h, r) in enumerate(quads[:, :2].tolist()):
        labels[i] = key_labels[FactKey(h, r)]
    hl = np.where(
        labels == LABEL_ACTIVE, float(model.active), float(model.inactive)
    )
    elapsed = dataset.t_current - quads[:, 3]
    if np.any(elapsed < 0):
        worst = int(quads[:, 3].max())
        raise ValueError(
            f"future-dated record: timestamp {worst} is after t_current {dataset.t_current}"
        )
    scores = np.exp2(-(elapsed / hl))
    if zero_superseded:
        scores = np.where(dataset.superseded_mask(), 0.0, scores)
    return ValidityScores(scores, elapsed.astype(np.int64), labels, hl, dataset.t_current)


def keep_mask(scores: ValidityScores, theta: float) -> np.ndarray:
    """True for records to keep: validity strictly below theta is outdated."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"filter threshold must lie in [0, 1], got {theta}")
    return scores.scores >= theta


def expiration_days(
    quads: np.ndarray, scores: ValidityScores, theta: float
) -> np.ndarray:
    """Per-record day at which each decay curve crosses theta."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"filter threshold must lie in [0, 1], got {theta}")
    if theta == 0.0:
        return np.full(scores.scores.shape, np.inf)
    return np.asarray(quads)[:, 3] + scores.half_lives * math.log2(1.0 / theta)


def write_validity_report(
    path, dataset: Dataset, scores: ValidityScores, theta: float
) -> None:
    """TSV: head, relation, tail, day, class, half-life, validity, outdated, expiration."""
    kept = keep_mask(scores, theta)
    expiry = expiration_days(dataset.quads, scores, theta)
    ents = dataset.vocab.entities
    rels = dataset.vocab.relations
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            "head\trelation\ttail\ttimestamp\tclass\thalf_life\tvalidity"
            "\toutdated\texpiration_day\n"
        )
        for i, (h, r, t, d) in enumerate(dataset.quads.tolist()):
            fh.write(
                f"{ents[h]}\t{rels[r]}\t{ents[t]}\t{d}\t"
                f"{CLASS_NAMES[int(scores.labels[i])]}\t{scores.half_lives[i]!r}\t"
                f"{scores.scores[i]!r}\t{int(not kept[i])}\t{expiry[i]!r}\n"
            )
