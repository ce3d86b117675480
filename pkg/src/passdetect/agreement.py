"""Event-level agreement between two annotation sources.

Events from the two sources are matched one-to-one on start times within a
tolerance window: a predicted event starting at t can pair with a reference
event starting anywhere in [t - dt, t + dt]. Matching is greedy
nearest-first, which is deterministic and, on small instances, reaches the
same cardinality as an optimal assignment (property-checked in the tests).

The agreement rate follows the chance-corrected form

    rate = 1 - (1 - p_o) / (1 - p_e)

with p_o the observed agreement 2M / (Np + Nr) and p_e a chance model in
which each source independently marks a random dt-window with probability
min(1, N * 2 * dt / duration). The raw value is reported, so it can be
negative when agreement is below chance.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .core import PassEvent, ValidationError
from .ingest import atomic_write_text


@dataclass(frozen=True)
class MatchedPair:
    predicted: PassEvent
    reference: PassEvent
    delta_s: float


@dataclass(frozen=True)
class MatchingResult:
    pairs: tuple[MatchedPair, ...]
    unmatched_predicted: tuple[PassEvent, ...]
    unmatched_reference: tuple[PassEvent, ...]
    delta_t: float

    @property
    def matched(self) -> int:
        return len(self.pairs)


def match_events(
    predicted: Sequence[PassEvent], reference: Sequence[PassEvent], delta_t: float
) -> MatchingResult:
    """Greedy one-to-one matching of events by start-time proximity.

    Candidate pairs with |start difference| <= delta_t are taken in
    ascending difference order; ties go to the earlier predicted start,
    then the earlier reference start. Each event matches at most once.
    """
    if delta_t < 0:
        raise ValidationError("delta_t must be >= 0")
    predicted = sorted(predicted, key=lambda e: (e.start_s, e.end_s, e.event_id))
    reference = sorted(reference, key=lambda e: (e.start_s, e.end_s, e.event_id))

    candidates = []
    for p_index, pred in enumerate(predicted):
        for r_index, ref in enumerate(reference):
            gap = abs(pred.start_s - ref.start_s)
            if gap <= delta_t:
                candidates.append((gap, pred.start_s, ref.start_s, p_index, r_index))
    candidates.sort()

    taken_pred: set[int] = set()
    taken_ref: set[int] = set()
    pairs = []
    for gap, _, _, p_index, r_index in candidates:
        if p_index in taken_pred or r_index in taken_ref:
            continue
        taken_pred.add(p_index)
        taken_ref.add(r_index)
        pairs.append(
            MatchedPair(predicted=predicted[p_index], reference=reference[r_index], delta_s=gap)
        )
    return MatchingResult(
        pairs=tuple(pairs),
        unmatched_predicted=tuple(
            e for i, e in enumerate(predicted) if i not in taken_pred
        ),
        unmatched_reference=tuple(
            e for i, e in enumerate(reference) if i not in taken_ref
        ),
        delta_t=delta_t,
    )


@dataclass(frozen=True)
class AgreementRate:
    p_o: float
    p_e: float
    rate: float
    matched: int
    n_predicted: int
    n_reference: int
    delta_t: float
    undefined: bool = False


def inter_rater_agreement(matching: MatchingResult, half_duration_s: float) -> AgreementRate:
    """Chance-corrected agreement for a matching result.

    A saturated chance model (p_e = 1) makes the correction undefined; the
    result is then flagged and the rate reported as 0.
    """
    n_predicted = matching.matched + len(matching.unmatched_predicted)
    n_reference = matching.matched + len(matching.unmatched_reference)
    if n_predicted == 0 and n_reference == 0:
        raise ValidationError("agreement needs at least one event on one side")
    if half_duration_s <= 0:
        raise ValidationError("half duration must be positive")

    p_o = 2.0 * matching.matched / (n_predicted + n_reference)
    window = 2.0 * matching.delta_t
    q_pred = min(1.0, n_predicted * window / half_duration_s)
    q_ref = min(1.0, n_reference * window / half_duration_s)
    p_e = q_pred * q_ref + (1.0 - q_pred) * (1.0 - q_ref)

    if p_e >= 1.0:
        return AgreementRate(
            p_o=p_o,
            p_e=p_e,
            rate=0.0,
            matched=matching.matched,
            n_predicted=n_predicted,
            n_reference=n_reference,
            delta_t=matching.delta_t,
            undefined=True,
        )
    rate = 1.0 - (1.0 - p_o) / (1.0 - p_e)
    return AgreementRate(
        p_o=p_o,
        p_e=p_e,
        rate=rate,
        matched=matching.matched,
        n_predicted=n_predicted,
        n_reference=n_reference,
        delta_t=matching.delta_t,
    )


DEFAULT_DELTA_GRID = tuple(round(0.5 * i, 10) for i in range(1, 11))  # 0.5 .. 5.0 s


def agreement_sweep(
    predicted: Sequence[PassEvent],
    reference: Sequence[PassEvent],
    half_duration_s: float,
    grid: Sequence[float] = DEFAULT_DELTA_GRID,
) -> list[AgreementRate]:
    """One agreement row per tolerance in the grid."""
    if not grid:
        raise ValidationError("delta grid must be non-empty")
    rows = []
    for delta_t in grid:
        matching = match_events(predicted, reference, delta_t)
        rows.append(inter_rater_agreement(matching, half_duration_s))
    return rows


def save_sweep_csv(path: Path, rows: Sequence[AgreementRate]) -> None:
    def write(handle) -> None:
        writer = csv.writer(handle)
        writer.writerow(["delta_t", "matched", "p_o", "p_e", "irar"])
        for row in rows:
            writer.writerow(
                [
                    format(row.delta_t, ".12g"),
                    row.matched,
                    format(row.p_o, ".12g"),
                    format(row.p_e, ".12g"),
                    format(row.rate, ".12g"),
                ]
            )

    atomic_write_text(Path(path), write)
