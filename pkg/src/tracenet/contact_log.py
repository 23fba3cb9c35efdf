"""Device-local contact accounting and the optional location log.

Observations arrive on a 30-second tick grid: 2880 ticks per day, grouped
into 720 two-minute buckets. A record accumulates per-class tick counts for
one foreign identifier on one date; face-to-face time is the near+mid tick
count at half a minute per tick.
"""

from __future__ import annotations

import io
import csv
from dataclasses import dataclass, field
from enum import Enum

from .ident import DistanceClass, rdi_from_hex, rdi_to_hex

TICKS_PER_DAY = 2880
TICKS_PER_BUCKET = 4
BUCKETS_PER_DAY = 720
MINUTES_PER_TICK = 0.5

DEFAULT_RETENTION_DAYS = 21
DEFAULT_CATEGORY1_THRESHOLD_MINUTES = 15.0

HISTORY_CSV_HEADER = (
    "date,rdi_hex,near_ticks,mid_ticks,far_ticks,first_tick,last_tick,bucket_count"
)


class EmptyRange(ValueError):
    pass


class Category(Enum):
    CATEGORY1 = "category1"
    CATEGORY2 = "category2"
    UNCRITICAL = "uncritical"


@dataclass
class ContactRecord:
    """Accumulated observations of one foreign identifier on one date."""

    foreign_rdi: bytes
    date: int
    near_ticks: int = 0
    mid_ticks: int = 0
    far_ticks: int = 0
    buckets: set = field(default_factory=set)
    first_tick: int = -1
    last_tick: int = -1
    # Ticks already counted, for per-(rdi, tick) dedup. Not exported.
    seen_ticks: set = field(default_factory=set, repr=False)

    @property
    def total_ticks(self) -> int:
        return self.near_ticks + self.mid_ticks + self.far_ticks

    @property
    def face_to_face_minutes(self) -> float:
        return (self.near_ticks + self.mid_ticks) * MINUTES_PER_TICK

    def _add_tick(self, tick: int, cls: DistanceClass) -> None:
        if tick in self.seen_ticks:
            return
        self.seen_ticks.add(tick)
        if cls == DistanceClass.NEAR:
            self.near_ticks += 1
        elif cls == DistanceClass.MID:
            self.mid_ticks += 1
        else:
            self.far_ticks += 1
        self.buckets.add(tick // TICKS_PER_BUCKET)
        if self.first_tick < 0 or tick < self.first_tick:
            self.first_tick = tick
        if tick > self.last_tick:
            self.last_tick = tick


def classify(
    record: ContactRecord,
    threshold_minutes: float = DEFAULT_CATEGORY1_THRESHOLD_MINUTES,
) -> Category:
    """Categorize a contact by accumulated face-to-face minutes.

    Exactly at the threshold is Category 2: Category 1 requires strictly
    more than `threshold_minutes`. Far-only contacts are uncritical.
    """
    face_ticks = record.near_ticks + record.mid_ticks
    if face_ticks == 0:
        return Category.UNCRITICAL
    if face_ticks * MINUTES_PER_TICK > threshold_minutes:
        return Category.CATEGORY1
    return Category.CATEGORY2


@dataclass
class LocationLog:
    """Opaque location/orientation tokens (my_loc), kept per day."""

    days: dict = field(default_factory=dict)  # date -> list[(tick, loc, orient)]

    def append(self, date: int, tick: int, location_token: str, orientation_token: str):
        self.days.setdefault(date, []).append((tick, location_token, orientation_token))

    def prune(self, today: int, retention_days: int) -> None:
        cutoff = today - retention_days
        for date in [d for d in self.days if d < cutoff]:
            del self.days[date]

    def excerpt(self, date: int):
        return list(self.days.get(date, []))


class ContactLog:
    """A device's contact records, keyed by (date, foreign rdi)."""

    def __init__(self, retention_days: int = DEFAULT_RETENTION_DAYS):
        self.records: dict = {}  # (date, rdi) -> ContactRecord
        self.retention_days = retention_days

    def observe(self, sightings, date: int, tick: int) -> "ContactLog":
        """Record one monitoring tick's sightings.

        `sightings` is an iterable of (rdi, DistanceClass); duplicate rdis
        within one call collapse to the first occurrence, and a (rdi, tick)
        pair is never counted twice.
        """
        if not 0 <= tick < TICKS_PER_DAY:
            raise ValueError(f"tick out of range: {tick}")
        seen_this_call = set()
        for rdi, cls in sightings:
            if rdi in seen_this_call:
                continue
            seen_this_call.add(rdi)
            rec = self.records.get((date, rdi))
            if rec is None:
                rec = ContactRecord(foreign_rdi=rdi, date=date)
                self.records[(date, rdi)] = rec
            rec._add_tick(tick, cls)
        return self

    def observe_span(
        self, rdi: bytes, cls: DistanceClass, date: int, start_tick: int, n_ticks: int
    ) -> "ContactLog":
        """Batched form of observe: one rdi seen at one class for
        `n_ticks` consecutive ticks. Equivalent to n_ticks observe calls."""
        if n_ticks <= 0:
            return self
        end = min(start_tick + n_ticks, TICKS_PER_DAY)
        if not 0 <= start_tick < TICKS_PER_DAY:
            raise ValueError(f"start_tick out of range: {start_tick}")
        rec = self.records.get((date, rdi))
        if rec is None:
            rec = ContactRecord(foreign_rdi=rdi, date=date)
            self.records[(date, rdi)] = rec
        span = range(start_tick, end)
        if rec.seen_ticks.isdisjoint(span):
            new_count = len(span)
            rec.seen_ticks.update(span)
        else:
            new = set(span).difference(rec.seen_ticks)
            new_count = len(new)
            rec.seen_ticks.update(new)
        if new_count:
            if cls == DistanceClass.NEAR:
                rec.near_ticks += new_count
            elif cls == DistanceClass.MID:
                rec.mid_ticks += new_count
            else:
                rec.far_ticks += new_count
            # Every tick in the span is in seen_ticks now, so every bucket
            # the span touches belongs in the record.
            rec.buckets.update(range(start_tick // TICKS_PER_BUCKET,
                                     (end - 1) // TICKS_PER_BUCKET + 1))
            if rec.first_tick < 0 or start_tick < rec.first_tick:
                rec.first_tick = start_tick
            if end - 1 > rec.last_tick:
                rec.last_tick = end - 1
        return self

    def prune(self, today: int) -> "ContactLog":
        """Drop records older than the retention window."""
        cutoff = today - self.retention_days
        for key in [k for k in self.records if k[0] < cutoff]:
            del self.records[key]
        return self

    def export_history(self, from_date: int, to_date: int):
        """Records in [from_date, to_date], sorted by (date, first_tick).

        The export carries no device identity by construction: records hold
        only foreign identifiers and timing counts.
        """
        if from_date > to_date:
            raise EmptyRange(f"from_date {from_date} > to_date {to_date}")
        out = [
            rec
            for rec in self.records.values()
            if from_date <= rec.date <= to_date
        ]
        out.sort(key=lambda r: (r.date, r.first_tick, r.foreign_rdi))
        return out


def records_to_csv(records) -> str:
    """Serialize contact records to the history CSV format (LF-terminated)."""
    buf = io.StringIO()
    buf.write(HISTORY_CSV_HEADER + "\n")
    for rec in records:
        buf.write(
            f"{rec.date},{rdi_to_hex(rec.foreign_rdi)},{rec.near_ticks},"
            f"{rec.mid_ticks},{rec.far_ticks},{rec.first_tick},{rec.last_tick},"
            f"{len(rec.buckets)}\n"
        )
    return buf.getvalue()


def records_from_csv(text: str):
    """Parse history CSV. Bucket indices are not serialized, only their
    count, so parsed records carry empty bucket sets."""
    reader = csv.DictReader(io.StringIO(text))
    expected = HISTORY_CSV_HEADER.split(",")
    if reader.fieldnames != expected:
        raise ValueError(f"bad history CSV header: {reader.fieldnames}")
    out = []
    for row in reader:
        out.append(
            ContactRecord(
                foreign_rdi=rdi_from_hex(row["rdi_hex"]),
                date=int(row["date"]),
                near_ticks=int(row["near_ticks"]),
                mid_ticks=int(row["mid_ticks"]),
                far_ticks=int(row["far_ticks"]),
                first_tick=int(row["first_tick"]),
                last_tick=int(row["last_tick"]),
            )
        )
    return out


def log_from_records(records, retention_days: int = DEFAULT_RETENTION_DAYS) -> ContactLog:
    """Build a ContactLog from pre-accumulated records (e.g. a parsed CSV)."""
    log = ContactLog(retention_days=retention_days)
    for rec in records:
        log.records[(rec.date, rec.foreign_rdi)] = rec
    return log
