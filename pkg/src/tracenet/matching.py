"""Device-side matching of the local contact log against a published list.

A hit requires the identifier AND the date to agree: identifiers rotate
daily, so a date mismatch means a different broadcast period entirely.
"""

from __future__ import annotations

from dataclasses import dataclass


class UnverifiedList(ValueError):
    pass


@dataclass(frozen=True)
class Hit:
    rdi: bytes
    date: int
    record: object  # the matching ContactRecord


class CarrierIndex:
    """Constant-time membership over a verified list's (date, rdi) pairs."""

    def __init__(self, pairs):
        self._pairs = frozenset(pairs)

    def __contains__(self, key) -> bool:
        return key in self._pairs

    def __len__(self) -> int:
        return len(self._pairs)


def build_index(lst, verified: bool) -> CarrierIndex:
    """Index a published list for matching. `verified` must be the outcome
    of authority.verify_list on this list."""
    if not verified:
        raise UnverifiedList("refusing to index an unverified carrier list")
    return CarrierIndex(lst.entries)


def _sorted_hits(hits):
    hits.sort(key=lambda h: (h.date, h.record.first_tick, h.rdi))
    return hits


def match_contacts(log, index: CarrierIndex):
    """All log records whose (date, rdi) is in the index, in (date,
    first_tick) order."""
    hits = [
        Hit(rdi=rec.foreign_rdi, date=rec.date, record=rec)
        for (date, rdi), rec in log.records.items()
        if (date, rdi) in index
    ]
    return _sorted_hits(hits)


def brute_force_match(log, lst):
    """Reference oracle: nested-loop comparison of every record against
    every list entry. Semantics for match_contacts; kept deliberately dumb."""
    hits = []
    entries = list(lst.entries)
    for rec in log.records.values():
        for date, rdi in entries:
            if rec.date == date and rec.foreign_rdi == rdi:
                hits.append(Hit(rdi=rdi, date=date, record=rec))
                break  # duplicate entries still yield one hit per record
    return _sorted_hits(hits)
