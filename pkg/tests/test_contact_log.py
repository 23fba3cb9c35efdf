import random

import pytest
from hypothesis import given, settings, strategies as st

from tracenet.contact_log import (
    Category,
    ContactLog,
    ContactRecord,
    EmptyRange,
    LocationLog,
    classify,
    log_from_records,
    records_from_csv,
    records_to_csv,
)
from tracenet.ident import DistanceClass

NEAR = DistanceClass.NEAR
MID = DistanceClass.MID
FAR = DistanceClass.FAR

X = bytes(range(16))
Y = bytes(range(16, 32))


def test_observe_base_case():
    log = ContactLog()
    log.observe([(X, NEAR)], date=0, tick=0)
    rec = log.records[(0, X)]
    assert rec.near_ticks == 1
    assert rec.mid_ticks == rec.far_ticks == 0
    assert rec.buckets == {0}
    assert rec.first_tick == rec.last_tick == 0


def test_observe_updates_duration_on_reobservation():
    log = ContactLog()
    log.observe([(X, NEAR)], date=0, tick=0)
    log.observe([(X, MID)], date=0, tick=1)
    rec = log.records[(0, X)]
    assert (rec.near_ticks, rec.mid_ticks) == (1, 1)
    assert rec.first_tick == 0 and rec.last_tick == 1


def test_observe_dedups_within_one_call():
    log = ContactLog()
    log.observe([(X, NEAR), (X, FAR)], date=0, tick=0)
    rec = log.records[(0, X)]
    assert rec.total_ticks == 1
    assert rec.near_ticks == 1  # first occurrence wins


def test_observe_one_increment_per_tick():
    log = ContactLog()
    log.observe([(X, NEAR)], date=0, tick=5)
    log.observe([(X, NEAR)], date=0, tick=5)
    assert log.records[(0, X)].near_ticks == 1


def test_last_tick_of_day_is_bucket_719():
    log = ContactLog()
    log.observe([(X, NEAR)], date=0, tick=2879)
    assert log.records[(0, X)].buckets == {719}


def test_tick_out_of_range_rejected():
    with pytest.raises(ValueError):
        ContactLog().observe([(X, NEAR)], date=0, tick=2880)


def test_six_neighbors_twelve_hours_storage_bound():
    # 6 devices seen every 30-s tick for 12 hours: 360 two-minute buckets
    # each, 2160 bucket-entries in total.
    log = ContactLog()
    rdis = [bytes([i]) * 16 for i in range(6)]
    for tick in range(1440):
        log.observe([(rdi, NEAR) for rdi in rdis], date=0, tick=tick)
    assert len(log.records) == 6
    for rdi in rdis:
        assert len(log.records[(0, rdi)].buckets) == 360
    assert sum(len(r.buckets) for r in log.records.values()) == 2160


@pytest.mark.parametrize(
    "near,mid,far,expected",
    [
        (31, 0, 0, Category.CATEGORY1),  # 15.5 min
        (29, 0, 0, Category.CATEGORY2),  # 14.5 min
        (30, 0, 0, Category.CATEGORY2),  # exactly 15.0 min: strict 'more than'
        (0, 0, 120, Category.UNCRITICAL),
        (0, 31, 0, Category.CATEGORY1),  # mid counts as face-to-face
        (16, 15, 0, Category.CATEGORY1),  # mixed 15.5 min
        (0, 0, 0, Category.UNCRITICAL),
    ],
)
def test_classification_boundaries(near, mid, far, expected):
    rec = ContactRecord(foreign_rdi=X, date=0, near_ticks=near,
                        mid_ticks=mid, far_ticks=far)
    assert classify(rec) == expected


def test_classify_depends_only_on_counts():
    a = ContactLog()
    b = ContactLog()
    ticks = [5, 100, 6, 99, 1000]
    for t in ticks:
        a.observe([(X, NEAR)], 0, t)
    for t in reversed(ticks):
        b.observe([(X, NEAR)], 0, t)
    assert classify(a.records[(0, X)]) == classify(b.records[(0, X)])


def test_prune_boundaries():
    log = ContactLog(retention_days=21)
    log.observe([(X, NEAR)], date=10, tick=0)
    log.observe([(Y, NEAR)], date=9, tick=0)
    log.prune(today=31)
    assert (10, X) in log.records
    assert (9, Y) not in log.records


def test_prune_empty_log_is_identity():
    log = ContactLog()
    log.prune(today=100)
    assert log.records == {}


def test_location_log_prunes_with_same_retention():
    loc = LocationLog()
    loc.append(9, 0, "loc-a", "or-a")
    loc.append(10, 0, "loc-b", "or-b")
    loc.prune(today=31, retention_days=21)
    assert 9 not in loc.days
    assert loc.excerpt(10) == [(0, "loc-b", "or-b")]


def test_export_history_filters_and_sorts():
    log = ContactLog()
    log.observe([(X, NEAR)], date=5, tick=10)
    log.observe([(Y, NEAR)], date=6, tick=3)
    log.observe([(X, NEAR)], date=7, tick=1)
    out = log.export_history(6, 7)
    assert [(r.date, r.foreign_rdi) for r in out] == [(6, Y), (7, X)]
    assert log.export_history(8, 9) == []


def test_export_history_rejects_empty_range():
    with pytest.raises(EmptyRange):
        ContactLog().export_history(9, 8)


def test_export_partition_property():
    # Full-range export equals the concatenation of per-day exports.
    rng = random.Random(17)
    log = ContactLog()
    for _ in range(300):
        rdi = rng.randbytes(16)
        date = rng.randrange(0, 10)
        tick = rng.randrange(0, 2880)
        cls = DistanceClass(rng.randrange(3))
        log.observe([(rdi, cls)], date, tick)
    whole = log.export_history(0, 9)
    per_day = [rec for d in range(10) for rec in log.export_history(d, d)]
    assert whole == per_day


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.integers(min_value=0, max_value=200),  # start tick
            st.integers(min_value=1, max_value=30),  # span length
            st.sampled_from([NEAR, MID, FAR]),
        ),
        min_size=1,
        max_size=12,
    )
)
def test_observe_span_equals_repeated_observe(spans):
    batched = ContactLog()
    single = ContactLog()
    for start, n, cls in spans:
        batched.observe_span(X, cls, 0, start, n)
        for tick in range(start, start + n):
            single.observe([(X, cls)], 0, tick)
    a = batched.records[(0, X)]
    b = single.records[(0, X)]
    assert (a.near_ticks, a.mid_ticks, a.far_ticks) == (b.near_ticks, b.mid_ticks, b.far_ticks)
    assert a.buckets == b.buckets
    assert (a.first_tick, a.last_tick) == (b.first_tick, b.last_tick)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.integers(min_value=0, max_value=2879),
            st.sampled_from([NEAR, MID, FAR]),
        ),
        min_size=1,
        max_size=40,
    )
)
def test_observe_monotone_and_bucket_consistent(observations):
    log = ContactLog()
    prev_total = 0
    prev_buckets = set()
    for tick, cls in observations:
        log.observe([(X, cls)], 0, tick)
        rec = log.records[(0, X)]
        assert rec.total_ticks >= prev_total
        assert rec.buckets >= prev_buckets
        prev_total = rec.total_ticks
        prev_buckets = set(rec.buckets)
        assert 1 <= len(rec.buckets) <= rec.total_ticks <= 4 * len(rec.buckets)
        assert rec.first_tick <= rec.last_tick
        assert rec.first_tick // 4 in rec.buckets
        assert rec.last_tick // 4 in rec.buckets


def test_history_csv_round_trip():
    log = ContactLog()
    log.observe([(X, NEAR)], date=3, tick=40)
    log.observe([(X, NEAR)], date=3, tick=41)
    log.observe([(Y, FAR)], date=4, tick=100)
    records = log.export_history(0, 10)
    text = records_to_csv(records)
    parsed = records_from_csv(text)
    assert [(r.date, r.foreign_rdi, r.near_ticks, r.far_ticks) for r in parsed] == [
        (3, X, 2, 0),
        (4, Y, 0, 1),
    ]
    rebuilt = log_from_records(parsed)
    assert set(rebuilt.records) == {(3, X), (4, Y)}


def test_history_csv_rejects_bad_header():
    with pytest.raises(ValueError):
        records_from_csv("not,a,header\n1,2,3\n")
