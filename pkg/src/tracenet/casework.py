"""Anonymous casework: mailbox messages and the quarantine/test state machine.

A hit device either quarantines silently (nothing is ever sent) or opens a
token-addressed inquiry. The token is fresh randomness, unrelated to any
identifier, so the mailbox exchange never reveals who is talking.

Case evolution: Idle -> InquiryOpen -> (Dropped | AwaitingTest1) ->
Carrier on a positive test, or AwaitingTest2 after a first negative and
Released after a second negative spaced at least an incubation period.
Illegal or duplicate messages are audited no-ops: the mailbox is
asynchronous and replays are expected.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import Enum, IntEnum

from .contact_log import Category, ContactRecord, classify

TOKEN_BYTES = 16
DEFAULT_INCUBATION_DAYS = 5
DEFAULT_LOOKBACK_DAYS = 5

ALL_CATEGORIES = frozenset({Category.CATEGORY1, Category.CATEGORY2})


class NoHits(ValueError):
    pass


class WrongState(ValueError):
    pass


class PrematureRetest(ValueError):
    pass


class CaseState(Enum):
    IDLE = "idle"
    SELF_QUARANTINED = "self_quarantined"
    INQUIRY_OPEN = "inquiry_open"
    AWAITING_TEST1 = "awaiting_test1"
    AWAITING_TEST2 = "awaiting_test2"
    CARRIER = "carrier"
    RELEASED = "released"
    DROPPED = "dropped"


TERMINAL_STATES = frozenset(
    {CaseState.SELF_QUARANTINED, CaseState.CARRIER, CaseState.RELEASED, CaseState.DROPPED}
)


class MessageKind(IntEnum):
    OPEN_INQUIRY = 1
    CATEGORIZATION_EVIDENCE = 2
    CATEGORY_DECISION = 3
    TEST_ORDER = 4
    TEST_RESULT = 5
    HISTORY_REQUEST = 6
    HISTORY_UPLOAD = 7
    RELEASE = 8
    DROP = 9


@dataclass(frozen=True)
class MailboxMessage:
    token: bytes
    kind: MessageKind
    body: dict = field(default_factory=dict)


def serialize_message(msg: MailboxMessage) -> bytes:
    """Length-prefixed wire form: u16 BE payload length, 16-byte token,
    1 kind byte, JSON body."""
    body = json.dumps(msg.body, sort_keys=True, separators=(",", ":")).encode()
    payload = msg.token + bytes([msg.kind]) + body
    return struct.pack(">H", len(payload)) + payload


def deserialize_message(data: bytes, offset: int = 0):
    """Decode one message at `offset`; returns (message, next_offset)."""
    if len(data) < offset + 2:
        raise ValueError("truncated length prefix")
    (length,) = struct.unpack(">H", data[offset : offset + 2])
    start = offset + 2
    end = start + length
    if len(data) < end or length < TOKEN_BYTES + 1:
        raise ValueError("truncated message payload")
    token = data[start : start + TOKEN_BYTES]
    kind = MessageKind(data[start + TOKEN_BYTES])
    body = json.loads(data[start + TOKEN_BYTES + 1 : end] or b"{}")
    return MailboxMessage(token=token, kind=kind, body=body), end


@dataclass
class CaseRecord:
    """Authority-side state for one anonymous inquiry."""

    token: bytes
    state: CaseState = CaseState.IDLE
    category: Category = None
    test_results: list = field(default_factory=list)  # [(result, date)]
    created_epoch: int = None
    resolution_epoch: int = None
    summary: dict = None
    evidence: list = field(default_factory=list)
    audit: list = field(default_factory=list)
    incubation_days: int = DEFAULT_INCUBATION_DAYS
    lookback_days: int = DEFAULT_LOOKBACK_DAYS


def new_token(rng) -> bytes:
    return rng.randbytes(TOKEN_BYTES)


def hit_summary(record) -> dict:
    """Minimal disclosure for an inquiry: the carrier-day and duration and
    distance breakdown, nothing else."""
    return {
        "date": record.date,
        "rdi": record.foreign_rdi.hex(),
        "duration_minutes": record.face_to_face_minutes,
        "near_ticks": record.near_ticks,
        "mid_ticks": record.mid_ticks,
        "far_ticks": record.far_ticks,
    }


def on_hits(hits, preference: str, rng):
    """Device reaction to matched hits.

    preference "quarantine_silently" sends nothing; "negotiate" opens one
    inquiry per distinct carrier-day, each with a fresh random token.
    """
    hits = list(hits)
    if not hits:
        raise NoHits("no hits to act on")
    if preference == "quarantine_silently":
        return CaseState.SELF_QUARANTINED, []
    if preference != "negotiate":
        raise ValueError(f"unknown preference {preference!r}")
    messages = []
    seen = set()
    for hit in hits:
        key = (hit.date, hit.rdi)
        if key in seen:
            continue
        seen.add(key)
        messages.append(
            MailboxMessage(
                token=new_token(rng),
                kind=MessageKind.OPEN_INQUIRY,
                body=hit_summary(hit.record),
            )
        )
    return CaseState.INQUIRY_OPEN, messages


def _summary_record(summary: dict, evidence) -> ContactRecord:
    """Rebuild a classification input from an inquiry summary, applying any
    evidence-driven distance reassessment."""
    near = int(summary.get("near_ticks", 0))
    mid = int(summary.get("mid_ticks", 0))
    far = int(summary.get("far_ticks", 0))
    for item in evidence or []:
        reassess = item.get("reassess") if isinstance(item, dict) else None
        if reassess == "far":
            far += near + mid
            near = mid = 0
        elif reassess == "near":
            near += far
            far = 0
    return ContactRecord(
        foreign_rdi=bytes(16), date=int(summary.get("date", 0)),
        near_ticks=near, mid_ticks=mid, far_ticks=far,
    )


def _drop(case: CaseRecord, today) -> None:
    # Erase everything the inquiry carried; the drop leaves no payload.
    case.state = CaseState.DROPPED
    case.summary = None
    case.evidence = []
    case.resolution_epoch = today


def categorize(case: CaseRecord, record_summary: dict, evidence=None,
               traced_categories=ALL_CATEGORIES, today: int = None):
    """Decide the category of an open inquiry.

    Uncritical (or a category the authority is not tracing) drops the case
    and erases its data; otherwise a test is ordered.
    """
    if case.state != CaseState.INQUIRY_OPEN:
        raise WrongState(f"categorize in state {case.state}")
    category = classify(_summary_record(record_summary, evidence or case.evidence))
    messages = []
    if category == Category.UNCRITICAL or category not in traced_categories:
        _drop(case, today)
        messages.append(MailboxMessage(case.token, MessageKind.DROP, {}))
    else:
        case.category = category
        case.state = CaseState.AWAITING_TEST1
        messages.append(
            MailboxMessage(case.token, MessageKind.TEST_ORDER,
                           {"category": category.value})
        )
    return case, messages


def record_test_result(case: CaseRecord, result: str, date: int,
                       incubation_days: int = None):
    """Apply a test outcome.

    Positive makes the case a carrier and requests the contact history for
    the lookback window. A first negative schedules a retest; a second
    negative dated at least an incubation period after the first releases
    the person.
    """
    if case.state not in (CaseState.AWAITING_TEST1, CaseState.AWAITING_TEST2):
        raise WrongState(f"test result in state {case.state}")
    if incubation_days is None:
        incubation_days = case.incubation_days
    messages = []
    if result == "positive":
        case.test_results.append((result, date))
        case.state = CaseState.CARRIER
        case.resolution_epoch = date
        messages.append(
            MailboxMessage(case.token, MessageKind.HISTORY_REQUEST,
                           {"from_date": date - case.lookback_days})
        )
    elif result == "negative":
        if case.state == CaseState.AWAITING_TEST1:
            case.test_results.append((result, date))
            case.state = CaseState.AWAITING_TEST2
        else:
            first_negative = max(d for r, d in case.test_results if r == "negative")
            if date < first_negative + incubation_days:
                raise PrematureRetest(
                    f"retest at {date} before {first_negative} + {incubation_days}"
                )
            case.test_results.append((result, date))
            case.state = CaseState.RELEASED
            case.resolution_epoch = date
            messages.append(MailboxMessage(case.token, MessageKind.RELEASE, {}))
    else:
        raise ValueError(f"unknown test result {result!r}")
    return case, messages


def step(case: CaseRecord, message: MailboxMessage, today: int = None):
    """Total transition function over (case, message).

    Illegal pairs, duplicates and premature retests never fail: they leave
    the case unchanged and record an audit entry.
    """
    def illegal(reason):
        case.audit.append(f"{message.kind.name} in {case.state.value}: {reason}")
        return case, []

    kind = message.kind
    if kind == MessageKind.OPEN_INQUIRY:
        if case.state != CaseState.IDLE:
            return illegal("already open")
        case.state = CaseState.INQUIRY_OPEN
        case.summary = dict(message.body)
        case.created_epoch = today
        return case, []
    if kind == MessageKind.CATEGORIZATION_EVIDENCE:
        if case.state != CaseState.INQUIRY_OPEN:
            return illegal("no open inquiry")
        case.evidence.append(dict(message.body))
        return case, []
    if kind == MessageKind.CATEGORY_DECISION:
        if case.state != CaseState.INQUIRY_OPEN:
            return illegal("no open inquiry")
        category = Category(message.body["category"])
        if category == Category.UNCRITICAL:
            _drop(case, today)
            return case, [MailboxMessage(case.token, MessageKind.DROP, {})]
        case.category = category
        case.state = CaseState.AWAITING_TEST1
        return case, [MailboxMessage(case.token, MessageKind.TEST_ORDER,
                                     {"category": category.value})]
    if kind == MessageKind.TEST_RESULT:
        result = message.body.get("result")
        date = int(message.body.get("date", 0))
        if (result, date) in case.test_results:
            return illegal("duplicate test result")
        if case.state not in (CaseState.AWAITING_TEST1, CaseState.AWAITING_TEST2):
            return illegal("no test pending")
        try:
            return record_test_result(case, result, date)
        except (PrematureRetest, ValueError) as exc:
            return illegal(str(exc))
    if kind == MessageKind.HISTORY_UPLOAD:
        if case.state != CaseState.CARRIER:
            return illegal("no history requested")
        # Records land in the authority's retained histories, not here;
        # the case only notes that the upload happened.
        case.audit.append("history uploaded")
        return case, []
    if kind == MessageKind.DROP:
        if case.state != CaseState.INQUIRY_OPEN:
            return illegal("nothing to drop")
        _drop(case, today)
        return case, []
    # TEST_ORDER, HISTORY_REQUEST and RELEASE are authority-to-device
    # notifications; receiving one on a case is always a protocol violation.
    return illegal("device-bound message")


def case_to_dict(case: CaseRecord) -> dict:
    """JSON-safe snapshot of a case for authority state serialization."""
    return {
        "token": case.token.hex(),
        "state": case.state.value,
        "category": case.category.value if case.category else None,
        "test_results": [[r, d] for r, d in case.test_results],
        "created_epoch": case.created_epoch,
        "resolution_epoch": case.resolution_epoch,
        "summary": case.summary,
        "evidence": case.evidence,
    }
