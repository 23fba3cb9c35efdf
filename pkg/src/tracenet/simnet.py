"""Deterministic agent-based epidemic simulator driving the tracing stack.

One seeded run is fully reproducible: agents mix homogeneously, contact
events are tick-resolved inside a day, disease progression is day-resolved,
and every beacon a device logs goes through the real codec and contact-log
code. Tracing, casework and publication run against the real authority.
"""

from __future__ import annotations

import io
import math
import random
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import authority as authority_mod
from . import casework, matching
from .authority import AuthorityState, StaleHistory, generate_keypair, verify_list
from .casework import CaseState, MailboxMessage, MessageKind
from .contact_log import Category, ContactLog, LocationLog, TICKS_PER_DAY
from .ident import (
    DistanceClass,
    decode_beacon,
    encode_beacon,
    estimate_distance_class,
    generate_daily_identifier,
    rotate_if_needed,
)

# Health state codes.
SUSCEPTIBLE = 0
EXPOSED = 1
INFECTIOUS = 2
SYMPTOMATIC = 3
REMOVED = 4

# Calibrated broadcast power at 1 m and representative received powers per
# distance class, so receivers classify proximity from power like a radio
# would instead of being told the class.
TX_POWER_DBM = -59
CLASS_RSSI_DBM = {
    DistanceClass.NEAR: -59,  # ~1 m
    DistanceClass.MID: -69,  # ~3.2 m
    DistanceClass.FAR: -79,  # ~10 m
}

METRICS_CSV_HEADER = "day,new_infections,active_cases,quarantined,tests_used,list_size"


class InvalidConfig(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class NoConvergence(RuntimeError):
    pass


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    population: int = 1000
    days: int = 60
    seed: int = 0
    target_r0: float = 2.15
    latency_days: int = 3
    symptom_onset_days: int = 5
    course_days: int = 21
    asymptomatic_fraction: float = 0.3
    adoption_fraction: float = 1.0
    test_delay_days: int = 0
    contacts_per_day: float = 8.0
    duration_mean_ticks: float = 12.0
    near_fraction: float = 0.5
    mid_fraction: float = 0.3
    far_fraction: float = 0.2
    p_transmit: float = 0.01
    quarantine_leak: float = 0.05
    categories_traced: str = "cat1+cat2"
    index_cases: int = 1
    retention_days: int = 21
    incubation_days: int = 5
    lookback_days: int = 5
    trace_contact_derived: bool = False

    def validate(self) -> "ScenarioConfig":
        problems = []
        if self.population < 0:
            problems.append(f"population must be >= 0, got {self.population}")
        if self.days < 0:
            problems.append(f"days must be >= 0, got {self.days}")
        for name in ("latency_days", "symptom_onset_days", "course_days",
                     "test_delay_days", "index_cases", "retention_days",
                     "incubation_days", "lookback_days"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("asymptomatic_fraction", "adoption_fraction", "p_transmit",
                     "quarantine_leak", "near_fraction", "mid_fraction",
                     "far_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                problems.append(f"{name} must be in [0, 1], got {value}")
        if self.contacts_per_day < 0:
            problems.append(f"contacts_per_day must be >= 0, got {self.contacts_per_day}")
        if self.duration_mean_ticks < 1:
            problems.append(
                f"duration_mean_ticks must be >= 1, got {self.duration_mean_ticks}"
            )
        mix = self.near_fraction + self.mid_fraction + self.far_fraction
        if abs(mix - 1.0) > 1e-9:
            problems.append(f"distance-class mix must sum to 1, got {mix}")
        if self.categories_traced not in ("cat1", "cat1+cat2"):
            problems.append(
                f"categories_traced must be 'cat1' or 'cat1+cat2', "
                f"got {self.categories_traced!r}"
            )
        if problems:
            raise InvalidConfig(problems)
        return self

    @property
    def traced_categories(self):
        if self.categories_traced == "cat1":
            return frozenset({Category.CATEGORY1})
        return frozenset({Category.CATEGORY1, Category.CATEGORY2})


def config_from_file(path) -> ScenarioConfig:
    """Parse a flat key=value scenario file ('#' starts a comment)."""
    by_name = {f.name: f for f in fields(ScenarioConfig)}
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidConfig([f"{path}:{lineno}: expected key=value, got {line!r}"])
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            spec = by_name.get(key)
            if spec is None:
                raise InvalidConfig([f"{path}:{lineno}: unknown key {key!r}"])
            if spec.type in ("int", int):
                values[key] = int(value)
            elif spec.type in ("float", float):
                values[key] = float(value)
            elif spec.type in ("bool", bool):
                values[key] = value.lower() in ("1", "true", "yes")
            else:
                values[key] = value
    return ScenarioConfig(**values).validate()


@dataclass
class ContactEvent:
    day: int
    a: int
    b: int
    distance_class: DistanceClass
    start_tick: int
    n_ticks: int

    @property
    def near_ticks(self) -> int:
        return self.n_ticks if self.distance_class == DistanceClass.NEAR else 0

    @property
    def mid_ticks(self) -> int:
        return self.n_ticks if self.distance_class == DistanceClass.MID else 0


def infection_probability(near_ticks, mid_ticks, p_transmit):
    """Per-event infection probability: each near tick is an independent
    transmission chance, mid ticks count half, far ticks nothing."""
    exposure = near_ticks + 0.5 * mid_ticks
    return 1.0 - np.power(1.0 - p_transmit, exposure)


def transmit(event: ContactEvent, rng, p_transmit: float) -> bool:
    """Decide whether one contact event between an infectious and a
    susceptible agent transmits the disease."""
    prob = infection_probability(event.near_ticks, event.mid_ticks, p_transmit)
    return rng.random() < float(prob)


@dataclass
class Device:
    # The agent index is simulator bookkeeping only; it never enters any
    # beacon, upload or mailbox message.
    agent: int
    current: object = None  # DailyIdentifier
    id_history: dict = field(default_factory=dict)  # date -> rdi
    log: ContactLog = None
    loc: LocationLog = field(default_factory=LocationLog)
    handled: set = field(default_factory=set)  # (date, rdi) hits already acted on


@dataclass
class MetricsReport:
    population: int
    days: int
    latency_days: int
    new_infections: list
    active_cases: list
    quarantined: list
    tests_used: list
    list_size: list
    attack_rate: float
    empirical_r0: float
    extinction: bool
    extinction_day: int  # -1 when the epidemic never died out
    events: list = field(default_factory=list, repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(METRICS_CSV_HEADER + "\n")
        for d in range(len(self.new_infections)):
            buf.write(
                f"{d},{self.new_infections[d]},{self.active_cases[d]},"
                f"{self.quarantined[d]},{self.tests_used[d]},{self.list_size[d]}\n"
            )
        buf.write("# summary\n")
        buf.write(f"# population={self.population}\n")
        buf.write(f"# days={self.days}\n")
        buf.write(f"# latency_days={self.latency_days}\n")
        buf.write(f"# attack_rate={self.attack_rate:.6f}\n")
        buf.write(f"# empirical_r0={self.empirical_r0:.6f}\n")
        buf.write(f"# extinction={1 if self.extinction else 0}\n")
        buf.write(f"# extinction_day={self.extinction_day}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MetricsReport":
        lines = text.splitlines()
        if not lines or lines[0] != METRICS_CSV_HEADER:
            raise ValueError("bad metrics CSV header")
        series = {k: [] for k in METRICS_CSV_HEADER.split(",")[1:]}
        summary = {}
        for line in lines[1:]:
            if line.startswith("#"):
                body = line.lstrip("# ").strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    summary[key] = value
                continue
            parts = line.split(",")
            for key, value in zip(series, parts[1:]):
                series[key].append(int(value))
        return cls(
            population=int(summary["population"]),
            days=int(summary["days"]),
            latency_days=int(summary["latency_days"]),
            new_infections=series["new_infections"],
            active_cases=series["active_cases"],
            quarantined=series["quarantined"],
            tests_used=series["tests_used"],
            list_size=series["list_size"],
            attack_rate=float(summary["attack_rate"]),
            empirical_r0=float(summary["empirical_r0"]),
            extinction=summary["extinction"] == "1",
            extinction_day=int(summary["extinction_day"]),
        )


class World:
    """All mutable simulation state for one run."""

    def __init__(self, config: ScenarioConfig, seed: int = None,
                 record_events: bool = False):
        config.validate()
        if seed is not None:
            config = replace(config, seed=seed)
        self.config = config
        self.day = 0
        self.rng = random.Random(config.seed)
        self.nprng = np.random.default_rng(self.rng.getrandbits(63))
        self.record_events = record_events
        self.events = []

        n = config.population
        self.health = np.full(n, SUSCEPTIBLE, dtype=np.int8)
        self.day_infected = np.full(n, -1, dtype=np.int32)
        self.generation = np.full(n, -1, dtype=np.int32)
        self.infections_caused = np.zeros(n, dtype=np.int32)
        self.asymptomatic = self.nprng.random(n) < config.asymptomatic_fraction
        self.quarantined = np.zeros(n, dtype=bool)
        self.known_carrier = np.zeros(n, dtype=bool)
        self.adopter = np.zeros(n, dtype=bool)

        adopters = sorted(self.rng.sample(range(n), round(n * config.adoption_fraction)))
        self.adopter[adopters] = True
        self.devices = {
            a: Device(agent=a, log=ContactLog(retention_days=config.retention_days))
            for a in adopters
        }
        for a in self.rng.sample(range(n), min(config.index_cases, n)):
            self.health[a] = EXPOSED
            self.day_infected[a] = 0
            self.generation[a] = 0

        key, self.public_key = generate_keypair(self.rng)
        self.authority = AuthorityState(
            signing_key=key, trace_contact_derived=config.trace_contact_derived
        )
        self.case_agent = {}  # token -> agent (simulator bookkeeping only)
        self.pending_tests = []  # [(due_day, seq, kind, agent, token)]
        self._test_seq = 0
        # (date, rdi) -> set of observing agents: a reverse sighting map so
        # daily matching only visits devices that can possibly have a hit.
        # Hits themselves always come from matching.match_contacts.
        self.observers = {}

        self.metrics = {k: [] for k in
                        ("new_infections", "active_cases", "quarantined",
                         "tests_used", "list_size")}

    # -- helpers ----------------------------------------------------------

    def _log_event(self, day, tick, kind, subject, obj, detail):
        if self.record_events:
            self.events.append(f"{day},{tick},{kind},{subject},{obj},{detail}")

    def _schedule_test(self, due_day, kind, agent, token):
        self.pending_tests.append((due_day, self._test_seq, kind, agent, token))
        self._test_seq += 1

    def _infect(self, target, infector, day):
        self.health[target] = EXPOSED
        self.day_infected[target] = day
        self.generation[target] = self.generation[infector] + 1
        self.infections_caused[infector] += 1
        self._log_event(day, 0, "infect", infector, target, "")

    def _register_positive(self, agent, day):
        """Carrier registration: the device uploads its contact history and
        its own broadcast identifiers for the lookback window."""
        self.known_carrier[agent] = True
        dev = self.devices.get(agent)
        if dev is None:
            return  # no device, nothing to upload
        start = day - self.config.lookback_days
        history = dev.log.export_history(start, day)
        own = sorted(
            (date, rdi) for date, rdi in dev.id_history.items() if date >= start
        )
        try:
            self.authority.register_carrier(
                history, start, own_identifiers=own, today=day
            )
        except StaleHistory:
            return
        # The carrier's own upload must not trigger inquiries back at the
        # carrier when contact-derived entries get published.
        for rec in history:
            dev.handled.add((rec.date, rec.foreign_rdi))
        self._log_event(day, 0, "register", agent, "-", f"records={len(history)}")

    # -- daily step -------------------------------------------------------

    def _sample_events(self):
        cfg = self.config
        n = cfg.population
        if n == 0 or cfg.contacts_per_day == 0:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, empty, empty, empty
        lam = np.where(self.quarantined,
                       cfg.contacts_per_day * cfg.quarantine_leak,
                       cfg.contacts_per_day)
        counts = self.nprng.poisson(lam)
        src = np.repeat(np.arange(n, dtype=np.int64), counts)
        m = len(src)
        dst = self.nprng.integers(0, n, m, dtype=np.int64)
        clash = dst == src
        dst[clash] = (dst[clash] + 1) % n
        keep = self.nprng.random(m) < np.where(
            self.quarantined[dst], cfg.quarantine_leak, 1.0
        )
        dur = self.nprng.geometric(1.0 / cfg.duration_mean_ticks, m).astype(np.int64)
        np.minimum(dur, TICKS_PER_DAY, out=dur)
        cls = self.nprng.choice(
            3, m, p=[cfg.near_fraction, cfg.mid_fraction, cfg.far_fraction]
        )
        start = self.nprng.integers(0, TICKS_PER_DAY, m, dtype=np.int64)
        start = np.minimum(start, TICKS_PER_DAY - dur)
        return src[keep], dst[keep], cls[keep], start[keep], dur[keep]

    def _exchange_beacons(self, day, a, b, cls_code, start, dur):
        """Both devices of one contact event log each other through the real
        beacon codec and contact log."""
        rssi = CLASS_RSSI_DBM[DistanceClass(cls_code)]
        observed = estimate_distance_class(rssi, TX_POWER_DBM)
        for rx, tx in ((a, b), (b, a)):
            payload = encode_beacon(self.devices[tx].current)
            rdi = decode_beacon(payload)
            self.devices[rx].log.observe_span(rdi, observed, day, start, dur)
            self.observers.setdefault((day, rdi), set()).add(rx)

    def _run_due_tests(self, day):
        cfg = self.config
        due = [t for t in self.pending_tests if t[0] <= day]
        if not due:
            return 0
        self.pending_tests = [t for t in self.pending_tests if t[0] > day]
        used = 0
        for _, _, kind, agent, token in sorted(due):
            infected = self.health[agent] in (EXPOSED, INFECTIOUS, SYMPTOMATIC)
            result = "positive" if infected else "negative"
            if kind == "self":
                used += 1
                self._log_event(day, 0, "test", agent, "-", f"self:{result}")
                if infected and not self.known_carrier[agent]:
                    self._register_positive(agent, day)
                continue
            case = self.authority.cases.get(token)
            if case is None or case.state not in (
                CaseState.AWAITING_TEST1, CaseState.AWAITING_TEST2
            ):
                continue
            used += 1
            self._log_event(day, 0, "test", agent, "-", f"case:{result}")
            case, msgs = casework.step(
                case,
                MailboxMessage(token, MessageKind.TEST_RESULT,
                               {"result": result, "date": day}),
                today=day,
            )
            for msg in msgs:
                if msg.kind == MessageKind.HISTORY_REQUEST:
                    if not self.known_carrier[agent]:
                        self._register_positive(agent, day)
                    casework.step(
                        case,
                        MailboxMessage(token, MessageKind.HISTORY_UPLOAD, {}),
                        today=day,
                    )
                elif msg.kind == MessageKind.RELEASE:
                    self._log_event(day, 0, "release", agent, "-", "")
            if case.state == CaseState.AWAITING_TEST2 and result == "negative":
                self._schedule_test(day + cfg.incubation_days, "case", agent, token)
        return used

    def _match_and_inquire(self, day, lst):
        cfg = self.config
        verified = verify_list(lst, self.public_key)
        index = matching.build_index(lst, verified)
        if len(index) == 0:
            return
        candidates = set()
        for entry in lst.entries:
            candidates.update(self.observers.get(entry, ()))
        for agent in sorted(candidates):
            dev = self.devices[agent]
            hits = matching.match_contacts(dev.log, index)
            new = [h for h in hits if (h.date, h.rdi) not in dev.handled]
            if not new:
                continue
            for h in new:
                dev.handled.add((h.date, h.rdi))
                self._log_event(day, 0, "hit", agent, "-",
                                f"date={h.date}")
            if self.known_carrier[agent]:
                continue  # already registered; no new inquiry needed
            _, msgs = casework.on_hits(new, "negotiate", self.rng)
            for msg in msgs:
                case = casework.CaseRecord(
                    token=msg.token,
                    incubation_days=cfg.incubation_days,
                    lookback_days=cfg.lookback_days,
                )
                case, _ = casework.step(case, msg, today=day)
                self.authority.cases[msg.token] = case
                self.case_agent[msg.token] = agent
                case, out = casework.categorize(
                    case, case.summary,
                    traced_categories=cfg.traced_categories, today=day,
                )
                for m2 in out:
                    if m2.kind == MessageKind.TEST_ORDER:
                        self._schedule_test(day + cfg.test_delay_days,
                                            "case", agent, msg.token)
                        self._log_event(day, 0, "case", agent, "-",
                                        case.category.value)
                    elif m2.kind == MessageKind.DROP:
                        self._log_event(day, 0, "drop", agent, "-", "")

    def _refresh_quarantine(self):
        self.quarantined[:] = False
        infected = np.isin(self.health, (EXPOSED, INFECTIOUS, SYMPTOMATIC))
        self.quarantined |= self.known_carrier & infected
        for token, agent in self.case_agent.items():
            case = self.authority.cases.get(token)
            if case is not None and case.state in (
                CaseState.AWAITING_TEST1, CaseState.AWAITING_TEST2
            ):
                self.quarantined[agent] = True

    def step_day(self) -> "World":
        cfg = self.config
        day = self.day
        new_infections = 0
        tests_used = 0

        # 1. identifier rotation, retention pruning.
        for agent, dev in self.devices.items():
            if dev.current is None:
                dev.current = generate_daily_identifier(self.rng, day)
            else:
                dev.current = rotate_if_needed(dev.current, day, self.rng)
            dev.id_history[day] = dev.current.rdi
            dev.log.prune(day)
            dev.loc.prune(day, cfg.retention_days)
            dev.loc.append(day, 0, f"loc-{self.rng.getrandbits(32):08x}", "orient-0")
            cutoff = day - cfg.retention_days
            for old in [d for d in dev.id_history if d < cutoff]:
                del dev.id_history[old]
        stale = [k for k in self.observers if k[0] < day - cfg.retention_days]
        for k in stale:
            del self.observers[k]

        # 2. contact events: beacon logging and disease transmission.
        src, dst, cls, start, dur = self._sample_events()
        if len(src):
            if self.devices:
                logmask = self.adopter[src] & self.adopter[dst]
                for i in np.flatnonzero(logmask):
                    a, b = int(src[i]), int(dst[i])
                    self._exchange_beacons(day, a, b, int(cls[i]),
                                           int(start[i]), int(dur[i]))
                    self._log_event(day, int(start[i]), "contact", a, b,
                                    f"{int(cls[i])}:{int(dur[i])}")
            infectious = np.isin(self.health, (INFECTIOUS, SYMPTOMATIC))
            sus = self.health == SUSCEPTIBLE
            relevant = (infectious[src] & sus[dst]) | (sus[src] & infectious[dst])
            idx = np.flatnonzero(relevant)
            if len(idx):
                near = np.where(cls[idx] == 0, dur[idx], 0)
                mid = np.where(cls[idx] == 1, dur[idx], 0)
                probs = infection_probability(near, mid, cfg.p_transmit)
                draws = self.nprng.random(len(idx))
                for j in np.flatnonzero(draws < probs):
                    i = idx[j]
                    a, b = int(src[i]), int(dst[i])
                    if self.health[a] == SUSCEPTIBLE:
                        target, infector = a, b
                    else:
                        target, infector = b, a
                    if self.health[target] != SUSCEPTIBLE:
                        continue  # already infected earlier today
                    self._infect(target, infector, day)
                    new_infections += 1

        # 3. disease progression.
        infected = self.day_infected >= 0
        t = day - self.day_infected
        to_removed = infected & (self.health != REMOVED) & (t >= cfg.course_days)
        self.health[to_removed] = REMOVED
        to_infectious = (self.health == EXPOSED) & (t >= cfg.latency_days)
        self.health[to_infectious] = INFECTIOUS
        newly_symptomatic = (
            (self.health == INFECTIOUS)
            & (t >= cfg.symptom_onset_days)
            & ~self.asymptomatic
        )
        self.health[newly_symptomatic] = SYMPTOMATIC

        # 4. symptomatic adopters self-present for testing.
        for agent in np.flatnonzero(newly_symptomatic):
            agent = int(agent)
            if self.adopter[agent] and not self.known_carrier[agent]:
                self._schedule_test(day + cfg.test_delay_days, "self", agent, None)
                self._log_event(day, 0, "symptom", agent, "-", "")

        # 5. run tests due today.
        tests_used += self._run_due_tests(day)

        # 6. daily signed publication.
        lst = self.authority.publish(day)
        self._log_event(day, 0, "publish", "-", "-", f"entries={len(lst.entries)}")

        # 7. devices match at least once per day; new hits open inquiries,
        #    which are categorized and ordered for testing. A second test
        #    drain covers zero-delay test orders issued today.
        if self.devices:
            self._match_and_inquire(day, lst)
        tests_used += self._run_due_tests(day)

        # 8. erase expired non-public data.
        self.authority.erase_expired(day)

        # 9. quarantine flags for tomorrow's contact process.
        self._refresh_quarantine()

        # 10. metrics.
        active = int(np.count_nonzero(
            np.isin(self.health, (EXPOSED, INFECTIOUS, SYMPTOMATIC))
        ))
        self.metrics["new_infections"].append(new_infections)
        self.metrics["active_cases"].append(active)
        self.metrics["quarantined"].append(int(np.count_nonzero(self.quarantined)))
        self.metrics["tests_used"].append(tests_used)
        self.metrics["list_size"].append(len(lst.entries))
        self.day += 1
        return self


def init_world(config: ScenarioConfig, seed: int = None) -> World:
    return World(config, seed=seed)


def run(config: ScenarioConfig, seed: int = None,
        record_events: bool = False) -> MetricsReport:
    """Initialize a world, step it for the configured number of days, and
    return the metrics report. Stops early once the epidemic is extinct and
    no casework remains, padding the series with zeros."""
    world = World(config, seed=seed, record_events=record_events)
    days = config.days
    for _ in range(days):
        world.step_day()
        if (world.metrics["active_cases"][-1] == 0
                and not world.pending_tests):
            break
    while len(world.metrics["new_infections"]) < days:
        for key in world.metrics:
            world.metrics[key].append(0)
    return finalize_report(world)


def finalize_report(world: World) -> MetricsReport:
    cfg = world.config
    n = cfg.population
    ever_infected = int(np.count_nonzero(world.day_infected >= 0))
    attack_rate = ever_infected / n if n else 0.0
    index_mask = world.generation == 0
    if np.any(index_mask):
        empirical_r0 = float(np.mean(world.infections_caused[index_mask]))
    else:
        empirical_r0 = 0.0
    active = world.metrics["active_cases"]
    extinction_day = -1
    for d, value in enumerate(active):
        if value == 0:
            extinction_day = d
            break
    return MetricsReport(
        population=n,
        days=cfg.days,
        latency_days=cfg.latency_days,
        new_infections=world.metrics["new_infections"],
        active_cases=active,
        quarantined=world.metrics["quarantined"],
        tests_used=world.metrics["tests_used"],
        list_size=world.metrics["list_size"],
        attack_rate=attack_rate,
        empirical_r0=empirical_r0,
        extinction=extinction_day >= 0,
        extinction_day=extinction_day,
        events=world.events,
    )


def estimate_R_effective(report: MetricsReport, window_days: int = 7):
    """Ratio-of-new-infections estimator over one generation interval.

    Returns [(day, R)] for each day where the trailing window saw at least
    one infection. The generation interval is latency plus two days.
    """
    new = report.new_infections
    if len(new) < window_days:
        raise InsufficientData(
            f"need at least {window_days} days of data, have {len(new)}"
        )
    g = report.latency_days + 2
    series = []
    for t in range(g, len(new) - g + 1):
        denom = sum(new[t - g : t])
        if denom > 0:
            series.append((t, sum(new[t : t + g]) / denom))
    return series


def calibrate_p_transmit(config: ScenarioConfig, target_r0: float = None,
                         tolerance: float = 0.1, runs_per_probe: int = 20,
                         max_steps: int = 30) -> float:
    """Bisect the per-tick transmission probability until the Monte-Carlo
    estimate of mean secondary infections of index cases hits the target.

    Probes run with tracing disabled (no adopters) and just long enough for
    index cases to complete their disease course.
    """
    config.validate()
    if target_r0 is None:
        target_r0 = config.target_r0
    if target_r0 == 0:
        return 0.0
    probe_days = config.latency_days + config.course_days + 2
    base = replace(config, adoption_fraction=0.0, days=probe_days)

    def estimate(p):
        values = []
        for k in range(runs_per_probe):
            rep = run(replace(base, p_transmit=p, seed=config.seed * 100003 + k))
            values.append(rep.empirical_r0)
        return sum(values) / len(values)

    steps = 0
    lo = 0.0
    hi = 0.02
    hi_value = estimate(hi)
    steps += 1
    while hi_value < target_r0:
        if hi >= 1.0:
            raise NoConvergence(
                f"R0 estimate {hi_value:.3f} below target {target_r0} at p=1"
            )
        hi = min(1.0, hi * 2)
        hi_value = estimate(hi)
        steps += 1
        if steps >= max_steps:
            raise NoConvergence(f"no bracket after {steps} probes")
    while steps < max_steps:
        mid = (lo + hi) / 2
        value = estimate(mid)
        steps += 1
        if abs(value - target_r0) <= tolerance:
            return mid
        if value < target_r0:
            lo = mid
        else:
            hi = mid
    raise NoConvergence(f"no convergence after {max_steps} probes")
