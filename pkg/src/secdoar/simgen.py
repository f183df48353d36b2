"""Seeded synthetic traffic: Poisson baseline plus injected DoS/DDoS bursts.

Attack arrivals are spread uniformly over the injection interval, one
jittered slot per request, so each whole second of an integer-aligned
injection receives exactly ``rate`` requests.
"""
from __future__ import annotations

import ipaddress
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import InvalidInjection
from .ingest import record_to_jsonl
from .model import Auth, TrafficRecord

CASE_STUDY_TARGET = ("54.85.240.191", 443)
# 2021-07-20T00:15:04 UTC
DEFAULT_START_EPOCH = 1626740104.0


def source_pool() -> list[str]:
    """Host addresses of the two documentation ranges used as traffic sources."""
    pool = []
    for net in ("203.0.113.0/24", "198.51.100.0/24"):
        pool.extend(str(h) for h in ipaddress.ip_network(net).hosts())
    return pool


def parse_target(target) -> tuple[str, int]:
    if isinstance(target, str):
        host, _, port = target.rpartition(":")
        return host, int(port)
    host, port = target
    return str(host), int(port)


@dataclass(frozen=True)
class Injection:
    start: float
    duration: float
    rate: float
    n_sources: int
    target: tuple = CASE_STUDY_TARGET
    failure_fraction: float = 0.0
    sources: tuple = ()  # pinned source addresses, used instead of the pool

    def __post_init__(self):
        object.__setattr__(self, "target", parse_target(self.target))
        object.__setattr__(self, "sources", tuple(self.sources))

    @classmethod
    def from_dict(cls, d: dict) -> "Injection":
        return cls(
            start=float(d["start"]),
            duration=float(d["duration"]),
            rate=float(d["rate"]),
            n_sources=int(d.get("n_sources", len(d.get("sources", [])) or 1)),
            target=parse_target(d.get("target", CASE_STUDY_TARGET)),
            failure_fraction=float(d.get("failure_fraction", 0.0)),
            sources=tuple(d.get("sources", ())),
        )


@dataclass
class Scenario:
    targets: list = field(default_factory=lambda: [CASE_STUDY_TARGET])
    injections: list = field(default_factory=list)
    start_epoch: float = DEFAULT_START_EPOCH
    tool_id: str = "zeek"

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(
            targets=[parse_target(t) for t in d.get("targets", [CASE_STUDY_TARGET])],
            injections=[Injection.from_dict(i) for i in d.get("injections", [])],
            start_epoch=float(d.get("start_epoch", DEFAULT_START_EPOCH)),
            tool_id=d.get("tool_id", "zeek"),
        )

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _check(inj: Injection, duration_s: float, pool_size: int) -> None:
    if inj.start < 0 or inj.duration <= 0 or inj.start + inj.duration > duration_s:
        raise InvalidInjection(f"injection [{inj.start}, {inj.start + inj.duration}) outside trace horizon [0, {duration_s})")
    if inj.rate <= 0:
        raise InvalidInjection("injection rate must be positive")
    if inj.n_sources < 1:
        raise InvalidInjection("injection needs at least one source")
    if not inj.sources and inj.n_sources > pool_size:
        raise InvalidInjection(f"{inj.n_sources} sources requested, pool has {pool_size}")
    if not 0.0 <= inj.failure_fraction <= 1.0:
        raise InvalidInjection("failure_fraction must lie in [0, 1]")


def _ts(start_epoch: float, offset: float) -> float:
    # microsecond resolution so emitted TSV re-parses to the same float
    return round(start_epoch + offset, 6)


def generate_trace(seed: int, duration_s: float, baseline_rate: float,
                   targets: Optional[Iterable] = None, injections: Iterable[Injection] = (),
                   start_epoch: float = DEFAULT_START_EPOCH, tool_id: str = "zeek",
                   priority: int = 5) -> list[TrafficRecord]:
    """Deterministic trace for ``seed``; records come back sorted by ts."""
    if baseline_rate < 0:
        raise ValueError("baseline_rate must be non-negative")
    targets = [parse_target(t) for t in (targets or [CASE_STUDY_TARGET])]
    injections = list(injections)
    pool = source_pool()
    for inj in injections:
        _check(inj, duration_s, len(pool))
    if duration_s <= 0:
        return []

    rng = np.random.default_rng(seed)
    records = []

    def make(offset, src, dst, auth=None):
        host, port = dst
        return TrafficRecord(
            ts=_ts(start_epoch, offset), src_ip=src, src_port=int(rng.integers(1024, 65536)),
            dst_host=host, dst_port=port, protocol="TCP", priority=priority,
            bytes=int(rng.integers(40, 1500)), auth=auth, tool_id=tool_id,
        )

    if baseline_rate > 0:
        t = rng.exponential(1.0 / baseline_rate)
        while t < duration_s:
            src = pool[int(rng.integers(len(pool)))]
            dst = targets[int(rng.integers(len(targets)))]
            records.append(make(t, src, dst))
            t += rng.exponential(1.0 / baseline_rate)

    for inj in injections:
        sources = list(inj.sources) if inj.sources else \
            [pool[i] for i in rng.choice(len(pool), size=inj.n_sources, replace=False)]
        n = int(round(inj.rate * inj.duration))
        slot = inj.duration / n if n else 0.0
        jitter = rng.random(n) * 0.999  # keep each arrival inside its slot after rounding
        failing = set(rng.choice(n, size=int(round(inj.failure_fraction * n)), replace=False).tolist()) if n else set()
        for i in range(n):
            src = sources[i % len(sources)]
            auth = Auth(f"user{i % 97}", "failure") if i in failing else None
            records.append(make(inj.start + (i + jitter[i]) * slot, src, inj.target, auth))

    records.sort(key=lambda r: (r.ts, r.src_ip, r.src_port, r.dst_host, r.dst_port))
    return records


def generate_scenario(seed: int, duration_s: float, baseline_rate: float, scenario: Scenario) -> list[TrafficRecord]:
    return generate_trace(seed, duration_s, baseline_rate, scenario.targets, scenario.injections,
                          scenario.start_epoch, scenario.tool_id)


def case_study_trace(seed: int = 42) -> list[TrafficRecord]:
    """60 s at 5 req/s plus a 10 s, 50 req/s DDoS from 40 sources on the case-study target."""
    inj = Injection(start=20.0, duration=10.0, rate=50.0, n_sources=40, target=CASE_STUDY_TARGET)
    return generate_trace(seed, 60.0, 5.0, [CASE_STUDY_TARGET], [inj])


# -- emitters --------------------------------------------------------------

ZEEK_FIELDS = ("ts", "id.orig_h", "id.orig_p", "id.resp_h", "id.resp_p", "proto", "orig_bytes")
ZEEK_TYPES = ("time", "addr", "port", "addr", "port", "enum", "count")


def to_zeek_tsv(records: Iterable[TrafficRecord]) -> str:
    lines = [
        "#separator \\x09",
        "#set_separator\t,",
        "#empty_field\t(empty)",
        "#unset_field\t-",
        "#path\tconn",
        "#fields\t" + "\t".join(ZEEK_FIELDS),
        "#types\t" + "\t".join(ZEEK_TYPES),
    ]
    for r in records:
        lines.append("\t".join([
            f"{r.ts:.6f}", r.src_ip, str(r.src_port), r.dst_host, str(r.dst_port),
            r.protocol.lower(), "-" if r.bytes is None else str(r.bytes),
        ]))
    lines.append("#close")
    return "\n".join(lines) + "\n"


def snort_time(ts: float) -> str:
    dt = datetime.fromtimestamp(ts, tz=timezone.utc)
    return dt.strftime("%m/%d-%H:%M:%S.") + f"{dt.microsecond:06d}"


def to_snort_fast(records: Iterable[TrafficRecord]) -> str:
    lines = []
    for r in records:
        if r.auth is not None and r.auth.outcome == "failure":
            sig, msg, cls = "1:1000002:1", "Failed login", "Failed login attempt"
        else:
            sig, msg, cls = "1:1000001:1", "DOS attempt", "Attempted Denial of Service"
        lines.append(f"{snort_time(r.ts)}  [**] [{sig}] {msg} [**] [Classification: {cls}] "
                     f"[Priority: {r.priority}] {{{r.protocol}}} {r.src_ip}:{r.src_port} -> {r.dst_host}:{r.dst_port}")
    return "\n".join(lines) + ("\n" if lines else "")


def to_jsonl(records: Iterable[TrafficRecord]) -> str:
    lines = [record_to_jsonl(r) for r in records]
    return "\n".join(lines) + ("\n" if lines else "")


EMITTERS = {"zeek": to_zeek_tsv, "snort": to_snort_fast, "jsonl": to_jsonl}


def emit(records: Iterable[TrafficRecord], fmt: str) -> str:
    try:
        return EMITTERS[fmt](records)
    except KeyError:
        raise ValueError(f"unknown emit format {fmt!r}") from None
