"""Domain types shared across the pipeline.

Everything here is a plain value object: no I/O, no shared mutable state.
Timestamps are epoch seconds (float) internally and ISO-8601 (UTC, no
offset) once rendered.
"""
from __future__ import annotations

import dataclasses
import ipaddress
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, NamedTuple, Optional, Union

# Canonical TrafficRecord fields in the fixed serialization order.
RECORD_FIELDS = (
    "ts", "src_ip", "src_port", "dst_host", "dst_port",
    "protocol", "priority", "bytes", "auth", "tool_id",
)

# Fields that identify one observation across tools.
OBSERVATION_KEY = ("ts", "src_ip", "src_port", "dst_host", "dst_port", "protocol")

KNOWN_PROTOCOLS = ("TCP", "UDP", "ICMP")

_DOTTED_QUAD = re.compile(r"^(\d{1,3})\.(\d{1,3})\.(\d{1,3})\.(\d{1,3})$")


def canonical_ip(value: str) -> Optional[str]:
    """Canonical text of an IPv4/IPv6 address, or None if it is not one.

    IPv4 octets lose leading zeros; IPv6 is compressed and lowercased.
    """
    value = value.strip()
    m = _DOTTED_QUAD.match(value)
    if m:
        octets = [int(g) for g in m.groups()]
        if all(o <= 255 for o in octets):
            return ".".join(str(o) for o in octets)
        return None
    try:
        return ipaddress.IPv6Address(value).compressed
    except ValueError:
        return None


def canonical_host(value: str) -> str:
    ip = canonical_ip(value)
    return ip if ip is not None else value.strip().lower()


def canonical_protocol(value: str) -> str:
    # anything outside the known set is kept as OTHER, upper-cased
    return value.strip().upper()


def to_iso(ts: float) -> str:
    """Render epoch seconds as ``YYYY-MM-DDTHH:MM:SS[.fff]`` in UTC."""
    dt = datetime.fromtimestamp(ts, tz=timezone.utc)
    if ts == math.floor(ts):
        return dt.strftime("%Y-%m-%dT%H:%M:%S")
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}"


def from_iso(text: str) -> float:
    """Parse ISO-8601; a missing offset is read as UTC."""
    dt = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


class AuthOutcome(str, Enum):
    SUCCESS = "success"
    FAILURE = "failure"


@dataclass(frozen=True)
class Auth:
    credential_id: str
    outcome: str  # "success" | "failure"


@dataclass(frozen=True)
class TrafficRecord:
    """One normalized request/connection observation.

    ``bytes`` is None when the originating tool does not observe payload
    size; integration treats None as "unknown", never as a conflict.
    """

    ts: float
    src_ip: str
    src_port: int
    dst_host: str
    dst_port: int
    protocol: str = "TCP"
    priority: int = 5
    bytes: Optional[int] = None
    auth: Optional[Auth] = None
    tool_id: str = ""

    @property
    def key(self) -> tuple:
        return tuple(getattr(self, f) for f in OBSERVATION_KEY)

    def to_dict(self) -> dict:
        out = {}
        for name in RECORD_FIELDS:
            value = getattr(self, name)
            if name == "auth" and value is not None:
                value = {"credential_id": value.credential_id, "outcome": value.outcome}
            out[name] = value
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TrafficRecord":
        auth = d.get("auth")
        if auth is not None and not isinstance(auth, Auth):
            auth = Auth(auth["credential_id"], auth["outcome"])
        return cls(
            ts=float(d["ts"]),
            src_ip=d["src_ip"],
            src_port=int(d["src_port"]),
            dst_host=d["dst_host"],
            dst_port=int(d["dst_port"]),
            protocol=d.get("protocol", "TCP"),
            priority=int(d.get("priority", 5)),
            bytes=None if d.get("bytes") is None else int(d["bytes"]),
            auth=auth,
            tool_id=d.get("tool_id", ""),
        )


class Violation(NamedTuple):
    field: str
    code: str

    def __str__(self):
        return f"{self.field}:{self.code}"


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def validate_record(r: TrafficRecord, registered_tools=None) -> list[Violation]:
    """Return every invariant violation of ``r``; an empty list means valid.

    When ``registered_tools`` is given, an unregistered ``tool_id`` is also
    reported.
    """
    out = []
    if not isinstance(r.ts, (int, float)) or isinstance(r.ts, bool) or not math.isfinite(r.ts) or r.ts < 0:
        out.append(Violation("ts", "bad-timestamp"))
    if not isinstance(r.src_ip, str) or canonical_ip(r.src_ip) is None:
        out.append(Violation("src_ip", "bad-ip"))
    for name in ("src_port", "dst_port"):
        v = getattr(r, name)
        if not _is_int(v) or not 0 <= v <= 65535:
            out.append(Violation(name, "port-out-of-range"))
    if not isinstance(r.dst_host, str) or not r.dst_host.strip():
        out.append(Violation("dst_host", "empty-host"))
    if not isinstance(r.protocol, str) or not r.protocol.strip():
        out.append(Violation("protocol", "empty-protocol"))
    if not _is_int(r.priority):
        out.append(Violation("priority", "bad-priority"))
    if r.bytes is not None and (not _is_int(r.bytes) or r.bytes < 0):
        out.append(Violation("bytes", "negative-bytes"))
    if r.auth is not None:
        if not r.auth.credential_id:
            out.append(Violation("auth", "empty-credential"))
        if r.auth.outcome not in (AuthOutcome.SUCCESS.value, AuthOutcome.FAILURE.value):
            out.append(Violation("auth", "bad-auth-outcome"))
    if not isinstance(r.tool_id, str) or not r.tool_id:
        out.append(Violation("tool_id", "empty-tool-id"))
    elif registered_tools is not None and r.tool_id not in registered_tools:
        out.append(Violation("tool_id", "unregistered-tool"))
    return out


class EvidenceRef(NamedTuple):
    """Pointer back to the record that contributed to a finding."""

    tool_id: str
    ts: float
    src_ip: str
    src_port: int
    dst_host: str
    dst_port: int

    @classmethod
    def of(cls, r: TrafficRecord) -> "EvidenceRef":
        # millisecond resolution keeps rendered reports lossless
        return cls(r.tool_id, round(r.ts, 3), r.src_ip, r.src_port, r.dst_host, r.dst_port)


@dataclass(frozen=True, order=True)
class Window:
    start: float
    end: float

    def __post_init__(self):
        if not self.end > self.start:
            raise ValueError(f"window end {self.end} must exceed start {self.start}")

    @property
    def width(self) -> float:
        return self.end - self.start

    def __contains__(self, ts: float) -> bool:
        return self.start <= ts < self.end

    @classmethod
    def aligned(cls, ts: float, width: float) -> "Window":
        """Tumbling window of ``width`` containing ``ts``, aligned to epoch 0."""
        if width <= 0:
            raise ValueError("window width must be positive")
        k = math.floor(ts / width)
        return cls(k * width, (k + 1) * width)


# -- tool vocabulary -------------------------------------------------------

class Role(str, Enum):
    ORCHESTRATION = "orchestration"
    ANALYSIS = "analysis"
    REPORTING = "reporting"


ROLES = tuple(r.value for r in Role)


@dataclass(frozen=True)
class DataKind:
    id: str
    parents: tuple[str, ...] = ()


@dataclass(frozen=True)
class InterfaceDescriptor:
    id: str
    consumes: frozenset = frozenset()
    produces: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "consumes", frozenset(self.consumes))
        object.__setattr__(self, "produces", frozenset(self.produces))
        if not (self.consumes | self.produces):
            raise ValueError(f"interface {self.id!r} neither consumes nor produces data")


@dataclass(frozen=True)
class ComponentDescriptor:
    id: str
    subcomponents: tuple["ComponentDescriptor", ...] = ()
    interfaces: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "subcomponents", tuple(self.subcomponents))
        object.__setattr__(self, "interfaces", tuple(self.interfaces))
        ids = [c.id for c in self.subcomponents]
        if len(ids) != len(set(ids)):
            raise ValueError(f"component {self.id!r} has duplicate subcomponent ids")
        # a frozen tree cannot be cyclic by construction, but an id may repeat
        # along a path if descriptors were built from untrusted JSON
        self._check_path(set())

    def _check_path(self, seen):
        if self.id in seen:
            raise ValueError(f"cyclic containment at component {self.id!r}")
        for sub in self.subcomponents:
            sub._check_path(seen | {self.id})


@dataclass(frozen=True)
class ToolDescriptor:
    id: str
    features: frozenset = frozenset()
    functions: frozenset = frozenset()
    interfaces: tuple[InterfaceDescriptor, ...] = ()
    components: tuple[ComponentDescriptor, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "features", frozenset(self.features))
        object.__setattr__(self, "functions", frozenset(Role(f).value for f in self.functions))
        object.__setattr__(self, "interfaces", tuple(self.interfaces))
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def produces(self) -> frozenset:
        return frozenset().union(*(i.produces for i in self.interfaces))

    @property
    def consumes(self) -> frozenset:
        return frozenset().union(*(i.consumes for i in self.interfaces))

    @property
    def kinds(self) -> frozenset:
        return self.produces | self.consumes


# -- events, metrics, findings ---------------------------------------------

class EventStatus(str, Enum):
    ACTIVE = "active"
    EXPIRED = "expired"


INTEGRITY_CHECKS = frozenset({"memory", "control_flow", "entry_point"})


@dataclass(frozen=True)
class SecurityEvent:
    name: str
    event_type: str
    origin: str
    producer: str
    mode_of_operation: str = ""
    status: str = EventStatus.ACTIVE.value
    consumers: tuple[str, ...] = ()
    resources: tuple[str, ...] = ()
    integrity_checks: frozenset = frozenset()

    def __post_init__(self):
        if not self.name or not self.producer:
            raise ValueError("security events need a name and a producer")
        EventStatus(self.status)
        object.__setattr__(self, "integrity_checks", frozenset(self.integrity_checks))
        unknown = self.integrity_checks - INTEGRITY_CHECKS
        if unknown:
            raise ValueError(f"unknown integrity checks: {sorted(unknown)}")

    def expire(self) -> "SecurityEvent":
        return dataclasses.replace(self, status=EventStatus.EXPIRED.value)

    def with_status(self, status: str) -> "SecurityEvent":
        if self.status == EventStatus.EXPIRED.value and status != EventStatus.EXPIRED.value:
            raise ValueError(f"event {self.name!r} is expired and cannot be re-activated")
        return dataclasses.replace(self, status=EventStatus(status).value)


DESCRIPTOR_ONLY = "descriptor-only"


@dataclass(frozen=True)
class MetricSpec:
    """A metric row: what it measures and which evaluator (if any) computes it.

    ``measurement_scheme`` names the evaluator; the row's prose collection
    strategy is kept in ``collection_strategy``.
    """

    id: str
    focus: str
    elements: tuple[str, ...]
    measurement_scheme: str
    collection_strategy: tuple[str, ...] = ()
    responses: tuple[str, ...] = ()
    params: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def descriptor_only(self) -> bool:
        return self.measurement_scheme == DESCRIPTOR_ONLY


class FindingKind(str, Enum):
    DOS = "dos"
    DDOS = "ddos"
    ACCESS_BREACH = "access_breach"
    INTEGRITY_VIOLATION = "integrity_violation"
    AVAILABILITY_GAP = "availability_gap"
    RATIO_REPORT = "ratio_report"
    NONE = "none"


class Severity(str, Enum):
    INFO = "info"
    WARN = "warn"
    CRITICAL = "critical"


Evidence = Union[EvidenceRef, str]


@dataclass(frozen=True)
class Finding:
    """One analysis result.

    ``window`` is None for metrics that are not tied to a time window
    (ratios).
    """

    metric_id: str
    window: Optional[Window]
    subject: str
    kind: str
    value: float
    evidence: tuple = ()
    severity: str = Severity.INFO.value
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        FindingKind(self.kind)
        Severity(self.severity)
        object.__setattr__(self, "evidence", tuple(self.evidence))
        object.__setattr__(self, "tags", tuple(self.tags))
        if self.value < 0:
            raise ValueError("finding value must be non-negative")
        if self.kind != FindingKind.NONE.value and not self.evidence:
            raise ValueError(f"{self.kind} finding without evidence")

    @property
    def sources(self) -> set[str]:
        return {e.src_ip for e in self.evidence if isinstance(e, EvidenceRef)}


# -- tagging and reports ---------------------------------------------------

class TrustLevel(str, Enum):
    TRUSTED = "trusted"
    SEMI_TRUSTED = "semi_trusted"
    PUBLIC = "public"


@dataclass(frozen=True)
class SecurityTag:
    level: str

    def __post_init__(self):
        object.__setattr__(self, "level", TrustLevel(self.level).value)


# understanding -> comprehension -> perception feed the common operating picture
STAGE_LABELS = ("understanding", "comprehension", "perception")
COMMON_OPERATING_PICTURE = "common operating picture"


@dataclass
class Section:
    title: str
    rows: list = field(default_factory=list)
    columns: Optional[list] = None


@dataclass
class Report:
    generated_at: str
    stage_labels: tuple = STAGE_LABELS
    sections: list = field(default_factory=list)
    format: str = "json"
    metadata: dict = field(default_factory=dict)

    def section(self, title: str) -> Optional[Section]:
        for s in self.sections:
            if s.title == title:
                return s
        return None


def as_plain(obj: Any) -> Any:
    """Turn nested dataclasses/tuples into JSON-ready python values."""
    if isinstance(obj, EvidenceRef):
        return obj._asdict()
    if isinstance(obj, Enum):
        return obj.value
    if dataclasses.is_dataclass(obj):
        return {f.name: as_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {k: as_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [as_plain(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted(as_plain(v) for v in obj)
    return obj
