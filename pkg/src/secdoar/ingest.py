"""Tool-specific log parsers, field mapping and the per-tool intermediate store."""
from __future__ import annotations

import json
import math
import re
import threading
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .errors import (
    BadTimestamp,
    ColumnCountMismatch,
    MappingMismatch,
    MissingField,
    NormalizationFailed,
    StoreUnavailable,
    Unparseable,
)
from .model import (
    RECORD_FIELDS,
    Auth,
    TrafficRecord,
    Violation,
    canonical_host,
    canonical_ip,
    canonical_protocol,
    from_iso,
    validate_record,
)

# Canonical targets a mapping must cover (auth is optional, tool_id falls
# back to the mapping's own tool id).
REQUIRED_TARGETS = ("ts", "src_ip", "src_port", "dst_host", "dst_port", "protocol", "priority", "bytes")
MAPPING_TARGETS = set(RECORD_FIELDS) | {"auth.credential_id", "auth.outcome"}

ZEEK_REQUIRED_COLUMNS = ("ts", "id.orig_h", "id.orig_p", "id.resp_h", "id.resp_p", "proto")
ZEEK_UNSET = "-"
ZEEK_EMPTY = "(empty)"


@dataclass(frozen=True)
class RawRecord:
    tool_id: str
    line_no: int
    fields: dict
    ts: float


@dataclass(frozen=True)
class FieldMapping:
    """How one tool's native field names map onto TrafficRecord fields."""

    tool_id: str
    entries: dict
    ts_format: str = "epoch_float"
    defaults: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ts_format not in ("epoch_float", "iso8601"):
            raise ValueError(f"unknown ts_format {self.ts_format!r}")
        bad = (set(self.entries.values()) | set(self.defaults)) - MAPPING_TARGETS
        if bad:
            raise ValueError(f"mapping targets unknown canonical fields: {sorted(bad)}")

    @property
    def uncovered(self) -> list[str]:
        covered = set(self.entries.values()) | set(self.defaults)
        return [f for f in REQUIRED_TARGETS if f not in covered]

    @classmethod
    def from_dict(cls, d: dict) -> "FieldMapping":
        return cls(
            tool_id=d["tool_id"],
            entries=dict(d.get("entries", {})),
            ts_format=d.get("ts_format", "epoch_float"),
            defaults=dict(d.get("defaults", {})),
        )

    def to_dict(self) -> dict:
        return {"tool_id": self.tool_id, "entries": dict(self.entries),
                "ts_format": self.ts_format, "defaults": dict(self.defaults)}


def zeek_mapping(tool_id: str = "zeek") -> FieldMapping:
    return FieldMapping(
        tool_id=tool_id,
        entries={
            "ts": "ts", "id.orig_h": "src_ip", "id.orig_p": "src_port",
            "id.resp_h": "dst_host", "id.resp_p": "dst_port", "proto": "protocol",
            "orig_bytes": "bytes",
        },
        defaults={"priority": 5, "bytes": None},
    )


def snort_mapping(tool_id: str = "snort") -> FieldMapping:
    return FieldMapping(
        tool_id=tool_id,
        entries={
            "ts": "ts", "src_ip": "src_ip", "src_port": "src_port",
            "dst_ip": "dst_host", "dst_port": "dst_port", "proto": "protocol",
            "priority": "priority",
            "auth.credential_id": "auth.credential_id", "auth.outcome": "auth.outcome",
        },
        defaults={"bytes": None, "src_port": 0, "dst_port": 0},
    )


def identity_mapping(tool_id: str = "*") -> FieldMapping:
    """Mapping for the generic JSONL format written by :func:`record_to_jsonl`."""
    return FieldMapping(
        tool_id=tool_id,
        entries={f: f for f in RECORD_FIELDS},
        defaults={"bytes": None, "auth": None},
    )


BUILTIN_MAPPINGS = {"zeek": zeek_mapping, "snort": snort_mapping}


# -- zeek conn -------------------------------------------------------------

def parse_zeek_header(line: str) -> list[str]:
    """Column names from a ``#fields`` line."""
    if not line.startswith("#fields"):
        raise Unparseable("not a #fields header line")
    names = line.rstrip("\r\n").split("\t")[1:]
    missing = [c for c in ZEEK_REQUIRED_COLUMNS if c not in names]
    if missing:
        raise MissingField(f"zeek header lacks required columns {missing}")
    return names


def _parse_epoch(text) -> float:
    try:
        ts = float(text)
    except (TypeError, ValueError):
        raise BadTimestamp(f"not an epoch timestamp: {text!r}") from None
    if not math.isfinite(ts) or ts < 0:
        raise BadTimestamp(f"timestamp out of range: {text!r}")
    return ts


def parse_zeek_conn(line: str, header: Optional[list[str]], tool_id: str = "zeek",
                    line_no: int = 0) -> Optional[RawRecord]:
    """Bind one TSV data line to ``header``; comment lines return None."""
    line = line.rstrip("\r\n")
    if line.startswith("#"):
        return None
    if not header:
        raise MissingField("data line before any #fields header")
    tokens = line.split("\t")
    if len(tokens) != len(header):
        raise ColumnCountMismatch(f"line {line_no}: {len(tokens)} columns, header has {len(header)}")
    fields = dict(zip(header, tokens))
    return RawRecord(tool_id, line_no, fields, _parse_epoch(fields["ts"]))


def iter_zeek_conn(lines: Iterable[str], tool_id: str = "zeek") -> Iterator[RawRecord]:
    header = None
    for n, line in enumerate(lines, 1):
        if line.startswith("#fields"):
            header = parse_zeek_header(line)
            continue
        if not line.strip():
            continue
        raw = parse_zeek_conn(line, header, tool_id, n)
        if raw is not None:
            yield raw


# -- snort fast alerts -----------------------------------------------------

_SNORT_FAST = re.compile(
    r"^(?P<mon>\d{2})/(?P<day>\d{2})-(?P<hh>\d{2}):(?P<mm>\d{2}):(?P<ss>\d{2})\.(?P<frac>\d{1,6})\s+"
    r"\[\*\*\]\s+\[(?P<gid>\d+):(?P<sid>\d+):(?P<rev>\d+)\]\s+(?P<msg>.*?)\s*\[\*\*\]\s+"
    r"(?:\[Classification:\s*(?P<cls>[^\]]*)\]\s+)?"
    r"\[Priority:\s*(?P<prio>\d+)\]\s+"
    r"\{(?P<proto>[^}]+)\}\s+"
    r"(?P<src>[0-9A-Fa-f.:]+?)(?::(?P<sport>\d{1,5}))?\s+->\s+"
    r"(?P<dst>[0-9A-Fa-f.:]+?)(?::(?P<dport>\d{1,5}))?\s*$"
)

FAILED_LOGIN_MARKER = "failed login"


def parse_snort_fast(line: str, year: int = 1970, tool_id: str = "snort",
                     line_no: int = 0) -> RawRecord:
    """Parse one single-line fast alert.

    Fast alerts carry no year, so the caller supplies it.
    """
    m = _SNORT_FAST.match(line.rstrip("\r\n"))
    if m is None:
        raise Unparseable(f"line {line_no}: not a snort fast alert")
    g = m.groupdict()
    try:
        dt = datetime(year, int(g["mon"]), int(g["day"]), int(g["hh"]), int(g["mm"]),
                      int(g["ss"]), int(g["frac"].ljust(6, "0")), tzinfo=timezone.utc)
    except ValueError as exc:
        raise Unparseable(f"line {line_no}: bad alert time ({exc})") from None
    fields = {
        "ts": dt.timestamp(),
        "gid": g["gid"], "sid": g["sid"], "rev": g["rev"],
        "msg": g["msg"],
        "classification": g["cls"] or "",
        "priority": g["prio"],
        "proto": g["proto"],
        "src_ip": g["src"],
        "dst_ip": g["dst"],
    }
    if g["sport"] is not None:
        fields["src_port"] = g["sport"]
    if g["dport"] is not None:
        fields["dst_port"] = g["dport"]
    if FAILED_LOGIN_MARKER in fields["classification"].lower():
        fields["auth.credential_id"] = f"sig:{g['gid']}:{g['sid']}"
        fields["auth.outcome"] = "failure"
    return RawRecord(tool_id, line_no, fields, fields["ts"])


def iter_snort_fast(lines: Iterable[str], year: int, tool_id: str = "snort") -> Iterator[RawRecord]:
    for n, line in enumerate(lines, 1):
        if line.strip():
            yield parse_snort_fast(line, year, tool_id, n)


# -- mapping / normalization -----------------------------------------------

def _unset(value) -> bool:
    return value is None or (isinstance(value, str) and value in (ZEEK_UNSET, ZEEK_EMPTY, ""))


def _convert_ts(value, ts_format: str) -> float:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return _parse_epoch(value)
    if ts_format == "iso8601":
        try:
            return from_iso(str(value))
        except (TypeError, ValueError):
            raise BadTimestamp(f"not an ISO-8601 timestamp: {value!r}") from None
    return _parse_epoch(value)


def _build_record(values: dict, m: FieldMapping) -> TrafficRecord:
    """Assemble a canonical record from canonical-named ``values``."""
    for name, default in m.defaults.items():
        if name not in values:
            values[name] = default
    missing = [f for f in REQUIRED_TARGETS if f not in values]
    if missing:
        raise MissingField(f"{m.tool_id}: no value or default for {missing}")

    problems = []

    def as_int(name):
        v = values[name]
        try:
            if isinstance(v, float) and v.is_integer():
                return int(v)
            if isinstance(v, bool):
                raise ValueError
            return int(v)
        except (TypeError, ValueError, OverflowError):
            problems.append(Violation(name, "not-an-integer"))
            return 0

    ts = _convert_ts(values["ts"], m.ts_format)
    src_port = as_int("src_port")
    dst_port = as_int("dst_port")
    priority = as_int("priority")
    nbytes = None if values["bytes"] is None else as_int("bytes")

    auth = values.get("auth")
    if isinstance(auth, dict):
        auth = Auth(str(auth.get("credential_id", "")), str(auth.get("outcome", "")))
    elif values.get("auth.credential_id") is not None:
        auth = Auth(str(values["auth.credential_id"]), str(values.get("auth.outcome", "")).lower())
    elif auth is not None and not isinstance(auth, Auth):
        problems.append(Violation("auth", "bad-auth"))
        auth = None
    if problems:
        raise NormalizationFailed(problems)

    src_ip = str(values["src_ip"])
    record = TrafficRecord(
        ts=ts,
        src_ip=canonical_ip(src_ip) or src_ip,
        src_port=src_port,
        dst_host=canonical_host(str(values["dst_host"])),
        dst_port=dst_port,
        protocol=canonical_protocol(str(values["protocol"])),
        priority=priority,
        bytes=nbytes,
        auth=auth,
        tool_id=str(values.get("tool_id") or m.tool_id),
    )
    violations = validate_record(record)
    if violations:
        raise NormalizationFailed(violations)
    return record


def normalize(raw: RawRecord, m: FieldMapping) -> TrafficRecord:
    if raw.tool_id != m.tool_id:
        raise MappingMismatch(f"record from {raw.tool_id!r} given mapping for {m.tool_id!r}")
    values = {}
    for native, canonical in m.entries.items():
        if native in raw.fields and not _unset(raw.fields[native]):
            values[canonical] = raw.fields[native]
    values["ts"] = raw.ts
    values["tool_id"] = raw.tool_id
    return _build_record(values, m)


def parse_jsonl_mapped(line: str, m: FieldMapping) -> TrafficRecord:
    try:
        obj = json.loads(line)
    except (ValueError, RecursionError):
        raise Unparseable("line is not valid JSON") from None
    if not isinstance(obj, dict):
        raise Unparseable("JSONL line must hold an object")
    values = {}
    for native, canonical in m.entries.items():
        if native in obj and obj[native] is not None:
            values[canonical] = obj[native]
    return _build_record(values, m)


def record_to_jsonl(r: TrafficRecord) -> str:
    """Canonical one-line JSON with keys in the fixed record order."""
    return json.dumps(r.to_dict(), separators=(",", ":"), ensure_ascii=False)


def read_records(path, fmt: str, tool_id: str, mapping: Optional[FieldMapping] = None,
                 year: int = 1970) -> list[TrafficRecord]:
    """Parse and normalize a whole log file of the given format."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if fmt == "zeek":
        m = mapping or zeek_mapping(tool_id)
        return [normalize(raw, m) for raw in iter_zeek_conn(lines, tool_id)]
    if fmt == "snort":
        m = mapping or snort_mapping(tool_id)
        return [normalize(raw, m) for raw in iter_snort_fast(lines, year, tool_id)]
    if fmt == "jsonl":
        m = mapping or identity_mapping(tool_id)
        return [parse_jsonl_mapped(line, m) for line in lines if line.strip()]
    raise ValueError(f"unknown input format {fmt!r}")


# -- intermediate store ----------------------------------------------------

_PARTITION_NAME = re.compile(r"^[A-Za-z0-9_.\-]+$")


class IntermediateStore:
    """Append-only per-tool partitions, one ``<tool_id>.jsonl`` file each.

    Distinct partitions may be written concurrently; each partition has a
    single writer at a time.
    """

    def __init__(self, root):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StoreUnavailable(f"cannot open store at {self.root}: {exc}") from None
        if not self.root.is_dir():
            raise StoreUnavailable(f"store path {self.root} is not a directory")
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def _path(self, tool_id: str) -> Path:
        if not _PARTITION_NAME.match(tool_id) or tool_id.startswith("."):
            raise StoreUnavailable(f"tool id {tool_id!r} is not a valid partition name")
        return self.root / f"{tool_id}.jsonl"

    def _lock(self, tool_id: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(tool_id, threading.Lock())

    def append(self, records: Iterable[TrafficRecord]) -> dict[str, int]:
        by_tool: dict[str, list[str]] = {}
        for r in records:
            by_tool.setdefault(r.tool_id, []).append(record_to_jsonl(r))
        counts = {}
        for tool_id, lines in by_tool.items():
            path = self._path(tool_id)
            with self._lock(tool_id):
                try:
                    with open(path, "a", encoding="utf-8") as fh:
                        fh.write("\n".join(lines) + "\n")
                except OSError as exc:
                    raise StoreUnavailable(f"cannot append to {path}: {exc}") from None
            counts[tool_id] = len(lines)
        return counts

    def partitions(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.jsonl"))

    def read(self, tool_id: str) -> list[TrafficRecord]:
        path = self._path(tool_id)
        if not path.exists():
            return []
        m = identity_mapping(tool_id)
        with open(path, encoding="utf-8") as fh:
            return [parse_jsonl_mapped(line, m) for line in fh if line.strip()]

    def read_all(self) -> dict[str, list[TrafficRecord]]:
        return {t: self.read(t) for t in self.partitions()}


def store_intermediate(records: Iterable[TrafficRecord], store: IntermediateStore) -> dict[str, int]:
    return dict(Counter(store.append(records)))
