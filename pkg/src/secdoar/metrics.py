"""Metric evaluators over integrated traffic plus the metric catalog."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, NamedTuple, Optional

from .errors import IntervalOutOfHorizon, UnknownMetric, ZeroDenominator
from .model import (
    DESCRIPTOR_ONLY,
    EvidenceRef,
    Finding,
    FindingKind,
    MetricSpec,
    Severity,
    TrafficRecord,
    Window,
    canonical_ip,
    to_iso,
)

DEFAULT_WIDTH = 1.0
DEFAULT_DDOS_SOURCE_MIN = 3
# normal traffic stays under 15 req/s; reports flag above 20 req/s
NORMAL_RATE_CEILING = 15
REPORT_THRESHOLD = 20


class CellKey(NamedTuple):
    dst_host: str
    dst_port: int
    window: Window


@dataclass(frozen=True)
class RateCell:
    count: int
    distinct_sources: int
    evidence: tuple  # EvidenceRef per contributing record


def window_rates(records: Iterable[TrafficRecord], width: float = DEFAULT_WIDTH) -> dict[CellKey, RateCell]:
    """Count requests per (destination host, port, tumbling window)."""
    if not width > 0:
        raise ValueError("window width must be positive")
    cells: dict[tuple, list[TrafficRecord]] = {}
    for r in records:
        k = math.floor(r.ts / width)
        cells.setdefault((r.dst_host, r.dst_port, k), []).append(r)
    out = {}
    for (host, port, k), rs in sorted(cells.items()):
        out[CellKey(host, port, Window(k * width, (k + 1) * width))] = RateCell(
            count=len(rs),
            distinct_sources=len({r.src_ip for r in rs}),
            evidence=tuple(EvidenceRef.of(r) for r in rs),
        )
    return out


def subject_of(host: str, port: int) -> str:
    return f"{host}:{port}"


def split_subject(subject: str) -> tuple[str, int]:
    host, _, port = subject.rpartition(":")
    return host, int(port)


def detect_dos_ddos(rates: Mapping[CellKey, RateCell], threshold: float = REPORT_THRESHOLD,
                    ddos_source_min: int = DEFAULT_DDOS_SOURCE_MIN,
                    metric_id: str = "dos_ddos") -> list[Finding]:
    """One critical finding per cell whose request count is strictly above ``threshold``.

    Cells with at least ``ddos_source_min`` distinct sources are DDoS,
    the rest DoS. The finding value is the rate (count / window width).
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    if ddos_source_min < 2:
        raise ValueError("ddos_source_min must be at least 2")
    out = []
    for key, cell in rates.items():
        if cell.count > threshold:
            kind = FindingKind.DDOS if cell.distinct_sources >= ddos_source_min else FindingKind.DOS
            out.append(Finding(
                metric_id=metric_id,
                window=key.window,
                subject=subject_of(key.dst_host, key.dst_port),
                kind=kind.value,
                value=cell.count / key.window.width,
                evidence=cell.evidence,
                severity=Severity.CRITICAL.value,
            ))
    out.sort(key=lambda f: (f.window.start, f.subject))
    return out


# -- access control ----------------------------------------------------------

LOGIN_FIELDS = ("failedLoginCount", "portList", "startTime", "endTime", "sourceIp", "destIP", "attemptNum")


@dataclass(frozen=True)
class LoginAggregate:
    failedLoginCount: int
    portList: str
    startTime: str
    endTime: str
    sourceIp: str
    destIP: str
    attemptNum: int

    def __post_init__(self):
        if self.attemptNum < 1 or not 0 <= self.failedLoginCount <= self.attemptNum:
            raise ValueError("need attemptNum >= 1 and 0 <= failedLoginCount <= attemptNum")
        ports = self.portList.split(";") if self.portList else []
        if len(ports) != len(set(ports)):
            raise ValueError("portList entries must be distinct")

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in LOGIN_FIELDS}

    @classmethod
    def from_dict(cls, d: dict) -> "LoginAggregate":
        return cls(**{name: d[name] for name in LOGIN_FIELDS})


def dashed_ipv4(host: str) -> str:
    """``172.31.27.153`` -> ``172-31-27-153``; other hosts unchanged."""
    ip = canonical_ip(host)
    if ip is not None and "." in ip:
        return ip.replace(".", "-")
    return host


def aggregate_login_attempts(records: Iterable[TrafficRecord], window: Window,
                             host_format: Callable[[str], str] = dashed_ipv4) -> list[LoginAggregate]:
    """Group the window's records by (source, destination) in first-seen order."""
    groups: dict[tuple, list[TrafficRecord]] = {}
    for r in records:
        if r.ts in window:
            groups.setdefault((r.src_ip, r.dst_host), []).append(r)
    out = []
    for (src, dst), rs in groups.items():
        ports = list(dict.fromkeys(str(r.dst_port) for r in rs))
        out.append(LoginAggregate(
            failedLoginCount=sum(1 for r in rs if r.auth is not None and r.auth.outcome == "failure"),
            portList=";".join(ports),
            startTime=to_iso(min(r.ts for r in rs)),
            endTime=to_iso(max(r.ts for r in rs)),
            sourceIp=src,
            destIP=host_format(dst),
            attemptNum=len(rs),
        ))
    return out


def access_breach_findings(aggs: Iterable[LoginAggregate], metric_id: str = "access_control",
                           window: Optional[Window] = None) -> list[Finding]:
    """A warn-level finding for every aggregate with failed logins."""
    out = []
    for a in aggs:
        if a.failedLoginCount > 0:
            out.append(Finding(metric_id, window, f"{a.sourceIp}->{a.destIP}", FindingKind.ACCESS_BREACH.value,
                               a.failedLoginCount, (f"failed={a.failedLoginCount}", f"attempts={a.attemptNum}"),
                               Severity.WARN.value))
    return out


# -- ratio and availability ------------------------------------------------

def ratio_metric(numerator: float, denominator: float, metric_id: str,
                 band: Optional[tuple] = None, subject: str = "") -> Finding:
    """numerator / denominator as a ratio report; 0/0 is read as 0.

    ``band`` is an inclusive (low, high) range; values outside it warn.
    """
    if numerator < 0 or denominator < 0:
        raise ValueError("ratio counts must be non-negative")
    if denominator == 0:
        if numerator > 0:
            raise ZeroDenominator(f"{metric_id}: {numerator}/0")
        value = 0.0
    else:
        value = numerator / denominator
    severity = Severity.INFO
    if band is not None and not band[0] <= value <= band[1]:
        severity = Severity.WARN
    return Finding(metric_id, None, subject or metric_id, FindingKind.RATIO_REPORT.value, value,
                   (f"numerator={numerator}", f"denominator={denominator}"), severity.value)


def _union_length(intervals) -> float:
    total = 0.0
    cur_start = cur_end = None
    for s, e in sorted(intervals):
        if cur_end is None or s > cur_end:
            if cur_end is not None:
                total += cur_end - cur_start
            cur_start, cur_end = s, e
        else:
            cur_end = max(cur_end, e)
    if cur_end is not None:
        total += cur_end - cur_start
    return total


def availability_uptime(down_intervals, horizon, metric_id: str = "availability",
                        subject: str = "system") -> Finding:
    """Fraction of ``horizon`` not covered by the union of outage intervals."""
    h = Window(*horizon)
    spans = []
    for s, e in down_intervals:
        if not (h.start <= s <= e <= h.end):
            raise IntervalOutOfHorizon(f"outage [{s}, {e}) is outside horizon [{h.start}, {h.end})")
        if e > s:
            spans.append((s, e))
    down = _union_length(spans)
    value = 1.0 - down / h.width
    if down == 0:
        return Finding(metric_id, h, subject, FindingKind.NONE.value, value, (), Severity.INFO.value)
    return Finding(metric_id, h, subject, FindingKind.AVAILABILITY_GAP.value, value,
                   tuple(f"down=[{s}, {e})" for s, e in sorted(spans)), Severity.WARN.value)


# -- catalog ---------------------------------------------------------------

# (id, focus, elements, measurement scheme, responses, evaluator)
_TABLE = [
    ("dos_ddos", "Denial of service and distributed denial of service attacks",
     "-Attack count",
     "-How many times a system has been attacked? -What are sources of attacks? -What ports and hosted systems are under attack?",
     "-Reporting frequency of attacks -Report statistics of network traffic",
     "dos_ddos"),
    ("access_control", "Access control breaches",
     "-Authentication -Non-repudiation -Authorisation -Intrusion Detection -Multi-tenancy or compartmentalisation",
     "-User authentication scheme -User identification scheme -Password implementation or strategy "
     "-Successful or unsuccessful password attempts -Monitoring system use -Count of unauthorised access attempts "
     "-Login attempts count",
     "-Block unauthorised access -Logging details of targeted systems IPs, components and APIs -Log credentials used for attack",
     "access_control"),
    ("confidentiality_privacy", "Confidentiality and privacy",
     "-Required behaviour -Side channel vulnerability factor -Information leakage measurement "
     "-Correlation between attack execution and attack observation",
     "-Maintain system logs",
     "-Tag data that has been targeted in privacy attack -Log details of compromised data and corresponding data owners "
     "-Prepare notifications and strategies for reporting privacy breaches",
     DESCRIPTOR_ONLY),
    ("integrity", "Integrity",
     "-Data integrity importance -Integrity Impact",
     "-Calculate violation checks per input or data access request -Measuring impact of vulnerability on a system integrity "
     "-Measuring ratio of risky classes or functions with respect to total access classes",
     "-Log integrity violations -Report types and magnitude of integrity violation -Periodic design-time and run-time integrity checks",
     "ratio:integrity"),
    ("audit", "Audit",
     "-Audit trail comprehensiveness",
     "-Track access to data",
     "-Log critical events associated with features and data access as well as data updates",
     DESCRIPTOR_ONLY),
    ("availability", "Availability",
     "-System services availability",
     "-Denial of service mitigation plan",
     "-Log and report system downtime",
     "availability"),
    ("source_code", "Source code",
     "-Classified attributes inheritance -Critical class extensibility -Variable vulnerability",
     "-Tracking use of classified attributes -Making critical classes non-extendable -Evaluating security relevancy of variables",
     "-Periodic source code security checks on source code and reporting",
     DESCRIPTOR_ONLY),
    ("version_control", "Version control",
     "-Source code or data changes count",
     "-Tracking how often a source code or data is changed",
     "-Logging and reporting of changes according to the defined rules",
     DESCRIPTOR_ONLY),
    ("data_flow", "Data-flow",
     "-Dependency graph",
     "-Tracking how data flows between different elements of the system",
     "-Tagging security and privacy sensitive data, tracking the sensitive data movements and reporting the data "
     "movements according to the defined rules",
     DESCRIPTOR_ONLY),
    ("time", "Time",
     "-Meantime to fix bugs -Meantime to repair -Attack execution time",
     "-Meantime between discovery and fixing software bugs -Length of time for which an attack has been executed",
     "-Reporting system downtime and losses in terms of data, business and monetary elements",
     DESCRIPTOR_ONLY),
    ("attackability", "Attackability",
     "-Attack count -Attack prone -Vulnerability Index",
     "-Probability of a system to be attacked -Probability of being exploited as a result of an attack "
     "-Ratio of fixed vulnerability as compared to discovered vulnerabilities",
     "-Reporting attack surface metrics",
     "ratio:attackability"),
    ("attack_surface", "Software attack surface",
     "-Sensitivity sink -Attack graph probability -Exploitability Risk",
     "-Probability that software or a program can be exploited for security breach -Probability of an attack to succeed "
     "-Access to vulnerable code through system interfaces -Probability of sensitive data being exposed as a result of an attack",
     "-Executing and reporting periodic software vulnerability check reports",
     DESCRIPTOR_ONLY),
    ("feature_coverage", "Security feature/requirement incorporated or not",
     "-Incorporated versus total security features/requirements",
     "-Ratio of implemented versus total required security requirements or features",
     "-Logging and reporting system security completion status",
     "ratio:feature_coverage"),
]

_DEFAULT_PARAMS = {
    "dos_ddos": {"threshold": REPORT_THRESHOLD, "width": DEFAULT_WIDTH, "ddos_source_min": DEFAULT_DDOS_SOURCE_MIN},
    "access_control": {},
    "ratio:integrity": {"band": [0.0, 0.2]},
    "ratio:attackability": {"band": [0.8, 1.0]},
    "ratio:feature_coverage": {"band": [1.0, 1.0]},
    "availability": {},
}


def split_items(cell: str) -> tuple:
    """Split a ``-a -b -c`` table cell into its items.

    Items are separated by `` -`` (a space then a dash) so hyphenated words
    like ``run-time`` survive.
    """
    text = " " + cell.strip()
    return tuple(p.strip() for p in text.split(" -") if p.strip())


def metric_catalog() -> list[MetricSpec]:
    return [
        MetricSpec(
            id=mid,
            focus=focus,
            elements=split_items(elements),
            measurement_scheme=evaluator,
            collection_strategy=split_items(scheme),
            responses=split_items(responses),
            params=dict(_DEFAULT_PARAMS.get(evaluator, {})),
        )
        for mid, focus, elements, scheme, responses, evaluator in _TABLE
    ]


# evaluator id -> callable; ratio evaluators share one implementation
def evaluate_dos_ddos(records, width=DEFAULT_WIDTH, threshold=REPORT_THRESHOLD,
                      ddos_source_min=DEFAULT_DDOS_SOURCE_MIN) -> list[Finding]:
    return detect_dos_ddos(window_rates(records, width), threshold, ddos_source_min)


EVALUATORS: dict[str, Callable] = {
    "dos_ddos": evaluate_dos_ddos,
    "access_control": aggregate_login_attempts,
    "ratio:integrity": ratio_metric,
    "ratio:attackability": ratio_metric,
    "ratio:feature_coverage": ratio_metric,
    "availability": availability_uptime,
}

# short names accepted on the command line and in pipeline configs
METRIC_ALIASES = {
    "dos": "dos_ddos", "ddos": "dos_ddos", "dos_ddos": "dos_ddos",
    "access": "access_control", "access_control": "access_control", "login": "access_control",
    "integrity": "ratio:integrity", "attackability": "ratio:attackability",
    "feature_coverage": "ratio:feature_coverage", "availability": "availability",
}


def resolve_metric(name: str) -> MetricSpec:
    """Catalog entry for a metric id, evaluator id or short alias."""
    target = METRIC_ALIASES.get(name, name)
    for spec in metric_catalog():
        if name == spec.id or target == spec.measurement_scheme:
            return spec
    raise UnknownMetric(f"unknown metric {name!r}")
