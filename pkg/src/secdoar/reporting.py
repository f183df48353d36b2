"""Summary tables and canonical JSON/CSV rendering of reports."""
from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from typing import Callable, Iterable, Mapping, Optional

from .errors import UnsupportedFormat
from .metrics import (
    LOGIN_FIELDS,
    CellKey,
    LoginAggregate,
    RateCell,
    dashed_ipv4,
    split_subject,
)
from .model import (
    STAGE_LABELS,
    EvidenceRef,
    Finding,
    FindingKind,
    Report,
    Section,
    Window,
)

SCHEMA = "secdoar-report/1"
FORMATS = ("json", "csv")
ATTACK_KINDS = (FindingKind.DOS.value, FindingKind.DDOS.value)

TARGET_COLUMNS = ["dst_host", "dst_port", "attack_windows", "peak_rate"]
INVALID_ACCESS_COLUMNS = ["destIP", "invalid_percent"]
SOURCE_COLUMNS = ["sourceIp", "attack_count"]
FINDING_COLUMNS = ["metric_id", "window", "subject", "kind", "value", "severity", "tags", "evidence"]
INGEST_COLUMNS = ["tool_id", "records"]

# section titles, in report order
SECTION_TITLES = (
    "ingest_statistics",
    "dos_ddos_findings",
    "login_aggregates",
    "target_summary",
    "invalid_access_summary",
    "source_summary",
    "metric_findings",
)


def build_target_summary(findings: Iterable[Finding]) -> list[dict]:
    """Attacked (host, port) pairs with their number of flagged windows and peak rate."""
    windows: dict[tuple, set] = defaultdict(set)
    peak: dict[tuple, float] = {}
    for f in findings:
        if f.kind not in ATTACK_KINDS:
            continue
        target = split_subject(f.subject)
        windows[target].add(f.window)
        peak[target] = max(peak.get(target, 0.0), f.value)
    rows = [{"dst_host": h, "dst_port": p, "attack_windows": len(w), "peak_rate": float(peak[(h, p)])}
            for (h, p), w in windows.items()]
    rows.sort(key=lambda r: (-r["attack_windows"], r["dst_host"], r["dst_port"]))
    return rows


def build_invalid_access_summary(aggs: Iterable[LoginAggregate], rates: Mapping[CellKey, RateCell],
                                 threshold: float,
                                 host_format: Callable[[str], str] = dashed_ipv4) -> list[dict]:
    """Share of failed logins at destinations that exceeded ``threshold`` in some window."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    hot = {host_format(k.dst_host) for k, cell in rates.items() if cell.count > threshold}
    attempts: dict[str, int] = defaultdict(int)
    failed: dict[str, int] = defaultdict(int)
    for a in aggs:
        attempts[a.destIP] += a.attemptNum
        failed[a.destIP] += a.failedLoginCount
    rows = [{"destIP": d, "invalid_percent": 100.0 * failed[d] / attempts[d]}
            for d in sorted(hot) if attempts.get(d, 0) > 0]
    return rows


def build_source_summary(findings: Iterable[Finding], aggs: Iterable[LoginAggregate]) -> list[dict]:
    """Sources implicated by attack findings or by at least one failed login."""
    counts: dict[str, int] = defaultdict(int)
    for f in findings:
        if f.kind in ATTACK_KINDS:
            for src in f.sources:
                counts[src] += 1
    for a in aggs:
        if a.failedLoginCount > 0:
            counts[a.sourceIp] += 1
    rows = [{"sourceIp": s, "attack_count": n} for s, n in counts.items() if n > 0]
    rows.sort(key=lambda r: (-r["attack_count"], r["sourceIp"]))
    return rows


def rates_from_findings(findings: Iterable[Finding]) -> dict[CellKey, RateCell]:
    """Rebuild the over-threshold cells that produced ``findings``."""
    out = {}
    for f in findings:
        if f.kind in ATTACK_KINDS and f.window is not None:
            host, port = split_subject(f.subject)
            refs = tuple(e for e in f.evidence if isinstance(e, EvidenceRef))
            out[CellKey(host, port, f.window)] = RateCell(len(refs), len({e.src_ip for e in refs}), refs)
    return out


# -- finding <-> row -------------------------------------------------------

def finding_to_row(f: Finding) -> dict:
    return {
        "metric_id": f.metric_id,
        "window": None if f.window is None else [f.window.start, f.window.end],
        "subject": f.subject,
        "kind": f.kind,
        "value": float(f.value),
        "severity": f.severity,
        "tags": list(f.tags),
        "evidence": [e._asdict() if isinstance(e, EvidenceRef) else e for e in f.evidence],
    }


def finding_from_row(row: Mapping) -> Finding:
    window = row.get("window")
    evidence = tuple(EvidenceRef(**e) if isinstance(e, dict) else e for e in row.get("evidence", []))
    return Finding(
        metric_id=row["metric_id"],
        window=None if window is None else Window(*window),
        subject=row["subject"],
        kind=row["kind"],
        value=row["value"],
        evidence=evidence,
        severity=row.get("severity", "info"),
        tags=tuple(row.get("tags", ())),
    )


# -- assembly --------------------------------------------------------------

def assemble_report(generated_at: str, *, ingest_counts: Optional[Mapping[str, int]] = None,
                    integrated_count: Optional[int] = None,
                    attack_findings: Iterable[Finding] = (),
                    aggregates: Iterable[LoginAggregate] = (),
                    rates: Optional[Mapping[CellKey, RateCell]] = None,
                    threshold: Optional[float] = None,
                    other_findings: Iterable[Finding] = (),
                    metadata: Optional[dict] = None,
                    fmt: str = "json") -> Report:
    attack_findings = list(attack_findings)
    aggregates = list(aggregates)
    if rates is None:
        rates = rates_from_findings(attack_findings)
    ingest_rows = [{"tool_id": t, "records": n} for t, n in sorted((ingest_counts or {}).items())]
    if integrated_count is not None:
        ingest_rows.append({"tool_id": "<integrated>", "records": integrated_count})
    sections = [
        Section("ingest_statistics", ingest_rows, INGEST_COLUMNS),
        Section("dos_ddos_findings", [finding_to_row(f) for f in attack_findings], FINDING_COLUMNS),
        Section("login_aggregates", [a.to_dict() for a in aggregates], list(LOGIN_FIELDS)),
        Section("target_summary", build_target_summary(attack_findings), TARGET_COLUMNS),
        Section("invalid_access_summary",
                build_invalid_access_summary(aggregates, rates, threshold) if threshold else [],
                INVALID_ACCESS_COLUMNS),
        Section("source_summary", build_source_summary(attack_findings, aggregates), SOURCE_COLUMNS),
        Section("metric_findings", [finding_to_row(f) for f in other_findings], FINDING_COLUMNS),
    ]
    return Report(generated_at=generated_at, stage_labels=STAGE_LABELS, sections=sections,
                  format=fmt, metadata=dict(metadata or {}))


# -- rendering -------------------------------------------------------------

def _canon(obj, keep_order: bool = False):
    """Round floats to 3 decimals and sort mapping keys (unless keep_order)."""
    if isinstance(obj, float):
        return round(obj, 3)
    if isinstance(obj, Mapping):
        items = obj.items() if keep_order else sorted(obj.items())
        return {k: _canon(v) for k, v in items}
    if isinstance(obj, (list, tuple)):
        return [_canon(v, keep_order) for v in obj]
    return obj


def report_to_dict(rep: Report) -> dict:
    sections = [
        # row columns keep their declared order so login aggregates read like the source table
        {"columns": list(s.columns or []), "rows": [_canon(r, keep_order=True) for r in s.rows], "title": s.title}
        for s in rep.sections
    ]
    return {
        "format": rep.format,
        "generated_at": rep.generated_at,
        "metadata": _canon(rep.metadata),
        "schema": SCHEMA,
        "sections": sections,
        "stage_labels": list(rep.stage_labels),
    }


def render_json(rep: Report) -> bytes:
    return (json.dumps(report_to_dict(rep), indent=2, ensure_ascii=False, allow_nan=False) + "\n").encode("utf-8")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(round(value, 3))
    if isinstance(value, (list, tuple)):
        return ";".join(_cell(v) if not isinstance(v, dict) else json.dumps(_canon(v), separators=(",", ":"))
                        for v in value)
    if isinstance(value, dict):
        return json.dumps(_canon(value), separators=(",", ":"), sort_keys=True)
    return str(value)


def render_csv_section(section: Section) -> bytes:
    columns = list(section.columns or (section.rows[0].keys() if section.rows else []))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(columns)
    for row in section.rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue().encode("utf-8")


def render_csv_sections(rep: Report) -> dict[str, bytes]:
    """One CSV document per section, keyed by ``<title>.csv``."""
    return {f"{s.title}.csv": render_csv_section(s) for s in rep.sections}


def render_report(rep: Report, fmt: str = "json") -> bytes:
    """Canonical bytes of ``rep``.

    For CSV the per-section documents are concatenated, each introduced by a
    ``# <title>`` line; :func:`write_report` splits them into files.
    """
    if fmt == "json":
        return render_json(rep)
    if fmt == "csv":
        parts = [f"# {name[:-4]}\r\n".encode("utf-8") + body for name, body in render_csv_sections(rep).items()]
        return b"\r\n".join(parts)
    raise UnsupportedFormat(f"unsupported report format {fmt!r}")


def write_report(rep: Report, fmt: str, out_path) -> list:
    """Write JSON to ``out_path``, or CSV sections into the directory ``out_path``."""
    from pathlib import Path

    out = Path(out_path)
    if fmt == "json":
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_bytes(render_report(rep, "json"))
        return [out]
    if fmt == "csv":
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, body in render_csv_sections(rep).items():
            (out / name).write_bytes(body)
            written.append(out / name)
        return written
    raise UnsupportedFormat(f"unsupported report format {fmt!r}")


def parse_report(data: bytes) -> Report:
    d = json.loads(data)
    if d.get("schema") != SCHEMA:
        raise ValueError(f"not a {SCHEMA} document")
    return Report(
        generated_at=d["generated_at"],
        stage_labels=tuple(d["stage_labels"]),
        sections=[Section(s["title"], s["rows"], s.get("columns") or None) for s in d["sections"]],
        format=d.get("format", "json"),
        metadata=d.get("metadata", {}),
    )


def login_aggregates_json(aggs: Iterable[LoginAggregate]) -> str:
    """The bare aggregate array, keys in source-table order."""
    return json.dumps([a.to_dict() for a in aggs], indent=4)
