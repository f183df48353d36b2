"""Data channels, trust tagging and the end-to-end pipeline run.

A run goes composition gate -> ingest (understanding) -> integrate
(comprehension) -> analyze (perception) -> report (common operating
picture).
"""
from __future__ import annotations

import json
import logging
import math
import threading
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional

from .composition import CompositionRequest, ToolRegistry, case_study_registry, check_composition
from .errors import (
    ChannelFull,
    ChannelInactive,
    CompositionInvalid,
    ConfigError,
    StageError,
    UnknownMetric,
)
from .ingest import (
    BUILTIN_MAPPINGS,
    FieldMapping,
    IntermediateStore,
    identity_mapping,
    read_records,
    store_intermediate,
)
from .metrics import (
    DEFAULT_DDOS_SOURCE_MIN,
    DEFAULT_WIDTH,
    REPORT_THRESHOLD,
    aggregate_login_attempts,
    availability_uptime,
    detect_dos_ddos,
    ratio_metric,
    resolve_metric,
    window_rates,
)
from .model import (
    COMMON_OPERATING_PICTURE,
    STAGE_LABELS,
    EvidenceRef,
    Finding,
    Report,
    SecurityTag,
    TrafficRecord,
    TrustLevel,
    Window,
)
from .reporting import assemble_report, write_report
from .semantic import SemanticIntegrationModel, build_knowledge_base, integrate_all, records_from_kb

log = logging.getLogger(__name__)

# stage name -> process label it realizes
STAGE_PROCESS = {
    "ingest": STAGE_LABELS[0],
    "integrate": STAGE_LABELS[1],
    "analyze": STAGE_LABELS[2],
    "report": COMMON_OPERATING_PICTURE,
}

# orchestration output components, carried as report metadata only
OUTPUT_COMPONENTS = ("Physical", "Control", "Application", "Access Control", "Security Data Path", "Data Interface")


# -- channels --------------------------------------------------------------

class DataChannel:
    """Bounded FIFO buffer with an active/inactive state.

    Safe for one producer and one consumer on different threads.
    """

    def __init__(self, id: str, capacity: int):
        if capacity < 1:
            raise ValueError("channel capacity must be positive")
        self.id = id
        self.capacity = capacity
        self.state = "active"
        self.pushed = 0
        self.drained = 0
        self._buffer: deque = deque()
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._buffer)

    @property
    def active(self) -> bool:
        return self.state == "active"

    def push(self, item) -> None:
        with self._lock:
            if self.state != "active":
                raise ChannelInactive(f"channel {self.id!r} is inactive")
            if len(self._buffer) >= self.capacity:
                raise ChannelFull(f"channel {self.id!r} is full ({self.capacity})")
            self._buffer.append(item)
            self.pushed += 1

    def drain(self) -> list:
        with self._lock:
            items = list(self._buffer)
            self._buffer.clear()
            self.drained += len(items)
            return items

    def deactivate(self) -> None:
        with self._lock:
            self.state = "inactive"

    def activate(self) -> None:
        with self._lock:
            self.state = "active"


def open_channel(id: str, capacity: int) -> DataChannel:
    return DataChannel(id, capacity)


def push(ch: DataChannel, item) -> None:
    ch.push(item)


def drain(ch: DataChannel) -> list:
    return ch.drain()


# -- tagging ---------------------------------------------------------------

@dataclass(frozen=True)
class TagRule:
    level: str
    tool_id: Optional[str] = None
    dst_prefix: Optional[str] = None

    def matches(self, tool_id: str, dst_host: str) -> bool:
        if self.tool_id is not None and tool_id != self.tool_id:
            return False
        if self.dst_prefix is not None and not dst_host.startswith(self.dst_prefix):
            return False
        return True


@dataclass(frozen=True)
class TaggingPolicy:
    """Ordered rules; the first match wins, otherwise ``default``."""

    rules: tuple = ()
    default: str = TrustLevel.PUBLIC.value

    def __post_init__(self):
        TrustLevel(self.default)
        for r in self.rules:
            TrustLevel(r.level)

    def level_for(self, tool_id: str, dst_host: str) -> str:
        for rule in self.rules:
            if rule.matches(tool_id, dst_host):
                return rule.level
        return self.default

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "TaggingPolicy":
        if not d:
            return cls()
        rules = tuple(TagRule(r["level"], r.get("tool_id"), r.get("dst_prefix")) for r in d.get("rules", []))
        return cls(rules, d.get("default", TrustLevel.PUBLIC.value))


def tag_data(r: TrafficRecord, policy: TaggingPolicy) -> SecurityTag:
    return SecurityTag(policy.level_for(r.tool_id, r.dst_host))


def tag_finding(f: Finding, policy: TaggingPolicy) -> Finding:
    levels = sorted({policy.level_for(e.tool_id, e.dst_host) for e in f.evidence if isinstance(e, EvidenceRef)})
    if not levels:
        return f
    return Finding(f.metric_id, f.window, f.subject, f.kind, f.value, f.evidence, f.severity, tuple(levels))


# -- configuration ---------------------------------------------------------

@dataclass
class InputSpec:
    tool_id: str
    format: str
    path: Path
    mapping: Optional[FieldMapping] = None
    year: int = 1970


@dataclass
class PipelineConfig:
    inputs: list
    composition: CompositionRequest
    assignment: dict
    metrics: list = field(default_factory=list)  # [{"metric_id": ..., "params": {...}}]
    report_format: str = "json"
    output_path: Optional[Path] = None
    registry_path: Optional[Path] = None
    sim_path: Optional[Path] = None
    store_path: Optional[Path] = None
    channel_capacity: int = 10_000
    tagging: TaggingPolicy = field(default_factory=TaggingPolicy)

    @classmethod
    def from_dict(cls, d: dict, base: Path = Path(".")) -> "PipelineConfig":
        def path(p):
            if p is None:
                return None
            p = Path(p)
            return p if p.is_absolute() else base / p

        try:
            inputs = []
            for spec in d["inputs"]:
                fmt = spec["format"]
                if fmt not in ("zeek", "snort", "jsonl"):
                    raise ConfigError(f"unknown input format {fmt!r}")
                mapping = spec.get("mapping")
                if isinstance(mapping, str):
                    mapping = FieldMapping.from_dict(json.loads(path(mapping).read_text(encoding="utf-8")))
                elif isinstance(mapping, dict):
                    mapping = FieldMapping.from_dict(mapping)
                inputs.append(InputSpec(spec["tool_id"], fmt, path(spec["path"]), mapping, int(spec.get("year", 1970))))
            comp = d["composition"]
            request = CompositionRequest.from_dict(comp)
            assignment = {r: list(ids) for r, ids in comp.get("assignment", {}).items()}
            metrics = []
            for m in d.get("metrics", []):
                spec = resolve_metric(m["metric_id"])
                metrics.append({"metric_id": spec.id, "evaluator": spec.measurement_scheme,
                                "params": {**spec.params, **m.get("params", {})}})
            report = d.get("report", {})
            return cls(
                inputs=inputs,
                composition=request,
                assignment=assignment,
                metrics=metrics,
                report_format=report.get("format", "json"),
                output_path=path(report.get("output_path")),
                registry_path=path(d.get("registry_path")),
                sim_path=path(d.get("sim_path")),
                store_path=path(d.get("store")),
                channel_capacity=int(d.get("channel_capacity", 10_000)),
                tagging=TaggingPolicy.from_dict(d.get("tagging")),
            )
        except (KeyError, TypeError, ValueError, UnknownMetric) as exc:
            raise ConfigError(f"bad pipeline config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")), path.parent)

    def mapping_for(self, spec: InputSpec) -> FieldMapping:
        if spec.mapping is not None:
            return spec.mapping
        if spec.format in BUILTIN_MAPPINGS:
            return BUILTIN_MAPPINGS[spec.format](spec.tool_id)
        return identity_mapping(spec.tool_id)


# -- the run ---------------------------------------------------------------

def _now_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S")


@dataclass
class RunTrace:
    """What each stage saw; used to check ordering and conservation."""

    stages: list = field(default_factory=list)
    ingested: dict = field(default_factory=dict)
    integrated: list = field(default_factory=list)
    analyzed: list = field(default_factory=list)
    channels: dict = field(default_factory=dict)


def _stage(name, trace, fn, *args):
    trace.stages.append(name)
    try:
        return fn(*args)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _ingest(cfg: PipelineConfig, trace: RunTrace) -> dict[str, list[TrafficRecord]]:
    per_tool: dict[str, list[TrafficRecord]] = {}
    for spec in cfg.inputs:
        records = read_records(spec.path, spec.format, spec.tool_id, cfg.mapping_for(spec), spec.year)
        ch = open_channel(spec.tool_id, cfg.channel_capacity)
        received: list[TrafficRecord] = []
        for r in records:
            if len(ch) >= ch.capacity:
                received.extend(rec for rec, _ in ch.drain())
            ch.push((r, tag_data(r, cfg.tagging)))
        received.extend(rec for rec, _ in ch.drain())
        ch.deactivate()
        trace.channels[spec.tool_id] = (ch.pushed, ch.drained, len(ch))
        per_tool.setdefault(spec.tool_id, []).extend(received)
    if cfg.store_path is not None:
        store = IntermediateStore(cfg.store_path)
        for tool_records in per_tool.values():
            store_intermediate(tool_records, store)
    trace.ingested = {t: len(rs) for t, rs in per_tool.items()}
    return per_tool


def default_window(records: list[TrafficRecord]) -> Optional[Window]:
    if not records:
        return None
    return Window(math.floor(records[0].ts), math.floor(records[-1].ts) + 1)


def analyze(records: list[TrafficRecord], metrics: list[dict], tagging: Optional[TaggingPolicy] = None) -> dict:
    """Run configured metrics; returns findings, aggregates and the rate cells."""
    tagging = tagging or TaggingPolicy()
    out = {"attack_findings": [], "aggregates": [], "rates": {}, "threshold": None, "other_findings": []}
    for m in metrics:
        evaluator, params = m["evaluator"], m["params"]
        if evaluator == "dos_ddos":
            width = float(params.get("width", DEFAULT_WIDTH))
            threshold = params.get("threshold", REPORT_THRESHOLD)
            rates = window_rates(records, width)
            found = detect_dos_ddos(rates, threshold, int(params.get("ddos_source_min", DEFAULT_DDOS_SOURCE_MIN)),
                                    metric_id=m["metric_id"])
            out["attack_findings"].extend(tag_finding(f, tagging) for f in found)
            out["rates"], out["threshold"] = rates, threshold
        elif evaluator == "access_control":
            window = Window(*params["window"]) if params.get("window") else default_window(records)
            if window is not None:
                out["aggregates"].extend(aggregate_login_attempts(records, window))
        elif evaluator.startswith("ratio:"):
            band = params.get("band")
            out["other_findings"].append(ratio_metric(params.get("numerator", 0), params.get("denominator", 0),
                                                      m["metric_id"], tuple(band) if band else None))
        elif evaluator == "availability":
            out["other_findings"].append(availability_uptime(params.get("down_intervals", []),
                                                             params["horizon"], m["metric_id"]))
        else:
            log.info("metric %s is descriptor-only; nothing to evaluate", m["metric_id"])
    return out


def run_pipeline(cfg: PipelineConfig, now: Optional[str] = None, registry: Optional[ToolRegistry] = None,
                 trace: Optional[RunTrace] = None) -> Report:
    """Execute the whole pipeline and return (and optionally write) the report.

    Raises CompositionInvalid before touching any input when the tool
    assignment does not satisfy the composition request.
    """
    trace = trace if trace is not None else RunTrace()
    trace.stages.append("compose")
    if registry is None:
        registry = ToolRegistry.load(cfg.registry_path) if cfg.registry_path else case_study_registry()
    assignment = cfg.assignment or {"orchestration": sorted(registry.tools)}
    result = check_composition(registry, assignment, cfg.composition)
    if not result.valid:
        raise CompositionInvalid(result)

    per_tool = _stage("ingest", trace, _ingest, cfg, trace)

    def integrate_stage():
        if cfg.sim_path is not None:
            sim = SemanticIntegrationModel.load(cfg.sim_path)
        else:
            sim = SemanticIntegrationModel.from_mappings(cfg.mapping_for(s) for s in cfg.inputs)
        merged = integrate_all(per_tool.values(), sim)
        return merged, build_knowledge_base(merged, sim)

    integrated, kb = _stage("integrate", trace, integrate_stage)
    trace.integrated = integrated

    def analyze_stage():
        # evaluators only ever see what the knowledge base holds
        records = records_from_kb(kb)
        trace.analyzed = records
        return analyze(records, cfg.metrics, cfg.tagging)

    results = _stage("analyze", trace, analyze_stage)

    def report_stage():
        rep = assemble_report(
            now or _now_iso(),
            ingest_counts=trace.ingested,
            integrated_count=len(integrated),
            attack_findings=results["attack_findings"],
            aggregates=results["aggregates"],
            rates=results["rates"],
            threshold=results["threshold"],
            other_findings=results["other_findings"],
            metadata={
                "composition": result.to_dict(),
                "metrics": [m["metric_id"] for m in cfg.metrics],
                "stages": {k: v for k, v in STAGE_PROCESS.items()},
                "output_components": list(OUTPUT_COMPONENTS),
                "knowledge_base_triples": len(kb),
            },
            fmt=cfg.report_format,
        )
        if cfg.output_path is not None:
            write_report(rep, cfg.report_format, cfg.output_path)
        return rep

    return _stage("report", trace, report_stage)
