"""Command-line entry point.

Exit codes: 0 ok, 1 usage or other error, 2 composition invalid,
3 ingest error, 4 analysis error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .composition import CompositionRequest, ToolRegistry, check_composition, derive_compositions
from .errors import (
    CompositionError,
    CompositionInvalid,
    IngestError,
    MetricError,
    SecDoarError,
    SemanticError,
    StageError,
)
from .ingest import FieldMapping, IntermediateStore, identity_mapping, read_records, store_intermediate
from .metrics import LoginAggregate, resolve_metric
from .orchestration import PipelineConfig, _now_iso, analyze, run_pipeline
from .reporting import assemble_report, finding_from_row, finding_to_row, render_report, write_report
from .semantic import SemanticIntegrationModel, build_knowledge_base, integrate_all, records_from_kb
from .simgen import Scenario, emit, generate_scenario

EXIT_OK, EXIT_ERROR, EXIT_COMPOSITION, EXIT_INGEST, EXIT_ANALYSIS = 0, 1, 2, 3, 4
STAGE_EXIT = {"ingest": EXIT_INGEST, "integrate": EXIT_INGEST, "analyze": EXIT_ANALYSIS}


class _Parser(argparse.ArgumentParser):
    # exit status 2 is reserved for invalid compositions
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _fail(stage: str, exc: BaseException, code: int) -> int:
    print(f"[{stage}] {type(exc).__name__}: {exc}", file=sys.stderr)
    return code


def _dump(obj, out=None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _features(csv_text: str) -> frozenset:
    return frozenset(f.strip() for f in csv_text.split(",") if f.strip())


# -- subcommands -----------------------------------------------------------

def cmd_ingest(args) -> int:
    try:
        mapping = None
        if args.mapping:
            mapping = FieldMapping.from_dict(json.loads(Path(args.mapping).read_text(encoding="utf-8")))
        records = read_records(args.input, args.format, args.tool, mapping, args.year)
        counts = store_intermediate(records, IntermediateStore(args.store))
    except (IngestError, OSError, ValueError) as exc:
        return _fail("ingest", exc, EXIT_INGEST)
    _dump(counts)
    return EXIT_OK


def cmd_compose(args) -> int:
    try:
        reg = ToolRegistry.load(args.registry)
        roles = _features(args.roles) if args.roles else frozenset({"orchestration"})
        req = CompositionRequest(_features(args.require), roles)
        if args.action == "check":
            assignment = json.loads(Path(args.assignment).read_text(encoding="utf-8"))
            result = check_composition(reg, assignment, req)
            _dump(result.to_dict())
            return EXIT_OK if result.valid else EXIT_COMPOSITION
        results = derive_compositions(reg, req)
        _dump([r.to_dict() for r in results])
        return EXIT_OK
    except (CompositionError, OSError, ValueError, KeyError) as exc:
        return _fail("compose", exc, EXIT_COMPOSITION if isinstance(exc, CompositionError) else EXIT_ERROR)


def load_store_dataset(store_path, sim_path=None):
    """Integrate every partition of a store, routed through the knowledge base."""
    store = IntermediateStore(store_path)
    partitions = store.read_all()
    if sim_path:
        sim = SemanticIntegrationModel.load(sim_path)
    else:
        sim = SemanticIntegrationModel.from_mappings(identity_mapping(t) for t in partitions)
    merged = integrate_all(partitions.values(), sim)
    return records_from_kb(build_knowledge_base(merged, sim))


def cmd_analyze(args) -> int:
    try:
        records = load_store_dataset(args.store, args.sim)
    except (IngestError, SemanticError, OSError, ValueError) as exc:
        return _fail("integrate", exc, EXIT_INGEST)
    try:
        spec = resolve_metric(args.metric)
        params = dict(spec.params)
        if args.threshold is not None:
            params["threshold"] = args.threshold
        if args.window_s is not None:
            params["width"] = args.window_s
        if args.ddos_source_min is not None:
            params["ddos_source_min"] = args.ddos_source_min
        if args.params:
            params.update(json.loads(args.params))
        results = analyze(records, [{"metric_id": spec.id, "evaluator": spec.measurement_scheme, "params": params}])
    except (MetricError, SecDoarError, ValueError, KeyError) as exc:
        return _fail("analyze", exc, EXIT_ANALYSIS)
    _dump({
        "metric_id": spec.id,
        "params": params,
        "threshold": results["threshold"],
        "findings": [finding_to_row(f) for f in results["attack_findings"] + results["other_findings"]],
        "aggregates": [a.to_dict() for a in results["aggregates"]],
    }, args.out)
    return EXIT_OK


def _load_analysis(path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, list):
        return {"rows": data}
    return data


def cmd_report(args) -> int:
    try:
        fdoc = _load_analysis(args.findings) if args.findings else {}
        adoc = _load_analysis(args.aggregates) if args.aggregates else {}
        findings = [finding_from_row(r) for r in fdoc.get("findings", fdoc.get("rows", []))]
        aggregates = [LoginAggregate.from_dict(a) for a in adoc.get("aggregates", adoc.get("rows", []))]
        attack = [f for f in findings if f.kind in ("dos", "ddos")]
        other = [f for f in findings if f.kind not in ("dos", "ddos")]
        threshold = args.threshold if args.threshold is not None else fdoc.get("threshold")
        rep = assemble_report(args.fixed_now or _now_iso(), attack_findings=attack, aggregates=aggregates,
                              threshold=threshold, other_findings=other, fmt=args.format)
        if args.out:
            write_report(rep, args.format, args.out)
        else:
            sys.stdout.buffer.write(render_report(rep, args.format))
    except (SecDoarError, OSError, ValueError, KeyError, TypeError) as exc:
        return _fail("report", exc, EXIT_ERROR)
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = PipelineConfig.load(args.config)
    except (SecDoarError, OSError, ValueError) as exc:
        return _fail("config", exc, EXIT_ERROR)
    try:
        rep = run_pipeline(cfg, now=args.fixed_now)
    except CompositionInvalid as exc:
        return _fail("compose", exc, EXIT_COMPOSITION)
    except StageError as exc:
        return _fail(exc.stage, exc.cause, STAGE_EXIT.get(exc.stage, EXIT_ERROR))
    except (SecDoarError, OSError) as exc:
        return _fail("run", exc, EXIT_ERROR)
    if cfg.output_path is None:
        sys.stdout.buffer.write(render_report(rep, cfg.report_format))
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        scenario = Scenario.load(args.scenario) if args.scenario else Scenario()
        records = generate_scenario(args.seed, args.duration, args.baseline_rate, scenario)
        text = emit(records, args.emit)
    except (SecDoarError, OSError, ValueError) as exc:
        return _fail("simulate", exc, EXIT_ERROR)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="secdoar", description="Security data orchestration, analysis and reporting pipeline")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="parse a tool log into the intermediate store")
    s.add_argument("--tool", required=True)
    s.add_argument("--format", required=True, choices=["zeek", "snort", "jsonl"])
    s.add_argument("--input", required=True)
    s.add_argument("--mapping")
    s.add_argument("--store", required=True)
    s.add_argument("--year", type=int, default=1970, help="year for snort fast alerts")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("compose", help="check or derive tool compositions")
    s.add_argument("action", choices=["check", "derive"])
    s.add_argument("--registry", required=True)
    s.add_argument("--assignment")
    s.add_argument("--require", required=True, help="comma-separated feature ids")
    s.add_argument("--roles", help="comma-separated roles (default: orchestration)")
    s.set_defaults(func=cmd_compose)

    s = sub.add_parser("analyze", help="evaluate one metric over the store")
    s.add_argument("--store", required=True)
    s.add_argument("--sim")
    s.add_argument("--metric", required=True)
    s.add_argument("--threshold", type=float)
    s.add_argument("--window-s", type=float)
    s.add_argument("--ddos-source-min", type=int)
    s.add_argument("--params", help="extra metric params as a JSON object")
    s.add_argument("--out")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("report", help="render findings and aggregates")
    s.add_argument("--findings")
    s.add_argument("--aggregates")
    s.add_argument("--format", default="json", choices=["json", "csv"])
    s.add_argument("--threshold", type=float)
    s.add_argument("--out")
    s.add_argument("--fixed-now")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("run", help="run the whole pipeline from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--fixed-now")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("simulate", help="generate a synthetic trace")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--duration", type=float, required=True)
    s.add_argument("--baseline-rate", type=float, required=True)
    s.add_argument("--scenario")
    s.add_argument("--emit", default="jsonl", choices=["zeek", "snort", "jsonl"])
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "compose" and args.action == "check" and not args.assignment:
        print("[compose] --assignment is required for check", file=sys.stderr)
        return EXIT_ERROR
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
