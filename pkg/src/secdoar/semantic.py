"""Semantic layer: integration model, an in-memory triple store and the
multi-tool integration function.
"""
from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Union

from .errors import ConflictUnresolvable, UnboundPredicate, UncoveredTool
from .ingest import record_to_jsonl
from .model import TrafficRecord

SEC = "sec:"
RDF_TYPE = "rdf:type"
DATATYPES = ("string", "integer", "decimal", "timestamp")

# canonical slot -> (predicate, datatype). auth is flattened into two slots.
CANONICAL_PREDICATES = {
    "ts": ("sec:timestamp", "timestamp"),
    "src_ip": ("sec:sourceIp", "string"),
    "src_port": ("sec:sourcePort", "integer"),
    "dst_host": ("sec:destHost", "string"),
    "dst_port": ("sec:destPort", "integer"),
    "protocol": ("sec:protocol", "string"),
    "priority": ("sec:priority", "integer"),
    "bytes": ("sec:bytes", "integer"),
    "auth.credential_id": ("sec:authCredential", "string"),
    "auth.outcome": ("sec:authOutcome", "string"),
    "tool_id": ("sec:toolId", "string"),
}

CLASSES = ("sec:TrafficData", "sec:TrafficMetric", "sec:TrafficVisualiser")


class Literal(NamedTuple):
    value: object
    datatype: str


Term = Union[str, Literal]


class Triple(NamedTuple):
    subject: str
    predicate: str
    object: Term

    def sort_key(self):
        return (self.subject, self.predicate, _term_key(self.object))


def _term_key(term) -> tuple:
    if isinstance(term, Literal):
        return (1, term.datatype, str(term.value))
    return (0, "", str(term))


def lit(value, datatype: str) -> Literal:
    if datatype not in DATATYPES:
        raise ValueError(f"unknown literal datatype {datatype!r}")
    return Literal(value, datatype)


@dataclass
class SemanticIntegrationModel:
    """Vocabulary plus per-tool equivalence rules (native field -> predicate)."""

    classes: tuple = CLASSES
    predicates: dict = field(default_factory=lambda: dict(CANONICAL_PREDICATES))
    equivalences: list = field(default_factory=list)  # (tool_id, native_field, predicate)

    def __post_init__(self):
        self.equivalences = [tuple(e) for e in self.equivalences]
        preds = [p for p, _ in self.predicates.values()]
        if len(preds) != len(set(preds)):
            raise ValueError("each canonical field needs its own predicate")
        unknown = {p for _, _, p in self.equivalences} - set(preds)
        if unknown:
            raise ValueError(f"equivalence rules target unknown predicates {sorted(unknown)}")

    @property
    def tools(self) -> set[str]:
        return {t for t, _, _ in self.equivalences}

    @property
    def vocabulary(self) -> set[str]:
        return {p for p, _ in self.predicates.values()} | {RDF_TYPE}

    def covers(self, tool_id: str) -> bool:
        return tool_id in self.tools

    def rules_for(self, tool_id: str) -> dict[str, str]:
        return {native: pred for t, native, pred in self.equivalences if t == tool_id}

    @classmethod
    def from_mappings(cls, mappings) -> "SemanticIntegrationModel":
        """Derive equivalence rules from ingest field mappings."""
        by_field = {k: p for k, (p, _) in CANONICAL_PREDICATES.items()}
        rules = []
        for m in mappings:
            for native, canonical in sorted(m.entries.items()):
                if canonical == "auth":
                    rules.append((m.tool_id, native, by_field["auth.outcome"]))
                    rules.append((m.tool_id, native, by_field["auth.credential_id"]))
                elif canonical in by_field:
                    rules.append((m.tool_id, native, by_field[canonical]))
            rules.append((m.tool_id, "tool_id", by_field["tool_id"]))
        return cls(equivalences=sorted(set(rules)))

    @classmethod
    def from_dict(cls, d: dict) -> "SemanticIntegrationModel":
        predicates = dict(CANONICAL_PREDICATES)
        for name, spec in d.get("predicates", {}).items():
            predicates[name] = (spec["predicate"], spec["datatype"]) if isinstance(spec, dict) else tuple(spec)
        return cls(
            classes=tuple(d.get("classes", CLASSES)),
            predicates=predicates,
            equivalences=[(e["tool_id"], e["field"], e["predicate"]) for e in d.get("equivalences", [])],
        )

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "predicates": {k: {"predicate": p, "datatype": t} for k, (p, t) in self.predicates.items()},
            "equivalences": [{"tool_id": t, "field": f, "predicate": p} for t, f, p in self.equivalences],
        }

    @classmethod
    def load(cls, path) -> "SemanticIntegrationModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def record_subject(r: TrafficRecord) -> str:
    digest = hashlib.sha1(record_to_jsonl(r).encode("utf-8")).hexdigest()[:16]
    return f"_:r{digest}"


def _slots(r: TrafficRecord) -> dict:
    slots = {
        "ts": r.ts, "src_ip": r.src_ip, "src_port": r.src_port,
        "dst_host": r.dst_host, "dst_port": r.dst_port, "protocol": r.protocol,
        "priority": r.priority, "bytes": r.bytes, "tool_id": r.tool_id,
    }
    if r.auth is not None:
        slots["auth.credential_id"] = r.auth.credential_id
        slots["auth.outcome"] = r.auth.outcome
    return {k: v for k, v in slots.items() if v is not None}


def record_to_triples(r: TrafficRecord, sim: SemanticIntegrationModel,
                      subject: Optional[str] = None) -> list[Triple]:
    """One typed subject node plus one triple per populated canonical slot."""
    if not sim.covers(r.tool_id):
        raise UncoveredTool(f"no equivalence rules for tool {r.tool_id!r}")
    s = subject or record_subject(r)
    out = [Triple(s, RDF_TYPE, "sec:TrafficData")]
    for slot, value in _slots(r).items():
        predicate, datatype = sim.predicates[slot]
        out.append(Triple(s, predicate, Literal(value, datatype)))
    return out


def triples_to_record(triples: Iterable[Triple], sim: SemanticIntegrationModel) -> TrafficRecord:
    """Inverse of :func:`record_to_triples` for a single subject."""
    by_pred = {p: slot for slot, (p, _) in sim.predicates.items()}
    d = {}
    for t in triples:
        if t.predicate in by_pred:
            d[by_pred[t.predicate]] = t.object.value
    auth = None
    if "auth.credential_id" in d:
        auth = {"credential_id": d.pop("auth.credential_id"), "outcome": d.pop("auth.outcome", "")}
    d["auth"] = auth
    return TrafficRecord.from_dict(d)


def is_var(term) -> bool:
    return isinstance(term, str) and term.startswith("?")


class KnowledgeBase:
    """In-memory set of triples with a predicate index.

    Single writer, many readers: queries run over a snapshot taken under
    the lock.
    """

    def __init__(self, sim: Optional[SemanticIntegrationModel] = None):
        self.sim = sim or SemanticIntegrationModel()
        self._triples: set[Triple] = set()
        self._by_pred: dict[str, set[Triple]] = {}
        self._by_subj: dict[str, set[Triple]] = {}
        self._lock = threading.RLock()

    def __len__(self):
        return len(self._triples)

    def __contains__(self, t):
        return t in self._triples

    def add(self, triples: Iterable[Triple]) -> int:
        n = 0
        with self._lock:
            for t in triples:
                t = Triple(*t)
                if not t.subject or not t.predicate:
                    raise ValueError("triples need a subject and a predicate")
                if t not in self._triples:
                    self._triples.add(t)
                    self._by_pred.setdefault(t.predicate, set()).add(t)
                    self._by_subj.setdefault(t.subject, set()).add(t)
                    n += 1
        return n

    def triples(self) -> list[Triple]:
        with self._lock:
            return sorted(self._triples, key=Triple.sort_key)

    def _snapshot(self):
        with self._lock:
            return (
                {p: list(ts) for p, ts in self._by_pred.items()},
                {k: list(ts) for k, ts in self._by_subj.items()},
                list(self._triples),
            )

    def describe(self, subject: str) -> list[Triple]:
        with self._lock:
            return sorted(self._by_subj.get(subject, ()), key=Triple.sort_key)

    def query(self, pattern: list) -> list[dict]:
        """Conjunctive match of triple patterns; variables start with ``?``.

        A non-variable object that is a plain value matches a literal with
        that value (or an IRI with that text). Bindings come back sorted.
        """
        if not pattern:
            raise ValueError("query pattern must not be empty")
        vocab = self.sim.vocabulary
        for _, p, _ in pattern:
            if not is_var(p) and p not in vocab:
                raise UnboundPredicate(f"predicate {p!r} is not in the integration vocabulary")
        by_pred, by_subj, everything = self._snapshot()

        # bound predicates first, then patterns with fewer free positions
        def selectivity(tp):
            s, p, o = tp
            return (is_var(p), is_var(s) + is_var(o))

        bindings = [{}]
        for s, p, o in sorted(pattern, key=selectivity):
            nxt = []
            for b in bindings:
                subj = b.get(s, s) if is_var(s) else s
                if not is_var(subj):
                    candidates = by_subj.get(subj, [])
                elif not is_var(p):
                    candidates = by_pred.get(p, [])
                else:
                    candidates = everything
                for t in candidates:
                    nb = _unify(b, (s, p, o), t)
                    if nb is not None:
                        nxt.append(nb)
            bindings = nxt
            if not bindings:
                return []
        return sorted(bindings, key=_binding_key)

    def dump(self, path) -> None:
        """Write one tab-separated subject/predicate/object/datatype line per triple."""
        with open(path, "w", encoding="utf-8") as fh:
            for t in self.triples():
                if isinstance(t.object, Literal):
                    fh.write(f"{t.subject}\t{t.predicate}\t{_lit_text(t.object)}\t{t.object.datatype}\n")
                else:
                    fh.write(f"{t.subject}\t{t.predicate}\t{t.object}\t\n")

    @classmethod
    def load(cls, path, sim: Optional[SemanticIntegrationModel] = None) -> "KnowledgeBase":
        kb = cls(sim)
        triples = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                s, p, o, dt = line.rstrip("\n").split("\t")
                triples.append(Triple(s, p, Literal(_lit_value(o, dt), dt) if dt else o))
        kb.add(triples)
        return kb


def assert_triples(kb: KnowledgeBase, triples: Iterable[Triple]) -> int:
    return kb.add(triples)


def query(kb: KnowledgeBase, pattern: list) -> list[dict]:
    return kb.query(pattern)


def _lit_text(l: Literal) -> str:
    if l.datatype in ("decimal", "timestamp"):
        return repr(float(l.value))
    return str(l.value).replace("\t", " ").replace("\n", " ")


def _lit_value(text: str, datatype: str):
    if datatype == "integer":
        return int(text)
    if datatype in ("decimal", "timestamp"):
        return float(text)
    return text


def _matches(pattern_term, term) -> bool:
    if isinstance(pattern_term, Literal) or not isinstance(term, Literal):
        return pattern_term == term
    value = term.value
    if isinstance(pattern_term, str):
        return isinstance(value, str) and value == pattern_term
    return not isinstance(pattern_term, bool) and pattern_term == value


def _unify(binding: dict, pattern, triple: Triple) -> Optional[dict]:
    out = binding
    for pt, term in zip(pattern, triple):
        if is_var(pt):
            if pt in out:
                if out[pt] != term:
                    return None
            else:
                if out is binding:
                    out = dict(binding)
                out[pt] = term
        elif not _matches(pt, term):
            return None
    return out


def _binding_key(b: dict):
    return tuple((k, _term_key(v)) for k, v in sorted(b.items()))


# -- integration -----------------------------------------------------------

MERGE_FIELDS = ("bytes", "auth")


def _merge_group(group: list[TrafficRecord]) -> TrafficRecord:
    merged = {}
    for name in MERGE_FIELDS:
        known = [r for r in group if getattr(r, name) is not None]
        if not known:
            merged[name] = None
            continue
        top = min(r.priority for r in known)
        values = {getattr(r, name) for r in known if r.priority == top}
        if len(values) > 1:
            raise ConflictUnresolvable(f"{name} conflict at priority {top} for observation {group[0].key}")
        merged[name] = values.pop()
    best = min(r.priority for r in group)
    first = group[0]
    return TrafficRecord(
        ts=first.ts, src_ip=first.src_ip, src_port=first.src_port,
        dst_host=first.dst_host, dst_port=first.dst_port, protocol=first.protocol,
        priority=best,
        bytes=merged["bytes"], auth=merged["auth"],
        tool_id=min(r.tool_id for r in group if r.priority == best),
    )


def _sort_key(r: TrafficRecord):
    return (r.ts, r.src_ip, r.src_port, r.dst_host, r.dst_port, r.protocol)


def integrate(dx: Iterable[TrafficRecord], dy: Iterable[TrafficRecord],
              sim: SemanticIntegrationModel) -> list[TrafficRecord]:
    """Merge two tools' records into one dataset, one record per observation.

    Records sharing (ts, src_ip, src_port, dst_host, dst_port, protocol) are
    merged: a known value beats an unknown one, and disagreements go to the
    record with the lowest ``priority`` value.
    """
    groups: dict[tuple, list[TrafficRecord]] = {}
    for r in list(dx) + list(dy):
        if not sim.covers(r.tool_id):
            raise UncoveredTool(f"no equivalence rules for tool {r.tool_id!r}")
        groups.setdefault(r.key, []).append(r)
    merged = [_merge_group(g) for g in groups.values()]
    return sorted(merged, key=_sort_key)


def integrate_all(datasets: Iterable[Iterable[TrafficRecord]], sim: SemanticIntegrationModel) -> list[TrafficRecord]:
    out: list[TrafficRecord] = []
    for ds in datasets:
        out = integrate(out, ds, sim)
    return out


def records_from_kb(kb: KnowledgeBase) -> list[TrafficRecord]:
    """Every TrafficData node in ``kb`` turned back into a record, in ts order."""
    subjects = [b["?r"] for b in kb.query([("?r", RDF_TYPE, "sec:TrafficData")])]
    return sorted((triples_to_record(kb.describe(s), kb.sim) for s in subjects), key=_sort_key)


def build_knowledge_base(records: Iterable[TrafficRecord], sim: SemanticIntegrationModel) -> KnowledgeBase:
    kb = KnowledgeBase(sim)
    for r in records:
        kb.add(record_to_triples(r, sim))
    return kb

