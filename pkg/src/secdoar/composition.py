"""Tools registry, data-kind subsumption and composition checking.

Features and supported functions are plain set membership; data
compatibility between tools is reachability in the data-kind taxonomy
(``a`` is subsumed by ``b`` when ``b`` is ``a`` or one of its ancestors).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .errors import (
    DuplicateTool,
    NoComposition,
    TaxonomyCycle,
    UnknownFeature,
    UnknownKind,
    UnknownTool,
)
from .model import (
    ROLES,
    ComponentDescriptor,
    DataKind,
    InterfaceDescriptor,
    Role,
    ToolDescriptor,
)


def _ancestors(kinds: Mapping[str, DataKind]) -> dict[str, frozenset]:
    """Reflexive-transitive closure of the parent relation; rejects cycles."""
    closure: dict[str, frozenset] = {}
    visiting: set[str] = set()

    def visit(k: str) -> frozenset:
        if k in closure:
            return closure[k]
        if k in visiting:
            raise TaxonomyCycle(f"data kind {k!r} is its own ancestor")
        visiting.add(k)
        acc = {k}
        for p in kinds[k].parents:
            if p not in kinds:
                raise UnknownKind(f"kind {k!r} has unknown parent {p!r}")
            acc |= visit(p)
        visiting.discard(k)
        closure[k] = frozenset(acc)
        return closure[k]

    for k in kinds:
        visit(k)
    return closure


@dataclass(frozen=True)
class ToolRegistry:
    tools: Mapping[str, ToolDescriptor] = field(default_factory=dict)
    kinds: Mapping[str, DataKind] = field(default_factory=dict)
    features: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "tools", dict(self.tools))
        object.__setattr__(self, "kinds", dict(self.kinds))
        object.__setattr__(self, "features", frozenset(self.features))
        self.ancestors  # validates the taxonomy eagerly
        for t in self.tools.values():
            self._check_refs(t)

    @cached_property
    def ancestors(self) -> dict[str, frozenset]:
        return _ancestors(self.kinds)

    def _check_refs(self, t: ToolDescriptor) -> None:
        missing = sorted(t.kinds - set(self.kinds))
        if missing:
            raise UnknownKind(f"tool {t.id!r} references unknown data kinds {missing}")
        missing = sorted(t.features - self.features)
        if missing:
            raise UnknownFeature(f"tool {t.id!r} references unknown features {missing}")
        iface_ids = {i.id for i in t.interfaces}

        def walk(c: ComponentDescriptor):
            bad = set(c.interfaces) - iface_ids
            if bad:
                raise ValueError(f"component {c.id!r} of tool {t.id!r} names unknown interfaces {sorted(bad)}")
            for sub in c.subcomponents:
                walk(sub)

        for c in t.components:
            walk(c)

    def __len__(self):
        return len(self.tools)

    def __contains__(self, tool_id):
        return tool_id in self.tools

    def tool(self, tool_id: str) -> ToolDescriptor:
        try:
            return self.tools[tool_id]
        except KeyError:
            raise UnknownTool(f"tool {tool_id!r} is not registered") from None

    def with_kinds(self, kinds: Iterable[DataKind]) -> "ToolRegistry":
        merged = dict(self.kinds)
        merged.update((k.id, k) for k in kinds)
        return ToolRegistry(self.tools, merged, self.features)

    def with_features(self, features: Iterable[str]) -> "ToolRegistry":
        return ToolRegistry(self.tools, self.kinds, self.features | set(features))

    # -- serialization --

    def to_dict(self) -> dict:
        return {
            "kinds": [{"id": k.id, "parents": list(k.parents)} for k in sorted(self.kinds.values(), key=lambda k: k.id)],
            "features": sorted(self.features),
            "tools": [_tool_to_dict(t) for _, t in sorted(self.tools.items())],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ToolRegistry":
        reg = cls(
            kinds={k["id"]: DataKind(k["id"], tuple(k.get("parents", ()))) for k in d.get("kinds", [])},
            features=frozenset(d.get("features", [])),
        )
        for t in d.get("tools", []):
            reg = register_tool(reg, _tool_from_dict(t))
        return reg

    @classmethod
    def load(cls, path) -> "ToolRegistry":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _component_to_dict(c: ComponentDescriptor) -> dict:
    return {"id": c.id, "interfaces": list(c.interfaces),
            "subcomponents": [_component_to_dict(s) for s in c.subcomponents]}


def _component_from_dict(d: dict) -> ComponentDescriptor:
    return ComponentDescriptor(d["id"], tuple(_component_from_dict(s) for s in d.get("subcomponents", [])),
                               tuple(d.get("interfaces", [])))


def _tool_to_dict(t: ToolDescriptor) -> dict:
    return {
        "id": t.id,
        "features": sorted(t.features),
        "functions": sorted(t.functions),
        "interfaces": [{"id": i.id, "consumes": sorted(i.consumes), "produces": sorted(i.produces)}
                       for i in t.interfaces],
        "components": [_component_to_dict(c) for c in t.components],
    }


def _tool_from_dict(d: dict) -> ToolDescriptor:
    return ToolDescriptor(
        id=d["id"],
        features=frozenset(d.get("features", [])),
        functions=frozenset(d.get("functions", [])),
        interfaces=tuple(InterfaceDescriptor(i["id"], frozenset(i.get("consumes", [])), frozenset(i.get("produces", [])))
                         for i in d.get("interfaces", [])),
        components=tuple(_component_from_dict(c) for c in d.get("components", [])),
    )


def register_tool(reg: ToolRegistry, t: ToolDescriptor) -> ToolRegistry:
    """Return a new registry that also holds ``t``."""
    if t.id in reg.tools:
        raise DuplicateTool(f"tool {t.id!r} is already registered")
    reg._check_refs(t)
    tools = dict(reg.tools)
    tools[t.id] = t
    return ToolRegistry(tools, reg.kinds, reg.features)


def subsumes(reg: ToolRegistry, a: str, b: str) -> bool:
    """True iff ``a`` is ``b`` or ``b`` is reachable from ``a`` via parents."""
    for k in (a, b):
        if k not in reg.kinds:
            raise UnknownKind(f"unknown data kind {k!r}")
    return b in reg.ancestors[a]


@dataclass(frozen=True)
class CompositionRequest:
    required_features: frozenset
    roles_required: frozenset = frozenset({Role.ORCHESTRATION.value})

    def __post_init__(self):
        object.__setattr__(self, "required_features", frozenset(self.required_features))
        object.__setattr__(self, "roles_required", frozenset(Role(r).value for r in self.roles_required))
        if not self.required_features:
            raise ValueError("a composition request needs at least one feature")
        if not self.roles_required:
            raise ValueError("a composition request needs at least one role")

    @classmethod
    def from_dict(cls, d: dict) -> "CompositionRequest":
        return cls(frozenset(d["required_features"]),
                   frozenset(d.get("roles_required", [Role.ORCHESTRATION.value])))


@dataclass(frozen=True)
class CompositionResult:
    assignment: Mapping[str, frozenset]
    data_chain: tuple = ()  # one (d_i, d_j, d_k) witness per data-bearing feature
    reasons: tuple = ()

    @property
    def valid(self) -> bool:
        return not self.reasons

    @property
    def verdict(self) -> str:
        return "valid" if self.valid else "invalid"

    @property
    def tool_ids(self) -> tuple:
        return tuple(sorted(set().union(*self.assignment.values()))) if self.assignment else ()

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "assignment": {r: sorted(ts) for r, ts in sorted(self.assignment.items())},
            "data_chain": [list(c) for c in self.data_chain],
            "reasons": list(self.reasons),
        }


def _normalize_assignment(assignment: Mapping[str, Iterable[str]]) -> dict[str, frozenset]:
    out = {}
    for role, ids in assignment.items():
        role = Role(role).value
        ids = frozenset(ids)
        if ids:
            out[role] = ids
    return out


def _witness(reg: ToolRegistry, target: Optional[str], produced: Iterable[str],
             stages: list[Optional[frozenset]]) -> Optional[tuple]:
    """First chain d0 <= d1 <= ... where d0 is produced and each stage consumes its kind.

    ``stages`` holds, per downstream role, the kinds every tool in that role
    consumes (None when the platform serves the role and passes data through).
    """
    anc = reg.ancestors
    for d0 in sorted(produced):
        if target is not None and target not in anc[d0]:
            continue
        chain = [d0]

        def extend(i):
            if i == len(stages):
                return True
            prev = chain[-1]
            if stages[i] is None:
                chain.append(prev)
                if extend(i + 1):
                    return True
                chain.pop()
                return False
            for d in sorted(stages[i]):
                if d in anc[prev]:
                    chain.append(d)
                    if extend(i + 1):
                        return True
                    chain.pop()
            return False

        if extend(0):
            return tuple(chain)
    return None


def check_composition(reg: ToolRegistry, assignment: Mapping[str, Iterable[str]],
                      req: CompositionRequest) -> CompositionResult:
    """Verify an orchestration -> analysis -> reporting tool assignment.

    Valid when every tool supports its role, the tools jointly cover the
    required features, and for each required feature that is also a data
    kind there is a chain of kinds d_i <= d_j <= d_k with d_i produced by an
    orchestration tool, d_j consumed by every analysis tool and d_k by
    every reporting tool.
    """
    assign = _normalize_assignment(assignment)
    for ids in assign.values():
        for tid in ids:
            reg.tool(tid)
    reasons = []

    for role in sorted(req.roles_required):
        if role not in assign:
            reasons.append(f"no tool assigned to required role {role}")
    for role, ids in sorted(assign.items()):
        for tid in sorted(ids):
            if role not in reg.tools[tid].functions:
                reasons.append(f"role mismatch: {tid} does not support {role}")

    covered = set().union(*(reg.tools[t].features for ids in assign.values() for t in ids))
    missing = sorted(req.required_features - covered)
    if missing:
        reasons.append(f"features not covered: {', '.join(missing)}")

    def consumed_by_all(role) -> Optional[frozenset]:
        if role not in assign:
            return None
        sets = [reg.tools[t].consumes for t in assign[role]]
        return frozenset.intersection(*sets)

    if Role.ORCHESTRATION.value in assign:
        produced = set().union(*(reg.tools[t].produces for t in assign[Role.ORCHESTRATION.value]))
    else:
        produced = set(reg.kinds)  # the platform itself feeds the data
    stages = [consumed_by_all(Role.ANALYSIS.value), consumed_by_all(Role.REPORTING.value)]
    targets = sorted(req.required_features & set(reg.kinds)) or [None]
    chains = []
    for target in targets:
        w = _witness(reg, target, produced, stages)
        if w is None:
            label = target if target is not None else "any data"
            reasons.append(f"no data chain for {label}")
        else:
            chains.append(w)
    return CompositionResult(assign, tuple(chains) if not reasons else (), tuple(reasons))


def _order_key(result: CompositionResult):
    pairs = tuple(sorted((r, t) for r, ids in result.assignment.items() for t in ids))
    return (len(result.tool_ids), result.tool_ids, pairs)


def derive_compositions(reg: ToolRegistry, req: CompositionRequest) -> list[CompositionResult]:
    """All inclusion-minimal valid assignments, smallest first.

    Assignments are sets of (role, tool) pairs; a valid assignment is
    reported only if no strict subset of it is valid.
    """
    if not len(reg):
        raise NoComposition("registry is empty")
    roles = sorted(req.roles_required)
    pairs = [(role, tid) for role in roles for tid in sorted(reg.tools)
             if role in reg.tools[tid].functions]
    found: list[frozenset] = []
    results: list[CompositionResult] = []
    for size in range(len(roles), len(pairs) + 1):
        for combo in combinations(pairs, size):
            chosen = frozenset(combo)
            if {r for r, _ in combo} != set(roles):
                continue
            if any(prev <= chosen for prev in found):
                continue
            feats = set().union(*(reg.tools[t].features for _, t in combo))
            if not req.required_features <= feats:
                continue
            assignment: dict[str, set] = {}
            for role, tid in combo:
                assignment.setdefault(role, set()).add(tid)
            res = check_composition(reg, assignment, req)
            if res.valid:
                found.append(chosen)
                results.append(res)
    return sorted(results, key=_order_key)


# -- the DoS/DDoS case-study registry --------------------------------------

CASE_STUDY_TOOLS = ("Snort", "Splunk", "LimaCharlie")


def case_study_registry() -> ToolRegistry:
    """Three orchestration tools, each featuring and producing DoS and DDoS data."""
    kinds = [
        DataKind("SecurityData"),
        DataKind("NetworkTraffic", ("SecurityData",)),
        DataKind("NetworkAttack", ("SecurityData",)),
        DataKind("DoS", ("NetworkAttack",)),
        DataKind("DDoS", ("NetworkAttack",)),
        DataKind("LoginAttempt", ("SecurityData",)),
    ]
    reg = ToolRegistry(kinds={k.id: k for k in kinds}, features=frozenset({"DoS", "DDoS"}))
    for name in CASE_STUDY_TOOLS:
        iface = InterfaceDescriptor(f"{name.lower()}-out", consumes={"NetworkTraffic"}, produces={"DoS", "DDoS"})
        reg = register_tool(reg, ToolDescriptor(
            id=name,
            features={"DoS", "DDoS"},
            functions={Role.ORCHESTRATION.value},
            interfaces=(iface,),
            components=(ComponentDescriptor(f"{name.lower()}-sensor", interfaces=(iface.id,)),),
        ))
    return reg


def strip_produced(reg: ToolRegistry, kinds: Iterable[str]) -> ToolRegistry:
    """Copy of ``reg`` where no tool produces any of ``kinds``."""
    drop = set(kinds)
    out = ToolRegistry(kinds=reg.kinds, features=reg.features)
    for tid, t in sorted(reg.tools.items()):
        ifaces = tuple(InterfaceDescriptor(i.id, i.consumes, i.produces - drop) for i in t.interfaces)
        out = register_tool(out, ToolDescriptor(t.id, t.features, t.functions, ifaces, t.components))
    return out


__all__ = [
    "ROLES", "ToolRegistry", "CompositionRequest", "CompositionResult",
    "register_tool", "subsumes", "check_composition", "derive_compositions",
    "case_study_registry", "strip_produced",
]
