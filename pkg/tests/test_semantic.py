import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from secdoar.errors import ConflictUnresolvable, UnboundPredicate, UncoveredTool
from secdoar.ingest import identity_mapping, snort_mapping, zeek_mapping
from secdoar.model import Auth, TrafficRecord
from secdoar.semantic import (
    KnowledgeBase,
    Literal,
    SemanticIntegrationModel,
    Triple,
    assert_triples,
    build_knowledge_base,
    integrate,
    integrate_all,
    query,
    record_to_triples,
    records_from_kb,
    triples_to_record,
)
from strategies import EPOCH, rec, records

SIM = SemanticIntegrationModel.from_mappings(
    [zeek_mapping(), snort_mapping()] + [identity_mapping(t) for t in ("splunk",)])


def populated(r):
    fields = [r.ts, r.src_ip, r.src_port, r.dst_host, r.dst_port, r.protocol, r.priority, r.bytes, r.tool_id]
    n = sum(v is not None for v in fields)
    return n + (2 if r.auth is not None else 0)


# -- record_to_triples -----------------------------------------------------

def test_triples_of_a_record():
    r = rec(nbytes=512)
    ts = record_to_triples(r, SIM)
    s = ts[0].subject
    assert len(ts) == populated(r) + 1 == 10
    assert Triple(s, "rdf:type", "sec:TrafficData") in ts
    assert Triple(s, "sec:sourceIp", Literal("201.3.120.132", "string")) in ts
    assert Triple(s, "sec:destPort", Literal(443, "integer")) in ts
    assert all(t.subject == s for t in ts)


def test_uncovered_tool():
    with pytest.raises(UncoveredTool):
        record_to_triples(rec(tool="foo"), SIM)


def test_absent_auth_emits_no_auth_triples():
    preds = {t.predicate for t in record_to_triples(rec(), SIM)}
    assert "sec:authOutcome" not in preds and "sec:authCredential" not in preds
    preds = {t.predicate for t in record_to_triples(rec(auth=Auth("a", "failure")), SIM)}
    assert {"sec:authOutcome", "sec:authCredential"} <= preds


@given(records)
def test_triple_count_is_populated_fields_plus_type(r):
    ts = record_to_triples(r, SIM)
    assert len(ts) == populated(r) + 1
    assert triples_to_record(ts, SIM) == r


def test_vocabulary_is_lower_camel_case_under_sec():
    preds = SIM.vocabulary - {"rdf:type"}
    assert all(p.startswith("sec:") and p[4].islower() and "_" not in p for p in preds)
    assert {"sec:sourceIp", "sec:destHost", "sec:destPort"} <= preds


def test_sim_json_round_trip(tmp_path):
    path = tmp_path / "sim.json"
    import json
    path.write_text(json.dumps(SIM.to_dict()))
    assert SemanticIntegrationModel.load(path) == SIM


# -- assert ----------------------------------------------------------------

def _five():
    return [Triple(f"_:s{i}", "sec:sourceIp", Literal(f"10.0.0.{i}", "string")) for i in range(5)]


def test_assert_counts_new_triples():
    kb = KnowledgeBase(SIM)
    assert assert_triples(kb, _five()) == 5
    assert assert_triples(kb, _five()) == 0
    kb2 = KnowledgeBase(SIM)
    a, b, c = _five()[:3]
    d = Triple("_:x", "sec:destPort", Literal(1, "integer"))
    assert assert_triples(kb2, [a, b, c, d, d]) == 4


# -- query -----------------------------------------------------------------

def brute_join(triples, pattern):
    """Reference: try every combination of triples, one per pattern."""
    found = set()
    for combo in itertools.product(triples, repeat=len(pattern)):
        b = {}
        ok = True
        for pat, t in zip(pattern, combo):
            for pt, term in zip(pat, t):
                if isinstance(pt, str) and pt.startswith("?"):
                    if b.setdefault(pt, term) != term:
                        ok = False
                elif isinstance(term, Literal) and not isinstance(pt, Literal):
                    if term.value != pt or type(term.value) is not type(pt):
                        ok = False
                elif pt != term:
                    ok = False
        if ok:
            found.add(tuple(sorted(b.items())))
    return found


def test_query_join_example():
    rs = [rec(src="201.3.120.132"), rec(src="76.169.7.252", ts=EPOCH + 1), rec(dst="10.1.1.1", src="9.9.9.9")]
    kb = build_knowledge_base(rs, SIM)
    pattern = [("?r", "sec:destHost", "172.31.27.153"), ("?r", "sec:sourceIp", "?s")]
    got = query(kb, pattern)
    assert sorted(b["?s"].value for b in got) == ["201.3.120.132", "76.169.7.252"]
    assert {tuple(sorted(b.items())) for b in got} == brute_join(kb.triples(), pattern)


def test_query_empty_kb_and_unknown_predicate():
    kb = KnowledgeBase(SIM)
    assert query(kb, [("?r", "sec:sourceIp", "?s")]) == []
    with pytest.raises(UnboundPredicate):
        query(kb, [("?r", "sec:nonexistent", "?s")])
    with pytest.raises(ValueError):
        query(kb, [])


@given(st.lists(records, min_size=1, max_size=4), st.sampled_from([
    [("?r", "sec:destPort", 443), ("?r", "sec:sourceIp", "?s")],
    [("?r", "sec:destHost", "?h"), ("?q", "sec:destHost", "?h"), ("?r", "sec:toolId", "zeek")],
    [("?r", "sec:priority", "?p"), ("?r", "?pred", "?o"), ("?r", "sec:protocol", "UDP")],
]))
def test_query_matches_brute_force_join(rs, pattern):
    kb = build_knowledge_base(rs, SIM)
    got = query(kb, pattern)
    assert {tuple(sorted(b.items())) for b in got} == brute_join(kb.triples(), pattern)
    assert len(got) == len({tuple(sorted(b.items())) for b in got})


@given(st.lists(records, max_size=10))
def test_describe_returns_exactly_populated_fields(rs):
    kb = build_knowledge_base(rs, SIM)
    for r in rs:
        ts = record_to_triples(r, SIM)
        assert sorted(kb.describe(ts[0].subject)) == sorted(ts)


def test_snapshot_round_trip(tmp_path):
    kb = build_knowledge_base([rec(nbytes=4, auth=Auth("a b", "failure")), rec(ts=EPOCH + 0.125)], SIM)
    kb.dump(tmp_path / "kb.tsv")
    back = KnowledgeBase.load(tmp_path / "kb.tsv", SIM)
    assert back.triples() == kb.triples()
    assert all(len(line.split("\t")) == 4 for line in (tmp_path / "kb.tsv").read_text().splitlines())


# -- integrate -------------------------------------------------------------

def test_integrate_merges_bytes_and_auth():
    z = rec(nbytes=512, tool="zeek", priority=5)
    s = rec(auth=Auth("sig:1:1000002", "failure"), tool="snort", priority=2)
    (m,) = integrate([z], [s], SIM)
    assert m.bytes == 512 and m.auth == Auth("sig:1:1000002", "failure")
    assert m.priority == 2 and m.tool_id == "snort"


def test_integrate_identity_and_order():
    d = [rec(ts=EPOCH + 2), rec(ts=EPOCH), rec(ts=EPOCH + 1)]
    assert integrate(d, [], SIM) == sorted(d, key=lambda r: r.ts)
    assert integrate([], [], SIM) == []


def test_conflict_resolved_by_priority_or_rejected():
    a = rec(nbytes=1, priority=1, tool="zeek")
    b = rec(nbytes=2, priority=3, tool="snort")
    assert integrate([a], [b], SIM)[0].bytes == 1
    with pytest.raises(ConflictUnresolvable):
        integrate([a], [rec(nbytes=2, priority=1, tool="snort")], SIM)


def test_integrate_rejects_uncovered_tool():
    with pytest.raises(UncoveredTool):
        integrate([rec(tool="foo")], [], SIM)


def _conflict_free(rs):
    """Make records with equal observation keys agree on bytes and auth."""
    first = {}
    out = []
    for r in rs:
        f = first.setdefault(r.key, r)
        out.append(TrafficRecord(r.ts, r.src_ip, r.src_port, r.dst_host, r.dst_port, r.protocol,
                                 r.priority, f.bytes if r.bytes is not None else None,
                                 f.auth if r.auth is not None else None, r.tool_id))
    return out


# collisions need a small key space
small_records = st.builds(
    lambda ts, src, port, b, auth, prio, tool: TrafficRecord(EPOCH + ts, src, 1000, "h", port, "TCP", prio, b, auth, tool),
    st.integers(0, 2), st.sampled_from(["10.0.0.1", "10.0.0.2"]), st.sampled_from([80, 443]),
    st.one_of(st.none(), st.integers(0, 9)),
    st.one_of(st.none(), st.just(Auth("u", "failure"))),
    st.integers(1, 3), st.sampled_from(["zeek", "snort", "splunk"]),
)


@given(st.lists(small_records, max_size=12), st.lists(small_records, max_size=12))
def test_integrate_commutative_on_conflict_free_inputs(dx, dy):
    both = _conflict_free(dx + dy)
    dx, dy = both[:len(dx)], both[len(dx):]
    assert integrate(dx, dy, SIM) == integrate(dy, dx, SIM)


@given(st.lists(small_records, max_size=12))
def test_integrate_idempotent(rs):
    d = integrate(_conflict_free(rs), [], SIM)
    assert integrate(d, d, SIM) == d


@given(st.lists(small_records, max_size=8), st.lists(small_records, max_size=8), st.lists(small_records, max_size=8))
def test_integrate_associative_on_conflict_free_inputs(a, b, c):
    allr = _conflict_free(a + b + c)
    a, b, c = allr[:len(a)], allr[len(a):len(a) + len(b)], allr[len(a) + len(b):]
    left = integrate(integrate(a, b, SIM), c, SIM)
    right = integrate(a, integrate(b, c, SIM), SIM)
    assert left == right == integrate_all([a, b, c], SIM)


@given(st.lists(small_records, max_size=12))
def test_integrated_records_survive_the_knowledge_base(rs):
    d = integrate(_conflict_free(rs), [], SIM)
    assert records_from_kb(build_knowledge_base(d, SIM)) == d
    assert len({r.key for r in d}) == len(d)
