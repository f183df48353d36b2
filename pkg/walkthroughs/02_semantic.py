"""
Semantic integration and the knowledge base
===========================================

"""

from secdoar.ingest import snort_mapping, zeek_mapping
from secdoar.model import Auth, TrafficRecord
from secdoar.semantic import SemanticIntegrationModel, build_knowledge_base, integrate, query

sim = SemanticIntegrationModel.from_mappings([zeek_mapping(), snort_mapping()])

# the same connection seen by two tools: zeek knows the bytes, snort the failed login
t = 1626740104.0
seen_by_zeek = TrafficRecord(t, "201.3.120.132", 4563, "172.31.27.153", 443, "TCP", 5, 512, None, "zeek")
seen_by_snort = TrafficRecord(t, "201.3.120.132", 4563, "172.31.27.153", 443, "TCP", 2, None,
                              Auth("sig:1:1000002", "failure"), "snort")

merged = integrate([seen_by_zeek], [seen_by_snort], sim)
print(merged)

# integrated records become triples with sec: predicates
kb = build_knowledge_base(merged, sim)
print(len(kb), "triples")
for row in query(kb, [("?r", "sec:authOutcome", "?o"), ("?r", "sec:sourceIp", "?src")]):
    print(row)
