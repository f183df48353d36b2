"""
Seeded synthetic traffic
========================

"""

from collections import Counter

from secdoar.simgen import DEFAULT_START_EPOCH, Injection, emit, generate_trace

# 30 s of 5 req/s baseline plus a 5 s flood from 20 sources
trace = generate_trace(seed=7, duration_s=30, baseline_rate=5, injections=[Injection(10, 5, 40, 20)])
per_second = Counter(int(r.ts - DEFAULT_START_EPOCH) for r in trace)
print([per_second[s] for s in range(30)])

# the same seed always yields the same bytes
assert emit(trace, "zeek") == emit(generate_trace(7, 30, 5, injections=[Injection(10, 5, 40, 20)]), "zeek")
print(emit(trace[:3], "zeek"))
print(emit(trace[:2], "jsonl"))
