"""
Assembling and rendering a report
=================================

"""

import tempfile

from secdoar.metrics import aggregate_login_attempts, detect_dos_ddos, window_rates
from secdoar.model import Window
from secdoar.reporting import assemble_report, render_report, write_report
from secdoar.simgen import case_study_trace

records = case_study_trace(42)
rates = window_rates(records, 1)
findings = detect_dos_ddos(rates, 20)
aggs = aggregate_login_attempts(records, Window(records[0].ts, records[-1].ts + 1))

rep = assemble_report("2021-07-20T01:00:00", ingest_counts={"zeek": len(records)}, integrated_count=len(records),
                      attack_findings=findings, aggregates=aggs, rates=rates, threshold=20)
for s in rep.sections:
    print(s.title, len(s.rows))

# canonical JSON is byte-stable for a fixed generation time
print(render_report(rep, "json")[:200])

# CSV goes out as one file per section
print(write_report(rep, "csv", tempfile.mkdtemp()))
