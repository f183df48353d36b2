"""
The whole pipeline from a config file
=====================================

"""

import json
import tempfile
from pathlib import Path

from secdoar.orchestration import PipelineConfig, RunTrace, run_pipeline
from secdoar.simgen import case_study_trace, to_zeek_tsv

root = Path(tempfile.mkdtemp())
(root / "conn.log").write_text(to_zeek_tsv(case_study_trace(42)))
config = {
    "inputs": [{"tool_id": "zeek", "format": "zeek", "path": "conn.log"}],
    "composition": {"required_features": ["DoS", "DDoS"],
                    "assignment": {"orchestration": ["Snort", "Splunk", "LimaCharlie"]}},
    "metrics": [{"metric_id": "dos_ddos", "params": {"threshold": 20, "width": 1}}, {"metric_id": "access_control"}],
    "report": {"format": "json", "output_path": "out/report.json"},
    "store": "store",
}
(root / "pipeline.json").write_text(json.dumps(config))

# composition is checked before any log is read
trace = RunTrace()
rep = run_pipeline(PipelineConfig.load(root / "pipeline.json"), now="2021-07-20T01:00:00", trace=trace)
print(trace.stages)
print(rep.stage_labels, rep.metadata["stages"]["report"])
for row in rep.section("target_summary").rows:
    print(row)
print((root / "out" / "report.json").stat().st_size, "bytes written")
