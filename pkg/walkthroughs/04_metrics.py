"""
Windowed rates, DoS/DDoS detection and login aggregation
========================================================

"""

from secdoar.metrics import aggregate_login_attempts, detect_dos_ddos, metric_catalog, window_rates
from secdoar.model import Window
from secdoar.simgen import DEFAULT_START_EPOCH, case_study_trace

records = case_study_trace(42)
rates = window_rates(records, width=1)
print(len(records), "records in", len(rates), "one-second windows")

# a window is flagged when its count is strictly above the threshold
for f in detect_dos_ddos(rates, threshold=20):
    print(f.window.start - DEFAULT_START_EPOCH, f.kind, f.value)

# per (source, destination) login aggregates over the first second of the trace
first = Window(DEFAULT_START_EPOCH, DEFAULT_START_EPOCH + 1)
for a in aggregate_login_attempts(records, first)[:3]:
    print(a.to_dict())

for spec in metric_catalog():
    print(spec.id, "|", spec.focus, "|", spec.measurement_scheme)
