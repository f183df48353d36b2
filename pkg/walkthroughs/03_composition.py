"""
Checking and deriving tool compositions
=======================================

"""

from secdoar.composition import CompositionRequest, case_study_registry, check_composition, derive_compositions, strip_produced

reg = case_study_registry()
req = CompositionRequest({"DoS", "DDoS"})

# three orchestration tools together cover both features
result = check_composition(reg, {"orchestration": {"Snort", "Splunk", "LimaCharlie"}}, req)
print(result.verdict, result.data_chain)

# minimal compositions, smallest first
for r in derive_compositions(reg, req):
    print(r.tool_ids)

# with nothing producing DoS data there is no data chain
broken = check_composition(strip_produced(reg, {"DoS"}), {"orchestration": {"Snort"}}, req)
print(broken.verdict, broken.reasons)
