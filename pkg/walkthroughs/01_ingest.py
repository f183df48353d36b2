"""
Ingesting tool logs into the intermediate store
===============================================

"""

import tempfile

from secdoar.ingest import IntermediateStore, iter_snort_fast, iter_zeek_conn, normalize, snort_mapping, store_intermediate, zeek_mapping

# a Zeek conn.log names its columns in the #fields header
zeek_log = """#separator \\x09
#fields\tts\tid.orig_h\tid.orig_p\tid.resp_h\tid.resp_p\tproto\torig_bytes
1626740104.0\t201.3.120.132\t4563\t172.31.27.153\t443\ttcp\t512
1626740104.5\t76.169.7.252\t2847\t172.31.27.153\t443\ttcp\t-
"""
zeek = [normalize(raw, zeek_mapping()) for raw in iter_zeek_conn(zeek_log.splitlines())]
for r in zeek:
    print(r)

# Snort fast alerts carry no year, so the caller supplies it
snort_log = ("07/20-00:15:04.000000  [**] [1:1000001:1] DOS attempt [**] "
             "[Classification: Attempted DoS] [Priority: 2] {TCP} 201.3.120.132:4563 -> 172.31.27.153:443")
snort = [normalize(raw, snort_mapping()) for raw in iter_snort_fast([snort_log], 2021)]
print(snort[0])

# normalized records land in one append-only partition per tool
store = IntermediateStore(tempfile.mkdtemp())
print(store_intermediate(zeek + snort, store))
print(store.partitions(), len(store.read("zeek")))
