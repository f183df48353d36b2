import json
from datetime import datetime, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from secdoar.errors import (
    BadTimestamp,
    ColumnCountMismatch,
    IngestError,
    MappingMismatch,
    MissingField,
    NormalizationFailed,
    Unparseable,
)
from secdoar.ingest import (
    FieldMapping,
    IntermediateStore,
    RawRecord,
    identity_mapping,
    iter_zeek_conn,
    normalize,
    parse_jsonl_mapped,
    parse_snort_fast,
    parse_zeek_conn,
    parse_zeek_header,
    read_records,
    record_to_jsonl,
    snort_mapping,
    store_intermediate,
    zeek_mapping,
)
from secdoar.model import Auth
from strategies import EPOCH, rec, records

HEADER_LINE = "#fields\tts\tid.orig_h\tid.orig_p\tid.resp_h\tid.resp_p\tproto\torig_bytes"
DATA_LINE = "1626740104.0\t201.3.120.132\t51515\t172.31.27.153\t443\ttcp\t512"
SNORT_LINE = ("07/20-00:15:04.000000  [**] [1:1000001:1] DOS attempt [**] "
              "[Classification: Attempted DoS] [Priority: 2] {TCP} 201.3.120.132:51515 -> 172.31.27.153:443")


# -- zeek ------------------------------------------------------------------

def test_zeek_fields_bound_by_header():
    header = parse_zeek_header(HEADER_LINE)
    raw = parse_zeek_conn(DATA_LINE, header)
    # oracle: tokenize by hand and zip against the header names
    names = HEADER_LINE.split("\t")[1:]
    values = DATA_LINE.split("\t")
    assert raw.fields == dict(zip(names, values))
    assert raw.ts == 1626740104.0
    assert raw.tool_id == "zeek"


def test_zeek_comment_lines_skip():
    assert parse_zeek_conn("#close 2021-07-20", parse_zeek_header(HEADER_LINE)) is None


def test_zeek_arity_mismatch():
    short = "\t".join(DATA_LINE.split("\t")[:6])
    with pytest.raises(ColumnCountMismatch):
        parse_zeek_conn(short, parse_zeek_header(HEADER_LINE))


def test_zeek_bad_timestamp():
    with pytest.raises(BadTimestamp):
        parse_zeek_conn(DATA_LINE.replace("1626740104.0", "yesterday"), parse_zeek_header(HEADER_LINE))


def test_zeek_without_header_or_required_column():
    with pytest.raises(MissingField):
        parse_zeek_conn(DATA_LINE, None)
    with pytest.raises(MissingField):
        parse_zeek_header("#fields\tts\tid.orig_h")


def test_zeek_normalize_example():
    raw = parse_zeek_conn(DATA_LINE, parse_zeek_header(HEADER_LINE))
    r = normalize(raw, zeek_mapping())
    assert (r.src_ip, r.dst_host, r.dst_port, r.bytes, r.protocol) == ("201.3.120.132", "172.31.27.153", 443, 512, "TCP")
    assert (r.ts, r.src_port, r.priority, r.tool_id, r.auth) == (1626740104.0, 51515, 5, "zeek", None)


def test_zeek_unset_bytes_stay_unknown():
    lines = [HEADER_LINE, DATA_LINE.replace("\t512", "\t-")]
    (raw,) = list(iter_zeek_conn(lines))
    assert normalize(raw, zeek_mapping()).bytes is None


# -- snort -----------------------------------------------------------------

def test_snort_fast_alert_extraction():
    raw = parse_snort_fast(SNORT_LINE, year=2021)
    f = raw.fields
    assert (f["src_ip"], f["src_port"], f["dst_ip"], f["dst_port"]) == ("201.3.120.132", "51515", "172.31.27.153", "443")
    assert (f["gid"], f["sid"], f["rev"], f["priority"], f["proto"]) == ("1", "1000001", "1", "2", "TCP")
    assert f["msg"] == "DOS attempt" and f["classification"] == "Attempted DoS"
    assert raw.ts == datetime(2021, 7, 20, 0, 15, 4, tzinfo=timezone.utc).timestamp()
    r = normalize(raw, snort_mapping())
    assert (r.src_ip, r.dst_port, r.priority, r.bytes, r.auth) == ("201.3.120.132", 443, 2, None, None)


def test_snort_protocol_substitution():
    a = parse_snort_fast(SNORT_LINE, 2021).fields
    b = parse_snort_fast(SNORT_LINE.replace("{TCP}", "{UDP}"), 2021).fields
    assert b["proto"] == "UDP"
    assert {k: v for k, v in a.items() if k != "proto"} == {k: v for k, v in b.items() if k != "proto"}


@pytest.mark.parametrize("line", ["", "garbage", SNORT_LINE.replace("[**]", "", 1)])
def test_snort_unparseable(line):
    with pytest.raises(Unparseable):
        parse_snort_fast(line)


def test_snort_failed_login_becomes_auth_failure():
    line = SNORT_LINE.replace("Attempted DoS", "Failed login attempt").replace("1:1000001:1", "1:1000002:1")
    r = normalize(parse_snort_fast(line, 2021), snort_mapping())
    assert r.auth == Auth("sig:1:1000002", "failure")


def test_snort_year_parameter_sets_epoch():
    assert parse_snort_fast(SNORT_LINE, 2021).ts == EPOCH
    assert parse_snort_fast(SNORT_LINE, 2020).ts == datetime(2020, 7, 20, 0, 15, 4, tzinfo=timezone.utc).timestamp()


# -- jsonl -----------------------------------------------------------------

LIMA = FieldMapping(
    tool_id="limacharlie",
    entries={"src": "src_ip", "sport": "src_port", "dst": "dst_host", "dport": "dst_port", "t": "ts"},
    ts_format="iso8601",
    defaults={"protocol": "TCP", "bytes": 0, "priority": 5, "tool_id": "limacharlie"},
)


def test_jsonl_mapped_example():
    line = '{"src":"10.0.0.1","sport":"40000","dst":"172.31.27.153","dport":"443","t":"2021-07-20T00:15:04"}'
    r = parse_jsonl_mapped(line, LIMA)
    expected_epoch = (datetime(2021, 7, 20, 0, 15, 4, tzinfo=timezone.utc)
                      - datetime(1970, 1, 1, tzinfo=timezone.utc)).total_seconds()
    assert r.ts == expected_epoch == 1626740104.0
    assert (r.src_ip, r.src_port, r.dst_host, r.dst_port) == ("10.0.0.1", 40000, "172.31.27.153", 443)
    assert (r.protocol, r.bytes, r.priority, r.tool_id) == ("TCP", 0, 5, "limacharlie")


def test_jsonl_missing_field():
    line = '{"src":"10.0.0.1","sport":"40000","dst":"172.31.27.153","t":"2021-07-20T00:15:04"}'
    with pytest.raises(MissingField):
        parse_jsonl_mapped(line, LIMA)


def test_jsonl_defaults_only():
    defaults = {"ts": EPOCH, "src_ip": "10.0.0.1", "src_port": 1, "dst_host": "h", "dst_port": 2,
                "protocol": "UDP", "priority": 3, "bytes": 7, "tool_id": "d"}
    m = FieldMapping("d", {}, defaults=defaults)
    r = parse_jsonl_mapped("{}", m)
    assert r.to_dict() == {**defaults, "auth": None}


def test_jsonl_bad_timestamp_and_bad_json():
    with pytest.raises(BadTimestamp):
        parse_jsonl_mapped('{"src":"10.0.0.1","sport":1,"dst":"h","dport":2,"t":"noon"}', LIMA)
    with pytest.raises(Unparseable):
        parse_jsonl_mapped("[1, 2]", LIMA)
    with pytest.raises(Unparseable):
        parse_jsonl_mapped("{", LIMA)


def test_mapping_coverage_reported():
    assert FieldMapping("x", {"a": "src_ip"}).uncovered == [
        "ts", "src_port", "dst_host", "dst_port", "protocol", "priority", "bytes"]
    assert LIMA.uncovered == []
    with pytest.raises(ValueError):
        FieldMapping("x", {"a": "nonsense"})


# -- normalize -------------------------------------------------------------

def test_normalize_mapping_mismatch():
    raw = parse_zeek_conn(DATA_LINE, parse_zeek_header(HEADER_LINE))
    with pytest.raises(MappingMismatch):
        normalize(raw, snort_mapping())


def test_normalize_out_of_range_port():
    raw = parse_zeek_conn(DATA_LINE.replace("\t443\t", "\t70000\t"), parse_zeek_header(HEADER_LINE))
    with pytest.raises(NormalizationFailed) as info:
        normalize(raw, zeek_mapping())
    assert [str(v) for v in info.value.violations] == ["dst_port:port-out-of-range"]


# -- store -----------------------------------------------------------------

def test_store_counts_and_append_only(tmp_path):
    store = IntermediateStore(tmp_path / "st")
    rs = [rec(ts=EPOCH + i, tool="zeek") for i in range(3)] + [rec(ts=EPOCH + i, tool="snort") for i in range(2)]
    assert store_intermediate(rs, store) == {"zeek": 3, "snort": 2}
    assert store_intermediate([], store) == {}
    assert store_intermediate(rs, store) == {"zeek": 3, "snort": 2}
    assert len(store.read("zeek")) == 6 and len(store.read("snort")) == 4
    assert sorted(store.partitions()) == ["snort", "zeek"]
    assert all(r.tool_id == "zeek" for r in store.read("zeek"))


def test_store_partition_file_layout(tmp_path):
    store = IntermediateStore(tmp_path)
    r = rec(nbytes=5, auth=Auth("alice", "success"))
    store_intermediate([r], store)
    text = (tmp_path / "zeek.jsonl").read_text()
    assert text == record_to_jsonl(r) + "\n"
    assert list(json.loads(text)) == ["ts", "src_ip", "src_port", "dst_host", "dst_port", "protocol",
                                      "priority", "bytes", "auth", "tool_id"]


def test_empty_store_write_leaves_no_files(tmp_path):
    store = IntermediateStore(tmp_path / "st")
    store_intermediate([], store)
    assert store.partitions() == []


def test_read_records_formats(tmp_path):
    z = tmp_path / "conn.log"
    z.write_text(HEADER_LINE + "\n" + DATA_LINE + "\n#close\n")
    s = tmp_path / "alert"
    s.write_text(SNORT_LINE + "\n\n")
    (zr,) = read_records(z, "zeek", "zeek")
    (sr,) = read_records(s, "snort", "snort", year=2021)
    assert zr.key == sr.key
    with pytest.raises(ValueError):
        read_records(z, "pcap", "zeek")


# -- properties ------------------------------------------------------------

@given(records)
def test_jsonl_round_trip(r):
    assert parse_jsonl_mapped(record_to_jsonl(r), identity_mapping(r.tool_id)) == r


@given(st.lists(records, max_size=30))
def test_store_partition_isolation(tmp_path_factory, rs):
    store = IntermediateStore(tmp_path_factory.mktemp("iso"))
    store_intermediate(rs, store)
    for tool in store.partitions():
        got = store.read(tool)
        assert all(r.tool_id == tool for r in got)
        assert got == [r for r in rs if r.tool_id == tool]


def _classify(fn):
    try:
        return "record" if fn() is not None else "skip"
    except IngestError:
        return "error"


@given(st.text(max_size=200))
def test_parsers_total_on_arbitrary_text(line):
    header = parse_zeek_header(HEADER_LINE)
    for fn in (lambda: parse_zeek_conn(line, header),
               lambda: parse_snort_fast(line),
               lambda: parse_jsonl_mapped(line, LIMA)):
        assert _classify(fn) in ("record", "skip", "error")


@given(st.binary(max_size=200))
def test_parsers_total_on_arbitrary_bytes(data):
    line = data.decode("utf-8", errors="surrogateescape")
    header = parse_zeek_header(HEADER_LINE)
    for fn in (lambda: parse_zeek_conn(line, header), lambda: parse_snort_fast(line),
               lambda: parse_jsonl_mapped(line, LIMA)):
        _classify(fn)


def test_raw_record_of_zeek_carries_line_no():
    header = parse_zeek_header(HEADER_LINE)
    assert parse_zeek_conn(DATA_LINE, header, line_no=7) == RawRecord("zeek", 7, parse_zeek_conn(DATA_LINE, header).fields, EPOCH)
