import pytest
from hypothesis import given
from hypothesis import strategies as st

from secdoar.errors import IntervalOutOfHorizon, UnknownMetric, ZeroDenominator
from secdoar.metrics import (
    CellKey,
    LoginAggregate,
    RateCell,
    aggregate_login_attempts,
    availability_uptime,
    detect_dos_ddos,
    metric_catalog,
    ratio_metric,
    resolve_metric,
    window_rates,
)
from secdoar.model import Auth, TrafficRecord, Window
from oracles import detect, login_groups, union_length_by_scan, window_counts
from strategies import EPOCH, rec, records

DST = ("172.31.27.153", 443)


def as_plain(rates):
    return {(k.dst_host, k.dst_port, k.window.start, k.window.end): (c.count, c.distinct_sources)
            for k, c in rates.items()}


def cell(count, distinct, start=0.0):
    refs = tuple(range(count)) or ("x",)
    return {CellKey(*DST, Window(start, start + 1)): RateCell(count, distinct, refs)}


# -- window_rates ----------------------------------------------------------

def test_thirty_sources_in_one_second():
    rs = [rec(ts=EPOCH + i / 30, src=f"10.0.0.{i + 1}") for i in range(30)]
    rates = window_rates(rs, 1)
    assert as_plain(rates) == window_counts(rs, 1) == {(*DST, EPOCH, EPOCH + 1): (30, 30)}


def test_empty_and_uniform_spread():
    assert window_rates([], 1) == {}
    rs = [rec(ts=EPOCH + i + 0.5) for i in range(10)]
    rates = window_rates(rs, 1)
    assert len(rates) == 10 and all(c.count == 1 for c in rates.values())


def test_width_must_be_positive():
    with pytest.raises(ValueError):
        window_rates([], 0)


@given(st.lists(records, max_size=60), st.sampled_from([0.25, 0.5, 1, 2, 5]))
def test_window_rates_match_oracle_and_conserve(rs, width):
    rs = sorted(rs, key=lambda r: r.ts)
    rates = window_rates(rs, width)
    assert as_plain(rates) == window_counts(rs, width)
    assert sum(c.count for c in rates.values()) == len(rs)


@given(st.lists(records, max_size=40), st.sampled_from([0.5, 1, 2]), st.integers(-50, 50))
def test_shift_by_whole_windows_preserves_counts(rs, width, k):
    shift = k * width
    moved = [TrafficRecord(r.ts + shift, r.src_ip, r.src_port, r.dst_host, r.dst_port, r.protocol,
                           r.priority, r.bytes, r.auth, r.tool_id) for r in rs]
    a = sorted((h, p, c.count, c.distinct_sources) for (h, p, _), c in window_rates(rs, width).items())
    b = sorted((h, p, c.count, c.distinct_sources) for (h, p, _), c in window_rates(moved, width).items())
    assert a == b
    fa = [(f.subject, f.kind, f.value) for f in detect_dos_ddos(window_rates(rs, width), 2, 2)]
    fb = [(f.subject, f.kind, f.value) for f in detect_dos_ddos(window_rates(moved, width), 2, 2)]
    assert fa == fb


# -- detect ----------------------------------------------------------------

def test_single_source_flood_is_dos():
    (f,) = detect_dos_ddos(cell(50, 1), threshold=20, ddos_source_min=3)
    assert (f.kind, f.value, f.severity, f.subject) == ("dos", 50.0, "critical", "172.31.27.153:443")


def test_many_sources_is_ddos():
    (f,) = detect_dos_ddos(cell(50, 40), threshold=20)
    assert f.kind == "ddos"


def test_fifteen_is_normal_and_threshold_is_strict():
    assert detect_dos_ddos(cell(15, 15), threshold=20) == []
    assert detect_dos_ddos(cell(20, 15), threshold=20) == []
    assert len(detect_dos_ddos(cell(21, 15), threshold=20)) == 1


def test_detect_preconditions():
    with pytest.raises(ValueError):
        detect_dos_ddos({}, threshold=0)
    with pytest.raises(ValueError):
        detect_dos_ddos({}, threshold=5, ddos_source_min=1)


def test_value_is_rate_per_second_for_wider_windows():
    rs = [rec(ts=EPOCH + i * 0.1, src=f"10.0.0.{i % 5 + 1}") for i in range(40)]
    (f,) = detect_dos_ddos(window_rates(rs, 4), threshold=30)
    assert f.value == 10.0 and f.kind == "ddos" and len(f.evidence) == 40


@given(st.lists(records, max_size=60), st.integers(1, 6), st.integers(0, 6), st.integers(2, 4))
def test_detect_matches_oracle_and_is_monotone(rs, t, dt, smin):
    rs = sorted(rs, key=lambda r: r.ts)
    rates = window_rates(rs, 1)
    low = detect_dos_ddos(rates, t, smin)
    assert [(f.window.start, f.subject, f.kind, f.value) for f in low] == detect(rs, 1, t, smin)
    high = detect_dos_ddos(rates, t + dt, smin)
    assert {(f.window, f.subject) for f in high} <= {(f.window, f.subject) for f in low}


# -- login aggregates ------------------------------------------------------

def test_fig_style_groups():
    ports1 = [4563, 4219, 3025, 4407, 3714]
    ports2 = [2847, 3547, 2979, 2105, 3085]
    rs = [rec(src="201.3.120.132", dport=ports1[i % 5]) for i in range(27)]
    rs += [rec(src="76.169.7.252", dport=ports2[i % 5]) for i in range(26)]
    aggs = aggregate_login_attempts(rs, Window(EPOCH, EPOCH + 1))
    assert [a.to_dict() for a in aggs] == [
        {"failedLoginCount": 0, "portList": "4563;4219;3025;4407;3714", "startTime": "2021-07-20T00:15:04",
         "endTime": "2021-07-20T00:15:04", "sourceIp": "201.3.120.132", "destIP": "172-31-27-153", "attemptNum": 27},
        {"failedLoginCount": 0, "portList": "2847;3547;2979;2105;3085", "startTime": "2021-07-20T00:15:04",
         "endTime": "2021-07-20T00:15:04", "sourceIp": "76.169.7.252", "destIP": "172-31-27-153", "attemptNum": 26},
    ]


def test_empty_window_and_failures():
    assert aggregate_login_attempts([rec(ts=EPOCH + 5)], Window(EPOCH, EPOCH + 1)) == []
    rs = [rec(auth=Auth("u", "failure")), rec(auth=Auth("u", "success")), rec()]
    (a,) = aggregate_login_attempts(rs, Window(EPOCH, EPOCH + 1))
    assert (a.failedLoginCount, a.attemptNum) == (1, 3)


def test_non_ipv4_destination_is_not_dashed():
    (a,) = aggregate_login_attempts([rec(dst="web-01.example")], Window(EPOCH, EPOCH + 1))
    assert a.destIP == "web-01.example"


def test_login_aggregate_invariants():
    with pytest.raises(ValueError):
        LoginAggregate(3, "1", "a", "b", "s", "d", 2)
    with pytest.raises(ValueError):
        LoginAggregate(0, "1;1", "a", "b", "s", "d", 2)


@given(st.lists(records, max_size=60), st.integers(0, 100), st.integers(1, 60))
def test_aggregates_match_oracle(rs, offset, width):
    start = EPOCH + offset
    aggs = aggregate_login_attempts(rs, Window(start, start + width))
    assert [a.to_dict() for a in aggs] == login_groups(rs, start, start + width)
    inside = [r for r in rs if start <= r.ts < start + width]
    assert sum(a.attemptNum for a in aggs) == len(inside)
    assert all(a.failedLoginCount <= a.attemptNum for a in aggs)


# -- ratio and availability ------------------------------------------------

def test_ratio_examples():
    assert ratio_metric(8, 10, "attackability").value == 0.8
    assert ratio_metric(0, 0, "attackability").value == 0
    with pytest.raises(ZeroDenominator):
        ratio_metric(3, 0, "attackability")


def test_ratio_band_warns():
    assert ratio_metric(8, 10, "a", band=(0.8, 1.0)).severity == "info"
    assert ratio_metric(7, 10, "a", band=(0.8, 1.0)).severity == "warn"
    assert ratio_metric(7, 10, "a").kind == "ratio_report"


def test_availability_examples():
    assert availability_uptime([], (0, 100)).value == 1.0
    assert availability_uptime([(20, 30)], (0, 100)).value == 0.9
    f = availability_uptime([(0, 10), (5, 15)], (0, 100))
    assert f.value == pytest.approx(1 - union_length_by_scan([(0, 10), (5, 15)], 0, 100) / 100) == pytest.approx(0.85)
    assert f.kind == "availability_gap"
    with pytest.raises(IntervalOutOfHorizon):
        availability_uptime([(90, 110)], (0, 100))


@given(st.lists(st.tuples(st.integers(0, 100), st.integers(0, 30)), max_size=8))
def test_availability_matches_grid_scan(spans):
    intervals = [(s, min(s + d, 100)) for s, d in spans]
    f = availability_uptime(intervals, (0, 100))
    assert f.value == pytest.approx(1 - union_length_by_scan(intervals, 0, 100) / 100)


# -- catalog ---------------------------------------------------------------

def test_catalog_rows_and_evaluators():
    cat = metric_catalog()
    assert len(cat) == 13
    first = cat[0]
    assert first.focus == "Denial of service and distributed denial of service attacks"
    assert first.elements == ("Attack count",)
    audit = next(s for s in cat if s.focus == "Audit")
    assert audit.descriptor_only and audit.collection_strategy == ("Track access to data",)
    bound = {s.measurement_scheme for s in cat if not s.descriptor_only}
    assert bound == {"dos_ddos", "access_control", "ratio:integrity", "ratio:attackability",
                     "ratio:feature_coverage", "availability"}
    assert len({s.id for s in cat}) == 13


def test_hyphenated_items_survive_splitting():
    integrity = next(s for s in metric_catalog() if s.focus == "Integrity")
    assert "Periodic design-time and run-time integrity checks" in integrity.responses


def test_resolve_metric_aliases():
    assert resolve_metric("dos").id == "dos_ddos"
    assert resolve_metric("access_control").measurement_scheme == "access_control"
    assert resolve_metric("attackability").measurement_scheme == "ratio:attackability"
    with pytest.raises(UnknownMetric):
        resolve_metric("bogus")
