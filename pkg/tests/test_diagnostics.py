import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marskit import SimConfig, detect_gaps, interval_histogram, interval_stats, session_report, simulate_session
from marskit.diagnostics import histogram_csv, welford
from marskit.errors import NonMonotonicTimestamp, TooFewSamples
from marskit.model import ClockId, TimebasedInstant

from oracles import planted_gaps, two_pass_variance

increasing = st.lists(st.integers(-(10**15), 10**15), min_size=2, max_size=200, unique=True).map(sorted)


def test_equal_intervals():
    s = interval_stats([0, 33_333_333, 66_666_666], nominal_rate_hz=30.0)
    assert s.count == 2
    assert s.mean_ns == 33_333_333 and s.std_ns == 0.0
    assert s.min_ns == s.max_ns == s.p99_ns == 33_333_333
    assert s.achieved_rate_hz == pytest.approx(30.000, abs=1e-3)
    assert s.nominal_interval_ns == pytest.approx(33_333_333.33)


def test_jitter_free_100hz_over_600s():
    t = np.arange(60_000, dtype=np.int64) * 10_000_000
    s = interval_stats(t, 100.0)
    assert s.mean_ns == 10_000_000.0
    assert s.p99_ns == 10_000_000 and s.median_ns == 10_000_000.0
    assert s.span_ns == t[-1] - t[0]


def test_accepts_instants():
    c = ClockId("host")
    s = interval_stats([TimebasedInstant(0, c), TimebasedInstant(5, c)])
    assert s.count == 1 and s.mean_ns == 5


def test_too_few_and_unordered():
    with pytest.raises(TooFewSamples):
        interval_stats([5])
    with pytest.raises(TooFewSamples):
        detect_gaps([], 10)
    with pytest.raises(NonMonotonicTimestamp):
        interval_stats([0, 10, 10])


def test_std_against_two_pass_oracle_under_jitter():
    session, _ = simulate_session(SimConfig(duration_s=60.0, timestamp_jitter_std_ns=500_000, seed=21))
    t = [s.t.t for s in session.imu_combined]
    d = np.diff(t).tolist()
    stats = interval_stats(t)
    oracle = math.sqrt(two_pass_variance(d))
    assert abs(stats.std_ns - oracle) <= 0.05 * oracle
    # single-pass stays far tighter than the 5% budget
    assert stats.std_ns == pytest.approx(oracle, rel=1e-9)


def test_welford_stable_with_large_offset():
    values = [1e11 + x for x in (4.0, 7.0, 13.0, 16.0)]
    n, mean, var = welford(values)
    assert n == 4 and mean == pytest.approx(1e11 + 10.0) and var == pytest.approx(22.5, rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(increasing)
def test_statistics_identities(t):
    s = interval_stats(t)
    d = np.diff(np.array(t, dtype=object))
    assert s.count == len(t) - 1
    assert sum(d) == t[-1] - t[0] == s.span_ns
    assert s.min_ns <= s.median_ns <= s.max_ns
    assert s.min_ns <= s.p99_ns <= s.max_ns


def test_perfect_30hz_has_no_gaps():
    t = [round(k * 1e9 / 30) for k in range(300)]
    assert detect_gaps(t, 1e9 / 30).gaps == ()


def test_single_planted_gap():
    period = 33_333_333
    t = [k * period for k in range(10)]
    t = t[:5] + [x - 5 * period + 4 * period + 100_000_000 for x in t[5:]]
    rep = detect_gaps(t, period, 1.5)
    assert len(rep.gaps) == 1
    assert rep.gaps[0].duration_ns == 100_000_000
    assert rep.gaps[0].start == t[4] and rep.gaps[0].index == 4


@pytest.mark.parametrize("seed", range(5))
def test_planted_gaps_oracle(seed):
    rng = np.random.default_rng(seed)
    positions = sorted(rng.choice(np.arange(0, 499), size=int(rng.integers(1, 12)), replace=False).tolist())
    gaps = {p: int(rng.integers(20_000_000, 200_000_000)) for p in positions}
    t, expected = planted_gaps(1_000, 10_000_000, 500, gaps)
    rep = detect_gaps(t, 10_000_000, 1.5)
    assert [(g.index, g.duration_ns) for g in rep.gaps] == expected


@settings(max_examples=50, deadline=None)
@given(increasing, st.integers(1, 10**9))
def test_infinite_multiplier_reports_nothing(t, nominal):
    assert detect_gaps(t, nominal, math.inf).gaps == ()


@settings(max_examples=50, deadline=None)
@given(increasing, st.integers(1, 10**9), st.floats(0.1, 10))
def test_gaps_exceed_threshold(t, nominal, mult):
    rep = detect_gaps(t, nominal, mult)
    assert all(g.duration_ns > mult * nominal for g in rep.gaps)
    d = np.diff(t)
    assert len(rep.gaps) == int(np.count_nonzero(d > mult * nominal))


def test_histogram_default_layout():
    t = [round(k * 1e9 / 30) for k in range(31)]
    bins = interval_histogram(t, 1e9 / 30)
    assert len(bins) == 60
    assert bins[0].start_ns == 0 and bins[-1].end_ns == 100_000_000
    assert sum(b.count for b in bins) == 30


@settings(max_examples=100, deadline=None)
@given(increasing, st.one_of(st.none(), st.integers(1, 10**10)))
def test_histogram_covers_every_interval(t, nominal):
    bins = interval_histogram(t, nominal)
    d = np.diff(t)
    assert sum(b.count for b in bins) == d.size
    for x in d:
        assert sum(b.start_ns <= x < b.end_ns for b in bins) == 1
    for b in bins:
        assert b.count == int(np.count_nonzero((d >= b.start_ns) & (d < b.end_ns)))


def test_histogram_csv_format():
    text = histogram_csv(interval_histogram([0, 1000, 2000, 10000], 1000))
    lines = text.splitlines()
    assert lines[0] == "bin_start_ns,bin_end_ns,count"
    assert lines[1] == "0,50,0" and lines[21] == "1000,1050,2"
    assert lines[-1] == "3000,8001,1" and len(lines) == 62


def test_histogram_bins_never_narrower_than_one_ns():
    bins = interval_histogram([0, 10, 20, 100], 10)
    assert len(bins) == 61 and all(b.end_ns - b.start_ns >= 1 for b in bins)


def test_session_report_counts():
    session, _ = simulate_session(SimConfig(duration_s=60.0, seed=2))
    rep = session_report(session)
    assert rep.streams["frames"].stats.count + 1 == 1800
    assert rep.streams["imu"].stats.count + 1 == 6000
    assert rep.metadata["measured_fraction"] == 1.0
    json.dumps(rep.to_dict())


def test_session_report_empirical_and_absent_imu():
    session, _ = simulate_session(SimConfig(duration_s=1.0, empirical_optics=True))
    rep = session_report(session)
    assert rep.metadata["empirical_fraction"] == 1.0
    from dataclasses import replace

    rep = session_report(replace(session, imu_combined=()))
    assert rep.streams["imu"] is None
    assert rep.to_dict()["streams"]["imu"] == {"absent": True}


def test_session_report_raw_streams():
    session, _ = simulate_session(SimConfig(duration_s=10.0, imu_layout="raw", timestamp_jitter_std_ns=0))
    rep = session_report(session)
    assert set(rep.streams) == {"frames", "gyro", "accel"}
    assert rep.streams["accel"].stats.mean_ns == 20_000_000
    assert rep.streams["gyro"].stats.mean_ns == 10_000_000
