"""Sampling-interval statistics, gap detection and interval histograms."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ClockMismatch, NonMonotonicTimestamp, TooFewSamples
from .model import MetadataSource, Session, TimebasedInstant

DEFAULT_BINS = 60
HIST_SPAN_MULTIPLE = 3


def _as_ns(timestamps) -> np.ndarray:
    """Integer ns array from instants or plain integers; clocks must agree."""
    items = list(timestamps)
    if items and isinstance(items[0], TimebasedInstant):
        clock = items[0].clock
        if any(t.clock != clock for t in items):
            raise ClockMismatch("timestamps span several clocks")
        items = [t.t for t in items]
    return np.asarray(items, dtype=np.int64)


def _intervals(timestamps) -> tuple[np.ndarray, np.ndarray]:
    t = _as_ns(timestamps)
    if t.size < 2:
        raise TooFewSamples(f"need at least 2 timestamps, got {t.size}")
    d = np.diff(t)
    if np.any(d <= 0):
        raise NonMonotonicTimestamp(f"timestamps not strictly increasing at sample {int(np.argmax(d <= 0)) + 1}")
    return t, d


def welford(values) -> tuple[int, float, float]:
    """Single-pass ``(count, mean, population variance)``."""
    n = 0
    mean = 0.0
    m2 = 0.0
    for x in values:
        n += 1
        delta = x - mean
        mean += delta / n
        m2 += delta * (x - mean)
    return n, mean, (m2 / n if n else float("nan"))


@dataclass(frozen=True)
class IntervalStats:
    stream: str
    count: int
    mean_ns: float
    std_ns: float
    min_ns: int
    max_ns: int
    median_ns: float
    p99_ns: int
    span_ns: int
    achieved_rate_hz: float
    nominal_interval_ns: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def interval_stats(timestamps, nominal_rate_hz: Optional[float] = None, stream: str = "") -> IntervalStats:
    t, d = _intervals(timestamps)
    count, mean, var = welford(d.tolist())
    span = int(t[-1] - t[0])
    ordered = np.sort(d)
    # nearest-rank percentile keeps p99 an observed interval
    p99 = int(ordered[max(0, math.ceil(0.99 * count) - 1)])
    return IntervalStats(
        stream=stream,
        count=count,
        mean_ns=mean,
        std_ns=math.sqrt(var),
        min_ns=int(ordered[0]),
        max_ns=int(ordered[-1]),
        median_ns=float(np.median(ordered)),
        p99_ns=p99,
        span_ns=span,
        achieved_rate_hz=count / (span * 1e-9),
        nominal_interval_ns=(1e9 / nominal_rate_hz) if nominal_rate_hz else None,
    )


@dataclass(frozen=True)
class Gap:
    start: int
    duration_ns: int
    index: int


@dataclass(frozen=True)
class GapReport:
    gaps: tuple[Gap, ...]
    nominal_interval_ns: float
    multiplier: float

    @property
    def threshold_ns(self) -> float:
        return self.multiplier * self.nominal_interval_ns

    def to_dict(self) -> dict:
        return {
            "nominal_interval_ns": self.nominal_interval_ns,
            "multiplier": self.multiplier,
            "threshold_ns": self.threshold_ns if math.isfinite(self.threshold_ns) else None,
            "gaps": [{"start_ns": g.start, "duration_ns": g.duration_ns, "index": g.index} for g in self.gaps],
        }


def detect_gaps(timestamps, nominal_interval_ns, multiplier: float = 1.5) -> GapReport:
    """Report every interval longer than ``multiplier * nominal_interval_ns``.

    ``Gap.index`` is the position of the sample that opens the gap.
    """
    t, d = _intervals(timestamps)
    threshold = multiplier * nominal_interval_ns
    idx = np.flatnonzero(d > threshold) if math.isfinite(threshold) else np.zeros(0, dtype=int)
    gaps = tuple(Gap(int(t[i]), int(d[i]), int(i)) for i in idx)
    return GapReport(gaps, float(nominal_interval_ns), float(multiplier))


@dataclass(frozen=True)
class HistogramBin:
    start_ns: int
    end_ns: int
    count: int


def interval_histogram(timestamps, nominal_interval_ns=None, bins: int = DEFAULT_BINS) -> list[HistogramBin]:
    """Equal-width bins over ``[0, 3 * nominal)`` plus one overflow bin.

    Bin edges are integer ns; each bin is half-open. The overflow bin is
    only emitted when some interval reaches past the regular range, and it
    ends one past the largest interval so every interval is binned.
    """
    _, d = _intervals(timestamps)
    if nominal_interval_ns is None:
        nominal_interval_ns = float(np.median(d))
    hi = max(int(round(HIST_SPAN_MULTIPLE * nominal_interval_ns)), bins)
    edges = np.array([(i * hi) // bins for i in range(bins + 1)], dtype=np.int64)
    idx = np.searchsorted(edges, d, side="right") - 1
    counts = np.bincount(idx[idx < bins], minlength=bins)
    out = [HistogramBin(int(edges[i]), int(edges[i + 1]), int(counts[i])) for i in range(bins)]
    over = int(np.count_nonzero(d >= hi))
    if over:
        out.append(HistogramBin(hi, int(d.max()) + 1, over))
    return out


def histogram_csv(bins: Sequence[HistogramBin]) -> str:
    lines = ["bin_start_ns,bin_end_ns,count"]
    lines.extend(f"{b.start_ns},{b.end_ns},{b.count}" for b in bins)
    return "\n".join(lines) + "\n"


@dataclass
class StreamReport:
    stats: IntervalStats
    gaps: GapReport
    histogram: list[HistogramBin]
    intervals_ns: np.ndarray = field(repr=False)
    times_ns: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"stats": self.stats.to_dict(), "gaps": self.gaps.to_dict()}


@dataclass
class SessionReport:
    device: str
    os_family: str
    streams: dict[str, Optional[StreamReport]]
    metadata: dict

    def to_dict(self) -> dict:
        return {
            "device": self.device,
            "os_family": self.os_family,
            "streams": {
                name: (rep.to_dict() if rep is not None else {"absent": True}) for name, rep in self.streams.items()
            },
            "metadata": self.metadata,
        }


def _stream_report(name, times, nominal_rate_hz, multiplier) -> Optional[StreamReport]:
    t = _as_ns(times)
    if t.size < 2:
        return None
    stats = interval_stats(t, nominal_rate_hz, stream=name)
    nominal = stats.nominal_interval_ns if stats.nominal_interval_ns else stats.median_ns
    return StreamReport(
        stats=stats,
        gaps=detect_gaps(t, nominal, multiplier),
        histogram=interval_histogram(t, nominal),
        intervals_ns=np.diff(t),
        times_ns=t,
    )


def session_report(session: Session, gap_multiplier: float = 1.5) -> SessionReport:
    """Per-stream interval statistics, gaps and histograms for one session.

    Streams with fewer than two samples are marked absent.
    """
    man = session.manifest
    streams: dict[str, Optional[StreamReport]] = {
        "frames": _stream_report("frames", [f.t_start.t for f in session.frames], man.frame_rate_hz, gap_multiplier)
    }
    if session.imu_combined is not None or not session.has_raw_imu:
        streams["imu"] = _stream_report(
            "imu", [s.t.t for s in session.imu_combined or ()], man.imu_rate_hz, gap_multiplier
        )
    if session.gyro_raw is not None:
        streams["gyro"] = _stream_report("gyro", session.gyro_raw.times_ns(), man.imu_rate_hz, gap_multiplier)
    if session.accel_raw is not None:
        rate = man.accel_rate_hz or man.imu_rate_hz
        streams["accel"] = _stream_report("accel", session.accel_raw.times_ns(), rate, gap_multiplier)

    n = len(session.frames)
    measured = sum(f.metadata_source is MetadataSource.MEASURED for f in session.frames)
    metadata = {
        "frame_count": n,
        "imu_count": len(session.imu_combined) if session.imu_combined is not None else None,
        "gyro_count": len(session.gyro_raw) if session.gyro_raw is not None else None,
        "accel_count": len(session.accel_raw) if session.accel_raw is not None else None,
        "measured_optics": measured,
        "empirical_optics": n - measured,
        "measured_fraction": measured / n if n else None,
        "empirical_fraction": (n - measured) / n if n else None,
        "focus_locked": man.focus_locked,
        "exposure_locked": man.exposure_locked,
        "clock_marks": len(session.clock_marks),
    }
    return SessionReport(man.device, man.os_family, streams, metadata)
