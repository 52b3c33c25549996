"""Camera/IMU timestamp alignment.

The pieces compose into :func:`synchronize_session`:

1. fit an affine map from the camera clock to the IMU clock using the clock
   readings taken at session start and end,
2. remap every frame timestamp through it,
3. shift each frame from start-of-exposure of the first row to the middle
   of the exposure of the middle row,
4. pair raw accelerometer readings with gyro epochs by linear interpolation.

All nanosecond roundings are round-half-up and happen once per output
value; intermediates are exact rationals.

Interpolation uses the accel samples on both sides of a gyro epoch. A logger
pairing online can only see past samples, so results can differ slightly
from what a device produced in real time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    ClockMismatch,
    DegenerateMarks,
    EmptyStream,
    InvalidRecord,
    MissingClockMarks,
    MixedClockPairs,
    NonMonotonicTimestamp,
)
from .model import (
    ClockCorrespondence,
    ClockId,
    DeviceManifest,
    FrameRecord,
    ImuSample,
    RawSample,
    RawSampleStream,
    Session,
    TimebasedInstant,
    Violation,
    as_clock,
)


def round_half_up(x: Fraction) -> int:
    """Nearest integer to an exact rational, halves rounded toward +inf."""
    x = Fraction(x)
    return (2 * x.numerator + x.denominator) // (2 * x.denominator)


@dataclass(frozen=True)
class ClockMap:
    """``t_target = scale * t_source + offset_ns``, rounded to the nearest ns.

    ``scale`` is held as a float but evaluated as the exact rational it
    represents, so applying a map is deterministic to the nanosecond.
    """

    source: ClockId
    target: ClockId
    scale: float
    offset_ns: int

    def __post_init__(self):
        object.__setattr__(self, "source", as_clock(self.source))
        object.__setattr__(self, "target", as_clock(self.target))
        scale = float(self.scale)
        if not (math.isfinite(scale) and scale > 0):
            raise InvalidRecord(f"clock map scale must be finite and > 0, got {self.scale!r}")
        object.__setattr__(self, "scale", scale)
        if isinstance(self.offset_ns, bool) or not isinstance(self.offset_ns, (int, np.integer)):
            raise InvalidRecord(f"clock map offset must be integer ns, got {self.offset_ns!r}")
        object.__setattr__(self, "offset_ns", int(self.offset_ns))
        p, q = scale.as_integer_ratio()
        object.__setattr__(self, "_ratio", (p, q))

    @classmethod
    def identity(cls, clock) -> "ClockMap":
        clock = as_clock(clock)
        return cls(clock, clock, 1.0, 0)

    @property
    def is_identity(self) -> bool:
        return self.source == self.target and self.scale == 1.0 and self.offset_ns == 0

    @property
    def drift_ppm(self) -> float:
        return (self.scale - 1.0) * 1e6

    def apply_ns(self, t: int) -> int:
        p, q = self._ratio
        return (2 * (p * t + self.offset_ns * q) + q) // (2 * q)

    def __call__(self, instant: TimebasedInstant) -> TimebasedInstant:
        if instant.clock != self.source:
            raise ClockMismatch(f"map expects {self.source} instants, got {instant.clock}")
        return TimebasedInstant(self.apply_ns(instant.t), self.target)

    def inverse(self) -> "ClockMap":
        return ClockMap(
            self.target,
            self.source,
            1.0 / self.scale,
            round_half_up(Fraction(-self.offset_ns) / Fraction(self.scale)),
        )

    def to_dict(self) -> dict:
        return {
            "source": self.source.name,
            "target": self.target.name,
            "scale": self.scale,
            "offset_ns": self.offset_ns,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClockMap":
        return cls(ClockId(d["source"]), ClockId(d["target"]), float(d["scale"]), int(d["offset_ns"]))


def fit_clock_map(marks: Sequence[ClockCorrespondence]) -> ClockMap:
    """Fit the map from the marks' ``t_a`` clock to their ``t_b`` clock.

    One mark fixes a pure offset, two marks the exact line through both,
    three or more a least-squares line (squared residuals in ns).
    """
    marks = list(marks)
    if not marks:
        raise MissingClockMarks("at least one clock mark is required")
    pair = marks[0].clock_pair
    if any(m.clock_pair != pair for m in marks):
        raise MixedClockPairs("clock marks relate different clock pairs")
    source, target = pair
    a = [m.t_a.t for m in marks]
    b = [m.t_b.t for m in marks]
    if len(marks) == 1:
        return ClockMap(source, target, 1.0, b[0] - a[0])
    if len(set(a)) != len(a):
        raise DegenerateMarks("clock marks share identical source readings")

    n = len(a)
    sa, sb = sum(a), sum(b)
    sxx = n * sum(x * x for x in a) - sa * sa
    sxy = n * sum(x * y for x, y in zip(a, b)) - sa * sb
    slope = Fraction(sxy, sxx)
    if slope <= 0:
        raise DegenerateMarks("clock marks do not describe an increasing map")
    scale = float(slope)
    offset = round_half_up(Fraction(sb, n) - Fraction(scale) * Fraction(sa, n))
    return ClockMap(source, target, scale, offset)


def _remap_one(item, cmap: ClockMap):
    if isinstance(item, TimebasedInstant):
        return cmap(item)
    if isinstance(item, FrameRecord):
        return FrameRecord(
            item.index,
            cmap(item.t_start),
            item.exposure_ns,
            item.readout_ns,
            item.focal_px,
            item.principal_px,
            item.metadata_source,
        )
    if isinstance(item, ImuSample):
        return ImuSample(cmap(item.t), item.gyro, item.accel)
    if isinstance(item, RawSample):
        return RawSample(cmap(item.t), item.value)
    raise TypeError(f"cannot remap {type(item).__name__}")


def remap_stream(stream, cmap: ClockMap):
    """Move every timestamp in ``stream`` onto ``cmap.target``.

    Accepts a :class:`RawSampleStream` or a sequence of frames, IMU samples,
    raw samples or bare instants, and returns the same shape.
    """
    if isinstance(stream, RawSampleStream):
        if stream.clock != cmap.source:
            raise ClockMismatch(f"stream is on {stream.clock}, map expects {cmap.source}")
        return RawSampleStream(stream.kind, cmap.target, tuple(remap_stream(stream.samples, cmap)))
    items = tuple(stream)
    if cmap.is_identity:
        for item in items:
            clock = item.clock if isinstance(item, TimebasedInstant) else _instant_of(item).clock
            if clock != cmap.source:
                raise ClockMismatch(f"stream item on {clock}, map expects {cmap.source}")
        return items
    return tuple(_remap_one(item, cmap) for item in items)


def _instant_of(item) -> TimebasedInstant:
    if isinstance(item, FrameRecord):
        return item.t_start
    return item.t


def center_frame_time(frame: FrameRecord) -> TimebasedInstant:
    """Mid-exposure instant of the middle sensor row."""
    return frame.t_start + (frame.exposure_ns + frame.readout_ns + 1) // 2


@dataclass(frozen=True)
class DropReport:
    """Gyro epochs discarded because no accel sample brackets them."""

    before: int = 0
    after: int = 0

    @property
    def total(self) -> int:
        return self.before + self.after


def _check_increasing(times: np.ndarray, what: str):
    if times.size > 1 and np.any(np.diff(times) <= 0):
        i = int(np.argmax(np.diff(times) <= 0)) + 1
        raise NonMonotonicTimestamp(f"{what} timestamps not strictly increasing at sample {i}")


def interpolate_accel_at_gyro(gyro: RawSampleStream, accel: RawSampleStream) -> tuple[tuple[ImuSample, ...], DropReport]:
    """Pair each gyro reading with accel linearly interpolated at its epoch.

    Gyro epochs outside the accel time span are dropped, never extrapolated.
    """
    if gyro.clock != accel.clock:
        raise ClockMismatch(f"gyro on {gyro.clock}, accel on {accel.clock}")
    if len(gyro) == 0:
        raise EmptyStream("gyro stream has no samples")
    tg = gyro.times_ns()
    ta = accel.times_ns()
    _check_increasing(tg, "gyro")
    _check_increasing(ta, "accel")
    if ta.size == 0:
        return (), DropReport(before=len(tg))

    keep = (tg >= ta[0]) & (tg <= ta[-1])
    before = int(np.count_nonzero(tg < ta[0]))
    after = int(np.count_nonzero(tg > ta[-1]))
    t = tg[keep]
    va = accel.values()

    lo = np.searchsorted(ta, t, side="right") - 1
    hi = np.minimum(lo + 1, ta.size - 1)
    t0, t1 = ta[lo], ta[hi]
    exact = t0 == t
    # exact knots take w = 0 and a zero-width bracket would divide by zero
    den = np.where(exact, 1, t1 - t0)
    w = np.where(exact, 0.0, (t - t0) / den)
    a0, a1 = va[lo], va[hi]
    out = a0 + w[:, None] * (a1 - a0)
    out = np.clip(out, np.minimum(a0, a1), np.maximum(a0, a1))

    clock = gyro.clock
    gyro_vals = [s.value for s, k in zip(gyro.samples, keep.tolist()) if k]
    samples = tuple(
        ImuSample(TimebasedInstant(ti, clock), g, tuple(a))
        for ti, g, a in zip(t.tolist(), gyro_vals, out.tolist())
    )
    return samples, DropReport(before, after)


@dataclass(frozen=True)
class SyncedSession:
    """A session with every stream on one clock.

    ``frames[i].t_start`` holds the centered (mid-exposure, middle row)
    time; exposure and readout are carried along for export metadata.
    """

    manifest: DeviceManifest
    frames: tuple[FrameRecord, ...]
    imu_combined: tuple[ImuSample, ...]
    clock_map: ClockMap
    dropped: DropReport = DropReport()

    def clocks(self) -> set[ClockId]:
        found = {f.t_start.clock for f in self.frames}
        found.update(s.t.clock for s in self.imu_combined)
        return found

    def violations(self) -> list[Violation]:
        out = []
        clocks = self.clocks()
        if len(clocks) > 1:
            out.append(Violation("clock-mixing", "synced", None, f"streams carry clocks {sorted(map(str, clocks))}"))
        for name, times in (
            ("frames", [f.t_start.t for f in self.frames]),
            ("imu", [s.t.t for s in self.imu_combined]),
        ):
            for i in range(1, len(times)):
                if times[i] <= times[i - 1]:
                    out.append(Violation("non-monotonic", name, i, f"t={times[i]} after {times[i - 1]}"))
        return out


def _orient_marks(marks: Iterable[ClockCorrespondence], source: ClockId, target: ClockId):
    out = []
    for m in marks:
        if m.clock_pair == (source, target):
            out.append(m)
        elif m.clock_pair == (target, source):
            out.append(ClockCorrespondence(m.label, m.t_b, m.t_a))
        else:
            raise ClockMismatch(f"clock mark relates {m.t_a.clock}/{m.t_b.clock}, expected {source}/{target}")
    return out


def synchronize_session(session: Session, target_clock: Optional[ClockId] = None) -> SyncedSession:
    man = session.manifest
    target = man.imu_clock if target_clock is None else as_clock(target_clock)
    if target != man.imu_clock:
        raise ClockMismatch(f"target clock {target} must be the IMU clock {man.imu_clock}")

    if man.camera_clock == target:
        cmap = ClockMap.identity(target)
    else:
        if not session.clock_marks:
            raise MissingClockMarks(f"frames on {man.camera_clock} but IMU on {target} and no clock marks")
        cmap = fit_clock_map(_orient_marks(session.clock_marks, man.camera_clock, target))

    for f in session.frames:
        if f.t_start.clock != cmap.source:
            raise ClockMismatch(f"frame {f.index} on {f.t_start.clock}, expected {cmap.source}")
    # remap and center in one pass; same result as remap_stream then center_frame_time
    frames = tuple(
        FrameRecord(
            f.index,
            TimebasedInstant(cmap.apply_ns(f.t_start.t) + (f.exposure_ns + f.readout_ns + 1) // 2, target),
            f.exposure_ns,
            f.readout_ns,
            f.focal_px,
            f.principal_px,
            f.metadata_source,
        )
        for f in session.frames
    )

    dropped = DropReport()
    if session.imu_combined or not session.has_raw_imu:
        imu = tuple(session.imu_combined or ())
        for s in imu:
            if s.t.clock != target:
                raise ClockMismatch(f"IMU sample on {s.t.clock}, expected {target}")
    else:
        imu, dropped = interpolate_accel_at_gyro(session.gyro_raw, session.accel_raw)

    new_manifest = DeviceManifest(
        device=man.device,
        os_family=man.os_family,
        camera_clock=target,
        imu_clock=target,
        frame_rate_hz=man.frame_rate_hz,
        imu_rate_hz=man.imu_rate_hz,
        accel_rate_hz=man.accel_rate_hz,
        focus_locked=man.focus_locked,
        exposure_locked=man.exposure_locked,
        video=man.video,
    )
    return SyncedSession(new_manifest, frames, imu, cmap, dropped)
