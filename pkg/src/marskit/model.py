"""Domain types for visual-inertial recordings.

Every timestamp is an integer number of nanoseconds tagged with the clock it
was read from. Records are immutable; cross-record invariants (ordering,
clock consistency) are reported by :func:`validate_session` rather than
raised, so a broken recording can still be loaded and inspected.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ClockMismatch, InvalidRecord

Vec3 = tuple[float, float, float]


@dataclass(frozen=True, slots=True)
class ClockId:
    name: str

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise InvalidRecord("clock name must be a non-empty string")

    def __str__(self):
        return self.name


def as_clock(clock) -> ClockId:
    return clock if isinstance(clock, ClockId) else ClockId(clock)


@dataclass(frozen=True, slots=True)
class TimebasedInstant:
    """Signed integer nanoseconds on a named clock.

    Ordering and subtraction are only defined between instants on the same
    clock; anything else raises :class:`ClockMismatch`.
    """

    t: int
    clock: ClockId

    def __post_init__(self):
        if type(self.t) is not int:
            if not isinstance(self.t, (int, np.integer)) or isinstance(self.t, bool):
                raise InvalidRecord(f"timestamp must be integer nanoseconds, got {self.t!r}")
            object.__setattr__(self, "t", int(self.t))

    def _check(self, other: "TimebasedInstant"):
        if not isinstance(other, TimebasedInstant):
            return NotImplemented
        if other.clock != self.clock:
            raise ClockMismatch(f"cannot combine {self.clock} and {other.clock} instants")
        return None

    def __sub__(self, other):
        if isinstance(other, TimebasedInstant):
            self._check(other)
            return self.t - other.t
        if isinstance(other, (int, np.integer)):
            return TimebasedInstant(self.t - int(other), self.clock)
        return NotImplemented

    def __add__(self, ns):
        if isinstance(ns, (int, np.integer)) and not isinstance(ns, bool):
            return TimebasedInstant(self.t + int(ns), self.clock)
        return NotImplemented

    __radd__ = __add__

    def __lt__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return self.t < other.t

    def __le__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return self.t <= other.t

    def __gt__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return self.t > other.t

    def __ge__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return self.t >= other.t


def _vec3(value, what) -> Vec3:
    if type(value) is tuple and len(value) == 3:
        x, y, z = value
        # a finite sum implies finite components; overflow falls through
        if type(x) is float and type(y) is float and type(z) is float and math.isfinite(x + y + z):
            return value
    try:
        x, y, z = (float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise InvalidRecord(f"{what} must be a 3-vector: {exc}") from None
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
        raise InvalidRecord(f"{what} has non-finite components: {(x, y, z)}")
    return (x, y, z)


def _pair(pair, what) -> tuple[float, float]:
    try:
        a, b = pair
    except (TypeError, ValueError):
        raise InvalidRecord(f"frame {what} must be a pair, got {pair!r}") from None
    if type(a) is not float:
        a = float(a)
    if type(b) is not float:
        b = float(b)
    if not (math.isfinite(a) and math.isfinite(b)):
        raise InvalidRecord(f"frame {what} must be finite, got {pair!r}")
    return a, b


class SensorKind(str, enum.Enum):
    GYRO = "gyro"
    ACCEL = "accel"


class MetadataSource(str, enum.Enum):
    MEASURED = "measured"
    # the device did not report optics; values are stock defaults
    EMPIRICAL = "empirical"


class MarkLabel(str, enum.Enum):
    SESSION_START = "session-start"
    SESSION_END = "session-end"
    EXTRA = "extra"


@dataclass(frozen=True, slots=True)
class ImuSample:
    """Gyro (rad/s) and accelerometer (m/s^2) reading at one gyro epoch."""

    t: TimebasedInstant
    gyro: Vec3
    accel: Vec3

    def __post_init__(self):
        object.__setattr__(self, "gyro", _vec3(self.gyro, "gyro"))
        object.__setattr__(self, "accel", _vec3(self.accel, "accel"))


@dataclass(frozen=True, slots=True)
class RawSample:
    t: TimebasedInstant
    value: Vec3

    def __post_init__(self):
        object.__setattr__(self, "value", _vec3(self.value, "sample value"))


@dataclass(frozen=True)
class RawSampleStream:
    """One sensor's readings before gyro/accel pairing."""

    kind: SensorKind
    clock: ClockId
    samples: tuple[RawSample, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", SensorKind(self.kind))
        object.__setattr__(self, "clock", as_clock(self.clock))
        object.__setattr__(self, "samples", tuple(self.samples))

    @classmethod
    def from_arrays(cls, kind, clock, times_ns, values):
        clock = as_clock(clock)
        samples = tuple(
            RawSample(TimebasedInstant(int(t), clock), tuple(v))
            for t, v in zip(np.asarray(times_ns).tolist(), np.asarray(values, dtype=float).tolist())
        )
        return cls(kind, clock, samples)

    def __len__(self):
        return len(self.samples)

    def times_ns(self) -> np.ndarray:
        return np.fromiter((s.t.t for s in self.samples), dtype=np.int64, count=len(self.samples))

    def values(self) -> np.ndarray:
        if not self.samples:
            return np.zeros((0, 3))
        return np.array([s.value for s in self.samples], dtype=float)


@dataclass(frozen=True, slots=True)
class FrameRecord:
    """Per-frame timestamp and optics.

    ``t_start`` marks the start of exposure of the first sensor row.
    ``readout_ns`` is the rolling-shutter skew (first row to last row).
    """

    index: int
    t_start: TimebasedInstant
    exposure_ns: int
    readout_ns: int
    focal_px: Optional[tuple[float, float]] = None
    principal_px: Optional[tuple[float, float]] = None
    metadata_source: MetadataSource = MetadataSource.MEASURED

    def __post_init__(self):
        for name in ("index", "exposure_ns", "readout_ns"):
            value = getattr(self, name)
            if type(value) is not int:
                if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                    raise InvalidRecord(f"frame {name} must be an integer, got {value!r}")
                value = int(value)
                object.__setattr__(self, name, value)
            if value < 0:
                raise InvalidRecord(f"frame {name} must be >= 0, got {value}")
        for name in ("focal_px", "principal_px"):
            pair = getattr(self, name)
            if pair is not None:
                a, b = _pair(pair, name)
                if type(pair) is not tuple or a is not pair[0] or b is not pair[1]:
                    object.__setattr__(self, name, (a, b))
        if type(self.metadata_source) is not MetadataSource:
            object.__setattr__(self, "metadata_source", MetadataSource(self.metadata_source))


@dataclass(frozen=True, slots=True)
class ClockCorrespondence:
    """Simultaneous readings of two clocks."""

    label: MarkLabel
    t_a: TimebasedInstant
    t_b: TimebasedInstant

    def __post_init__(self):
        object.__setattr__(self, "label", MarkLabel(self.label))
        if self.t_a.clock == self.t_b.clock:
            raise InvalidRecord(f"clock mark relates {self.t_a.clock} to itself")

    @property
    def clock_pair(self) -> tuple[ClockId, ClockId]:
        return (self.t_a.clock, self.t_b.clock)


@dataclass(frozen=True)
class DeviceManifest:
    device: str
    os_family: str
    camera_clock: ClockId
    imu_clock: ClockId
    frame_rate_hz: Optional[float] = None
    imu_rate_hz: Optional[float] = None
    accel_rate_hz: Optional[float] = None
    # focus distance / exposure locked before recording started
    focus_locked: Optional[bool] = None
    exposure_locked: Optional[bool] = None
    video: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "camera_clock", as_clock(self.camera_clock))
        object.__setattr__(self, "imu_clock", as_clock(self.imu_clock))


@dataclass(frozen=True)
class Session:
    manifest: DeviceManifest
    frames: tuple[FrameRecord, ...] = ()
    gyro_raw: Optional[RawSampleStream] = None
    accel_raw: Optional[RawSampleStream] = None
    imu_combined: Optional[tuple[ImuSample, ...]] = None
    clock_marks: tuple[ClockCorrespondence, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(self, "clock_marks", tuple(self.clock_marks))
        if self.imu_combined is not None:
            object.__setattr__(self, "imu_combined", tuple(self.imu_combined))

    @property
    def has_raw_imu(self) -> bool:
        return self.gyro_raw is not None and self.accel_raw is not None


@dataclass(frozen=True)
class Violation:
    kind: str
    stream: str
    index: Optional[int]
    message: str

    def __str__(self):
        where = self.stream if self.index is None else f"{self.stream}[{self.index}]"
        return f"{self.kind}: {where}: {self.message}"


def _check_times(instants: Sequence[TimebasedInstant], clock: ClockId, stream: str, out: list):
    prev = None
    for i, inst in enumerate(instants):
        if inst.clock != clock:
            out.append(Violation("clock-mixing", stream, i, f"clock {inst.clock} differs from {clock}"))
            continue
        if prev is not None and inst.t <= prev:
            out.append(
                Violation("non-monotonic", stream, i, f"t={inst.t} does not increase past previous t={prev}")
            )
        prev = inst.t


def validate_session(session: Session) -> list[Violation]:
    """Return every invariant violation in ``session``; empty means valid."""
    out: list[Violation] = []
    man = session.manifest

    _check_times([f.t_start for f in session.frames], man.camera_clock, "frames", out)
    prev_index = None
    for i, f in enumerate(session.frames):
        if prev_index is not None and f.index <= prev_index:
            out.append(Violation("index-order", "frames", i, f"index {f.index} after {prev_index}"))
        prev_index = f.index
        if f.exposure_ns < 0 or f.readout_ns < 0:
            out.append(Violation("negative-duration", "frames", i, "negative exposure or readout"))

    raw = [s for s in (session.gyro_raw, session.accel_raw) if s is not None]
    if len(raw) == 1:
        out.append(Violation("incomplete-raw-imu", raw[0].kind.value, None, "raw gyro and accel must come together"))
    for stream in raw:
        name = stream.kind.value
        if stream.clock != man.imu_clock:
            out.append(Violation("clock-mixing", name, None, f"stream clock {stream.clock} is not IMU clock {man.imu_clock}"))
        _check_times([s.t for s in stream.samples], man.imu_clock, name, out)
    if session.imu_combined is not None:
        _check_times([s.t for s in session.imu_combined], man.imu_clock, "imu", out)

    has_raw = session.has_raw_imu and len(session.gyro_raw) > 0 and len(session.accel_raw) > 0
    has_combined = bool(session.imu_combined)
    if not (has_raw or has_combined):
        out.append(Violation("missing-imu", "imu", None, "no IMU samples present"))

    pairs = {m.clock_pair for m in session.clock_marks}
    if len(pairs) > 1:
        out.append(Violation("mixed-clock-pairs", "clockmarks", None, f"marks relate several clock pairs: {sorted(map(str, pairs))}"))
    expected = {man.camera_clock, man.imu_clock}
    for i, m in enumerate(session.clock_marks):
        if set(m.clock_pair) != expected:
            out.append(
                Violation("clock-mixing", "clockmarks", i, f"mark relates {m.t_a.clock}/{m.t_b.clock}, expected camera/IMU clocks")
            )
    if man.camera_clock != man.imu_clock and not session.clock_marks:
        out.append(Violation("missing-clock-marks", "clockmarks", None, "camera and IMU clocks differ but no marks recorded"))
    return out
