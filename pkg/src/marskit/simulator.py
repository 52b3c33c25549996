"""Deterministic synthetic recordings with known clock parameters.

The IMU runs on the true clock. Frame timestamps are read from a camera
clock related to it by ``t_cam = (t_true + offset) * (1 + drift_ppm * 1e-6)``.
Two exact clock marks are written at session start and end.

Random numbers
--------------
All randomness comes from SplitMix64 (Steele, Lea and Flood 2014) so output
is identical on every platform and easy to reproduce elsewhere. Each purpose
(``"imu-jitter"``, ``"frame-dropout"``...) gets its own sequence whose state
is ``mix64(seed ^ mix64(crc32(purpose) + attempt * 0xD1B54A32D192ED03))``;
draw ``i`` of a sequence is ``mix64(state + (i + 1) * 0x9E3779B97F4A7C15)``,
used for sample ``i``. Uniforms are the top 53 bits scaled to [0, 1).
Gaussians use Box-Muller on the uniforms of two sub-sequences; draws beyond
4 sigma are redrawn from the next ``attempt``.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import InvalidConfig, IoFailure
from .formats import write_session
from .model import (
    ClockCorrespondence,
    ClockId,
    DeviceManifest,
    FrameRecord,
    ImuSample,
    MetadataSource,
    RawSampleStream,
    Session,
    TimebasedInstant,
)
from .sync import ClockMap, round_half_up

GRAVITY = (0.0, 0.0, 9.81)
TRUNCATE_SIGMA = 4.0

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_ATTEMPT_STEP = 0xD1B54A32D192ED03
_MASK64 = (1 << 64) - 1


def mix64(z):
    """SplitMix64 output function on uint64 arrays (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


class SplitMixStreams:
    """Named, counter-based random sequences derived from one seed."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64

    def _state(self, purpose: str, attempt: int) -> np.uint64:
        salt = (zlib.crc32(purpose.encode()) + attempt * _ATTEMPT_STEP) & _MASK64
        return mix64(np.uint64(self.seed) ^ mix64(np.uint64(salt)))[()]

    def raw(self, purpose: str, n: int, attempt: int = 0) -> np.ndarray:
        state = self._state(purpose, attempt)
        counter = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            return mix64(state + counter * _GOLDEN)

    def uniform(self, purpose: str, n: int, attempt: int = 0) -> np.ndarray:
        return (self.raw(purpose, n, attempt) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, purpose: str, n: int) -> np.ndarray:
        out = np.empty(n)
        todo = np.arange(n)
        attempt = 0
        while todo.size:
            u1 = self.uniform(purpose + "/r", n, attempt)[todo]
            u2 = self.uniform(purpose + "/theta", n, attempt)[todo]
            z = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
            ok = np.abs(z) <= TRUNCATE_SIGMA
            out[todo[ok]] = z[ok]
            todo = todo[~ok]
            attempt += 1
        return out


@dataclass(frozen=True)
class MotionProfile:
    """Static gravity, or per-axis sinusoids on gyro and specific force."""

    kind: str = "static-gravity"
    gyro_amplitude: tuple[float, float, float] = (0.0, 0.0, 0.0)
    accel_amplitude: tuple[float, float, float] = (0.0, 0.0, 0.0)
    frequency_hz: tuple[float, float, float] = (0.0, 0.0, 0.0)
    phase_rad: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("static-gravity", "sinusoidal"):
            raise InvalidConfig(f"unknown motion profile {self.kind!r}")
        for name in ("gyro_amplitude", "accel_amplitude", "frequency_hz", "phase_rad"):
            value = tuple(float(v) for v in getattr(self, name))
            if len(value) != 3 or not all(math.isfinite(v) for v in value):
                raise InvalidConfig(f"motion {name} must be three finite numbers")
            object.__setattr__(self, name, value)

    def _wave(self, amplitude, t_ns: np.ndarray) -> np.ndarray:
        t = np.asarray(t_ns, dtype=np.float64) * 1e-9
        out = np.zeros((t.size, 3))
        if self.kind == "static-gravity":
            return out
        for i in range(3):
            if amplitude[i] != 0.0:
                out[:, i] = amplitude[i] * np.sin(2.0 * np.pi * self.frequency_hz[i] * t + self.phase_rad[i])
        return out

    def gyro(self, t_ns) -> np.ndarray:
        return self._wave(self.gyro_amplitude, t_ns)

    def accel(self, t_ns) -> np.ndarray:
        return self._wave(self.accel_amplitude, t_ns) + np.array(GRAVITY)

    def accel_second_derivative_bound(self) -> float:
        """Largest ``|d^2 accel_i / dt^2|`` over all axes, in m/s^4."""
        if self.kind == "static-gravity":
            return 0.0
        return max(abs(a) * (2.0 * math.pi * f) ** 2 for a, f in zip(self.accel_amplitude, self.frequency_hz))


@dataclass(frozen=True)
class SimConfig:
    duration_s: float = 10.0
    imu_rate_hz: float = 100.0
    frame_rate_hz: float = 30.0
    # None means half the gyro rate
    accel_rate_hz: Optional[float] = None
    exposure_ns: int = 5_000_000
    readout_ns: int = 30_000_000
    camera_clock_offset_ns: int = 30_000_000
    camera_clock_drift_ppm: float = 10.0
    timestamp_jitter_std_ns: int = 500_000
    dropout_prob: float = 0.0
    motion: MotionProfile = field(default_factory=MotionProfile)
    seed: int = 0
    imu_layout: str = "combined"
    extra_marks: int = 0
    device: str = "simulated"
    os_family: str = "android"
    camera_clock: str = "monotonic"
    imu_clock: str = "boottime"
    focal_px: tuple[float, float] = (1000.0, 1000.0)
    principal_px: tuple[float, float] = (640.0, 360.0)
    empirical_optics: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        def bad(msg):
            raise InvalidConfig(msg)

        if not (math.isfinite(self.duration_s) and self.duration_s >= 0):
            bad(f"duration_s must be >= 0, got {self.duration_s}")
        for name in ("imu_rate_hz", "frame_rate_hz"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                bad(f"{name} must be > 0, got {v}")
        if self.accel_rate_hz is not None and not (math.isfinite(self.accel_rate_hz) and self.accel_rate_hz > 0):
            bad(f"accel_rate_hz must be > 0, got {self.accel_rate_hz}")
        if not (0.0 <= self.dropout_prob < 1.0):
            bad(f"dropout_prob must be in [0, 1), got {self.dropout_prob}")
        for name in ("timestamp_jitter_std_ns", "exposure_ns", "readout_ns", "extra_marks"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                bad(f"{name} must be a non-negative integer, got {v!r}")
        if isinstance(self.camera_clock_offset_ns, bool) or not isinstance(self.camera_clock_offset_ns, int):
            bad("camera_clock_offset_ns must be an integer")
        if not math.isfinite(self.camera_clock_drift_ppm) or 1 + self.camera_clock_drift_ppm * 1e-6 <= 0:
            bad(f"camera_clock_drift_ppm out of range: {self.camera_clock_drift_ppm}")
        if self.imu_layout not in ("combined", "raw"):
            bad(f"imu_layout must be combined or raw, got {self.imu_layout!r}")
        if not self.camera_clock or not self.imu_clock or self.camera_clock == self.imu_clock:
            bad("camera_clock and imu_clock must be distinct non-empty names")
        if not isinstance(self.motion, MotionProfile):
            bad("motion must be a MotionProfile")
        if not 0 <= self.seed < 2**64:
            bad("seed must fit in 64 unsigned bits")

    @property
    def effective_accel_rate_hz(self) -> float:
        return self.accel_rate_hz if self.accel_rate_hz is not None else self.imu_rate_hz / 2.0

    @property
    def duration_ns(self) -> int:
        return round_half_up(Fraction(self.duration_s) * 10**9)

    @property
    def camera_scale(self) -> float:
        return 1.0 + self.camera_clock_drift_ppm * 1e-6

    def camera_time(self, t_true: int) -> int:
        return round_half_up((t_true + self.camera_clock_offset_ns) * Fraction(self.camera_scale))


@dataclass
class StreamTruth:
    """Schedule of one stream: nominal times and the times actually sampled."""

    nominal_ns: np.ndarray
    true_ns: np.ndarray
    indices: np.ndarray
    dropped: int
    bumps: int

    def summary(self, rate_hz: float) -> dict:
        return {
            "rate_hz": rate_hz,
            "count": int(self.true_ns.size),
            "dropped": self.dropped,
            "collision_bumps": self.bumps,
            "first_nominal_ns": int(self.nominal_ns[0]) if self.nominal_ns.size else None,
            "last_nominal_ns": int(self.nominal_ns[-1]) if self.nominal_ns.size else None,
            "nominal_period_ns": 1e9 / rate_hz,
        }


@dataclass
class SimGroundTruth:
    clock_map: ClockMap
    offset_ns: int
    drift_ppm: float
    seed: int
    frames: StreamTruth
    gyro: StreamTruth
    accel: Optional[StreamTruth]
    motion: MotionProfile
    config: SimConfig

    def frame_true_mid_exposure_ns(self, nominal: bool = True) -> np.ndarray:
        base = self.frames.nominal_ns if nominal else self.frames.true_ns
        c = self.config
        return base + (c.exposure_ns + c.readout_ns + 1) // 2

    def to_dict(self) -> dict:
        c = self.config
        return {
            "offset_ns": self.offset_ns,
            "drift_ppm": self.drift_ppm,
            "seed": self.seed,
            "clock_map": self.clock_map.to_dict(),
            "exposure_ns": c.exposure_ns,
            "readout_ns": c.readout_ns,
            "timestamp_jitter_std_ns": c.timestamp_jitter_std_ns,
            "dropout_prob": c.dropout_prob,
            "motion": asdict(self.motion),
            "nominal_times": {
                "frames": self.frames.summary(c.frame_rate_hz),
                "gyro": self.gyro.summary(c.imu_rate_hz),
                "accel": self.accel.summary(c.effective_accel_rate_hz) if self.accel is not None else None,
            },
        }


def _nominal_schedule(rate_hz: float, duration_ns: int, phase: Fraction = Fraction(0)) -> np.ndarray:
    period = Fraction(10**9) / Fraction(rate_hz)
    span = Fraction(duration_ns) - phase
    n = max(0, math.ceil(span / period))
    p, q = period.numerator, period.denominator
    a, b = phase.numerator, phase.denominator
    # round_half_up(a/b + k*p/q) in integers
    den = b * q
    return np.array([(2 * (a * q + k * p * b) + den) // (2 * den) for k in range(n)], dtype=np.int64)


def _realize(nominal: np.ndarray, cfg: SimConfig, rng: SplitMixStreams, name: str) -> StreamTruth:
    n = nominal.size
    indices = np.arange(n, dtype=np.int64)
    t = nominal.copy()
    if cfg.timestamp_jitter_std_ns > 0 and n:
        jitter = np.floor(rng.normal(f"{name}-jitter", n) * cfg.timestamp_jitter_std_ns + 0.5)
        t = t + jitter.astype(np.int64)
    keep = np.ones(n, dtype=bool)
    if cfg.dropout_prob > 0 and n:
        keep = rng.uniform(f"{name}-dropout", n) >= cfg.dropout_prob
    t, indices, nominal = t[keep], indices[keep], nominal[keep]
    t = np.sort(t, kind="stable")
    # strict increase: t'[i] = max(t[i], t'[i-1] + 1)
    ramp = np.arange(t.size, dtype=np.int64)
    bumped = np.maximum.accumulate(t - ramp) + ramp if t.size else t
    bumps = int(np.count_nonzero(bumped != t))
    return StreamTruth(nominal, bumped, indices, int(n - keep.sum()), bumps)


def _schedules(cfg: SimConfig):
    rng = SplitMixStreams(cfg.seed)
    dur = cfg.duration_ns
    frames = _realize(_nominal_schedule(cfg.frame_rate_hz, dur), cfg, rng, "frame")
    gyro = _realize(_nominal_schedule(cfg.imu_rate_hz, dur), cfg, rng, "imu")
    accel_rate = cfg.effective_accel_rate_hz
    half_period = Fraction(10**9) / Fraction(accel_rate) / 2
    accel = _realize(_nominal_schedule(accel_rate, dur, half_period), cfg, rng, "accel")
    return frames, gyro, accel


def emit_raw_streams(config: SimConfig) -> tuple[RawSampleStream, RawSampleStream]:
    """Gyro at the IMU rate and accel at its own rate, half a period late.

    Values are the analytic motion signals evaluated at each sampled epoch.
    """
    config.validate()
    _, gyro, accel = _schedules(config)
    return _raw_pair(config, gyro, accel)


def _raw_pair(cfg: SimConfig, gyro: StreamTruth, accel: StreamTruth):
    clock = ClockId(cfg.imu_clock)
    g = RawSampleStream.from_arrays("gyro", clock, gyro.true_ns, cfg.motion.gyro(gyro.true_ns))
    a = RawSampleStream.from_arrays("accel", clock, accel.true_ns, cfg.motion.accel(accel.true_ns))
    return g, a


def simulate_session(config: SimConfig) -> tuple[Session, SimGroundTruth]:
    cfg = config
    cfg.validate()
    cam_clock, imu_clock = ClockId(cfg.camera_clock), ClockId(cfg.imu_clock)
    frames_truth, gyro_truth, accel_truth = _schedules(cfg)

    source = MetadataSource.EMPIRICAL if cfg.empirical_optics else MetadataSource.MEASURED
    frames = tuple(
        FrameRecord(
            index=int(j),
            t_start=TimebasedInstant(cfg.camera_time(int(t)), cam_clock),
            exposure_ns=cfg.exposure_ns,
            readout_ns=cfg.readout_ns,
            focal_px=cfg.focal_px,
            principal_px=cfg.principal_px,
            metadata_source=source,
        )
        for j, t in zip(frames_truth.indices.tolist(), frames_truth.true_ns.tolist())
    )

    gyro_raw = accel_raw = imu = None
    if cfg.imu_layout == "raw":
        gyro_raw, accel_raw = _raw_pair(cfg, gyro_truth, accel_truth)
    else:
        t = gyro_truth.true_ns
        gv, av = cfg.motion.gyro(t).tolist(), cfg.motion.accel(t).tolist()
        imu = tuple(
            ImuSample(TimebasedInstant(ti, imu_clock), tuple(g), tuple(a)) for ti, g, a in zip(t.tolist(), gv, av)
        )
        accel_truth = None

    dur = cfg.duration_ns
    mark_times = [0] + [dur * (k + 1) // (cfg.extra_marks + 1) for k in range(cfg.extra_marks)] + [dur]
    labels = ["session-start"] + ["extra"] * cfg.extra_marks + ["session-end"]
    marks = tuple(
        ClockCorrespondence(label, TimebasedInstant(cfg.camera_time(t), cam_clock), TimebasedInstant(t, imu_clock))
        for label, t in zip(labels, mark_times)
    )

    manifest = DeviceManifest(
        device=cfg.device,
        os_family=cfg.os_family,
        camera_clock=cam_clock,
        imu_clock=imu_clock,
        frame_rate_hz=float(cfg.frame_rate_hz),
        imu_rate_hz=float(cfg.imu_rate_hz),
        accel_rate_hz=float(cfg.effective_accel_rate_hz) if cfg.imu_layout == "raw" else None,
        focus_locked=True,
        exposure_locked=True,
    )
    session = Session(manifest, frames, gyro_raw, accel_raw, imu, marks)

    truth = SimGroundTruth(
        clock_map=ClockMap(cam_clock, imu_clock, 1.0 / cfg.camera_scale, -cfg.camera_clock_offset_ns),
        offset_ns=cfg.camera_clock_offset_ns,
        drift_ppm=cfg.camera_clock_drift_ppm,
        seed=cfg.seed,
        frames=frames_truth,
        gyro=gyro_truth,
        accel=accel_truth,
        motion=cfg.motion,
        config=cfg,
    )
    return session, truth


def write_simulation(session: Session, truth: SimGroundTruth, root) -> None:
    """Write the session layout plus a ``groundtruth.json`` sidecar."""
    write_session(session, root)
    try:
        (Path(root) / "groundtruth.json").write_text(
            json.dumps(truth.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
        )
    except OSError as exc:
        raise IoFailure(f"cannot write ground truth to {root}: {exc}") from exc


# -- config files -------------------------------------------------------------

_MOTION_KEYS = {"gyro_amplitude", "accel_amplitude", "frequency_hz", "phase_rad"}


def _parse_value(key: str, raw: str, current):
    raw = raw.strip()
    try:
        if key in _MOTION_KEYS or key in ("focal_px", "principal_px"):
            return tuple(float(v) for v in raw.split(","))
        if key == "accel_rate_hz":
            return None if raw.lower() in ("", "none", "auto") else float(raw)
        if isinstance(current, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(current, int):
            return int(raw, 0)
        if isinstance(current, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise InvalidConfig(f"{key}: {exc}") from None


def config_from_pairs(pairs: dict[str, str], base: Optional[SimConfig] = None) -> SimConfig:
    """Build a config from ``key -> text`` pairs named like SimConfig fields.

    Motion is given by ``motion`` plus the per-axis keys
    ``gyro_amplitude``, ``accel_amplitude``, ``frequency_hz`` and
    ``phase_rad`` (three comma-separated numbers each).
    """
    base = base or SimConfig()
    names = {f.name for f in fields(SimConfig)}
    updates = {}
    motion_updates = {}
    for key, raw in pairs.items():
        if key == "motion":
            motion_updates["kind"] = raw.strip()
        elif key in _MOTION_KEYS:
            motion_updates[key] = _parse_value(key, raw, None)
        elif key in names:
            updates[key] = _parse_value(key, raw, getattr(base, key))
        else:
            raise InvalidConfig(f"unknown config key {key!r}")
    if motion_updates:
        updates["motion"] = replace(base.motion, **motion_updates)
    return replace(base, **updates)


def parse_config_text(text: str, base: Optional[SimConfig] = None) -> SimConfig:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value
    return config_from_pairs(pairs, base)


def load_config(path) -> SimConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)
