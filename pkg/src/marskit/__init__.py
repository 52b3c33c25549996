"""Parse, validate, synchronize, simulate and export visual-inertial sensor logs."""

from .diagnostics import detect_gaps, interval_histogram, interval_stats, session_report
from .errors import MarsError
from .formats import export_slam_layout, read_session, read_synced, write_session, write_synced
from .model import (
    ClockCorrespondence,
    ClockId,
    DeviceManifest,
    FrameRecord,
    ImuSample,
    MetadataSource,
    RawSample,
    RawSampleStream,
    Session,
    TimebasedInstant,
    Violation,
    validate_session,
)
from .simulator import MotionProfile, SimConfig, SimGroundTruth, emit_raw_streams, simulate_session
from .sync import (
    ClockMap,
    SyncedSession,
    center_frame_time,
    fit_clock_map,
    interpolate_accel_at_gyro,
    remap_stream,
    synchronize_session,
)

__version__ = "0.1.0"
