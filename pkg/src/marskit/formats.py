"""On-disk session layout and SLAM dataset export.

A session directory looks like::

    manifest.json      device, OS family, clock names, nominal rates, file list
    frames.csv         index,t_start_ns,exposure_ns,readout_ns,fx,fy,cx,cy,source
    imu.csv            t_ns,gx,gy,gz,ax,ay,az          (gyro-epoch pairs)
    gyro.csv/accel.csv t_ns,x,y,z                      (raw streams, optional)
    clockmarks.csv     label,t_a_ns,t_b_ns             (optional)

CSV files are UTF-8 with LF endings and a header row; lines starting with
``#`` are comments. Floats are written with ``repr`` so they re-parse to the
identical double. This layout is a formalization of the logger's sidecar
files, not a byte-for-byte copy of any app's output.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from statistics import median
from typing import Iterator, Optional

import yaml

from .errors import ClockMismatch, InvalidRecord, IoFailure, MalformedLine, MissingFile, NonMonotonicTimestamp, UnsyncedInput
from .model import (
    ClockCorrespondence,
    ClockId,
    DeviceManifest,
    FrameRecord,
    ImuSample,
    MarkLabel,
    MetadataSource,
    RawSample,
    RawSampleStream,
    Session,
    TimebasedInstant,
)
from .sync import ClockMap, DropReport, SyncedSession

FORMAT_NAME = "marskit-session"
FORMAT_VERSION = 1

FRAMES_HEADER = ["index", "t_start_ns", "exposure_ns", "readout_ns", "fx", "fy", "cx", "cy", "source"]
IMU_HEADER = ["t_ns", "gx", "gy", "gz", "ax", "ay", "az"]
RAW_HEADER = ["t_ns", "x", "y", "z"]
MARKS_HEADER = ["label", "t_a_ns", "t_b_ns"]

SLAM_IMU_HEADER = ["timestamp_ns", "wx", "wy", "wz", "ax", "ay", "az"]
SLAM_CAM_HEADER = ["timestamp_ns", "frame_index"]

_INT_RE = re.compile(r"-?[0-9]+\Z")
_SOURCE_TOKENS = {"measured": MetadataSource.MEASURED, "empirical": MetadataSource.EMPIRICAL}


# -- reading ------------------------------------------------------------------

def _rows(path: Path, header: list[str]) -> Iterator[tuple[int, list[str]]]:
    """Yield ``(line_number, fields)`` for every data row, header checked."""
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise MissingFile(path) from None
    except (OSError, UnicodeDecodeError) as exc:
        raise MalformedLine(path.name, 0, f"unreadable: {exc}") from None
    seen_header = False
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        if not seen_header:
            if [f.strip() for f in fields] != header:
                raise MalformedLine(path.name, lineno, f"expected header {','.join(header)}")
            seen_header = True
            continue
        if len(fields) != len(header):
            raise MalformedLine(path.name, lineno, f"expected {len(header)} columns, got {len(fields)}")
        yield lineno, fields
    if not seen_header:
        raise MalformedLine(path.name, 0, "file has no header row")


def _int(s: str, file: str, lineno: int, col: str) -> int:
    s = s.strip()
    if not _INT_RE.match(s):
        raise MalformedLine(file, lineno, f"{col}: not an integer: {s!r}")
    return int(s)


def _float(s: str, file: str, lineno: int, col: str) -> float:
    try:
        return float(s)
    except ValueError:
        raise MalformedLine(file, lineno, f"{col}: not a number: {s!r}") from None


def _opt_pair(a: str, b: str, file: str, lineno: int, cols: str):
    a, b = a.strip(), b.strip()
    if not a and not b:
        return None
    if not a or not b:
        raise MalformedLine(file, lineno, f"{cols}: both values or neither must be given")
    return (_float(a, file, lineno, cols), _float(b, file, lineno, cols))


def _read_frames(path: Path, clock: ClockId) -> list[FrameRecord]:
    frames = []
    name = path.name
    for lineno, f in _rows(path, FRAMES_HEADER):
        source = _SOURCE_TOKENS.get(f[8].strip())
        if source is None:
            raise MalformedLine(name, lineno, f"source: expected measured or empirical, got {f[8]!r}")
        try:
            frames.append(
                FrameRecord(
                    index=_int(f[0], name, lineno, "index"),
                    t_start=TimebasedInstant(_int(f[1], name, lineno, "t_start_ns"), clock),
                    exposure_ns=_int(f[2], name, lineno, "exposure_ns"),
                    readout_ns=_int(f[3], name, lineno, "readout_ns"),
                    focal_px=_opt_pair(f[4], f[5], name, lineno, "fx,fy"),
                    principal_px=_opt_pair(f[6], f[7], name, lineno, "cx,cy"),
                    metadata_source=source,
                )
            )
        except InvalidRecord as exc:
            raise MalformedLine(name, lineno, str(exc)) from None
    return frames


def _read_imu(path: Path, clock: ClockId) -> list[ImuSample]:
    out = []
    name = path.name
    for lineno, f in _rows(path, IMU_HEADER):
        t = _int(f[0], name, lineno, "t_ns")
        v = [_float(x, name, lineno, col) for x, col in zip(f[1:], IMU_HEADER[1:])]
        try:
            out.append(ImuSample(TimebasedInstant(t, clock), (v[0], v[1], v[2]), (v[3], v[4], v[5])))
        except InvalidRecord as exc:
            raise MalformedLine(name, lineno, str(exc)) from None
    return out


def _read_raw(path: Path, kind: str, clock: ClockId) -> RawSampleStream:
    samples = []
    name = path.name
    for lineno, f in _rows(path, RAW_HEADER):
        t = _int(f[0], name, lineno, "t_ns")
        v = tuple(_float(x, name, lineno, col) for x, col in zip(f[1:], RAW_HEADER[1:]))
        try:
            samples.append(RawSample(TimebasedInstant(t, clock), v))
        except InvalidRecord as exc:
            raise MalformedLine(name, lineno, str(exc)) from None
    return RawSampleStream(kind, clock, samples)


def _read_marks(path: Path, clock_a: ClockId, clock_b: ClockId) -> list[ClockCorrespondence]:
    out = []
    name = path.name
    labels = {m.value for m in MarkLabel}
    for lineno, f in _rows(path, MARKS_HEADER):
        label = f[0].strip()
        if label not in labels:
            raise MalformedLine(name, lineno, f"label: expected one of {', '.join(sorted(labels))}, got {label!r}")
        try:
            out.append(
                ClockCorrespondence(
                    label,
                    TimebasedInstant(_int(f[1], name, lineno, "t_a_ns"), clock_a),
                    TimebasedInstant(_int(f[2], name, lineno, "t_b_ns"), clock_b),
                )
            )
        except InvalidRecord as exc:
            raise MalformedLine(name, lineno, str(exc)) from None
    return out


def _load_manifest(root: Path) -> dict:
    path = root / "manifest.json"
    if not root.is_dir():
        raise MissingFile(root)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise MissingFile(path) from None
    except json.JSONDecodeError as exc:
        raise MalformedLine("manifest.json", exc.lineno, exc.msg) from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise MalformedLine("manifest.json", 0, f"not a {FORMAT_NAME} manifest")
    for key in ("device", "os_family", "clocks", "files"):
        if key not in doc:
            raise MalformedLine("manifest.json", 0, f"missing key {key!r}")
    if "frames" not in doc["files"]:
        raise MalformedLine("manifest.json", 0, "manifest does not name a frames file")
    return doc


def _manifest_from_doc(doc: dict) -> DeviceManifest:
    try:
        rates = doc.get("nominal_rates_hz", {})
        locks = doc.get("locks", {})
        return DeviceManifest(
            device=doc["device"],
            os_family=doc["os_family"],
            camera_clock=ClockId(doc["clocks"]["camera"]),
            imu_clock=ClockId(doc["clocks"]["imu"]),
            frame_rate_hz=rates.get("frames"),
            imu_rate_hz=rates.get("imu"),
            accel_rate_hz=rates.get("accel"),
            focus_locked=locks.get("focus"),
            exposure_locked=locks.get("exposure"),
            video=doc.get("video"),
        )
    except (KeyError, TypeError, InvalidRecord) as exc:
        raise MalformedLine("manifest.json", 0, f"bad manifest entry: {exc}") from None


def _file(root: Path, files: dict, key: str) -> Optional[Path]:
    name = files.get(key)
    if name is None:
        return None
    path = root / name
    if not path.is_file():
        raise MissingFile(path)
    return path


def _check_strict(session: Session, files: dict):
    def increasing(times, fname):
        for i in range(1, len(times)):
            if times[i] <= times[i - 1]:
                raise NonMonotonicTimestamp(f"{fname}: row {i + 1}: t={times[i]} does not increase past {times[i - 1]}")

    increasing([f.t_start.t for f in session.frames], files["frames"])
    for i in range(1, len(session.frames)):
        if session.frames[i].index <= session.frames[i - 1].index:
            raise NonMonotonicTimestamp(f"{files['frames']}: row {i + 1}: frame index does not increase")
    if session.imu_combined is not None:
        increasing([s.t.t for s in session.imu_combined], files["imu"])
    for stream in (session.gyro_raw, session.accel_raw):
        if stream is not None:
            increasing([s.t.t for s in stream.samples], files[stream.kind.value])


def read_session(root, strict: bool = True) -> Session:
    """Load a session directory.

    With ``strict`` (the default) out-of-order timestamps raise
    :class:`NonMonotonicTimestamp`; with ``strict=False`` they are left in
    place for :func:`~marskit.model.validate_session` to report.
    """
    root = Path(root)
    doc = _load_manifest(root)
    manifest = _manifest_from_doc(doc)
    files = doc["files"]
    cam, imu_clock = manifest.camera_clock, manifest.imu_clock

    frames = _read_frames(_file(root, files, "frames"), cam)
    imu_path = _file(root, files, "imu")
    imu = _read_imu(imu_path, imu_clock) if imu_path else None
    gyro_path, accel_path = _file(root, files, "gyro"), _file(root, files, "accel")
    gyro = _read_raw(gyro_path, "gyro", imu_clock) if gyro_path else None
    accel = _read_raw(accel_path, "accel", imu_clock) if accel_path else None

    marks = []
    marks_path = _file(root, files, "clockmarks")
    if marks_path is not None:
        pair = doc.get("clockmarks")
        if not pair or "clock_a" not in pair or "clock_b" not in pair:
            raise MalformedLine("manifest.json", 0, "clockmarks file listed without clock_a/clock_b names")
        clock_a, clock_b = ClockId(pair["clock_a"]), ClockId(pair["clock_b"])
        if strict and {clock_a, clock_b} != {cam, imu_clock}:
            raise ClockMismatch(f"clock marks relate {clock_a}/{clock_b}, session clocks are {cam}/{imu_clock}")
        marks = _read_marks(marks_path, clock_a, clock_b)

    session = Session(manifest, frames, gyro, accel, imu, marks)
    if strict:
        _check_strict(session, files)
    return session


# -- writing ------------------------------------------------------------------

def _fmt_float(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(rows)
    lines.append("")
    path.write_text("\n".join(lines), encoding="utf-8", newline="\n")


def _frame_rows(frames):
    for f in frames:
        fx, fy = (_fmt_float(v) for v in f.focal_px) if f.focal_px else ("", "")
        cx, cy = (_fmt_float(v) for v in f.principal_px) if f.principal_px else ("", "")
        yield f"{f.index},{f.t_start.t},{f.exposure_ns},{f.readout_ns},{fx},{fy},{cx},{cy},{f.metadata_source.value}"


def _imu_rows(samples):
    for s in samples:
        g, a = s.gyro, s.accel
        yield ",".join([str(s.t.t), *map(_fmt_float, g), *map(_fmt_float, a)])


def _manifest_doc(man: DeviceManifest) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "device": man.device,
        "os_family": man.os_family,
        "clocks": {"camera": man.camera_clock.name, "imu": man.imu_clock.name},
        "nominal_rates_hz": {"frames": man.frame_rate_hz, "imu": man.imu_rate_hz, "accel": man.accel_rate_hz},
        "locks": {"focus": man.focus_locked, "exposure": man.exposure_locked},
        "video": man.video,
        "files": {"frames": "frames.csv"},
    }


def _dump_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")


def _ensure_dir(root: Path) -> None:
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {root}: {exc}") from exc


def write_session(session: Session, root) -> None:
    root = Path(root)
    _ensure_dir(root)
    doc = _manifest_doc(session.manifest)
    files = doc["files"]
    try:
        _write_csv(root / "frames.csv", FRAMES_HEADER, _frame_rows(session.frames))
        if session.imu_combined is not None:
            files["imu"] = "imu.csv"
            _write_csv(root / "imu.csv", IMU_HEADER, _imu_rows(session.imu_combined))
        for stream in (session.gyro_raw, session.accel_raw):
            if stream is None:
                continue
            name = f"{stream.kind.value}.csv"
            files[stream.kind.value] = name
            rows = (",".join([str(s.t.t), *map(_fmt_float, s.value)]) for s in stream.samples)
            _write_csv(root / name, RAW_HEADER, rows)
        if session.clock_marks:
            files["clockmarks"] = "clockmarks.csv"
            clock_a, clock_b = session.clock_marks[0].clock_pair
            doc["clockmarks"] = {"clock_a": clock_a.name, "clock_b": clock_b.name}
            rows = (f"{m.label.value},{m.t_a.t},{m.t_b.t}" for m in session.clock_marks)
            _write_csv(root / "clockmarks.csv", MARKS_HEADER, rows)
        _dump_json(root / "manifest.json", doc)
    except OSError as exc:
        raise IoFailure(f"cannot write session to {root}: {exc}") from exc


def write_synced(synced: SyncedSession, root) -> None:
    """Write a synced session; frame times in frames.csv are the centered ones."""
    root = Path(root)
    _ensure_dir(root)
    doc = _manifest_doc(synced.manifest)
    doc["files"]["imu"] = "imu.csv"
    doc["sync"] = {
        "clock_map": synced.clock_map.to_dict(),
        "centered": True,
        "dropped_gyro_before": synced.dropped.before,
        "dropped_gyro_after": synced.dropped.after,
    }
    try:
        _write_csv(root / "frames.csv", FRAMES_HEADER, _frame_rows(synced.frames))
        _write_csv(root / "imu.csv", IMU_HEADER, _imu_rows(synced.imu_combined))
        _dump_json(root / "manifest.json", doc)
    except OSError as exc:
        raise IoFailure(f"cannot write synced session to {root}: {exc}") from exc


def is_synced_layout(root) -> bool:
    try:
        return "sync" in _load_manifest(Path(root))
    except (MissingFile, MalformedLine):
        return False


def read_synced(root) -> SyncedSession:
    root = Path(root)
    doc = _load_manifest(root)
    if "sync" not in doc:
        raise MalformedLine("manifest.json", 0, "not a synced session (no sync block)")
    session = read_session(root)
    info = doc["sync"]
    try:
        cmap = ClockMap.from_dict(info["clock_map"])
    except (KeyError, TypeError, ValueError, InvalidRecord) as exc:
        raise MalformedLine("manifest.json", 0, f"bad sync block: {exc}") from None
    dropped = DropReport(int(info.get("dropped_gyro_before", 0)), int(info.get("dropped_gyro_after", 0)))
    return SyncedSession(session.manifest, session.frames, session.imu_combined or (), cmap, dropped)


# -- SLAM export --------------------------------------------------------------

def _camera_metadata(synced: SyncedSession) -> dict:
    frames = synced.frames
    with_optics = [f for f in frames if f.focal_px is not None]
    measured = [f for f in with_optics if f.metadata_source is MetadataSource.MEASURED]
    ref = (measured or with_optics or [None])[0]
    intrinsics = None
    if ref is not None:
        cx, cy = ref.principal_px if ref.principal_px else (None, None)
        intrinsics = [ref.focal_px[0], ref.focal_px[1], cx, cy]
    meta = {
        "sensor_type": "camera",
        "camera_model": "pinhole",
        "clock": synced.manifest.imu_clock.name,
        "timestamp_reference": "mid-exposure of middle row",
        "frame_rate_hz": synced.manifest.frame_rate_hz,
        "frame_count": len(frames),
        "intrinsics": intrinsics,
        "intrinsics_source": ref.metadata_source.value if ref is not None else None,
        "readout_ns": int(median(f.readout_ns for f in frames)) if frames else None,
        "exposure_ns": int(median(f.exposure_ns for f in frames)) if frames else None,
        "measured_fraction": (sum(f.metadata_source is MetadataSource.MEASURED for f in frames) / len(frames)) if frames else None,
        "focus_locked": synced.manifest.focus_locked,
        "exposure_locked": synced.manifest.exposure_locked,
        "clock_map": synced.clock_map.to_dict(),
    }
    return meta


def export_slam_layout(synced: SyncedSession, root) -> None:
    """Write ``imu0/`` and ``cam0/`` folders in the common SLAM dataset layout."""
    clocks = synced.clocks()
    if len(clocks) > 1:
        raise UnsyncedInput(f"streams carry several clocks: {sorted(map(str, clocks))}")
    root = Path(root)
    imu_dir, cam_dir = root / "imu0", root / "cam0"
    _ensure_dir(imu_dir)
    _ensure_dir(cam_dir)
    try:
        _write_csv(imu_dir / "data.csv", SLAM_IMU_HEADER, _imu_rows(synced.imu_combined))
        _write_csv(cam_dir / "data.csv", SLAM_CAM_HEADER, (f"{f.t_start.t},{f.index}" for f in synced.frames))
        (cam_dir / "sensor.yaml").write_text(
            yaml.safe_dump(_camera_metadata(synced), sort_keys=False), encoding="utf-8", newline="\n"
        )
        imu_meta = {
            "sensor_type": "imu",
            "clock": synced.manifest.imu_clock.name,
            "rate_hz": synced.manifest.imu_rate_hz,
            "sample_count": len(synced.imu_combined),
            "accel_pairing": "linear interpolation at gyro epochs",
        }
        (imu_dir / "sensor.yaml").write_text(yaml.safe_dump(imu_meta, sort_keys=False), encoding="utf-8", newline="\n")
    except OSError as exc:
        raise IoFailure(f"cannot export to {root}: {exc}") from exc
