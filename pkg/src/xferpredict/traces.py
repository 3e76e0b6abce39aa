"""Transfer, probe and disk streams: record types, log formats, size classes.

Three streams feed the predictors:

* the transfer log (one line per end-to-end file transfer, throughput in KB/s),
* the network probe log (``epoch-seconds MB/s``),
* the disk log (``epoch-seconds transfers/s``).

All files are whitespace-delimited text; lines starting with ``#`` are comments.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass
from typing import Iterable, List, Sequence, TextIO, Union

from .errors import InputError, ParseError, ValidationError

KB = 1000
MB = 1000 * 1000
DEFAULT_PROBE_SIZE = 64 * 1024

TextSource = Union[str, TextIO, Iterable[str]]


class Direction(str, enum.Enum):
    READ = "Read"
    WRITE = "Write"


class SizeClass(enum.Enum):
    """File-size buckets, half-open ``[lo, hi)`` in bytes (1 MB = 10**6 bytes)."""

    C10M = (0, 50 * MB)
    C100M = (50 * MB, 250 * MB)
    C500M = (250 * MB, 750 * MB)
    C1G = (750 * MB, None)

    @property
    def lower(self) -> int:
        return self.value[0]

    @property
    def upper(self):
        return self.value[1]

    @property
    def label(self) -> str:
        return self.name[1:]

    def contains(self, file_size: int) -> bool:
        return file_size >= self.lower and (self.upper is None or file_size < self.upper)

    @classmethod
    def parse(cls, text: str) -> "SizeClass":
        key = text.strip().upper()
        if not key.startswith("C"):
            key = "C" + key
        try:
            return cls[key]
        except KeyError:
            raise InputError(f"unknown size class {text!r}") from None


@dataclass(frozen=True)
class TransferRecord:
    """One logged end-to-end file transfer."""

    source_id: str
    file_name: str
    file_size: int
    volume: str
    start_time: int
    end_time: int
    duration: int
    bandwidth: int
    direction: Direction
    streams: int
    tcp_buffer: int

    @property
    def timestamp(self) -> int:
        return self.start_time

    @property
    def size_class(self) -> SizeClass:
        return classify_size(self.file_size)


@dataclass(frozen=True)
class ProbeRecord:
    timestamp: float
    bandwidth: float  # MB/s
    probe_size: int = DEFAULT_PROBE_SIZE


@dataclass(frozen=True)
class DiskRecord:
    timestamp: float
    transfer_rate: float  # transfers/s


def compute_bandwidth(file_size: int, duration: int) -> int:
    """Sustained transfer throughput in KB/s (1 KB = 1000 bytes), floored."""
    if duration <= 0:
        raise InputError(f"zero-duration transfer (duration={duration})")
    if file_size <= 0:
        raise InputError(f"file_size must be positive, got {file_size}")
    return int(file_size) // int(duration) // KB


def classify_size(file_size: int) -> SizeClass:
    if file_size < 0:
        raise InputError(f"file_size must be non-negative, got {file_size}")
    for cls in SizeClass:
        if cls.contains(file_size):
            return cls
    raise AssertionError("size classes must cover [0, inf)")


def filter_by_class(records: Sequence[TransferRecord], size_class: SizeClass) -> List[TransferRecord]:
    return [r for r in records if size_class.contains(r.file_size)]


def check_consistency(record: TransferRecord) -> List[str]:
    """Return soft inconsistencies between the logged and derived fields.

    Real logs (including the published sample) carry rows whose duration does
    not equal ``end - start``, or whose bandwidth does not match the size over
    the logged duration. These are reported, not rejected, unless the caller
    parses in strict mode.
    """
    issues = []
    elapsed = record.end_time - record.start_time
    if record.duration != elapsed:
        issues.append(f"duration {record.duration} != end_time - start_time = {elapsed}")
    expected = compute_bandwidth(record.file_size, record.duration)
    if record.bandwidth != expected:
        issues.append(
            f"bandwidth {record.bandwidth} != floor(file_size / duration / 1000) = {expected}"
        )
    return issues


# --------------------------------------------------------------------------- parsing


def _lines(text: TextSource) -> Iterable[str]:
    if isinstance(text, str):
        return io.StringIO(text)
    return text


def _data_lines(text: TextSource):
    for lineno, raw in enumerate(_lines(text), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        # tab-delimited rows may carry spaces inside fields (file names such as "10 MB")
        yield lineno, [t.strip() for t in line.split("\t")] if "\t" in line else line.split()


def _int(token: str, lineno: int, name: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"expected an integer, got {token!r}", lineno, name) from None


def _number(token: str, lineno: int, name: str):
    """Parse an int when the token is integral, else a float (keeps round-trips exact)."""
    try:
        return int(token)
    except ValueError:
        pass
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"expected a number, got {token!r}", lineno, name) from None
    if value != value or value in (float("inf"), float("-inf")):
        raise ParseError(f"non-finite value {token!r}", lineno, name)
    return value


TRANSFER_FIELDS = (
    "source_id",
    "file_name",
    "file_size",
    "volume",
    "start_time",
    "end_time",
    "duration",
    "bandwidth",
    "direction",
    "streams",
    "tcp_buffer",
)


def parse_transfer_line(tokens: Sequence[str], lineno: int = 0, strict: bool = False) -> TransferRecord:
    if len(tokens) > len(TRANSFER_FIELDS):
        # space-delimited row whose file name contains spaces; the name takes the surplus
        extra = len(tokens) - len(TRANSFER_FIELDS)
        tokens = [tokens[0], " ".join(tokens[1 : 2 + extra])] + list(tokens[2 + extra :])
    if len(tokens) != len(TRANSFER_FIELDS):
        raise ParseError(
            f"expected {len(TRANSFER_FIELDS)} fields, found {len(tokens)}",
            lineno,
            TRANSFER_FIELDS[min(len(tokens), len(TRANSFER_FIELDS) - 1)],
        )
    source_id, file_name, size, volume, start, end, duration, bw, rw, streams, buf = tokens
    try:
        direction = Direction(rw)
    except ValueError:
        raise ParseError(f"expected Read or Write, got {rw!r}", lineno, "direction") from None
    rec = TransferRecord(
        source_id=source_id,
        file_name=file_name,
        file_size=_int(size, lineno, "file_size"),
        volume=volume,
        start_time=_int(start, lineno, "start_time"),
        end_time=_int(end, lineno, "end_time"),
        duration=_int(duration, lineno, "duration"),
        bandwidth=_int(bw, lineno, "bandwidth"),
        direction=direction,
        streams=_int(streams, lineno, "streams"),
        tcp_buffer=_int(buf, lineno, "tcp_buffer"),
    )
    validate_transfer(rec, lineno, strict=strict)
    return rec


def validate_transfer(rec: TransferRecord, lineno=None, strict: bool = False) -> None:
    if rec.file_size <= 0:
        raise ValidationError("file_size must be positive", lineno, "file_size")
    if rec.end_time < rec.start_time:
        raise ValidationError(
            f"end_time {rec.end_time} precedes start_time {rec.start_time}", lineno, "end_time"
        )
    if rec.duration < 1:
        raise ValidationError("duration must be at least 1 second", lineno, "duration")
    if rec.bandwidth < 0:
        raise ValidationError("bandwidth must be non-negative", lineno, "bandwidth")
    if rec.streams < 1:
        raise ValidationError("streams must be at least 1", lineno, "streams")
    if rec.tcp_buffer < 0:
        raise ValidationError("tcp_buffer must be non-negative", lineno, "tcp_buffer")
    if strict:
        issues = check_consistency(rec)
        if issues:
            raise ValidationError("; ".join(issues), lineno)


def parse_transfer_log(text: TextSource, strict: bool = False) -> List[TransferRecord]:
    """Parse a transfer log, one record per data line in file order.

    Args:
        text: log contents, an open file, or an iterable of lines.
        strict: also reject rows whose logged duration/bandwidth disagree with
            the timestamps and file size (see :func:`check_consistency`).

    Raises:
        ParseError: a line has the wrong field count or a non-numeric field.
        ValidationError: a record violates a hard invariant.
    """
    return [parse_transfer_line(tokens, lineno, strict) for lineno, tokens in _data_lines(text)]


def _parse_series(text: TextSource, build, value_name: str):
    records = []
    last_t = None
    for lineno, tokens in _data_lines(text):
        if len(tokens) < 2:
            raise ParseError(f"expected 'timestamp value', found {len(tokens)} field(s)", lineno, value_name)
        t = _number(tokens[0], lineno, "timestamp")
        v = _number(tokens[1], lineno, value_name)
        if v < 0:
            raise ValidationError(f"{value_name} must be non-negative, got {v}", lineno, value_name)
        if last_t is not None and t < last_t:
            raise ValidationError(f"timestamp {t} is earlier than previous {last_t}", lineno, "timestamp")
        last_t = t
        records.append(build(t, v, tokens[2:], lineno))
    return records


def parse_probe_log(text: TextSource) -> List[ProbeRecord]:
    def build(t, v, extra, lineno):
        if len(extra) > 1:
            raise ParseError("too many fields", lineno, "probe_size")
        size = _int(extra[0], lineno, "probe_size") if extra else DEFAULT_PROBE_SIZE
        return ProbeRecord(t, v, size)

    return _parse_series(text, build, "bandwidth")


def parse_disk_log(text: TextSource) -> List[DiskRecord]:
    def build(t, v, extra, lineno):
        if extra:
            raise ParseError("too many fields", lineno, "transfer_rate")
        return DiskRecord(t, v)

    return _parse_series(text, build, "transfer_rate")


# --------------------------------------------------------------------------- writing


def format_transfer(rec: TransferRecord) -> str:
    return "\t".join(
        str(x)
        for x in (
            rec.source_id,
            rec.file_name,
            rec.file_size,
            rec.volume,
            rec.start_time,
            rec.end_time,
            rec.duration,
            rec.bandwidth,
            rec.direction.value,
            rec.streams,
            rec.tcp_buffer,
        )
    )


def serialize_transfer_log(records: Iterable[TransferRecord], header: bool = True) -> str:
    out = []
    if header:
        out.append("# " + " ".join(TRANSFER_FIELDS))
    out.extend(format_transfer(r) for r in records)
    return "\n".join(out) + "\n"


def serialize_probe_log(records: Iterable[ProbeRecord], header: bool = True) -> str:
    out = ["# timestamp bandwidth_MBps"] if header else []
    for r in records:
        line = f"{r.timestamp!r} {r.bandwidth!r}"
        if r.probe_size != DEFAULT_PROBE_SIZE:
            line += f" {r.probe_size}"
        out.append(line)
    return "\n".join(out) + "\n"


def serialize_disk_log(records: Iterable[DiskRecord], header: bool = True) -> str:
    out = ["# timestamp transfers_per_second"] if header else []
    out.extend(f"{r.timestamp!r} {r.transfer_rate!r}" for r in records)
    return "\n".join(out) + "\n"


def read_transfer_log(path, strict: bool = False) -> List[TransferRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_transfer_log(fh, strict=strict)


def read_probe_log(path) -> List[ProbeRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_probe_log(fh)


def read_disk_log(path) -> List[DiskRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_disk_log(fh)


@dataclass
class TraceSet:
    """The three streams for one site pair."""

    transfers: List[TransferRecord]
    probes: List[ProbeRecord]
    disks: List[DiskRecord]
    name: str = ""

    @classmethod
    def load(cls, transfer_path, probe_path, disk_path, name: str = "", strict: bool = False) -> "TraceSet":
        return cls(
            read_transfer_log(transfer_path, strict=strict),
            read_probe_log(probe_path),
            read_disk_log(disk_path),
            name,
        )

    def end_time(self) -> float:
        """Latest timestamp seen in any stream."""
        stamps = []
        if self.transfers:
            stamps.append(max(r.start_time for r in self.transfers))
        if self.probes:
            stamps.append(self.probes[-1].timestamp)
        if self.disks:
            stamps.append(self.disks[-1].timestamp)
        if not stamps:
            raise InputError("trace set is empty")
        return max(stamps)


@dataclass
class LogCheck:
    """Outcome of checking a whole log without stopping at the first bad line."""

    kind: str
    records: int
    violations: List[str]
    inconsistencies: List[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def detect_kind(text: str) -> str:
    for _, tokens in _data_lines(text):
        return "transfer" if len(tokens) >= len(TRANSFER_FIELDS) else "probe"
    return "transfer"


def check_log(text: str, kind: str = "auto", strict: bool = False) -> LogCheck:
    """Check every line of a log; hard failures are violations, soft ones inconsistencies.

    With ``strict`` the inconsistencies count as violations too.
    """
    if kind == "auto":
        kind = detect_kind(text)
    if kind not in ("transfer", "probe", "disk"):
        raise InputError(f"unknown log kind {kind!r}")
    violations: List[str] = []
    soft: List[str] = []
    count = 0
    last_t = None
    for lineno, tokens in _data_lines(text):
        try:
            if kind == "transfer":
                rec = parse_transfer_line(tokens, lineno)
                for issue in check_consistency(rec):
                    soft.append(f"line {lineno}: {issue}")
            else:
                parse = parse_probe_log if kind == "probe" else parse_disk_log
                (rec,) = parse([" ".join(tokens)])
                if last_t is not None and rec.timestamp < last_t:
                    raise ValidationError(
                        f"timestamp {rec.timestamp} is earlier than previous {last_t}", lineno, "timestamp"
                    )
                last_t = rec.timestamp
        except ParseError as exc:
            if exc.line is None or exc.line == 1 and lineno != 1:
                exc = type(exc)(str(exc).split(": ", 1)[-1], lineno, exc.field)
            violations.append(str(exc))
            continue
        count += 1
    if strict:
        violations.extend(soft)
        soft = []
    return LogCheck(kind, count, violations, soft)
