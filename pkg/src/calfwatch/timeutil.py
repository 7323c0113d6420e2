"""Timestamp helpers.

All timestamps in this package are int64 milliseconds since the Unix epoch,
UTC.  The interchange text form is ISO-8601 with millisecond precision and a
trailing ``Z`` (``2022-01-21T08:00:00.000Z``).
"""

from datetime import datetime, timedelta, timezone

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_MS = timedelta(milliseconds=1)


def parse_iso(text: str) -> int:
    """Parse an ISO-8601 timestamp into epoch milliseconds (UTC).

    Accepts a trailing ``Z`` or an explicit offset; naive timestamps are
    taken as UTC.
    """
    s = text.strip()
    if s.endswith("Z") or s.endswith("z"):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return (dt - EPOCH) // _MS


def format_iso(ms: int) -> str:
    """Format epoch milliseconds as ISO-8601 UTC with millisecond precision."""
    dt = EPOCH + timedelta(milliseconds=int(ms))
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def ms_to_datetime(ms: int) -> datetime:
    return EPOCH + timedelta(milliseconds=int(ms))


def datetime_to_ms(dt: datetime) -> int:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return (dt - EPOCH) // _MS
