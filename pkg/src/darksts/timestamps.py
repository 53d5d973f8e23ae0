"""UTC timestamp helpers: integer epoch seconds <-> ISO-8601 text."""
from __future__ import annotations

from datetime import datetime, timezone


def parse_utc(text: str) -> int:
    """Parse an ISO-8601 timestamp to integer epoch seconds (UTC).

    Accepts a trailing 'Z', an explicit offset, or a naive timestamp
    (treated as UTC). Sub-second digits are truncated.
    """
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_utc(t: int) -> str:
    """Format integer epoch seconds as ISO-8601 UTC with a 'Z' suffix."""
    return datetime.fromtimestamp(int(t), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
