"""AIS NMEA sentence codec for !AIVDM/!AIVDO.

Decodes ITU-R M.1371 message types 1/2/3 (position report) and 5
(static and voyage data), with multi-fragment assembly. The encoder
exists so the decoder can be verified bit-for-bit against sentences
built straight from the field layout tables; it also backs synthetic
NMEA inputs in tests. Lat/lon are carried at 1/600000 degree, SOG at
0.1 knot, draught at 0.1 m.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Union

from .errors import ChecksumMismatch, TruncatedPayload, UnsupportedMessageType

SUPPORTED_TYPES = (1, 2, 3, 5)

_LAT_NA_RAW = 91 * 600_000
_LON_NA_RAW = 181 * 600_000
_SOG_NA_RAW = 1023
_COG_NA_RAW = 3600
_HEADING_NA_RAW = 511
_ROT_NA_RAW = -128

# NMEA payload characters carry 6 bits each; sentences stay under the
# 82-character limit by splitting payloads at this many characters.
_MAX_PAYLOAD_CHARS = 60


@dataclass(frozen=True)
class PositionReport:
    """Decoded type 1/2/3 message. None marks a not-available sentinel."""

    msg_type: int
    repeat: int
    mmsi: int
    nav_status: int
    rot_raw: int                 # raw signed byte; -128 = not available
    sog: Optional[float]         # knots
    pos_accuracy: int
    lon: Optional[float]         # degrees
    lat: Optional[float]
    cog: Optional[float]         # degrees
    heading: Optional[int]
    utc_second: int
    maneuver: int
    spare: int
    raim: int
    radio: int


@dataclass(frozen=True)
class StaticVoyage:
    """Decoded type 5 message."""

    msg_type: int
    repeat: int
    mmsi: int
    ais_version: int
    imo: Optional[int]
    callsign: str
    name: str
    ship_type: int
    to_bow: int
    to_stern: int
    to_port: int
    to_starboard: int
    epfd: int
    eta_month: int
    eta_day: int
    eta_hour: int
    eta_minute: int
    draught: Optional[float]     # meters
    destination: str
    dte: int
    spare: int

    @property
    def length(self) -> int:
        return self.to_bow + self.to_stern

    @property
    def beam(self) -> int:
        return self.to_port + self.to_starboard


AisMessage = Union[PositionReport, StaticVoyage]


@dataclass(frozen=True)
class Fragment:
    """One part of a multi-sentence message, awaiting assembly."""

    frag_count: int
    frag_num: int
    seq_id: str
    channel: str
    payload: str
    fill_bits: int


def nmea_checksum(body: str) -> int:
    """XOR of all characters between the leading '!'/'$' and the '*'."""
    csum = 0
    for ch in body:
        csum ^= ord(ch)
    return csum


def _dearmor(payload: str) -> tuple[int, int]:
    """6-bit ASCII armor -> (accumulated bits as int, bit count)."""
    acc = 0
    for ch in payload:
        o = ord(ch)
        if 48 <= o <= 87:
            v = o - 48
        elif 96 <= o <= 119:
            v = o - 56
        else:
            raise TruncatedPayload(f"invalid armor character {ch!r}")
        acc = (acc << 6) | v
    return acc, 6 * len(payload)


def _armor_char(v: int) -> str:
    return chr(v + 48) if v < 40 else chr(v + 56)


_SIXBIT_TO_CHAR = [chr(v + 64) if v < 32 else chr(v) for v in range(64)]


def _char_to_sixbit(ch: str) -> int:
    o = ord(ch)
    if 64 <= o <= 95:
        return o - 64
    if 32 <= o <= 63:
        return o
    raise ValueError(f"character {ch!r} not representable in 6-bit ASCII")


class _BitReader:
    def __init__(self, acc: int, nbits: int):
        self._acc = acc
        self._nbits = nbits
        self._pos = 0

    def u(self, width: int) -> int:
        if self._pos + width > self._nbits:
            raise TruncatedPayload(
                f"payload ends at bit {self._nbits}, field needs bit {self._pos + width}")
        shift = self._nbits - self._pos - width
        self._pos += width
        return (self._acc >> shift) & ((1 << width) - 1)

    def s(self, width: int) -> int:
        v = self.u(width)
        if v & (1 << (width - 1)):
            v -= 1 << width
        return v

    def text(self, nchars: int) -> str:
        chars = [_SIXBIT_TO_CHAR[self.u(6)] for _ in range(nchars)]
        return "".join(chars).rstrip("@ ").rstrip()


class _BitWriter:
    def __init__(self):
        self._acc = 0
        self._nbits = 0

    def u(self, value: int, width: int) -> None:
        if not (0 <= value < (1 << width)):
            raise ValueError(f"{value} does not fit in {width} unsigned bits")
        self._acc = (self._acc << width) | value
        self._nbits += width

    def s(self, value: int, width: int) -> None:
        lo, hi = -(1 << (width - 1)), (1 << (width - 1)) - 1
        if not (lo <= value <= hi):
            raise ValueError(f"{value} does not fit in {width} signed bits")
        self.u(value & ((1 << width) - 1), width)

    def text(self, s: str, nchars: int) -> None:
        if len(s) > nchars:
            raise ValueError(f"text {s!r} longer than {nchars} characters")
        padded = s + "@" * (nchars - len(s))
        for ch in padded:
            self.u(_char_to_sixbit(ch), 6)

    def payload(self) -> tuple[str, int]:
        fill = (6 - self._nbits % 6) % 6
        acc = self._acc << fill
        nchars = (self._nbits + fill) // 6
        chars = [_armor_char((acc >> (6 * (nchars - 1 - i))) & 0x3F)
                 for i in range(nchars)]
        return "".join(chars), fill


def make_sentence(payload: str, fill_bits: int, frag_count: int = 1,
                  frag_num: int = 1, seq_id: str = "", channel: str = "A") -> str:
    body = f"AIVDM,{frag_count},{frag_num},{seq_id},{channel},{payload},{fill_bits}"
    return f"!{body}*{nmea_checksum(body):02X}"


def encode_message(msg: AisMessage, seq_id: str = "1", channel: str = "A") -> list[str]:
    """Build the NMEA sentence(s) carrying msg, splitting long payloads."""
    w = _BitWriter()
    if isinstance(msg, PositionReport):
        w.u(msg.msg_type, 6)
        w.u(msg.repeat, 2)
        w.u(msg.mmsi, 30)
        w.u(msg.nav_status, 4)
        w.s(msg.rot_raw, 8)
        w.u(_SOG_NA_RAW if msg.sog is None else round(msg.sog * 10), 10)
        w.u(msg.pos_accuracy, 1)
        w.s(_LON_NA_RAW if msg.lon is None else round(msg.lon * 600_000), 28)
        w.s(_LAT_NA_RAW if msg.lat is None else round(msg.lat * 600_000), 27)
        w.u(_COG_NA_RAW if msg.cog is None else round(msg.cog * 10), 12)
        w.u(_HEADING_NA_RAW if msg.heading is None else msg.heading, 9)
        w.u(msg.utc_second, 6)
        w.u(msg.maneuver, 2)
        w.u(msg.spare, 3)
        w.u(msg.raim, 1)
        w.u(msg.radio, 19)
    elif isinstance(msg, StaticVoyage):
        w.u(msg.msg_type, 6)
        w.u(msg.repeat, 2)
        w.u(msg.mmsi, 30)
        w.u(msg.ais_version, 2)
        w.u(0 if msg.imo is None else msg.imo, 30)
        w.text(msg.callsign, 7)
        w.text(msg.name, 20)
        w.u(msg.ship_type, 8)
        w.u(msg.to_bow, 9)
        w.u(msg.to_stern, 9)
        w.u(msg.to_port, 6)
        w.u(msg.to_starboard, 6)
        w.u(msg.epfd, 4)
        w.u(msg.eta_month, 4)
        w.u(msg.eta_day, 5)
        w.u(msg.eta_hour, 5)
        w.u(msg.eta_minute, 6)
        w.u(0 if msg.draught is None else round(msg.draught * 10), 8)
        w.text(msg.destination, 20)
        w.u(msg.dte, 1)
        w.u(msg.spare, 1)
    else:
        raise TypeError(f"cannot encode {type(msg).__name__}")

    payload, fill = w.payload()
    if len(payload) <= _MAX_PAYLOAD_CHARS:
        return [make_sentence(payload, fill)]
    parts = [payload[i:i + _MAX_PAYLOAD_CHARS]
             for i in range(0, len(payload), _MAX_PAYLOAD_CHARS)]
    return [
        make_sentence(part, fill if i == len(parts) - 1 else 0,
                      frag_count=len(parts), frag_num=i + 1,
                      seq_id=seq_id, channel=channel)
        for i, part in enumerate(parts)
    ]


def _decode_payload(payload: str, fill_bits: int) -> AisMessage:
    acc, nbits = _dearmor(payload)
    logical = nbits - fill_bits
    if logical < 6:
        raise TruncatedPayload("payload shorter than the type field")
    r = _BitReader(acc >> fill_bits, logical)
    msg_type = r.u(6)
    if msg_type not in SUPPORTED_TYPES:
        raise UnsupportedMessageType(msg_type)

    if msg_type in (1, 2, 3):
        if logical < 168:
            raise TruncatedPayload(f"type {msg_type} needs 168 bits, got {logical}")
        repeat = r.u(2)
        mmsi = r.u(30)
        nav_status = r.u(4)
        rot_raw = r.s(8)
        sog_raw = r.u(10)
        pos_accuracy = r.u(1)
        lon_raw = r.s(28)
        lat_raw = r.s(27)
        cog_raw = r.u(12)
        heading_raw = r.u(9)
        utc_second = r.u(6)
        maneuver = r.u(2)
        spare = r.u(3)
        raim = r.u(1)
        radio = r.u(19)
        return PositionReport(
            msg_type=msg_type, repeat=repeat, mmsi=mmsi, nav_status=nav_status,
            rot_raw=rot_raw,
            sog=None if sog_raw == _SOG_NA_RAW else sog_raw / 10.0,
            pos_accuracy=pos_accuracy,
            lon=None if lon_raw == _LON_NA_RAW else lon_raw / 600_000.0,
            lat=None if lat_raw == _LAT_NA_RAW else lat_raw / 600_000.0,
            cog=None if cog_raw >= _COG_NA_RAW else cog_raw / 10.0,
            heading=None if heading_raw == _HEADING_NA_RAW else heading_raw,
            utc_second=utc_second, maneuver=maneuver, spare=spare,
            raim=raim, radio=radio,
        )

    # msg_type == 5
    if logical < 424:
        raise TruncatedPayload(f"type 5 needs 424 bits, got {logical}")
    repeat = r.u(2)
    mmsi = r.u(30)
    ais_version = r.u(2)
    imo_raw = r.u(30)
    callsign = r.text(7)
    name = r.text(20)
    ship_type = r.u(8)
    to_bow = r.u(9)
    to_stern = r.u(9)
    to_port = r.u(6)
    to_starboard = r.u(6)
    epfd = r.u(4)
    eta_month = r.u(4)
    eta_day = r.u(5)
    eta_hour = r.u(5)
    eta_minute = r.u(6)
    draught_raw = r.u(8)
    destination = r.text(20)
    dte = r.u(1)
    spare = r.u(1)
    return StaticVoyage(
        msg_type=msg_type, repeat=repeat, mmsi=mmsi, ais_version=ais_version,
        imo=None if imo_raw == 0 else imo_raw,
        callsign=callsign, name=name, ship_type=ship_type,
        to_bow=to_bow, to_stern=to_stern, to_port=to_port,
        to_starboard=to_starboard, epfd=epfd,
        eta_month=eta_month, eta_day=eta_day, eta_hour=eta_hour,
        eta_minute=eta_minute,
        draught=None if draught_raw == 0 else draught_raw / 10.0,
        destination=destination, dte=dte, spare=spare,
    )


def decode_nmea_sentence(line: str) -> Union[AisMessage, Fragment]:
    """Decode one !AIVDM/!AIVDO sentence.

    Single-fragment sentences decode straight to an AisMessage;
    parts of multi-fragment messages come back as Fragment values
    for the caller to assemble.
    """
    line = line.strip()
    if not (line.startswith("!AIVDM") or line.startswith("!AIVDO")):
        raise TruncatedPayload(f"not an AIS sentence: {line[:12]!r}")
    star = line.rfind("*")
    if star == -1 or star + 3 > len(line):
        raise ChecksumMismatch("missing checksum")
    body, cs_text = line[1:star], line[star + 1:star + 3]
    try:
        supplied = int(cs_text, 16)
    except ValueError:
        raise ChecksumMismatch(f"bad checksum text {cs_text!r}") from None
    if nmea_checksum(body) != supplied:
        raise ChecksumMismatch(
            f"checksum {nmea_checksum(body):02X} != supplied {supplied:02X}")

    fields = body.split(",")
    if len(fields) != 7:
        raise TruncatedPayload(f"expected 7 comma fields, got {len(fields)}")
    try:
        frag_count = int(fields[1])
        frag_num = int(fields[2])
        fill_bits = int(fields[6])
    except ValueError:
        raise TruncatedPayload("non-numeric fragment/fill field") from None
    payload = fields[5]
    if frag_count < 1 or not (1 <= frag_num <= frag_count) or not (0 <= fill_bits <= 5):
        raise TruncatedPayload("fragment/fill fields out of range")

    if frag_count == 1:
        return _decode_payload(payload, fill_bits)
    return Fragment(frag_count=frag_count, frag_num=frag_num, seq_id=fields[3],
                    channel=fields[4], payload=payload, fill_bits=fill_bits)


def assemble_fragments(fragments: list[Fragment]) -> AisMessage:
    """Decode a complete, ordered set of fragments of one message."""
    parts = sorted(fragments, key=lambda f: f.frag_num)
    count = parts[0].frag_count
    if [f.frag_num for f in parts] != list(range(1, count + 1)):
        raise TruncatedPayload("incomplete fragment set")
    payload = "".join(f.payload for f in parts)
    return _decode_payload(payload, parts[-1].fill_bits)


class FragmentAssembler:
    """Groups fragments by (sequence id, channel) until complete."""

    def __init__(self):
        self._pending: dict[tuple[str, str, int], dict[int, Fragment]] = {}

    def feed(self, frag: Fragment) -> Optional[AisMessage]:
        key = (frag.seq_id, frag.channel, frag.frag_count)
        group = self._pending.setdefault(key, {})
        group[frag.frag_num] = frag
        if len(group) == frag.frag_count:
            del self._pending[key]
            return assemble_fragments(list(group.values()))
        return None

    @property
    def pending_count(self) -> int:
        return sum(len(g) for g in self._pending.values())


@dataclass
class StreamCounters:
    decoded: int = 0
    checksum_errors: int = 0
    unsupported: int = 0
    truncated: int = 0
    pending_fragments: int = 0


def decode_nmea_stream(lines: Iterable[str]) -> tuple[list[AisMessage], StreamCounters]:
    """Decode a sentence stream, assembling fragments and counting skips.

    Decode failures are counted, never fatal: a corrupt sentence in a
    long capture should not abort ingestion.
    """
    assembler = FragmentAssembler()
    counters = StreamCounters()
    messages: list[AisMessage] = []
    for line in lines:
        if not line.strip():
            continue
        try:
            result = decode_nmea_sentence(line)
        except ChecksumMismatch:
            counters.checksum_errors += 1
            continue
        except UnsupportedMessageType:
            counters.unsupported += 1
            continue
        except TruncatedPayload:
            counters.truncated += 1
            continue
        if isinstance(result, Fragment):
            assembled = None
            try:
                assembled = assembler.feed(result)
            except UnsupportedMessageType:
                counters.unsupported += 1
            except TruncatedPayload:
                counters.truncated += 1
            if assembled is not None:
                messages.append(assembled)
                counters.decoded += 1
            continue
        messages.append(result)
        counters.decoded += 1
    counters.pending_fragments = assembler.pending_count
    return messages, counters
