"""Compressed trace wire format and full-flow reconstruction.

Frame layout (self-delimiting, streaming-safe):

    source:1  kind:1  payload_len:uvarint  payload  crc8:1

crc8 uses polynomial 0x07, init 0x00, over header+payload, so trace files
are bit-exact across implementations.  Addresses travel as unsigned
varints, deltas as zigzag varints, data values little-endian.

Program trace encodes only discontinuities.  Every program message carries
`icnt`, the number of retires it covers (sequential run plus, for BRANCH /
mid-stream PROG_SYNC, the discontinuity instruction itself); the decoder
replays the program image from each PROG_SYNC, emitting icnt sequential
pcs per message and then applying the jump.  A stream that ends with an
open PROG_SYNC (or any BRANCH) is walked sequentially through the image to
HALT; a closing PROG_SYNC with open=0 pins the exact final pc instead, so
qualified windows and truncated runs round-trip exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

from .isa import Opcode
from .tracemsg import MsgKind, TraceMessage

FILE_MAGIC = b"MCDS"
FILE_VERSION = 1
DEFAULT_SYNC_EVERY = 64

_CRC_TABLE = []
for _b in range(256):
    _c = _b
    for _ in range(8):
        _c = ((_c << 1) ^ 0x07) & 0xFF if _c & 0x80 else (_c << 1) & 0xFF
    _CRC_TABLE.append(_c)


def crc8(data: bytes) -> int:
    crc = 0x00
    for b in data:
        crc = _CRC_TABLE[crc ^ b]
    return crc


def write_uvarint(out: bytearray, value: int):
    if value < 0:
        raise ValueError("uvarint takes non-negative values")
    while True:
        b = value & 0x7F
        value >>= 7
        if value:
            out.append(b | 0x80)
        else:
            out.append(b)
            return


def read_uvarint(data: bytes, off: int) -> tuple[int, int]:
    shift = 0
    value = 0
    while True:
        if off >= len(data):
            raise CodecError("truncated varint", off)
        b = data[off]
        off += 1
        value |= (b & 0x7F) << shift
        if not b & 0x80:
            return value, off
        shift += 7
        if shift > 63:
            raise CodecError("varint too long", off)


def zigzag(n: int) -> int:
    return (n << 1) if n >= 0 else ((-n) << 1) - 1


def unzigzag(u: int) -> int:
    return (u >> 1) ^ -(u & 1)


class CodecError(ValueError):
    def __init__(self, msg, offset=None):
        super().__init__(msg if offset is None else "%s (byte offset %d)" % (msg, offset))
        self.offset = offset


class DecodeMismatch(ValueError):
    """Program image and message stream disagree."""

    def __init__(self, msg, index):
        super().__init__("%s (message index %d)" % (msg, index))
        self.index = index


# --- frame serialization ---

def _encode_payload(msg: TraceMessage) -> bytes:
    out = bytearray()
    write_uvarint(out, msg.ts)
    p = msg.payload
    k = msg.kind
    if k is MsgKind.PROG_SYNC:
        write_uvarint(out, p["icnt"])
        write_uvarint(out, p["pc"])
        out.append(1 if p["open"] else 0)
    elif k is MsgKind.BRANCH:
        write_uvarint(out, p["icnt"])
        write_uvarint(out, zigzag(p["delta"]))
    elif k is MsgKind.DATA:
        flags = (1 if p["write"] else 0) | ({1: 0, 2: 1, 4: 2}[p["size"]] << 1)
        if p.get("abs"):
            flags |= 0x08
            out.append(flags)
            write_uvarint(out, p["addr"])
        else:
            out.append(flags)
            write_uvarint(out, zigzag(p["delta"]))
        out.extend(p["value"].to_bytes(p["size"], "little"))
    elif k is MsgKind.MARK:
        write_uvarint(out, p.get("code", 0))
    elif k is MsgKind.TS_SYNC:
        write_uvarint(out, p["cycle"])
    elif k is MsgKind.OVERFLOW:
        write_uvarint(out, p.get("dropped", 0))
    else:  # pragma: no cover
        raise CodecError("unknown kind %r" % (k,))
    return bytes(out)


def _decode_payload(kind: MsgKind, data: bytes) -> tuple[int, dict]:
    ts, off = read_uvarint(data, 0)
    p = {}
    if kind is MsgKind.PROG_SYNC:
        p["icnt"], off = read_uvarint(data, off)
        p["pc"], off = read_uvarint(data, off)
        if off >= len(data):
            raise CodecError("truncated PROG_SYNC payload")
        p["open"] = bool(data[off])
        off += 1
    elif kind is MsgKind.BRANCH:
        p["icnt"], off = read_uvarint(data, off)
        u, off = read_uvarint(data, off)
        p["delta"] = unzigzag(u)
    elif kind is MsgKind.DATA:
        if off >= len(data):
            raise CodecError("truncated DATA payload")
        flags = data[off]
        off += 1
        p["write"] = bool(flags & 1)
        p["size"] = 1 << ((flags >> 1) & 3)
        if p["size"] == 8:
            raise CodecError("bad size code")
        p["abs"] = bool(flags & 0x08)
        if p["abs"]:
            p["addr"], off = read_uvarint(data, off)
        else:
            u, off = read_uvarint(data, off)
            p["delta"] = unzigzag(u)
        if off + p["size"] > len(data):
            raise CodecError("truncated DATA value")
        p["value"] = int.from_bytes(data[off:off + p["size"]], "little")
        off += p["size"]
    elif kind is MsgKind.MARK:
        p["code"], off = read_uvarint(data, off)
    elif kind is MsgKind.TS_SYNC:
        p["cycle"], off = read_uvarint(data, off)
    elif kind is MsgKind.OVERFLOW:
        p["dropped"], off = read_uvarint(data, off)
    if off != len(data):
        raise CodecError("payload length mismatch for %s" % kind.name)
    return ts, p


def frame_bytes(msg: TraceMessage) -> bytes:
    payload = _encode_payload(msg)
    out = bytearray([msg.source & 0xFF, int(msg.kind)])
    write_uvarint(out, len(payload))
    out.extend(payload)
    out.append(crc8(bytes(out)))
    return bytes(out)


def parse_frame(data: bytes, off: int):
    """-> (source, kind, ts, payload_dict, next_off); raises CodecError."""
    start = off
    if off + 2 > len(data):
        raise CodecError("truncated frame header", start)
    source = data[off]
    kind_raw = data[off + 1]
    try:
        kind = MsgKind(kind_raw)
    except ValueError:
        raise CodecError("unknown message kind 0x%02x" % kind_raw, start) from None
    plen, off = read_uvarint(data, off + 2)
    if off + plen + 1 > len(data):
        raise CodecError("truncated frame payload", start)
    payload = data[off:off + plen]
    want_crc = data[off + plen]
    got_crc = crc8(data[start:off + plen])
    if want_crc != got_crc:
        raise CodecError("crc mismatch", start)
    ts, p = _decode_payload(kind, payload)
    return source, kind, ts, p, off + plen + 1


def serialize(messages) -> bytes:
    return b"".join(frame_bytes(m) for m in messages)


def deserialize(data: bytes, resync: bool = False):
    """Parse concatenated frames back into messages.

    Strict mode raises CodecError with the byte offset of the first bad
    frame.  With resync=True, undecodable spans are skipped by scanning
    forward for the next parseable frame; the first message after a skip is
    flagged gap_before and the skipped extents are returned.
    """
    messages: list[TraceMessage] = []
    gaps: list[tuple[int, int]] = []
    seqs: dict[int, int] = {}
    off = 0
    pending_gap = False
    while off < len(data):
        try:
            source, kind, ts, payload, off2 = parse_frame(data, off)
        except CodecError as e:
            if not resync:
                raise
            gap_start = off
            off += 1
            while off < len(data):
                try:
                    parse_frame(data, off)
                    break
                except CodecError:
                    off += 1
            gaps.append((gap_start, off))
            pending_gap = True
            continue
        seq = seqs.get(source, 0)
        seqs[source] = seq + 1
        messages.append(TraceMessage(source, seq, kind, payload, ts,
                                     gap_before=pending_gap))
        pending_gap = False
        off = off2
    if resync:
        return messages, gaps
    return messages


# --- program trace ---

class ProgramEncoder:
    """Discontinuity-only program trace for one source.

    Emits a PROG_SYNC at stream start, a BRANCH per taken discontinuity,
    and replaces a BRANCH by a full PROG_SYNC every `sync_every` messages
    for decoder resynchronization.  flush() closes the stream exactly
    unless it already ended at a HALT retire, which the decoder can walk to.
    """

    def __init__(self, sync_every: int = DEFAULT_SYNC_EVERY):
        if sync_every < 2:
            raise ValueError("sync_every must be >= 2")
        self.sync_every = sync_every
        self.expected_pc: int | None = None
        self.pending = 0  # retires not yet covered by a message
        self.msgs_since_sync = 0
        self.halted = False
        self._started = False

    def _mk(self, kind, payload, cycle):
        if kind is MsgKind.PROG_SYNC:
            self.msgs_since_sync = 0
        else:
            self.msgs_since_sync += 1
        return (kind, payload, cycle)

    def feed(self, retire, cycle: int, halt: bool = False) -> list:
        """Process one retire (pc, taken flag, target); returns message tuples."""
        pc, taken, target = retire
        out = []
        if not self._started:
            self._started = True
            self.expected_pc = pc
            out.append(self._mk(MsgKind.PROG_SYNC, {"icnt": 0, "pc": pc, "open": True}, cycle))
        elif pc != self.expected_pc:
            # trace gap (qualification window reopened): close out the
            # covered run and re-anchor at the new pc
            out.append(self._mk(MsgKind.PROG_SYNC,
                                {"icnt": self.pending, "pc": pc, "open": True}, cycle))
            self.pending = 0
        self.halted = halt
        if taken:
            covered = self.pending + 1
            fallthrough = pc + 4
            if self.msgs_since_sync + 1 >= self.sync_every:
                out.append(self._mk(MsgKind.PROG_SYNC,
                                    {"icnt": covered, "pc": target, "open": True}, cycle))
            else:
                out.append(self._mk(MsgKind.BRANCH,
                                    {"icnt": covered, "delta": target - fallthrough}, cycle))
            self.pending = 0
            self.expected_pc = target
        else:
            self.pending += 1
            self.expected_pc = pc + 4
        return out

    def flush(self, cycle: int) -> list:
        """Close the stream.  No record is needed when the stream ended at a
        HALT: the decoder walks the image to it."""
        if not self._started or self.halted:
            return []
        out = [self._mk(MsgKind.PROG_SYNC,
                        {"icnt": self.pending, "pc": self.expected_pc, "open": False}, cycle)]
        self.pending = 0
        return out


def encode_program(retires, sync_every: int = DEFAULT_SYNC_EVERY, closed: bool = True):
    """Encode a whole retire stream [(pc, taken, target, is_halt)].

    Convenience wrapper used by tests and offline tools; the live pipeline
    drives ProgramEncoder incrementally.
    """
    enc = ProgramEncoder(sync_every)
    out = []
    cycle = 0
    for pc, taken, target, is_halt in retires:
        out.extend(enc.feed((pc, taken, target), cycle, halt=is_halt))
        cycle += 1
    if closed:
        out.extend(enc.flush(cycle))
    return out


def _image_word(image: bytes, base: int, pc: int, index: int) -> int:
    off = pc - base
    if off < 0 or off + 4 > len(image):
        raise DecodeMismatch("pc 0x%08x outside image" % pc, index)
    return int.from_bytes(image[off:off + 4], "little")


def decode_program(messages, image: bytes, base: int):
    """Reconstruct the exact retire pc sequence from program messages.

    Accepts TraceMessages (non-program kinds are ignored).  Returns
    (pcs, gaps) where gaps lists indices of messages that followed a
    detected discontinuity (bad frames skipped at the framing layer).
    """
    pcs: list[int] = []
    gaps: list[int] = []
    pos: int | None = None
    synced = True
    last_open = False
    index = -1
    for index, msg in enumerate(m for m in messages
                                if m.kind in (MsgKind.PROG_SYNC, MsgKind.BRANCH)):
        if msg.gap_before:
            synced = False
        if msg.kind is MsgKind.PROG_SYNC:
            p = msg.payload
            if synced and pos is not None:
                for _ in range(p["icnt"]):
                    _image_word(image, base, pos, index)
                    pcs.append(pos)
                    pos += 4
            elif not synced:
                gaps.append(index)
            pos = p["pc"]
            synced = True
            last_open = p["open"]
        else:  # BRANCH
            if not synced:
                continue
            if pos is None:
                raise DecodeMismatch("BRANCH before any PROG_SYNC", index)
            p = msg.payload
            if p["icnt"] < 1:
                raise DecodeMismatch("BRANCH covering no instructions", index)
            for _ in range(p["icnt"]):
                _image_word(image, base, pos, index)
                pcs.append(pos)
                pos += 4
            pos = pos + p["delta"]  # delta is from the fall-through pc
            last_open = True
    if pos is not None and synced and last_open:
        # stream ended open: the tail ran sequentially to a HALT
        while True:
            word = _image_word(image, base, pos, index)
            opcode = word >> 24
            if opcode == Opcode.JMP:
                raise DecodeMismatch("unterminated stream hits a jump", index)
            pcs.append(pos)
            if opcode == Opcode.HALT:
                break
            pos += 4
    return pcs, gaps


# --- data trace ---

class DataEncoder:
    """Delta-compressed data access trace for one source."""

    def __init__(self):
        self.prev_addr: int | None = None

    def feed(self, access, cycle: int) -> list:
        addr, value, size, write = access
        if size not in (1, 2, 4):
            raise CodecError("unsupported access size %d" % size)
        if self.prev_addr is None:
            payload = {"write": write, "size": size, "abs": True, "addr": addr,
                       "value": value}
        else:
            payload = {"write": write, "size": size, "abs": False,
                       "delta": addr - self.prev_addr, "value": value}
        self.prev_addr = addr
        return [(MsgKind.DATA, payload, cycle)]


def encode_data(accesses) -> list:
    enc = DataEncoder()
    out = []
    for cycle, access in enumerate(accesses):
        out.extend(enc.feed(access, cycle))
    return out


def decode_data(messages):
    """Invert encode_data: -> list of (addr, value, size, write)."""
    out = []
    prev = None
    for i, msg in enumerate(m for m in messages if m.kind is MsgKind.DATA):
        p = msg.payload
        if p["abs"]:
            addr = p["addr"]
        else:
            if prev is None:
                raise DecodeMismatch("delta-addressed DATA with no base", i)
            addr = prev + p["delta"]
        prev = addr
        out.append((addr, p["value"], p["size"], p["write"]))
    return out


# --- trace file container ---

def write_trace_file(path, frames: bytes):
    with open(path, "wb") as f:
        f.write(FILE_MAGIC)
        f.write(bytes([FILE_VERSION]))
        f.write(frames)


def read_trace_file(path) -> bytes:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != FILE_MAGIC:
        raise CodecError("not a trace file (bad magic)")
    if len(blob) < 5 or blob[4] != FILE_VERSION:
        raise CodecError("unsupported trace file version")
    return blob[5:]
