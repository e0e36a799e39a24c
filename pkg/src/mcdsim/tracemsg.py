"""Trace messages, cycle-level timestamping, recovery, and stream merging.

Messages carry a truncated timestamp (`ts = cycle mod 2^W`).  A TS_SYNC
with the full 64-bit cycle is injected per source at stream start and at
least every `sync_period` cycles of emitted activity; sync_period must stay
below 2^(W-1) so every wrap can be recovered by forward unwrapping.  The
full `cycle` field is decoder-side only and never serialized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum


class MsgKind(IntEnum):
    PROG_SYNC = 1
    BRANCH = 2
    DATA = 3
    MARK = 4
    TS_SYNC = 5
    OVERFLOW = 6


@dataclass
class TraceMessage:
    source: int
    seq: int
    kind: MsgKind
    payload: dict
    ts: int
    # reconstruction-only fields, not on the wire
    cycle: int | None = field(default=None, compare=False)
    gap_before: bool = field(default=False, compare=False)


@dataclass(frozen=True)
class TimestampConfig:
    width: int = 16
    sync_period: int | None = None

    def __post_init__(self):
        if self.width < 2 or self.width > 64:
            raise ValueError("timestamp width out of range")
        if self.sync_period is None:
            object.__setattr__(self, "sync_period", 1 << (self.width - 2))
        if not 0 < self.sync_period < (1 << (self.width - 1)):
            raise ValueError("sync_period must be in (0, 2^(width-1))")

    @property
    def span(self) -> int:
        return 1 << self.width


class StreamError(ValueError):
    pass


class Stamper:
    """Per-source timestamper: truncates cycles, injects TS_SYNC records,
    and assigns the per-source sequence numbers."""

    def __init__(self, source: int, config: TimestampConfig):
        self.source = source
        self.config = config
        self.seq = 0
        self.last_sync_cycle: int | None = None
        self._overflow_pending = 0

    def _emit(self, kind, payload, cycle) -> TraceMessage:
        msg = TraceMessage(self.source, self.seq, kind, payload,
                           cycle % self.config.span, cycle)
        self.seq += 1
        return msg

    def mark_overflow(self, dropped: int = 0):
        """Record that trace data was lost; the next stamp emits an OVERFLOW
        discontinuity and re-anchors with a fresh TS_SYNC."""
        self._overflow_pending = max(self._overflow_pending, 1, dropped)

    def stamp(self, kind: MsgKind, payload: dict, cycle: int) -> list[TraceMessage]:
        """Stamp one message, preceded by TS_SYNC/OVERFLOW records as needed."""
        out = []
        if self._overflow_pending:
            out.append(self._emit(MsgKind.OVERFLOW, {"dropped": self._overflow_pending}, cycle))
            self._overflow_pending = 0
            self.last_sync_cycle = None  # force re-anchor
        if (self.last_sync_cycle is None
                or cycle - self.last_sync_cycle >= self.config.sync_period):
            out.append(self._emit(MsgKind.TS_SYNC, {"cycle": cycle}, cycle))
            self.last_sync_cycle = cycle
        out.append(self._emit(kind, payload, cycle))
        return out


def recover_cycles(messages, config: TimestampConfig) -> list[TraceMessage]:
    """Reconstruct full cycle numbers for one source's stream.

    The stream must open with TS_SYNC.  Timestamps unwrap forward against
    the last recovered cycle; an OVERFLOW record (or a flagged gap from the
    framing layer) breaks the anchor, and recovery resumes at the next
    TS_SYNC.  Messages stranded between an overflow and the next sync are
    dropped from the output.
    """
    out = []
    anchor: int | None = None
    pending_overflow: TraceMessage | None = None
    span = config.span
    for i, msg in enumerate(messages):
        if i == 0 and msg.kind is not MsgKind.TS_SYNC:
            raise StreamError("stream does not start with TS_SYNC")
        if msg.gap_before:
            anchor = None
        if msg.kind is MsgKind.TS_SYNC:
            anchor = msg.payload["cycle"]
            if anchor % span != msg.ts:
                raise StreamError("TS_SYNC timestamp disagrees with its cycle")
            msg.cycle = anchor
            if pending_overflow is not None:
                # the overflow that preceded this re-anchor: place it at the
                # nearest matching cycle at or before the sync
                pending_overflow.cycle = anchor - ((anchor - pending_overflow.ts) % span)
                out.append(pending_overflow)
                pending_overflow = None
            out.append(msg)
            continue
        if msg.kind is MsgKind.OVERFLOW:
            pending_overflow = msg
            anchor = None
            continue
        if anchor is None:
            continue  # unanchored after a discontinuity
        anchor = anchor + ((msg.ts - anchor) % span)
        msg.cycle = anchor
        out.append(msg)
    return out


def merge_streams(streams) -> list[TraceMessage]:
    """Merge per-source recovered streams into one totally ordered stream,
    sorted by (cycle, source id, seq)."""
    merged = [m for stream in streams for m in stream]
    for m in merged:
        if m.cycle is None:
            raise StreamError("merge requires recovered cycles")
    merged.sort(key=lambda m: (m.cycle, m.source, m.seq))
    return merged
