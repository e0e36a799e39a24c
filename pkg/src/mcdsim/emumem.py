"""Emulation RAM: segmented SRAM usable as calibration overlay or trace buffer.

The RAM is split into 64 KiB segments, each assignable as OFF, OVERLAY or
TRACE.  Up to 16 address-redirection ranges map power-of-two sized flash
windows (1 KiB to 32 KiB) onto overlay segments; each range has two page
images and a single global page-select bit swaps all ranges at once, taking
effect at the next cycle boundary so no cycle ever sees mixed pages.
Overlay accesses keep flash access timing.

A control register window exposes the page select and range registers so
the calibration protocol can drive a swap with a single memory write.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

SEGMENT_SIZE = 64 * 1024
DEFAULT_SIZE = 512 * 1024
MAX_RANGES = 16
MIN_RANGE_SIZE = 1024
MAX_RANGE_SIZE = 32 * 1024

# control window register layout (word registers)
REG_PAGE_SELECT = 0x00
# range id i occupies a 16-byte block at 0x10 * (i + 1):
#   +0x0 flash_base | enabled-bit, +0x4 size, +0x8 dest page 0, +0xC dest page 1
RANGE_BLOCK_STRIDE = 0x10
CTRL_WINDOW_SIZE = 0x1000


class SegmentRole(Enum):
    OFF = "OFF"
    OVERLAY = "OVERLAY"
    TRACE = "TRACE"


class TraceMode(Enum):
    CIRCULAR = "CIRCULAR"
    FILL_ONCE = "FILL_ONCE"


class EmuConfigError(ValueError):
    pass


@dataclass
class OverlayRange:
    range_id: int
    flash_base: int
    size: int
    dest_page0: int
    dest_page1: int
    enabled: bool = False

    def contains(self, addr: int) -> bool:
        return self.flash_base <= addr < self.flash_base + self.size


class TraceBuffer:
    """Byte ring over a list of TRACE segments, oldest-first readout."""

    def __init__(self, emu: "EmuRam", segments: list[int], mode: TraceMode):
        self.emu = emu
        self.segments = list(segments)
        self.mode = mode
        self.capacity = SEGMENT_SIZE * len(self.segments)
        self.write_offset = 0  # next write position, always < capacity
        self.stored = 0
        self.wrapped = False
        self.drop_count = 0

    def _phys(self, logical: int) -> int:
        seg = self.segments[logical // SEGMENT_SIZE]
        return seg * SEGMENT_SIZE + (logical % SEGMENT_SIZE)

    def append(self, data: bytes) -> int:
        """Append bytes; returns how many were stored."""
        if self.mode is TraceMode.FILL_ONCE:
            if self.stored + len(data) > self.capacity:
                self.drop_count += 1
                return 0
            for i, b in enumerate(data):
                self.emu.data[self._phys(self.stored + i)] = b
            self.stored += len(data)
            self.write_offset = self.stored % self.capacity
            return len(data)
        # circular: overwrite oldest on wrap
        for b in data:
            self.emu.data[self._phys(self.write_offset)] = b
            self.write_offset += 1
            if self.write_offset == self.capacity:
                self.write_offset = 0
                self.wrapped = True
        self.stored = self.capacity if self.wrapped else self.write_offset
        return len(data)

    def read_all(self) -> bytes:
        if self.mode is TraceMode.FILL_ONCE:
            return bytes(self.emu.data[self._phys(i)] for i in range(self.stored))
        out = bytearray()
        if self.wrapped:
            span = range(self.write_offset, self.capacity)
            out.extend(self.emu.data[self._phys(i)] for i in span)
        out.extend(self.emu.data[self._phys(i)] for i in range(self.write_offset))
        return bytes(out)


class EmuRam:
    def __init__(self, size: int = DEFAULT_SIZE, l_flash: int = 2):
        if size % SEGMENT_SIZE != 0 or size == 0:
            raise EmuConfigError("emulation RAM size must be a multiple of 64 KiB")
        self.data = bytearray(size)
        self.size = size
        self.l_flash = l_flash
        self.roles = [SegmentRole.OFF] * (size // SEGMENT_SIZE)
        self.ranges: dict[int, OverlayRange] = {}
        self.trace: TraceBuffer | None = None
        # page select: `selected` is the programmed value, `active` is what
        # target accesses observe; they differ only inside a cycle.
        self.selected_page = 0
        self.active_page = 0
        self._mid_cycle = False
        self._staged_enables: dict[int, bool] = {}
        self.ignored_ctrl_writes = 0

    # --- cycle boundary hooks (driven by the machine) ---

    def begin_cycle(self):
        self.active_page = self.selected_page
        for rid, on in self._staged_enables.items():
            self.ranges[rid].enabled = on
        self._staged_enables.clear()
        self._mid_cycle = True

    def end_cycle(self):
        self._mid_cycle = False

    # --- segments ---

    @property
    def segment_count(self) -> int:
        return len(self.roles)

    def _check_segment(self, seg: int):
        if not 0 <= seg < self.segment_count:
            raise EmuConfigError(
                "segment %d out of range (device has %d segments)" % (seg, self.segment_count)
            )

    def _segments_of_area(self, offset: int, size: int) -> range:
        return range(offset // SEGMENT_SIZE, (offset + size - 1) // SEGMENT_SIZE + 1)

    def _segment_in_use(self, seg: int) -> str | None:
        for r in self.ranges.values():
            enabled = self._staged_enables.get(r.range_id, r.enabled)
            if not enabled:
                continue
            for dest in (r.dest_page0, r.dest_page1):
                if seg in self._segments_of_area(dest, r.size):
                    return "overlay range %d" % r.range_id
        if self.trace is not None and seg in self.trace.segments:
            return "trace buffer"
        return None

    def set_segment_role(self, seg: int, role: SegmentRole):
        self._check_segment(seg)
        if self.roles[seg] is role:
            return
        user = self._segment_in_use(seg)
        if user:
            raise EmuConfigError("segment %d is in use by %s" % (seg, user))
        self.roles[seg] = role

    # --- overlay ranges ---

    def _check_dest_area(self, name: str, offset: int, size: int):
        if offset < 0 or offset + size > self.size:
            raise EmuConfigError("%s [0x%x, +0x%x) outside emulation RAM" % (name, offset, size))
        for seg in self._segments_of_area(offset, size):
            if self.roles[seg] is not SegmentRole.OVERLAY:
                raise EmuConfigError(
                    "%s touches segment %d which is %s, not OVERLAY" % (name, seg, self.roles[seg].value)
                )

    def define_overlay_range(self, range_id: int, flash_base: int, size: int,
                             dest_page0: int, dest_page1: int) -> OverlayRange:
        if not 0 <= range_id < MAX_RANGES:
            raise EmuConfigError("range id %d out of range (0..%d)" % (range_id, MAX_RANGES - 1))
        if range_id in self.ranges:
            raise EmuConfigError("range id %d already defined" % range_id)
        if size < MIN_RANGE_SIZE or size > MAX_RANGE_SIZE or size & (size - 1):
            raise EmuConfigError(
                "range size %d invalid: must be a power of two in [1 KiB, 32 KiB]" % size
            )
        if flash_base % size != 0:
            raise EmuConfigError("flash base 0x%x not aligned to size 0x%x" % (flash_base, size))
        self._check_dest_area("range %d page 0 dest" % range_id, dest_page0, size)
        self._check_dest_area("range %d page 1 dest" % range_id, dest_page1, size)
        new_areas = [(dest_page0, size), (dest_page1, size)]
        if dest_page0 < dest_page1 + size and dest_page1 < dest_page0 + size:
            raise EmuConfigError("range %d page dest areas overlap each other" % range_id)
        taken = []
        for r in self.ranges.values():
            taken.extend([(r.dest_page0, r.size), (r.dest_page1, r.size)])
        for lo, sz in new_areas:
            for lo2, sz2 in taken:
                if lo < lo2 + sz2 and lo2 < lo + sz:
                    raise EmuConfigError(
                        "range %d dest area overlaps another range's dest area" % range_id
                    )
        r = OverlayRange(range_id, flash_base, size, dest_page0, dest_page1)
        self.ranges[range_id] = r
        return r

    def enable_range(self, range_id: int, on: bool):
        """Takes effect at the next cycle boundary (immediately when idle)."""
        if range_id not in self.ranges:
            raise EmuConfigError("range id %d not defined" % range_id)
        r = self.ranges[range_id]
        if on:
            for other in self.ranges.values():
                if other.range_id == range_id:
                    continue
                if not self._staged_enables.get(other.range_id, other.enabled):
                    continue
                if (r.flash_base < other.flash_base + other.size
                        and other.flash_base < r.flash_base + r.size):
                    raise EmuConfigError(
                        "range %d overlaps enabled range %d in flash space"
                        % (range_id, other.range_id)
                    )
        if self._mid_cycle:
            self._staged_enables[range_id] = on
        else:
            r.enabled = on

    def translate(self, addr: int) -> tuple[str, int, int]:
        """Route one flash-space address: ('flash', addr, L) or ('emu', offset, L).

        Overlaid accesses keep the flash latency so overlay-resident code and
        data are cycle-exact with the flash they replace.
        """
        for r in self.ranges.values():
            if r.enabled and r.contains(addr):
                dest = r.dest_page1 if self.active_page else r.dest_page0
                return ("emu", dest + (addr - r.flash_base), self.l_flash)
        return ("flash", addr, self.l_flash)

    # --- page select ---

    def set_cal_page(self, page: int):
        if page not in (0, 1):
            raise EmuConfigError("page must be 0 or 1")
        self.selected_page = page
        if not self._mid_cycle:
            self.active_page = page

    def get_cal_page(self) -> int:
        return self.selected_page

    # --- trace buffer ---

    def configure_trace(self, segments: list[int], mode: TraceMode = TraceMode.CIRCULAR):
        for seg in segments:
            self._check_segment(seg)
            if self.roles[seg] is not SegmentRole.TRACE:
                raise EmuConfigError("segment %d role is %s, not TRACE" % (seg, self.roles[seg].value))
        if not segments:
            raise EmuConfigError("trace buffer needs at least one segment")
        self.trace = TraceBuffer(self, segments, mode)
        return self.trace

    def trace_append(self, data: bytes) -> int:
        if self.trace is None:
            raise EmuConfigError("no TRACE segment configured")
        return self.trace.append(data)

    def trace_read_all(self) -> bytes:
        if self.trace is None:
            raise EmuConfigError("no TRACE segment configured")
        return self.trace.read_all()

    # --- control register window ---

    def read_reg(self, offset: int) -> int:
        if offset == REG_PAGE_SELECT:
            return self.selected_page
        rid, word = self._reg_index(offset)
        if rid is None or rid not in self.ranges:
            return 0
        r = self.ranges[rid]
        pending = self._staged_enables.get(rid, r.enabled)
        return [r.flash_base | int(pending), r.size, r.dest_page0, r.dest_page1][word]

    def write_reg(self, offset: int, value: int):
        """Control write from the bus or debug port.

        Only the page select and per-range enable bits are writable; range
        geometry is fixed by session configuration, stray writes are counted
        and dropped (a store cannot surface a config error).
        """
        if offset == REG_PAGE_SELECT:
            if value in (0, 1):
                self.set_cal_page(value)
            else:
                self.ignored_ctrl_writes += 1
            return
        rid, word = self._reg_index(offset)
        if rid is not None and word == 0 and rid in self.ranges:
            try:
                self.enable_range(rid, bool(value & 1))
                return
            except EmuConfigError:
                pass
        self.ignored_ctrl_writes += 1

    @staticmethod
    def _reg_index(offset: int) -> tuple[int | None, int]:
        block = offset // RANGE_BLOCK_STRIDE - 1
        if 0 <= block < MAX_RANGES:
            return block, (offset % RANGE_BLOCK_STRIDE) // 4
        return None, 0
