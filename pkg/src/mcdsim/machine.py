"""Deterministic multi-master target: cores plus a DMA engine on one shared bus.

Timing model, fixed for reproducibility:
  - One instruction in flight per core.  Non-memory instructions retire in
    their issue cycle.  Fetches are free (ideal prefetch) but read through
    the overlay translation for content.
  - Memory instructions request the shared bus; at most one transaction is
    granted per cycle, round-robin from the `bus_grant` cursor, and the bus
    stays busy for the region latency.  Stores retire at their grant cycle
    (posted write); loads retire `latency` cycles after grant.
  - Within a cycle masters are processed in fixed order: core 0 .. core N,
    then DMA.

The machine itself contains no trigger or trace logic: debug actions arrive
through the per-cycle action feed of step(), and the debug port accessors
consume zero target cycles, so attaching debug infrastructure can never
perturb target behavior.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .isa import Opcode, BRK_WORD, decode, DecodeError
from .emumem import EmuRam, CTRL_WINDOW_SIZE

FLASH_BASE = 0x0000_0000
RAM_BASE = 0x2000_0000
EMU_DATA_BASE = 0xE000_0000
EMU_CTRL_BASE = 0xF000_0000

DEFAULT_FLASH_SIZE = 2 * 1024 * 1024
DEFAULT_RAM_SIZE = 1024 * 1024
L_FLASH = 2
L_RAM = 1
L_EMU = 1

MASK32 = 0xFFFF_FFFF


class CoreMode(Enum):
    RUNNING = "RUNNING"
    HALTED_BREAK = "HALTED_BREAK"
    DONE = "DONE"


class MemoryAccessError(Exception):
    """Unmapped or misaligned debug-port access."""


@dataclass(frozen=True)
class RetireEvent:
    source: int
    pc: int
    taken: bool = False
    target: int | None = None


@dataclass(frozen=True)
class DataEvent:
    source: int
    addr: int
    value: int
    size: int
    write: bool


@dataclass(frozen=True)
class CycleEvents:
    cycle: int
    retires: tuple[RetireEvent, ...] = ()
    data: tuple[DataEvent, ...] = ()
    grant: int | None = None


@dataclass
class _BusRequest:
    write: bool
    addr: int
    size: int
    value: int  # store data (ignored for reads)
    space: tuple  # routed (space, offset, latency)
    rd: int = 0  # destination register for loads


class Core:
    def __init__(self, core_id: int, boot_pc: int = 0):
        self.id = core_id
        self.boot_pc = boot_pc
        self.reset()

    def reset(self):
        self.regs = [0] * 16
        self.pc = self.boot_pc
        self.mode = CoreMode.RUNNING
        self.stall_cycles = 0
        self.fault: str | None = None
        self.break_pending = False
        self.retired = 0
        # in-flight state
        self._request: _BusRequest | None = None
        self._pending = None  # (rd, value, addr, size, next_pc) for a granted load

    def _set_reg(self, idx, value):
        if idx != 0:
            self.regs[idx] = value & MASK32

    def _fault(self, reason):
        self.mode = CoreMode.DONE
        self.fault = reason

    def tick(self, machine: "Machine", cycle: int, retires: list, data: list):
        if self.mode is not CoreMode.RUNNING:
            return
        if self._pending is not None:
            if self.stall_cycles > 0:
                self.stall_cycles -= 1
                return
            rd, value, addr, size, next_pc = self._pending
            self._set_reg(rd, value)
            retires.append(RetireEvent(self.id, self.pc))
            data.append(DataEvent(self.id, addr, value, size, False))
            self.retired += 1
            self.pc = next_pc
            self._pending = None
            return
        if self._request is not None:
            return  # waiting for bus grant
        # instruction boundary
        if self.break_pending:
            self.break_pending = False
            self.mode = CoreMode.HALTED_BREAK
            return
        self._issue(machine, cycle, retires)

    def _issue(self, machine, cycle, retires):
        word = machine._fetch_word(self.pc)
        if word is None:
            self._fault("fetch fault at 0x%08x" % self.pc)
            return
        if word == BRK_WORD:
            # software breakpoint planted in emulation RAM; halt without retiring
            self.mode = CoreMode.HALTED_BREAK
            return
        try:
            ins = decode(word)
        except DecodeError:
            self._fault("decode fault at 0x%08x (word 0x%08x)" % (self.pc, word))
            return
        op = ins.opcode
        if op is Opcode.NOP:
            self._retire_simple(retires)
        elif op is Opcode.LDI:
            self._set_reg(ins.rd, ins.imm16)
            self._retire_simple(retires)
        elif op is Opcode.ADD:
            self._set_reg(ins.rd, self.regs[ins.ra] + self.regs[ins.rb])
            self._retire_simple(retires)
        elif op is Opcode.SUB:
            self._set_reg(ins.rd, self.regs[ins.ra] - self.regs[ins.rb])
            self._retire_simple(retires)
        elif op is Opcode.HALT:
            retires.append(RetireEvent(self.id, self.pc))
            self.retired += 1
            self.mode = CoreMode.DONE
        elif op in (Opcode.BEQ, Opcode.BNE, Opcode.JMP):
            if op is Opcode.JMP:
                taken = True
            elif op is Opcode.BEQ:
                taken = self.regs[ins.rd] == self.regs[ins.ra]
            else:
                taken = self.regs[ins.rd] != self.regs[ins.ra]
            target = (self.pc + ins.simm16) & MASK32 if taken else None
            retires.append(RetireEvent(self.id, self.pc, taken, target))
            self.retired += 1
            self.pc = target if taken else (self.pc + 4) & MASK32
        elif op in (Opcode.LD, Opcode.ST):
            addr = (self.regs[ins.ra] + ins.simm16) & MASK32
            if addr % 4 != 0:
                self._fault("misaligned access at 0x%08x" % addr)
                return
            route = machine._route(addr)
            if route is None:
                self._fault("unmapped access at 0x%08x" % addr)
                return
            if op is Opcode.ST and route[0] == "flash":
                self._fault("store to flash at 0x%08x" % addr)
                return
            self._request = _BusRequest(
                write=(op is Opcode.ST),
                addr=addr,
                size=4,
                value=self.regs[ins.rd],
                space=route,
                rd=ins.rd,
            )
        else:  # pragma: no cover - opcode table is closed
            self._fault("unhandled opcode %s" % op)

    def _retire_simple(self, retires):
        retires.append(RetireEvent(self.id, self.pc))
        self.retired += 1
        self.pc = (self.pc + 4) & MASK32

    def bus_granted(self, machine, cycle, retires, data):
        req = self._request
        self._request = None
        if req.write:
            machine._space_write(req.space, req.value, req.size)
            retires.append(RetireEvent(self.id, self.pc))
            data.append(DataEvent(self.id, req.addr, req.value, req.size, True))
            self.retired += 1
            self.pc = (self.pc + 4) & MASK32
        else:
            value = machine._space_read(req.space, req.size)
            # load data returns `latency` cycles after grant
            self.stall_cycles = req.space[2] - 1
            self._pending = (req.rd, value, req.addr, req.size, (self.pc + 4) & MASK32)

    @property
    def request(self):
        return self._request


@dataclass
class DmaConfig:
    src: int = 0
    dst: int = 0
    words: int = 0
    active: bool = False


class Dma:
    """Single-channel word-copy engine; each word is one read then one write
    bus transaction, so DMA traffic interleaves fairly with core traffic."""

    def __init__(self, source_id: int, config: DmaConfig):
        self.id = source_id
        self.config = config
        self.reset()

    def reset(self):
        self.src = self.config.src
        self.dst = self.config.dst
        self.remaining = self.config.words if self.config.active else 0
        self.active = self.config.active and self.config.words > 0
        self.suspended = False
        self.stall_cycles = 0
        self._request: _BusRequest | None = None
        self._pending = None  # (value, addr) read in flight
        self._hold = None  # word value waiting to be written

    def tick(self, machine, cycle, retires, data):
        if self._pending is not None:
            if self.stall_cycles > 0:
                self.stall_cycles -= 1
                return
            value, addr = self._pending
            data.append(DataEvent(self.id, addr, value, 4, False))
            self._hold = value
            self._pending = None
            return
        if self._request is not None:
            return
        if not self.active or self.suspended:
            return
        if self._hold is not None:
            route = machine._route(self.dst)
            if route is None or route[0] == "flash":
                self.active = False
                return
            self._request = _BusRequest(True, self.dst, 4, self._hold, route)
        elif self.remaining > 0:
            route = machine._route(self.src)
            if route is None:
                self.active = False
                return
            self._request = _BusRequest(False, self.src, 4, 0, route)

    def bus_granted(self, machine, cycle, retires, data):
        req = self._request
        self._request = None
        if req.write:
            machine._space_write(req.space, req.value, req.size)
            data.append(DataEvent(self.id, req.addr, req.value, req.size, True))
            self._hold = None
            self.src = (self.src + 4) & MASK32
            self.dst = (self.dst + 4) & MASK32
            self.remaining -= 1
            if self.remaining == 0:
                self.active = False
        else:
            value = machine._space_read(req.space, req.size)
            self.stall_cycles = req.space[2] - 1
            self._pending = (value, req.addr)

    @property
    def request(self):
        return self._request


class Machine:
    def __init__(self, num_cores: int = 1, boot_pcs: list[int] | None = None,
                 flash_size: int = DEFAULT_FLASH_SIZE, ram_size: int = DEFAULT_RAM_SIZE,
                 emu: EmuRam | None = None, dma: DmaConfig | None = None,
                 l_flash: int = L_FLASH):
        boot_pcs = boot_pcs or [0] * num_cores
        if len(boot_pcs) != num_cores:
            raise ValueError("need one boot pc per core")
        self.cores = [Core(i, boot_pcs[i]) for i in range(num_cores)]
        self.dma = Dma(num_cores, dma or DmaConfig())
        self.flash = bytearray(flash_size)
        self.ram = bytearray(ram_size)
        self.emu = emu
        self.l_flash = l_flash
        if emu is not None:
            emu.l_flash = l_flash
        self.cycle = 0
        self.bus_grant = 0  # round-robin cursor over [cores..., dma]
        self._bus_free_at = 0
        self._masters = self.cores + [self.dma]

    @property
    def dma_source(self) -> int:
        return self.dma.id

    # --- address routing ---

    def _route(self, addr):
        """(space, offset, latency) for a mapped address, else None."""
        if FLASH_BASE <= addr < FLASH_BASE + len(self.flash):
            if self.emu is not None:
                space, off, lat = self.emu.translate(addr)
                if space == "emu":
                    return ("emu", off, lat)
            return ("flash", addr - FLASH_BASE, self.l_flash)
        if RAM_BASE <= addr < RAM_BASE + len(self.ram):
            return ("ram", addr - RAM_BASE, L_RAM)
        if self.emu is not None:
            if EMU_DATA_BASE <= addr < EMU_DATA_BASE + self.emu.size:
                return ("emu", addr - EMU_DATA_BASE, L_EMU)
            if EMU_CTRL_BASE <= addr < EMU_CTRL_BASE + CTRL_WINDOW_SIZE:
                return ("ctrl", addr - EMU_CTRL_BASE, L_EMU)
        return None

    def _space_read(self, space, size) -> int:
        kind, off, _ = space
        if kind == "flash":
            return int.from_bytes(self.flash[off:off + size], "little")
        if kind == "ram":
            return int.from_bytes(self.ram[off:off + size], "little")
        if kind == "emu":
            return int.from_bytes(self.emu.data[off:off + size], "little")
        if kind == "ctrl":
            return self.emu.read_reg(off) & MASK32
        raise AssertionError(kind)

    def _space_write(self, space, value, size):
        kind, off, _ = space
        blob = (value & ((1 << (8 * size)) - 1)).to_bytes(size, "little")
        if kind == "ram":
            self.ram[off:off + size] = blob
        elif kind == "emu":
            self.emu.data[off:off + size] = blob
        elif kind == "ctrl":
            self.emu.write_reg(off, value & MASK32)
        elif kind == "flash":
            self.flash[off:off + size] = blob  # debug-port load path only
        else:  # pragma: no cover
            raise AssertionError(kind)

    def _fetch_word(self, pc):
        if pc % 4 != 0:
            return None
        route = self._route(pc)
        if route is None or route[0] == "ctrl":
            return None
        return self._space_read(route, 4)

    # --- stepping ---

    def step(self, n: int, actions_by_cycle: dict | None = None) -> list[CycleEvents]:
        """Advance exactly n cycles; returns one CycleEvents per cycle.

        actions_by_cycle maps cycle -> iterable of debug actions, each
        ('break', core_id) | ('suspend', master_id) | ('resume', master_id).
        """
        if n < 1:
            raise ValueError("n must be >= 1")
        out = []
        for _ in range(n):
            due = () if actions_by_cycle is None else actions_by_cycle.get(self.cycle, ())
            out.append(self.step_cycle(due))
        return out

    def step_cycle(self, due_actions=()) -> CycleEvents:
        c = self.cycle
        if self.emu is not None:
            self.emu.begin_cycle()
        for act in due_actions:
            self.apply_debug_action(act)
        retires: list[RetireEvent] = []
        data: list[DataEvent] = []
        for m in self._masters:
            m.tick(self, c, retires, data)
        grant = None
        if c >= self._bus_free_at:
            n = len(self._masters)
            for k in range(n):
                idx = (self.bus_grant + k) % n
                m = self._masters[idx]
                if m.request is not None:
                    latency = m.request.space[2]
                    self._bus_free_at = c + latency
                    self.bus_grant = (idx + 1) % n
                    m.bus_granted(self, c, retires, data)
                    grant = m.id
                    break
        if self.emu is not None:
            self.emu.end_cycle()
        self.cycle = c + 1
        return CycleEvents(c, tuple(retires), tuple(data), grant)

    def apply_debug_action(self, act):
        kind, target = act[0], act[1]
        if kind == "break":
            core = self.cores[target]
            if core.mode is CoreMode.RUNNING:
                core.break_pending = True
        elif kind == "suspend":
            if target == self.dma.id:
                self.dma.suspended = True
        elif kind == "resume":
            if target == self.dma.id:
                self.dma.suspended = False
            else:
                core = self.cores[target]
                if core.mode is CoreMode.HALTED_BREAK:
                    core.mode = CoreMode.RUNNING
        else:
            raise ValueError("unknown debug action %r" % (kind,))

    def all_done(self) -> bool:
        return all(c.mode is CoreMode.DONE for c in self.cores)

    def any_broken(self) -> bool:
        return any(c.mode is CoreMode.HALTED_BREAK for c in self.cores)

    # --- debug port: zero-intrusion reads and writes ---

    def debug_read(self, addr: int, length: int) -> bytes:
        out = bytearray()
        for i in range(length):
            route = self._route(addr + i)
            if route is None:
                raise MemoryAccessError("unmapped address 0x%08x" % (addr + i))
            if route[0] == "ctrl":
                reg = self.emu.read_reg(route[1] & ~3)
                out.append((reg >> (8 * (route[1] & 3))) & 0xFF)
            else:
                out.append(self._space_read(route, 1))
        return bytes(out)

    def debug_write(self, addr: int, payload: bytes):
        # validate the whole range first: partial access never performed
        routes = []
        for i in range(len(payload)):
            route = self._route(addr + i)
            if route is None:
                raise MemoryAccessError("unmapped address 0x%08x" % (addr + i))
            routes.append(route)
        for route, b in zip(routes, payload):
            if route[0] == "ctrl":
                if route[1] % 4 != 0:
                    raise MemoryAccessError("control registers take word-aligned writes")
                self.emu.write_reg(route[1], b)
            else:
                self._space_write(route, b, 1)

    def load_flash(self, base: int, image: bytes):
        off = base - FLASH_BASE
        if off < 0 or off + len(image) > len(self.flash):
            raise MemoryAccessError("image [0x%x, +0x%x) outside flash" % (base, len(image)))
        self.flash[off:off + len(image)] = image

    def reset(self):
        """Target reset: cores, RAM, DMA, cycle counter.  Flash contents and
        the emulation memory (separate power domain) are preserved."""
        for core in self.cores:
            core.reset()
        self.dma.reset()
        self.ram = bytearray(len(self.ram))
        self.cycle = 0
        self.bus_grant = 0
        self._bus_free_at = 0
