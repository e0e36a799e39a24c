"""Independent oracles used to cross-check the simulator and trace codec.

The architectural interpreter here deliberately re-implements instruction
semantics from the encoding definition, with no bus, latency or debug
modeling, so machine and codec results can be checked against a much
simpler second implementation.
"""

RAM_BASE = 0x2000_0000
MASK32 = 0xFFFF_FFFF


def _sext16(v):
    return v - 0x10000 if v & 0x8000 else v


def interpret(image: bytes, base: int = 0, max_retires: int = 100000,
              init_regs=None, ram=None):
    """Architecturally execute an image on one core.

    Returns (retires, data, regs) where retires is a list of
    (pc, taken, target_or_None) and data a list of (addr, value, size, write).
    Execution stops at HALT, at any fault, or after max_retires.
    """
    regs = [0] * 16
    if init_regs:
        for i, v in init_regs.items():
            regs[i] = v & MASK32
    mem = dict(ram or {})  # word-addressed RAM content
    pc = base
    retires = []
    data = []

    def flash_word(addr):
        off = addr - 0  # flash at 0
        if 0 <= off and off + 4 <= len(image) + base and off >= base:
            i = off - base
            return int.from_bytes(image[i:i + 4], "little")
        return None

    while len(retires) < max_retires:
        word = flash_word(pc)
        if word is None or pc % 4:
            break  # fault
        op = (word >> 24) & 0xFF
        rd = (word >> 20) & 0xF
        ra = (word >> 16) & 0xF
        imm = word & 0xFFFF
        rb = imm & 0xF

        def setr(i, v):
            if i != 0:
                regs[i] = v & MASK32

        if op == 0x00:  # NOP
            retires.append((pc, False, None)); pc += 4
        elif op == 0x01:  # LDI
            setr(rd, imm)
            retires.append((pc, False, None)); pc += 4
        elif op == 0x02:  # ADD
            setr(rd, regs[ra] + regs[rb])
            retires.append((pc, False, None)); pc += 4
        elif op == 0x03:  # SUB
            setr(rd, regs[ra] - regs[rb])
            retires.append((pc, False, None)); pc += 4
        elif op == 0x04:  # LD
            addr = (regs[ra] + _sext16(imm)) & MASK32
            if addr % 4:
                break
            if addr >= RAM_BASE:
                value = mem.get(addr, 0)
            else:
                value = flash_word(addr)
                if value is None:
                    value = 0
            setr(rd, value)
            retires.append((pc, False, None))
            data.append((addr, value, 4, False))
            pc += 4
        elif op == 0x05:  # ST
            addr = (regs[ra] + _sext16(imm)) & MASK32
            if addr % 4 or addr < RAM_BASE:
                break
            mem[addr] = regs[rd]
            retires.append((pc, False, None))
            data.append((addr, regs[rd], 4, True))
            pc += 4
        elif op in (0x06, 0x07, 0x08):  # BEQ/BNE/JMP
            if op == 0x08:
                taken = True
            elif op == 0x06:
                taken = regs[rd] == regs[ra]
            else:
                taken = regs[rd] != regs[ra]
            target = (pc + _sext16(imm)) & MASK32 if taken else None
            retires.append((pc, taken, target))
            pc = target if taken else pc + 4
        elif op == 0x09:  # HALT
            retires.append((pc, False, None))
            break
        else:
            break  # decode fault
    return retires, data, regs


def taken_count(retires):
    return sum(1 for _, taken, _ in retires if taken)


def unwrap_cycle_bruteforce(last_full: int, ts: int, width: int) -> int:
    """Enumerate candidate full cycles >= last_full matching ts mod 2^width;
    returns the smallest (the unique answer under the sync preconditions)."""
    span = 1 << width
    for candidate in range(last_full, last_full + span):
        if candidate % span == ts:
            return candidate
    raise AssertionError("unreachable")
