import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracle importable

from mcdsim.isa import assemble
from mcdsim.machine import Machine, RAM_BASE


@pytest.fixture
def asm():
    return assemble


def build_machine(source: str, base: int = 0, **kw) -> Machine:
    image, _ = assemble(source, base)
    m = Machine(boot_pcs=[base], **kw)
    m.load_flash(base, image)
    return m


def random_program(rng: random.Random, n_instr: int = 40, ram_slot: int = 0) -> str:
    """Seeded random but always-terminating program: straight-line ALU and
    RAM traffic plus a bounded countdown loop."""
    ram = RAM_BASE + 0x1000 * ram_slot
    lines = [
        "LDI R1, %d" % rng.randrange(1, 200),
        "LDI R2, 1",
        "LDI R3, %d" % rng.randrange(2, 9),  # loop count
        "LDI R10, %d" % (ram & 0xFFFF),
        # build RAM base pointer: R10 = RAM_BASE + slot offset via shifts is
        # unavailable; use LDI high half trick: store in R10 low, add base via
        # repeated ADD of a preloaded register is overkill; instead loads and
        # stores use absolute small offsets off R0 only when base fits.
    ]
    # R11 <- ram pointer composed by arithmetic: LDI caps at 16 bits, so
    # synthesize RAM_BASE (0x2000_0000) by doubling: 1 << 29 = 2^29.
    lines += [
        "LDI R11, 2",
    ]
    for _ in range(28):  # R11 = 2 << 28 = 0x2000_0000
        lines.append("ADD R11, R11, R11")
    if ram_slot:
        lines.append("LDI R12, %d" % (0x1000 * ram_slot))
        lines.append("ADD R11, R11, R12")
    scratch = (1, 4, 5, 6, 7, 8, 9)  # R2/R3 drive the loop, R11/R12 hold pointers
    body = []
    for _ in range(n_instr):
        pick = rng.random()
        if pick < 0.35:
            body.append("ADD R%d, R%d, R%d" % (rng.choice(scratch), rng.randrange(0, 10), rng.randrange(0, 10)))
        elif pick < 0.5:
            body.append("SUB R%d, R%d, R%d" % (rng.choice(scratch), rng.randrange(0, 10), rng.randrange(0, 10)))
        elif pick < 0.65:
            body.append("LDI R%d, %d" % (rng.choice(scratch), rng.randrange(0, 0xFFFF)))
        elif pick < 0.8:
            body.append("ST R%d, %d(R11)" % (rng.randrange(0, 10), 4 * rng.randrange(0, 64)))
        elif pick < 0.92:
            body.append("LD R%d, %d(R11)" % (rng.choice(scratch), 4 * rng.randrange(0, 64)))
        else:
            body.append("NOP")
    lines.append("loop:")
    lines += body
    lines += [
        "SUB R3, R3, R2",
        "BNE R3, R0, loop",
        "HALT",
    ]
    return "\n".join(lines)
