"""Minimal deterministic 32-bit ISA: instruction encoding and a line assembler.

Encoding: one little-endian 32-bit word per instruction,

    word = opcode << 24 | rd << 20 | ra << 16 | imm16

Register-register ALU ops (ADD/SUB) take their second source register rb
from imm16 bits 3:0.  Branches (BEQ/BNE/JMP) use imm16 as a signed byte
offset relative to the branch instruction's own address.  LD/ST use imm16
as a signed byte displacement off ra.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import IntEnum


class Opcode(IntEnum):
    NOP = 0x00
    LDI = 0x01
    ADD = 0x02
    SUB = 0x03
    LD = 0x04
    ST = 0x05
    BEQ = 0x06
    BNE = 0x07
    JMP = 0x08
    HALT = 0x09


# Reserved word planted by the debug host for software breakpoints in
# emulation RAM.  Not part of the assembler's instruction set; plain
# decode() rejects it like any other unknown opcode.
BRK_WORD = 0x0A000000

_BRANCH_OPS = (Opcode.BEQ, Opcode.BNE, Opcode.JMP)


class DecodeError(ValueError):
    """Raised for instruction words with an unknown opcode."""


class AsmError(ValueError):
    """Assembly error, carrying the 1-based source line number."""

    def __init__(self, line_no: int, msg: str):
        super().__init__("line %d: %s" % (line_no, msg))
        self.line_no = line_no


@dataclass(frozen=True)
class Instruction:
    opcode: Opcode
    rd: int = 0
    ra: int = 0
    imm16: int = 0

    def __post_init__(self):
        if not 0 <= self.rd <= 15:
            raise ValueError("rd out of range: %r" % (self.rd,))
        if not 0 <= self.ra <= 15:
            raise ValueError("ra out of range: %r" % (self.ra,))
        if not 0 <= self.imm16 <= 0xFFFF:
            raise ValueError("imm16 out of range: %r" % (self.imm16,))

    @property
    def rb(self) -> int:
        return self.imm16 & 0xF

    @property
    def simm16(self) -> int:
        """imm16 as a signed 16-bit value."""
        return self.imm16 - 0x10000 if self.imm16 & 0x8000 else self.imm16

    def encode(self) -> int:
        return (self.opcode << 24) | (self.rd << 20) | (self.ra << 16) | self.imm16


def decode(word: int) -> Instruction:
    op = (word >> 24) & 0xFF
    try:
        opcode = Opcode(op)
    except ValueError:
        raise DecodeError("unknown opcode 0x%02x in word 0x%08x" % (op, word)) from None
    return Instruction(opcode, (word >> 20) & 0xF, (word >> 16) & 0xF, word & 0xFFFF)


_REG_RE = re.compile(r"^[Rr](\d{1,2})$")
_LABEL_RE = re.compile(r"^([A-Za-z_.$][\w.$]*):")
_MEM_RE = re.compile(r"^(-?\w+)\((\w+)\)$")  # disp(Rn)


def _parse_reg(tok: str, line_no: int) -> int:
    m = _REG_RE.match(tok)
    if not m:
        raise AsmError(line_no, "expected register, got %r" % tok)
    n = int(m.group(1))
    if n > 15:
        raise AsmError(line_no, "register out of range: %s" % tok)
    return n


def _parse_int(tok: str, line_no: int) -> int:
    try:
        return int(tok, 0)
    except ValueError:
        raise AsmError(line_no, "bad number %r" % tok) from None


def assemble(text: str, base: int = 0) -> tuple[bytes, dict]:
    """Assemble source text into a program image relocated to `base`.

    Returns (image bytes, symbol table).  Labels may be used as branch and
    jump targets; numeric targets are absolute byte addresses.  A `.word N`
    directive emits a raw data word.
    """
    # pass 1: strip comments, collect labels and statement list
    stmts = []  # (line_no, addr, mnemonic, [operands])
    symbols: dict[str, int] = {}
    addr = base
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";")[0].split("#")[0].strip()
        while True:
            m = _LABEL_RE.match(line)
            if not m:
                break
            label = m.group(1)
            if label in symbols:
                raise AsmError(line_no, "duplicate label %r" % label)
            symbols[label] = addr
            line = line[m.end():].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        stmts.append((line_no, addr, parts[0].upper(), parts[1:]))
        addr += 4

    # pass 2: encode
    words = []
    for line_no, addr, mnem, ops in stmts:
        words.append(_encode_stmt(line_no, addr, mnem, ops, symbols))
    image = b"".join(w.to_bytes(4, "little") for w in words)
    return image, symbols


def _resolve_target(tok: str, symbols: dict, line_no: int) -> int:
    if tok in symbols:
        return symbols[tok]
    try:
        return int(tok, 0)
    except ValueError:
        raise AsmError(line_no, "undefined label %r" % tok) from None


def _branch_off(target: int, addr: int, line_no: int) -> int:
    off = target - addr
    if not -0x8000 <= off <= 0x7FFF:
        raise AsmError(line_no, "branch offset %d not representable" % off)
    return off & 0xFFFF


def _imm16(value: int, line_no: int) -> int:
    if not -0x8000 <= value <= 0xFFFF:
        raise AsmError(line_no, "immediate %d not representable in 16 bits" % value)
    return value & 0xFFFF


def _encode_stmt(line_no, addr, mnem, ops, symbols) -> int:
    def need(n):
        if len(ops) != n:
            raise AsmError(line_no, "%s takes %d operand(s), got %d" % (mnem, n, len(ops)))

    if mnem == ".WORD":
        need(1)
        return _resolve_target(ops[0], symbols, line_no) & 0xFFFFFFFF
    try:
        opcode = Opcode[mnem]
    except KeyError:
        raise AsmError(line_no, "unknown mnemonic %r" % mnem) from None

    if opcode in (Opcode.NOP, Opcode.HALT):
        need(0)
        return Instruction(opcode).encode()
    if opcode == Opcode.LDI:
        need(2)
        rd = _parse_reg(ops[0], line_no)
        return Instruction(opcode, rd, 0, _imm16(_parse_int(ops[1], line_no), line_no)).encode()
    if opcode in (Opcode.ADD, Opcode.SUB):
        need(3)
        rd = _parse_reg(ops[0], line_no)
        ra = _parse_reg(ops[1], line_no)
        rb = _parse_reg(ops[2], line_no)
        return Instruction(opcode, rd, ra, rb).encode()
    if opcode in (Opcode.LD, Opcode.ST):
        need(2)
        rd = _parse_reg(ops[0], line_no)
        m = _MEM_RE.match(ops[1])
        if not m:
            raise AsmError(line_no, "expected disp(Rn), got %r" % ops[1])
        disp = _parse_int(m.group(1), line_no)
        ra = _parse_reg(m.group(2), line_no)
        return Instruction(opcode, rd, ra, _imm16(disp, line_no)).encode()
    if opcode in (Opcode.BEQ, Opcode.BNE):
        need(3)
        rd = _parse_reg(ops[0], line_no)
        ra = _parse_reg(ops[1], line_no)
        target = _resolve_target(ops[2], symbols, line_no)
        return Instruction(opcode, rd, ra, _branch_off(target, addr, line_no)).encode()
    if opcode == Opcode.JMP:
        need(1)
        target = _resolve_target(ops[0], symbols, line_no)
        return Instruction(opcode, 0, 0, _branch_off(target, addr, line_no)).encode()
    raise AsmError(line_no, "unhandled mnemonic %r" % mnem)


def write_image(path, image: bytes, base: int, symbols: dict | None = None):
    """Write a raw image plus its JSON sidecar ({base_address, symbols})."""
    with open(path, "wb") as f:
        f.write(image)
    sidecar = {"base_address": base, "symbols": symbols or {}}
    with open(str(path) + ".json", "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")


def read_sidecar(path) -> dict:
    with open(str(path) + ".json") as f:
        return json.load(f)
