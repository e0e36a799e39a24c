import pytest

from mcdsim.isa import (
    AsmError, DecodeError, Instruction, Opcode, assemble, decode,
)


def test_ldi_encoding_matches_defined_layout():
    image, _ = assemble("LDI R1, 5")
    assert image == (0x01100005).to_bytes(4, "little")


def test_nop_encodes_to_zero_word():
    image, _ = assemble("NOP")
    assert image == b"\x00\x00\x00\x00"


def test_halt_encoding():
    image, _ = assemble("HALT")
    assert image == (0x09000000).to_bytes(4, "little")


def test_decode_inverts_encode():
    for op in Opcode:
        ins = Instruction(op, rd=3, ra=7, imm16=0xBEEF)
        assert decode(ins.encode()) == ins


def test_unknown_opcode_is_decode_error():
    with pytest.raises(DecodeError):
        decode(0xFF000000)


def test_labels_resolve_relative_to_instruction():
    image, symbols = assemble(
        """
        LDI R1, 1
        loop: SUB R2, R2, R1
        BNE R2, R0, loop
        HALT
        """
    )
    assert symbols["loop"] == 4
    bne = decode(int.from_bytes(image[8:12], "little"))
    assert bne.opcode is Opcode.BNE
    assert bne.simm16 == -4  # offset from the BNE back to `loop`


def test_assemble_relocates_to_base():
    _, symbols = assemble("entry: NOP\nJMP entry", base=0x1000)
    assert symbols["entry"] == 0x1000


def test_errors_carry_line_numbers():
    with pytest.raises(AsmError, match="line 2"):
        assemble("NOP\nFROB R1, R2")
    with pytest.raises(AsmError, match="register out of range"):
        assemble("LDI R16, 1")
    with pytest.raises(AsmError, match="not representable"):
        assemble("JMP 0x100000")
    with pytest.raises(AsmError, match="undefined label"):
        assemble("JMP nowhere")


def test_word_directive_and_comments():
    image, _ = assemble(".word 0x12345678  ; data\n# full-line comment\nNOP")
    assert image[:4] == (0x12345678).to_bytes(4, "little")
    assert len(image) == 8
