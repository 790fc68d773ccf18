from __future__ import annotations

import pytest
from hypothesis import given, settings

from dexlift import isa
from dexlift.isa import (
    FORMATS, NORMAL, ODEX, OPCODES, UNUSED, BadPayload, DecodeError, FieldOverflow,
    FillArrayPayload, Instruction, PackedSwitchPayload, SparseSwitchPayload, TruncatedInstruction,
    UnknownOpcode, UnsupportedOpcode, decode_stream, encode, encode_instruction, format_instruction,
)
from helpers import androguard_dex
from strategies import instruction_sequences


def op(mnemonic):
    return isa.BY_MNEMONIC[mnemonic]


def test_table_partition():
    assert len(OPCODES) == 256
    kinds = [o.kind for o in OPCODES]
    assert kinds.count(NORMAL) == 218
    assert kinds.count(ODEX) == 12
    assert kinds.count(UNUSED) == 26
    assert all(OPCODES[v].value == v for v in range(256))


def test_odex_opcodes_are_the_optimizer_set():
    odex = {o.value for o in OPCODES if o.kind == ODEX}
    assert odex == {0xEE, 0xF0, *range(0xF2, 0xFC)}
    assert OPCODES[0xF2].mnemonic == "iget-quick"
    assert OPCODES[0xF8].mnemonic == "invoke-virtual-quick"


def test_normal_table_matches_androguard():
    pytest.importorskip("androguard")
    androguard_dex()
    from androguard.core.dex import DALVIK_OPCODES_FORMAT

    for o in OPCODES:
        if o.kind != NORMAL:
            continue
        cls, info = DALVIK_OPCODES_FORMAT[o.value]
        assert info[0] == o.mnemonic, hex(o.value)
        assert cls.__name__ == "Instruction" + o.format, o.mnemonic


def test_groups():
    assert op("move-object").group == isa.MOVE
    assert op("goto/32").group == isa.BRANCH
    assert op("sput-short").group == isa.FIELD_ACCESS
    assert op("invoke-interface/range").group == isa.INVOKE
    assert op("rem-double/2addr").group == isa.ARITH_LOGIC
    assert op("monitor-enter").group == isa.OTHER


# Hand-encoded units, checked against the published Dalvik instruction layout.
KNOWN = [
    ([0x1112], "const/4", (1,), 1, None),
    ([0xF012], "const/4", (0,), -1, None),
    ([0x0015, 0x3F80], "const/high16", (0,), 0x3F800000, None),
    ([0x0019, 0x4000], "const-wide/high16", (0,), 0x4000 << 48, None),
    ([0x0313, 0xFFFE], "const/16", (3,), -2, None),
    ([0x0214, 0x5678, 0x1234], "const", (2,), 0x12345678, None),
    ([0x0018, 0x0001, 0, 0, 0x8000], "const-wide", (0,), -(2**63) + 1, None),
    ([0x0038, 0x0008], "if-eqz", (0,), None, 8),
    ([0xF928], "goto", (), None, -7),
    ([0x00D8, 0x7F02], "add-int/lit8", (0, 2), 127, None),
    ([0xFFDA, 0x8001], "mul-int/lit8", (0xFF, 1), -128, None),
]


@pytest.mark.parametrize("units,mnemonic,regs,literal,offset", KNOWN)
def test_decode_known_units(units, mnemonic, regs, literal, offset):
    (ins,) = decode_stream(units)
    assert ins.mnemonic == mnemonic
    assert ins.registers == regs
    assert ins.literal == literal
    assert ins.branch_offset == offset
    assert ins.width == len(units)
    assert encode([ins]) == units


def test_decode_23x_and_35c():
    (ins,) = decode_stream([0x0090, 0x0201])
    assert ins.mnemonic == "add-int" and ins.registers == (0, 1, 2)
    (inv,) = decode_stream([0x3070, 0x0007, 0x1110])
    assert inv.mnemonic == "invoke-direct"
    assert inv.registers == (0, 1, 1)
    assert inv.pool_index == (isa.METHOD, 7)
    (rng,) = decode_stream([0x0376, 0x0002, 0x0010])
    assert rng.registers == (16, 17, 18)


def test_payloads_attach_to_owner():
    units = [0x002B, 0x0004, 0x0000]  # packed-switch v0, +4
    units += [0x0000]  # nop padding to the payload
    units += [0x0100, 2, 5, 0, 0xFFFC, 0xFFFF, 0x0003, 0]
    got = decode_stream(units)
    assert got[0].payload == PackedSwitchPayload(5, (-4, 3))
    assert got[-1].is_payload
    assert got[0].target == got[-1].address


def test_sparse_and_fill_payloads():
    sp = Instruction(isa.SPARSE_SWITCH_PAYLOAD, address=4, width=6, payload=SparseSwitchPayload((-1, 9), (10, 20)))
    sp_units = encode_instruction(sp)
    assert sp_units[:2] == [0x0200, 2]
    fa = FillArrayPayload(1, bytes([0xFF, 0x7F, 0x80]))
    assert list(fa.elements()) == [0xFF, 0x7F, 0x80]
    owner = Instruction(op("fill-array-data"), (0,), branch_offset=4, width=3, payload=fa)
    units = encode([owner, Instruction(op("nop"), address=3), Instruction(isa.FILL_ARRAY_DATA_PAYLOAD, address=4, width=fa.width, payload=fa)])
    got = decode_stream(units)
    assert got[0].payload == fa


def test_sparse_keys_must_ascend():
    with pytest.raises(ValueError):
        SparseSwitchPayload((3, 1), (0, 0))
    units = [0x0200, 2, 3, 0, 1, 0, 0, 0, 0, 0]
    with pytest.raises(BadPayload):
        decode_stream(units)


def test_odex_and_unused_errors():
    with pytest.raises(UnsupportedOpcode) as e:
        decode_stream([0x0000, 0x10F2, 0x0008])
    assert e.value.value == 0xF2 and e.value.address == 1
    assert "iget-quick" in str(e.value)
    with pytest.raises(UnknownOpcode) as e2:
        decode_stream([0x003E])
    assert e2.value.value == 0x3E


def test_truncation_and_bad_pointer():
    with pytest.raises(TruncatedInstruction):
        decode_stream([0x0014, 0x0001])
    with pytest.raises(BadPayload):
        decode_stream([0x002B, 0x0003, 0x0000, 0x0000])
    with pytest.raises(BadPayload):
        decode_stream([0x0500])  # nop with a nonzero high byte that is not a payload ident
    with pytest.raises(DecodeError):
        decode_stream([0x6070, 0, 0])  # invoke with six registers


def test_encoder_rejects_overflow():
    with pytest.raises(FieldOverflow):
        encode_instruction(Instruction(op("const/4"), (0,), literal=8))
    with pytest.raises(FieldOverflow):
        encode_instruction(Instruction(op("move"), (16, 0)))
    with pytest.raises(FieldOverflow):
        encode_instruction(Instruction(op("const/high16"), (0,), literal=0x12345, width=2))
    with pytest.raises(FieldOverflow):
        encode_instruction(Instruction(op("invoke-static/range"), (1, 3), pool_index=(isa.METHOD, 0), width=3))


def test_format_instruction():
    (ins,) = decode_stream([0x3070, 0x0007, 0x1110])
    assert format_instruction(ins) == "invoke-direct {v0, v1, v1}, method@7"
    assert format_instruction(ins, lambda k, i: "LC;.<init>:(II)V") == "invoke-direct {v0, v1, v1}, LC;.<init>:(II)V"
    (c,) = decode_stream([0x0019, 0x3FF0])
    assert format_instruction(c) == f"const-wide/high16 v0, #long {0x3FF0 << 48}"


def test_formats_are_consistent():
    for fmt in FORMATS.values():
        for name, unit, shift, bits, _signed in fmt.fields:
            assert unit < fmt.width
            assert shift + min(bits, 16) <= 16


@settings(max_examples=200, deadline=None)
@given(instruction_sequences())
def test_roundtrip(seq):
    units = encode(seq)
    assert decode_stream(units) == seq
    assert encode(decode_stream(units)) == units


def test_decoder_agrees_with_androguard(corpus_dex):
    DEX = androguard_dex()
    from corpus import build_corpus

    theirs = {}
    for c in DEX(build_corpus()).get_classes():
        for m in c.get_methods():
            names = [(i.get_name(), i.get_length() // 2) for i in m.get_instructions()]
            theirs[(c.get_name(), m.get_name(), m.get_descriptor().replace(" ", ""))] = names
    checked = 0
    for cls, m in corpus_dex.iter_methods():
        if m.code is None:
            continue
        key = (cls.this_type, m.method.name, m.method.signature)
        ours = [(i.mnemonic, i.width) for i in decode_stream(m.code.insns) if not i.is_payload]
        assert [x for x in theirs[key] if "payload" not in x[0]] == ours, key
        checked += 1
    assert checked > 40
