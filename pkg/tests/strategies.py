"""Hypothesis strategies for well-formed instruction sequences."""

from __future__ import annotations

from hypothesis import strategies as st

from dexlift import isa
from dexlift.isa import FORMATS, NORMAL, OPCODES, FillArrayPayload, Instruction, PackedSwitchPayload, SparseSwitchPayload

PAYLOAD_OWNERS = {"packed-switch", "sparse-switch", "fill-array-data"}
PLAIN_OPS = [o for o in OPCODES if o.kind == NORMAL and o.mnemonic not in PAYLOAD_OWNERS]
OWNER_OPS = [o for o in OPCODES if o.mnemonic in PAYLOAD_OWNERS]


def _signed(bits):
    return st.integers(-(1 << (bits - 1)), (1 << (bits - 1)) - 1)


@st.composite
def _fields(draw, op):
    """(registers, literal, pool_index) for one opcode; offsets are filled in later."""
    fmt = FORMATS[op.format]
    names = {f[0]: f for f in fmt.fields}
    if fmt.name == "35c":
        regs = tuple(draw(st.lists(st.integers(0, 15), max_size=5)))
    elif fmt.name == "3rc":
        count = draw(st.integers(0, 255))
        start = draw(st.integers(0, 0xFFFF - count))
        regs = tuple(range(start, start + count))
    else:
        regs = tuple(draw(st.integers(0, (1 << names[r][3]) - 1)) for r in ("vA", "vB", "vC") if r in names)
    literal = None
    if "lit" in names:
        literal = draw(_signed(names["lit"][3]))
        if fmt.name == "21h":
            literal <<= 48 if op.is_wide_const else 16
    pool = (op.pool, draw(st.integers(0, (1 << names["idx"][3]) - 1))) if "idx" in names else None
    return regs, literal, pool


def _payload(draw, mnemonic):
    if mnemonic == "packed-switch":
        return PackedSwitchPayload(draw(_signed(32)), tuple(draw(st.lists(_signed(32), max_size=6))))
    if mnemonic == "sparse-switch":
        keys = sorted(set(draw(st.lists(_signed(32), max_size=6))))
        return SparseSwitchPayload(tuple(keys), tuple(draw(_signed(32)) for _ in keys))
    width = draw(st.sampled_from([1, 2, 4, 8]))
    data = draw(st.binary(max_size=24))
    return FillArrayPayload(width, data[: len(data) - len(data) % width])


@st.composite
def instruction_sequences(draw, min_size=1, max_size=24):
    """A decodable method body: branch targets land on instruction starts and
    every switch or fill-array-data instruction owns a trailing payload."""
    ops = draw(st.lists(st.sampled_from(PLAIN_OPS + OWNER_OPS * 3), min_size=min_size, max_size=max_size))
    drafts = []
    addr = 0
    for op in ops:
        regs, literal, pool = draw(_fields(op))
        width = FORMATS[op.format].width
        drafts.append([op, regs, literal, pool, addr, width])
        addr += width
    starts = [d[4] for d in drafts]
    out: list[Instruction] = []
    payloads = []
    for op, regs, literal, pool, at, width in drafts:
        offset = None
        payload = None
        if op.mnemonic in PAYLOAD_OWNERS:
            payload = _payload(draw, op.mnemonic)
            payloads.append((len(out), payload))
        elif FORMATS[op.format].has_target:
            bits = next(f[3] for f in FORMATS[op.format].fields if f[0] == "off")
            target = draw(st.sampled_from(starts))
            offset = target - at
            if not -(1 << (bits - 1)) <= offset < (1 << (bits - 1)):
                offset = 0
        out.append(Instruction(op, regs, literal, offset, pool, at, width))
    # Lay out payloads after the code, each at an even address.
    for i, payload in payloads:
        if addr % 2:
            out.append(Instruction(isa.BY_MNEMONIC["nop"], address=addr, width=1))
            addr += 1
        owner = out[i]
        kind = {"packed-switch": isa.PACKED_SWITCH_PAYLOAD, "sparse-switch": isa.SPARSE_SWITCH_PAYLOAD,
                "fill-array-data": isa.FILL_ARRAY_DATA_PAYLOAD}[owner.mnemonic]
        out[i] = Instruction(owner.opcode, owner.registers, None, addr - owner.address, None,
                             owner.address, owner.width, payload)
        out.append(Instruction(kind, address=addr, width=payload.width, payload=payload))
        addr += payload.width
    return out
