"""Dalvik instruction set: opcode table, instruction formats, decoder and encoder.

The decoder and the encoder are both driven by ``FORMATS``, a declarative
description of where every operand lives inside the 16-bit code units of an
instruction.  Payload tables (packed-switch, sparse-switch, fill-array-data)
decode to pseudo-instructions and are attached to the instruction that
references them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from dexlift.errors import DexliftError

# Opcode groups, by the value ranges the mapping table is organised around.
MOVE = "move"
BRANCH = "branch"
FIELD_ACCESS = "field_access"
INVOKE = "invoke"
ARITH_LOGIC = "arith_logic"
OTHER = "other"

NORMAL = "normal"
ODEX = "odex"
UNUSED = "unused"
PAYLOAD = "payload"

# Pool kinds referenced by 21c/22c/31c/35c/3rc instructions.
STRING = "string"
TYPE = "type"
FIELD = "field"
METHOD = "method"


class DecodeError(DexliftError):
    def __init__(self, message: str, address: int | None = None):
        if address is not None:
            message = f"{message} at 0x{address:04x}"
        super().__init__(message)
        self.address = address


class UnsupportedOpcode(DecodeError):
    """An optimized (odex) opcode, which only the on-device optimizer emits."""

    def __init__(self, value: int, mnemonic: str, address: int | None = None):
        super().__init__(f"unsupported odex opcode 0x{value:02x} ({mnemonic})", address)
        self.value = value
        self.mnemonic = mnemonic


class UnknownOpcode(DecodeError):
    def __init__(self, value: int, address: int | None = None):
        super().__init__(f"unused opcode 0x{value:02x}", address)
        self.value = value


class TruncatedInstruction(DecodeError):
    pass


class BadPayload(DecodeError):
    pass


class FieldOverflow(DexliftError):
    pass


# -- formats -----------------------------------------------------------------
#
# Each operand is (name, unit, shift, bits, signed).  ``unit`` indexes the code
# unit, ``shift`` is the bit offset inside it.  32- and 64-bit operands span
# several consecutive units (little-endian); they are described with bits > 16.
# Operand names: vA/vB/vC are registers, "lit" a literal, "off" a branch
# offset, "idx" a pool index, "count" the register count of 35c/3rc.


@dataclass(frozen=True)
class Format:
    name: str
    width: int
    fields: tuple[tuple[str, int, int, int, bool], ...]

    def field_bits(self, name: str) -> int:
        for fname, _unit, _shift, bits, _signed in self.fields:
            if fname == name:
                return bits
        raise KeyError(name)

    @property
    def has_target(self) -> bool:
        return any(f[0] == "off" for f in self.fields)


def _fmt(name, width, *fields):
    return Format(name, width, tuple(fields))


FORMATS: dict[str, Format] = {
    f.name: f
    for f in [
        _fmt("10x", 1),
        _fmt("12x", 1, ("vA", 0, 8, 4, False), ("vB", 0, 12, 4, False)),
        _fmt("11n", 1, ("vA", 0, 8, 4, False), ("lit", 0, 12, 4, True)),
        _fmt("11x", 1, ("vA", 0, 8, 8, False)),
        _fmt("10t", 1, ("off", 0, 8, 8, True)),
        _fmt("20t", 2, ("off", 1, 0, 16, True)),
        _fmt("22x", 2, ("vA", 0, 8, 8, False), ("vB", 1, 0, 16, False)),
        _fmt("21t", 2, ("vA", 0, 8, 8, False), ("off", 1, 0, 16, True)),
        _fmt("21s", 2, ("vA", 0, 8, 8, False), ("lit", 1, 0, 16, True)),
        _fmt("21h", 2, ("vA", 0, 8, 8, False), ("lit", 1, 0, 16, True)),
        _fmt("21c", 2, ("vA", 0, 8, 8, False), ("idx", 1, 0, 16, False)),
        _fmt("23x", 2, ("vA", 0, 8, 8, False), ("vB", 1, 0, 8, False), ("vC", 1, 8, 8, False)),
        _fmt("22b", 2, ("vA", 0, 8, 8, False), ("vB", 1, 0, 8, False), ("lit", 1, 8, 8, True)),
        _fmt("22t", 2, ("vA", 0, 8, 4, False), ("vB", 0, 12, 4, False), ("off", 1, 0, 16, True)),
        _fmt("22s", 2, ("vA", 0, 8, 4, False), ("vB", 0, 12, 4, False), ("lit", 1, 0, 16, True)),
        _fmt("22c", 2, ("vA", 0, 8, 4, False), ("vB", 0, 12, 4, False), ("idx", 1, 0, 16, False)),
        _fmt("30t", 3, ("off", 1, 0, 32, True)),
        _fmt("32x", 3, ("vA", 1, 0, 16, False), ("vB", 2, 0, 16, False)),
        _fmt("31i", 3, ("vA", 0, 8, 8, False), ("lit", 1, 0, 32, True)),
        _fmt("31t", 3, ("vA", 0, 8, 8, False), ("off", 1, 0, 32, True)),
        _fmt("31c", 3, ("vA", 0, 8, 8, False), ("idx", 1, 0, 32, False)),
        _fmt(
            "35c", 3,
            ("count", 0, 12, 4, False), ("vG", 0, 8, 4, False), ("idx", 1, 0, 16, False),
            ("vC", 2, 0, 4, False), ("vD", 2, 4, 4, False), ("vE", 2, 8, 4, False), ("vF", 2, 12, 4, False),
        ),
        _fmt("3rc", 3, ("count", 0, 8, 8, False), ("idx", 1, 0, 16, False), ("vC", 2, 0, 16, False)),
        _fmt("51l", 5, ("vA", 0, 8, 8, False), ("lit", 1, 0, 64, True)),
    ]
}


@dataclass(frozen=True)
class Opcode:
    value: int
    mnemonic: str
    format: str
    group: str
    kind: str = NORMAL
    pool: str | None = None

    @property
    def is_wide_const(self) -> bool:
        return self.mnemonic.startswith("const-wide")


def _group(value: int) -> str:
    if 0x01 <= value <= 0x1C:
        return MOVE
    if 0x27 <= value <= 0x3D:
        return BRANCH
    if 0x44 <= value <= 0x6D:
        return FIELD_ACCESS
    if 0x6E <= value <= 0x78:
        return INVOKE
    if 0x7B <= value <= 0xE2:
        return ARITH_LOGIC
    return OTHER


_NORMAL_TABLE = """
00 nop 10x
01 move 12x
02 move/from16 22x
03 move/16 32x
04 move-wide 12x
05 move-wide/from16 22x
06 move-wide/16 32x
07 move-object 12x
08 move-object/from16 22x
09 move-object/16 32x
0a move-result 11x
0b move-result-wide 11x
0c move-result-object 11x
0d move-exception 11x
0e return-void 10x
0f return 11x
10 return-wide 11x
11 return-object 11x
12 const/4 11n
13 const/16 21s
14 const 31i
15 const/high16 21h
16 const-wide/16 21s
17 const-wide/32 31i
18 const-wide 51l
19 const-wide/high16 21h
1a const-string 21c string
1b const-string/jumbo 31c string
1c const-class 21c type
1d monitor-enter 11x
1e monitor-exit 11x
1f check-cast 21c type
20 instance-of 22c type
21 array-length 12x
22 new-instance 21c type
23 new-array 22c type
24 filled-new-array 35c type
25 filled-new-array/range 3rc type
26 fill-array-data 31t
27 throw 11x
28 goto 10t
29 goto/16 20t
2a goto/32 30t
2b packed-switch 31t
2c sparse-switch 31t
2d cmpl-float 23x
2e cmpg-float 23x
2f cmpl-double 23x
30 cmpg-double 23x
31 cmp-long 23x
32 if-eq 22t
33 if-ne 22t
34 if-lt 22t
35 if-ge 22t
36 if-gt 22t
37 if-le 22t
38 if-eqz 21t
39 if-nez 21t
3a if-ltz 21t
3b if-gez 21t
3c if-gtz 21t
3d if-lez 21t
"""

_ARRAY_SUFFIXES = ["", "-wide", "-object", "-boolean", "-byte", "-char", "-short"]
_INVOKE_KINDS = ["virtual", "super", "direct", "static", "interface"]
_UNOPS = [
    "neg-int", "not-int", "neg-long", "not-long", "neg-float", "neg-double",
    "int-to-long", "int-to-float", "int-to-double", "long-to-int", "long-to-float",
    "long-to-double", "float-to-int", "float-to-long", "float-to-double",
    "double-to-int", "double-to-long", "double-to-float", "int-to-byte",
    "int-to-char", "int-to-short",
]
_INT_OPS = ["add", "sub", "mul", "div", "rem", "and", "or", "xor", "shl", "shr", "ushr"]
_FLOAT_OPS = ["add", "sub", "mul", "div", "rem"]
_LIT16_OPS = ["add", "rsub", "mul", "div", "rem", "and", "or", "xor"]
_LIT8_OPS = _LIT16_OPS + ["shl", "shr", "ushr"]

# Optimized opcodes of the dex 035 era; the on-device optimizer rewrites
# ordinary instructions into these, so they never appear in shipped apps.
_ODEX_TABLE = """
ee execute-inline 35c
f0 invoke-direct-empty 35c
f2 iget-quick 22c
f3 iget-wide-quick 22c
f4 iget-object-quick 22c
f5 iput-quick 22c
f6 iput-wide-quick 22c
f7 iput-object-quick 22c
f8 invoke-virtual-quick 35c
f9 invoke-virtual-quick/range 3rc
fa invoke-super-quick 35c
fb invoke-super-quick/range 3rc
"""


def _build_table() -> list[Opcode]:
    entries: dict[int, tuple[str, str, str | None]] = {}
    for line in _NORMAL_TABLE.strip().splitlines():
        parts = line.split()
        entries[int(parts[0], 16)] = (parts[1], parts[2], parts[3] if len(parts) > 3 else None)
    for i, suffix in enumerate(_ARRAY_SUFFIXES):
        entries[0x44 + i] = ("aget" + suffix, "23x", None)
        entries[0x4B + i] = ("aput" + suffix, "23x", None)
        entries[0x52 + i] = ("iget" + suffix, "22c", FIELD)
        entries[0x59 + i] = ("iput" + suffix, "22c", FIELD)
        entries[0x60 + i] = ("sget" + suffix, "21c", FIELD)
        entries[0x67 + i] = ("sput" + suffix, "21c", FIELD)
    for i, kind in enumerate(_INVOKE_KINDS):
        entries[0x6E + i] = (f"invoke-{kind}", "35c", METHOD)
        entries[0x74 + i] = (f"invoke-{kind}/range", "3rc", METHOD)
    for i, name in enumerate(_UNOPS):
        entries[0x7B + i] = (name, "12x", None)
    base = 0x90
    for ty, ops in (("int", _INT_OPS), ("long", _INT_OPS), ("float", _FLOAT_OPS), ("double", _FLOAT_OPS)):
        for op in ops:
            entries[base] = (f"{op}-{ty}", "23x", None)
            entries[base + 0x20] = (f"{op}-{ty}/2addr", "12x", None)
            base += 1
    for i, op in enumerate(_LIT16_OPS):
        name = "rsub-int" if op == "rsub" else f"{op}-int/lit16"
        entries[0xD0 + i] = (name, "22s", None)
    for i, op in enumerate(_LIT8_OPS):
        entries[0xD8 + i] = (f"{op}-int/lit8", "22b", None)

    odex = {}
    for line in _ODEX_TABLE.strip().splitlines():
        v, name, fmt = line.split()
        odex[int(v, 16)] = (name, fmt)

    table = []
    for value in range(256):
        if value in entries:
            name, fmt, pool = entries[value]
            table.append(Opcode(value, name, fmt, _group(value), NORMAL, pool))
        elif value in odex:
            name, fmt = odex[value]
            table.append(Opcode(value, name, fmt, OTHER, ODEX))
        else:
            table.append(Opcode(value, f"unused-{value:02x}", "10x", OTHER, UNUSED))
    return table


OPCODES: tuple[Opcode, ...] = tuple(_build_table())
BY_MNEMONIC: dict[str, Opcode] = {op.mnemonic: op for op in OPCODES if op.kind != UNUSED}

PACKED_SWITCH_PAYLOAD = Opcode(0x100, "packed-switch-payload", "payload", OTHER, PAYLOAD)
SPARSE_SWITCH_PAYLOAD = Opcode(0x200, "sparse-switch-payload", "payload", OTHER, PAYLOAD)
FILL_ARRAY_DATA_PAYLOAD = Opcode(0x300, "fill-array-data-payload", "payload", OTHER, PAYLOAD)
_PAYLOAD_OPCODES = {op.value: op for op in (PACKED_SWITCH_PAYLOAD, SPARSE_SWITCH_PAYLOAD, FILL_ARRAY_DATA_PAYLOAD)}
_PAYLOAD_OWNERS = {
    "packed-switch": PACKED_SWITCH_PAYLOAD,
    "sparse-switch": SPARSE_SWITCH_PAYLOAD,
    "fill-array-data": FILL_ARRAY_DATA_PAYLOAD,
}


def opcode_info(value: int) -> Opcode:
    """Metadata for an opcode byte.  Total over 0x00-0xFF."""
    return OPCODES[value & 0xFF]


# -- payloads ----------------------------------------------------------------


@dataclass(frozen=True)
class PackedSwitchPayload:
    first_key: int
    targets: tuple[int, ...]

    @property
    def width(self) -> int:
        return 4 + 2 * len(self.targets)


@dataclass(frozen=True)
class SparseSwitchPayload:
    keys: tuple[int, ...]
    targets: tuple[int, ...]

    def __post_init__(self):
        if len(self.keys) != len(self.targets):
            raise ValueError("sparse-switch keys and targets differ in length")
        if any(a >= b for a, b in zip(self.keys, self.keys[1:])):
            raise ValueError("sparse-switch keys must be strictly increasing")

    @property
    def width(self) -> int:
        return 2 + 4 * len(self.keys)


@dataclass(frozen=True)
class FillArrayPayload:
    element_width: int
    data: bytes

    def __post_init__(self):
        if self.element_width not in (1, 2, 4, 8):
            raise ValueError(f"bad fill-array element width {self.element_width}")
        if len(self.data) % self.element_width:
            raise ValueError("fill-array data is not a whole number of elements")

    @property
    def size(self) -> int:
        return len(self.data) // self.element_width

    @property
    def width(self) -> int:
        return 4 + (len(self.data) + 1) // 2

    def elements(self) -> list[int]:
        """Raw unsigned element values."""
        w = self.element_width
        return [int.from_bytes(self.data[i:i + w], "little") for i in range(0, len(self.data), w)]


Payload = PackedSwitchPayload | SparseSwitchPayload | FillArrayPayload


# -- instructions ------------------------------------------------------------


@dataclass(frozen=True)
class Instruction:
    opcode: Opcode
    registers: tuple[int, ...] = ()
    literal: int | None = None
    branch_offset: int | None = None
    pool_index: tuple[str, int] | None = None
    address: int = 0
    width: int = 1
    payload: Payload | None = field(default=None, compare=True)

    @property
    def mnemonic(self) -> str:
        return self.opcode.mnemonic

    @property
    def target(self) -> int | None:
        """Absolute code-unit address of a branch or payload target."""
        if self.branch_offset is None:
            return None
        return self.address + self.branch_offset

    @property
    def is_payload(self) -> bool:
        return self.opcode.kind == PAYLOAD


def _sign(value: int, bits: int) -> int:
    if value & (1 << (bits - 1)):
        return value - (1 << bits)
    return value


def _read_field(units: Sequence[int], unit: int, shift: int, bits: int, signed: bool) -> int:
    if bits <= 16:
        raw = (units[unit] >> shift) & ((1 << bits) - 1)
    else:
        raw = 0
        for k in range(bits // 16):
            raw |= units[unit + k] << (16 * k)
    return _sign(raw, bits) if signed else raw


def _decode_payload(units: Sequence[int], pos: int) -> tuple[Instruction, int]:
    ident = units[pos]
    op = _PAYLOAD_OPCODES[ident]

    def need(n):
        if pos + n > len(units):
            raise TruncatedInstruction(f"truncated {op.mnemonic}", pos)

    need(2)
    if op is PACKED_SWITCH_PAYLOAD:
        need(4)
        size = units[pos + 1]
        first_key = _sign(units[pos + 2] | units[pos + 3] << 16, 32)
        need(4 + 2 * size)
        targets = tuple(
            _sign(units[pos + 4 + 2 * i] | units[pos + 5 + 2 * i] << 16, 32) for i in range(size)
        )
        payload: Payload = PackedSwitchPayload(first_key, targets)
    elif op is SPARSE_SWITCH_PAYLOAD:
        size = units[pos + 1]
        need(2 + 4 * size)
        words = [
            _sign(units[pos + 2 + 2 * i] | units[pos + 3 + 2 * i] << 16, 32) for i in range(2 * size)
        ]
        try:
            payload = SparseSwitchPayload(tuple(words[:size]), tuple(words[size:]))
        except ValueError as exc:
            raise BadPayload(str(exc), pos) from None
    else:
        need(4)
        elem_width = units[pos + 1]
        size = units[pos + 2] | units[pos + 3] << 16
        nbytes = elem_width * size
        nunits = (nbytes + 1) // 2
        need(4 + nunits)
        raw = b"".join(struct.pack("<H", u) for u in units[pos + 4:pos + 4 + nunits])[:nbytes]
        try:
            payload = FillArrayPayload(elem_width, raw)
        except ValueError as exc:
            raise BadPayload(str(exc), pos) from None
    ins = Instruction(op, address=pos, width=payload.width, payload=payload)
    return ins, payload.width


def _decode_one(units: Sequence[int], pos: int) -> Instruction:
    value = units[pos] & 0xFF
    op = OPCODES[value]
    if op.kind == ODEX:
        raise UnsupportedOpcode(value, op.mnemonic, pos)
    if op.kind == UNUSED:
        raise UnknownOpcode(value, pos)
    fmt = FORMATS[op.format]
    if pos + fmt.width > len(units):
        raise TruncatedInstruction(f"truncated {op.mnemonic}", pos)
    words = units[pos:pos + fmt.width]
    vals = {name: _read_field(words, u, s, b, sg) for name, u, s, b, sg in fmt.fields}
    if fmt.name == "10x" and words[0] >> 8:
        raise BadPayload(f"nonzero high byte 0x{words[0] >> 8:02x} in {op.mnemonic}", pos)

    if fmt.name == "35c":
        count = vals["count"]
        if count > 5:
            raise DecodeError(f"register count {count} exceeds 5 in {op.mnemonic}", pos)
        regs = tuple(vals[r] for r in ("vC", "vD", "vE", "vF", "vG")[:count])
    elif fmt.name == "3rc":
        regs = tuple(range(vals["vC"], vals["vC"] + vals["count"]))
    else:
        regs = tuple(vals[r] for r in ("vA", "vB", "vC") if r in vals)

    literal = vals.get("lit")
    if literal is not None and fmt.name == "21h":
        literal = literal << (48 if op.is_wide_const else 16)
    pool = (op.pool, vals["idx"]) if op.pool is not None else None
    return Instruction(
        op,
        registers=regs,
        literal=literal,
        branch_offset=vals.get("off"),
        pool_index=pool,
        address=pos,
        width=fmt.width,
    )


def decode_stream(units: Sequence[int]) -> list[Instruction]:
    """Decode a method's code units into instructions, payloads included."""
    out: list[Instruction] = []
    pos = 0
    while pos < len(units):
        unit = units[pos]
        if unit & 0xFF == 0 and unit >> 8 in (1, 2, 3):
            ins, width = _decode_payload(units, pos)
        else:
            ins = _decode_one(units, pos)
            width = ins.width
        out.append(ins)
        pos += width

    by_address = {ins.address: i for i, ins in enumerate(out)}
    for i, ins in enumerate(out):
        expected = _PAYLOAD_OWNERS.get(ins.mnemonic)
        if expected is None:
            continue
        j = by_address.get(ins.target)
        if j is None or out[j].opcode is not expected:
            raise BadPayload(f"{ins.mnemonic} does not point at a {expected.mnemonic}", ins.address)
        out[i] = replace(ins, payload=out[j].payload)
    return out


# -- encoder -----------------------------------------------------------------


def _put_field(words: list[int], unit: int, shift: int, bits: int, signed: bool, value: int, what: str) -> None:
    lo, hi = (-(1 << (bits - 1)), (1 << (bits - 1)) - 1) if signed else (0, (1 << bits) - 1)
    if not lo <= value <= hi:
        raise FieldOverflow(f"{what}={value} does not fit in {bits} bits")
    raw = value & ((1 << bits) - 1)
    if bits <= 16:
        words[unit] |= raw << shift
    else:
        for k in range(bits // 16):
            words[unit + k] = (raw >> (16 * k)) & 0xFFFF


def _encode_payload(ins: Instruction) -> list[int]:
    p = ins.payload
    words: list[int] = [ins.opcode.value]
    if isinstance(p, PackedSwitchPayload):
        words.append(len(p.targets))
        for v in (p.first_key, *p.targets):
            words += [v & 0xFFFF, (v >> 16) & 0xFFFF]
    elif isinstance(p, SparseSwitchPayload):
        words.append(len(p.keys))
        for v in (*p.keys, *p.targets):
            words += [v & 0xFFFF, (v >> 16) & 0xFFFF]
    elif isinstance(p, FillArrayPayload):
        words += [p.element_width, p.size & 0xFFFF, p.size >> 16]
        data = p.data + b"\0" * (len(p.data) % 2)
        words += [data[i] | data[i + 1] << 8 for i in range(0, len(data), 2)]
    else:
        raise FieldOverflow(f"{ins.mnemonic} carries no payload")
    return words


def encode_instruction(ins: Instruction) -> list[int]:
    if ins.is_payload:
        return _encode_payload(ins)
    op = ins.opcode
    fmt = FORMATS[op.format]
    words = [0] * fmt.width
    words[0] = op.value
    vals: dict[str, int] = {}
    regs = ins.registers
    if fmt.name == "35c":
        if len(regs) > 5:
            raise FieldOverflow(f"{op.mnemonic} takes at most 5 registers")
        vals["count"] = len(regs)
        for name, r in zip(("vC", "vD", "vE", "vF", "vG"), regs):
            vals[name] = r
        for name in ("vC", "vD", "vE", "vF", "vG"):
            vals.setdefault(name, 0)
    elif fmt.name == "3rc":
        if regs and list(regs) != list(range(regs[0], regs[0] + len(regs))):
            raise FieldOverflow(f"{op.mnemonic} registers must be contiguous")
        vals["count"] = len(regs)
        vals["vC"] = regs[0] if regs else 0
    else:
        names = [f[0] for f in fmt.fields if f[0] in ("vA", "vB", "vC")]
        if len(regs) != len(names):
            raise FieldOverflow(f"{op.mnemonic} takes {len(names)} registers, got {len(regs)}")
        vals.update(zip(names, regs))
    for name, _u, _s, _b, _sg in fmt.fields:
        if name == "lit":
            if ins.literal is None:
                raise FieldOverflow(f"{op.mnemonic} needs a literal")
            lit = ins.literal
            if fmt.name == "21h":
                shift = 48 if op.is_wide_const else 16
                if lit & ((1 << shift) - 1):
                    raise FieldOverflow(f"{op.mnemonic} literal has nonzero low bits")
                lit >>= shift
            vals["lit"] = lit
        elif name == "off":
            if ins.branch_offset is None:
                raise FieldOverflow(f"{op.mnemonic} needs a branch offset")
            vals["off"] = ins.branch_offset
        elif name == "idx":
            if ins.pool_index is None:
                raise FieldOverflow(f"{op.mnemonic} needs a pool index")
            vals["idx"] = ins.pool_index[1]
    for name, unit, shift, bits, signed in fmt.fields:
        _put_field(words, unit, shift, bits, signed, vals[name], name)
    return words


def encode(instrs: Iterable[Instruction]) -> list[int]:
    """Encode instructions back into code units (fixture support)."""
    units: list[int] = []
    for ins in instrs:
        if ins.address != len(units):
            raise FieldOverflow(f"{ins.mnemonic} placed at 0x{ins.address:04x}, expected 0x{len(units):04x}")
        words = encode_instruction(ins)
        if len(words) != ins.width:
            raise FieldOverflow(f"{ins.mnemonic} width {ins.width} does not match its encoding ({len(words)})")
        units += words
    return units


def width_of(op: Opcode, payload: Payload | None = None) -> int:
    if op.kind == PAYLOAD:
        assert payload is not None
        return payload.width
    return FORMATS[op.format].width


def format_instruction(ins: Instruction, resolve=None) -> str:
    """Render ``mnemonic args`` the way a conventional disassembler listing does.

    ``resolve(kind, index)`` turns pool indices into text; without it the raw
    ``kind@index`` form is printed.
    """
    op = ins.opcode
    if ins.is_payload:
        p = ins.payload
        if isinstance(p, PackedSwitchPayload):
            return f"{op.mnemonic} first_key={p.first_key} targets={list(p.targets)}"
        if isinstance(p, SparseSwitchPayload):
            return f"{op.mnemonic} {dict(zip(p.keys, p.targets))}"
        return f"{op.mnemonic} width={p.element_width} size={p.size}"
    fmt = op.format
    regs = [f"v{r}" for r in ins.registers]
    args: list[str] = []
    if fmt in ("35c", "3rc"):
        if fmt == "3rc" and regs:
            args.append(f"{{{regs[0]} .. {regs[-1]}}}")
        else:
            args.append("{" + ", ".join(regs) + "}")
    else:
        args += regs
    if ins.literal is not None:
        args.append(f"#{'long' if op.is_wide_const else 'int'} {ins.literal}")
    if ins.branch_offset is not None:
        args.append(f"{ins.target:04x}")
    if ins.pool_index is not None:
        kind, idx = ins.pool_index
        args.append(resolve(kind, idx) if resolve else f"{kind}@{idx}")
    return f"{op.mnemonic} {', '.join(args)}".rstrip()
