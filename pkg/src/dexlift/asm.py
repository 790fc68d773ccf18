"""A small Dalvik assembler and dex writer.

Used to build fixture programs: method bodies are written in a disassembly
like syntax and :class:`DexBuilder` lays them out into a valid dex 035 image
with sorted pools, a map list, checksum and signature::

    b = DexBuilder()
    cls = b.add_class("LMain;")
    cls.add_method("add", "(II)I", '''
        .registers 3
        add-int v0, p0, p1
        return v0
    ''', static=True)
    image = b.build()

Syntax, one item per line (``//`` starts a comment):

* ``[addr:] mnemonic arg, arg, ...`` where an optional leading hex address is
  checked against the assembled position;
* ``:label`` defines a label; branch targets are ``:label`` or a hex address;
* registers ``vN`` or ``pN`` (parameter-relative), register lists ``{v0, v1}``
  or ``{v0 .. v3}``;
* literals ``#int 5``, ``#long -1``, ``#float 1.5``, ``#double 2.0`` or bare
  integers; pool references ``"text"``, ``LType;``, ``LOwner;.field:I``,
  ``LOwner;.method:(I)V``;
* ``.registers N``; ``.catch LType; {:start .. :end} :handler``;
  ``.catchall {:start .. :end} :handler``; payload blocks ``.packed-switch K``,
  ``.sparse-switch``, ``.array-data W`` closed by ``.end ...``.
"""

from __future__ import annotations

import hashlib
import json
import re
import struct
import zlib
from dataclasses import dataclass, field, replace

from dexlift import isa
from dexlift.dex import (
    ACC_PUBLIC,
    ACC_STATIC,
    DEX_MAGIC,
    ENDIAN_CONSTANT,
    HEADER_SIZE,
    NO_INDEX,
    FieldRef,
    MethodRef,
    encode_mutf8,
    is_wide,
    parse_field_ref,
    split_params,
)
from dexlift.errors import DexliftError


class AsmError(DexliftError):
    pass


@dataclass
class _Item:
    op: isa.Opcode
    regs: tuple[int, ...] = ()
    literal: int | None = None
    target: str | int | None = None  # label name or absolute address
    ref: object = None
    payload_rows: list | None = None  # for payload pseudo-instructions
    payload_arg: int | None = None
    expect: int | None = None  # address asserted by a leading "NN:" prefix
    address: int = 0
    width: int = 0
    line: int = 0


@dataclass
class AsmMethod:
    """An assembled method body whose pool references are still symbolic."""

    items: list[_Item]
    labels: dict[str, int]
    catches: list[tuple[str | None, str, str, str]]
    registers: int | None

    @property
    def refs(self) -> list[tuple[str, object]]:
        return [(it.op.pool, it.ref) for it in self.items if it.op.pool is not None]


def _split_args(text: str) -> list[str]:
    args, depth, cur, quote = [], 0, "", False
    i = 0
    while i < len(text):
        ch = text[i]
        if quote:
            cur += ch
            if ch == "\\":
                cur += text[i + 1]
                i += 1
            elif ch == '"':
                quote = False
        elif ch == '"':
            quote = True
            cur += ch
        elif ch == "{":
            depth += 1
            cur += ch
        elif ch == "}":
            depth -= 1
            cur += ch
        elif ch == "," and depth == 0:
            args.append(cur.strip())
            cur = ""
        else:
            cur += ch
        i += 1
    if cur.strip():
        args.append(cur.strip())
    return args


def _float_bits(value: float) -> int:
    return struct.unpack("<i", struct.pack("<f", value))[0]


def _double_bits(value: float) -> int:
    return struct.unpack("<q", struct.pack("<d", value))[0]


def _parse_int(text: str) -> int:
    return int(text, 0)


def _parse_literal(text: str) -> int:
    m = re.fullmatch(r"#(int|long|float|double)\s+(\S+)", text)
    if m is None:
        return _parse_int(text.lstrip("#"))
    kind, val = m.groups()
    if kind == "float":
        return _float_bits(float(val))
    if kind == "double":
        return _double_bits(float(val))
    return _parse_int(val)


def _parse_ref(kind: str, text: str):
    text = text.replace("->", ".")
    if kind == isa.STRING:
        return json.loads(text)
    if kind == isa.TYPE:
        return text
    if kind == isa.FIELD:
        return parse_field_ref(text)
    if "(" in text and ":(" not in text:
        text = text.replace("(", ":(", 1)
    return MethodRef.parse(text)


class _Assembler:
    def __init__(self, text: str, ins_words: int | None = None):
        self.text = text
        self.ins_words = ins_words
        self.registers: int | None = None

    def reg(self, tok: str, line: int) -> int:
        m = re.fullmatch(r"([vp])(\d+)", tok.strip())
        if m is None:
            raise AsmError(f"line {line}: expected a register, got {tok!r}")
        n = int(m.group(2))
        if m.group(1) == "p":
            if self.registers is None or self.ins_words is None:
                raise AsmError(f"line {line}: pN registers need .registers and a known signature")
            n += self.registers - self.ins_words
        return n

    def reg_list(self, tok: str, line: int) -> tuple[int, ...]:
        inner = tok.strip()[1:-1].strip()
        if not inner:
            return ()
        if ".." in inner:
            lo, hi = (self.reg(t, line) for t in inner.split(".."))
            return tuple(range(lo, hi + 1))
        return tuple(self.reg(t, line) for t in inner.split(","))

    def run(self) -> AsmMethod:
        items: list[_Item] = []
        pending_labels: list[str] = []
        labels_at: dict[str, _Item | None] = {}
        catches = []
        block: _Item | None = None
        lines = self.text.splitlines()
        for lineno, raw in enumerate(lines, 1):
            line = raw.split("//", 1)[0].strip()
            if not line:
                continue
            if block is not None:
                if line.startswith(".end"):
                    items.append(block)
                    block = None
                else:
                    block.payload_rows.append((line, lineno))
                continue
            m = re.match(r"^([0-9a-fA-F]+):\s+(.*)$", line)
            expect_addr = None
            if m:
                expect_addr, line = int(m.group(1), 16), m.group(2)
            if line.startswith(":"):
                pending_labels.append(line[1:])
                continue
            if line.startswith(".registers"):
                self.registers = int(line.split()[1])
                continue
            if line.startswith(".catch"):
                m = re.fullmatch(r"\.catch(all)?\s*(\S+)?\s*\{\s*:(\S+)\s*\.\.\s*:(\S+)\s*\}\s*:(\S+)", line)
                if m is None:
                    raise AsmError(f"line {lineno}: bad catch directive")
                exc = None if m.group(1) else m.group(2)
                catches.append((exc, m.group(3), m.group(4), m.group(5)))
                continue
            if line.startswith("."):
                kind, *rest = line[1:].split()
                op = {
                    "packed-switch": isa.PACKED_SWITCH_PAYLOAD,
                    "sparse-switch": isa.SPARSE_SWITCH_PAYLOAD,
                    "array-data": isa.FILL_ARRAY_DATA_PAYLOAD,
                }.get(kind)
                if op is None:
                    raise AsmError(f"line {lineno}: unknown directive .{kind}")
                block = _Item(op, payload_rows=[], line=lineno)
                block.payload_arg = _parse_int(rest[0]) if rest else None
                self._attach(labels_at, pending_labels, block)
                continue
            mnemonic, _, argtext = line.partition(" ")
            op = isa.BY_MNEMONIC.get(mnemonic)
            if op is None:
                raise AsmError(f"line {lineno}: unknown mnemonic {mnemonic!r}")
            item = self.instruction(op, _split_args(argtext), lineno)
            item.expect = expect_addr
            self._attach(labels_at, pending_labels, item)
            items.append(item)
        if block is not None:
            raise AsmError("unterminated payload block")
        if pending_labels:
            labels_at.update({name: None for name in pending_labels})

        # Layout: payloads must sit at even addresses.
        laid: list[_Item] = []
        addr = 0
        for item in items:
            if item.op.kind == isa.PAYLOAD:
                if addr % 2:
                    laid.append(_Item(isa.BY_MNEMONIC["nop"], address=addr, width=1))
                    addr += 1
                item.width = _build_payload(item, None).width
            else:
                item.width = isa.FORMATS[item.op.format].width
                if item.expect is not None and item.expect != addr:
                    raise AsmError(f"line {item.line}: instruction is at 0x{addr:04x}, not 0x{item.expect:04x}")
            item.address = addr
            addr += item.width
            laid.append(item)
        labels = {name: (it.address if it is not None else addr) for name, it in labels_at.items()}
        return AsmMethod(laid, labels, catches, self.registers)

    @staticmethod
    def _attach(labels_at, pending, item):
        for name in pending:
            if name in labels_at:
                raise AsmError(f"duplicate label :{name}")
            labels_at[name] = item
        pending.clear()

    def instruction(self, op: isa.Opcode, args: list[str], line: int) -> _Item:
        fmt = isa.FORMATS[op.format]
        names = [f[0] for f in fmt.fields]
        item = _Item(op, line=line)
        if fmt.name in ("35c", "3rc"):
            if len(args) != 2:
                raise AsmError(f"line {line}: {op.mnemonic} takes a register list and a reference")
            item.regs = self.reg_list(args[0], line)
            item.ref = _parse_ref(op.pool, args[1])
            return item
        regs = []
        for name in names:
            if name in ("vA", "vB", "vC"):
                if not args:
                    raise AsmError(f"line {line}: {op.mnemonic} is missing operands")
                regs.append(self.reg(args.pop(0), line))
            elif name == "lit":
                if not args:
                    raise AsmError(f"line {line}: {op.mnemonic} is missing its literal")
                item.literal = _parse_literal(args.pop(0))
            elif name == "off":
                if not args:
                    raise AsmError(f"line {line}: {op.mnemonic} is missing its target")
                tok = args.pop(0)
                item.target = tok[1:] if tok.startswith(":") else int(tok, 16)
            elif name == "idx":
                if not args:
                    raise AsmError(f"line {line}: {op.mnemonic} is missing its reference")
                item.ref = _parse_ref(op.pool, args.pop(0))
        if args:
            raise AsmError(f"line {line}: extra operands {args}")
        item.regs = tuple(regs)
        return item


def _build_payload(item: _Item, targets_of) -> isa.Payload:
    rows = item.payload_rows
    if item.op is isa.FILL_ARRAY_DATA_PAYLOAD:
        width = item.payload_arg
        if width is None:
            raise AsmError(f"line {item.line}: .array-data needs an element width")
        data = b""
        for row, _ln in rows:
            for tok in re.findall(r"#\w+\s+\S+|\S+", row.replace(",", " ")):
                v = _parse_literal(tok) if tok.startswith("#") else _parse_int(tok)
                data += (v & ((1 << (8 * width)) - 1)).to_bytes(width, "little")
        return isa.FillArrayPayload(width, data)
    if item.op is isa.PACKED_SWITCH_PAYLOAD:
        n = len(rows)
        tg = targets_of([r[0] for r in rows]) if targets_of else (0,) * n
        return isa.PackedSwitchPayload(item.payload_arg or 0, tuple(tg))
    keys, labels = [], []
    for row, ln in rows:
        m = re.fullmatch(r"(\S+)\s*->\s*(\S+)", row)
        if m is None:
            raise AsmError(f"line {ln}: expected 'key -> :label'")
        keys.append(_parse_int(m.group(1)))
        labels.append(m.group(2))
    tg = targets_of(labels) if targets_of else (0,) * len(keys)
    return isa.SparseSwitchPayload(tuple(keys), tuple(tg))


def assemble(text: str, *, ins_words: int | None = None) -> AsmMethod:
    """Parse and lay out a method body.  References stay symbolic."""
    return _Assembler(text, ins_words).run()


def link(method: AsmMethod, index_of=lambda kind, ref: 0) -> tuple[list[isa.Instruction], list]:
    """Resolve labels and pool references into concrete instructions.

    Returns ``(instructions, tries)`` where tries is a list of
    ``(start, count, [(exception or None, handler address), ...])``.
    """
    labels = method.labels

    def addr_of(target, line):
        if isinstance(target, int):
            return target
        if target not in labels:
            raise AsmError(f"line {line}: undefined label :{target}")
        return labels[target]

    # Payload targets are relative to the switch that uses the payload.
    owner_of: dict[int, int] = {}
    for item in method.items:
        if item.op.mnemonic in ("packed-switch", "sparse-switch", "fill-array-data"):
            owner_of[addr_of(item.target, item.line)] = item.address

    out: list[isa.Instruction] = []
    for item in method.items:
        if item.op.kind == isa.PAYLOAD:
            base = owner_of.get(item.address)
            if base is None and item.op is not isa.FILL_ARRAY_DATA_PAYLOAD:
                raise AsmError(f"line {item.line}: switch payload is not referenced by any switch")

            def targets_of(names, base=base, line=item.line):
                return [addr_of(n.lstrip(":"), line) - base for n in names]

            payload = _build_payload(item, targets_of)
            out.append(isa.Instruction(item.op, address=item.address, width=payload.width, payload=payload))
            continue
        offset = None
        if item.target is not None:
            offset = addr_of(item.target, item.line) - item.address
        pool = (item.op.pool, index_of(item.op.pool, item.ref)) if item.op.pool else None
        out.append(isa.Instruction(
            item.op, item.regs, item.literal, offset, pool, item.address, item.width,
        ))
    by_addr = {ins.address: ins for ins in out}
    for i, ins in enumerate(out):
        if ins.mnemonic in ("packed-switch", "sparse-switch", "fill-array-data"):
            target = by_addr.get(ins.target)
            if target is None or not target.is_payload:
                raise AsmError(f"{ins.mnemonic} at 0x{ins.address:04x} does not reference a payload")
            out[i] = replace(ins, payload=target.payload)

    grouped: dict[tuple[int, int], list] = {}
    for exc, start, end, handler in method.catches:
        lo, hi = addr_of(start, 0), addr_of(end, 0)
        grouped.setdefault((lo, hi - lo), []).append((exc, addr_of(handler, 0)))
    tries = [(lo, n, hs) for (lo, n), hs in sorted(grouped.items())]
    return out, tries


def assemble_units(text: str, index_of=lambda kind, ref: 0, *, ins_words: int | None = None) -> list[int]:
    instrs, _ = link(assemble(text, ins_words=ins_words), index_of)
    return isa.encode(instrs)


# -- dex writer --------------------------------------------------------------


def _uleb(value: int) -> bytes:
    out = bytearray()
    while True:
        b = value & 0x7F
        value >>= 7
        if value:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def _sleb(value: int) -> bytes:
    out = bytearray()
    while True:
        b = value & 0x7F
        value >>= 7
        if (value == 0 and not b & 0x40) or (value == -1 and b & 0x40):
            out.append(b)
            return bytes(out)
        out.append(b | 0x80)


def _shorty(desc: str) -> str:
    return "L" if desc[0] in "L[" else desc


def _param_words(params, static: bool) -> int:
    return sum(2 if is_wide(p) else 1 for p in params) + (0 if static else 1)


@dataclass
class _MethodSpec:
    ref: MethodRef
    access: int
    code: AsmMethod | None
    virtual: bool


@dataclass
class ClassBuilder:
    descriptor: str
    superclass: str | None
    access: int
    interfaces: tuple[str, ...]
    source_file: str | None
    fields: list[tuple[FieldRef, int]] = field(default_factory=list)
    methods: list[_MethodSpec] = field(default_factory=list)

    def add_field(self, name: str, type_: str, access: int = ACC_PUBLIC) -> FieldRef:
        ref = FieldRef(self.descriptor, name, type_)
        self.fields.append((ref, access))
        return ref

    def add_method(
        self,
        name: str,
        signature: str,
        code: str | None = None,
        *,
        access: int = ACC_PUBLIC,
        static: bool = False,
        virtual: bool | None = None,
    ) -> MethodRef:
        m = re.fullmatch(r"\(([^)]*)\)(\S+)", signature)
        if m is None:
            raise AsmError(f"bad signature {signature!r}")
        ref = MethodRef(self.descriptor, name, split_params(m.group(1)), m.group(2))
        if static:
            access |= ACC_STATIC
        asm = None
        if code is not None:
            asm = assemble(code, ins_words=_param_words(ref.params, bool(access & ACC_STATIC)))
        if virtual is None:
            virtual = not (access & (ACC_STATIC | 0x2)) and name not in ("<init>", "<clinit>")
        self.methods.append(_MethodSpec(ref, access, asm, virtual))
        return ref


class DexBuilder:
    def __init__(self):
        self.classes: list[ClassBuilder] = []

    def add_class(
        self,
        descriptor: str,
        superclass: str | None = "Ljava/lang/Object;",
        *,
        access: int = ACC_PUBLIC,
        interfaces: tuple[str, ...] = (),
        source_file: str | None = None,
    ) -> ClassBuilder:
        cls = ClassBuilder(descriptor, superclass, access, tuple(interfaces), source_file)
        self.classes.append(cls)
        return cls

    # The writer interns everything first, then lays sections out in order.
    def build(self) -> bytes:
        strings: set[str] = set()
        types: set[str] = set()
        fields: set[FieldRef] = set()
        methods: set[MethodRef] = set()

        def want_method(ref: MethodRef):
            methods.add(ref)
            strings.add(ref.name)
            types.update((ref.owner, ref.return_type, *ref.params))

        def want_field(ref: FieldRef):
            fields.add(ref)
            strings.add(ref.name)
            types.update((ref.owner, ref.type))

        for cls in self.classes:
            types.add(cls.descriptor)
            if cls.superclass:
                types.add(cls.superclass)
            types.update(cls.interfaces)
            if cls.source_file:
                strings.add(cls.source_file)
            for ref, _ in cls.fields:
                want_field(ref)
            for spec in cls.methods:
                want_method(spec.ref)
                if spec.code is None:
                    continue
                for kind, ref in spec.code.refs:
                    if kind == isa.STRING:
                        strings.add(ref)
                    elif kind == isa.TYPE:
                        types.add(ref)
                    elif kind == isa.FIELD:
                        want_field(ref)
                    else:
                        want_method(ref)
                for exc, *_ in spec.code.catches:
                    if exc:
                        types.add(exc)

        protos_set = {(m.return_type, m.params) for m in methods}
        for ret, params in protos_set:
            strings.add("".join(_shorty(d) for d in (ret, *params)))
        strings.update(types)

        def utf16_key(s):
            return s.encode("utf-16-be", errors="surrogatepass")

        string_list = sorted(strings, key=utf16_key)
        sidx = {s: i for i, s in enumerate(string_list)}
        type_list = sorted(types, key=lambda t: sidx[t])
        tidx = {t: i for i, t in enumerate(type_list)}
        proto_list = sorted(protos_set, key=lambda p: (tidx[p[0]], [tidx[x] for x in p[1]]))
        pidx = {p: i for i, p in enumerate(proto_list)}
        field_list = sorted(fields, key=lambda f: (tidx[f.owner], sidx[f.name], tidx[f.type]))
        fidx = {f: i for i, f in enumerate(field_list)}
        method_list = sorted(
            methods, key=lambda m: (tidx[m.owner], sidx[m.name], pidx[(m.return_type, m.params)])
        )
        midx = {m: i for i, m in enumerate(method_list)}

        def index_of(kind, ref):
            return {isa.STRING: sidx, isa.TYPE: tidx, isa.FIELD: fidx, isa.METHOD: midx}[kind][ref]

        classes = self._class_order()

        n_str, n_typ, n_pro, n_fld, n_met, n_cls = (
            len(string_list), len(type_list), len(proto_list), len(field_list), len(method_list), len(classes),
        )
        off = HEADER_SIZE
        string_ids_off = off; off += 4 * n_str
        type_ids_off = off; off += 4 * n_typ
        proto_ids_off = off; off += 12 * n_pro
        field_ids_off = off; off += 8 * n_fld
        method_ids_off = off; off += 8 * n_met
        class_defs_off = off; off += 32 * n_cls
        data_off = off

        data = bytearray()
        map_items: dict[int, tuple[int, int]] = {}

        def here():
            return data_off + len(data)

        def align4():
            while here() % 4:
                data.append(0)

        # string data
        string_offs = []
        start = here()
        for s in string_list:
            string_offs.append(here())
            enc, n16 = encode_mutf8(s)
            data.extend(_uleb(n16) + enc + b"\0")
        if string_list:
            map_items[0x2002] = (len(string_list), start)

        # type lists (proto parameters, interfaces)
        align4()
        type_list_offs: dict[tuple[str, ...], int] = {}
        start = here()
        lists = [p[1] for p in proto_list if p[1]] + [c.interfaces for c in classes if c.interfaces]
        for tl in lists:
            if tl in type_list_offs:
                continue
            align4()
            type_list_offs[tl] = here()
            data.extend(struct.pack("<I", len(tl)))
            data.extend(b"".join(struct.pack("<H", tidx[t]) for t in tl))
        if type_list_offs:
            map_items[0x1001] = (len(type_list_offs), start)

        # code items
        align4()
        code_offs: dict[MethodRef, int] = {}
        start = here()
        for cls in classes:
            for spec in cls.methods:
                if spec.code is None:
                    continue
                align4()
                code_offs[spec.ref] = here()
                data.extend(self._code_item(spec, index_of, tidx))
        if code_offs:
            map_items[0x2001] = (len(code_offs), start)

        # class data
        class_data_offs = {}
        start = here()
        for cls in classes:
            sfields = sorted((f for f in cls.fields if f[1] & ACC_STATIC), key=lambda f: fidx[f[0]])
            ifields = sorted((f for f in cls.fields if not f[1] & ACC_STATIC), key=lambda f: fidx[f[0]])
            dmeth = sorted((m for m in cls.methods if not m.virtual), key=lambda m: midx[m.ref])
            vmeth = sorted((m for m in cls.methods if m.virtual), key=lambda m: midx[m.ref])
            if not (sfields or ifields or dmeth or vmeth):
                continue
            class_data_offs[cls.descriptor] = here()
            out = bytearray()
            for n in (len(sfields), len(ifields), len(dmeth), len(vmeth)):
                out += _uleb(n)
            for group in (sfields, ifields):
                prev = 0
                for ref, acc in group:
                    out += _uleb(fidx[ref] - prev) + _uleb(acc)
                    prev = fidx[ref]
            for group in (dmeth, vmeth):
                prev = 0
                for spec in group:
                    out += _uleb(midx[spec.ref] - prev) + _uleb(spec.access) + _uleb(code_offs.get(spec.ref, 0))
                    prev = midx[spec.ref]
            data.extend(out)
        if class_data_offs:
            map_items[0x2000] = (len(class_data_offs), start)

        align4()
        map_off = here()
        sections = [
            (0x0000, 1, 0),
            (0x0001, n_str, string_ids_off),
            (0x0002, n_typ, type_ids_off),
            (0x0003, n_pro, proto_ids_off),
            (0x0004, n_fld, field_ids_off),
            (0x0005, n_met, method_ids_off),
            (0x0006, n_cls, class_defs_off),
        ]
        sections = [s for s in sections if s[1]]
        sections += sorted(((t, n, o) for t, (n, o) in map_items.items()), key=lambda s: s[2])
        sections.append((0x1000, 1, map_off))
        data.extend(struct.pack("<I", len(sections)))
        for t, n, o in sections:
            data.extend(struct.pack("<HHII", t, 0, n, o))

        body = bytearray()
        body += b"".join(struct.pack("<I", o) for o in string_offs)
        body += b"".join(struct.pack("<I", sidx[t]) for t in type_list)
        for ret, params in proto_list:
            shorty = "".join(_shorty(d) for d in (ret, *params))
            body += struct.pack("<III", sidx[shorty], tidx[ret], type_list_offs.get(params, 0) if params else 0)
        for f in field_list:
            body += struct.pack("<HHI", tidx[f.owner], tidx[f.type], sidx[f.name])
        for m in method_list:
            body += struct.pack("<HHI", tidx[m.owner], pidx[(m.return_type, m.params)], sidx[m.name])
        for cls in classes:
            body += struct.pack(
                "<8I",
                tidx[cls.descriptor],
                cls.access,
                tidx[cls.superclass] if cls.superclass else NO_INDEX,
                type_list_offs.get(cls.interfaces, 0) if cls.interfaces else 0,
                sidx[cls.source_file] if cls.source_file else NO_INDEX,
                0,
                class_data_offs.get(cls.descriptor, 0),
                0,
            )
        assert HEADER_SIZE + len(body) == data_off
        file_size = data_off + len(data)
        header = struct.pack(
            "<8sI20s20I",
            DEX_MAGIC, 0, b"\0" * 20,
            file_size, HEADER_SIZE, ENDIAN_CONSTANT, 0, 0, map_off,
            n_str, string_ids_off if n_str else 0,
            n_typ, type_ids_off if n_typ else 0,
            n_pro, proto_ids_off if n_pro else 0,
            n_fld, field_ids_off if n_fld else 0,
            n_met, method_ids_off if n_met else 0,
            n_cls, class_defs_off if n_cls else 0,
            len(data), data_off,
        )
        image = bytearray(header + body + data)
        image[12:32] = hashlib.sha1(image[32:]).digest()
        image[8:12] = struct.pack("<I", zlib.adler32(bytes(image[12:])))
        return bytes(image)

    def _class_order(self) -> list[ClassBuilder]:
        by_name = {c.descriptor: c for c in self.classes}
        done: list[ClassBuilder] = []
        seen: set[str] = set()

        def visit(c: ClassBuilder):
            if c.descriptor in seen:
                return
            seen.add(c.descriptor)
            for dep in (c.superclass, *c.interfaces):
                if dep in by_name:
                    visit(by_name[dep])
            done.append(c)

        for c in self.classes:
            visit(c)
        return done

    @staticmethod
    def _code_item(spec: _MethodSpec, index_of, tidx) -> bytes:
        asm = spec.code
        static = bool(spec.access & ACC_STATIC)
        ins = _param_words(spec.ref.params, static)
        instrs, tries = link(asm, index_of)
        units = isa.encode(instrs)
        regs = asm.registers
        if regs is None:
            used = [r for i in instrs for r in i.registers]
            regs = max(used, default=-1) + 1
            regs = max(regs, ins)
        outs = 0
        for i in instrs:
            if i.opcode.group == isa.INVOKE:
                outs = max(outs, len(i.registers))
        out = bytearray(struct.pack("<4HII", regs, ins, outs, len(tries), 0, len(units)))
        out += b"".join(struct.pack("<H", u) for u in units)
        if tries:
            if len(units) % 2:
                out += b"\0\0"
            handler_blob = bytearray(_uleb(len(tries)))
            handler_offs = []
            for _start, _count, handlers in tries:
                handler_offs.append(len(handler_blob))
                typed = [(e, a) for e, a in handlers if e is not None]
                catch_all = [a for e, a in handlers if e is None]
                handler_blob += _sleb(-len(typed) if catch_all else len(typed))
                for exc, addr in typed:
                    handler_blob += _uleb(tidx[exc]) + _uleb(addr)
                if catch_all:
                    handler_blob += _uleb(catch_all[0])
            for (start, count, _), hoff in zip(tries, handler_offs):
                out += struct.pack("<IHH", start, count, hoff)
            out += handler_blob
        return bytes(out)
