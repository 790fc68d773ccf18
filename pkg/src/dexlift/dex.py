"""Parser for the dex (version 035) container.

A dex file holds every class of an application.  Strings, type descriptors,
prototypes, field references and method references live in shared pools that
the class definitions and the bytecode index into.  ``parse_dex`` reads the
whole image eagerly and validates every cross-reference, so the returned
:class:`DexFile` can be used without further error checks.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass

from dexlift.errors import DexliftError

DEX_MAGIC = b"dex\n035\0"
ENDIAN_CONSTANT = 0x12345678
NO_INDEX = 0xFFFFFFFF
HEADER_SIZE = 0x70

ACC_PUBLIC = 0x1
ACC_PRIVATE = 0x2
ACC_PROTECTED = 0x4
ACC_STATIC = 0x8
ACC_FINAL = 0x10
ACC_SYNCHRONIZED = 0x20
ACC_NATIVE = 0x100
ACC_INTERFACE = 0x200
ACC_ABSTRACT = 0x400
ACC_CONSTRUCTOR = 0x10000


class DexError(DexliftError):
    pass


class BadMagic(DexError):
    pass


class Truncated(DexError):
    pass


class BadIndex(DexError):
    pass


class BadEncoding(DexError):
    pass


# -- descriptors -------------------------------------------------------------

_DESCRIPTOR = re.compile(r"\[*(?:[ZBSCIJFD]|L[^;\[\s]+;)")


def is_descriptor(text: str, allow_void: bool = False) -> bool:
    if allow_void and text == "V":
        return True
    return _DESCRIPTOR.fullmatch(text) is not None


def split_params(params: str) -> tuple[str, ...]:
    """Split a run of concatenated parameter descriptors: ``"IJ[LFoo;"``."""
    out = []
    pos = 0
    while pos < len(params):
        m = _DESCRIPTOR.match(params, pos)
        if m is None:
            raise ValueError(f"bad parameter descriptors {params!r}")
        out.append(m.group())
        pos = m.end()
    return tuple(out)


def is_wide(descriptor: str) -> bool:
    return descriptor in ("J", "D")


@dataclass(frozen=True)
class FieldRef:
    owner: str
    name: str
    type: str

    def __str__(self) -> str:
        return f"{self.owner}.{self.name}:{self.type}"


@dataclass(frozen=True)
class MethodRef:
    owner: str
    name: str
    params: tuple[str, ...]
    return_type: str

    @property
    def signature(self) -> str:
        return f"({''.join(self.params)}){self.return_type}"

    def __str__(self) -> str:
        return f"{self.owner}.{self.name}:{self.signature}"

    @classmethod
    def parse(cls, text: str) -> MethodRef:
        """Parse ``LOwner;.name:(params)ret``."""
        m = re.fullmatch(r"(\[*L[^;]+;|\[+[ZBSCIJFD])\.([^:]+):\(([^)]*)\)(\S+)", text)
        if m is None:
            raise ValueError(f"bad method reference {text!r}")
        return cls(m.group(1), m.group(2), split_params(m.group(3)), m.group(4))


def parse_field_ref(text: str) -> FieldRef:
    m = re.fullmatch(r"(L[^;]+;)\.([^:]+):(\S+)", text)
    if m is None:
        raise ValueError(f"bad field reference {text!r}")
    return FieldRef(m.group(1), m.group(2), m.group(3))


# -- model -------------------------------------------------------------------


@dataclass(frozen=True)
class DexHeader:
    magic: bytes
    checksum: int
    signature: bytes
    file_size: int
    header_size: int
    endian_tag: int
    link_size: int
    link_off: int
    map_off: int
    string_ids_size: int
    string_ids_off: int
    type_ids_size: int
    type_ids_off: int
    proto_ids_size: int
    proto_ids_off: int
    field_ids_size: int
    field_ids_off: int
    method_ids_size: int
    method_ids_off: int
    class_defs_size: int
    class_defs_off: int
    data_size: int
    data_off: int


_HEADER_FMT = "<8sI20s20I"


@dataclass(frozen=True)
class Proto:
    shorty: str
    return_type: str
    params: tuple[str, ...]


@dataclass(frozen=True)
class Handler:
    exception: str | None  # None means catch-all
    address: int


@dataclass(frozen=True)
class TryRange:
    start: int
    count: int
    handlers: tuple[Handler, ...]

    @property
    def end(self) -> int:
        return self.start + self.count


@dataclass(frozen=True)
class CodeItem:
    registers_size: int
    ins_size: int
    outs_size: int
    insns: tuple[int, ...]
    tries: tuple[TryRange, ...] = ()
    debug_info_off: int = 0


@dataclass(frozen=True)
class FieldDef:
    field: FieldRef
    access_flags: int


@dataclass(frozen=True)
class MethodDef:
    method: MethodRef
    access_flags: int
    code: CodeItem | None

    @property
    def is_static(self) -> bool:
        return bool(self.access_flags & ACC_STATIC)


@dataclass(frozen=True)
class ClassDef:
    this_type: str
    access_flags: int
    superclass: str | None
    interfaces: tuple[str, ...]
    source_file: str | None
    static_fields: tuple[FieldDef, ...]
    instance_fields: tuple[FieldDef, ...]
    direct_methods: tuple[MethodDef, ...]
    virtual_methods: tuple[MethodDef, ...]
    # Skipped sections, kept as offsets into the image (0 when absent).
    annotations_off: int = 0
    static_values_off: int = 0

    @property
    def methods(self) -> tuple[MethodDef, ...]:
        return self.direct_methods + self.virtual_methods


@dataclass(frozen=True)
class DexFile:
    header: DexHeader
    string_pool: tuple[str, ...]
    type_pool: tuple[str, ...]
    proto_pool: tuple[Proto, ...]
    field_pool: tuple[FieldRef, ...]
    method_pool: tuple[MethodRef, ...]
    class_defs: tuple[ClassDef, ...]

    def find_class(self, descriptor: str) -> ClassDef | None:
        for cls in self.class_defs:
            if cls.this_type == descriptor:
                return cls
        return None

    def find_method(self, ref: MethodRef) -> MethodDef | None:
        cls = self.find_class(ref.owner)
        if cls is None:
            return None
        for m in cls.methods:
            if m.method == ref:
                return m
        return None

    def iter_methods(self):
        for cls in self.class_defs:
            for m in cls.methods:
                yield cls, m


def _pool_get(pool, idx: int, what: str):
    if not 0 <= idx < len(pool):
        raise BadIndex(f"{what} index {idx} out of range (pool size {len(pool)})")
    return pool[idx]


def resolve_string(dex: DexFile, idx: int) -> str:
    return _pool_get(dex.string_pool, idx, "string")


def resolve_type(dex: DexFile, idx: int) -> str:
    return _pool_get(dex.type_pool, idx, "type")


def resolve_field(dex: DexFile, idx: int) -> FieldRef:
    return _pool_get(dex.field_pool, idx, "field")


def resolve_method(dex: DexFile, idx: int) -> MethodRef:
    return _pool_get(dex.method_pool, idx, "method")


def resolve(dex: DexFile, kind: str, idx: int):
    """Resolve an instruction's ``(pool kind, index)`` reference."""
    return {
        "string": resolve_string,
        "type": resolve_type,
        "field": resolve_field,
        "method": resolve_method,
    }[kind](dex, idx)


def method_code(dex: DexFile, m: MethodDef) -> CodeItem | None:
    return m.code


# -- parsing -----------------------------------------------------------------


def decode_mutf8(data: bytes, utf16_size: int | None = None) -> str:
    """Decode the modified UTF-8 used by dex string data (no terminator)."""
    units: list[int] = []
    i = 0
    n = len(data)
    while i < n:
        b = data[i]
        if b < 0x80:
            if b == 0:
                raise BadEncoding("raw NUL byte inside string data")
            units.append(b)
            i += 1
        elif b & 0xE0 == 0xC0:
            if i + 1 >= n or data[i + 1] & 0xC0 != 0x80:
                raise BadEncoding(f"bad 2-byte sequence at byte {i}")
            units.append((b & 0x1F) << 6 | data[i + 1] & 0x3F)
            i += 2
        elif b & 0xF0 == 0xE0:
            if i + 2 >= n or data[i + 1] & 0xC0 != 0x80 or data[i + 2] & 0xC0 != 0x80:
                raise BadEncoding(f"bad 3-byte sequence at byte {i}")
            units.append((b & 0x0F) << 12 | (data[i + 1] & 0x3F) << 6 | data[i + 2] & 0x3F)
            i += 3
        else:
            raise BadEncoding(f"invalid lead byte 0x{b:02x} at byte {i}")
    if utf16_size is not None and len(units) != utf16_size:
        raise BadEncoding(f"string declares {utf16_size} UTF-16 units, decoded {len(units)}")
    raw = b"".join(struct.pack("<H", u) for u in units)
    return raw.decode("utf-16-le", errors="surrogatepass")


def encode_mutf8(text: str) -> tuple[bytes, int]:
    """Inverse of :func:`decode_mutf8`; returns (bytes, utf16 unit count)."""
    raw = text.encode("utf-16-le", errors="surrogatepass")
    units = [raw[i] | raw[i + 1] << 8 for i in range(0, len(raw), 2)]
    out = bytearray()
    for u in units:
        if 0 < u < 0x80:
            out.append(u)
        elif u < 0x800:
            out += bytes([0xC0 | u >> 6, 0x80 | u & 0x3F])
        else:
            out += bytes([0xE0 | u >> 12, 0x80 | (u >> 6) & 0x3F, 0x80 | u & 0x3F])
    return bytes(out), len(units)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data

    def check(self, off: int, size: int, what: str) -> None:
        if off < 0 or size < 0 or off + size > len(self.data):
            raise Truncated(f"{what} at 0x{off:x} (+{size}) lies outside the {len(self.data)}-byte file")

    def unpack(self, fmt: str, off: int, what: str):
        size = struct.calcsize(fmt)
        self.check(off, size, what)
        return struct.unpack_from(fmt, self.data, off)

    def u16(self, off: int, what: str) -> int:
        return self.unpack("<H", off, what)[0]

    def u32(self, off: int, what: str) -> int:
        return self.unpack("<I", off, what)[0]

    def uleb128(self, off: int, what: str) -> tuple[int, int]:
        result = shift = 0
        for k in range(5):
            self.check(off + k, 1, what)
            b = self.data[off + k]
            result |= (b & 0x7F) << shift
            shift += 7
            if not b & 0x80:
                return result, off + k + 1
        raise BadEncoding(f"uleb128 longer than 5 bytes in {what} at 0x{off:x}")

    def sleb128(self, off: int, what: str) -> tuple[int, int]:
        value, end = self.uleb128(off, what)
        bits = 7 * (end - off)
        if value & (1 << (bits - 1)):
            value -= 1 << bits
        return value, end


def _parse_header(r: _Reader) -> DexHeader:
    if len(r.data) < HEADER_SIZE:
        raise Truncated(f"file is {len(r.data)} bytes, shorter than the {HEADER_SIZE}-byte header")
    fields = struct.unpack_from(_HEADER_FMT, r.data, 0)
    header = DexHeader(*fields)
    if header.magic != DEX_MAGIC:
        raise BadMagic(f"bad magic {header.magic!r}; only {DEX_MAGIC!r} is supported")
    if header.endian_tag != ENDIAN_CONSTANT:
        raise BadMagic(f"unsupported endian tag 0x{header.endian_tag:08x}")
    if header.file_size != len(r.data):
        raise Truncated(f"header declares {header.file_size} bytes, file has {len(r.data)}")
    sections = [
        ("string_ids", header.string_ids_off, header.string_ids_size * 4),
        ("type_ids", header.type_ids_off, header.type_ids_size * 4),
        ("proto_ids", header.proto_ids_off, header.proto_ids_size * 12),
        ("field_ids", header.field_ids_off, header.field_ids_size * 8),
        ("method_ids", header.method_ids_off, header.method_ids_size * 8),
        ("class_defs", header.class_defs_off, header.class_defs_size * 32),
        ("data", header.data_off, header.data_size),
    ]
    for name, off, size in sections:
        if size:
            r.check(off, size, name)
    return header


def _type_list(r: _Reader, off: int, types: tuple[str, ...], what: str) -> tuple[str, ...]:
    if off == 0:
        return ()
    size = r.u32(off, what)
    r.check(off + 4, 2 * size, what)
    return tuple(_pool_get(types, r.u16(off + 4 + 2 * i, what), f"{what} type") for i in range(size))


def _parse_code(r: _Reader, off: int, types: tuple[str, ...], what: str) -> CodeItem:
    regs, ins, outs, tries_size, debug_off, insns_size = r.unpack("<4H2I", off, what)
    if ins > regs:
        raise BadIndex(f"{what}: ins_size {ins} exceeds registers_size {regs}")
    r.check(off + 16, 2 * insns_size, f"{what} insns")
    insns = struct.unpack_from(f"<{insns_size}H", r.data, off + 16)
    pos = off + 16 + 2 * insns_size
    if tries_size and insns_size % 2:
        pos += 2
    handlers_base = pos + 8 * tries_size

    def handler_addr(addr: int) -> int:
        if addr >= insns_size:
            raise BadIndex(f"{what}: handler address 0x{addr:x} outside code")
        return addr

    tries = []
    for i in range(tries_size):
        start, count, handler_off = r.unpack("<IHH", pos + 8 * i, f"{what} try")
        if start + count > insns_size or count == 0:
            raise BadIndex(f"{what}: try range [{start}, {start + count}) outside {insns_size} code units")
        hpos = handlers_base + handler_off
        size, hpos = r.sleb128(hpos, f"{what} handler")
        handlers = []
        for _ in range(abs(size)):
            type_idx, hpos = r.uleb128(hpos, f"{what} handler")
            addr, hpos = r.uleb128(hpos, f"{what} handler")
            handlers.append(Handler(_pool_get(types, type_idx, "handler type"), handler_addr(addr)))
        if size <= 0:
            addr, hpos = r.uleb128(hpos, f"{what} catch-all")
            handlers.append(Handler(None, handler_addr(addr)))
        tries.append(TryRange(start, count, tuple(handlers)))
    return CodeItem(regs, ins, outs, tuple(insns), tuple(tries), debug_off)


def parse_dex(data: bytes) -> DexFile:
    """Parse a complete dex image.  Every pool reference is validated."""
    data = bytes(data)
    r = _Reader(data)
    h = _parse_header(r)

    strings = []
    for i in range(h.string_ids_size):
        off = r.u32(h.string_ids_off + 4 * i, "string_id")
        utf16_size, pos = r.uleb128(off, "string_data")
        end = data.find(b"\0", pos)
        if end < 0:
            raise Truncated(f"unterminated string {i} at 0x{off:x}")
        strings.append(decode_mutf8(data[pos:end], utf16_size))
    strings = tuple(strings)

    types = tuple(
        _pool_get(strings, r.u32(h.type_ids_off + 4 * i, "type_id"), "type_id string")
        for i in range(h.type_ids_size)
    )
    for t in types:
        if not is_descriptor(t, allow_void=True):
            raise BadEncoding(f"malformed type descriptor {t!r}")

    protos = []
    for i in range(h.proto_ids_size):
        shorty_idx, ret_idx, params_off = r.unpack("<3I", h.proto_ids_off + 12 * i, "proto_id")
        protos.append(Proto(
            _pool_get(strings, shorty_idx, "proto shorty"),
            _pool_get(types, ret_idx, "proto return"),
            _type_list(r, params_off, types, "proto parameters"),
        ))
    protos = tuple(protos)

    fields = []
    for i in range(h.field_ids_size):
        cls_idx, type_idx, name_idx = r.unpack("<HHI", h.field_ids_off + 8 * i, "field_id")
        fields.append(FieldRef(
            _pool_get(types, cls_idx, "field class"),
            _pool_get(strings, name_idx, "field name"),
            _pool_get(types, type_idx, "field type"),
        ))
    fields = tuple(fields)

    methods = []
    for i in range(h.method_ids_size):
        cls_idx, proto_idx, name_idx = r.unpack("<HHI", h.method_ids_off + 8 * i, "method_id")
        proto = _pool_get(protos, proto_idx, "method proto")
        methods.append(MethodRef(
            _pool_get(types, cls_idx, "method class"),
            _pool_get(strings, name_idx, "method name"),
            proto.params,
            proto.return_type,
        ))
    methods = tuple(methods)

    classes = []
    for i in range(h.class_defs_size):
        (cls_idx, access, super_idx, ifaces_off, source_idx,
         annotations_off, class_data_off, static_values_off) = r.unpack("<8I", h.class_defs_off + 32 * i, "class_def")
        this_type = _pool_get(types, cls_idx, "class_def class")
        superclass = None if super_idx == NO_INDEX else _pool_get(types, super_idx, "superclass")
        source = None if source_idx == NO_INDEX else _pool_get(strings, source_idx, "source file")
        interfaces = _type_list(r, ifaces_off, types, "interfaces")
        groups: list[list] = [[], [], [], []]
        if class_data_off:
            pos = class_data_off
            sizes = []
            for _ in range(4):
                n, pos = r.uleb128(pos, "class_data")
                sizes.append(n)
            for g in range(2):
                idx = 0
                for _ in range(sizes[g]):
                    diff, pos = r.uleb128(pos, "encoded_field")
                    flags, pos = r.uleb128(pos, "encoded_field")
                    idx += diff
                    groups[g].append(FieldDef(_pool_get(fields, idx, "encoded_field"), flags))
            for g in range(2, 4):
                idx = 0
                for _ in range(sizes[g]):
                    diff, pos = r.uleb128(pos, "encoded_method")
                    flags, pos = r.uleb128(pos, "encoded_method")
                    code_off, pos = r.uleb128(pos, "encoded_method")
                    idx += diff
                    ref = _pool_get(methods, idx, "encoded_method")
                    code = None
                    if code_off:
                        code = _parse_code(r, code_off, types, f"code of {ref}")
                    elif not flags & (ACC_ABSTRACT | ACC_NATIVE):
                        raise BadIndex(f"concrete method {ref} has no code")
                    groups[g].append(MethodDef(ref, flags, code))
        classes.append(ClassDef(
            this_type, access, superclass, interfaces, source,
            tuple(groups[0]), tuple(groups[1]), tuple(groups[2]), tuple(groups[3]),
            annotations_off, static_values_off,
        ))

    return DexFile(h, strings, types, protos, fields, methods, tuple(classes))
