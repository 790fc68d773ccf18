"""Two small interpreters, one over Dalvik code and one over typed IR.

They exist to check that lifting preserves behaviour: run the same method
both ways on the same arguments and compare :class:`Outcome` values.

The Dalvik side works on raw register contents (32-bit patterns, a 64-bit
pattern in the low register of a wide pair, object references, and 0 for
null).  The IR side works on typed Python values.  Objects, arrays and
fields on the heap hold typed values in both, and library methods are
replaced by stubs that see typed arguments.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Callable

from dexlift import ir
from dexlift.dex import CodeItem, DexFile, FieldRef, MethodRef, is_wide, resolve
from dexlift.errors import DexliftError
from dexlift.isa import decode_stream

OBJECT = "Ljava/lang/Object;"
STRING = "Ljava/lang/String;"
ARITHMETIC = "Ljava/lang/ArithmeticException;"
NPE = "Ljava/lang/NullPointerException;"
AIOOBE = "Ljava/lang/ArrayIndexOutOfBoundsException;"
NEGATIVE_SIZE = "Ljava/lang/NegativeArraySizeException;"
CLASS_CAST = "Ljava/lang/ClassCastException;"

BUILTIN_SUPERCLASSES = {
    "Ljava/lang/Throwable;": OBJECT,
    "Ljava/lang/Exception;": "Ljava/lang/Throwable;",
    "Ljava/lang/Error;": "Ljava/lang/Throwable;",
    "Ljava/lang/RuntimeException;": "Ljava/lang/Exception;",
    ARITHMETIC: "Ljava/lang/RuntimeException;",
    NPE: "Ljava/lang/RuntimeException;",
    "Ljava/lang/IndexOutOfBoundsException;": "Ljava/lang/RuntimeException;",
    AIOOBE: "Ljava/lang/IndexOutOfBoundsException;",
    NEGATIVE_SIZE: "Ljava/lang/RuntimeException;",
    CLASS_CAST: "Ljava/lang/RuntimeException;",
    "Ljava/lang/IllegalStateException;": "Ljava/lang/RuntimeException;",
    "Ljava/lang/IllegalArgumentException;": "Ljava/lang/RuntimeException;",
    STRING: OBJECT,
    "Ljava/lang/Class;": OBJECT,
}


class OracleError(DexliftError):
    pass


class UnsupportedForOracle(OracleError):
    pass


class StepLimitExceeded(OracleError):
    pass


# -- heap values -------------------------------------------------------------


class Obj:
    """Instance of a class: a descriptor and a field dictionary."""

    def __init__(self, cls: str):
        self.cls = cls
        self.fields: dict[str, object] = {}

    def __repr__(self) -> str:
        return f"Obj({self.cls})"


class Arr:
    def __init__(self, element: str, values: list):
        self.element = element  # element descriptor
        self.values = values

    @property
    def cls(self) -> str:
        return "[" + self.element


@dataclass(frozen=True)
class ClassObj:
    descriptor: str
    cls = "Ljava/lang/Class;"


class Thrown(Exception):
    def __init__(self, obj: Obj):
        super().__init__(obj.cls)
        self.obj = obj


def throw(cls: str):
    raise Thrown(Obj(cls))


# -- numeric helpers (Java semantics) -----------------------------------------

_MASK32 = 0xFFFFFFFF
_MASK64 = 0xFFFFFFFFFFFFFFFF


def wrap32(x: int) -> int:
    x &= _MASK32
    return x - (1 << 32) if x >> 31 else x


def wrap64(x: int) -> int:
    x &= _MASK64
    return x - (1 << 64) if x >> 63 else x


def f32(x: float) -> float:
    """Round a double to the nearest float32 value."""
    try:
        return struct.unpack("<f", struct.pack("<f", x))[0]
    except OverflowError:
        return math.copysign(math.inf, x)


def float_bits(x: float) -> int:
    return struct.unpack("<I", struct.pack("<f", x))[0]


def bits_float(b: int) -> float:
    return struct.unpack("<f", struct.pack("<I", b & _MASK32))[0]


def double_bits(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", x))[0]


def bits_double(b: int) -> float:
    return struct.unpack("<d", struct.pack("<Q", b & _MASK64))[0]


def int_to_f32(x: int) -> float:
    """Correctly rounded integer to float32 (no double rounding)."""
    m = abs(x)
    shift = m.bit_length() - 24
    if shift > 0:
        q, r = divmod(m, 1 << shift)
        half = 1 << (shift - 1)
        if r > half or (r == half and q & 1):
            q += 1
        m = q << shift
    return f32(math.copysign(float(m), x) if x else 0.0)


def float_to_int(x: float, bits: int) -> int:
    if math.isnan(x):
        return 0
    lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    if x <= lo:
        return lo
    if x >= hi:
        return hi
    return int(x)


def _fdiv(a: float, b: float) -> float:
    if b == 0:
        if a == 0 or math.isnan(a):
            return math.nan
        return math.copysign(math.inf, math.copysign(1, a) * math.copysign(1, b))
    return a / b


def _frem(a: float, b: float) -> float:
    if math.isnan(a) or math.isnan(b) or math.isinf(a) or b == 0:
        return math.nan
    if math.isinf(b):
        return a
    return math.fmod(a, b)


def arith(op: str, a, b, kind: str):
    """Binary operation on typed values; kind is one of I, J, F, D."""
    if kind in ("I", "J"):
        bits = 32 if kind == "I" else 64
        wrap = wrap32 if kind == "I" else wrap64
        if op in ("/", "%"):
            if b == 0:
                throw(ARITHMETIC)
            q = abs(a) // abs(b)
            if (a < 0) != (b < 0):
                q = -q
            return wrap(q) if op == "/" else wrap(a - q * b)
        if op in ("<<", ">>", ">>>"):
            n = b & (bits - 1)
            if op == "<<":
                return wrap(a << n)
            if op == ">>":
                return a >> n
            return wrap((a & ((1 << bits) - 1)) >> n)
        r = {"+": lambda: a + b, "-": lambda: a - b, "*": lambda: a * b,
             "&": lambda: a & b, "|": lambda: a | b, "^": lambda: a ^ b}[op]()
        return wrap(r)
    rnd = f32 if kind == "F" else float
    if op == "+":
        r = a + b
    elif op == "-":
        r = a - b
    elif op == "*":
        r = a * b
    elif op == "/":
        r = _fdiv(a, b)
    elif op == "%":
        r = _frem(a, b)
    else:
        raise UnsupportedForOracle(f"operator {op} on {kind}")
    return rnd(r)


def negate(a, kind: str):
    if kind == "I":
        return wrap32(-a)
    if kind == "J":
        return wrap64(-a)
    return -a


def invert(a, kind: str):
    return wrap32(~a) if kind == "I" else wrap64(~a)


def convert(a, src: str, dst: str):
    """Primitive conversion between I, J, F, D and to B, C, S."""
    if dst == "B":
        return wrap32(a & 0xFF) if not a & 0x80 else (a & 0xFF) - 0x100
    if dst == "C":
        return a & 0xFFFF
    if dst == "S":
        return (a & 0xFFFF) - 0x10000 if a & 0x8000 else a & 0xFFFF
    if src in ("I", "J"):
        if dst == "I":
            return wrap32(a)
        if dst == "J":
            return wrap64(a)
        if dst == "F":
            return int_to_f32(a)
        return float(a)
    if dst == "I":
        return float_to_int(a, 32)
    if dst == "J":
        return float_to_int(a, 64)
    if dst == "F":
        return f32(a)
    return a


def compare(kind: str, a, b) -> int:
    if kind != "cmp-long" and (math.isnan(a) or math.isnan(b)):
        return 1 if kind.startswith("cmpg") else -1
    return (a > b) - (a < b)


def narrow(desc: str, v):
    """Value as stored into a field or array element of type ``desc``."""
    if desc == "Z":
        return v & 0xFF
    if desc == "B":
        return convert(v, "I", "B")
    if desc == "C":
        return v & 0xFFFF
    if desc == "S":
        return convert(v, "I", "S")
    if desc == "I":
        return wrap32(v)
    if desc == "J":
        return wrap64(v)
    if desc == "F":
        return f32(v)
    return v


def default_value(desc: str):
    if desc in ("F", "D"):
        return 0.0
    if desc[0] in "L[":
        return None
    return 0


# -- canonical outcomes --------------------------------------------------------


def canonical(v, desc: str, _seen: frozenset = frozenset()):
    """Comparable form of a typed value of static type ``desc``."""
    if desc == "F":
        return ("F", float_bits(v))
    if desc == "D":
        return ("D", double_bits(v))
    if desc in ("Z", "B", "S", "C", "I", "J"):
        return v
    return _canon_ref(v, _seen)


def _canon_ref(v, seen: frozenset):
    if v is None:
        return None
    if isinstance(v, str):
        return ("str", v)
    if isinstance(v, ClassObj):
        return ("class", v.descriptor)
    if id(v) in seen:
        return ("cycle", v.cls)
    seen = seen | {id(v)}
    if isinstance(v, Arr):
        return ("array", v.element, tuple(canonical(x, v.element, seen) for x in v.values))
    if isinstance(v, Obj):
        return ("obj", v.cls, tuple(sorted((k, _canon_any(x, seen)) for k, x in v.fields.items())))
    raise OracleError(f"cannot canonicalise {v!r}")


def _canon_any(v, seen):
    desc = "F" if isinstance(v, float) else "I" if isinstance(v, int) else "L"
    if isinstance(v, float):
        return ("f", double_bits(v))
    return canonical(v, desc, seen)


@dataclass(frozen=True)
class Outcome:
    kind: str  # "return" or "throw"
    value: object  # canonical value, or the thrown class descriptor
    trace: tuple = ()


# -- environment -----------------------------------------------------------------


Stub = Callable[[list], object]


def _string_stubs() -> dict[str, Stub]:
    def length(args):
        return len(args[0])

    def concat(args):
        if args[1] is None:
            throw(NPE)
        return args[0] + args[1]

    def char_at(args):
        s, i = args
        if not 0 <= i < len(s):
            throw("Ljava/lang/StringIndexOutOfBoundsException;")
        return ord(s[i])

    def equals(args):
        return int(isinstance(args[1], str) and args[0] == args[1])

    return {
        "Ljava/lang/String;.length:()I": length,
        "Ljava/lang/String;.concat:(Ljava/lang/String;)Ljava/lang/String;": concat,
        "Ljava/lang/String;.charAt:(I)C": char_at,
        "Ljava/lang/String;.equals:(Ljava/lang/Object;)Z": equals,
        "Ljava/lang/String;.valueOf:(I)Ljava/lang/String;": lambda a: str(a[0]),
        "Ljava/lang/String;.isEmpty:()Z": lambda a: int(len(a[0]) == 0),
    }


STRING_STUBS = _string_stubs()


@dataclass
class Env:
    """What a run may call: stubbed library methods and in-app code."""

    dex: DexFile | None = None
    stubs: dict[str, Stub] = field(default_factory=lambda: dict(STRING_STUBS))
    bodies: dict[MethodRef, ir.Body] = field(default_factory=dict)
    statics: dict[str, object] = field(default_factory=dict)  # initial static field values
    max_steps: int = 100_000

    def superclass(self, cls: str) -> str | None:
        if cls == OBJECT:
            return None
        if self.dex is not None:
            c = self.dex.find_class(cls)
            if c is not None:
                return c.superclass
        return BUILTIN_SUPERCLASSES.get(cls, OBJECT)

    def is_subclass(self, cls: str, target: str) -> bool:
        seen = 0
        c: str | None = cls
        while c is not None and seen < 64:
            if c == target:
                return True
            c = self.superclass(c)
            seen += 1
        return False

    def is_instance(self, v, desc: str) -> bool:
        if v is None:
            return False
        if desc == OBJECT:
            return True
        if isinstance(v, Arr):
            if not desc.startswith("["):
                return False
            elem = desc[1:]
            if elem == v.element:
                return True
            if elem[0] in "L[" and v.element[0] in "L[":
                return elem == OBJECT or (v.element[0] == "L" and self.is_subclass(v.element, elem))
            return False
        if isinstance(v, str):
            return desc == STRING
        if isinstance(v, ClassObj):
            return desc == "Ljava/lang/Class;"
        return self.is_subclass(v.cls, desc)


class _Machine:
    """State shared by all frames of one top-level run."""

    def __init__(self, env: Env, mode: str):
        self.env = env
        self.mode = mode  # "dalvik" or "ir"
        self.statics = dict(env.statics)
        self.trace: list = []
        self.steps = 0

    def tick(self) -> None:
        self.steps += 1
        if self.steps > self.env.max_steps:
            raise StepLimitExceeded(f"more than {self.env.max_steps} steps")

    def get_static(self, f: FieldRef):
        return self.statics.get(str(f), default_value(f.type))

    def put_static(self, f: FieldRef, v) -> None:
        self.statics[str(f)] = narrow(f.type, v)

    def lookup(self, ref: MethodRef):
        if self.mode == "ir":
            return self.env.bodies.get(ref)
        if self.env.dex is None:
            return None
        m = self.env.dex.find_method(ref)
        return m if m is not None and m.code is not None else None

    def resolve(self, ref: MethodRef, kind: str, receiver):
        virtual = kind in ("virtual", "interface")
        cls: str | None = receiver.cls if virtual and isinstance(receiver, Obj) else ref.owner
        while cls is not None:
            found = self.lookup(MethodRef(cls, ref.name, ref.params, ref.return_type))
            if found is not None:
                return found
            if kind in ("static", "direct") and cls == ref.owner:
                return None
            cls = self.env.superclass(cls)
        return None

    def call(self, ref: MethodRef, kind: str, args: list):
        """Invoke with typed arguments; returns the typed result."""
        receiver = args[0] if kind != "static" else None
        if kind != "static" and receiver is None:
            throw(NPE)
        target = self.resolve(ref, kind, receiver)
        if target is not None:
            if self.mode == "ir":
                return _run_ir(self, target, args)
            return _run_dalvik(self, target.code, target.method, args)
        stub = self.env.stubs.get(str(ref))
        if stub is not None:
            result = stub(list(args))
            params = ([ref.owner] if kind != "static" else []) + list(ref.params)
            self.trace.append((
                str(ref),
                tuple(canonical(a, p) for a, p in zip(args, params)),
                None if ref.return_type == "V" else canonical(result, ref.return_type),
            ))
            return result
        if ref.name == "<init>":
            return None
        raise UnsupportedForOracle(f"no implementation or stub for {ref}")


def _outcome(machine: _Machine, run, method: MethodRef) -> Outcome:
    try:
        result = run()
    except Thrown as t:
        return Outcome("throw", t.obj.cls, tuple(machine.trace))
    value = None if method.return_type == "V" else canonical(result, method.return_type)
    return Outcome("return", value, tuple(machine.trace))


# -- Dalvik interpreter --------------------------------------------------------

_HI = ("hi",)  # upper half of a wide register pair


def _to_typed(raw, desc: str):
    if desc in ("L", "[") or desc[0] in "L[":
        return None if raw == 0 else raw
    if desc == "F":
        return bits_float(raw)
    if desc == "D":
        return bits_double(raw)
    if desc == "J":
        return wrap64(raw)
    return wrap32(raw)


def _to_raw(v, desc: str):
    if desc[0] in "L[":
        return v
    if desc == "F":
        return float_bits(v)
    if desc == "D":
        return double_bits(v)
    if desc == "J":
        return v & _MASK64
    return v & _MASK32


_OPS = {"add": "+", "sub": "-", "mul": "*", "div": "/", "rem": "%", "and": "&",
        "or": "|", "xor": "^", "shl": "<<", "shr": ">>", "ushr": ">>>"}
_TYPE = {"int": "I", "long": "J", "float": "F", "double": "D"}
_IF = {"eq": lambda a, b: a == b, "ne": lambda a, b: a != b, "lt": lambda a, b: a < b,
       "ge": lambda a, b: a >= b, "gt": lambda a, b: a > b, "le": lambda a, b: a <= b}
_SUFFIX_DESC = {"": None, "-wide": None, "-object": None, "-boolean": "Z", "-byte": "B",
                "-char": "C", "-short": "S"}


def _ref(raw):
    return None if raw == 0 else raw


def _same(a, b) -> bool:
    """Dalvik if-eq/if-ne: numbers by value, references by identity."""
    a, b = (0 if a is None else a), (0 if b is None else b)
    if isinstance(a, int) and isinstance(b, int):
        return a == b
    return a is b


def exec_dalvik(code: CodeItem, args: list, env: Env, method: MethodRef) -> Outcome:
    """Run ``code`` (the body of ``method``) on typed ``args`` (``this`` first)."""
    machine = _Machine(env, "dalvik")
    return _outcome(machine, lambda: _run_dalvik(machine, code, method, args), method)


def _run_dalvik(machine: _Machine, code: CodeItem, method: MethodRef, args: list):
    env = machine.env
    insns = decode_stream(code.insns)
    at = {ins.address: ins for ins in insns}
    regs: list = [0] * code.registers_size
    descs = ([method.owner] if len(args) > len(method.params) else []) + list(method.params)
    if len(descs) != len(args):
        raise OracleError(f"{method} takes {len(descs)} arguments, got {len(args)}")
    r = code.registers_size - code.ins_size
    for a, d in zip(args, descs):
        regs[r] = _to_raw(a, d)
        if is_wide(d):
            regs[r + 1] = _HI
            r += 2
        else:
            r += 1

    def put(reg: int, v, wide: bool = False) -> None:
        regs[reg] = v
        if wide:
            regs[reg + 1] = _HI

    def s(reg: int) -> int:
        return wrap32(regs[reg])

    result = None
    exc = None
    pc = 0
    while True:
        machine.tick()
        ins = at.get(pc)
        if ins is None or ins.is_payload:
            raise OracleError(f"execution reached 0x{pc:04x}, which starts no instruction")
        name = ins.mnemonic
        rg = ins.registers
        nxt = pc + ins.width
        try:
            base, _, _variant = name.partition("/")
            if name == "nop":
                pass
            elif base in ("move", "move-object"):
                put(rg[0], regs[rg[1]])
            elif base == "move-wide":
                put(rg[0], regs[rg[1]], True)
            elif base in ("move-result", "move-result-object"):
                put(rg[0], result)
            elif base == "move-result-wide":
                put(rg[0], result, True)
            elif name == "move-exception":
                put(rg[0], exc)
            elif name == "return-void":
                return None
            elif base in ("return", "return-wide", "return-object"):
                return _to_typed(regs[rg[0]], method.return_type)
            elif base == "const" or base == "const/4":
                put(rg[0], ins.literal & _MASK32)
            elif base == "const-wide":
                put(rg[0], ins.literal & _MASK64, True)
            elif base == "const-string":
                put(rg[0], env_resolve(env, ins))
            elif name == "const-class":
                put(rg[0], ClassObj(env_resolve(env, ins)))
            elif name in ("monitor-enter", "monitor-exit"):
                if _ref(regs[rg[0]]) is None:
                    throw(NPE)
            elif name == "check-cast":
                v = _ref(regs[rg[0]])
                if v is not None and not env.is_instance(v, env_resolve(env, ins)):
                    throw(CLASS_CAST)
            elif name == "instance-of":
                put(rg[0], int(env.is_instance(_ref(regs[rg[1]]), env_resolve(env, ins))))
            elif name == "array-length":
                a = _ref(regs[rg[1]])
                if a is None:
                    throw(NPE)
                put(rg[0], len(a.values))
            elif name == "new-instance":
                put(rg[0], Obj(env_resolve(env, ins)))
            elif name == "new-array":
                n = s(rg[1])
                if n < 0:
                    throw(NEGATIVE_SIZE)
                elem = env_resolve(env, ins)[1:]
                put(rg[0], Arr(elem, [default_value(elem)] * n))
            elif base == "filled-new-array":
                elem = env_resolve(env, ins)[1:]
                result = Arr(elem, [_to_typed(regs[x], elem) for x in rg])
            elif name == "fill-array-data":
                a = _ref(regs[rg[0]])
                if a is None:
                    throw(NPE)
                data = ins.payload.elements()
                if len(data) > len(a.values):
                    throw(AIOOBE)
                w = ins.payload.element_width
                for i, raw in enumerate(data):
                    signed = raw - (1 << 8 * w) if raw >> (8 * w - 1) else raw
                    a.values[i] = _element_from_raw(a.element, raw, signed)
            elif name == "throw":
                v = _ref(regs[rg[0]])
                raise Thrown(v) if v is not None else Thrown(Obj(NPE))
            elif base == "goto":
                nxt = ins.target
            elif name in ("packed-switch", "sparse-switch"):
                key = s(rg[0])
                p = ins.payload
                if name == "packed-switch":
                    k = key - p.first_key
                    if 0 <= k < len(p.targets):
                        nxt = pc + p.targets[k]
                elif key in p.keys:
                    nxt = pc + p.targets[p.keys.index(key)]
            elif name.startswith("cmp"):
                kind = name
                if name == "cmp-long":
                    a, b = wrap64(regs[rg[1]]), wrap64(regs[rg[2]])
                elif name.endswith("float"):
                    a, b = bits_float(regs[rg[1]]), bits_float(regs[rg[2]])
                else:
                    a, b = bits_double(regs[rg[1]]), bits_double(regs[rg[2]])
                put(rg[0], compare(kind, a, b) & _MASK32)
            elif name.startswith("if-"):
                test = name[3:5]
                a = regs[rg[0]]
                b = regs[rg[1]] if not name.endswith("z") else 0
                if test in ("eq", "ne"):
                    taken = _same(a, b) == (test == "eq")
                else:
                    taken = _IF[test](wrap32(a), wrap32(b))
                if taken:
                    nxt = ins.target
            elif name[:4] in ("aget", "aput"):
                a = _ref(regs[rg[1]])
                i = s(rg[2])
                if a is None:
                    throw(NPE)
                if not 0 <= i < len(a.values):
                    throw(AIOOBE)
                if name.startswith("aget"):
                    put(rg[0], _to_raw(a.values[i], a.element), is_wide(a.element))
                else:
                    a.values[i] = narrow(a.element, _to_typed(regs[rg[0]], a.element))
            elif name[:4] in ("iget", "iput"):
                f: FieldRef = env_resolve(env, ins)
                o = _ref(regs[rg[1]])
                if o is None:
                    throw(NPE)
                if name.startswith("iget"):
                    put(rg[0], _to_raw(o.fields.get(f.name, default_value(f.type)), f.type), is_wide(f.type))
                else:
                    o.fields[f.name] = narrow(f.type, _to_typed(regs[rg[0]], f.type))
            elif name[:4] in ("sget", "sput"):
                f = env_resolve(env, ins)
                if name.startswith("sget"):
                    put(rg[0], _to_raw(machine.get_static(f), f.type), is_wide(f.type))
                else:
                    machine.put_static(f, _to_typed(regs[rg[0]], f.type))
            elif name.startswith("invoke-"):
                m: MethodRef = env_resolve(env, ins)
                kind = base[7:]
                pdescs = ([m.owner] if kind != "static" else []) + list(m.params)
                typed, k = [], 0
                for d in pdescs:
                    typed.append(_to_typed(regs[rg[k]], d))
                    k += 2 if is_wide(d) else 1
                out = machine.call(m, kind, typed)
                result = None if m.return_type == "V" else _to_raw(out, m.return_type)
            elif "-to-" in name:
                src, dst = (_TYPE.get(x, x[0].upper()) for x in name.split("-to-"))
                src_raw = regs[rg[1]]
                v = _to_typed(src_raw, src)
                out = convert(v, src, dst)
                put(rg[0], _to_raw(out, "I" if dst in "BCS" else dst), dst in ("J", "D"))
            elif name.startswith(("neg-", "not-")):
                t = _TYPE[name[4:]]
                v = _to_typed(regs[rg[1]], t)
                out = negate(v, t) if name.startswith("neg") else invert(v, t)
                put(rg[0], _to_raw(out, t), t in ("J", "D"))
            else:
                _dalvik_arith(ins, regs, put)
        except Thrown as t:
            handler = _dalvik_handler(env, code, pc, t.obj)
            if handler is None:
                raise
            exc = t.obj
            nxt = handler
        pc = nxt


def env_resolve(env: Env, ins):
    if env.dex is None:
        raise OracleError("instruction needs the dex constant pools")
    kind, idx = ins.pool_index
    return resolve(env.dex, kind, idx)


def _element_from_raw(elem: str, raw: int, signed: int):
    if elem == "F":
        return bits_float(raw)
    if elem == "D":
        return bits_double(raw)
    if elem in ("C", "Z"):
        return raw
    return signed


def _dalvik_arith(ins, regs, put) -> None:
    name = ins.mnemonic
    rg = ins.registers
    base, _, variant = name.partition("/")
    if base == "rsub-int":
        base, variant = "rsub-int", "lit"
    op_name, _, ty = base.partition("-")
    t = _TYPE.get(ty)
    if t is None or (op_name not in _OPS and op_name != "rsub"):
        raise UnsupportedForOracle(f"{name} is not supported")
    if variant.startswith("lit") or op_name == "rsub":
        a = wrap32(regs[rg[1]])
        b = ins.literal
        if op_name == "rsub":
            out = arith("-", b, a, "I")
        else:
            out = arith(_OPS[op_name], a, b, "I")
        put(rg[0], out & _MASK32)
        return
    if variant == "2addr":
        dst, x, y = rg[0], rg[0], rg[1]
    else:
        dst, x, y = rg
    op = _OPS[op_name]
    a = _to_typed(regs[x], t)
    b = _to_typed(regs[y], "I" if op in ir.SHIFT_OPS else t)
    out = arith(op, a, b, t)
    put(dst, _to_raw(out, t), t in ("J", "D"))


def _dalvik_handler(env: Env, code: CodeItem, pc: int, obj) -> int | None:
    for tr in code.tries:
        if tr.start <= pc < tr.end:
            for h in tr.handlers:
                if h.exception is None or env.is_instance(obj, h.exception):
                    return h.address
            return None
    return None


# -- IR interpreter --------------------------------------------------------------


def exec_ir(body: ir.Body, args: list, env: Env) -> Outcome:
    """Run a typed body on typed ``args`` (``this`` first for instance methods)."""
    machine = _Machine(env, "ir")
    return _outcome(machine, lambda: _run_ir(machine, body, args), body.method)


_KIND = {"Boolean": "I", "Byte": "I", "Char": "I", "Short": "I", "Int": "I",
         "Long": "J", "Float": "F", "Double": "D"}


def _desc(t: ir.IrType) -> str:
    return ir.to_descriptor(t) if t.tag not in ("Null", "Unknown") else OBJECT


def _run_ir(machine: _Machine, body: ir.Body, args: list):
    env = machine.env
    stmts = body.statements
    index = body.index_map()
    traps = body.trapped(index)
    frame: dict[int, object] = {}
    caught = None

    def val(v: ir.Value):
        if isinstance(v, ir.Local):
            if id(v) not in frame:
                raise OracleError(f"{v.name} read before assignment")
            return frame[id(v)]
        if isinstance(v, (ir.IntConstant, ir.LongConstant)):
            return v.value
        if isinstance(v, ir.FloatConstant):
            return bits_float(v.bits)
        if isinstance(v, ir.DoubleConstant):
            return bits_double(v.bits)
        if isinstance(v, ir.NullConstant):
            return None
        if isinstance(v, ir.StringConstant):
            return v.value
        if isinstance(v, ir.ClassConstant):
            return ClassObj(v.descriptor)
        if isinstance(v, ir.FieldAccess):
            if v.base is None:
                return machine.get_static(v.field)
            o = val(v.base)
            if o is None:
                throw(NPE)
            return o.fields.get(v.field.name, default_value(v.field.type))
        if isinstance(v, ir.ArrayAccess):
            a, i = _array_slot(val(v.base), val(v.index))
            return a.values[i]
        if isinstance(v, ir.BinaryOp):
            return arith(v.op, val(v.lhs), val(v.rhs), _KIND[v.type.tag])
        if isinstance(v, ir.UnaryOp):
            k = _KIND[v.type.tag]
            return negate(val(v.operand), k) if v.op == "neg" else invert(val(v.operand), k)
        if isinstance(v, ir.Cast):
            x = val(v.operand)
            if v.from_type is not None:
                dst = ir.to_descriptor(v.type)
                return convert(x, _KIND[v.from_type.tag], dst if dst in "BCS" else _KIND[v.type.tag])
            if x is not None and not env.is_instance(x, _desc(v.type)):
                throw(CLASS_CAST)
            return x
        if isinstance(v, ir.InstanceOf):
            return int(env.is_instance(val(v.operand), _desc(v.type)))
        if isinstance(v, ir.New):
            return Obj(v.descriptor)
        if isinstance(v, ir.NewArray):
            n = val(v.size)
            if n < 0:
                throw(NEGATIVE_SIZE)
            elem = _desc(v.element)
            return Arr(elem, [default_value(elem)] * n)
        if isinstance(v, ir.Lengthof):
            a = val(v.operand)
            if a is None:
                throw(NPE)
            return len(a.values)
        if isinstance(v, ir.Compare):
            return compare(v.kind, val(v.lhs), val(v.rhs))
        raise UnsupportedForOracle(f"value {v!r}")

    def store(target: ir.Value, x) -> None:
        if isinstance(target, ir.Local):
            frame[id(target)] = x
        elif isinstance(target, ir.ArrayAccess):
            a, i = _array_slot(val(target.base), val(target.index))
            a.values[i] = narrow(a.element, x)
        elif isinstance(target, ir.FieldAccess):
            if target.base is None:
                machine.put_static(target.field, x)
            else:
                o = val(target.base)
                if o is None:
                    throw(NPE)
                o.fields[target.field.name] = narrow(target.field.type, x)
        else:
            raise OracleError(f"cannot assign to {target!r}")

    pc = 0
    while True:
        machine.tick()
        if pc >= len(stmts):
            raise OracleError("execution ran off the end of the body")
        s = stmts[pc]
        nxt = pc + 1
        try:
            if isinstance(s, (ir.Nop, ir.Breakpoint)):
                pass
            elif isinstance(s, ir.Identity):
                src = s.source
                if isinstance(src, ir.ThisRef):
                    frame[id(s.target)] = args[0]
                elif isinstance(src, ir.ParameterRef):
                    frame[id(s.target)] = args[src.index + (0 if body.is_static else 1)]
                else:
                    frame[id(s.target)] = caught
            elif isinstance(s, ir.Assign):
                x = val(s.value)
                if isinstance(s.target, ir.Local):
                    frame[id(s.target)] = x
                else:
                    store(s.target, x)
            elif isinstance(s, ir.If):
                a, b = val(s.lhs), val(s.rhs)
                if s.op in ("==", "!="):
                    same = (a == b) if _numeric(a) and _numeric(b) else (a is b)
                    taken = same == (s.op == "==")
                else:
                    taken = {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[s.op]
                if taken:
                    nxt = index[id(s.target)]
            elif isinstance(s, ir.Goto):
                nxt = index[id(s.target)]
            elif isinstance(s, (ir.TableSwitch, ir.LookupSwitch)):
                key = val(s.key)
                nxt = index[id(s.default)]
                for k, t in s.cases():
                    if k == key:
                        nxt = index[id(t)]
                        break
            elif isinstance(s, ir.Invoke):
                out = machine.call(s.method, s.kind, [val(a) for a in s.args])
                if s.result is not None:
                    frame[id(s.result)] = out
            elif isinstance(s, ir.Return):
                return val(s.value)
            elif isinstance(s, ir.ReturnVoid):
                return None
            elif isinstance(s, ir.Throw):
                v = val(s.value)
                raise Thrown(v) if v is not None else Thrown(Obj(NPE))
            elif isinstance(s, (ir.MonitorEnter, ir.MonitorExit)):
                if val(s.value) is None:
                    throw(NPE)
            else:
                raise UnsupportedForOracle(f"statement {type(s).__name__}")
        except Thrown as t:
            for lo, hi, trap in traps:
                if lo <= pc <= hi and (trap.exception is None or env.is_instance(t.obj, trap.exception)):
                    caught = t.obj
                    nxt = index[id(trap.handler)]
                    break
            else:
                raise
        pc = nxt


def _numeric(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _array_slot(a, i):
    if a is None:
        throw(NPE)
    if not 0 <= i < len(a.values):
        throw(AIOOBE)
    return a, i
