"""Stack-less three-address IR: types, values, statements, bodies and CFGs.

Statements are mutable objects compared by identity; branch statements hold
direct references to their targets.  Values are immutable, except that a
:class:`Local` carries a mutable declared type which the typing passes fill in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

from dexlift.dex import MethodRef, FieldRef, is_descriptor
from dexlift.errors import DexliftError


class IrError(DexliftError):
    pass


class DanglingTarget(IrError):
    pass


# -- types -------------------------------------------------------------------


@dataclass(frozen=True)
class IrType:
    tag: str
    descriptor: str | None = None  # Ref only
    element: IrType | None = None  # Array only

    def __str__(self) -> str:
        return type_text(self)

    @property
    def is_ref_like(self) -> bool:
        return self.tag in ("Ref", "Array", "Null")

    @property
    def is_integral(self) -> bool:
        return self.tag in ("Boolean", "Byte", "Char", "Short", "Int")

    @property
    def is_wide(self) -> bool:
        return self.tag in ("Long", "Double")


UNKNOWN = IrType("Unknown")
BOOLEAN = IrType("Boolean")
BYTE = IrType("Byte")
CHAR = IrType("Char")
SHORT = IrType("Short")
INT = IrType("Int")
FLOAT = IrType("Float")
LONG = IrType("Long")
DOUBLE = IrType("Double")
NULL = IrType("Null")

_PRIM_BY_DESC = {
    "Z": BOOLEAN, "B": BYTE, "C": CHAR, "S": SHORT, "I": INT,
    "F": FLOAT, "J": LONG, "D": DOUBLE,
}
_DESC_BY_TAG = {t.tag: d for d, t in _PRIM_BY_DESC.items()}


def ref(descriptor: str) -> IrType:
    return IrType("Ref", descriptor=descriptor)


def array_of(element: IrType) -> IrType:
    return IrType("Array", element=element)


OBJECT = ref("Ljava/lang/Object;")
STRING = ref("Ljava/lang/String;")
CLASS = ref("Ljava/lang/Class;")
THROWABLE = ref("Ljava/lang/Throwable;")


def from_descriptor(desc: str) -> IrType:
    if desc in _PRIM_BY_DESC:
        return _PRIM_BY_DESC[desc]
    if desc.startswith("["):
        return array_of(from_descriptor(desc[1:]))
    if desc.startswith("L") and desc.endswith(";"):
        return ref(desc)
    raise ValueError(f"not a value type descriptor: {desc!r}")


def to_descriptor(t: IrType) -> str:
    if t.tag == "Ref":
        return t.descriptor
    if t.tag == "Array":
        return "[" + to_descriptor(t.element)
    if t.tag in _DESC_BY_TAG:
        return _DESC_BY_TAG[t.tag]
    raise ValueError(f"{t.tag} has no descriptor")


def type_text(t: IrType) -> str:
    if t.tag == "Unknown":
        return "unknown"
    if t.tag == "Null":
        return "null_type"
    return to_descriptor(t)


def parse_type(text: str) -> IrType:
    if text == "unknown":
        return UNKNOWN
    if text == "null_type":
        return NULL
    return from_descriptor(text)


def type_class(t: IrType) -> str | None:
    """Register class of a type: values of different classes never mix."""
    if t.is_integral:
        return "int"
    if t.is_ref_like:
        return "ref"
    return {"Float": "float", "Long": "long", "Double": "double"}.get(t.tag)


# -- values ------------------------------------------------------------------


class Value:
    __slots__ = ()

    def locals(self) -> Iterator[Local]:
        for f in getattr(self, "__dataclass_fields__", {}):
            v = getattr(self, f)
            if isinstance(v, Local):
                yield v
            elif isinstance(v, Value):
                yield from v.locals()
            elif isinstance(v, tuple):
                for x in v:
                    if isinstance(x, Local):
                        yield x
                    elif isinstance(x, Value):
                        yield from x.locals()

    def substitute(self, mapping: dict[int, Local]) -> Value:
        """Copy with locals replaced according to ``{id(old): new}``."""
        changes = {}
        for f in getattr(self, "__dataclass_fields__", {}):
            v = getattr(self, f)
            nv = _subst(v, mapping)
            if nv is not v:
                changes[f] = nv
        if not changes:
            return self
        kwargs = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kwargs.update(changes)
        return type(self)(**kwargs)


def _subst(v, mapping):
    if isinstance(v, Local):
        return mapping.get(id(v), v)
    if isinstance(v, Value):
        return v.substitute(mapping)
    if isinstance(v, tuple):
        items = tuple(_subst(x, mapping) for x in v)
        return v if all(a is b for a, b in zip(items, v)) else items
    return v


@dataclass(eq=False)
class Local(Value):
    name: str
    type: IrType = UNKNOWN
    register: int | None = None

    def locals(self):
        yield self

    def substitute(self, mapping):
        return mapping.get(id(self), self)

    def __repr__(self) -> str:
        return f"Local({self.name}: {type_text(self.type)})"


@dataclass(frozen=True)
class IntConstant(Value):
    value: int


@dataclass(frozen=True)
class LongConstant(Value):
    value: int


@dataclass(frozen=True)
class FloatConstant(Value):
    bits: int  # raw IEEE-754 single pattern, 0 <= bits < 2**32


@dataclass(frozen=True)
class DoubleConstant(Value):
    bits: int  # raw IEEE-754 double pattern, 0 <= bits < 2**64


@dataclass(frozen=True)
class NullConstant(Value):
    pass


@dataclass(frozen=True)
class StringConstant(Value):
    value: str


@dataclass(frozen=True)
class ClassConstant(Value):
    descriptor: str


@dataclass(frozen=True)
class FieldAccess(Value):
    field: FieldRef
    base: Value | None = None  # None for static fields

    @property
    def is_static(self) -> bool:
        return self.base is None


@dataclass(frozen=True)
class ArrayAccess(Value):
    base: Value
    index: Value


BINARY_OPS = ("+", "-", "*", "/", "%", "&", "|", "^", "<<", ">>", ">>>")
SHIFT_OPS = ("<<", ">>", ">>>")
UNARY_OPS = ("neg", "not")
COMPARE_KINDS = ("cmp-long", "cmpl-float", "cmpg-float", "cmpl-double", "cmpg-double")
RELATIONAL_OPS = ("==", "!=", "<", ">=", ">", "<=")


@dataclass(frozen=True)
class BinaryOp(Value):
    op: str
    lhs: Value
    rhs: Value
    type: IrType  # operand type, e.g. LONG for sub-long


@dataclass(frozen=True)
class UnaryOp(Value):
    op: str
    operand: Value
    type: IrType


@dataclass(frozen=True)
class Cast(Value):
    type: IrType
    operand: Value
    from_type: IrType | None = None  # set for primitive conversions


@dataclass(frozen=True)
class InstanceOf(Value):
    type: IrType
    operand: Value


@dataclass(frozen=True)
class New(Value):
    descriptor: str


@dataclass(frozen=True)
class NewArray(Value):
    element: IrType
    size: Value


@dataclass(frozen=True)
class Lengthof(Value):
    operand: Value


@dataclass(frozen=True)
class Compare(Value):
    kind: str
    lhs: Value
    rhs: Value

    @property
    def operand_type(self) -> IrType:
        return {"long": LONG, "float": FLOAT, "double": DOUBLE}[self.kind.split("-")[1]]


@dataclass(frozen=True)
class ThisRef(Value):
    type: IrType


@dataclass(frozen=True)
class ParameterRef(Value):
    index: int
    type: IrType


@dataclass(frozen=True)
class CaughtExceptionRef(Value):
    pass


CONSTANTS = (IntConstant, LongConstant, FloatConstant, DoubleConstant, NullConstant, StringConstant, ClassConstant)


def value_type(v: Value) -> IrType:
    """Static type of a value, using current local types."""
    if isinstance(v, Local):
        return v.type
    if isinstance(v, IntConstant):
        return INT
    if isinstance(v, LongConstant):
        return LONG
    if isinstance(v, FloatConstant):
        return FLOAT
    if isinstance(v, DoubleConstant):
        return DOUBLE
    if isinstance(v, NullConstant):
        return NULL
    if isinstance(v, StringConstant):
        return STRING
    if isinstance(v, ClassConstant):
        return CLASS
    if isinstance(v, FieldAccess):
        return from_descriptor(v.field.type)
    if isinstance(v, ArrayAccess):
        bt = value_type(v.base)
        return bt.element if bt.tag == "Array" else UNKNOWN
    if isinstance(v, (BinaryOp, UnaryOp)):
        return v.type
    if isinstance(v, (Cast, ThisRef, ParameterRef)):
        return v.type
    if isinstance(v, InstanceOf):
        return BOOLEAN
    if isinstance(v, (Lengthof, Compare)):
        return INT
    if isinstance(v, New):
        return ref(v.descriptor)
    if isinstance(v, NewArray):
        return array_of(v.element)
    if isinstance(v, CaughtExceptionRef):
        return THROWABLE
    raise TypeError(f"unknown value {v!r}")


# -- statements --------------------------------------------------------------


class Statement:
    """Base of the IR statement kinds.  Compared by identity."""

    address: int | None = None
    falls_through = True

    def branch_targets(self) -> list[Statement]:
        return []

    def retarget(self, old: Statement, new: Statement) -> None:
        pass

    def values(self) -> list[Value]:
        return []

    def used_values(self) -> list[Value]:
        """Values read by the statement (an assignment target's base/index count)."""
        return self.values()

    def defined_local(self) -> Local | None:
        return None

    def uses(self) -> list[Local]:
        out: list[Local] = []
        for v in self.used_values():
            out.extend(v.locals())
        return out

    def substitute(self, use_map: dict[int, Local], def_map: dict[int, Local]) -> None:
        raise NotImplementedError

    def __repr__(self) -> str:
        from dexlift.irtext import statement_text

        return f"<{type(self).__name__} {statement_text(self, {})}>"


class Nop(Statement):
    def substitute(self, use_map, def_map):
        pass


class Breakpoint(Statement):
    def substitute(self, use_map, def_map):
        pass


class ReturnVoid(Statement):
    falls_through = False

    def substitute(self, use_map, def_map):
        pass


class _OneValue(Statement):
    def __init__(self, value: Value):
        self.value = value

    def values(self):
        return [self.value]

    def substitute(self, use_map, def_map):
        self.value = self.value.substitute(use_map)


class Return(_OneValue):
    falls_through = False


class Throw(_OneValue):
    falls_through = False


class MonitorEnter(_OneValue):
    pass


class MonitorExit(_OneValue):
    pass


class Ret(_OneValue):
    """Subroutine return; part of the statement inventory, never produced from Dalvik."""

    falls_through = False


class Identity(Statement):
    def __init__(self, target: Local, source: Value):
        self.target = target
        self.source = source

    def values(self):
        return [self.target, self.source]

    def used_values(self):
        return []

    def defined_local(self):
        return self.target

    def substitute(self, use_map, def_map):
        self.target = def_map.get(id(self.target), self.target)


class Assign(Statement):
    def __init__(self, target: Value, value: Value):
        self.target = target
        self.value = value
        # Lifter annotations.  const_width (32 or 64) marks a constant load
        # whose type the instruction leaves open; fill_width (bytes) marks a
        # store unrolled from an array payload; raw_bits keeps the literal.
        self.const_width: int | None = None
        self.fill_width: int | None = None
        self.raw_bits: int | None = None
        # Register class named by the opcode: "single", "wide" or "ref" for
        # moves, plus "Z"/"B"/"C"/"S" for typed array accesses.
        self.move_kind: str | None = None
        self.hint: str | None = None

    def values(self):
        return [self.target, self.value]

    def used_values(self):
        if isinstance(self.target, Local):
            return [self.value]
        return [self.target, self.value]

    def defined_local(self):
        return self.target if isinstance(self.target, Local) else None

    def substitute(self, use_map, def_map):
        if isinstance(self.target, Local):
            self.target = def_map.get(id(self.target), self.target)
        else:
            self.target = self.target.substitute(use_map)
        self.value = self.value.substitute(use_map)


class If(Statement):
    def __init__(self, op: str, lhs: Value, rhs: Value, target: Statement):
        if op not in RELATIONAL_OPS:
            raise IrError(f"bad relational operator {op!r}")
        self.op = op
        self.lhs = lhs
        self.rhs = rhs
        self.target = target

    def branch_targets(self):
        return [self.target]

    def retarget(self, old, new):
        if self.target is old:
            self.target = new

    def values(self):
        return [self.lhs, self.rhs]

    def substitute(self, use_map, def_map):
        self.lhs = self.lhs.substitute(use_map)
        self.rhs = self.rhs.substitute(use_map)


class Goto(Statement):
    falls_through = False

    def __init__(self, target: Statement):
        self.target = target

    def branch_targets(self):
        return [self.target]

    def retarget(self, old, new):
        if self.target is old:
            self.target = new

    def substitute(self, use_map, def_map):
        pass


class _Switch(Statement):
    falls_through = False
    key: Value
    targets: list[Statement]
    default: Statement

    def branch_targets(self):
        return [*self.targets, self.default]

    def retarget(self, old, new):
        self.targets = [new if t is old else t for t in self.targets]
        if self.default is old:
            self.default = new

    def values(self):
        return [self.key]

    def substitute(self, use_map, def_map):
        self.key = self.key.substitute(use_map)

    def cases(self) -> list[tuple[int, Statement]]:
        raise NotImplementedError


class TableSwitch(_Switch):
    def __init__(self, key: Value, first_key: int, targets: list[Statement], default: Statement):
        self.key = key
        self.first_key = first_key
        self.targets = list(targets)
        self.default = default

    def cases(self):
        return [(self.first_key + i, t) for i, t in enumerate(self.targets)]


class LookupSwitch(_Switch):
    def __init__(self, key: Value, keys: list[int], targets: list[Statement], default: Statement):
        self.key = key
        self.keys = list(keys)
        self.targets = list(targets)
        self.default = default

    def cases(self):
        return list(zip(self.keys, self.targets))


INVOKE_KINDS = ("virtual", "super", "direct", "static", "interface")


class Invoke(Statement):
    def __init__(self, kind: str, method: MethodRef, args: list[Value], result: Local | None = None):
        if kind not in INVOKE_KINDS:
            raise IrError(f"bad invoke kind {kind!r}")
        self.kind = kind
        self.method = method
        self.args = list(args)
        self.result = result

    @property
    def receiver(self) -> Value | None:
        return None if self.kind == "static" else self.args[0]

    def values(self):
        return list(self.args) + ([self.result] if self.result is not None else [])

    def used_values(self):
        return list(self.args)

    def defined_local(self):
        return self.result

    def substitute(self, use_map, def_map):
        self.args = [a.substitute(use_map) for a in self.args]
        if self.result is not None:
            self.result = def_map.get(id(self.result), self.result)


STATEMENT_KINDS = (
    Nop, Identity, Assign, If, Goto, TableSwitch, LookupSwitch, Invoke,
    Return, ReturnVoid, Throw, MonitorEnter, MonitorExit, Breakpoint, Ret,
)


# -- bodies ------------------------------------------------------------------


@dataclass(eq=False)
class Trap:
    begin: Statement
    end: Statement  # inclusive
    handler: Statement
    exception: str | None  # None catches everything


@dataclass(eq=False)
class Body:
    method: MethodRef
    is_static: bool
    locals: list[Local] = field(default_factory=list)
    statements: list[Statement] = field(default_factory=list)
    traps: list[Trap] = field(default_factory=list)
    addr_map: dict[int, Statement] = field(default_factory=dict)

    def index_map(self) -> dict[int, int]:
        return {id(s): i for i, s in enumerate(self.statements)}

    def all_locals(self) -> list[Local]:
        """Locals occurring in statements, in first-occurrence order."""
        seen: dict[int, Local] = {}
        for s in self.statements:
            for v in s.values():
                for loc in v.locals():
                    seen.setdefault(id(loc), loc)
        return list(seen.values())

    def trapped(self, index_map: dict[int, int] | None = None) -> list[tuple[int, int, Trap]]:
        """Traps as inclusive statement index ranges."""
        idx = index_map or self.index_map()
        return [(idx[id(t.begin)], idx[id(t.end)], t) for t in self.traps]


def successors(body: Body, s: Statement, index_map: dict[int, int] | None = None) -> list[Statement]:
    """Normal (non-exceptional) successors of ``s`` in ``body``."""
    idx = index_map if index_map is not None else body.index_map()
    out: list[Statement] = []
    if s.falls_through:
        i = idx[id(s)]
        if i + 1 < len(body.statements):
            out.append(body.statements[i + 1])
    for t in s.branch_targets():
        if not any(t is o for o in out):
            out.append(t)
    return out


@dataclass
class Cfg:
    nodes: list[Statement]
    edges: list[tuple[Statement, Statement, str]]  # (src, dst, kind)

    def succ(self, s: Statement) -> list[Statement]:
        return self._succ.get(id(s), [])

    def pred(self, s: Statement) -> list[Statement]:
        return self._pred.get(id(s), [])

    def __post_init__(self):
        self._succ: dict[int, list[Statement]] = {}
        self._pred: dict[int, list[Statement]] = {}
        for a, b, _ in self.edges:
            sl = self._succ.setdefault(id(a), [])
            if not any(x is b for x in sl):
                sl.append(b)
            pl = self._pred.setdefault(id(b), [])
            if not any(x is a for x in pl):
                pl.append(a)


def build_cfg(body: Body, with_exceptional_edges: bool = False) -> Cfg:
    idx = body.index_map()
    edges: list[tuple[Statement, Statement, str]] = []
    for i, s in enumerate(body.statements):
        for t in s.branch_targets():
            if id(t) not in idx:
                raise DanglingTarget(f"statement {i} branches outside the body")
        if s.falls_through and i + 1 < len(body.statements):
            edges.append((s, body.statements[i + 1], "fallthrough"))
        if isinstance(s, (If, Goto)):
            edges.append((s, s.target, "branch"))
        elif isinstance(s, _Switch):
            for _key, t in s.cases():
                edges.append((s, t, "case"))
            edges.append((s, s.default, "default"))
    if with_exceptional_edges:
        for lo, hi, trap in body.trapped(idx):
            if id(trap.handler) not in idx:
                raise DanglingTarget("trap handler outside the body")
            for s in body.statements[lo:hi + 1]:
                edges.append((s, trap.handler, "exceptional"))
    return Cfg(list(body.statements), edges)


# -- validation --------------------------------------------------------------


def _is_zero_int(v: Value) -> bool:
    return isinstance(v, IntConstant) and v.value == 0


def validate(body: Body, *, typed: bool = False, optimized: bool = False) -> list[str]:
    """Check structural (and optionally typing) invariants; returns violations."""
    problems: list[str] = []
    idx = body.index_map()
    stmts = body.statements

    for i, s in enumerate(stmts):
        for t in s.branch_targets():
            if id(t) not in idx:
                problems.append(f"L{i}: branch target outside the body")
        if optimized and isinstance(s, Nop):
            problems.append(f"L{i}: nop after optimization")
    if stmts and stmts[-1].falls_through:
        problems.append(f"L{len(stmts) - 1}: control falls off the end of the body")

    for t in body.traps:
        ends = [id(x) in idx for x in (t.begin, t.end, t.handler)]
        if not all(ends):
            problems.append("trap references a statement outside the body")
        elif idx[id(t.begin)] > idx[id(t.end)]:
            problems.append(f"trap range L{idx[id(t.begin)]}..L{idx[id(t.end)]} is empty")
        if t.exception is not None and not is_descriptor(t.exception):
            problems.append(f"trap catches malformed type {t.exception!r}")

    # this/parameter identities form a prefix, possibly after the entry nop.
    seen_code = False
    for i, s in enumerate(stmts):
        is_param = isinstance(s, Identity) and isinstance(s.source, (ThisRef, ParameterRef))
        if is_param and seen_code:
            problems.append(f"L{i}: parameter identity after ordinary code")
        if not is_param and not isinstance(s, Nop):
            seen_code = True

    declared = {id(x) for x in body.locals}
    names: dict[str, int] = {}
    for loc in body.locals:
        names[loc.name] = names.get(loc.name, 0) + 1
    for name, n in names.items():
        if n > 1:
            problems.append(f"local name {name} declared {n} times")
    for loc in body.all_locals():
        if id(loc) not in declared:
            problems.append(f"local {loc.name} used but not declared")

    if typed:
        problems += _type_problems(body)
    return problems


def _type_problems(body: Body) -> list[str]:
    out = []
    for loc in body.locals:
        if loc.type == UNKNOWN:
            out.append(f"local {loc.name} has unknown type")
    for i, s in enumerate(body.statements):
        if isinstance(s, Assign):
            tt = value_type(s.target)
            vt = value_type(s.value)
            if tt.is_ref_like and _is_zero_int(s.value):
                out.append(f"L{i}: integer zero assigned to reference {type_text(tt)}")
            elif UNKNOWN not in (tt, vt) and type_class(tt) != type_class(vt):
                out.append(f"L{i}: {type_text(vt)} assigned to {type_text(tt)}")
        elif isinstance(s, If):
            lt, rt = value_type(s.lhs), value_type(s.rhs)
            if (lt.is_ref_like and _is_zero_int(s.rhs)) or (rt.is_ref_like and _is_zero_int(s.lhs)):
                out.append(f"L{i}: reference compared with integer zero")
            elif UNKNOWN not in (lt, rt) and type_class(lt) != type_class(rt):
                out.append(f"L{i}: comparison between {type_text(lt)} and {type_text(rt)}")
        elif isinstance(s, Invoke):
            params = list(s.method.params)
            if s.kind != "static":
                params.insert(0, s.method.owner)
            for a, p in zip(s.args, params):
                pt = from_descriptor(p)
                if pt.is_ref_like and _is_zero_int(a):
                    out.append(f"L{i}: integer zero passed as {p}")
                elif value_type(a) != UNKNOWN and type_class(value_type(a)) != type_class(pt):
                    out.append(f"L{i}: {type_text(value_type(a))} passed as {p}")
        elif isinstance(s, Return):
            rt = from_descriptor(body.method.return_type)
            vt = value_type(s.value)
            if rt.is_ref_like and _is_zero_int(s.value):
                out.append(f"L{i}: integer zero returned as {body.method.return_type}")
            elif vt != UNKNOWN and type_class(vt) != type_class(rt):
                out.append(f"L{i}: {type_text(vt)} returned as {body.method.return_type}")
    return out
