"""Line-oriented text form of IR bodies, and a parser for it.

::

    method LCoordinate; LMain;.make() {
      local v0: LCoordinate;
      local v1: I
      L0: v1 = 1
      L1: v0 = null
      L2: if v0 == null goto L5
      ...
      catch Ljava/lang/Exception; from L3 to L4 with L6
    }

Float and double constants carry their bit pattern, e.g.
``float(1.0, 0x3f800000)``, so parsing restores them exactly.
"""

from __future__ import annotations

import json
import re
import struct

from dexlift.dex import MethodRef, parse_field_ref, split_params
from dexlift.ir import (
    ArrayAccess, Assign, BinaryOp, Body, Breakpoint, CaughtExceptionRef, Cast, ClassConstant,
    Compare, COMPARE_KINDS, DoubleConstant, FieldAccess, FloatConstant, Goto, Identity, If,
    InstanceOf, IntConstant, Invoke, IrError, Lengthof, Local, LongConstant, LookupSwitch,
    MonitorEnter, MonitorExit, New, NewArray, Nop, NullConstant, ParameterRef, Ret, Return,
    ReturnVoid, Statement, StringConstant, TableSwitch, ThisRef, Throw, Trap, UnaryOp, Value,
    parse_type, type_text,
)


class IrSyntaxError(IrError):
    pass


# -- emission ----------------------------------------------------------------


def _float_repr(bits: int, fmt: str) -> str:
    raw = bits.to_bytes(8 if fmt == "d" else 4, "little")
    return repr(struct.unpack("<" + fmt, raw)[0])


def value_text(v: Value) -> str:
    if isinstance(v, Local):
        return v.name
    if isinstance(v, IntConstant):
        return str(v.value)
    if isinstance(v, LongConstant):
        return f"{v.value}L"
    if isinstance(v, FloatConstant):
        return f"float({_float_repr(v.bits, 'f')}, 0x{v.bits:08x})"
    if isinstance(v, DoubleConstant):
        return f"double({_float_repr(v.bits, 'd')}, 0x{v.bits:016x})"
    if isinstance(v, NullConstant):
        return "null"
    if isinstance(v, StringConstant):
        return json.dumps(v.value)
    if isinstance(v, ClassConstant):
        return f"class {v.descriptor}"
    if isinstance(v, FieldAccess):
        if v.base is None:
            return f"<{v.field}>"
        return f"{value_text(v.base)}.<{v.field}>"
    if isinstance(v, ArrayAccess):
        return f"{value_text(v.base)}[{value_text(v.index)}]"
    if isinstance(v, BinaryOp):
        return f"{value_text(v.lhs)} {v.op} {value_text(v.rhs)} :{type_text(v.type)}"
    if isinstance(v, UnaryOp):
        return f"{v.op} {value_text(v.operand)} :{type_text(v.type)}"
    if isinstance(v, Cast):
        text = f"({type_text(v.type)}) {value_text(v.operand)}"
        if v.from_type is not None:
            text += f" :{type_text(v.from_type)}"
        return text
    if isinstance(v, InstanceOf):
        return f"{value_text(v.operand)} instanceof {type_text(v.type)}"
    if isinstance(v, New):
        return f"new {v.descriptor}"
    if isinstance(v, NewArray):
        return f"newarray ({type_text(v.element)})[{value_text(v.size)}]"
    if isinstance(v, Lengthof):
        return f"lengthof {value_text(v.operand)}"
    if isinstance(v, Compare):
        return f"{v.kind} {value_text(v.lhs)}, {value_text(v.rhs)}"
    if isinstance(v, ThisRef):
        return f"@this: {type_text(v.type)}"
    if isinstance(v, ParameterRef):
        return f"@parameter{v.index}: {type_text(v.type)}"
    if isinstance(v, CaughtExceptionRef):
        return "@caughtexception"
    raise TypeError(f"cannot render {v!r}")


def _label(s: Statement, labels: dict[int, int]) -> str:
    return f"L{labels[id(s)]}" if id(s) in labels else "L?"


def statement_text(s: Statement, labels: dict[int, int]) -> str:
    if isinstance(s, Nop):
        return "nop"
    if isinstance(s, Breakpoint):
        return "breakpoint"
    if isinstance(s, ReturnVoid):
        return "return"
    if isinstance(s, Return):
        return f"return {value_text(s.value)}"
    if isinstance(s, Throw):
        return f"throw {value_text(s.value)}"
    if isinstance(s, MonitorEnter):
        return f"entermonitor {value_text(s.value)}"
    if isinstance(s, MonitorExit):
        return f"exitmonitor {value_text(s.value)}"
    if isinstance(s, Ret):
        return f"ret {value_text(s.value)}"
    if isinstance(s, Identity):
        return f"{value_text(s.target)} := {value_text(s.source)}"
    if isinstance(s, Assign):
        return f"{value_text(s.target)} = {value_text(s.value)}"
    if isinstance(s, If):
        return f"if {value_text(s.lhs)} {s.op} {value_text(s.rhs)} goto {_label(s.target, labels)}"
    if isinstance(s, Goto):
        return f"goto {_label(s.target, labels)}"
    if isinstance(s, TableSwitch):
        cases = ", ".join(_label(t, labels) for t in s.targets)
        return (f"tableswitch({value_text(s.key)}) from {s.first_key} {{{cases}}} "
                f"default {_label(s.default, labels)}")
    if isinstance(s, LookupSwitch):
        cases = ", ".join(f"{k}: {_label(t, labels)}" for k, t in s.cases())
        return f"lookupswitch({value_text(s.key)}) {{{cases}}} default {_label(s.default, labels)}"
    if isinstance(s, Invoke):
        args = ", ".join(value_text(a) for a in s.args)
        call = f"{s.kind}invoke <{s.method}>({args})"
        return f"{s.result.name} = {call}" if s.result is not None else call
    raise TypeError(f"cannot render {s!r}")


def emit_text(body: Body) -> str:
    labels = {id(s): i for i, s in enumerate(body.statements)}
    m = body.method
    lines = [f"method {m.return_type} {m.owner}.{m.name}({''.join(m.params)}) {{"]
    for loc in body.locals:
        lines.append(f"  local {loc.name}: {type_text(loc.type)}")
    for i, s in enumerate(body.statements):
        lines.append(f"  L{i}: {statement_text(s, labels)}")
    for t in body.traps:
        exc = t.exception or "*"
        lines.append(f"  catch {exc} from {_label(t.begin, labels)} to {_label(t.end, labels)} "
                     f"with {_label(t.handler, labels)}")
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- parsing -----------------------------------------------------------------

_OPERAND = (
    r'null|float\([^)]*\)|double\([^)]*\)|"(?:[^"\\]|\\.)*"|class \S+'
    r"|-?\d+L?|[A-Za-z$_][\w$]*"
)
_MREF = r"(\[*L[^;]+;\.[^:]+:\([^)]*\)\S+?)"
_FREF = r"(L[^;]+;\.[^:<>]+:\S+?)"


class _Parser:
    def __init__(self, locals_: dict[str, Local]):
        self.locals = locals_

    def operand(self, text: str) -> Value:
        text = text.strip()
        if text == "null":
            return NullConstant()
        m = re.fullmatch(r"(float|double)\((.*), (0x[0-9a-f]+)\)", text)
        if m:
            bits = int(m.group(3), 16)
            return FloatConstant(bits) if m.group(1) == "float" else DoubleConstant(bits)
        if text.startswith('"'):
            return StringConstant(json.loads(text))
        if text.startswith("class "):
            return ClassConstant(text[6:])
        m = re.fullmatch(r"(-?\d+)(L?)", text)
        if m:
            n = int(m.group(1))
            return LongConstant(n) if m.group(2) else IntConstant(n)
        if text in self.locals:
            return self.locals[text]
        raise IrSyntaxError(f"unknown operand {text!r}")

    def location(self, text: str) -> Value | None:
        """Assignable places: locals, field and array accesses."""
        m = re.fullmatch(rf"({_OPERAND})\[({_OPERAND})\]", text)
        if m:
            return ArrayAccess(self.operand(m.group(1)), self.operand(m.group(2)))
        m = re.fullmatch(rf"(?:({_OPERAND})\.)?<{_FREF}>", text)
        if m:
            base = self.operand(m.group(1)) if m.group(1) else None
            return FieldAccess(parse_field_ref(m.group(2)), base)
        return None

    def value(self, text: str) -> Value:
        text = text.strip()
        m = re.fullmatch(r"new (\S+)", text)
        if m:
            return New(m.group(1))
        m = re.fullmatch(rf"newarray \((\S+)\)\[({_OPERAND})\]", text)
        if m:
            return NewArray(parse_type(m.group(1)), self.operand(m.group(2)))
        m = re.fullmatch(rf"lengthof ({_OPERAND})", text)
        if m:
            return Lengthof(self.operand(m.group(1)))
        m = re.fullmatch(rf"(neg|not) ({_OPERAND}) :(\S+)", text)
        if m:
            return UnaryOp(m.group(1), self.operand(m.group(2)), parse_type(m.group(3)))
        m = re.fullmatch(rf"\((\S+)\) ({_OPERAND})(?: :(\S+))?", text)
        if m:
            src = parse_type(m.group(3)) if m.group(3) else None
            return Cast(parse_type(m.group(1)), self.operand(m.group(2)), src)
        m = re.fullmatch(rf"({_OPERAND}) instanceof (\S+)", text)
        if m:
            return InstanceOf(parse_type(m.group(2)), self.operand(m.group(1)))
        m = re.fullmatch(rf"(\S+) ({_OPERAND}), ({_OPERAND})", text)
        if m and m.group(1) in COMPARE_KINDS:
            return Compare(m.group(1), self.operand(m.group(2)), self.operand(m.group(3)))
        m = re.fullmatch(rf"({_OPERAND}) (>>>|<<|>>|[-+*/%&|^]) ({_OPERAND}) :(\S+)", text)
        if m:
            return BinaryOp(m.group(2), self.operand(m.group(1)), self.operand(m.group(3)),
                            parse_type(m.group(4)))
        loc = self.location(text)
        if loc is not None:
            return loc
        return self.operand(text)

    def invoke(self, text: str, result: Local | None) -> Invoke | None:
        m = re.fullmatch(rf"(\w+)invoke <{_MREF}>\((.*)\)", text)
        if not m:
            return None
        args = [self.operand(a) for a in m.group(3).split(", ")] if m.group(3) else []
        return Invoke(m.group(1), MethodRef.parse(m.group(2)), args, result)


def _statement(p: _Parser, text: str) -> tuple[Statement, list]:
    """Parse one statement; returns it with the label numbers it still needs."""
    simple = {"nop": Nop, "breakpoint": Breakpoint, "return": ReturnVoid}
    if text in simple:
        return simple[text](), []
    for word, cls in (("return", Return), ("throw", Throw), ("entermonitor", MonitorEnter),
                      ("exitmonitor", MonitorExit), ("ret", Ret)):
        if text.startswith(word + " "):
            return cls(p.operand(text[len(word) + 1:])), []
    m = re.fullmatch(rf"if ({_OPERAND}) (==|!=|<=|>=|<|>) ({_OPERAND}) goto L(\d+)", text)
    if m:
        s = If(m.group(2), p.operand(m.group(1)), p.operand(m.group(3)), None)
        return s, [("target", int(m.group(4)))]
    m = re.fullmatch(r"goto L(\d+)", text)
    if m:
        return Goto(None), [("target", int(m.group(1)))]
    m = re.fullmatch(rf"tableswitch\(({_OPERAND})\) from (-?\d+) \{{(.*)\}} default L(\d+)", text)
    if m:
        labels = [int(x.strip()[1:]) for x in m.group(3).split(",")] if m.group(3) else []
        s = TableSwitch(p.operand(m.group(1)), int(m.group(2)), [None] * len(labels), None)
        return s, [("targets", labels), ("default", int(m.group(4)))]
    m = re.fullmatch(rf"lookupswitch\(({_OPERAND})\) \{{(.*)\}} default L(\d+)", text)
    if m:
        keys, labels = [], []
        for case in m.group(2).split(", ") if m.group(2) else []:
            k, lab = case.split(": ")
            keys.append(int(k))
            labels.append(int(lab[1:]))
        s = LookupSwitch(p.operand(m.group(1)), keys, [None] * len(labels), None)
        return s, [("targets", labels), ("default", int(m.group(3)))]
    inv = p.invoke(text, None)
    if inv is not None:
        return inv, []
    m = re.fullmatch(r"([\w$]+) := @(this|parameter(\d+)|caughtexception)(?:: (\S+))?", text)
    if m:
        target = p.operand(m.group(1))
        if m.group(2) == "this":
            src = ThisRef(parse_type(m.group(4)))
        elif m.group(2) == "caughtexception":
            src = CaughtExceptionRef()
        else:
            src = ParameterRef(int(m.group(3)), parse_type(m.group(4)))
        return Identity(target, src), []
    lhs, sep, rhs = text.partition(" = ")
    if sep:
        target = p.location(lhs) or p.operand(lhs)
        if isinstance(target, Local):
            inv = p.invoke(rhs, target)
            if inv is not None:
                return inv, []
        return Assign(target, p.value(rhs)), []
    raise IrSyntaxError(f"unrecognised statement {text!r}")


def parse_text(text: str) -> Body:
    """Inverse of :func:`emit_text` (the address map is not part of the text)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[-1].strip() != "}":
        raise IrSyntaxError("missing closing brace")
    m = re.fullmatch(r"method (\S+) (\[*L[^;]+;)\.([^(]+)\((.*)\) \{", lines[0])
    if m is None:
        raise IrSyntaxError(f"bad method header {lines[0]!r}")
    method = MethodRef(m.group(2), m.group(3), split_params(m.group(4)), m.group(1))
    locals_: dict[str, Local] = {}
    stmts: list[Statement] = []
    fixups: list[tuple[Statement, list]] = []
    trap_lines: list[tuple[str | None, int, int, int]] = []
    p = _Parser(locals_)
    for ln in lines[1:-1]:
        ln = ln.strip()
        lm = re.fullmatch(r"local ([\w$]+): (\S+)", ln)
        if lm:
            locals_[lm.group(1)] = Local(lm.group(1), parse_type(lm.group(2)))
            continue
        cm = re.fullmatch(r"catch (\S+) from L(\d+) to L(\d+) with L(\d+)", ln)
        if cm:
            exc = None if cm.group(1) == "*" else cm.group(1)
            trap_lines.append((exc, int(cm.group(2)), int(cm.group(3)), int(cm.group(4))))
            continue
        sm = re.fullmatch(r"L(\d+): (.*)", ln)
        if sm is None or int(sm.group(1)) != len(stmts):
            raise IrSyntaxError(f"bad statement line {ln!r}")
        s, needs = _statement(p, sm.group(2))
        stmts.append(s)
        fixups.append((s, needs))

    def at(k: int) -> Statement:
        if not 0 <= k < len(stmts):
            raise IrSyntaxError(f"label L{k} out of range")
        return stmts[k]

    for s, needs in fixups:
        for attr, lab in needs:
            setattr(s, attr, [at(k) for k in lab] if attr == "targets" else at(lab))
    body = Body(method, is_static=not any(
        isinstance(s, Identity) and isinstance(s.source, ThisRef) for s in stmts))
    body.locals = list(locals_.values())
    body.statements = stmts
    body.traps = [Trap(at(a), at(b), at(h), exc) for exc, a, b, h in trap_lines]
    return body

