"""Dalvik instructions to untyped IR.

Lifting runs in three steps:

1. Every instruction is mapped to statements following the rule table in
   ``data/mapping.tsv``.  Each register occurrence becomes a fresh
   placeholder local.
2. Jumps are resolved through the address map.  A forward jump first
   targets the entry ``nop`` and is patched once the whole method is lifted.
3. Reaching definitions over the statement graph (exception edges
   included) group the placeholders into webs: definitions that reach a
   common use share a local.  Each web becomes one local named after its
   register (``v3``, then ``v3_2``, ...).
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from dexlift import ir
from dexlift.dex import CodeItem, DexFile, MethodDef, MethodRef, resolve, is_wide
from dexlift.errors import DexliftError
from dexlift.isa import (
    FillArrayPayload, Instruction, NORMAL, OPCODES, PackedSwitchPayload, SparseSwitchPayload,
    decode_stream,
)
from dexlift.ir import (
    ArrayAccess, Assign, BinaryOp, Body, Cast, ClassConstant, Compare, FieldAccess, Goto,
    Identity, If, InstanceOf, IntConstant, Invoke, Lengthof, Local, LongConstant, LookupSwitch,
    MonitorEnter, MonitorExit, New, NewArray, Nop, ParameterRef, Return, ReturnVoid, Statement,
    StringConstant, TableSwitch, ThisRef, Throw, Trap, UnaryOp, from_descriptor,
)


class LiftError(DexliftError):
    def __init__(self, message: str, method: MethodRef | None = None, address: int | None = None):
        self.method = method
        self.address = address
        where = []
        if method is not None:
            where.append(str(method))
        if address is not None:
            where.append(f"@{address:04x}")
        super().__init__(f"{' '.join(where)}: {message}" if where else message)


class BadRegister(LiftError):
    pass


class DanglingTarget(LiftError, ir.DanglingTarget):
    pass


class OrphanMoveResult(LiftError):
    pass


# -- mapping table -----------------------------------------------------------


@dataclass(frozen=True)
class Rule:
    opcode: int
    mnemonic: str
    rule: str
    type: str | None
    arg: str | None


def load_mapping() -> dict[int, Rule]:
    text = resources.files("dexlift").joinpath("data/mapping.tsv").read_text("utf-8")
    table: dict[int, Rule] = {}
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        code, mnemonic, rule, ty, arg = line.split("\t")
        table[int(code, 16)] = Rule(
            int(code, 16), mnemonic, rule, ty or None, arg or None
        )
    return table


MAPPING = load_mapping()


# -- lifting context ---------------------------------------------------------


@dataclass
class PendingJump:
    statement: Statement
    address: int
    slot: int | None = None  # None: .target/.default field, i: targets[i]
    default: bool = False


@dataclass(eq=False)
class _Occurrence:
    local: Local
    register: int
    wide: bool
    statement: Statement | None = None


class MethodContext:
    """Per-method lifting state: register occurrences, temporaries, the method itself."""

    def __init__(self, dex: DexFile | None, method: MethodRef, registers_size: int):
        self.dex = dex
        self.method = method
        self.registers_size = registers_size
        self.defs: list[_Occurrence] = []
        self.uses: list[_Occurrence] = []
        self.temps: list[Local] = []
        self.address: int | None = None
        self._open: list[_Occurrence] = []

    def _check(self, reg: int, wide: bool) -> None:
        if reg + (2 if wide else 1) > self.registers_size:
            raise BadRegister(
                f"register v{reg}{' (wide)' if wide else ''} outside frame of {self.registers_size}",
                self.method, self.address,
            )

    def use(self, reg: int, wide: bool = False) -> Local:
        self._check(reg, wide)
        occ = _Occurrence(Local(f"r{reg}", register=reg), reg, wide)
        self.uses.append(occ)
        self._open.append(occ)
        return occ.local

    def define(self, reg: int, wide: bool = False) -> Local:
        self._check(reg, wide)
        occ = _Occurrence(Local(f"r{reg}", register=reg), reg, wide)
        self.defs.append(occ)
        self._open.append(occ)
        return occ.local

    def temp(self) -> Local:
        loc = Local(f"$t{len(self.temps)}")
        self.temps.append(loc)
        return loc

    def attach(self, statements: list[Statement]) -> None:
        """Record which statement each new occurrence belongs to."""
        owner: dict[int, Statement] = {}
        for s in statements:
            for v in s.values():
                for loc in v.locals():
                    owner.setdefault(id(loc), s)
        for occ in self._open:
            occ.statement = owner[id(occ.local)]
        self._open.clear()

    def pool(self, ins: Instruction):
        kind, idx = ins.pool_index
        if self.dex is None:
            raise LiftError("instruction references a pool but no dex file is given", self.method, ins.address)
        return resolve(self.dex, kind, idx)


# -- per-rule mapping --------------------------------------------------------

class _Mapper:
    def __init__(self, ctx: MethodContext, follow: Instruction | None):
        self.ctx = ctx
        self.follow = follow  # next instruction, nops skipped

    def map(self, ins: Instruction, rule: Rule) -> list[Statement]:
        handler = getattr(self, "rule_" + rule.rule, None)
        if handler is None:
            raise LiftError(f"no lifting rule {rule.rule!r}", self.ctx.method, ins.address)
        return handler(ins, rule)

    def _result(self) -> tuple[str, int] | None:
        f = self.follow
        if f is not None and f.mnemonic.startswith("move-result"):
            return f.mnemonic, f.registers[0]
        return None

    # moves and constants
    def rule_nop(self, ins, rule):
        return []

    def rule_move(self, ins, rule):
        w = rule.type == "wide"
        src = self.ctx.use(ins.registers[1], w)
        s = Assign(self.ctx.define(ins.registers[0], w), src)
        s.move_kind = rule.type
        return [s]

    def rule_move_result(self, ins, rule):
        raise OrphanMoveResult(f"{ins.mnemonic} without a preceding invoke", self.ctx.method, ins.address)

    def rule_move_exception(self, ins, rule):
        return [Identity(self.ctx.define(ins.registers[0]), ir.CaughtExceptionRef())]

    def rule_return_void(self, ins, rule):
        return [ReturnVoid()]

    def rule_return(self, ins, rule):
        return [Return(self.ctx.use(ins.registers[0], rule.type == "wide"))]

    def rule_const(self, ins, rule):
        wide = rule.type == "J"
        value = LongConstant(ins.literal) if wide else IntConstant(ins.literal)
        s = Assign(self.ctx.define(ins.registers[0], wide), value)
        s.const_width = 64 if wide else 32
        s.raw_bits = ins.literal & ((1 << s.const_width) - 1)
        return [s]

    def rule_const_string(self, ins, rule):
        return [Assign(self.ctx.define(ins.registers[0]), StringConstant(self.ctx.pool(ins)))]

    def rule_const_class(self, ins, rule):
        return [Assign(self.ctx.define(ins.registers[0]), ClassConstant(self.ctx.pool(ins)))]

    # objects and arrays
    def rule_monitor_enter(self, ins, rule):
        return [MonitorEnter(self.ctx.use(ins.registers[0]))]

    def rule_monitor_exit(self, ins, rule):
        return [MonitorExit(self.ctx.use(ins.registers[0]))]

    def rule_check_cast(self, ins, rule):
        src = self.ctx.use(ins.registers[0])
        t = from_descriptor(self.ctx.pool(ins))
        return [Assign(self.ctx.define(ins.registers[0]), Cast(t, src))]

    def rule_instance_of(self, ins, rule):
        src = self.ctx.use(ins.registers[1])
        t = from_descriptor(self.ctx.pool(ins))
        return [Assign(self.ctx.define(ins.registers[0]), InstanceOf(t, src))]

    def rule_array_length(self, ins, rule):
        src = self.ctx.use(ins.registers[1])
        return [Assign(self.ctx.define(ins.registers[0]), Lengthof(src))]

    def rule_new_instance(self, ins, rule):
        return [Assign(self.ctx.define(ins.registers[0]), New(self.ctx.pool(ins)))]

    def rule_new_array(self, ins, rule):
        size = self.ctx.use(ins.registers[1])
        t = from_descriptor(self.ctx.pool(ins))
        return [Assign(self.ctx.define(ins.registers[0]), NewArray(t.element, size))]

    def rule_filled_new_array(self, ins, rule):
        t = from_descriptor(self.ctx.pool(ins))
        elem_wide = t.element.is_wide
        if elem_wide:
            raise LiftError("filled-new-array of wide elements", self.ctx.method, ins.address)
        tmp = self.ctx.temp()
        tmp.type = t
        out: list[Statement] = [Assign(tmp, NewArray(t.element, IntConstant(len(ins.registers))))]
        for i, reg in enumerate(ins.registers):
            out.append(Assign(ArrayAccess(tmp, IntConstant(i)), self.ctx.use(reg)))
        res = self._result()
        if res is not None:
            out.append(Assign(self.ctx.define(res[1]), tmp))
        return out

    def rule_fill_array_data(self, ins, rule):
        p: FillArrayPayload = ins.payload
        base = self.ctx.use(ins.registers[0])
        out = []
        for i, raw in enumerate(p.elements()):
            bits = 8 * p.element_width
            signed = raw - (1 << bits) if raw >> (bits - 1) else raw
            value = LongConstant(signed) if p.element_width == 8 else IntConstant(signed)
            s = Assign(ArrayAccess(base, IntConstant(i)), value)
            s.fill_width = p.element_width
            s.raw_bits = raw
            out.append(s)
        return out

    def rule_throw(self, ins, rule):
        return [Throw(self.ctx.use(ins.registers[0]))]

    # control flow
    def rule_goto(self, ins, rule):
        return [Goto(_PLACEHOLDER)]

    def rule_packed_switch(self, ins, rule):
        p: PackedSwitchPayload = ins.payload
        key = self.ctx.use(ins.registers[0])
        return [TableSwitch(key, p.first_key, [_PLACEHOLDER] * len(p.targets), _PLACEHOLDER)]

    def rule_sparse_switch(self, ins, rule):
        p: SparseSwitchPayload = ins.payload
        key = self.ctx.use(ins.registers[0])
        return [LookupSwitch(key, list(p.keys), [_PLACEHOLDER] * len(p.targets), _PLACEHOLDER)]

    def rule_compare(self, ins, rule):
        w = rule.type in ("J", "D")
        a = self.ctx.use(ins.registers[1], w)
        b = self.ctx.use(ins.registers[2], w)
        return [Assign(self.ctx.define(ins.registers[0]), Compare(rule.arg, a, b))]

    def rule_if(self, ins, rule):
        a = self.ctx.use(ins.registers[0])
        b = self.ctx.use(ins.registers[1])
        return [If(rule.arg, a, b, _PLACEHOLDER)]

    def rule_ifz(self, ins, rule):
        return [If(rule.arg, self.ctx.use(ins.registers[0]), IntConstant(0), _PLACEHOLDER)]

    # field and array access
    def rule_aget(self, ins, rule):
        arr = self.ctx.use(ins.registers[1])
        idx = self.ctx.use(ins.registers[2])
        s = Assign(self.ctx.define(ins.registers[0], rule.type == "wide"), ArrayAccess(arr, idx))
        s.hint = rule.type
        return [s]

    def rule_aput(self, ins, rule):
        val = self.ctx.use(ins.registers[0], rule.type == "wide")
        arr = self.ctx.use(ins.registers[1])
        idx = self.ctx.use(ins.registers[2])
        s = Assign(ArrayAccess(arr, idx), val)
        s.hint = rule.type
        return [s]

    def rule_iget(self, ins, rule):
        f = self.ctx.pool(ins)
        base = self.ctx.use(ins.registers[1])
        return [Assign(self.ctx.define(ins.registers[0], is_wide(f.type)), FieldAccess(f, base))]

    def rule_iput(self, ins, rule):
        f = self.ctx.pool(ins)
        val = self.ctx.use(ins.registers[0], is_wide(f.type))
        base = self.ctx.use(ins.registers[1])
        return [Assign(FieldAccess(f, base), val)]

    def rule_sget(self, ins, rule):
        f = self.ctx.pool(ins)
        return [Assign(self.ctx.define(ins.registers[0], is_wide(f.type)), FieldAccess(f))]

    def rule_sput(self, ins, rule):
        f = self.ctx.pool(ins)
        return [Assign(FieldAccess(f), self.ctx.use(ins.registers[0], is_wide(f.type)))]

    # invocations
    def rule_invoke(self, ins, rule):
        m: MethodRef = self.ctx.pool(ins)
        kinds = ["L"] if rule.arg != "static" else []
        kinds += list(m.params)
        regs = list(ins.registers)
        args = []
        for desc in kinds:
            if not regs:
                break
            wide = is_wide(desc)
            args.append(self.ctx.use(regs[0], wide))
            regs = regs[2:] if wide else regs[1:]
        if regs or len(args) != len(kinds):
            raise LiftError(f"register list does not match {m}", self.ctx.method, ins.address)
        result = None
        res = self._result()
        if res is not None and m.return_type != "V":
            result = self.ctx.define(res[1], is_wide(m.return_type))
        elif res is not None:
            raise OrphanMoveResult(f"{res[0]} after void call {m}", self.ctx.method, self.follow.address)
        return [Invoke(rule.arg, m, args, result)]

    # arithmetic
    def rule_unop(self, ins, rule):
        t = from_descriptor(rule.type)
        src = self.ctx.use(ins.registers[1], t.is_wide)
        return [Assign(self.ctx.define(ins.registers[0], t.is_wide), UnaryOp(rule.arg, src, t))]

    def rule_convert(self, ins, rule):
        dst_t, src_t = from_descriptor(rule.type), from_descriptor(rule.arg)
        src = self.ctx.use(ins.registers[1], src_t.is_wide)
        return [Assign(self.ctx.define(ins.registers[0], dst_t.is_wide), Cast(dst_t, src, src_t))]

    def _binop(self, op: str, t: ir.IrType, a: int, b: int, dst: int) -> Assign:
        lhs = self.ctx.use(a, t.is_wide)
        rhs = self.ctx.use(b, t.is_wide and op not in ir.SHIFT_OPS)
        return Assign(self.ctx.define(dst, t.is_wide), BinaryOp(op, lhs, rhs, t))

    def rule_binop(self, ins, rule):
        a, b, c = ins.registers
        return [self._binop(rule.arg, from_descriptor(rule.type), b, c, a)]

    def rule_binop_2addr(self, ins, rule):
        a, b = ins.registers
        return [self._binop(rule.arg, from_descriptor(rule.type), a, b, a)]

    def rule_binop_lit(self, ins, rule):
        a, b = ins.registers
        src = self.ctx.use(b)
        lit = IntConstant(ins.literal)
        if rule.arg == "rsub":
            value = BinaryOp("-", lit, src, ir.INT)
        else:
            value = BinaryOp(rule.arg, src, lit, ir.INT)
        return [Assign(self.ctx.define(a), value)]


# Jump statements are built pointing here, then rewired to the entry nop
# or to their real target.
_PLACEHOLDER = Nop()


def map_instruction(ins: Instruction, ctx: MethodContext, follow: Instruction | None = None) -> list[Statement]:
    """Statements for one instruction; ``follow`` is the next non-nop instruction."""
    if ins.opcode.kind != NORMAL:
        raise LiftError(f"cannot map {ins.mnemonic}", ctx.method, ins.address)
    ctx.address = ins.address
    out = _Mapper(ctx, follow).map(ins, MAPPING[ins.opcode.value])
    for s in out:
        s.address = ins.address
    ctx.attach(out)
    return out


# -- jumps -------------------------------------------------------------------


def _jump_slots(ins: Instruction, s: Statement) -> list[tuple[int, int | None, bool]]:
    """(absolute target address, slot, is-default) for every jump of ``s``."""
    if isinstance(s, (If, Goto)):
        return [(ins.target, None, False)]
    if isinstance(s, (TableSwitch, LookupSwitch)):
        out = [(ins.address + rel, i, False) for i, rel in enumerate(ins.payload.targets)]
        out.append((ins.address + ins.width, None, True))
        return out
    return []


def _set_target(p: PendingJump, target: Statement) -> None:
    s = p.statement
    if p.slot is not None:
        s.targets[p.slot] = target
    elif p.default:
        s.default = target
    else:
        s.target = target


def resolve_branches(body: Body, pending: list[PendingJump]) -> None:
    """Point every pending jump at the statement lifted at its address."""
    for p in pending:
        target = body.addr_map.get(p.address)
        if target is None:
            raise DanglingTarget(f"jump to 0x{p.address:04x}, which starts no instruction",
                                 body.method, p.statement.address)
        _set_target(p, target)
    pending.clear()


# -- lifting -----------------------------------------------------------------


def _param_registers(method: MethodRef, is_static: bool, code: CodeItem) -> list[tuple[int, str, bool]]:
    reg = code.registers_size - code.ins_size
    out = []
    descs = ([method.owner] if not is_static else []) + list(method.params)
    for i, d in enumerate(descs):
        out.append((reg, d, not is_static and i == 0))
        reg += 2 if is_wide(d) else 1
    if reg != code.registers_size:
        raise BadRegister(f"ins_size {code.ins_size} does not match the signature", method)
    return out


def lift_method(dex: DexFile | None, m: MethodDef, code: CodeItem | None = None) -> Body:
    """Lift one method to an untyped body (parameters typed from the signature)."""
    code = code if code is not None else m.code
    if code is None:
        raise LiftError("method has no code", m.method)
    return lift_code(dex, m.method, m.is_static, code)


def lift_code(dex: DexFile | None, method: MethodRef, is_static: bool, code: CodeItem) -> Body:
    instructions = [i for i in decode_stream(code.insns) if not i.is_payload]
    ctx = MethodContext(dex, method, code.registers_size)
    body = Body(method, is_static)
    entry = Nop()
    body.statements.append(entry)

    n_param = 0
    for reg, desc, is_this in _param_registers(method, is_static, code):
        t = from_descriptor(desc)
        if is_this:
            src = ThisRef(t)
        else:
            src = ParameterRef(n_param, t)
            n_param += 1
        s = Identity(ctx.define(reg, t.is_wide), src)
        ctx.attach([s])
        body.statements.append(s)

    pending: list[PendingJump] = []
    waiting_nops: list[int] = []
    consumed: dict[int, Statement] = {}  # move-result address -> statement
    groups: list[tuple[Instruction, list[Statement]]] = []
    follows: list[Instruction | None] = []
    nxt = None
    for ins in reversed(instructions):
        follows.append(nxt)
        if ins.mnemonic != "nop":
            nxt = ins
    follows.reverse()

    for ins, follow in zip(instructions, follows):
        if ins.address in consumed:
            body.addr_map[ins.address] = consumed[ins.address]
            continue
        stmts = map_instruction(ins, ctx, follow)
        if not stmts:  # nop
            waiting_nops.append(ins.address)
            continue
        if follow is not None and follow.mnemonic.startswith("move-result"):
            if isinstance(stmts[0], Invoke) and stmts[0].result is not None:
                consumed[follow.address] = stmts[0]
            elif ins.mnemonic.startswith("filled-new-array"):
                consumed[follow.address] = stmts[-1]
        body.addr_map[ins.address] = stmts[0]
        for a in waiting_nops:
            body.addr_map[a] = stmts[0]
        waiting_nops.clear()
        body.statements.extend(stmts)
        groups.append((ins, stmts))
        for s in stmts:
            for addr, slot, is_default in _jump_slots(ins, s):
                p = PendingJump(s, addr, slot, is_default)
                if addr <= ins.address and addr in body.addr_map:
                    _set_target(p, body.addr_map[addr])
                else:
                    _set_target(p, entry)
                    pending.append(p)
    # Trailing nops are payload alignment padding; nothing follows them.
    for a in waiting_nops:
        body.addr_map[a] = body.statements[-1]
    resolve_branches(body, pending)
    if body.statements[-1].falls_through:
        raise LiftError("control falls off the end of the code", method)

    body.traps = _traps(code, groups, body)
    _build_webs(body, ctx)
    return body


def _traps(code: CodeItem, groups, body: Body) -> list[Trap]:
    traps = []
    for tr in code.tries:
        inside = [stmts for ins, stmts in groups if tr.start <= ins.address < tr.end]
        if not inside:
            continue  # range holds only nops
        for h in tr.handlers:
            handler = body.addr_map.get(h.address)
            if handler is None:
                raise DanglingTarget(f"handler at 0x{h.address:04x} starts no instruction", body.method)
            traps.append(Trap(inside[0][0], inside[-1][-1], handler, h.exception))
    return traps


# -- register webs -----------------------------------------------------------


def _reaching_definitions(body: Body, ctx: MethodContext) -> tuple[list[int], dict[int, int]]:
    """IN sets (bitsets over ctx.defs) per statement index."""
    idx = body.index_map()
    n = len(body.statements)
    def_bit = {id(d): 1 << i for i, d in enumerate(ctx.defs)}
    at_reg: dict[int, int] = {}
    wide_at: dict[int, int] = {}
    for d in ctx.defs:
        at_reg[d.register] = at_reg.get(d.register, 0) | def_bit[id(d)]
        if d.wide:
            wide_at[d.register] = wide_at.get(d.register, 0) | def_bit[id(d)]
    gen = [0] * n
    kill = [0] * n
    for d in ctx.defs:
        i = idx[id(d.statement)]
        k = at_reg.get(d.register, 0) | wide_at.get(d.register - 1, 0)
        if d.wide:
            k |= at_reg.get(d.register + 1, 0)
        kill[i] |= k
        gen[i] |= def_bit[id(d)]

    cfg = ir.build_cfg(body, with_exceptional_edges=False)
    succ = [[idx[id(t)] for t in cfg.succ(s)] for s in body.statements]
    handlers: list[list[int]] = [[] for _ in range(n)]
    for lo, hi, trap in body.trapped(idx):
        h = idx[id(trap.handler)]
        for i in range(lo, hi + 1):
            handlers[i].append(h)

    ins = [0] * n
    out = [0] * n
    work = list(range(n - 1, -1, -1))
    queued = set(work)
    while work:
        i = work.pop()
        queued.discard(i)
        o = (ins[i] & ~kill[i]) | gen[i]
        targets = [(j, o) for j in succ[i]] + [(h, ins[i]) for h in handlers[i]]
        out[i] = o
        for j, flow in targets:
            merged = ins[j] | flow
            if merged != ins[j]:
                ins[j] = merged
                if j not in queued:
                    queued.add(j)
                    work.append(j)
    return ins, idx


def _build_webs(body: Body, ctx: MethodContext) -> None:
    ins, idx = _reaching_definitions(body, ctx)
    parent = list(range(len(ctx.defs) + len(ctx.uses)))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    nd = len(ctx.defs)
    reg_mask: dict[int, int] = {}
    for i, d in enumerate(ctx.defs):
        reg_mask[d.register] = reg_mask.get(d.register, 0) | (1 << i)
    for u_i, u in enumerate(ctx.uses):
        reaching = ins[idx[id(u.statement)]] & reg_mask.get(u.register, 0)
        while reaching:
            low = reaching & -reaching
            union(nd + u_i, low.bit_length() - 1)
            reaching ^= low

    # Name webs in statement order of their first occurrence.
    occurrences = [(idx[id(o.statement)], k) for k, o in enumerate(ctx.defs + ctx.uses)]
    occurrences.sort()
    everything = ctx.defs + ctx.uses
    web_local: dict[int, Local] = {}
    counters: dict[int, int] = {}
    mapping: dict[int, Local] = {}
    for _pos, k in occurrences:
        root = find(k)
        occ = everything[k]
        if root not in web_local:
            counters[occ.register] = counters.get(occ.register, 0) + 1
            c = counters[occ.register]
            name = f"v{occ.register}" if c == 1 else f"v{occ.register}_{c}"
            web_local[root] = Local(name, register=occ.register)
        mapping[id(occ.local)] = web_local[root]

    for s in body.statements:
        s.substitute(mapping, mapping)
    for s in body.statements:
        if isinstance(s, Identity) and isinstance(s.source, (ThisRef, ParameterRef)):
            s.target.type = s.source.type
    body.locals = list(web_local.values()) + ctx.temps
