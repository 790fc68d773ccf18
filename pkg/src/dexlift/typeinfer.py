"""Local type inference and resolution of ambiguous constants.

Typing proceeds in stages that :func:`dexlift.passes.run_pipeline` runs in order:

* :func:`infer_local_types` computes a fixpoint over the evidence that
  unambiguous definitions and uses provide.  Constant loads whose type the
  instruction leaves open do not contribute.
* :func:`find_ambiguous_declarations` lists those constant loads whose local
  was not forced to the provisional type (int or long).
* :func:`resolve_ambiguous` searches the CFG depth-first from each such
  load for the first use that implies a type.
* :func:`rewrite_constant` swaps in null, float or double constants with the
  literal's exact bits, and :func:`finalize_types` recomputes local types.
* :func:`fix_zero_comparisons` turns ``x == 0`` on references into ``x == null``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from dexlift.dex import MethodRef
from dexlift.errors import DexliftError
from dexlift.ir import (
    ArrayAccess, Assign, BinaryOp, Body, CaughtExceptionRef, Cast, Compare, DoubleConstant,
    FieldAccess, FloatConstant, Identity, If, InstanceOf, IntConstant, Invoke, IrType,
    Lengthof, Local, LongConstant, LookupSwitch, MonitorEnter, MonitorExit, NewArray,
    NullConstant, Return, Statement, TableSwitch, Throw, UnaryOp, Value,
    array_of, build_cfg, from_descriptor, ref, type_class, type_text, value_type,
    BOOLEAN, BYTE, CHAR, DOUBLE, FLOAT, INT, LONG, NULL, OBJECT, SHIFT_OPS, SHORT, THROWABLE,
    UNKNOWN,
)


class TypingError(DexliftError):
    def __init__(self, message: str, method: MethodRef | None = None, address: int | None = None):
        self.method = method
        self.address = address
        where = []
        if method is not None:
            where.append(str(method))
        if address is not None:
            where.append(f"@{address:04x}")
        super().__init__(f"{' '.join(where)}: {message}" if where else message)


class TypeConflict(TypingError):
    pass


class Untypable(TypingError):
    pass


class ConflictingEvidence(TypingError):
    pass


class NonZeroNull(TypingError):
    pass


# -- lattice -----------------------------------------------------------------


def join(a: IrType, b: IrType) -> IrType | None:
    """Least upper bound for register typing, or None when the classes clash."""
    if a == UNKNOWN:
        return b
    if b == UNKNOWN or a == b:
        return a
    if a == NULL and b.is_ref_like:
        return b
    if b == NULL and a.is_ref_like:
        return a
    if a.is_integral and b.is_integral:
        return INT
    if a.is_ref_like and b.is_ref_like:
        return OBJECT  # no class hierarchy at hand
    return None


def compatible(a: IrType, b: IrType) -> bool:
    return join(a, b) is not None


# -- evidence ----------------------------------------------------------------


@dataclass(frozen=True)
class TypeEvidence:
    statement: Statement
    kind: str
    type: IrType


_HINTS = {"Z": BOOLEAN, "B": BYTE, "C": CHAR, "S": SHORT}

Known = dict  # id(Local) -> IrType


def _k(known: Known, v: Value) -> IrType:
    if isinstance(v, Local):
        return known.get(id(v), UNKNOWN)
    return _value_type(v, known)


def _value_type(v: Value, known: Known) -> IrType:
    if isinstance(v, Local):
        return known.get(id(v), UNKNOWN)
    if isinstance(v, ArrayAccess):
        bt = _k(known, v.base)
        return bt.element if bt.tag == "Array" else UNKNOWN
    return value_type(v)


def use_expectations(s: Statement, known: Known, body: Body) -> list[tuple[Local, IrType | None, str]]:
    """(local, expected type or None, evidence kind) for every local read by ``s``.

    None means the expectation depends on a type that is not known yet.
    Comparisons against the literal zero are deliberately absent.
    """
    out: list[tuple[Local, IrType | None, str]] = []

    def expect(v: Value, t: IrType | None, kind: str) -> None:
        if isinstance(v, Local):
            out.append((v, t if t != UNKNOWN else None, kind))

    def value_uses(v: Value, target_type: IrType) -> None:
        if isinstance(v, Local):
            expect(v, target_type, "assignment")
        elif isinstance(v, BinaryOp):
            expect(v.lhs, v.type, "type-specific-op")
            expect(v.rhs, INT if v.op in SHIFT_OPS else v.type, "type-specific-op")
        elif isinstance(v, UnaryOp):
            expect(v.operand, v.type, "type-specific-op")
        elif isinstance(v, Cast):
            expect(v.operand, v.from_type or OBJECT, "type-specific-op")
        elif isinstance(v, (InstanceOf, Lengthof)):
            expect(v.operand, OBJECT, "type-specific-op")
        elif isinstance(v, NewArray):
            expect(v.size, INT, "type-specific-op")
        elif isinstance(v, Compare):
            expect(v.lhs, v.operand_type, "type-specific-op")
            expect(v.rhs, v.operand_type, "type-specific-op")
        elif isinstance(v, ArrayAccess):
            t = array_of(target_type) if target_type != UNKNOWN else None
            expect(v.base, t, "array-load")
            expect(v.index, INT, "type-specific-op")
        elif isinstance(v, FieldAccess) and v.base is not None:
            expect(v.base, ref(v.field.owner), "field-access")

    if isinstance(s, Assign):
        if isinstance(s.target, Local):
            tt = known.get(id(s.target), UNKNOWN)
            if isinstance(s.value, Local) and s.move_kind == "ref" and tt == UNKNOWN:
                tt = OBJECT
            value_uses(s.value, tt)
        elif isinstance(s.target, ArrayAccess):
            bt = _k(known, s.target.base)
            elem = bt.element if bt.tag == "Array" else _HINTS.get(s.hint)
            if elem is None and s.hint == "ref":
                elem = OBJECT
            expect(s.value, elem, "array-store")
            vt = _k(known, s.value)
            expect(s.target.base, array_of(vt) if vt not in (UNKNOWN, NULL) else None, "array-store")
            expect(s.target.index, INT, "type-specific-op")
        elif isinstance(s.target, FieldAccess):
            expect(s.value, from_descriptor(s.target.field.type), "field-store")
            if s.target.base is not None:
                expect(s.target.base, ref(s.target.field.owner), "field-access")
    elif isinstance(s, If):
        if isinstance(s.lhs, Local) and isinstance(s.rhs, Local):
            expect(s.lhs, _k(known, s.rhs), "comparison-with-known-type")
            expect(s.rhs, _k(known, s.lhs), "comparison-with-known-type")
    elif isinstance(s, (TableSwitch, LookupSwitch)):
        expect(s.key, INT, "type-specific-op")
    elif isinstance(s, Invoke):
        params = list(s.method.params)
        if s.kind != "static":
            params.insert(0, s.method.owner)
        for a, p in zip(s.args, params):
            expect(a, from_descriptor(p), "invocation-argument")
    elif isinstance(s, Return):
        expect(s.value, from_descriptor(body.method.return_type), "non-void-return")
    elif isinstance(s, Throw):
        expect(s.value, THROWABLE, "type-specific-op")
    elif isinstance(s, (MonitorEnter, MonitorExit)):
        expect(s.value, OBJECT, "type-specific-op")
    return out


def _caught_types(body: Body) -> dict[int, IrType]:
    by_handler: dict[int, set] = {}
    for t in body.traps:
        by_handler.setdefault(id(t.handler), set()).add(t.exception)
    out = {}
    for h, excs in by_handler.items():
        out[h] = ref(excs.pop()) if len(excs) == 1 and None not in excs else THROWABLE
    return out


def is_ambiguous(s: Statement) -> bool:
    return (isinstance(s, Assign) and s.const_width is not None
            and isinstance(s.value, (IntConstant, LongConstant)))


def def_type(s: Statement, known: Known, caught: dict[int, IrType]) -> tuple[Local, IrType] | None:
    """Type a definition gives its local, or None for an ambiguous constant."""
    target = s.defined_local()
    if target is None or is_ambiguous(s):
        return None
    if isinstance(s, Identity):
        if isinstance(s.source, CaughtExceptionRef):
            return target, caught.get(id(s), THROWABLE)
        return target, s.source.type
    if isinstance(s, Invoke):
        return target, from_descriptor(s.method.return_type)
    v = s.value
    if isinstance(v, ArrayAccess):
        t = _value_type(v, known)
        if t == UNKNOWN:
            t = _HINTS.get(s.hint, UNKNOWN)
        return target, t
    return target, _value_type(v, known)


# -- fixpoint ----------------------------------------------------------------


@dataclass
class _Acc:
    defs: IrType = UNKNOWN
    uses: IrType = UNKNOWN
    def_site: Statement | None = None
    use_site: Statement | None = None


def _combine(a: _Acc) -> IrType:
    if a.defs in (UNKNOWN, NULL):
        return a.uses if a.uses != UNKNOWN else a.defs
    if a.defs.is_integral and a.uses.is_integral:
        return join(a.defs, a.uses)
    return a.defs


def local_type_fixpoint(body: Body, overrides: dict[int, IrType] | None = None) -> Known:
    """Types implied by unambiguous evidence (Unknown where there is none).

    ``overrides`` maps ``id(statement)`` to the type a resolved constant
    load gives its local.
    """
    overrides = overrides or {}
    caught = _caught_types(body)
    acc: dict[int, _Acc] = {id(loc): _Acc() for loc in body.all_locals()}
    locals_by_id = {id(loc): loc for loc in body.all_locals()}
    only_consts = _ambiguous_only(body)
    known: Known = {}

    def fail(loc: Local, a: IrType, b: IrType, s: Statement) -> None:
        cls = ConflictingEvidence if only_consts.get(id(loc)) else TypeConflict
        raise cls(f"local {loc.name} used as both {type_text(a)} and {type_text(b)}",
                  body.method, s.address)

    changed = True
    while changed:
        changed = False
        for s in body.statements:
            d = None
            if id(s) in overrides:
                d = (s.defined_local(), overrides[id(s)])
            else:
                d = def_type(s, known, caught)
            if d is not None and d[1] != UNKNOWN:
                loc, t = d
                a = acc[id(loc)]
                j = join(a.defs, t)
                if j is None:
                    fail(loc, a.defs, t, s)
                if j != a.defs:
                    a.defs, a.def_site, changed = j, s, True
            for loc, t, _kind in use_expectations(s, known, body):
                if t is None:
                    continue
                a = acc[id(loc)]
                j = join(a.uses, t)
                if j is None:
                    fail(loc, a.uses, t, s)
                if j != a.uses:
                    a.uses, a.use_site, changed = j, s, True
        for key, a in acc.items():
            if a.defs != UNKNOWN and a.uses != UNKNOWN and not compatible(a.defs, a.uses):
                fail(locals_by_id[key], a.defs, a.uses, a.use_site or a.def_site)
            t = _combine(a)
            if known.get(key, UNKNOWN) != t:
                if t != UNKNOWN:
                    known[key] = t
                changed = True
    return known


def _ambiguous_only(body: Body) -> dict[int, bool]:
    out: dict[int, bool] = {}
    for s in body.statements:
        loc = s.defined_local()
        if loc is not None:
            out[id(loc)] = out.get(id(loc), True) and is_ambiguous(s)
    return out


# -- ambiguous declarations --------------------------------------------------


@dataclass(eq=False)
class AmbiguousDeclaration:
    statement: Assign
    local: Local
    width: int  # 32 or 64
    bits: int

    @property
    def provisional(self) -> IrType:
        return LONG if self.width == 64 else INT

    @property
    def candidates(self) -> tuple[IrType, ...]:
        if self.width == 64:
            return (LONG, DOUBLE)
        if self.bits == 0:
            return (INT, FLOAT, NULL)
        return (INT, FLOAT)

    def admits(self, t: IrType) -> bool:
        return any(type_class(t) == type_class(c) for c in self.candidates)


def find_ambiguous_declarations(body: Body, known: Known | None = None) -> list[AmbiguousDeclaration]:
    if known is None:
        known = local_type_fixpoint(body)
    out = []
    for s in body.statements:
        if is_ambiguous(s):
            decl = AmbiguousDeclaration(s, s.target, s.const_width, s.raw_bits)
            if known.get(id(s.target), UNKNOWN) != decl.provisional:
                out.append(decl)
    return out


@dataclass
class SearchResult:
    type: IrType | None
    evidence: list[TypeEvidence] = field(default_factory=list)
    blocked: bool = False  # some path hit a use whose type is not known yet


def _evidence_at(s: Statement, dv: Local, known: Known, body: Body):
    """Evidence ``s`` gives for ``dv``: a TypeEvidence, "blocked", or None."""
    if isinstance(s, If) and (s.lhs is dv or s.rhs is dv):
        other = s.rhs if s.lhs is dv else s.lhs
        if other is dv:
            return None
        if isinstance(other, IntConstant) and other.value == 0:
            t = known.get(id(dv), UNKNOWN)
            if t == UNKNOWN:
                return "blocked"
            return TypeEvidence(s, "comparison-with-known-type", t)
        t = _k(known, other)
        if t == UNKNOWN:
            return "blocked"
        return TypeEvidence(s, "comparison-with-known-type", t)
    found = None
    for loc, t, kind in use_expectations(s, known, body):
        if loc is not dv:
            continue
        if t is None:
            found = found or "blocked"
        else:
            return TypeEvidence(s, kind, t)
    return found


def search_evidence(body: Body, decl: AmbiguousDeclaration, known: Known, cfg=None) -> SearchResult:
    """Depth-first search from the declaration, successors in statement order.

    A path ends at a redefinition of the local, at the first evidence, or
    when statements run out.
    """
    cfg = cfg or build_cfg(body, with_exceptional_edges=True)
    order = body.index_map()
    dv = decl.local
    result = SearchResult(None)
    visited = {id(decl.statement)}
    stack = list(reversed(sorted(cfg.succ(decl.statement), key=lambda x: order[id(x)])))
    while stack:
        s = stack.pop()
        if id(s) in visited:
            continue
        visited.add(id(s))
        ev = _evidence_at(s, dv, known, body)
        if isinstance(ev, TypeEvidence):
            result.evidence.append(ev)
            continue
        if ev == "blocked":
            result.blocked = True
        if s.defined_local() is dv:
            continue
        stack.extend(reversed(sorted(cfg.succ(s), key=lambda x: order[id(x)])))
    if result.evidence:
        first = result.evidence[0]
        for ev in result.evidence[1:]:
            if type_class(ev.type) != type_class(first.type):
                raise ConflictingEvidence(
                    f"constant in {dv.name} (candidates "
                    f"{', '.join(type_text(c) for c in decl.candidates)}) is used as "
                    f"{type_text(first.type)} at @{_addr(first.statement)} and as "
                    f"{type_text(ev.type)} at @{_addr(ev.statement)}",
                    body.method, decl.statement.address,
                )
        if not decl.admits(first.type):
            raise TypeConflict(
                f"{decl.width}-bit constant in {dv.name} used as {type_text(first.type)}",
                body.method, decl.statement.address,
            )
        result.type = first.type
    return result


def _addr(s: Statement) -> str:
    return "?" if s.address is None else f"{s.address:04x}"


def default_type(decl: AmbiguousDeclaration, known: Known) -> IrType:
    t = known.get(id(decl.local), UNKNOWN)
    if t != UNKNOWN and decl.admits(t):
        return t
    return decl.provisional


def resolve_ambiguous(body: Body, decl: AmbiguousDeclaration, known: Known | None = None) -> IrType:
    """Type for one ambiguous constant: first evidence found, else the default."""
    if known is None:
        known = local_type_fixpoint(body)
    found = search_evidence(body, decl, known)
    return found.type if found.type is not None else default_type(decl, known)


def resolve_all(body: Body, decls: list[AmbiguousDeclaration], known: Known) -> dict[int, IrType]:
    """Resolve every declaration; ``{id(decl): type}``.

    Searches blocked on a not-yet-known type are retried in rounds, each
    round seeing only what earlier rounds resolved, so the outcome does not
    depend on the order of ``decls``.
    """
    known = dict(known)
    cfg = build_cfg(body, with_exceptional_edges=True)
    resolved: dict[int, IrType] = {}
    pending = list(decls)
    for _round in range(len(decls) + 1):
        if not pending:
            break
        results = [(d, search_evidence(body, d, known, cfg)) for d in pending]
        progress = False
        still = []
        for d, r in results:
            if r.type is not None:
                resolved[id(d)] = r.type
                progress = True
            elif not r.blocked:
                resolved[id(d)] = default_type(d, known)
            else:
                still.append(d)
        for d, _r in results:
            t = resolved.get(id(d))
            if t is not None and known.get(id(d.local), UNKNOWN) == UNKNOWN:
                known[id(d.local)] = t
        pending = still
        if not progress:
            break
    for d in pending:
        resolved[id(d)] = default_type(d, known)
    return resolved


# -- rewriting ---------------------------------------------------------------


def rewrite_constant(decl: AmbiguousDeclaration, t: IrType) -> None:
    s = decl.statement
    if t.is_ref_like and decl.bits != 0:
        raise NonZeroNull(f"literal 0x{decl.bits:x} cannot be null", None, s.address)
    if not decl.admits(t):
        raise TypeConflict(f"{type_text(t)} is not a candidate for a {decl.width}-bit constant",
                           None, s.address)
    if t.is_ref_like:
        s.value = NullConstant()
    elif t == FLOAT:
        s.value = FloatConstant(decl.bits)
    elif t == DOUBLE:
        s.value = DoubleConstant(decl.bits)
    s.const_width = None


def _fill_value(raw: int, width: int, elem: IrType) -> Value | None:
    bits = 8 * width
    signed = raw - (1 << bits) if raw >> (bits - 1) else raw
    if elem == FLOAT and width == 4:
        return FloatConstant(raw)
    if elem == DOUBLE and width == 8:
        return DoubleConstant(raw)
    if elem == LONG and width == 8:
        return LongConstant(signed)
    if elem in (CHAR, BOOLEAN):
        return IntConstant(raw)
    if elem.is_integral:
        return IntConstant(signed)
    return None


def finalize_types(body: Body, resolved: dict[int, IrType]) -> None:
    """Set every local's declared type; rewrite unrolled array initialisers.

    ``resolved`` maps ``id(statement)`` of each rewritten constant load to
    its type.  Raises Untypable when a local is left without evidence.
    """
    known = local_type_fixpoint(body, resolved)
    for loc in body.all_locals():
        t = known.get(id(loc), UNKNOWN)
        if t == NULL:
            t = OBJECT
        if t == UNKNOWN:
            site = next((s for s in body.statements if loc in _locals_of(s)), None)
            raise Untypable(f"no type evidence for {loc.name}", body.method,
                            site.address if site is not None else None)
        loc.type = t
    for s in body.statements:
        if isinstance(s, Assign) and s.fill_width is not None and isinstance(s.target, ArrayAccess):
            bt = value_type(s.target.base)
            if bt.tag == "Array":
                v = _fill_value(s.raw_bits, s.fill_width, bt.element)
                if v is None:
                    raise TypeConflict(f"array data of width {s.fill_width} stored into "
                                       f"{type_text(bt)}", body.method, s.address)
                s.value = v
            s.fill_width = None


def _locals_of(s: Statement) -> list[Local]:
    out = []
    for v in s.values():
        out.extend(v.locals())
    return out


def infer_local_types(body: Body) -> Known:
    """Fixpoint typing; constants nothing constrains get int/long for now.

    Returns the evidence-only fixpoint, which later stages search against.
    """
    known = local_type_fixpoint(body)
    provisional: dict[int, IrType] = {}
    for s in body.statements:
        if is_ambiguous(s):
            provisional.setdefault(id(s.target), LONG if s.const_width == 64 else INT)
    for loc in body.all_locals():
        t = known.get(id(loc), UNKNOWN)
        if t == UNKNOWN:
            t = provisional.get(id(loc), UNKNOWN)
        if t == UNKNOWN:
            continue  # may still be typed through a resolved constant
        loc.type = OBJECT if t == NULL else t
    return known


def fix_zero_comparisons(body: Body) -> None:
    for s in body.statements:
        if not isinstance(s, If):
            continue
        if value_type(s.lhs).is_ref_like and _is_zero(s.rhs):
            s.rhs = NullConstant()
        elif value_type(s.rhs).is_ref_like and _is_zero(s.lhs):
            s.lhs = NullConstant()


def _is_zero(v: Value) -> bool:
    return isinstance(v, IntConstant) and v.value == 0

