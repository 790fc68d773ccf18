"""Cleanup passes and the lift-to-typed-IR pipeline driver."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from dexlift.errors import DexliftError
from dexlift.ir import INT, LONG, Assign, Body, If, Nop, Statement, Trap, validate
from dexlift.typeinfer import (
    TypingError, finalize_types, find_ambiguous_declarations, fix_zero_comparisons,
    infer_local_types, is_ambiguous, resolve_all, rewrite_constant,
)


class ValidationFailed(DexliftError):
    def __init__(self, stage: str, problems: list[str]):
        self.stage = stage
        self.problems = problems
        super().__init__(f"invalid body after {stage}: " + "; ".join(problems))


def eliminate_nops(body: Body) -> None:
    """Drop Nop statements; anything that pointed at one now points past it."""
    stmts = body.statements
    if not any(isinstance(s, Nop) for s in stmts):
        return
    keep = [s for s in stmts if not isinstance(s, Nop)]
    after: dict[int, Statement] = {}  # id(nop) -> next real statement
    before: dict[int, Statement | None] = {}  # id(nop) -> previous real statement
    nxt = None
    for s in reversed(stmts):
        if isinstance(s, Nop):
            if nxt is not None:
                after[id(s)] = nxt
        else:
            nxt = s
    prev = None
    for s in stmts:
        if isinstance(s, Nop):
            before[id(s)] = prev
        else:
            prev = s

    def fwd(s: Statement) -> Statement:
        if isinstance(s, Nop):
            if id(s) not in after:
                raise DexliftError("nop at the end of a body has no successor")
            return after[id(s)]
        return s

    for s in keep:
        for t in s.branch_targets():
            if isinstance(t, Nop):
                s.retarget(t, fwd(t))
    order = {id(s): i for i, s in enumerate(keep)}
    traps = []
    for t in body.traps:
        begin = fwd(t.begin) if id(t.begin) in after or not isinstance(t.begin, Nop) else None
        end = before.get(id(t.end)) if isinstance(t.end, Nop) else t.end
        if begin is None or end is None or order[id(begin)] > order[id(end)]:
            continue  # range held nothing but nops
        traps.append(Trap(begin, end, fwd(t.handler), t.exception))
    body.traps = traps
    body.addr_map = {a: fwd(s) for a, s in body.addr_map.items() if id(s) in after or not isinstance(s, Nop)}
    body.statements = keep


def remove_unused_locals(body: Body) -> None:
    used = {id(loc) for loc in body.all_locals()}
    body.locals = [loc for loc in body.locals if id(loc) in used]


@dataclass
class PassOptions:
    optimize: bool = True
    validate: bool = True


@dataclass
class PipelineReport:
    stages: list[str] = field(default_factory=list)
    problems: dict[str, list[str]] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)


def _snapshot(body: Body):
    types = [(loc, loc.type) for loc in body.all_locals()]
    values = []
    for s in body.statements:
        if isinstance(s, Assign):
            values.append((s, "value", s.value))
            values.append((s, "const_width", s.const_width))
            values.append((s, "fill_width", s.fill_width))
        elif isinstance(s, If):
            values.append((s, "lhs", s.lhs))
            values.append((s, "rhs", s.rhs))
    return types, values


def _restore(snap) -> None:
    types, values = snap
    for loc, t in types:
        loc.type = t
    for s, attr, v in values:
        setattr(s, attr, v)


def run_pipeline(body: Body, opts: PassOptions | None = None) -> PipelineReport:
    """Type and clean up a freshly lifted body in place.

    Order: infer, resolve ambiguities, rewrite constants, fix comparisons,
    then (when optimizing) eliminate nops and remove unused locals.  With
    ``opts.validate`` the validator runs after each stage and any violation
    raises :class:`ValidationFailed`.  A typing error leaves the body as it
    was before the pipeline started.
    """
    opts = opts or PassOptions()
    report = PipelineReport()

    def check(stage: str, typed: bool = False, optimized: bool = False) -> None:
        report.stages.append(stage)
        if not opts.validate:
            return
        problems = validate(body, typed=typed, optimized=optimized)
        report.problems[stage] = problems
        if problems:
            raise ValidationFailed(stage, problems)

    check("lift")
    snap = _snapshot(body)
    t0 = time.perf_counter()
    try:
        known = infer_local_types(body)
        check("infer")
        decls = find_ambiguous_declarations(body, known)
        resolved = resolve_all(body, decls, known)
        check("resolve")
        overrides = {}
        for d in decls:
            rewrite_constant(d, resolved[id(d)])
            overrides[id(d.statement)] = resolved[id(d)]
        for s in body.statements:
            if is_ambiguous(s):  # the fixpoint already forced these
                overrides[id(s)] = INT if s.const_width == 32 else LONG
                s.const_width = None
        finalize_types(body, overrides)
        check("rewrite")
        fix_zero_comparisons(body)
        check("fix-comparisons", typed=True)
    except TypingError:
        _restore(snap)
        raise
    report.timings["type"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if opts.optimize:
        eliminate_nops(body)
        check("eliminate-nops", typed=True, optimized=True)
        remove_unused_locals(body)
        check("remove-unused-locals", typed=True, optimized=True)
    report.timings["optimize"] = time.perf_counter() - t0
    return report
