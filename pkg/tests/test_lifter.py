from __future__ import annotations

import pytest

from dexlift import ir, isa, lifter
from dexlift.dex import CodeItem, MethodRef, parse_dex
from dexlift.ir import (
    Assign, Goto, Identity, If, IntConstant, Invoke, LongConstant, Nop, ParameterRef,
    ReturnVoid, ThisRef, validate,
)
from dexlift.irtext import emit_text
from dexlift.isa import decode_stream
from dexlift.lifter import BadRegister, DanglingTarget, LiftError, OrphanMoveResult, lift_code, lift_method
from helpers import lift_one
from snippets import all_snippets, build_snippet_dex

SNIPPETS = all_snippets()


@pytest.fixture(scope="module")
def snippet_bodies():
    d = parse_dex(build_snippet_dex(SNIPPETS))
    out = {}
    for _c, m in d.iter_methods():
        sn = SNIPPETS[int(m.method.name[2:], 16)]
        out[sn.mnemonic] = (sn, m, lift_method(d, m))
    return out


def lifted_at(body, m, mnemonic):
    ins = next(x for x in decode_stream(m.code.insns) if x.mnemonic == mnemonic)
    a = body.addr_map[ins.address].address
    return [s for s in body.statements if s.address == a]


def test_mapping_table_covers_normal_opcodes():
    normal = {o.value for o in isa.OPCODES if o.kind == isa.NORMAL}
    assert set(lifter.MAPPING) == normal
    for v, rule in lifter.MAPPING.items():
        assert rule.mnemonic == isa.OPCODES[v].mnemonic
        assert rule.type != "-" and rule.arg != "" and rule.type != ""
        assert hasattr(lifter._Mapper, "rule_" + rule.rule), rule


def test_snippets_cover_every_normal_opcode():
    assert sorted(s.mnemonic for s in SNIPPETS) == sorted(
        o.mnemonic for o in isa.OPCODES if o.kind == isa.NORMAL)


@pytest.mark.parametrize("mnemonic", [s.mnemonic for s in SNIPPETS])
def test_opcode_lifts_to_expected_shape(snippet_bodies, mnemonic):
    sn, m, body = snippet_bodies[mnemonic]
    assert sn.check(lifted_at(body, m, mnemonic)), emit_text(body)
    assert validate(body) == []


def test_shape_checks_catch_a_wrong_operator(monkeypatch, snippet_bodies):
    sn, m, _ = snippet_bodies["add-int"]
    wrong = lifter.Rule(0x90, "add-int", "binop", "I", "-")
    monkeypatch.setitem(lifter.MAPPING, 0x90, wrong)
    d = parse_dex(build_snippet_dex(SNIPPETS))
    m = next(x for _c, x in d.iter_methods() if x.method == m.method)
    assert not sn.check(lifted_at(lift_method(d, m), m, "add-int"))


def test_return_void_only():
    _d, _m, body = lift_one("return-void")
    assert [type(s) for s in body.statements] == [Nop, ReturnVoid]
    assert body.addr_map == {0: body.statements[1]}


def test_identity_prefix_and_unused_params():
    _d, _m, body = lift_one(".registers 4\nreturn-void", "(JI)V", static=False)
    ids = body.statements[1:4]
    assert isinstance(ids[0].source, ThisRef)
    assert [s.source.index for s in ids[1:]] == [0, 1]
    assert [s.target.type for s in ids] == [ir.ref("LT;"), ir.LONG, ir.INT]
    assert [s.target.name for s in ids] == ["v0", "v1", "v3"]


def test_null_loop_statements(corpus_dex):
    m = next(x for _c, x in corpus_dex.iter_methods() if x.method.name == "make")
    body = lift_method(corpus_dex, m)
    code = body.statements[1:]
    kinds = [type(s).__name__ for s in code]
    assert kinds == ["Assign", "Assign", "If", "Assign", "Invoke", "Goto", "If", "Invoke", "Return"]
    assert len(code) == 9
    assert code[5].target is body.addr_map[0x02]
    assert code[2].target is body.addr_map[0x0A]
    assert code[6].target is body.addr_map[0x13] is code[8]
    assert body.addr_map[0x0F] is code[8]  # nops map to the next real statement
    assert code[4].kind == "direct" and str(code[4].method) == "LCoordinate;.<init>:(II)V"
    assert code[4].result is None
    assert len(code[4].args) == 3 and code[4].args[1] is code[4].args[2]
    assert isinstance(code[0].value, IntConstant) and code[0].const_width == 32


def test_backward_jump_to_first_instruction():
    _d, _m, body = lift_one(".registers 1\n:top\nnop\ngoto :top")
    g = body.statements[-1]
    assert isinstance(g, Goto)
    assert g.target is body.statements[1]
    assert g.target is not body.statements[0]
    _d, _m, body = lift_one(".registers 1\n:top\ngoto/16 :top")
    assert body.statements[1].target is body.statements[1]


def test_forward_jumps_are_fixed_up(corpus_dex):
    for _c, m in corpus_dex.iter_methods():
        if m.code is None:
            continue
        body = lift_method(corpus_dex, m)
        entry = body.statements[0]
        for s in body.statements:
            assert all(t is not entry for t in s.branch_targets())


def test_addr_map_is_complete(corpus_dex):
    for _c, m in corpus_dex.iter_methods():
        if m.code is None:
            continue
        body = lift_method(corpus_dex, m)
        addrs = {i.address for i in decode_stream(m.code.insns) if not i.is_payload}
        assert set(body.addr_map) == addrs
        assert validate(body) == []


def test_lifting_is_deterministic(corpus_dex):
    for _c, m in corpus_dex.iter_methods():
        if m.code is not None:
            assert emit_text(lift_method(corpus_dex, m)) == emit_text(lift_method(corpus_dex, m))


def test_const_and_sub_long():
    _d, _m, body = lift_one(".registers 6\nconst v0, 0xBEEF\nsub-long v2, v2, v4\nreturn-void")
    c = body.statements[1]
    assert c.value == IntConstant(0xBEEF) and c.const_width == 32
    s = body.statements[2]
    assert s.value.op == "-" and s.value.type == ir.LONG
    assert (s.value.lhs.register, s.value.rhs.register) == (2, 4)


def test_wide_const_is_provisionally_long():
    _d, _m, body = lift_one(".registers 2\nconst-wide/high16 v0, 0x3ff0000000000000\nreturn-void")
    assert body.statements[1].value == LongConstant(0x3FF0000000000000)
    assert body.statements[1].const_width == 64


def test_move_result_binds_across_nop():
    code = """.registers 1
invoke-static {}, LT;.g:()I
nop
move-result v0
return v0
"""
    _d, _m, body = lift_one(code, "()I")
    inv = body.statements[1]
    assert isinstance(inv, Invoke) and inv.result is body.statements[2].value
    assert body.addr_map[4] is inv


def test_dropped_result():
    _d, _m, body = lift_one(".registers 1\ninvoke-static {}, LT;.g:()I\nreturn-void")
    assert body.statements[1].result is None


def test_orphan_move_result():
    with pytest.raises(OrphanMoveResult):
        lift_one(".registers 1\nmove-result v0\nreturn-void")
    with pytest.raises(OrphanMoveResult):
        lift_one(".registers 1\ninvoke-static {}, LT;.g:()V\nmove-result v0\nreturn-void")


def test_register_reuse_splits_locals():
    code = """.registers 2
const/4 v0, 1
add-int/lit8 v1, v0, 1
const-string v0, "x"
invoke-static {v0}, LT;.s:(Ljava/lang/String;)V
return v1
"""
    _d, _m, body = lift_one(code, "()I")
    first, second = body.statements[1].target, body.statements[3].target
    assert first is not second
    assert (first.name, second.name) == ("v0", "v0_2")
    assert body.statements[4].args[0] is second


def test_merging_definitions_share_a_local():
    code = """.registers 2
if-eqz p0, :a
const/4 v0, 1
goto :b
:a
const/4 v0, 2
:b
return v0
"""
    _d, _m, body = lift_one(code, "(I)I")
    defs = [s.target for s in body.statements if isinstance(s, Assign)]
    assert len(defs) == 2 and defs[0] is defs[1]


def test_wide_pair_is_one_local_and_high_half_reuse_is_fresh():
    code = """.registers 3
const-wide/16 v0, 5
move-wide v1, v0
const/4 v1, 0
return v1
"""
    _d, _m, body = lift_one(code, "()I")
    a = body.statements[1].target
    mv = body.statements[2]
    assert mv.value is a
    assert body.statements[3].target is not mv.target


def test_traps_follow_the_try_table(corpus_dex):
    m = next(x for _c, x in corpus_dex.iter_methods() if x.method.name == "nested")
    body = lift_method(corpus_dex, m)
    want = [(t.start, h.address, h.exception) for t in m.code.tries for h in t.handlers]
    assert len(want) >= 2
    got = [(t.begin.address, t.handler, t.exception) for t in body.traps]
    assert got == [(a, body.addr_map[h], e) for a, h, e in want]
    for lo, hi, _t in body.trapped():
        assert lo <= hi


def test_caught_exception_reaches_handler_local():
    code = """.registers 2
:a
invoke-static {}, LT;.g:()V
:b
const/4 v0, 0
return v0
:h
move-exception v1
const/4 v0, 1
return v0
.catch Ljava/lang/Exception; {:a .. :b} :h
"""
    _d, _m, body = lift_one(code, "()I")
    (trap,) = body.traps
    assert trap.exception == "Ljava/lang/Exception;"
    assert isinstance(trap.handler, Identity)
    assert isinstance(trap.begin, Invoke) and trap.end is trap.begin


def test_nop_only_try_range_is_dropped():
    code = """.registers 1
:a
nop
:b
return-void
.catchall {:a .. :b} :c
:c
return-void
"""
    _d, _m, body = lift_one(code)
    assert body.traps == []


M = MethodRef("LT;", "m", (), "V")


def raw(units, regs=1):
    return lift_code(None, M, True, CodeItem(regs, 0, 0, tuple(units)))


def test_jump_into_instruction_middle():
    # const v0, #0 (3 units) then goto -2 (lands on address 1).
    with pytest.raises(DanglingTarget) as e:
        raw([0x0014, 0, 0, 0xFE28])
    assert "0x0001" in str(e.value)
    assert isinstance(e.value, ir.DanglingTarget)


def test_bad_register():
    with pytest.raises(BadRegister):
        raw([0x0501, 0x000E], regs=2)  # move v5, v0
    with pytest.raises(BadRegister):
        raw([0x0004, 0x000E], regs=1)  # move-wide v0, v0 needs two registers


def test_falls_off_the_end():
    with pytest.raises(LiftError):
        raw([0x0012])


def test_pool_without_dex():
    with pytest.raises(LiftError):
        raw([0x001A, 0, 0x000E])  # const-string v0, string@0


def test_unsupported_opcode_passes_through():
    with pytest.raises(isa.UnsupportedOpcode):
        raw([0x10F2, 0, 0x000E])


def test_lift_errors_name_method_and_address():
    with pytest.raises(OrphanMoveResult) as e:
        raw([0x000A, 0x000E])
    assert e.value.method == M and e.value.address == 0
    assert "LT;.m:()V @0000" in str(e.value)


def test_param_identity_types(corpus_dex):
    for _c, m in corpus_dex.iter_methods():
        if m.code is None:
            continue
        body = lift_method(corpus_dex, m)
        params = [s for s in body.statements if isinstance(s, Identity)
                  and isinstance(s.source, ParameterRef)]
        assert [ir.to_descriptor(s.target.type) for s in params] == list(m.method.params)
        others = {id(s.target) for s in params} | {
            id(s.target) for s in body.statements
            if isinstance(s, Identity) and isinstance(s.source, ThisRef)}
        for loc in body.locals:
            if id(loc) not in others and not loc.name.startswith("$"):
                assert loc.type == ir.UNKNOWN


def test_if_zero_compares_against_int_zero():
    _d, _m, body = lift_one(".registers 1\nif-nez p0, :x\n:x\nreturn-void", "(I)V")
    s = body.statements[2]
    assert isinstance(s, If) and s.rhs == IntConstant(0) and s.op == "!="
