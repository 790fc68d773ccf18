"""Reference interpreters.  Expected values are Java results worked out by hand."""

from __future__ import annotations

import math

import pytest

from dexlift.refinterp import (
    ARITHMETIC, NPE, Env, Outcome, StepLimitExceeded, UnsupportedForOracle, arith, canonical, compare,
    convert, exec_dalvik, exec_ir, float_bits, int_to_f32, narrow, OracleError, Thrown,
)
from helpers import lift_one

MIN, MAX = -(2**31), 2**31 - 1
LMAX, LMIN = 2**63 - 1, -(2**63)


@pytest.mark.parametrize("op,a,b,want", [
    ("+", MAX, 1, MIN),
    ("*", 65536, 65536, 0),
    ("/", MIN, -1, MIN),
    ("%", MIN, -1, 0),
    ("/", -7, 2, -3),
    ("%", -7, 2, -1),
    ("%", 7, -2, 1),
    ("<<", 1, 33, 2),
    (">>", -16, 2, -4),
    (">>>", -1, 28, 15),
    (">>>", -1, 32, -1),
    ("^", 0x0F0F, 0x00FF, 0x0FF0),
])
def test_int_arithmetic(op, a, b, want):
    assert arith(op, a, b, "I") == want


def test_long_arithmetic():
    assert arith("+", LMAX, 1, "J") == LMIN
    assert arith("<<", 1, 65, "J") == 2
    assert arith(">>>", -1, 60, "J") == 15
    assert arith("/", LMIN, -1, "J") == LMIN


def test_integer_division_by_zero_throws():
    for kind in "IJ":
        for op in "/%":
            with pytest.raises(Thrown) as e:
                arith(op, 1, 0, kind)
            assert e.value.obj.cls == ARITHMETIC


def test_float_arithmetic():
    assert arith("/", 1.0, 0.0, "F") == math.inf
    assert arith("/", -1.0, 0.0, "F") == -math.inf
    assert arith("/", 1.0, -0.0, "D") == -math.inf
    assert math.isnan(arith("/", 0.0, 0.0, "D"))
    assert arith("%", 5.5, 2.0, "D") == 1.5
    assert arith("%", -5.5, 2.0, "D") == -1.5
    assert math.isnan(arith("%", 1.0, 0.0, "F"))
    assert arith("%", 3.0, math.inf, "D") == 3.0
    assert arith("+", 16777216.0, 1.0, "F") == 16777216.0
    assert arith("+", 16777216.0, 1.0, "D") == 16777217.0
    assert float_bits(arith("*", 0.1, 1.0, "F")) == 0x3DCCCCCD


@pytest.mark.parametrize("value,src,dst,want", [
    (math.nan, "F", "I", 0),
    (1e20, "D", "I", MAX),
    (-1e20, "D", "I", MIN),
    (-2.7, "D", "I", -2),
    (1e30, "F", "J", LMAX),
    (-math.inf, "D", "J", LMIN),
    (200, "I", "B", -56),
    (-1, "I", "C", 65535),
    (40000, "I", "S", -25536),
    (2**32 + 5, "J", "I", 5),
    (16777217, "I", "F", 16777216.0),
    (16777219, "I", "F", 16777220.0),
    (MAX, "I", "F", 2147483648.0),
])
def test_conversions(value, src, dst, want):
    assert convert(value, src, dst) == want


def test_long_to_float_single_rounding():
    # Rounding via double first would land on a tie and then round to even
    # (2**53 + 2**30 -> 2**53); the direct conversion rounds up.
    x = 2**53 + 2**29 + 1
    assert int_to_f32(x) == float(2**53 + 2**30)


def test_comparisons_with_nan():
    assert compare("cmpl-float", math.nan, 1.0) == -1
    assert compare("cmpg-float", math.nan, 1.0) == 1
    assert compare("cmpg-double", 1.0, math.nan) == 1
    assert compare("cmp-long", -5, 3) == -1
    assert compare("cmpl-double", -0.0, 0.0) == 0


def test_narrowing_on_store():
    assert narrow("B", 0x1FF) == -1
    assert narrow("Z", 0x101) == 1
    assert narrow("C", -2) == 0xFFFE


def test_canonical_distinguishes_float_bits():
    assert canonical(-0.0, "F") != canonical(0.0, "F")
    assert canonical(math.nan, "D") == canonical(math.nan, "D")


def _both(code, signature, args, *, setup=None, max_steps=100_000, stubs=None):
    dex, m, body = lift_one(code, signature, typed=True, setup=setup)
    env = Env(dex=dex, bodies={m.method: body}, max_steps=max_steps)
    if stubs is not None:
        env.stubs.update(stubs)
    return exec_dalvik(m.code, args, env, m.method), exec_ir(body, args, env)


def test_division_by_zero_outcome():
    d, i = _both(".registers 3\ndiv-int v0, p0, p1\nreturn v0", "(II)I", [1, 0])
    assert d == i == Outcome("throw", ARITHMETIC)
    d, i = _both(".registers 3\ndiv-int v0, p0, p1\nreturn v0", "(II)I", [-7, 2])
    assert d == i == Outcome("return", -3)


def test_caught_exception():
    code = """.registers 3
:a
div-int v0, p0, p1
:b
return v0
:h
move-exception v1
const/4 v0, -1
return v0
.catch Ljava/lang/ArithmeticException; {:a .. :b} :h
"""
    assert _both(code, "(II)I", [5, 0]) == (Outcome("return", -1),) * 2
    assert _both(code, "(II)I", [6, 3]) == (Outcome("return", 2),) * 2


def test_null_receiver_throws_npe():
    code = ".registers 2\ninvoke-virtual {p0}, Ljava/lang/String;.length:()I\nmove-result v0\nreturn v0"
    d, i = _both(code, "(Ljava/lang/String;)I", [None])
    assert d == i == Outcome("throw", NPE)
    d, i = _both(code, "(Ljava/lang/String;)I", ["abc"])
    assert d.value == i.value == 3
    assert d.trace == i.trace == (("Ljava/lang/String;.length:()I", (("str", "abc"),), 3),)


def test_float_return_is_bit_exact():
    code = ".registers 2\nneg-float v0, p0\nreturn v0"
    d, i = _both(code, "(F)F", [0.0])
    assert d == i == Outcome("return", ("F", 0x80000000))


def test_missing_stub_is_unsupported():
    code = ".registers 1\ninvoke-static {}, LLib;.go:()V\nreturn-void"
    with pytest.raises(UnsupportedForOracle):
        _both(code, "()V", [])
    d, i = _both(code, "()V", [], stubs={"LLib;.go:()V": lambda a: None})
    assert d == i and d.trace == (("LLib;.go:()V", (), None),)


def test_step_limit():
    code = ".registers 1\n:top\ngoto :top"
    dex, m, body = lift_one(code, "()V", typed=True)
    env = Env(dex=dex, bodies={m.method: body}, max_steps=50)
    with pytest.raises(StepLimitExceeded):
        exec_dalvik(m.code, [], env, m.method)
    with pytest.raises(StepLimitExceeded):
        exec_ir(body, [], env)


def test_wrong_arity_is_rejected():
    dex, m, body = lift_one(".registers 1\nreturn-void", "(I)V", typed=True)
    with pytest.raises(OracleError):
        exec_dalvik(m.code, [], Env(dex=dex), m.method)
