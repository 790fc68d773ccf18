"""Run every corpus method through both interpreters and compare outcomes."""

from __future__ import annotations

import pytest

from dexlift import lifter
from dexlift.lifter import lift_method
from dexlift.passes import run_pipeline
from dexlift.refinterp import exec_dalvik, exec_ir
from corpus import CASES, CATEGORIES


def find(dex, case):
    return next(m for _c, m in dex.iter_methods() if m.method.owner == case.cls and m.method.name == case.name)


def disagreements(dex, case, env_factory, body=None):
    m = find(dex, case)
    if body is None:
        body = lift_method(dex, m)
        run_pipeline(body)
    bad = []
    # Fresh argument objects per side, since either run may mutate them.
    for want_args, got_args in zip(case.vectors(), case.vectors()):
        want = exec_dalvik(m.code, want_args, env_factory(), m.method)
        got = exec_ir(body, got_args, env_factory())
        if want != got:
            bad.append((want_args, want, got))
    return bad


def test_every_category_has_ten_vectors():
    for cat in CATEGORIES:
        cases = [c for c in CASES if c.category == cat]
        assert cases, cat
        assert all(len(c.vectors()) >= 10 for c in cases), cat


@pytest.mark.parametrize("case", CASES, ids=lambda c: f"{c.category}-{c.name}")
def test_agreement(case, corpus_dex, corpus_bodies, corpus_env):
    body = corpus_bodies[find(corpus_dex, case).method]
    assert disagreements(corpus_dex, case, corpus_env, body) == []


def test_detects_a_wrong_operator(monkeypatch, corpus_dex, corpus_env):
    wrong = lifter.Rule(0x90, "add-int", "binop", "I", "-")
    monkeypatch.setitem(lifter.MAPPING, 0x90, wrong)
    case = next(c for c in CASES if c.name == "intMix")
    assert disagreements(corpus_dex, case, corpus_env)
