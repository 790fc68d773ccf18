"""Small helpers shared by test modules."""

from __future__ import annotations

import pytest

from dexlift.dex import parse_dex
from dexlift.lifter import lift_method
from dexlift.passes import run_pipeline


def androguard_dex():
    """androguard's DEX class, or skip when androguard is unavailable."""
    pytest.importorskip("androguard")
    from loguru import logger

    logger.remove()
    from androguard.core.dex import DEX

    return DEX


def lift_one(code: str, signature: str = "()V", *, static: bool = True, name: str = "m",
             cls: str = "LT;", setup=None, typed: bool = False):
    """Assemble a single method into a throwaway dex and lift it."""
    from dexlift.asm import DexBuilder

    b = DexBuilder()
    c = b.add_class(cls)
    if setup is not None:
        setup(b, c)
    c.add_method(name, signature, code, static=static)
    dex = parse_dex(b.build())
    m = dex.find_class(cls).methods
    m = next(x for x in m if x.method.name == name)
    body = lift_method(dex, m)
    if typed:
        run_pipeline(body)
    return dex, m, body
