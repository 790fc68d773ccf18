from __future__ import annotations

import sys
import types

import pytest

from dexlift.dex import parse_dex
from dexlift.lifter import lift_method
from dexlift.passes import run_pipeline
from dexlift.refinterp import STRING_STUBS, Env


def _install_mutf8_shim() -> None:
    """androguard imports the ``mutf8`` package, which the mirror lacks.

    The shim only needs to cover the strings our fixtures use, so it relies
    on the stdlib codec (plus the two-byte NUL form) and shares no code with
    the decoder under test.
    """
    try:
        import mutf8  # noqa: F401
        return
    except ImportError:
        pass
    mod = types.ModuleType("mutf8")

    def decode_modified_utf8(data: bytes) -> str:
        return bytes(data).replace(b"\xc0\x80", b"\x00").decode("utf-8", errors="surrogatepass")

    def encode_modified_utf8(text: str) -> bytes:
        return text.encode("utf-8", errors="surrogatepass").replace(b"\x00", b"\xc0\x80")

    mod.decode_modified_utf8 = decode_modified_utf8
    mod.encode_modified_utf8 = encode_modified_utf8
    sys.modules["mutf8"] = mod


_install_mutf8_shim()


@pytest.fixture(scope="session")
def corpus_dex():
    from corpus import build_corpus

    return parse_dex(build_corpus())


@pytest.fixture(scope="session")
def corpus_bodies(corpus_dex):
    bodies = {}
    for _cls, m in corpus_dex.iter_methods():
        if m.code is not None:
            body = lift_method(corpus_dex, m)
            run_pipeline(body)
            bodies[m.method] = body
    return bodies


@pytest.fixture
def corpus_env(corpus_dex, corpus_bodies):
    from corpus import corpus_stubs

    def make() -> Env:
        return Env(dex=corpus_dex, stubs={**STRING_STUBS, **corpus_stubs()}, bodies=corpus_bodies)

    return make
