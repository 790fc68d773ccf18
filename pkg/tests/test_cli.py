from __future__ import annotations

import subprocess
import sys

import pytest

from dexlift import cli
from dexlift.asm import DexBuilder
from apps import build_app5
from corpus import add_snake

MARK = bytes([0x13, 0x00, 0xBC, 0x7A])  # const/16 v0, 0x7abc


def with_marker() -> bytes:
    b = DexBuilder()
    c = b.add_class("LT;")
    c.add_method("ok", "()V", ".registers 0\nreturn-void", static=True)
    c.add_method("m", "()V", ".registers 1\nconst/16 v0, 0x7abc\nreturn-void", static=True)
    data = b.build()
    assert data.count(MARK) == 1
    return data


def patched(opcode_units: bytes) -> bytes:
    """The marker instruction replaced in place; checksums are left stale."""
    return with_marker().replace(MARK, opcode_units)


@pytest.fixture
def write(tmp_path):
    def go(data: bytes, name: str = "app.dex") -> str:
        p = tmp_path / name
        p.write_bytes(data)
        return str(p)

    return go


def test_help_exits_zero(capsys):
    assert cli.run(["--help"]) == cli.OK
    assert "lift" in capsys.readouterr().out
    assert cli.run(["lift", "--help"]) == cli.OK


@pytest.mark.parametrize("argv", [[], ["frobnicate", "x.dex"], ["lift"], ["lift", "x.dex", "--bogus"]])
def test_usage_errors(argv, capsys):
    assert cli.run(argv) == cli.USAGE
    assert "usage error" in capsys.readouterr().err


def test_cfg_requires_method(write, capsys):
    path = write(build_app5())
    assert cli.run(["cfg", path]) == cli.USAGE
    assert cli.run(["cfg", path, "--method", "App.nothere"]) == cli.USAGE
    assert cli.run(["cfg", path, "--method", "nodot"]) == cli.USAGE


def test_unreadable_inputs(write, tmp_path, capsys):
    assert cli.run(["lift", str(tmp_path / "missing.dex")]) == cli.PARSE
    assert cli.run(["lift", write(b"not a dex file at all" * 10)]) == cli.PARSE
    assert cli.run(["disasm", write(build_app5()[:50])]) == cli.PARSE
    assert "error" in capsys.readouterr().err


@pytest.mark.parametrize("units,name", [
    (bytes([0xF2, 0x10, 0x08, 0x00]), "iget-quick"),
    (bytes([0xEE, 0x00, 0x01, 0x00]), "execute-inline"),
    (bytes([0x3E, 0x00, 0x00, 0x00]), "unused opcode 0x3e"),
    (bytes([0xFF, 0x00, 0x00, 0x00]), "unused opcode 0xff"),
])
@pytest.mark.parametrize("command", ["lift", "disasm"])
def test_unsupported_opcode_exit(units, name, command, write, tmp_path, capsys):
    path = write(patched(units))
    assert cli.run([command, path, "--out", str(tmp_path)] if command == "lift" else [command, path]) == cli.UNSUPPORTED
    err = capsys.readouterr().err
    assert name in err and "LT;.m:()V" in err


def test_typing_failure_exit(write, tmp_path, capsys):
    b = DexBuilder()
    c = b.add_class("LBad;")
    c.add_method("m", "()V", ".registers 2\nmove v0, v1\nreturn-void", static=True)
    c.add_method("fine", "()I", ".registers 1\nconst/4 v0, 2\nreturn v0", static=True)
    assert cli.run(["lift", write(b.build()), "--out", str(tmp_path / "o")]) == cli.TYPING
    assert "typing failed" in capsys.readouterr().err
    text = (tmp_path / "o" / "Bad.jimple").read_text()
    assert "fine" in text and " m()" not in text


def test_lift_is_deterministic(write, tmp_path, capsys):
    path = write(build_app5())
    assert cli.run(["lift", path, "--out", str(tmp_path / "a")]) == cli.OK
    assert cli.run(["lift", path, "--out", str(tmp_path / "b")]) == cli.OK
    a = (tmp_path / "a" / "App.jimple").read_bytes()
    assert a == (tmp_path / "b" / "App.jimple").read_bytes()
    assert a.count(b"return") == 5


def test_method_filter_matches_full_output(write, tmp_path, capsys):
    path = write(build_app5())
    cli.run(["lift", path, "--out", str(tmp_path / "all")])
    for spec in ("App.d", "LApp;.d", "App.d:()V"):
        out = tmp_path / spec.replace(";", "").replace(":", "_")
        assert cli.run(["lift", path, "--out", str(out), "--method", spec]) == cli.OK
        one = (out / "App.jimple").read_text()
        assert one in (tmp_path / "all" / "App.jimple").read_text()
        assert one.count("return") == 1


def test_no_opt_keeps_nops(write, tmp_path, capsys):
    path = write(build_app5())
    cli.run(["lift", path, "--out", str(tmp_path / "x"), "--no-opt"])
    assert "nop" in (tmp_path / "x" / "App.jimple").read_text()
    cli.run(["lift", path, "--out", str(tmp_path / "y")])
    assert "nop" not in (tmp_path / "y" / "App.jimple").read_text()


def test_cfg_for_snake(write, tmp_path, capsys):
    pydot = pytest.importorskip("pydot")
    b = DexBuilder()
    add_snake(b)
    path = write(b.build())
    assert cli.run(["cfg", path, "--method", "SnakeView.addRandomApple", "--out", str(tmp_path)]) == cli.OK
    dot = tmp_path / "SnakeView_addRandomApple.cfg.dot"
    assert capsys.readouterr().out.strip() == str(dot)
    (g,) = pydot.graph_from_dot_file(str(dot))
    assert len(g.get_edges()) > 0


def test_callgraph_and_disasm(write, tmp_path, capsys):
    path = write(build_app5())
    assert cli.run(["callgraph", path, "--out", str(tmp_path)]) == cli.OK
    text = (tmp_path / "app.callgraph.dot").read_text()
    assert "Ljava/lang/System;.gc:()V" in text
    capsys.readouterr()
    assert cli.run(["disasm", path]) == cli.OK
    out = capsys.readouterr().out
    assert "method LApp;.b:(I)V" in out and "if-lez" in out


def test_timings_on_stderr(write, tmp_path, capsys):
    assert cli.run(["lift", write(build_app5()), "--out", str(tmp_path), "--timings"]) == cli.OK
    cap = capsys.readouterr()
    phases = [line.split()[0] for line in cap.err.splitlines()]
    assert phases == ["parse", "lift", "type", "optimize"]
    assert "parse" not in cap.out


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "dexlift", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "callgraph" in r.stdout
