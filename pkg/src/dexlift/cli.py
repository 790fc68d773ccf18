"""Command-line driver: ``dexlift {disasm,lift,cfg,callgraph} FILE.dex``.

Exit codes: 0 ok, 1 unreadable or malformed container (or malformed code),
2 odex/unused opcode, 3 typing failure, 4 bad usage.
"""

from __future__ import annotations

import argparse
import re
import sys
import time
from pathlib import Path

from dexlift.analyses import build_call_graph, callgraph_to_dot, cfg_to_dot
from dexlift.dex import DexError, DexFile, MethodDef, parse_dex, resolve
from dexlift.errors import DexliftError
from dexlift.ir import Body
from dexlift.irtext import emit_text
from dexlift.isa import DecodeError, UnknownOpcode, UnsupportedOpcode, decode_stream, format_instruction
from dexlift.lifter import LiftError, lift_method
from dexlift.passes import PassOptions, run_pipeline
from dexlift.typeinfer import TypingError

OK, PARSE, UNSUPPORTED, TYPING, USAGE = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def java_name(descriptor: str) -> str:
    """``Lcom/x/Main;`` -> ``com.x.Main``."""
    if descriptor.startswith("L") and descriptor.endswith(";"):
        return descriptor[1:-1].replace("/", ".")
    return descriptor


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.$-]", "", name)


def select_methods(dex: DexFile, spec: str) -> list[tuple[object, MethodDef]]:
    """Methods matching ``Class.name[:signature]``.

    The class part may be a descriptor (``Lcom/x/Main;``), a dotted Java
    name (``com.x.Main``) or a bare simple name (``Main``).
    """
    sig = None
    if ":" in spec:
        spec, sig = spec.split(":", 1)
    if "." not in spec:
        raise UsageError(f"--method expects Class.name, got {spec!r}")
    cls_part, name = spec.rsplit(".", 1)
    out = []
    for cls, m in dex.iter_methods():
        d = cls.this_type
        simple = java_name(d).rsplit(".", 1)[-1]
        if cls_part not in (d, java_name(d), simple):
            continue
        if m.method.name == name and (sig is None or m.method.signature == sig):
            out.append((cls, m))
    return out


class _Run:
    def __init__(self, args):
        self.args = args
        self.timings = {"parse": 0.0, "lift": 0.0, "type": 0.0, "optimize": 0.0}
        self.status = OK

    def load(self) -> DexFile:
        t0 = time.perf_counter()
        data = Path(self.args.file).read_bytes()
        dex = parse_dex(data)
        self.timings["parse"] += time.perf_counter() - t0
        return dex

    def lift(self, dex: DexFile, m: MethodDef, typed: bool, optimize: bool) -> Body | None:
        """Lift (and optionally type) one method; a typing failure is reported and yields None."""
        t0 = time.perf_counter()
        try:
            body = lift_method(dex, m)
        except (UnsupportedOpcode, UnknownOpcode) as e:
            raise _located(e, m) from e
        self.timings["lift"] += time.perf_counter() - t0
        if not typed:
            return body
        try:
            report = run_pipeline(body, PassOptions(optimize=optimize, validate=True))
        except TypingError as e:
            print(f"error: typing failed: {e}", file=sys.stderr)
            self.status = max(self.status, TYPING)
            return None
        self.timings["type"] += report.timings.get("type", 0.0)
        self.timings["optimize"] += report.timings.get("optimize", 0.0)
        return body

    def print_timings(self) -> None:
        if self.args.timings:
            for phase, secs in self.timings.items():
                print(f"{phase:<9}{secs:.6f}s", file=sys.stderr)


class _Located(DexliftError):
    pass


def _located(e: DecodeError, m: MethodDef) -> _Located:
    return _Located(f"{e} in {m.method}")


def _methods(dex: DexFile, spec: str | None):
    if spec is None:
        return [(c, m) for c, m in dex.iter_methods() if m.code is not None]
    found = [(c, m) for c, m in select_methods(dex, spec) if m.code is not None]
    if not found:
        raise UsageError(f"no method with code matches {spec!r}")
    return found


def cmd_disasm(run: _Run) -> int:
    dex = run.load()
    out = []
    for _cls, m in dex.iter_methods():
        if m.code is None:
            continue
        out.append(f"method {m.method}")
        out.append(f"  registers {m.code.registers_size}, ins {m.code.ins_size}, outs {m.code.outs_size}")
        try:
            insns = decode_stream(m.code.insns)
        except (UnsupportedOpcode, UnknownOpcode) as e:
            raise _located(e, m) from e
        for ins in insns:
            text = format_instruction(ins, lambda k, i: str(resolve(dex, k, i)))
            out.append(f"  {ins.address:02x}: {text}")
        for t in m.code.tries:
            hs = ", ".join(f"{h.exception or '*'} -> {h.address:02x}" for h in t.handlers)
            out.append(f"  try {t.start:02x}..{t.end:02x}: {hs}")
        out.append("")
    sys.stdout.write("\n".join(out))
    return OK


def cmd_lift(run: _Run) -> int:
    dex = run.load()
    out_dir = Path(run.args.out)
    per_class: dict[str, list[str]] = {}
    for cls, m in _methods(dex, run.args.method):
        body = run.lift(dex, m, typed=True, optimize=not run.args.no_opt)
        per_class.setdefault(cls.this_type, [])
        if body is not None:
            per_class[cls.this_type].append(emit_text(body))
    out_dir.mkdir(parents=True, exist_ok=True)
    for desc in sorted(per_class):
        path = out_dir / f"{_safe(java_name(desc))}.jimple"
        path.write_text("\n".join(per_class[desc]), encoding="utf-8")
        print(path)
    return OK


def cmd_cfg(run: _Run) -> int:
    dex = run.load()
    chosen = _methods(dex, run.args.method)
    if len(chosen) > 1:
        sigs = ", ".join(str(m.method) for _c, m in chosen)
        raise UsageError(f"--method is ambiguous ({sigs}); add :signature")
    cls, m = chosen[0]
    body = run.lift(dex, m, typed=True, optimize=not run.args.no_opt)
    if body is None:
        return OK
    out_dir = Path(run.args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{_safe(java_name(cls.this_type))}_{_safe(m.method.name)}.cfg.dot"
    path.write_text(cfg_to_dot(body, run.args.exceptional_edges), encoding="utf-8")
    print(path)
    return OK


def cmd_callgraph(run: _Run) -> int:
    dex = run.load()
    bodies = []
    for _cls, m in _methods(dex, None):
        bodies.append(run.lift(dex, m, typed=False, optimize=False))
    out_dir = Path(run.args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "app.callgraph.dot"
    path.write_text(callgraph_to_dot(build_call_graph(dex, bodies)), encoding="utf-8")
    print(path)
    return OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--timings", action="store_true", help="print per-phase durations to stderr")
    p = _Parser(prog="dexlift", description="Lift Dalvik bytecode to a typed three-address IR.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("disasm", parents=[common], help="list decoded instructions per method")
    d.add_argument("file")
    d.set_defaults(func=cmd_disasm)

    lf = sub.add_parser("lift", parents=[common], help="write typed IR, one file per class")
    lf.add_argument("file")
    lf.add_argument("--out", default=".")
    lf.add_argument("--no-opt", action="store_true", help="type only; keep nops and unused locals")
    lf.add_argument("--method", help="only this method (Class.name[:signature])")
    lf.set_defaults(func=cmd_lift)

    c = sub.add_parser("cfg", parents=[common], help="write one method's CFG as DOT")
    c.add_argument("file")
    c.add_argument("--method", required=True)
    c.add_argument("--exceptional-edges", action="store_true")
    c.add_argument("--no-opt", action="store_true")
    c.add_argument("--out", default=".")
    c.set_defaults(func=cmd_cfg)

    g = sub.add_parser("callgraph", parents=[common], help="write the call graph as DOT")
    g.add_argument("file")
    g.add_argument("--out", default=".")
    g.set_defaults(func=cmd_callgraph)
    return p


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return USAGE
    except SystemExit as e:  # --help
        return int(e.code or 0)
    r = _Run(args)
    try:
        code = args.func(r)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return USAGE
    except _Located as e:
        print(f"error: {e}", file=sys.stderr)
        return UNSUPPORTED
    except (OSError, DexError, DecodeError, LiftError) as e:
        print(f"error: {e}", file=sys.stderr)
        return PARSE
    r.print_timings()
    return max(code, r.status)


def main() -> None:
    sys.exit(run())
