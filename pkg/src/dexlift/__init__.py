"""Lift Dalvik bytecode from .dex files to a typed three-address IR."""

from __future__ import annotations

from dexlift.analyses import build_call_graph, callgraph_to_dot, cfg_to_dot
from dexlift.dex import DexFile, MethodRef, parse_dex
from dexlift.errors import DexliftError
from dexlift.ir import Body, build_cfg, validate
from dexlift.irtext import emit_text, parse_text
from dexlift.isa import decode_stream, encode
from dexlift.lifter import lift_method
from dexlift.passes import PassOptions, run_pipeline
from dexlift.refinterp import Env, exec_dalvik, exec_ir

__version__ = "0.1.0"

__all__ = [
    "Body", "DexFile", "DexliftError", "Env", "MethodRef", "PassOptions",
    "build_call_graph", "build_cfg", "callgraph_to_dot", "cfg_to_dot", "decode_stream",
    "emit_text", "encode", "exec_dalvik", "exec_ir", "lift_method", "parse_dex",
    "parse_text", "run_pipeline", "validate",
]
