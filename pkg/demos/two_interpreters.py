"""Run one method as Dalvik code and as typed IR, and compare what comes out.

    python3 demos/two_interpreters.py
"""

from __future__ import annotations

from dexlift.asm import DexBuilder
from dexlift.dex import parse_dex
from dexlift.lifter import lift_method
from dexlift.passes import run_pipeline
from dexlift.refinterp import Env, exec_dalvik, exec_ir

# int safeDiv(int a, int b) { try { return a / b; } catch (ArithmeticException e) { return -1; } }
CODE = """
.registers 3
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


def main() -> None:
    b = DexBuilder()
    b.add_class("LCalc;").add_method("safeDiv", "(II)I", CODE, static=True)
    dex = parse_dex(b.build())
    (m,) = dex.find_class("LCalc;").methods
    body = lift_method(dex, m)
    run_pipeline(body)
    env = Env(dex=dex, bodies={m.method: body})
    for args in ([7, 2], [-7, 2], [1, 0], [-(2**31), -1]):
        d = exec_dalvik(m.code, args, env, m.method)
        i = exec_ir(body, args, env)
        print(f"safeDiv{tuple(args)}: dalvik={d.kind} {d.value}  ir={i.kind} {i.value}  "
              f"{'agree' if d == i else 'DIFFER'}")


if __name__ == "__main__":
    main()
