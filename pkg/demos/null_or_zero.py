"""Lift a method whose `const/4 v0, 0` is really a null, before and after typing.

    python3 demos/null_or_zero.py
"""

from __future__ import annotations

from dexlift.asm import DexBuilder
from dexlift.dex import parse_dex
from dexlift.irtext import emit_text
from dexlift.lifter import lift_method
from dexlift.passes import run_pipeline

CODE = """
.registers 2
const/4 v1, 1
const/4 v0, 0
:loop
if-eqz v0, :check
new-instance v0, LPoint;
invoke-direct {v0, v1, v1}, LPoint;.<init>:(II)V
goto :loop
:check
if-nez v0, :end
invoke-static {v1}, LMain;.report:(I)V
nop
:end
return-object v0
"""


def main() -> None:
    b = DexBuilder()
    b.add_class("LMain;").add_method("make", "()LPoint;", CODE, static=True)
    dex = parse_dex(b.build())
    (m,) = dex.find_class("LMain;").methods

    body = lift_method(dex, m)
    print("== untyped, straight from the lifter ==")
    print(emit_text(body))

    report = run_pipeline(body)
    print("== after typing and clean-up ==")
    print(emit_text(body))
    print("stages:", ", ".join(report.stages))


if __name__ == "__main__":
    main()
