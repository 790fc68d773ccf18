"""Write a CFG and a call graph as DOT for a small three-method class.

    python3 demos/graphs.py [OUT_DIR]
"""

from __future__ import annotations

import sys
from pathlib import Path

from dexlift import cli
from dexlift.asm import DexBuilder

LOOP = """
.registers 2
const/4 v0, 0
:top
const/16 v1, 10
if-ge v0, v1, :done
invoke-static {v0}, LCounter;.tick:(I)V
add-int/lit8 v0, v0, 1
goto :top
:done
return-void
"""

TICK = """
.registers 1
invoke-static {p0}, Ljava/lang/Integer;.toString:(I)Ljava/lang/String;
return-void
"""


def main() -> None:
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-out")
    b = DexBuilder()
    c = b.add_class("LCounter;")
    c.add_method("run", "()V", LOOP, static=True)
    c.add_method("tick", "(I)V", TICK, static=True)
    c.add_method("unused", "()V", ".registers 0\nreturn-void", static=True)
    out.mkdir(parents=True, exist_ok=True)
    dex = out / "counter.dex"
    dex.write_bytes(b.build())

    cli.run(["cfg", str(dex), "--method", "Counter.run", "--out", str(out)])
    cli.run(["callgraph", str(dex), "--out", str(out)])
    for name in ("Counter_run.cfg.dot", "app.callgraph.dot"):
        print(f"---- {name}")
        print((out / name).read_text())


if __name__ == "__main__":
    main()
