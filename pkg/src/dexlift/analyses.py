"""Graph artifacts over lifted bodies: per-method CFGs and the call graph, as DOT."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from dexlift.dex import DexFile, MethodRef
from dexlift.ir import Body, Invoke, Statement, build_cfg
from dexlift.irtext import statement_text


def dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def cfg_to_dot(body: Body, with_exceptional_edges: bool = False) -> str:
    """One node per statement, labelled with its IR text.

    Edge labels are ``fallthrough``, ``branch``, ``case <k>``, ``default``
    and ``exceptional``.  An ``if`` whose target is also its fall-through
    successor gets two parallel edges.
    """
    cfg = build_cfg(body, with_exceptional_edges)
    labels = {id(s): i for i, s in enumerate(body.statements)}
    m = body.method
    lines = [f"digraph {dot_quote(f'{m.owner}.{m.name}:{m.signature}')} {{",
             '  node [shape=box, fontname="monospace"];']
    for i, s in enumerate(body.statements):
        lines.append(f"  n{i} [label={dot_quote(f'L{i}: ' + statement_text(s, labels))}];")
    case_keys = _case_keys(body)
    for src, dst, kind in cfg.edges:
        label = kind
        if kind == "case":
            label = f"case {case_keys[(id(src), id(dst))].pop(0)}"
        style = ", style=dashed" if kind == "exceptional" else ""
        lines.append(f"  n{labels[id(src)]} -> n{labels[id(dst)]} [label={dot_quote(label)}{style}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _case_keys(body: Body) -> dict[tuple[int, int], list[int]]:
    out: dict[tuple[int, int], list[int]] = {}
    for s in body.statements:
        if hasattr(s, "cases"):
            for k, t in s.cases():
                out.setdefault((id(s), id(t)), []).append(k)
    return out


@dataclass(frozen=True)
class CallEdge:
    caller: MethodRef
    site: Statement = field(compare=False)
    callee: MethodRef
    kind: str


@dataclass
class CallGraph:
    nodes: list[MethodRef]
    edges: list[CallEdge]
    internal: set[MethodRef]  # methods with a lifted body

    def is_external(self, m: MethodRef) -> bool:
        return m not in self.internal

    def out_degree(self, m: MethodRef) -> int:
        return sum(1 for e in self.edges if e.caller == m)


def build_call_graph(dex: DexFile | None, bodies: Iterable[Body]) -> CallGraph:
    """Declared-target call graph: one edge per invoke statement.

    ``dex`` adds methods that are defined in the file but were not lifted
    (abstract or native) as nodes.
    """
    bodies = list(bodies)
    internal = {b.method for b in bodies}
    nodes = set(internal)
    edges = []
    for b in sorted(bodies, key=lambda b: str(b.method)):
        for s in b.statements:
            if isinstance(s, Invoke):
                edges.append(CallEdge(b.method, s, s.method, s.kind))
                nodes.add(s.method)
    if dex is not None:
        for _cls, m in dex.iter_methods():
            if m.code is None:
                nodes.add(m.method)
    return CallGraph(sorted(nodes, key=str), edges, internal)


def callgraph_to_dot(cg: CallGraph) -> str:
    ids = {m: i for i, m in enumerate(cg.nodes)}
    lines = ["digraph callgraph {", '  node [shape=box, fontname="monospace"];']
    for m, i in ids.items():
        style = ", style=dashed" if cg.is_external(m) else ""
        lines.append(f"  m{i} [label={dot_quote(str(m))}{style}];")
    for e in cg.edges:
        lines.append(f"  m{ids[e.caller]} -> m{ids[e.callee]} [label={dot_quote(e.kind)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
