"""Dataflow plans: sources, operators, sinks, schemas, and annotation.

A plan is a DAG whose channels carry records with globally unique field
numbers. Each operator is a shell (map, reduce, match, cross, cogroup)
around a UDF; shells determine arity, key usage, and how input records
are grouped into invocations.

The plan text format ("plan DSL") is line-oriented:

    source Src1 fields [0,1]
    udf f1 {
      10: f1(InRec $ir)
      ...
    }
    op M1 = map(f1) from Src1
    op J  = match(f3, keys [0],[3]) from M1, M2
    sink Snk1 consumes [0,1,2,3,4,5] from J

``udf NAME from "file.udf"`` includes a UDF from a file relative to the
plan file. Full grammar in docs/formats.md.

Schema propagation walks the DAG in topological order and computes, per
channel, the set of fields guaranteed present on crossing records, from
each operator's extracted property sets: fields of origin inputs flow
through, copied and explicitly written fields appear, projected fields
are removed. Write sets are the only position-dependent quantity and are
recomputed from these schemas wherever an operator is placed.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Union

from .analysis import PropertySets, UdfAnalysis, analyze_udf, compute_write_set
from .errors import Diagnostic, PlanError
from .udf_ir import UdfBody, parse_udf, print_udf

__all__ = [
    "Sof",
    "Source",
    "Operator",
    "Sink",
    "PlanGraph",
    "AnnotatedPlan",
    "OpInfo",
    "AnalysisCache",
    "parse_plan",
    "print_plan",
    "propagate_schemas",
    "annotate",
]

Edge = tuple[str, str, int]  # producer, consumer, input slot (1-based)


class Sof(enum.Enum):
    MAP = "map"
    REDUCE = "reduce"
    MATCH = "match"
    CROSS = "cross"
    COGROUP = "cogroup"

    @property
    def arity(self) -> int:
        return 1 if self in (Sof.MAP, Sof.REDUCE) else 2

    @property
    def keyed(self) -> bool:
        return self in (Sof.REDUCE, Sof.MATCH, Sof.COGROUP)

    @property
    def grouping(self) -> bool:
        """Invocations see groups of records rather than single ones."""
        return self in (Sof.REDUCE, Sof.COGROUP)


@dataclass(frozen=True)
class Source:
    name: str
    fields: frozenset[int]


@dataclass(frozen=True)
class Operator:
    name: str
    sof: Sof
    keys: tuple[tuple[int, ...], ...]  # per input slot; empty for map/cross
    udf: UdfBody
    inputs: tuple[str, ...]

    def key_fields(self) -> frozenset[int]:
        return frozenset(f for ks in self.keys for f in ks)


@dataclass(frozen=True)
class Sink:
    name: str
    consumes: frozenset[int]
    input: str


Node = Union[Source, Operator, Sink]


@dataclass(frozen=True)
class PlanGraph:
    """Immutable plan DAG; rewrites produce new graphs via ``with_nodes``."""

    nodes: dict[str, Node]

    def node(self, name: str) -> Node:
        try:
            return self.nodes[name]
        except KeyError:
            raise PlanError(f"no node named {name!r}") from None

    def sources(self) -> list[Source]:
        return [n for n in self.nodes.values() if isinstance(n, Source)]

    def operators(self) -> list[Operator]:
        return [n for n in self.nodes.values() if isinstance(n, Operator)]

    def sinks(self) -> list[Sink]:
        return [n for n in self.nodes.values() if isinstance(n, Sink)]

    def inputs_of(self, name: str) -> tuple[str, ...]:
        n = self.node(name)
        if isinstance(n, Operator):
            return n.inputs
        if isinstance(n, Sink):
            return (n.input,)
        return ()

    def edges(self) -> list[Edge]:
        out = []
        for name in self.nodes:
            for slot, producer in enumerate(self.inputs_of(name), start=1):
                out.append((producer, name, slot))
        return out

    def consumers(self, name: str) -> list[tuple[str, int]]:
        return [(c, slot) for p, c, slot in self.edges() if p == name]

    def topo_order(self) -> list[str]:
        indeg = {name: len(self.inputs_of(name)) for name in self.nodes}
        ready = sorted(name for name, d in indeg.items() if d == 0)
        order: list[str] = []
        while ready:
            n = ready.pop(0)
            order.append(n)
            changed = False
            for c, _slot in self.consumers(n):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
                    changed = True
            if changed:
                ready.sort()
        if len(order) != len(self.nodes):
            raise PlanError("plan graph contains a cycle")
        return order

    def with_nodes(self, **replacements: Node) -> "PlanGraph":
        nodes = dict(self.nodes)
        nodes.update(replacements)
        return PlanGraph(nodes)


def _validate_structure(plan: PlanGraph) -> None:
    for name, node in plan.nodes.items():
        for producer in plan.inputs_of(name):
            upstream = plan.node(producer)
            if isinstance(upstream, Sink):
                raise PlanError(f"{name} reads from sink {producer}")
        if isinstance(node, Operator):
            if len(node.inputs) != node.sof.arity:
                raise PlanError(
                    f"{node.sof.value} operator {name} needs {node.sof.arity} "
                    f"input(s), got {len(node.inputs)}"
                )
            if node.udf.arity != node.sof.arity:
                raise PlanError(
                    f"UDF {node.udf.name} takes {node.udf.arity} record(s) but "
                    f"{node.sof.value} operator {name} supplies {node.sof.arity}"
                )
            if node.sof.keyed:
                if len(node.keys) != node.sof.arity or any(not ks for ks in node.keys):
                    raise PlanError(
                        f"{node.sof.value} operator {name} needs one non-empty "
                        f"key list per input"
                    )
            elif node.keys:
                raise PlanError(f"{node.sof.value} operator {name} cannot have keys")

    seen_fields: dict[int, str] = {}
    for src in plan.sources():
        for f in src.fields:
            if f in seen_fields:
                raise PlanError(
                    f"field {f} declared by both {seen_fields[f]} and {src.name}; "
                    f"source fields must be globally unique"
                )
            seen_fields[f] = src.name

    plan.topo_order()  # raises on cycles


# ---------------------------------------------------------------------------
# DSL parsing and printing

_FIELDLIST = r"\[\s*(?:\d+\s*(?:,\s*\d+\s*)*)?\]"
_RE_SOURCE = re.compile(rf"^source\s+(\w+)\s+fields\s*({_FIELDLIST})\s*$")
_RE_SINK = re.compile(rf"^sink\s+(\w+)\s+consumes\s*({_FIELDLIST})\s+from\s+(\w+)\s*$")
_RE_OP = re.compile(
    rf"^op\s+(\w+)\s*=\s*(map|reduce|match|cross|cogroup)\s*\(\s*(\w+)\s*"
    rf"(?:,\s*keys\s*({_FIELDLIST})\s*(?:,\s*({_FIELDLIST}))?)?\s*\)"
    rf"\s+from\s+(\w+)(?:\s*,\s*(\w+))?\s*$"
)
_RE_UDF_OPEN = re.compile(r"^udf\s+(\w+)\s*\{\s*$")
_RE_UDF_FILE = re.compile(r"^udf\s+(\w+)\s+from\s+\"([^\"]+)\"\s*$")


def _parse_fieldlist(text: str) -> tuple[int, ...]:
    inner = text.strip()[1:-1].strip()
    if not inner:
        return ()
    return tuple(int(tok.strip()) for tok in inner.split(","))


def parse_plan(text: str, base_dir: str | Path | None = None) -> PlanGraph:
    """Parse plan DSL text into a validated :class:`PlanGraph`.

    Declarations may reference nodes and UDFs defined later in the file.
    """
    base = Path(base_dir) if base_dir is not None else None
    udfs: dict[str, UdfBody] = {}
    pending: list[tuple[int, str]] = []  # (line number, declaration)

    lines = text.splitlines()
    i = 0
    while i < len(lines):
        raw = lines[i]
        stripped = raw.split("#", 1)[0].strip()
        i += 1
        if not stripped:
            continue
        m = _RE_UDF_OPEN.match(stripped)
        if m:
            name = m.group(1)
            block: list[str] = []
            opened_at = i
            while i < len(lines):
                inner = lines[i]
                if inner.split("#", 1)[0].strip() == "}":
                    break
                block.append(inner)
                i += 1
            else:
                raise PlanError(f"line {opened_at}: unterminated udf block for {name}")
            i += 1
            body = parse_udf("\n".join(block))
            if body.name != name:
                raise PlanError(
                    f"udf block {name} contains a UDF whose header says {body.name}"
                )
            if name in udfs:
                raise PlanError(f"duplicate udf {name}")
            udfs[name] = body
            continue
        m = _RE_UDF_FILE.match(stripped)
        if m:
            name, rel = m.groups()
            path = Path(rel) if base is None else base / rel
            try:
                body = parse_udf(path.read_text())
            except OSError as exc:
                raise PlanError(f"cannot read udf file {path}: {exc}") from exc
            if body.name != name:
                raise PlanError(f"{path} defines {body.name}, expected {name}")
            if name in udfs:
                raise PlanError(f"duplicate udf {name}")
            udfs[name] = body
            continue
        pending.append((i, stripped))

    nodes: dict[str, Node] = {}

    def add(node: Node) -> None:
        if node.name in nodes:
            raise PlanError(f"duplicate node name {node.name}")
        nodes[node.name] = node

    for line_no, decl in pending:
        if m := _RE_SOURCE.match(decl):
            name, fl = m.groups()
            add(Source(name, frozenset(_parse_fieldlist(fl))))
        elif m := _RE_SINK.match(decl):
            name, fl, producer = m.groups()
            add(Sink(name, frozenset(_parse_fieldlist(fl)), producer))
        elif m := _RE_OP.match(decl):
            name, sof_name, udf_name, keys1, keys2, in1, in2 = m.groups()
            sof = Sof(sof_name)
            if udf_name not in udfs:
                raise PlanError(f"line {line_no}: operator {name} uses unknown udf {udf_name}")
            keys: tuple[tuple[int, ...], ...] = ()
            if keys1 is not None:
                keys = (_parse_fieldlist(keys1),)
                if keys2 is not None:
                    keys += (_parse_fieldlist(keys2),)
            inputs = (in1,) if in2 is None else (in1, in2)
            add(Operator(name, sof, keys, udfs[udf_name], inputs))
        else:
            raise PlanError(f"line {line_no}: unrecognized plan declaration: {decl}")

    plan = PlanGraph(nodes)
    for name in plan.nodes:
        for producer in plan.inputs_of(name):
            if producer not in plan.nodes:
                raise PlanError(f"{name} reads from undefined node {producer}")
    _validate_structure(plan)
    return plan


def _fmt_fieldlist(fields: Iterable[int]) -> str:
    return "[" + ",".join(str(f) for f in sorted(fields)) + "]"


def print_plan(plan: PlanGraph) -> str:
    """Plan DSL text; reparsing yields an equal graph."""
    out: list[str] = []
    order = plan.topo_order()
    for name in order:
        n = plan.nodes[name]
        if isinstance(n, Source):
            out.append(f"source {n.name} fields {_fmt_fieldlist(n.fields)}")

    printed: set[str] = set()
    for name in order:
        n = plan.nodes[name]
        if isinstance(n, Operator) and n.udf.name not in printed:
            printed.add(n.udf.name)
            out.append(f"udf {n.udf.name} {{")
            out.extend("  " + line for line in print_udf(n.udf).splitlines())
            out.append("}")

    for name in order:
        n = plan.nodes[name]
        if isinstance(n, Operator):
            keys = "".join(", keys " + _fmt_fieldlist(ks) for ks in n.keys)
            out.append(
                f"op {n.name} = {n.sof.value}({n.udf.name}{keys}) "
                f"from {', '.join(n.inputs)}"
            )
        elif isinstance(n, Sink):
            out.append(
                f"sink {n.name} consumes {_fmt_fieldlist(n.consumes)} from {n.input}"
            )
    return "\n".join(out)


# ---------------------------------------------------------------------------
# Schemas and annotation


def _node_schemas(
    plan: PlanGraph, props: Mapping[str, PropertySets]
) -> dict[str, frozenset[int]]:
    """Output schema of every node, walking the DAG in topological order."""
    out_schema: dict[str, frozenset[int]] = {}
    for name in plan.topo_order():
        node = plan.nodes[name]
        if isinstance(node, Source):
            out_schema[name] = node.fields
        elif isinstance(node, Operator):
            in_schemas = [out_schema[p] for p in node.inputs]
            for slot, ks in enumerate(node.keys):
                missing = set(ks) - set(in_schemas[slot])
                if missing:
                    raise PlanError(
                        f"key field {sorted(missing)[0]} of {name} (input {slot + 1}) "
                        f"is not in that input's schema"
                    )
            ps = props[name]
            base: set[int] = set()
            for i in ps.O:
                base |= in_schemas[i - 1]
            out_schema[name] = frozenset((base | ps.C | ps.E) - ps.P)
        else:
            incoming = out_schema[node.input]
            missing = node.consumes - incoming
            if missing:
                f = sorted(missing)[0]
                culprit = _find_field_dropper(plan, out_schema, node.input, f)
                raise PlanError(
                    f"field loss: sink {name} consumes field {f} which is not "
                    f"guaranteed on its input ({culprit})"
                )
            out_schema[name] = incoming
    return out_schema


def propagate_schemas(
    plan: PlanGraph, props: Mapping[str, PropertySets]
) -> dict[Edge, frozenset[int]]:
    """Compute guaranteed-present fields on every channel, source to sink.

    ``props`` maps operator names to their UDFs' extracted property sets.
    Raises :class:`PlanError` when a sink consumes a field its incoming
    schema cannot guarantee, naming the operator that dropped it.
    """
    out_schema = _node_schemas(plan, props)
    return {
        (producer, consumer, slot): out_schema[producer]
        for producer, consumer, slot in plan.edges()
    }


def _find_field_dropper(
    plan: PlanGraph, out_schema: Mapping[str, frozenset[int]], start: str, f: int
) -> str:
    seen = set()
    stack = [start]
    while stack:
        name = stack.pop()
        if name in seen:
            continue
        seen.add(name)
        for producer in plan.inputs_of(name):
            if f in out_schema.get(producer, frozenset()) and f not in out_schema[name]:
                return f"dropped by operator {name}"
            stack.append(producer)
    return "never produced by any upstream node"


@dataclass(frozen=True)
class OpInfo:
    """Per-operator annotation: UDF-level sets plus position-dependent data."""

    analysis: UdfAnalysis
    input_fields: dict[int, frozenset[int]]  # input id -> arriving schema
    write_set: frozenset[int]
    read_set: frozenset[int]  # UDF reads plus the shell's key fields

    @property
    def sets(self) -> PropertySets:
        return self.analysis.sets


@dataclass(frozen=True)
class AnnotatedPlan:
    plan: PlanGraph
    info: dict[str, OpInfo]
    schemas: dict[Edge, frozenset[int]]
    out_schema: dict[str, frozenset[int]]
    warnings: tuple[Diagnostic, ...]

    def sink_schemas(self) -> dict[str, frozenset[int]]:
        return {s.name: self.out_schema[s.name] for s in self.plan.sinks()}


class AnalysisCache:
    """Memoizes position-independent UDF analyses across plan variants."""

    def __init__(self):
        self._by_body: dict[UdfBody, UdfAnalysis] = {}

    def analysis_of(self, udf: UdfBody) -> UdfAnalysis:
        found = self._by_body.get(udf)
        if found is None:
            found = analyze_udf(udf)
            self._by_body[udf] = found
        return found


def annotate(plan: PlanGraph, cache: AnalysisCache | None = None) -> AnnotatedPlan:
    """Analyze every UDF once, propagate schemas, and place write sets.

    Re-annotating an unchanged plan is a fixpoint: all results are pure
    functions of the plan.
    """
    cache = cache or AnalysisCache()
    analyses = {op.name: cache.analysis_of(op.udf) for op in plan.operators()}
    props = {name: a.sets for name, a in analyses.items()}
    out_schema = _node_schemas(plan, props)
    schemas = {
        (producer, consumer, slot): out_schema[producer]
        for producer, consumer, slot in plan.edges()
    }

    warnings: list[Diagnostic] = []
    info: dict[str, OpInfo] = {}
    for op in plan.operators():
        a = analyses[op.name]
        input_fields = {
            slot: out_schema[producer]
            for slot, producer in enumerate(op.inputs, start=1)
        }
        for slot, wanted in a.reads_by_input.items():
            outside = wanted - input_fields[slot]
            if outside:
                warnings.append(
                    Diagnostic(
                        f"operator {op.name} reads field(s) "
                        f"{sorted(outside)} not guaranteed on input {slot}"
                    )
                )
        for w in a.warnings:
            warnings.append(Diagnostic(f"{op.name}: {w.message}", w.line))
        info[op.name] = OpInfo(
            analysis=a,
            input_fields=input_fields,
            write_set=compute_write_set(a.sets, input_fields),
            read_set=a.sets.R | op.key_fields(),
        )

    return AnnotatedPlan(
        plan=plan,
        info=info,
        schemas=schemas,
        out_schema=out_schema,
        warnings=tuple(warnings),
    )
