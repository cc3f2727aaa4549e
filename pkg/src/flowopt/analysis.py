"""Field-level property extraction for UDFs.

For each UDF the pass derives five sets that together bound its effect on
records, conservatively (reads and writes are over-approximated, verbatim
pass-through is under-approximated):

* ``R`` read set: input fields whose values can influence the output;
* ``O`` origin set: input ids (1 or 2) whose record is copied wholesale
  into the output on every path;
* ``E`` explicit-modification set: fields written with computed values;
* ``C`` copy set: fields copied verbatim, same position, from an input;
* ``P`` projection set: fields removed by setting them to null.

``R`` falls out of the def-use chains: a ``getField`` whose result is
never used cannot influence anything. The other four come from a
backward walk from every ``emit``, following true predecessors only, so
loop bodies contribute exactly once; results are memoized per
(statement, output record) and path results are folded pairwise with
:func:`merge`.

The write set is position-dependent: ``W = E | P`` plus, for every input
not in ``O``, the input's fields that were not explicitly copied. Callers
supply the fields actually present at the UDF's position in a plan.

Emit-cardinality bounds come from a separate textual pass: an emit is
skippable (lower bound 0) when an earlier statement can jump past it, and
repeatable (upper bound unbounded) when a later statement can jump back
to it or before it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import AbstractSet, Mapping

from .cfg import Cfg, Chains, build_cfg, compute_chains, true_preds
from .errors import AnalysisError, Diagnostic
from .udf_ir import (
    CondJump,
    Copy,
    Create,
    Emit,
    GetField,
    Jump,
    Return,
    SetField,
    UdfBody,
    UnionStmt,
)

__all__ = [
    "PropertySets",
    "EcBounds",
    "MemoTable",
    "AnalysisContext",
    "UdfAnalysis",
    "compute_read_set",
    "reads_by_input",
    "derive_field_inputs",
    "visit_udf",
    "visit_stmt",
    "merge",
    "compute_write_set",
    "ec_bounds",
    "analyze_udf",
]

SetTuple = tuple[frozenset[int], frozenset[int], frozenset[int], frozenset[int]]

_EMPTY: SetTuple = (frozenset(), frozenset(), frozenset(), frozenset())


@dataclass(frozen=True)
class PropertySets:
    """The five extracted field sets of one UDF."""

    R: frozenset[int]
    O: frozenset[int]
    E: frozenset[int]
    C: frozenset[int]
    P: frozenset[int]


@dataclass(frozen=True)
class EcBounds:
    """Records emitted per invocation: lower in {0,1}, upper in {1, inf}."""

    lower: int
    upper: float

    def __post_init__(self):
        assert self.lower <= self.upper

    def __str__(self) -> str:
        hi = "inf" if math.isinf(self.upper) else str(int(self.upper))
        return f"({self.lower}, {hi})"


class MemoTable:
    """Memoized results of the backward walk, keyed by (line, record var).

    ``expansions`` counts non-memoized visits; the walk expands each key at
    most once, so the count is bounded by #statements x #emits (trivially,
    by #statements when one table serves a whole UDF).
    """

    def __init__(self):
        self.visited: set[tuple[int, str]] = set()
        self.memo_sets: dict[tuple[int, str], SetTuple] = {}
        self.expansions = 0

    def seen(self, key: tuple[int, str]) -> bool:
        return key in self.visited

    def result(self, key: tuple[int, str]) -> SetTuple:
        return self.memo_sets[key]

    def enter(self, key: tuple[int, str]) -> None:
        self.visited.add(key)
        self.expansions += 1

    def store(self, key: tuple[int, str], value: SetTuple) -> SetTuple:
        self.memo_sets[key] = value
        return value


@dataclass
class AnalysisContext:
    """Shared state for one UDF's backward walk."""

    cfg: Cfg
    chains: Chains
    memo: MemoTable = field(default_factory=MemoTable)
    # field id -> input id (1/2) that carries it; fields missing here have
    # an unknown owner and never qualify for the merge rescue clause.
    field_inputs: Mapping[int, int] = field(default_factory=dict)
    # current backward path, entry-point first; for error reporting only
    path: list[int] = field(default_factory=list)


def compute_read_set(udf: UdfBody, chains: Chains) -> frozenset[int]:
    """Fields read into a variable that is subsequently used somewhere."""
    reads = set()
    for s in udf.stmts:
        if isinstance(s, GetField) and chains.def_use_of(s.line, s.target):
            reads.add(s.field)
    return frozenset(reads)


def reads_by_input(udf: UdfBody, chains: Chains) -> dict[int, frozenset[int]]:
    """Read set split by the input record each field was read from."""
    per: dict[int, set[int]] = {i: set() for i in range(1, udf.arity + 1)}
    for s in udf.stmts:
        if isinstance(s, GetField) and chains.def_use_of(s.line, s.target):
            per[udf.input_id(s.rec)].add(s.field)
    return {i: frozenset(v) for i, v in per.items()}


def derive_field_inputs(udf: UdfBody) -> dict[int, int]:
    """Best-effort field -> input-id map from the UDF's own getFields.

    A field read from both inputs (possible only in hand-written bodies,
    since plans number fields globally) is dropped as ambiguous.
    """
    owners: dict[int, int] = {}
    ambiguous: set[int] = set()
    for s in udf.stmts:
        if isinstance(s, GetField):
            owner = udf.input_id(s.rec)
            if owners.setdefault(s.field, owner) != owner:
                ambiguous.add(s.field)
    for f in ambiguous:
        del owners[f]
    return owners


def merge(
    a: SetTuple, b: SetTuple, field_inputs: Mapping[int, int] | None = None
) -> SetTuple:
    """Fold two path results into one conservative tuple.

    Origins intersect and explicit/projected fields union. A copied field
    survives if both paths copied it, or if one path copied it while the
    other carries its whole input record through the origin set.
    """
    field_inputs = field_inputs or {}
    o1, e1, c1, p1 = a
    o2, e2, c2, p2 = b
    c = (c1 & c2) \
        | {x for x in c1 if field_inputs.get(x) in o2} \
        | {x for x in c2 if field_inputs.get(x) in o1}
    return (o1 & o2, e1 | e2, frozenset(c), p1 | p2)


def _fold(results: list[SetTuple], field_inputs: Mapping[int, int]) -> SetTuple:
    acc = results[0]
    for r in results[1:]:
        acc = merge(acc, r, field_inputs)
    return acc


def visit_stmt(line: int, or_var: str, ctx: AnalysisContext) -> SetTuple:
    """Backward walk from one statement, tracking output record ``or_var``.

    Returns the (O, E, C, P) contribution of all paths that reach ``line``.
    Raises :class:`AnalysisError` if some path reaches the UDF entry
    without ever creating ``or_var``.
    """
    key = (line, or_var)
    memo = ctx.memo
    if memo.seen(key):
        return memo.result(key)
    memo.enter(key)

    stmt = ctx.cfg.stmt(line)
    ctx.path.append(line)
    try:
        # Base cases: the statement that brings or_var into existence.
        if isinstance(stmt, Create) and stmt.rec == or_var:
            return memo.store(key, _EMPTY)
        if isinstance(stmt, Copy) and stmt.rec == or_var:
            origin = frozenset({ctx.cfg.udf.input_id(stmt.src)})
            return memo.store(key, (origin, frozenset(), frozenset(), frozenset()))

        preds = sorted(true_preds(ctx.cfg, line))
        if not preds:
            trail = " -> ".join(str(n) for n in ctx.path)
            raise AnalysisError(
                f"emit of undefined output record {or_var}: backward path "
                f"{trail} reaches the entry without create/copy"
            )
        folded = _fold([visit_stmt(p, or_var, ctx) for p in preds], ctx.field_inputs)
        o, e, c, p = folded

        if isinstance(stmt, UnionStmt) and stmt.rec == or_var:
            o = o | {ctx.cfg.udf.input_id(stmt.src)}
        elif isinstance(stmt, SetField) and stmt.rec == or_var:
            if stmt.src is None:
                p = p | {stmt.field}
            else:
                defs = ctx.chains.use_def_of(line, stmt.src)
                if defs and all(
                    isinstance(d := ctx.cfg.stmt(dl), GetField) and d.field == stmt.field
                    for dl in defs
                ):
                    c = c | {stmt.field}
                else:
                    e = e | {stmt.field}
        return memo.store(key, (o, e, c, p))
    finally:
        ctx.path.pop()


def visit_udf(
    udf: UdfBody,
    cfg: Cfg,
    chains: Chains,
    field_inputs: Mapping[int, int] | None = None,
    memo: MemoTable | None = None,
) -> PropertySets:
    """Run the full extraction over every emit of the UDF.

    Emits are visited in ascending line order and their results folded with
    :func:`merge`; commutativity makes the outcome order-independent, the
    fixed order keeps diagnostics reproducible.
    """
    if field_inputs is None:
        field_inputs = derive_field_inputs(udf)
    ctx = AnalysisContext(
        cfg=cfg, chains=chains, memo=memo or MemoTable(), field_inputs=field_inputs
    )
    emit_lines = [s.line for s in cfg.statements() if isinstance(s, Emit)]
    if not emit_lines:
        raise AnalysisError(f"UDF {udf.name} has no reachable emit")
    results = [visit_stmt(e, cfg.stmt(e).rec, ctx) for e in emit_lines]
    o, e, c, p = _fold(results, field_inputs)
    return PropertySets(R=compute_read_set(udf, chains), O=o, E=e, C=c, P=p)


def compute_write_set(
    sets: PropertySets, input_fields: Mapping[int, AbstractSet[int]]
) -> frozenset[int]:
    """Fields whose value may differ from the corresponding input field.

    ``input_fields`` maps each input id to the fields present on records
    arriving at the UDF's position; everything an input carries is
    considered overwritten unless the whole record flows through (its id
    in ``O``) or the field was explicitly copied (in ``C``).
    """
    w = set(sets.E | sets.P)
    for i, fields in input_fields.items():
        if i not in sets.O:
            w |= set(fields) - sets.C
    return frozenset(w)


def _jump_targets(stmt) -> tuple[int, ...]:
    if isinstance(stmt, Jump):
        return (stmt.target_line,)
    if isinstance(stmt, CondJump):
        return (stmt.target_line,)
    return ()


def ec_bounds(udf: UdfBody, cfg: Cfg) -> tuple[EcBounds, tuple[Diagnostic, ...]]:
    """Per-invocation emit-count bounds, combined over all emit statements.

    Per emit ``e``: the lower bound is 1 unless an earlier statement can
    jump past ``e`` (a ``return`` before ``e`` counts: it leaves the body
    and skips ``e``); the upper bound is 1 unless a later statement can
    jump back to ``e`` or before it. The UDF bound takes the highest lower
    and highest upper bound over all emits. That combination understates
    the total when several emits can occur on one path, so that situation
    is flagged with a diagnostic instead of silently reported as exact.
    """
    stmts = cfg.statements()
    emit_lines = [s.line for s in stmts if isinstance(s, Emit)]

    lowers: list[int] = []
    uppers: list[float] = []
    for e in emit_lines:
        skippable = any(
            s.line < e and (
                isinstance(s, Return)
                or any(t > e for t in _jump_targets(s))
            )
            for s in stmts
        )
        repeatable = any(
            s.line > e and any(t <= e for t in _jump_targets(s)) for s in stmts
        )
        lowers.append(0 if skippable else 1)
        uppers.append(math.inf if repeatable else 1)

    bounds = EcBounds(lower=max(lowers), upper=max(uppers))

    warnings: list[Diagnostic] = []
    if not math.isinf(bounds.upper) and len(emit_lines) > 1:
        co_reachable = any(
            b in cfg.descendants[a] for a in emit_lines for b in emit_lines if a != b
        )
        if co_reachable:
            warnings.append(
                Diagnostic(
                    "multiple emits can occur in one invocation; the upper "
                    "cardinality bound counts each emit site at most once"
                )
            )
    return bounds, tuple(warnings)


@dataclass(frozen=True)
class UdfAnalysis:
    """Everything the position-independent pass knows about one UDF."""

    udf: UdfBody
    sets: PropertySets
    ec: EcBounds
    reads_by_input: dict[int, frozenset[int]]
    field_inputs: dict[int, int]
    expansions: int
    warnings: tuple[Diagnostic, ...]

    def write_set(self, input_fields: Mapping[int, AbstractSet[int]]) -> frozenset[int]:
        return compute_write_set(self.sets, input_fields)


def analyze_udf(
    udf: UdfBody, field_inputs: Mapping[int, int] | None = None
) -> UdfAnalysis:
    """CFG + chains + property sets + cardinality bounds for one UDF."""
    cfg = build_cfg(udf)
    chains = compute_chains(cfg)
    if field_inputs is None:
        field_inputs = derive_field_inputs(udf)
    memo = MemoTable()
    sets = visit_udf(udf, cfg, chains, field_inputs, memo)
    ec, ec_warnings = ec_bounds(udf, cfg)
    return UdfAnalysis(
        udf=udf,
        sets=sets,
        ec=ec,
        reads_by_input=reads_by_input(udf, chains),
        field_inputs=dict(field_inputs),
        expansions=memo.expansions,
        warnings=cfg.warnings + chains.warnings + ec_warnings,
    )
