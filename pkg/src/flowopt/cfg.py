"""Control-flow graph and def-use machinery for UDF bodies.

Each retained statement is one node, identified by its line label. Edges
follow fallthrough order, ``goto`` targets, and both arms of conditional
jumps. Statements unreachable from the entry are pruned (with a
diagnostic) before any analysis runs: dead code cannot affect output.

Two relations are derived here:

* ``true_preds``: predecessors of a statement that are not also its
  descendants. Walking backwards over this relation leaves every loop
  after its body has been seen once, because back-edge sources are
  excluded; the relation is provably acyclic.
* def-use / use-def chains from a standard reaching-definitions pass over
  the full edge set (back edges included). Parameters count as defined at
  the header line; a use that a path can reach with no definition at all
  raises a possibly-uninitialized diagnostic.

Both structures are immutable after construction and safe to share.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .errors import Diagnostic
from .udf_ir import CondJump, Jump, Return, Statement, UdfBody, defined_var, used_vars

__all__ = ["Cfg", "Chains", "build_cfg", "true_preds", "compute_chains"]

# Internal pseudo-definition marking "no definition reaches here on some path".
_UNDEF = -1


@dataclass(frozen=True)
class Cfg:
    """Immutable CFG over the reachable statements of one UDF."""

    udf: UdfBody
    entry: int
    nodes: tuple[int, ...]  # retained lines, ascending
    succ: dict[int, tuple[int, ...]]
    pred: dict[int, tuple[int, ...]]
    # descendants[n]: lines reachable from n via one or more edges
    descendants: dict[int, frozenset[int]]
    warnings: tuple[Diagnostic, ...] = field(default=())

    def stmt(self, line: int) -> Statement:
        return self.udf.stmt_at(line)

    def statements(self) -> tuple[Statement, ...]:
        return tuple(self.udf.stmt_at(n) for n in self.nodes)

    def has_cycle(self) -> bool:
        return any(n in self.descendants[n] for n in self.nodes)


def _successor_lines(udf: UdfBody) -> dict[int, tuple[int, ...]]:
    lines = [s.line for s in udf.stmts]
    following = {line: lines[i + 1] if i + 1 < len(lines) else None for i, line in enumerate(lines)}
    succ: dict[int, tuple[int, ...]] = {}
    for s in udf.stmts:
        nxt = following[s.line]
        if isinstance(s, Return):
            targets: tuple[int, ...] = ()
        elif isinstance(s, Jump):
            targets = (s.target_line,)
        elif isinstance(s, CondJump):
            arms = {s.target_line}
            if nxt is not None:
                arms.add(nxt)
            targets = tuple(sorted(arms))
        else:
            targets = (nxt,) if nxt is not None else ()
        succ[s.line] = targets
    return succ


def build_cfg(udf: UdfBody) -> Cfg:
    """Build the CFG, pruning statements the entry cannot reach."""
    full_succ = _successor_lines(udf)
    entry = udf.stmts[0].line

    reachable: set[int] = set()
    stack = [entry]
    while stack:
        n = stack.pop()
        if n in reachable:
            continue
        reachable.add(n)
        stack.extend(full_succ[n])

    warnings = tuple(
        Diagnostic("unreachable statement removed", s.line)
        for s in udf.stmts
        if s.line not in reachable
    )

    nodes = tuple(s.line for s in udf.stmts if s.line in reachable)
    succ = {n: tuple(t for t in full_succ[n] if t in reachable) for n in nodes}
    pred: dict[int, list[int]] = {n: [] for n in nodes}
    for n in nodes:
        for t in succ[n]:
            pred[t].append(n)

    descendants: dict[int, frozenset[int]] = {}
    for n in nodes:
        seen: set[int] = set()
        stack = list(succ[n])
        while stack:
            m = stack.pop()
            if m in seen:
                continue
            seen.add(m)
            stack.extend(succ[m])
        descendants[n] = frozenset(seen)

    return Cfg(
        udf=udf,
        entry=entry,
        nodes=nodes,
        succ=succ,
        pred={n: tuple(sorted(ps)) for n, ps in pred.items()},
        descendants=descendants,
        warnings=warnings,
    )


def true_preds(cfg: Cfg, s: Statement | int) -> frozenset[int]:
    """Predecessors of ``s`` that are not reachable from ``s``.

    For a loop header this drops the back-edge source, so a backward walk
    driven by this relation exits every loop after one pass over its body.
    """
    line = s if isinstance(s, int) else s.line
    if line not in cfg.succ:
        raise KeyError(f"line {line} is not a CFG node")
    desc = cfg.descendants[line]
    return frozenset(p for p in cfg.pred[line] if p not in desc)


@dataclass(frozen=True)
class Chains:
    """Def-use and use-def chains, keyed by (line, variable).

    ``d in use_def[(s, v)]`` iff ``s in def_use[(d, v)]``. Parameter
    definitions use the UDF header line as their defining line.
    """

    def_use: dict[tuple[int, str], frozenset[int]]
    use_def: dict[tuple[int, str], frozenset[int]]
    warnings: tuple[Diagnostic, ...] = field(default=())

    def def_use_of(self, line: int, var: str) -> frozenset[int]:
        return self.def_use.get((line, var), frozenset())

    def use_def_of(self, line: int, var: str) -> frozenset[int]:
        return self.use_def.get((line, var), frozenset())


def compute_chains(cfg: Cfg) -> Chains:
    """Reaching definitions over the full edge set, including back edges."""
    udf = cfg.udf
    nodes = cfg.nodes

    all_vars: set[str] = set(udf.params)
    for line in nodes:
        s = cfg.stmt(line)
        all_vars.update(used_vars(s))
        d = defined_var(s)
        if d:
            all_vars.add(d)

    # Definitions are (line, var); the header defines every parameter and
    # _UNDEF seeds every other variable so uninitialized paths are visible.
    entry_defs = frozenset(
        {(udf.header_line, p) for p in udf.params}
        | {(_UNDEF, v) for v in all_vars if v not in udf.params}
    )

    gen: dict[int, frozenset[tuple[int, str]]] = {}
    kill_var: dict[int, str | None] = {}
    for line in nodes:
        d = defined_var(cfg.stmt(line))
        gen[line] = frozenset({(line, d)}) if d else frozenset()
        kill_var[line] = d

    in_sets: dict[int, frozenset[tuple[int, str]]] = {n: frozenset() for n in nodes}
    out_sets: dict[int, frozenset[tuple[int, str]]] = {n: frozenset() for n in nodes}

    work = deque(nodes)
    queued = set(nodes)
    while work:
        n = work.popleft()
        queued.discard(n)
        incoming = entry_defs if n == cfg.entry else frozenset()
        for p in cfg.pred[n]:
            incoming |= out_sets[p]
        kv = kill_var[n]
        outgoing = gen[n] | frozenset(d for d in incoming if d[1] != kv)
        in_sets[n] = incoming
        if outgoing != out_sets[n]:
            out_sets[n] = outgoing
            for t in cfg.succ[n]:
                if t not in queued:
                    work.append(t)
                    queued.add(t)

    def_use: dict[tuple[int, str], set[int]] = {}
    use_def: dict[tuple[int, str], frozenset[int]] = {}
    warnings: list[Diagnostic] = []
    for line in nodes:
        for v in used_vars(cfg.stmt(line)):
            reaching = {d for (d, var) in in_sets[line] if var == v}
            real = frozenset(d for d in reaching if d != _UNDEF)
            use_def[(line, v)] = real
            for d in real:
                def_use.setdefault((d, v), set()).add(line)
            if _UNDEF in reaching:
                verb = "is" if not real else "may be"
                warnings.append(Diagnostic(f"variable {v} {verb} used before definition", line))

    return Chains(
        def_use={k: frozenset(v) for k, v in def_use.items()},
        use_def=use_def,
        warnings=tuple(warnings),
    )
