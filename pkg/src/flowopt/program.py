"""Lowering of UDF bodies to a flat numeric form for fast execution.

Every statement becomes exactly one fixed-width instruction over dense
indices: scalars (variables plus a pool of preloaded constants) live in a
register file, records in slots (input parameters first), and fields are
remapped onto a dense universe supplied by the caller. Both execution
kernels, the compiled one (flowopt._kernel) and the pure-Python fallback
(flowopt._kernel_py), interpret this same form, so semantics are defined
once here and the kernels only differ in speed.

Instruction layout: (opcode, a, b, c, d) int32 columns, plus a parallel
array mapping each pc back to its source line.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import udf_ir as ir

__all__ = ["Program", "compile_udf", "STATUS_MESSAGES"]

# Opcodes
OP_GETFIELD = 0  # a=dst scalar, b=rec slot, c=field idx
OP_SETFIELD = 1  # a=rec slot, b=field idx, c=src scalar
OP_SETNULL = 2   # a=rec slot, b=field idx
OP_CREATE = 3    # a=rec slot
OP_COPY = 4      # a=dst slot, b=src slot
OP_UNION = 5     # a=dst slot, b=src slot
OP_EMIT = 6      # a=rec slot
OP_MOV = 7       # a=dst scalar, b=src scalar
OP_BIN = 8       # a=dst scalar, b=binop, c=lhs scalar, d=rhs scalar
OP_CJMP = 9      # a=cond scalar, b=target pc
OP_JMP = 10      # a=target pc
OP_RET = 11

BINOP_CODES = {"+": 0, "-": 1, "*": 2, "<": 3, "<=": 4, ">": 5, ">=": 6, "==": 7, "!=": 8}

# Run statuses shared by both kernels
OK = 0
MISSING_FIELD = 1
UNCREATED_RECORD = 2
UNDEF_VAR = 3
STEP_LIMIT = 4

STATUS_MESSAGES = {
    MISSING_FIELD: "getField on a field absent from the record",
    UNCREATED_RECORD: "operation on an output record before create/copy",
    UNDEF_VAR: "variable used before assignment",
    STEP_LIMIT: "step limit exceeded; the UDF may not terminate",
}


@dataclass(frozen=True)
class Program:
    """A UDF lowered against a fixed field universe."""

    udf: ir.UdfBody
    field_ids: tuple[int, ...]          # dense index -> global field id
    field_index: dict[int, int]         # global field id -> dense index
    n_scalars: int
    n_records: int                      # input slots [0, arity) come first
    code: np.ndarray                    # int32 [n_instr, 5]
    lines: np.ndarray                   # int32 [n_instr]
    init_vals: np.ndarray               # int64 [n_scalars], constants preloaded
    init_defined: np.ndarray            # uint8 [n_scalars]

    @property
    def arity(self) -> int:
        return self.udf.arity

    @property
    def n_fields(self) -> int:
        return len(self.field_ids)

    def line_of_pc(self, pc: int) -> int:
        return int(self.lines[pc])


def mentioned_fields(udf: ir.UdfBody) -> frozenset[int]:
    """Every field id that appears in the UDF text."""
    out = set()
    for s in udf.stmts:
        if isinstance(s, (ir.GetField, ir.SetField)):
            out.add(s.field)
    return frozenset(out)


def compile_udf(udf: ir.UdfBody, field_universe: Sequence[int]) -> Program:
    """Lower ``udf`` onto a dense mapping of ``field_universe``.

    The universe must cover every field the UDF mentions; fields carried by
    input records at runtime but outside the universe are not representable
    and must be included by the caller.
    """
    field_ids = tuple(sorted(set(field_universe) | set(mentioned_fields(udf))))
    field_index = {f: i for i, f in enumerate(field_ids)}

    rec_index: dict[str, int] = {p: i for i, p in enumerate(udf.params)}
    for s in udf.stmts:
        if isinstance(s, (ir.Create, ir.Copy)) and s.rec not in rec_index:
            rec_index[s.rec] = len(rec_index)

    scalar_index: dict[str, int] = {}
    const_index: dict[int, int] = {}

    def scalar(name: str) -> int:
        return scalar_index.setdefault(name, len(scalar_index) + len(const_index))

    def const(value: int) -> int:
        return const_index.setdefault(value, len(scalar_index) + len(const_index))

    def operand(op: ir.Var | ir.Const) -> int:
        return scalar(op.name) if isinstance(op, ir.Var) else const(op.value)

    pc_of_line = {s.line: pc for pc, s in enumerate(udf.stmts)}

    rows: list[tuple[int, int, int, int, int]] = []
    for s in udf.stmts:
        if isinstance(s, ir.GetField):
            rows.append((OP_GETFIELD, scalar(s.target), rec_index[s.rec], field_index[s.field], 0))
        elif isinstance(s, ir.SetField):
            if s.src is None:
                rows.append((OP_SETNULL, rec_index[s.rec], field_index[s.field], 0, 0))
            else:
                rows.append((OP_SETFIELD, rec_index[s.rec], field_index[s.field], scalar(s.src), 0))
        elif isinstance(s, ir.Create):
            rows.append((OP_CREATE, rec_index[s.rec], 0, 0, 0))
        elif isinstance(s, ir.Copy):
            rows.append((OP_COPY, rec_index[s.rec], rec_index[s.src], 0, 0))
        elif isinstance(s, ir.UnionStmt):
            rows.append((OP_UNION, rec_index[s.rec], rec_index[s.src], 0, 0))
        elif isinstance(s, ir.Emit):
            rows.append((OP_EMIT, rec_index[s.rec], 0, 0, 0))
        elif isinstance(s, ir.Assign):
            expr = s.expr
            if isinstance(expr, ir.BinOp):
                rows.append((
                    OP_BIN,
                    scalar(s.target),
                    BINOP_CODES[expr.op],
                    operand(expr.lhs),
                    operand(expr.rhs),
                ))
            else:
                rows.append((OP_MOV, scalar(s.target), operand(expr), 0, 0))
        elif isinstance(s, ir.CondJump):
            rows.append((OP_CJMP, scalar(s.cond), pc_of_line[s.target_line], 0, 0))
        elif isinstance(s, ir.Jump):
            rows.append((OP_JMP, pc_of_line[s.target_line], 0, 0, 0))
        elif isinstance(s, ir.Return):
            rows.append((OP_RET, 0, 0, 0, 0))
        else:  # pragma: no cover - parser admits no other statement kinds
            raise TypeError(f"unknown statement {s!r}")

    n_scalars = len(scalar_index) + len(const_index)
    init_vals = np.zeros(n_scalars, dtype=np.int64)
    init_defined = np.zeros(n_scalars, dtype=np.uint8)
    for value, idx in const_index.items():
        init_vals[idx] = value
        init_defined[idx] = 1

    return Program(
        udf=udf,
        field_ids=field_ids,
        field_index=field_index,
        n_scalars=n_scalars,
        n_records=len(rec_index),
        code=np.array(rows, dtype=np.int32).reshape(len(rows), 5),
        lines=np.array([s.line for s in udf.stmts], dtype=np.int32),
        init_vals=init_vals,
        init_defined=init_defined,
    )
