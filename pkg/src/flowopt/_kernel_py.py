"""Pure-Python execution kernel.

Reference implementation of the instruction set defined in
flowopt.program; flowopt._kernel is the compiled twin with identical
observable behaviour. Register files and record slots are plain lists,
which beats numpy scalar indexing for interpretation at this grain.
"""

from __future__ import annotations

import numpy as np

from .program import (
    OK,
    MISSING_FIELD,
    OP_BIN,
    OP_CJMP,
    OP_COPY,
    OP_CREATE,
    OP_EMIT,
    OP_GETFIELD,
    OP_JMP,
    OP_MOV,
    OP_RET,
    OP_SETFIELD,
    OP_SETNULL,
    OP_UNION,
    STEP_LIMIT,
    UNCREATED_RECORD,
    UNDEF_VAR,
)

BACKEND_NAME = "python"

_U64 = 1 << 64
_I63 = 1 << 63


def _wrap(v: int) -> int:
    # Match the compiled kernel's 64-bit two's-complement arithmetic.
    v &= _U64 - 1
    return v - _U64 if v >= _I63 else v


class Engine:
    """Executes one lowered UDF; reusable across invocations, not thread-safe."""

    def __init__(self, code, lines, n_scalars, n_records, n_fields, init_vals, init_defined):
        self.instrs = [tuple(int(x) for x in row) for row in code]
        self.lines = [int(x) for x in lines]
        self.n_scalars = n_scalars
        self.n_records = n_records
        self.n_fields = n_fields
        self.init_vals = [int(x) for x in init_vals]
        self.init_defined = [int(x) for x in init_defined]

    def run(self, in_masks, in_vals, emits, trace, step_limit):
        """Execute one invocation.

        ``in_masks``/``in_vals`` are (arity, n_fields) arrays; emitted
        record snapshots are appended to ``emits`` as (mask, values) numpy
        pairs; ``trace``, when a list, receives every executed source line.
        Returns (status, failing pc or -1, steps executed).
        """
        regs = list(self.init_vals)
        defined = list(self.init_defined)
        created = [False] * self.n_records
        masks: list[list[int]] = [[0] * self.n_fields for _ in range(self.n_records)]
        vals: list[list[int]] = [[0] * self.n_fields for _ in range(self.n_records)]
        for i in range(len(in_masks)):
            masks[i] = [int(x) for x in in_masks[i]]
            vals[i] = [int(x) for x in in_vals[i]]
            created[i] = True

        instrs = self.instrs
        lines = self.lines
        n = len(instrs)
        pc = 0
        steps = 0
        tracing = trace is not None
        while pc < n:
            if steps >= step_limit:
                return STEP_LIMIT, pc, steps
            steps += 1
            if tracing:
                trace.append(lines[pc])
            op, a, b, c, d = instrs[pc]
            pc += 1
            if op == OP_GETFIELD:
                if not created[b]:
                    return UNCREATED_RECORD, pc - 1, steps
                if not masks[b][c]:
                    return MISSING_FIELD, pc - 1, steps
                regs[a] = vals[b][c]
                defined[a] = 1
            elif op == OP_SETFIELD:
                if not created[a]:
                    return UNCREATED_RECORD, pc - 1, steps
                if not defined[c]:
                    return UNDEF_VAR, pc - 1, steps
                masks[a][b] = 1
                vals[a][b] = regs[c]
            elif op == OP_SETNULL:
                if not created[a]:
                    return UNCREATED_RECORD, pc - 1, steps
                masks[a][b] = 0
                vals[a][b] = 0
            elif op == OP_CREATE:
                created[a] = True
                masks[a] = [0] * self.n_fields
                vals[a] = [0] * self.n_fields
            elif op == OP_COPY:
                created[a] = True
                masks[a] = list(masks[b])
                vals[a] = list(vals[b])
            elif op == OP_UNION:
                if not created[a]:
                    return UNCREATED_RECORD, pc - 1, steps
                ma, va = masks[a], vals[a]
                mb, vb = masks[b], vals[b]
                for j in range(self.n_fields):
                    if mb[j] and not ma[j]:
                        ma[j] = 1
                        va[j] = vb[j]
            elif op == OP_EMIT:
                if not created[a]:
                    return UNCREATED_RECORD, pc - 1, steps
                emits.append((
                    np.array(masks[a], dtype=np.uint8),
                    np.array(vals[a], dtype=np.int64),
                ))
            elif op == OP_MOV:
                if not defined[b]:
                    return UNDEF_VAR, pc - 1, steps
                regs[a] = regs[b]
                defined[a] = 1
            elif op == OP_BIN:
                if not defined[c] or not defined[d]:
                    return UNDEF_VAR, pc - 1, steps
                x, y = regs[c], regs[d]
                if b == 0:
                    r = _wrap(x + y)
                elif b == 1:
                    r = _wrap(x - y)
                elif b == 2:
                    r = _wrap(x * y)
                elif b == 3:
                    r = 1 if x < y else 0
                elif b == 4:
                    r = 1 if x <= y else 0
                elif b == 5:
                    r = 1 if x > y else 0
                elif b == 6:
                    r = 1 if x >= y else 0
                elif b == 7:
                    r = 1 if x == y else 0
                else:
                    r = 1 if x != y else 0
                regs[a] = r
                defined[a] = 1
            elif op == OP_CJMP:
                if not defined[a]:
                    return UNDEF_VAR, pc - 1, steps
                if regs[a] != 0:
                    pc = b
            elif op == OP_JMP:
                pc = a
            elif op == OP_RET:
                break
        return OK, -1, steps
