# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled execution kernel.

Same instruction set and observable behaviour as flowopt._kernel_py;
see flowopt.program for the encoding. Scratch buffers live on the engine
and are reset per run, so an Engine is reusable but not thread-safe.
"""

import numpy as np

BACKEND_NAME = "c"

# Opcodes and statuses mirror flowopt.program (kept as C constants here).
cdef enum:
    OP_GETFIELD = 0
    OP_SETFIELD = 1
    OP_SETNULL = 2
    OP_CREATE = 3
    OP_COPY = 4
    OP_UNION = 5
    OP_EMIT = 6
    OP_MOV = 7
    OP_BIN = 8
    OP_CJMP = 9
    OP_JMP = 10
    OP_RET = 11

cdef enum:
    ST_OK = 0
    ST_MISSING_FIELD = 1
    ST_UNCREATED_RECORD = 2
    ST_UNDEF_VAR = 3
    ST_STEP_LIMIT = 4


cdef class Engine:
    cdef int[:, ::1] code
    cdef int[::1] lines
    cdef long long[::1] init_vals
    cdef unsigned char[::1] init_defined
    cdef long long[::1] regs
    cdef unsigned char[::1] defined
    cdef unsigned char[::1] created
    cdef long long[:, ::1] rec_vals
    cdef unsigned char[:, ::1] rec_mask
    cdef object rec_vals_np
    cdef object rec_mask_np
    cdef int n_scalars, n_records, n_fields, n_instr

    def __init__(self, code, lines, n_scalars, n_records, n_fields, init_vals, init_defined):
        self.code = np.ascontiguousarray(code, dtype=np.int32)
        self.lines = np.ascontiguousarray(lines, dtype=np.int32)
        self.init_vals = np.ascontiguousarray(init_vals, dtype=np.int64)
        self.init_defined = np.ascontiguousarray(init_defined, dtype=np.uint8)
        self.n_scalars = n_scalars
        self.n_records = n_records
        self.n_fields = n_fields
        self.n_instr = self.code.shape[0]
        # max(1, n) keeps the buffers addressable when a UDF has no scalars
        self.regs = np.zeros(max(1, n_scalars), dtype=np.int64)
        self.defined = np.zeros(max(1, n_scalars), dtype=np.uint8)
        self.created = np.zeros(max(1, n_records), dtype=np.uint8)
        self.rec_vals_np = np.zeros((max(1, n_records), max(1, n_fields)), dtype=np.int64)
        self.rec_mask_np = np.zeros((max(1, n_records), max(1, n_fields)), dtype=np.uint8)
        self.rec_vals = self.rec_vals_np
        self.rec_mask = self.rec_mask_np

    def run(self, in_masks, in_vals, list emits, trace, long long step_limit):
        """Execute one invocation; see the pure kernel for the contract."""
        cdef const unsigned char[:, :] im = in_masks
        cdef const long long[:, :] iv = in_vals
        cdef int arity = im.shape[0]
        cdef int i, j
        cdef int nf = self.n_fields

        for i in range(self.n_scalars):
            self.regs[i] = self.init_vals[i]
            self.defined[i] = self.init_defined[i]
        for i in range(self.n_records):
            self.created[i] = 0
        for i in range(arity):
            self.created[i] = 1
            for j in range(nf):
                self.rec_mask[i, j] = im[i, j]
                self.rec_vals[i, j] = iv[i, j]

        cdef int pc = 0
        cdef long long steps = 0
        cdef int op, a, b, c, d
        cdef long long x, y, r
        cdef bint tracing = trace is not None
        cdef int n = self.n_instr

        while pc < n:
            if steps >= step_limit:
                return ST_STEP_LIMIT, pc, steps
            steps += 1
            if tracing:
                trace.append(self.lines[pc])
            op = self.code[pc, 0]
            a = self.code[pc, 1]
            b = self.code[pc, 2]
            c = self.code[pc, 3]
            d = self.code[pc, 4]
            pc += 1
            if op == OP_GETFIELD:
                if not self.created[b]:
                    return ST_UNCREATED_RECORD, pc - 1, steps
                if not self.rec_mask[b, c]:
                    return ST_MISSING_FIELD, pc - 1, steps
                self.regs[a] = self.rec_vals[b, c]
                self.defined[a] = 1
            elif op == OP_SETFIELD:
                if not self.created[a]:
                    return ST_UNCREATED_RECORD, pc - 1, steps
                if not self.defined[c]:
                    return ST_UNDEF_VAR, pc - 1, steps
                self.rec_mask[a, b] = 1
                self.rec_vals[a, b] = self.regs[c]
            elif op == OP_SETNULL:
                if not self.created[a]:
                    return ST_UNCREATED_RECORD, pc - 1, steps
                self.rec_mask[a, b] = 0
                self.rec_vals[a, b] = 0
            elif op == OP_CREATE:
                self.created[a] = 1
                for j in range(nf):
                    self.rec_mask[a, j] = 0
                    self.rec_vals[a, j] = 0
            elif op == OP_COPY:
                self.created[a] = 1
                for j in range(nf):
                    self.rec_mask[a, j] = self.rec_mask[b, j]
                    self.rec_vals[a, j] = self.rec_vals[b, j]
            elif op == OP_UNION:
                if not self.created[a]:
                    return ST_UNCREATED_RECORD, pc - 1, steps
                for j in range(nf):
                    if self.rec_mask[b, j] and not self.rec_mask[a, j]:
                        self.rec_mask[a, j] = 1
                        self.rec_vals[a, j] = self.rec_vals[b, j]
            elif op == OP_EMIT:
                if not self.created[a]:
                    return ST_UNCREATED_RECORD, pc - 1, steps
                emits.append((
                    np.array(self.rec_mask_np[a][:nf], dtype=np.uint8),
                    np.array(self.rec_vals_np[a][:nf], dtype=np.int64),
                ))
            elif op == OP_MOV:
                if not self.defined[b]:
                    return ST_UNDEF_VAR, pc - 1, steps
                self.regs[a] = self.regs[b]
                self.defined[a] = 1
            elif op == OP_BIN:
                if not self.defined[c] or not self.defined[d]:
                    return ST_UNDEF_VAR, pc - 1, steps
                x = self.regs[c]
                y = self.regs[d]
                # unsigned intermediates: two's-complement wrap, like the
                # pure kernel, instead of undefined signed overflow
                if b == 0:
                    r = <long long>(<unsigned long long>x + <unsigned long long>y)
                elif b == 1:
                    r = <long long>(<unsigned long long>x - <unsigned long long>y)
                elif b == 2:
                    r = <long long>(<unsigned long long>x * <unsigned long long>y)
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
                self.regs[a] = r
                self.defined[a] = 1
            elif op == OP_CJMP:
                if not self.defined[a]:
                    return ST_UNDEF_VAR, pc - 1, steps
                if self.regs[a] != 0:
                    pc = b
            elif op == OP_JMP:
                pc = a
            elif op == OP_RET:
                break
        return ST_OK, -1, steps
