"""Three-address IR for record-processing user functions.

A UDF is a sequence of line-labelled statements over two kinds of values:
integer scalars held in ``$``-variables, and records (maps from globally
numbered integer fields to integer values). Input records arrive as
parameters; output records are built with ``create``/``copy``, populated
with ``setField``/``union``, and released with ``emit``.

Text format, one statement per line (``#`` starts a comment):

    10: f1(InRec $ir)
    11: $a:=getField($ir,0)
    12: $b:=getField($ir,1)
    13: $c:=$a + $b
    14: $or:=copy($ir)
    15: setField($or,2,$c)
    16: emit($or)

Control flow uses ``goto N``, ``if $c goto N`` (taken when ``$c`` is
nonzero) and ``return``. The full grammar ships in docs/formats.md.

Parsing is pure and a ``UdfBody`` is immutable, so bodies can be shared
freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

from .errors import UdfSyntaxError, UdfValidationError

__all__ = [
    "Var",
    "Const",
    "BinOp",
    "Statement",
    "GetField",
    "SetField",
    "Create",
    "Copy",
    "UnionStmt",
    "Emit",
    "Assign",
    "CondJump",
    "Jump",
    "Return",
    "UdfBody",
    "parse_udf",
    "print_udf",
    "defined_var",
    "used_vars",
]

BINOPS = ("+", "-", "*", "<=", ">=", "==", "!=", "<", ">")


# ---------------------------------------------------------------------------
# Expressions (right-hand sides of plain assignments)


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Const:
    value: int

    def __str__(self) -> str:
        return str(self.value)


Operand = Union[Var, Const]


@dataclass(frozen=True)
class BinOp:
    op: str
    lhs: Operand
    rhs: Operand

    def __str__(self) -> str:
        return f"{self.lhs} {self.op} {self.rhs}"


Expr = Union[Var, Const, BinOp]


# ---------------------------------------------------------------------------
# Statements


@dataclass(frozen=True)
class Statement:
    """Base statement; ``line`` is the positive label carried in the text."""

    line: int


@dataclass(frozen=True)
class GetField(Statement):
    target: str
    rec: str
    field: int

    def __str__(self) -> str:
        return f"{self.target}:=getField({self.rec},{self.field})"


@dataclass(frozen=True)
class SetField(Statement):
    rec: str
    field: int
    src: str | None  # None encodes the null literal

    def __str__(self) -> str:
        src = "null" if self.src is None else self.src
        return f"setField({self.rec},{self.field},{src})"


@dataclass(frozen=True)
class Create(Statement):
    rec: str

    def __str__(self) -> str:
        return f"{self.rec}:=create()"


@dataclass(frozen=True)
class Copy(Statement):
    rec: str
    src: str

    def __str__(self) -> str:
        return f"{self.rec}:=copy({self.src})"


@dataclass(frozen=True)
class UnionStmt(Statement):
    rec: str
    src: str

    def __str__(self) -> str:
        return f"union({self.rec},{self.src})"


@dataclass(frozen=True)
class Emit(Statement):
    rec: str

    def __str__(self) -> str:
        return f"emit({self.rec})"


@dataclass(frozen=True)
class Assign(Statement):
    target: str
    expr: Expr

    def __str__(self) -> str:
        return f"{self.target}:={self.expr}"


@dataclass(frozen=True)
class CondJump(Statement):
    cond: str
    target_line: int

    def __str__(self) -> str:
        return f"if {self.cond} goto {self.target_line}"


@dataclass(frozen=True)
class Jump(Statement):
    target_line: int

    def __str__(self) -> str:
        return f"goto {self.target_line}"


@dataclass(frozen=True)
class Return(Statement):
    def __str__(self) -> str:
        return "return"


def defined_var(stmt: Statement) -> str | None:
    """Variable written by ``stmt``: scalar target or (re)initialized record."""
    if isinstance(stmt, (GetField,)):
        return stmt.target
    if isinstance(stmt, Assign):
        return stmt.target
    if isinstance(stmt, (Create, Copy)):
        return stmt.rec
    return None


def used_vars(stmt: Statement) -> tuple[str, ...]:
    """Variables read by ``stmt``, in source order."""
    if isinstance(stmt, GetField):
        return (stmt.rec,)
    if isinstance(stmt, SetField):
        return (stmt.rec,) if stmt.src is None else (stmt.rec, stmt.src)
    if isinstance(stmt, Copy):
        return (stmt.src,)
    if isinstance(stmt, UnionStmt):
        return (stmt.rec, stmt.src)
    if isinstance(stmt, Emit):
        return (stmt.rec,)
    if isinstance(stmt, Assign):
        out = []
        expr = stmt.expr
        operands = (expr.lhs, expr.rhs) if isinstance(expr, BinOp) else (expr,)
        for op in operands:
            if isinstance(op, Var):
                out.append(op.name)
        return tuple(out)
    if isinstance(stmt, CondJump):
        return (stmt.cond,)
    return ()


# ---------------------------------------------------------------------------
# UDF body


@dataclass(frozen=True)
class UdfBody:
    """One parsed UDF: header name, input-record parameters, statements.

    Invariants established by :func:`parse_udf`:

    * statement labels strictly increase and every jump target exists;
    * each ``$``-variable has exactly one role: input record (a parameter),
      output record (target of ``create``/``copy``), or scalar;
    * record-typed arguments match their operation (``getField``/``copy``
      read input records, ``setField``/``union``/``emit`` act on output
      records);
    * the first textual occurrence of an output record is its
      ``create``/``copy`` (whether every runtime path initializes it before
      ``emit`` is checked later, by the property analysis);
    * at least one ``emit`` is present.
    """

    name: str
    header_line: int
    params: tuple[str, ...]
    stmts: tuple[Statement, ...]
    output_records: frozenset[str]
    scalars: frozenset[str]

    @property
    def arity(self) -> int:
        return len(self.params)

    def input_id(self, var: str) -> int:
        """1-based position of an input-record parameter."""
        return self.params.index(var) + 1

    def is_input_record(self, var: str) -> bool:
        return var in self.params

    def is_output_record(self, var: str) -> bool:
        return var in self.output_records

    def stmt_at(self, line: int) -> Statement:
        stmt = self._by_line().get(line)
        if stmt is None:
            raise KeyError(f"no statement at line {line}")
        return stmt

    def _by_line(self) -> dict[int, Statement]:
        # Cached lazily; the body itself stays logically immutable.
        cache = getattr(self, "_line_cache", None)
        if cache is None:
            cache = {s.line: s for s in self.stmts}
            object.__setattr__(self, "_line_cache", cache)
        return cache

    def emits(self) -> tuple[Emit, ...]:
        return tuple(s for s in self.stmts if isinstance(s, Emit))

    def __str__(self) -> str:
        return print_udf(self)


# ---------------------------------------------------------------------------
# Parser

_IDENT_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_IDENT_CHARS = _IDENT_START | set("0123456789")


class _LineScanner:
    """Cursor over one statement's text, for column-accurate errors."""

    def __init__(self, text: str, line_no: int, col_base: int):
        self.text = text
        self.pos = 0
        self.line_no = line_no
        self.col_base = col_base  # column of text[0] in the original line

    def error(self, message: str) -> UdfSyntaxError:
        return UdfSyntaxError(message, self.line_no, self.col_base + self.pos)

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def try_consume(self, token: str) -> bool:
        self.skip_ws()
        if self.text.startswith(token, self.pos):
            self.pos += len(token)
            return True
        return False

    def try_keyword(self, kw: str) -> bool:
        """Like try_consume but requires a word boundary after ``kw``."""
        self.skip_ws()
        end = self.pos + len(kw)
        if self.text.startswith(kw, self.pos) and (
            end >= len(self.text) or self.text[end] not in _IDENT_CHARS
        ):
            self.pos = end
            return True
        return False

    def expect(self, token: str) -> None:
        if not self.try_consume(token):
            raise self.error(f"expected '{token}'")

    def ident(self, what: str = "identifier") -> str:
        self.skip_ws()
        start = self.pos
        if self.pos < len(self.text) and self.text[self.pos] in _IDENT_START:
            self.pos += 1
            while self.pos < len(self.text) and self.text[self.pos] in _IDENT_CHARS:
                self.pos += 1
        if start == self.pos:
            raise self.error(f"expected {what}")
        return self.text[start:self.pos]

    def var(self) -> str:
        self.skip_ws()
        if self.peek() != "$":
            raise self.error("expected a $-variable")
        self.pos += 1
        return "$" + self.ident("variable name")

    def integer(self, what: str = "integer") -> int:
        self.skip_ws()
        start = self.pos
        if self.pos < len(self.text) and self.text[self.pos] == "-":
            self.pos += 1
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if self.pos == start or self.text[start:self.pos] == "-":
            self.pos = start
            raise self.error(f"expected {what}")
        return int(self.text[start:self.pos])

    def operand(self) -> Operand:
        self.skip_ws()
        ch = self.peek()
        if ch == "$":
            return Var(self.var())
        if ch.isdigit() or ch == "-":
            return Const(self.integer())
        raise self.error("expected a variable or integer constant")

    def try_binop(self) -> str | None:
        self.skip_ws()
        for op in BINOPS:  # two-char operators listed before their prefixes
            if self.text.startswith(op, self.pos):
                self.pos += len(op)
                return op
        return None


def _strip_comment(raw: str) -> str:
    idx = raw.find("#")
    return raw if idx < 0 else raw[:idx]


def _split_label(raw: str, line_no: int) -> tuple[int, _LineScanner] | None:
    """Split ``NN: stmt`` into the label and a scanner over the rest."""
    text = _strip_comment(raw)
    if not text.strip():
        return None
    stripped = text.lstrip()
    indent = len(text) - len(stripped)
    digits = 0
    while digits < len(stripped) and stripped[digits].isdigit():
        digits += 1
    if digits == 0:
        raise UdfSyntaxError("expected a numeric statement label", line_no, indent)
    label = int(stripped[:digits])
    rest = stripped[digits:].lstrip()
    if not rest.startswith(":"):
        raise UdfSyntaxError("expected ':' after the statement label", line_no, indent + digits)
    if label <= 0:
        raise UdfSyntaxError("statement labels must be positive", line_no, indent)
    body = rest[1:]
    col_base = len(text) - len(body)
    return label, _LineScanner(body, line_no, col_base)


def _parse_header(label: int, sc: _LineScanner) -> tuple[str, tuple[str, ...]]:
    name = sc.ident("UDF name")
    sc.expect("(")
    params = []
    while True:
        kw = sc.ident("'InRec'")
        if kw != "InRec":
            raise sc.error("input parameters must be declared as InRec")
        params.append(sc.var())
        if sc.try_consume(","):
            continue
        sc.expect(")")
        break
    if not sc.at_end():
        raise sc.error("unexpected text after the UDF header")
    if len(params) > 2:
        raise UdfSyntaxError("a UDF takes at most two input records", sc.line_no)
    if len(set(params)) != len(params):
        raise UdfSyntaxError("duplicate parameter name", sc.line_no)
    return name, tuple(params)


def _parse_statement(label: int, sc: _LineScanner) -> Statement:
    if sc.try_keyword("if"):
        cond = sc.var()
        kw = sc.ident("'goto'")
        if kw != "goto":
            raise sc.error("expected 'goto' after the condition")
        target = sc.integer("jump target")
        stmt: Statement = CondJump(label, cond, target)
    elif sc.try_keyword("goto"):
        stmt = Jump(label, sc.integer("jump target"))
    elif sc.try_keyword("return"):
        stmt = Return(label)
    elif sc.try_keyword("setField"):
        sc.expect("(")
        rec = sc.var()
        sc.expect(",")
        field = sc.integer("field id")
        sc.expect(",")
        if sc.peek() == "$":
            src: str | None = sc.var()
        else:
            kw = sc.ident("a variable or 'null'")
            if kw != "null":
                raise sc.error("the value of setField must be a variable or null")
            src = None
        sc.expect(")")
        if field < 0:
            raise UdfSyntaxError("field ids must be non-negative", sc.line_no)
        stmt = SetField(label, rec, field, src)
    elif sc.try_keyword("union"):
        sc.expect("(")
        rec = sc.var()
        sc.expect(",")
        src = sc.var()
        sc.expect(")")
        stmt = UnionStmt(label, rec, src)
    elif sc.try_keyword("emit"):
        sc.expect("(")
        rec = sc.var()
        sc.expect(")")
        stmt = Emit(label, rec)
    elif sc.peek() == "$":
        target = sc.var()
        sc.expect(":=")
        if sc.try_keyword("getField"):
            sc.expect("(")
            rec = sc.var()
            sc.expect(",")
            field = sc.integer("field id")
            sc.expect(")")
            if field < 0:
                raise UdfSyntaxError("field ids must be non-negative", sc.line_no)
            stmt = GetField(label, target, rec, field)
        elif sc.try_keyword("create"):
            sc.expect("(")
            sc.expect(")")
            stmt = Create(label, target)
        elif sc.try_keyword("copy"):
            sc.expect("(")
            rec = sc.var()
            sc.expect(")")
            stmt = Copy(label, target, rec)
        else:
            lhs = sc.operand()
            op = sc.try_binop()
            expr: Expr = lhs if op is None else BinOp(op, lhs, sc.operand())
            stmt = Assign(label, target, expr)
    else:
        raise sc.error("unrecognized statement")
    if not sc.at_end():
        raise sc.error("unexpected text after the statement")
    return stmt


def parse_udf(text: str) -> UdfBody:
    """Parse one UDF from text.

    Raises :class:`UdfSyntaxError` for malformed text and
    :class:`UdfValidationError` for well-formed text that breaks an IR
    invariant. Never returns a partially built body.
    """
    if not text.strip():
        raise UdfSyntaxError("empty UDF source", 1)

    header: tuple[str, tuple[str, ...]] | None = None
    header_label = 0
    stmts: list[Statement] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        split = _split_label(raw, line_no)
        if split is None:
            continue
        label, sc = split
        if header is None:
            header = _parse_header(label, sc)
            header_label = label
            continue
        stmts.append(_parse_statement(label, sc))

    if header is None:
        raise UdfSyntaxError("missing UDF header", 1)
    name, params = header
    body = _validate(name, header_label, params, tuple(stmts))
    return body


def _validate(
    name: str, header_line: int, params: tuple[str, ...], stmts: tuple[Statement, ...]
) -> UdfBody:
    if not stmts:
        raise UdfValidationError(f"UDF {name} has no statements")

    prev = header_line
    for s in stmts:
        if s.line <= prev:
            raise UdfValidationError(
                f"statement labels must strictly increase ({s.line} after {prev})", s.line
            )
        prev = s.line

    lines = {s.line for s in stmts}
    for s in stmts:
        if isinstance(s, (CondJump, Jump)) and s.target_line not in lines:
            raise UdfValidationError(f"jump target {s.target_line} does not exist", s.line)

    inputs = set(params)
    outputs: set[str] = set()
    scalars: set[str] = set()
    seen: set[str] = set(params)

    def classify(var: str, role: str, line: int) -> None:
        target = {"input": inputs, "output": outputs, "scalar": scalars}[role]
        if var in target:
            return
        for other_role, pool in (("input", inputs), ("output", outputs), ("scalar", scalars)):
            if var in pool:
                raise UdfValidationError(
                    f"{var} is used both as {other_role} record and as {role}", line
                )
        target.add(var)

    for s in stmts:
        if isinstance(s, GetField):
            if s.rec in outputs:
                raise UdfValidationError(f"getField reads output record {s.rec}", s.line)
            classify(s.rec, "input", s.line)
            classify(s.target, "scalar", s.line)
        elif isinstance(s, (Create, Copy)):
            if s.rec in seen and s.rec not in outputs:
                raise UdfValidationError(
                    f"{s.rec} is already an input record or scalar", s.line
                )
            classify(s.rec, "output", s.line)
            if isinstance(s, Copy):
                classify(s.src, "input", s.line)
        elif isinstance(s, SetField):
            if s.rec not in outputs:
                raise UdfValidationError(
                    f"setField target {s.rec} is not a created output record", s.line
                )
            if s.src is not None:
                classify(s.src, "scalar", s.line)
        elif isinstance(s, UnionStmt):
            if s.rec not in outputs:
                raise UdfValidationError(
                    f"union target {s.rec} is not a created output record", s.line
                )
            classify(s.src, "input", s.line)
        elif isinstance(s, Emit):
            if s.rec not in outputs:
                raise UdfValidationError(
                    f"emit argument {s.rec} is not a created output record", s.line
                )
        elif isinstance(s, Assign):
            classify(s.target, "scalar", s.line)
            for v in used_vars(s):
                classify(v, "scalar", s.line)
        elif isinstance(s, CondJump):
            classify(s.cond, "scalar", s.line)
        for v in used_vars(s) + ((defined_var(s),) if defined_var(s) else ()):
            seen.add(v)

    undeclared = inputs - set(params)
    if undeclared:
        var = sorted(undeclared)[0]
        line = next(s.line for s in stmts if var in used_vars(s))
        raise UdfValidationError(f"input record {var} is not a declared parameter", line)

    if not any(isinstance(s, Emit) for s in stmts):
        raise UdfValidationError(f"UDF {name} never emits a record")

    return UdfBody(
        name=name,
        header_line=header_line,
        params=params,
        stmts=stmts,
        output_records=frozenset(outputs),
        scalars=frozenset(scalars),
    )


def print_udf(udf: UdfBody) -> str:
    """Normalized text form; reparsing yields a structurally equal body."""
    out = [f"{udf.header_line}: {udf.name}({', '.join('InRec ' + p for p in udf.params)})"]
    out.extend(f"{s.line}: {s}" for s in udf.stmts)
    return "\n".join(out)


def iter_statements(udf: UdfBody) -> Iterator[Statement]:
    return iter(udf.stmts)
