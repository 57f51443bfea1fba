"""Problem files and trace CSVs.

Problem file grammar (one keyword per line, ``#`` starts a comment, keyword
lines may come in any order before ``matrix``)::

    mirrorgate-problem 1
    n <int>
    m <int>
    set box                     followed by   lo <n floats> / hi <n floats>
    set ball <radius>           followed by   center <n floats>
    set simplex
    set orthant
    objective <tag> <offset>    optional, tag in linear|abs|pos (default linear 0)
    c <n floats>
    b <m floats>
    sigma <tag> | sigma <m tags>  optional, default linear
    matrix
    %%MatrixMarket matrix coordinate real general
    <rows> <cols> <nnz>
    <i> <j> <value>             1-based, nnz lines

Floats are written with 17 significant digits so write/read round-trips
binary64 values exactly. Row and column indices in every file are 1-based.
"""
from __future__ import annotations

import csv
import io as _io
import os
import tempfile

import numpy as np

from . import scalar
from .errors import DimensionMismatch, ParseError
from .problem import Box, EuclideanBall, NonnegativeOrthant, Problem, Simplex, build_problem
from .sparse import format_float, matrix_market_lines, parse_matrix_market

HEADER = "mirrorgate-problem 1"


def _floats(parts, count, lineno, what):
    if len(parts) != count:
        raise DimensionMismatch(f"line {lineno}: {what} has {len(parts)} values, expected {count}")
    out = []
    for col, tok in enumerate(parts, start=2):
        try:
            out.append(float(tok))
        except ValueError:
            raise ParseError(f"{what}: {tok!r} is not a number", lineno, col) from None
    return np.array(out)


def _int(parts, lineno, what):
    if len(parts) != 1:
        raise ParseError(f"{what} expects one integer", lineno)
    try:
        return int(parts[0])
    except ValueError:
        raise ParseError(f"{what}: {parts[0]!r} is not an integer", lineno, 2) from None


def parse_problem(text_or_lines) -> Problem:
    """Parse problem-file text (a string or an iterable of lines)."""
    lines = text_or_lines.splitlines() if isinstance(text_or_lines, str) else list(text_or_lines)
    numbered = iter(enumerate(lines, start=1))
    fields: dict = {}
    seen_header = False
    matrix_line = None
    for lineno, raw in numbered:
        s = raw.split("#", 1)[0].strip()
        if not s:
            continue
        if not seen_header:
            if s != HEADER:
                raise ParseError(f"expected header {HEADER!r}", lineno)
            seen_header = True
            continue
        key, *rest = s.split()
        if key == "matrix":
            matrix_line = lineno
            break
        if key in fields:
            raise ParseError(f"duplicate keyword {key!r}", lineno)
        fields[key] = (lineno, rest)
    if not seen_header:
        raise ParseError("empty problem file", 1)
    if matrix_line is None:
        raise ParseError("missing 'matrix' section", len(lines))
    for key in ("n", "m", "set", "c", "b"):
        if key not in fields:
            raise ParseError(f"missing keyword {key!r}", matrix_line)

    n = _int(fields["n"][1], fields["n"][0], "n")
    m = _int(fields["m"][1], fields["m"][0], "m")
    feasible_set = _parse_set(fields, n)
    c = _floats(fields["c"][1], n, fields["c"][0], "c")
    b = _floats(fields["b"][1], m, fields["b"][0], "b")

    outer, offset = scalar.LINEAR, 0.0
    if "objective" in fields:
        lineno, parts = fields["objective"]
        if len(parts) != 2:
            raise ParseError("objective expects '<tag> <offset>'", lineno)
        outer = _tag(parts[0], lineno)
        offset = float(_floats(parts[1:], 1, lineno, "objective offset")[0])

    sigmas = None
    if "sigma" in fields:
        lineno, parts = fields["sigma"]
        if len(parts) == 1:
            sigmas = [_tag(parts[0], lineno) for _ in range(m)]
        elif len(parts) == m:
            sigmas = [_tag(t, lineno) for t in parts]
        else:
            raise DimensionMismatch(f"line {lineno}: sigma needs 1 or {m} tags, got {len(parts)}")

    # everything after 'matrix' belongs to the Matrix Market block
    A = parse_matrix_market(numbered, shape=(m, n))
    return build_problem(n=n, m=m, c=c, matrix=A, b=b, feasible_set=feasible_set,
                         offset=offset, objective=outer, sigmas=sigmas)


def _tag(tok, lineno):
    try:
        return scalar.from_tag(tok)
    except ValueError as exc:
        raise ParseError(str(exc), lineno) from None


def _parse_set(fields, n):
    lineno, parts = fields["set"]
    if not parts:
        raise ParseError("set needs a kind", lineno)
    kind = parts[0]
    if kind == "box":
        for key in ("lo", "hi"):
            if key not in fields:
                raise ParseError(f"box set needs a '{key}' line", lineno)
        lo = _floats(fields["lo"][1], n, fields["lo"][0], "lo")
        hi = _floats(fields["hi"][1], n, fields["hi"][0], "hi")
        try:
            return Box(lo, hi)
        except ValueError as exc:
            raise ParseError(str(exc), fields["lo"][0]) from None
    if kind == "ball":
        if len(parts) != 2:
            raise ParseError("ball expects 'set ball <radius>'", lineno)
        if "center" not in fields:
            raise ParseError("ball set needs a 'center' line", lineno)
        radius = float(_floats(parts[1:], 1, lineno, "radius")[0])
        center = _floats(fields["center"][1], n, fields["center"][0], "center")
        try:
            return EuclideanBall(center, radius)
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    if kind == "simplex":
        return Simplex(n)
    if kind == "orthant":
        return NonnegativeOrthant(n)
    raise ParseError(f"unknown set kind {kind!r}", lineno, 5)


def parse_problem_file(path) -> Problem:
    with open(path) as fh:
        return parse_problem(fh.read().splitlines())


def _join(values):
    return " ".join(format_float(v) for v in np.asarray(values).tolist())


def problem_lines(p: Problem):
    """Canonical text lines for a problem."""
    yield HEADER
    yield f"n {p.n}"
    yield f"m {p.m}"
    Q = p.feasible_set
    if isinstance(Q, Box):
        yield "set box"
        yield f"lo {_join(Q.lo)}"
        yield f"hi {_join(Q.hi)}"
    elif isinstance(Q, EuclideanBall):
        yield f"set ball {format_float(Q.radius)}"
        yield f"center {_join(Q.center)}"
    elif isinstance(Q, Simplex):
        yield "set simplex"
    elif isinstance(Q, NonnegativeOrthant):
        yield "set orthant"
    yield f"objective {_tag_of(p.outer)} {format_float(p.offset)}"
    yield f"c {_join(p.c)}"
    yield f"b {_join(p.b)}"
    if p.sigmas is not None:
        yield "sigma " + " ".join(_tag_of(s) for s in p.sigmas)
    yield "matrix"
    yield from matrix_market_lines(p.A)


def _tag_of(fn):
    if fn.name not in ("linear", "abs", "pos"):
        raise ValueError(f"{fn!r} has no problem-file tag")
    return fn.name


def format_problem(p: Problem) -> str:
    return "\n".join(problem_lines(p)) + "\n"


def atomic_write_text(path, text: str):
    """Write via a temp file in the target directory and rename into place."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_problem_file(p: Problem, path):
    atomic_write_text(path, format_problem(p))


# Trace CSV

TRACE_COLUMNS = ["k", "branch", "row", "g", "f", "n_productive"]
XBAR_INLINE_LIMIT = 1000


def _fmt_opt(v):
    return "" if v is None else format_float(v)


def _pairs(items):
    return ";".join(f"{k}:{v}" for k, v in items)


def trace_footer(trace, problem=None, certificate=None):
    """Ordered (key, value) footer fields for a trace."""
    rows = [
        ("N", str(trace.N)),
        ("N_I", str(trace.n_productive)),
        ("N_J", str(trace.n_nonproductive)),
        ("status", trace.status.value),
        ("eps_g", format_float(trace.eps_g)),
        ("eps_f", format_float(trace.eps_f)),
        ("h_f", format_float(trace.steps.h_f)),
        ("h_g", format_float(trace.steps.h_g)),
        ("hit_counts", _pairs((l + 1, int(c)) for l, c in enumerate(trace.hit_counts) if c)),
    ]
    if trace.xbar is not None:
        xb = trace.xbar
        rows += [
            ("xbar_l2", format_float(np.linalg.norm(xb))),
            ("xbar_min", format_float(xb.min())),
            ("xbar_max", format_float(xb.max())),
        ]
        if xb.size <= XBAR_INLINE_LIMIT:
            rows.append(("xbar", ";".join(format_float(v) for v in xb.tolist())))
        if problem is not None:
            from .problem import eval_constraints_max, eval_objective
            rows.append(("f_xbar", format_float(eval_objective(problem, xb))))
            rows.append(("g_xbar", format_float(eval_constraints_max(problem, xb)[0])))
    if certificate is not None:
        rows += [
            ("f_val", format_float(certificate.f_val)),
            ("g_val", format_float(certificate.g_val)),
            ("phi_val", format_float(certificate.phi_val)),
            ("gap", format_float(certificate.gap)),
            ("lambda_nnz", str(certificate.lambda_nnz)),
            ("lambda_top10", _pairs((l + 1, format_float(v)) for l, v in certificate.top_lambda(10))),
        ]
    return rows


def format_trace_csv(trace, problem=None, certificate=None) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in trace.log:
        w.writerow([r.k, r.branch, "" if r.row is None else r.row + 1,
                    format_float(r.g), _fmt_opt(r.f), r.n_productive])
    for key, value in trace_footer(trace, problem, certificate):
        w.writerow(["#", key, value, "", "", ""])
    return buf.getvalue()


def write_trace_csv(trace, path, problem=None, certificate=None):
    atomic_write_text(path, format_trace_csv(trace, problem, certificate))


def read_trace_csv(path):
    """Return (records, footer). Records are dicts; hit_counts become {row: count}."""
    records, footer = [], {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRACE_COLUMNS:
            raise ParseError(f"unexpected trace header {header}", 1)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(TRACE_COLUMNS):
                raise ParseError(f"expected {len(TRACE_COLUMNS)} columns", lineno)
            if row[0] == "#":
                footer[row[1]] = row[2]
                continue
            records.append({
                "k": int(row[0]),
                "branch": row[1],
                "row": int(row[2]) - 1 if row[2] else None,
                "g": float(row[3]),
                "f": float(row[4]) if row[4] else None,
                "n_productive": int(row[5]),
            })
    if "hit_counts" in footer:
        raw = footer["hit_counts"]
        footer["hit_counts"] = {int(a) - 1: int(b) for a, b in
                                (item.split(":") for item in raw.split(";") if item)}
    for key in ("N", "N_I", "N_J"):
        if key in footer:
            footer[key] = int(footer[key])
    return records, footer
