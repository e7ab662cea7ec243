"""CPLEX-style LP text format: writer and a reader for the subset the writer emits.

Every coefficient is printed with 17 significant digits, so reading a written
file back reproduces the program bit for bit.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from qkdnet.solver.lp import EQ, GE, LE, LinearProgram

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_TERMS_PER_LINE = 6


class LpFormatError(ValueError):
    pass


def _num(v: float) -> str:
    if v == np.inf:
        return "+inf"
    if v == -np.inf:
        return "-inf"
    if v == 0:
        return "0"
    return format(float(v), ".17g")


def _expression(terms: list[tuple[float, str]], fallback: str) -> list[str]:
    if not terms:
        return [f"0 {fallback}"]
    parts = []
    for coef, name in terms:
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {_num(abs(coef))} {name}")
    return [" ".join(parts[i:i + _TERMS_PER_LINE]) for i in range(0, len(parts), _TERMS_PER_LINE)]


def _names(given: list[str] | None, prefix: str, count: int) -> list[str]:
    if given is None:
        return [f"{prefix}{i}" for i in range(count)]
    for name in given:
        if not _NAME_RE.match(name):
            raise LpFormatError(f"name {name!r} is not alphanumeric-with-underscore")
    if len(set(given)) != len(given):
        raise LpFormatError("names must be unique")
    return list(given)


def format_lp(lp: LinearProgram, integer_vars: Iterable[int] = ()) -> str:
    var = _names(lp.var_names, "x", lp.num_vars)
    row = _names(lp.row_names, "r", lp.num_rows)
    if lp.num_vars == 0:
        raise LpFormatError("cannot write a program without variables")
    lines = ["\\ maximize c.x subject to linear rows, bounds and integrality", "Maximize"]
    obj_terms = [(lp.c[j], var[j]) for j in np.flatnonzero(lp.c)]
    expr = _expression(obj_terms, var[0])
    lines.append(f" obj: {expr[0]}")
    lines.extend(f"   {chunk}" for chunk in expr[1:])

    lines.append("Subject To")
    A = lp.A.tocsr()
    A.sort_indices()
    for i in range(lp.num_rows):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        terms = [(v, var[j]) for j, v in zip(A.indices[lo:hi], A.data[lo:hi]) if v != 0]
        expr = _expression(terms, var[0])
        rel = {LE: "<=", GE: ">=", EQ: "="}[lp.senses[i]]
        expr[-1] = f"{expr[-1]} {rel} {_num(lp.b[i])}"
        lines.append(f" {row[i]}: {expr[0]}")
        lines.extend(f"   {chunk}" for chunk in expr[1:])

    lines.append("Bounds")
    for j in range(lp.num_vars):
        lo, hi = lp.lower[j], lp.upper[j]
        if lo == -np.inf and hi == np.inf:
            lines.append(f" {var[j]} free")
        elif lo == hi:
            lines.append(f" {var[j]} = {_num(lo)}")
        elif hi == np.inf:
            lines.append(f" {var[j]} >= {_num(lo)}")
        else:
            lines.append(f" {_num(lo)} <= {var[j]} <= {_num(hi)}")

    ints = sorted(set(int(i) for i in integer_vars))
    lines.append("Generals")
    for k in range(0, len(ints), 10):
        lines.append(" " + " ".join(var[j] for j in ints[k:k + 10]))
    lines.append("End")
    return "\n".join(lines) + "\n"


def export_lp_file(lp: LinearProgram, integer_vars: Iterable[int], path: str | Path) -> Path:
    path = Path(path)
    text = format_lp(lp, integer_vars)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return path


# -- reader --------------------------------------------------------------------

_SECTION_RE = re.compile(
    r"^\s*(maximize|maximum|max|minimize|minimum|min|subject\s+to|such\s+that|st|s\.t\.|"
    r"bounds|bound|generals|general|gen|integers|end)\s*$", re.IGNORECASE)
_TOKEN_RE = re.compile(
    r"\s*(?:(?P<label>[A-Za-z_][A-Za-z0-9_]*)\s*:|(?P<rel><=|>=|=<|=>|<|>|=)|"
    r"(?P<num>[+-]?\s*(?:inf(?:inity)?\b|(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?))|"
    r"(?P<sign>[+-])|(?P<name>[A-Za-z_][A-Za-z0-9_]*))", re.IGNORECASE)


def _tokens(text: str):
    pos = 0
    out = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            raise LpFormatError(f"cannot parse near {text[pos:pos + 30]!r}")
        kind = m.lastgroup
        value = m.group(kind)
        out.append((kind, value.replace(" ", "")))
        pos = m.end()
    return out


def _to_float(tok: str) -> float:
    t = tok.lower()
    if t.lstrip("+-") in ("inf", "infinity"):
        return -np.inf if t.startswith("-") else np.inf
    return float(tok)


_REL = {"<=": LE, "=<": LE, "<": LE, ">=": GE, "=>": GE, ">": GE, "=": EQ}


def _linear(tokens, i):
    """Parse ``[sign] [coef] name`` terms from ``tokens[i:]``."""
    terms = []
    while i < len(tokens):
        kind, val = tokens[i]
        if kind in ("rel", "label"):
            break
        sign = 1.0
        if kind == "sign":
            sign = -1.0 if val == "-" else 1.0
            i += 1
            kind, val = tokens[i]
        coef = 1.0
        if kind == "num":
            coef = _to_float(val)
            i += 1
            kind, val = tokens[i] if i < len(tokens) else (None, None)
        if kind != "name":
            raise LpFormatError(f"expected a variable name, got {val!r}")
        terms.append((sign * coef, val))
        i += 1
    return terms, i


def parse_lp(text: str) -> tuple[LinearProgram, list[int]]:
    sections: dict[str, list[str]] = {}
    current = None
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0]
        if not line.strip():
            continue
        m = _SECTION_RE.match(line)
        if m:
            key = m.group(1).lower()
            if key.startswith("max"):
                current = "max"
            elif key.startswith("min"):
                current = "min"
            elif key in ("bounds", "bound"):
                current = "bounds"
            elif key in ("generals", "general", "gen", "integers"):
                current = "generals"
            elif key == "end":
                current = None
                break
            else:
                current = "st"
            sections.setdefault(current, [])
            continue
        if current is None:
            raise LpFormatError(f"text outside any section: {line.strip()!r}")
        sections[current].append(line)

    order: dict[str, int] = {}

    def index(name):
        if name not in order:
            order[name] = len(order)
        return order[name]

    sense_obj = "max" if "max" in sections else "min"
    obj_tokens = _tokens(" ".join(sections.get(sense_obj, [])))
    if obj_tokens and obj_tokens[0][0] == "label":
        obj_tokens = obj_tokens[1:]
    obj_terms, _ = _linear(obj_tokens, 0)

    rows = []
    st = _tokens(" ".join(sections.get("st", [])))
    i = 0
    while i < len(st):
        name = None
        if st[i][0] == "label":
            name = st[i][1]
            i += 1
        terms, i = _linear(st, i)
        if i >= len(st) or st[i][0] != "rel":
            raise LpFormatError(f"constraint {name or len(rows)} lacks a relation")
        rel = _REL[st[i][1]]
        i += 1
        if i >= len(st) or st[i][0] != "num":
            raise LpFormatError(f"constraint {name or len(rows)} lacks a right-hand side")
        rows.append((name, terms, rel, _to_float(st[i][1])))
        i += 1

    bounds: dict[str, list[float]] = {}
    bound_order: list[str] = []
    for line in sections.get("bounds", []):
        toks = _tokens(line)
        kinds = [k for k, _ in toks]
        vals = [v for _, v in toks]
        if kinds == ["name", "name"] and vals[1].lower() == "free":
            lo, hi, name = -np.inf, np.inf, vals[0]
        elif kinds == ["num", "rel", "name", "rel", "num"]:
            lo, name, hi = _to_float(vals[0]), vals[2], _to_float(vals[4])
        elif kinds == ["name", "rel", "num"]:
            name, v = vals[0], _to_float(vals[2])
            rel = _REL[vals[1]]
            cur = bounds.get(name, [0.0, np.inf])
            lo, hi = (v, cur[1]) if rel == GE else (cur[0], v) if rel == LE else (v, v)
        else:
            raise LpFormatError(f"unsupported bound line {line.strip()!r}")
        if name not in bounds:
            bound_order.append(name)
        bounds[name] = [lo, hi]

    generals = []
    for line in sections.get("generals", []):
        generals.extend(line.split())

    for name in bound_order:
        index(name)
    for _, name in obj_terms:
        index(name)
    for _, terms, _, _ in rows:
        for _, name in terms:
            index(name)
    for name in generals:
        index(name)

    n = len(order)
    c = np.zeros(n)
    for coef, name in obj_terms:
        c[order[name]] += coef
    if sense_obj == "min":
        c = -c
    data, ri, ci = [], [], []
    for r, (_, terms, _, _) in enumerate(rows):
        for coef, name in terms:
            data.append(coef); ri.append(r); ci.append(order[name])
    A = sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n))
    A.sum_duplicates()
    A.eliminate_zeros()
    lower = np.zeros(n)
    upper = np.full(n, np.inf)
    for name, (lo, hi) in bounds.items():
        lower[order[name]], upper[order[name]] = lo, hi
    names = sorted(order, key=order.get)
    row_names = [name or f"r{k}" for k, (name, _, _, _) in enumerate(rows)]
    lp = LinearProgram(c, A, tuple(r[2] for r in rows), np.array([r[3] for r in rows]),
                       lower, upper, names, row_names)
    return lp, sorted(order[name] for name in generals)


def read_lp_file(path: str | Path) -> tuple[LinearProgram, list[int]]:
    with open(path) as fh:
        return parse_lp(fh.read())
