"""Placement and node-selection studies built on repeated bound computations."""

from __future__ import annotations

import csv
import io
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

from qkdnet.mcfp import its_bound
from qkdnet.model import (
    AddSystem, NetworkInstance, NodeId, SelectNodes, apply_modification,
)
from qkdnet.solver import SolverOptions


@dataclass(frozen=True)
class PlacementRow:
    edge: str
    bound: float
    delta: float
    satisfied: bool


@dataclass(frozen=True)
class PlacementReport:
    baseline_bound: float
    rows: tuple[PlacementRow, ...]

    @property
    def baseline_satisfied(self) -> bool:
        return self.baseline_bound >= 1.0


@dataclass(frozen=True)
class SelectionRow:
    nodes: tuple[NodeId, ...]
    bound: float
    satisfied: bool


@dataclass(frozen=True)
class SelectionReport:
    rows: tuple[SelectionRow, ...]

    def bound_of(self, nodes: Iterable[NodeId]) -> float:
        key = frozenset(nodes)
        for row in self.rows:
            if frozenset(row.nodes) == key:
                return row.bound
        raise KeyError(f"no row for selection {sorted(key)}")


def _bound(job: tuple[NetworkInstance, SolverOptions | None]) -> float:
    instance, options = job
    return its_bound(instance, options, relaxation=False).bound


def _run(jobs: list, workers: int) -> list[float]:
    # results come back in submission order, so reports do not depend on scheduling
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_bound, jobs))
    return [_bound(job) for job in jobs]


def evaluate_placements(instance: NetworkInstance, candidates: Sequence[str | tuple],
                        options: SolverOptions | None = None, *, workers: int = 1
                        ) -> PlacementReport:
    """Bound of the instance, then with one extra QKD system on each candidate edge."""
    top = instance.topology
    edges = [top.find_edge(c) for c in candidates]
    jobs = [(instance, options)]
    jobs += [(replace(instance, topology=apply_modification(top, AddSystem(e))), options)
             for e in edges]
    bounds = _run(jobs, workers)
    base = bounds[0]
    rows = tuple(PlacementRow(e.name(), b, b - base, b >= 1.0) for e, b in zip(edges, bounds[1:]))
    return PlacementReport(base, rows)


def selection_subsets(nodes: Sequence[NodeId]) -> list[tuple[NodeId, ...]]:
    """All subsets, smallest first, then lexicographic by position in ``nodes``."""
    ordered = list(dict.fromkeys(nodes))
    return [combo for k in range(len(ordered) + 1)
            for combo in itertools.combinations(ordered, k)]


def evaluate_selection(instance: NetworkInstance, optional_nodes: Sequence[NodeId],
                       options: SolverOptions | None = None, *, workers: int = 1
                       ) -> SelectionReport:
    """Bound for every subset of ``optional_nodes`` switched on; demand stays fixed."""
    top = instance.topology
    apply_modification(top, SelectNodes(tuple(optional_nodes)))  # fail fast on bad ids
    subsets = selection_subsets(optional_nodes)
    jobs = [(replace(instance, topology=apply_modification(top, SelectNodes(s))), options)
            for s in subsets]
    bounds = _run(jobs, workers)
    return SelectionReport(tuple(SelectionRow(s, b, b >= 1.0) for s, b in zip(subsets, bounds)))


# -- rendering ----------------------------------------------------------------------

def _fmt(value: float) -> str:
    return format(value, ".6g")


def _csv(header: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    line = lambda r: "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
    rule = "  ".join("-" * w for w in widths)
    return "\n".join([line(header), rule] + [line(r) for r in rows]) + "\n"


def _flag(ok: bool) -> str:
    return "yes" if ok else "no"


def render_placement(report: PlacementReport, fmt: str = "table") -> str:
    if fmt == "structured":
        labels = ["none"] + [r.edge for r in report.rows]
        bounds = [report.baseline_bound] + [r.bound for r in report.rows]
        return (",".join(["Placement"] + labels) + "\n"
                + ",".join(["Bound"] + [_fmt(b) for b in bounds]) + "\n")
    header = ["placement", "bound", "delta", "satisfied"]
    rows = [["none", _fmt(report.baseline_bound), "0", _flag(report.baseline_satisfied)]]
    rows += [[r.edge, _fmt(r.bound), _fmt(r.delta), _flag(r.satisfied)] for r in report.rows]
    return _render(header, rows, fmt)


def _subset_label(nodes: tuple[NodeId, ...], sep: str) -> str:
    return sep.join(nodes) if nodes else "none"


def render_selection(report: SelectionReport, fmt: str = "table") -> str:
    if fmt == "structured":
        return (",".join(["Selection"] + [_subset_label(r.nodes, " ") for r in report.rows]) + "\n"
                + ",".join(["Bound"] + [_fmt(r.bound) for r in report.rows]) + "\n")
    header = ["selection", "bound", "satisfied"]
    rows = [[_subset_label(r.nodes, " " if fmt == "table" else ";"), _fmt(r.bound),
             _flag(r.satisfied)] for r in report.rows]
    return _render(header, rows, fmt)


_RENDERERS: dict[str, Callable[[list[str], list[list[str]]], str]] = {"csv": _csv, "table": _table}


def _render(header, rows, fmt):
    try:
        return _RENDERERS[fmt](header, rows)
    except KeyError:
        raise ValueError(f"unknown output format {fmt!r}") from None
