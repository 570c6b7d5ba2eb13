"""Config-driven batch front end with JSON reports.

A config file is a flat sequence of ``[kind name]`` sections holding
``key = value`` lines.  Charts, algebroids, fibrations, and cubes are
declared by name; ``task`` sections reference them and run in
declaration order.  ``run`` writes one JSON report per task and exits 0
only if every declared check passes; ``describe`` validates the file
and prints the entity table without running anything.

Value grammars, all plain text:

* lists (names, numbers): whitespace separated;
* matrices of expressions: commas between entries, semicolons between
  rows (expressions never contain either character);
* structure or twist tables: ``i j: e1, e2, ...`` chunks joined by
  semicolons, frame indices zero-based with i < j;
* per-frame matrix lists (representation actions): matrices joined by
  ``|`` in frame order.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    Chart,
    check_axioms,
    make_cotangent_poisson,
    make_explicit,
    make_jacobi_extension,
    make_lie_algebra,
    make_rep_extension,
    make_tangent,
)
from .cubes import (
    cotangent_lift,
    cube_from_sections,
    homotopy_defect,
    load_cube,
    morphism_residual,
    save_cube,
    tangent_lift,
)
from .expr import parse as parse_expr
from .fibration import Fibration, lift_cube, project_cube, splitting_from_projection
from .transgression import (
    decompose_path,
    monodromy_group,
    monodromy_period,
    transgress2_formula,
    transgress_lift,
)

_SECTION_KINDS = ("chart", "algebroid", "fibration", "cube", "task")
_ALGEBROID_KINDS = (
    "tangent",
    "lie_algebra",
    "cotangent_poisson",
    "jacobi_extension",
    "rep_extension",
    "explicit",
)
_TASK_KINDS = ("check", "flow", "lift", "transgress", "monodromy", "decompose")
_CUBE_SOURCES = ("file", "from_sections", "tangent_lift_of")


class ConfigError(Exception):
    """Config problem, pointing at a source line when one is known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass
class SectionSpec:
    """One ``[kind name]`` block of raw key/value text."""

    kind: str
    name: str
    line: int
    entries: dict[str, str] = field(default_factory=dict)
    lines: dict[str, int] = field(default_factory=dict)

    def get(self, key: str, default: str | None = None) -> str | None:
        return self.entries.get(key, default)

    def require(self, key: str) -> str:
        if key not in self.entries:
            raise ConfigError(f"[{self.kind} {self.name}] is missing key '{key}'", self.line)
        return self.entries[key]

    def where(self, key: str) -> int:
        return self.lines.get(key, self.line)

    def reject_unknown(self, allowed: set[str]) -> None:
        for key in self.entries:
            if key not in allowed:
                raise ConfigError(
                    f"[{self.kind} {self.name}] has unknown key '{key}' "
                    f"(allowed: {', '.join(sorted(allowed))})",
                    self.where(key),
                )


# --- parsing -------------------------------------------------------------------


def parse_config(text: str) -> list[SectionSpec]:
    """Split config text into sections, complaining with line numbers."""
    sections: list[SectionSpec] = []
    seen: dict[tuple[str, str], int] = {}
    current: SectionSpec | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("unterminated section header", lineno)
            head = line[1:-1].split()
            if len(head) != 2:
                raise ConfigError("section header must be '[kind name]'", lineno)
            kind, name = head
            if kind not in _SECTION_KINDS:
                raise ConfigError(
                    f"unknown section kind '{kind}' (one of {', '.join(_SECTION_KINDS)})", lineno
                )
            if not name.isidentifier():
                raise ConfigError(f"bad section name '{name}'", lineno)
            if (kind, name) in seen:
                raise ConfigError(
                    f"duplicate section [{kind} {name}], first defined at line {seen[kind, name]}",
                    lineno,
                )
            seen[kind, name] = lineno
            current = SectionSpec(kind, name, lineno)
            sections.append(current)
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value' or a '[kind name]' header", lineno)
        if current is None:
            raise ConfigError("key/value line before any section header", lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        if not key.isidentifier():
            raise ConfigError(f"bad key '{key}'", lineno)
        if key in current.entries:
            raise ConfigError(f"duplicate key '{key}' in [{current.kind} {current.name}]", lineno)
        current.entries[key] = value.strip()
        current.lines[key] = lineno
    return sections


def apply_overrides(sections: list[SectionSpec], assignments: list[str]) -> dict[str, str]:
    """Apply ``kind.name.key=value`` assignments in place; return the echo map."""
    index = {(s.kind, s.name): s for s in sections}
    applied: dict[str, str] = {}
    for item in assignments:
        target, eq, value = item.partition("=")
        if not eq:
            raise ConfigError(f"override '{item}' is not of the form kind.name.key=value")
        parts = target.strip().split(".")
        if len(parts) != 3:
            raise ConfigError(f"override target '{target.strip()}' is not kind.name.key")
        kind, name, key = parts
        if kind not in _SECTION_KINDS:
            raise ConfigError(f"override names unknown section kind '{kind}'")
        sec = index.get((kind, name))
        if sec is None:
            raise ConfigError(f"override names undefined {kind} '{name}'")
        sec.entries[key] = value.strip()
        sec.lines.setdefault(key, sec.line)
        applied[target.strip()] = value.strip()
    return applied


def config_hash(sections: list[SectionSpec], overrides: dict[str, str]) -> str:
    """Digest of the canonicalized config plus the applied overrides."""
    parts: list[str] = []
    for sec in sections:
        parts.append(f"[{sec.kind} {sec.name}]")
        parts.extend(f"{key}={sec.entries[key]}" for key in sorted(sec.entries))
    parts.extend(f"set {key}={value}" for key, value in sorted(overrides.items()))
    return hashlib.sha256("\n".join(parts).encode("utf-8")).hexdigest()


# --- value grammars ------------------------------------------------------------


def _float(value: str, where: int, what: str = "number") -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"bad {what} '{value}'", where) from None


def _int(value: str, where: int, what: str = "integer") -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"bad {what} '{value}'", where) from None


def _floats(value: str, where: int) -> tuple[float, ...]:
    return tuple(_float(tok, where) for tok in value.replace(",", " ").split())


def _check_exprs(entries, where: int) -> None:
    for entry in entries:
        try:
            parse_expr(entry)
        except ValueError as err:
            raise ConfigError(f"bad expression '{entry}': {err}", where) from None


def _matrix(value: str, where: int, what: str = "matrix") -> tuple[tuple[str, ...], ...]:
    rows = []
    for chunk in value.split(";"):
        entries = tuple(e.strip() for e in chunk.split(","))
        if any(not e for e in entries):
            raise ConfigError(f"{what} has an empty entry", where)
        rows.append(entries)
    if len({len(r) for r in rows}) != 1:
        raise ConfigError(f"{what} rows have unequal lengths", where)
    for row in rows:
        _check_exprs(row, where)
    return tuple(rows)


def _shaped_matrix(value, where, n_rows, n_cols, what):
    mat = _matrix(value, where, what)
    if len(mat) != n_rows or len(mat[0]) != n_cols:
        raise ConfigError(
            f"{what} must be {n_rows} rows of {n_cols} entries, got {len(mat)}x{len(mat[0])}",
            where,
        )
    return mat


def _bounds(value: str, where: int) -> tuple[tuple[float, float], ...]:
    rows = []
    for chunk in value.split(";"):
        pair = _floats(chunk, where)
        if len(pair) != 2:
            raise ConfigError("each bounds row must be 'lo hi'", where)
        rows.append((pair[0], pair[1]))
    return tuple(rows)


def _table(value, where, n_frames, n_components, what="structure"):
    """Parse ``i j: e1, e2, ...`` chunks into an (i, j) -> components map."""
    out: dict[tuple[int, int], tuple[str, ...]] = {}
    for chunk in value.split(";"):
        if not chunk.strip():
            continue
        head, colon, tail = chunk.partition(":")
        if not colon:
            raise ConfigError(f"{what} chunk '{chunk.strip()}' is missing ':'", where)
        idx = head.split()
        if len(idx) != 2:
            raise ConfigError(f"{what} chunk needs two frame indices before ':'", where)
        i, j = (_int(tok, where, f"{what} index") for tok in idx)
        if not 0 <= i < j < n_frames:
            raise ConfigError(f"{what} indices must satisfy 0 <= i < j < {n_frames}", where)
        if (i, j) in out:
            raise ConfigError(f"{what} repeats the pair ({i}, {j})", where)
        comps = tuple(e.strip() for e in tail.split(","))
        if len(comps) != n_components:
            raise ConfigError(
                f"{what} pair ({i}, {j}) needs {n_components} components, got {len(comps)}", where
            )
        _check_exprs(comps, where)
        out[i, j] = comps
    return out


def _action_matrices(value, where, n_frames, dim):
    parts = value.split("|")
    if len(parts) != n_frames:
        raise ConfigError(f"action needs {n_frames} '|'-separated matrices, got {len(parts)}", where)
    return [_shaped_matrix(part, where, dim, dim, "action matrix") for part in parts]


# --- workspace -----------------------------------------------------------------


class Workspace:
    """Builds and memoizes the entities a config declares."""

    def __init__(self, sections: list[SectionSpec], base_dir: Path):
        self.base_dir = base_dir
        self.sections = sections
        self.index = {(s.kind, s.name): s for s in sections}
        self._built: dict[tuple[str, str], object] = {}
        self._stack: list[tuple[str, str]] = []
        self.algebroid_meta: dict[str, dict] = {}

    def section(self, kind: str, name: str, where: int | None = None) -> SectionSpec:
        sec = self.index.get((kind, name))
        if sec is None:
            raise ConfigError(f"undefined {kind} '{name}'", where)
        return sec

    def build(self, kind: str, name: str, where: int | None = None):
        sec = self.section(kind, name, where)
        key = (kind, name)
        if key in self._built:
            return self._built[key]
        if key in self._stack:
            raise ConfigError(f"circular reference through [{kind} {name}]", sec.line)
        self._stack.append(key)
        try:
            obj = getattr(self, f"_make_{kind}")(sec)
        except ConfigError:
            raise
        except ValueError as err:
            raise ConfigError(f"[{kind} {name}]: {err}", sec.line) from err
        finally:
            self._stack.pop()
        self._built[key] = obj
        return obj

    def _make_chart(self, sec: SectionSpec) -> Chart:
        sec.reject_unknown({"coords", "bounds"})
        coords = tuple(sec.require("coords").split())
        box = _bounds(sec.require("bounds"), sec.where("bounds"))
        if len(box) != len(coords):
            raise ConfigError(
                f"[chart {sec.name}] has {len(coords)} coordinates but {len(box)} bounds rows",
                sec.where("bounds"),
            )
        return Chart(coords, box)

    def _make_algebroid(self, sec: SectionSpec):
        kind = sec.require("kind")
        meta = {"kind": kind, "bivector": None}
        if kind == "tangent":
            sec.reject_unknown({"kind", "chart"})
            built = make_tangent(self.build("chart", sec.require("chart"), sec.where("chart")))
        elif kind == "lie_algebra":
            sec.reject_unknown({"kind", "rank", "structure", "chart"})
            rank = _int(sec.require("rank"), sec.where("rank"))
            table = _table(sec.get("structure", ""), sec.where("structure"), rank, rank)
            chart = None
            if "chart" in sec.entries:
                chart = self.build("chart", sec.entries["chart"], sec.where("chart"))
            built = make_lie_algebra(rank, table, chart=chart)
        elif kind in ("cotangent_poisson", "jacobi_extension"):
            sec.reject_unknown({"kind", "chart", "bivector"})
            chart = self.build("chart", sec.require("chart"), sec.where("chart"))
            biv = _shaped_matrix(
                sec.require("bivector"), sec.where("bivector"), chart.dim, chart.dim, "bivector"
            )
            maker = make_cotangent_poisson if kind == "cotangent_poisson" else make_jacobi_extension
            built = maker(chart, biv)
            meta["bivector"] = biv
        elif kind == "rep_extension":
            sec.reject_unknown({"kind", "base", "fiber_dim", "action", "twist"})
            base = self.build("algebroid", sec.require("base"), sec.where("base"))
            fiber_dim = _int(sec.require("fiber_dim"), sec.where("fiber_dim"))
            action = _action_matrices(
                sec.require("action"), sec.where("action"), base.rank, fiber_dim
            )
            twist = _table(
                sec.get("twist", ""), sec.where("twist"), base.rank, fiber_dim, "twist"
            )
            built = make_rep_extension(base, fiber_dim, action, twist=twist or None)
        elif kind == "explicit":
            sec.reject_unknown({"kind", "chart", "rank", "anchor", "structure"})
            chart = self.build("chart", sec.require("chart"), sec.where("chart"))
            rank = _int(sec.require("rank"), sec.where("rank"))
            anchor = _shaped_matrix(
                sec.require("anchor"), sec.where("anchor"), rank, chart.dim, "anchor"
            )
            table = _table(sec.get("structure", ""), sec.where("structure"), rank, rank)
            built = make_explicit(chart, rank, anchor, table or None)
        else:
            raise ConfigError(
                f"unknown algebroid kind '{kind}' (one of {', '.join(_ALGEBROID_KINDS)})",
                sec.where("kind"),
            )
        self.algebroid_meta[sec.name] = meta
        return built

    def _make_fibration(self, sec: SectionSpec) -> Fibration:
        sec.reject_unknown({"total", "base", "pi", "sigma", "kernel_frame"})
        total = self.build("algebroid", sec.require("total"), sec.where("total"))
        base = self.build("algebroid", sec.require("base"), sec.where("base"))
        pi = _shaped_matrix(sec.require("pi"), sec.where("pi"), base.rank, total.rank, "pi")
        if "sigma" in sec.entries:
            sigma = _shaped_matrix(
                sec.entries["sigma"], sec.where("sigma"), total.rank, base.rank, "sigma"
            )
        else:
            sigma = splitting_from_projection(pi)
        kernel = ()
        if "kernel_frame" in sec.entries:
            kernel = _shaped_matrix(
                sec.entries["kernel_frame"],
                sec.where("kernel_frame"),
                total.rank - base.rank,
                total.rank,
                "kernel_frame",
            )
        return Fibration(total=total, base=base, projection=pi, splitting=sigma, kernel=kernel)

    def _make_cube(self, sec: SectionSpec):
        alg_name = sec.require("algebroid")
        A = self.build("algebroid", alg_name, sec.where("algebroid"))
        source = sec.require("source")
        if source == "file":
            sec.reject_unknown({"algebroid", "source", "path"})
            path = self.base_dir / sec.require("path")
            if not path.exists():
                raise ConfigError(f"cube file '{path}' does not exist", sec.where("path"))
            return load_cube(path, A)
        if source == "from_sections":
            sec.reject_unknown({"algebroid", "source", "sections", "basepoint", "N", "order"})
            rows = _matrix(sec.require("sections"), sec.where("sections"), "sections")
            if len(rows[0]) != A.rank:
                raise ConfigError(
                    f"sections need {A.rank} coefficient entries per row, got {len(rows[0])}",
                    sec.where("sections"),
                )
            basepoint = _floats(sec.require("basepoint"), sec.where("basepoint"))
            if len(basepoint) != A.chart.dim:
                raise ConfigError(
                    f"basepoint needs {A.chart.dim} numbers, got {len(basepoint)}",
                    sec.where("basepoint"),
                )
            N = _int(sec.require("N"), sec.where("N"))
            order = None
            if "order" in sec.entries:
                order = tuple(
                    _int(tok, sec.where("order")) for tok in sec.entries["order"].split()
                )
            return cube_from_sections(A, rows, basepoint, N, order=order)
        if source == "tangent_lift_of":
            sec.reject_unknown({"algebroid", "source", "map", "n", "N"})
            comps = tuple(e.strip() for e in sec.require("map").split(","))
            if len(comps) != A.chart.dim:
                raise ConfigError(
                    f"map needs {A.chart.dim} components, got {len(comps)}", sec.where("map")
                )
            _check_exprs(comps, sec.where("map"))
            n = _int(sec.require("n"), sec.where("n"))
            N = _int(sec.require("N"), sec.where("N"))
            meta = self.algebroid_meta[alg_name]
            if meta["kind"] == "tangent":
                return tangent_lift(A.chart, comps, n, N)
            if meta["kind"] == "cotangent_poisson":
                return cotangent_lift(A.chart, meta["bivector"], comps, n, N)
            raise ConfigError(
                "tangent_lift_of needs a tangent or cotangent_poisson algebroid",
                sec.where("algebroid"),
            )
        raise ConfigError(
            f"unknown cube source '{source}' (one of {', '.join(_CUBE_SOURCES)})",
            sec.where("source"),
        )


# --- static validation and describe --------------------------------------------


def _static_cube(ws: Workspace, sec: SectionSpec) -> str:
    alg_name = sec.require("algebroid")
    A = ws.build("algebroid", alg_name, sec.where("algebroid"))
    source = sec.require("source")
    if source == "file":
        sec.reject_unknown({"algebroid", "source", "path"})
        path = ws.base_dir / sec.require("path")
        if not path.exists():
            raise ConfigError(f"cube file '{path}' does not exist", sec.where("path"))
        return f"file {sec.entries['path']} over {alg_name}"
    if source == "from_sections":
        sec.reject_unknown({"algebroid", "source", "sections", "basepoint", "N", "order"})
        rows = _matrix(sec.require("sections"), sec.where("sections"), "sections")
        if len(rows[0]) != A.rank:
            raise ConfigError(
                f"sections need {A.rank} coefficient entries per row, got {len(rows[0])}",
                sec.where("sections"),
            )
        basepoint = _floats(sec.require("basepoint"), sec.where("basepoint"))
        if len(basepoint) != A.chart.dim:
            raise ConfigError(
                f"basepoint needs {A.chart.dim} numbers, got {len(basepoint)}",
                sec.where("basepoint"),
            )
        N = _int(sec.require("N"), sec.where("N"))
        if "order" in sec.entries:
            perm = sorted(_int(tok, sec.where("order")) for tok in sec.entries["order"].split())
            if perm != list(range(len(rows))):
                raise ConfigError(
                    f"order must permute 0..{len(rows) - 1}", sec.where("order")
                )
        return f"from_sections over {alg_name}, n={len(rows)}, N={N}"
    if source == "tangent_lift_of":
        sec.reject_unknown({"algebroid", "source", "map", "n", "N"})
        comps = tuple(e.strip() for e in sec.require("map").split(","))
        if len(comps) != A.chart.dim:
            raise ConfigError(
                f"map needs {A.chart.dim} components, got {len(comps)}", sec.where("map")
            )
        _check_exprs(comps, sec.where("map"))
        n = _int(sec.require("n"), sec.where("n"))
        N = _int(sec.require("N"), sec.where("N"))
        kind = ws.algebroid_meta[alg_name]["kind"]
        if kind not in ("tangent", "cotangent_poisson"):
            raise ConfigError(
                "tangent_lift_of needs a tangent or cotangent_poisson algebroid",
                sec.where("algebroid"),
            )
        return f"tangent_lift_of over {alg_name}, n={n}, N={N}"
    raise ConfigError(
        f"unknown cube source '{source}' (one of {', '.join(_CUBE_SOURCES)})",
        sec.where("source"),
    )


_TASK_KEYS = {
    "check": {"kind", "algebroid", "tol", "n_points", "seed"},
    "flow": {"kind", "cube", "tol", "expect_endpoint", "expect_tol", "save"},
    "lift": {"kind", "fibration", "cube", "tol", "save"},
    "transgress": {
        "kind",
        "fibration",
        "cube",
        "method",
        "tol",
        "expect",
        "expect_tol",
        "centrality_tol",
    },
    "monodromy": {
        "kind",
        "algebroid",
        "splitting",
        "cube",
        "cubes",
        "labels",
        "expect",
        "expect_tol",
        "seed",
        "n_samples",
        "max_denominator",
        "centrality_tol",
    },
    "decompose": {"kind", "fibration", "cube", "tol", "endpoint_tol"},
}


def _static_task(ws: Workspace, sec: SectionSpec) -> str:
    kind = sec.require("kind")
    if kind not in _TASK_KINDS:
        raise ConfigError(
            f"unknown task kind '{kind}' (one of {', '.join(_TASK_KINDS)})", sec.where("kind")
        )
    sec.reject_unknown(_TASK_KEYS[kind])
    for key in ("tol", "expect", "expect_tol", "endpoint_tol"):
        if key in sec.entries:
            _float(sec.entries[key], sec.where(key), key)
    if "centrality_tol" in sec.entries and sec.entries["centrality_tol"] != "none":
        _float(sec.entries["centrality_tol"], sec.where("centrality_tol"), "centrality_tol")
    for key in ("n_points", "seed", "n_samples", "max_denominator"):
        if key in sec.entries:
            _int(sec.entries[key], sec.where(key), key)

    if kind == "check":
        A = ws.build("algebroid", sec.require("algebroid"), sec.where("algebroid"))
        return f"check axioms of {sec.entries['algebroid']} (rank {A.rank})"
    if kind == "flow":
        ws.section("cube", sec.require("cube"), sec.where("cube"))
        if "expect_endpoint" in sec.entries:
            _floats(sec.entries["expect_endpoint"], sec.where("expect_endpoint"))
        return f"flow and verify cube {sec.entries['cube']}"
    if kind in ("lift", "transgress", "decompose"):
        ws.build("fibration", sec.require("fibration"), sec.where("fibration"))
        ws.section("cube", sec.require("cube"), sec.where("cube"))
        if kind == "transgress":
            method = sec.get("method", "both")
            if method not in ("formula", "lift", "both"):
                raise ConfigError(
                    f"method must be formula, lift, or both, got '{method}'", sec.where("method")
                )
        return f"{kind} through {sec.entries['fibration']} on cube {sec.entries['cube']}"
    A = ws.build("algebroid", sec.require("algebroid"), sec.where("algebroid"))
    _shaped_matrix(
        sec.require("splitting"), sec.where("splitting"), A.rank, A.chart.dim, "splitting"
    )
    if ("cube" in sec.entries) == ("cubes" in sec.entries):
        raise ConfigError(
            f"[task {sec.name}] needs exactly one of 'cube' or 'cubes'", sec.line
        )
    names = sec.entries.get("cubes", sec.entries.get("cube", "")).split()
    for name in names:
        ws.section("cube", name, sec.line)
    if "labels" in sec.entries and len(sec.entries["labels"].split()) != len(names):
        raise ConfigError("labels must match the cube list in length", sec.where("labels"))
    return f"monodromy of {sec.entries['algebroid']} on {len(names)} cube(s)"


def inspect_config(sections: list[SectionSpec], base_dir: Path):
    """Validate every section; return the workspace and one summary per section."""
    ws = Workspace(sections, base_dir)
    rows: list[tuple[str, str, str]] = []
    for sec in sections:
        if sec.kind == "chart":
            chart = ws.build("chart", sec.name)
            summary = "coordinates " + ", ".join(chart.coords)
        elif sec.kind == "algebroid":
            A = ws.build("algebroid", sec.name)
            coords = ", ".join(A.chart.coords)
            summary = f"{sec.entries['kind']}, rank {A.rank} over ({coords})"
        elif sec.kind == "fibration":
            fib = ws.build("fibration", sec.name)
            summary = (
                f"{sec.entries['total']} -> {sec.entries['base']}, "
                f"kernel rank {fib.kernel_rank}"
            )
        elif sec.kind == "cube":
            summary = _static_cube(ws, sec)
        else:
            summary = _static_task(ws, sec)
        rows.append((sec.kind, sec.name, summary))
    return ws, rows


# --- task execution ------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, (bool, int, float, str)) or obj is None:
        return obj
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return str(obj)


def _check(name: str, value: float, tol: float) -> dict:
    return {"name": name, "value": float(value), "tol": float(tol), "passed": bool(value < tol)}


def _centrality_tol(sec: SectionSpec):
    raw = sec.get("centrality_tol", "1e-6")
    return None if raw == "none" else _float(raw, sec.where("centrality_tol"), "centrality_tol")


def _run_check(ws, sec, checks, values):
    A = ws.build("algebroid", sec.require("algebroid"), sec.where("algebroid"))
    tol = _float(sec.get("tol", "1e-6"), sec.where("tol"), "tol")
    report = check_axioms(
        A,
        n_points=_int(sec.get("n_points", "200"), sec.where("n_points")),
        seed=_int(sec.get("seed", "42"), sec.where("seed")),
        tol=tol,
    )
    values["jacobi_residual"] = report.jacobi_residual
    values["anchor_residual"] = report.anchor_residual
    if report.witness is not None and not report.passed:
        values["witness"] = report.witness.describe()
    checks.append(_check("axioms", max(report.jacobi_residual, report.anchor_residual), tol))


def _run_flow(ws, sec, checks, values, out_dir):
    cube = ws.build("cube", sec.require("cube"), sec.where("cube"))
    tol = _float(sec.get("tol", "1e-2"), sec.where("tol"), "tol")
    res = morphism_residual(cube)
    endpoint = cube.gamma[(-1,) * cube.n]
    values.update(
        n=cube.n,
        N=cube.N,
        structure_residual=res.structure,
        base_residual=res.base,
        endpoint=endpoint,
    )
    checks.append(_check("morphism_residual", max(res), tol))
    if "expect_endpoint" in sec.entries:
        target = np.array(_floats(sec.entries["expect_endpoint"], sec.where("expect_endpoint")))
        etol = _float(sec.get("expect_tol", str(tol)), sec.where("expect_tol"), "expect_tol")
        checks.append(_check("endpoint", float(np.max(np.abs(endpoint - target))), etol))
    if "save" in sec.entries:
        save_cube(cube, out_dir / sec.entries["save"])


def _run_lift(ws, sec, checks, values, out_dir):
    fib = ws.build("fibration", sec.require("fibration"), sec.where("fibration"))
    cube = ws.build("cube", sec.require("cube"), sec.where("cube"))
    tol = _float(sec.get("tol", "1e-2"), sec.where("tol"), "tol")
    lifted = lift_cube(fib, cube)
    res = morphism_residual(lifted)
    down = project_cube(fib, lifted)
    roundtrip = float(np.max(np.abs(down.coeffs - cube.coeffs)))
    values.update(
        endpoint=lifted.gamma[(-1,) * lifted.n],
        structure_residual=res.structure,
        base_residual=res.base,
        projection_roundtrip=roundtrip,
    )
    checks.append(_check("morphism_residual", max(res), tol))
    checks.append(_check("projection_roundtrip", roundtrip, tol))
    if "save" in sec.entries:
        save_cube(lifted, out_dir / sec.entries["save"])


def _expect_check(sec, checks, scalar):
    if "expect" in sec.entries:
        expect = _float(sec.entries["expect"], sec.where("expect"), "expect")
        etol = _float(
            sec.get("expect_tol", sec.get("tol", "1e-2")), sec.where("expect_tol"), "expect_tol"
        )
        checks.append(_check("expect", abs(scalar - expect), etol))


def _run_transgress(ws, sec, checks, values):
    fib = ws.build("fibration", sec.require("fibration"), sec.where("fibration"))
    cube = ws.build("cube", sec.require("cube"), sec.where("cube"))
    method = sec.get("method", "both")
    tol = _float(sec.get("tol", "1e-2"), sec.where("tol"), "tol")
    results = {}
    if method in ("formula", "both"):
        results["formula"] = transgress2_formula(fib, cube, centrality_tol=_centrality_tol(sec))
        values["formula"] = results["formula"].as_dict()
    if method in ("lift", "both"):
        results["lift"] = transgress_lift(fib, cube)
        values["lift"] = results["lift"].as_dict()
    if method == "both":
        gap = float(np.max(np.abs(results["formula"].value - results["lift"].value)))
        checks.append(_check("methods_agree", gap, tol))
    primary = results.get("formula", results.get("lift"))
    if primary.value.size == 1:
        _expect_check(sec, checks, primary.scalar())


def _run_monodromy(ws, sec, checks, values):
    A = ws.build("algebroid", sec.require("algebroid"), sec.where("algebroid"))
    splitting = _shaped_matrix(
        sec.require("splitting"), sec.where("splitting"), A.rank, A.chart.dim, "splitting"
    )
    seed = _int(sec.get("seed", "42"), sec.where("seed"))
    n_samples = _int(sec.get("n_samples", "25"), sec.where("n_samples"))
    if "cube" in sec.entries:
        cube = ws.build("cube", sec.entries["cube"], sec.where("cube"))
        result = monodromy_period(
            A,
            splitting,
            cube,
            n_samples=n_samples,
            seed=seed,
            centrality_tol=_centrality_tol(sec),
        )
        values["period"] = result.as_dict()
        if result.value.size == 1:
            _expect_check(sec, checks, result.scalar())
        return
    names = sec.require("cubes").split()
    cubes = [ws.build("cube", name, sec.where("cubes")) for name in names]
    labels = sec.entries["labels"].split() if "labels" in sec.entries else None
    report = monodromy_group(
        A,
        splitting,
        cubes,
        labels=labels,
        max_denominator=_int(sec.get("max_denominator", "64"), sec.where("max_denominator")),
        n_samples=n_samples,
        seed=seed,
    )
    values["group"] = report.as_dict()
    if "expect" in sec.entries and report.generator is not None:
        _expect_check(sec, checks, report.generator)
    elif "expect" in sec.entries:
        checks.append(_check("expect", float("inf"), 0.0))


def _run_decompose(ws, sec, checks, values):
    fib = ws.build("fibration", sec.require("fibration"), sec.where("fibration"))
    cube = ws.build("cube", sec.require("cube"), sec.where("cube"))
    tol = _float(sec.get("tol", "1e-2"), sec.where("tol"), "tol")
    etol = _float(sec.get("endpoint_tol", "1e-6"), sec.where("endpoint_tol"), "endpoint_tol")
    dec = decompose_path(fib, cube)
    defect = homotopy_defect(dec.witness)
    start_delta = float(np.max(np.abs(dec.horizontal.gamma[0] - cube.gamma[0])))
    end_delta = float(np.max(np.abs(dec.kernel_path.gamma[-1] - cube.gamma[-1])))
    values.update(
        witness_defect=defect,
        start_delta=start_delta,
        end_delta=end_delta,
        kernel_sup=float(np.max(np.abs(dec.kernel_coefficients))),
    )
    checks.append(_check("witness_homotopy", defect, tol))
    checks.append(_check("endpoints", max(start_delta, end_delta), etol))


def run_task(ws: Workspace, sec: SectionSpec, overrides, cfg_hash: str, out_dir: Path) -> dict:
    """Execute one task section and assemble its report dictionary."""
    start = time.perf_counter()
    kind = sec.require("kind")
    checks: list[dict] = []
    values: dict = {}
    error = None
    try:
        if kind == "check":
            _run_check(ws, sec, checks, values)
        elif kind == "flow":
            _run_flow(ws, sec, checks, values, out_dir)
        elif kind == "lift":
            _run_lift(ws, sec, checks, values, out_dir)
        elif kind == "transgress":
            _run_transgress(ws, sec, checks, values)
        elif kind == "monodromy":
            _run_monodromy(ws, sec, checks, values)
        else:
            _run_decompose(ws, sec, checks, values)
    except ValueError as err:
        error = str(err)
    passed = error is None and all(c["passed"] for c in checks)
    report = {
        "task": {
            "name": sec.name,
            "kind": kind,
            "params": {k: sec.entries[k] for k in sorted(sec.entries)},
            "overrides": dict(sorted(overrides.items())),
        },
        "passed": passed,
        "checks": checks,
        "values": _jsonable(values),
        "config_hash": cfg_hash,
        "wall_time_s": round(time.perf_counter() - start, 6),
    }
    if error is not None:
        report["error"] = error
    return report


def _write_report(path: Path, report: dict) -> None:
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


# --- entry points ---------------------------------------------------------------


def _load(config: str, assignments) -> tuple[list[SectionSpec], dict[str, str], Path]:
    path = Path(config)
    text = path.read_text(encoding="utf-8")
    sections = parse_config(text)
    overrides = apply_overrides(sections, list(assignments or []))
    return sections, overrides, path.parent


def _cmd_run(args) -> int:
    try:
        sections, overrides, base_dir = _load(args.config, args.set)
        ws, _ = inspect_config(sections, base_dir)
    except (OSError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    cfg_hash = config_hash(sections, overrides)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    all_passed = True
    ran = 0
    try:
        for sec in sections:
            if sec.kind != "task":
                continue
            report = run_task(ws, sec, overrides, cfg_hash, out_dir)
            _write_report(out_dir / f"{sec.name}.json", report)
            ran += 1
            status = "PASS" if report["passed"] else "FAIL"
            print(f"{sec.name}: {status} ({report['wall_time_s']:.2f}s)")
            all_passed = all_passed and report["passed"]
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"{ran} task(s), reports in {out_dir}")
    return 0 if all_passed else 1


def _cmd_describe(args) -> int:
    try:
        sections, _, base_dir = _load(args.config, args.set)
        _, rows = inspect_config(sections, base_dir)
    except (OSError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    for kind, name, summary in rows:
        print(f"{kind:<10} {name:<20} {summary}")
    n_tasks = sum(1 for kind, _, _ in rows if kind == "task")
    print(f"{len(rows)} section(s), {n_tasks} task(s)")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="algebroids", description="Batch runner for algebroid configs."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="execute the tasks in a config")
    run_p.add_argument("config", help="path to the config file")
    run_p.add_argument(
        "--set",
        action="append",
        metavar="KIND.NAME.KEY=VALUE",
        help="override one config entry (repeatable)",
    )
    run_p.add_argument("--out", default="reports", help="directory for JSON reports")
    run_p.set_defaults(func=_cmd_run)
    desc_p = sub.add_parser("describe", help="validate a config and list its entities")
    desc_p.add_argument("config", help="path to the config file")
    desc_p.add_argument("--set", action="append", metavar="KIND.NAME.KEY=VALUE")
    desc_p.set_defaults(func=_cmd_describe)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
