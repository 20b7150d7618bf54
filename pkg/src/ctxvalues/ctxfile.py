"""Line-oriented context files.

A file is a sequence of sections; blank lines and ``#`` comments are ignored::

    DIM 2
    GRANGE 0 0.5
    OUTCOME 1
    1/2 + g, 0
    0, 1/2 - g
    OUTCOME 2
    ...
    OBSERVABLE
    1, 0
    0, -1
    STATE
    1/2, 1/2
    1/2, 1/2
    POST
    4/5, 2/5
    2/5, 1/5

Matrix rows are comma-separated expressions in the ``g`` grammar; the
observable, state and post-selection entries must be constant. ``STATE``,
``POST`` and ``GRANGE`` are optional. Entry text is kept verbatim so that
:meth:`ContextFile.dumps` reproduces a canonical file byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .gexpr import GExprSyntaxError, GMatrixFn, parse
from .measurement import MeasurementContext, Observable, PostSelection, State

HEADER = "# ctxvalues context file"

Rows = List[List[str]]


class ContextFileError(ValueError):
    def __init__(self, message: str, line: int, column: int = 0):
        self.line = line
        self.column = column
        loc = f"line {line}" + (f", column {column}" if column else "")
        super().__init__(f"{loc}: {message}")


@dataclass
class ContextFile:
    dim: int
    outcomes: List[Tuple[str, Rows]]
    observable: Rows
    state: Optional[Rows] = None
    post: Optional[Rows] = None
    grange: Optional[Tuple[str, str]] = None
    # (line, column) of every entry for error reporting; not serialized
    locations: dict = field(default_factory=dict, repr=False, compare=False)

    # ------------------------------------------------------------------
    @classmethod
    def loads(cls, text: str) -> "ContextFile":
        return _Reader(text).read()

    @classmethod
    def load(cls, path) -> "ContextFile":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())

    def dumps(self) -> str:
        out = [HEADER, f"DIM {self.dim}"]
        if self.grange is not None:
            out.append(f"GRANGE {self.grange[0]} {self.grange[1]}")
        for label, rows in self.outcomes:
            out.append(f"OUTCOME {label}")
            out.extend(", ".join(r) for r in rows)
        for name, rows in (("OBSERVABLE", self.observable), ("STATE", self.state), ("POST", self.post)):
            if rows is not None:
                out.append(name)
                out.extend(", ".join(r) for r in rows)
        return "\n".join(out) + "\n"

    # ------------------------------------------------------------------
    def validity(self) -> Optional[Tuple[float, float]]:
        if self.grange is None:
            return None
        return (float(self.grange[0]), float(self.grange[1]))

    def operators(self) -> List[GMatrixFn]:
        ops = []
        for k, (label, rows) in enumerate(self.outcomes):
            grid = []
            for i, row in enumerate(rows):
                grid.append([self._parse_entry(("OUTCOME", k, i, j), s) for j, s in enumerate(row)])
            ops.append(GMatrixFn(grid, validity=self.validity()))
        return ops

    def to_context(self, check: bool = True) -> MeasurementContext:
        return MeasurementContext(self.operators(), labels=[lab for lab, _ in self.outcomes],
                                  validity=self.validity(), check=check)

    def constant_matrix(self, section: str) -> Optional[np.ndarray]:
        rows = {"OBSERVABLE": self.observable, "STATE": self.state, "POST": self.post}[section]
        if rows is None:
            return None
        m = np.zeros((self.dim, self.dim))
        for i, row in enumerate(rows):
            for j, s in enumerate(row):
                e = self._parse_entry((section, 0, i, j), s)
                if e.depends_on_g:
                    line, col = self.locations.get((section, 0, i, j), (0, 0))
                    raise ContextFileError(f"{section} entry {s!r} depends on g", line, col)
                m[i, j] = e(0.0)
        return m

    def get_observable(self) -> Observable:
        return Observable(self.constant_matrix("OBSERVABLE"))

    def get_state(self) -> Optional[State]:
        m = self.constant_matrix("STATE")
        return None if m is None else State(m)

    def get_post(self) -> Optional[PostSelection]:
        m = self.constant_matrix("POST")
        return None if m is None else PostSelection(m)

    def with_diagonal_observable(self, values: Sequence[str]) -> "ContextFile":
        if len(values) != self.dim:
            raise ValueError(f"--obs needs {self.dim} values, got {len(values)}")
        rows = [[values[i] if i == j else "0" for j in range(self.dim)] for i in range(self.dim)]
        return replace(self, observable=rows)

    def _parse_entry(self, key, src: str):
        try:
            return parse(src)
        except GExprSyntaxError as exc:
            line, col = self.locations.get(key, (0, 0))
            raise ContextFileError(str(exc), line, col + exc.offset) from exc


class _Reader:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0
        self.locations: dict = {}

    def _next(self):
        while self.pos < len(self.lines):
            raw = self.lines[self.pos]
            self.pos += 1
            stripped = raw.strip()
            if stripped and not stripped.startswith("#"):
                return self.pos, raw
        return None

    def _matrix(self, dim: int, key_prefix) -> Rows:
        rows = []
        for i in range(dim):
            got = self._next()
            if got is None:
                raise ContextFileError(f"expected {dim} matrix rows", len(self.lines))
            lineno, raw = got
            parts = raw.split(",")
            if len(parts) != dim:
                raise ContextFileError(f"expected {dim} comma-separated entries, got {len(parts)}", lineno)
            col = 1
            row = []
            for j, part in enumerate(parts):
                lead = len(part) - len(part.lstrip())
                text = part.strip()
                if not text:
                    raise ContextFileError("empty entry", lineno, col + lead)
                self.locations[(*key_prefix, i, j)] = (lineno, col + lead)
                row.append(text)
                col += len(part) + 1
            rows.append(row)
        return rows

    def read(self) -> ContextFile:
        dim = None
        grange = None
        outcomes: List[Tuple[str, Rows]] = []
        sections = {}
        while True:
            got = self._next()
            if got is None:
                break
            lineno, raw = got
            words = raw.split()
            key = words[0].upper()
            if key == "DIM":
                if len(words) != 2 or not words[1].isdigit() or int(words[1]) < 1:
                    raise ContextFileError("DIM takes one positive integer", lineno)
                dim = int(words[1])
                continue
            if dim is None:
                raise ContextFileError(f"{words[0]} before DIM", lineno)
            if key == "GRANGE":
                if len(words) != 3:
                    raise ContextFileError("GRANGE takes two numbers", lineno)
                try:
                    lo, hi = float(words[1]), float(words[2])
                except ValueError:
                    raise ContextFileError("GRANGE takes two numbers", lineno) from None
                if not 0 <= lo < hi:
                    raise ContextFileError("GRANGE needs 0 <= lo < hi", lineno)
                grange = (words[1], words[2])
            elif key == "OUTCOME":
                label = " ".join(words[1:]) or str(len(outcomes) + 1)
                outcomes.append((label, self._matrix(dim, ("OUTCOME", len(outcomes)))))
            elif key in ("OBSERVABLE", "STATE", "POST"):
                if key in sections:
                    raise ContextFileError(f"duplicate {key} section", lineno)
                sections[key] = self._matrix(dim, (key, 0))
            else:
                raise ContextFileError(f"unknown section {words[0]!r}", lineno)
        if dim is None:
            raise ContextFileError("missing DIM", 1)
        if not outcomes:
            raise ContextFileError("no OUTCOME sections", len(self.lines))
        if "OBSERVABLE" not in sections:
            raise ContextFileError("missing OBSERVABLE section", len(self.lines))
        return ContextFile(dim=dim, outcomes=outcomes, observable=sections["OBSERVABLE"],
                           state=sections.get("STATE"), post=sections.get("POST"), grange=grange,
                           locations=self.locations)
