"""Text serialization for spaces and measures, plus CSV output helpers.

Space document grammar (one section per bracketed header, order fixed;
blank lines and ``#`` comments are ignored everywhere):

    [points]
      one point label per line (labels are arbitrary non-whitespace strings)
    [dist]
      n rows of n whitespace-separated floats, row-major
    [marks]
      either the single word ``interval``, or the word ``finite`` followed by
      one line of mark labels and k rows of the k x k mark metric
    [atoms]
      lines ``point_label mark mass``; ``mark`` is a label for finite mark
      spaces and a float in [0, 1] for the interval mark space

Measure documents replace ``[marks]``/``[atoms]`` by a ``[mass]`` section with
one float per line (aligned with ``[points]``).  Floats are written with
``repr`` and therefore round-trip exactly; parsing a serialized document
yields a structurally equal object.
"""

from __future__ import annotations

import csv
from typing import Iterable, Sequence

from .errors import DomainError
from .marked import FmmSpace, MarkSpace, MmmSpace
from .measures import FiniteMeasure, FiniteSpace


def _fmt(x: float) -> str:
    return repr(float(x))


def _space_lines(space: FiniteSpace) -> list[str]:
    lines = ["[points]"]
    lines.extend(space.labels)
    lines.append("[dist]")
    for row in space.dist:
        lines.append(" ".join(_fmt(v) for v in row))
    return lines


def dump_measure(mu: FiniteMeasure) -> str:
    lines = _space_lines(mu.space)
    lines.append("[mass]")
    lines.extend(_fmt(v) for v in mu.mass)
    return "\n".join(lines) + "\n"


def dump_mmm(x: MmmSpace) -> str:
    lines = _space_lines(x.space)
    lines.append("[marks]")
    if x.marks.kind == "interval":
        lines.append("interval")
    else:
        lines.append("finite")
        lines.append(" ".join(x.marks.labels))
        for row in x.marks.dist:
            lines.append(" ".join(_fmt(v) for v in row))
    lines.append("[atoms]")
    for a in x.atoms:
        mark = _fmt(a.mark) if x.marks.kind == "interval" else a.mark
        lines.append(f"{x.space.labels[a.point]} {mark} {_fmt(a.mass)}")
    return "\n".join(lines) + "\n"


def _sections(text: str) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    current = None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            if current in out:
                raise DomainError(f"duplicate section [{current}]")
            out[current] = []
        elif current is None:
            raise DomainError(f"content before first section: {line!r}")
        else:
            out[current].append(line)
    return out


def _parse_space(sec: dict[str, list[str]]) -> FiniteSpace:
    if "points" not in sec or "dist" not in sec:
        raise DomainError("document needs [points] and [dist] sections")
    labels = sec["points"]
    rows = [[float(v) for v in line.split()] for line in sec["dist"]]
    if len(rows) != len(labels):
        raise DomainError("[dist] must have one row per point")
    return FiniteSpace(labels, rows)


def load_measure(text: str) -> FiniteMeasure:
    sec = _sections(text)
    space = _parse_space(sec)
    if "mass" not in sec:
        raise DomainError("measure document needs a [mass] section")
    mass = [float(v) for v in sec["mass"]]
    return FiniteMeasure(space, mass)


def load_mmm(text: str) -> MmmSpace:
    sec = _sections(text)
    space = _parse_space(sec)
    if "marks" not in sec or "atoms" not in sec:
        raise DomainError("space document needs [marks] and [atoms] sections")
    mk = sec["marks"]
    if mk[0] == "interval":
        if len(mk) != 1:
            raise DomainError("interval mark section takes no further lines")
        marks = MarkSpace.unit_interval()
    elif mk[0] == "finite":
        if len(mk) < 2:
            raise DomainError("finite mark section needs a label line")
        labels = mk[1].split()
        rows = [[float(v) for v in line.split()] for line in mk[2:]]
        if len(rows) != len(labels):
            raise DomainError("[marks] metric must have one row per mark label")
        marks = MarkSpace.finite(labels, rows)
    else:
        raise DomainError(f"unknown mark space kind {mk[0]!r}")
    atoms = []
    for line in sec["atoms"]:
        parts = line.split()
        if len(parts) != 3:
            raise DomainError(f"atom line must be 'point mark mass': {line!r}")
        point, mark, mass = parts
        value = float(mark) if marks.kind == "interval" else mark
        atoms.append((space.index(point), value, float(mass)))
    return MmmSpace(space, marks, atoms)


def load_fmm(text: str) -> FmmSpace:
    """Parse a space document that carries exactly one mark per point."""
    x = load_mmm(text)
    if not x.is_functional():
        raise DomainError("document carries several marks on one point")
    markmap: dict[int, object] = {a.point: a.mark for a in x.atoms}
    if len(markmap) < len(x.space):
        raise DomainError("mark map must cover every point (zero-mass points lack one)")
    return FmmSpace(
        x.space, x.marks, x.nu, [markmap[i] for i in range(len(x.space))]
    )


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], meta: str) -> None:
    """CSV with a header row and a trailing ``#`` metadata comment line."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, float) else v for v in row])
        fh.write(f"# {meta}\n")
