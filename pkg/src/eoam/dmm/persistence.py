"""Plain-text persistence of lookup tables and phase diagrams.

Floats are written with 17 significant digits, so a save/load cycle
reproduces every value bit for bit. Layout of ``lookup_table.txt``::

    # eoam lookup table
    # format_version: 1
    # provenance: <sha256>
    # units: ...
    shape <n_speeds> <n_dx> <n_mus>
    speeds <values>
    dx <values>
    mus <values>
    maneuver_length <mu index> <one value per speed>
    sources <mu index> <one status per speed>
    plane <name> <mu index>
    <n_speeds lines, each n_dx values>     (row-major: speed rows × dx columns)
    ...

Phase diagrams are CSV files with ``# key: value`` header comments.
"""

from __future__ import annotations

import os
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt
import structlog

from eoam.config import ConfigError, GridSpec
from eoam.vehicle.params import VehicleParams

from .lookup import PLANES, LookupTable3D
from .phase_diagram import DiagramSet, PhaseDiagram
from .provenance import FORMAT_VERSION, check_provenance, provenance_hash

log = structlog.get_logger()

FloatArray = npt.NDArray[np.float64]

TABLE_FILE = "lookup_table.txt"
VEHICLE_FILE = "vehicle.json"
GRID_FILE = "grid.json"
DIAGRAM_COLUMNS = (
    "speed_mps", "stop_m", "stop_buffered_m", "clear_subopt_m",
    "clear_const_m", "clear_buffered_m", "ttc_line_m",
)
_UNITS = (
    "speed m/s; dx m; mu 1; y_target m; ax_target m/s^2; "
    "theta_target rad; kappa_target 1/m; maneuver_length m"
)


class TableFormatError(ValueError):
    def __init__(self, source: str, line_no: int, message: str) -> None:
        self.source = source
        self.line_no = line_no
        super().__init__(f"{source}:{line_no}: {message}")


def diagram_filename(mu: float) -> str:
    return f"phase_diagram_mu_{mu:g}.csv"


def _fmt(values: FloatArray) -> str:
    return " ".join(format(float(x), ".17g") for x in np.ravel(values))


def manifest_line(manifest_hash: str | None) -> list[str]:
    return [f"# manifest: {manifest_hash}"] if manifest_hash else []


def dumps_table(table: LookupTable3D, provenance: str, manifest_hash: str | None = None) -> str:
    n_s, n_dx, n_mu = table.shape
    lines = manifest_line(manifest_hash) + [
        "# eoam lookup table",
        f"# format_version: {FORMAT_VERSION}",
        f"# provenance: {provenance}",
        f"# units: {_UNITS}",
        "# layout: one block per (plane, mu page); rows = speeds, columns = dx",
        f"shape {n_s} {n_dx} {n_mu}",
        f"speeds {_fmt(table.speeds)}",
        f"dx {_fmt(table.dx)}",
        f"mus {_fmt(table.mus)}",
    ]
    for mi in range(n_mu):
        lines.append(f"maneuver_length {mi} {_fmt(table.maneuver_length[:, mi])}")
    if table.sources:
        for mi in range(n_mu):
            lines.append(f"sources {mi} " + " ".join(row[mi] or "-" for row in table.sources))
    for name in PLANES:
        for mi in range(n_mu):
            lines.append(f"plane {name} {mi}")
            lines.extend(_fmt(table.planes[name][si, :, mi]) for si in range(n_s))
    return "\n".join(lines) + "\n"


class _Lines:
    """Non-comment lines with their 1-based numbers; header comments collected."""

    def __init__(self, text: str, source: str) -> None:
        self.source = source
        self.meta: dict[str, str] = {}
        self._items: list[tuple[int, str]] = []
        for no, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].partition(":")
                if sep:
                    self.meta.setdefault(key.strip(), value.strip())
                continue
            self._items.append((no, line))
        self._it: Iterator[tuple[int, str]] = iter(self._items)
        self.line_no = 0

    def next(self, keyword: str | None = None) -> list[str]:
        try:
            self.line_no, line = next(self._it)
        except StopIteration:
            raise TableFormatError(self.source, self.line_no, f"unexpected end of file (wanted {keyword})") from None
        tokens = line.split()
        if keyword is not None and tokens[0] != keyword:
            raise TableFormatError(self.source, self.line_no, f"expected '{keyword}', found '{tokens[0]}'")
        return tokens

    def floats(self, tokens: list[str], count: int) -> FloatArray:
        try:
            values = np.array(tokens, dtype=float)
        except ValueError as exc:
            raise TableFormatError(self.source, self.line_no, str(exc)) from None
        if values.size != count:
            raise TableFormatError(self.source, self.line_no, f"expected {count} values, found {values.size}")
        return values

    def exhausted(self) -> bool:
        return next(self._it, None) is None


def loads_table(text: str, source: str = "<string>") -> tuple[LookupTable3D, str]:
    """Parse a table file; returns the table and its provenance hash."""
    lines = _Lines(text, source)
    version = lines.meta.get("format_version")
    if version != str(FORMAT_VERSION):
        raise TableFormatError(source, 1, f"unsupported format version {version!r}")
    provenance = lines.meta.get("provenance", "")

    shape = lines.next("shape")
    try:
        n_s, n_dx, n_mu = (int(t) for t in shape[1:4])
    except ValueError:
        raise TableFormatError(source, lines.line_no, "shape needs three integers") from None
    speeds = lines.floats(lines.next("speeds")[1:], n_s)
    dx = lines.floats(lines.next("dx")[1:], n_dx)
    mus = lines.floats(lines.next("mus")[1:], n_mu)

    lengths = np.zeros((n_s, n_mu))
    for mi in range(n_mu):
        tokens = lines.next("maneuver_length")
        lengths[:, mi] = lines.floats(tokens[2:], n_s)

    sources: list[list[str]] = [["" for _ in range(n_mu)] for _ in range(n_s)]
    tokens = lines.next()
    if tokens[0] == "sources":
        for mi in range(n_mu):
            if mi:
                tokens = lines.next("sources")
            if len(tokens) - 2 != n_s:
                raise TableFormatError(source, lines.line_no, f"expected {n_s} sources")
            for si, status in enumerate(tokens[2:]):
                sources[si][mi] = "" if status == "-" else status
        tokens = lines.next("plane")

    planes = {name: np.zeros((n_s, n_dx, n_mu)) for name in PLANES}
    for block in range(len(PLANES) * n_mu):
        if block:
            tokens = lines.next("plane")
        if tokens[0] != "plane" or len(tokens) != 3 or tokens[1] not in planes:
            raise TableFormatError(source, lines.line_no, f"bad plane header {' '.join(tokens)!r}")
        name, mi = tokens[1], int(tokens[2])
        for si in range(n_s):
            planes[name][si, :, mi] = lines.floats(lines.next(), n_dx)
    if not lines.exhausted():
        raise TableFormatError(source, lines.line_no, "trailing data after last plane")

    table = LookupTable3D(
        speeds=speeds, dx=dx, mus=mus, planes=planes, maneuver_length=lengths,
        sources=tuple(tuple(r) for r in sources) if any(any(r) for r in sources) else (),
    )
    return table, provenance


def write_table(path: str | os.PathLike[str], table: LookupTable3D, provenance: str,
                manifest_hash: str | None = None) -> Path:
    path = Path(path)
    path.write_text(dumps_table(table, provenance, manifest_hash))
    return path


def read_table(path: str | os.PathLike[str]) -> tuple[LookupTable3D, str]:
    path = Path(path)
    return loads_table(path.read_text(), str(path))


def dumps_diagram(diagram: PhaseDiagram, provenance: str, manifest_hash: str | None = None) -> str:
    lines = manifest_line(manifest_hash) + [
        "# eoam phase diagram",
        f"# mu: {diagram.mu:.17g}",
        f"# ttc_threshold_s: {diagram.ttc_threshold:.17g}",
        f"# buffer: {diagram.buffer:.17g}",
        f"# decel_eff: {diagram.decel_eff:.17g}",
        f"# provenance: {provenance}",
        ",".join(DIAGRAM_COLUMNS),
    ]
    columns = np.column_stack([
        diagram.speeds, diagram.stop, diagram.stop_buffered, diagram.clear_subopt,
        diagram.clear_const, diagram.clear_buffered, diagram.ttc_line,
    ])
    lines.extend(",".join(format(float(x), ".17g") for x in row) for row in columns)
    return "\n".join(lines) + "\n"


def loads_diagram(text: str, source: str = "<string>") -> tuple[PhaseDiagram, str]:
    meta: dict[str, str] = {}
    data: list[str] = []
    header_seen = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            if sep:
                meta[key.strip()] = value.strip()
        elif not header_seen:
            if tuple(line.split(",")) != DIAGRAM_COLUMNS:
                raise TableFormatError(source, 0, f"unexpected columns {line!r}")
            header_seen = True
        else:
            data.append(line)
    try:
        values = np.loadtxt(data, delimiter=",", ndmin=2)
        mu = float(meta["mu"])
        ttc_threshold = float(meta["ttc_threshold_s"])
        buffer = float(meta["buffer"])
        decel_eff = float(meta["decel_eff"])
    except (KeyError, ValueError) as exc:
        raise TableFormatError(source, 0, f"malformed phase diagram: {exc}") from None
    if values.shape[1] != len(DIAGRAM_COLUMNS):
        raise TableFormatError(source, 0, "wrong column count")
    diagram = PhaseDiagram(
        mu=mu,
        ttc_threshold=ttc_threshold,
        buffer=buffer,
        speeds=values[:, 0],
        stop=values[:, 1],
        stop_buffered=values[:, 2],
        clear_subopt=values[:, 3],
        clear_const=values[:, 4],
        clear_buffered=values[:, 5],
        decel_eff=decel_eff,
    )
    return diagram, meta.get("provenance", "")


@dataclass(frozen=True)
class TableSet:
    table: LookupTable3D
    diagrams: DiagramSet
    params: VehicleParams
    grid: GridSpec
    provenance: str


def save_table_set(out_dir: str | os.PathLike[str], tables: TableSet,
                   manifest_hash: str | None = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [write_table(out / TABLE_FILE, tables.table, tables.provenance, manifest_hash)]
    for diagram in tables.diagrams:
        path = out / diagram_filename(diagram.mu)
        path.write_text(dumps_diagram(diagram, tables.provenance, manifest_hash))
        written.append(path)
    (out / VEHICLE_FILE).write_text(tables.params.model_dump_json(indent=2) + "\n")
    (out / GRID_FILE).write_text(tables.grid.model_dump_json(indent=2) + "\n")
    written += [out / VEHICLE_FILE, out / GRID_FILE]
    log.info("table_set_saved", out_dir=str(out), files=len(written), provenance=tables.provenance[:16])
    return written


def load_table_set(tables_dir: str | os.PathLike[str]) -> TableSet:
    """Load and cross-check a table set; raises ConfigError when files are missing."""
    root = Path(tables_dir)
    for name in (TABLE_FILE, VEHICLE_FILE, GRID_FILE):
        if not (root / name).is_file():
            raise ConfigError(root, f"{name} not found (run precompute first)")
    try:
        params = VehicleParams.model_validate_json((root / VEHICLE_FILE).read_text())
        grid = GridSpec.model_validate_json((root / GRID_FILE).read_text())
    except ValueError as exc:
        raise ConfigError(root, f"invalid table metadata: {exc}") from exc
    expected = provenance_hash(params, grid)

    table, found = read_table(root / TABLE_FILE)
    check_provenance(str(root / TABLE_FILE), expected, found)

    diagrams = []
    for mu in table.mus:
        path = root / diagram_filename(float(mu))
        if not path.is_file():
            raise ConfigError(root, f"missing phase diagram page {path.name}")
        diagram, found = loads_diagram(path.read_text(), str(path))
        check_provenance(str(path), expected, found)
        diagrams.append(diagram)

    log.info("table_set_loaded", tables_dir=str(root), mus=[float(m) for m in table.mus])
    return TableSet(table=table, diagrams=DiagramSet(diagrams), params=params, grid=grid, provenance=expected)
