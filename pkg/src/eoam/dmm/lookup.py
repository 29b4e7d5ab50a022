"""Three-dimensional lookup tables: speed × differential-x × μ pages.

Four value planes are stored: lateral target, longitudinal acceleration
target, path yaw and path curvature. The steering angle is deliberately
not tabulated; the runtime derives it from curvature and feedback.

All rows share a common dx axis. A row whose maneuver is shorter than
the axis holds its terminal values past its own end.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import numpy.typing as npt
import structlog
from scipy.integrate import cumulative_trapezoid

from eoam.vehicle.params import V_X_FLOOR

if TYPE_CHECKING:
    from eoam.config import GridSpec
    from eoam.trajectory.grid import GridPoint

log = structlog.get_logger()

FloatArray = npt.NDArray[np.float64]

PLANES = ("y_target", "ax_target", "theta_target", "kappa_target")


class AxisMismatchError(ValueError):
    """μ pages or value planes disagree on their axes."""


@dataclass(frozen=True)
class TableSample:
    y_target: float
    ax_target: float
    theta_target: float
    kappa_target: float


@dataclass
class ClampCounter:
    """Counts out-of-hull queries per axis; logs the first of each."""

    counts: Counter[str] = field(default_factory=Counter)

    def record(self, axis: str, value: float, lo: float, hi: float) -> None:
        if self.counts[axis] == 0:
            log.warning("table_clamped", axis=axis, value=value, lo=lo, hi=hi)
        self.counts[axis] += 1

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def _strictly_increasing(axis: FloatArray) -> bool:
    return bool(axis.ndim == 1 and axis.size >= 1 and np.all(np.diff(axis) > 0))


def _bracket(axis: FloatArray, value: float) -> tuple[int, int, float]:
    n = axis.size
    if n == 1:
        return 0, 0, 0.0
    i = int(np.clip(np.searchsorted(axis, value, side="right") - 1, 0, n - 2))
    w = (value - axis[i]) / (axis[i + 1] - axis[i])
    return i, i + 1, float(w)


@dataclass(frozen=True)
class TableRow:
    """One maneuver row, already blended in speed and μ; indexed by dx."""

    speed: float
    mu: float
    dx: FloatArray
    length: float
    values: dict[str, FloatArray]

    def at(self, dx: float) -> TableSample:
        return TableSample(*(float(np.interp(dx, self.dx, self.values[p])) for p in PLANES))

    def terminal(self) -> TableSample:
        return self.at(self.length)

    @property
    def y_target(self) -> FloatArray:
        return self.values["y_target"]

    @property
    def theta_target(self) -> FloatArray:
        return self.values["theta_target"]

    def elapsed(self) -> FloatArray:
        """Planned time at each dx, integrating the acceleration plane from ``speed``."""
        v_sq = self.speed**2 + 2.0 * cumulative_trapezoid(self.values["ax_target"], self.dx, initial=0.0)
        vx = np.sqrt(np.maximum(v_sq, V_X_FLOOR**2))
        return cumulative_trapezoid(1.0 / vx, self.dx, initial=0.0)


@dataclass(frozen=True)
class LookupTable3D:
    speeds: FloatArray
    dx: FloatArray
    mus: FloatArray
    planes: dict[str, FloatArray]  # each (speeds, dx, mus)
    maneuver_length: FloatArray  # (speeds, mus)
    sources: tuple[tuple[str, ...], ...] = ()  # point status per (speed, mu)

    def __post_init__(self) -> None:
        for name in ("speeds", "dx", "mus"):
            if not _strictly_increasing(getattr(self, name)):
                raise AxisMismatchError(f"{name} axis must be strictly increasing")
        shape = (self.speeds.size, self.dx.size, self.mus.size)
        if set(self.planes) != set(PLANES):
            raise AxisMismatchError(f"expected planes {PLANES}, got {tuple(self.planes)}")
        for name, plane in self.planes.items():
            if plane.shape != shape:
                raise AxisMismatchError(f"plane {name} has shape {plane.shape}, expected {shape}")
        if self.maneuver_length.shape != shape[::2]:
            raise AxisMismatchError("maneuver_length does not match the speed and mu axes")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.speeds.size, self.dx.size, self.mus.size

    def _clamp(self, axis: str, value: float, counter: ClampCounter | None) -> float:
        grid = getattr(self, axis)
        lo, hi = float(grid[0]), float(grid[-1])
        if value < lo or value > hi:
            if counter is not None:
                counter.record(axis, value, lo, hi)
            return min(max(value, lo), hi)
        return value

    def interpolate(
        self, speed: float, dx: float, mu: float, counter: ClampCounter | None = None,
    ) -> TableSample:
        """Bilinear in (speed, dx), linear across μ pages.

        Speed and μ outside the hull are clamped and counted; dx past the
        axis holds the terminal column without counting.
        """
        speed = self._clamp("speeds", speed, counter)
        mu = self._clamp("mus", mu, counter)
        dx = min(max(dx, 0.0), float(self.dx[-1]))
        si0, si1, sw = _bracket(self.speeds, speed)
        di0, di1, dw = _bracket(self.dx, dx)
        mi0, mi1, mw = _bracket(self.mus, mu)
        out = []
        for p in PLANES:
            v = self.planes[p]
            c00 = (1 - dw) * v[si0, di0, mi0] + dw * v[si0, di1, mi0]
            c01 = (1 - dw) * v[si0, di0, mi1] + dw * v[si0, di1, mi1]
            c10 = (1 - dw) * v[si1, di0, mi0] + dw * v[si1, di1, mi0]
            c11 = (1 - dw) * v[si1, di0, mi1] + dw * v[si1, di1, mi1]
            c0 = (1 - sw) * c00 + sw * c10
            c1 = (1 - sw) * c01 + sw * c11
            out.append(float((1 - mw) * c0 + mw * c1))
        return TableSample(*out)

    def length_at(self, speed: float, mu: float) -> float:
        speed = min(max(speed, float(self.speeds[0])), float(self.speeds[-1]))
        mu = min(max(mu, float(self.mus[0])), float(self.mus[-1]))
        si0, si1, sw = _bracket(self.speeds, speed)
        mi0, mi1, mw = _bracket(self.mus, mu)
        L = self.maneuver_length
        return float(
            (1 - sw) * ((1 - mw) * L[si0, mi0] + mw * L[si0, mi1])
            + sw * ((1 - mw) * L[si1, mi0] + mw * L[si1, mi1])
        )

    def row(self, speed: float, mu: float, counter: ClampCounter | None = None) -> TableRow:
        """Blend once in (speed, μ); the runtime then only interpolates along dx."""
        speed = self._clamp("speeds", speed, counter)
        mu = self._clamp("mus", mu, counter)
        si0, si1, sw = _bracket(self.speeds, speed)
        mi0, mi1, mw = _bracket(self.mus, mu)
        values = {}
        for p in PLANES:
            v = self.planes[p]
            c0 = (1 - sw) * v[si0, :, mi0] + sw * v[si1, :, mi0]
            c1 = (1 - sw) * v[si0, :, mi1] + sw * v[si1, :, mi1]
            values[p] = (1 - mw) * c0 + mw * c1
        return TableRow(speed=speed, mu=mu, dx=self.dx, length=self.length_at(speed, mu), values=values)


def interpolate(
    table: LookupTable3D, speed: float, dx: float, mu: float, counter: ClampCounter | None = None,
) -> TableSample:
    return table.interpolate(speed, dx, mu, counter)


def build_lookup_tables(points: list[GridPoint], grid: GridSpec) -> LookupTable3D:
    """Resample every grid trajectory onto one dx axis and stack the μ pages."""
    mus = sorted({p.mu for p in points})
    by_page: dict[float, dict[float, GridPoint]] = {m: {} for m in mus}
    for p in points:
        by_page[p.mu][p.speed] = p
    speed_sets = {tuple(sorted(page)) for page in by_page.values()}
    if len(speed_sets) != 1:
        raise AxisMismatchError("mu pages do not share the same speed axis")
    speeds = np.asarray(speed_sets.pop(), dtype=float)

    def source(p: GridPoint):  # type: ignore[no-untyped-def]
        return p.trajectory if p.trajectory is not None else p.baseline

    lengths = [source(p).length for p in points if source(p) is not None]
    max_len = max(lengths, default=grid.dx_step)
    n_dx = int(math.ceil(max_len / grid.dx_step - 1e-9)) + 1
    dx = np.arange(n_dx, dtype=float) * grid.dx_step

    shape = (speeds.size, dx.size, len(mus))
    planes = {p: np.zeros(shape) for p in PLANES}
    maneuver_length = np.zeros(shape[::2])
    sources: list[list[str]] = [["" for _ in mus] for _ in speeds]

    for mi, mu in enumerate(mus):
        for si, speed in enumerate(speeds):
            point = by_page[mu][float(speed)]
            traj = source(point)
            sources[si][mi] = point.status.value
            if traj is None:
                log.warning("lookup_row_straight", speed=float(speed), mu=mu, status=point.status.value)
                maneuver_length[si, mi] = grid.dx_step
                continue
            planes["y_target"][si, :, mi] = np.interp(dx, traj.dx, traj.y_target)
            planes["ax_target"][si, :, mi] = np.interp(dx, traj.dx, traj.ax_target)
            planes["theta_target"][si, :, mi] = np.interp(dx, traj.dx, traj.theta_target)
            planes["kappa_target"][si, :, mi] = np.interp(dx, traj.dx, traj.kappa_target)
            maneuver_length[si, mi] = traj.length

    table = LookupTable3D(
        speeds=speeds,
        dx=dx,
        mus=np.asarray(mus, dtype=float),
        planes=planes,
        maneuver_length=maneuver_length,
        sources=tuple(tuple(r) for r in sources),
    )
    log.info("lookup_tables_built", speeds=int(speeds.size), dx=int(dx.size), mus=mus)
    return table
