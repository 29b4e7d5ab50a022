"""Decision-making phase diagram over (relative distance, relative speed).

Per μ page the diagram holds the stopping-distance curve, the minimum
clearing-distance curves of the lane change (optimized and constant
speed), their buffered copies and the TTC ray. ``classify`` maps a
(rel_dist, rel_speed) point to exactly one action sector:

    G  do nothing            E  forward-collision warning
    C  buffered braking      D  braking without buffer
    B  steer with buffer     F  steer, no buffer left
    A  nothing avoids contact; limit braking

All curves are distances between the ego front bumper and the obstacle
rear bumper at the moment the action starts.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np
import numpy.typing as npt
import structlog
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from eoam.vehicle.params import G, VehicleParams

if TYPE_CHECKING:
    from eoam.config import GridSpec
    from eoam.dmm.lookup import TableRow
    from eoam.trajectory.grid import GridPoint
    from eoam.trajectory.optimizer import FullTrajectory

log = structlog.get_logger()

FloatArray = npt.NDArray[np.float64]


class Sector(enum.Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"
    E = "E"
    F = "F"
    G = "G"

    @property
    def caution(self) -> int:
        return _CAUTION[self]

    @property
    def steers(self) -> bool:
        return self in (Sector.B, Sector.F)

    @property
    def brakes(self) -> bool:
        return self in (Sector.A, Sector.C, Sector.D)


_CAUTION = {
    Sector.G: 0,
    Sector.E: 1,
    Sector.C: 2,
    Sector.D: 2,
    Sector.B: 3,
    Sector.F: 3,
    Sector.A: 4,
}


class ClearanceError(ValueError):
    """The trajectory's front corner never clears the obstacle's rear corner."""


class CurveMonotonicityError(ValueError):
    def __init__(self, curve: str, mu: float, speed: float) -> None:
        self.curve = curve
        self.mu = mu
        self.speed = speed
        super().__init__(f"{curve} not increasing at {speed} m/s on mu={mu} page")


@dataclass(frozen=True)
class ClearingPoint:
    x_clearance: float  # longitudinal position of the grazing front corner (m)
    t_c: float
    y_c: float
    heading: float


def stopping_distance(x_dot_0: float, mu: float, params: VehicleParams) -> float:
    """x_dot_0² / (2·μ·g·decel_eff)."""
    if x_dot_0 < 0:
        raise ValueError(f"x_dot_0 must be non-negative, got {x_dot_0}")
    return x_dot_0**2 / (2.0 * mu * G * params.decel_eff)


def ttc(rel_dist: float, rel_speed: float) -> float:
    """Time to collision; ``inf`` when the gap is not closing."""
    if rel_dist < 0:
        raise ValueError(f"rel_dist must be non-negative, got {rel_dist}")
    if rel_speed <= 0:
        return math.inf
    return rel_dist / rel_speed


def clearance_gap(traj: FullTrajectory | TableRow, wid_obj: float, params: VehicleParams) -> FloatArray:
    """Lateral distance still missing for the front-right corner to clear (m)."""
    heading = traj.theta_target
    return (
        wid_obj / 2.0
        + (params.wid_ego / 2.0) * np.cos(heading)
        - params.len_front * np.sin(heading)
        - traj.y_target
    )


def min_clearing_distance(traj: FullTrajectory, wid_obj: float, params: VehicleParams) -> ClearingPoint:
    """First instant the ego front-right corner reaches the obstacle's rear-left corner."""
    if wid_obj <= 0:
        raise ValueError(f"wid_obj must be positive, got {wid_obj}")
    gap = clearance_gap(traj, wid_obj, params)
    crossed = np.flatnonzero(gap <= 0.0)
    if crossed.size == 0:
        raise ClearanceError(
            f"front corner never clears: smallest lateral gap {float(np.min(gap)):.4f} m"
        )

    k = int(crossed[0])
    if k == 0:
        dx_c = float(traj.dx[0])
    else:
        spline = CubicSpline(traj.dx, gap)
        lo, hi = float(traj.dx[k - 1]), float(traj.dx[k])
        dx_c = hi if gap[k] == 0.0 else brentq(spline, lo, hi, xtol=1e-12)

    heading = float(np.interp(dx_c, traj.dx, traj.theta_target))
    y_c = float(np.interp(dx_c, traj.dx, traj.y_target))
    t_c = float(np.interp(dx_c, traj.dx, traj.t))
    x_clearance = dx_c + params.len_front * math.cos(heading) + (params.wid_ego / 2.0) * math.sin(heading)
    return ClearingPoint(x_clearance=x_clearance, t_c=t_c, y_c=y_c, heading=heading)


def _interp_curve(v: float, speeds: FloatArray, values: FloatArray) -> float:
    """Linear in speed, linear extrapolation past the last sample; inf is contagious."""
    n = speeds.size
    if n == 1:
        return float(values[0])
    i = int(np.clip(np.searchsorted(speeds, v, side="right") - 1, 0, n - 2))
    a, b = float(values[i]), float(values[i + 1])
    if math.isinf(a) or math.isinf(b):
        return math.inf
    w = (v - speeds[i]) / (speeds[i + 1] - speeds[i])
    if w > 1.0:
        return b + (w - 1.0) * (b - a)
    return a + max(w, 0.0) * (b - a)


@dataclass(frozen=True)
class CurveValues:
    stop: float
    stop_buffered: float
    clear: float
    clear_buffered: float
    ttc_line: float


@dataclass(frozen=True)
class PhaseDiagram:
    mu: float
    ttc_threshold: float
    buffer: float
    speeds: FloatArray
    stop: FloatArray
    stop_buffered: FloatArray
    clear_subopt: FloatArray
    clear_const: FloatArray
    clear_buffered: FloatArray
    decel_eff: float

    @property
    def ttc_line(self) -> FloatArray:
        return self.ttc_threshold * self.speeds

    def curves_at(self, rel_speed: float) -> CurveValues:
        stop = rel_speed**2 / (2.0 * self.mu * G * self.decel_eff)
        clear = _interp_curve(rel_speed, self.speeds, self.clear_subopt)
        clear_b = _interp_curve(rel_speed, self.speeds, self.clear_buffered)
        return CurveValues(
            stop=stop,
            stop_buffered=self.buffer * stop,
            clear=clear,
            clear_buffered=clear_b,
            ttc_line=self.ttc_threshold * rel_speed,
        )

    def classify(self, rel_dist: float, rel_speed: float) -> Sector:
        if rel_dist < 0:
            raise ValueError(f"rel_dist must be non-negative, got {rel_dist}")
        if rel_speed <= 0:
            return Sector.G
        c = self.curves_at(rel_speed)
        d = rel_dist
        guard = c.stop_buffered if math.isinf(c.clear_buffered) else max(c.stop_buffered, c.clear_buffered)
        if d >= guard:
            return Sector.G if d >= c.ttc_line else Sector.E
        if d >= c.stop_buffered:
            return Sector.C
        if d >= c.stop:
            return Sector.D
        if d >= c.clear_buffered:
            return Sector.B
        if d >= c.clear:
            return Sector.F
        return Sector.A

    def with_buffer(self, buffer: float) -> PhaseDiagram:
        """Same page with a different buffer multiplier."""
        return replace(
            self,
            buffer=buffer,
            stop_buffered=buffer * self.stop,
            clear_buffered=buffer * self.clear_subopt,
        )


def classify_phase(diagram: PhaseDiagram, rel_dist: float, rel_speed: float) -> Sector:
    return diagram.classify(rel_dist, rel_speed)


def _clear_value(traj: FullTrajectory | None, wid_obj: float, params: VehicleParams) -> float:
    if traj is None:
        return math.inf
    return min_clearing_distance(traj, wid_obj, params).x_clearance - params.len_front


def _check_increasing(
    name: str, mu: float, speeds: FloatArray, values: FloatArray, *, strict: bool = True,
) -> None:
    """Finite values must rise with speed; inf (no maneuver) may only form a suffix."""
    if np.any(np.isnan(values)):
        raise CurveMonotonicityError(name, mu, float(speeds[int(np.argmax(np.isnan(values)))]))
    finite = np.isfinite(values)
    head = values.size if finite.all() else int(np.argmin(finite))
    if np.any(finite[head:]):
        raise CurveMonotonicityError(name, mu, float(speeds[head]))
    steps = np.diff(values[:head])
    bad = np.flatnonzero(steps <= 0.0 if strict else steps < 0.0)
    if bad.size:
        raise CurveMonotonicityError(name, mu, float(speeds[bad[0] + 1]))


def build_phase_diagram(
    points: list[GridPoint],
    mu: float,
    params: VehicleParams,
    grid: GridSpec,
) -> PhaseDiagram:
    """Assemble one μ page from its grid points (any order, one per speed)."""
    from eoam.trajectory.grid import PointStatus

    page = sorted((p for p in points if p.mu == mu), key=lambda p: p.speed)
    if not page:
        raise ValueError(f"no grid points for mu={mu}")

    speeds = [0.0]
    clear_subopt = [0.0]
    clear_const = [0.0]
    for p in page:
        speeds.append(p.speed)
        clear_const.append(_clear_value(p.baseline, grid.wid_obj, params))
        if p.status.has_trajectory:
            clear_subopt.append(_clear_value(p.trajectory, grid.wid_obj, params))
        elif p.status is PointStatus.BELOW_DESIGN_SPEED:
            clear_subopt.append(clear_const[-1])
        else:
            clear_subopt.append(math.inf)

    v = np.asarray(speeds)
    const = np.asarray(clear_const)
    raw = np.asarray(clear_subopt)
    _check_increasing("clear_const", mu, v, const)

    # Running maximum: optimizer fallbacks may leave small dips, and a
    # braking-only speed disables steering for every faster speed.
    subopt = np.maximum.accumulate(raw)
    if np.any(subopt > raw):
        log.info("clear_curve_enveloped", mu=mu, points=int(np.count_nonzero(subopt > raw)))
    _check_increasing("clear_subopt", mu, v, subopt, strict=False)

    stop = v**2 / (2.0 * mu * G * params.decel_eff)
    _check_increasing("stop", mu, v, stop)

    diagram = PhaseDiagram(
        mu=mu,
        ttc_threshold=grid.ttc_threshold(mu),
        buffer=grid.buffer,
        speeds=v,
        stop=stop,
        stop_buffered=grid.buffer * stop,
        clear_subopt=subopt,
        clear_const=const,
        clear_buffered=grid.buffer * subopt,
        decel_eff=params.decel_eff,
    )
    log.info(
        "phase_diagram_built",
        mu=mu,
        speeds=int(v.size),
        ttc_threshold=diagram.ttc_threshold,
        braking_only=int(np.count_nonzero(np.isinf(subopt))),
    )
    return diagram


def _blend(a: FloatArray, b: FloatArray, w: float) -> FloatArray:
    out = (1.0 - w) * a + w * b
    return np.where(np.isinf(a) | np.isinf(b), np.inf, out)


class DiagramSet:
    """Phase-diagram pages keyed by μ; runtime μ between pages is blended linearly."""

    def __init__(self, diagrams: list[PhaseDiagram]) -> None:
        if not diagrams:
            raise ValueError("at least one phase diagram is required")
        self._pages = sorted(diagrams, key=lambda d: d.mu)
        self._cache: dict[float, PhaseDiagram] = {}

    @property
    def mus(self) -> list[float]:
        return [d.mu for d in self._pages]

    def __iter__(self):  # type: ignore[no-untyped-def]
        return iter(self._pages)

    def __len__(self) -> int:
        return len(self._pages)

    def page(self, mu: float) -> PhaseDiagram:
        for d in self._pages:
            if d.mu == mu:
                return d
        raise KeyError(mu)

    def for_mu(self, mu: float) -> PhaseDiagram:
        if mu in self._cache:
            return self._cache[mu]
        pages = self._pages
        if mu <= pages[0].mu or mu >= pages[-1].mu:
            edge = pages[0] if mu <= pages[0].mu else pages[-1]
            if mu != edge.mu:
                log.warning("diagram_mu_clamped", mu=mu, page=edge.mu)
            diagram = edge
        else:
            hi_idx = next(i for i, d in enumerate(pages) if d.mu >= mu)
            hi, lo = pages[hi_idx], pages[hi_idx - 1]
            if hi.mu == mu:
                diagram = hi
            else:
                if not np.array_equal(lo.speeds, hi.speeds):
                    raise ValueError("phase diagram pages do not share a speed axis")
                w = (mu - lo.mu) / (hi.mu - lo.mu)
                subopt = _blend(lo.clear_subopt, hi.clear_subopt, w)
                buffer = (1.0 - w) * lo.buffer + w * hi.buffer
                stop = lo.speeds**2 / (2.0 * mu * G * lo.decel_eff)
                diagram = PhaseDiagram(
                    mu=mu,
                    ttc_threshold=(1.0 - w) * lo.ttc_threshold + w * hi.ttc_threshold,
                    buffer=buffer,
                    speeds=lo.speeds,
                    stop=stop,
                    stop_buffered=buffer * stop,
                    clear_subopt=subopt,
                    clear_const=_blend(lo.clear_const, hi.clear_const, w),
                    clear_buffered=buffer * subopt,
                    decel_eff=lo.decel_eff,
                )
        self._cache[mu] = diagram
        return diagram
