"""Distance-minimizing longitudinal profile for a fixed steering input.

The lane-change steering δ(s) comes from the inverse-dynamics stage and
is replayed against distance travelled. What remains free is the
tractive force u₁(τ), piecewise linear on ``n_nodes`` in normalized time
τ ∈ [0, 1], and the maneuver duration t_f. The objective is the
longitudinal distance x(t_f) at which the lateral offset reaches y_f.

Transcription is direct shooting: the global-frame planar dynamics are
integrated with fixed RK4 sub-steps between nodes. The heading at t_f
must be back within ``terminal_heading_tol`` of straight ahead, so the
row ends on a lane-centre line the runtime can hold. Gradients come from
forward differences evaluated as a single batched integration (one row
per perturbed decision variable). SLSQP solves the NLP. An independent
audit re-integrates every node interval on a finer grid and re-checks
the path constraints before a profile is accepted. Otherwise the
constant-speed trajectory is returned.

State ordering is (x, ẋ, y, ẏ, ψ, ψ̇, s), s being distance travelled.
"""

from __future__ import annotations

import enum
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
import structlog
from scipy.optimize import Bounds, minimize

from eoam.vehicle.dynamics import lateral_tire_force
from eoam.vehicle.params import V_X_FLOOR, VehicleParams

from .inverse_dynamics import InverseSolution, accel_envelope
from .path_gen import ArcPath

log = structlog.get_logger()

FloatArray = npt.NDArray[np.float64]

# Lowest initial speed for which a maneuver is optimized.
DESIGN_SPEED_FLOOR = 12.0

_FD_STEP = 1e-6
_N_STATES = 7
_X, _XD, _Y, _YD, _PSI, _R, _S = range(_N_STATES)


class TrajectorySource(enum.Enum):
    OPTIMIZED = "optimized"
    CONSTANT_SPEED = "constant_speed"


class OcpInfeasibleError(ValueError):
    """No longitudinal profile can accompany the given steering solution."""


class OcpMaxIterError(RuntimeError):
    """Iteration limit reached; ``best`` holds an audited iterate if one exists."""

    def __init__(self, iterations: int, best: FullTrajectory | None) -> None:
        self.iterations = iterations
        self.best = best
        super().__init__(f"optimizer stopped after {iterations} iterations")


@dataclass(frozen=True)
class OcpSpec:
    x_dot_0: float
    mu: float
    y_f: float
    params: VehicleParams
    lane_change_time: float
    n_nodes: int = 61
    substeps: int = 2
    audit_refine: int = 8
    max_iter: int = 60
    ftol: float = 1e-7
    audit_tol: float = 1e-4
    min_speed: float = 5.0
    t_f_scale_bounds: tuple[float, float] = (0.5, 2.0)
    terminal_heading_tol: float = 0.01  # rad

    def __post_init__(self) -> None:
        if self.x_dot_0 < DESIGN_SPEED_FLOOR:
            raise ValueError(
                f"x_dot_0={self.x_dot_0} m/s below the design floor {DESIGN_SPEED_FLOOR} m/s"
            )
        if self.y_f <= 0:
            raise ValueError(f"y_f must be positive, got {self.y_f}")
        if not 0 < self.mu <= 1:
            raise ValueError(f"mu must lie in (0, 1], got {self.mu}")
        if self.n_nodes < 3:
            raise ValueError("n_nodes must be at least 3")
        if self.lane_change_time <= 0:
            raise ValueError("lane_change_time must be positive")
        if self.terminal_heading_tol <= 0:
            raise ValueError("terminal_heading_tol must be positive")


@dataclass(frozen=True)
class FullTrajectory:
    dx: FloatArray
    y_target: FloatArray
    ax_target: FloatArray
    theta_target: FloatArray
    kappa_target: FloatArray
    vx_ref: FloatArray
    t: FloatArray
    x_dot_0: float
    mu: float
    y_f: float
    t_f_achieved: float
    source: TrajectorySource

    @property
    def length(self) -> float:
        return float(self.dx[-1])

    @property
    def objective(self) -> float:
        """Longitudinal distance covered by the lane change."""
        return float(self.dx[-1] - self.dx[0])


@dataclass(frozen=True)
class AuditReport:
    max_defect: float
    max_path_violation: float
    max_bound_violation: float
    terminal_error: float
    tol: float
    worst_state: int = field(default=-1)

    @property
    def passed(self) -> bool:
        return (
            self.max_defect <= self.tol
            and self.max_path_violation <= self.tol
            and self.max_bound_violation <= self.tol
            and self.terminal_error <= self.tol
        )


def constant_speed_trajectory(arc: ArcPath, x_dot_0: float, mu: float, y_f: float) -> FullTrajectory:
    """The constant-speed lane change itself: zero acceleration, v ≡ x_dot_0."""
    n = arc.s.size
    return FullTrajectory(
        dx=arc.x - arc.x[0],
        y_target=arc.y.copy(),
        ax_target=np.zeros(n),
        theta_target=arc.theta.copy(),
        kappa_target=arc.kappa.copy(),
        vx_ref=np.full(n, float(x_dot_0)),
        t=arc.t.copy(),
        x_dot_0=float(x_dot_0),
        mu=float(mu),
        y_f=float(y_f),
        t_f_achieved=float(arc.t[-1]),
        source=TrajectorySource.CONSTANT_SPEED,
    )


class _Shooter:
    """Batched RK4 shooting of the planar model under a fixed δ(s)."""

    def __init__(self, spec: OcpSpec, steering: InverseSolution) -> None:
        self.spec = spec
        self.p = spec.params
        self.n = spec.n_nodes
        self.tau_nodes = np.linspace(0.0, 1.0, self.n)
        self.s_grid = steering.s
        self.delta_grid = steering.delta
        self.f_scale = spec.mu * abs(self.p.f_t_min_brk)
        self.t_ref = spec.lane_change_time
        self.x_ref = spec.x_dot_0 * spec.lane_change_time
        self.f_y_max = self.p.lateral_plateau_rear(spec.mu)

    # -- decision vector ---------------------------------------------------

    @property
    def n_vars(self) -> int:
        return self.n + 1

    def decode(self, z: FloatArray) -> tuple[FloatArray, FloatArray]:
        z = np.atleast_2d(z)
        return z[:, : self.n] * self.f_scale, z[:, self.n] * self.t_ref

    def encode(self, u: FloatArray, t_f: float) -> FloatArray:
        return np.concatenate([np.asarray(u, dtype=float) / self.f_scale, [t_f / self.t_ref]])

    def bounds(self) -> Bounds:
        lo_t, hi_t = self.spec.t_f_scale_bounds
        lb = np.full(self.n_vars, self.p.braking_limit(self.spec.mu) / self.f_scale)
        ub = np.full(self.n_vars, self.p.engine_limit(self.spec.mu) / self.f_scale)
        lb[self.n], ub[self.n] = lo_t, hi_t
        return Bounds(lb, ub)

    # -- dynamics ----------------------------------------------------------

    def forces(self, X: FloatArray) -> tuple[FloatArray, ...]:
        p, mu = self.p, self.spec.mu
        cos_psi, sin_psi = np.cos(X[_PSI]), np.sin(X[_PSI])
        vx = X[_XD] * cos_psi + X[_YD] * sin_psi
        vy = -X[_XD] * sin_psi + X[_YD] * cos_psi
        vx_safe = np.maximum(vx, V_X_FLOOR)
        delta = np.interp(X[_S], self.s_grid, self.delta_grid, right=0.0)
        alpha_f = np.arctan((vy + p.d_f * X[_R]) / vx_safe) - delta
        alpha_r = np.arctan((vy - p.d_r * X[_R]) / vx_safe)
        f_f = lateral_tire_force(p.c_alpha_f, alpha_f, mu, p.alpha_star)
        f_r = lateral_tire_force(p.c_alpha_r, alpha_r, mu, p.alpha_star)
        return vx, delta, alpha_f, f_f, f_r, cos_psi, sin_psi

    def rates(self, X: FloatArray, u: FloatArray) -> FloatArray:
        p = self.p
        _, delta, _, f_f, f_r, cos_psi, sin_psi = self.forces(X)
        heading = X[_PSI] + delta
        xdd = (u * cos_psi - f_r * sin_psi - f_f * np.sin(heading)) / p.m
        ydd = (u * sin_psi + f_r * cos_psi + f_f * np.cos(heading)) / p.m
        rdot = (p.d_f * f_f * np.cos(delta) - p.d_r * f_r) / p.i_z
        return np.stack([X[_XD], xdd, X[_YD], ydd, X[_R], rdot, np.hypot(X[_XD], X[_YD])])

    def initial_state(self, batch: int) -> FloatArray:
        x0 = np.zeros((_N_STATES, batch))
        x0[_XD] = self.spec.x_dot_0
        return x0

    def integrate(
        self,
        x0: FloatArray,
        u_at: Callable[[float | FloatArray], FloatArray],
        tau0: float | FloatArray,
        span: float,
        n_steps: int,
        t_f: FloatArray,
        record_every: int,
    ) -> FloatArray:
        """RK4 over ``span`` of normalized time; returns (n_records, 7, batch)."""
        h_tau = span / n_steps
        h = h_tau * t_f
        X = x0.copy()
        records = [X]
        for i in range(n_steps):
            tau = tau0 + i * h_tau
            u_mid = u_at(tau + 0.5 * h_tau)
            k1 = self.rates(X, u_at(tau))
            k2 = self.rates(X + 0.5 * h * k1, u_mid)
            k3 = self.rates(X + 0.5 * h * k2, u_mid)
            k4 = self.rates(X + h * k3, u_at(tau + h_tau))
            X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if (i + 1) % record_every == 0:
                records.append(X)
        return np.stack(records)

    def batch_controls(self, U: FloatArray) -> Callable[[float], FloatArray]:
        n_int = self.n - 1

        def u_at(tau: float) -> FloatArray:
            pos = min(max(tau * n_int, 0.0), float(n_int))
            idx = min(int(pos), n_int - 1)
            frac = pos - idx
            return U[:, idx] * (1.0 - frac) + U[:, idx + 1] * frac

        return u_at

    def shoot(self, Z: FloatArray, refine: int = 1) -> tuple[FloatArray, FloatArray, FloatArray]:
        """Node states (n_nodes, 7, B), node forces (B, n_nodes) and t_f (B,)."""
        U, t_f = self.decode(Z)
        steps = (self.n - 1) * self.spec.substeps * refine
        records = self.integrate(
            self.initial_state(U.shape[0]), self.batch_controls(U), 0.0, 1.0,
            steps, t_f, self.spec.substeps * refine,
        )
        return records, U, t_f

    # -- NLP functions -----------------------------------------------------

    def outputs(self, Z: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
        """Scaled objective (B,), terminal residual (B,), inequalities (B, 3·n + 1)."""
        nodes, U, _ = self.shoot(Z)
        batch = U.shape[0]
        flat = nodes.transpose(1, 0, 2).reshape(_N_STATES, self.n * batch)
        vx, _, alpha_f, _, f_r, _, _ = self.forces(flat)
        vx = vx.reshape(self.n, batch).T
        alpha_f = alpha_f.reshape(self.n, batch).T
        f_r = f_r.reshape(self.n, batch).T

        objective = nodes[-1, _X, :] / self.x_ref
        terminal = (nodes[-1, _Y, :] - self.spec.y_f) / self.spec.y_f
        ellipse = 1.0 - (U / self.f_scale) ** 2 - (f_r / self.f_y_max) ** 2
        front = 1.0 - (alpha_f / self.p.alpha_star) ** 2
        speed = vx / self.spec.min_speed - 1.0
        heading = 1.0 - (nodes[-1, _PSI, :] / self.spec.terminal_heading_tol) ** 2
        return objective, terminal, np.concatenate([ellipse, front, speed, heading[:, np.newaxis]], axis=1)


class _NlpCache:
    """Memoizes values and forward-difference Jacobians per decision vector."""

    def __init__(self, shooter: _Shooter) -> None:
        self.shooter = shooter
        self._values: dict[bytes, tuple[float, float, FloatArray]] = {}
        self._jacobians: dict[bytes, tuple[FloatArray, FloatArray, FloatArray]] = {}

    def values(self, z: FloatArray) -> tuple[float, float, FloatArray]:
        key = z.tobytes()
        if key not in self._values:
            if len(self._values) > 16:
                self._values.clear()
            obj, term, path = self.shooter.outputs(z[np.newaxis, :])
            self._values[key] = (float(obj[0]), float(term[0]), path[0])
        return self._values[key]

    def jacobians(self, z: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
        key = z.tobytes()
        if key not in self._jacobians:
            if len(self._jacobians) > 4:
                self._jacobians.clear()
            n = z.size
            Z = np.tile(z, (n + 1, 1))
            Z[1:] += _FD_STEP * np.eye(n)
            obj, term, path = self.shooter.outputs(Z)
            grad = (obj[1:] - obj[0]) / _FD_STEP
            term_jac = ((term[1:] - term[0]) / _FD_STEP)[np.newaxis, :]
            path_jac = ((path[1:] - path[0]) / _FD_STEP).T
            self._jacobians[key] = (grad, term_jac, path_jac)
        return self._jacobians[key]


def audit_profile(
    spec: OcpSpec,
    steering: InverseSolution,
    u_nodes: FloatArray,
    t_f: float,
    node_states: FloatArray,
) -> AuditReport:
    """Independent feasibility check of a returned profile.

    Each node interval is re-integrated from the stored node state on a
    grid ``audit_refine`` times finer and compared with the next stored
    node. Path constraints and force bounds are re-evaluated from the
    stored states and controls. Defects are normalized per state.
    """
    shooter = _Shooter(spec, steering)
    p = spec.params
    n = spec.n_nodes
    u_nodes = np.asarray(u_nodes, dtype=float)
    tau_nodes = shooter.tau_nodes

    def u_at(tau: float | FloatArray) -> FloatArray:
        return np.interp(tau, tau_nodes, u_nodes)

    starts = node_states[:-1].T  # (7, n-1)
    steps = spec.substeps * spec.audit_refine
    ends = shooter.integrate(
        starts, u_at, tau_nodes[:-1], 1.0 / (n - 1), steps,
        np.full(n - 1, t_f), steps,
    )[-1]
    scales = np.array([
        spec.x_dot_0 * t_f, spec.x_dot_0, spec.y_f, spec.y_f / t_f, 0.1, 0.5, spec.x_dot_0 * t_f,
    ])
    defects = np.abs(ends - node_states[1:].T) / scales[:, np.newaxis]
    worst_state = int(np.unravel_index(np.argmax(defects), defects.shape)[0]) if defects.size else -1

    vx, _, alpha_f, _, f_r, _, _ = shooter.forces(node_states.T)
    f_x_max = spec.mu * abs(p.f_t_min_brk)
    ellipse = (u_nodes / f_x_max) ** 2 + (f_r / p.lateral_plateau_rear(spec.mu)) ** 2 - 1.0
    front = np.abs(alpha_f) / p.alpha_star - 1.0
    slow = 1.0 - vx / spec.min_speed
    heading = abs(float(node_states[-1, _PSI])) / spec.terminal_heading_tol - 1.0
    path_violation = max(float(np.max(ellipse)), float(np.max(front)), float(np.max(slow)), heading, 0.0)

    upper = (u_nodes - p.engine_limit(spec.mu)) / f_x_max
    lower = (p.braking_limit(spec.mu) - u_nodes) / f_x_max
    bound_violation = max(float(np.max(upper)), float(np.max(lower)), 0.0)

    initial = shooter.initial_state(1)[:, 0]
    initial_error = float(np.max(np.abs(node_states[0] - initial)))
    terminal_error = max(abs(node_states[-1, _Y] - spec.y_f) / spec.y_f, initial_error)

    return AuditReport(
        max_defect=float(np.max(defects)) if defects.size else 0.0,
        max_path_violation=path_violation,
        max_bound_violation=bound_violation,
        terminal_error=terminal_error,
        tol=spec.audit_tol,
        worst_state=worst_state,
    )


def _trajectory_from_profile(
    shooter: _Shooter, z: FloatArray,
) -> tuple[FullTrajectory, FloatArray]:
    spec = shooter.spec
    coarse, U, t_f = shooter.shoot(z[np.newaxis, :])
    steps = (spec.n_nodes - 1) * spec.substeps * spec.audit_refine
    dense = shooter.integrate(
        shooter.initial_state(1), shooter.batch_controls(U), 0.0, 1.0, steps, t_f, 1,
    )[:, :, 0]
    tau = np.linspace(0.0, 1.0, steps + 1)
    u_dense = np.interp(tau, shooter.tau_nodes, U[0])
    deriv = shooter.rates(dense.T, u_dense)
    xd, yd = dense[:, _XD], dense[:, _YD]
    xdd, ydd = deriv[_XD], deriv[_YD]
    speed = np.hypot(xd, yd)
    traj = FullTrajectory(
        dx=dense[:, _X] - dense[0, _X],
        y_target=dense[:, _Y],
        ax_target=xdd,
        theta_target=np.arctan2(yd, xd),
        kappa_target=(xd * ydd - yd * xdd) / speed**3,
        vx_ref=xd,
        t=tau * t_f[0],
        x_dot_0=spec.x_dot_0,
        mu=spec.mu,
        y_f=spec.y_f,
        t_f_achieved=float(t_f[0]),
        source=TrajectorySource.OPTIMIZED,
    )
    return traj, coarse[:, :, 0]


def _warm_start(shooter: _Shooter, steering: InverseSolution) -> FloatArray:
    """Constant-speed candidate: u₁ cancels the steering drag F_yf·sin δ."""
    arc = steering.arc
    t_nodes = shooter.tau_nodes * shooter.t_ref
    s_nodes = np.interp(t_nodes, arc.t, arc.s)
    drag = np.interp(s_nodes, steering.s, steering.f_yf * np.sin(steering.delta))
    bounds = shooter.bounds()
    z0 = shooter.encode(drag, shooter.t_ref)
    return np.clip(z0, bounds.lb, bounds.ub)


@dataclass(frozen=True)
class NlpResult:
    """One SLSQP run with its audit, before any acceptance decision."""

    trajectory: FullTrajectory
    u_nodes: FloatArray
    t_f: float
    node_states: FloatArray  # (n_nodes, 7)
    audit: AuditReport
    status: int
    iterations: int
    message: str


def run_nlp(spec: OcpSpec, steering: InverseSolution) -> NlpResult:
    shooter = _Shooter(spec, steering)
    cache = _NlpCache(shooter)
    z0 = _warm_start(shooter, steering)

    result = minimize(
        lambda z: cache.values(z)[0],
        z0,
        jac=lambda z: cache.jacobians(z)[0],
        method="SLSQP",
        bounds=shooter.bounds(),
        constraints=[
            {"type": "eq", "fun": lambda z: np.atleast_1d(cache.values(z)[1]),
             "jac": lambda z: cache.jacobians(z)[1]},
            {"type": "ineq", "fun": lambda z: cache.values(z)[2],
             "jac": lambda z: cache.jacobians(z)[2]},
        ],
        options={"maxiter": spec.max_iter, "ftol": spec.ftol},
    )

    traj, node_states = _trajectory_from_profile(shooter, result.x)
    U, t_f = shooter.decode(result.x)
    audit = audit_profile(spec, steering, U[0], float(t_f[0]), node_states)
    return NlpResult(
        trajectory=traj,
        u_nodes=U[0],
        t_f=float(t_f[0]),
        node_states=node_states,
        audit=audit,
        status=int(result.status),
        iterations=int(result.nit),
        message=str(result.message),
    )


def solve_nlp(spec: OcpSpec, steering: InverseSolution, baseline_distance: float) -> FullTrajectory:
    """Accepted NLP trajectory; raises when the run stops early, fails or loses to the baseline."""
    nlp = run_nlp(spec, steering)
    traj, audit = nlp.trajectory, nlp.audit
    acceptable = audit.passed and traj.objective <= baseline_distance

    log.debug(
        "ocp_finished",
        speed=spec.x_dot_0,
        mu=spec.mu,
        status=nlp.status,
        iterations=nlp.iterations,
        objective=traj.objective,
        baseline=baseline_distance,
        audit_passed=audit.passed,
        max_defect=audit.max_defect,
    )

    if nlp.status == 9:
        raise OcpMaxIterError(nlp.iterations, traj if acceptable else None)
    if nlp.status != 0 or not acceptable:
        raise OcpInfeasibleError(
            f"solver status {nlp.status} ({nlp.message}); audit passed={audit.passed}, "
            f"J={traj.objective:.3f} vs baseline {baseline_distance:.3f}"
        )
    return traj


def solve_ocp(spec: OcpSpec, steering: InverseSolution) -> FullTrajectory:
    """Shortest-distance lane change for the steering solution.

    Falls back to the constant-speed trajectory whenever the NLP fails or
    its result does not pass the audit or beat the constant-speed distance.
    """
    if not steering.all_feasible:
        raise OcpInfeasibleError(f"steering infeasible at mu={spec.mu}, speed={spec.x_dot_0}")
    envelope = accel_envelope(steering, steering.vx, spec.mu, spec.params)
    if np.any(envelope.empty):
        raise OcpInfeasibleError(
            f"acceleration envelope empty at {int(np.count_nonzero(envelope.empty))} samples"
        )

    baseline = constant_speed_trajectory(steering.arc, spec.x_dot_0, spec.mu, spec.y_f)
    try:
        return solve_nlp(spec, steering, baseline.objective)
    except OcpMaxIterError as exc:
        if exc.best is not None:
            log.warning("ocp_max_iter_best_iterate", speed=spec.x_dot_0, mu=spec.mu,
                        iterations=exc.iterations)
            return exc.best
        log.warning("ocp_fallback_constant_speed", speed=spec.x_dot_0, mu=spec.mu,
                    reason=str(exc))
    except (OcpInfeasibleError, FloatingPointError, ValueError) as exc:
        log.warning("ocp_fallback_constant_speed", speed=spec.x_dot_0, mu=spec.mu,
                    reason=str(exc))
    return baseline
