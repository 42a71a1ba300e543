"""DCM feedback stabilizer with frequency-separated force-error compensation.

Closes the loop around the pattern generator output. Contact-force error
enters as a ZMP-offset error gamma_err; its low-frequency band is absorbed by
shifting the desired CoM (the pendulum leans against the force), the
high-frequency band by shifting the commanded ZMP within the support region.
DCM error is regulated by PID feedback on top. The resulting command wrench
is distributed to the support feet under center-of-pressure limits.

All gains are stated in conventional (no-external-force) terms; the control
law divides by the ZMP scale kappa so the closed-loop response matches the
conventional tuning regardless of vertical contact forces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core_dynamics import (
    DEGENERATE_KAPPA,
    LipmCoefficients,
    RobotParams,
    contact_zmp_offset,
    net_foot_wrench,
    wrench_zmp,
)
from .errors import DegenerateScale, Infeasible
from .reference_builder import SoleRect

# Rate estimates use a first-order smoother this many samples wide.
_RATE_SMOOTHING_STEPS = 5.0

_ACTIVE_SET_CAP = 50


@dataclass(frozen=True)
class StabilizerGains:
    """Feedback and filter settings of the stabilizer.

    k_p/k_i/k_d are conventional DCM PID gains (the law scales them by 1/kappa
    internally); rho is the ZMP actuation-lag parameter in 1/s; cutoff_period
    sets the frequency split of the force-error compensation; integrator_limit
    clamps the DCM error integral, in meter-seconds.
    """

    k_p: float = 1.25
    k_i: float = 0.0
    k_d: float = 0.0
    rho: float = 20.0
    cutoff_period: float = 1.0
    integrator_limit: float = 0.05

    def __post_init__(self):
        vals = (
            self.k_p,
            self.k_i,
            self.k_d,
            self.rho,
            self.cutoff_period,
            self.integrator_limit,
        )
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("stabilizer gains must be finite")
        if self.rho <= 0.0:
            raise ValueError("rho must be positive")
        if self.cutoff_period <= 0.0:
            raise ValueError("cutoff_period must be positive")
        if self.integrator_limit < 0.0:
            raise ValueError("integrator_limit must be non-negative")

    def check_stable(self, omega: float):
        """Raise ValueError unless the closed loop is Hurwitz at this omega.

        Needs the pendulum frequency, so it cannot run in __post_init__;
        Stabilizer construction calls it.
        """
        m = conventional_closed_loop_matrix(
            self.rho, omega, self.k_p, self.k_i, self.k_d
        )
        if self.k_i == 0.0:
            # integrator decoupled: ignore its structural zero eigenvalue
            m = m[1:, 1:]
        eig = np.linalg.eigvals(m)
        if not (eig.real < 0.0).all():
            raise ValueError(
                f"gains are unstable for omega={omega:g}, rho={self.rho:g}: "
                f"closed-loop eigenvalues {np.sort_complex(eig)}"
            )


def scaled_closed_loop_matrix(
    kappa: float, rho: float, omega: float, kt_p: float, kt_i: float, kt_d: float
) -> np.ndarray:
    """Closed-loop matrix of the DCM-error system under the kappa-scaled law.

    State is (integral of DCM error, DCM error, DCM error rate).
    """
    return np.array(
        [
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [
                -kappa * rho * omega * kt_i,
                rho * omega * (1.0 - kappa * kt_p),
                omega - rho - kappa * rho * omega * kt_d,
            ],
        ]
    )


def conventional_closed_loop_matrix(
    rho: float, omega: float, k_p: float, k_i: float, k_d: float
) -> np.ndarray:
    """Closed-loop matrix of the conventional DCM PID law (no external forces)."""
    return scaled_closed_loop_matrix(1.0, rho, omega, k_p, k_i, k_d)


@dataclass
class StabilizerState:
    """Mutable filter and integrator memory of one stabilizer instance."""

    dcm_error_integral: np.ndarray = field(default_factory=lambda: np.zeros(2))
    gamma_low: np.ndarray = field(default_factory=lambda: np.zeros(2))
    gamma_high: np.ndarray = field(default_factory=lambda: np.zeros(2))
    gamma_high_rate: np.ndarray = field(default_factory=lambda: np.zeros(2))
    dcm_err_prev: np.ndarray = field(default_factory=lambda: np.zeros(2))
    dcm_err_rate: np.ndarray = field(default_factory=lambda: np.zeros(2))


def measure_gamma_error(
    desired_contacts,
    actual_contacts,
    params: RobotParams,
    com_vert_accel: float = 0.0,
) -> np.ndarray:
    """ZMP-offset error gamma(actual) - gamma(desired) of the hand contacts."""
    zeta = params.mass * (com_vert_accel + params.gravity)
    actual = contact_zmp_offset(actual_contacts, zeta, params.zmp_height)
    desired = contact_zmp_offset(desired_contacts, zeta, params.zmp_height)
    return actual - desired


def split_frequency(
    state: StabilizerState, gamma_err: np.ndarray, dt: float, cutoff_period: float
):
    """Advance the low/high frequency split of the force-error offset.

    The low band is a first-order low-pass with time constant
    cutoff_period / (2 pi); the high band is the exact complement, so
    gamma_low + gamma_high always reconstructs the input. The high-band rate
    is a smoothed backward difference.
    """
    tau = cutoff_period / (2.0 * math.pi)
    alpha = dt / (tau + dt)
    prev_high = state.gamma_high
    state.gamma_low = state.gamma_low + alpha * (gamma_err - state.gamma_low)
    state.gamma_high = gamma_err - state.gamma_low
    raw_rate = (state.gamma_high - prev_high) / dt
    beta = 1.0 / (_RATE_SMOOTHING_STEPS + 1.0)
    state.gamma_high_rate = state.gamma_high_rate + beta * (
        raw_rate - state.gamma_high_rate
    )
    return state.gamma_low, state.gamma_high, state.gamma_high_rate


@dataclass
class DesiredSample:
    """One sample of the planned trajectory, as consumed by the stabilizer."""

    com_pos: np.ndarray
    com_acc: np.ndarray
    dcm: np.ndarray
    zmp: np.ndarray
    coefficients: LipmCoefficients
    contacts: tuple
    support_region: tuple
    support_feet: tuple


@dataclass
class ActualSample:
    """Measured plant quantities: horizontal CoM state and true contacts."""

    com_pos: np.ndarray
    com_vel: np.ndarray
    contacts: tuple


def dcm_feedback(
    desired: DesiredSample,
    actual_dcm: np.ndarray,
    state: StabilizerState,
    gains: StabilizerGains,
    dt: float,
):
    """PID DCM regulation plus force-error compensation terms.

    Returns (command_zmp, command_com_accel, state, shifted_desired_com,
    dcm_err); the integrator and derivative filter advance in place. The
    low-band offset shifts the desired CoM and DCM; the high-band offset and
    its rate enter the ZMP command as feedforward. All ZMP-shift terms are
    scaled by 1/kappa so the closed loop matches the conventional tuning.
    """
    coeff = desired.coefficients
    kappa = coeff.kappa
    if kappa <= DEGENERATE_KAPPA:
        raise DegenerateScale(f"ZMP scale kappa={kappa:.4f} too small to command")
    omega = coeff.omega

    com_shifted = desired.com_pos - state.gamma_low
    dcm_shifted = desired.dcm - state.gamma_low
    err = actual_dcm - dcm_shifted

    integral = state.dcm_error_integral + err * dt
    lim = gains.integrator_limit
    state.dcm_error_integral = np.clip(integral, -lim, lim)
    raw_rate = (err - state.dcm_err_prev) / dt
    beta = 1.0 / (_RATE_SMOOTHING_STEPS + 1.0)
    state.dcm_err_rate = state.dcm_err_rate + beta * (raw_rate - state.dcm_err_rate)
    state.dcm_err_prev = err

    pid = (
        gains.k_p * err
        + gains.k_i * state.dcm_error_integral
        + gains.k_d * state.dcm_err_rate
    )
    correction = pid + state.gamma_high + state.gamma_high_rate / gains.rho
    command_zmp = desired.zmp + correction / kappa
    command_acc = desired.com_acc - omega * omega * correction
    return command_zmp, command_acc, state, com_shifted, err


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Counter-clockwise convex hull by monotone chain; returns (m, 2)."""
    pts = np.unique(points, axis=0)
    if len(pts) <= 2:
        return pts

    def half(iterable):
        chain = []
        for p in iterable:
            while len(chain) >= 2:
                a, b = chain[-2], chain[-1]
                if (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) <= 0:
                    chain.pop()
                else:
                    break
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def _clamp_to_hull(point: np.ndarray, hull: np.ndarray) -> np.ndarray:
    """Nearest point of a convex polygon (CCW vertices) to the given point."""
    n = len(hull)
    if n == 1:
        return hull[0].copy()
    inside = n > 2
    best = None
    best_d = math.inf
    for i in range(n):
        a = hull[i]
        b = hull[(i + 1) % n]
        e = b - a
        cross = e[0] * (point[1] - a[1]) - e[1] * (point[0] - a[0])
        if cross < 0.0:
            inside = False
        ee = float(e @ e)
        t = 0.0 if ee == 0.0 else min(max(float((point - a) @ e) / ee, 0.0), 1.0)
        q = a + t * e
        d = float((point - q) @ (point - q))
        if d < best_d:
            best_d = d
            best = q
        if n == 2:
            break
    return point.copy() if inside else best


def support_hull(region) -> np.ndarray:
    """Convex hull of the support sole rectangles' corners."""
    return _convex_hull(np.vstack([r.corners() for r in region]))


@dataclass(frozen=True, eq=False)
class Wrench:
    """Force and moment, world frame; moment about the world origin unless noted."""

    force: np.ndarray
    moment: np.ndarray


def zero_wrench() -> Wrench:
    return Wrench(force=np.zeros(3), moment=np.zeros(3))


def _rect_center3(rect: SoleRect, zmp_height: float) -> np.ndarray:
    return np.array(
        [0.5 * (rect.xmin + rect.xmax), 0.5 * (rect.ymin + rect.ymax), zmp_height]
    )


def _clamped_single(net: Wrench, rect: SoleRect, zmp_height: float) -> Wrench:
    cop = wrench_zmp(net.force, net.moment, zmp_height)
    cop = rect.clamp(cop)
    fx, fy, fz = net.force
    moment = np.array(
        [
            cop[1] * fz - zmp_height * fy,
            zmp_height * fx - cop[0] * fz,
            net.moment[2],
        ]
    )
    center = _rect_center3(rect, zmp_height)
    return Wrench(force=net.force.copy(), moment=moment - np.cross(center, net.force))


def _within_sole(force, moment, half_x, half_y, tol=1e-9):
    fz = force[2]
    if fz < -tol:
        return False
    # homogeneous form of the CoP bounds, still valid at fz = 0
    return abs(moment[1]) <= half_x * fz + tol and abs(moment[0]) <= half_y * fz + tol


def distribute_wrench(
    net: Wrench,
    left_foot: SoleRect | None,
    right_foot: SoleRect | None,
    zmp_height: float = 0.0,
    vertical_ratio_hint: float | None = None,
) -> tuple[Wrench, Wrench]:
    """Split a net contact wrench between the support feet under sole limits.

    net.moment is about the world origin; the returned wrenches carry moments
    about the respective foot centers (at zmp_height). A foot passed as None
    is out of support and receives a zero wrench. Each supporting foot gets a
    non-negative vertical force with its center of pressure inside its sole
    rectangle; among such splits the one closest (least squares) to a nominal
    share split is returned. vertical_ratio_hint is the left foot's share of
    the vertical force (default: split by pressure-point proximity).

    Single support clamps the pressure point into the sole, altering the
    realized moment if the request is infeasible. Double support raises
    Infeasible when the net pressure point lies outside the support hull; the
    caller clamps and retries.
    """
    if left_foot is None and right_foot is None:
        raise Infeasible("no support feet")
    if not net.force[2] > 0.0:
        raise Infeasible("net wrench must press downward on the ground")

    if left_foot is None or right_foot is None:
        rect = left_foot if right_foot is None else right_foot
        placed = _clamped_single(net, rect, zmp_height)
        if right_foot is None:
            return placed, zero_wrench()
        return zero_wrench(), placed

    cop = wrench_zmp(net.force, net.moment, zmp_height)
    rects = (left_foot, right_foot)
    hull = support_hull(rects)
    clamped = _clamp_to_hull(cop, hull)
    if math.hypot(clamped[0] - cop[0], clamped[1] - cop[1]) > 1e-12:
        raise Infeasible("pressure point outside the double-support hull")

    centers = [_rect_center3(r, zmp_height) for r in rects]
    halves = [(0.5 * (r.xmax - r.xmin), 0.5 * (r.ymax - r.ymin)) for r in rects]

    if vertical_ratio_hint is None:
        # share by proximity of the pressure point along the feet axis
        axis = centers[1][:2] - centers[0][:2]
        denom = float(axis @ axis)
        toward_right = (
            0.5 if denom == 0.0 else float((cop - centers[0][:2]) @ axis) / denom
        )
        s_left = 1.0 - toward_right
    else:
        s_left = float(vertical_ratio_hint)
    s_left = min(max(s_left, 0.0), 1.0)
    share = (s_left, 1.0 - s_left)

    forces = [s * net.force for s in share]
    moment_rest = net.moment.copy()
    for c, f in zip(centers, forces):
        moment_rest -= np.cross(c, f)
    moments = [s * moment_rest for s in share]

    ok = all(
        _within_sole(f, m, hx, hy) for f, m, (hx, hy) in zip(forces, moments, halves)
    )
    if ok:
        return (
            Wrench(force=forces[0], moment=moments[0]),
            Wrench(force=forces[1], moment=moments[1]),
        )

    w0 = np.concatenate(forces + moments)
    sol = _active_set_qp(w0, net, centers, halves)
    return (
        Wrench(force=sol[0:3], moment=sol[6:9]),
        Wrench(force=sol[3:6], moment=sol[9:12]),
    )


def _cross_matrix(p):
    return np.array([[0.0, -p[2], p[1]], [p[2], 0.0, -p[0]], [-p[1], p[0], 0.0]])


def _active_set_qp(w0, net, centers, halves):
    """min ||w - w0||^2 over recombination equalities and sole inequalities.

    Unknowns w = (f_left, f_right, m_left, m_right), moments about the foot
    centers. w0 already satisfies the equalities; the working set grows by
    the worst violated sole constraint and sheds constraints with negative
    multipliers. Feasibility is guaranteed by the caller's hull pre-check.
    """
    E = np.zeros((6, 12))
    E[0:3, 0:3] = np.eye(3)
    E[0:3, 3:6] = np.eye(3)
    E[3:6, 0:3] = _cross_matrix(centers[0])
    E[3:6, 3:6] = _cross_matrix(centers[1])
    E[3:6, 6:9] = np.eye(3)
    E[3:6, 9:12] = np.eye(3)
    h = np.concatenate([net.force, net.moment])

    # rows g with g @ w <= 0: per-foot CoP bounds and vertical force sign
    rows = []
    for i, (hx, hy) in enumerate(halves):
        fz = 3 * i + 2
        mx = 6 + 3 * i
        my = 6 + 3 * i + 1
        for sign in (1.0, -1.0):
            row = np.zeros(12)
            row[my] = sign
            row[fz] = -hx
            rows.append(row)
            row = np.zeros(12)
            row[mx] = sign
            row[fz] = -hy
            rows.append(row)
        row = np.zeros(12)
        row[fz] = -1.0
        rows.append(row)
    G = np.array(rows)

    active: list[int] = []
    for _ in range(_ACTIVE_SET_CAP):
        na = len(active)
        kkt = np.zeros((18 + na, 18 + na))
        kkt[0:12, 0:12] = 2.0 * np.eye(12)
        kkt[0:12, 12:18] = E.T
        kkt[12:18, 0:12] = E
        rhs = np.concatenate([2.0 * w0, h, np.zeros(na)])
        if na:
            Ga = G[active]
            kkt[0:12, 18:] = Ga.T
            kkt[18:, 0:12] = Ga
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        w = sol[0:12]
        viol = G @ w
        worst = int(np.argmax(viol))
        if viol[worst] > 1e-10 and worst not in active:
            active.append(worst)
            continue
        if na:
            mu = sol[18:]
            drop = int(np.argmin(mu))
            if mu[drop] < -1e-10:
                active.pop(drop)
                continue
        return w
    raise Infeasible("wrench distribution active set did not settle")


@dataclass(frozen=True, eq=False)
class StabilizerOutput:
    """Commands and diagnostics of one stabilizer step.

    Foot wrench moments are about the respective foot centers; the net
    wrench moment is about the world origin.
    """

    command_zmp: np.ndarray
    command_com_accel: np.ndarray
    shifted_com_des: np.ndarray
    net_wrench: Wrench
    left_wrench: Wrench
    right_wrench: Wrench
    dcm_err: np.ndarray
    gamma_err: np.ndarray
    gamma_low: np.ndarray
    gamma_high: np.ndarray
    gamma_high_rate: np.ndarray
    zmp_saturated: bool
    cop_clamped: bool


def step_stabilizer(
    desired: DesiredSample,
    actual: ActualSample,
    state: StabilizerState,
    gains: StabilizerGains,
    params: RobotParams,
    dt: float,
    compensate_forces: bool = True,
    support_hull_points: np.ndarray | None = None,
) -> StabilizerOutput:
    """One full stabilizer cycle.

    Chains the force-error measurement, the frequency split, the DCM feedback
    law, command-ZMP saturation into the support hull, the net-wrench
    computation against the actual CoM, and the per-foot distribution. With
    compensate_forces False both offset bands stay zero (ablation mode);
    gamma_err is still measured for logging.
    """
    gamma_err = measure_gamma_error(desired.contacts, actual.contacts, params)
    if compensate_forces:
        split_frequency(state, gamma_err, dt, gains.cutoff_period)

    omega = desired.coefficients.omega
    actual_dcm = actual.com_pos + actual.com_vel / omega
    command_zmp, command_acc, state, com_shifted, dcm_err = dcm_feedback(
        desired, actual_dcm, state, gains, dt
    )

    hull = support_hull_points
    if hull is None:
        hull = support_hull(desired.support_region)
    saturated = _clamp_to_hull(command_zmp, hull)
    zmp_saturated = bool(
        saturated[0] != command_zmp[0] or saturated[1] != command_zmp[1]
    )
    if zmp_saturated:
        command_zmp = saturated
        kappa = desired.coefficients.kappa
        w2 = omega * omega
        command_acc = desired.com_acc - w2 * kappa * (command_zmp - desired.zmp)

    com3 = np.array([actual.com_pos[0], actual.com_pos[1], params.com_height])
    acc3 = np.array([command_acc[0], command_acc[1], 0.0])
    force, moment = net_foot_wrench(params, com3, acc3, actual.contacts)

    # the wrench the feet can realize is capped by the support hull: clamp
    # its pressure point and rebuild the horizontal moment to match
    cop = wrench_zmp(force, moment, params.zmp_height)
    cop_in = _clamp_to_hull(cop, hull)
    cop_clamped = bool(cop_in[0] != cop[0] or cop_in[1] != cop[1])
    if cop_clamped:
        zh = params.zmp_height
        moment = np.array(
            [
                cop_in[1] * force[2] - zh * force[1],
                zh * force[0] - cop_in[0] * force[2],
                moment[2],
            ]
        )
    net = Wrench(force=force, moment=moment)

    by_name = dict(zip(desired.support_feet, desired.support_region))
    left_wrench, right_wrench = distribute_wrench(
        net, by_name.get("left"), by_name.get("right"), params.zmp_height
    )

    return StabilizerOutput(
        command_zmp=command_zmp,
        command_com_accel=command_acc,
        shifted_com_des=com_shifted,
        net_wrench=net,
        left_wrench=left_wrench,
        right_wrench=right_wrench,
        dcm_err=dcm_err,
        gamma_err=gamma_err,
        gamma_low=state.gamma_low,
        gamma_high=state.gamma_high,
        gamma_high_rate=state.gamma_high_rate,
        zmp_saturated=zmp_saturated,
        cop_clamped=cop_clamped,
    )


class Stabilizer:
    """Stateful DCM stabilizer bound to one robot and gain set.

    Checks closed-loop stability of the gains at construction. Calls must be
    serialized per instance; construct separate instances for parallel runs.
    compensate_forces=False disables the force-error compensation (both
    bands forced to zero) for ablation studies.
    """

    def __init__(
        self,
        params: RobotParams,
        gains: StabilizerGains,
        omega: float,
        dt: float,
        compensate_forces: bool = True,
        check_stability: bool = True,
    ):
        if not (math.isfinite(dt) and dt > 0.0):
            raise ValueError("dt must be positive")
        if check_stability:
            gains.check_stable(omega)
        self.params = params
        self.gains = gains
        self.omega = omega
        self.dt = dt
        self.compensate_forces = compensate_forces
        self.state = StabilizerState()
        self._hull_cache: dict[int, np.ndarray] = {}

    def _hull(self, region) -> np.ndarray:
        key = id(region)
        got = self._hull_cache.get(key)
        if got is None:
            got = support_hull(region)
            if len(self._hull_cache) < 64:
                self._hull_cache[key] = got
        return got

    def step(self, desired: DesiredSample, actual: ActualSample) -> StabilizerOutput:
        return step_stabilizer(
            desired,
            actual,
            self.state,
            self.gains,
            self.params,
            self.dt,
            compensate_forces=self.compensate_forces,
            support_hull_points=self._hull(desired.support_region),
        )
