"""Deterministic closed-loop point-mass plant with ZMP actuation lag.

The plant integrates the same pendulum-with-external-forces model the
controller assumes; controller/plant mismatch enters only through injected
disturbance forces and a first-order lag between commanded and realized ZMP.
run_closed_loop wires plant, reference, and stabilizer together and logs
every diagnostic signal per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core_dynamics import CoMState, ExternalContact, RobotParams, compute_coefficients
from .pattern_generator import DesiredTrajectory
from .reference_builder import SoleRect
from .stabilizer import ActualSample, DesiredSample, Stabilizer

_DISTURBANCE_KINDS = ("constant", "sinusoid", "step")
_AXES = {"x": 0, "y": 1, "z": 2}

DIVERGENCE_LIMIT = 1.0

# realized ZMP may leave the planned support slightly (sole compliance,
# conservative planning margins); the plant clamps at this inflation
ZMP_CLAMP_MARGIN = 0.02

CSV_COLUMNS = (
    "time",
    "c_x^d",
    "c_y^d",
    "c_x^a",
    "c_y^a",
    "xi_x^d",
    "xi_y^d",
    "xi_x^a",
    "xi_y^a",
    "z_x^d",
    "z_y^d",
    "z_x^c",
    "z_y^c",
    "z_x^a",
    "z_y^a",
    "extzmp_x^ref",
    "extzmp_y^ref",
    "gamma_err_x",
    "gamma_err_y",
    "gammaH_x",
    "gammaH_y",
    "gammaL_x",
    "gammaL_y",
    "fext_sum_x",
    "fext_sum_y",
    "fext_sum_z",
)


@dataclass(frozen=True, eq=False)
class PlantState:
    """Plant truth at one instant; zmp_clamped marks a support-edge event."""

    com: CoMState
    zmp_actual: np.ndarray
    time: float
    zmp_clamped: bool = False


@dataclass(frozen=True)
class DisturbanceProfile:
    """Additive force signal applied to true contacts, on one axis.

    kind "constant" and "step" hold the amplitude over [start_time,
    end_time); "sinusoid" oscillates with the given period over the same
    window. contact_index targets one contact of the desired set; None
    applies the signal to every contact.
    """

    kind: str
    axis: str = "x"
    amplitude: float = 0.0
    period: float = 1.0
    start_time: float = 0.0
    end_time: float = math.inf
    contact_index: int | None = None

    def __post_init__(self):
        if self.kind not in _DISTURBANCE_KINDS:
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.axis not in _AXES:
            raise ValueError(f"disturbance axis must be one of {sorted(_AXES)}")
        if self.kind == "sinusoid" and not self.period > 0.0:
            raise ValueError("sinusoid period must be positive")
        if not math.isfinite(self.amplitude):
            raise ValueError("disturbance amplitude must be finite")
        if self.end_time < self.start_time:
            raise ValueError("disturbance ends before it starts")

    def value(self, t: float) -> float:
        if t < self.start_time or t >= self.end_time:
            return 0.0
        if self.kind == "sinusoid":
            phase = 2.0 * math.pi * (t - self.start_time) / self.period
            return self.amplitude * math.sin(phase)
        return self.amplitude


def apply_disturbances(contacts, profiles, t: float):
    """True contacts at time t: desired contacts plus active disturbances."""
    if not profiles:
        return contacts
    deltas = [np.zeros(3) for _ in contacts]
    touched = False
    for prof in profiles:
        v = prof.value(t)
        if v == 0.0:
            continue
        touched = True
        ax = _AXES[prof.axis]
        if prof.contact_index is None:
            for d in deltas:
                d[ax] += v
        elif 0 <= prof.contact_index < len(deltas):
            deltas[prof.contact_index][ax] += v
    if not touched:
        return contacts
    return tuple(
        ExternalContact(
            force=con.force + d, moment=con.moment, position=con.position
        )
        for con, d in zip(contacts, deltas)
    )


def step_plant(
    state: PlantState,
    command_zmp: np.ndarray,
    true_contacts,
    params: RobotParams,
    rho: float,
    dt: float,
    direct_zmp: bool = False,
    clamp_rect: SoleRect | None = None,
) -> PlantState:
    """Advance the plant one control period.

    The realized ZMP relaxes toward the command through an exact exponential
    first-order lag (or copies it in direct mode), is hard-clamped into the
    enlarged support rectangle, and drives a semi-implicit update of the CoM
    under the true contact forces.
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    if direct_zmp:
        zmp = np.array([command_zmp[0], command_zmp[1]])
    else:
        decay = math.exp(-rho * dt)
        zmp = command_zmp + (state.zmp_actual - command_zmp) * decay

    clamped = False
    if clamp_rect is not None and not clamp_rect.contains(zmp):
        zmp = clamp_rect.clamp(zmp)
        clamped = True

    coeff = compute_coefficients(params, true_contacts)
    pos = state.com.position
    acc = coeff.omega**2 * (pos - coeff.kappa * zmp + coeff.gamma)
    vel = state.com.velocity + acc * dt
    pos = pos + vel * dt
    return PlantState(
        com=CoMState(position=pos, velocity=vel, acceleration=acc),
        zmp_actual=zmp,
        time=state.time + dt,
        zmp_clamped=clamped,
    )


@dataclass(eq=False)
class TraceLog:
    """Per-step record of one closed-loop run.

    columns maps every CSV column name to a 1-D array; extra carries
    internal diagnostics that are not part of the CSV schema. A diverged
    trace is truncated at the step the divergence was detected.
    """

    dt: float
    columns: dict
    extra: dict = field(default_factory=dict)
    diverged: bool = False
    diverged_at: float | None = None
    zmp_clamp_count: int = 0

    def __len__(self):
        return len(self.columns["time"])

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    @property
    def duration(self) -> float:
        return len(self) * self.dt

    def to_csv(self, path):
        header = ",".join(CSV_COLUMNS)
        data = np.column_stack([self.columns[c] for c in CSV_COLUMNS])
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for row in data:
                fh.write(",".join("%.17g" % v for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "TraceLog":
        with open(path) as fh:
            header = fh.readline().strip()
        names = tuple(header.split(","))
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != len(names):
            raise ValueError(f"{path}: row width does not match header")
        columns = {name: data[:, i].copy() for i, name in enumerate(names)}
        time = columns.get("time")
        if time is None or len(time) < 2:
            raise ValueError(f"{path}: need a time column with at least 2 rows")
        dt = float(time[1] - time[0])
        return cls(dt=dt, columns=columns)


def run_closed_loop(
    traj: DesiredTrajectory,
    stabilizer: Stabilizer,
    params: RobotParams,
    rho: float,
    disturbances=(),
    direct_zmp: bool = False,
    initial: PlantState | None = None,
    com_noise: float = 0.0,
    force_noise: float = 0.0,
    rng: np.random.Generator | None = None,
    divergence_limit: float = DIVERGENCE_LIMIT,
) -> TraceLog:
    """Simulate the stabilized plant along a planned trajectory.

    Per step: read the plant, optionally corrupt the measurements with white
    noise, run the stabilizer, log, then advance the plant under the true
    (disturbed) contacts. Aborts and marks the trace when the actual CoM
    leaves the desired one by more than divergence_limit.
    """
    timeline = traj.timeline
    dt = timeline.dt
    n = len(traj.time)
    noisy = (com_noise > 0.0 or force_noise > 0.0) and rng is not None

    if initial is None:
        initial = PlantState(
            com=CoMState(
                position=traj.com_pos[0],
                velocity=traj.com_vel[0],
                acceleration=traj.com_acc[0],
            ),
            zmp_actual=np.array(traj.zmp[0]),
            time=float(traj.time[0]),
        )

    cols = {name: np.zeros(n) for name in CSV_COLUMNS}
    cols["time"] = traj.time.copy()
    cols["c_x^d"] = traj.com_pos[:, 0].copy()
    cols["c_y^d"] = traj.com_pos[:, 1].copy()
    cols["xi_x^d"] = traj.dcm[:, 0].copy()
    cols["xi_y^d"] = traj.dcm[:, 1].copy()
    cols["z_x^d"] = traj.zmp[:, 0].copy()
    cols["z_y^d"] = traj.zmp[:, 1].copy()
    cols["extzmp_x^ref"] = timeline.ext_zmp_ref[:, 0].copy()
    cols["extzmp_y^ref"] = timeline.ext_zmp_ref[:, 1].copy()
    extra = {
        "command_acc_x": np.zeros(n),
        "command_acc_y": np.zeros(n),
        "dcm_err_x": np.zeros(n),
        "dcm_err_y": np.zeros(n),
        "zmp_saturated": np.zeros(n),
        "cop_clamped": np.zeros(n),
        "zmp_clamped": np.zeros(n),
        "com_acc_x^a": np.zeros(n),
        "com_acc_y^a": np.zeros(n),
    }

    clamp_rects: dict[int, SoleRect] = {}
    state = initial
    omega = timeline.omega
    diverged = False
    diverged_at = None
    clamp_count = 0
    last = n

    for k in range(n):
        t = float(traj.time[k])
        frame = timeline.frames[k]
        true_contacts = apply_disturbances(frame.contacts, disturbances, t)

        com_meas = state.com.position
        vel_meas = state.com.velocity
        contacts_meas = true_contacts
        if noisy:
            com_meas = com_meas + com_noise * rng.standard_normal(2)
            vel_meas = vel_meas + com_noise * omega * rng.standard_normal(2)
            if force_noise > 0.0:
                contacts_meas = tuple(
                    ExternalContact(
                        force=c.force + force_noise * rng.standard_normal(3),
                        moment=c.moment,
                        position=c.position,
                    )
                    for c in true_contacts
                )

        desired = DesiredSample(
            com_pos=traj.com_pos[k],
            com_acc=traj.com_acc[k],
            dcm=traj.dcm[k],
            zmp=traj.zmp[k],
            coefficients=frame.coefficients,
            contacts=frame.contacts,
            support_region=frame.support_region,
            support_feet=frame.support_feet,
        )
        actual = ActualSample(
            com_pos=com_meas, com_vel=vel_meas, contacts=contacts_meas
        )
        out = stabilizer.step(desired, actual)

        cols["c_x^a"][k] = state.com.position[0]
        cols["c_y^a"][k] = state.com.position[1]
        xi_a = state.com.position + state.com.velocity / omega
        cols["xi_x^a"][k] = xi_a[0]
        cols["xi_y^a"][k] = xi_a[1]
        cols["z_x^c"][k] = out.command_zmp[0]
        cols["z_y^c"][k] = out.command_zmp[1]
        cols["z_x^a"][k] = state.zmp_actual[0]
        cols["z_y^a"][k] = state.zmp_actual[1]
        cols["gamma_err_x"][k] = out.gamma_err[0]
        cols["gamma_err_y"][k] = out.gamma_err[1]
        cols["gammaH_x"][k] = out.gamma_high[0]
        cols["gammaH_y"][k] = out.gamma_high[1]
        cols["gammaL_x"][k] = out.gamma_low[0]
        cols["gammaL_y"][k] = out.gamma_low[1]
        fsum = np.zeros(3)
        for con in true_contacts:
            fsum += con.force
        cols["fext_sum_x"][k] = fsum[0]
        cols["fext_sum_y"][k] = fsum[1]
        cols["fext_sum_z"][k] = fsum[2]
        extra["command_acc_x"][k] = out.command_com_accel[0]
        extra["command_acc_y"][k] = out.command_com_accel[1]
        extra["dcm_err_x"][k] = out.dcm_err[0]
        extra["dcm_err_y"][k] = out.dcm_err[1]
        extra["zmp_saturated"][k] = float(out.zmp_saturated)
        extra["cop_clamped"][k] = float(out.cop_clamped)
        extra["com_acc_x^a"][k] = state.com.acceleration[0]
        extra["com_acc_y^a"][k] = state.com.acceleration[1]

        key = id(frame.support_region)
        rect = clamp_rects.get(key)
        if rect is None:
            base = SoleRect.bounding(frame.support_region)
            rect = SoleRect(
                base.xmin - ZMP_CLAMP_MARGIN,
                base.xmax + ZMP_CLAMP_MARGIN,
                base.ymin - ZMP_CLAMP_MARGIN,
                base.ymax + ZMP_CLAMP_MARGIN,
            )
            if len(clamp_rects) < 64:
                clamp_rects[key] = rect
        state = step_plant(
            state,
            out.command_zmp,
            true_contacts,
            params,
            rho,
            dt,
            direct_zmp=direct_zmp,
            clamp_rect=rect,
        )
        if state.zmp_clamped:
            clamp_count += 1
            extra["zmp_clamped"][k] = 1.0

        dev = state.com.position - traj.com_pos[min(k + 1, n - 1)]
        if abs(dev[0]) > divergence_limit or abs(dev[1]) > divergence_limit:
            diverged = True
            diverged_at = state.time
            last = k + 1
            break

    if last < n:
        cols = {name: arr[:last].copy() for name, arr in cols.items()}
        extra = {name: arr[:last].copy() for name, arr in extra.items()}

    return TraceLog(
        dt=dt,
        columns=cols,
        extra=extra,
        diverged=diverged,
        diverged_at=diverged_at,
        zmp_clamp_count=clamp_count,
    )
