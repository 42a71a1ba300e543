"""Preview-control pattern generator for the walking references.

Plans a CoM jerk trajectory whose implied pendulum ZMP tracks the reference.
External contacts are handled upstream: the generator tracks the scaled and
offset ZMP (kappa z - gamma), for which the pendulum dynamics look classic,
then maps its own output back to a real ZMP command for the stabilizer.

State per axis is (position, velocity, acceleration); the control is jerk.
The infinite-horizon tracking law splits into state feedback from a Riccati
solution plus a finite window of feedforward gains over future references.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core_dynamics import DEGENERATE_KAPPA
from .errors import DegenerateScale, RiccatiDivergence
from .reference_builder import ReferenceTimeline

# Feedforward weight decay required of a usable preview window: the last
# tenth of the gains must carry under 1% of the total weight.
_TAIL_FRACTION = 0.1
_TAIL_BUDGET = 0.01

_MIN_WINDOW = 1.0  # s


def discretize(omega: float, dt: float):
    """Triple-integrator step matrices and the ZMP output row for frequency omega."""
    if not (math.isfinite(dt) and dt > 0.0):
        raise ValueError("dt must be positive")
    if not (math.isfinite(omega) and omega > 0.0):
        raise ValueError("omega must be positive")
    A = np.array([[1.0, dt, dt * dt / 2.0], [0.0, 1.0, dt], [0.0, 0.0, 1.0]])
    B = np.array([dt**3 / 6.0, dt * dt / 2.0, dt])
    C = np.array([1.0, 0.0, -1.0 / (omega * omega)])
    return A, B, C


def solve_dare_fixed_point(
    A: np.ndarray,
    B: np.ndarray,
    q_state: np.ndarray,
    r: float,
    tol: float = 1e-10,
    max_iter: int = 10**6,
) -> np.ndarray:
    """Discrete-time Riccati solution by backward value iteration.

    Iterates P <- A'PA - A'PB (r + B'PB)^-1 B'PA + q_state from P = q_state
    until the update falls below tol (max absolute change). Raises
    RiccatiDivergence if the iteration produces non-finite values or fails
    to settle within max_iter sweeps.
    """
    P = np.array(q_state, dtype=float)
    Bc = B.reshape(-1, 1)
    for _ in range(max_iter):
        PA = P @ A
        PB = P @ Bc
        s = r + float((Bc.T @ PB)[0, 0])
        nxt = A.T @ PA - (A.T @ PB) @ (PB.T @ A) / s + q_state
        nxt = 0.5 * (nxt + nxt.T)
        if not np.isfinite(nxt).all():
            raise RiccatiDivergence("Riccati iteration produced non-finite values")
        if np.max(np.abs(nxt - P)) < tol:
            return nxt
        P = nxt
    raise RiccatiDivergence(f"Riccati iteration did not settle in {max_iter} sweeps")


@dataclass(frozen=True)
class PreviewWeights:
    """Tracking-vs-smoothness trade-off of the preview law."""

    q_zmp: float = 1.0
    r_jerk: float = 1e-8

    def __post_init__(self):
        if not (self.q_zmp > 0.0 and self.r_jerk > 0.0):
            raise ValueError("preview weights must be positive")


@dataclass(frozen=True, eq=False)
class PreviewGains:
    """Synthesized preview law: state feedback plus feedforward over the window."""

    k_fb: np.ndarray
    k_ff: np.ndarray
    dt: float
    omega: float
    A: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("k_fb", "k_ff", "A", "B", "C"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        closed = self.A - np.outer(self.B, self.k_fb)
        rho = np.max(np.abs(np.linalg.eigvals(closed)))
        if not rho < 1.0:
            raise ValueError(f"closed loop unstable, spectral radius {rho:.6f}")
        total = np.sum(np.abs(self.k_ff))
        tail = np.sum(np.abs(self.k_ff[-max(1, int(len(self.k_ff) * _TAIL_FRACTION)):]))
        if not tail < _TAIL_BUDGET * total:
            raise ValueError(
                "preview window too short: feedforward tail carries "
                f"{tail / total:.2%} of the weight (budget {_TAIL_BUDGET:.0%})"
            )

    @property
    def n_preview(self) -> int:
        return len(self.k_ff)


def synthesize_gains(
    weights: PreviewWeights, omega: float, dt: float, preview_window: float
) -> PreviewGains:
    """Solve the tracking problem and package feedback plus feedforward gains."""
    if not (math.isfinite(omega) and omega > 0.0):
        raise ValueError("omega must be positive")
    if not (math.isfinite(dt) and dt > 0.0):
        raise ValueError("dt must be positive")
    if preview_window < _MIN_WINDOW:
        raise ValueError(f"preview_window must be at least {_MIN_WINDOW} s")
    n = int(round(preview_window / dt))
    A, B, C = discretize(omega, dt)
    q_state = weights.q_zmp * np.outer(C, C)
    P = solve_dare_fixed_point(A, B, q_state, weights.r_jerk)
    s = weights.r_jerk + float(B @ P @ B)
    k_fb = (B @ P @ A) / s
    closed_t = (A - np.outer(B, k_fb)).T
    k_ff = np.empty(n)
    w = C * weights.q_zmp
    for j in range(n):
        k_ff[j] = float(B @ w) / s
        w = closed_t @ w
    return PreviewGains(k_fb=k_fb, k_ff=k_ff, dt=dt, omega=omega, A=A, B=B, C=C)


def initial_state(com_pos) -> np.ndarray:
    """PG state (3, 2) at rest at the given horizontal CoM position."""
    state = np.zeros((3, 2))
    state[0] = np.asarray(com_pos, dtype=float).reshape(2)
    return state


def step_pg(state: np.ndarray, gains: PreviewGains, refs: np.ndarray):
    """Advance one sample against the upcoming reference window.

    state is (3, 2) with rows position/velocity/acceleration and columns x/y;
    refs is (n_preview, 2) holding the scaled-offset ZMP references for the
    next n_preview samples. Returns (next_state, jerk (2,), zmp_out (2,))
    where zmp_out is the scaled-offset ZMP implied by the current state.
    """
    zmp_out = gains.C @ state
    jerk = gains.k_ff @ refs - gains.k_fb @ state
    return gains.A @ state + np.outer(gains.B, jerk), jerk, zmp_out


@dataclass(frozen=True, eq=False)
class DesiredTrajectory:
    """Open-loop plan: CoM motion, DCM and ZMP commands over the timeline."""

    timeline: ReferenceTimeline
    time: np.ndarray
    com_pos: np.ndarray
    com_vel: np.ndarray
    com_acc: np.ndarray
    dcm: np.ndarray
    zmp: np.ndarray
    ext_zmp_out: np.ndarray
    jerk: np.ndarray

    def __post_init__(self):
        for name in (
            "time",
            "com_pos",
            "com_vel",
            "com_acc",
            "dcm",
            "zmp",
            "ext_zmp_out",
            "jerk",
        ):
            getattr(self, name).flags.writeable = False

    def __len__(self):
        return len(self.time)

    @property
    def dt(self) -> float:
        return self.timeline.dt

    @property
    def omega(self) -> float:
        return self.timeline.omega


def generate_trajectory(
    timeline: ReferenceTimeline,
    gains: PreviewGains,
    initial: np.ndarray | None = None,
) -> DesiredTrajectory:
    """Roll the preview law over a reference timeline.

    Starts at rest with the CoM over the first reference ZMP unless an
    initial (3, 2) state is given; schedules whose contacts ramp in from
    zero make that a transient-free equilibrium start. References past the
    end of the timeline hold the final value. Raises DegenerateScale if any
    frame's vertical contact force comes close to cancelling the robot's
    weight, since the real-ZMP command divides by kappa.
    """
    if abs(gains.dt - timeline.dt) > 1e-12:
        raise ValueError("gains and timeline sample at different rates")
    if abs(gains.omega - timeline.omega) > 1e-9 * timeline.omega:
        raise ValueError("gains synthesized for a different pendulum frequency")
    if np.min(timeline.kappa) <= DEGENERATE_KAPPA:
        raise DegenerateScale(
            "vertical contact forces nearly cancel the weight; ZMP scale "
            f"kappa reaches {np.min(timeline.kappa):.4f}"
        )
    n = len(timeline)
    npv = gains.n_preview
    ref = timeline.ext_zmp_ref
    # window for step k covers samples k+1 .. k+npv, holding the final value
    ref_pad = np.vstack([ref[1:], np.tile(ref[-1], (npv, 1))])

    state = (
        initial_state(timeline.zmp_ref[0])
        if initial is None
        else np.array(initial, dtype=float)
    )
    com_pos = np.empty((n, 2))
    com_vel = np.empty((n, 2))
    com_acc = np.empty((n, 2))
    exz_out = np.empty((n, 2))
    jerks = np.empty((n, 2))
    for k in range(n):
        com_pos[k] = state[0]
        com_vel[k] = state[1]
        com_acc[k] = state[2]
        state, jerks[k], exz_out[k] = step_pg(state, gains, ref_pad[k : k + npv])
    dcm = com_pos + com_vel / timeline.omega
    zmp = (exz_out + timeline.gamma) / timeline.kappa[:, None]
    return DesiredTrajectory(
        timeline=timeline,
        time=np.array(timeline.time),
        com_pos=com_pos,
        com_vel=com_vel,
        com_acc=com_acc,
        dcm=dcm,
        zmp=zmp,
        ext_zmp_out=exz_out,
        jerk=jerks,
    )
