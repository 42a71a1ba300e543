"""Point-mass pendulum dynamics of a biped exchanging forces with its environment.

All quantities are SI, expressed in a fixed world frame with z up. CoM height
and ground height are constant within a scenario, so the pendulum frequency is
a scenario constant and the two horizontal axes decouple.

External hand contacts enter the horizontal dynamics through two aggregate
coefficients: a dimensionless scale ``kappa`` on the ZMP (vertical force
component) and a 2D offset ``gamma`` (horizontal forces and moments). With no
contacts, kappa = 1 and gamma = 0 and the classic pendulum model is recovered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPhysical

# Scale factors at or below this are flagged: the vertical contact forces come
# close to carrying the robot's full weight and the 1/kappa gain scaling of the
# stabilizer degenerates.
DEGENERATE_KAPPA = 0.05


def _finite_vec(value, size: int, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float).reshape(-1)
    if arr.size != size:
        raise ValueError(f"{name}: expected {size} components, got {arr.size}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name}: components must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class RobotParams:
    """Mass, gravity and the constant CoM / ground heights."""

    mass: float
    gravity: float = 9.81
    com_height: float = 0.8
    zmp_height: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.mass) and self.mass > 0.0):
            raise NonPhysical("mass must be positive and finite")
        if not (math.isfinite(self.gravity) and self.gravity > 0.0):
            raise NonPhysical("gravity must be positive and finite")
        if not (math.isfinite(self.com_height) and math.isfinite(self.zmp_height)):
            raise NonPhysical("heights must be finite")
        if not self.com_height > self.zmp_height:
            raise NonPhysical("com_height must exceed zmp_height")


@dataclass(frozen=True, eq=False)
class ExternalContact:
    """Force, moment and application point of one manipulation contact (world frame)."""

    force: np.ndarray
    moment: np.ndarray
    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "force", _finite_vec(self.force, 3, "force"))
        object.__setattr__(self, "moment", _finite_vec(self.moment, 3, "moment"))
        object.__setattr__(self, "position", _finite_vec(self.position, 3, "position"))


@dataclass(frozen=True, eq=False)
class LipmCoefficients:
    """Pendulum frequency plus the contact-induced ZMP scale and offset.

    Attributes
    ----------
    omega : pendulum frequency sqrt((vertical accel + g) / pendulum height), 1/s
    kappa : dimensionless ZMP scale, 1 with no vertical contact force
    gamma : 2D ZMP offset induced by contact forces and moments, m
    zeta : normalizing vertical force m * (vertical accel + g), N
    """

    omega: float
    kappa: float
    gamma: np.ndarray
    zeta: float

    def __post_init__(self):
        if not (math.isfinite(self.omega) and self.omega > 0.0):
            raise NonPhysical("omega must be positive and finite")
        if not (math.isfinite(self.zeta) and self.zeta > 0.0):
            raise NonPhysical("zeta must be positive and finite")
        if not math.isfinite(self.kappa):
            raise NonPhysical("kappa must be finite")
        object.__setattr__(self, "gamma", _finite_vec(self.gamma, 2, "gamma"))

    @property
    def degenerate_scale(self) -> bool:
        """True when vertical contact forces nearly cancel the robot's weight."""
        return self.kappa <= DEGENERATE_KAPPA


@dataclass(frozen=True, eq=False)
class CoMState:
    """Horizontal CoM position, velocity and acceleration (2-vectors)."""

    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _finite_vec(self.position, 2, "position"))
        object.__setattr__(self, "velocity", _finite_vec(self.velocity, 2, "velocity"))
        object.__setattr__(
            self, "acceleration", _finite_vec(self.acceleration, 2, "acceleration")
        )


@dataclass(frozen=True, eq=False)
class DcmState:
    """Horizontal divergent component of motion (2-vector)."""

    xi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xi", _finite_vec(self.xi, 2, "xi"))


@dataclass(frozen=True, eq=False)
class ZmpPoint:
    """Horizontal zero-moment point on the ground plane (2-vector)."""

    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _finite_vec(self.position, 2, "position"))


def contact_zmp_offset(contacts, zeta: float, zmp_height: float) -> np.ndarray:
    """Aggregate 2D ZMP offset gamma induced by a set of external contacts.

    Horizontal contact forces act through their lever arm above the ground,
    vertical forces through their horizontal offset, and contact moments
    directly. The sum is normalized by zeta.
    """
    gx = 0.0
    gy = 0.0
    for c in contacts:
        arm = c.position[2] - zmp_height
        gx += arm * c.force[0] - c.position[0] * c.force[2] + c.moment[1]
        gy += arm * c.force[1] - c.position[1] * c.force[2] - c.moment[0]
    return np.array([gx / zeta, gy / zeta])


def compute_coefficients(
    params: RobotParams, contacts=(), com_vert_accel: float = 0.0
) -> LipmCoefficients:
    """Pendulum coefficients for a robot subject to the given external contacts."""
    if not math.isfinite(com_vert_accel):
        raise NonPhysical("com_vert_accel must be finite")
    vert = com_vert_accel + params.gravity
    if not vert > 0.0:
        raise NonPhysical("vertical acceleration must exceed -gravity")
    omega = math.sqrt(vert / (params.com_height - params.zmp_height))
    zeta = params.mass * vert
    fz = 0.0
    for c in contacts:
        fz += c.force[2]
    kappa = 1.0 - fz / zeta
    gamma = contact_zmp_offset(contacts, zeta, params.zmp_height)
    return LipmCoefficients(omega=omega, kappa=kappa, gamma=gamma, zeta=zeta)


def ext_zmp(coeff: LipmCoefficients, zmp: ZmpPoint) -> ZmpPoint:
    """Scaled-and-offset ZMP that drives the pendulum under external contacts."""
    return ZmpPoint(coeff.kappa * zmp.position - coeff.gamma)


def lipm_accel(coeff: LipmCoefficients, com: CoMState, zmp: ZmpPoint) -> np.ndarray:
    """Horizontal CoM acceleration omega^2 * (c - kappa z + gamma)."""
    w2 = coeff.omega * coeff.omega
    return w2 * (com.position - coeff.kappa * zmp.position + coeff.gamma)


def dcm_of(com: CoMState, omega: float) -> DcmState:
    """Divergent component of motion xi = c + cdot / omega."""
    return DcmState(com.position + com.velocity / omega)


def dcm_rate(coeff: LipmCoefficients, dcm: DcmState, zmp: ZmpPoint) -> np.ndarray:
    """DCM velocity omega * (xi - kappa z + gamma)."""
    return coeff.omega * (
        dcm.xi - coeff.kappa * zmp.position + coeff.gamma
    )


def net_foot_wrench(
    params: RobotParams,
    com_position: np.ndarray,
    com_acceleration: np.ndarray,
    contacts=(),
) -> tuple[np.ndarray, np.ndarray]:
    """Ground reaction wrench the feet must realize, moment about the world origin.

    The gravito-inertial wrench of the point mass, minus every external
    contact wrench. Assumes zero rate of angular momentum about the CoM, so
    the gravito-inertial part acts along the line through the CoM.

    Parameters
    ----------
    com_position : 3-vector, m
    com_acceleration : 3-vector, m/s^2
    contacts : iterable of ExternalContact

    Returns
    -------
    (force, moment) : two 3-vectors, N and N m
    """
    c = np.array(com_position, dtype=float).reshape(3)
    a = np.array(com_acceleration, dtype=float).reshape(3)
    g_vec = np.array([0.0, 0.0, params.gravity])
    force = params.mass * (a + g_vec)
    for con in contacts:
        force = force - con.force
    moment = np.cross(c, force)
    for con in contacts:
        moment = moment - np.cross(con.position - c, con.force) - con.moment
    return force, moment


def wrench_zmp(force: np.ndarray, moment: np.ndarray, zmp_height: float = 0.0) -> np.ndarray:
    """Point on the ground plane where the wrench's horizontal moment vanishes."""
    fz = force[2]
    if not abs(fz) > 0.0:
        raise NonPhysical("wrench has no vertical force; ZMP undefined")
    return np.array(
        [
            (-moment[1] + zmp_height * force[0]) / fz,
            (moment[0] + zmp_height * force[1]) / fz,
        ]
    )
