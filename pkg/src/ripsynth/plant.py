"""Rotary inverted pendulum: nonlinear dynamics, energy, and linear models.

The plant is a motor-driven horizontal arm (angle ``theta0``) carrying a free
pendulum (angle ``theta1``, zero = upright).  The five-element state vector is

    x = [theta0, dtheta0, theta1, dtheta1, i]

where ``i`` is the armature current of the DC drive.  The control input is
the armature voltage.

Two linear five-state models coexist on purpose:

* :func:`linearize` evaluates the exact Jacobian of :func:`nonlinear_dynamics`
  at the upright equilibrium, symbolically, from a parameter set.
* :func:`canonical_rip_model` returns a fixed numeric benchmark matrix set
  used by the ``rip-*`` experiment presets.  Its entries are *not* derivable
  from the shipped ``table1`` parameter set (the gear constant of that set
  does not reconcile with the benchmark numbers), so the two models are kept
  separate and never patched into agreement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import DimensionError, ParameterError, SingularMatrixError
from .numerics import as_matrix, is_symmetric


@dataclass(frozen=True)
class PendulumParams:
    """Physical constants of the arm + pendulum + geared DC motor assembly.

    Units: kg, m, s, ohm, H, N*m/A; friction and gear constants dimensionless.
    """

    m_p: float  # pendulum mass
    m_c: float  # counterweight mass
    I_p: float  # pendulum inertia about its mass center
    I_a: float  # arm inertia
    r: float  # arm radius
    l_p: float  # pivot-to-mass-center distance of the pendulum
    h: float  # counterweight height
    C_0: float  # arm viscous friction coefficient
    C_1: float  # pendulum viscous friction coefficient
    R_a: float  # armature resistance
    L_a: float  # motor inductance
    I_m: float  # motor rotor inertia
    M_f: float  # motor mutual inductance (torque constant)
    K_g: float  # gear reduction coefficient
    K_eg: float  # external gear reduction coefficient
    g: float = 9.806

    def __post_init__(self) -> None:
        positives = ("m_p", "m_c", "I_p", "I_a", "r", "l_p", "h", "R_a", "L_a", "I_m", "M_f", "g")
        for name in positives:
            if getattr(self, name) <= 0.0:
                raise ParameterError(f"{name} must be strictly positive")
        for name in ("C_0", "C_1", "K_g", "K_eg"):
            if getattr(self, name) < 0.0:
                raise ParameterError(f"{name} must be non-negative")
        if self.j0 <= 0.0 or self.j1 <= 0.0:
            raise ParameterError("derived inertias J0, J1 must be strictly positive")
        if self.j0 * self.j1 - self.coupling**2 <= 0.0:
            raise ParameterError("inertia matrix is not positive definite at the upright pose")

    @property
    def j0(self) -> float:
        """Arm-axis inertia J0 = I_a + r^2 (m_p + m_c), motor excluded."""
        return self.I_a + self.r**2 * (self.m_p + self.m_c)

    @property
    def j1(self) -> float:
        """Pendulum-axis inertia J1 = I_p + m_p l_p^2."""
        return self.I_p + self.m_p * self.l_p**2

    @property
    def coupling(self) -> float:
        """Arm/pendulum inertial coupling m_p r l_p."""
        return self.m_p * self.r * self.l_p

    @property
    def j0_motor(self) -> float:
        """Arm-axis inertia including the reflected rotor inertia K_g^2 I_m."""
        return self.j0 + self.K_g**2 * self.I_m

    @classmethod
    def from_mapping(cls, mapping: dict) -> "PendulumParams":
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ParameterError(f"unknown pendulum parameters: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in mapping.items()})


def table1() -> PendulumParams:
    """Built-in parameter preset for the physical prototype."""
    return PendulumParams(
        m_p=0.1,
        m_c=0.01,
        I_p=5.1e-4,
        I_a=3.1e-3,
        r=0.13,
        l_p=0.125,
        h=0.055,
        C_0=1e-4,
        C_1=1e-4,
        R_a=8.0,
        L_a=0.01,
        I_m=1.9e-6,
        M_f=0.0214,
        K_g=59927.0,
        K_eg=16.0,
        g=9.806,
    )


@dataclass(frozen=True)
class StateSpace:
    """LTI model x' = Ax + Bu + v, y = Cx + Du + w with noise covariances.

    ``dt`` is ``None`` for continuous time and the sample period (s) for
    discrete time.  ``P_v`` / ``P_w`` are the process / measurement noise
    covariances; ``None`` means noise-free and is stored as a zero matrix.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    dt: float | None = None
    P_v: np.ndarray | None = None
    P_w: np.ndarray | None = None

    def __post_init__(self) -> None:
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        C = as_matrix(self.C, "C")
        D = as_matrix(self.D, "D")
        n = A.shape[0]
        if A.shape[1] != n:
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionError(f"B must have {n} rows, got {B.shape}")
        if C.shape[1] != n:
            raise DimensionError(f"C must have {n} columns, got {C.shape}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionError(f"D must be {(C.shape[0], B.shape[1])}, got {D.shape}")
        P_v = np.zeros((n, n)) if self.P_v is None else as_matrix(self.P_v, "P_v")
        P_w = np.zeros((C.shape[0], C.shape[0])) if self.P_w is None else as_matrix(self.P_w, "P_w")
        for name, P, size in (("P_v", P_v, n), ("P_w", P_w, C.shape[0])):
            if P.shape != (size, size):
                raise DimensionError(f"{name} must be {(size, size)}, got {P.shape}")
            if not is_symmetric(P, rtol=1e-8):
                raise DimensionError(f"{name} must be symmetric")
            if P.size and np.min(np.linalg.eigvalsh(P)) < -1e-10 * max(1.0, np.max(np.abs(P))):
                raise DimensionError(f"{name} must be positive semi-definite")
        if self.dt is not None and not self.dt > 0.0:
            raise DimensionError("dt must be positive for discrete-time models")
        for name, value in (("A", A), ("B", B), ("C", C), ("D", D), ("P_v", P_v), ("P_w", P_w)):
            object.__setattr__(self, name, value)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[0]

    @property
    def is_discrete(self) -> bool:
        return self.dt is not None


def nonlinear_dynamics(p: PendulumParams, state, voltage: float) -> np.ndarray:
    """Time derivative of the five-element state under the given voltage.

    The two angular accelerations solve the motor-coupled rigid-body system

        M1(theta1) qdd = T - M2(theta1, qd) qd - M3(theta1)

    where M1 carries the reflected rotor inertia K_g^2 I_m on the arm axis
    and T = [M_f K_g i, 0].  The current obeys
    di/dt = V/L_a - (R_a/L_a) i - M_f/(L_a K_g) dtheta0.
    """
    th0, dth0, th1, dth1, cur = (float(v) for v in np.asarray(state, dtype=float).reshape(5))
    s1 = math.sin(th1)
    c1 = math.cos(th1)
    s2 = math.sin(2.0 * th1)

    m11 = p.j0_motor + p.m_p * p.l_p**2 * s1 * s1
    m12 = -p.coupling * c1
    m22 = p.j1
    det = m11 * m22 - m12 * m12
    if det <= 0.0:  # cannot happen under PendulumParams invariants
        raise SingularMatrixError("inertia matrix is singular")

    torque = p.M_f * p.K_g * cur
    rhs0 = torque - (p.m_p * p.l_p * dth1 * s2 + p.C_0) * dth0 - (p.coupling * dth1 * s1) * dth1
    rhs1 = 0.5 * p.m_p * p.l_p * dth0 * s2 * dth0 - p.C_1 * dth1 + p.m_p * p.g * p.l_p * s1

    ddth0 = (m22 * rhs0 - m12 * rhs1) / det
    ddth1 = (-m12 * rhs0 + m11 * rhs1) / det
    dcur = voltage / p.L_a - (p.R_a / p.L_a) * cur - (p.M_f / (p.L_a * p.K_g)) * dth0
    return np.array([dth0, ddth0, dth1, ddth1, dcur])


def mechanical_dynamics(p: PendulumParams, state, torque: float = 0.0) -> np.ndarray:
    """Derivative of the four-element mechanical state [th0, dth0, th1, dth1].

    Pure Euler-Lagrange model of the two-body mechanism driven by an arm
    torque, with no motor inertia or electrical state.  Its centripetal
    matrix is exactly consistent with :func:`total_energy`, which makes it
    the reference model for energy-conservation checks.
    """
    th0, dth0, th1, dth1 = (float(v) for v in np.asarray(state, dtype=float).reshape(4))
    s1 = math.sin(th1)
    c1 = math.cos(th1)
    s2 = math.sin(2.0 * th1)
    lp2 = p.m_p * p.l_p**2

    m11 = p.j0 + lp2 * s1 * s1
    m12 = -p.coupling * c1
    m22 = p.j1
    det = m11 * m22 - m12 * m12
    if det <= 0.0:
        raise SingularMatrixError("inertia matrix is singular")

    rhs0 = torque - (lp2 * dth1 * s2 + p.C_0) * dth0 - (p.coupling * dth1 * s1) * dth1
    rhs1 = 0.5 * lp2 * dth0 * s2 * dth0 - p.C_1 * dth1 + p.m_p * p.g * p.l_p * s1

    ddth0 = (m22 * rhs0 - m12 * rhs1) / det
    ddth1 = (-m12 * rhs0 + m11 * rhs1) / det
    return np.array([dth0, ddth0, dth1, ddth1])


def total_energy(p: PendulumParams, state) -> float:
    """Mechanical energy (kinetic + potential) at a state; electrical excluded.

    Kinetic part: 1/2 J0 dth0^2 + 1/2 J1 dth1^2
    + 1/2 m_p l_p^2 dth0^2 sin^2(th1) - m_p r l_p dth0 dth1 cos(th1).
    Potential part: m_p g l_p cos(th1) + m_c g h.
    """
    s = np.asarray(state, dtype=float).reshape(-1)
    if s.size not in (4, 5):
        raise DimensionError("state must have 4 or 5 elements")
    _, dth0, th1, dth1 = (float(v) for v in s[:4])
    kinetic = (
        0.5 * p.j0 * dth0**2
        + 0.5 * p.j1 * dth1**2
        + 0.5 * p.m_p * p.l_p**2 * dth0**2 * math.sin(th1) ** 2
        - p.coupling * dth0 * dth1 * math.cos(th1)
    )
    potential = p.m_p * p.g * p.l_p * math.cos(th1) + p.m_c * p.g * p.h
    return kinetic + potential


_OUTPUT_C = np.array([
    [1.0, 0, 0, 0, 0],
    [0, 0, 1.0, 0, 0],
    [0, 0, 0, 0, 1.0],
])  # measurable outputs: theta0, theta1, current


def linearize(
    p: PendulumParams,
    process_noise: float = 1e-6,
    measurement_noise: float = 1e-6,
) -> StateSpace:
    """Continuous five-state model: exact Jacobian of the nonlinear plant at upright.

    The inverse-inertia factor uses the motor-augmented arm inertia
    (J0 + K_g^2 I_m), the viscous-friction cross couplings enter with
    negative sign, and the current-to-acceleration gains are J1 M_f K_g and
    m_p r l_p M_f K_g times that factor; this is what central differences of
    :func:`nonlinear_dynamics` converge to.  The noise covariances default
    to small diagonal values so the stochastic simulation path is exercised.
    """
    j1 = p.j1
    j0m = p.j0_motor
    c = p.coupling
    denom = j0m * j1 - c**2
    if denom <= 0.0:
        raise ParameterError("inverse-inertia denominator must be positive")
    alpha = 1.0 / denom
    grav = p.m_p * p.g * p.l_p
    tq = p.M_f * p.K_g
    A = np.array([
        [0, 1, 0, 0, 0],
        [0, -alpha * j1 * p.C_0, alpha * c * grav, -alpha * c * p.C_1, alpha * j1 * tq],
        [0, 0, 0, 1, 0],
        [0, -alpha * c * p.C_0, alpha * j0m * grav, -alpha * j0m * p.C_1, alpha * c * tq],
        [0, -p.M_f / (p.L_a * p.K_g), 0, 0, -p.R_a / p.L_a],
    ])
    B = np.array([[0.0], [0.0], [0.0], [0.0], [1.0 / p.L_a]])
    return StateSpace(
        A=A,
        B=B,
        C=_OUTPUT_C.copy(),
        D=np.zeros((3, 1)),
        dt=None,
        P_v=process_noise * np.eye(5),
        P_w=measurement_noise * np.eye(3),
    )


def canonical_rip_model(
    process_noise: float = 1e-6,
    measurement_noise: float = 1e-6,
) -> StateSpace:
    """Fixed numeric benchmark model of the rotary inverted pendulum.

    This is the reference plant for the ``rip-*`` presets: a continuous
    five-state model with an unstable upright equilibrium.  The entries are
    pinned numerics, deliberately not regenerated from ``table1`` (the two
    sources do not reconcile; see ``linearize``).
    """
    A = np.array([
        [0, 1, 0, 0, 0],
        [0, -0.31, 2.99, -0.02, 81.47],
        [0, 0, 0, 1, 0],
        [0, -0.02, 61.49, -0.5, 63.88],
        [0, -261.94, 0, 0, -800.0],
    ])
    B = np.array([[0.0], [0.0], [0.0], [0.0], [100.0]])
    return StateSpace(
        A=A,
        B=B,
        C=_OUTPUT_C.copy(),
        D=np.zeros((3, 1)),
        dt=None,
        P_v=process_noise * np.eye(5),
        P_w=measurement_noise * np.eye(3),
    )


def toy_plant() -> StateSpace:
    """Two-state discrete SISO benchmark: open-loop unstable, unit noise."""
    return StateSpace(
        A=np.array([[0.5, 0.0], [0.7, 1.2]]),
        B=np.array([[0.0], [0.1]]),
        C=np.array([[1.0, 1.0]]),
        D=np.array([[0.0]]),
        dt=1.0,
        P_v=np.eye(2),
        P_w=np.array([[1.0]]),
    )


def is_underactuated(f2, q_dim: int) -> bool:
    """True iff the input-coupling map has numerical rank below q_dim."""
    m = as_matrix(f2, "f2")
    if m.shape[0] != q_dim:
        raise DimensionError(f"f2 must have {q_dim} rows, got {m.shape[0]}")
    sv = np.linalg.svd(m, compute_uv=False)
    rank = int(np.sum(sv > 1e-10 * sv[0])) if sv[0] > 0 else 0
    return rank < q_dim
