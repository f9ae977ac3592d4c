"""Controller synthesis and closed-loop analysis.

LQR gains come from the continuous algebraic Riccati equation

    A'P + PA - P B R^-1 B' P + Q = 0,

solved by Kleinman-Newton iteration: each step solves one Lyapunov equation
through a Kronecker-product linear system, starting from a stabilizing gain
obtained with Bass's eigenvalue-shift construction.  The generalized dynamic
controller

    xc' = Ac xc + Bc x,   u = r - (Cc xc + Dc x)

closes the loop through the block matrix
Abar = [[A - B Dc, -B Cc], [Bc, Ac]], whose spectrum decides stability:
abscissa < 0 in continuous time, radius < 1 in discrete time.  With finite
noise covariances the same spectral condition is the implemented test for
bounded stationary first and second moments of the state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionError,
    PrefilterError,
    SingularMatrixError,
    SynthesisError,
)
from .numerics import as_matrix, as_square_matrix, eigenvalues, is_symmetric, matrix_exponential, solve_linear
from .plant import StateSpace


@dataclass(frozen=True)
class DynamicController:
    """State-feedback controller with internal dynamics (Ac, Bc, Cc, Dc).

    A static gain K is the degenerate case Bc = 0, Cc = 0, Dc = K.
    """

    A_c: np.ndarray
    B_c: np.ndarray
    C_c: np.ndarray
    D_c: np.ndarray

    def __post_init__(self) -> None:
        A_c = as_square_matrix(self.A_c, "A_c")
        B_c = as_matrix(self.B_c, "B_c")
        C_c = as_matrix(self.C_c, "C_c")
        D_c = as_matrix(self.D_c, "D_c")
        n_xc = A_c.shape[0]
        if B_c.shape[0] != n_xc:
            raise DimensionError(f"B_c must have {n_xc} rows, got {B_c.shape}")
        if C_c.shape[1] != n_xc:
            raise DimensionError(f"C_c must have {n_xc} columns, got {C_c.shape}")
        if D_c.shape != (C_c.shape[0], B_c.shape[1]):
            raise DimensionError(f"D_c must be {(C_c.shape[0], B_c.shape[1])}, got {D_c.shape}")
        for name, value in (("A_c", A_c), ("B_c", B_c), ("C_c", C_c), ("D_c", D_c)):
            object.__setattr__(self, name, value)

    @property
    def n_states(self) -> int:
        return self.A_c.shape[0]

    @property
    def n_plant_states(self) -> int:
        return self.B_c.shape[1]

    @property
    def n_inputs(self) -> int:
        return self.C_c.shape[0]


@dataclass(frozen=True)
class StabilityReport:
    eigenvalues: np.ndarray
    spectral_abscissa: float
    spectral_radius: float
    stable: bool
    domain: str  # "continuous" | "discrete"


def stability_report(m, domain: str) -> StabilityReport:
    """Eigenvalues plus the domain-appropriate strict stability verdict."""
    if domain not in ("continuous", "discrete"):
        raise ValueError(f"domain must be 'continuous' or 'discrete', got {domain!r}")
    ev = eigenvalues(m)
    abscissa = float(np.max(ev.real))
    radius = float(np.max(np.abs(ev)))
    stable = abscissa < 0.0 if domain == "continuous" else radius < 1.0
    return StabilityReport(
        eigenvalues=ev,
        spectral_abscissa=abscissa,
        spectral_radius=radius,
        stable=stable,
        domain=domain,
    )


def spectral_abscissa(m) -> float:
    return float(np.max(eigenvalues(m).real))


def spectral_radius(m) -> float:
    return float(np.max(np.abs(eigenvalues(m))))


def validate_lqr_weights(Q, R) -> tuple[np.ndarray, np.ndarray]:
    """Check Q symmetric PSD and R symmetric PD; return coerced arrays."""
    Q = as_square_matrix(Q, "Q")
    R = as_square_matrix(R, "R")
    if not is_symmetric(Q, rtol=1e-8):
        raise DimensionError("Q must be symmetric")
    if not is_symmetric(R, rtol=1e-8):
        raise DimensionError("R must be symmetric")
    if np.min(np.linalg.eigvalsh(Q)) < -1e-10 * max(1.0, np.max(np.abs(Q))):
        raise DimensionError("Q must be positive semi-definite")
    if np.min(np.linalg.eigvalsh(R)) <= 0.0:
        raise DimensionError("R must be positive definite")
    return Q, R


def lyapunov_continuous(M, Y) -> np.ndarray:
    """Solve M'P + PM + Y = 0 via the Kronecker-product linear system.

    Sized for the tiny systems of this toolkit (n^2 x n^2 dense solve).  The
    Kronecker system inherits the full spectral spread of M squared, so the
    solve is not pivot-gated; stiff but solvable systems are the norm here
    and callers validate their results downstream.
    """
    M = as_square_matrix(M, "M")
    Y = as_square_matrix(Y, "Y")
    if Y.shape != M.shape:
        raise DimensionError("M and Y must have identical shapes")
    n = M.shape[0]
    S = np.kron(np.eye(n), M.T) + np.kron(M.T, np.eye(n))
    try:
        p = np.linalg.solve(S, -Y.reshape(-1, 1, order="F"))
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"Lyapunov operator is singular: {exc}") from exc
    P = p.reshape((n, n), order="F")
    return 0.5 * (P + P.T)


def _bass_gain(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Stabilizing gain via eigenvalue shifting.

    With beta > ||A||_F, Z solving (A + beta I) Z + Z (A + beta I)' = 2 B B'
    is the (scaled) controllability Gramian of the shifted pair; K = B' Z^-1
    then satisfies (A - BK) Z + Z (A - BK)' = -2 beta Z < 0, so A - BK is
    Hurwitz whenever Z is invertible, i.e. whenever (A, B) is controllable.
    Z is often badly conditioned (the shift must exceed the full spectral
    spread), so the gain is accepted by verifying closed-loop stability, not
    by a pivot test; a few shift sizes are tried before giving up.
    """
    n = A.shape[0]
    base = max(1.0, float(np.linalg.norm(A, "fro")))
    for factor in (2.0, 4.0, 8.0):
        M = A + factor * base * np.eye(n)
        S = np.kron(np.eye(n), M) + np.kron(M, np.eye(n))
        try:
            z = np.linalg.solve(S, (2.0 * B @ B.T).reshape(-1, 1, order="F"))
            Z = z.reshape((n, n), order="F")
            K = np.linalg.solve(0.5 * (Z + Z.T), B).T
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(K)) and spectral_abscissa(A - B @ K) < 0.0:
            return K
    raise SynthesisError("pair (A, B) appears non-stabilizable")


def solve_care(A, B, Q, R, tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    """Stabilizing solution of A'P + PA - P B R^-1 B' P + Q = 0.

    Kleinman-Newton: given a stabilizing gain K_j, solve the Lyapunov
    equation (A - B K_j)' P + P (A - B K_j) + Q + K_j' R K_j = 0 and update
    K_{j+1} = R^-1 B' P.  Quadratically convergent and monotone once started
    from any stabilizing gain.

    Raises SynthesisError when no stabilizing initial gain can be built
    (non-stabilizable pair) or the iteration fails to converge.
    """
    A = as_square_matrix(A, "A")
    B = as_matrix(B, "B")
    if B.shape[0] != A.shape[0]:
        raise DimensionError(f"B must have {A.shape[0]} rows, got {B.shape}")
    Q, R = validate_lqr_weights(Q, R)
    if Q.shape[0] != A.shape[0] or R.shape[0] != B.shape[1]:
        raise DimensionError("Q must match A and R must match the input count")

    if spectral_abscissa(A) < 0.0:
        K = np.zeros((B.shape[1], A.shape[0]))
    else:
        K = _bass_gain(A, B)

    P_prev: np.ndarray | None = None
    for _ in range(max_iter):
        P = lyapunov_continuous(A - B @ K, Q + K.T @ R @ K)
        K = solve_linear(R, B.T @ P)
        if P_prev is not None and np.max(np.abs(P - P_prev)) <= tol * max(1.0, np.max(np.abs(P))):
            if spectral_abscissa(A - B @ K) >= 0.0:
                raise SynthesisError("Riccati iteration converged to a non-stabilizing solution")
            return P
        P_prev = P
    raise SynthesisError(f"Riccati iteration did not converge within {max_iter} steps")


def lqr_gain(A, B, Q, R) -> np.ndarray:
    """Optimal state-feedback gain K = R^-1 B' P from the Riccati solution."""
    P = solve_care(A, B, Q, R)
    B = as_matrix(B, "B")
    R = as_square_matrix(R, "R")
    return solve_linear(R, B.T @ P)


def _tracked_rows(ss: StateSpace, tracked_outputs) -> np.ndarray:
    """Rows of C used for steady-state tracking; defaults to the first n_u."""
    if tracked_outputs is None:
        tracked_outputs = tuple(range(ss.n_inputs))
    rows = ss.C[list(tracked_outputs), :]
    if rows.shape[0] != ss.n_inputs:
        raise DimensionError(
            f"prefilter needs exactly {ss.n_inputs} tracked outputs, got {rows.shape[0]}"
        )
    return rows


def static_prefilter(ss: StateSpace, K, tracked_outputs=None) -> np.ndarray:
    """Reference gain F = -(C (A - BK - I)^-1 B)^-1 for unity step tracking."""
    K = as_matrix(K, "K")
    C = _tracked_rows(ss, tracked_outputs)
    n = ss.n_states
    try:
        X = solve_linear(ss.A - ss.B @ K - np.eye(n), ss.B)
        return -solve_linear(C @ X, np.eye(ss.n_inputs))
    except SingularMatrixError as exc:
        raise PrefilterError(f"static prefilter does not exist: {exc}") from exc


def dynamic_prefilter(ss: StateSpace, ctrl: DynamicController, tracked_outputs=None) -> np.ndarray:
    """Reference gain F = -(C (A - I - B Dc + B Cc (Ac - I)^-1 Bc)^-1 B)^-1.

    Collapses to :func:`static_prefilter` with K = Dc when Cc = 0 or Bc = 0.
    """
    C = _tracked_rows(ss, tracked_outputs)
    n = ss.n_states
    try:
        inner = ctrl.C_c @ solve_linear(ctrl.A_c - np.eye(ctrl.n_states), ctrl.B_c)
        M = ss.A - np.eye(n) - ss.B @ ctrl.D_c + ss.B @ inner
        X = solve_linear(M, ss.B)
        return -solve_linear(C @ X, np.eye(ss.n_inputs))
    except SingularMatrixError as exc:
        raise PrefilterError(f"dynamic prefilter does not exist: {exc}") from exc


def _check_loop_dims(ss: StateSpace, ctrl: DynamicController) -> None:
    if ctrl.n_plant_states != ss.n_states:
        raise DimensionError(
            f"controller expects {ctrl.n_plant_states} plant states, model has {ss.n_states}"
        )
    if ctrl.n_inputs != ss.n_inputs:
        raise DimensionError(
            f"controller produces {ctrl.n_inputs} inputs, model takes {ss.n_inputs}"
        )


def augmented_matrix(ss: StateSpace, ctrl: DynamicController) -> np.ndarray:
    """Closed-loop block matrix [[A - B Dc, -B Cc], [Bc, Ac]]."""
    _check_loop_dims(ss, ctrl)
    return np.block([
        [ss.A - ss.B @ ctrl.D_c, -ss.B @ ctrl.C_c],
        [ctrl.B_c, ctrl.A_c],
    ])


def augmented_system(ss: StateSpace, ctrl: DynamicController) -> StateSpace:
    """Closed loop as a single model driven by the prefiltered reference.

    State [x; xc], input r, output Cx; the process noise enters the plant
    block only, so the augmented covariance is zero-padded.
    """
    _check_loop_dims(ss, ctrl)
    n, n_xc = ss.n_states, ctrl.n_states
    B_bar = np.vstack([ss.B, np.zeros((n_xc, ss.n_inputs))])
    C_bar = np.hstack([ss.C, np.zeros((ss.n_outputs, n_xc))])
    P_bar = np.zeros((n + n_xc, n + n_xc))
    P_bar[:n, :n] = ss.P_v
    return StateSpace(
        A=augmented_matrix(ss, ctrl),
        B=B_bar,
        C=C_bar,
        D=np.zeros((ss.n_outputs, ss.n_inputs)),
        dt=ss.dt,
        P_v=P_bar,
        P_w=ss.P_w,
    )


def _zoh_pair(A: np.ndarray, B: np.ndarray, Ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretization via the block matrix exponential."""
    n, m = A.shape[0], B.shape[1]
    block = np.zeros((n + m, n + m))
    block[:n, :n] = A
    block[:n, n:] = B
    E = matrix_exponential(block * Ts)
    return E[:n, :n], E[:n, n:]


def c2d_zoh(ss: StateSpace, Ts: float) -> StateSpace:
    """Discretize a continuous model with a zero-order hold of period Ts.

    The process-noise covariance is scaled by Ts (Euler-consistent rate to
    increment conversion); the measurement covariance is untouched.
    """
    if ss.is_discrete:
        raise ValueError("model is already discrete")
    if not Ts > 0.0:
        raise ValueError("Ts must be positive")
    Ad, Bd = _zoh_pair(ss.A, ss.B, Ts)
    return StateSpace(
        A=Ad,
        B=Bd,
        C=ss.C.copy(),
        D=ss.D.copy(),
        dt=Ts,
        P_v=Ts * ss.P_v,
        P_w=ss.P_w.copy(),
    )


def c2d_controller(ctrl: DynamicController, Ts: float) -> DynamicController:
    """ZOH-discretize a continuous controller's internal dynamics at period Ts.

    The plant state is the controller's input and is held constant over each
    sample; Cc and Dc are passthrough gains and stay unchanged.
    """
    if not Ts > 0.0:
        raise ValueError("Ts must be positive")
    A_cd, B_cd = _zoh_pair(ctrl.A_c, ctrl.B_c, Ts)
    return DynamicController(A_c=A_cd, B_c=B_cd, C_c=ctrl.C_c.copy(), D_c=ctrl.D_c.copy())


def toy_static_gain() -> np.ndarray:
    """Static gain for the toy benchmark plant; places the loop poles at {0.5, 0.8}."""
    return np.array([[0.3, 4.0]])


def toy_dynamic_controller() -> DynamicController:
    """One-state dynamic controller for the toy benchmark plant.

    Chosen so the closed-loop block matrix has eigenvalues {0.5, 0.59, 0.8}:
    the same dominant mode as the static gain, one extra natural mode, and a
    smaller control signal on the same references.
    """
    return DynamicController(
        A_c=np.array([[0.4]]),
        B_c=np.array([[1.0, -1.52]]),
        C_c=np.array([[-0.5]]),
        D_c=np.array([[0.3, 2.1]]),
    )


def canonical_bo_controller() -> DynamicController:
    """Reference synthesized controller for the canonical benchmark model.

    A known feasibility witness: it renders the closed-loop spectral
    abscissa of the canonical model negative.  Ships as the controller of
    the ``rip-track`` preset.
    """
    return DynamicController(
        A_c=np.array([[-100.0]]),
        B_c=np.zeros((1, 5)),
        C_c=np.array([[-0.5]]),
        D_c=np.array([[-20.96, -39.76, 72.74, 92.61, -0.58]]),
    )
