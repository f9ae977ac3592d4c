"""Closed-loop simulation with seeded noise, references, and metrics.

Noise realizations come from a self-contained generator (splitmix64 mixed
integers fed through the Box-Muller transform) so that trajectories are
bit-reproducible for a given seed and the algorithm itself is simple enough
to restate for cross-checks.  Simulations never raise on unstable loops;
they run until the state norm passes 1e12 and then stop with a divergence
flag, which keeps tuning objectives total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .control import DynamicController
from .errors import DimensionError
from .plant import PendulumParams, StateSpace, nonlinear_dynamics

DIVERGENCE_LIMIT = 1e12

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


class GaussianStream:
    """Deterministic stream of standard normal deviates.

    The j-th 64-bit word (j >= 1) is splitmix64 of ``seed + j * 0x9E37...15``
    (all arithmetic mod 2^64):

        z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
        z ^= z >> 27; z *= 0x94D049BB133111EB;
        z ^= z >> 31

    Word j yields the uniform u_j = ((word >> 11) + 1) * 2^-53 in (0, 1], and
    consecutive uniform pairs (u_{2k+1}, u_{2k+2}) yield the normal pair

        n_{2k}   = sqrt(-2 ln u_{2k+1}) * cos(2 pi u_{2k+2})
        n_{2k+1} = sqrt(-2 ln u_{2k+1}) * sin(2 pi u_{2k+2})

    The stream is the concatenation n_0, n_1, n_2, ... regardless of how
    draws are batched.
    """

    _BLOCK_PAIRS = 512

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._next_pair = 0
        self._buffer = np.empty(0)

    def _uniform_words(self, first_word: int, count: int) -> np.ndarray:
        idx = np.arange(first_word, first_word + count, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = (np.uint64(self.seed & 0xFFFFFFFFFFFFFFFF) + idx * _GOLDEN).astype(np.uint64)
            z ^= z >> np.uint64(30)
            z *= _MIX1
            z ^= z >> np.uint64(27)
            z *= _MIX2
            z ^= z >> np.uint64(31)
        return ((z >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53

    def _refill(self) -> None:
        first_word = 2 * self._next_pair + 1
        u = self._uniform_words(first_word, 2 * self._BLOCK_PAIRS)
        u1, u2 = u[0::2], u[1::2]
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        block = np.empty(2 * self._BLOCK_PAIRS)
        block[0::2] = radius * np.cos(angle)
        block[1::2] = radius * np.sin(angle)
        self._next_pair += self._BLOCK_PAIRS
        self._buffer = np.concatenate([self._buffer, block])

    def normals(self, count: int) -> np.ndarray:
        while self._buffer.size < count:
            self._refill()
        out, self._buffer = self._buffer[:count], self._buffer[count:]
        return out.copy()

    def normal(self) -> float:
        return float(self.normals(1)[0])


@dataclass(frozen=True)
class ReferenceSignal:
    """Scalar reference r[k]: zero, delayed step, or sine."""

    kind: str = "zero"
    amplitude: float = 0.0
    onset_step: int = 0
    period_steps: int = 100
    phase: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("zero", "step", "sine"):
            raise ValueError(f"unknown reference kind {self.kind!r}")
        if self.kind == "sine" and self.period_steps < 2:
            raise ValueError("sine references need period_steps >= 2")

    @classmethod
    def zero(cls) -> "ReferenceSignal":
        return cls()

    @classmethod
    def step(cls, amplitude: float, onset_step: int = 0) -> "ReferenceSignal":
        return cls(kind="step", amplitude=amplitude, onset_step=onset_step)

    @classmethod
    def sine(cls, amplitude: float, period_steps: int, phase: float = 0.0) -> "ReferenceSignal":
        return cls(kind="sine", amplitude=amplitude, period_steps=period_steps, phase=phase)

    def series(self, horizon: int) -> np.ndarray:
        k = np.arange(horizon)
        if self.kind == "zero":
            return np.zeros(horizon)
        if self.kind == "step":
            return np.where(k >= self.onset_step, self.amplitude, 0.0)
        return self.amplitude * np.sin(2.0 * np.pi * k / self.period_steps + self.phase)


@dataclass(frozen=True)
class SimResult:
    """Step-indexed trajectories; all arrays share the same length."""

    states: np.ndarray  # (T, n_x)
    controller_states: np.ndarray  # (T, n_xc), zero columns for static laws
    outputs: np.ndarray  # (T, n_y)
    controls: np.ndarray  # (T, n_u)
    references: np.ndarray  # (T, n_u)
    seed: int
    diverged: bool = False

    def __len__(self) -> int:
        return self.states.shape[0]

    def _columns(self) -> tuple[list[str], np.ndarray]:
        def block(tag: str, arr: np.ndarray) -> list[str]:
            return [f"{tag}_{i}" for i in range(arr.shape[1])]

        names = (
            block("ref", self.references)
            + block("y", self.outputs)
            + block("u", self.controls)
            + block("x", self.states)
            + block("xc", self.controller_states)
        )
        data = np.hstack([
            self.references, self.outputs, self.controls, self.states, self.controller_states
        ])
        return names, data

    def to_csv(self, path) -> None:
        names, data = self._columns()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("step," + ",".join(names) + "\n")
            for k, row in enumerate(data):
                fh.write(str(k) + "," + ",".join(f"{v:.17g}" for v in row) + "\n")

    def to_dat(self, path) -> None:
        """Gnuplot-friendly mirror of the CSV serialization."""
        names, data = self._columns()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# step " + " ".join(names) + "\n")
            for k, row in enumerate(data):
                fh.write(str(k) + " " + " ".join(f"{v:.17g}" for v in row) + "\n")


@dataclass(frozen=True)
class Metrics:
    peak_control: float
    settling_step: int | None  # None when the band is never held to the end
    settled: bool
    tracking_rmse: float
    steady_state_error: float


def _psd_sqrt(P: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD covariance (tolerates singularity)."""
    if not P.size or not np.any(P):
        return np.zeros_like(P)
    w, V = np.linalg.eigh(P)
    return V @ np.diag(np.sqrt(np.clip(w, 0.0, None)))


def _prefilter_matrix(F, n_u: int) -> np.ndarray:
    if F is None:
        return np.eye(n_u)
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.shape != (n_u, n_u):
        raise DimensionError(f"F must be {(n_u, n_u)}, got {F.shape}")
    return F


def _simulate_linear(ss, A_c, B_c, C_c, D_c, F, ref, horizon, seed, x0, xc0) -> SimResult:
    """Shared discrete closed-loop iteration.

    Per step k: draw v[k] (n_x normals through the process-noise factor)
    then w[k] (n_y normals through the measurement factor); form
    u[k] = F rbar[k] - Cc xc[k] - Dc x[k]; read y[k] = C x[k] + D u[k] + w[k];
    advance x and xc.  The draw count per step is independent of the
    controller, so equal seeds give identical noise across controllers.
    """
    if not ss.is_discrete:
        raise ValueError("simulation requires a discrete-time model (use c2d_zoh)")
    n_x, n_u, n_y = ss.n_states, ss.n_inputs, ss.n_outputs
    n_xc = A_c.shape[0]
    F = _prefilter_matrix(F, n_u)
    r = ref.series(horizon)
    stream = GaussianStream(seed)
    Lv = _psd_sqrt(ss.P_v)
    Lw = _psd_sqrt(ss.P_w)

    x = np.zeros(n_x) if x0 is None else np.asarray(x0, dtype=float).reshape(n_x)
    xc = np.zeros(n_xc) if xc0 is None else np.asarray(xc0, dtype=float).reshape(n_xc)
    states, ctrl_states, outputs, controls, refs = [], [], [], [], []
    diverged = False
    for k in range(horizon):
        v = Lv @ stream.normals(n_x)
        w = Lw @ stream.normals(n_y)
        r_vec = np.full(n_u, r[k])
        u = F @ r_vec - C_c @ xc - D_c @ x
        y = ss.C @ x + ss.D @ u + w
        states.append(x)
        ctrl_states.append(xc)
        outputs.append(y)
        controls.append(u)
        refs.append(r_vec)
        x_next = ss.A @ x + ss.B @ u + v
        xc_next = A_c @ xc + B_c @ x
        x, xc = x_next, xc_next
        if np.max(np.abs(x)) > DIVERGENCE_LIMIT:
            diverged = True
            break
    return SimResult(
        states=np.array(states).reshape(-1, n_x),
        controller_states=np.array(ctrl_states).reshape(-1, n_xc),
        outputs=np.array(outputs).reshape(-1, n_y),
        controls=np.array(controls).reshape(-1, n_u),
        references=np.array(refs).reshape(-1, n_u),
        seed=int(seed),
        diverged=diverged,
    )


def simulate_dynamic(
    ss: StateSpace,
    ctrl: DynamicController,
    F,
    ref: ReferenceSignal,
    horizon: int,
    seed: int,
    x0=None,
    xc0=None,
) -> SimResult:
    """Noisy discrete loop under a dynamic controller u = F rbar - Cc xc - Dc x."""
    if ctrl.n_plant_states != ss.n_states or ctrl.n_inputs != ss.n_inputs:
        raise DimensionError("controller dimensions do not match the model")
    return _simulate_linear(
        ss, ctrl.A_c, ctrl.B_c, ctrl.C_c, ctrl.D_c, F, ref, horizon, seed, x0, xc0
    )


def simulate_static(
    ss: StateSpace,
    K,
    F,
    ref: ReferenceSignal,
    horizon: int,
    seed: int,
    x0=None,
) -> SimResult:
    """Noisy discrete loop under the static law u = F rbar - K x."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (ss.n_inputs, ss.n_states):
        raise DimensionError(f"K must be {(ss.n_inputs, ss.n_states)}, got {K.shape}")
    empty = np.zeros((0, 0))
    return _simulate_linear(
        ss,
        empty,
        np.zeros((0, ss.n_states)),
        np.zeros((ss.n_inputs, 0)),
        K,
        F,
        ref,
        horizon,
        seed,
        x0,
        np.zeros(0),
    )


def rk4_step(f, x: np.ndarray, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of x' = f(x)."""
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate_nonlinear(
    p: PendulumParams,
    ctrl: DynamicController | None,
    F,
    ref: ReferenceSignal,
    Ts: float,
    horizon: int,
    seed: int = 0,
    x0=None,
    substeps: int = 1,
) -> SimResult:
    """Sampled-data loop around the nonlinear pendulum.

    The controller (already in discrete form; see ``c2d_controller``) updates
    every Ts seconds on the true sampled state, and the commanded voltage is
    held while the plant integrates with RK4 (``substeps`` sub-intervals per
    sample).  ``ctrl=None`` runs open loop.  This is the validation path for
    linear designs, so no noise is injected; ``seed`` is only recorded.
    """
    if not Ts > 0.0 or substeps < 1:
        raise ValueError("Ts must be positive and substeps >= 1")
    if ctrl is None:
        ctrl = DynamicController(
            A_c=np.zeros((1, 1)),
            B_c=np.zeros((1, 5)),
            C_c=np.zeros((1, 1)),
            D_c=np.zeros((1, 5)),
        )
    if ctrl.n_plant_states != 5 or ctrl.n_inputs != 1:
        raise DimensionError("nonlinear simulation expects a 5-state, 1-input controller")
    F = _prefilter_matrix(F, 1)
    r = ref.series(horizon)
    h = Ts / substeps

    x = np.zeros(5) if x0 is None else np.asarray(x0, dtype=float).reshape(5)
    xc = np.zeros(ctrl.n_states)
    states, ctrl_states, outputs, controls, refs = [], [], [], [], []
    diverged = False
    for k in range(horizon):
        r_vec = np.array([r[k]])
        u = F @ r_vec - ctrl.C_c @ xc - ctrl.D_c @ x
        voltage = float(u[0])
        states.append(x)
        ctrl_states.append(xc.copy())
        outputs.append(np.array([x[0], x[2], x[4]]))
        controls.append(u)
        refs.append(r_vec)
        xc = ctrl.A_c @ xc + ctrl.B_c @ x
        for _ in range(substeps):
            x = rk4_step(lambda s: nonlinear_dynamics(p, s, voltage), x, h)
        if np.max(np.abs(x)) > DIVERGENCE_LIMIT:
            diverged = True
            break
    return SimResult(
        states=np.array(states).reshape(-1, 5),
        controller_states=np.array(ctrl_states).reshape(-1, ctrl.n_states),
        outputs=np.array(outputs).reshape(-1, 3),
        controls=np.array(controls).reshape(-1, 1),
        references=np.array(refs).reshape(-1, 1),
        seed=int(seed),
        diverged=diverged,
    )


def compute_metrics(res: SimResult, band: float | None = None) -> Metrics:
    """Summary statistics of a run.

    Tracking error compares the first n_u output channels against the
    reference.  The settling band defaults to 2% of the peak reference
    amplitude (1e-3 absolute for all-zero references); the settling step is
    the first index after which the error stays inside the band for the rest
    of the horizon.  The RMSE is taken over the settled window (the whole
    run when unsettled) and the steady-state error over the final 10%.
    """
    if len(res) == 0:
        raise ValueError("empty simulation result")
    n_u = res.controls.shape[1]
    err = res.outputs[:, :n_u] - res.references
    err_inf = np.max(np.abs(err), axis=1)
    if band is None:
        ref_amp = float(np.max(np.abs(res.references))) if res.references.size else 0.0
        band = 0.02 * ref_amp if ref_amp > 0.0 else 1e-3

    outside = np.nonzero(err_inf > band)[0]
    if outside.size == 0:
        settling, settled = 0, True
    elif outside[-1] == len(res) - 1:
        settling, settled = None, False
    else:
        settling, settled = int(outside[-1]) + 1, True

    window = err[settling:] if settled else err
    tail = max(1, len(res) // 10)
    return Metrics(
        peak_control=float(np.max(np.abs(res.controls))) if res.controls.size else 0.0,
        settling_step=settling,
        settled=settled,
        tracking_rmse=float(math.sqrt(np.mean(window**2))),
        steady_state_error=float(np.mean(np.abs(err[-tail:]))),
    )
