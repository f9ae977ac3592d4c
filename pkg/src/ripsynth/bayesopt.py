"""Gaussian-process surrogate, Expected Improvement, and the tuning loop.

The loop minimizes a black-box objective over a box by the usual sequence:
fit a GP to all evaluations so far, maximize the Expected Improvement
acquisition, evaluate the chosen point, repeat until the evaluation budget
is spent.  EI is kept in its maximization form

    EI(x) = (mu - f+ - xi) Phi(z) + sigma phi(z),   z = (mu - f+ - xi)/sigma

so the loop feeds it the negated, standardized objective; the returned
result reports the minimum of the raw values.

Controller synthesis plugs in through :func:`synthesis_objective`, which
maps a flat parameter vector to the closed-loop spectral abscissa (or
radius) of the plant + dynamic-controller loop: negative means stable, and
minimizing pushes the dominant mode left / inward.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from .control import DynamicController, augmented_matrix
from .errors import ConditioningError, ConvergenceError, DimensionError
from .plant import StateSpace

PENALTY_VALUE = 1e6  # stands in for failed objective evaluations
_SQRT_2PI = float(np.sqrt(2.0 * np.pi))

_INIT_STEP = 0.25  # pattern-search step for probe-seeded restarts
_LOCAL_STEP = 0.05  # pattern-search step for incumbent-seeded restarts
_MIN_STEP = 1e-4
_MAX_SWEEPS = 100


@dataclass(frozen=True)
class KernelConfig:
    """Stationary kernel choice with fixed hyperparameters (no learning)."""

    length_scales: np.ndarray
    kind: str = "squared-exponential"  # or "matern-5/2"
    signal_variance: float = 1.0
    noise_variance: float = 1e-6

    def __post_init__(self) -> None:
        ls = np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        if ls.ndim != 1 or np.any(ls <= 0.0):
            raise ValueError("length_scales must be a vector of positive reals")
        if self.kind not in ("squared-exponential", "matern-5/2"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.signal_variance <= 0.0:
            raise ValueError("signal_variance must be positive")
        if self.noise_variance < 0.0:
            raise ValueError("noise_variance must be non-negative")
        object.__setattr__(self, "length_scales", ls)


@dataclass(frozen=True)
class SearchSpace:
    """Axis-aligned box in R^m."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError("lower and upper must be vectors of equal length")
        if np.any(lo >= hi):
            raise ValueError("each lower bound must be strictly below its upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dimension(self) -> int:
        return self.lower.size

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.lower) / (self.upper - self.lower)

    def denormalize(self, u: np.ndarray) -> np.ndarray:
        return self.lower + np.asarray(u, dtype=float) * (self.upper - self.lower)


@dataclass(frozen=True)
class BoConfig:
    n_init: int = 10
    n_max: int = 150
    xi: float = 0.01
    acquisition_restarts: int = 10
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.n_init < 2:
            raise ValueError("n_init must be at least 2")
        if self.n_max <= self.n_init:
            raise ValueError("n_max must exceed n_init")
        if self.xi < 0.0:
            raise ValueError("xi must be non-negative")
        if self.acquisition_restarts < 1:
            raise ValueError("acquisition_restarts must be at least 1")


@dataclass(frozen=True)
class BoResult:
    best_point: np.ndarray
    best_value: float
    history: tuple  # ((point, value), ...) in evaluation order


@dataclass(frozen=True)
class GpModel:
    """Fitted GP posterior state over inputs normalized to the unit cube."""

    inputs: np.ndarray  # (n, m)
    outputs: np.ndarray  # (n,) raw training values
    kernel: KernelConfig
    chol_factor: np.ndarray  # lower Cholesky of K + jitter I
    alpha: np.ndarray  # (K + jitter I)^-1 standardized outputs
    output_mean: float
    output_scale: float
    jitter: float

    @property
    def standardized_outputs(self) -> np.ndarray:
        return (self.outputs - self.output_mean) / self.output_scale


def _cross_kernel(X: np.ndarray, Z: np.ndarray, k: KernelConfig) -> np.ndarray:
    """Kernel matrix k(x_i, z_j) for row-stacked point sets."""
    Xs = X / k.length_scales
    Zs = Z / k.length_scales
    d2 = (Xs**2).sum(axis=1)[:, None] + (Zs**2).sum(axis=1)[None, :] - 2.0 * (Xs @ Zs.T)
    d2 = np.maximum(d2, 0.0)
    if k.kind == "squared-exponential":
        return k.signal_variance * np.exp(-0.5 * d2)
    r = np.sqrt(5.0 * d2)
    return k.signal_variance * (1.0 + r + r**2 / 3.0) * np.exp(-r)


def kernel_matrix(points, k: KernelConfig) -> np.ndarray:
    """Symmetric kernel matrix of a point set (diagonal = signal variance)."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if X.shape[1] != k.length_scales.size:
        raise DimensionError(
            f"points have dimension {X.shape[1]}, kernel expects {k.length_scales.size}"
        )
    K = _cross_kernel(X, X, k)
    np.fill_diagonal(K, k.signal_variance)
    return 0.5 * (K + K.T)


def gp_fit(inputs, outputs, kernel: KernelConfig) -> GpModel:
    """Fit the GP: standardize outputs, factor K + jitter I, precompute alpha.

    The jitter starts at max(noise_variance, 1e-8) and escalates tenfold up
    to 1e-4 when the Cholesky fails (duplicate or near-duplicate inputs);
    beyond that the data is declared ill-conditioned.
    """
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.atleast_1d(np.asarray(outputs, dtype=float)).reshape(-1)
    if X.shape[0] != y.size or X.shape[0] < 1:
        raise DimensionError("inputs and outputs must have matching nonzero length")
    mean = float(y.mean())
    scale = float(y.std())
    if scale < 1e-12:
        scale = 1.0
    g = (y - mean) / scale

    K = kernel_matrix(X, kernel)
    jitter = max(kernel.noise_variance, 1e-8)
    while True:
        try:
            L = np.linalg.cholesky(K + jitter * np.eye(y.size))
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > 1e-4:
                raise ConditioningError(
                    "kernel matrix is not positive definite even with jitter 1e-4"
                ) from None
    alpha = np.linalg.solve(L.T, np.linalg.solve(L, g))
    return GpModel(
        inputs=X,
        outputs=y,
        kernel=kernel,
        chol_factor=L,
        alpha=alpha,
        output_mean=mean,
        output_scale=scale,
        jitter=jitter,
    )


def _predict_standardized(model: GpModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and standard deviation in standardized output units."""
    Kq = _cross_kernel(model.inputs, X, model.kernel)
    mu = Kq.T @ model.alpha
    V = np.linalg.solve(model.chol_factor, Kq)
    var = np.clip(model.kernel.signal_variance - (V**2).sum(axis=0), 0.0, None)
    return mu, np.sqrt(var)


def gp_predict(model: GpModel, x) -> tuple[float, float]:
    """Posterior mean and standard deviation at one point, in raw output units."""
    xq = np.asarray(x, dtype=float).reshape(1, -1)
    if xq.shape[1] != model.inputs.shape[1]:
        raise DimensionError("query point dimension does not match the training inputs")
    mu, sigma = _predict_standardized(model, xq)
    return (
        model.output_mean + model.output_scale * float(mu[0]),
        model.output_scale * float(sigma[0]),
    )


def expected_improvement(mu, sigma, f_best, xi: float = 0.0):
    """EI of a Gaussian posterior over the incumbent f_best (maximization form).

    For sigma = 0 this degenerates to max(0, mu - f_best - xi).  Accepts
    scalars or arrays; the return matches the broadcast shape.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0.0):
        raise ValueError("sigma must be non-negative")
    imp = mu - f_best - xi
    pos = sigma > 0.0
    z = np.where(pos, imp / np.where(pos, sigma, 1.0), 0.0)
    pdf = np.exp(-0.5 * z**2) / _SQRT_2PI
    ei = np.where(pos, imp * ndtr(z) + sigma * pdf, np.maximum(imp, 0.0))
    return float(ei) if ei.ndim == 0 else ei


def optimize_acquisition(
    model: GpModel,
    space: SearchSpace,
    xi: float,
    rng: np.random.Generator,
    restarts: int = 10,
    probes_per_dim: int = 2000,
) -> np.ndarray:
    """Maximize EI over the box; returns the winner in original coordinates.

    Candidates are the union of a dense uniform probe set and pattern-search
    refinements run from the most promising probes and from perturbations of
    the incumbent (the refinements advance in lockstep, halving their step
    on failed sweeps until it drops below 1e-4).  Deterministic given the
    generator state.
    """
    m = space.dimension
    g = model.standardized_outputs
    f_best = float(g.max())
    incumbent = model.inputs[int(np.argmax(g))]

    def ei_at(U: np.ndarray) -> np.ndarray:
        mu, sigma = _predict_standardized(model, U)
        return expected_improvement(mu, sigma, f_best, xi)

    probes = rng.random((probes_per_dim * m, m))
    ei_probes = ei_at(probes)

    n_seeded = restarts - restarts // 2
    order = np.argsort(-ei_probes)
    local = np.clip(
        incumbent + _LOCAL_STEP * rng.standard_normal((restarts // 2, m)), 0.0, 1.0
    )
    points = np.vstack([probes[order[:n_seeded]], local])
    steps = np.full(restarts, _INIT_STEP)
    steps[n_seeded:] = _LOCAL_STEP
    ei_points = ei_at(points)

    sweeps = 0
    while np.any(steps >= _MIN_STEP) and sweeps < _MAX_SWEEPS:
        sweeps += 1
        active = np.where(steps >= _MIN_STEP)[0]
        base = points[active]
        cand = np.repeat(base[:, None, :], 2 * m, axis=1)
        for j in range(m):
            cand[:, 2 * j, j] += steps[active]
            cand[:, 2 * j + 1, j] -= steps[active]
        cand = np.clip(cand, 0.0, 1.0)
        ei_cand = ei_at(cand.reshape(-1, m)).reshape(len(active), 2 * m)
        best_j = ei_cand.argmax(axis=1)
        best_v = ei_cand[np.arange(len(active)), best_j]
        improved = best_v > ei_points[active]
        moved = active[improved]
        points[moved] = cand[improved, best_j[improved]]
        ei_points[moved] = best_v[improved]
        steps[active[~improved]] *= 0.5

    all_points = np.vstack([probes, points])
    all_ei = np.concatenate([ei_probes, ei_points])
    return space.denormalize(all_points[int(np.argmax(all_ei))])


def _latin_hypercube(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Stratified design: one sample per axis-stratum, independently permuted."""
    U = np.empty((n, m))
    for j in range(m):
        U[:, j] = (rng.permutation(n) + rng.random(n)) / n
    return U


def _fit_surrogate(U: np.ndarray, y: np.ndarray, kernel: KernelConfig) -> GpModel:
    """GP fit on the negated, compressed, clipped objective values.

    Raw values are first log-compressed above the running minimum
    (log1p(y - min y)); spectral objectives span several orders of magnitude
    across the box and would otherwise flatten the standardized scale so
    much that the low tail - the only part that matters for minimization -
    becomes invisible to the GP.  After standardizing, values are clipped at
    +10 so penalty evaluations stay in the data without dominating it, then
    negated so EI's maximization form applies.
    """
    z = np.log1p(y - y.min())
    mean, scale = float(z.mean()), float(z.std())
    if scale < 1e-12:
        scale = 1.0
    clipped = np.minimum((z - mean) / scale, 10.0)
    return gp_fit(U, -clipped, kernel)


def default_kernel(dimension: int) -> KernelConfig:
    """Fixed surrogate kernel over the unit cube."""
    return KernelConfig(
        length_scales=np.full(dimension, 0.2),
        kind="squared-exponential",
        signal_variance=1.0,
        noise_variance=1e-6,
    )


def bo_minimize(
    objective: Callable[[np.ndarray], float],
    space: SearchSpace,
    cfg: BoConfig,
    kernel: KernelConfig | None = None,
    on_step: Callable[[int, np.ndarray, float, float], None] | None = None,
    max_workers: int = 1,
) -> BoResult:
    """Minimize a black-box objective over the box with n_max evaluations.

    Starts from an n_init Latin-hypercube design (evaluated concurrently
    when max_workers > 1, reduced in index order so results stay
    deterministic), then alternates GP fit / acquisition maximization /
    evaluation.  Non-finite objective values are replaced by a large finite
    penalty.  ``on_step(i, x, y, best)`` is invoked once per evaluation.
    """
    m = space.dimension
    kernel = kernel or default_kernel(m)
    rng = np.random.default_rng(cfg.rng_seed)

    def evaluate(x: np.ndarray) -> float:
        value = float(objective(x))
        return value if np.isfinite(value) else PENALTY_VALUE

    U = _latin_hypercube(cfg.n_init, m, rng)
    X_init = [space.denormalize(u) for u in U]
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            y_init = list(pool.map(evaluate, X_init))
    else:
        y_init = [evaluate(x) for x in X_init]

    points = list(U)
    values = list(y_init)
    history: list[tuple[np.ndarray, float]] = []
    best = float("inf")
    for i, (x, y) in enumerate(zip(X_init, y_init)):
        best = min(best, y)
        history.append((np.asarray(x, dtype=float), y))
        if on_step is not None:
            on_step(i, np.asarray(x, dtype=float), y, best)

    while len(values) < cfg.n_max:
        model = _fit_surrogate(np.asarray(points), np.asarray(values), kernel)
        x_next = optimize_acquisition(
            model, space, cfg.xi, rng, restarts=cfg.acquisition_restarts
        )
        y_next = evaluate(x_next)
        points.append(space.normalize(x_next))
        values.append(y_next)
        best = min(best, y_next)
        history.append((x_next, y_next))
        if on_step is not None:
            on_step(len(values) - 1, x_next, y_next, best)

    idx = int(np.argmin(values))
    return BoResult(
        best_point=history[idx][0],
        best_value=float(values[idx]),
        history=tuple(history),
    )


def controller_theta_length(
    n_plant_states: int = 5, n_controller_states: int = 1, n_inputs: int = 1
) -> int:
    return (
        n_controller_states**2
        + n_controller_states * n_plant_states
        + n_inputs * n_controller_states
        + n_inputs * n_plant_states
    )


def decode_controller(
    theta,
    n_plant_states: int = 5,
    n_controller_states: int = 1,
    n_inputs: int = 1,
) -> DynamicController:
    """Unpack a flat vector into (Ac, Bc, Cc, Dc), row-major, in that order."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    expected = controller_theta_length(n_plant_states, n_controller_states, n_inputs)
    if theta.size != expected:
        raise DimensionError(f"theta must have {expected} entries, got {theta.size}")
    n_xc, n_x, n_u = n_controller_states, n_plant_states, n_inputs
    splits = np.cumsum([n_xc * n_xc, n_xc * n_x, n_u * n_xc])
    a, b, c, d = np.split(theta, splits)
    return DynamicController(
        A_c=a.reshape(n_xc, n_xc),
        B_c=b.reshape(n_xc, n_x),
        C_c=c.reshape(n_u, n_xc),
        D_c=d.reshape(n_u, n_x),
    )


def encode_controller(ctrl: DynamicController) -> np.ndarray:
    """Inverse of :func:`decode_controller`."""
    return np.concatenate([
        ctrl.A_c.reshape(-1),
        ctrl.B_c.reshape(-1),
        ctrl.C_c.reshape(-1),
        ctrl.D_c.reshape(-1),
    ])


def default_search_space(
    n_plant_states: int = 5, n_controller_states: int = 1, n_inputs: int = 1
) -> SearchSpace:
    """Default tuning box: Ac in [-200, 0], Bc/Cc in [-10, 10], Dc in [-100, 100]."""
    n_xc, n_x, n_u = n_controller_states, n_plant_states, n_inputs
    lower = np.concatenate([
        np.full(n_xc * n_xc, -200.0),
        np.full(n_xc * n_x, -10.0),
        np.full(n_u * n_xc, -10.0),
        np.full(n_u * n_x, -100.0),
    ])
    upper = np.concatenate([
        np.full(n_xc * n_xc, 0.0),
        np.full(n_xc * n_x, 10.0),
        np.full(n_u * n_xc, 10.0),
        np.full(n_u * n_x, 100.0),
    ])
    return SearchSpace(lower=lower, upper=upper)


def synthesis_objective(
    theta,
    ss: StateSpace,
    objective: str = "abscissa",
    n_controller_states: int = 1,
) -> float:
    """Closed-loop spectral measure of the decoded controller; lower is better.

    ``abscissa``: max real part of eig(Abar) for continuous models, spectral
    radius minus one for discrete models - negative means a stable loop.
    ``real-infnorm``: the infinity norm of the real parts, max |Re eig(Abar)|,
    exposed for fidelity experiments (it also penalizes very fast stable
    modes, so it is not the default).  Eigenvalue failures return a large
    finite penalty so tuning loops stay total.
    """
    if objective not in ("abscissa", "real-infnorm"):
        raise ValueError(f"unknown objective {objective!r}")
    ctrl = decode_controller(
        theta,
        n_plant_states=ss.n_states,
        n_controller_states=n_controller_states,
        n_inputs=ss.n_inputs,
    )
    try:
        ev = np.linalg.eigvals(augmented_matrix(ss, ctrl))
    except (np.linalg.LinAlgError, ConvergenceError):
        return PENALTY_VALUE
    if objective == "real-infnorm":
        return float(np.max(np.abs(ev.real)))
    if ss.is_discrete:
        return float(np.max(np.abs(ev)) - 1.0)
    return float(np.max(ev.real))
