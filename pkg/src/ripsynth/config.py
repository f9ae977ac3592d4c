"""Experiment configuration: ingestion, presets, and manifest emission.

Configs are flat ``key = value`` text with dotted section keys::

    plant = canonical-rip
    controller = lqr
    lqr.q = 1,10,100,10,1
    lqr.r = 10
    reference = step
    reference.amplitude = 10
    horizon = 300

Matrix values separate columns with ``,`` and rows with ``;``; a single row
given for ``lqr.q`` is taken as a diagonal.  A JSON object (possibly nested;
nesting becomes dotted keys) is accepted as an alternative ingestion path.
Every run writes back a ``manifest`` file in the same flat format with all
defaults materialized, so a manifest is itself a valid config.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bayesopt import BoConfig, SearchSpace, default_search_space
from .control import DynamicController
from .errors import ConfigError, ParameterError, ToolkitError
from .plant import PendulumParams
from .sim import ReferenceSignal

PLANT_TAGS = ("toy", "canonical-rip", "table1-symbolic")  # plus "file:<path>"
CONTROLLER_TAGS = ("lqr", "dynamic", "synthesize")
OBJECTIVE_TAGS = ("abscissa", "real-infnorm")


def parse_kv_text(text: str) -> dict[str, str]:
    """Parse flat key = value lines; '#' lines and blanks are skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _flatten_json(obj, prefix: str = "") -> dict[str, str]:
    flat: dict[str, str] = {}
    for key, value in obj.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten_json(value, prefix=f"{name}."))
        elif isinstance(value, list):
            flat[name] = ";".join(
                ",".join(str(x) for x in row) if isinstance(row, list) else str(row)
                for row in value
            )
        else:
            flat[name] = str(value)
    return flat


def parse_config_text(text: str) -> dict[str, str]:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from exc
        if not isinstance(obj, dict):
            raise ConfigError("JSON config must be an object")
        return _flatten_json(obj)
    return parse_kv_text(text)


def parse_config_file(path) -> dict[str, str]:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"))


def parse_matrix(text: str) -> np.ndarray:
    """Rows split on ';', columns on ','."""
    try:
        rows = [[float(x) for x in row.split(",") if x.strip() != ""]
                for row in text.split(";")]
    except ValueError as exc:
        raise ConfigError(f"invalid matrix literal {text!r}: {exc}") from exc
    widths = {len(r) for r in rows}
    if len(widths) != 1 or 0 in widths:
        raise ConfigError(f"ragged matrix literal {text!r}")
    return np.array(rows, dtype=float)


def format_matrix(m: np.ndarray) -> str:
    return ";".join(",".join(f"{v:.17g}" for v in row) for row in np.atleast_2d(m))


@dataclass
class ExperimentConfig:
    """Fully-typed experiment description with defaults materialized."""

    plant: str = "canonical-rip"
    controller: str = "lqr"
    lqr_q: np.ndarray | None = None  # None -> identity, sized by the plant
    lqr_r: np.ndarray | None = None
    dynamic: DynamicController | None = None
    bo: BoConfig = field(default_factory=BoConfig)
    # Per-block (a_lo, a_hi, b_lo, b_hi, c_lo, c_hi, d_lo, d_hi) tuning bounds;
    # None -> default box.  Sized against the plant at run time.
    space_bounds: tuple[float, ...] | None = None
    n_controller_states: int = 1
    objective: str = "abscissa"
    reference: ReferenceSignal = field(default_factory=ReferenceSignal.zero)
    horizon: int = 300
    sample_time: float = 1e-3
    seed: int = 0
    out_dir: Path = Path("runs/out")
    initial_state: np.ndarray | None = None
    process_noise: float | None = None  # scalar variance override (diagonal)
    measurement_noise: float | None = None


_KNOWN_KEYS = {
    "plant", "controller", "objective", "reference", "horizon", "sample_time",
    "seed", "out", "initial_state", "lqr.q", "lqr.r",
    "dynamic.a_c", "dynamic.b_c", "dynamic.c_c", "dynamic.d_c",
    "bo.n_init", "bo.n_max", "bo.xi", "bo.restarts",
    "space.a_c", "space.b_c", "space.c_c", "space.d_c", "space.n_xc",
    "reference.amplitude", "reference.onset", "reference.period", "reference.phase",
    "noise.process", "noise.measurement",
}


def _get(mapping: dict[str, str], key: str, default: str) -> str:
    return mapping.get(key, default)


def build_experiment(mapping: dict[str, str]) -> ExperimentConfig:
    """Validate a flat mapping and produce a typed config (ConfigError on issues)."""
    unknown = set(mapping) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    plant = _get(mapping, "plant", "canonical-rip")
    if plant not in PLANT_TAGS and not plant.startswith("file:"):
        raise ConfigError(f"plant must be one of {PLANT_TAGS} or 'file:<path>', got {plant!r}")
    controller = _get(mapping, "controller", "lqr")
    if controller not in CONTROLLER_TAGS:
        raise ConfigError(f"controller must be one of {CONTROLLER_TAGS}, got {controller!r}")
    objective = _get(mapping, "objective", "abscissa")
    if objective not in OBJECTIVE_TAGS:
        raise ConfigError(f"objective must be one of {OBJECTIVE_TAGS}, got {objective!r}")

    try:
        horizon = int(_get(mapping, "horizon", "300"))
        sample_time = float(_get(mapping, "sample_time", "1e-3"))
        seed = int(_get(mapping, "seed", "0"))
        n_xc = int(_get(mapping, "space.n_xc", "1"))
    except ValueError as exc:
        raise ConfigError(f"invalid numeric field: {exc}") from exc
    if horizon < 1:
        raise ConfigError("horizon must be at least 1")
    if sample_time <= 0.0:
        raise ConfigError("sample_time must be positive")
    if n_xc < 1:
        raise ConfigError("space.n_xc must be at least 1")

    ref_kind = _get(mapping, "reference", "zero")
    try:
        if ref_kind == "zero":
            reference = ReferenceSignal.zero()
        elif ref_kind == "step":
            reference = ReferenceSignal.step(
                amplitude=float(_get(mapping, "reference.amplitude", "1")),
                onset_step=int(_get(mapping, "reference.onset", "0")),
            )
        elif ref_kind == "sine":
            reference = ReferenceSignal.sine(
                amplitude=float(_get(mapping, "reference.amplitude", "1")),
                period_steps=int(_get(mapping, "reference.period", "100")),
                phase=float(_get(mapping, "reference.phase", "0")),
            )
        else:
            raise ConfigError(f"reference must be zero|step|sine, got {ref_kind!r}")
    except ValueError as exc:
        raise ConfigError(f"invalid reference: {exc}") from exc

    lqr_q = lqr_r = None
    if "lqr.q" in mapping:
        q = parse_matrix(mapping["lqr.q"])
        lqr_q = np.diag(q[0]) if q.shape[0] == 1 and q.shape[1] > 1 else q
    if "lqr.r" in mapping:
        lqr_r = parse_matrix(mapping["lqr.r"])

    dynamic = None
    dyn_keys = [k for k in mapping if k.startswith("dynamic.")]
    if dyn_keys:
        missing = {"dynamic.a_c", "dynamic.b_c", "dynamic.c_c", "dynamic.d_c"} - set(mapping)
        if missing:
            raise ConfigError(f"dynamic controller needs all four matrices; missing {sorted(missing)}")
        try:
            dynamic = DynamicController(
                A_c=parse_matrix(mapping["dynamic.a_c"]),
                B_c=parse_matrix(mapping["dynamic.b_c"]),
                C_c=parse_matrix(mapping["dynamic.c_c"]),
                D_c=parse_matrix(mapping["dynamic.d_c"]),
            )
        except ToolkitError as exc:
            raise ConfigError(f"invalid dynamic controller: {exc}") from exc
    if controller == "dynamic" and dynamic is None:
        raise ConfigError("controller = dynamic requires dynamic.a_c/b_c/c_c/d_c")

    try:
        bo = BoConfig(
            n_init=int(_get(mapping, "bo.n_init", "10")),
            n_max=int(_get(mapping, "bo.n_max", "150")),
            xi=float(_get(mapping, "bo.xi", "0.01")),
            acquisition_restarts=int(_get(mapping, "bo.restarts", "10")),
            rng_seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid bo.* field: {exc}") from exc

    space = None
    space_keys = [k for k in mapping if k.startswith("space.") and k != "space.n_xc"]
    if space_keys:
        def bounds(key: str, default: tuple[float, float]) -> tuple[float, float]:
            if key not in mapping:
                return default
            m = parse_matrix(mapping[key])
            if m.size != 2:
                raise ConfigError(f"{key} must be 'low,high'")
            return float(m.reshape(-1)[0]), float(m.reshape(-1)[1])

        a_lo, a_hi = bounds("space.a_c", (-200.0, 0.0))
        b_lo, b_hi = bounds("space.b_c", (-10.0, 10.0))
        c_lo, c_hi = bounds("space.c_c", (-10.0, 10.0))
        d_lo, d_hi = bounds("space.d_c", (-100.0, 100.0))
        space = (a_lo, a_hi, b_lo, b_hi, c_lo, c_hi, d_lo, d_hi)

    initial_state = None
    if "initial_state" in mapping:
        initial_state = parse_matrix(mapping["initial_state"]).reshape(-1)

    def noise(key: str) -> float | None:
        if key not in mapping:
            return None
        value = float(mapping[key])
        if value < 0.0:
            raise ConfigError(f"{key} must be non-negative")
        return value

    return ExperimentConfig(
        plant=plant,
        controller=controller,
        lqr_q=lqr_q,
        lqr_r=lqr_r,
        dynamic=dynamic,
        bo=bo,
        space_bounds=space,
        n_controller_states=n_xc,
        objective=objective,
        reference=reference,
        horizon=horizon,
        sample_time=sample_time,
        seed=seed,
        out_dir=Path(_get(mapping, "out", "runs/out")),
        initial_state=initial_state,
        process_noise=noise("noise.process"),
        measurement_noise=noise("noise.measurement"),
    )


def sized_search_space(bounds: tuple[float, ...] | None, n_xc: int, n_x: int, n_u: int) -> SearchSpace:
    """Materialize per-block tuning bounds against the plant dimensions."""
    if bounds is None:
        return default_search_space(
            n_plant_states=n_x, n_controller_states=n_xc, n_inputs=n_u
        )
    a_lo, a_hi, b_lo, b_hi, c_lo, c_hi, d_lo, d_hi = bounds
    lower = np.concatenate([
        np.full(n_xc * n_xc, a_lo),
        np.full(n_xc * n_x, b_lo),
        np.full(n_u * n_xc, c_lo),
        np.full(n_u * n_x, d_lo),
    ])
    upper = np.concatenate([
        np.full(n_xc * n_xc, a_hi),
        np.full(n_xc * n_x, b_hi),
        np.full(n_u * n_xc, c_hi),
        np.full(n_u * n_x, d_hi),
    ])
    return SearchSpace(lower=lower, upper=upper)


def load_pendulum_params(path) -> PendulumParams:
    """Read a PendulumParams set from a flat or JSON config file."""
    mapping = parse_config_file(path)
    try:
        return PendulumParams.from_mapping({k: float(v) for k, v in mapping.items()})
    except (ValueError, ParameterError) as exc:
        raise ConfigError(f"invalid pendulum parameter file {path}: {exc}") from exc


def manifest_text(cfg: ExperimentConfig, resolved: dict[str, str] | None = None) -> str:
    """Serialize the fully-resolved config as re-ingestible key = value lines."""
    lines: dict[str, str] = {
        "plant": cfg.plant,
        "controller": cfg.controller,
        "objective": cfg.objective,
        "reference": cfg.reference.kind,
        "horizon": str(cfg.horizon),
        "sample_time": f"{cfg.sample_time:.17g}",
        "seed": str(cfg.seed),
        "out": str(cfg.out_dir),
        "bo.n_init": str(cfg.bo.n_init),
        "bo.n_max": str(cfg.bo.n_max),
        "bo.xi": f"{cfg.bo.xi:.17g}",
        "bo.restarts": str(cfg.bo.acquisition_restarts),
        "space.n_xc": str(cfg.n_controller_states),
    }
    if cfg.reference.kind == "step":
        lines["reference.amplitude"] = f"{cfg.reference.amplitude:.17g}"
        lines["reference.onset"] = str(cfg.reference.onset_step)
    elif cfg.reference.kind == "sine":
        lines["reference.amplitude"] = f"{cfg.reference.amplitude:.17g}"
        lines["reference.period"] = str(cfg.reference.period_steps)
        lines["reference.phase"] = f"{cfg.reference.phase:.17g}"
    if cfg.lqr_q is not None:
        lines["lqr.q"] = format_matrix(cfg.lqr_q)
    if cfg.lqr_r is not None:
        lines["lqr.r"] = format_matrix(cfg.lqr_r)
    if cfg.dynamic is not None:
        lines["dynamic.a_c"] = format_matrix(cfg.dynamic.A_c)
        lines["dynamic.b_c"] = format_matrix(cfg.dynamic.B_c)
        lines["dynamic.c_c"] = format_matrix(cfg.dynamic.C_c)
        lines["dynamic.d_c"] = format_matrix(cfg.dynamic.D_c)
    if cfg.space_bounds is not None:
        a_lo, a_hi, b_lo, b_hi, c_lo, c_hi, d_lo, d_hi = cfg.space_bounds
        lines["space.a_c"] = f"{a_lo:.17g},{a_hi:.17g}"
        lines["space.b_c"] = f"{b_lo:.17g},{b_hi:.17g}"
        lines["space.c_c"] = f"{c_lo:.17g},{c_hi:.17g}"
        lines["space.d_c"] = f"{d_lo:.17g},{d_hi:.17g}"
    if cfg.initial_state is not None:
        lines["initial_state"] = ",".join(f"{v:.17g}" for v in cfg.initial_state)
    if cfg.process_noise is not None:
        lines["noise.process"] = f"{cfg.process_noise:.17g}"
    if cfg.measurement_noise is not None:
        lines["noise.measurement"] = f"{cfg.measurement_noise:.17g}"
    if resolved:
        lines.update(resolved)
    return "".join(f"{k} = {lines[k]}\n" for k in sorted(lines))


def _canonical_bo_controller_keys() -> dict[str, str]:
    return {
        "dynamic.a_c": "-100",
        "dynamic.b_c": "0,0,0,0,0",
        "dynamic.c_c": "-0.5",
        "dynamic.d_c": "-20.96,-39.76,72.74,92.61,-0.58",
    }


PRESETS: dict[str, dict[str, str]] = {
    # Toy benchmark, dynamic controller, delayed step reference.
    "toy-step": {
        "plant": "toy",
        "controller": "dynamic",
        "dynamic.a_c": "0.4",
        "dynamic.b_c": "1,-1.52",
        "dynamic.c_c": "-0.5",
        "dynamic.d_c": "0.3,2.1",
        "reference": "step",
        "reference.amplitude": "10",
        "reference.onset": "60",
        "horizon": "300",
    },
    # Same loop driven by a sinusoidal reference.
    "toy-sine": {
        "plant": "toy",
        "controller": "dynamic",
        "dynamic.a_c": "0.4",
        "dynamic.b_c": "1,-1.52",
        "dynamic.c_c": "-0.5",
        "dynamic.d_c": "0.3,2.1",
        "reference": "sine",
        "reference.amplitude": "10",
        "reference.period": "100",
        "horizon": "400",
    },
    # LQR regulation of the canonical pendulum model from a small tilt.
    "rip-lqr": {
        "plant": "canonical-rip",
        "controller": "lqr",
        "lqr.q": "1,10,100,10,1",
        "lqr.r": "10",
        "reference": "zero",
        "horizon": "4000",
        "sample_time": "1e-3",
        "initial_state": "0,0,0.05,0,0",
    },
    # Bayesian-optimization synthesis of a dynamic controller, then regulation.
    "rip-bo": {
        "plant": "canonical-rip",
        "controller": "synthesize",
        "bo.n_max": "150",
        "reference": "zero",
        "horizon": "4000",
        "sample_time": "1e-3",
        "initial_state": "0,0,0.05,0,0",
    },
    # Arm-angle step tracking with the reference synthesized controller.
    "rip-track": {
        "plant": "canonical-rip",
        "controller": "dynamic",
        **_canonical_bo_controller_keys(),
        "reference": "step",
        "reference.amplitude": "1",
        "reference.onset": "500",
        "horizon": "4000",
        "sample_time": "1e-3",
    },
}


def preset_mapping(name: str) -> dict[str, str]:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return dict(PRESETS[name])
