"""Experiment orchestration: configs, pipelines, verification, persistence.

A flat ``key = value`` config file fixes one experiment: a resolved run
on the fine grid, subgrid-stress diagnosis over the post-spin-up window,
and coarse LES runs driven by the configured closures. Verification
checks the closure-mismatch ordering over an ensemble and the shrink-
the-filter convergence sweep. Every output byte is a deterministic
function of (config, master seed).
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, fields as dataclass_fields, replace
from pathlib import Path

import numpy as np

from .field import (
    Field,
    Grid,
    Trajectory,
    l2_norm,
    read_snapshot,
    write_snapshot,
    zeros,
)
from .dynamics import PhysicalParams, StepperConfig, double_gyre_forcing, run
from .filters import gaussian_filter, perturb_field, restrict
from .operators import sine_mode, solve_poisson
from .sgs import (
    ClosureSpec,
    SgsSeries,
    SgsStats,
    closure_mismatch,
    diagnose_sgs,
    estimate_stats,
    make_closure,
)

__all__ = [
    "ConfigError",
    "MissingStageError",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "config_hash",
    "initial_condition",
    "run_resolved",
    "run_les",
    "run_triptych",
    "verify_approximation",
    "verify_scale_convergence",
    "VerificationReport",
    "ScaleReport",
    "TriptychResult",
]


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


class MissingStageError(RuntimeError):
    """A pipeline stage's inputs have not been produced yet."""


_AUTO = "auto"

# key -> (parser, default); "auto" admitted where the default derives
# from other keys at resolution time.
_SCHEMA = {
    "lx": (float, 1.0),
    "ly": (float, 1.0),
    "fine_nx": (int, 257),
    "fine_ny": (int, 257),
    "coarse_factor": (int, 4),
    "beta": (float, 0.0),
    "nu": (float, 1.5e-4),
    "r": (float, 0.02),
    "forcing_amplitude": (float, 1.0),
    "delta": ("float_or_auto", _AUTO),
    "dt": (float, 1e-3),
    "coarse_dt": ("float_or_auto", _AUTO),
    "t_end": (float, 10.0),
    "store_every": (int, 10),
    "spin_up_fraction": (float, 0.5),
    "ensemble_size": (int, 16),
    "master_seed": (int, 0),
    "ic_mode": (str, "rest"),
    "ic_amplitude": (float, 0.0),
    "ic_seed": (int, 12345),
    "ic_perturbation": (float, 1e-4),
    "closures": (str, "perturbed_replay,ar1_matched,null"),
    "delta_list": ("floats_or_auto", _AUTO),
    "cfl_safety": (float, 0.5),
    "m_bound": ("float_or_auto", _AUTO),
    "out_dir": (str, ""),
}

_CLOSURE_NAMES = ("null", "replay", "perturbed_replay", "ar1_matched")


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment parameters (see _SCHEMA for defaults)."""

    lx: float
    ly: float
    fine_nx: int
    fine_ny: int
    coarse_factor: int
    beta: float
    nu: float
    r: float
    forcing_amplitude: float
    delta: float
    dt: float
    coarse_dt: float
    t_end: float
    store_every: int
    spin_up_fraction: float
    ensemble_size: int
    master_seed: int
    ic_mode: str
    ic_amplitude: float
    ic_seed: int
    ic_perturbation: float
    closures: tuple
    delta_list: tuple
    cfl_safety: float
    m_bound: float
    out_dir: str

    @property
    def fine_grid(self) -> Grid:
        return Grid(self.fine_nx, self.fine_ny, self.lx, self.ly)

    @property
    def coarse_grid(self) -> Grid:
        nx = (self.fine_nx - 1) // self.coarse_factor + 1
        ny = (self.fine_ny - 1) // self.coarse_factor + 1
        return Grid(nx, ny, self.lx, self.ly)

    @property
    def params(self) -> PhysicalParams:
        return PhysicalParams(beta=self.beta, nu=self.nu, r=self.r)

    @property
    def stepper_fine(self) -> StepperConfig:
        return StepperConfig(self.dt, self.t_end, self.store_every, self.cfl_safety)

    def forcing_fine(self) -> Field:
        return double_gyre_forcing(self.fine_grid, self.forcing_amplitude)


def _parse_value(key: str, text: str):
    kind, _default = _SCHEMA[key]
    text = text.strip()
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is str:
            return text
        if kind == "float_or_auto":
            return _AUTO if text == _AUTO else float(text)
        if kind == "floats_or_auto":
            if text == _AUTO:
                return _AUTO
            return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for config key {key}: {text!r}") from exc
    raise AssertionError(f"unhandled schema kind {kind}")


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse flat ``key = value`` text; unknown or repeated keys are errors."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        raw[key] = _parse_value(key, value)
    if overrides:
        for key, value in overrides.items():
            if key not in _SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            raw[key] = value
    return _resolve(raw)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text(), overrides)


def _resolve(raw: dict) -> ExperimentConfig:
    values = {key: raw.get(key, default) for key, (_, default) in _SCHEMA.items()}

    fine_nx, fine_ny = values["fine_nx"], values["fine_ny"]
    factor = values["coarse_factor"]
    if factor < 1:
        raise ConfigError("coarse_factor must be >= 1")
    if (fine_nx - 1) % factor or (fine_ny - 1) % factor:
        raise ConfigError(
            f"coarse grid not nested: fine {fine_nx}x{fine_ny} has no factor-{factor} subgrid"
        )
    if (fine_nx - 1) // factor + 1 < 3 or (fine_ny - 1) // factor + 1 < 3:
        raise ConfigError("coarse grid needs at least 3 nodes per direction")
    dx = values["lx"] / (fine_nx - 1)

    if values["delta"] == _AUTO:
        values["delta"] = 4.0 * dx
    if values["delta"] <= 0.0:
        raise ConfigError("delta must resolve to a positive width")
    if values["coarse_dt"] == _AUTO:
        values["coarse_dt"] = values["dt"]
    if values["delta_list"] == _AUTO:
        values["delta_list"] = (8.0 * dx, 4.0 * dx, 2.0 * dx)
    if values["m_bound"] == _AUTO:
        values["m_bound"] = 0.0  # resolved against diagnosed statistics at use
    if not (0.0 <= values["spin_up_fraction"] < 1.0):
        raise ConfigError("spin_up_fraction must lie in [0, 1)")
    if values["ensemble_size"] < 1:
        raise ConfigError("ensemble_size must be >= 1")
    if values["ic_mode"] not in ("rest", "modes"):
        raise ConfigError(f"ic_mode must be 'rest' or 'modes', got {values['ic_mode']!r}")

    closures = tuple(p.strip() for p in str(values["closures"]).split(",") if p.strip())
    for name in closures:
        if name not in _CLOSURE_NAMES:
            raise ConfigError(f"unknown closure {name!r}; expected one of {_CLOSURE_NAMES}")
    values["closures"] = closures
    values["delta_list"] = tuple(values["delta_list"])

    n_steps = values["t_end"] / values["dt"]
    if abs(n_steps - round(n_steps)) > 1e-9 * max(1.0, n_steps):
        raise ConfigError("t_end must be an integer number of fine steps")
    n_steps = int(round(n_steps))
    if n_steps % values["store_every"]:
        raise ConfigError("store_every must divide the fine step count")
    ratio = values["store_every"] * values["dt"] / values["coarse_dt"]
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
        raise ConfigError("coarse_dt must evenly subdivide the snapshot interval")

    return ExperimentConfig(**values)


def _canonical_text(config: ExperimentConfig) -> str:
    lines = []
    for f in sorted(dataclass_fields(ExperimentConfig), key=lambda f: f.name):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            rendered = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        elif isinstance(value, float):
            rendered = repr(value)
        else:
            rendered = str(value)
        lines.append(f"{f.name} = {rendered}")
    return "\n".join(lines) + "\n"


def config_hash(config: ExperimentConfig) -> str:
    """Hash of the resolved configuration, ignoring the output location."""
    text = _canonical_text(replace(config, out_dir=""))
    return hashlib.sha256(text.encode("ascii")).hexdigest()


# ---------------------------------------------------------------------------
# persistence helpers


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: list, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([cell if isinstance(cell, str) else _fmt(cell) for cell in row])


def _write_manifest(directory: Path, config: ExperimentConfig, stage: str) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    text = f"stage = {stage}\nconfig_hash = {config_hash(config)}\nmaster_seed = {config.master_seed}\n"
    (directory / "manifest.txt").write_text(text)


def _read_manifest(directory: Path) -> dict:
    manifest = directory / "manifest.txt"
    if not manifest.is_file():
        raise MissingStageError(f"no manifest in {directory}")
    out = {}
    for line in manifest.read_text().splitlines():
        if "=" in line:
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def _check_manifest(directory: Path, config: ExperimentConfig, stage: str) -> bool:
    """True when the stage directory holds artifacts for this config."""
    if not (directory / "manifest.txt").is_file():
        return False
    meta = _read_manifest(directory)
    if meta.get("config_hash") != config_hash(config):
        raise ConfigError(
            f"{directory} holds '{meta.get('stage')}' artifacts for a different configuration"
        )
    return meta.get("stage") == stage


def write_diagnostics_csv(trajectory: Trajectory, path) -> None:
    diag = trajectory.diagnostics
    columns = ["t", "enstrophy", "energy", "enstrophy_bound", "cfl"]
    rows = zip(*(diag[c] for c in columns))
    _write_csv(Path(path), columns, rows)


def _read_diagnostics_csv(path: Path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(cell) for cell in row] for row in reader]
    arr = np.asarray(data, dtype=np.float64)
    return {name: arr[:, i].copy() for i, name in enumerate(header)}


def save_trajectory(trajectory: Trajectory, directory: Path) -> None:
    snap_dir = directory / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)
    for i, (t, f) in enumerate(zip(trajectory.times, trajectory.snapshots)):
        write_snapshot(f, t, snap_dir / f"q_{i:06d}.qgf")
    write_diagnostics_csv(trajectory, directory / "diagnostics.csv")


def load_trajectory(directory: Path, f_norm_sq: float = 0.0) -> Trajectory:
    snap_dir = directory / "snapshots"
    paths = sorted(snap_dir.glob("q_*.qgf"))
    if not paths:
        raise MissingStageError(f"no snapshots found in {snap_dir}")
    snapshots = []
    times = []
    for p in paths:
        f, t = read_snapshot(p)
        snapshots.append(f)
        times.append(t)
    diag = _read_diagnostics_csv(directory / "diagnostics.csv")
    diag["f_norm_sq"] = np.full_like(diag["t"], f_norm_sq)
    return Trajectory(
        grid=snapshots[0].grid,
        times=np.asarray(times),
        snapshots=snapshots,
        diagnostics=diag,
    )


def save_series(series: SgsSeries, directory: Path, config: ExperimentConfig) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for i, (t, f) in enumerate(zip(series.times, series.fields)):
        write_snapshot(f, t, directory / f"R_{i:06d}.qgf")
    _write_manifest(directory, config, "sgs")
    with open(directory / "manifest.txt", "a") as fh:
        fh.write(f"delta = {config.delta!r}\ncount = {len(series)}\n")


def load_series(directory: Path) -> SgsSeries:
    paths = sorted(directory.glob("R_*.qgf"))
    if not paths:
        raise MissingStageError(f"no stress snapshots found in {directory}")
    fields = []
    times = []
    for p in paths:
        f, t = read_snapshot(p)
        fields.append(f)
        times.append(t)
    return SgsSeries(grid=fields[0].grid, times=np.asarray(times), fields=fields)


def save_stats(stats: SgsStats, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    write_snapshot(stats.mean_field, 0.0, directory / "mean_field.qgf")
    write_snapshot(stats.std_field, 0.0, directory / "std_field.qgf")
    ny, nx = stats.spectrum.shape
    _write_csv(
        directory / "spectrum.csv",
        ["k1", "k2", "variance"],
        ((str(kx + 1), str(ky + 1), stats.spectrum[ky, kx]) for ky in range(ny) for kx in range(nx)),
    )
    _write_csv(
        directory / "histogram.csv",
        ["lo", "hi", "count"],
        (
            (stats.hist_edges[i], stats.hist_edges[i + 1], str(int(stats.hist_counts[i])))
            for i in range(stats.hist_counts.size)
        ),
    )
    _write_csv(directory / "summary.csv", ["tau"], [(stats.tau,)])


# ---------------------------------------------------------------------------
# pipeline stages


def initial_condition(config: ExperimentConfig) -> Field:
    """Fine-grid initial vorticity: rest, or a seeded low-mode superposition."""
    grid = config.fine_grid
    if config.ic_mode == "rest" or config.ic_amplitude == 0.0:
        return zeros(grid)
    rng = np.random.default_rng(config.ic_seed)
    values = np.zeros(grid.shape)
    for k1 in range(1, 5):
        for k2 in range(1, 5):
            weight = rng.standard_normal() / (k1 * k1 + k2 * k2)
            values += weight * sine_mode(grid, k1, k2).values
    f = Field(grid, values)
    norm = l2_norm(f)
    if norm == 0.0:
        return f
    return Field(grid, values * (config.ic_amplitude / norm))


def run_resolved(config: ExperimentConfig) -> Trajectory:
    """Fine-grid run from the configured IC; persists when out_dir is set.

    Stores snapshots, per-step diagnostics, and the window time-mean
    vorticity and streamfunction fields.
    """
    trajectory = run(
        initial_condition(config),
        config.params,
        config.forcing_fine(),
        None,
        config.stepper_fine,
    )
    if config.out_dir:
        directory = Path(config.out_dir) / "resolved"
        save_trajectory(trajectory, directory)
        k0 = window_start_index(config, trajectory)
        mean_q, mean_psi = _time_means(trajectory.snapshots[k0:])
        write_snapshot(mean_q, trajectory.times[k0], directory / "mean_q.qgf")
        write_snapshot(mean_psi, trajectory.times[k0], directory / "mean_psi.qgf")
        _write_manifest(directory, config, "resolved")
    return trajectory


def ensure_resolved(config: ExperimentConfig) -> Trajectory:
    if config.out_dir:
        directory = Path(config.out_dir) / "resolved"
        if _check_manifest(directory, config, "resolved"):
            forcing = config.forcing_fine()
            f_norm_sq = float(np.sum(forcing.values**2) * config.fine_grid.cell_area)
            return load_trajectory(directory, f_norm_sq)
    return run_resolved(config)


def window_start_index(config: ExperimentConfig, trajectory: Trajectory) -> int:
    return int(config.spin_up_fraction * (trajectory.times.size - 1))


def window_slice(config: ExperimentConfig, trajectory: Trajectory) -> Trajectory:
    """The post-spin-up portion of a trajectory (snapshots and diagnostics)."""
    k0 = window_start_index(config, trajectory)
    t_w0 = trajectory.times[k0]
    diag = trajectory.diagnostics
    mask = diag["t"] >= t_w0 - 1e-12 * max(1.0, abs(t_w0))
    return Trajectory(
        grid=trajectory.grid,
        times=trajectory.times[k0:].copy(),
        snapshots=trajectory.snapshots[k0:],
        diagnostics={k: v[mask] for k, v in diag.items()},
        sigma_snapshots=None if trajectory.sigma_snapshots is None else trajectory.sigma_snapshots[k0:],
    )


def diagnose(config: ExperimentConfig, trajectory: Trajectory | None = None) -> SgsSeries:
    """Diagnose the subgrid stress over the window onto the coarse grid."""
    if trajectory is None:
        trajectory = ensure_resolved(config)
    wtraj = window_slice(config, trajectory)
    series = diagnose_sgs(wtraj, config.delta, config.coarse_grid)
    if config.out_dir:
        save_series(series, Path(config.out_dir) / "sgs", config)
    return series


def ensure_diagnosed(config: ExperimentConfig, trajectory: Trajectory | None = None) -> SgsSeries:
    if config.out_dir:
        directory = Path(config.out_dir) / "sgs"
        if _check_manifest(directory, config, "sgs"):
            return load_series(directory)
    return diagnose(config, trajectory)


def _time_means(snapshots) -> tuple[Field, Field]:
    grid = snapshots[0].grid
    mean_q = np.zeros(grid.shape)
    mean_psi = np.zeros(grid.shape)
    for q in snapshots:
        mean_q += q.values
        mean_psi += solve_poisson(q).values
    mean_q /= len(snapshots)
    mean_psi /= len(snapshots)
    return Field(grid, mean_q), Field(grid, mean_psi)


def _window_stepper(config: ExperimentConfig, wtraj: Trajectory) -> StepperConfig:
    duration = float(wtraj.times[-1] - wtraj.times[0])
    store = int(round(config.store_every * config.dt / config.coarse_dt))
    return StepperConfig(config.coarse_dt, duration, store, config.cfl_safety)


def _coarse_benchmark(config: ExperimentConfig, wtraj: Trajectory) -> list:
    """Filter-then-restrict the window snapshots onto the coarse grid."""
    coarse = config.coarse_grid
    return [restrict(gaussian_filter(q, config.delta), coarse) for q in wtraj.snapshots]


def _filtered_forcing(config: ExperimentConfig, grid: Grid) -> Field:
    fbar = gaussian_filter(config.forcing_fine(), config.delta)
    if grid == config.fine_grid:
        return fbar
    return restrict(fbar, grid)


def member_seeds(config: ExperimentConfig, n: int) -> list:
    return [config.master_seed + m for m in range(n)]


def run_les(
    config: ExperimentConfig,
    closure_name: str,
    seed: int | None = None,
    trajectory: Trajectory | None = None,
) -> Trajectory:
    """One coarse LES run over the window with the named closure.

    The IC is the filtered-restricted window-start snapshot, perturbed
    for the perturbed_replay closure. Persists under les_<closure> when
    out_dir is set.
    """
    if closure_name not in _CLOSURE_NAMES:
        raise ConfigError(f"unknown closure {closure_name!r}")
    seed = config.master_seed if seed is None else seed
    trajectory = ensure_resolved(config) if trajectory is None else trajectory
    wtraj = window_slice(config, trajectory)
    series = ensure_diagnosed(config, trajectory) if closure_name != "null" else None
    stats = estimate_stats(series) if closure_name == "ar1_matched" else None

    q0 = restrict(gaussian_filter(wtraj.snapshots[0], config.delta), config.coarse_grid)
    if closure_name == "perturbed_replay":
        q0 = perturb_field(q0, config.ic_perturbation, seed)
    spec = ClosureSpec(kind=closure_name, series=series, stats=stats, seed=seed)
    stepper = _window_stepper(config, wtraj)
    sampler = make_closure(spec, stepper)
    ltraj = run(q0, config.params, _filtered_forcing(config, config.coarse_grid), sampler, stepper, t0=float(wtraj.times[0]))

    if config.out_dir:
        directory = Path(config.out_dir) / f"les_{closure_name}"
        save_trajectory(ltraj, directory)
        mean_q, mean_psi = _time_means(ltraj.snapshots)
        write_snapshot(mean_q, ltraj.times[0], directory / "mean_q.qgf")
        write_snapshot(mean_psi, ltraj.times[0], directory / "mean_psi.qgf")
        _write_manifest(directory, config, f"les_{closure_name}")
    return ltraj


# ---------------------------------------------------------------------------
# verification and reporting


@dataclass
class TriptychResult:
    """Window time-means of the resolved benchmark and two coarse runs."""

    resolved_mean_q: Field
    resolved_mean_psi: Field
    null_mean_q: Field
    null_mean_psi: Field
    stoch_mean_q: Field
    stoch_mean_psi: Field
    e_null_psi: float
    e_stoch_psi: float
    e_null_q: float
    e_stoch_q: float
    replay_state_corr: float


def run_triptych(config: ExperimentConfig) -> TriptychResult:
    """Resolved vs unparameterized vs stress-replay coarse runs.

    Reports the L2 distances between the window time-mean fields; makes
    no assertion. Prerequisite stages are computed on demand.
    """
    trajectory = ensure_resolved(config)
    wtraj = window_slice(config, trajectory)
    series = ensure_diagnosed(config, trajectory)
    bench = _coarse_benchmark(config, wtraj)
    coarse = config.coarse_grid

    bench_mean_q = Field(coarse, np.mean([f.values for f in bench], axis=0))
    bench_psi = [solve_poisson(f) for f in bench]
    bench_mean_psi = Field(coarse, np.mean([f.values for f in bench_psi], axis=0))

    stepper = _window_stepper(config, wtraj)
    t_w0 = float(wtraj.times[0])
    fbar_c = _filtered_forcing(config, coarse)

    null_traj = run(bench[0], config.params, fbar_c, make_closure(ClosureSpec(kind="null"), stepper), stepper, t0=t_w0)
    q0_pert = perturb_field(bench[0], config.ic_perturbation, config.master_seed)
    stoch_traj = run(
        q0_pert,
        config.params,
        fbar_c,
        make_closure(ClosureSpec(kind="perturbed_replay", series=series), stepper),
        stepper,
        t0=t_w0,
    )

    null_mean_q, null_mean_psi = _time_means(null_traj.snapshots)
    stoch_mean_q, stoch_mean_psi = _time_means(stoch_traj.snapshots)

    def dist(a: Field, b: Field) -> float:
        return l2_norm(Field(coarse, a.values - b.values))

    corr = _anomaly_correlation(series, stoch_traj)

    result = TriptychResult(
        resolved_mean_q=bench_mean_q,
        resolved_mean_psi=bench_mean_psi,
        null_mean_q=null_mean_q,
        null_mean_psi=null_mean_psi,
        stoch_mean_q=stoch_mean_q,
        stoch_mean_psi=stoch_mean_psi,
        e_null_psi=dist(bench_mean_psi, null_mean_psi),
        e_stoch_psi=dist(bench_mean_psi, stoch_mean_psi),
        e_null_q=dist(bench_mean_q, null_mean_q),
        e_stoch_q=dist(bench_mean_q, stoch_mean_q),
        replay_state_corr=corr,
    )

    if config.out_dir:
        directory = Path(config.out_dir) / "triptych"
        directory.mkdir(parents=True, exist_ok=True)
        for name in (
            "resolved_mean_q",
            "resolved_mean_psi",
            "null_mean_q",
            "null_mean_psi",
            "stoch_mean_q",
            "stoch_mean_psi",
        ):
            write_snapshot(getattr(result, name), t_w0, directory / f"{name}.qgf")
        _write_csv(
            directory / "errors.csv",
            ["metric", "value"],
            [
                ("e_null_psi", result.e_null_psi),
                ("e_stoch_psi", result.e_stoch_psi),
                ("e_null_q", result.e_null_q),
                ("e_stoch_q", result.e_stoch_q),
                ("replay_state_corr", result.replay_state_corr),
            ],
        )
        _write_manifest(directory, config, "triptych")
    return result


def _anomaly_correlation(series: SgsSeries, ltraj: Trajectory) -> float:
    """Mean anomaly correlation between the replayed stress and the LES state."""
    if len(series) != ltraj.times.size:
        return math.nan
    r_mean = np.mean([f.values for f in series.fields], axis=0)
    q_mean = np.mean([f.values for f in ltraj.snapshots], axis=0)
    vals = []
    for rf, qf in zip(series.fields, ltraj.snapshots):
        ra = rf.values - r_mean
        qa = qf.values - q_mean
        denom = np.linalg.norm(ra) * np.linalg.norm(qa)
        if denom > 0:
            vals.append(float(np.sum(ra * qa) / denom))
    return float(np.mean(vals)) if vals else math.nan


@dataclass
class ClosureRow:
    name: str
    n_members: int
    rhs: float
    sup_lhs: float
    ratio: float
    sigma_sq_integral: float
    bounded: bool


@dataclass
class VerificationReport:
    """Ensemble closure-mismatch bound measurements, one row per closure."""

    times: np.ndarray
    rows: list
    lhs_curves: dict
    m_bound: float

    def ordering_consistent(self, slack: float = 2.0) -> bool:
        """No closure with strictly smaller mismatch has sup-error worse
        than ``slack`` times that of a closure with larger mismatch."""
        for a in self.rows:
            for b in self.rows:
                if a.rhs < b.rhs and a.sup_lhs > slack * b.sup_lhs:
                    return False
        return True


def verify_approximation(config: ExperimentConfig, closures: tuple | None = None) -> VerificationReport:
    """Measure the closure-mismatch bound over an ensemble of seeds.

    For each closure: run ensemble members on the coarse grid from the
    filtered benchmark IC, record lhs(t) = E|benchmark - Q|^2(t) and
    rhs = E integral |stress - sigma|^2 dt, and report the sup ratio.
    Only ordering and boundedness are checked; the bound's constant is
    not asserted.
    """
    if config.ensemble_size < 8:
        raise ConfigError("approximation verification needs an ensemble of at least 8 members")
    closures = config.closures if closures is None else tuple(closures)

    trajectory = ensure_resolved(config)
    wtraj = window_slice(config, trajectory)
    series = ensure_diagnosed(config, trajectory)
    needs_stats = any(name == "ar1_matched" for name in closures)
    stats = estimate_stats(series) if needs_stats else None
    bench = _coarse_benchmark(config, wtraj)
    coarse = config.coarse_grid
    stepper = _window_stepper(config, wtraj)
    t_w0 = float(wtraj.times[0])
    fbar_c = _filtered_forcing(config, coarse)
    q0 = bench[0]

    duration = float(wtraj.times[-1] - wtraj.times[0])
    m_bound = config.m_bound
    if m_bound == 0.0 and stats is not None:
        stationary = l2_norm(stats.mean_field) ** 2 + l2_norm(stats.std_field) ** 2
        m_bound = 10.0 * duration * stationary

    rows = []
    curves = {}
    for name in closures:
        spec_proto = ClosureSpec(
            kind=name,
            series=series if name != "null" else None,
            stats=stats if name == "ar1_matched" else None,
        )
        sampler_proto = make_closure(spec_proto, stepper)
        seeds = member_seeds(config, config.ensemble_size) if sampler_proto.seed_dependent or name == "perturbed_replay" else [config.master_seed]

        lhs_sum = np.zeros(len(bench))
        rhs_values = []
        sigma_ints = []
        for seed in sorted(seeds):
            ic = perturb_field(q0, config.ic_perturbation, seed) if name == "perturbed_replay" else q0
            spec = replace(spec_proto, seed=seed)
            ltraj = run(ic, config.params, fbar_c, make_closure(spec, stepper), stepper, t0=t_w0)
            sigma_series = SgsSeries(coarse, ltraj.times, ltraj.sigma_snapshots)
            rhs_values.append(closure_mismatch(series, sigma_series))
            sigma_sq = [l2_norm(s) ** 2 for s in ltraj.sigma_snapshots]
            sigma_ints.append(float(np.trapezoid(sigma_sq, ltraj.times)))
            lhs_sum += np.array(
                [l2_norm(Field(coarse, b.values - s.values)) ** 2 for b, s in zip(bench, ltraj.snapshots)]
            )
        n = len(seeds)
        lhs = lhs_sum / n
        rhs = float(np.mean(rhs_values))
        sup_lhs = float(lhs.max())
        ratio = sup_lhs / rhs if rhs > 0.0 else math.inf
        sigma_int = float(np.mean(sigma_ints))
        bounded = (m_bound <= 0.0) or all(s <= m_bound for s in sigma_ints)
        rows.append(
            ClosureRow(
                name=name,
                n_members=n,
                rhs=rhs,
                sup_lhs=sup_lhs,
                ratio=ratio,
                sigma_sq_integral=sigma_int,
                bounded=bounded,
            )
        )
        curves[name] = lhs

    report = VerificationReport(times=wtraj.times.copy(), rows=rows, lhs_curves=curves, m_bound=m_bound)

    if config.out_dir:
        directory = Path(config.out_dir) / "approx"
        _write_csv(
            directory / "report.csv",
            ["closure", "n_members", "rhs", "sup_lhs", "sup_ratio", "sigma_sq_integral", "bounded"],
            (
                (r.name, str(r.n_members), r.rhs, r.sup_lhs, r.ratio, r.sigma_sq_integral, str(r.bounded))
                for r in report.rows
            ),
        )
        _write_csv(
            directory / "lhs_curves.csv",
            ["t"] + [r.name for r in report.rows],
            zip(report.times, *(curves[r.name] for r in report.rows)),
        )
        _write_manifest(directory, config, "approx")
    return report


@dataclass
class ScaleReport:
    """Shrinking-filter sweep rows: (delta, integral |sigma|^2, sup error^2)."""

    rows: list

    @property
    def sigma_decreasing(self) -> bool:
        vals = [r[1] for r in self.rows]
        return all(b < a for a, b in zip(vals, vals[1:]))

    @property
    def error_decreasing(self) -> bool:
        vals = [r[2] for r in self.rows]
        return all(b < a for a, b in zip(vals, vals[1:]))


def verify_scale_convergence(config: ExperimentConfig, delta_list=None) -> ScaleReport:
    """Shrink the filter on the fixed fine grid with replayed stress.

    For each width: diagnose the stress on the fine grid, rerun the LES
    equation there with the exact replay closure from the filtered IC,
    and record the stress budget and the sup-over-time squared distance
    to the unfiltered resolved solution.
    """
    deltas = tuple(config.delta_list if delta_list is None else delta_list)
    if len(deltas) < 1:
        raise ConfigError("delta list must not be empty")
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ConfigError("delta list must be strictly decreasing")
    fine = config.fine_grid
    if any(d < fine.dx for d in deltas):
        raise ConfigError("every delta must be at least the fine grid spacing")

    trajectory = ensure_resolved(config)
    wtraj = window_slice(config, trajectory)
    t_w0 = float(wtraj.times[0])
    duration = float(wtraj.times[-1] - t_w0)
    stepper = StepperConfig(config.dt, duration, config.store_every, config.cfl_safety)
    forcing = config.forcing_fine()

    rows = []
    for delta in deltas:
        series = diagnose_sgs(wtraj, delta, fine)
        q0 = gaussian_filter(wtraj.snapshots[0], delta)
        fbar = gaussian_filter(forcing, delta)
        sampler = make_closure(ClosureSpec(kind="replay", series=series), stepper)
        ltraj = run(q0, config.params, fbar, sampler, stepper, t0=t_w0)
        sigma_sq = [l2_norm(s) ** 2 for s in ltraj.sigma_snapshots]
        sigma_int = float(np.trapezoid(sigma_sq, ltraj.times))
        sup_err = max(
            l2_norm(Field(fine, q.values - Q.values)) ** 2
            for q, Q in zip(wtraj.snapshots, ltraj.snapshots)
        )
        rows.append((float(delta), sigma_int, float(sup_err)))

    report = ScaleReport(rows=rows)
    if config.out_dir:
        directory = Path(config.out_dir) / "scale"
        _write_csv(directory / "table.csv", ["delta", "sigma_sq_integral", "sup_err_sq"], report.rows)
        _write_manifest(directory, config, "scale")
    return report
