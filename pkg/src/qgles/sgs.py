"""A-priori subgrid stress diagnosis, its statistics, and closure samplers.

The subgrid stress of a resolved trajectory is the Jacobian commutator
J(filter psi, filter q) - filter(J(psi, q)), computed on the fine grid
and then sampled onto the coarse mesh. Closures turn a diagnosed series
(or its statistics) into a deterministic-per-seed sampler (t, Q) -> Field
usable as additive forcing in an LES run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import Field, Grid, Trajectory, l2_norm, require_same_grid, zeros
from .filters import gaussian_filter, restrict
from .operators import arakawa_jacobian, dst2, idst2, solve_poisson

__all__ = [
    "SgsSeries",
    "SgsStats",
    "ClosureSpec",
    "ReplayRangeError",
    "diagnose_sgs",
    "estimate_stats",
    "integral_autocorrelation_time",
    "make_closure",
    "closure_mismatch",
]

_TIME_EPS = 1e-9


class ReplayRangeError(ValueError):
    """Replay requested outside the diagnosed time range."""


@dataclass
class SgsSeries:
    """Time series of subgrid stress fields on one grid."""

    grid: Grid
    times: np.ndarray
    fields: list

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        if len(self.fields) != self.times.size:
            raise ValueError("one field required per time")
        if self.times.size > 1 and not (np.diff(self.times) > 0).all():
            raise ValueError("series times must be strictly increasing")
        for f in self.fields:
            if f.grid != self.grid:
                raise ValueError("all series fields must share the series grid")

    def __len__(self) -> int:
        return self.times.size


@dataclass
class SgsStats:
    """Pointwise and spectral statistics of a stress series.

    ``spectrum`` holds the temporal variance of each interior sine-mode
    coefficient; ``tau`` is the integral decorrelation time of the
    basin-integrated squared stress; the histogram pools all interior
    node values of the post-spin-up snapshots.
    """

    grid: Grid
    mean_field: Field
    std_field: Field
    tau: float
    spectrum: np.ndarray
    hist_edges: np.ndarray
    hist_counts: np.ndarray


def diagnose_sgs(trajectory: Trajectory, delta: float, coarse: Grid) -> SgsSeries:
    """Diagnose the subgrid stress of a resolved trajectory.

    Per snapshot: recover the streamfunction, form the filtered-Jacobian
    commutator on the fine grid, then sample onto ``coarse`` (which must
    be nested in the trajectory grid; the trajectory grid itself is
    allowed).
    """
    if delta <= 0.0:
        raise ValueError("filter width must be positive for diagnosis")
    fields = []
    for q in trajectory.snapshots:
        psi = solve_poisson(q)
        q_bar = gaussian_filter(q, delta)
        psi_bar = gaussian_filter(psi, delta)
        stress = Field(
            q.grid,
            arakawa_jacobian(psi_bar, q_bar).values - gaussian_filter(arakawa_jacobian(psi, q), delta).values,
        )
        fields.append(restrict(stress, coarse))
    return SgsSeries(grid=coarse, times=trajectory.times.copy(), fields=fields)


def integral_autocorrelation_time(series, dt: float) -> float:
    """Integral decorrelation time of a scalar series.

    Trapezoid integral of the normalized autocovariance from lag zero up
    to (and including) the first nonpositive sample. A constant series
    carries no decorrelation information and maps to ``dt``.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.size < 3:
        raise ValueError("need at least 3 samples")
    x = x - x.mean()
    c0 = float(np.dot(x, x)) / x.size
    if c0 <= 0.0:
        return float(dt)
    rho = [1.0]
    for lag in range(1, x.size - 1):
        r = (float(np.dot(x[:-lag], x[lag:])) / x.size) / c0
        rho.append(r)
        if r <= 0.0:
            break
    return float(dt * np.trapezoid(rho))


def estimate_stats(series: SgsSeries, spin_up_fraction: float = 0.0, bins: int = 64) -> SgsStats:
    """Estimate pointwise, spectral, and temporal statistics of a series."""
    if not (0.0 <= spin_up_fraction < 1.0):
        raise ValueError("spin_up_fraction must lie in [0, 1)")
    k0 = int(spin_up_fraction * len(series))
    sample = series.fields[k0:]
    times = series.times[k0:]
    if len(sample) < 10:
        raise ValueError(f"need at least 10 post-spin-up snapshots, have {len(sample)}")

    stack = np.stack([f.values for f in sample])
    mean = stack.mean(axis=0)
    std = stack.std(axis=0)

    coeffs = np.stack([dst2(v[1:-1, 1:-1]) for v in stack])
    spectrum = coeffs.var(axis=0)

    grid = series.grid
    basin_sq = (stack**2).sum(axis=(1, 2)) * grid.cell_area
    dt = float(np.median(np.diff(times)))
    tau = integral_autocorrelation_time(basin_sq, dt)

    pooled = stack[:, 1:-1, 1:-1].ravel()
    counts, edges = np.histogram(pooled, bins=bins)

    return SgsStats(
        grid=grid,
        mean_field=Field(grid, mean),
        std_field=Field(grid, std),
        tau=tau,
        spectrum=spectrum,
        hist_edges=edges,
        hist_counts=counts,
    )


@dataclass
class ClosureSpec:
    """Which closure to sample and from what source.

    kind: "null", "replay", "perturbed_replay" (same sampler as replay;
    the perturbation lives in the LES initial condition), or
    "ar1_matched". ``series`` feeds the replay kinds, ``stats`` the
    AR(1) kind.
    """

    kind: str
    series: SgsSeries | None = None
    stats: SgsStats | None = None
    seed: int = 0
    amplitude_scale: float = 1.0

    KINDS = ("null", "replay", "perturbed_replay", "ar1_matched")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown closure kind {self.kind!r}; expected one of {self.KINDS}")
        if self.kind in ("replay", "perturbed_replay") and self.series is None:
            raise ValueError(f"closure kind {self.kind!r} needs a diagnosed series")
        if self.kind == "ar1_matched" and self.stats is None:
            raise ValueError("closure kind 'ar1_matched' needs estimated statistics")


class NullClosure:
    """Zero forcing at every time; the unparameterized coarse run."""

    seed_dependent = False

    def __call__(self, t: float, q: Field) -> Field:
        return zeros(q.grid)


class ReplayClosure:
    """Replay a diagnosed stress series, linear in time between samples.

    Exact (bitwise, up to amplitude scale) at the stored times; no
    extrapolation outside the series range.
    """

    seed_dependent = False

    def __init__(self, series: SgsSeries, amplitude_scale: float = 1.0):
        self.series = series
        self.scale = float(amplitude_scale)

    def __call__(self, t: float, q: Field) -> Field:
        ts = self.series.times
        eps = _TIME_EPS * max(1.0, float(abs(ts[-1])))
        if t < ts[0] - eps or t > ts[-1] + eps:
            raise ReplayRangeError(
                f"replay time {t!r} outside diagnosed range [{ts[0]!r}, {ts[-1]!r}]"
            )
        k = int(np.searchsorted(ts, t))
        if k < ts.size and abs(ts[k] - t) <= eps:
            values = self.series.fields[k].values.copy()
        elif k > 0 and abs(ts[k - 1] - t) <= eps:
            values = self.series.fields[k - 1].values.copy()
        else:
            k = min(max(k, 1), ts.size - 1)
            w = (t - ts[k - 1]) / (ts[k] - ts[k - 1])
            values = (1.0 - w) * self.series.fields[k - 1].values + w * self.series.fields[k].values
        if self.scale != 1.0:
            values = self.scale * values
        return Field(self.series.grid, values)


class Ar1Closure:
    """Gaussian field process with matched one-point and spectral statistics.

    Each step advances z_n = a z_{n-1} + sqrt(1 - a^2) eta_n with
    a = exp(-dt/tau) and eta drawn with sine-mode variances proportional
    to the diagnosed spectrum. The state is normalized to unit pointwise
    variance, scaled by the diagnosed std field, and shifted by the mean
    field. Deterministic per seed: the realization is a pure function of
    the step index round(t / dt), whatever the call pattern, so two
    samplers with the same seed replay identically.
    """

    seed_dependent = True

    def __init__(self, stats: SgsStats, dt: float, seed: int, amplitude_scale: float = 1.0):
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        self.stats = stats
        self.dt = float(dt)
        self.seed = int(seed)
        self.scale = float(amplitude_scale)
        self.a = math.exp(-self.dt / stats.tau)

        spectrum = np.maximum(stats.spectrum, 0.0)
        self._coef_std = np.sqrt(spectrum)
        # Pointwise variance of the colored process: V = Py^T S Px with
        # P the squared orthonormal sine basis along each axis.
        grid = stats.grid
        phi_x = _sine_basis(grid.nx - 2) ** 2
        phi_y = _sine_basis(grid.ny - 2) ** 2
        variance = phi_y.T @ spectrum @ phi_x
        self._state_std = np.sqrt(np.maximum(variance, 0.0))
        self._active = self._state_std > 0.0

        self._rng = None
        self._n = -1
        self._z = None
        self._field = None

    def _innovation(self) -> np.ndarray:
        xi = self._rng.standard_normal(self._coef_std.shape)
        return idst2(self._coef_std * xi)

    def _advance_to(self, n: int) -> None:
        if n < self._n or self._rng is None:
            self._rng = np.random.default_rng(self.seed)
            self._n = -1
            self._z = None
        while self._n < n:
            eta = self._innovation()
            if self._z is None:
                self._z = eta
            else:
                self._z = self.a * self._z + math.sqrt(1.0 - self.a * self.a) * eta
            self._n += 1
        normalized = np.zeros_like(self._z)
        np.divide(self._z, self._state_std, out=normalized, where=self._active)
        grid = self.stats.grid
        values = self.stats.mean_field.values.copy()
        values[1:-1, 1:-1] += self.scale * self.stats.std_field.values[1:-1, 1:-1] * normalized
        values[0, :] = values[-1, :] = 0.0
        values[:, 0] = values[:, -1] = 0.0
        self._field = Field(grid, values)

    def __call__(self, t: float, q: Field) -> Field:
        n = int(round(t / self.dt))
        if n < 0:
            raise ValueError(f"closure sampled at negative time {t}")
        if n != self._n or self._field is None:
            self._advance_to(n)
        return self._field


def _sine_basis(n: int) -> np.ndarray:
    """Orthonormal DST-I basis matrix: row k is mode k+1 on n interior nodes."""
    k = np.arange(1, n + 1)
    i = np.arange(1, n + 1)
    return np.sqrt(2.0 / (n + 1)) * np.sin(np.pi * np.outer(k, i) / (n + 1))


def make_closure(spec: ClosureSpec, stepper) -> object:
    """Build the sampler ``(t, Q) -> Field`` described by a ClosureSpec."""
    if spec.kind == "null":
        return NullClosure()
    if spec.kind in ("replay", "perturbed_replay"):
        return ReplayClosure(spec.series, spec.amplitude_scale)
    return Ar1Closure(spec.stats, stepper.dt, spec.seed, spec.amplitude_scale)


def closure_mismatch(series_stress: SgsSeries, sampled_sigma: SgsSeries) -> float:
    """Trapezoid-in-time integral of |stress - sigma|^2 over aligned series."""
    if series_stress.grid != sampled_sigma.grid:
        raise ValueError("mismatch requires both series on the same grid")
    ta, tb = series_stress.times, sampled_sigma.times
    if ta.size != tb.size or not np.allclose(ta, tb, rtol=0.0, atol=_TIME_EPS * max(1.0, float(abs(ta[-1])))):
        raise ValueError("mismatch requires aligned series times")
    sq = [
        l2_norm(Field(series_stress.grid, r.values - s.values)) ** 2
        for r, s in zip(series_stress.fields, sampled_sigma.fields)
    ]
    return float(np.trapezoid(sq, ta))


def slice_series(series: SgsSeries, t_start: float) -> SgsSeries:
    """Sub-series at times >= t_start (tolerant comparison)."""
    eps = _TIME_EPS * max(1.0, float(abs(series.times[-1])))
    mask = series.times >= t_start - eps
    idx = int(np.argmax(mask)) if mask.any() else series.times.size
    return SgsSeries(series.grid, series.times[idx:].copy(), series.fields[idx:])
