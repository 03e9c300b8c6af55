"""Tendency assembly, RK4 time stepping, and run-level diagnostics.

The prognostic variable is vorticity q on a Dirichlet basin; the
streamfunction is recovered by the direct Poisson solve each stage.
The advective term uses the conserving Jacobian, so with all damping
and forcing switched off the semi-discrete flow conserves enstrophy
and the compatible energy -<psi, q> exactly; time stepping contributes
the only drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import Field, NonFiniteFieldError, Trajectory, from_function, inner_product, require_same_grid
from .operators import arakawa_jacobian, gradient, laplacian, solve_poisson

__all__ = [
    "PhysicalParams",
    "StepperConfig",
    "CflError",
    "double_gyre_forcing",
    "rhs_true",
    "rhs_les",
    "rk4_step",
    "run",
    "energy",
    "max_speed",
    "enstrophy_decay_rate",
    "enstrophy_bound",
]


class CflError(RuntimeError):
    """Advective CFL limit exceeded; reduce the time step."""


@dataclass(frozen=True)
class PhysicalParams:
    """beta-plane, viscous, and Ekman coefficients (nondimensional).

    The enstrophy decay estimate additionally needs r > 0 whenever the
    forcing is nonzero; inviscid/undamped settings are allowed for
    conservation experiments.
    """

    beta: float
    nu: float
    r: float

    def __post_init__(self):
        if self.nu < 0.0 or self.r < 0.0:
            raise ValueError("dissipation constants nu and r must be nonnegative")


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    t_end: float
    store_every: int = 1
    cfl_safety: float = 0.5

    def __post_init__(self):
        if self.dt <= 0.0 or self.t_end <= 0.0:
            raise ValueError("dt and t_end must be positive")
        if self.store_every < 1:
            raise ValueError("store_every must be a positive step count")
        if not (0.0 < self.cfl_safety <= 1.0):
            raise ValueError("cfl_safety must lie in (0, 1]")

    @property
    def n_steps(self) -> int:
        n = int(round(self.t_end / self.dt))
        if n < 1 or abs(n * self.dt - self.t_end) > 1e-9 * self.t_end:
            raise ValueError("t_end must be an integer number of steps")
        return n


def double_gyre_forcing(grid, amplitude: float) -> Field:
    """Steady wind-stress curl: x-uniform, one full sine period in y.

    Drives two counter-rotating gyres; the basin integral vanishes by
    antisymmetry about mid-basin. Boundary ring is zeroed.
    """
    return from_function(grid, lambda X, Y: amplitude * np.sin(2.0 * np.pi * Y / grid.ly))


def _tendency(q: Field, psi: Field, params: PhysicalParams, forcing: Field, sigma: Field | None) -> Field:
    out = -arakawa_jacobian(psi, q).values + params.nu * laplacian(q).values - params.r * q.values
    if params.beta != 0.0:
        psi_x = gradient(psi)[0].values
        out[1:-1, 1:-1] -= params.beta * psi_x[1:-1, 1:-1]
    out += forcing.values
    if sigma is not None:
        out += sigma.values
    out[0, :] = out[-1, :] = 0.0
    out[:, 0] = out[:, -1] = 0.0
    return Field(q.grid, out)


def rhs_true(q: Field, params: PhysicalParams, forcing: Field) -> Field:
    """Tendency of the unfiltered vorticity equation."""
    require_same_grid(q, forcing)
    return _tendency(q, solve_poisson(q), params, forcing, None)


def rhs_les(Q: Field, params: PhysicalParams, filtered_forcing: Field, sigma: Field | None) -> Field:
    """Tendency of the LES equation: filtered forcing plus the closure field."""
    require_same_grid(Q, filtered_forcing)
    if sigma is not None:
        require_same_grid(Q, sigma)
    return _tendency(Q, solve_poisson(Q), params, filtered_forcing, sigma)


def max_speed(psi: Field) -> float:
    """Largest velocity component of the flow (u, v) = (-psi_y, psi_x)."""
    fx, fy = gradient(psi)
    return float(max(np.abs(fx.values).max(), np.abs(fy.values).max()))


def _rk4(q: Field, dt: float, rhs, k1: Field | None = None) -> Field:
    g = q.grid
    if k1 is None:
        k1 = rhs(q)
    k2 = rhs(Field(g, q.values + 0.5 * dt * k1.values))
    k3 = rhs(Field(g, q.values + 0.5 * dt * k2.values))
    k4 = rhs(Field(g, q.values + dt * k3.values))
    return Field(g, q.values + (dt / 6.0) * (k1.values + 2.0 * k2.values + 2.0 * k3.values + k4.values))


def rk4_step(q: Field, dt: float, rhs) -> Field:
    """One classical RK4 update; ``rhs`` maps Field -> Field.

    The caller's rhs must be deterministic during the step (any closure
    field held fixed across the four stages). Raises CflError when the
    post-step state breaks the hard advective limit.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    out = _rk4(q, dt, rhs)
    g = q.grid
    cfl = max_speed(solve_poisson(out)) * dt / min(g.dx, g.dy)
    if cfl > 1.0:
        raise CflError(f"post-step CFL number {cfl:.3f} exceeds 1; reduce dt below {dt / cfl:.3e}")
    return out


def energy(q: Field, psi: Field | None = None) -> float:
    """Kinetic energy -<psi, q>, the discrete Dirichlet form of |grad psi|^2."""
    if psi is None:
        psi = solve_poisson(q)
    return -inner_product(psi, q)


def enstrophy_decay_rate(params: PhysicalParams, area: float) -> float:
    """Decay rate of the enstrophy envelope; positive whenever beta = 0."""
    return params.r / 2.0 + math.pi * params.nu / area - 0.5 * abs(params.beta) * (area / math.pi + 1.0)


def run(
    q0: Field,
    params: PhysicalParams,
    forcing: Field,
    closure,
    stepper: StepperConfig,
    t0: float = 0.0,
) -> Trajectory:
    """Integrate from q0 to t0 + t_end, recording snapshots and diagnostics.

    ``closure`` is None or a sampler ``(t, q) -> Field`` evaluated once
    per step at the step-start state and held fixed across the four RK4
    stages. Per-step diagnostics: enstrophy |q|^2, energy -<psi, q>, the
    enstrophy-envelope bound, and the advective CFL number. Snapshots
    (and the closure sample, when present) are stored every
    ``store_every`` steps plus the final step. Deterministic for a fixed
    closure and seed.
    """
    require_same_grid(q0, forcing)
    grid = q0.grid
    dt = stepper.dt
    n_steps = stepper.n_steps
    h_min = min(grid.dx, grid.dy)

    alpha = enstrophy_decay_rate(params, grid.area)
    f_norm_sq = float(np.sum(forcing.values**2) * grid.cell_area)
    decay = math.exp(-2.0 * alpha * dt)

    n_diag = n_steps + 1
    diag = {
        "t": np.empty(n_diag),
        "enstrophy": np.empty(n_diag),
        "energy": np.empty(n_diag),
        "enstrophy_bound": np.empty(n_diag),
        "cfl": np.empty(n_diag),
        "f_norm_sq": np.full(n_diag, f_norm_sq),
    }
    snap_times = []
    snapshots = []
    sigma_snapshots = [] if closure is not None else None

    q = q0.copy()
    psi = solve_poisson(q)
    ens0 = float(np.sum(q.values**2) * grid.cell_area)
    forced = f_norm_sq > 0.0
    integral = 0.0

    for k in range(n_steps + 1):
        t = t0 + k * dt
        ens = float(np.sum(q.values**2) * grid.cell_area)
        if k > 0:
            integral = decay * integral + 0.5 * dt * f_norm_sq * (1.0 + decay)
        envelope = ens0 * math.exp(-2.0 * alpha * (k * dt))
        if not forced:
            bound = envelope
        elif params.r > 0.0:
            bound = envelope + integral / params.r
        else:
            bound = math.inf
        speed = max_speed(psi)
        cfl = speed * dt / h_min

        diag["t"][k] = t
        diag["enstrophy"][k] = ens
        diag["energy"][k] = -inner_product(psi, q)
        diag["enstrophy_bound"][k] = bound
        diag["cfl"][k] = cfl

        sigma = closure(t, q) if closure is not None else None

        if k % stepper.store_every == 0 or k == n_steps:
            snap_times.append(t)
            snapshots.append(q)
            if sigma_snapshots is not None:
                sigma_snapshots.append(sigma)

        if k == n_steps:
            break
        if cfl > stepper.cfl_safety:
            raise CflError(
                f"CFL number {cfl:.3f} at step {k} (t={t:.6g}) exceeds safety {stepper.cfl_safety}; "
                f"reduce dt below {stepper.cfl_safety * h_min / max(speed, 1e-300):.3e}"
            )
        q = _rk4(q, dt, lambda s: _tendency(s, solve_poisson(s), params, forcing, sigma), k1=_tendency(q, psi, params, forcing, sigma))
        if not np.isfinite(q.values).all():
            raise NonFiniteFieldError(f"non-finite field after step {k + 1} (t={t0 + (k + 1) * dt:.6g})")
        psi = solve_poisson(q)

    return Trajectory(
        grid=grid,
        times=np.asarray(snap_times),
        snapshots=snapshots,
        diagnostics=diag,
        sigma_snapshots=sigma_snapshots,
    )


def enstrophy_bound(trajectory: Trajectory, params: PhysicalParams, forcing_norm_sq=None):
    """Evaluate both sides of the enstrophy envelope along a trajectory.

    Returns (lhs, rhs) arrays over the per-step diagnostic times: lhs is
    the recorded enstrophy, rhs the envelope q0-decay term plus the
    forcing integral accumulated by trapezoid over the stored steps.
    ``forcing_norm_sq`` overrides the recorded |f|^2 history (scalar or
    per-step array); the default uses the trajectory's own record.
    """
    t = trajectory.diagnostics["t"]
    lhs = trajectory.diagnostics["enstrophy"].copy()
    if forcing_norm_sq is None:
        fns = trajectory.diagnostics["f_norm_sq"]
    else:
        fns = np.broadcast_to(np.asarray(forcing_norm_sq, dtype=np.float64), t.shape)
    grid = trajectory.grid
    alpha = enstrophy_decay_rate(params, grid.area)

    rhs = np.empty_like(lhs)
    ens0 = lhs[0]
    integral = 0.0
    rhs[0] = ens0
    for k in range(1, t.size):
        dt = t[k] - t[k - 1]
        decay = math.exp(-2.0 * alpha * dt)
        integral = decay * integral + 0.5 * dt * (fns[k] + decay * fns[k - 1])
        base = ens0 * math.exp(-2.0 * alpha * (t[k] - t[0]))
        if integral == 0.0:
            rhs[k] = base
        elif params.r > 0.0:
            rhs[k] = base + integral / params.r
        else:
            rhs[k] = math.inf
    return lhs, rhs
