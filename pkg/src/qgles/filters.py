"""Gaussian spatial filtering, grid transfer, and seeded perturbations.

The Gaussian filter is realized in the double discrete sine basis: mode
(k1, k2) is attenuated by exp(-delta^2 (kappa1^2 + kappa2^2) / 4) with
kappa_i the continuum wavenumbers of the sine modes. This is equivalent
to odd-reflection extension followed by planar convolution and keeps
filtered fields homogeneous-Dirichlet, so the filter commutes with the
Laplacian and with the Poisson solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .field import Field, Grid, GridMismatchError, l2_norm
from .operators import dst2, idst2

__all__ = ["FilterSpec", "gaussian_filter", "restrict", "perturb_field"]


@dataclass(frozen=True)
class FilterSpec:
    """Filter width; delta = 0 is the identity filter."""

    delta: float = 0.0

    def __post_init__(self):
        if self.delta < 0.0:
            raise ValueError("filter width must be nonnegative")


@lru_cache(maxsize=64)
def _attenuation(grid: Grid, delta: float) -> np.ndarray:
    kx = np.pi * np.arange(1, grid.nx - 1) / grid.lx
    ky = np.pi * np.arange(1, grid.ny - 1) / grid.ly
    return np.exp(-(delta**2) * (ky[:, None] ** 2 + kx[None, :] ** 2) / 4.0)


def gaussian_filter(f: Field, spec: FilterSpec | float) -> Field:
    """Low-pass the field; linear, contracting, Dirichlet-preserving."""
    delta = spec.delta if isinstance(spec, FilterSpec) else float(spec)
    if delta < 0.0:
        raise ValueError("filter width must be nonnegative")
    if delta == 0.0:
        return f.copy()
    coef = dst2(f.values[1:-1, 1:-1]) * _attenuation(f.grid, delta)
    out = np.zeros(f.grid.shape)
    out[1:-1, 1:-1] = idst2(coef)
    return Field(f.grid, out)


def restrict(f: Field, coarse: Grid) -> Field:
    """Sample a fine field at the nodes of a nested coarse grid."""
    fine = f.grid
    if fine.lx != coarse.lx or fine.ly != coarse.ly:
        raise GridMismatchError("coarse grid must span the same domain")
    sx, rx = divmod(fine.nx - 1, coarse.nx - 1)
    sy, ry = divmod(fine.ny - 1, coarse.ny - 1)
    if rx or ry or sx < 1 or sy < 1:
        raise GridMismatchError(
            f"coarse nodes are not a subset of the fine nodes: {fine.nx}x{fine.ny} vs {coarse.nx}x{coarse.ny}"
        )
    return Field(coarse, f.values[::sy, ::sx].copy())


def perturb_field(f: Field, amplitude: float, seed: int) -> Field:
    """Add a seeded zero-boundary perturbation of relative size ``amplitude``.

    The perturbation norm equals amplitude * l2_norm(f), so a zero field
    or zero amplitude comes back unchanged. Deterministic per seed.
    """
    if amplitude < 0.0:
        raise ValueError("perturbation amplitude must be nonnegative")
    base = l2_norm(f)
    if amplitude == 0.0 or base == 0.0:
        return f.copy()
    grid = f.grid
    rng = np.random.default_rng(seed)
    noise = np.zeros(grid.shape)
    noise[1:-1, 1:-1] = rng.standard_normal((grid.ny - 2, grid.nx - 2))
    noise_norm = np.sqrt(np.sum(noise * noise) * grid.cell_area)
    return Field(grid, f.values + (amplitude * base / noise_norm) * noise)
