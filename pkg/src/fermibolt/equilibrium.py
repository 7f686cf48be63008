"""Fermi-Dirac profiles and the density -> kappa inversion.

A local equilibrium on the lattice is kappa*M/(1 + kappa*M) for a
positive scalar kappa; its density is strictly increasing in kappa and
saturates at the lattice volume (2L)^dim, the Pauli ceiling f == 1.
Inverting density -> kappa is a scalar root solve done here with a
bracketed Newton iteration (analytic derivative) that falls back to
bisection whenever a Newton step would leave the bracket.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .velocity import VelocityGrid, integrate

__all__ = [
    "SaturationError",
    "EquilibriumProfile",
    "fermi_profile",
    "density_of_kappa",
    "solve_kappa",
    "solve_kappa_many",
    "global_equilibrium",
    "project",
]

MAX_NEWTON_ITER = 200


class SaturationError(ValueError):
    """Requested density is not reachable under the Pauli bound f <= 1."""


@dataclass(frozen=True)
class EquilibriumProfile:
    """Spatially uniform Fermi-Dirac state kappa*M/(1 + kappa*M)."""

    kappa: float
    profile: np.ndarray  # (n_nodes,)
    density: float


def fermi_profile(kappa, grid: VelocityGrid) -> np.ndarray:
    """kappa*M/(1 + kappa*M); kappa may be scalar or a column of cells."""
    kappa = np.asarray(kappa, dtype=float)
    km = kappa[..., None] * grid.maxwellian if kappa.ndim else kappa * grid.maxwellian
    return km / (1.0 + km)


def density_of_kappa(kappa, grid: VelocityGrid):
    """Velocity integral of the Fermi-Dirac profile at the given kappa."""
    return integrate(fermi_profile(kappa, grid), grid)


def _density_and_slope(kappa: np.ndarray, grid: VelocityGrid):
    m = grid.maxwellian
    denom = 1.0 + kappa[:, None] * m
    dens = np.sum((kappa[:, None] * m / denom) * grid.weights, axis=-1)
    slope = np.sum((m / (denom * denom)) * grid.weights, axis=-1)
    return dens, slope


def solve_kappa_many(
    targets: np.ndarray,
    grid: VelocityGrid,
    rel_tol: float = 1e-12,
    initial: np.ndarray | None = None,
) -> np.ndarray:
    """Invert density -> kappa for a batch of target densities.

    Maintains a sign bracket [lo, hi] per entry; Newton steps that stay
    inside the bracket are taken, anything else bisects. `initial` is a
    warm start (previous kappa field), otherwise the small-kappa linear
    estimate target / int(M) seeds the iteration.
    """
    targets = np.asarray(targets, dtype=float)
    if targets.ndim != 1:
        raise ValueError("targets must be a 1-d array of cell densities")
    saturation = float(np.sum(grid.weights))
    if np.any(targets <= 0.0):
        raise ValueError("target density must be positive")
    if np.any(targets >= saturation * (1.0 - 1e-12)):
        raise SaturationError(
            f"target density reaches the Pauli saturation {saturation:g} "
            "of the truncated lattice"
        )

    m0 = float(integrate(grid.maxwellian, grid))
    if initial is not None:
        kappa = np.clip(np.asarray(initial, dtype=float).copy(), 1e-300, None)
        if kappa.shape != targets.shape:
            raise ValueError("warm-start array must match the target shape")
    else:
        kappa = targets / m0

    lo = np.zeros_like(targets)          # density(0) = 0 < target always
    hi = np.full_like(targets, np.inf)
    for _ in range(MAX_NEWTON_ITER):
        dens, slope = _density_and_slope(kappa, grid)
        resid = dens - targets
        done = np.abs(resid) <= rel_tol * targets
        if np.all(done):
            return kappa
        below = resid < 0.0
        lo = np.where(below, np.maximum(lo, kappa), lo)
        hi = np.where(~below, np.minimum(hi, kappa), hi)
        step = np.where(slope > 0.0, resid / np.where(slope > 0.0, slope, 1.0), np.nan)
        trial = kappa - step
        inside = np.isfinite(trial) & (trial > lo) & (trial < hi)
        # Bisect where Newton leaves the bracket; double upward while the
        # upper end is still unknown.
        fallback = np.where(np.isinf(hi), 2.0 * np.maximum(kappa, 1.0), 0.5 * (lo + hi))
        kappa = np.where(done, kappa, np.where(inside, trial, fallback))
    raise RuntimeError(
        f"kappa iteration failed to reach rel_tol={rel_tol:g} "
        f"in {MAX_NEWTON_ITER} steps"
    )


def solve_kappa(
    target_density: float,
    grid: VelocityGrid,
    rel_tol: float = 1e-12,
    initial: float | None = None,
) -> float:
    """Scalar wrapper around `solve_kappa_many`."""
    init = None if initial is None else np.array([initial], dtype=float)
    return float(solve_kappa_many(np.array([target_density]), grid, rel_tol, init)[0])


def global_equilibrium(
    initial_mass: float,
    spatial_volume: float,
    grid: VelocityGrid,
    rel_tol: float = 1e-14,
) -> EquilibriumProfile:
    """Uniform equilibrium carrying the conserved mass.

    The constant density initial_mass / spatial_volume fixes kappa; the
    tight default tolerance keeps the equilibrium-distance floor of long
    runs well below the diagnostic resolution.
    """
    rho = initial_mass / spatial_volume
    kappa = solve_kappa(rho, grid, rel_tol=rel_tol)
    return EquilibriumProfile(
        kappa=kappa,
        profile=fermi_profile(kappa, grid),
        density=float(density_of_kappa(kappa, grid)),
    )


def project(
    f: np.ndarray,
    grid: VelocityGrid,
    rel_tol: float = 1e-12,
    kappa_cache: np.ndarray | None = None,
):
    """Cell-by-cell Fermi-Dirac profile with the same density as f.

    Returns (profile_field, kappa) with profile_field shaped like f and
    kappa one value per cell. The projection only matches the density;
    odd velocity moments of the output vanish by lattice symmetry.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 2 or f.shape[1] != grid.n_nodes:
        raise ValueError("expected f shaped (cells, velocity nodes)")
    rho = integrate(f, grid)
    kappa = solve_kappa_many(rho, grid, rel_tol=rel_tol, initial=kappa_cache)
    return fermi_profile(kappa, grid), kappa
