"""Spatial grid, hydrodynamic moments, and the periodic Poisson field.

Space is the unit torus split into equal cells. The potential solves
-lap phi = rho - rho_inf with the standard 3-point Laplacian and a
zero-mean gauge; the gradient uses the centered 2-point stencil so that
summation by parts holds exactly on the periodic grid. Two independent
routes are provided: a Fourier solve with the zero mode pinned to zero,
and a direct cyclic-tridiagonal elimination.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .velocity import VelocityGrid, integrate

__all__ = [
    "SpatialGrid",
    "build_spatial_grid",
    "FieldSet",
    "moments",
    "solve_poisson",
    "centered_gradient",
    "laplacian",
    "build_fields",
]


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform cells on the unit torus (1-d)."""

    dim: int
    cells: int
    spacing: float
    volume: float

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.cells) + 0.5) * self.spacing


def build_spatial_grid(cells: int, dim: int = 1) -> SpatialGrid:
    if dim != 1:
        raise ValueError("only 1-d space is supported")
    if cells < 4:
        raise ValueError(f"need at least 4 spatial cells, got {cells}")
    return SpatialGrid(dim=1, cells=int(cells), spacing=1.0 / cells, volume=1.0)


@dataclass(frozen=True)
class FieldSet:
    """Density, current, potential, and potential gradient per cell."""

    rho: np.ndarray       # (cells,)
    j: np.ndarray         # (cells, d_v)
    phi: np.ndarray       # (cells,), zero mean
    grad_phi: np.ndarray  # (cells,)


def moments(f: np.ndarray, vgrid: VelocityGrid) -> tuple[np.ndarray, np.ndarray]:
    """Density and current per spatial cell."""
    f = np.asarray(f)
    rho = integrate(f, vgrid)
    j = np.stack(
        [integrate(f * vgrid.nodes[:, a], vgrid) for a in range(vgrid.dim)],
        axis=-1,
    )
    return rho, j


def centered_gradient(u: np.ndarray, sgrid: SpatialGrid) -> np.ndarray:
    return (np.roll(u, -1) - np.roll(u, 1)) / (2.0 * sgrid.spacing)


def laplacian(u: np.ndarray, sgrid: SpatialGrid) -> np.ndarray:
    return (np.roll(u, -1) - 2.0 * u + np.roll(u, 1)) / sgrid.spacing**2


def _poisson_fft(source: np.ndarray, sgrid: SpatialGrid) -> np.ndarray:
    n = sgrid.cells
    src_hat = np.fft.rfft(source)
    k = np.arange(src_hat.shape[0])
    eig = (4.0 / sgrid.spacing**2) * np.sin(np.pi * k / n) ** 2
    phi_hat = np.zeros_like(src_hat)
    phi_hat[1:] = src_hat[1:] / eig[1:]
    return np.fft.irfft(phi_hat, n=n)


def _poisson_tridiagonal(source: np.ndarray, sgrid: SpatialGrid) -> np.ndarray:
    # Gauge phi[-1] = 0; the periodic corner couplings then move to the
    # right-hand side and the remaining system is strictly tridiagonal.
    n = sgrid.cells
    h2 = sgrid.spacing**2
    rhs = source[: n - 1] * h2
    band = np.zeros((3, n - 1))
    band[0, 1:] = -1.0
    band[1, :] = 2.0
    band[2, :-1] = -1.0
    phi = np.zeros(n)
    phi[: n - 1] = solve_banded((1, 1), band, rhs)
    return phi - np.sum(phi) / n


def solve_poisson(
    rho: np.ndarray,
    rho_inf: float,
    sgrid: SpatialGrid,
    method: str = "fft",
) -> tuple[np.ndarray, np.ndarray]:
    """Solve -lap phi = rho - rho_inf on the torus, zero-mean gauge.

    The source must integrate to zero (the periodic problem is solvable
    only then); a mean above 1e-10 is rejected.
    """
    rho = np.asarray(rho, dtype=float)
    source = rho - rho_inf
    mean = float(np.sum(source)) / sgrid.cells
    if abs(mean) > 1e-10:
        raise ValueError(
            f"Poisson source must have zero mean, got {mean:.3e}"
        )
    source = source - mean  # strip the rounding-level zero mode
    if method == "fft":
        phi = _poisson_fft(source, sgrid)
    elif method == "tridiagonal":
        phi = _poisson_tridiagonal(source, sgrid)
    else:
        raise ValueError(f"unknown Poisson method {method!r}")
    return phi, centered_gradient(phi, sgrid)


def build_fields(
    f: np.ndarray,
    rho_inf: float,
    vgrid: VelocityGrid,
    sgrid: SpatialGrid,
    method: str = "fft",
) -> FieldSet:
    rho, j = moments(f, vgrid)
    phi, grad_phi = solve_poisson(rho, rho_inf, sgrid, method=method)
    return FieldSet(rho=rho, j=j, phi=phi, grad_phi=grad_phi)
