"""Pauli-blocked relaxation collision operator on the velocity lattice.

The operator at one spatial cell is

    Q(f)_i = sum_j w_j sigma_ij [ M_i (1 - f_i) f_j - M_j (1 - f_j) f_i ]

with a symmetric positive scattering table sigma. Gain and loss are the
same double sum with the indices swapped, so the mass sum_i w_i Q(f)_i
cancels identically; the evaluation below keeps that cancellation exact
in the algebra (gain and loss share one real value) and the invariant
fails only by summation rounding, never by quadrature error.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .equilibrium import project
from .velocity import VelocityGrid

__all__ = [
    "CollisionKernel",
    "build_kernel",
    "load_kernel_table",
    "save_kernel_table",
    "apply_collision",
    "collision_norm_probe",
    "NormProbeResult",
]

KERNEL_KINDS = ("constant", "gaussian_bump", "custom_table")


@dataclass(frozen=True)
class CollisionKernel:
    """Dense symmetric scattering table with recorded bounds."""

    kind: str
    matrix: np.ndarray    # (n_nodes, n_nodes), symmetric, > 0
    weighted: np.ndarray  # matrix * quadrature weights (row contraction)
    sigma_minus: float
    sigma_plus: float


def _make_kernel(kind: str, matrix: np.ndarray, grid: VelocityGrid,
                 bounds: tuple[float, float] | None = None) -> CollisionKernel:
    n = grid.n_nodes
    if matrix.shape != (n, n):
        raise ValueError(f"kernel table is {matrix.shape}, grid has {n} nodes")
    if not np.array_equal(matrix, matrix.T):
        raise ValueError("kernel table must be symmetric")
    lo = float(matrix.min())
    hi = float(matrix.max())
    if lo <= 0.0:
        raise ValueError(f"kernel values must be positive, found {lo:g}")
    if bounds is None:
        bounds = (lo, hi)
    return CollisionKernel(
        kind=kind,
        matrix=matrix,
        weighted=matrix * grid.weights[None, :],
        sigma_minus=bounds[0],
        sigma_plus=bounds[1],
    )


def build_kernel(kind: str, grid: VelocityGrid, *, sigma0: float = 1.0,
                 table_path: str | None = None) -> CollisionKernel:
    """Construct one of the built-in kernels or load a table from disk."""
    n = grid.n_nodes
    if kind == "constant":
        if sigma0 <= 0.0:
            raise ValueError(f"constant kernel needs sigma0 > 0, got {sigma0:g}")
        return _make_kernel(kind, np.full((n, n), float(sigma0)), grid,
                            bounds=(sigma0, sigma0))
    if kind == "gaussian_bump":
        diff = grid.nodes[:, None, :] - grid.nodes[None, :, :]
        dist_sq = np.sum(diff * diff, axis=-1)
        matrix = 1.0 + 0.5 * np.exp(-0.5 * dist_sq)
        return _make_kernel(kind, matrix, grid, bounds=(1.0, 1.5))
    if kind == "custom_table":
        if table_path is None:
            raise ValueError("custom_table kernel needs a file path")
        return load_kernel_table(table_path, grid)
    raise ValueError(f"unknown kernel kind {kind!r}; choose from {KERNEL_KINDS}")


def load_kernel_table(path: str, grid: VelocityGrid) -> CollisionKernel:
    """Plain-text table: a header line with N, then N rows of N values."""
    values: list[float] = []
    n_declared = None
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if n_declared is None:
                n_declared = int(line)
                continue
            values.extend(float(tok) for tok in line.split())
    if n_declared is None:
        raise ValueError(f"kernel table {path} has no header line")
    if len(values) != n_declared * n_declared:
        raise ValueError(
            f"kernel table {path} declares N={n_declared} but holds "
            f"{len(values)} values"
        )
    matrix = np.array(values).reshape(n_declared, n_declared)
    return _make_kernel("custom_table", matrix, grid)


def save_kernel_table(kernel: CollisionKernel, path: str) -> None:
    n = kernel.matrix.shape[0]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{n}\n")
        for row in kernel.matrix:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def apply_collision(f: np.ndarray, kernel: CollisionKernel,
                    grid: VelocityGrid) -> np.ndarray:
    """Evaluate Q(f) for one cell (N,) or a stack of cells (cells, N).

    Uses Q = G * (S f) - f * (S G) with G = M (1 - f) and S the
    weight-contracted table; all contractions go through einsum so the
    result does not depend on BLAS threading.
    """
    f = np.asarray(f, dtype=float)
    single = f.ndim == 1
    if single:
        f = f[None, :]
    if f.shape[-1] != grid.n_nodes:
        raise ValueError(f"state has {f.shape[-1]} nodes, grid {grid.n_nodes}")
    fmin, fmax = float(f.min()), float(f.max())
    if fmin < 0.0 or fmax > 1.0:
        raise ValueError(
            f"occupation numbers must lie in [0, 1], found range "
            f"[{fmin:g}, {fmax:g}]"
        )
    gain_weight = grid.maxwellian * (1.0 - f)
    scattered_f = np.einsum("ij,xj->xi", kernel.weighted, f)
    scattered_g = np.einsum("ij,xj->xi", kernel.weighted, gain_weight)
    q = gain_weight * scattered_f - f * scattered_g
    return q[0] if single else q


class NormProbeResult(NamedTuple):
    value: float
    skipped: int
    degenerate: bool


def collision_norm_probe(samples, kernel: CollisionKernel, grid: VelocityGrid,
                         spacing: float = 1.0,
                         floor: float = 1e-12) -> NormProbeResult:
    """Empirical bound ||Q(f)|| / ||f - Pf|| over a batch of states.

    Both norms carry the 1/M weight. Samples whose distance to the local
    equilibrium falls below `floor` are skipped; if everything is
    skipped the probe is degenerate and reports 0.
    """
    inv_m = 1.0 / grid.maxwellian
    best = 0.0
    skipped = 0
    seen = 0
    for sample in samples:
        f = np.asarray(getattr(sample, "f", sample), dtype=float)
        if f.ndim == 1:
            f = f[None, :]
        seen += 1
        proj, _ = project(f, grid)
        dev = f - proj
        dist = np.sqrt(np.sum(dev * dev * inv_m * grid.weights) * spacing)
        if dist <= floor:
            skipped += 1
            continue
        q = apply_collision(f, kernel, grid)
        q_norm = np.sqrt(np.sum(q * q * inv_m * grid.weights) * spacing)
        best = max(best, q_norm / dist)
    degenerate = seen > 0 and skipped == seen
    return NormProbeResult(value=best, skipped=skipped, degenerate=degenerate)
