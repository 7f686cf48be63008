"""Truncated velocity lattice with midpoint quadrature.

The velocity domain is the cube [-L, L]^dim sampled on a uniform
cell-centered lattice with an even number of nodes per axis, so every
node v has an exact mirror partner -v and the origin is not a node.
Integrals over velocity are plain midpoint sums; for Gaussian-type
integrands the lattice sum is accurate far beyond its formal order, and
the neglected tail outside the cube is recorded on the grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["VelocityGrid", "build_velocity_grid", "integrate"]

GAUSS_NORM = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class VelocityGrid:
    """Cell-centered lattice on [-L, L]^dim with equal weights."""

    dim: int
    half_width: float
    nodes_per_axis: int
    nodes: np.ndarray       # (n_nodes, dim), mirror symmetric
    weights: np.ndarray     # (n_nodes,), all equal to (2L/N)^dim
    maxwellian: np.ndarray  # (n_nodes,), (2*pi)^(-dim/2) * exp(-|v|^2/2)
    tail_mass: float        # Gaussian mass outside the cube

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def first_axis(self) -> np.ndarray:
        """First velocity component at every node (drives 1-d transport)."""
        return self.nodes[:, 0]


def _axis_nodes(half_width: float, nodes_per_axis: int) -> np.ndarray:
    # Mirror the positive half so node pairing v <-> -v is exact in floats.
    h = 2.0 * half_width / nodes_per_axis
    positive = (np.arange(nodes_per_axis // 2) + 0.5) * h
    return np.concatenate([-positive[::-1], positive])


def build_velocity_grid(dim: int, half_width: float, nodes_per_axis: int) -> VelocityGrid:
    """Build the lattice; rejects shapes that break symmetry or truncation.

    The node count per axis must be even (no origin node, exact +-v
    pairing) and the half width at least 4 thermal units so the
    discarded Gaussian tail stays negligible.
    """
    if dim not in (1, 2):
        raise ValueError(f"velocity dimension must be 1 or 2, got {dim}")
    if nodes_per_axis % 2 != 0:
        raise ValueError(f"nodes_per_axis must be even, got {nodes_per_axis}")
    if nodes_per_axis < 8:
        raise ValueError(f"nodes_per_axis must be >= 8, got {nodes_per_axis}")
    if half_width < 4.0:
        raise ValueError(f"half_width must be >= 4, got {half_width}")

    axis = _axis_nodes(half_width, nodes_per_axis)
    if dim == 1:
        nodes = axis[:, None]
    else:
        va, vb = np.meshgrid(axis, axis, indexing="ij")
        nodes = np.column_stack([va.ravel(), vb.ravel()])

    h = 2.0 * half_width / nodes_per_axis
    weights = np.full(nodes.shape[0], h**dim)
    speed_sq = np.sum(nodes * nodes, axis=1)
    maxwellian = GAUSS_NORM**dim * np.exp(-0.5 * speed_sq)
    tail_mass = 1.0 - math.erf(half_width / math.sqrt(2.0)) ** dim
    return VelocityGrid(
        dim=dim,
        half_width=float(half_width),
        nodes_per_axis=int(nodes_per_axis),
        nodes=nodes,
        weights=weights,
        maxwellian=maxwellian,
        tail_mass=tail_mass,
    )


def integrate(values: np.ndarray, grid: VelocityGrid) -> np.ndarray | float:
    """Midpoint quadrature over velocity: sum(values * weights).

    `values` may carry leading batch axes (e.g. one row per spatial
    cell); the node axis must be last. The mirror partners v and -v sit
    at index i and n-1-i, and their contributions are added first, so
    odd integrands cancel exactly rather than to rounding. The
    remaining reduction is numpy's pairwise summation, deterministic
    regardless of threading.
    """
    values = np.asarray(values)
    if values.shape[-1] != grid.n_nodes:
        raise ValueError(
            f"got {values.shape[-1]} values for {grid.n_nodes} velocity nodes"
        )
    terms = values * grid.weights
    half = grid.n_nodes // 2
    folded = terms[..., :half] + terms[..., ::-1][..., :half]
    out = np.sum(folded, axis=-1)
    return float(out) if out.ndim == 0 else out
