"""Particle lattices and the reference-configuration neighbour table."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix, diags
from scipy.spatial import cKDTree

log = logging.getLogger(__name__)

KAPPA = 2.0


class DomainError(ValueError):
    pass


@dataclass
class ParticleDomain:
    ref_positions: np.ndarray
    volumes: np.ndarray
    masses: np.ndarray
    ref_density: float
    smoothing_length: float
    spacing: float
    box_min: np.ndarray
    box_max: np.ndarray

    @property
    def count(self) -> int:
        return self.ref_positions.shape[0]

    @property
    def dim(self) -> int:
        return self.ref_positions.shape[1]

    @property
    def support_radius(self) -> float:
        return KAPPA * self.smoothing_length

    def with_density(self, rho: float) -> "ParticleDomain":
        return ParticleDomain(
            self.ref_positions, self.volumes, rho * self.volumes, float(rho),
            self.smoothing_length, self.spacing, self.box_min, self.box_max)

    def face(self, axis: int, side: str, tol: float = 0.51) -> np.ndarray:
        """Indices of particles within ``tol * spacing`` of a box face."""
        X = self.ref_positions[:, axis]
        target = self.box_min[axis] if side == "min" else self.box_max[axis]
        return np.flatnonzero(np.abs(X - target) < tol * self.spacing)


def generate_lattice(extents, spacing, *, origin=None, h_ratio=1.0,
                     smoothing_length=None, density=1.0, placement="cell"):
    """Uniform rectilinear lattice filling ``origin + [0, extents]``.

    ``placement="cell"`` puts one particle at the centre of every cell with
    volume ``spacing**dim``.  ``placement="node"`` puts particles on the grid
    vertices (including the boundary) and trims boundary volumes so that they
    still sum to the box volume.
    """
    extents = np.atleast_1d(np.asarray(extents, dtype=float))
    dim = extents.size
    if dim not in (1, 2, 3):
        raise DomainError(f"dimension must be 1, 2 or 3, got {dim}")
    if not spacing > 0:
        raise DomainError(f"spacing must be positive, got {spacing}")
    ncell = np.rint(extents / spacing).astype(int)
    if np.any(ncell < 1) or np.any(np.abs(ncell * spacing - extents) > 1e-9 * extents):
        raise DomainError(
            f"extents {extents.tolist()} are not integer multiples of spacing {spacing}")
    origin = np.zeros(dim) if origin is None else np.asarray(origin, dtype=float)

    axes, weights = [], []
    for n in ncell:
        if placement == "cell":
            axes.append((np.arange(n) + 0.5) * spacing)
            weights.append(np.full(n, spacing))
        elif placement == "node":
            axes.append(np.arange(n + 1) * spacing)
            w = np.full(n + 1, spacing)
            w[[0, -1]] *= 0.5
            weights.append(w)
        else:
            raise DomainError(f"unknown placement {placement!r}")
    grids = np.meshgrid(*axes, indexing="ij")
    X = np.stack([g.ravel() for g in grids], axis=1) + origin
    wgrids = np.meshgrid(*weights, indexing="ij")
    V = np.prod(np.stack([w.ravel() for w in wgrids], axis=1), axis=1)

    h = float(smoothing_length) if smoothing_length is not None else h_ratio * spacing
    return ParticleDomain(
        ref_positions=X, volumes=V, masses=density * V, ref_density=float(density),
        smoothing_length=h, spacing=float(spacing),
        box_min=origin.copy(), box_max=origin + extents)


@dataclass
class NeighborTable:
    """Flat pair list sorted by ``i``; every particle owns its self pair.

    ``offsets[i]:offsets[i+1]`` is the slice of pairs centred on particle
    ``i``.  ``reverse[k]`` is the index of the pair ``(j, i)`` for pair
    ``k = (i, j)``.
    """
    i: np.ndarray
    j: np.ndarray
    offsets: np.ndarray
    reverse: np.ndarray
    r0: np.ndarray
    unit: np.ndarray
    n: int

    @property
    def self_mask(self) -> np.ndarray:
        return self.i == self.j

    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def sets(self) -> list[set[int]]:
        return [set(self.j[a:b].tolist()) for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    def sum(self, values: np.ndarray) -> np.ndarray:
        """Per-particle sum of per-pair ``values`` (leading axis = pairs)."""
        return np.add.reduceat(values, self.offsets[:-1], axis=0)

    def matrix(self, weights: np.ndarray, *, difference: bool = False):
        """Sparse operator ``f -> sum_j w_ij f_j``.

        With ``difference=True`` the operator is ``sum_j w_ij (f_j - f_i)``.
        """
        A = csr_matrix((np.asarray(weights, float), self.j, self.offsets),
                       shape=(self.n, self.n))
        if difference:
            A = (A - diags(np.asarray(A.sum(axis=1)).ravel())).tocsr()
        return A


def _table_from_pairs(X, a, b):
    n = X.shape[0]
    idx = np.arange(n)
    pi = np.concatenate([a, b, idx])
    pj = np.concatenate([b, a, idx])
    order = np.lexsort((pj, pi))
    pi, pj = pi[order], pj[order]
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(pi, minlength=n), out=offsets[1:])

    key = pi.astype(np.int64) * n + pj
    reverse = np.searchsorted(key, pj.astype(np.int64) * n + pi)

    d = X[pj] - X[pi]
    r0 = np.linalg.norm(d, axis=1)
    unit = np.zeros_like(d)
    nz = pi != pj
    if np.any(r0[nz] == 0.0):
        raise DomainError("coincident particles in neighbour table")
    unit[nz] = d[nz] / r0[nz, None]
    return NeighborTable(pi, pj, offsets, reverse, r0, unit, n)


def build_neighbors(domain: ParticleDomain) -> NeighborTable:
    """Neighbour pairs with ``|X_j - X_i| < R`` (strict), self included."""
    X = domain.ref_positions
    R = domain.support_radius
    pairs = cKDTree(X).query_pairs(R, output_type="ndarray")
    if pairs.size:
        dist = np.linalg.norm(X[pairs[:, 0]] - X[pairs[:, 1]], axis=1)
        pairs = pairs[dist < R]
    else:
        pairs = np.zeros((0, 2), dtype=np.int64)
    table = _table_from_pairs(X, pairs[:, 0].astype(np.int64), pairs[:, 1].astype(np.int64))
    lonely = np.flatnonzero(table.counts() == 1)
    if lonely.size and domain.count > 1:
        log.warning("%d particles have no neighbours besides themselves (first: %d)",
                    lonely.size, lonely[0])
    return table


def brute_force_neighbors(X: np.ndarray, R: float) -> list[set[int]]:
    """O(N^2) reference scan; used as a test oracle."""
    out = []
    for i in range(X.shape[0]):
        d = np.sqrt(((X - X[i]) ** 2).sum(axis=1))
        s = set(np.flatnonzero(d < R).tolist())
        s.add(i)
        out.append(s)
    return out
