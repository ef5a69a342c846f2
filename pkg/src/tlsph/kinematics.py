"""Deformation-gradient evolution and bond-based corrected deformation gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import NeighborTable, ParticleDomain
from .kernel import CorrectionState

VARIANTS = ("fullrank", "kinematic", "standard")


@dataclass
class DeformationState:
    p: np.ndarray       # momentum per unit reference volume, (N, dim)
    F: np.ndarray       # averaged deformation gradient, (N, dim, dim)
    x: np.ndarray       # current positions, (N, dim)
    t: float = 0.0

    @classmethod
    def undeformed(cls, domain: ParticleDomain, velocity=None):
        n, d = domain.count, domain.dim
        v = np.zeros((n, d)) if velocity is None else np.asarray(velocity, float)
        rho = domain.masses / domain.volumes
        return cls(p=rho[:, None] * v, F=np.tile(np.eye(d), (n, 1, 1)),
                   x=domain.ref_positions.copy(), t=0.0)

    def copy(self):
        return DeformationState(self.p.copy(), self.F.copy(), self.x.copy(), self.t)

    def velocity(self, domain: ParticleDomain):
        return self.p / (domain.masses / domain.volumes)[:, None]

    def displacement(self, domain: ParticleDomain):
        return self.x - domain.ref_positions


def deformation_gradient_rate(p, domain, nb: NeighborTable, corr: CorrectionState,
                              kernel="W1"):
    """dF_i/dt = sum_j V_j / rho_j p_j (x) grad W_i(X_j)."""
    g = corr.gradient(kernel)
    rho = domain.masses / domain.volumes
    coef = (domain.volumes / rho)[nb.j]
    return nb.sum(coef[:, None, None] * p[nb.j][:, :, None] * g[:, None, :])


def _bond(i, j, x, X):
    if i == j:
        return None
    dX = X[j] - X[i]
    r0 = np.linalg.norm(dX)
    if r0 == 0.0:
        raise ValueError(f"coincident reference positions for bond ({i}, {j})")
    e = dX / r0
    return (x[j] - x[i]) / r0, e


def bond_deformation_gradient_kinematic(i, j, x, X, F):
    """Rank-one pairwise gradient; the self bond returns ``F[i]``."""
    b = _bond(i, j, np.atleast_2d(x), np.atleast_2d(X))
    if b is None:
        return np.array(F[i], dtype=float)
    stretch, e = b
    return np.outer(stretch, e)


def bond_deformation_gradient_fullrank(i, j, x, X, F):
    """``F_i`` with its bond-direction column replaced by the observed stretch."""
    b = _bond(i, j, np.atleast_2d(x), np.atleast_2d(X))
    Fi = np.array(F[i], dtype=float)
    if b is None:
        return Fi
    stretch, e = b
    return Fi - np.outer(Fi @ e, e) + np.outer(stretch, e)


class BondGradient:
    """Kernel-weighted bond deformation gradient, vectorised over all pairs.

    With weights ``w_ij = V_j W1_i(X_j)`` (a partition of unity) the full-rank
    variant collapses to ``F_i (I - M_i) + B_i`` where
    ``M_i = sum_{j!=i} w_ij e_ij (x) e_ij`` is fixed by the reference
    configuration and ``B_i = sum_{j!=i} w_ij / r_ij (x_j - x_i) (x) e_ij``.
    """

    def __init__(self, domain: ParticleDomain, nb: NeighborTable,
                 corr: CorrectionState, kernel="W1"):
        self.nb = nb
        self.n = domain.count
        self.X = domain.ref_positions
        w = domain.volumes[nb.j] * corr.weights(kernel)
        other = ~nb.self_mask
        self.w_self = w[nb.self_mask]
        # self pairs carry zero coefficient and a zero unit vector
        self.coef = np.where(other, w / np.where(other, nb.r0, 1.0), 0.0)
        self.e = nb.unit
        e = self.e
        self.M = nb.sum(np.where(other, w, 0.0)[:, None, None] * e[:, :, None] * e[:, None, :])
        # B_i[:, b] = sum_j coef_ij e_ij[b] (x_j - x_i)
        self._ops = [nb.matrix(self.coef * e[:, b], difference=True)
                     for b in range(domain.dim)]

    def bond_term(self, x):
        return np.stack([A @ x for A in self._ops], axis=-1)

    def __call__(self, F, x, variant="fullrank"):
        if variant == "standard":
            return F
        # B(x) = M + B(x - X); working with displacements keeps the
        # undeformed state exact in floating point
        B = self.bond_term(x - self.X)
        if variant == "fullrank":
            return F - np.einsum("nab,nbc->nac", F - np.eye(F.shape[-1]), self.M) + B
        if variant == "kinematic":
            return self.w_self[:, None, None] * F + self.M + B
        raise ValueError(f"unknown deformation-gradient variant {variant!r}")


def corrected_deformation_gradient(F, x, domain, nb, corr, variant="fullrank", kernel="W1"):
    return BondGradient(domain, nb, corr, kernel)(F, x, variant)


# one-dimensional estimators

def gradient_1d_standard(samples, domain, nb, corr, kernel="W1"):
    """sum_j V_j x_j dW/dX with the corrected kernel gradient."""
    V = domain.volumes[nb.j]
    return nb.sum(V * samples[nb.j] * corr.gradient(kernel)[:, 0])


def _slopes(samples, domain, nb):
    X = domain.ref_positions[:, 0]
    other = ~nb.self_mask
    s = np.zeros(nb.i.size)
    s[other] = (samples[nb.j[other]] - samples[nb.i[other]]) / (X[nb.j[other]] - X[nb.i[other]])
    return s, other


def gradient_1d_bond_naive(samples, domain, nb, corr):
    """Average of pairwise slopes with zeroth-order weights, self bond omitted."""
    s, other = _slopes(samples, domain, nb)
    w = domain.volumes[nb.j] * corr.W0
    return nb.sum(np.where(other, w * s, 0.0))


def gradient_1d_bond_improved(samples, domain, nb, corr, kernel="W1"):
    """Pairwise slopes plus a self bond carrying the standard SPH estimate."""
    s, other = _slopes(samples, domain, nb)
    std = gradient_1d_standard(samples, domain, nb, corr, kernel)
    s[~other] = std[nb.i[~other]]
    w = domain.volumes[nb.j] * corr.weights(kernel)
    return nb.sum(w * s)
