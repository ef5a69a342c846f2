"""Cubic B-spline kernel and its corrected variants.

All pair quantities follow the convention ``x_ij = x_i - x_j`` and
``grad W_i(x_j) = dW/dr * x_ij / r``, i.e. gradients are taken with respect
to the evaluation point ``x_i`` with the sample positions held fixed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import KAPPA, NeighborTable, ParticleDomain

COND_LIMIT = 1e12


class SingularNeighborhoodError(RuntimeError):
    def __init__(self, index, what="moment matrix"):
        self.index = int(index)
        super().__init__(f"singular {what} at particle/point {self.index}")


def sigma(dim: int, h: float) -> float:
    if dim == 1:
        return 2.0 / (3.0 * h)
    if dim == 2:
        return 10.0 / (7.0 * np.pi * h**2)
    if dim == 3:
        return 1.0 / (np.pi * h**3)
    raise ValueError(f"unsupported dimension {dim}")


def eval_kernel(r, h, dim=1):
    q = np.asarray(r, dtype=float) / h
    w = np.where(q < 1.0, 1.0 - 1.5 * q**2 + 0.75 * q**3,
                 np.where(q < 2.0, 0.25 * (2.0 - q) ** 3, 0.0))
    return sigma(dim, h) * w


def kernel_dr(r, h, dim=1):
    """dW/dr."""
    q = np.asarray(r, dtype=float) / h
    dw = np.where(q < 1.0, -3.0 * q + 2.25 * q**2,
                  np.where(q < 2.0, -0.75 * (2.0 - q) ** 2, 0.0))
    return sigma(dim, h) * dw / h


def kernel_d2r(r, h, dim=1):
    """d2W/dr2 (discontinuous at q = 1 and q = 2; one-sided from below)."""
    q = np.asarray(r, dtype=float) / h
    d2 = np.where(q < 1.0, -3.0 + 4.5 * q,
                  np.where(q < 2.0, 1.5 * (2.0 - q), 0.0))
    return sigma(dim, h) * d2 / h**2


def eval_kernel_gradient(xi, xj, h):
    xij = np.atleast_1d(np.asarray(xi, float) - np.asarray(xj, float))
    dim = xij.shape[-1]
    r = np.linalg.norm(xij, axis=-1, keepdims=True)
    dwdr = kernel_dr(r, h, dim)
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.where(r > 0, dwdr * xij / np.where(r > 0, r, 1.0), 0.0)
    return g


def eval_radial_laplacian(xi, xj, h):
    xij = np.atleast_1d(np.asarray(xi, float) - np.asarray(xj, float))
    dim = xij.shape[-1]
    r = np.linalg.norm(xij, axis=-1)
    d2 = kernel_d2r(r, h, dim)
    safe = np.where(r > 0, r, 1.0)
    return np.where(r > 0, d2 + (dim - 1) * kernel_dr(r, h, dim) / safe, dim * d2)


def _segment_sum(values, offsets):
    return np.add.reduceat(values, offsets[:-1], axis=0)


def _check_cond(M, what):
    cond = np.linalg.cond(M)
    bad = np.flatnonzero(~np.isfinite(cond) | (cond > COND_LIMIT))
    if bad.size:
        raise SingularNeighborhoodError(bad[0], what)
    return cond


@dataclass
class FirstOrderTerms:
    alpha: np.ndarray
    beta: np.ndarray
    W1: np.ndarray
    phi: np.ndarray
    vphi: np.ndarray
    Phi: np.ndarray
    cond: np.ndarray


def first_order_terms(xij, V, W, offsets, owner):
    """Solve for alpha, beta and the first-order corrected kernel on a pair list.

    ``xij`` are centre-minus-sample vectors, ``owner`` the centre index of
    every pair and ``offsets`` the segment boundaries.
    """
    VW = V * W
    phi = _segment_sum(VW, offsets)
    if np.any(phi <= 0):
        raise SingularNeighborhoodError(np.flatnonzero(phi <= 0)[0], "zeroth moment")
    vphi = _segment_sum(VW[:, None] * xij, offsets)
    Phi = _segment_sum(VW[:, None, None] * xij[:, :, None] * xij[:, None, :], offsets)
    cond = _check_cond(Phi, "second moment")
    c = np.linalg.solve(Phi, vphi[..., None])[..., 0]
    beta = -c
    alpha = 1.0 / (phi - np.einsum("nk,nk->n", c, vphi))
    W1 = alpha[owner] * (1.0 + np.einsum("pk,pk->p", beta[owner], xij)) * W
    return FirstOrderTerms(alpha, beta, W1, phi, vphi, Phi, cond)


def first_order_gradient(xij, V, W, gW, offsets, owner, terms: FirstOrderTerms):
    """Gradient of the first-order corrected kernel by the full moment chain."""
    d = xij.shape[1]
    eye = np.eye(d)
    VW = V * W
    Vg = V[:, None] * gW
    dphi = _segment_sum(Vg, offsets)                                   # [k]
    dvphi = _segment_sum(Vg[:, :, None] * xij[:, None, :]
                         + VW[:, None, None] * eye, offsets)           # [k, l]
    xx = xij[:, :, None] * xij[:, None, :]
    xe = xij[:, None, :, None] * eye[None, :, None, :]                 # x_l d_mk -> [k,l,m]
    ex = eye[None, :, :, None] * xij[:, None, None, :]                 # d_lk x_m
    dPhi = _segment_sum(Vg[:, :, None, None] * xx[:, None, :, :]
                        + VW[:, None, None, None] * (xe + ex), offsets)  # [k, l, m]

    Phi_inv = np.linalg.inv(terms.Phi)
    c = np.einsum("nlm,nm->nl", Phi_inv, terms.vphi)
    a = terms.alpha
    dalpha = -a[:, None] ** 2 * (dphi
                                 - 2.0 * np.einsum("nl,nkl->nk", c, dvphi)
                                 + np.einsum("nl,nklm,nm->nk", c, dPhi, c))
    dbeta = (-np.einsum("nlm,nkm->nkl", Phi_inv, dvphi)
             + np.einsum("nlm,nkmq,nq->nkl", Phi_inv, dPhi, c))        # d_k beta_l

    ao = a[owner]
    bx = 1.0 + np.einsum("pk,pk->p", terms.beta[owner], xij)
    grad = (ao[:, None] * bx[:, None] * gW
            + (bx * W)[:, None] * dalpha[owner]
            + (ao * W)[:, None] * (np.einsum("pkl,pl->pk", dbeta[owner], xij)
                                   + terms.beta[owner]))
    return grad, dalpha, dbeta


@dataclass
class CorrectionState:
    """Per-particle correction coefficients and per-pair corrected kernels.

    Computed once in the reference configuration and never updated.
    """
    W: np.ndarray
    gradW: np.ndarray
    lapW: np.ndarray
    # first-order correction
    phi: np.ndarray
    vphi: np.ndarray
    Phi: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    dalpha: np.ndarray
    dbeta: np.ndarray
    W1: np.ndarray
    gradW1: np.ndarray
    cond_Phi: np.ndarray
    # zeroth-order correction plus gradient matrix
    W0: np.ndarray
    gamma: np.ndarray
    gradW0: np.ndarray
    L: np.ndarray
    gradW0c: np.ndarray
    cond_L: np.ndarray
    # corrected Laplacian: lapc = scale * (lapW - shift * W0)
    lap_scale: np.ndarray
    lap_shift: np.ndarray
    lapc: np.ndarray

    def gradient(self, variant: str = "W1") -> np.ndarray:
        if variant in ("W1", "first"):
            return self.gradW1
        if variant in ("W0", "zeroth"):
            return self.gradW0c
        raise ValueError(f"unknown kernel variant {variant!r}")

    def weights(self, variant: str = "W1") -> np.ndarray:
        if variant in ("W1", "first"):
            return self.W1
        if variant in ("W0", "zeroth"):
            return self.W0
        raise ValueError(f"unknown kernel variant {variant!r}")


def _pair_geometry(domain: ParticleDomain, nb: NeighborTable):
    X = domain.ref_positions
    xij = X[nb.i] - X[nb.j]
    h, dim = domain.smoothing_length, domain.dim
    W = eval_kernel(nb.r0, h, dim)
    gW = eval_kernel_gradient(X[nb.i], X[nb.j], h)
    lap = eval_radial_laplacian(X[nb.i], X[nb.j], h)
    return xij, W, gW, lap


def compute_zeroth_correction(domain, nb):
    """Returns ``(W0, gamma, gradW0)``.

    ``gradW0`` is the exact derivative of ``W / sum(V W)``, i.e.
    ``(grad W - W gamma) / sum(V W)``.
    """
    xij, W, gW, _ = _pair_geometry(domain, nb)
    return _zeroth(domain.volumes[nb.j], W, gW, nb)


def _zeroth(V, W, gW, nb):
    phi = nb.sum(V * W)
    bad = np.flatnonzero(phi <= 0)
    if bad.size:
        raise SingularNeighborhoodError(bad[0], "zeroth moment")
    gamma = nb.sum(V[:, None] * gW) / phi[:, None]
    W0 = W / phi[nb.i]
    gradW0 = (gW - W[:, None] * gamma[nb.i]) / phi[nb.i, None]
    return W0, gamma, gradW0


def compute_gradient_correction(domain, nb):
    """Returns ``(L, corrected gradW0)``."""
    xij, W, gW, _ = _pair_geometry(domain, nb)
    V = domain.volumes[nb.j]
    _, _, gradW0 = _zeroth(V, W, gW, nb)
    return _gradient_matrix(V, xij, gradW0, nb)[:2]


def _gradient_matrix(V, xij, gradW0, nb):
    M = nb.sum(V[:, None, None] * (-xij)[:, :, None] * gradW0[:, None, :])
    cond = _check_cond(M, "gradient moment matrix")
    # sum V (x_j - x_i) (x) (L g) = M L^T must equal I
    L = np.linalg.inv(M).transpose(0, 2, 1)
    return L, np.einsum("pkl,pl->pk", L[nb.i], gradW0), cond


def compute_first_order_correction(domain, nb):
    xij, W, _, _ = _pair_geometry(domain, nb)
    return first_order_terms(xij, domain.volumes[nb.j], W, nb.offsets, nb.i)


def compute_first_order_gradient(domain, nb):
    xij, W, gW, _ = _pair_geometry(domain, nb)
    V = domain.volumes[nb.j]
    terms = first_order_terms(xij, V, W, nb.offsets, nb.i)
    return first_order_gradient(xij, V, W, gW, nb.offsets, nb.i, terms)[0]


def _laplacian(V, xij, lapW, W0, nb):
    """Per-particle affine correction ``scale * (lapW - shift * W0)``.

    ``shift`` makes constants map to zero and ``scale`` makes
    ``|X - X_i|^2`` map to ``2 dim``.  Linear fields are reproduced only
    where the stencil is symmetric.
    """
    dim = xij.shape[1]
    shift = nb.sum(V * lapW)
    r2 = np.einsum("pk,pk->p", xij, xij)
    raw = lapW - shift[nb.i] * W0
    denom = nb.sum(V * r2 * raw)
    ref = nb.sum(V * r2 * np.abs(lapW)) + 1e-300
    bad = np.flatnonzero(np.abs(denom) <= 1e-12 * ref)
    if bad.size:
        raise SingularNeighborhoodError(bad[0], "Laplacian correction system")
    scale = 2.0 * dim / denom
    return scale, shift, scale[nb.i] * raw


def compute_corrected_laplacian(domain, nb):
    xij, W, gW, lap = _pair_geometry(domain, nb)
    V = domain.volumes[nb.j]
    W0, _, _ = _zeroth(V, W, gW, nb)
    return _laplacian(V, xij, lap, W0, nb)[2]


def compute_corrections(domain: ParticleDomain, nb: NeighborTable) -> CorrectionState:
    xij, W, gW, lap = _pair_geometry(domain, nb)
    V = domain.volumes[nb.j]
    terms = first_order_terms(xij, V, W, nb.offsets, nb.i)
    gradW1, dalpha, dbeta = first_order_gradient(xij, V, W, gW, nb.offsets, nb.i, terms)
    W0, gamma, gradW0 = _zeroth(V, W, gW, nb)
    L, gradW0c, cond_L = _gradient_matrix(V, xij, gradW0, nb)
    scale, shift, lapc = _laplacian(V, xij, lap, W0, nb)
    return CorrectionState(
        W=W, gradW=gW, lapW=lap,
        phi=terms.phi, vphi=terms.vphi, Phi=terms.Phi, alpha=terms.alpha,
        beta=terms.beta, dalpha=dalpha, dbeta=dbeta, W1=terms.W1, gradW1=gradW1,
        cond_Phi=terms.cond,
        W0=W0, gamma=gamma, gradW0=gradW0, L=L, gradW0c=gradW0c, cond_L=cond_L,
        lap_scale=scale, lap_shift=shift, lapc=lapc)


def correction_table(corr: CorrectionState) -> dict[str, np.ndarray]:
    """Per-particle debugging columns for the CSV dump."""
    return {
        "alpha": corr.alpha,
        "beta_norm": np.linalg.norm(corr.beta, axis=1),
        "cond_Phi": corr.cond_Phi,
        "cond_L_moment": corr.cond_L,
    }


def support_radius(h: float) -> float:
    return KAPPA * h
