"""Nearly incompressible Neo-Hookean material.

Two-dimensional deformation gradients are treated as plane strain: they are
padded to 3x3 with ``F33 = 1`` before evaluating the constitutive law and the
in-plane block of the result is returned.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class InversionError(RuntimeError):
    """Raised when det(F) <= 0."""

    def __init__(self, index, det, time=None):
        self.index = int(index)
        self.det = float(det)
        self.time = time
        where = "" if time is None else f" at t={time:.6g}"
        super().__init__(f"inverted deformation gradient at particle {self.index}"
                         f" (det={self.det:.6g}){where}")


@dataclass(frozen=True)
class NeoHookeanParams:
    youngs_modulus: float
    poisson_ratio: float
    ref_density: float
    shear_modulus: float = field(init=False)
    lame_lambda: float = field(init=False)
    bulk_modulus: float = field(init=False)
    pwave_speed: float = field(init=False)

    def __post_init__(self):
        E, nu, rho = self.youngs_modulus, self.poisson_ratio, self.ref_density
        if not (0.0 <= nu < 0.5):
            raise ValueError(f"Poisson ratio must be in [0, 0.5), got {nu}")
        if E <= 0 or rho <= 0:
            raise ValueError("Young's modulus and density must be positive")
        mu = E / (2.0 * (1.0 + nu))
        lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        object.__setattr__(self, "shear_modulus", mu)
        object.__setattr__(self, "lame_lambda", lam)
        object.__setattr__(self, "bulk_modulus", lam + 2.0 * mu / 3.0)
        object.__setattr__(self, "pwave_speed", float(np.sqrt((lam + 2.0 * mu) / rho)))


def _pad3(F):
    F = np.asarray(F, dtype=float)
    d = F.shape[-1]
    if d == 3:
        return F
    out = np.zeros(F.shape[:-2] + (3, 3))
    out[..., 2, 2] = 1.0
    out[..., :d, :d] = F
    if d == 1:
        out[..., 1, 1] = 1.0
    return out


def cofactor3(F):
    """Cofactor matrix of a stack of 3x3 matrices, ``det(F) F^-T``."""
    a, b, c = F[..., 0, :], F[..., 1, :], F[..., 2, :]
    return np.stack([np.cross(b, c), np.cross(c, a), np.cross(a, b)], axis=-2)


def det3(F):
    return np.einsum("...i,...i->...", F[..., 0, :], np.cross(F[..., 1, :], F[..., 2, :]))


def _check_det(J, time=None):
    J = np.atleast_1d(J)
    bad = np.flatnonzero(~(J > 0))
    if bad.size:
        raise InversionError(bad[0], J.ravel()[bad[0]], time)


def first_piola(F, params: NeoHookeanParams):
    """P = p J F^-T + mu J^(-2/3) (F - (F:F)/3 F^-T), with p = kappa (J - 1)."""
    d = np.shape(F)[-1]
    F3 = _pad3(F)
    cof = cofactor3(F3)
    J = np.einsum("...ij,...ij->...", F3, cof) / 3.0
    _check_det(J)
    FinvT = cof / J[..., None, None]
    I1 = np.einsum("...ij,...ij->...", F3, F3)
    p = params.bulk_modulus * (J - 1.0)
    P = (p * J)[..., None, None] * FinvT + (
        params.shear_modulus * J ** (-2.0 / 3.0))[..., None, None] * (
        F3 - (I1 / 3.0)[..., None, None] * FinvT)
    return P[..., :d, :d]


def stress_energy_density(F, params: NeoHookeanParams):
    """Potential whose F-derivative is :func:`first_piola`."""
    F3 = _pad3(F)
    J = np.linalg.det(F3)
    _check_det(J)
    I1 = np.einsum("...ij,...ij->...", F3, F3)
    return (0.5 * params.shear_modulus * (J ** (-2.0 / 3.0) * I1 - 3.0)
            + 0.5 * params.bulk_modulus * (J - 1.0) ** 2)


def cauchy_from_piola(P, F):
    """sigma = P F^T / J, symmetrised.

    For 2D input only the in-plane block is returned; use
    :func:`cauchy_stress` for the plane-strain out-of-plane component.
    """
    d = np.shape(F)[-1]
    F3 = _pad3(F)
    J = np.linalg.det(F3)
    _check_det(J)
    P3 = np.zeros(F3.shape)
    P3[..., :d, :d] = P
    s = np.einsum("...ik,...jk->...ij", P3, F3) / J[..., None, None]
    asym = 0.5 * (s - s.swapaxes(-1, -2))
    scale = np.linalg.norm(s, axis=(-2, -1))
    an = np.linalg.norm(asym, axis=(-2, -1))
    if np.any(an > 1e-8 * np.maximum(scale, 1e-300)):
        log.debug("Cauchy stress asymmetry up to %.3g", float(np.max(an)))
    out = 0.5 * (s + s.swapaxes(-1, -2))
    return out[..., :d, :d]


def cauchy_stress(F, params: NeoHookeanParams):
    """Full 3x3 Cauchy stress including the plane-strain out-of-plane term."""
    F3 = _pad3(F)
    return cauchy_from_piola(first_piola(F3, params), F3)


def von_mises(sigma):
    s = np.asarray(sigma, dtype=float)
    if s.shape[-1] == 2:
        s = _pad3(s)
        s[..., 2, 2] = 0.0
    dev = s - np.trace(s, axis1=-2, axis2=-1)[..., None, None] / 3.0 * np.eye(3)
    return np.sqrt(1.5 * np.einsum("...ij,...ij->...", dev, dev))


def strain_energy_density(F, params: NeoHookeanParams):
    """mu/2 (I1 - 3 - 2 ln J) + lambda/2 (J - 1)^2, per unit reference volume."""
    F3 = _pad3(F)
    J = np.linalg.det(F3)
    _check_det(J)
    I1 = np.einsum("...ij,...ij->...", F3, F3)
    return (0.5 * params.shear_modulus * (I1 - 3.0 - 2.0 * np.log(J))
            + 0.5 * params.lame_lambda * (J - 1.0) ** 2)


def strain_energy_particle(F, params: NeoHookeanParams, V0):
    return strain_energy_density(F, params) * V0
