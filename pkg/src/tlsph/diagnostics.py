"""Error norms, conservation ledgers and convergence fits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .domain import ParticleDomain
from .kernel import eval_kernel, eval_kernel_gradient, first_order_gradient, first_order_terms
from .kinematics import DeformationState
from .material import NeoHookeanParams, strain_energy_particle


@dataclass
class QuadratureGrid:
    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def tensor(cls, box_min, box_max, tiles=10, gauss=5):
        """Gauss-Legendre rule with ``gauss`` points per tile per axis."""
        box_min = np.atleast_1d(np.asarray(box_min, float))
        box_max = np.atleast_1d(np.asarray(box_max, float))
        tiles = np.broadcast_to(tiles, box_min.shape)
        gx, gw = np.polynomial.legendre.leggauss(gauss)
        axes, wts = [], []
        for lo, hi, nt in zip(box_min, box_max, tiles):
            edges = np.linspace(lo, hi, nt + 1)
            half = 0.5 * np.diff(edges)
            mid = 0.5 * (edges[1:] + edges[:-1])
            axes.append((mid[:, None] + half[:, None] * gx).ravel())
            wts.append((half[:, None] * gw).ravel())
        P = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        Wt = np.prod(np.stack([g.ravel() for g in np.meshgrid(*wts, indexing="ij")], axis=1), axis=1)
        return cls(P, Wt)


class Interpolator:
    """First-order corrected SPH interpolation at arbitrary points.

    Correction coefficients are solved at each evaluation point, so affine
    fields are reproduced exactly.
    """

    def __init__(self, domain: ParticleDomain, points):
        points = np.atleast_2d(np.asarray(points, float))
        X = domain.ref_positions
        R = domain.support_radius
        lists = cKDTree(X).query_ball_point(points, R)
        owner, js = [], []
        for q, lst in enumerate(lists):
            lst = np.asarray(sorted(lst), dtype=np.int64)
            owner.append(np.full(lst.size, q, dtype=np.int64))
            js.append(lst)
        owner = np.concatenate(owner) if owner else np.zeros(0, np.int64)
        js = np.concatenate(js) if js else np.zeros(0, np.int64)
        xqj = points[owner] - X[js]
        r = np.linalg.norm(xqj, axis=1)
        keep = r < R
        owner, js, xqj, r = owner[keep], js[keep], xqj[keep], r[keep]
        counts = np.bincount(owner, minlength=len(points))
        if np.any(counts == 0):
            from .kernel import SingularNeighborhoodError
            raise SingularNeighborhoodError(np.flatnonzero(counts == 0)[0], "point neighbourhood")
        offsets = np.zeros(len(points) + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        W = eval_kernel(r, domain.smoothing_length, domain.dim)
        V = domain.volumes[js]
        terms = first_order_terms(xqj, V, W, offsets, owner)
        gW = eval_kernel_gradient(points[owner], X[js], domain.smoothing_length)
        grad = first_order_gradient(xqj, V, W, gW, offsets, owner, terms)[0]
        self.js = js
        self.offsets = offsets
        self.w = V * terms.W1
        self.gw = V[:, None] * grad

    def __call__(self, values):
        values = np.asarray(values, float)
        w = self.w.reshape((-1,) + (1,) * (values.ndim - 1))
        return np.add.reduceat(w * values[self.js], self.offsets[:-1], axis=0)

    def gradient(self, values):
        """Gradient of the interpolant; a trailing axis is appended."""
        values = np.asarray(values, float)
        g = self.gw.reshape((self.gw.shape[0],) + (1,) * (values.ndim - 1) + (-1,))
        return np.add.reduceat(values[self.js][..., None] * g, self.offsets[:-1], axis=0)


def sph_interpolate(points, values, domain: ParticleDomain):
    return Interpolator(domain, points)(values)


@dataclass(frozen=True)
class SwingingPlate:
    amplitude: float
    omega: float
    origin: tuple = (0.0, 0.0)

    @classmethod
    def for_material(cls, material: NeoHookeanParams, amplitude=0.01, origin=(0.0, 0.0)):
        return cls(amplitude, swinging_frequency(material), tuple(origin))


def swinging_frequency(material: NeoHookeanParams) -> float:
    return 0.5 * np.pi * np.sqrt(2.0 * material.shear_modulus / material.ref_density)


def swinging_analytic(X, t, plate: SwingingPlate):
    """Displacement, velocity and displacement gradient of the swinging mode.

    Returns arrays of shape (n, 2), (n, 2) and (n, 2, 2); the gradient is
    ``du_a/dX_b``.
    """
    X = np.atleast_2d(np.asarray(X, float)) - np.asarray(plate.origin)
    k = 0.5 * np.pi
    s1, c1 = np.sin(k * X[:, 0]), np.cos(k * X[:, 0])
    s2, c2 = np.sin(k * X[:, 1]), np.cos(k * X[:, 1])
    shape = np.stack([-s1 * c2, c1 * s2], axis=1)
    U, w = plate.amplitude, plate.omega
    u = U * np.sin(w * t) * shape
    v = U * w * np.cos(w * t) * shape
    grad = np.empty((X.shape[0], 2, 2))
    grad[:, 0, 0] = -k * c1 * c2
    grad[:, 0, 1] = k * s1 * s2
    grad[:, 1, 0] = -k * s1 * s2
    grad[:, 1, 1] = k * c1 * c2
    grad *= U * np.sin(w * t)
    return u, v, grad


def l2_error(u_exact, u_h, quad: QuadratureGrid):
    e = np.asarray(u_exact) - np.asarray(u_h)
    return float(np.sqrt(np.sum(quad.weights * np.sum(e * e, axis=1))))


def h1_seminorm_error(grad_exact, grad_h, quad: QuadratureGrid):
    e = np.asarray(grad_exact) - np.asarray(grad_h)
    return float(np.sqrt(np.sum(quad.weights * np.sum(e * e, axis=(1, 2)))))


def displacement_errors(state: DeformationState, Fc, domain, analytic, quad,
                        interp: Interpolator | None = None):
    """(L2, H1-seminorm) errors of particle displacement vs ``analytic(X, t)``.

    ``analytic`` returns ``(u, grad_u)`` at the quadrature points; the
    numerical gradient is interpolated from ``Fc - I``.
    """
    interp = interp or Interpolator(domain, quad.points)
    u_h = interp(state.x - domain.ref_positions)
    g_h = interp(Fc - np.eye(domain.dim))
    u, g = analytic(quad.points, state.t)
    return l2_error(u, u_h, quad), h1_seminorm_error(g, g_h, quad)


def fit_slope(h, err):
    """Least-squares slope of log(err) against log(h)."""
    h = np.asarray(h, float)
    err = np.asarray(err, float)
    if h.size < 2:
        raise ValueError("need at least two points for a slope")
    A = np.vstack([np.log(h), np.ones_like(h)]).T
    slope, _ = np.linalg.lstsq(A, np.log(err), rcond=None)[0]
    return float(slope)


LEDGER_COLUMNS = ("time", "px", "py", "pz", "angular", "kinetic", "strain", "total")


@dataclass
class ConservationLedger:
    center: np.ndarray
    rows: list = field(default_factory=list)

    def sample(self, state, domain, material, Fc):
        row = conservation_sample(state, domain, material, Fc, self.center)
        self.rows.append(row)
        return row

    def array(self):
        return np.array([[r[c] for c in LEDGER_COLUMNS] for r in self.rows])


def conservation_sample(state: DeformationState, domain: ParticleDomain,
                        material: NeoHookeanParams, Fc, center=None):
    m = domain.masses
    v = state.velocity(domain)
    d = domain.dim
    lin = (m[:, None] * v).sum(axis=0)
    c = np.zeros(d) if center is None else np.asarray(center, float)
    r = state.x - c
    if d == 2:
        ang = float(np.sum(m * (r[:, 0] * v[:, 1] - r[:, 1] * v[:, 0])))
    elif d == 3:
        # axial component (about X3); the full vector is rarely needed
        ang = float(np.sum(m * np.cross(r, v)[:, 2]))
    else:
        ang = 0.0
    ek = 0.5 * float(np.sum(m * np.sum(v * v, axis=1)))
    ws = float(np.sum(strain_energy_particle(Fc, material, domain.volumes)))
    p3 = np.zeros(3)
    p3[:d] = lin
    return {"time": state.t, "px": p3[0], "py": p3[1], "pz": p3[2], "angular": ang,
            "kinetic": ek, "strain": ws, "total": ek + ws,
            "momentum_abs": float(np.sum(m * np.linalg.norm(v, axis=1)))}
