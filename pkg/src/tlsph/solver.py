"""Right-hand side assembly, JST dissipation and three-stage explicit integration."""

from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .domain import NeighborTable, ParticleDomain, build_neighbors
from .kernel import CorrectionState, compute_corrections, kernel_dr
from .kinematics import BondGradient, DeformationState
from .material import InversionError, NeoHookeanParams, first_piola

log = logging.getLogger(__name__)

# a pair closer than this fraction of the smallest reference distance stops the run
COLLAPSE_RATIO = 1e-3


class InstabilityError(RuntimeError):
    def __init__(self, message, time=None):
        self.time = time
        super().__init__(message)


@dataclass
class JstParams:
    """JST coefficients.

    ``harmonic`` picks the Laplacian of the second-order term: ``corrected``
    reuses the corrected Laplacian of the biharmonic pass, ``bond`` uses
    non-negative radial pair weights. The corrected operator has positive
    eigenvalues on particle lattices, so with ``eta2 > 0`` it amplifies
    short-wavelength modes; ``bond`` is negative semi-definite.
    """
    eta2: float = 0.0
    eta4: float = 0.125
    harmonic: str = "corrected"

    def __post_init__(self):
        if self.eta2 < 0 or self.eta4 < 0:
            raise ValueError("JST coefficients must be non-negative")
        if self.harmonic not in ("corrected", "bond"):
            raise ValueError("harmonic Laplacian must be 'corrected' or 'bond'")


@dataclass
class BoundaryCondition:
    """Velocity constraint on the particles near one box face.

    ``kind`` is ``fixed`` (all axes zero), ``roller`` (face-normal axis zero)
    or ``velocity`` (all axes prescribed).
    """
    kind: str
    axis: int
    side: str = "min"
    velocity: Optional[tuple] = None


@dataclass
class Constraints:
    mask: np.ndarray
    velocity: np.ndarray

    @classmethod
    def none(cls, n, dim):
        return cls(np.zeros((n, dim), bool), np.zeros((n, dim)))

    @classmethod
    def from_conditions(cls, domain: ParticleDomain, conditions):
        n, d = domain.count, domain.dim
        c = cls.none(n, d)
        strong = np.zeros((n, d), bool)
        for bc in sorted(conditions, key=lambda b: b.kind != "roller"):
            idx = domain.face(bc.axis, bc.side)
            if bc.kind == "roller":
                free = ~strong[idx, bc.axis]
                c.mask[idx[free], bc.axis] = True
                c.velocity[idx[free], bc.axis] = 0.0
            elif bc.kind in ("fixed", "velocity"):
                v = np.zeros(d) if bc.kind == "fixed" else np.asarray(bc.velocity, float)
                if v.shape != (d,):
                    raise ValueError(f"prescribed velocity must have {d} components")
                c.mask[idx] = True
                strong[idx] = True
                c.velocity[idx] = v
            else:
                raise ValueError(f"unknown boundary condition kind {bc.kind!r}")
        return c


@dataclass
class Rates:
    dp: np.ndarray
    dF: np.ndarray
    dx: np.ndarray


class Solver:
    """Total-Lagrangian SPH solver with a fixed reference neighbour table.

    ``deformation`` selects the deformation gradient fed to the constitutive
    law: ``fullrank`` or ``kinematic`` bond-based corrected gradients, or
    ``standard`` (the evolved averaged gradient itself).  ``kernel`` selects
    the first-order corrected kernel (``W1``) or the zeroth-order kernel
    with corrected gradient (``W0``).
    """

    def __init__(self, domain: ParticleDomain, material: NeoHookeanParams,
                 jst: JstParams | None = None, alpha_cfl: float = 0.9,
                 constraints: Constraints | None = None, deformation: str = "fullrank",
                 kernel: str = "W1", source=None,
                 neighbors: NeighborTable | None = None,
                 corrections: CorrectionState | None = None):
        if not (0.0 < alpha_cfl <= 1.0):
            raise ValueError("alpha_cfl must lie in (0, 1]")
        self.domain = domain
        self.material = material
        self.jst = jst or JstParams()
        self.alpha_cfl = alpha_cfl
        self.deformation = deformation
        self.kernel = kernel
        self.nb = neighbors if neighbors is not None else build_neighbors(domain)
        self.corr = corrections if corrections is not None else compute_corrections(domain, self.nb)
        n, d = domain.count, domain.dim
        self.constraints = constraints or Constraints.none(n, d)
        self.source = np.zeros((n, d)) if source is None else np.broadcast_to(source, (n, d))
        self.rho = domain.masses / domain.volumes

        nb = self.nb
        g = self.corr.gradient(kernel)
        Vj = domain.volumes[nb.j]
        self._Vj = Vj
        # antisymmetrised pair gradient, weighted by V_j / 2
        self._G = 0.5 * Vj[:, None] * (g - g[nb.reverse])
        self._Gsum = nb.sum(self._G)
        self._gF = (Vj / self.rho[nb.j])[:, None] * g
        lap = self.corr.lapc
        lap_sym = 0.5 * (lap + lap[nb.reverse])
        # JST Laplacian p -> sum_j V_j (p_j - p_i) lap_sym_ij, used in both
        # passes so the biharmonic operator is a negative semi-definite square
        self._LapSym = nb.matrix(Vj * lap_sym, difference=True)
        # gradient operators, one per reference axis
        d = domain.dim
        self._Gop = [nb.matrix(self._G[:, b]) for b in range(d)]
        self._gFop = [nb.matrix(self._gF[:, b]) for b in range(d)]
        self.h_min = float(domain.smoothing_length)
        self.bond = BondGradient(domain, nb, self.corr, kernel)
        self._offdiag = ~nb.self_mask
        self._r0_min = float(nb.r0[self._offdiag].min()) if self._offdiag.any() else 0.0
        self._LapHarm = (self._bond_laplacian() if self.jst.harmonic == "bond"
                         else self._LapSym)

    def _bond_laplacian(self):
        """Pair weights -2 W'(r)/r, scaled per particle so sum V r^2 w = 2 dim."""
        nb, dom = self.nb, self.domain
        off = self._offdiag
        r = np.where(off, nb.r0, 1.0)
        psi = np.where(off, -2.0 * kernel_dr(nb.r0, dom.smoothing_length, dom.dim) / r, 0.0)
        a = 2 * dom.dim / nb.sum(self._Vj * nb.r0**2 * psi)
        w = a[nb.i] * psi
        return nb.matrix(self._Vj * 0.5 * (w + w[nb.reverse]), difference=True)

    # -- state helpers
    def initial_state(self, velocity=None) -> DeformationState:
        s = DeformationState.undeformed(self.domain, velocity)
        self.impose(s)
        return s

    def impose(self, state: DeformationState):
        m = self.constraints.mask
        if m.any():
            state.p[m] = (self.rho[:, None] * self.constraints.velocity)[m]

    # -- operators
    def deformation_gradient(self, state: DeformationState):
        Fc = self.bond(state.F, state.x, self.deformation)
        J = np.linalg.det(Fc)
        bad = np.flatnonzero(~(J > 0))
        if bad.size:
            raise InversionError(bad[0], J[bad[0]], state.t)
        return Fc

    def stress(self, state: DeformationState, Fc=None):
        Fc = self.deformation_gradient(state) if Fc is None else Fc
        return first_piola(Fc, self.material)

    def jst_dissipation(self, p):
        eta2, eta4 = self.jst.eta2, self.jst.eta4
        if eta2 == 0.0 and eta4 == 0.0:
            return np.zeros_like(p)
        Cp, h = self.material.pwave_speed, self.h_min
        out = np.zeros_like(p)
        if eta2:
            out += eta2 * Cp * h * (self._LapHarm @ p)
        if eta4:
            out -= eta4 * Cp * h**3 * (self._LapSym @ (self._LapSym @ p))
        return out

    def momentum_rate(self, state: DeformationState, P=None):
        P = self.stress(state) if P is None else P
        own = np.einsum("nab,nb->na", P, self._Gsum)
        other = sum(G @ P[:, :, b] for b, G in enumerate(self._Gop))
        return self.source + own + other + self.jst_dissipation(state.p)

    def deformation_rate(self, state: DeformationState):
        return np.stack([G @ state.p for G in self._gFop], axis=-1)

    def rhs(self, state: DeformationState) -> Rates:
        P = self.stress(state)
        dp = self.momentum_rate(state, P)
        dF = self.deformation_rate(state)
        dx = state.p / self.rho[:, None]
        m = self.constraints.mask
        if m.any():
            dp[m] = 0.0
            dx[m] = self.constraints.velocity[m]
        return Rates(dp, dF, dx)

    def cfl_timestep(self, state: DeformationState) -> float:
        nb = self.nb
        off = self._offdiag
        if not off.any():
            raise InstabilityError("no particle pairs to bound the time step", state.t)
        r = np.linalg.norm(state.x[nb.j[off]] - state.x[nb.i[off]], axis=1)
        rmin = float(r.min())
        dt = self.alpha_cfl * rmin / self.material.pwave_speed
        if not np.isfinite(dt) or dt <= 0.0:
            raise InstabilityError(f"non-positive time step {dt}", state.t)
        if rmin < COLLAPSE_RATIO * self._r0_min:
            # particles have interpenetrated; the step would shrink without bound
            raise InstabilityError(
                f"particle pair collapsed to {rmin:.3g} m (reference {self._r0_min:.3g} m)"
                f" at t={state.t:.6g}", state.t)
        return dt

    # -- integration
    def _stage(self, base, a, cur, dt, t):
        r = self.rhs(cur)
        # a base + (1 - a)(cur + dt r), written as an increment on base so
        # that a state with zero rates is reproduced exactly
        b = 1.0 - a
        out = DeformationState(
            base.p + b * ((cur.p - base.p) + dt * r.dp),
            base.F + b * ((cur.F - base.F) + dt * r.dF),
            base.x + b * ((cur.x - base.x) + dt * r.dx),
            t)
        self.impose(out)
        if not (np.isfinite(out.p).all() and np.isfinite(out.F).all()
                and np.isfinite(out.x).all()):
            raise InstabilityError(f"non-finite state at t={t:.6g}", t)
        return out

    def step(self, state: DeformationState, dt: float) -> DeformationState:
        """Three-stage strong-stability-preserving update of (p, F, x)."""
        if not dt > 0:
            raise ValueError("time step must be positive")
        # stage states carry the time at which they are consistent
        s1 = self._stage(state, 0.0, state, dt, state.t + dt)
        s2 = self._stage(state, 0.75, s1, dt, state.t + 0.5 * dt)
        s3 = self._stage(state, 1.0 / 3.0, s2, dt, state.t + dt)
        return s3


def ssp_rk3_step(f: Callable, u, t, dt):
    """Generic three-stage SSP update for ``du/dt = f(u, t)``."""
    u1 = u + dt * f(u, t)
    u2 = 0.75 * u + 0.25 * (u1 + dt * f(u1, t + dt))
    return u / 3.0 + 2.0 / 3.0 * (u2 + dt * f(u2, t + 0.5 * dt))


@dataclass
class RunResult:
    status: str                      # "finished" | "instability"
    state: DeformationState
    steps: int
    time: float
    wall_time: float
    message: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def exit_code(self):
        return 0 if self.status == "finished" else 2


def run(solver: Solver, state: DeformationState, t_end: float, *,
        output_every: int = 0, on_output: Callable | None = None,
        max_steps: int | None = None) -> RunResult:
    """Step until ``t_end`` or an instability.

    ``on_output(step, state)`` fires at step 0, every ``output_every`` steps,
    at the end, and on the last stable state before an instability.
    """
    wall0 = _time.perf_counter()
    steps = 0
    if on_output:
        on_output(0, state)
    last_out = 0
    status, message = "finished", ""
    try:
        while state.t < t_end * (1 - 1e-12):
            if max_steps is not None and steps >= max_steps:
                break
            dt = min(solver.cfl_timestep(state), t_end - state.t)
            new = solver.step(state, dt)
            if t_end - new.t < 1e-12 * t_end:
                new.t = t_end
            state = new
            steps += 1
            if on_output and output_every and steps % output_every == 0:
                on_output(steps, state)
                last_out = steps
    except (InstabilityError, InversionError) as exc:
        status, message = "instability", str(exc)
        log.info("run stopped at step %d: %s", steps, exc)
    if on_output and last_out != steps:
        on_output(steps, state)
    return RunResult(status, state, steps, state.t, _time.perf_counter() - wall0, message)
