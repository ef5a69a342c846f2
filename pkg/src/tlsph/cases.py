"""Benchmark case construction and the instrumented run loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import CaseConfig
from .diagnostics import (LEDGER_COLUMNS, Interpolator, QuadratureGrid, SwingingPlate,
                          conservation_sample, displacement_errors, fit_slope,
                          swinging_analytic)
from .domain import ParticleDomain, build_neighbors, generate_lattice
from .io import write_csv, write_snapshot
from .kernel import compute_corrections, correction_table
from .kinematics import (DeformationState, gradient_1d_bond_improved, gradient_1d_bond_naive,
                         gradient_1d_standard)
from .material import NeoHookeanParams, cauchy_stress, von_mises
from .solver import BoundaryCondition, Constraints, JstParams, Solver, run

log = logging.getLogger(__name__)

CASE_SUMMARY = {
    "swinging_plate": "2D plate with rollers, analytic standing wave; L2/H1 convergence",
    "spinning_plate": "2D plate spinning about its centre; momentum preservation",
    "spinning_cube": "3D cube spinning about the X3 axis; momentum preservation",
    "bending_column": "3D column fixed at the base with a linear transverse velocity; energy",
    "pulling_column": "3D column pulled at the top until it fails; stretch at failure",
    "twisting_column": "3D column with a sinusoidal initial twist; stability",
    "grad1d_study": "1D deformation-gradient estimators on (0, 5)",
}

LEDGER_EXTRA = ("max_von_mises", "stretch")


@dataclass
class Case:
    config: CaseConfig
    domain: ParticleDomain
    material: NeoHookeanParams
    solver: Solver
    state: DeformationState
    center: np.ndarray
    extra: dict = field(default_factory=dict)


def lattice_spacing(cfg: CaseConfig) -> float:
    g = cfg.geometry
    if g.spacing is not None:
        return float(g.spacing)
    ext = np.asarray(g.extents, float)
    n = np.asarray(g.counts, float) - (1 if g.placement == "node" else 0)
    d = ext / n
    if not np.allclose(d, d[0], rtol=1e-12):
        raise ValueError(f"geometry.counts give non-uniform spacing {d.tolist()}")
    return float(d[0])


def build_domain(cfg: CaseConfig, spacing=None, beta=None) -> ParticleDomain:
    g = cfg.geometry
    d = lattice_spacing(cfg) if spacing is None else spacing
    beta = cfg.kernel.beta if beta is None else beta
    rho = cfg.material.density if cfg.material else 1.0
    return generate_lattice(g.extents, d, origin=g.origin, h_ratio=beta,
                            density=rho, placement=g.placement)


def material_of(cfg: CaseConfig) -> NeoHookeanParams:
    m = cfg.material
    return NeoHookeanParams(float(m.youngs_modulus), float(m.poisson_ratio), float(m.density))


def _center(cfg, domain):
    if cfg.initial.center is not None:
        return np.asarray(cfg.initial.center, float)
    return 0.5 * (domain.box_min + domain.box_max)


def initial_velocity(cfg: CaseConfig, domain: ParticleDomain, material: NeoHookeanParams):
    X = domain.ref_positions
    ini = cfg.initial
    v = np.zeros_like(X)
    c = _center(cfg, domain)
    if cfg.case == "swinging_plate":
        plate = SwingingPlate.for_material(material, ini.amplitude, domain.box_min)
        v = swinging_analytic(X, 0.0, plate)[1]
    elif cfg.case in ("spinning_plate", "spinning_cube"):
        r = X - c
        v[:, 0] = -ini.omega3 * r[:, 1]
        v[:, 1] = ini.omega3 * r[:, 0]
    elif cfg.case == "twisting_column":
        r = X - c
        w = ini.omega3 * np.sin(np.pi * X[:, 2] / ini.twist_length)
        v[:, 0] = -w * r[:, 1]
        v[:, 1] = w * r[:, 0]
    elif cfg.case == "bending_column":
        v[:, 1] = ini.velocity_gradient * X[:, 2]
    return v


def boundary_conditions(cfg: CaseConfig):
    bcs = [BoundaryCondition(b.kind, b.axis, b.side,
                             None if b.velocity is None else tuple(b.velocity))
           for b in cfg.boundary]
    if cfg.case == "pulling_column":
        bcs.append(BoundaryCondition("velocity", cfg.dim - 1, "max",
                                     tuple(cfg.initial.pull_velocity)))
    return bcs


def build_case(cfg: CaseConfig, *, spacing=None, beta=None, kernel=None,
               deformation=None, alpha_cfl=None) -> Case:
    """Lattice, neighbours, corrections, constraints and initial state.

    Keyword overrides exist for sweeps that vary one parameter of a config.
    """
    if cfg.case == "grad1d_study":
        raise ValueError("grad1d_study is not a dynamic case; use grad1d_study()")
    material = material_of(cfg)
    domain = build_domain(cfg, spacing, beta)
    nb = build_neighbors(domain)
    corr = compute_corrections(domain, nb)
    constraints = Constraints.from_conditions(domain, boundary_conditions(cfg))
    solver = Solver(domain, material,
                    jst=JstParams(float(cfg.jst.eta2), float(cfg.jst.eta4),
                                 cfg.jst.harmonic or "corrected"),
                    alpha_cfl=float(cfg.time.alpha_cfl if alpha_cfl is None else alpha_cfl),
                    constraints=constraints,
                    deformation=deformation or cfg.deformation,
                    kernel=kernel or cfg.kernel.correction,
                    neighbors=nb, corrections=corr)
    state = solver.initial_state(initial_velocity(cfg, domain, material))
    center = (np.asarray(cfg.output.ledger_center, float)
              if cfg.output.ledger_center is not None else _center(cfg, domain))
    return Case(cfg, domain, material, solver, state, center)


def column_stretch(state: DeformationState, domain: ParticleDomain, axis=-1):
    """Percent elongation (L' - L) / L of the top face along ``axis``."""
    axis = axis % domain.dim
    top = domain.face(axis, "max")
    L = domain.box_max[axis] - domain.box_min[axis]
    # L' - L is the mean top-face displacement; the base is held fixed
    dL = state.x[top, axis].mean() - domain.ref_positions[top, axis].mean()
    return 100.0 * dL / L


def particle_fields(case: Case, state: DeformationState, Fc=None):
    s = case.solver
    Fc = s.bond(state.F, state.x, s.deformation) if Fc is None else Fc
    J = np.linalg.det(Fc)
    ok = J > 0
    vm = np.full(state.x.shape[0], np.nan)
    if ok.any():
        vm[ok] = von_mises(cauchy_stress(Fc[ok], case.material))
    return {"displacement": state.displacement(case.domain),
            "velocity": state.velocity(case.domain),
            "von_mises": vm, "detFc": J}


@dataclass
class CaseResult:
    case: Case
    status: str
    exit_code: int
    state: DeformationState
    ledger: list
    report: dict


def run_case(case: Case, out_dir=None, *, t_end=None, snapshots=True,
             kernel_dump=False) -> CaseResult:
    """Run a dynamic case, sampling the ledger on the output schedule.

    With ``out_dir`` the ledger, report and snapshots are written there.
    """
    cfg = case.config
    out = Path(out_dir) if out_dir is not None else None
    t_end = float(cfg.time.end if t_end is None else t_end)
    every = int(cfg.output.every)
    snap_every = int(cfg.output.snapshot_every) if snapshots and out is not None else 0
    rows = []
    last_good = {}
    snapshot_steps = []

    if out is not None and kernel_dump:
        tab = correction_table(case.solver.corr)
        write_csv(out / "kernel_diagnostics.csv", ("index",) + tuple(tab),
                  [[i] + [float(tab[k][i]) for k in tab] for i in range(case.domain.count)])

    def on_step(step, state):
        Fc = case.solver.deformation_gradient(state)
        f = particle_fields(case, state, Fc)
        row = conservation_sample(state, case.domain, case.material, Fc, case.center)
        row["step"] = step
        row["max_von_mises"] = float(np.max(f["von_mises"]))
        row["stretch"] = float(column_stretch(state, case.domain)) if cfg.case == "pulling_column" else 0.0
        rows.append(row)
        last_good.update(step=step, time=state.t, stretch=row["stretch"],
                         max_von_mises=row["max_von_mises"])
        if snap_every and (step % snap_every == 0 or state.t >= t_end):
            write_snapshot(out / f"snapshot_{step:07d}.vtk", state.x, f)
            snapshot_steps.append(step)

    def on_output(step, state):
        try:
            on_step(step, state)
        except Exception as exc:     # an inverted final state still ends the run cleanly
            log.info("sample at step %d skipped: %s", step, exc)

    res = run(case.solver, case.state, t_end, output_every=every or 0, on_output=on_output,
              max_steps=cfg.time.max_steps)
    report = {
        "case": cfg.case, "preset": cfg.preset, "status": res.status,
        "exit_code": res.exit_code, "message": res.message,
        "final_time": res.time, "steps": res.steps, "wall_time": res.wall_time,
        "particles": case.domain.count, "pairs": int(case.solver.nb.i.size),
        "deformation": case.solver.deformation, "kernel": case.solver.kernel,
        "last_stable_step": last_good.get("step"), "last_stable_time": last_good.get("time"),
        "max_von_mises": last_good.get("max_von_mises"),
        "snapshot_steps": snapshot_steps,
    }
    if rows:
        report.update(_ledger_summary(rows))
    if cfg.case == "pulling_column":
        report["stretch_percent"] = last_good.get("stretch")
    if cfg.case == "swinging_plate" and res.status == "finished":
        l2, h1 = swinging_errors(case, res.state)
        report["l2_error"], report["h1_error"] = l2, h1
    if out is not None:
        from .io import write_report
        write_csv(out / "ledger.csv", ("step",) + LEDGER_COLUMNS + LEDGER_EXTRA, rows)
        write_report(out / "report.json", report)
    return CaseResult(case, res.status, res.exit_code, res.state, rows, report)


def _ledger_summary(rows):
    r0 = rows[0]
    p0 = r0["momentum_abs"]
    lin = max(np.linalg.norm([r["px"], r["py"], r["pz"]]) for r in rows)
    out = {"linear_momentum_max": float(lin),
           "linear_momentum_rel": float(lin / p0) if p0 > 0 else float(lin)}
    a0 = r0["angular"]
    if a0 != 0:
        out["angular_drift_rel"] = float(max(abs(r["angular"] - a0) for r in rows) / abs(a0))
    e0 = r0["total"]
    if e0 != 0:
        out["energy_drift_rel"] = float(max(abs(r["total"] - e0) for r in rows) / abs(e0))
    out["peak_von_mises"] = float(max(r["max_von_mises"] for r in rows))
    return out


# swinging plate errors and convergence

def swinging_plate_of(case: Case):
    return SwingingPlate.for_material(case.material, case.config.initial.amplitude,
                                      case.domain.box_min)


def swinging_errors(case: Case, state: DeformationState, quad=None):
    cv = case.config.convergence
    tiles, gauss = (cv.tiles, cv.gauss) if cv is not None else (10, 5)
    quad = quad or QuadratureGrid.tensor(case.domain.box_min, case.domain.box_max, tiles, gauss)
    plate = swinging_plate_of(case)
    Fc = case.solver.deformation_gradient(state)

    def analytic(P, t):
        u, _, g = swinging_analytic(P, t, plate)
        return u, g
    return displacement_errors(state, Fc, case.domain, analytic, quad,
                               Interpolator(case.domain, quad.points))


NORM_COLUMNS = ("spacing", "beta", "kernel", "particles", "steps", "time", "l2", "h1")


def convergence_study(cfg: CaseConfig, *, t_end=None):
    """Sweep spacing x beta x kernel; returns (rows, slopes).

    The end time defaults to a quarter period of the analytic mode.
    """
    cv = cfg.convergence
    if cv is None:
        raise ValueError("convergence block required")
    rows, slopes = [], []
    for kern in cv.kernels:
        for beta in cv.betas:
            cell = []
            for d in cv.spacings:
                case = build_case(cfg, spacing=float(d), beta=float(beta), kernel=kern)
                T = t_end if t_end is not None else 0.5 * np.pi / swinging_plate_of(case).omega
                res = run(case.solver, case.state, T)
                if res.status != "finished":
                    raise RuntimeError(f"spacing {d}, beta {beta}: {res.message}")
                l2, h1 = swinging_errors(case, res.state)
                row = {"spacing": float(d), "beta": float(beta), "kernel": kern,
                       "particles": case.domain.count, "steps": res.steps,
                       "time": float(res.time), "l2": l2, "h1": h1}
                rows.append(row)
                cell.append(row)
                log.info("d=%g beta=%g %s: l2=%.3e h1=%.3e", d, beta, kern, l2, h1)
            h = [r["spacing"] for r in cell]
            slopes.append({"beta": float(beta), "kernel": kern,
                           "l2_slope": fit_slope(h, [r["l2"] for r in cell]),
                           "h1_slope": fit_slope(h, [r["h1"] for r in cell])})
    return rows, slopes


# one-dimensional gradient study

FIELD_FUNCS = {
    "linear": (lambda X: X + 1.0, lambda X: np.ones_like(X)),
    "cubic": (lambda X: X ** 3 + 1.0, lambda X: 3.0 * X ** 2),
    "sine": (lambda X: np.sin(5.0 * X), lambda X: 5.0 * np.cos(5.0 * X)),
}

GRAD1D_COLUMNS = ("field", "spacing", "X", "analytic", "standard", "naive_bond",
                  "improved_W1", "improved_W0")
RMSE_COLUMNS = ("field", "spacing", "standard", "naive_bond", "improved_W1", "improved_W0")


def grad1d_estimates(length, spacing, support_cells, field_name, origin=0.0):
    """Per-particle gradient estimates of one field on a uniform 1D lattice."""
    h = 0.5 * support_cells * spacing
    dom = generate_lattice([length], spacing, origin=[origin], smoothing_length=h)
    nb = build_neighbors(dom)
    corr = compute_corrections(dom, nb)
    f, df = FIELD_FUNCS[field_name]
    X = dom.ref_positions[:, 0]
    x = f(X)
    return {"X": X, "analytic": df(X),
            "standard": gradient_1d_standard(x, dom, nb, corr, "W1"),
            "naive_bond": gradient_1d_bond_naive(x, dom, nb, corr),
            "improved_W1": gradient_1d_bond_improved(x, dom, nb, corr, "W1"),
            "improved_W0": gradient_1d_bond_improved(x, dom, nb, corr, "W0")}


def grad1d_study(cfg: CaseConfig):
    """Returns (per-particle rows, RMSE rows)."""
    s = cfg.study
    length = float(cfg.geometry.extents[0])
    origin = float(cfg.geometry.origin[0]) if cfg.geometry.origin else 0.0
    rows, rmse = [], []
    for name in s.fields:
        for d in s.spacings:
            est = grad1d_estimates(length, float(d), float(s.support_cells), name, origin)
            for k in range(est["X"].size):
                rows.append({"field": name, "spacing": float(d),
                             **{c: float(est[c][k]) for c in GRAD1D_COLUMNS[2:]}})
            rmse.append({"field": name, "spacing": float(d), **{
                c: float(np.sqrt(np.mean((est[c] - est["analytic"]) ** 2)))
                for c in RMSE_COLUMNS[2:]}})
    return rows, rmse
