"""Run configuration: a nested YAML document parsed into dataclasses.

Every validation failure is reported with the dotted path of the offending
field, e.g. ``initial.omega3``.
"""

from __future__ import annotations

from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml

CASE_IDS = ("swinging_plate", "spinning_plate", "spinning_cube", "bending_column",
            "pulling_column", "twisting_column", "grad1d_study")
KERNELS = ("W1", "W0")
DEFORMATIONS = ("fullrank", "kinematic", "standard")
HARMONIC_LAPLACIANS = ("corrected", "bond")
BC_KINDS = ("fixed", "roller", "velocity")
FIELDS_1D = ("linear", "cubic", "sine")


class ConfigError(ValueError):
    """Collects ``(path, message)`` pairs."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.problems))


@dataclass
class Geometry:
    extents: list
    origin: Optional[list] = None
    spacing: Optional[float] = None
    counts: Optional[list] = None
    placement: str = "cell"

    def resolved_spacing(self):
        if self.spacing is not None:
            return float(self.spacing)
        # counts are particles per axis; node placement puts particles on both faces
        n = self.counts[0] - (1 if self.placement == "node" else 0)
        return float(self.extents[0]) / n


@dataclass
class Material:
    youngs_modulus: float
    poisson_ratio: float
    density: float


@dataclass
class Kernel:
    beta: float = 0.9
    correction: str = "W1"


@dataclass
class Jst:
    eta2: float = 0.0
    eta4: float = 0.125
    harmonic: Optional[str] = None


@dataclass
class Time:
    end: float
    alpha_cfl: float = 0.9
    max_steps: Optional[int] = None


@dataclass
class Initial:
    amplitude: Optional[float] = None          # swinging plate U
    omega3: Optional[float] = None             # spin / twist rate
    center: Optional[list] = None              # rotation axis location
    velocity_gradient: Optional[float] = None  # bending column dv2/dX3
    twist_length: Optional[float] = None       # twist profile sin(pi X3 / twist_length)
    pull_velocity: Optional[list] = None       # pulling column top-face velocity


@dataclass
class Boundary:
    kind: str
    axis: int
    side: str = "min"
    velocity: Optional[list] = None


@dataclass
class Output:
    dir: str = "out"
    every: int = 0
    snapshot_every: int = 0
    ledger_center: Optional[list] = None


@dataclass
class Convergence:
    spacings: list
    betas: list
    kernels: list = field(default_factory=lambda: ["W1"])
    tiles: int = 10
    gauss: int = 5


@dataclass
class Study:
    spacings: list
    support_cells: float = 4.0
    fields: list = field(default_factory=lambda: list(FIELDS_1D))


@dataclass
class CaseConfig:
    case: str
    preset: str = "custom"
    description: str = ""
    geometry: Optional[Geometry] = None
    material: Optional[Material] = None
    kernel: Kernel = field(default_factory=Kernel)
    deformation: str = "fullrank"
    jst: Jst = field(default_factory=Jst)
    time: Optional[Time] = None
    initial: Initial = field(default_factory=Initial)
    boundary: list = field(default_factory=list)
    output: Output = field(default_factory=Output)
    convergence: Optional[Convergence] = None
    study: Optional[Study] = None

    @property
    def dim(self):
        return len(self.geometry.extents)

    def to_dict(self):
        return _strip_none(asdict(self))

    def dump(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None, width=100)


def _strip_none(obj):
    if isinstance(obj, dict):
        return {k: _strip_none(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, list):
        return [_strip_none(v) for v in obj]
    return obj


_SECTIONS = {"geometry": Geometry, "material": Material, "kernel": Kernel, "jst": Jst,
             "time": Time, "initial": Initial, "output": Output,
             "convergence": Convergence, "study": Study}


def _section(cls, data, path, problems):
    if not isinstance(data, dict):
        problems.append((path, "must be a mapping"))
        return None
    known = {f.name for f in fields(cls)}
    for k in data:
        if k not in known:
            problems.append((f"{path}.{k}", "unknown field"))
    missing = [f.name for f in fields(cls) if f.name not in data
               and f.default is MISSING and f.default_factory is MISSING]
    for name in missing:
        problems.append((f"{path}.{name}", "required"))
    if missing:
        return None
    return cls(**{k: v for k, v in data.items() if k in known})


def _num(problems, path, v, *, positive=False, nonneg=False, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        problems.append((path, "must be a number"))
        return False
    if integer and int(v) != v:
        problems.append((path, "must be an integer"))
        return False
    if positive and not v > 0:
        problems.append((path, "must be positive"))
        return False
    if nonneg and not v >= 0:
        problems.append((path, "must be non-negative"))
        return False
    return True


def _vec(problems, path, v, n=None, **kw):
    if not isinstance(v, (list, tuple)) or (n is not None and len(v) != n):
        problems.append((path, f"must be a list of {n if n else 'some'} numbers"))
        return False
    return all(_num(problems, f"{path}[{k}]", x, **kw) for k, x in enumerate(v))


def _require(problems, path, v):
    if v is None:
        problems.append((path, "required for this case"))
        return False
    return True


def from_dict(data) -> CaseConfig:
    """Validate a parsed document and build a :class:`CaseConfig`."""
    problems = []
    if not isinstance(data, dict):
        raise ConfigError([("<root>", "document must be a mapping")])
    top = {f.name for f in fields(CaseConfig)}
    for k in data:
        if k not in top:
            problems.append((k, "unknown field"))
    case = data.get("case")
    if case not in CASE_IDS:
        problems.append(("case", f"must be one of {', '.join(CASE_IDS)}"))
    if "geometry" not in data:
        problems.append(("geometry", "required"))
    kw = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            sec = _section(cls, data[name], name, problems)
            if sec is not None:
                kw[name] = sec
    bcs = []
    for k, b in enumerate(data.get("boundary") or []):
        sec = _section(Boundary, b, f"boundary[{k}]", problems)
        if sec is not None:
            bcs.append(sec)
    if problems:
        raise ConfigError(problems)
    cfg = CaseConfig(case=case, boundary=bcs,
                     preset=data.get("preset", "custom"),
                     description=data.get("description", ""),
                     deformation=data.get("deformation", "fullrank"), **kw)
    validate(cfg)
    return cfg


def validate(cfg: CaseConfig):
    p = []
    g = cfg.geometry
    dim = len(g.extents) if isinstance(g.extents, list) else 0
    if _vec(p, "geometry.extents", g.extents, positive=True) and not 1 <= dim <= 3:
        p.append(("geometry.extents", "must have 1 to 3 entries"))
    if g.origin is not None:
        _vec(p, "geometry.origin", g.origin, dim)
    if (g.spacing is None) == (g.counts is None):
        p.append(("geometry", "give exactly one of spacing or counts"))
    elif g.spacing is not None:
        _num(p, "geometry.spacing", g.spacing, positive=True)
    elif _vec(p, "geometry.counts", g.counts, dim, positive=True, integer=True):
        if g.placement == "node" and min(g.counts) < 2:
            p.append(("geometry.counts", "node placement needs at least 2 per axis"))
    if g.placement not in ("cell", "node"):
        p.append(("geometry.placement", "must be cell or node"))

    study = cfg.case == "grad1d_study"
    if cfg.material is None and not study:
        p.append(("material", "required"))
    elif cfg.material is not None:
        m = cfg.material
        _num(p, "material.youngs_modulus", m.youngs_modulus, positive=True)
        _num(p, "material.density", m.density, positive=True)
        if _num(p, "material.poisson_ratio", m.poisson_ratio) and not 0 <= m.poisson_ratio < 0.5:
            p.append(("material.poisson_ratio", "must lie in [0, 0.5)"))
    _num(p, "kernel.beta", cfg.kernel.beta, positive=True)
    if cfg.kernel.correction not in KERNELS:
        p.append(("kernel.correction", f"must be one of {KERNELS}"))
    if cfg.deformation not in DEFORMATIONS:
        p.append(("deformation", f"must be one of {DEFORMATIONS}"))
    _num(p, "jst.eta2", cfg.jst.eta2, nonneg=True)
    _num(p, "jst.eta4", cfg.jst.eta4, nonneg=True)
    if cfg.jst.harmonic not in (None,) + HARMONIC_LAPLACIANS:
        p.append(("jst.harmonic", f"must be one of {HARMONIC_LAPLACIANS}"))
    if cfg.time is None and not study:
        p.append(("time", "required"))
    elif cfg.time is not None:
        _num(p, "time.end", cfg.time.end, positive=True)
        if _num(p, "time.alpha_cfl", cfg.time.alpha_cfl) and not 0 < cfg.time.alpha_cfl <= 1:
            p.append(("time.alpha_cfl", "must lie in (0, 1]"))
        if cfg.time.max_steps is not None:
            _num(p, "time.max_steps", cfg.time.max_steps, positive=True, integer=True)
    o = cfg.output
    _num(p, "output.every", o.every, nonneg=True, integer=True)
    _num(p, "output.snapshot_every", o.snapshot_every, nonneg=True, integer=True)
    if o.ledger_center is not None:
        _vec(p, "output.ledger_center", o.ledger_center, dim)
    for k, b in enumerate(cfg.boundary):
        path = f"boundary[{k}]"
        if b.kind not in BC_KINDS:
            p.append((f"{path}.kind", f"must be one of {BC_KINDS}"))
        if not (isinstance(b.axis, int) and 0 <= b.axis < max(dim, 1)):
            p.append((f"{path}.axis", f"must be an axis index below {dim}"))
        if b.side not in ("min", "max"):
            p.append((f"{path}.side", "must be min or max"))
        if b.kind == "velocity":
            if _require(p, f"{path}.velocity", b.velocity):
                _vec(p, f"{path}.velocity", b.velocity, dim)

    ini, c = cfg.initial, cfg.case
    if c == "swinging_plate":
        if _require(p, "initial.amplitude", ini.amplitude):
            _num(p, "initial.amplitude", ini.amplitude, nonneg=True)
    if c in ("spinning_plate", "spinning_cube", "twisting_column"):
        if _require(p, "initial.omega3", ini.omega3):
            _num(p, "initial.omega3", ini.omega3)
    if c == "twisting_column" and _require(p, "initial.twist_length", ini.twist_length):
        _num(p, "initial.twist_length", ini.twist_length, positive=True)
    if c == "bending_column" and _require(p, "initial.velocity_gradient", ini.velocity_gradient):
        _num(p, "initial.velocity_gradient", ini.velocity_gradient)
    if c == "pulling_column" and _require(p, "initial.pull_velocity", ini.pull_velocity):
        _vec(p, "initial.pull_velocity", ini.pull_velocity, dim)
    if ini.center is not None:
        _vec(p, "initial.center", ini.center, dim)
    expected_dim = {"swinging_plate": 2, "spinning_plate": 2, "spinning_cube": 3,
                    "bending_column": 3, "pulling_column": 3, "twisting_column": 3,
                    "grad1d_study": 1}[c]
    if dim and dim != expected_dim:
        p.append(("geometry.extents", f"{c} is {expected_dim}-dimensional"))
    if cfg.convergence is not None:
        cv = cfg.convergence
        if _vec(p, "convergence.spacings", cv.spacings, positive=True) and len(cv.spacings) < 2:
            p.append(("convergence.spacings", "need at least two spacings"))
        _vec(p, "convergence.betas", cv.betas, positive=True)
        for k, kn in enumerate(cv.kernels):
            if kn not in KERNELS:
                p.append((f"convergence.kernels[{k}]", f"must be one of {KERNELS}"))
        _num(p, "convergence.tiles", cv.tiles, positive=True, integer=True)
        _num(p, "convergence.gauss", cv.gauss, positive=True, integer=True)
    if study:
        if _require(p, "study", cfg.study):
            s = cfg.study
            _vec(p, "study.spacings", s.spacings, positive=True)
            _num(p, "study.support_cells", s.support_cells, positive=True)
            for k, f in enumerate(s.fields):
                if f not in FIELDS_1D:
                    p.append((f"study.fields[{k}]", f"must be one of {FIELDS_1D}"))
    if p:
        raise ConfigError(p)
    return cfg


def load_config(path) -> CaseConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([("<file>", f"cannot read {path}: {exc}")]) from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([("<file>", f"invalid YAML in {path}: {exc}")]) from exc
    return from_dict(data)


def builtin_dir() -> Path:
    return Path(__file__).parent / "cases"


def builtin_path(case, preset="quick") -> Path:
    return builtin_dir() / f"{case}.{preset}.yaml"


def load_builtin(case, preset="quick") -> CaseConfig:
    return load_config(builtin_path(case, preset))
