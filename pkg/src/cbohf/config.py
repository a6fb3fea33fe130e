"""Run configuration: YAML/JSON schema, parsing, validation and canonical form.

Schema (all blocks optional except ``job`` and ``geometry``)::

    job: freq                      # scf | grad | freq | spectrum | detuning-scan | grid
    geometry: hf.xyz               # XYZ path (relative to the config) or bundled name
    geometry_xyz: null             # inline XYZ text, takes precedence (used by manifests)
    charge: 0
    basis: aug-cc-pvdz             # bundled name or Gaussian94 file
    spherical: true
    cavity:
      omega: 4467.0
      omega_unit: cm-1             # cm-1 | hartree
      lambda0: 0.0
      polarization: [0, 0, 1]
      q_policy: stationary         # stationary | fixed:<value>
    ensemble: {n_mol: 1, orientation: parallel, separation: 800.0}
    modes: {scf_treatment: full, dse: true}
    sweep: {lambdas: [], omegas: []}     # omegas in cm-1
    scf: {e_conv: 1.0e-10, d_conv: 1.0e-8, max_iter: 200, diis_size: 8, level_shift: 0.2}
    fd: {step: 0.005, relax_q: false, include_photon_dipole: true}
    grid: {bond_points: 128, photon_points: 64, bond_range: [0.55, 2.2],
           photon_widths: 6.0, n_states: 6, method: dense}
    spectrum: {width: 10.0, step: 0.5, threshold: 0.05}
    output: cbohf-out
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .constants import cm_to_hartree, hartree_to_cm

JOBS = ("scf", "grad", "freq", "spectrum", "detuning-scan", "grid")
OMEGA_WARN_RANGE = (100.0, 10000.0)  # cm-1


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class Diagnostic:
    level: str  # error | warning | note
    path: str
    message: str

    def __str__(self):
        return f"{self.level}: {self.path}: {self.message}"


@dataclass
class CavityConfig:
    omega: float = 4467.0
    omega_unit: str = "cm-1"
    lambda0: float = 0.0
    polarization: list = field(default_factory=lambda: [0.0, 0.0, 1.0])
    q_policy: str = "stationary"

    @property
    def omega_hartree(self) -> float:
        return cm_to_hartree(self.omega) if self.omega_unit == "cm-1" else float(self.omega)

    @property
    def omega_cm(self) -> float:
        return float(self.omega) if self.omega_unit == "cm-1" else hartree_to_cm(self.omega)

    def fixed_q(self):
        """Fixed q_c value, or None for the stationary policy."""
        if self.q_policy == "stationary":
            return None
        kind, _, value = self.q_policy.partition(":")
        if kind != "fixed":
            raise ValueError(f"unknown q policy {self.q_policy!r}")
        return float(value)


@dataclass
class EnsembleConfig:
    n_mol: int = 1
    orientation: str = "parallel"
    separation: float = 800.0


@dataclass
class ModesConfig:
    scf_treatment: str = "full"
    dse: bool = True


@dataclass
class SweepConfig:
    lambdas: list = field(default_factory=list)
    omegas: list = field(default_factory=list)


@dataclass
class SCFConfig:
    e_conv: float = 1e-10
    d_conv: float = 1e-8
    max_iter: int = 200
    diis_size: int = 8
    level_shift: float = 0.2


@dataclass
class FDConfig:
    step: float = 5e-3
    relax_q: bool = False
    include_photon_dipole: bool = True


@dataclass
class GridConfig:
    bond_points: int = 128
    photon_points: int = 64
    bond_range: list = field(default_factory=lambda: [0.55, 2.2])
    photon_widths: float = 6.0
    n_states: int = 6
    method: str = "dense"


@dataclass
class SpectrumConfig:
    width: float = 10.0
    step: float = 0.5
    threshold: float = 0.05


_BLOCKS = {
    "cavity": CavityConfig,
    "ensemble": EnsembleConfig,
    "modes": ModesConfig,
    "sweep": SweepConfig,
    "scf": SCFConfig,
    "fd": FDConfig,
    "grid": GridConfig,
    "spectrum": SpectrumConfig,
}


@dataclass
class RunConfig:
    job: str
    geometry: str = ""
    geometry_xyz: str | None = None
    charge: int = 0
    basis: str = "aug-cc-pvdz"
    spherical: bool = True
    cavity: CavityConfig = field(default_factory=CavityConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    modes: ModesConfig = field(default_factory=ModesConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    scf: SCFConfig = field(default_factory=SCFConfig)
    fd: FDConfig = field(default_factory=FDConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    output: str = "cbohf-out"
    base_dir: str = field(default=".", compare=False)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    def scf_settings(self):
        from .scf import SCFSettings

        return SCFSettings(e_conv=self.scf.e_conv, d_conv=self.scf.d_conv, max_iter=self.scf.max_iter,
                           diis_size=self.scf.diis_size, level_shift=self.scf.level_shift,
                           scf_treatment=self.modes.scf_treatment, dse=self.modes.dse)


def _coerce(path, value, default):
    """Convert ``value`` to the type of ``default`` or raise ConfigError."""
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(default, str):
            if not isinstance(value, (str, int, float)) or isinstance(value, bool):
                raise TypeError
            return str(value)
        if isinstance(default, list):
            if not isinstance(value, (list, tuple)):
                raise TypeError
            return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(path, f"expected {type(default).__name__}, got {value!r}") from None
    return value


def _build(cls, data, prefix):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(prefix, "expected a mapping")
    defaults = cls()
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for k, v in data.items():
        if k not in names:
            raise ConfigError(f"{prefix}.{k}", "unknown key")
        kwargs[k] = _coerce(f"{prefix}.{k}", v, getattr(defaults, k))
    return cls(**kwargs)


def config_from_dict(data: dict, base_dir=".") -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "configuration must be a mapping")
    data = dict(data)
    data.pop("manifest", None)  # manifests are valid configs
    if "job" not in data:
        raise ConfigError("job", "missing")
    kwargs = {"base_dir": str(base_dir)}
    top = {f.name: f for f in dataclasses.fields(RunConfig)}
    for k, v in data.items():
        if k in _BLOCKS:
            kwargs[k] = _build(_BLOCKS[k], v, k)
        elif k in top and k != "base_dir":
            if k == "geometry_xyz":
                kwargs[k] = None if v is None else str(v)
            elif k == "job":
                kwargs[k] = str(v)
            else:
                kwargs[k] = _coerce(k, v, top[k].default)
        else:
            raise ConfigError(k, "unknown key")
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(str(p), f"not valid YAML: {exc}") from None
    return config_from_dict(data, p.parent)


def dump_config(cfg: RunConfig) -> str:
    """Canonical YAML serialization (sorted keys, full float precision)."""
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True, default_flow_style=False)


def validate(cfg: RunConfig) -> list:
    """Diagnostics for a parsed config; fixes polarization normalization in
    place. Never raises."""
    out = []

    def add(level, path, msg):
        out.append(Diagnostic(level, path, msg))

    if cfg.job not in JOBS:
        add("error", "job", f"unknown job {cfg.job!r}; expected one of {', '.join(JOBS)}")
    if not cfg.geometry and not cfg.geometry_xyz:
        add("error", "geometry", "no geometry given")
    cav = cfg.cavity
    if cav.omega_unit not in ("cm-1", "hartree"):
        add("error", "cavity.omega_unit", f"unknown unit {cav.omega_unit!r}")
    elif cav.omega <= 0:
        add("error", "cavity.omega", "cavity frequency must be positive")
    elif not OMEGA_WARN_RANGE[0] <= cav.omega_cm <= OMEGA_WARN_RANGE[1]:
        add("warning", "cavity.omega", f"{cav.omega_cm:.6g} cm-1 is outside {OMEGA_WARN_RANGE[0]:g}-"
            f"{OMEGA_WARN_RANGE[1]:g} cm-1; check omega_unit")
    if cav.lambda0 < 0:
        add("error", "cavity.lambda0", "coupling strength must be non-negative")
    pol = np.asarray(cav.polarization, dtype=float)
    if pol.shape != (3,) or not np.all(np.isfinite(pol)) or np.linalg.norm(pol) == 0:
        add("error", "cavity.polarization", "polarization must be a nonzero 3-vector")
    elif abs(np.linalg.norm(pol) - 1.0) > 1e-12:
        cav.polarization = (pol / np.linalg.norm(pol)).tolist()
        add("warning", "cavity.polarization", f"normalized to {cav.polarization}")
    if cav.q_policy != "stationary":
        try:
            cav.fixed_q()
        except ValueError:
            add("error", "cavity.q_policy", "expected 'stationary' or 'fixed:<value>'")
    ens = cfg.ensemble
    if ens.n_mol < 1:
        add("error", "ensemble.n_mol", "must be >= 1")
    if ens.orientation not in ("parallel", "antiparallel"):
        add("error", "ensemble.orientation", f"unknown orientation {ens.orientation!r}")
    if ens.separation <= 0:
        add("error", "ensemble.separation", "must be positive")
    if cfg.modes.scf_treatment not in ("full", "frozen-cavity-free"):
        add("error", "modes.scf_treatment", f"unknown treatment {cfg.modes.scf_treatment!r}")
    if not cfg.modes.dse:
        if ens.n_mol > 1 and ens.orientation == "antiparallel":
            add("note", "modes.dse", "dse off with an antiparallel ensemble: DSE ablation scenario")
        else:
            add("note", "modes.dse", "dipole self-energy terms disabled")
    if cfg.job == "spectrum" and not cfg.sweep.lambdas and cav.lambda0 <= 0:
        add("error", "sweep.lambdas", "spectrum job needs sweep.lambdas or a positive cavity.lambda0")
    if cfg.job == "detuning-scan":
        if not cfg.sweep.omegas:
            add("error", "sweep.omegas", "detuning scan needs a nonempty list of cavity frequencies")
        if cav.lambda0 <= 0:
            add("error", "cavity.lambda0", "detuning scan needs a positive coupling")
    if any(v < 0 for v in cfg.sweep.lambdas):
        add("error", "sweep.lambdas", "coupling strengths must be non-negative")
    if any(v <= 0 for v in cfg.sweep.omegas):
        add("error", "sweep.omegas", "cavity frequencies must be positive")
    if cfg.fd.step <= 0:
        add("error", "fd.step", "must be positive")
    g = cfg.grid
    if cfg.job == "grid":
        if g.method not in ("dense", "imaginary-time"):
            add("error", "grid.method", f"unknown method {g.method!r}")
        if g.bond_points < 8 or g.photon_points < 8:
            add("error", "grid", "at least 8 points per axis")
        if len(g.bond_range) != 2 or not 0 < g.bond_range[0] < 1 < g.bond_range[1]:
            add("error", "grid.bond_range", "expected [lo, hi] with lo < 1 < hi")
        if ens.n_mol > 2:
            add("error", "ensemble.n_mol", "grid job supports at most two molecules")
        if g.n_states < 3:
            add("warning", "grid.n_states", "fewer than 3 states: no LP/UP decomposition")
    if cfg.spectrum.width <= 0:
        add("error", "spectrum.width", "must be positive")
    return out


def errors(diags) -> list:
    return [d for d in diags if d.level == "error"]
