"""Run configuration: flat dotted keys, YAML file loading, flag overrides."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from typing import Any

import yaml

from .descent import DescentOptions
from .grid import RadialGrid, build_grid
from .model import KappaProfile, ModelParams
from .mountain_pass import PathOptions, RefineOptions
from .subcritical import SubcriticalOptions

__all__ = ["ConfigError", "RunConfig", "load_config", "REGIMES"]

REGIMES = ("subcritical", "mountain_pass", "scalar", "constants", "verify")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _opt_float(x):
    return None if x is None or x == "" or (isinstance(x, str) and x.lower() in ("none", "null")) else float(x)


def _bool(x):
    if isinstance(x, bool):
        return x
    if isinstance(x, str) and x.lower() in ("true", "yes", "1", "on"):
        return True
    if isinstance(x, str) and x.lower() in ("false", "no", "0", "off"):
        return False
    if isinstance(x, (int, float)) and x in (0, 1):
        return bool(x)
    raise ValueError(f"not a boolean: {x!r}")


def _float_list(x):
    if isinstance(x, str):
        x = [t for t in x.replace(";", ",").split(",") if t.strip()]
    return [float(t) for t in x]


def _opt_str(x):
    return None if x is None or x == "" or (isinstance(x, str) and x.lower() in ("none", "null")) else str(x)


# key -> (attribute, converter, help)
_KEYS: dict[str, tuple[str, Any, str]] = {
    "regime": ("regime", str, "one of " + ", ".join(REGIMES)),
    "seed": ("seed", int, "seed for every stochastic component"),
    "output_dir": ("output_dir", str, "directory for report and profiles"),
    "model.N": ("N", int, "spatial dimension"),
    "model.mu1": ("mu1", float, "self interaction of component 1"),
    "model.mu2": ("mu2", float, "self interaction of component 2"),
    "model.beta": ("beta", float, "nonlinear coupling"),
    "model.p1": ("p1", _opt_float, "exponent of component 1 (default by regime)"),
    "model.p2": ("p2", _opt_float, "exponent of component 2 (default by regime)"),
    "model.r1": ("r1", _opt_float, "coupling exponent on u1 (default by regime)"),
    "model.r2": ("r2", _opt_float, "coupling exponent on u2 (default by regime)"),
    "model.a1": ("a1", float, "L2 norm of component 1"),
    "model.a2": ("a2", float, "L2 norm of component 2"),
    "model.coupling_form": ("coupling_form", str, "auto, general or cubic"),
    "kappa.kind": ("kappa_kind", str, "zero, rational, gaussian or tabulated"),
    "kappa.c": ("kappa_c", float, "amplitude of kappa"),
    "kappa.c_over_cap": ("kappa_c_over_cap", _opt_float, "set c as this fraction of the sup-norm cap"),
    "kappa.q": ("kappa_q", float, "decay power of the rational profile"),
    "kappa.width": ("kappa_width", float, "width of the gaussian profile"),
    "kappa.radii": ("kappa_radii", _float_list, "tabulated radii"),
    "kappa.values": ("kappa_values", _float_list, "tabulated values"),
    "grid.r_max": ("r_max", float, "truncation radius"),
    "grid.M": ("M", int, "node count"),
    "solver.max_iterations": ("max_iterations", int, "descent iteration budget"),
    "solver.tol": ("tol", float, "projected-gradient tolerance"),
    "solver.step0": ("step0", float, "initial step"),
    "solver.backtrack": ("backtrack", float, "backtracking factor"),
    "solver.restarts": ("restarts", int, "perturbation restarts on stagnation"),
    "solver.perturbation": ("perturbation", float, "relative size of restart perturbations"),
    "solver.sign_pattern": ("sign_pattern", _opt_str, "both_positive, mixed_u1neg, mixed_u2neg, free"),
    "solver.init_width": ("init_width", float, "width of the Gaussian initial guess"),
    "path.nodes": ("path_nodes", int, "nodes on the mountain-pass path (odd)"),
    "path.max_sweeps": ("path_max_sweeps", int, "string sweep budget"),
    "path.step0": ("path_step0", float, "initial shared step"),
    "path.base_width": ("path_base_width", float, "width of the Gaussian fiber base"),
    "refine.tol": ("refine_tol", float, "KKT residual target"),
    "refine.max_newton": ("refine_max_newton", int, "Newton iteration budget"),
    "refine.gmres_maxiter": ("refine_gmres_maxiter", int, "Krylov iteration cap per solve"),
    "geometry.samples": ("geometry_samples", int, "random samples for the level-set check"),
    "gn.r_max": ("gn_r_max", float, "truncation radius for the GN estimate"),
    "gn.M": ("gn_M", int, "node count for the GN estimate"),
    "gn.S_override": ("gn_S_override", _opt_float, "replace the embedding constant S"),
    "verify.variant": ("verify_variant", str, "kappa condition variant: thm1_3 or K1_condition"),
    "verify.report": ("verify_report", _opt_str, "report file checked by the verify command"),
    "report.timestamps": ("report_timestamps", _bool, "record wall-clock timestamps (breaks bitwise-identical reports)"),
}

_REGIME_EXPONENTS = {
    "subcritical": (3.0, 3.0, 1.5, 1.5),
    "scalar": (3.0, 3.0, 1.5, 1.5),
    "mountain_pass": (4.0, 4.0, 2.0, 2.0),
    "constants": (4.0, 4.0, 2.0, 2.0),
    "verify": (3.0, 3.0, 1.5, 1.5),
}


_SECTION_FIELDS = {
    "model": ("N", "mu1", "mu2", "beta", "p1", "p2", "r1", "r2", "a1", "a2", "coupling_form"),
    "grid": ("M", "r_max", "N"),
    "gn": ("M", "r_max"),
    "solver": ("max_iterations", "restarts", "tol", "step0", "perturbation", "init_width", "backtrack",
               "sign_pattern"),
}


def _key_for(exc: Exception, section: str) -> str:
    """Best dotted key for a validation message that names a field."""
    words = str(exc).replace("=", " ").replace(",", " ").split()
    for name in _SECTION_FIELDS[section]:
        if name in words:
            return "model.N" if name == "N" and section == "grid" else f"{section}.{name}"
    return section


@dataclass
class RunConfig:
    """Every run setting; each field has a default and maps to one dotted key."""

    regime: str = "subcritical"
    seed: int = 0
    output_dir: str = "runs/out"
    N: int = 3
    mu1: float = 1.0
    mu2: float = 1.0
    beta: float = 1.0
    p1: float | None = None
    p2: float | None = None
    r1: float | None = None
    r2: float | None = None
    a1: float = 1.0
    a2: float = 1.0
    coupling_form: str = "auto"
    kappa_kind: str = "rational"
    kappa_c: float = 0.1
    kappa_c_over_cap: float | None = None
    kappa_q: float = 1.5
    kappa_width: float = 1.0
    kappa_radii: list = field(default_factory=list)
    kappa_values: list = field(default_factory=list)
    r_max: float = 24.0
    M: int = 2001
    max_iterations: int = 50000
    tol: float = 1e-8
    step0: float = 1e-2
    backtrack: float = 0.5
    restarts: int = 5
    perturbation: float = 1e-2
    sign_pattern: str | None = None
    init_width: float = 1.0
    path_nodes: int = 41
    path_max_sweeps: int = 4000
    path_step0: float = 0.1
    path_base_width: float = 1.0
    refine_tol: float = 1e-9
    refine_max_newton: int = 60
    refine_gmres_maxiter: int = 200
    geometry_samples: int = 64
    gn_r_max: float = 24.0
    gn_M: int = 2001
    gn_S_override: float | None = None
    verify_variant: str = "thm1_3"
    verify_report: str | None = None
    report_timestamps: bool = False

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"regime: unknown value {self.regime!r}; expected one of {REGIMES}")
        if self.verify_variant not in ("thm1_3", "K1_condition"):
            raise ConfigError(f"verify.variant: unknown value {self.verify_variant!r}")
        if self.kappa_kind not in ("zero", "rational", "gaussian", "tabulated"):
            raise ConfigError(f"kappa.kind: unknown value {self.kappa_kind!r}")
        # build every derived object once so bad values fail at parse time
        self.params()
        self.grid()
        self.gn_grid()
        self.kappa()
        self.subcritical_options()
        for key, v, lo in (("path.nodes", self.path_nodes, 3), ("path.max_sweeps", self.path_max_sweeps, 1),
                           ("refine.max_newton", self.refine_max_newton, 0),
                           ("refine.gmres_maxiter", self.refine_gmres_maxiter, 1),
                           ("geometry.samples", self.geometry_samples, 1)):
            if v < lo:
                raise ConfigError(f"{key}: must be >= {lo}, got {v}")
        for key, v in (("path.step0", self.path_step0), ("path.base_width", self.path_base_width),
                       ("refine.tol", self.refine_tol)):
            if not v > 0:
                raise ConfigError(f"{key}: must be positive, got {v}")
        if self.kappa_c_over_cap is not None and not self.kappa_c_over_cap >= 0:
            raise ConfigError(f"kappa.c_over_cap: must be nonnegative, got {self.kappa_c_over_cap}")

    # -- serialization ------------------------------------------------------
    def to_flat(self) -> dict:
        return {key: getattr(self, attr) for key, (attr, _, _) in _KEYS.items()}

    @classmethod
    def from_flat(cls, flat: dict, base: "RunConfig | None" = None) -> "RunConfig":
        values = (base or cls()).__dict__.copy()
        for key, raw in flat.items():
            if key not in _KEYS:
                raise ConfigError(f"{key}: unknown configuration key")
            attr, conv, _ = _KEYS[key]
            if raw is None and conv not in (_opt_float, _opt_str):
                raise ConfigError(f"{key}: a value is required")
            try:
                values[attr] = conv(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: invalid value {raw!r} ({exc})") from None
        try:
            return cls(**values)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def digest(self) -> str:
        blob = json.dumps(self.to_flat(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def dump_yaml(self) -> str:
        return yaml.safe_dump(self.to_flat(), sort_keys=False)

    # -- builders -----------------------------------------------------------
    def exponents(self) -> tuple[float, float, float, float]:
        d = _REGIME_EXPONENTS[self.regime]
        got = (self.p1, self.p2, self.r1, self.r2)
        return tuple(float(g) if g is not None else dv for g, dv in zip(got, d))

    def params(self) -> ModelParams:
        p1, p2, r1, r2 = self.exponents()
        try:
            return ModelParams(N=self.N, mu1=self.mu1, mu2=self.mu2, beta=self.beta, p1=p1, p2=p2,
                               r1=r1, r2=r2, a1=self.a1, a2=self.a2, coupling_form=self.coupling_form)
        except ValueError as exc:
            raise ConfigError(f"{_key_for(exc, 'model')}: {exc}") from None

    def grid(self) -> RadialGrid:
        try:
            return build_grid(self.N, self.r_max, self.M)
        except ValueError as exc:
            raise ConfigError(f"{_key_for(exc, 'grid')}: {exc}") from None

    def gn_grid(self) -> RadialGrid:
        try:
            return build_grid(3, self.gn_r_max, self.gn_M)
        except ValueError as exc:
            raise ConfigError(f"{_key_for(exc, 'gn')}: {exc}") from None

    def kappa(self, c: float | None = None) -> KappaProfile:
        c = self.kappa_c if c is None else c
        try:
            if self.kappa_kind == "zero":
                return KappaProfile.zero()
            if self.kappa_kind == "rational":
                return KappaProfile.rational(c, self.kappa_q)
            if self.kappa_kind == "gaussian":
                return KappaProfile.gaussian(c, self.kappa_width)
            return KappaProfile.tabulated(self.kappa_radii, self.kappa_values)
        except ValueError as exc:
            raise ConfigError(f"kappa: {exc}") from None

    def subcritical_options(self) -> SubcriticalOptions:
        try:
            return SubcriticalOptions(max_iterations=self.max_iterations, tol=self.tol, step0=self.step0,
                                      backtrack=self.backtrack, restarts=self.restarts,
                                      perturbation=self.perturbation, sign_pattern=self.sign_pattern,
                                      init_width=self.init_width, seed=self.seed)
        except ValueError as exc:
            raise ConfigError(f"{_key_for(exc, 'solver')}: {exc}") from None

    def descent_options(self) -> DescentOptions:
        return self.subcritical_options().descent_options()

    def path_options(self) -> PathOptions:
        return PathOptions(nodes=self.path_nodes, max_sweeps=self.path_max_sweeps, step0=self.path_step0)

    def refine_options(self) -> RefineOptions:
        return RefineOptions(tol=self.refine_tol, max_newton=self.refine_max_newton,
                             gmres_maxiter=self.refine_gmres_maxiter)


def flatten(mapping: dict, prefix: str = "") -> dict:
    """Nested mappings become dotted keys; already-dotted keys pass through."""
    out = {}
    for k, v in mapping.items():
        key = f"{prefix}.{k}" if prefix else str(k)
        if isinstance(v, dict):
            out.update(flatten(v, key))
        else:
            out[key] = v
    return out


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Load a YAML config file (flat dotted keys or nested sections), then apply overrides."""
    flat: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"config file {path}: {exc.strerror}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path}: not valid YAML ({exc})") from None
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path}: top level must be a mapping")
        flat = flatten(data)
    cfg = RunConfig.from_flat(flat)
    if overrides:
        cfg = RunConfig.from_flat(overrides, base=cfg)
    return cfg


def config_keys() -> dict[str, tuple[str, Any, str]]:
    return dict(_KEYS)


def field_names() -> list[str]:
    return [f.name for f in fields(RunConfig)]
