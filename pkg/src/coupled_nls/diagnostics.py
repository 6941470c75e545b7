"""Run dispatch, persistence (JSON report, CSV profiles) and the verification table."""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path as FsPath

import numpy as np
import yaml

from .config import ConfigError, RunConfig
from .constants import (
    estimate_gn_constant,
    kappa_condition_check,
    scalar_ground_state,
    scalar_least_energy,
    thresholds,
)
from .grid import RadialGrid, build_grid
from .model import State
from .mountain_pass import solve_mountain_pass
from .subcritical import solve_min, verify_subcritical

__all__ = [
    "SCHEMA_VERSION",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_NONCONVERGED",
    "EXIT_VERIFY",
    "RunReport",
    "run",
    "emit_profiles",
    "read_profile",
    "verify_command",
    "sweep",
    "WORKERS_ENV",
]

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_VERIFY = 0, 1, 2, 3
WORKERS_ENV = "COUPLED_NLS_WORKERS"
REPORT_NAME = "report.json"


def _clean(x):
    """Convert numpy scalars/arrays and tuples into plain JSON types."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


@dataclass
class RunReport:
    """Serializable outcome of one run; ``read(write(x)) == x``."""

    regime: str
    config: dict
    config_digest: str
    status: str = "ok"
    exit_code: int = EXIT_OK
    constants: dict = field(default_factory=dict)
    solves: dict = field(default_factory=dict)
    verification: dict = field(default_factory=dict)
    clauses: list = field(default_factory=list)
    profiles: list = field(default_factory=list)
    timestamps: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(_clean(asdict(self)), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        data = json.loads(text)
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {data.get('schema_version')!r}")
        return cls(**data)

    def write(self, path) -> FsPath:
        path = FsPath(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, path) -> "RunReport":
        return cls.from_json(FsPath(path).read_text(encoding="utf-8"))


def _solve_dict(rep) -> dict:
    keys = ("lambda1", "lambda2", "energy", "grad_norm", "virial", "iterations", "converged",
            "status", "sign_pattern", "kkt_residual", "flags")
    d = {k: getattr(rep, k) for k in keys if hasattr(rep, k)}
    m1, m2 = rep.state.masses()
    d["mass1"], d["mass2"] = m1, m2
    return _clean(d)


# ---------------------------------------------------------------------------
# profiles


def emit_profiles(report, directory, name: str = "profile") -> dict:
    """Write ``<name>.csv`` (header ``r,u1,u2``, 17 significant digits) and ``<name>.yaml``.

    Returns:
        ``{"csv": path, "meta": path}`` as strings.

    Raises:
        OSError: if the directory cannot be created or written.
    """
    d = FsPath(directory)
    d.mkdir(parents=True, exist_ok=True)
    st: State = report.state
    grid = st.grid
    csv_path = d / f"{name}.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["r", "u1", "u2"])
        for r, a, b in zip(grid.nodes, st.u1.values, st.u2.values):
            wr.writerow([f"{r:.17g}", f"{a:.17g}", f"{b:.17g}"])
    m1, m2 = st.masses()
    meta = {
        "lambda1": float(report.lambda1),
        "lambda2": float(report.lambda2),
        "energy": float(report.energy),
        "virial": None if report.virial is None else float(report.virial),
        "mass1": float(m1),
        "mass2": float(m2),
        "N": grid.dimension,
        "r_max": float(grid.r_max),
        "M": grid.node_count,
    }
    meta_path = d / f"{name}.yaml"
    meta_path.write_text(yaml.safe_dump(meta, sort_keys=False), encoding="utf-8")
    return {"csv": str(csv_path), "meta": str(meta_path)}


def _relative(paths: dict) -> dict:
    # reports store file names relative to their own directory so they can be moved
    return {k: FsPath(v).name for k, v in paths.items()}


def read_profile(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read back ``r, u1, u2`` from a profile CSV."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1], data[:, 2]


# ---------------------------------------------------------------------------
# run


def _clause(name: str, statement: str, ok: bool | None) -> dict:
    return {"clause": name, "statement": statement, "passed": None if ok is None else bool(ok)}


def _run_scalar(cfg: RunConfig, rep: RunReport) -> None:
    params = cfg.params()
    grid = cfg.grid()
    opts = cfg.descent_options()
    comps = [(params.p1, params.mu1, params.a1), (params.p2, params.mu2, params.a2)]
    gs = [scalar_ground_state(params.N, p, mu, a, grid, opts, seed=cfg.seed) for p, mu, a in comps]
    rep.solves = {f"scalar{i + 1}": s.to_dict() for i, s in enumerate(gs)}
    conv = all(s.converged for s in gs)
    rep.clauses = [
        _clause("scalar_converged", "projected gradient below tolerance", conv),
        _clause("scalar_energy_negative", "least energy m < 0 for each component", all(s.m < 0 for s in gs)),
        _clause("scalar_multiplier_negative", "multiplier < 0 for each component", all(s.lam < 0 for s in gs)),
    ]
    if not conv:
        rep.status, rep.exit_code = "nonconverged", EXIT_NONCONVERGED


def _gn4(cfg: RunConfig):
    return estimate_gn_constant(3, 4.0, cfg.gn_grid(), seed=cfg.seed)


def _resolve_kappa(cfg: RunConfig, params, gn4, grid: RadialGrid):
    if cfg.kappa_c_over_cap is None:
        return cfg.kappa()
    base = thresholds(params, cfg.kappa(0.0), gn4, S_override=cfg.gn_S_override)
    return cfg.kappa(cfg.kappa_c_over_cap * base.kappa_cap)


def _run_constants(cfg: RunConfig, rep: RunReport) -> None:
    params = cfg.params()
    grid = cfg.grid()
    out: dict = {}
    clauses = []
    if params.regime == "supercritical_cubic":
        gn4 = _gn4(cfg)
        kappa = _resolve_kappa(cfg, params, gn4, grid)
        th = thresholds(params, kappa, gn4, grid, S_override=cfg.gn_S_override)
        out["gn"] = {"N3_p4": gn4.to_dict()}
        out["thresholds"] = th.to_dict()
        out["kappa"] = kappa.describe()
        for variant in ("thm1_3", "K1_condition"):
            out[f"kappa_{variant}"] = kappa_condition_check(kappa, grid, th, variant).to_dict()
        clauses += [
            _clause("gn_validated", "GN inequality holds on random fields", gn4.validated),
            _clause("k2_formula", "K2 = 16 / (9 C_a^2)", abs(th.K2 - 16.0 / (9.0 * th.C_a**2)) <= 1e-12 * th.K2),
            _clause("geometry_chain", "K2/6 - K1/2 - 2 C1 > 0", th.chain_positive),
        ]
    else:
        gns = {}
        for name, p in (("p1", params.p1), ("p2", params.p2)):
            g = estimate_gn_constant(params.N, p, grid, seed=cfg.seed)
            gns[name] = g.to_dict()
            clauses.append(_clause(f"gn_validated_{name}", f"GN inequality (p={p}) on random fields", g.validated))
        out["gn"] = gns
    rep.constants = out
    rep.clauses = clauses


def _run_subcritical(cfg: RunConfig, rep: RunReport, out_dir: FsPath | None) -> None:
    params = cfg.params()
    grid = cfg.grid()
    kappa = cfg.kappa()
    sol = solve_min(params, kappa, grid, None, cfg.subcritical_options())
    opts = cfg.descent_options()
    comps = ((params.p1, params.mu1, params.a1), (params.p2, params.mu2, params.a2))
    oracles = [scalar_least_energy(params.N, p, mu, a, grid.r_max, grid.node_count, opts, seed=cfg.seed)
               for p, mu, a in dict.fromkeys(comps)]
    if len(oracles) == 1:
        oracles = oracles * 2
    ver = verify_subcritical(sol, params, kappa, oracles, tol=cfg.tol)
    rep.solves = {"minimizer": _solve_dict(sol),
                  "decoupled": {"m1": oracles[0].m, "m2": oracles[1].m,
                                "status": [o.status for o in oracles]}}
    rep.verification = _clean(ver.to_dict())
    c = ver.checks
    rep.clauses = [
        _clause("minimizer_found", "descent reached the gradient tolerance", sol.converged),
        _clause("multipliers_negative", "lambda1 < 0 and lambda2 < 0", c.get("multipliers_negative")),
        _clause("sign_pattern", "component signs follow the sign of kappa", c.get("sign_pattern_matches")),
        _clause("energy_below_decoupled", "J <= m1 + m2", c.get("energy_below_decoupled")),
        _clause("decoupled_negative", "m1 + m2 < 0 (scalar least energies)", c.get("decoupled_negative")),
        _clause("energy_negative", "J < 0", c.get("energy_negative")),
        _clause("pde_residual", "KKT residual within 10 tol", c.get("pde_residual_small")),
        _clause("radial_truncation", "tail mass beyond 0.9 r_max below 1e-8", c.get("tail_mass_small")),
    ]
    if out_dir is not None:
        rep.profiles = [_relative(emit_profiles(sol, out_dir, "minimizer"))]
    if not sol.converged:
        rep.status, rep.exit_code = "nonconverged", EXIT_NONCONVERGED
    elif not ver.passed:
        rep.status, rep.exit_code = "verification_failed", EXIT_VERIFY


def _run_mountain_pass(cfg: RunConfig, rep: RunReport, out_dir: FsPath | None) -> None:
    params = cfg.params()
    grid = cfg.grid()
    gn4 = _gn4(cfg)
    kappa = _resolve_kappa(cfg, params, gn4, grid)
    th = thresholds(params, kappa, gn4, grid, S_override=cfg.gn_S_override)
    try:
        mp = solve_mountain_pass(params, kappa, grid, th, path_opts=cfg.path_options(),
                                 refine_opts=cfg.refine_options(), samples=cfg.geometry_samples,
                                 seed=cfg.seed, base_width=cfg.path_base_width, variant=cfg.verify_variant)
    except RuntimeError as exc:
        rep.status, rep.exit_code = f"failed: {exc}", EXIT_NONCONVERGED
        return
    rep.constants = {"gn": {"N3_p4": gn4.to_dict()}, "thresholds": th.to_dict(), "kappa": kappa.describe()}
    rep.solves = {
        "mountain_pass": {"c": mp.c, "path_collapse": mp.path_collapse,
                          "endpoint_energies": list(mp.endpoint_energies),
                          "path_history": mp.path_history[-20:], "geometry": mp.geometry.to_dict()},
        "critical_point": _solve_dict(mp.refine),
    }
    ver = mp.verification
    rep.verification = _clean(ver.to_dict())
    c = ver.checks
    g = mp.geometry
    rep.clauses = [
        _clause("geometry_separation", "sampled sup over A_K1 < analytic inf bound on B_K2 > 0", g.separation),
        _clause("minimax_positive", "path maximum c > 0", mp.c > 0),
        _clause("minimax_above_ring", "c >= sampled inf over B_K2 - 1e-6", mp.c >= g.inf_B - 1e-6),
        _clause("critical_point", "KKT residual <= refine.tol", c.get("kkt_residual_small")),
        _clause("multipliers_negative", "both multipliers negative", c.get("both_multipliers_negative")),
        _clause("multiplier_sum", "lambda1 a1^2 + lambda2 a2^2 below the kinetic/coupling bound",
                c.get("multiplier_sum_bound")),
        _clause("positive_radial", "u1 > 0 and u2 > 0 on interior nodes", c.get("positive_interior")),
        _clause("energy_positive", "J > 0 at the critical point", c.get("energy_positive")),
        _clause("virial", "|dJ~/ds| <= 1e-5 kinetic", c.get("virial_small")),
        _clause("kappa_hypotheses", f"kappa conditions ({cfg.verify_variant})", c.get("kappa_conditions")),
    ]
    if out_dir is not None:
        rep.profiles = [_relative(emit_profiles(mp.refine, out_dir, "critical_point"))]
    if not mp.converged:
        rep.status, rep.exit_code = "nonconverged", EXIT_NONCONVERGED
    elif not all(cl["passed"] for cl in rep.clauses):
        rep.status, rep.exit_code = "verification_failed", EXIT_VERIFY


def run(cfg: RunConfig, *, write: bool = True) -> RunReport:
    """Dispatch on ``cfg.regime``, write ``report.json`` and profiles into ``cfg.output_dir``."""
    if cfg.regime == "verify":
        raise ConfigError("regime: 'verify' is handled by verify_command")
    t0 = time.time()
    rep = RunReport(regime=cfg.regime, config=_clean(cfg.to_flat()), config_digest=cfg.digest())
    out_dir = FsPath(cfg.output_dir) if write else None
    if cfg.regime == "scalar":
        _run_scalar(cfg, rep)
    elif cfg.regime == "constants":
        _run_constants(cfg, rep)
    elif cfg.regime == "subcritical":
        _run_subcritical(cfg, rep, out_dir)
    elif cfg.regime == "mountain_pass":
        _run_mountain_pass(cfg, rep, out_dir)
    if rep.exit_code == EXIT_OK and any(cl["passed"] is False for cl in rep.clauses):
        rep.status, rep.exit_code = "verification_failed", EXIT_VERIFY
    if cfg.report_timestamps:
        rep.timestamps = {"started": t0, "finished": time.time()}
    if write:
        rep.write(out_dir / REPORT_NAME)
    return rep


# ---------------------------------------------------------------------------
# verify


def format_table(rep: RunReport) -> str:
    rows = [(c["clause"], c["statement"], "n/a" if c["passed"] is None else ("PASS" if c["passed"] else "FAIL"))
            for c in rep.clauses]
    w0 = max([len(r[0]) for r in rows] + [6])
    w1 = max([len(r[1]) for r in rows] + [5])
    lines = [f"{'clause':<{w0}}  {'check':<{w1}}  result", "-" * (w0 + w1 + 10)]
    lines += [f"{a:<{w0}}  {b:<{w1}}  {c}" for a, b, c in rows]
    return "\n".join(lines)


def check_artifacts(rep: RunReport, current: RunConfig | None = None, base=".") -> list[str]:
    """Problems that make a stored report unusable (empty when it is fresh).

    Profile paths in the report are resolved against ``base``, the directory
    holding the report.
    """
    base = FsPath(base)
    problems = []
    try:
        echoed = RunConfig.from_flat(rep.config)
    except ConfigError as exc:
        return [f"report config invalid: {exc}"]
    if echoed.digest() != rep.config_digest:
        problems.append("config digest does not match the echoed config")
    if current is not None:
        mine = RunConfig.from_flat({**current.to_flat(), "regime": rep.regime,
                                    "verify.report": rep.config.get("verify.report")})
        if mine.digest() != rep.config_digest:
            problems.append("report was produced with a different configuration (stale)")
    for prof in rep.profiles:
        for key in ("csv", "meta"):
            if not (base / prof[key]).is_file():
                problems.append(f"missing profile file {base / prof[key]}")
    if not problems:
        for prof in rep.profiles:
            meta = yaml.safe_load((base / prof["meta"]).read_text(encoding="utf-8"))
            r, u1, u2 = read_profile(base / prof["csv"])
            grid = build_grid(meta["N"], meta["r_max"], meta["M"])
            for name, u in (("mass1", u1), ("mass2", u2)):
                if abs(float(np.dot(grid.weights, u * u)) - meta[name]) > 1e-10 * max(1.0, meta[name]):
                    problems.append(f"profile {prof['csv']} does not match its {name}")
    return problems


def verify_command(cfg: RunConfig, report_path: str | None = None, *, out=print,
                   compare_config: bool = False) -> int:
    """Print the clause table of a stored report (or of a fresh run) and return the exit code."""
    path = report_path or cfg.verify_report
    if path is None:
        if cfg.regime in ("verify",):
            out("verify: no report given (set verify.report or pass --report)")
            return EXIT_CONFIG
        rep = run(cfg)
    else:
        try:
            rep = RunReport.read(path)
        except FileNotFoundError:
            out(f"verify: report file {path} not found")
            return EXIT_CONFIG
        except (ValueError, TypeError) as exc:
            out(f"verify: cannot read report {path}: {exc}")
            return EXIT_CONFIG
        try:
            problems = check_artifacts(rep, cfg if compare_config else None, FsPath(path).parent)
        except (OSError, ValueError, KeyError, yaml.YAMLError) as exc:
            problems = [f"unreadable artifacts: {exc}"]
        if problems:
            for p in problems:
                out(f"verify: {p}")
            return EXIT_CONFIG
    out(f"regime: {rep.regime}   status: {rep.status}")
    out(format_table(rep))
    if rep.exit_code == EXIT_NONCONVERGED:
        return EXIT_NONCONVERGED
    if not rep.clauses or any(c["passed"] is False for c in rep.clauses):
        return EXIT_VERIFY
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV}: not an integer: {raw!r}") from None
        if n < 1:
            raise ConfigError(f"{WORKERS_ENV}: must be >= 1")
        return n
    return os.cpu_count() or 1


def sweep(cfg: RunConfig, axes: dict[str, list], workers: int | None = None) -> list[RunReport]:
    """Run the Cartesian product of ``axes`` (dotted key -> values) in worker threads.

    Each variant writes into ``<output_dir>/run_<index>``; results keep input order.
    """
    keys = list(axes)
    grids = [list(axes[k]) for k in keys]
    combos = [[]]
    for vals in grids:
        combos = [c + [v] for c in combos for v in vals]
    variants = []
    for i, combo in enumerate(combos):
        over = dict(zip(keys, combo))
        over["output_dir"] = str(FsPath(cfg.output_dir) / f"run_{i:03d}")
        variants.append(RunConfig.from_flat(over, base=cfg))
    n = workers or worker_count()
    with ThreadPoolExecutor(max_workers=n) as pool:
        reports = list(pool.map(run, variants))
    summary = {
        "schema_version": SCHEMA_VERSION,
        "axes": _clean(axes),
        "runs": [{"index": i, "overrides": dict(zip(keys, c)), "status": r.status, "exit_code": r.exit_code}
                 for i, (c, r) in enumerate(zip(combos, reports))],
    }
    FsPath(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    (FsPath(cfg.output_dir) / "sweep.json").write_text(json.dumps(_clean(summary), indent=2, sort_keys=True),
                                                        encoding="utf-8")
    return reports

