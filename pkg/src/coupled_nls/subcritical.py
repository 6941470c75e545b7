"""Global constrained minimization of J on S_1 x S_2 (mass-subcritical regime)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .descent import DescentOptions, descend
from .grid import RadialGrid, enforce_bc
from .model import (
    SUBCRITICAL,
    KappaProfile,
    ModelParams,
    SolveReport,
    State,
    _energy_arrays,
    _gradient_arrays,
    kkt_residual,
    virial,
)

__all__ = ["SubcriticalOptions", "VerificationRecord", "sign_function", "default_sign_pattern",
           "solve_min", "verify_subcritical"]

SIGN_PATTERNS = ("both_positive", "mixed_u1neg", "mixed_u2neg", "free")


@dataclass
class SubcriticalOptions:
    """Descent settings; ``sign_pattern=None`` picks the pattern from the sign of kappa."""

    max_iterations: int = 50000
    tol: float = 1e-8
    step0: float = 1e-2
    backtrack: float = 0.5
    restarts: int = 5
    perturbation: float = 1e-2
    sign_pattern: str | None = None
    init_width: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations <= 0 or self.restarts < 0:
            raise ValueError("max_iterations must be positive and restarts nonnegative")
        if not (0 < self.tol < 1e-2):
            raise ValueError("tol must lie in (0, 1e-2)")
        if self.step0 <= 0 or self.perturbation <= 0 or self.init_width <= 0:
            raise ValueError("step0, perturbation and init_width must be positive")
        if not (0 < self.backtrack < 1):
            raise ValueError("backtrack must lie in (0, 1)")
        if self.sign_pattern is not None and self.sign_pattern not in SIGN_PATTERNS:
            raise ValueError(f"unknown sign_pattern {self.sign_pattern!r}")

    def descent_options(self) -> DescentOptions:
        return DescentOptions(max_iterations=self.max_iterations, tol=self.tol, step0=self.step0,
                              backtrack=self.backtrack, restarts=self.restarts,
                              perturbation=self.perturbation)


def default_sign_pattern(kappa: KappaProfile) -> str:
    return "both_positive" if kappa.sign == "nonnegative" else "mixed_u1neg"


def sign_function(pattern: str):
    """Nodewise sign enforcement on a stacked (2, M) array, or None for ``free``."""
    if pattern == "both_positive":
        return np.abs
    if pattern == "mixed_u1neg":
        return lambda U: np.abs(U) * np.array([[-1.0], [1.0]])
    if pattern == "mixed_u2neg":
        return lambda U: np.abs(U) * np.array([[1.0], [-1.0]])
    if pattern == "free":
        return None
    raise ValueError(f"unknown sign_pattern {pattern!r}")


def solve_min(params: ModelParams, kappa: KappaProfile, grid: RadialGrid, init: State | None = None,
              opts: SubcriticalOptions | None = None) -> SolveReport:
    """Minimize J over S_1 x S_2 by preconditioned projected gradient descent.

    After every accepted step the sign pattern is imposed (absolute values for
    kappa >= 0, opposite signs for kappa <= 0).  Stagnation above ``tol``
    triggers a seeded random tangent perturbation, at most ``restarts`` times.
    """
    opts = opts or SubcriticalOptions()
    if params.regime != SUBCRITICAL:
        raise ValueError(f"solve_min needs the subcritical regime, got {params.regime!r}")
    if grid.dimension != params.N:
        raise ValueError(f"grid dimension {grid.dimension} != params.N {params.N}")
    pattern = opts.sign_pattern or default_sign_pattern(kappa)
    sign_fn = sign_function(pattern)
    kap = kappa(grid.nodes)
    if init is None:
        g = enforce_bc(np.exp(-(grid.nodes**2) / opts.init_width**2))
        U0 = np.stack([g, g])
    else:
        if not init.grid.same_as(grid):
            raise ValueError("initial state lives on a different grid")
        U0 = init.arrays()

    res = descend(
        grid,
        lambda U: _energy_arrays(grid, params, kap, U),
        lambda U: _gradient_arrays(grid, params, kap, U),
        U0,
        params.masses(),
        opts.descent_options(),
        sign_fn=sign_fn,
        seed=opts.seed,
    )
    state = State.from_arrays(grid, res.U[0], res.U[1])
    lam = res.multipliers
    return SolveReport(
        state=state,
        lambda1=float(lam[0]),
        lambda2=float(lam[1]),
        energy=res.energy,
        grad_norm=res.grad_norm,
        virial=virial(params, kappa, state),
        iterations=res.iterations,
        converged=res.converged,
        status=res.status if res.converged else "failed",
        sign_pattern=pattern,
        kkt_residual=kkt_residual(params, kappa, state, (lam[0], lam[1])),
        flags={
            "descent_status": res.status,
            "restarts_used": res.restarts_used,
            "max_mass_defect": res.max_mass_defect,
            "sign_step_violations": res.sign_step_violations,
            "max_energy_increase": res.max_energy_increase,
        },
    )


@dataclass
class VerificationRecord:
    """Named boolean checks; ``applicable=False`` when the input was not converged."""

    applicable: bool
    checks: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.applicable and all(self.checks.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _sign_ok(v: np.ndarray, sign: float, zero_tol: float = 1e-10) -> bool:
    body = v[:-1]
    live = np.abs(body) > zero_tol
    return bool(np.any(live) and np.all(sign * body[live] > 0))


def expected_signs(pattern: str, state: State) -> tuple[float, float]:
    if pattern == "both_positive":
        return 1.0, 1.0
    if pattern == "mixed_u1neg":
        return -1.0, 1.0
    if pattern == "mixed_u2neg":
        return 1.0, -1.0
    # free: read the orientation off the dominant values
    s1 = 1.0 if np.sum(state.u1.values) >= 0 else -1.0
    s2 = 1.0 if np.sum(state.u2.values) >= 0 else -1.0
    return s1, s2


def tail_mass_fraction(state: State, fraction: float = 0.9) -> float:
    grid = state.grid
    sel = grid.nodes > fraction * grid.r_max
    U = state.arrays()
    tail = (U[:, sel] ** 2) @ grid.weights[sel]
    return float(np.max(tail / ((U**2) @ grid.weights)))


def verify_subcritical(report: SolveReport, params: ModelParams, kappa: KappaProfile,
                       oracles, tol: float | None = None) -> VerificationRecord:
    """Check the predictions of the subcritical existence theorems on a solve.

    ``oracles`` is the pair of decoupled least energies (m1, m2), given as
    floats or as objects with an ``m`` attribute.  They should come from
    untruncated scalar solves (see ``constants.scalar_least_energy``).
    """
    if not report.converged:
        return VerificationRecord(applicable=False)
    m1, m2 = (getattr(o, "m", o) for o in oracles)
    tol = tol if tol is not None else 1e-8
    st = report.state
    s1, s2 = expected_signs(report.sign_pattern, st)
    if report.sign_pattern == "free":
        want_same = kappa.sign == "nonnegative"
        orientation = (s1 == s2) == want_same
    else:
        orientation = True
    resid = kkt_residual(params, kappa, st, (report.lambda1, report.lambda2))
    tail = tail_mass_fraction(st)
    checks = {
        "multipliers_negative": report.lambda1 < 0 and report.lambda2 < 0,
        "sign_pattern_matches": orientation and _sign_ok(st.u1.values, s1) and _sign_ok(st.u2.values, s2),
        "energy_below_decoupled": report.energy <= m1 + m2 + 1e-6,
        "energy_negative": report.energy < 0,
        "decoupled_negative": m1 + m2 < 0,
        "pde_residual_small": resid <= 10 * tol,
        "tail_mass_small": tail < 1e-8,
    }
    values = {"lambda1": report.lambda1, "lambda2": report.lambda2, "energy": report.energy,
              "decoupled_energy": m1 + m2, "pde_residual": resid, "tail_mass": tail}
    return VerificationRecord(applicable=True, checks={k: bool(v) for k, v in checks.items()},
                              values=values)
