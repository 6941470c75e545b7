"""Explicit constants: Gagliardo-Nirenberg constant, mountain-pass thresholds,
scalar ground-state energies and the admissibility checks on kappa."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .descent import DescentOptions, descend
from .grid import (
    Field,
    RadialGrid,
    apply_neg_laplacian,
    build_grid,
    dirichlet_energy,
    enforce_bc,
    solve_shifted,
)
from .model import KappaProfile, ModelParams, SUPERCRITICAL_CUBIC, _signed_pow, critical_sobolev

__all__ = [
    "GNConstant",
    "ThresholdSet",
    "ScalarGroundState",
    "KappaConditionReport",
    "gn_alpha",
    "gn_ratio",
    "estimate_gn_constant",
    "validate_gn_constant",
    "thresholds",
    "threshold_set",
    "scalar_ground_state",
    "scalar_least_energy",
    "kappa_condition_check",
]


def gn_alpha(N: int, p: float) -> float:
    return N * (p - 2.0) / (2.0 * p)


def _check_gn_exponent(N: int, p: float) -> None:
    if not (2.0 < p < critical_sobolev(N)):
        raise ValueError(f"p={p!r} outside (2, {critical_sobolev(N)}) for N={N}")


def gn_ratio(grid: RadialGrid, u, p: float) -> float:
    """|u|_p / (|grad u|_2^alpha |u|_2^(1-alpha)) on the grid."""
    v = u.values if isinstance(u, Field) else np.asarray(u, dtype=float)
    alpha = gn_alpha(grid.dimension, p)
    P = float(np.dot(grid.weights, np.abs(v) ** p))
    D = dirichlet_energy(grid, v)
    M = float(np.dot(grid.weights, v * v))
    if D <= 0 or M <= 0:
        raise ValueError("GN ratio undefined for the zero field")
    return P ** (1.0 / p) / (D ** (alpha / 2.0) * M ** ((1.0 - alpha) / 2.0))


@dataclass
class GNConstant:
    """Best Gagliardo-Nirenberg constant estimate with its validation record.

    ``value`` is the largest ratio reached by the ascent, so
    ``|u|_p <= value |grad u|_2^alpha |u|_2^(1-alpha)`` is expected for every
    field on the grid (checked on random fields up to a ``1 + 1e-6`` inflation).
    """

    N: int
    p: float
    alpha: float
    value: float
    iterations: int = 0
    validation_samples: int = 0
    violations: int = 0
    max_validation_ratio: float = 0.0

    @property
    def validated(self) -> bool:
        return self.validation_samples > 0 and self.violations == 0

    def to_dict(self) -> dict:
        return asdict(self)


def _log_ratio_and_grad(grid: RadialGrid, v: np.ndarray, p: float, alpha: float):
    w = grid.weights
    P = float(np.dot(w, np.abs(v) ** p))
    D = dirichlet_energy(grid, v)
    M = float(np.dot(w, v * v))
    F = math.log(P) / p - 0.5 * alpha * math.log(D) - 0.5 * (1.0 - alpha) * math.log(M)
    g = _signed_pow(v, p - 1) / P - alpha * apply_neg_laplacian(grid, v) / D - (1.0 - alpha) * v / M
    g[-1] = 0.0
    g[0] = g[1]
    return F, g


def _dilation_generator(grid: RadialGrid, v: np.ndarray) -> np.ndarray:
    # d/ds of e^{Ns/2} v(e^s r) at s = 0
    dv = np.gradient(v, grid.h)
    return enforce_bc(grid.nodes * dv + 0.5 * grid.dimension * v)


def _orthogonalize(w: np.ndarray, d: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    q: list[np.ndarray] = []
    for b in basis:
        for e in q:
            b = b - np.dot(w, b * e) * e
        n = math.sqrt(np.dot(w, b * b))
        if n > 0:
            q.append(b / n)
    for e in q:
        d = d - np.dot(w, d * e) * e
    return d


def estimate_gn_constant(
    N: int,
    p: float,
    grid: RadialGrid,
    *,
    max_iterations: int = 4000,
    rtol: float = 1e-15,
    width: float = 1.0,
    validate: int = 200,
    seed: int = 0,
) -> GNConstant:
    """Maximize the GN quotient by preconditioned ascent from a Gaussian.

    The quotient is invariant under amplitude scaling and dilation, so both
    directions are projected out of every step; this keeps the iterate at a
    resolved length scale instead of drifting toward the grid spacing.
    """
    _check_gn_exponent(N, p)
    if grid.dimension != N:
        raise ValueError(f"grid dimension {grid.dimension} != N={N}")
    alpha = gn_alpha(N, p)
    w = grid.weights
    v = enforce_bc(np.exp(-(grid.nodes**2) / width**2))
    v /= math.sqrt(np.dot(w, v * v))
    F, g = _log_ratio_and_grad(grid, v, p, alpha)
    best = F
    t = 1.0
    flat = 0
    it = 0
    for it in range(1, max_iterations + 1):
        sigma = dirichlet_energy(grid, v)
        d = solve_shifted(grid, g, sigma)
        d = _orthogonalize(w, d, [v, _dilation_generator(grid, v)])
        slope = float(np.dot(w, g * d))
        if not slope > 0:
            break
        step = t
        while step > 1e-12:
            trial = v + step * d
            trial /= math.sqrt(np.dot(w, trial * trial))
            Ft, gt = _log_ratio_and_grad(grid, trial, p, alpha)
            if Ft >= F + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            break
        gain = Ft - F
        v, F, g = trial, Ft, gt
        best = max(best, F)
        t = min(2.0 * step, 4.0)
        flat = flat + 1 if gain < rtol * abs(F) else 0
        if flat >= 20:
            break
    gn = GNConstant(N=N, p=p, alpha=alpha, value=math.exp(best), iterations=it)
    if validate:
        validate_gn_constant(gn, grid, samples=validate, seed=seed)
    return gn


def random_smooth_fields(grid: RadialGrid, count: int, seed: int = 0, min_width_cells: float = 10.0):
    """Random radial fields: sums of 1-4 Gaussian bumps, width >= ``min_width_cells`` * h."""
    rng = np.random.default_rng(seed)
    r = grid.nodes
    lo = min_width_cells * grid.h
    hi = max(lo * 1.5, 0.25 * grid.r_max)
    for _ in range(count):
        v = np.zeros(grid.node_count)
        for _ in range(rng.integers(1, 5)):
            width = math.exp(rng.uniform(math.log(lo), math.log(hi)))
            centre = rng.uniform(0.0, 0.6 * grid.r_max)
            v += rng.normal() * np.exp(-((r - centre) ** 2) / (2.0 * width**2))
        v = enforce_bc(v)
        if np.dot(grid.weights, v * v) > 0 and dirichlet_energy(grid, v) > 0:
            yield v


def validate_gn_constant(gn: GNConstant, grid: RadialGrid, samples: int = 200, seed: int = 0,
                         inflation: float = 1e-6) -> GNConstant:
    """Check the inequality on ``samples`` random smooth fields; updates ``gn`` in place."""
    bound = gn.value * (1.0 + inflation)
    worst = 0.0
    bad = 0
    n = 0
    for v in random_smooth_fields(grid, samples, seed=seed):
        q = gn_ratio(grid, v, gn.p)
        worst = max(worst, q / gn.value)
        bad += q > bound
        n += 1
    gn.validation_samples = n
    gn.violations = int(bad)
    gn.max_validation_ratio = worst
    return gn


@dataclass
class ThresholdSet:
    """Constants of the mountain-pass geometry for the cubic system in R^3.

    ``inf_bound`` is the analytic lower bound of J on B_{K2} and ``chain`` is
    ``K2/6 - K1/2 - 2 C1``, which must be positive for the two level sets to
    separate.  ``kappa_cap`` is the sup-norm cap ``5 / (18 C_a^2 a1 a2)``.
    """

    S: float
    C_a: float
    K2: float
    K1: float
    C1: float
    kappa_sup: float
    kappa_cap: float
    kappa_cap_lemma: float
    inf_bound: float
    chain: float
    chain_positive: bool
    kappa_below_cap: bool
    a1: float = 1.0
    a2: float = 1.0

    @property
    def certified(self) -> bool:
        return self.chain_positive and self.kappa_below_cap and self.inf_bound > 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["certified"] = self.certified
        return d


def threshold_set(C_a: float, kappa_sup: float, a1: float, a2: float, S: float | None = None) -> ThresholdSet:
    """Evaluate every threshold from C_a and |kappa|_inf."""
    if not (C_a > 0 and math.isfinite(C_a)):
        raise ValueError("C_a must be positive")
    K2 = 16.0 / (9.0 * C_a**2)
    C1 = kappa_sup * a1 * a2
    peak = 0.5 * K2 - 0.25 * C_a * K2**1.5
    x_star = 2.0 * (peak - 2.0 * C1)
    chain_positive = x_star > 0
    K1 = min(0.25 * K2, 0.9 * x_star) if chain_positive else 0.01 * K2
    return ThresholdSet(
        S=S if S is not None else float("nan"),
        C_a=C_a,
        K2=K2,
        K1=K1,
        C1=C1,
        kappa_sup=kappa_sup,
        kappa_cap=5.0 / (18.0 * C_a**2 * a1 * a2),
        kappa_cap_lemma=5.0 / (18.0 * C_a**2),
        inf_bound=peak - C1,
        chain=peak - 0.5 * K1 - 2.0 * C1,
        chain_positive=bool(chain_positive),
        kappa_below_cap=bool(kappa_sup < 5.0 / (18.0 * C_a**2 * a1 * a2)),
        a1=a1,
        a2=a2,
    )


def thresholds(params: ModelParams, kappa: KappaProfile, gn4: GNConstant, grid: RadialGrid | None = None,
               S_override: float | None = None) -> ThresholdSet:
    """Thresholds for the cubic system; ``S^4`` is ``gn4.value^4`` unless overridden."""
    if params.regime != SUPERCRITICAL_CUBIC:
        raise ValueError("thresholds need the supercritical cubic regime (N=3, p=4, r=2)")
    if gn4.N != 3 or gn4.p != 4.0:
        raise ValueError("thresholds need the GN constant for N=3, p=4")
    S = S_override if S_override is not None else gn4.value
    beta_plus = max(params.beta_equation, 0.0)
    C_a = ((params.mu1 + beta_plus) * params.a1 + (params.mu2 + beta_plus) * params.a2) * S**4
    if grid is not None:
        ksup = kappa.sup_norm(grid)
    else:
        ksup = abs(kappa.c) if kappa.kind in ("rational", "gaussian") else (
            float(np.max(np.abs(kappa.table))) if kappa.kind == "tabulated" else 0.0)
    return threshold_set(C_a, ksup, params.a1, params.a2, S=S)


@dataclass
class ScalarGroundState:
    """Least-energy solution of the scalar problem on the sphere |u|_2 = a.

    ``lam`` follows the ``-Delta u - lam u = mu |u|^{p-2} u`` convention, so it is negative.
    """

    u: Field
    lam: float
    m: float
    mu: float
    p: float
    a: float
    grad_norm: float = 0.0
    iterations: int = 0
    converged: bool = False
    status: str = ""

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "m": self.m, "mu": self.mu, "p": self.p, "a": self.a,
                "grad_norm": self.grad_norm, "iterations": self.iterations,
                "converged": self.converged, "status": self.status}


def scalar_ground_state(N: int, p: float, mu: float, a: float, grid: RadialGrid,
                        opts: DescentOptions | None = None, *, width: float | None = None,
                        seed: int = 0) -> ScalarGroundState:
    """Minimize I(u) = 1/2 |grad u|^2 - mu/p |u|_p^p on |u|_2 = a with u >= 0."""
    if not (2.0 < p < 2.0 + 4.0 / N):
        raise ValueError(f"p={p!r} is not mass-subcritical for N={N}")
    if mu <= 0 or a <= 0:
        raise ValueError("mu and a must be positive")
    if grid.dimension != N:
        raise ValueError(f"grid dimension {grid.dimension} != N={N}")
    opts = opts or DescentOptions()
    w = grid.weights
    width = width if width is not None else 0.1 * grid.r_max

    def energy(U):
        v = U[0]
        return 0.5 * dirichlet_energy(grid, v) - mu / p * float(np.dot(w, np.abs(v) ** p))

    def grad(U):
        g = apply_neg_laplacian(grid, U) - mu * _signed_pow(U, p - 1)
        g[:, -1] = 0.0
        g[:, 0] = g[:, 1]
        return g

    U0 = enforce_bc(np.exp(-(grid.nodes**2) / width**2))[None, :]
    res = descend(grid, energy, grad, U0, [a * a], opts, sign_fn=np.abs, seed=seed)
    return ScalarGroundState(
        u=Field(grid, res.U[0]), lam=float(res.multipliers[0]), m=res.energy, mu=mu, p=p, a=a,
        grad_norm=res.grad_norm, iterations=res.iterations, converged=res.converged, status=res.status,
    )


def scalar_least_energy(N: int, p: float, mu: float, a: float, r_max: float, M: int,
                        opts: DescentOptions | None = None, *, seed: int = 0,
                        tail_tol: float = 1e-10, max_doublings: int = 6) -> ScalarGroundState:
    """Scalar ground state on a ball large enough that truncation is negligible.

    Small masses spread the ground state over a length scale that can far exceed
    a domain chosen for the coupled problem, and the Dirichlet wall then pushes
    the discrete least energy above zero.  Starting from ``r_max`` with ``M``
    nodes, the radius is doubled until the mass fraction beyond ``0.9 r_max``
    is below ``tail_tol``.
    """
    gs = None
    for _ in range(max_doublings + 1):
        grid = build_grid(N, r_max, M)
        gs = scalar_ground_state(N, p, mu, a, grid, opts, seed=seed)
        v = gs.u.values
        tail = float(np.dot(grid.weights[grid.nodes > 0.9 * r_max], v[grid.nodes > 0.9 * r_max] ** 2))
        if tail <= tail_tol * a * a:
            return gs
        r_max *= 2.0
    gs.status = "truncated"
    return gs


@dataclass
class KappaConditionReport:
    """Clause-by-clause admissibility of a coupling profile."""

    variant: str
    clauses: dict = field(default_factory=dict)
    T1: float = 0.0
    T2: float = 0.0
    decay_exponent: float = math.inf
    lp_exponent: float | None = None

    @property
    def passed(self) -> bool:
        return all(self.clauses.values())

    def to_dict(self) -> dict:
        return {"variant": self.variant, "clauses": dict(self.clauses), "passed": self.passed,
                "T1": self.T1, "T2": self.T2, "decay_exponent": self.decay_exponent,
                "lp_exponent": self.lp_exponent}


def _tail_decay(grid: RadialGrid, vals: np.ndarray) -> float:
    # least-squares slope of log|kappa| against log r on the outer half
    r = grid.nodes
    sel = (r >= 0.5 * grid.r_max) & (np.abs(vals) > 0)
    if np.count_nonzero(sel) < 4:
        return math.inf
    slope = np.polyfit(np.log(r[sel]), np.log(np.abs(vals[sel])), 1)[0]
    return float(-slope)


def kappa_condition_check(kappa: KappaProfile, grid: RadialGrid, th: ThresholdSet,
                          variant: str = "thm1_3") -> KappaConditionReport:
    """Evaluate the hypotheses placed on kappa by the existence theorems.

    ``variant="thm1_3"`` checks the sup-norm cap with the product ``a1 a2`` and the
    nodewise inequality ``(2/3) r kappa' + kappa >= 0``; ``variant="K1_condition"``
    uses the weaker cap ``5/(18 C_a^2)`` and searches the smallest admissible
    ``T1, T2 >= 0`` with ``r kappa' >= max(-3 T1, -1.5 T2)``.
    """
    if variant not in ("thm1_3", "K1_condition"):
        raise ValueError(f"unknown variant {variant!r}")
    r = grid.nodes
    k = kappa(r)
    rk = kappa.radial_slope(r)
    N = grid.dimension
    sup = float(np.max(np.abs(k)))
    decay = _tail_decay(grid, k)
    lp = None if kappa.is_zero else max(N / 2.0, N / decay) * 1.01 if decay > 0 else None
    lp_ok = kappa.is_zero or (decay > 0 and np.all(np.isfinite(k)))
    clauses = {
        "nonnegative": bool(np.all(k >= 0)),
        "sign_consistent": kappa.sign_consistent(grid),
        "slope_bounded": bool(np.all(np.isfinite(rk))),
        "lp_integrable": bool(lp_ok),
    }
    rep = KappaConditionReport(variant=variant, decay_exponent=decay, lp_exponent=lp)
    if variant == "thm1_3":
        clauses["sup_below_cap"] = bool(sup < th.kappa_cap)
        clauses["pohozaev_sign"] = bool(np.all(2.0 / 3.0 * rk + k >= 0))
    else:
        clauses["sup_below_cap"] = bool(sup < th.kappa_cap_lemma)
        m = float(np.min(rk))
        rep.T1 = max(0.0, -m / 3.0)
        rep.T2 = max(0.0, -m / 1.5)
        # max(-3T1, -1.5T2) <= min r kappa' is met by the minimal pair; check the budget
        clauses["t_budget"] = bool(rep.T1 + 2.0 * rep.T2 < 1.0 / (108.0 * th.C_a**2 * th.a1 * th.a2))
    rep.clauses = clauses
    return rep
