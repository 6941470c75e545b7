"""Constrained mountain pass for the cubic system in R^3.

Pipeline: endpoints on the scaling fiber, sampled check of the level-set
separation, elastic-string minimization of the path maximum, Newton-Krylov
refinement of the top node, and verification of the predicted signs.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.sparse.linalg import LinearOperator, gmres

from .constants import (
    ThresholdSet,
    kappa_condition_check,
    random_smooth_fields,
)
from .grid import RadialGrid, apply_neg_laplacian, enforce_bc, solve_shifted
from .model import (
    SUPERCRITICAL_CUBIC,
    KappaProfile,
    ModelParams,
    SolveReport,
    State,
    _abs_pow,
    _energy_arrays,
    _gradient_arrays,
    _masses,
    _multipliers,
    _precond_shift,
    _preconditioned_tangent,
    _project,
    _renormalize,
    _signed_pow,
    _terms_arrays,
    _wnorm,
    ds_extended_energy,
    extended_energy,
    kkt_residual,
    scale_state,
)
from .subcritical import VerificationRecord, _sign_ok

__all__ = [
    "Path",
    "PathOptions",
    "RefineOptions",
    "GeometryRecord",
    "MountainPassReport",
    "build_endpoints",
    "check_geometry",
    "minimize_max_along_path",
    "refine_critical",
    "verify_supercritical",
    "solve_mountain_pass",
]


def _require_cubic(params: ModelParams) -> None:
    if params.regime != SUPERCRITICAL_CUBIC:
        raise ValueError(f"mountain pass needs the supercritical cubic regime, got {params.regime!r}")


def _state_from(grid: RadialGrid, U: np.ndarray) -> State:
    return State.from_arrays(grid, U[0], U[1])


def base_pair(grid: RadialGrid, params: ModelParams, width: float = 1.0) -> State:
    """Renormalized positive Gaussian pair exp(-r^2/width^2)."""
    g = enforce_bc(np.exp(-(grid.nodes**2) / width**2))
    U = _renormalize(grid, np.stack([g, g]), params.masses())
    return _state_from(grid, U)


def _kinetic(grid: RadialGrid, params: ModelParams, U: np.ndarray) -> float:
    return _terms_arrays(grid, params, np.zeros(grid.node_count), U).kinetic


# ---------------------------------------------------------------------------
# endpoints


@dataclass
class Endpoints:
    v: State
    w: State
    s_v: float
    s_w: float
    base: State
    energy_v: float
    energy_w: float
    kinetic_v: float
    target_w: float


def build_endpoints(params: ModelParams, kappa: KappaProfile, th: ThresholdSet, grid: RadialGrid,
                    *, base_width: float = 1.0, s_cap: float = 6.0, margin: float = 1.0) -> Endpoints:
    """Endpoints v (kinetic <= K1) and w (J < -C1 - margin) on the fiber of a Gaussian pair.

    Both are dilations of the same base pair; building w from the base rather
    than from v keeps the outer truncation of v out of the compressed profile.

    Raises:
        RuntimeError: if either criterion needs ``|s| > s_cap``.
    """
    _require_cubic(params)
    base = base_pair(grid, params, base_width)
    A0 = _kinetic(grid, params, base.arrays())
    # v side: closed-form start, then step down the fiber until the discrete kinetic fits
    s_v = 0.5 * math.log(th.K1 / A0)
    v = None
    best = math.inf
    for _ in range(400):
        if abs(s_v) > s_cap:
            break
        cand = scale_state(s_v, base, s_cap)
        kin = _kinetic(grid, params, cand.arrays())
        if kin <= th.K1:
            v = cand
            break
        if kin > best:
            break  # truncation dominates: further dilation only raises the kinetic energy
        best = kin
        s_v -= 0.01
    if v is None:
        raise RuntimeError(
            f"cannot reach kinetic energy <= K1={th.K1:.6g} on this grid (r_max={grid.r_max}); "
            "increase r_max")
    # w side: root of J~(s) = -C1 - margin beyond the fiber maximum
    target = -th.C1 - margin

    def f(s):
        return extended_energy(s, base, params, kappa) - target

    peak = minimize_scalar(lambda s: -extended_energy(s, base, params, kappa),
                           bounds=(-s_cap, s_cap), method="bounded", options={"xatol": 1e-10})
    lo = float(peak.x)
    if f(s_cap) >= 0:
        raise RuntimeError(f"fiber cap s={s_cap} reached before J < {target:.6g}")
    s_w = brentq(f, lo, s_cap, xtol=1e-14, rtol=1e-15)
    w = scale_state(s_w, base, s_cap)
    Ew = _energy_arrays(grid, params, kappa(grid.nodes), w.arrays())
    bump = 0
    while Ew >= -th.C1 and bump < 100:
        s_w = min(s_w + 0.01, s_cap)
        w = scale_state(s_w, base, s_cap)
        Ew = _energy_arrays(grid, params, kappa(grid.nodes), w.arrays())
        bump += 1
    kap = kappa(grid.nodes)
    return Endpoints(
        v=v, w=w, s_v=s_v, s_w=s_w, base=base,
        energy_v=_energy_arrays(grid, params, kap, v.arrays()),
        energy_w=Ew,
        kinetic_v=_kinetic(grid, params, v.arrays()),
        target_w=target,
    )


# ---------------------------------------------------------------------------
# geometry


@dataclass
class GeometryRecord:
    """Sampled extremes of J on A_{K1} and B_{K2} against the analytic bound."""

    K1: float
    K2: float
    C1: float
    sup_A: float
    inf_B: float
    inf_bound: float
    quartic_ratio_A: float
    samples: int
    separation: bool
    bound_respected: bool
    kappa_below_lemma_cap: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _random_pair(grid: RadialGrid, params: ModelParams, count: int, seed: int):
    fields = random_smooth_fields(grid, 4 * count + 8, seed=seed)
    out = []
    for f1 in fields:
        f2 = next(fields, None)
        if f2 is None:
            break
        out.append(_renormalize(grid, np.stack([f1, f2]), params.masses()))
        if len(out) == count:
            break
    return out


def check_geometry(params: ModelParams, kappa: KappaProfile, th: ThresholdSet, grid: RadialGrid,
                   samples: int = 64, seed: int = 0) -> GeometryRecord:
    """Sample random on-sphere pairs, slide each along the fiber onto kinetic K1 and K2.

    The fiber dilation is evaluated analytically, so every B_{K2} sample has
    kinetic energy exactly K2 and every A_{K1} sample exactly K1 (the sup of
    J on A_{K1} is approached on its boundary since J <= K/2 + C1 there).
    """
    _require_cubic(params)
    sup_A = -math.inf
    inf_B = math.inf
    q_ratio = 0.0
    e_q = 1.5 * (params.r1 + params.r2 - 2.0)
    n = 0
    for U in _random_pair(grid, params, samples, seed):
        st = _state_from(grid, U)
        t = _terms_arrays(grid, params, np.zeros(grid.node_count), U)
        A = t.kinetic
        sA = 0.5 * math.log(th.K1 / A)
        sB = 0.5 * math.log(th.K2 / A)
        sup_A = max(sup_A, extended_energy(sA, st, params, kappa))
        inf_B = min(inf_B, extended_energy(sB, st, params, kappa))
        quartic = (params.mu1 * t.power1 + params.mu2 * t.power2
                   + 2.0 * params.beta_equation * t.coupling) * math.exp(e_q * sA)
        q_ratio = max(q_ratio, quartic / (th.C_a * th.K1**1.5))
        n += 1
    lemma_cap = kappa.sup_norm(grid) < th.kappa_cap_lemma
    return GeometryRecord(
        K1=th.K1, K2=th.K2, C1=th.C1, sup_A=sup_A, inf_B=inf_B, inf_bound=th.inf_bound,
        quartic_ratio_A=q_ratio, samples=n,
        separation=bool(sup_A < th.inf_bound and th.inf_bound > 0 and lemma_cap),
        bound_respected=bool(inf_B >= th.inf_bound - 1e-10),
        kappa_below_lemma_cap=bool(lemma_cap),
    )


# ---------------------------------------------------------------------------
# elastic string


@dataclass
class PathOptions:
    nodes: int = 41
    max_sweeps: int = 4000
    step0: float = 0.1
    max_step: float = 0.5
    slack: float = 1e-12
    reparam_passes: int = 3
    window: int = 100
    window_tol: float = 1e-10
    scale_weight: float = 1.0
    reparameterize: bool = True


@dataclass
class Path:
    """Discrete path on S_1 x S_2; ``points[0]`` and ``points[-1]`` are never modified."""

    points: list
    energies: np.ndarray
    collapse: bool = False
    history: list = field(default_factory=list)

    @property
    def c_est(self) -> float:
        return float(np.max(self.energies))

    @property
    def argmax(self) -> int:
        # lowest index among ties within 1e-12
        top = np.max(self.energies)
        return int(np.flatnonzero(self.energies >= top - 1e-12)[0])

    def states(self, grid: RadialGrid) -> list:
        return [_state_from(grid, U) for U in self.points]


def _segment_lengths(grid, params, points, targets, scale_weight):
    """Arclength increments: L^2 distance per unit mass plus the change of log sqrt(kinetic).

    The second coordinate is the scaling-fiber parameter of each node, so the
    nodes stay spread over length scales and cannot jump across the kinetic
    ring that separates the two endpoints.
    """
    total_mass = float(np.sum(targets))
    logk = np.array([0.5 * math.log(_kinetic(grid, params, U)) for U in points])
    l2 = np.array([float(np.sum(((b - a) ** 2) @ grid.weights)) / total_mass
                   for a, b in zip(points[:-1], points[1:])])
    return np.sqrt(l2 + scale_weight * np.diff(logk) ** 2), np.sqrt(l2)


def _reparameterize(grid, params, points, targets, scale_weight, sign_fn, passes: int = 1):
    collapse = False
    for _ in range(passes):
        points, c = _reparameterize_once(grid, params, points, targets, scale_weight, sign_fn)
        collapse = collapse or c
    return points, collapse


def _reparameterize_once(grid, params, points, targets, scale_weight, sign_fn):
    seg, l2 = _segment_lengths(grid, params, points, targets, scale_weight)
    collapse = bool(np.min(l2) < 1e-12)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] <= 0:
        return points, True
    goal = np.linspace(0.0, cum[-1], len(points))
    out = [points[0]]
    for g in goal[1:-1]:
        j = int(np.clip(np.searchsorted(cum, g, side="right") - 1, 0, len(points) - 2))
        while seg[j] <= 0 and j > 0:
            j -= 1
        t = min(max((g - cum[j]) / seg[j], 0.0), 1.0) if seg[j] > 0 else 0.0
        U = (1.0 - t) * points[j] + t * points[j + 1]
        U = _renormalize(grid, U, targets)
        out.append(sign_fn(U) if sign_fn is not None else U)
    out.append(points[-1])
    return out, collapse


def minimize_max_along_path(params: ModelParams, kappa: KappaProfile, grid: RadialGrid,
                            v: State, w: State, opts: PathOptions | None = None,
                            *, fiber: tuple | None = None) -> tuple[Path, float]:
    """Elastic-string descent of the path maximum between fixed endpoints.

    Each sweep moves every interior node one preconditioned projected-gradient
    step (shared step length), takes absolute values when kappa >= 0,
    renormalizes and redistributes the nodes evenly in a combined
    L^2 / energy arclength.  A sweep is kept only if the path maximum does not
    increase; otherwise the step is halved.

    Args:
        fiber: optional ``(base, s_v, s_w)``; interior nodes then start at
            ``s * base`` for s evenly spaced in ``[s_v, s_w]``.  Without it the
            path starts on the chord between ``v`` and ``w``, renormalized.
    """
    _require_cubic(params)
    opts = opts or PathOptions()
    if opts.nodes < 3 or opts.nodes % 2 == 0:
        raise ValueError("path needs an odd node count >= 3")
    kap = kappa(grid.nodes)
    targets = np.asarray(params.masses())
    sign_fn = np.abs if kappa.sign == "nonnegative" else None
    P = opts.nodes
    vA, wA = v.arrays(), w.arrays()
    pts = [vA]
    for t in np.linspace(0.0, 1.0, P)[1:-1]:
        if fiber is not None:
            base, s_v, s_w = fiber
            U = scale_state(s_v + t * (s_w - s_v), base).arrays()
        else:
            U = (1.0 - t) * vA + t * wA
        U = _renormalize(grid, U, targets)
        pts.append(sign_fn(U) if sign_fn is not None else U)
    pts.append(wA)

    def energies_of(points):
        return np.array([_energy_arrays(grid, params, kap, U) for U in points])

    E = energies_of(pts)
    path = Path(points=pts, energies=E)
    c_hist = [float(np.max(E))]
    path.history.append({"sweep": 0, "c_est": c_hist[0], "step": opts.step0})
    step = opts.step0
    sweep = 0
    while sweep < opts.max_sweeps and step > 1e-12:
        dirs = []
        for U in path.points[1:-1]:
            G = _gradient_arrays(grid, params, kap, U)
            lam = _multipliers(grid, G, U, targets)
            dirs.append(_preconditioned_tangent(grid, U, G, [_precond_shift(grid, l) for l in lam]))
        while step > 1e-12:
            moved = [path.points[0]]
            for U, D in zip(path.points[1:-1], dirs):
                X = _renormalize(grid, U - step * D, targets)
                moved.append(sign_fn(X) if sign_fn is not None else X)
            moved.append(path.points[-1])
            if opts.reparameterize:
                moved, collapse = _reparameterize(grid, params, moved, targets, opts.scale_weight, sign_fn,
                                                  opts.reparam_passes)
                path.collapse = path.collapse or collapse
            cand, Ec = moved, energies_of(moved)
            if np.max(Ec) <= c_hist[-1] + opts.slack * max(1.0, abs(c_hist[-1])):
                break
            step *= 0.5
        else:
            break
        sweep += 1
        path.points, path.energies = cand, Ec
        c_hist.append(float(np.max(Ec)))
        path.history.append({"sweep": sweep, "c_est": c_hist[-1], "step": step,
                             "argmax": path.argmax})
        step = min(2.0 * step, opts.max_step)
        if sweep >= opts.window and c_hist[-1 - opts.window] - c_hist[-1] < opts.window_tol:
            break
    return path, path.c_est


# ---------------------------------------------------------------------------
# Newton-Krylov refinement


@dataclass
class RefineOptions:
    max_newton: int = 60
    tol: float = 1e-9
    stagnation: float = 1e-7
    gmres_rtol: float = 1e-10
    gmres_maxiter: int = 200
    fiber_align: bool = True
    polish_steps: int = 200


class _KKTSystem:
    """F(u, lam) in sqrt(w)-scaled free-node coordinates, with its symmetric Jacobian."""

    def __init__(self, grid: RadialGrid, params: ModelParams, kappa: KappaProfile):
        self.grid = grid
        self.params = params
        self.kap = kappa(grid.nodes)
        self.targets = np.asarray(params.masses())
        self.sw = np.sqrt(grid.weights[1:-1])
        self.n = grid.node_count - 2

    def pack(self, U, lam):
        return np.concatenate([self.sw * U[0, 1:-1], self.sw * U[1, 1:-1], lam])

    def _full(self, x):
        n = self.n
        V = np.zeros((2, self.grid.node_count))
        V[0, 1:-1] = x[:n] / self.sw
        V[1, 1:-1] = x[n:2 * n] / self.sw
        V[:, 0] = V[:, 1]
        return V

    def unpack(self, x):
        return self._full(x), np.array(x[2 * self.n:], dtype=float)

    def residual(self, x):
        U, lam = self.unpack(x)
        G = _gradient_arrays(self.grid, self.params, self.kap, U)
        R = G - lam[:, None] * U
        defect = -0.5 * (_masses(self.grid, U) - self.targets)
        return np.concatenate([self.sw * R[0, 1:-1], self.sw * R[1, 1:-1], defect])

    def jacobian(self, x) -> LinearOperator:
        U, lam = self.unpack(x)
        p = self.params
        b = p.coupling
        u1, u2 = U
        d1 = -p.mu1 * (p.p1 - 1) * _abs_pow(u1, p.p1 - 2)
        d2 = -p.mu2 * (p.p2 - 1) * _abs_pow(u2, p.p2 - 2)
        cross = -self.kap.copy()
        if b != 0.0:
            d1 = d1 - b * p.r1 * (p.r1 - 1) * _abs_pow(u1, p.r1 - 2) * _abs_pow(u2, p.r2)
            d2 = d2 - b * p.r2 * (p.r2 - 1) * _abs_pow(u2, p.r2 - 2) * _abs_pow(u1, p.r1)
            cross = cross - b * p.r1 * p.r2 * _signed_pow(u1, p.r1 - 1) * _signed_pow(u2, p.r2 - 1)
        d1 = d1 - lam[0]
        d2 = d2 - lam[1]
        n, grid, sw = self.n, self.grid, self.sw
        su1, su2 = sw * u1[1:-1], sw * u2[1:-1]

        def mv(vec):
            vec = np.ravel(vec)
            Phi = self._full(vec)
            H = apply_neg_laplacian(grid, Phi)
            h1 = H[0] + d1 * Phi[0] + cross * Phi[1]
            h2 = H[1] + d2 * Phi[1] + cross * Phi[0]
            out = np.empty(2 * n + 2)
            out[:n] = sw * h1[1:-1] - vec[2 * n] * su1
            out[n:2 * n] = sw * h2[1:-1] - vec[2 * n + 1] * su2
            out[2 * n] = -np.dot(su1, vec[:n])
            out[2 * n + 1] = -np.dot(su2, vec[n:2 * n])
            return out

        return LinearOperator((2 * n + 2, 2 * n + 2), matvec=mv, dtype=float)

    def preconditioner(self, x) -> LinearOperator:
        _, lam = self.unpack(x)
        n, grid, sw = self.n, self.grid, self.sw
        shifts = [_precond_shift(grid, l) for l in lam]
        scale = 1.0 / self.targets

        def mv(vec):
            vec = np.ravel(vec)
            out = np.empty_like(vec)
            for i in range(2):
                rhs = np.zeros(grid.node_count)
                rhs[1:-1] = vec[i * n:(i + 1) * n] / sw
                out[i * n:(i + 1) * n] = sw * solve_shifted(grid, rhs, shifts[i])[1:-1]
            out[2 * n:] = vec[2 * n:] * scale
            return out

        return LinearOperator((2 * n + 2, 2 * n + 2), matvec=mv, dtype=float)


def _align_on_fiber(params, kappa, state: State) -> State:
    res = minimize_scalar(lambda s: -extended_energy(s, state, params, kappa),
                          bounds=(-1.0, 1.0), method="bounded", options={"xatol": 1e-12})
    s = float(res.x)
    if abs(s) < 1e-9:
        return state
    return scale_state(s, state)


def refine_critical(params: ModelParams, kappa: KappaProfile, grid: RadialGrid, state0: State,
                    opts: RefineOptions | None = None) -> SolveReport:
    """Damped Newton-Krylov on the KKT system F(u, lam) = (J'(u) - lam u, mass defects).

    A Newton step is accepted only if it lowers ||F||; otherwise steepest
    descent on ||F||^2 / 2 is tried, so the residual never increases.
    """
    _require_cubic(params)
    opts = opts or RefineOptions()
    sysm = _KKTSystem(grid, params, kappa)
    state = state0
    if opts.fiber_align:
        aligned = _align_on_fiber(params, kappa, state0)
        U_a = _renormalize(grid, aligned.arrays(), params.masses())
        if kkt_residual(params, kappa, _state_from(grid, U_a)) < kkt_residual(params, kappa, state0):
            state = _state_from(grid, U_a)
    U = state.arrays()
    G = _gradient_arrays(grid, params, sysm.kap, U)
    lam = _multipliers(grid, G, U, params.masses())
    x = sysm.pack(U, lam)
    F = sysm.residual(x)
    fn = float(np.linalg.norm(F))
    history = [{"iteration": 0, "residual": fn, "kind": "start"}]
    accepted = 0
    for k in range(1, opts.max_newton + 1):
        if fn <= 0.1 * opts.tol:
            break
        Jop = sysm.jacobian(x)
        dx, _ = gmres(Jop, -F, rtol=opts.gmres_rtol, atol=0.0, restart=opts.gmres_maxiter,
                      maxiter=1, M=sysm.preconditioner(x))
        kind = None
        alpha = 1.0
        while alpha >= 1.0 / 64:
            xt = x + alpha * dx
            Ft = sysm.residual(xt)
            ft = float(np.linalg.norm(Ft))
            if ft < fn:
                kind = "newton"
                break
            alpha *= 0.5
        if kind is None:
            g = Jop.matvec(F)  # gradient of ||F||^2/2 (J is symmetric)
            gg = float(np.dot(g, g))
            alpha = fn**2 / gg if gg > 0 else 0.0
            while alpha > 1e-20:
                xt = x - alpha * g
                Ft = sysm.residual(xt)
                ft = float(np.linalg.norm(Ft))
                if ft < fn:
                    kind = "descent"
                    break
                alpha *= 0.5
        if kind is None:
            break
        slow = ft > 0.5 * fn
        x, F, fn = xt, Ft, ft
        accepted += 1
        history.append({"iteration": k, "residual": fn, "kind": kind, "alpha": alpha})
        if slow and fn <= opts.tol:
            break
    U, lam = sysm.unpack(x)
    Un = _renormalize(grid, U, params.masses())
    st = _state_from(grid, Un)
    res_n = kkt_residual(params, kappa, st, tuple(lam))
    res_x = kkt_residual(params, kappa, _state_from(grid, U), tuple(lam))
    if res_n > res_x and res_x <= opts.tol:
        st = _state_from(grid, U)
        res_n = res_x
    Gf = _gradient_arrays(grid, params, sysm.kap, st.arrays())
    E = _energy_arrays(grid, params, sysm.kap, st.arrays())
    if res_n <= opts.tol:
        status = "converged"
    elif res_n <= opts.stagnation:
        status = "partially_refined"
    else:
        status = "saddle-not-refined"
    return SolveReport(
        state=st,
        lambda1=float(lam[0]),
        lambda2=float(lam[1]),
        energy=E,
        grad_norm=_wnorm(grid, _project(grid, st.arrays(), Gf)),
        virial=ds_extended_energy(0.0, st, params, kappa),
        iterations=accepted,
        converged=status == "converged",
        status=status,
        sign_pattern="both_positive" if kappa.sign == "nonnegative" else "free",
        kkt_residual=res_n,
        flags={"initial_residual": history[0]["residual"]},
        history=history,
    )


# ---------------------------------------------------------------------------
# verification and driver


def _lemma_terms(params, kappa, st: State):
    grid = st.grid
    U = st.arrays()
    t = _terms_arrays(grid, params, np.zeros(grid.node_count), U)
    r = grid.nodes
    integrand = (4.0 / 3.0) * kappa.radial_slope(r) + 2.0 * kappa(r)
    corr = float(np.dot(grid.weights, integrand * U[0] * U[1]))
    return t.kinetic, corr


def verify_supercritical(report: SolveReport, params: ModelParams, kappa: KappaProfile,
                         th: ThresholdSet, *, variant: str = "thm1_3",
                         kkt_tol: float = 1e-9, virial_rtol: float = 1e-5) -> VerificationRecord:
    """Check the sign and energy predictions at a refined mountain-pass point."""
    _require_cubic(params)
    st = report.state
    grid = st.grid
    K, corr = _lemma_terms(params, kappa, st)
    a1s, a2s = params.masses()
    lam_sum = report.lambda1 * a1s + report.lambda2 * a2s
    P = ds_extended_energy(0.0, st, params, kappa)
    identity_rhs = -K / 3.0 - corr + 4.0 / 3.0 * P
    kc = kappa_condition_check(kappa, grid, th, variant)
    resid = kkt_residual(params, kappa, st, (report.lambda1, report.lambda2))
    checks = {
        "kkt_residual_small": resid <= kkt_tol,
        "both_multipliers_negative": report.lambda1 < 0 and report.lambda2 < 0,
        "multiplier_sum_bound": lam_sum <= -K / 3.0 + corr + 1e-6,
        "multiplier_sum_identity": abs(lam_sum - identity_rhs) <= 1e-8 * max(1.0, K),
        "positive_interior": _sign_ok(st.u1.values, 1.0) and _sign_ok(st.u2.values, 1.0),
        "energy_positive": report.energy > 0,
        "kinetic_lower_bound": K >= 3.0 * report.energy - 1e-8 * max(1.0, K),
        "virial_small": abs(P) <= virial_rtol * K,
        "kappa_conditions": kc.passed,
    }
    values = {"lambda_sum": lam_sum, "kinetic": K, "coupling_correction": corr, "virial": P,
              "virial_ratio": abs(P) / K if K > 0 else math.inf, "kkt_residual": resid,
              "energy": report.energy, "kappa_report": kc.to_dict()}
    return VerificationRecord(applicable=True, checks={k: bool(v) for k, v in checks.items()},
                              values=values)


@dataclass
class MountainPassReport:
    """Result of the full mountain-pass pipeline."""

    c: float
    state: State
    lambda1: float
    lambda2: float
    virial: float
    energy: float
    kkt_residual: float
    status: str
    geometry: GeometryRecord
    thresholds: ThresholdSet
    refine: SolveReport
    path_history: list = field(default_factory=list)
    path_collapse: bool = False
    endpoint_energies: tuple = (math.nan, math.nan)
    verification: VerificationRecord | None = None

    @property
    def converged(self) -> bool:
        return self.refine.converged


def solve_mountain_pass(params: ModelParams, kappa: KappaProfile, grid: RadialGrid, th: ThresholdSet,
                        *, path_opts: PathOptions | None = None, refine_opts: RefineOptions | None = None,
                        samples: int = 64, seed: int = 0, base_width: float = 1.0,
                        variant: str = "thm1_3") -> MountainPassReport:
    """Endpoints, geometry check, string minimization, refinement and verification."""
    _require_cubic(params)
    ends = build_endpoints(params, kappa, th, grid, base_width=base_width)
    geo = check_geometry(params, kappa, th, grid, samples=samples, seed=seed)
    path, c_est = minimize_max_along_path(params, kappa, grid, ends.v, ends.w, path_opts,
                                          fiber=(ends.base, ends.s_v, ends.s_w))
    top = path.states(grid)[path.argmax]
    ref = refine_critical(params, kappa, grid, top, refine_opts)
    ver = verify_supercritical(ref, params, kappa, th, variant=variant)
    return MountainPassReport(
        c=c_est, state=ref.state, lambda1=ref.lambda1, lambda2=ref.lambda2, virial=ref.virial,
        energy=ref.energy, kkt_residual=ref.kkt_residual, status=ref.status, geometry=geo,
        thresholds=th, refine=ref, path_history=path.history, path_collapse=path.collapse,
        endpoint_energies=(ends.energy_v, ends.energy_w), verification=ver,
    )
