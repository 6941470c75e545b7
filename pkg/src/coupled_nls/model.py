"""Coupled system data model: parameters, coupling profiles, states, energy.

The energy on S_1 x S_2 is

    J(u1, u2) = 1/2 (D(u1) + D(u2)) - mu1/p1 |u1|_p1^p1 - mu2/p2 |u2|_p2^p2
                - b * int |u1|^r1 |u2|^r2 - int kappa u1 u2

with ``b = beta`` for the general system and ``b = beta / 2`` for the cubic
system in R^3, where beta is the coefficient of ``u1 u2^2`` in the equations
(see ``ModelParams.coupling_form``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.interpolate import PchipInterpolator

from .grid import (
    Field,
    RadialGrid,
    apply_neg_laplacian,
    dirichlet_energy,
    enforce_bc,
    solve_shifted,
)

__all__ = [
    "ModelParams",
    "KappaProfile",
    "State",
    "EnergyTerms",
    "SolveReport",
    "energy_terms",
    "energy",
    "scalar_energy",
    "free_gradient",
    "compute_multipliers",
    "project_tangent",
    "projected_gradient_norm",
    "kkt_residual",
    "renormalize",
    "scale_state",
    "extended_energy",
    "ds_extended_energy",
    "positive_negative_parts",
    "gaussian_state",
]

SUBCRITICAL = "subcritical"
SUPERCRITICAL_CUBIC = "supercritical_cubic"
UNCLASSIFIED = "unclassified"


def critical_sobolev(N: int) -> float:
    return math.inf if N <= 2 else 2.0 * N / (N - 2)


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the coupled system.

    ``coupling_form`` selects how ``beta`` enters the energy: ``"general"``
    uses ``-beta int |u1|^r1 |u2|^r2``; ``"cubic"`` is the R^3 Bose-Einstein
    normalisation ``-(beta/2) int u1^2 u2^2`` whose equations read
    ``... + beta u1 u2^2``.  ``"auto"`` picks ``"cubic"`` exactly in the
    supercritical cubic regime.
    """

    N: int = 3
    mu1: float = 1.0
    mu2: float = 1.0
    beta: float = 1.0
    p1: float = 3.0
    p2: float = 3.0
    r1: float = 1.5
    r2: float = 1.5
    a1: float = 1.0
    a2: float = 1.0
    coupling_form: Literal["auto", "general", "cubic"] = "auto"

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N!r}")
        for name in ("mu1", "mu2", "a1", "a2", "r1", "r2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        if not math.isfinite(self.beta):
            raise ValueError(f"beta must be finite, got {self.beta!r}")
        crit = critical_sobolev(self.N)
        for name in ("p1", "p2"):
            v = getattr(self, name)
            if not (2.0 < v < crit):
                raise ValueError(f"{name}={v!r} outside (2, {crit})")
        if not (2.0 < self.r1 + self.r2 < crit):
            raise ValueError(f"r1 + r2 = {self.r1 + self.r2!r} outside (2, {crit})")
        if self.coupling_form not in ("auto", "general", "cubic"):
            raise ValueError(f"unknown coupling_form {self.coupling_form!r}")
        if self.coupling_form == "cubic" and not self.is_cubic:
            raise ValueError("coupling_form='cubic' requires N=3, p1=p2=4, r1=r2=2")

    @property
    def is_cubic(self) -> bool:
        return self.N == 3 and self.p1 == self.p2 == 4.0 and self.r1 == self.r2 == 2.0

    @property
    def regime(self) -> str:
        """``"subcritical"``, ``"supercritical_cubic"`` or ``"unclassified"``."""
        if self.is_cubic:
            return SUPERCRITICAL_CUBIC
        bound = 2.0 + 4.0 / self.N
        if self.p1 < bound and self.p2 < bound and self.r1 + self.r2 < bound:
            if self.N >= 5 and max(self.p1, self.p2) >= 2.0 + 2.0 / (self.N - 2):
                return UNCLASSIFIED
            return SUBCRITICAL
        return UNCLASSIFIED

    @property
    def resolved_coupling_form(self) -> str:
        if self.coupling_form == "auto":
            return "cubic" if self.is_cubic else "general"
        return self.coupling_form

    @property
    def coupling(self) -> float:
        """Coefficient b of ``-b int |u1|^r1 |u2|^r2`` in the energy."""
        return 0.5 * self.beta if self.resolved_coupling_form == "cubic" else self.beta

    @property
    def beta_equation(self) -> float:
        """Coefficient of ``u1 u2^2`` in the first cubic equation (r1 * b)."""
        return self.r1 * self.coupling

    def masses(self) -> tuple[float, float]:
        return self.a1**2, self.a2**2


@dataclass(frozen=True)
class KappaProfile:
    """Radial linear coupling kappa(r) and its radial form ``r kappa'(r)``.

    Build with :meth:`zero`, :meth:`rational`, :meth:`gaussian` or :meth:`tabulated`.
    """

    kind: str = "zero"
    c: float = 0.0
    q: float = 1.5
    width: float = 1.0
    radii: tuple = ()
    table: tuple = ()
    sign: str = "nonnegative"
    _interp: object = field(default=None, repr=False, compare=False)

    @classmethod
    def zero(cls) -> "KappaProfile":
        return cls("zero")

    @classmethod
    def rational(cls, c: float, q: float = 1.5) -> "KappaProfile":
        """kappa(r) = c / (1 + r^q)."""
        if q <= 0:
            raise ValueError("rational kappa needs q > 0")
        return cls("rational", c=float(c), q=float(q), sign=_sign_of(c))

    @classmethod
    def gaussian(cls, c: float, width: float = 1.0) -> "KappaProfile":
        """kappa(r) = c exp(-r^2 / (2 width^2))."""
        if width <= 0:
            raise ValueError("gaussian kappa needs width > 0")
        return cls("gaussian", c=float(c), width=float(width), sign=_sign_of(c))

    @classmethod
    def tabulated(cls, radii, values) -> "KappaProfile":
        """Monotone-cubic interpolation of samples; constant beyond the last radius."""
        radii = np.asarray(radii, dtype=float)
        values = np.asarray(values, dtype=float)
        if radii.ndim != 1 or radii.shape != values.shape or radii.size < 2:
            raise ValueError("tabulated kappa needs matching 1-D radii/values, length >= 2")
        if np.any(np.diff(radii) <= 0) or radii[0] < 0:
            raise ValueError("tabulated radii must be increasing and nonnegative")
        if not np.all(np.isfinite(values)):
            raise ValueError("tabulated kappa values must be finite")
        sign = "nonpositive" if np.all(values <= 0) and np.any(values < 0) else "nonnegative"
        if np.any(values < 0) and np.any(values > 0):
            raise ValueError("kappa must have a fixed sign")
        interp = PchipInterpolator(radii, values, extrapolate=False)
        return cls("tabulated", radii=tuple(radii), table=tuple(values), sign=sign, _interp=interp)

    def negated(self) -> "KappaProfile":
        if self.kind == "zero":
            return self
        if self.kind == "tabulated":
            return KappaProfile.tabulated(self.radii, -np.asarray(self.table))
        return KappaProfile(self.kind, c=-self.c, q=self.q, width=self.width,
                            sign=_sign_of(-self.c))

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.kind != "tabulated" and self.c == 0.0) or (
            self.kind == "tabulated" and not np.any(np.asarray(self.table))
        )

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(r)
        if self.kind == "rational":
            return self.c / (1.0 + r**self.q)
        if self.kind == "gaussian":
            return self.c * np.exp(-(r**2) / (2.0 * self.width**2))
        if self.kind == "tabulated":
            rr = np.clip(r, self.radii[0], self.radii[-1])
            return self._interp(rr)
        raise ValueError(f"unknown kappa kind {self.kind!r}")

    def radial_slope(self, r) -> np.ndarray:
        """``r * kappa'(r)``, the radial form of grad kappa(x) . x."""
        r = np.asarray(r, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(r)
        if self.kind == "rational":
            rq = r**self.q
            return -self.c * self.q * rq / (1.0 + rq) ** 2
        if self.kind == "gaussian":
            return -(r**2 / self.width**2) * self(r)
        if self.kind == "tabulated":
            inside = (r >= self.radii[0]) & (r <= self.radii[-1])
            out = np.zeros_like(r)
            out[inside] = r[inside] * self._interp.derivative()(r[inside])
            return out
        raise ValueError(f"unknown kappa kind {self.kind!r}")

    def sup_norm(self, grid: RadialGrid) -> float:
        return float(np.max(np.abs(self(grid.nodes))))

    def sign_consistent(self, grid: RadialGrid) -> bool:
        vals = self(grid.nodes)
        if self.sign == "nonnegative":
            return bool(np.all(vals >= 0))
        return bool(np.all(vals <= 0))

    def describe(self) -> dict:
        d = {"kind": self.kind, "sign": self.sign}
        if self.kind in ("rational", "gaussian"):
            d["c"] = self.c
        if self.kind == "rational":
            d["q"] = self.q
        if self.kind == "gaussian":
            d["width"] = self.width
        if self.kind == "tabulated":
            d["radii"] = list(self.radii)
            d["values"] = list(self.table)
        return d


def _sign_of(c: float) -> str:
    return "nonpositive" if c < 0 else "nonnegative"


class State:
    """A pair (u1, u2) of radial fields sharing one grid."""

    __slots__ = ("u1", "u2")

    def __init__(self, u1: Field, u2: Field):
        if not u1.grid.same_as(u2.grid):
            raise ValueError("state components live on different grids")
        self.u1 = u1
        self.u2 = u2

    @classmethod
    def from_arrays(cls, grid: RadialGrid, u1, u2) -> "State":
        return cls(Field(grid, u1), Field(grid, u2))

    @property
    def grid(self) -> RadialGrid:
        return self.u1.grid

    def arrays(self) -> np.ndarray:
        """Stacked (2, M) copy of the nodal values."""
        return np.stack([self.u1.values, self.u2.values])

    def masses(self) -> tuple[float, float]:
        return self.u1.mass(), self.u2.mass()

    def copy(self) -> "State":
        return State.from_arrays(self.grid, self.u1.values, self.u2.values)

    def __repr__(self) -> str:
        m1, m2 = self.masses()
        return f"State(M={self.grid.node_count}, masses=({m1:.6g}, {m2:.6g}))"


@dataclass
class EnergyTerms:
    """Integrals entering J (before coefficients are applied)."""

    kinetic1: float
    kinetic2: float
    power1: float
    power2: float
    coupling: float
    linear: float

    @property
    def kinetic(self) -> float:
        return self.kinetic1 + self.kinetic2


@dataclass
class SolveReport:
    """Outcome of a constrained solve."""

    state: State
    lambda1: float
    lambda2: float
    energy: float
    grad_norm: float
    virial: float | None
    iterations: int
    converged: bool
    status: str
    sign_pattern: str = "free"
    kkt_residual: float | None = None
    flags: dict = field(default_factory=dict)
    history: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# array-level kernels (stacked (2, M) states)


def _abs_pow(u: np.ndarray, e: float) -> np.ndarray:
    a = np.abs(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(a > 1e-300, a**e, 0.0) if e < 0 else a**e
    return out


def _signed_pow(u: np.ndarray, e: float) -> np.ndarray:
    """sign(u) |u|^e, zero where |u| < 1e-300."""
    return np.sign(u) * _abs_pow(u, e)


def _terms_arrays(grid: RadialGrid, params: ModelParams, kap: np.ndarray, U: np.ndarray) -> EnergyTerms:
    w = grid.weights
    u1, u2 = U
    return EnergyTerms(
        kinetic1=dirichlet_energy(grid, u1),
        kinetic2=dirichlet_energy(grid, u2),
        power1=float(np.dot(w, np.abs(u1) ** params.p1)),
        power2=float(np.dot(w, np.abs(u2) ** params.p2)),
        coupling=float(np.dot(w, np.abs(u1) ** params.r1 * np.abs(u2) ** params.r2)),
        linear=float(np.dot(w, kap * u1 * u2)),
    )


def _energy_from_terms(params: ModelParams, t: EnergyTerms) -> float:
    i1 = 0.5 * t.kinetic1 - params.mu1 / params.p1 * t.power1
    i2 = 0.5 * t.kinetic2 - params.mu2 / params.p2 * t.power2
    return i1 + i2 - params.coupling * t.coupling - t.linear


def _energy_arrays(grid, params, kap, U) -> float:
    return _energy_from_terms(params, _terms_arrays(grid, params, kap, U))


def _gradient_arrays(grid: RadialGrid, params: ModelParams, kap: np.ndarray, U: np.ndarray) -> np.ndarray:
    u1, u2 = U
    b = params.coupling
    lap = apply_neg_laplacian(grid, U)
    g1 = lap[0] - params.mu1 * _signed_pow(u1, params.p1 - 1)
    g2 = lap[1] - params.mu2 * _signed_pow(u2, params.p2 - 1)
    if b != 0.0:
        a1r = _abs_pow(u1, params.r1)
        a2r = _abs_pow(u2, params.r2)
        g1 = g1 - params.r1 * b * _signed_pow(u1, params.r1 - 1) * a2r
        g2 = g2 - params.r2 * b * _signed_pow(u2, params.r2 - 1) * a1r
    g1 = g1 - kap * u2
    g2 = g2 - kap * u1
    G = np.stack([g1, g2])
    if not np.all(np.isfinite(G)):
        raise FloatingPointError("non-finite gradient (exponent or overflow misuse)")
    G[:, -1] = 0.0
    G[:, 0] = G[:, 1]
    return G


def _masses(grid: RadialGrid, U: np.ndarray) -> np.ndarray:
    return U**2 @ grid.weights


def _multipliers(grid, G, U, targets) -> np.ndarray:
    return (G * U) @ grid.weights / np.asarray(targets)


def _project(grid, U, G) -> np.ndarray:
    m = _masses(grid, U)
    coef = (G * U) @ grid.weights / m
    return G - coef[:, None] * U


def _wnorm(grid, V) -> float:
    return float(np.sqrt(np.sum(V**2 @ grid.weights)))


def _renormalize(grid, U, targets) -> np.ndarray:
    m = _masses(grid, U)
    if np.any(m <= 0):
        raise ValueError("cannot renormalize a zero field")
    return U * np.sqrt(np.asarray(targets) / m)[:, None]


def _preconditioned_tangent(grid: RadialGrid, U: np.ndarray, g: np.ndarray, shifts) -> np.ndarray:
    """Sobolev-preconditioned descent direction, L^2-orthogonal to each component.

    Each component solves ``(L + s) y = g`` and ``(L + s) z = u`` and returns
    ``y - (<y,u>/<z,u>) z`` (projection in the (L + s) metric).
    """
    D = np.empty_like(U)
    w = grid.weights
    for i in range(U.shape[0]):
        y = solve_shifted(grid, g[i], shifts[i])
        z = solve_shifted(grid, U[i], shifts[i])
        zu = np.dot(w, z * U[i])
        D[i] = y - (np.dot(w, y * U[i]) / zu) * z if zu > 0 else y
    return D


def _precond_shift(grid: RadialGrid, lam: float) -> float:
    # L + shift is positive definite for shift > -lambda_min(L) ~ -(pi/r_max)^2
    floor = 0.25 * (math.pi / grid.r_max) ** 2
    return max(-lam, 0.0) + floor


# ---------------------------------------------------------------------------
# public operations


def _check_state(params: ModelParams, state: State) -> RadialGrid:
    grid = state.grid
    if grid.dimension != params.N:
        raise ValueError(f"grid dimension {grid.dimension} != params.N {params.N}")
    return grid


def energy_terms(params: ModelParams, kappa: KappaProfile, state: State) -> EnergyTerms:
    grid = _check_state(params, state)
    return _terms_arrays(grid, params, kappa(grid.nodes), state.arrays())


def energy(params: ModelParams, kappa: KappaProfile, state: State) -> float:
    """The functional J evaluated by quadrature."""
    return _energy_from_terms(params, energy_terms(params, kappa, state))


def scalar_energy(grid: RadialGrid, u, mu: float, p: float) -> float:
    """I(u) = 1/2 D(u) - mu/p int |u|^p."""
    v = u.values if isinstance(u, Field) else np.asarray(u, dtype=float)
    return 0.5 * dirichlet_energy(grid, v) - mu / p * float(np.dot(grid.weights, np.abs(v) ** p))


def free_gradient(params: ModelParams, kappa: KappaProfile, state: State) -> tuple[Field, Field]:
    """(G1, G2): weighted-L^2 gradient of J without the multiplier terms."""
    grid = _check_state(params, state)
    G = _gradient_arrays(grid, params, kappa(grid.nodes), state.arrays())
    return Field(grid, G[0]), Field(grid, G[1])


def compute_multipliers(params: ModelParams, kappa: KappaProfile, state: State) -> tuple[float, float]:
    """lambda_i = <J'(u), u_i e_i> / a_i^2."""
    grid = _check_state(params, state)
    U = state.arrays()
    if np.any(_masses(grid, U) <= 0.0):
        raise ValueError("multipliers undefined for a zero-mass component")
    G = _gradient_arrays(grid, params, kappa(grid.nodes), U)
    lam = _multipliers(grid, G, U, params.masses())
    return float(lam[0]), float(lam[1])


def project_tangent(state: State, grads) -> tuple[Field, Field]:
    """Remove the radial components: ``G_i - (<G_i,u_i>/|u_i|^2) u_i``."""
    grid = state.grid
    G = np.stack([g.values if isinstance(g, Field) else np.asarray(g, float) for g in grads])
    P = _project(grid, state.arrays(), G)
    return Field(grid, P[0]), Field(grid, P[1])


def projected_gradient_norm(params: ModelParams, kappa: KappaProfile, state: State) -> float:
    grid = _check_state(params, state)
    U = state.arrays()
    G = _gradient_arrays(grid, params, kappa(grid.nodes), U)
    return _wnorm(grid, _project(grid, U, G))


def kkt_residual(params: ModelParams, kappa: KappaProfile, state: State,
                 lambdas: tuple[float, float] | None = None) -> float:
    """|| J'(u) - (lambda1 u1, lambda2 u2) || in weighted L^2 (plus mass defects)."""
    grid = _check_state(params, state)
    U = state.arrays()
    G = _gradient_arrays(grid, params, kappa(grid.nodes), U)
    if lambdas is None:
        lam = _multipliers(grid, G, U, params.masses())
    else:
        lam = np.asarray(lambdas, dtype=float)
    R = G - lam[:, None] * U
    defects = _masses(grid, U) - np.asarray(params.masses())
    return float(np.sqrt(np.sum(R**2 @ grid.weights) + np.sum(defects**2)))


def renormalize(state: State, params: ModelParams) -> State:
    grid = state.grid
    U = _renormalize(grid, state.arrays(), params.masses())
    return State.from_arrays(grid, U[0], U[1])


def gaussian_state(grid: RadialGrid, params: ModelParams, width: float = 1.0) -> State:
    """Renormalized Gaussian pair exp(-r^2 / width^2)."""
    g = np.exp(-(grid.nodes**2) / width**2)
    U = _renormalize(grid, enforce_bc(np.stack([g, g])), params.masses())
    return State.from_arrays(grid, U[0], U[1])


def _resample_even(grid: RadialGrid, v: np.ndarray, radii: np.ndarray) -> np.ndarray:
    # even extension through r = 0 so the origin is an interior extremum for PCHIP
    r = grid.nodes
    xs = np.concatenate([-r[:0:-1], r])
    ys = np.concatenate([v[:0:-1], v])
    out = PchipInterpolator(xs, ys, extrapolate=False)(radii)
    return np.nan_to_num(out, nan=0.0)


def scale_state(s: float, state: State, s_cap: float = 6.0) -> State:
    """Mass-preserving dilation ``(s * u)(r) = e^{3s/2} u(e^s r)`` in R^3."""
    grid = state.grid
    if grid.dimension != 3:
        raise ValueError("scale_state is defined for N = 3 only")
    if abs(s) > s_cap:
        raise ValueError(f"|s| = {abs(s)} exceeds the fiber cap {s_cap}")
    if s == 0.0:
        return state.copy()
    radii = math.exp(s) * grid.nodes
    fac = math.exp(1.5 * s)
    U = np.stack([fac * _resample_even(grid, v, radii) for v in state.arrays()])
    return State.from_arrays(grid, U[0], U[1])


def _fiber_parts(params: ModelParams, kappa: KappaProfile, state: State):
    grid = state.grid
    if params.N != 3 or grid.dimension != 3:
        raise ValueError("the scaling fiber is defined for N = 3 only")
    t = _terms_arrays(grid, params, np.zeros(grid.node_count), state.arrays())
    return grid, t


def _fiber_exponents(params: ModelParams):
    # int |s*u|^p = e^{3 s (p - 2) / 2} int |u|^p in R^3
    return (1.5 * (params.p1 - 2.0), 1.5 * (params.p2 - 2.0),
            1.5 * (params.r1 + params.r2 - 2.0))


def extended_energy(s: float, state: State, params: ModelParams, kappa: KappaProfile) -> float:
    """J~(s, u) = J(s * u) evaluated with exact fiber prefactors.

    Only kappa is resampled (at e^{-s} r_i); the fields are not interpolated.
    For the cubic system this is
    ``e^{2s}/2 sum D - e^{3s}/4 int(mu1 u1^4 + mu2 u2^4 + 2 beta u1^2 u2^2) - int kappa(e^{-s} r) u1 u2``.
    """
    grid, t = _fiber_parts(params, kappa, state)
    e1, e2, ec = _fiber_exponents(params)
    u1, u2 = state.u1.values, state.u2.values
    lin = float(np.dot(grid.weights, kappa(math.exp(-s) * grid.nodes) * u1 * u2))
    return (
        0.5 * math.exp(2 * s) * t.kinetic
        - params.mu1 / params.p1 * math.exp(e1 * s) * t.power1
        - params.mu2 / params.p2 * math.exp(e2 * s) * t.power2
        - params.coupling * math.exp(ec * s) * t.coupling
        - lin
    )


def ds_extended_energy(s: float, state: State, params: ModelParams, kappa: KappaProfile) -> float:
    """d/ds of :func:`extended_energy`; at s = 0 this is the virial (Pohozaev) residual."""
    grid, t = _fiber_parts(params, kappa, state)
    e1, e2, ec = _fiber_exponents(params)
    u1, u2 = state.u1.values, state.u2.values
    slope = float(np.dot(grid.weights, kappa.radial_slope(math.exp(-s) * grid.nodes) * u1 * u2))
    return (
        math.exp(2 * s) * t.kinetic
        - e1 * params.mu1 / params.p1 * math.exp(e1 * s) * t.power1
        - e2 * params.mu2 / params.p2 * math.exp(e2 * s) * t.power2
        - ec * params.coupling * math.exp(ec * s) * t.coupling
        + slope
    )


def virial(params: ModelParams, kappa: KappaProfile, state: State) -> float | None:
    """Virial residual ds J~(0, u) for N = 3, otherwise None."""
    if params.N != 3:
        return None
    return ds_extended_energy(0.0, state, params, kappa)


def positive_negative_parts(f: Field) -> tuple[Field, Field]:
    """(u+, u-) with u+ = max(u, 0), u- = min(u, 0)."""
    v = f.values
    return Field(f.grid, np.maximum(v, 0.0)), Field(f.grid, np.minimum(v, 0.0))
