"""Sobolev-preconditioned projected gradient descent on products of mass spheres.

Shared by the scalar ground-state solver and the coupled minimizer.  Fields
are stacked as a (k, M) array; each row lives on its own L^2 sphere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import RadialGrid, enforce_bc
from .model import (
    _masses,
    _multipliers,
    _precond_shift,
    _preconditioned_tangent,
    _project,
    _renormalize,
    _wnorm,
)

SignFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class DescentOptions:
    max_iterations: int = 50000
    tol: float = 1e-8
    step0: float = 1e-2
    backtrack: float = 0.5
    restarts: int = 5
    perturbation: float = 1e-2
    armijo: float = 1e-4
    max_step: float = 4.0
    stagnation_window: int = 50
    stagnation_rtol: float = 1e-14
    record_every: int = 0


@dataclass
class DescentResult:
    U: np.ndarray
    energy: float
    grad_norm: float
    multipliers: np.ndarray
    iterations: int
    converged: bool
    status: str
    restarts_used: int = 0
    max_mass_defect: float = 0.0
    sign_step_violations: int = 0
    max_energy_increase: float = 0.0
    history: list = field(default_factory=list)


def _random_tangent(grid: RadialGrid, U: np.ndarray, rng: np.random.Generator, size: float) -> np.ndarray:
    # smooth random direction: one shifted-Laplacian solve of white noise
    noise = rng.standard_normal(U.shape)
    noise[:, -1] = 0.0
    smooth = np.stack([
        _preconditioned_tangent(grid, U[i:i + 1], noise[i:i + 1], [1.0])[0] for i in range(U.shape[0])
    ])
    norms = np.sqrt(smooth**2 @ grid.weights)
    scale = np.sqrt(_masses(grid, U))
    with np.errstate(divide="ignore", invalid="ignore"):
        fac = np.where(norms > 0, size * scale / norms, 0.0)
    return smooth * fac[:, None]


def descend(
    grid: RadialGrid,
    energy_fn: Callable[[np.ndarray], float],
    grad_fn: Callable[[np.ndarray], np.ndarray],
    U0: np.ndarray,
    targets,
    opts: DescentOptions,
    *,
    sign_fn: SignFn | None = None,
    seed: int = 0,
    mass_rtol_check: float = 1e-12,
) -> DescentResult:
    """Minimize ``energy_fn`` over the product of spheres ``|U_i|^2 = targets_i``.

    Each iteration takes a preconditioned, tangent search direction, runs
    Armijo backtracking on the renormalized trial point, then applies
    ``sign_fn`` (for example nodewise absolute values).  Accepted iterates
    never increase the energy beyond 1e-14 relative slack; a sign step that
    would increase it is counted in ``sign_step_violations`` and discarded.
    """
    targets = np.asarray(targets, dtype=float)
    rng = np.random.default_rng(seed)
    U = _renormalize(grid, enforce_bc(np.array(U0, dtype=float)), targets)
    if sign_fn is not None:
        U = sign_fn(U)
    E = energy_fn(U)
    t = opts.step0
    history: list = []
    stall = 0
    restarts = 0
    sign_viol = 0
    max_rise = 0.0
    max_defect = 0.0
    gnorm = np.inf
    lam = np.zeros(U.shape[0])
    status = "max_iterations"
    converged = False
    it = 0
    for it in range(opts.max_iterations + 1):
        G = grad_fn(U)
        lam = _multipliers(grid, G, U, targets)
        gnorm = _wnorm(grid, _project(grid, U, G))
        if opts.record_every and it % opts.record_every == 0:
            history.append({"iteration": it, "energy": E, "grad_norm": gnorm})
        if gnorm <= opts.tol:
            converged, status = True, "converged"
            break
        if it == opts.max_iterations:
            break
        shifts = [_precond_shift(grid, l) for l in lam]
        D = _preconditioned_tangent(grid, U, G, shifts)
        slope = float(np.sum((G * D) @ grid.weights))
        if not slope > 0:
            D = _project(grid, U, G)
            slope = float(np.sum((G * D) @ grid.weights))
        accepted = False
        step = min(t, opts.max_step)
        while step > 1e-14:
            trial = _renormalize(grid, U - step * D, targets)
            Et = energy_fn(trial)
            if Et <= E - opts.armijo * step * slope:
                accepted = True
                break
            step *= opts.backtrack
        if accepted:
            if sign_fn is not None:
                signed = sign_fn(trial)
                Es = energy_fn(signed)
                if Es <= Et + 1e-14 * max(1.0, abs(Et)):
                    trial, Et = signed, Es
                else:
                    sign_viol += 1
            max_rise = max(max_rise, Et - E)
            rel = (E - Et) / max(abs(E), 1e-300)
            U, E = trial, Et
            t = min(2.0 * step, opts.max_step)
            stall = stall + 1 if rel < opts.stagnation_rtol else 0
        else:
            stall = opts.stagnation_window
        defect = np.max(np.abs(_masses(grid, U) / targets - 1.0))
        max_defect = max(max_defect, float(defect))
        if defect > mass_rtol_check:
            U = _renormalize(grid, U, targets)
        if stall >= opts.stagnation_window:
            if restarts >= opts.restarts:
                status = "stagnated"
                break
            restarts += 1
            stall = 0
            U = _renormalize(grid, U + _random_tangent(grid, U, rng, opts.perturbation), targets)
            if sign_fn is not None:
                U = sign_fn(U)
            E = energy_fn(U)
            t = opts.step0
    return DescentResult(
        U=U,
        energy=E,
        grad_norm=float(gnorm),
        multipliers=np.asarray(lam, dtype=float),
        iterations=it,
        converged=converged,
        status=status,
        restarts_used=restarts,
        max_mass_defect=max_defect,
        sign_step_violations=sign_viol,
        max_energy_increase=max_rise,
        history=history,
    )
