import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupled_nls.grid import Field, build_grid, dirichlet_energy, enforce_bc, inner, integrate
from coupled_nls.model import (
    SUBCRITICAL,
    SUPERCRITICAL_CUBIC,
    UNCLASSIFIED,
    KappaProfile,
    ModelParams,
    State,
    compute_multipliers,
    ds_extended_energy,
    energy,
    energy_terms,
    extended_energy,
    free_gradient,
    gaussian_state,
    kkt_residual,
    positive_negative_parts,
    project_tangent,
    renormalize,
    scalar_energy,
    scale_state,
    virial,
)

GRID = build_grid(3, 24.0, 2001)
CUBIC = ModelParams(3, 1.0, 1.0, 1.0, 4.0, 4.0, 2.0, 2.0)
SUB = ModelParams()


def random_state(grid, rng, signed=True):
    r = grid.nodes
    out = []
    for _ in range(2):
        c = rng.uniform(0.3, 2.0, 3)
        w = rng.uniform(0.5, 3.0, 3)
        f = sum(ci * np.exp(-((r / wi) ** 2)) for ci, wi in zip(c, w))
        if signed:
            f = f * np.cos(rng.uniform(0, 1.5) * r)
        out.append(f)
    return State.from_arrays(grid, *out)


def smooth_direction(grid, rng):
    r = grid.nodes
    return [np.exp(-((r / rng.uniform(0.5, 4)) ** 2)) * np.cos(rng.uniform(0, 2) * r) for _ in range(2)]


# ---------------------------------------------------------------- parameters


def test_regime_classifier():
    assert SUB.regime == SUBCRITICAL
    assert CUBIC.regime == SUPERCRITICAL_CUBIC
    assert ModelParams(p1=3.5, p2=3.0).regime == UNCLASSIFIED  # 3.5 > 2 + 4/3
    # N = 5: second-order condition on p fails for p >= 2 + 2/3
    assert ModelParams(N=5, p1=2.7, p2=2.5, r1=1.2, r2=1.2).regime == UNCLASSIFIED
    assert ModelParams(N=5, p1=2.5, p2=2.5, r1=1.2, r2=1.2).regime == SUBCRITICAL


@pytest.mark.parametrize("bad", [dict(mu1=0.0), dict(a2=-1.0), dict(p1=6.0), dict(p2=2.0),
                                 dict(r1=3.0, r2=3.5), dict(beta=math.nan), dict(N=1),
                                 dict(coupling_form="cubic"), dict(coupling_form="other")])
def test_params_validation(bad):
    with pytest.raises(ValueError):
        ModelParams(**bad)


def test_coupling_conventions():
    assert CUBIC.resolved_coupling_form == "cubic"
    assert CUBIC.coupling == 0.5 and CUBIC.beta_equation == 1.0
    general = ModelParams(3, 1, 1, 1, 4, 4, 2, 2, coupling_form="general")
    assert general.coupling == 1.0
    assert SUB.coupling == 1.0 and SUB.beta_equation == 1.5


# ---------------------------------------------------------------- kappa


def test_kappa_profiles_and_slopes():
    r = np.linspace(0.0, 10.0, 2001)
    h = 1e-6
    for k in (KappaProfile.rational(0.3, 1.5), KappaProfile.gaussian(-0.2, 1.3)):
        fd = r[1:] * (k(r[1:] + h) - k(r[1:] - h)) / (2 * h)
        assert np.allclose(k.radial_slope(r[1:]), fd, atol=1e-8)
        assert k.negated().negated() == k
        assert np.array_equal(k.negated()(r), -k(r))
    assert KappaProfile.gaussian(-0.2).sign == "nonpositive"
    assert KappaProfile.zero().is_zero and KappaProfile.rational(0.0).is_zero


def test_kappa_rational_closed_form_and_sign():
    k = KappaProfile.rational(0.1)
    assert k(np.array([0.0, 1.0]))[1] == pytest.approx(0.05)
    assert k.sup_norm(GRID) == pytest.approx(0.1)
    assert k.sign_consistent(GRID) and k.negated().sign_consistent(GRID)


def test_kappa_tabulated():
    radii = np.linspace(0, 10, 41)
    k = KappaProfile.tabulated(radii, 0.2 / (1 + radii**1.5))
    ref = KappaProfile.rational(0.2)
    r = np.linspace(0, 10, 501)
    assert np.max(np.abs(k(r) - ref(r))) < 2e-3
    assert k(np.array([50.0]))[0] == pytest.approx(k(np.array([10.0]))[0])
    assert k.negated().sign == "nonpositive"
    with pytest.raises(ValueError):
        KappaProfile.tabulated([0, 1, 2], [1.0, -1.0, 0.5])
    with pytest.raises(ValueError):
        KappaProfile.tabulated([0, 2, 1], [1.0, 1.0, 0.5])


# ---------------------------------------------------------------- energy


def brute_force_energy(grid, params, kappa, state):
    """Independent loop-based evaluation of the same discrete functional."""
    N, M, h = grid.dimension, grid.node_count, grid.h
    area = 2 * math.pi ** (N / 2) / math.gamma(N / 2)
    u1, u2 = state.u1.values, state.u2.values
    total = 0.0
    for i in range(M - 1):
        rm = (i + 0.5) * h
        total += 0.5 * area * rm ** (N - 1) * ((u1[i + 1] - u1[i]) ** 2 + (u2[i + 1] - u2[i]) ** 2) / h
    b = params.beta / 2 if params.is_cubic and params.coupling_form != "general" else params.beta
    for i in range(M):
        r = grid.nodes[i]
        w = area * r ** (N - 1) * h * (0.5 if i in (0, M - 1) else 1.0)
        dens = (params.mu1 / params.p1 * abs(u1[i]) ** params.p1
                + params.mu2 / params.p2 * abs(u2[i]) ** params.p2
                + b * abs(u1[i]) ** params.r1 * abs(u2[i]) ** params.r2
                + float(kappa(np.array([r]))[0]) * u1[i] * u2[i])
        total -= w * dens
    return total


@pytest.mark.parametrize("params", [SUB, CUBIC])
def test_energy_matches_brute_force(params):
    grid = build_grid(3, 12.0, 801)
    rng = np.random.default_rng(3)
    kappa = KappaProfile.rational(0.4)
    for _ in range(3):
        state = random_state(grid, rng)
        e = energy(params, kappa, state)
        assert e == pytest.approx(brute_force_energy(grid, params, kappa, state), rel=1e-12, abs=1e-12)


def test_energy_decouples_bitwise():
    params = ModelParams(beta=0.0, mu1=1.3, mu2=0.7)
    state = random_state(GRID, np.random.default_rng(0))
    e = energy(params, KappaProfile.zero(), state)
    i1 = scalar_energy(GRID, state.u1, 1.3, 3.0)
    i2 = scalar_energy(GRID, state.u2, 0.7, 3.0)
    assert e == i1 + i2


def test_cubic_symmetric_gaussian_energy():
    state = gaussian_state(GRID, CUBIC)
    u = state.u1.values
    expected = dirichlet_energy(GRID, u) - integrate(GRID, u**4)
    assert energy(CUBIC, KappaProfile.zero(), state) == pytest.approx(expected, rel=1e-13)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 0.5), st.floats(0.0, 2.0))
def test_abs_never_increases_energy(seed, c, beta):
    grid = build_grid(3, 12.0, 401)
    params = ModelParams(beta=beta)
    kappa = KappaProfile.rational(c)
    state = random_state(grid, np.random.default_rng(seed))
    absst = State.from_arrays(grid, np.abs(state.u1.values), np.abs(state.u2.values))
    e, ea = energy(params, kappa, state), energy(params, kappa, absst)
    assert ea <= e + 1e-12 * max(1.0, abs(e))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(-0.5, 0.5))
def test_mirror_identity(seed, c):
    grid = build_grid(3, 12.0, 401)
    kappa = KappaProfile.rational(c)
    state = random_state(grid, np.random.default_rng(seed))
    flipped = State.from_arrays(grid, -state.u1.values, state.u2.values)
    e = energy(SUB, kappa, state)
    assert energy(SUB, kappa.negated(), flipped) == pytest.approx(e, rel=1e-12, abs=1e-12)


# ---------------------------------------------------------------- gradient


def directional_fd(params, kappa, state, phi, eps=1e-5):
    g = state.grid
    plus = State.from_arrays(g, state.u1.values + eps * phi[0], state.u2.values + eps * phi[1])
    minus = State.from_arrays(g, state.u1.values - eps * phi[0], state.u2.values - eps * phi[1])
    return (energy(params, kappa, plus) - energy(params, kappa, minus)) / (2 * eps)


@pytest.mark.parametrize("params", [SUB, CUBIC, ModelParams(p1=2.6, p2=3.2, r1=1.1, r2=1.3)])
def test_gradient_matches_central_differences(params):
    rng = np.random.default_rng(11)
    kappa = KappaProfile.gaussian(0.3, 2.0)
    # |u|^r with r < 2 is not C^2 across sign changes, so keep those states positive
    signed = min(params.p1, params.p2, params.r1, params.r2) >= 1.5
    for _ in range(5):
        state = random_state(GRID, rng, signed=signed)
        phi = [Field(GRID, p).values for p in smooth_direction(GRID, rng)]
        G = free_gradient(params, kappa, state)
        exact = inner(GRID, G[0], phi[0]) + inner(GRID, G[1], phi[1])
        fd = directional_fd(params, kappa, state, phi)
        assert abs(fd - exact) <= 1e-6 * abs(exact)


def test_gradient_zero_component_and_symmetry():
    g = GRID
    u = np.exp(-g.nodes**2)
    st0 = State.from_arrays(g, u, np.zeros(g.node_count))
    assert np.all(free_gradient(SUB, KappaProfile.zero(), st0)[1].values == 0.0)
    sym = State.from_arrays(g, u, u)
    G1, G2 = free_gradient(SUB, KappaProfile.rational(0.2), sym)
    assert np.array_equal(G1.values, G2.values)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_gradient_rejects_non_finite():
    params = ModelParams(r1=0.5, r2=1.8)
    g = build_grid(3, 5.0, 101)
    st0 = State.from_arrays(g, np.full(101, 1e200), np.full(101, 1e200))
    with pytest.raises(FloatingPointError):
        free_gradient(params, KappaProfile.zero(), st0)


# ---------------------------------------------------------------- multipliers and projection


def test_multiplier_sum_identity():
    params = ModelParams(beta=0.8, mu1=1.2, p1=2.8, r1=1.2, r2=1.4)
    kappa = KappaProfile.rational(0.3)
    state = renormalize(random_state(GRID, np.random.default_rng(5)), params)
    l1, l2 = compute_multipliers(params, kappa, state)
    t = energy_terms(params, kappa, state)
    rhs = (t.kinetic - params.mu1 * t.power1 - params.mu2 * t.power2
           - (params.r1 + params.r2) * params.beta * t.coupling - 2 * t.linear)
    assert l1 * params.a1**2 + l2 * params.a2**2 == pytest.approx(rhs, rel=1e-12)


def test_multipliers_zero_mass_guard():
    st0 = State.from_arrays(GRID, np.zeros(GRID.node_count), np.exp(-GRID.nodes**2))
    with pytest.raises(ValueError):
        compute_multipliers(SUB, KappaProfile.zero(), st0)


def test_projection_properties():
    rng = np.random.default_rng(2)
    state = renormalize(random_state(GRID, rng), SUB)
    # radial directions are annihilated
    P = project_tangent(state, (2.5 * state.u1.values, -1.5 * state.u2.values))
    assert max(np.max(np.abs(P[0].values)), np.max(np.abs(P[1].values))) < 1e-13
    grads = smooth_direction(GRID, rng)
    P = project_tangent(state, grads)
    for Pi, ui, gi in zip(P, (state.u1, state.u2), grads):
        norm = math.sqrt(inner(GRID, gi, gi) * inner(GRID, ui, ui))
        assert abs(inner(GRID, Pi, ui)) <= 1e-12 * norm
    # idempotent on tangent input
    P2 = project_tangent(state, P)
    assert np.max(np.abs(P2[0].values - P[0].values)) < 1e-14
    assert np.max(np.abs(P2[1].values - P[1].values)) < 1e-14


def test_renormalize():
    g = GRID
    u = enforce_bc(np.exp(-g.nodes**2))
    u = u * 2 / math.sqrt(integrate(g, u * u))  # mass 4
    st0 = renormalize(State.from_arrays(g, u, u), SUB)
    assert np.allclose(st0.u1.values, u / 2, rtol=1e-14)
    st1 = renormalize(random_state(g, np.random.default_rng(7)), ModelParams(a1=0.5, a2=2.0))
    m1, m2 = st1.masses()
    assert m1 == pytest.approx(0.25, rel=1e-12) and m2 == pytest.approx(4.0, rel=1e-12)
    again = renormalize(st1, ModelParams(a1=0.5, a2=2.0))
    assert np.allclose(again.u1.values, st1.u1.values, rtol=1e-14)
    with pytest.raises(ValueError):
        renormalize(State.from_arrays(g, np.zeros(g.node_count), u), SUB)


def test_kkt_residual_includes_mass_defect():
    state = gaussian_state(GRID, SUB)
    base = kkt_residual(SUB, KappaProfile.zero(), state)
    off = ModelParams(a1=1.1)
    assert kkt_residual(off, KappaProfile.zero(), state) > base


# ---------------------------------------------------------------- scaling fiber


def test_scale_state_identity_and_errors():
    st0 = gaussian_state(GRID, CUBIC)
    same = scale_state(0.0, st0)
    assert np.array_equal(same.u1.values, st0.u1.values)
    with pytest.raises(ValueError):
        scale_state(7.0, st0)
    with pytest.raises(ValueError):
        scale_state(0.1, gaussian_state(build_grid(2, 10.0, 201), ModelParams(N=2, p1=3, p2=3, r1=1.5, r2=1.5)))


def test_scale_state_mass_and_kinetic():
    g = build_grid(3, 24.0, 4001)
    st0 = gaussian_state(g, CUBIC)
    sc = scale_state(0.5, st0)
    for a, b in zip(sc.masses(), st0.masses()):
        assert a == pytest.approx(b, rel=1e-4)
    k0 = dirichlet_energy(g, st0.u1)
    assert dirichlet_energy(g, sc.u1) == pytest.approx(math.exp(1.0) * k0, rel=1e-3)


def test_extended_energy_two_exponential_form():
    st0 = gaussian_state(GRID, CUBIC)
    kz = KappaProfile.zero()
    assert extended_energy(0.0, st0, CUBIC, kz) == energy(CUBIC, kz, st0)
    t = energy_terms(CUBIC, kz, st0)
    A = 0.5 * t.kinetic
    B = 0.25 * (t.power1 + t.power2) + CUBIC.coupling * t.coupling
    for s in (-1.0, 0.3, 1.2):
        assert extended_energy(s, st0, CUBIC, kz) == pytest.approx(A * math.exp(2 * s) - B * math.exp(3 * s), rel=1e-12)
        assert ds_extended_energy(s, st0, CUBIC, kz) == pytest.approx(
            2 * A * math.exp(2 * s) - 3 * B * math.exp(3 * s), rel=1e-12)
    s_star = math.log(2 * A / (3 * B))
    assert abs(ds_extended_energy(s_star, st0, CUBIC, kz)) < 1e-10 * A
    vals = [extended_energy(s, st0, CUBIC, kz) for s in np.linspace(s_star, s_star + 3, 20)]
    assert np.all(np.diff(vals) < 0)
    # against the resampling path
    sc = scale_state(0.4, st0)
    assert extended_energy(0.4, st0, CUBIC, kz) == pytest.approx(energy(CUBIC, kz, sc), rel=1e-3)


def test_extended_energy_convergence_order():
    kappa = KappaProfile.rational(2.0)
    errs = []
    for M in (501, 1001, 2001):
        g = build_grid(3, 16.0, M)
        st0 = renormalize(State.from_arrays(g, np.exp(-g.nodes**2) * (1 + 0.3 * g.nodes**2),
                                            np.exp(-0.6 * g.nodes**2)), CUBIC)
        errs.append(abs(extended_energy(0.5, st0, CUBIC, kappa) - energy(CUBIC, kappa, scale_state(0.5, st0))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9)


@pytest.mark.parametrize("s", [-0.7, 0.0, 0.4, 1.1])
def test_ds_extended_energy_finite_difference(s):
    kappa = KappaProfile.rational(0.8)
    state = renormalize(random_state(GRID, np.random.default_rng(4), signed=False), CUBIC)
    eps = 1e-5
    fd = (extended_energy(s + eps, state, CUBIC, kappa) - extended_energy(s - eps, state, CUBIC, kappa)) / (2 * eps)
    d = ds_extended_energy(s, state, CUBIC, kappa)
    assert abs(fd - d) <= 1e-6 * abs(d)
    if s == 0.0:
        assert virial(CUBIC, kappa, state) == d


def test_generalized_fiber_subcritical_exponents():
    # for p = 3 in R^3 the power term scales like e^{3s/2}
    kappa = KappaProfile.zero()
    state = gaussian_state(GRID, SUB)
    t = energy_terms(SUB, kappa, state)
    s = 0.37
    expected = (0.5 * math.exp(2 * s) * t.kinetic
                - math.exp(1.5 * s) * (t.power1 + t.power2) / 3
                - SUB.coupling * math.exp(1.5 * s) * t.coupling)
    assert extended_energy(s, state, SUB, kappa) == pytest.approx(expected, rel=1e-13)


# ---------------------------------------------------------------- parts


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_positive_negative_parts(seed):
    g = build_grid(3, 6.0, 101)
    f = Field(g, np.random.default_rng(seed).normal(size=101))
    pos, neg = positive_negative_parts(f)
    assert np.array_equal(pos.values + neg.values, f.values)
    assert np.all(pos.values >= 0) and np.all(neg.values <= 0)
    pos2, neg2 = positive_negative_parts(Field(g, -f.values))
    assert np.array_equal(pos2.values, -neg.values)
    nn = Field(g, np.abs(f.values))
    p3, n3 = positive_negative_parts(nn)
    assert np.array_equal(p3.values, nn.values) and not np.any(n3.values)
