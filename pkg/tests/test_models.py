import numpy as np
import numpy.polynomial.chebyshev as C
import pytest
from hypothesis import given, settings, strategies as st

from ssmflow.continuation import SteadyProblem
from ssmflow.eigen import solve_generalized_eig
from ssmflow.errors import DimensionError
from ssmflow.models import (
    P,
    T11,
    T12,
    T22,
    U1,
    U2,
    ChannelModel,
    ModelParams,
    StateVector,
    laminar_state,
    spectrum_bound,
)
from ssmflow.pipeline import build_model, laminar_operator
from ssmflow.spectral import ModeGrid, gauss_lobatto_points

from conftest import random_full


# ----------------------------------------------------------------------
# independent physical-space oracle for the quadratic term


def _phys(grid, vec, f, op, x1, x2):
    """Field (or derivative) on an x1 x x2 grid via numpy's Chebyshev module."""
    arr = np.asarray(vec)[:-2].reshape(grid.nmodes, grid.nfields, grid.npts)[:, f, :]
    coef = arr.T  # (npts, nmodes)
    if op == "dy":
        coef = C.chebder(coef, axis=0)
    vals = C.chebval(x2, coef)  # (nmodes, len(x2))
    n = np.arange(-grid.n1, grid.n1 + 1)
    if op == "dx":
        vals = vals * (1j * grid.k * n)[:, None]
    phase = grid.norm_const * np.exp(1j * grid.k * np.outer(x1, n))
    return phase @ vals  # (len(x1), len(x2))


def oracle_bilinear(model, x, y, oversample=4):
    g = model.grid
    nx = oversample * g.nmodes
    x1 = g.length * np.arange(nx) / nx
    x2 = gauss_lobatto_points(g.n2)
    ph = lambda v, f, op: _phys(g, v, f, op, x1, x2)
    prods = {}
    newt = model.kind == "newtonian"
    rho = 1.0 if newt else model.params.re
    for i in (U1, U2):
        prods[i] = rho * (ph(x, U1, "v") * ph(y, i, "dx") + ph(x, U2, "v") * ph(y, i, "dy"))
    if not newt:
        comp = {(0, 0): T11, (0, 1): T12, (1, 0): T12, (1, 1): T22}
        vel = (U1, U2)
        ops = ("dx", "dy")
        for (a, b), f in comp.items():
            if a > b:
                continue
            # advection plus upper-convected stretching -(L T + T L^T), L_ij = d_j x_i
            val = ph(x, U1, "v") * ph(y, f, "dx") + ph(x, U2, "v") * ph(y, f, "dy")
            for j in range(2):
                val -= ph(x, vel[a], ops[j]) * ph(y, comp[(j, b)], "v")
                val -= ph(y, comp[(a, j)], "v") * ph(x, vel[b], ops[j])
            prods[f] = val
    n = np.arange(-g.n1, g.n1 + 1)
    back = np.exp(-1j * g.k * np.outer(n, x1)) / (nx * g.norm_const)
    out = np.zeros((g.nmodes, g.nfields, g.npts), dtype=complex)
    for f, val in prods.items():
        out[:, f] = back @ val
    mask = np.zeros((g.nfields, g.npts), dtype=bool)
    mask[[U1, U2], 1:-1] = True
    if not newt:
        mask[[T11, T12, T22]] = True
    c = x[-1]
    for f in range(g.nfields):
        w = {U1: rho, U2: rho, P: 0.0}.get(f, 1.0)
        if w and c != 0:
            out[:, f] -= c * w * (back @ ph(y, f, "dx"))
    out *= mask[None]
    return np.concatenate([out.reshape(-1), [0.0, 0.0]])


@pytest.mark.parametrize("seed", range(20))
def test_bilinear_matches_oversampled_oracle_newtonian(seed, newtonian_small):
    model, _ = newtonian_small
    rng = np.random.default_rng(seed)
    x = random_full(model.grid, rng, real=False)
    y = random_full(model.grid, rng, real=False)
    x[-1] = rng.standard_normal()
    b = model.bilinear(x, y)
    ref = oracle_bilinear(model, x, y)
    assert np.max(np.abs(b - ref)) <= 1e-10 * np.max(np.abs(ref))


@pytest.mark.parametrize("seed", range(20))
def test_bilinear_matches_oversampled_oracle_oldroyd(seed, oldroyd_small):
    model, _ = oldroyd_small
    rng = np.random.default_rng(100 + seed)
    x = random_full(model.grid, rng, real=False)
    y = random_full(model.grid, rng, real=False)
    x[-1] = rng.standard_normal()
    b = model.bilinear(x, y)
    ref = oracle_bilinear(model, x, y)
    assert np.max(np.abs(b - ref)) <= 1e-10 * np.max(np.abs(ref))


# ----------------------------------------------------------------------
# laminar states


def test_newtonian_laminar_is_poiseuille():
    g = ModeGrid(1.02056, 2, 20)
    st_ = laminar_state(g, ModelParams(re=3600.0))
    arr = st_.array(g)
    x = np.linspace(-1, 1, 9)
    u = C.chebval(x, arr[0, U1].real) * g.norm_const
    np.testing.assert_allclose(u, 1.5 * (1 - x**2), atol=1e-12)
    assert abs(st_.f - 3.0 / 3600.0) < 1e-15
    assert np.all(arr[1:] == 0)
    # unit bulk velocity: int u dx2 / 2 = 1
    ints = C.chebint(arr[0, U1].real)
    assert abs(g.norm_const * (C.chebval(1, ints) - C.chebval(-1, ints)) / 2 - 1) < 1e-13


def test_oldroyd_laminar_analytic_without_diffusion():
    g = ModeGrid(2.3, 1, 24, 6)
    beta, wi = 0.9, 13.6
    st_ = laminar_state(g, ModelParams(re=0.0, wi=wi, beta_visc=beta))
    arr = st_.array(g)[0].real * g.norm_const
    x = np.linspace(-1, 1, 7)
    du = -3 * x
    np.testing.assert_allclose(C.chebval(x, arr[U1]), 1.5 * (1 - x**2), atol=1e-11)
    np.testing.assert_allclose(C.chebval(x, arr[T12]), (1 - beta) * du, atol=1e-11)
    np.testing.assert_allclose(C.chebval(x, arr[T11]), 2 * wi * (1 - beta) * du**2, atol=1e-9)
    np.testing.assert_allclose(C.chebval(x, arr[T22]), 0.0, atol=1e-11)
    assert abs(st_.f - 3.0) < 1e-11


def test_laminar_residual_vanishes(newtonian_small, oldroyd_small):
    for model, base in (newtonian_small, oldroyd_small):
        v = base.to_full(model.grid)
        r = model.residual(v, phase=False, c_fixed=0.0)
        assert np.max(np.abs(r)) < 1e-11


def test_orr_sommerfeld_literature_value():
    # classic tabulated eigenvalue at centreline Re 10000, alpha 1:
    # c = 0.23752649 + 0.00373967 i; here Re is based on the flux (1.5x smaller)
    # and velocities are 1.5x the centreline-scaled ones
    model = build_model("newtonian", 1.0, 1, 80, re=10000 / 1.5)
    _, ops = laminar_operator(model)
    ops.blocks = [ops.blocks[2]]
    lam = solve_generalized_eig(ops, vectors=False)[0].value
    c = 1j * lam / 1.5
    assert abs(c - (0.23752649 + 0.00373967j)) < 1e-8


# ----------------------------------------------------------------------
# Jacobians against finite differences


def _fd_check(fun, jac, v, d, h=1e-7):
    fd = (fun(v + h * d) - fun(v - h * d)) / (2 * h)
    ex = jac @ d
    return np.linalg.norm(fd - ex) / np.linalg.norm(ex)


@pytest.mark.parametrize("which", ["newtonian_small", "oldroyd_small"])
@pytest.mark.parametrize("seed", range(4))
def test_steady_jacobian_matches_fd(which, seed, request):
    model, base = request.getfixturevalue(which)
    g = model.grid
    rng = np.random.default_rng(seed)
    v = base.to_full(g) + random_full(g, rng, 1e-2)
    v[-1] = 0.3
    d = random_full(g, rng)
    d[-2:] = rng.standard_normal(2)
    jac = model.jacobian(v, phase=True).tosparse()
    err = _fd_check(lambda w: model.residual(w, phase=True), jac, v, d)
    assert err < 1e-5


@pytest.mark.parametrize("which", ["newtonian_small", "oldroyd_small"])
def test_realified_jacobian_matches_fd(which, request):
    model, base = request.getfixturevalue(which)
    pr = SteadyProblem(model, "re", phase=True)
    rng = np.random.default_rng(7)
    full = base.to_full(model.grid) + random_full(model.grid, rng, 1e-2)
    full[-1] = 0.2
    x = pr.restrict(full)
    d = rng.standard_normal(x.size)
    p = model.params.re
    jac = pr.jacobian(x, p)
    err = _fd_check(lambda y: pr.residual(y, p), jac, x, d)
    assert err < 1e-5


def test_linearization_is_steady_jacobian(newtonian_small):
    model, base = newtonian_small
    v = base.to_full(model.grid)
    ops = model.operator_pair(v)
    rng = np.random.default_rng(2)
    u = random_full(model.grid, rng, 1.0)
    h = 1e-6
    # dynamics M du/dt = A v - B(v, v) - rhs, linearized about the base
    fd = (model.residual(v + h * u, False, 0.0) - model.residual(v - h * u, False, 0.0)) / (2 * h)
    ex = ops.a_u @ u
    rows = slice(0, -2)
    assert np.linalg.norm(fd[rows] - ex[rows]) < 1e-6 * np.linalg.norm(ex[rows])


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), a=st.floats(-2, 2), b=st.floats(-2, 2))
def test_bilinear_is_bilinear(seed, a, b, newtonian_small):
    model, _ = newtonian_small
    rng = np.random.default_rng(seed)
    x, y, z = (random_full(model.grid, rng, real=False) for _ in range(3))
    lhs = model.bilinear(x, a * y + b * z)
    rhs = a * model.bilinear(x, y) + b * model.bilinear(x, z)
    assert np.allclose(lhs, rhs, atol=1e-10 * (1 + np.abs(rhs).max()))


def test_bilinear_preserves_reality(newtonian_small):
    from ssmflow.spectral import conjugate_full

    model, _ = newtonian_small
    rng = np.random.default_rng(11)
    x = random_full(model.grid, rng)
    y = random_full(model.grid, rng)
    b = model.bilinear(x, y)
    np.testing.assert_allclose(conjugate_full(model.grid, b), b, atol=1e-12)


# ----------------------------------------------------------------------
# norms and observables


def test_energy_matches_physical_quadrature(newtonian_small):
    model, _ = newtonian_small
    rng = np.random.default_rng(4)
    u = random_full(model.grid, rng, 0.1)
    e_parseval = model.energy(u)
    e_quad = model.observables(u)["e"]
    assert abs(e_parseval - e_quad) < 1e-12 * max(1.0, e_quad)


def test_observables_of_single_mode():
    g = ModeGrid(1.0, 2, 12)
    model = ChannelModel(g, ModelParams(re=100.0))
    # u1 = a cos(k x1) (1 - x2^2) has energy a^2 L / 2 * 8/15 / 2
    v = np.zeros(g.full_size, dtype=complex)
    a = 0.2
    prof = np.array([0.5, 0.0, -0.5])  # 1 - x^2 in Chebyshev
    for n in (-1, 1):
        v[g.index(n, U1, 0) : g.index(n, U1, 0) + 3] = a / 2 / g.norm_const * prof
    obs = model.observables(v)
    assert abs(obs["e"] - 0.5 * a**2 * (g.length / 2) * (16 / 15)) < 1e-13
    assert abs(obs["svf"] - a) < 1e-13  # x1 = 0, x2 = 0
    assert abs(obs["mwnv"]) < 1e-15


def test_state_vector_validation():
    g = ModeGrid(1.0, 2, 8)
    with pytest.raises(DimensionError):
        StateVector.from_full(g, np.zeros(5))
    with pytest.raises(DimensionError):
        ModelParams(re=-1.0)
    with pytest.raises(DimensionError):
        ChannelModel(ModeGrid(1.0, 2, 8, 6), ModelParams(re=0.0))


def test_spectral_envelope_on_laminar_spectrum(newtonian_small):
    model, base = newtonian_small
    ops = model.operator_pair(base.to_full(model.grid))
    consts = model.spectrum_bound_constants(base)
    for p in solve_generalized_eig(ops, vectors=False):
        assert abs(p.value.imag) <= 1.05 * spectrum_bound(consts, model.params.re, p.value)
