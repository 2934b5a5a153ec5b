import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssmflow.eigen import solve_generalized_eig, split_spectrum
from ssmflow.errors import CrossResonanceError, DimensionError, MissingOrderError
from ssmflow.models import OperatorPair
from ssmflow.reduced import ReducedVectorField, invariant_radii, to_polar
from ssmflow.ssm import (
    SsmConfig,
    classify_resonance,
    compute_eta,
    compute_expansion,
    conjugation_defect,
    enumerate_multiindices,
    error_norm,
    evaluate_K,
    fundamental_radius,
    invariance_defect,
    paired_theta,
    seed_table,
)


class Rotor:
    """x' = a x - w y, y' = w x + a y, z' = -mu z + x^2 + y^2, 0 = q - z.

    ``x^2 + y^2`` grows like ``e^{2at}``, so the slow manifold is the graph
    ``z = q = (x^2 + y^2) / (mu + 2a)``.
    """

    def __init__(self, a=-0.1, w=1.0, mu=1.0):
        self.a, self.w, self.mu = a, w, mu
        A = np.array([[a, -w, 0, 0], [w, a, 0, 0], [0, 0, -mu, 0], [0, 0, -1.0, 1.0]], dtype=complex)
        M = np.diag([1.0, 1.0, 1.0, 0.0]).astype(complex)
        self.ops = OperatorPair(A, M)

    @staticmethod
    def bilinear(u, v):
        out = np.zeros(4, dtype=complex)
        out[2] = -(u[0] * v[0] + u[1] * v[1])
        return out

    def split(self, beta):
        return split_spectrum(solve_generalized_eig(self.ops, method="dense"), self.ops, beta)

    def table(self, order=4, style="graph", beta=-0.5, **kw):
        return compute_expansion(self.split(beta), self.ops, self.bilinear, SsmConfig(order=order, style=style, **kw))


# ----------------------------------------------------------------------
# multi-indices and resonance classification


@pytest.mark.parametrize("r,j", [(1, 0), (1, 5), (2, 3), (3, 4), (4, 2)])
def test_multiindex_enumeration(r, j):
    from math import comb

    alphas = enumerate_multiindices(r, j)
    assert len(alphas) == comb(j + r - 1, r - 1) == len(set(alphas))
    assert all(sum(a) == j and min(a) >= 0 and len(a) == r for a in alphas)
    assert alphas == sorted(alphas, reverse=True)


def test_multiindex_rejects_bad_dimension():
    with pytest.raises(DimensionError):
        enumerate_multiindices(0, 2)


class _Split:
    def __init__(self, values, sigma2):
        self.values = np.asarray(values)
        self.sigma2_values = np.asarray(sigma2)


def test_laminar_type_resonances_are_internal():
    lam = -0.00105 + 0.409j
    sp = _Split([lam, np.conj(lam)], [-0.05 + 0.3j, -0.2 + 0.9j])
    r21 = classify_resonance((2, 1), sp)
    r12 = classify_resonance((1, 2), sp)
    assert r21.kind == "internal" and r21.q == (0,)
    assert r12.kind == "internal" and r12.q == (1,)
    assert r21.distance == pytest.approx(abs(2 * lam.real) / abs(lam))
    assert classify_resonance((2, 0), sp).kind == "none"


def test_cross_and_near_cross_classification():
    sp = _Split([-0.1 + 1j, -0.1 - 1j], [-0.2, -5.0])
    assert classify_resonance((1, 1), sp).kind == "cross"
    near = _Split([-0.1 + 1j, -0.1 - 1j], [-0.2 + 1e-3])
    assert classify_resonance((1, 1), near, res_tol=1e-2, cross_tol=1e-6).kind == "near-cross"


# ----------------------------------------------------------------------
# toy manifolds with closed-form graphs


@pytest.mark.parametrize("style", ["graph", "mixed"])
def test_rotor_graph_is_exact(style):
    toy = Rotor()
    table = toy.table(order=4, style=style)
    rng = np.random.default_rng(3)
    for _ in range(5):
        theta = paired_theta(table, rng.uniform(0.01, 0.5), rng.uniform(0, 2 * np.pi))
        v = evaluate_K(table, theta)
        assert np.max(np.abs(v.imag)) < 1e-13
        x, y, z, q = v.real
        h = (x * x + y * y) / (toy.mu + 2 * toy.a)
        assert abs(z - h) < 1e-13 and abs(q - h) < 1e-13
        assert np.linalg.norm(invariance_defect(table, theta, toy.ops, toy.bilinear)) < 1e-13
    for alpha, rv in table.r_coeffs.items():
        if sum(alpha) >= 2:
            assert np.max(np.abs(rv)) < 1e-14


def test_rotor_normal_form_sparsity():
    # no internal resonance: |2 lambda + conj(lambda) - lambda| / |lambda| = 2|a| / |lambda| >> res_tol
    table = Rotor(a=-0.5, mu=3.0).table(order=4, style="normal-form", beta=-0.7)
    assert not any(e["kind"] == "internal" for e in table.resonance_log)
    for alpha, rv in table.r_coeffs.items():
        if sum(alpha) >= 2:
            assert np.all(rv == 0)


def test_rotor_cross_resonance_raises():
    # 2 Re(lambda) = -0.2 coincides with the decay rate of z
    toy = Rotor(a=-0.1, mu=0.2)
    with pytest.raises(CrossResonanceError) as info:
        toy.table(order=2, beta=-0.15)
    assert info.value.alpha == (1, 1)
    assert abs(info.value.matched + 0.2) < 1e-12


def test_order_one_table_is_the_split():
    toy = Rotor()
    split = toy.split(-0.5)
    table = compute_expansion(split, toy.ops, toy.bilinear, SsmConfig(order=1))
    assert table.orders() == [1]
    for q in range(2):
        e = tuple(int(i == q) for i in range(2))
        np.testing.assert_array_equal(table.k_coeffs[e], split.right[:, q])
        np.testing.assert_array_equal(table.r_coeffs[e], np.diag(split.values)[:, q])
    v = evaluate_K(table, np.array([0.3, 0.0]))
    np.testing.assert_allclose(v, 0.3 * split.right[:, 0], atol=1e-15)


def test_missing_order_is_reported():
    toy = Rotor()
    table = seed_table(toy.split(-0.5))
    with pytest.raises(MissingOrderError):
        compute_eta(table, 3, toy.ops, toy.bilinear)


def test_jordan_block_coupled_solve():
    # x' = l x + y, y' = l y, z' = -mu z + x^2: quadratic graph solved by hand
    lam, mu = -0.1, 1.0
    A = np.array([[lam, 1, 0], [0, lam, 0], [0, 0, -mu]], dtype=complex)
    ops = OperatorPair(A, np.eye(3, dtype=complex))

    def bil(u, v):
        return np.array([0, 0, -u[0] * v[0]], dtype=complex)

    k1 = np.eye(3)[:, :2]
    r1 = np.array([[lam, 1.0], [0.0, lam]])
    seed = seed_table(k1=k1, r1=r1)
    assert seed.r1 is not None
    table = compute_expansion(None, ops, bil, SsmConfig(order=3, style="graph"), seed=seed, left=k1.astype(complex))
    d = 2 * lam + mu
    c1 = 1 / d
    c2 = -2 * c1 / d
    c3 = -c2 / d
    np.testing.assert_allclose(table.k_coeffs[(2, 0)][2], c1, rtol=1e-13)
    np.testing.assert_allclose(table.k_coeffs[(1, 1)][2], c2, rtol=1e-13)
    np.testing.assert_allclose(table.k_coeffs[(0, 2)][2], c3, rtol=1e-13)
    rng = np.random.default_rng(0)
    for _ in range(4):
        theta = rng.standard_normal(2) * 0.3
        assert np.linalg.norm(invariance_defect(table, theta, ops, bil)) < 1e-13
    assert all(v < 1e-12 for v in table.residuals.values())


@settings(max_examples=15, deadline=None)
@given(a=st.floats(-0.4, -0.01), w=st.floats(0.3, 3.0), mu=st.floats(2.0, 5.0), order=st.integers(2, 5))
def test_rotor_property(a, w, mu, order):
    toy = Rotor(a, w, mu)
    table = toy.table(order=order, beta=0.5 * (a - mu))
    assert all(v < 1e-9 for v in table.residuals.values())
    assert conjugation_defect(table, np.conj) < 1e-12
    theta = paired_theta(table, 0.2, 0.7)
    v = evaluate_K(table, theta).real
    assert abs(v[2] - (v[0] ** 2 + v[1] ** 2) / (mu + 2 * a)) < 1e-12


# ----------------------------------------------------------------------
# laminar channel example


@pytest.fixture(scope="module")
def laminar(newtonian_resolved):
    model, base = newtonian_resolved
    ops = model.operator_pair(base.to_full(model.grid))
    split = split_spectrum(solve_generalized_eig(ops), ops, -0.002)
    tables = {
        style: compute_expansion(split, ops, model.bilinear, SsmConfig(order=3, style=style))
        for style in ("graph", "normal-form", "mixed")
    }
    return model, base, ops, split, tables


def test_laminar_per_order_residuals(laminar):
    *_, tables = laminar
    for table in tables.values():
        assert table.order == 3
        assert all(v < 1e-9 for v in table.residuals.values())


def test_laminar_resonance_log(laminar):
    *_, tables = laminar
    log = {tuple(e["alpha"]): e for e in tables["mixed"].resonance_log}
    assert log[(2, 1)]["kind"] == "internal" and log[(2, 1)]["q"] == [0]
    assert log[(1, 2)]["kind"] == "internal" and log[(1, 2)]["q"] == [1]
    assert tables["mixed"].style[(2, 1)] == "graph"
    assert tables["mixed"].style[(3, 0)] == "normal-form"


def test_laminar_normal_form_order_two_is_linear(laminar):
    *_, tables = laminar
    for alpha, rv in tables["normal-form"].r_coeffs.items():
        if sum(alpha) == 2:
            assert np.all(rv == 0)


def test_graph_tangency(laminar):
    model, base, ops, split, tables = laminar
    zm = split.left.conj().T
    for name in ("graph", "mixed"):
        table = tables[name]
        for alpha, kv in table.k_coeffs.items():
            if sum(alpha) >= 2 and table.style[alpha] == "graph":
                assert np.max(np.abs(zm @ (ops.m @ kv))) < 1e-10 * max(1.0, np.linalg.norm(kv))


def test_conjugation_closure(laminar):
    model, base, ops, split, tables = laminar
    for table in tables.values():
        assert conjugation_defect(table, ops.conjugate) < 1e-10
        for alpha, rv in table.r_coeffs.items():
            other = table.r_coeffs[table.swap(alpha)]
            for q, p in enumerate(table.partner):
                assert abs(other[p] - np.conj(rv[q])) < 1e-10 * max(1.0, abs(rv[q]))


def test_tangency_limit(laminar):
    model, base, ops, split, tables = laminar
    table = tables["mixed"]
    ratios = []
    for rho in (1e-2, 1e-3, 1e-4):
        theta = paired_theta(table, rho, 0.3)
        lin = evaluate_K(table, theta, max_order=1)
        ratios.append(np.linalg.norm(evaluate_K(table, theta) - lin) / np.linalg.norm(theta))
    assert ratios[0] > ratios[1] > ratios[2]
    assert ratios[2] < 1e-2 * ratios[0]


def test_error_norm_monotone_on_rays(laminar):
    model, base, ops, split, tables = laminar
    table = tables["mixed"]
    assert error_norm(table, np.zeros(2), ops, model.bilinear) == 0.0
    for phi in (0.0, 1.0):
        errs = [
            error_norm(table, paired_theta(table, rho, phi), ops, model.bilinear) for rho in np.geomspace(1e-4, 0.3, 20)
        ]
        assert all(b >= a for a, b in zip(errs, errs[1:]))


def test_fundamental_domain_holds_the_orbit(laminar):
    model, base, ops, split, tables = laminar
    table = tables["mixed"]
    radii = invariant_radii(to_polar(ReducedVectorField.from_table(table)))
    assert radii
    assert fundamental_radius(table, ops, model.bilinear, 1.5e-2) > radii[0].radius


def test_laminar_styles_coincide(laminar):
    # order-2 monomials live in Fourier modes 0 and +-2, orthogonal to the
    # mode-1 left vectors, so both styles produce the same table here
    *_, tables = laminar
    g, nf = tables["graph"], tables["normal-form"]
    for alpha, kv in g.k_coeffs.items():
        assert np.linalg.norm(kv - nf.k_coeffs[alpha]) <= 1e-12 * max(1.0, np.linalg.norm(kv))


class Mixer:
    """Rotating pair and one damped mode with a generic quadratic coupling."""

    def __init__(self, a=-0.1, w=1.0, mu=2.0, seed=5):
        A = np.array([[a, -w, 0], [w, a, 0], [0, 0, -mu]], dtype=complex)
        self.ops = OperatorPair(A, np.eye(3, dtype=complex))
        t = np.random.default_rng(seed).standard_normal((3, 3, 3))
        self.t = 0.5 * (t + t.transpose(0, 2, 1))

    def bilinear(self, u, v):
        return np.einsum("ijk,j,k->i", self.t, u, v)


@pytest.mark.parametrize("order", [3, 4])
def test_style_equivalence_on_the_manifold(order):
    """Normal-form points re-expressed in graph coordinates agree to O(rho^(L+1))."""
    toy = Mixer()
    split = split_spectrum(solve_generalized_eig(toy.ops, method="dense"), toy.ops, -1.0)
    g = compute_expansion(split, toy.ops, toy.bilinear, SsmConfig(order=order, style="graph"))
    nf = compute_expansion(split, toy.ops, toy.bilinear, SsmConfig(order=order, style="normal-form"))
    assert max(np.linalg.norm(nf.k_coeffs[(2, 0)][:2]), np.linalg.norm(g.r_coeffs[(2, 0)])) > 1e-3
    for alpha, rv in nf.r_coeffs.items():
        if sum(alpha) >= 2:
            assert np.all(rv == 0)
    zm = split.left.conj().T @ toy.ops.m
    rhos = np.array([0.04, 0.02, 0.01, 0.005])
    dstate, de = [], []
    for rho in rhos:
        theta = paired_theta(nf, rho, 0.4)
        v_nf = evaluate_K(nf, theta, conjugate=np.conj)
        v_g = evaluate_K(g, zm @ v_nf, conjugate=np.conj)
        dstate.append(np.linalg.norm(v_g - v_nf))
        de.append(abs(np.vdot(v_g, v_g) - np.vdot(v_nf, v_nf)))
    assert np.polyfit(np.log(rhos), np.log(dstate), 1)[0] >= order
    assert np.polyfit(np.log(rhos), np.log(de), 1)[0] >= order


@pytest.mark.parametrize("s", [0.5, 2.0])
def test_scale_invariance(laminar, s):
    model, base, ops, split, tables = laminar
    cfg = SsmConfig(order=3, style="mixed")
    ref = tables["mixed"]
    sc = compute_expansion(split.scaled(s), ops, model.bilinear, cfg)
    p0 = to_polar(ReducedVectorField.from_table(ref))
    p1 = to_polar(ReducedVectorField.from_table(sc))
    expect = p0.scaled(s)
    np.testing.assert_allclose(p1.radial, expect.radial, rtol=1e-6)
    np.testing.assert_allclose(p1.angular, expect.angular, rtol=1e-6)
    r0, r1 = invariant_radii(p0), invariant_radii(p1)
    assert len(r0) == len(r1) >= 1
    for a, b in zip(r0, r1):
        assert b.radius * s == pytest.approx(a.radius, rel=1e-6)
        assert p1.phidot(b.radius) == pytest.approx(p0.phidot(a.radius), rel=1e-6)
        o0 = model.observables(evaluate_K(ref, paired_theta(ref, a.radius, 0.2), ops.conjugate), base)
        o1 = model.observables(evaluate_K(sc, paired_theta(sc, b.radius, 0.2), ops.conjugate), base)
        for key in ("e", "d"):
            assert o1[key] == pytest.approx(o0[key], rel=1e-6)
