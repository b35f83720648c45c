import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bracketflow import fixtures, liealg
from bracketflow.liealg import BracketError, LieBracket

from oracles import is_derivation, koszul_ricci, pi_direct

NAMES = ["n4", "anna", "aff", "abelian", "aff_pair", "h3xR", "product83", "nil6", "h3h3", "sl2c"]


def test_antisymmetry_enforced():
    c = np.zeros((2, 2, 2))
    c[0, 1, 1] = 1.0
    with pytest.raises(BracketError):
        LieBracket(c)


def test_from_entries_and_eval():
    mu = fixtures.n4_bracket(1.5, 0.5)
    e = np.eye(4)
    assert np.allclose(liealg.bracket_eval(mu, e[0], e[1]), 1.5 * e[2])
    assert np.allclose(liealg.bracket_eval(mu, e[1], e[0]), -1.5 * e[2])
    assert np.allclose(liealg.bracket_eval(fixtures.anna_bracket(0.7, 1.0), e[0], e[1]), -0.7 * e[1])
    assert not liealg.bracket_eval(LieBracket.zero(4), e[0], e[1]).any()
    with pytest.raises(ValueError):
        liealg.bracket_eval(mu, e[0][:3], e[1])


@pytest.mark.parametrize("name", NAMES)
def test_fixtures_are_lie(name):
    assert fixtures.get(name).mu.is_lie()


def test_jacobi_failure_detected():
    mu = LieBracket.from_entries(4, [(1, 2, 3, 1.0), (1, 3, 1, 1.0)])
    assert not mu.is_lie()


def test_gl_action_trivial_cases(rng):
    mu = fixtures.anna().mu
    assert np.allclose(liealg.gl_action(np.eye(4), mu).coeffs, mu.coeffs)
    # h.mu = h mu(h^-1 ., h^-1 .) so scalar matrices act by the reciprocal
    assert np.allclose(liealg.gl_action(3.0 * np.eye(4), mu).coeffs, mu.coeffs / 3.0)
    with pytest.raises(ValueError):
        liealg.gl_action(np.diag([1.0, 1.0, 1.0, 0.0]), mu)


def test_gl_action_is_left_action_and_preserves_jacobi(rng):
    mu = fixtures.anna(1.0, 0.3).mu
    for _ in range(5):
        h1, h2 = liealg.random_gl(rng, 4), liealg.random_gl(rng, 4)
        lhs = liealg.gl_action(h1, liealg.gl_action(h2, mu))
        rhs = liealg.gl_action(h1 @ h2, mu)
        assert np.linalg.norm(lhs.coeffs - rhs.coeffs) <= 1e-12 * rhs.norm()
        assert rhs.is_lie()


def test_delta_identities(rng):
    mu = fixtures.anna(0.8, 1.1).mu
    assert np.allclose(liealg.delta(mu, np.eye(4)), mu.coeffs)
    assert not liealg.delta(LieBracket.zero(4), rng.normal(size=(4, 4))).any()
    for _ in range(5):
        A = rng.normal(size=(4, 4))
        d = liealg.delta(mu, A)
        assert np.allclose(d, -liealg.pi_rep(A, mu), atol=1e-14)
        assert np.allclose(liealg.pi_rep(A, mu), pi_direct(A, mu.coeffs), atol=1e-13)
    assert np.allclose(liealg.pi_rep(np.eye(4), mu), -mu.coeffs)


def test_delta_matrix_matches_delta(rng):
    mu = fixtures.n4(1.0, 2.0).mu
    A = rng.normal(size=(4, 4))
    assert np.allclose(liealg.delta_matrix(mu) @ A.reshape(-1), liealg.delta(mu, A).reshape(-1))


def test_delta_adjoint(rng):
    mu = fixtures.anna(1.0, 0.4).mu
    A = rng.normal(size=(4, 4))
    lam = rng.normal(size=(4, 4, 4))
    lam = lam - lam.transpose(1, 0, 2)
    lhs = liealg.bracket_inner(liealg.delta(mu, A), lam)
    rhs = float(np.sum(A * liealg.delta_adjoint(mu, lam)))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_derivation_dimensions():
    assert len(liealg.derivation_basis(LieBracket.zero(2))) == 4
    assert len(liealg.derivation_basis(fixtures.n4(1.0, 2.0).mu)) == 7
    basis = liealg.derivation_basis(fixtures.aff().mu)
    assert len(basis) == 2
    # D e1 = s e2, D e2 = t e2: only the second column entries in row 2
    for D in basis:
        assert abs(D[0, 0]) < 1e-12 and abs(D[0, 1]) < 1e-12


@pytest.mark.parametrize("name", ["n4", "anna", "aff_pair", "nil6", "sl2c"])
def test_derivations_form_subalgebra(name):
    mu = fixtures.get(name).mu
    basis = np.array(liealg.derivation_basis(mu))
    for D in basis:
        assert is_derivation(D, mu.coeffs)
        assert np.linalg.norm(liealg.pi_rep(D, mu)) <= 10 * liealg.DERIVATION_TOL * mu.norm() * np.linalg.norm(D)
    gram = np.einsum("kab,lab->kl", basis, basis)
    assert np.allclose(gram, np.eye(len(basis)), atol=1e-12)
    for i in range(len(basis)):
        for j in range(i + 1, len(basis)):
            C = basis[i] @ basis[j] - basis[j] @ basis[i]
            resid = C - np.einsum("kab,ab,kcd->cd", basis, C, basis)
            assert np.linalg.norm(resid) < 1e-9


def test_n4_derivation_shape():
    """Derivations of n4 are lower triangular with diagonal (alpha, beta, alpha+beta, 2 alpha+beta)."""
    a, b = 1.0, 2.0
    for D in liealg.derivation_basis(fixtures.n4(a, b).mu):
        assert np.allclose(np.triu(D, 1), 0, atol=1e-12)
        al, be = D[0, 0], D[1, 1]
        assert D[2, 2] == pytest.approx(al + be, abs=1e-12)
        assert D[3, 3] == pytest.approx(2 * al + be, abs=1e-12)
        assert D[3, 2] == pytest.approx(b * D[2, 1] / a, abs=1e-12)


def test_killing_and_mean():
    B, H = liealg.killing_and_mean(fixtures.aff().mu)
    assert np.allclose(B, np.diag([1.0, 0.0]))
    assert np.allclose(H, [1.0, 0.0])
    for name in ("n4", "nil6", "h3h3", "h3xR"):
        B, H = liealg.killing_and_mean(fixtures.get(name).mu)
        assert not np.abs(B).max() > 1e-14 and not np.abs(H).max() > 1e-14
    B, H = liealg.killing_and_mean(LieBracket.zero(4))
    assert not B.any() and not H.any()


def test_moment_map_values(rng):
    assert np.allclose(liealg.moment_map(fixtures.aff().mu), np.diag([-0.5, 0.0]))
    assert not liealg.moment_map(LieBracket.zero(4)).any()
    a, b = 1.3, 0.4
    mu = fixtures.n4(a, b).mu
    assert np.trace(liealg.moment_map(mu)) == pytest.approx(-0.25 * 2 * (a * a + b * b), rel=1e-14)


@pytest.mark.parametrize("name", NAMES)
def test_moment_map_defining_identity(name):
    mu = fixtures.get(name).mu
    M = liealg.moment_map(mu)
    d = mu.dim
    assert np.allclose(M, M.T)
    for i in range(d):
        for j in range(d):
            E = np.zeros((d, d))
            E[i, j] = 1.0
            assert M[i, j] == pytest.approx(-0.25 * liealg.bracket_inner(liealg.delta(mu, E), mu), abs=1e-13)
    assert np.trace(M) == pytest.approx(-0.25 * mu.norm() ** 2, abs=1e-13)


def test_ricci_values():
    Ric = liealg.ricci_operator(fixtures.aff().mu)
    assert np.allclose(Ric, -np.eye(2))
    assert liealg.scalar_curvature(fixtures.aff().mu) == pytest.approx(-2.0)
    assert not liealg.ricci_operator(LieBracket.zero(4)).any()


@pytest.mark.parametrize("name", NAMES)
def test_ricci_matches_koszul(name):
    mu = fixtures.get(name).mu
    Ric = liealg.ricci_operator(mu)
    ref = koszul_ricci(mu.coeffs)
    assert np.linalg.norm(Ric - ref) <= 1e-10 * max(1.0, np.linalg.norm(ref))
    B, H = liealg.killing_and_mean(mu)
    R = -0.25 * mu.norm() ** 2 - 0.5 * np.trace(B) - H @ H
    assert liealg.scalar_curvature(mu) == pytest.approx(R, abs=1e-12)
    assert np.trace(Ric) == pytest.approx(R, abs=1e-12)


def test_ricci_with_nonorthonormal_metric(rng):
    """Curvature of (mu, g0) equals that of h.mu with the identity metric, mapped back."""
    mu = fixtures.anna(1.0, 0.5).mu
    X = rng.normal(size=(4, 4))
    g0 = X @ X.T + 4 * np.eye(4)
    h = liealg.orthonormal_frame(g0)
    Ric = liealg.ricci_operator(mu, g0)
    ref = np.linalg.solve(h, koszul_ricci(liealg.gl_action(h, mu).coeffs) @ h)
    assert np.allclose(Ric, ref, atol=1e-12)
    # symmetric with respect to g0
    assert np.allclose(g0 @ Ric, (g0 @ Ric).T, atol=1e-12)


def test_bracket_norm_ordered_pairs():
    a, b = 0.3, 1.7
    assert fixtures.n4(a, b).mu.norm() ** 2 == pytest.approx(2 * (a * a + b * b))
    mu = fixtures.n4(2.0, 2.0).mu
    assert np.allclose((mu * (1 / mu.norm())).coeffs, fixtures.n4_bracket(0.5, 0.5).coeffs)
    assert fixtures.anna(1.0, 2.0).mu.norm() ** 2 == pytest.approx(20.0)
    assert LieBracket.zero(4).norm() == 0.0


def test_center():
    Z = liealg.center(fixtures.n4().mu)
    assert Z.shape[1] == 1 and abs(abs(Z[3, 0]) - 1) < 1e-12
    assert liealg.center(fixtures.aff().mu).shape[1] == 0


coef = st.floats(-2, 2, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(a=coef, b=coef, s=st.floats(0.1, 3.0))
def test_scaling_properties(a, b, s):
    mu = fixtures.anna(a, b).mu
    nu = liealg.gl_action(np.eye(4) / s, mu)
    assert np.allclose(nu.coeffs, s * mu.coeffs)
    assert np.allclose(liealg.ricci_operator(nu), s * s * liealg.ricci_operator(mu), atol=1e-12)
    assert np.allclose(liealg.moment_map(nu), s * s * liealg.moment_map(mu), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), name=st.sampled_from(["n4", "anna", "aff_pair", "nil6"]))
def test_gl_images_stay_lie(seed, name):
    rng = np.random.default_rng(seed)
    mu = fixtures.get(name).mu
    nu = liealg.gl_action(liealg.random_gl(rng, mu.dim), mu)
    assert nu.is_lie()
    assert len(liealg.derivation_basis(nu)) == len(liealg.derivation_basis(mu))
