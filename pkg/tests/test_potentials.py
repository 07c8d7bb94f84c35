import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hitgap.chain_model import TargetSet, build_birth_death, invariant_measure
from hitgap.corpus import birth_death_20, random_reversible_chain
from hitgap.dirichlet_spectral import dirichlet_eigenvalue, spectral_gap
from hitgap.errors import BlowupError, DomainError, PsiModeError, TruncationError
from hitgap.potentials import (
    bisect_threshold,
    blowup_threshold,
    contour_parameters,
    exp_moment_potential,
    lyapunov_potential,
    moment_potential,
    moment_potentials,
    psi_potential_contour,
    psi_potential_direct,
    survival,
    survival_horizon,
    weak_residual,
    z_potential,
    z_potentials_batch,
)
from hitgap.psi import bump, constant, exponential, smoothstep


# --- closed forms on the 2-state chain (tau from state 1 is exponential with rate 2)


def test_z_potential_two_state(two):
    chain, m, K = two
    p = z_potential(chain, m, K, 1.0)
    np.testing.assert_allclose(p.values, [1.0, 2 / 3], atol=1e-15)
    assert p.residual <= 1e-10
    assert p.extra["weak_residual"] <= 1e-12


def test_z_potential_complex_two_state(two):
    chain, m, K = two
    z = 1 + 1j
    p = z_potential(chain, m, K, z)
    assert p.values[1] == pytest.approx(2 / (2 + z), abs=1e-15)


def test_z_potential_domain(two):
    chain, m, K = two
    for z in (0.0, -1.0, 1j):
        with pytest.raises(DomainError):
            z_potential(chain, m, K, z)


def test_z_potential_small_z_tends_to_one(two):
    chain, m, K = two
    assert np.max(np.abs(z_potential(chain, m, K, 1e-9).values - 1.0)) < 1e-9


def test_z_potential_full_target(two):
    chain, m, _ = two
    full = TargetSet((0, 1), 2)
    for z in (0.3, 2 + 5j):
        np.testing.assert_array_equal(z_potential(chain, m, full, z).values, [1.0, 1.0])


def test_exp_moment_two_state(two):
    chain, m, K = two
    p = exp_moment_potential(chain, m, K, 1.0)
    np.testing.assert_allclose(p.values, [1.0, 2.0], atol=1e-14)
    assert p.extra["weak_residual"] <= 1e-12


def test_exp_moment_blowup_at_threshold(two):
    chain, m, K = two
    with pytest.raises(BlowupError) as info:
        exp_moment_potential(chain, m, K, 2.0)
    assert info.value.alpha_star == pytest.approx(2.0)


def test_exp_moment_small_alpha(two):
    chain, m, K = two
    assert np.max(np.abs(exp_moment_potential(chain, m, K, 1e-10).values - 1.0)) < 1e-9


def test_moment_two_state(two):
    chain, m, K = two
    # E tau e^{-tau} = 2/9 and E tau^2 e^{-tau} = 4/27 for tau ~ Exp(2)
    np.testing.assert_allclose(moment_potential(chain, m, K, 1.0, 1).values, [0.0, -2 / 9], atol=1e-15)
    np.testing.assert_allclose(moment_potential(chain, m, K, 1.0, 2).values, [0.0, 4 / 27], atol=1e-15)
    with pytest.raises(DomainError):
        moment_potential(chain, m, K, 1.0, 0)


def test_moment_zero_on_target(small_corpus):
    for inst in small_corpus[:8]:
        for K in inst.targets:
            for h in moment_potentials(inst.chain, K, 1.3, 4)[1:]:
                assert np.all(h[K.indices] == 0)


def test_moment_finite_difference(small_corpus):
    eps = 1e-5
    for inst in small_corpus[:10]:
        K = inst.targets[0]
        a = 1.0
        fd = (z_potential(inst.chain, None, K, a + eps).values - z_potential(inst.chain, None, K, a).values) / eps
        h1 = moment_potential(inst.chain, None, K, a, 1).values
        h2 = moment_potential(inst.chain, None, K, a, 2).values
        assert np.max(np.abs(fd - h1)) <= eps * np.max(np.abs(h2)) + 1e-9


@pytest.mark.parametrize("z", [1.0, 2.0, 1 + 1j])
def test_analyticity_probe(small_corpus, z):
    eps = 1e-4
    for inst in small_corpus[:10]:
        K = inst.targets[1]
        up = z_potential(inst.chain, None, K, z + 1j * eps).values
        dn = z_potential(inst.chain, None, K, z - 1j * eps).values
        cd = (up - dn) / (2j * eps)
        hs = moment_potentials(inst.chain, K, z, 3)
        h1, h3 = hs[1], hs[3]
        assert np.max(np.abs(cd - h1)) <= eps**2 * np.max(np.abs(h3)) + 1e-10


def test_moment_identity_residual(small_corpus):
    for inst in small_corpus:
        m = invariant_measure(inst.chain)
        for K in inst.targets:
            for order in (1, 3, 5):
                p = moment_potential(inst.chain, m, K, 1 + 1j, order)
                assert p.extra["weak_residual"] <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**32 - 1), st.sampled_from([1.0, 2.0, 1 + 1j, 0.3 + 4j]))
def test_moment_norm_bound(n, seed, z):
    rng = np.random.default_rng(seed)
    chain = random_reversible_chain(n, rng)
    m = invariant_measure(chain)
    K = TargetSet(tuple(rng.choice(n, size=int(rng.integers(1, n)), replace=False)), n)
    hs = moment_potentials(chain, K, z, 5)
    for k, h in enumerate(hs[1:], start=1):
        norm = math.sqrt(float(np.sum(m.pi * np.abs(h) ** 2)))
        assert norm / math.factorial(k) <= z.real ** -k if isinstance(z, complex) else z ** -k


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**32 - 1))
def test_z_potential_bounds_and_monotonicity(n, seed):
    rng = np.random.default_rng(seed)
    chain = random_reversible_chain(n, rng)
    K = TargetSet(tuple(rng.choice(n, size=int(rng.integers(1, n)), replace=False)), n)
    h1 = z_potential(chain, None, K, 0.7).values
    h2 = z_potential(chain, None, K, 1.9).values
    assert np.all(h2 <= h1 + 1e-12) and np.all(h1 <= 1 + 1e-12) and np.all(h2 > 0)
    hc = z_potential(chain, None, K, 0.5 + 9j).values
    assert np.all(np.abs(hc) <= 1 + 1e-12)
    np.testing.assert_array_equal(hc[K.indices], 1.0)


def test_exp_moment_monotone(small_corpus):
    for inst in small_corpus[:10]:
        m = invariant_measure(inst.chain)
        K = inst.targets[0]
        lam = dirichlet_eigenvalue(inst.chain, m, K)
        prev = np.ones(inst.chain.n)
        for f in (0.1, 0.4, 0.7, 0.95):
            h = exp_moment_potential(inst.chain, m, K, f * lam).values
            assert np.all(h >= prev - 1e-12)
            assert np.all(h >= 1 - 1e-12)
            prev = h


def test_weak_identities_over_corpus(small_corpus):
    for inst in small_corpus:
        m = invariant_measure(inst.chain)
        for K in inst.targets:
            lam = dirichlet_eigenvalue(inst.chain, m, K)
            for f in (0.25, 0.5, 0.9):
                p = exp_moment_potential(inst.chain, m, K, f * lam)
                assert p.extra["weak_residual"] <= 1e-9
            for z in (1.0, 2.0, 1 + 1j):
                assert z_potential(inst.chain, m, K, z).extra["weak_residual"] <= 1e-9


def test_batch_matches_single(small_corpus):
    inst = small_corpus[3]
    K = inst.targets[0]
    zs = np.array([0.5, 1 + 2j, 3 - 1j])
    rows = z_potentials_batch(inst.chain, K, zs)
    for z, row in zip(zs, rows):
        np.testing.assert_allclose(row, z_potential(inst.chain, None, K, complex(z)).values, atol=1e-13)


# --- threshold


def test_threshold_two_state(two):
    chain, m, K = two
    rep = blowup_threshold(chain, m, K)
    assert rep.method_eig == pytest.approx(2.0, abs=1e-13)
    assert rep.method_bisect == pytest.approx(2.0, rel=1e-12)
    assert rep.agreement <= 1e-6


def test_threshold_full_target(two):
    chain, m, _ = two
    assert blowup_threshold(chain, m, TargetSet((0, 1), 2)).alpha_star == math.inf


def test_threshold_methods_agree(small_corpus):
    for inst in small_corpus:
        m = invariant_measure(inst.chain)
        for K in inst.targets:
            rep = blowup_threshold(inst.chain, m, K)
            assert rep.agreement <= 1e-6
            exp_moment_potential(inst.chain, m, K, 0.99 * rep.alpha_star)
            with pytest.raises(BlowupError):
                exp_moment_potential(inst.chain, m, K, 1.01 * rep.alpha_star)


def test_bisection_without_eigensolver():
    chain = build_birth_death(4, [1.0, 2.0, 3.0], [2.0, 2.0, 2.0])
    K = TargetSet((0,), 4)
    Qcc = chain.Q[1:, 1:]
    lam = -np.max(np.linalg.eigvals(Qcc).real)
    assert bisect_threshold(chain, K) == pytest.approx(lam, rel=1e-10)


# --- Lyapunov


def test_lyapunov_two_state(two):
    chain, m, K = two
    p = lyapunov_potential(chain, m, K, 1.0)
    np.testing.assert_allclose(p.values, [1.0, 2.0], atol=1e-14)
    assert (chain.Q @ p.values)[1] == pytest.approx(-2.0)
    assert p.extra["drift_residual"] <= 1e-12
    assert p.extra["drift_constant"] == pytest.approx(2.0, abs=1e-13)


def test_lyapunov_small_alpha(two):
    chain, m, K = two
    p = lyapunov_potential(chain, m, K, 1e-10)
    assert abs(p.extra["drift_constant"]) < 1e-8


def test_lyapunov_ou(ou2000):
    chain, m, K = ou2000
    gap = spectral_gap(chain, m).gap
    p = lyapunov_potential(chain, m, K, 0.5 * m.mass(K) * gap)
    assert np.all(np.isfinite(p.values))
    assert p.extra["drift_residual"] <= 1e-9


# --- psi potentials


def test_survival_two_state(two):
    chain, _, K = two
    np.testing.assert_allclose(survival(chain, K, 0.7), [0.0, math.exp(-1.4)], rtol=1e-13)
    T = survival_horizon(chain, K)
    assert survival(chain, K, T)[1] <= 1e-12


def test_direct_constant(two):
    chain, _, K = two
    np.testing.assert_array_equal(psi_potential_direct(chain, K, constant(2.5)).values, [2.5, 2.5])


def test_direct_exponential_two_state(two):
    chain, _, K = two
    np.testing.assert_allclose(psi_potential_direct(chain, K, exponential(1.0)).values, [1.0, 2 / 3], atol=1e-10)


def test_direct_exponential_matches_z_potential():
    chain = birth_death_20()
    K = TargetSet((0,), 20)
    for rate in (0.3, 1.0, 2.5):
        d = psi_potential_direct(chain, K, exponential(rate)).values
        assert np.max(np.abs(d - z_potential(chain, None, K, rate).values)) <= 1e-8


def test_direct_bump_closed_form(two):
    # tau ~ Exp(2): h(1) = int 2 e^{-2t} psi(t) dt
    from scipy.integrate import quad

    chain, _, K = two
    b = bump()
    ref = quad(lambda t: 2 * math.exp(-2 * t) * b(np.array([t]))[0], 1, 2, epsabs=1e-14, points=[1.5])[0]
    h = psi_potential_direct(chain, K, b).values
    assert h[1] == pytest.approx(ref, abs=1e-12)
    assert h[0] == 0.0


def test_direct_bump_range(small_corpus):
    b = bump(height=0.8)
    for inst in small_corpus[:6]:
        h = psi_potential_direct(inst.chain, inst.targets[0], b).values
        assert np.all(h >= -1e-12) and np.all(h <= 0.8 + 1e-12)


def test_direct_short_horizon_raises(two):
    chain, _, K = two
    with pytest.raises(TruncationError) as info:
        psi_potential_direct(chain, K, exponential(1.0), horizon=1.0)
    assert info.value.suggested > 1.0


def test_contour_two_state_and_sigma_independence(two):
    chain, m, K = two
    b = bump()
    direct = psi_potential_direct(chain, K, b).values
    vals = []
    for sigma in (0.5, 1.0, 2.0):
        p = psi_potential_contour(chain, m, K, b, sigma=sigma)
        assert np.max(np.abs(p.values - direct)) <= 1e-6
        assert p.extra["imag_residue"] <= 1e-8
        assert p.extra["truncation_bound"] <= 0.5e-6
        vals.append(p.values)
    assert max(np.max(np.abs(a - c)) for a in vals for c in vals) <= 1e-6


def test_contour_birth_death_20():
    chain = birth_death_20()
    m = invariant_measure(chain)
    K = TargetSet((0,), 20)
    b = bump()
    direct = psi_potential_direct(chain, K, b).values
    p = psi_potential_contour(chain, m, K, b, sigma=1.0)
    assert np.max(np.abs(p.values - direct)) <= 1e-6


def test_contour_zero_psi(two):
    chain, m, K = two
    p = psi_potential_contour(chain, m, K, constant(0.0))
    np.testing.assert_array_equal(p.values, [0.0, 0.0])


def test_contour_mode_error(two):
    chain, m, K = two
    with pytest.raises(PsiModeError):
        psi_potential_contour(chain, m, K, smoothstep())
    with pytest.raises(PsiModeError):
        psi_potential_contour(chain, m, K, bump(order=1))


def test_contour_truncation_error_suggests_T(two):
    chain, m, K = two
    with pytest.raises(TruncationError) as info:
        psi_potential_contour(chain, m, K, bump(), T_im=20.0)
    assert info.value.suggested > 20.0


def test_contour_parameters_bounds():
    prm = contour_parameters(bump(), 1.0, 1e-6)
    assert prm["alias_bound"] <= 0.25e-6
    assert prm["truncation_bound"] <= 0.5e-6
    assert 2 * math.pi / prm["step"] > 2.0


def test_weak_residual_detects_wrong_potential(two):
    chain, m, K = two
    h = np.array([1.0, 0.5])
    assert weak_residual(chain, m, K, h, -1.0) > 0.01
