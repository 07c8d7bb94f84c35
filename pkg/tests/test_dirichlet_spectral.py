import numpy as np
import pytest
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from hypothesis import given, settings
from hypothesis import strategies as st

from hitgap.chain_model import FiniteChain, TargetSet, build_birth_death, invariant_measure
from hitgap.corpus import random_reversible_chain
from hitgap.dirichlet_spectral import (
    DENSE_MAX,
    DirichletForm,
    dirichlet_eigenpair,
    dirichlet_eigenvalue,
    dirichlet_energy,
    dirichlet_energy_edges,
    poincare_violation,
    random_test_functions,
    spectral_gap,
    variance,
)
from hitgap.errors import DomainError, IrreducibilityError, NotReversibleError


def test_energy_two_state(two):
    chain, m, _ = two
    form = DirichletForm(chain, m)
    f = np.array([0.0, 1.0])
    assert form(f) == pytest.approx(2 / 3, abs=1e-15)
    assert dirichlet_energy_edges(form, f, f) == pytest.approx(2 / 3, abs=1e-15)


def test_energy_of_constant_is_zero(two):
    chain, m, _ = two
    assert DirichletForm(chain, m)(np.full(2, 3.7)) == pytest.approx(0.0, abs=1e-14)


def test_energy_formulas_agree(small_corpus, rng):
    for inst in small_corpus:
        m = invariant_measure(inst.chain)
        form = DirichletForm(inst.chain, m)
        f, g = rng.standard_normal((2, inst.chain.n))
        e1 = dirichlet_energy(form, f, g)
        scale = max(1.0, np.max(np.abs(inst.chain.Q)))
        assert abs(e1 - dirichlet_energy_edges(form, f, g)) <= 1e-10 * scale
        assert abs(e1 - dirichlet_energy(form, g, f)) <= 1e-10 * scale


def test_energy_length_mismatch(two):
    chain, m, _ = two
    with pytest.raises(ValueError):
        DirichletForm(chain, m)(np.ones(3))


def test_variance_examples(two, rng):
    _, m, _ = two
    assert variance(m, [0.0, 1.0]) == pytest.approx(2 / 9, abs=1e-15)
    assert variance(m, [5.0, 5.0]) == 0.0
    f = rng.standard_normal(2)
    assert abs(variance(m, f + 12.5) - variance(m, f)) <= 1e-12


def test_gap_two_state(two):
    chain, m, _ = two
    rep = spectral_gap(chain, m)
    assert rep.gap == pytest.approx(3.0, abs=1e-13)
    assert rep.poincare_c == pytest.approx(1 / 3, abs=1e-14)
    assert rep.method == "dense"


@pytest.mark.parametrize("n", [2, 3, 7, 20])
def test_gap_complete_graph(n):
    Q = np.ones((n, n))
    np.fill_diagonal(Q, -(n - 1))
    chain = FiniteChain(Q)
    assert spectral_gap(chain, invariant_measure(chain)).gap == pytest.approx(n, rel=1e-12)


def test_gap_matches_generalized_eigenproblem(small_corpus):
    for inst in small_corpus:
        chain = inst.chain
        m = invariant_measure(chain)
        A = -(m.pi[:, None] * chain.Q)
        A = 0.5 * (A + A.T)
        w = scipy.linalg.eigh(A, np.diag(m.pi), eigvals_only=True)
        rep = spectral_gap(chain, m)
        assert abs(rep.gap - w[1]) <= 1e-9 * max(1.0, w[1])


def test_rayleigh_and_poincare(small_corpus):
    rng = np.random.default_rng(3)
    for inst in small_corpus:
        m = invariant_measure(inst.chain)
        form = DirichletForm(inst.chain, m)
        rep = spectral_gap(inst.chain, m)
        v = rep.eigenvector
        assert abs(form(v) / variance(m, v) - rep.gap) <= 1e-8 * rep.gap
        assert abs(np.sum(m.pi * v)) <= 1e-10
        fs = random_test_functions(m, 1000, rng)
        assert poincare_violation(form, rep, fs) <= 1e-8


def test_iterative_path_matches_dense():
    n = DENSE_MAX + 88
    up = 1.0 + 0.5 * np.sin(np.arange(n - 1))
    down = 1.2 + 0.3 * np.cos(np.arange(n - 1))
    chain = build_birth_death(n, up, down)
    m = invariant_measure(chain)
    rep = spectral_gap(chain, m)
    assert rep.method == "iterative"
    s = np.sqrt(m.pi)
    M = -(s[:, None] * chain.Q / s[None, :])
    w = scipy.linalg.eigh(0.5 * (M + M.T), eigvals_only=True, subset_by_index=[0, 1])
    assert rep.gap == pytest.approx(w[1], rel=1e-9)
    assert rep.residual <= 1e-8


def test_non_reversible_rejected():
    Q = np.array([[-3.0, 2.0, 1.0], [1.0, -3.0, 2.0], [2.0, 1.0, -3.0]])
    chain = FiniteChain(Q)
    with pytest.raises(NotReversibleError):
        spectral_gap(chain, invariant_measure(chain))


def test_reducible_rejected():
    Q = np.array([[-1.0, 1.0, 0.0], [1.0, -1.0, 0.0], [0.0, 0.0, 0.0]])
    chain = FiniteChain(Q)
    from hitgap.chain_model import InvariantMeasure
    m = InvariantMeasure(np.array([0.25, 0.25, 0.5]), True, 0.0, 0.0)
    with pytest.raises(IrreducibilityError):
        spectral_gap(chain, m)


def test_dirichlet_eigenvalue_two_state(two):
    chain, m, K = two
    assert dirichlet_eigenvalue(chain, m, K) == pytest.approx(2.0, abs=1e-14)


def test_dirichlet_eigenvalue_single_free_state(rng):
    chain = random_reversible_chain(6, rng)
    m = invariant_measure(chain)
    K = TargetSet((0, 1, 2, 3, 5), 6)
    assert dirichlet_eigenvalue(chain, m, K) == pytest.approx(-chain.Q[4, 4], rel=1e-13)


def test_dirichlet_eigenvalue_full_target_is_domain_error(two):
    chain, m, _ = two
    with pytest.raises(DomainError):
        dirichlet_eigenvalue(chain, m, TargetSet((0, 1), 2))


def test_perron_eigenfunction_positive(small_corpus):
    for inst in small_corpus:
        m = invariant_measure(inst.chain)
        for K in inst.targets:
            lam, phi = dirichlet_eigenpair(inst.chain, m, K)
            assert lam > 0
            assert np.all(phi >= -1e-12)
            idx = K.complement
            sub = inst.chain.offdiag()[np.ix_(idx, idx)] > 0
            ncomp, _ = connected_components(csr_matrix(sub), directed=False)
            if ncomp == 1:
                # Perron: strictly positive when the killed graph is connected
                assert np.all(phi[idx] > 0)
            assert np.all(phi[K.indices] == 0)


def test_domain_monotonicity(small_corpus):
    for inst in small_corpus:
        m = invariant_measure(inst.chain)
        n = inst.chain.n
        for K in inst.targets:
            if len(K) + 1 >= n:
                continue
            extra = int(K.complement[0])
            bigger = TargetSet(K.members + (extra,), n)
            assert dirichlet_eigenvalue(inst.chain, m, K) <= dirichlet_eigenvalue(inst.chain, m, bigger) + 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 25), st.integers(0, 2**32 - 1))
def test_form_nonnegative_and_kernel_is_constants(n, seed):
    rng = np.random.default_rng(seed)
    chain = random_reversible_chain(n, rng)
    m = invariant_measure(chain)
    form = DirichletForm(chain, m)
    f = rng.standard_normal(n)
    scale = max(1.0, np.max(np.abs(chain.Q)))
    assert form(f) >= -1e-12 * scale
    assert abs(form(np.ones(n))) <= 1e-10 * scale
    rep = spectral_gap(chain, m)
    # energy of a nonconstant f is bounded below via the gap
    assert form(f) >= rep.gap * variance(m, f) * (1 - 1e-8) - 1e-12
