import json

import numpy as np
import pytest

from hitgap.chain_model import (
    DiffusionSpec1D,
    FiniteChain,
    TargetSet,
    birth_death_weights,
    build_birth_death,
    communicating_classes,
    detailed_balance_residual,
    discretize_diffusion_1d,
    double_well_spec,
    ellipticity_constant,
    invariant_measure,
    ou_spec,
    require_valid,
    validate,
)
from hitgap.dirichlet_spectral import spectral_gap
from hitgap.errors import (
    ChainValidationError,
    ConfigError,
    DomainError,
    EllipticityError,
    IrreducibilityError,
)


def test_birth_death_two_state_generator():
    chain = build_birth_death(2, [1.0], [2.0])
    np.testing.assert_array_equal(chain.Q, [[-1.0, 1.0], [2.0, -2.0]])


def test_birth_death_symmetric_three_state():
    chain = build_birth_death(3, [1.0, 1.0], [1.0, 1.0])
    np.testing.assert_array_equal(chain.Q, chain.Q.T)
    assert chain.is_tridiagonal()
    assert np.all(chain.Q.sum(axis=1) == 0)


def test_birth_death_two_state_measure():
    m = invariant_measure(build_birth_death(2, [1.0], [2.0]))
    np.testing.assert_allclose(m.pi, [2 / 3, 1 / 3], atol=1e-15)
    assert m.reversible


def test_birth_death_bad_rate_names_index():
    with pytest.raises(ChainValidationError, match=r"down_rates\[1\]"):
        build_birth_death(3, [1.0, 1.0], [1.0, 0.0])


def test_birth_death_product_formula(rng):
    up = rng.uniform(0.2, 3.0, 14)
    down = rng.uniform(0.2, 3.0, 14)
    chain = build_birth_death(15, up, down)
    m = invariant_measure(chain)
    np.testing.assert_allclose(m.pi, birth_death_weights(up, down), rtol=1e-12)
    assert detailed_balance_residual(chain, m.pi) <= 1e-12


def test_chain_is_read_only():
    chain = build_birth_death(2, [1.0], [2.0])
    with pytest.raises(ValueError):
        chain.Q[0, 0] = 5.0


def test_validate_well_formed_is_empty():
    assert validate(build_birth_death(4, [1, 2, 3], [3, 2, 1])) == []


def test_validate_row_sum_names_row():
    Q = np.array([[-1.0, 1.0, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -1.0]])
    Q[1, 0] += 1e-6
    report = validate(FiniteChain(Q))
    assert any("row 1" in p for p in report)
    assert len(report) == 1


def test_validate_negative_offdiag_names_entry():
    Q = np.array([[0.5, -0.5, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -1.0]])
    report = validate(FiniteChain(Q))
    assert any("Q[0,1]" in p for p in report)


def test_validate_reports_reducibility():
    Q = np.array([[-1.0, 1.0, 0.0], [1.0, -1.0, 0.0], [0.0, 1.0, -1.0]])
    assert any("reducible" in p for p in validate(FiniteChain(Q)))
    with pytest.raises(ChainValidationError):
        require_valid(FiniteChain(Q))


def test_irreducibility_error_has_partition():
    Q = np.array([[-1.0, 1.0, 0.0], [1.0, -1.0, 0.0], [0.0, 1.0, -1.0]])
    with pytest.raises(IrreducibilityError) as info:
        invariant_measure(FiniteChain(Q))
    blocks = sorted(sorted(b) for b in info.value.partition)
    assert blocks == [[0, 1], [2]]
    assert len(communicating_classes(FiniteChain(Q))) == 2


def test_symmetric_chain_uniform_measure(rng):
    A = rng.uniform(0.1, 1.0, (6, 6))
    A = A + A.T
    np.fill_diagonal(A, 0)
    np.fill_diagonal(A, -A.sum(axis=1))
    m = invariant_measure(FiniteChain(A))
    np.testing.assert_allclose(m.pi, np.full(6, 1 / 6), atol=1e-14)


def test_three_cycle_not_reversible():
    # clockwise rate 2, counter-clockwise 1: pi uniform, flux 2/3 vs 1/3 on each edge
    Q = np.array([[-3.0, 2.0, 1.0], [1.0, -3.0, 2.0], [2.0, 1.0, -3.0]])
    m = invariant_measure(FiniteChain(Q))
    np.testing.assert_allclose(m.pi, np.full(3, 1 / 3), atol=1e-14)
    assert not m.reversible
    assert m.residual <= 1e-10
    flux = m.pi[:, None] * Q
    assert abs(flux[0, 1] - flux[1, 0]) > 0.1


def test_measure_residual_and_normalisation(small_corpus):
    for inst in small_corpus:
        m = invariant_measure(inst.chain)
        assert m.residual <= 1e-10
        assert abs(m.pi.sum() - 1.0) <= 1e-12
        assert m.reversible


def test_chain_json_roundtrip(tmp_path):
    chain = FiniteChain([[-1.0, 1.0], [2.0, -2.0]], labels=[0.0, 1.0])
    path = tmp_path / "c.json"
    chain.save(path)
    back = FiniteChain.load(path)
    np.testing.assert_array_equal(back.Q, chain.Q)
    np.testing.assert_array_equal(back.labels, chain.labels)


def test_chain_sparse_triplets():
    d = {"n": 2, "triplets": [[0, 1, 1.0], [1, 0, 2.0]]}
    np.testing.assert_array_equal(FiniteChain.from_dict(d).Q, [[-1.0, 1.0], [2.0, -2.0]])


def test_chain_json_unknown_key():
    with pytest.raises(ConfigError):
        FiniteChain.from_dict({"n": 2, "Q": [[-1, 1], [1, -1]], "lables": [0, 1]})


def test_target_set_basics():
    K = TargetSet((2, 0), 4)
    assert K.members == (0, 2)
    np.testing.assert_array_equal(K.complement, [1, 3])
    assert not K.is_full
    assert TargetSet((0, 1, 2, 3), 4).is_full
    with pytest.raises(DomainError):
        TargetSet((), 4)
    with pytest.raises(DomainError):
        TargetSet((4,), 4)


def test_interval_target_needs_labels():
    with pytest.raises(DomainError, match="coordinate targets require labels"):
        TargetSet.from_interval(build_birth_death(3, [1, 1], [1, 1]), 0.0, 1.0)


def test_zero_drift_three_points():
    spec = DiffusionSpec1D.from_dict({"drift": "0", "diffusion": "2", "domain": [0, 1]})
    chain = discretize_diffusion_1d(spec, 3)
    np.testing.assert_allclose(chain.Q, chain.Q.T, rtol=1e-14)
    assert chain.is_tridiagonal()
    np.testing.assert_allclose(invariant_measure(chain).pi, np.full(3, 1 / 3), atol=1e-14)
    # reflecting ends: the boundary cells only jump inward
    assert chain.Q[0, 1] > 0 and chain.Q[2, 1] > 0


def test_zero_drift_rate_is_b_over_2h2():
    spec = DiffusionSpec1D.from_dict({"drift": "0", "diffusion": "2", "domain": [0, 1]})
    chain = discretize_diffusion_1d(spec, 10)
    np.testing.assert_allclose(chain.Q[3, 4], 2 / (2 * 0.1**2), rtol=1e-12)


def test_ellipticity_violation():
    spec = DiffusionSpec1D.from_dict({"drift": "0", "diffusion": "x", "domain": [-1, 1]})
    with pytest.raises(EllipticityError):
        discretize_diffusion_1d(spec, 20)
    ok = DiffusionSpec1D.from_dict({"drift": "0", "diffusion": "1 + x^2", "domain": [-1, 1]})
    assert ellipticity_constant(ok, 20) == pytest.approx(1.0 + 0.05**2)


def test_discretized_chain_reversible():
    for spec, n in ((ou_spec(), 2000), (double_well_spec(), 800)):
        chain = discretize_diffusion_1d(spec, n)
        m = invariant_measure(chain)
        assert m.reversible
        assert m.balance_residual <= 1e-10
        assert validate(chain) == []


def test_ou_density_is_gaussian():
    chain = discretize_diffusion_1d(ou_spec(), 2000)
    m = invariant_measure(chain)
    h = 16 / 2000
    x = chain.labels
    gauss = np.exp(-x**2 / 2) / np.sqrt(2 * np.pi) * h
    assert np.max(np.abs(m.pi - gauss)) < 1e-5


def test_ou_gap_refinement_monotone():
    errs = []
    for n in (250, 500, 1000, 2000):
        chain = discretize_diffusion_1d(ou_spec(), n)
        errs.append(abs(spectral_gap(chain, invariant_measure(chain)).gap - 1.0))
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-3


def test_double_well_gap_below_ou():
    dw = discretize_diffusion_1d(double_well_spec(), 800)
    gap_dw = spectral_gap(dw, invariant_measure(dw)).gap
    assert 0 < gap_dw < 0.99


def test_diffusion_spec_roundtrip():
    spec = DiffusionSpec1D.from_dict({"drift": "-4*x^3 + 4*x", "diffusion": "2", "domain": [-3, 3], "grid": 800})
    d = spec.to_dict()
    assert json.loads(json.dumps(d)) == d
    again = DiffusionSpec1D.from_dict(d)
    x = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(again.drift(x), -4 * x**3 + 4 * x)


def test_diffusion_spec_rejects_unknown_key_and_bad_expression():
    with pytest.raises(ConfigError):
        DiffusionSpec1D.from_dict({"drift": "-x", "diffusion": "2", "domain": [-1, 1], "boundary": "open"})
    with pytest.raises(ConfigError):
        DiffusionSpec1D.from_dict({"drift": "__import__('os')", "diffusion": "2", "domain": [-1, 1]})
