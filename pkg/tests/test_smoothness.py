import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from blockfb.core import ValidationError
from blockfb.problems import FactoredQuadratic, make_lasso
from blockfb.sampling import SamplingScheme, beta_by_enumeration, make_rng, tau_nice_betas
from blockfb.smoothness import (
    Condition,
    SeparabilityStructure,
    SmoothnessCertificate,
    global_lipschitz_bounds,
    nu_s1,
    nu_s1_refined,
    nu_s2,
    nu_s3,
    verify_eso_s1,
    verify_eso_s2,
)


def random_lasso(seed, p=8, m=6, density=0.4):
    rng = np.random.default_rng(seed)
    A = sp.random(p, m, density=density, random_state=rng, format="csc")
    A = A + sp.csc_matrix((np.ones(m), (rng.integers(0, p, m), np.arange(m))), shape=(p, m))
    return make_lasso(A, rng.standard_normal(p), 0.1)


def test_condition_strength_order():
    assert Condition.S1.strength < Condition.S2.strength < Condition.S3.strength
    cert = SmoothnessCertificate(np.ones(2), Condition.S2)
    assert cert.certifies(Condition.S1) and cert.certifies("S2") and not cert.certifies(Condition.S3)


def test_structure_validation():
    with pytest.raises(ValidationError):
        SeparabilityStructure([[0, 5]], np.ones(3))
    with pytest.raises(ValidationError):
        SeparabilityStructure([[]], np.ones(3))
    with pytest.raises(ValidationError):
        SeparabilityStructure([[0]], [-1.0])


def test_structure_eta_and_coverage():
    st_ = SeparabilityStructure([[0, 1, 2], [2, 3]], np.ones(5))
    assert st_.eta == 3 and st_.p == 2
    np.testing.assert_array_equal(st_.covered, [True, True, True, True, False])


def test_structure_json_roundtrip():
    prob = random_lasso(0)
    again = SeparabilityStructure.from_json(prob.structure.to_json())
    assert again.digest() == prob.structure.digest()
    np.testing.assert_array_equal(again.block_lipschitz, prob.structure.block_lipschitz)


def test_s1_tau_nice_example():
    st_ = SeparabilityStructure([[0, 1, 2], [2, 3, 4]], np.full(5, 2.0))
    cert = nu_s1(st_, tau_nice_betas(5, 3, 2))
    np.testing.assert_allclose(cert.nu, 3.0)
    assert cert.condition is Condition.S1


def test_stepsizes_cap_and_validation():
    cert = SmoothnessCertificate(np.array([2.0, 0.0]), Condition.S1)
    np.testing.assert_allclose(cert.stepsizes(1.0), [0.5, 1e6])
    np.testing.assert_allclose(cert.stepsizes(1.0, gamma_max=10.0), [0.5, 10.0])
    for bad in (0.0, 2.0, -1.0):
        with pytest.raises(ValidationError):
            cert.stepsizes(bad)
    with pytest.raises(ValidationError):
        SmoothnessCertificate(np.array([-1.0]), Condition.S1)


@pytest.mark.parametrize("seed", range(5))
def test_s1_not_above_s2_for_tau_nice(seed):
    prob = random_lasso(seed)
    for tau in range(1, 7):
        scheme = SamplingScheme.tau_nice(6, tau)
        betas = tau_nice_betas(6, prob.structure.eta, tau)
        s1 = nu_s1(prob.structure, betas).nu
        s2_cert = nu_s2(prob.structure, scheme)
        # same block-wise formula family
        assert np.all(s1 <= s2_cert.provenance["beta2"] * prob.structure.block_lipschitz + 1e-12)
        # best available expectation-level parameters never exceed the almost-sure ones
        best_s1 = np.minimum(s1, nu_s1_refined(prob.structure, 6, tau).nu)
        assert np.all(best_s1 <= s2_cert.nu + 1e-12)


def test_serial_s1_equals_s2():
    prob = random_lasso(3)
    scheme = SamplingScheme.serial(6)
    s1 = nu_s1(prob.structure, beta_by_enumeration(scheme, prob.structure)).nu
    np.testing.assert_allclose(s1, nu_s2(prob.structure, scheme).nu, atol=1e-12)
    np.testing.assert_allclose(s1, prob.structure.block_lipschitz, atol=1e-12)


def test_fully_parallel_examples():
    st_ = SeparabilityStructure([[0, 1, 2], [2, 3]], np.array([1.0, 2.0, 3.0, 4.0]))
    scheme = SamplingScheme.fully_parallel(4)
    np.testing.assert_allclose(nu_s2(st_, scheme).nu, 3 * st_.block_lipschitz)
    np.testing.assert_allclose(nu_s1(st_, beta_by_enumeration(scheme, st_)).nu, [3.0, 6.0, 9.0, 8.0])
    equal = SeparabilityStructure([[0, 1, 2], [1, 2, 3]], st_.block_lipschitz)
    np.testing.assert_allclose(nu_s1(equal, beta_by_enumeration(scheme, equal)).nu, 3 * st_.block_lipschitz)
    st5 = SeparabilityStructure([[0, 1, 2], [2, 3, 4]], np.ones(5))
    np.testing.assert_allclose(nu_s2(st5, SamplingScheme.explicit_atoms(5, [([0, 1], 0.5), ([2, 3], 0.3), ([4], 0.2)])).nu, 2.0)


def test_s2_can_exceed_s3():
    # One row with a dominant entry: counting that entry once per selected
    # block overshoots the squared row norm used by the full-displacement bound.
    prob = make_lasso(np.array([[1.0, 0.1, 0.1]]), np.zeros(1), 0.1)
    s2 = nu_s2(prob.structure, SamplingScheme.fully_parallel(3)).nu
    s3 = nu_s3(prob.structure, prob.operator_norms).nu
    assert s2[0] > s3[0]
    np.testing.assert_allclose(s3, 1.02)


def test_s3_defaults_to_group_sums():
    st_ = SeparabilityStructure([[0, 1], [1, 2]], np.ones(3), [2.0, 5.0])
    np.testing.assert_allclose(nu_s3(st_).nu, [2.0, 7.0, 5.0])
    with pytest.raises(ValidationError):
        nu_s3(SeparabilityStructure([[0]], np.ones(1)))


def test_lasso_s3_matches_row_norm_sums():
    prob = random_lasso(4)
    A = prob.smooth.M.toarray()
    expected = [sum((A[k] ** 2).sum() for k in np.flatnonzero(A[:, i])) for i in range(A.shape[1])]
    np.testing.assert_allclose(nu_s3(prob.structure, prob.operator_norms).nu, expected, rtol=1e-12)
    np.testing.assert_allclose(nu_s3(prob.structure).nu, expected, rtol=1e-12)


def test_refined_formula_examples():
    prob = random_lasso(5)
    A = prob.smooth.M.toarray()
    np.testing.assert_allclose(nu_s1_refined(prob.structure, 6, 1).nu, prob.structure.block_lipschitz, rtol=1e-12)
    tau = 3
    card = (A != 0).sum(axis=1)
    expected = [(((1 + (tau - 1) * (card - 1) / 5)) * A[:, i] ** 2).sum() for i in range(6)]
    np.testing.assert_allclose(nu_s1_refined(prob.structure, 6, tau).nu, expected, rtol=1e-12)
    with pytest.raises(ValidationError):
        nu_s1_refined(SeparabilityStructure([[0]], np.ones(1)), 1, 1)


@given(st.floats(0.01, 100.0), st.integers(0, 4))
def test_nu_scales_with_lipschitz(c, seed):
    prob = random_lasso(seed)
    scheme = SamplingScheme.tau_nice(6, 2)
    betas = beta_by_enumeration(scheme, prob.structure)
    base, scaled = prob.structure, prob.structure.scaled(c)
    np.testing.assert_allclose(nu_s1(scaled, betas).nu, c * nu_s1(base, betas).nu, rtol=1e-12)
    np.testing.assert_allclose(nu_s2(scaled, scheme).nu, c * nu_s2(base, scheme).nu, rtol=1e-12)
    np.testing.assert_allclose(nu_s3(scaled).nu, c * nu_s3(base).nu, rtol=1e-12)


def test_refined_formula_dominated_by_block_formula_for_least_squares():
    prob = random_lasso(1)
    for tau in range(1, 7):
        refined = nu_s1_refined(prob.structure, 6, tau).nu
        plain = nu_s1(prob.structure, tau_nice_betas(6, prob.structure.eta, tau)).nu
        assert np.all(refined <= plain + 1e-12)


def test_global_bounds_full_coupling_and_unit_steps():
    st_ = SeparabilityStructure([[0, 1, 2, 3]], np.ones(4))
    b = global_lipschitz_bounds(st_, np.ones(4))
    assert b.L_identity == 4.0 and b.L_lambda == 4.0
    L = np.array([1.0, 2.0, 4.0])
    st2 = SeparabilityStructure([[0, 1], [1, 2]], L)
    assert global_lipschitz_bounds(st2, 1 / L).L_gamma_inv == 2.0 == st2.eta


def test_global_bounds_examples():
    st_ = SeparabilityStructure([[0, 1], [1, 2]], np.array([1.0, 2.0, 3.0]))
    b = global_lipschitz_bounds(st_, [1.0, 0.5, 0.25])
    assert b.L_identity == 5.0
    assert b.L_gamma_inv == 2.0
    assert b.L_lambda == 2.0


# -- overapproximation checks ------------------------------------------------


def test_eso_zero_direction_has_zero_slack():
    prob = random_lasso(0)
    scheme = SamplingScheme.tau_nice(6, 2)
    cert = nu_s2(prob.structure, scheme)
    report = verify_eso_s2(prob, scheme, cert, trials=3, rng=make_rng(0), radius=0.0)
    np.testing.assert_allclose(report.slacks, 0.0, atol=1e-12)


def test_eso_tight_for_separable_quadratic():
    L = np.array([1.0, 2.0, 5.0])
    smooth = FactoredQuadratic(np.diag(np.sqrt(L)))
    st_ = SeparabilityStructure([[0], [1], [2]], L, L)
    scheme = SamplingScheme.tau_nice(3, 2)
    cert = nu_s1(st_, beta_by_enumeration(scheme, st_))
    report = verify_eso_s1(smooth, scheme, cert, trials=20, rng=make_rng(1))
    np.testing.assert_allclose(report.slacks, 0.0, atol=1e-9)
    assert report.valid


def test_eso_detects_too_small_parameters():
    prob = random_lasso(2)
    scheme = SamplingScheme.fully_parallel(6)
    cert = SmoothnessCertificate(0.1 * prob.structure.block_lipschitz, Condition.S1)
    assert not verify_eso_s1(prob, scheme, cert, trials=20, rng=make_rng(2)).valid


@pytest.mark.parametrize("seed", range(4))
def test_certificates_pass_their_checks(seed):
    prob = random_lasso(seed)
    rng = make_rng(seed)
    for scheme in (SamplingScheme.tau_nice(6, 3), SamplingScheme.fully_parallel(6),
                   SamplingScheme.explicit_atoms(6, [([0, 1], 0.5), ([2, 3, 4, 5], 0.5)])):
        betas = beta_by_enumeration(scheme, prob.structure)
        s1 = nu_s1(prob.structure, betas)
        s2 = nu_s2(prob.structure, scheme)
        s3 = nu_s3(prob.structure, prob.operator_norms)
        assert verify_eso_s1(prob, scheme, s1, 10, rng).valid
        s2_report = verify_eso_s2(prob, scheme, s2, 10, rng)
        assert s2_report.valid
        # an almost-sure pass implies the expectation pass
        assert verify_eso_s1(prob, scheme, s2, 10, rng).valid
        assert verify_eso_s2(prob, scheme, s3, 10, rng).valid
