import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdshrink import rmt
from mdshrink.errors import DomainError, PreconditionError
from mdshrink.linalg import EigenSystem, SampleSet, mahalanobis_sq, sample_covariance, sym_eig
from mdshrink.shrinkers import (
    PrecisionEstimate,
    RuleKind,
    ShrinkageRule,
    Threshold,
    apply_rule,
    eta_classical,
    eta_optimal,
)
from mdshrink.sim import haar_orthogonal


class TestClassical:
    def test_values(self):
        assert eta_classical(3.0, 1.0) == 0.5
        assert eta_classical(0.5, 1.0) == 0.0
        assert eta_classical(1.0, 1.0) == 0.0
        assert eta_classical(4.0, 1.5) == pytest.approx(1 / 1.75)

    def test_domain(self):
        with pytest.raises(DomainError):
            eta_classical(-1.0, 1.0)
        with pytest.raises(DomainError):
            eta_classical(1.0, 0.0)


class TestOptimal:
    def test_values(self):
        assert eta_optimal(4.5, 1.0, 1.0) == pytest.approx(0.5, abs=1e-15)
        assert eta_optimal(3.9, 1.0, 1.0) == 0.0
        assert eta_optimal(4.0, 1.0, 1.0) == 0.0
        assert eta_optimal(18.0, 2.0, 1.0) == pytest.approx(0.125, abs=1e-15)

    def test_domain(self):
        with pytest.raises(DomainError):
            eta_optimal(-1.0, 1.0, 0.5)
        with pytest.raises(DomainError):
            eta_optimal(1.0, 1.0, 2.0)

    def test_literal_threshold_variant(self):
        # between sigma^2 sqrt(beta) and sigma^2 lambda_plus the literal rule uses the plateau preimage
        assert eta_optimal(3.0, 1.0, 1.0, Threshold.ELL_PLUS) == pytest.approx(1.0)
        assert eta_optimal(1.0, 1.0, 1.0, Threshold.ELL_PLUS) == 0.0
        assert eta_optimal(4.5, 1.0, 1.0, "ell-plus") == pytest.approx(0.5)

    @given(beta=st.sampled_from([0.1, 0.25, 0.5, 1.0]), sigma=st.floats(0.1, 3), t=st.floats(1e-6, 1e4))
    def test_ordering_above_edge(self, beta, sigma, t):
        # lam - sigma^2 = sigma^2 (l + beta + beta/l) > sigma^2 l, so the optimal value sits above classical
        lam_plus = rmt.bulk_edges(beta)[1]
        lam = sigma**2 * (lam_plus + t)
        opt, cls = eta_optimal(lam, sigma, beta), eta_classical(lam, sigma)
        assert opt > cls > 0.0
        ell = rmt.ell_inv(lam / sigma**2, beta)
        assert opt / cls == pytest.approx(1.0 + beta / ell + beta / ell**2, rel=1e-9)

    @pytest.mark.parametrize("beta", [0.1, 0.5, 1.0])
    def test_zero_region_contains_classical(self, beta):
        sigma = 1.3
        rule = ShrinkageRule.optimal(sigma, beta)
        assert rule.cutoff > ShrinkageRule.classical(sigma).cutoff
        lams = np.linspace(sigma**2 * 1.0001, rule.cutoff, 50)
        assert np.all(rule(lams) == 0.0)
        assert np.all(ShrinkageRule.classical(sigma)(lams) > 0.0)

    def test_curve_regimes(self):
        # below the edge only classical is active; above it the two converge relatively
        assert eta_optimal(3.0, 1.0, 1.0) == 0.0 < eta_classical(3.0, 1.0)
        assert eta_optimal(4.5, 1.0, 1.0) == pytest.approx(0.5)
        assert eta_classical(4.5, 1.0) == pytest.approx(1 / 3.5)
        assert eta_optimal(1e6, 1.0, 1.0) / eta_classical(1e6, 1.0) == pytest.approx(1.0, abs=1e-5)


class TestRule:
    def test_vectorized_matches_scalar(self):
        rule = ShrinkageRule.optimal(1.2, 0.6)
        lams = np.linspace(0, 12, 301)
        vec = rule(lams)
        assert vec.shape == lams.shape
        assert np.array_equal(vec, [eta_optimal(x, 1.2, 0.6) for x in lams])
        assert isinstance(rule(5.0), float)

    def test_validation(self):
        with pytest.raises(DomainError):
            ShrinkageRule(RuleKind.OPTIMAL, 1.0)
        with pytest.raises(DomainError):
            ShrinkageRule.classical(-1.0)
        with pytest.raises(DomainError):
            ShrinkageRule(RuleKind.CLASSICAL, 1.0, custom_fn=lambda x: 0.0)

    def test_custom_accepts_shrinker(self):
        sigma, beta = 1.0, 0.5
        cut = sigma**2 * rmt.bulk_edges(beta)[1]
        rule = ShrinkageRule.custom(lambda x: 0.0 if x <= cut else 1.0 / x, sigma, beta)
        assert rule(cut) == 0.0
        assert rule(2 * cut) == pytest.approx(1 / (2 * cut))

    def test_custom_rejects_nonzero_bulk(self):
        with pytest.raises(DomainError):
            ShrinkageRule.custom(lambda x: 1.0, 1.0, 0.5)

    def test_custom_rejects_negative(self):
        with pytest.raises(DomainError):
            ShrinkageRule.custom(lambda x: 0.0 if x <= 3.0 else -1.0, 1.0, 0.5)

    def test_custom_rejects_jump(self):
        cut = rmt.bulk_edges(0.5)[1]
        with pytest.raises(DomainError):
            ShrinkageRule.custom(lambda x: 0.0 if x <= cut else (1.0 if x < 2 * cut else 5.0), 1.0, 0.5)

    def test_rules_are_hashable_and_comparable(self):
        assert ShrinkageRule.optimal(1.0, 0.5) == ShrinkageRule.optimal(1.0, 0.5)
        assert ShrinkageRule.optimal(1.0, 0.5) != ShrinkageRule.optimal(1.0, 0.5, "ell-plus")


class TestApplyRule:
    def test_all_subcritical_gives_zero(self):
        eig = sym_eig(np.diag([3.0, 2.0, 1.0]))
        est = apply_rule(eig, ShrinkageRule.optimal(1.0, 1.0))
        assert np.array_equal(est.matrix, np.zeros((3, 3)))

    def test_optimal_on_diagonal(self):
        diag = np.array([4.5] + [0.1] * 5)
        est = apply_rule(sym_eig(np.diag(diag)), ShrinkageRule.optimal(1.0, 1.0))
        want = np.zeros((6, 6))
        want[0, 0] = 0.5
        assert np.allclose(est.matrix, want, atol=1e-15)

    def test_classical_repeated_eigenvalue(self):
        est = apply_rule(sym_eig(np.diag([3.0, 3.0])), ShrinkageRule.classical(1.0))
        assert np.allclose(est.matrix, np.diag([0.5, 0.5]), atol=1e-15)

    def test_non_orthonormal(self):
        bad = EigenSystem(np.array([2.0, 1.0]), np.array([[1.0, 0.5], [0.0, 1.0]]), check=False)
        with pytest.raises(PreconditionError):
            apply_rule(bad, ShrinkageRule.classical(1.0))

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_spectral_mapping(self, seed):
        rng = np.random.default_rng(seed)
        p = 8
        vals = np.sort(rng.uniform(0, 10, p))[::-1]
        v = haar_orthogonal(p, rng)
        eig = sym_eig((v * vals) @ v.T, psd=True)
        rule = ShrinkageRule.classical(1.0)
        est = apply_rule(eig, rule)
        got = np.sort(np.linalg.eigvalsh(est.matrix))
        assert np.allclose(got, np.sort(rule(eig.values)), atol=1e-10 * max(1.0, got.max()))
        # symmetric and PSD
        assert np.array_equal(est.matrix, est.matrix.T)
        assert got.min() >= -1e-10 * max(1.0, got.max())

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_rotation_equivariance(self, seed):
        rng = np.random.default_rng(seed)
        n, p, sigma, beta = 40, 10, 0.8, 0.25
        y = rng.standard_normal((n, p)) * np.r_[3.0, 2.0, np.ones(p - 2)]
        q = haar_orthogonal(p, rng)
        s = sample_covariance(SampleSet(y, np.zeros(p)))
        s_rot = sample_covariance(SampleSet(y @ q.T, np.zeros(p)))
        for rule in (ShrinkageRule.classical(sigma), ShrinkageRule.optimal(sigma, beta)):
            m = apply_rule(sym_eig(s), rule).matrix
            m_rot = apply_rule(sym_eig(s_rot), rule).matrix
            scale = max(1.0, np.max(np.abs(m)))
            assert np.max(np.abs(m_rot - q @ m @ q.T)) <= 1e-8 * scale
            z = rng.standard_normal(p)
            assert mahalanobis_sq(q @ z, np.zeros(p), m_rot) == pytest.approx(
                mahalanobis_sq(z, np.zeros(p), m), rel=1e-8, abs=1e-10
            )

    def test_precision_estimate_symmetry(self):
        with pytest.raises(PreconditionError):
            PrecisionEstimate(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2))
