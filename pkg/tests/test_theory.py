import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import dense_design, ic_dense

from wlasso.covariance import CovarianceModel, PrecisionFactor, build_precision
from wlasso.errors import InvalidExponents, NotDiagonallyDominant, SingularSubGram
from wlasso.lasso import SupportSpec
from wlasso.simulate import DesignSpec, _prop4_support, gen_design
from wlasso.theory import ar1_ic_bound, audit_assumptions, check_ic, placement_check, varah_bound
from wlasso.whitening import build_problem, design_problem


def anova_problem(phi, n, q):
    X = gen_design(DesignSpec("balanced_anova"), n)
    return design_problem(X, build_precision(CovarianceModel.ar1(phi, q)))


def scaled_orthonormal(n, p, rng):
    """Columns with ``X'X = n I``."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, p)))
    return np.sqrt(n) * Q


class TestIC:
    def test_diagonal_gram(self):
        X = scaled_orthonormal(8, 3, np.random.default_rng(0))
        prob = design_problem(X, PrecisionFactor.identity(4))
        rep = check_ic(prob, SupportSpec((0, 5), (1, -1)))
        np.testing.assert_allclose(rep.lhs, 0.0, atol=1e-12)
        assert rep.eta == pytest.approx(1.0) and rep.holds

    @pytest.mark.parametrize("phi", [0.5, 0.95])
    def test_balanced_anova_bound(self, phi):
        prob = anova_problem(phi, 20, 12)
        truth = SupportSpec((4, 9, 14), (1, -1, 1))
        assert placement_check(truth.indices, 2, 12).passed
        rep = check_ic(prob, truth)
        assert rep.max_lhs <= ar1_ic_bound(phi) + 1e-12
        assert rep.max_lhs == pytest.approx(rep.lhs.max())
        assert rep.eta + rep.max_lhs == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(rep.lhs, ic_dense(prob, truth), atol=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 3), st.integers(2, 5), st.integers(0, 2**32 - 1))
    def test_structured_equals_dense(self, p, q, seed):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((p + 4, p))
        prob = design_problem(X, build_precision(CovarianceModel.ar1(rng.uniform(-0.9, 0.9), q)))
        size = rng.integers(1, p * q)
        idx = rng.choice(p * q, size=size, replace=False)
        truth = SupportSpec(tuple(idx), tuple(rng.choice([-1, 1], size=size)))
        np.testing.assert_allclose(check_ic(prob, truth).lhs, ic_dense(prob, truth), atol=1e-9)

    def test_empty_support(self):
        rep = check_ic(anova_problem(0.5, 4, 3), SupportSpec((), ()))
        assert rep.max_lhs == 0.0 and rep.holds

    def test_singular_sub_gram(self):
        X = np.array([[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]])
        prob = design_problem(X, PrecisionFactor.identity(2))
        with pytest.raises(SingularSubGram):
            check_ic(prob, SupportSpec((0, 1), (1, 1)))


def test_ar1_ic_bound_values():
    assert ar1_ic_bound(0.0) == 0.0
    assert ar1_ic_bound(0.5) == pytest.approx(2 / 3, rel=1e-15)
    assert ar1_ic_bound(-0.5) == ar1_ic_bound(0.5)
    assert ar1_ic_bound(0.95) == pytest.approx(0.95 / 0.9525)
    assert all(ar1_ic_bound(phi) < 1 for phi in np.linspace(-0.999, 0.999, 101))
    with pytest.raises(ValueError):
        ar1_ic_bound(1.0)


def test_prop4_bound_on_random_compatible_instances():
    rng = np.random.default_rng(2024)
    worst = -np.inf
    for _ in range(200):
        q = int(rng.integers(4, 31))
        phi = rng.uniform(-0.99, 0.99)
        n = 2 * int(rng.integers(1, 20))
        prob = anova_problem(phi, n, q)
        size = int(rng.integers(1, max(2, (2 * q - 4) // 3)))
        idx = _prop4_support(size, 2, q, rng)
        truth = SupportSpec(tuple(idx), tuple(rng.choice([-1, 1], size=idx.size)))
        rep = check_ic(prob, truth)
        worst = max(worst, rep.max_lhs - ar1_ic_bound(phi))
    assert worst <= 1e-12


class TestVarah:
    def test_identity(self):
        assert varah_bound(np.eye(3)) == 1.0

    def test_two_by_two(self):
        A = np.array([[2.0, -1.0], [-1.0, 2.0]])
        assert varah_bound(A) == 1.0
        assert np.max(np.sum(np.abs(np.linalg.inv(A)), axis=1)) == pytest.approx(1.0)

    def test_ar1_sub_gram(self):
        prob = anova_problem(0.6, 10, 8)
        J = np.array([3, 4, 9])
        S = prob.gram_submatrix(J, J) / 5
        exact = np.max(np.sum(np.abs(np.linalg.inv(S)), axis=1))
        assert varah_bound(S) >= exact - 1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 7), st.integers(0, 2**32 - 1))
    def test_never_underestimates(self, d, seed):
        rng = np.random.default_rng(seed)
        A = rng.uniform(-1, 1, (d, d))
        off = np.sum(np.abs(A), axis=1) - np.abs(np.diag(A))
        A[np.diag_indices(d)] = (off + rng.uniform(0.05, 2, d)) * rng.choice([-1, 1], d)
        exact = np.max(np.sum(np.abs(np.linalg.inv(A)), axis=1))
        assert varah_bound(A) >= exact * (1 - 1e-12)

    def test_not_dominant(self):
        with pytest.raises(NotDiagonallyDominant):
            varah_bound(np.array([[1.0, 1.0], [1.0, 1.0]]))


class TestPlacement:
    def test_interior_and_sandwich(self):
        # p=2, q=6: pq=12; 1-based positions must lie strictly between 2 and 10
        assert placement_check([4, 6], 2, 6).passed
        assert not placement_check([0], 2, 6).interior
        assert not placement_check([9], 2, 6).interior
        # 1-based 4 and 8 sandwich 6
        chk = placement_check([3, 7], 2, 6)
        assert chk.interior and not chk.no_sandwich

    def test_generated_supports_pass(self):
        rng = np.random.default_rng(1)
        for q in range(4, 40):
            for size in (1, 2, q // 3):
                if size < 1:
                    continue
                assert placement_check(_prop4_support(size, 2, q, rng), 2, q).passed


class TestAudit:
    def test_orthogonal_design_identity_covariance(self):
        X = scaled_orthonormal(10, 3, np.random.default_rng(3))
        prob = design_problem(X, PrecisionFactor.identity(5))
        truth = SupportSpec((4, 8), (1, 1))
        a = audit_assumptions(prob, truth, 0.125, 0.125)
        assert a.m1_bound == pytest.approx(1.0)
        assert a.m2_bound == pytest.approx(1.0)
        assert a.x_orth_defect == pytest.approx(0.0, abs=1e-12)
        assert a.nu == pytest.approx(10.0)
        assert a.sigma_inv_min_eig == a.sigma_inv_max_eig == 1.0

    def test_balanced_anova(self):
        prob = anova_problem(0.0, 20, 6)
        beta = np.zeros(12)
        beta[[4, 6]] = [0.5, -0.7]
        a = audit_assumptions(prob, SupportSpec.from_beta(beta), 0.2, 0.1, beta=beta)
        assert a.m1_bound == pytest.approx(0.5)
        assert a.x_orth_defect == 0.0
        assert a.min_beta_scaled == pytest.approx(6**0.1 * 0.5)
        assert a.sparsity_ratio == pytest.approx(2 / 6**0.2)
        lo, hi = a.lambda_window
        assert lo == pytest.approx(np.sqrt(20) * np.log(20))
        assert hi == pytest.approx(20 * 6 ** (-0.3))
        assert a.lambda_window_heuristic
        d = a.to_dict()
        assert d["placement"]["passed"] and all(
            v is None or np.all(np.isfinite(v)) for v in d.values() if not isinstance(v, dict))

    def test_placement_failure_still_reports(self):
        prob = anova_problem(0.5, 8, 5)
        truth = SupportSpec((0, 2, 4), (1, 1, 1))
        a = audit_assumptions(prob, truth, 0.125, 0.125)
        assert not a.placement.passed
        assert np.isfinite(check_ic(prob, truth).max_lhs)

    @pytest.mark.parametrize("c1,c2", [(0.3, 0.2), (0.0, 0.0), (-0.1, 0.2), (0.4, 0.2)])
    def test_invalid_exponents(self, c1, c2):
        with pytest.raises(InvalidExponents):
            audit_assumptions(anova_problem(0.5, 4, 3), SupportSpec((), ()), c1, c2)


def test_design_problem_gram_matches_data_problem():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((6, 2))
    f = build_precision(CovarianceModel.ar1(0.3, 3))
    a, b = design_problem(X, f), build_problem(rng.standard_normal((6, 3)), X, f)
    np.testing.assert_allclose(dense_design(a), dense_design(b))
