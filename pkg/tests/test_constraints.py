import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mincopula.checkerboard import CopulaFamily, skeleton_from_copula
from mincopula.constraints import (
    MarginConstraint,
    MomentConstraint,
    ProblemSpec,
    generic_moment_array,
    normalize_moment,
    residuals,
    rho_range_check,
    spearman_constraint,
    spearman_moment_array,
    spearman_of_array,
)
from mincopula.errors import DegenerateMoment, InvalidArray, InvalidAxes, NumericalError
from mincopula.prob_array import GridShape, MomentArray, ProbArray

from conftest import random_copula_array, random_prob_array


def g_rho(v):
    return 12.0 * (v[..., 0] - 0.5) * (v[..., 1] - 0.5)


class TestSpearmanArray:
    def test_n2(self):
        h = spearman_moment_array(GridShape(2, 2)).values
        np.testing.assert_allclose(h, [[0.75, -0.75], [-0.75, 0.75]], rtol=0, atol=1e-15)

    def test_n30_corner(self):
        h = spearman_moment_array(GridShape(2, 30)).values
        assert h[0, 0] == pytest.approx(841 / 300, abs=1e-14)

    @pytest.mark.parametrize("n", [2, 5, 30])
    def test_symmetries(self, n):
        h = spearman_moment_array(GridShape(2, n)).values
        np.testing.assert_allclose(h, h[::-1, ::-1], rtol=0, atol=1e-14)
        np.testing.assert_allclose(h, -h[::-1, :], rtol=0, atol=1e-14)

    def test_lifted_constant_off_k(self):
        h = spearman_moment_array(GridShape(3, 4), (0, 2)).values
        assert h.shape == (4, 4, 4)
        for j in range(4):
            assert np.array_equal(h[:, j, :], h[:, 0, :])
        np.testing.assert_allclose(h[:, 0, :], spearman_moment_array(GridShape(2, 4)).values, atol=1e-15)

    def test_needs_two_axes(self):
        with pytest.raises(InvalidAxes):
            spearman_moment_array(GridShape(3, 4), (0, 1, 2))


class TestSpearmanOfArray:
    def test_uniform(self):
        assert spearman_of_array(ProbArray.uniform(2, 6)) == pytest.approx(0.0, abs=1e-15)

    def test_comonotone(self):
        p = skeleton_from_copula(CopulaFamily("comonotone"), GridShape(2, 2))
        assert spearman_of_array(p) == pytest.approx(0.75, abs=1e-15)

    def test_symmetric_2x2(self, p2):
        assert spearman_of_array(p2) == pytest.approx(0.45, abs=1e-15)

    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 8))
    def test_range(self, seed, n):
        p = random_copula_array(np.random.default_rng(seed), 2, n)
        rho = spearman_of_array(p)
        assert -1 + 1 / n**2 - 1e-12 <= rho <= 1 - 1 / n**2 + 1e-12


class TestGenericMoment:
    @pytest.mark.parametrize("n", [2, 3, 7])
    def test_bilinear_exact(self, n):
        s = GridShape(2, n)
        np.testing.assert_allclose(
            generic_moment_array(g_rho, (0, 1), s).values, spearman_moment_array(s).values, rtol=0, atol=1e-14
        )

    def test_constant(self):
        h = generic_moment_array(lambda v: np.full(v.shape[:-1], 2.5), (0, 1), GridShape(3, 3))
        assert np.all(h.values == 2.5)

    def test_linear(self):
        h = generic_moment_array(lambda v: v[..., 0], (0, 1), GridShape(2, 2)).values
        np.testing.assert_allclose(h, [[0.25, 0.25], [0.75, 0.75]], rtol=0, atol=1e-16)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite(self):
        with pytest.raises(NumericalError):
            generic_moment_array(lambda v: 1 / (v[..., 0] - 0.25), (0, 1), GridShape(2, 2))

    @pytest.mark.parametrize("n", [2, 5, 10])
    @pytest.mark.parametrize(
        "g",
        [lambda v: np.exp(v[..., 0] * v[..., 1]), lambda v: np.sin(2 * v[..., 0]) * v[..., 1] ** 2],
    )
    def test_refinement(self, n, g):
        # node spacing about 1/512 keeps the midpoint error of these integrands below 1e-6
        s = GridShape(2, n)
        m = 512 // n
        coarse = generic_moment_array(g, (0, 1), s, subdivisions=m).values
        fine = generic_moment_array(g, (0, 1), s, subdivisions=2 * m).values
        assert np.max(np.abs(coarse - fine)) < 1e-6

    def test_refinement_converges_to_cell_average(self):
        # cell average of v1^2 over [i/n, (i+1)/n] is ((i+1)^3 - i^3) / (3 n^2)
        n = 4
        h = generic_moment_array(lambda v: v[..., 0] ** 2, (0, 1), GridShape(2, n), subdivisions=200).values
        exact = np.array([((i + 1) ** 3 - i**3) / (3 * n**2) for i in range(n)])
        np.testing.assert_allclose(h[:, 0], exact, rtol=0, atol=1e-6)


class TestNormalize:
    def test_rho_n2(self):
        nm = normalize_moment(spearman_constraint(GridShape(2, 2), (0, 1), 0.45))
        assert nm.shift == pytest.approx(-0.75)
        assert nm.span == pytest.approx(1.5)
        assert set(np.unique(nm.hbar.values)) == {0.0, 1.0}
        assert nm.abar == pytest.approx(0.8, abs=1e-15)

    def test_target_at_max(self):
        nm = normalize_moment(spearman_constraint(GridShape(2, 3), (0, 1), 12 * (1 / 3) ** 2))
        assert nm.abar == 1.0

    def test_target_outside_range_enters_shift(self):
        nm = normalize_moment(spearman_constraint(GridShape(2, 2), (0, 1), -2.0))
        assert nm.shift == -2.0 and nm.abar == 0.0

    def test_degenerate(self):
        mc = MomentConstraint((0, 1), MomentArray(np.zeros((3, 3))), 0.0)
        with pytest.raises(DegenerateMoment):
            normalize_moment(mc)

    @given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(-1, 1))
    def test_expectation_in_unit_interval(self, seed, alpha):
        rng = np.random.default_rng(seed)
        mc = MomentConstraint.from_reduced((0, 2), rng.normal(size=(3, 3)), alpha, 3)
        nm = normalize_moment(mc)
        p = random_prob_array(rng, 3, 3, zeros=0.2)
        e = float(np.sum(p.values * nm.hbar.values))
        assert 0.0 <= e <= 1.0
        np.testing.assert_allclose(nm.hbar.values * nm.span + nm.shift, mc.h.values, atol=1e-12)


class TestConstraintTypes:
    def test_singleton_target_exactly_uniform(self):
        with pytest.raises(InvalidArray):
            MarginConstraint((0,), ProbArray(np.array([0.5 + 1e-13, 0.5 - 1e-13])))

    def test_higher_target_must_be_copula(self):
        with pytest.raises(InvalidArray):
            MarginConstraint((0, 1), ProbArray(np.array([[0.35, 0.35], [0.15, 0.15]])))

    def test_moment_must_depend_on_k_only(self, rng):
        with pytest.raises(InvalidArray):
            MomentConstraint((0, 1), MomentArray(rng.normal(size=(2, 2, 2))), 0.0)

    def test_moment_needs_two_axes(self):
        with pytest.raises(InvalidAxes):
            MomentConstraint((1,), MomentArray(np.zeros((2, 2))), 0.0)

    def test_from_reduced_is_view(self):
        mc = MomentConstraint.from_reduced((1, 2), np.arange(9.0).reshape(3, 3), 1.0, 4)
        assert mc.h.values.shape == (3,) * 4
        assert mc.h.values.strides[0] == 0 and mc.h.values.strides[3] == 0
        assert mc.name == "K_2_3"


class TestProblemSpec:
    def test_singletons_inserted(self):
        spec = ProblemSpec(GridShape(3, 4))
        assert [m.name for m in spec.all_margins] == ["J_1", "J_2", "J_3"]
        assert spec.reference == ProbArray.uniform(3, 4)

    def test_rejects_listed_singleton(self):
        u = ProbArray(np.full(4, 0.25))
        with pytest.raises(InvalidAxes):
            ProblemSpec(GridShape(2, 4), margins=(MarginConstraint((0,), u),))

    def test_disjoint_sets(self):
        s = GridShape(2, 3)
        target = skeleton_from_copula(CopulaFamily("clayton", 2.0), s)
        with pytest.raises(InvalidAxes):
            ProblemSpec(s, margins=(MarginConstraint((0, 1), target),), moments=(spearman_constraint(s, (0, 1), 0.3),))

    def test_names(self):
        s = GridShape(3, 3)
        spec = ProblemSpec(s, moments=(spearman_constraint(s, (1, 2), 0.3),))
        assert spec.constraint_names == ["J_1", "J_2", "J_3", "K_2_3"]


class TestResiduals:
    def test_feasible(self, p2):
        s = GridShape(2, 2)
        res = residuals(p2, ProblemSpec(s, moments=(spearman_constraint(s, (0, 1), 0.45),)))
        assert max(res.values()) <= 1e-12

    def test_uniform_vs_rho(self):
        s = GridShape(2, 2)
        res = residuals(ProbArray.uniform(2, 2), ProblemSpec(s, moments=(spearman_constraint(s, (0, 1), 0.45),)))
        assert res["K_1_2"] == pytest.approx(0.45, abs=1e-15)

    def test_margin_error(self):
        res = residuals(ProbArray(np.array([[0.35, 0.35], [0.15, 0.15]])), ProblemSpec(GridShape(2, 2)))
        assert res["J_1"] == pytest.approx(0.2, abs=1e-15)
        assert res["J_2"] == 0.0


@pytest.mark.parametrize("alpha, n, ok", [(0.8, 30, True), (0.8, 2, False), (0.0, 5, True), (-0.75, 2, True), (-0.76, 2, False)])
def test_rho_range_check(alpha, n, ok):
    assert rho_range_check(alpha, n) is ok
