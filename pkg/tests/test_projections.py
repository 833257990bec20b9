import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mincopula.constraints import (
    MarginConstraint,
    MomentConstraint,
    ProblemSpec,
    normalize_moment,
    spearman_constraint,
)
from mincopula.errors import DegenerateMoment, InfeasibleScaling, InvalidGISFamily, TargetOutOfRange
from mincopula.oracle import random_feasible_point
from mincopula.prob_array import GridShape, MomentArray, ProbArray, kl_divergence, margin
from mincopula.projections import (
    GISFamily,
    TiltSolveConfig,
    exp_tilt_project,
    gis_project,
    gis_single_constraint_step,
    gis_step,
    lambda_fn,
    marginal_scaling,
    partition_scaling,
    tilt_parameter,
)

from conftest import random_prob_array

RHO_N2 = spearman_constraint(GridShape(2, 2), (0, 1), 0.45)
TARGET_N2 = np.array([[0.4, 0.1], [0.1, 0.4]])
ROWS_N2 = np.array([[0, 0], [1, 1]])


class TestPartitionScaling:
    def test_rows(self):
        out = partition_scaling(ProbArray.uniform(2, 2), ROWS_N2, [0.7, 0.3])
        np.testing.assert_allclose(out.values, [[0.35, 0.35], [0.15, 0.15]], rtol=0, atol=1e-16)

    def test_identity(self, p2):
        out = partition_scaling(p2, ROWS_N2, [0.5, 0.5])
        assert np.array_equal(out.values, p2.values)

    def test_zeros_preserved(self):
        q = ProbArray(np.array([[0.5, 0.0], [0.0, 0.5]]))
        out = partition_scaling(q, ROWS_N2, [0.6, 0.4])
        np.testing.assert_allclose(out.values, [[0.6, 0.0], [0.0, 0.4]], rtol=0, atol=1e-16)

    def test_infeasible(self):
        q = ProbArray(np.array([[0.5, 0.5], [0.0, 0.0]]))
        with pytest.raises(InfeasibleScaling):
            partition_scaling(q, ROWS_N2, [0.6, 0.4])

    @given(seed=st.integers(0, 2**32 - 1), blocks=st.integers(1, 6))
    def test_block_masses(self, seed, blocks):
        rng = np.random.default_rng(seed)
        q = random_prob_array(rng, 3, 3, zeros=0.2)
        labels = rng.integers(0, blocks, size=(3, 3, 3))
        mass = np.bincount(labels.ravel(), weights=q.flat, minlength=blocks)
        t = rng.random(blocks) * (mass > 0)
        t /= t.sum()
        out = partition_scaling(q, labels, t)
        got = np.bincount(labels.ravel(), weights=out.flat, minlength=blocks)
        np.testing.assert_allclose(got, t, rtol=0, atol=1e-12)
        assert not np.any((out.values > 0) & (q.values == 0))


class TestMarginalScaling:
    def test_single_axis(self):
        out = marginal_scaling(ProbArray.uniform(2, 2), [0], [0.7, 0.3])
        np.testing.assert_allclose(out.values, [[0.35, 0.35], [0.15, 0.15]], rtol=0, atol=1e-16)

    def test_identity(self, rng):
        q = random_prob_array(rng, 3, 4)
        out = marginal_scaling(q, (0, 2), margin(q, (0, 2)))
        np.testing.assert_allclose(out.values, q.values, rtol=1e-14, atol=0)

    def test_pair_in_three_dims(self):
        out = marginal_scaling(ProbArray.uniform(3, 2), (0, 1), TARGET_N2)
        np.testing.assert_allclose(out.values, 0.5 * TARGET_N2[:, :, None].repeat(2, axis=2), rtol=0, atol=1e-16)
        assert out.values[0, 0, 1] == pytest.approx(0.2, abs=1e-16)

    def test_infeasible(self):
        q = ProbArray(np.array([[0.5, 0.5], [0.0, 0.0]]))
        with pytest.raises(InfeasibleScaling):
            marginal_scaling(q, [0], [0.5, 0.5])

    @given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 4), n=st.integers(2, 4), data=st.data())
    def test_feasibility_and_support(self, seed, d, n, data):
        rng = np.random.default_rng(seed)
        q = random_prob_array(rng, d, n)
        J = tuple(sorted(data.draw(st.sets(st.integers(0, d - 1), min_size=1, max_size=d))))
        target = random_prob_array(rng, len(J), n, zeros=0.3)
        out = marginal_scaling(q, J, target)
        np.testing.assert_allclose(margin(out, J).values, target.values, rtol=0, atol=1e-12)
        assert not np.any((out.values > 0) & (q.values == 0))


class TestGIS:
    def test_family_validation(self):
        h = np.stack([np.full((2, 2), 0.5), np.full((2, 2), 0.6)])
        with pytest.raises(InvalidGISFamily):
            GISFamily(h, np.array([0.5, 0.5]))
        with pytest.raises(InvalidGISFamily):
            GISFamily(np.stack([np.full((2, 2), 0.5)] * 2), np.array([0.7, 0.7]))

    def test_one_step_closed_form(self):
        nm = normalize_moment(RHO_N2)
        fam = GISFamily.from_normalized(nm)
        u = ProbArray.uniform(2, 2)
        np.testing.assert_allclose(gis_step(u, fam).values, TARGET_N2, rtol=0, atol=1e-15)
        np.testing.assert_allclose(gis_single_constraint_step(u, nm).values, TARGET_N2, rtol=0, atol=1e-15)

    def test_feasible_start_is_fixed_point(self):
        nm = normalize_moment(RHO_N2)
        p = ProbArray(TARGET_N2)
        np.testing.assert_allclose(gis_step(p, GISFamily.from_normalized(nm)).values, TARGET_N2, rtol=0, atol=1e-16)
        res = gis_project(p, nm, inner_eps=1e-12, max_iter=5)
        assert res.converged and res.iterations == 1

    def test_zero_target_is_identity(self):
        nm = normalize_moment(spearman_constraint(GridShape(2, 2), (0, 1), 0.0))
        assert nm.abar == pytest.approx(0.5)
        u = ProbArray.uniform(2, 2)
        np.testing.assert_allclose(gis_single_constraint_step(u, nm).values, u.values, rtol=0, atol=1e-16)

    def test_binary_partition_one_step(self, rng):
        q = random_prob_array(rng, 2, 2)
        res = gis_project(q, normalize_moment(RHO_N2), inner_eps=1e-12, max_iter=10)
        assert res.converged and res.iterations == 2  # second step confirms the fixed point
        assert float(np.sum(res.array.values * RHO_N2.h.values)) == pytest.approx(0.45, abs=1e-14)

    def test_bad_abar(self):
        nm = normalize_moment(RHO_N2)
        from dataclasses import replace

        with pytest.raises(InvalidGISFamily):
            gis_single_constraint_step(ProbArray.uniform(2, 2), replace(nm, abar=1.2))

    def test_zero_conventions(self):
        # abar = 0 kills every cell with hbar > 0; cells with hbar = 0 keep their mass (0 ** 0 = 1)
        h = np.array([[1.0, 0.0], [0.0, 0.5]])
        fam = GISFamily(np.stack([h, 1 - h]), np.array([0.0, 1.0]))
        out = gis_step(ProbArray.uniform(2, 2), fam)
        np.testing.assert_allclose(out.values, [[0.0, 0.5], [0.5, 0.0]], rtol=0, atol=1e-16)


class TestLambda:
    def test_zero(self):
        assert lambda_fn(ProbArray.uniform(2, 2), RHO_N2.h, 0.0) == pytest.approx(0.0, abs=1e-16)

    def test_closed_form(self):
        # two values +-0.75 with equal weight: mean is 0.75 tanh(0.75 lam)
        for lam in (1.0, -2.0, 0.3):
            got = lambda_fn(ProbArray.uniform(2, 2), RHO_N2.h, lam)
            assert got == pytest.approx(0.75 * math.tanh(0.75 * lam), abs=1e-15)
        assert lambda_fn(ProbArray.uniform(2, 2), RHO_N2.h, 1.0) == pytest.approx(0.4763617, abs=1e-7)

    def test_no_overflow(self):
        assert lambda_fn(ProbArray.uniform(2, 2), RHO_N2.h, 5000.0) == pytest.approx(0.75, abs=1e-15)

    @pytest.mark.parametrize("seed", range(100))
    def test_strictly_increasing(self, seed):
        rng = np.random.default_rng(seed)
        q = random_prob_array(rng, 2, 3, zeros=0.3)
        h = MomentArray(rng.normal(size=(3, 3)) * (rng.random((3, 3)) > 0.2))
        inside = (q.values > 0) & (h.values != 0)
        if len(np.unique(h.values[q.values > 0])) < 2 or not inside.any():
            pytest.skip("moment array constant on the support")
        vals = np.array([lambda_fn(q, h, lam) for lam in np.linspace(-5, 5, 41)])
        assert np.all(np.diff(vals) > 0)


class TestTilt:
    def test_closed_form(self):
        u = ProbArray.uniform(2, 2)
        np.testing.assert_allclose(exp_tilt_project(u, RHO_N2).values, TARGET_N2, rtol=0, atol=1e-14)
        assert tilt_parameter(u, RHO_N2) == pytest.approx(math.log(4) / 1.5, abs=1e-12)

    def test_zero_target_identity(self):
        mc = spearman_constraint(GridShape(2, 2), (0, 1), 0.0)
        u = ProbArray.uniform(2, 2)
        assert tilt_parameter(u, mc) == 0.0
        np.testing.assert_allclose(exp_tilt_project(u, mc).values, u.values, rtol=0, atol=1e-16)

    @pytest.mark.parametrize("alpha", [0.75, -0.75, 0.9])
    def test_boundary_out_of_range(self, alpha):
        with pytest.raises(TargetOutOfRange):
            exp_tilt_project(ProbArray.uniform(2, 2), spearman_constraint(GridShape(2, 2), (0, 1), alpha))

    def test_bracket_cap(self):
        # attainable in exact arithmetic but needs lam beyond the overflow cap
        mc = spearman_constraint(GridShape(2, 2), (0, 1), 0.75 - 1e-300)
        with pytest.raises(TargetOutOfRange):
            exp_tilt_project(ProbArray.uniform(2, 2), mc)

    def test_degenerate(self):
        q = ProbArray(np.array([[0.5, 0.0], [0.0, 0.5]]))
        with pytest.raises(DegenerateMoment):
            exp_tilt_project(q, RHO_N2)
        same = MomentConstraint((0, 1), RHO_N2.h, 0.75)
        assert exp_tilt_project(q, same) == q

    @given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(-0.6, 0.6), n=st.integers(2, 6))
    def test_feasibility_and_support(self, seed, alpha, n):
        rng = np.random.default_rng(seed)
        q = random_prob_array(rng, 3, n, zeros=0.3)
        mc = spearman_constraint(GridShape(3, n), (0, 2), alpha)
        hs = mc.h.values[q.values > 0]
        if not hs.min() < alpha < hs.max():
            return
        out = exp_tilt_project(q, mc)
        assert abs(float(np.sum(out.values * mc.h.values)) - alpha) < 1e-10
        assert np.array_equal(out.values > 0, q.values > 0)

    @pytest.mark.parametrize("seed", range(20))
    def test_agrees_with_gis(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 7))
        q = random_prob_array(rng, 2, n)
        alpha = float(rng.uniform(-0.6, 0.6)) * (1 - 1 / n**2)
        mc = spearman_constraint(GridShape(2, n), (0, 1), alpha)
        tilt = exp_tilt_project(q, mc)
        res = gis_project(q, normalize_moment(mc), inner_eps=1e-12, max_iter=10**5)
        assert res.converged
        assert np.max(np.abs(tilt.values - res.array.values)) < 1e-8


@pytest.fixture(scope="module")
def copula_points():
    """Feasible arrays for uniform margins plus a Spearman target of 0.3 (d=2, n=3)."""
    s = GridShape(2, 3)
    spec = ProblemSpec(s, moments=(spearman_constraint(s, (0, 1), 0.3),))
    pts = [random_feasible_point(spec, seed) for seed in range(1000)]
    assert all(p is not None for p in pts)
    return pts


@pytest.fixture(scope="module")
def pair_margin_points():
    """Feasible arrays for a fixed {1,2}-margin (d=3, n=2)."""
    s = GridShape(3, 2)
    spec = ProblemSpec(s, margins=(MarginConstraint((0, 1), ProbArray(TARGET_N2)),))
    pts = [random_feasible_point(spec, seed) for seed in range(1000)]
    assert all(p is not None for p in pts)
    return pts


def _assert_optimal(q, q_star, points):
    best = kl_divergence(q_star, q)
    worst_gap = min(kl_divergence(p, q) - best for p in points)
    assert worst_gap >= -1e-9


class TestOptimality:
    """Each kernel output has smaller divergence from q than any feasible array."""

    @pytest.mark.parametrize("seed", [0, 1])
    def test_marginal_scaling(self, copula_points, seed):
        q = random_prob_array(np.random.default_rng(seed), 2, 3)
        _assert_optimal(q, marginal_scaling(q, [0], np.full(3, 1 / 3)), copula_points)

    @pytest.mark.parametrize("seed", [0, 1])
    def test_marginal_scaling_pair(self, pair_margin_points, seed):
        q = random_prob_array(np.random.default_rng(seed), 3, 2)
        _assert_optimal(q, marginal_scaling(q, (0, 1), TARGET_N2), pair_margin_points)

    def test_partition_scaling(self, copula_points):
        q = random_prob_array(np.random.default_rng(5), 2, 3)
        labels = np.repeat(np.arange(3)[None, :], 3, axis=0)
        _assert_optimal(q, partition_scaling(q, labels, [1 / 3] * 3), copula_points)

    @pytest.mark.parametrize("seed", [0, 1])
    def test_tilt(self, copula_points, seed):
        q = random_prob_array(np.random.default_rng(seed), 2, 3)
        mc = spearman_constraint(GridShape(2, 3), (0, 1), 0.3)
        _assert_optimal(q, exp_tilt_project(q, mc), copula_points)

    def test_gis(self, copula_points):
        q = random_prob_array(np.random.default_rng(9), 2, 3)
        mc = spearman_constraint(GridShape(2, 3), (0, 1), 0.3)
        res = gis_project(q, normalize_moment(mc), inner_eps=1e-13, max_iter=10**5)
        _assert_optimal(q, res.array, copula_points)


def test_cfg_validation():
    with pytest.raises(ValueError):
        TiltSolveConfig(root_tol=0.0)
