import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linprog

from ctfilter.errors import EpsilonTooLarge, InfeasibleMarginals
from ctfilter.gain import constant_gain, exact_gain_scalar
from ctfilter.models import Ensemble, mixture_sample
from ctfilter.seeding import derive_stream
from ctfilter.transport import (
    coupling_coefficients,
    coupling_gain,
    epsilon_bound,
    monotone_coupling,
    optimality_report,
    perturbed_marginals,
    solve_transportation,
    squared_distance_cost,
)


def _highs_objective(cost, rows, cols):
    m, n = cost.shape
    A = np.vstack([np.kron(np.eye(m), np.ones(n)), np.kron(np.ones(m), np.eye(n))])
    res = linprog(cost.ravel(), A_eq=A, b_eq=np.concatenate([rows, cols]), bounds=(0, None), method="highs")
    assert res.status == 0
    return res.fun


def _random_marginals(rng, n):
    r = rng.random(n) + 0.05
    c = rng.random(n) + 0.05
    return r / r.sum(), c / c.sum() * (r / r.sum()).sum()


def _assert_certificate(coupling, cost, tol=1e-9):
    rep = optimality_report(coupling, cost)
    assert rep["row_violation"] <= tol
    assert rep["col_violation"] <= tol
    assert rep["min_plan"] >= 0
    assert rep["min_reduced_cost"] >= -tol
    assert rep["max_basic_reduced_cost"] <= tol
    assert rep["objective_gap"] <= tol


class TestSolveTransportation:
    def test_single_cell(self):
        c = solve_transportation([[3.0]], [0.7], [0.7])
        np.testing.assert_array_equal(c.plan, [[0.7]])
        assert c.objective == pytest.approx(2.1)

    def test_two_by_two(self):
        c = solve_transportation([[0.0, 4.0], [4.0, 0.0]], [0.5, 0.5], [0.45, 0.55])
        np.testing.assert_allclose(c.plan, [[0.45, 0.05], [0.0, 0.5]], atol=1e-15)
        assert c.objective == pytest.approx(0.2, abs=1e-15)

    def test_infeasible(self):
        with pytest.raises(InfeasibleMarginals):
            solve_transportation(np.zeros((2, 2)), [0.5, 0.5], [0.5, 0.6])

    def test_identical_marginals_zero_objective(self, rng):
        X = rng.standard_normal((30, 2))
        w = np.full(30, 1 / 30)
        c = solve_transportation(squared_distance_cost(X), w, w)
        assert c.objective == pytest.approx(0.0, abs=1e-14)
        np.testing.assert_allclose(c.plan, np.eye(30) / 30, atol=1e-15)

    def test_rectangular(self, rng):
        cost = rng.random((4, 7))
        rows = np.array([0.1, 0.2, 0.3, 0.4])
        cols = np.full(7, 1 / 7)
        c = solve_transportation(cost, rows, cols)
        _assert_certificate(c, cost)
        assert c.objective == pytest.approx(_highs_objective(cost, rows, cols), abs=1e-10)

    @pytest.mark.parametrize("seed", range(10))
    def test_random_against_highs(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 40))
        cost = squared_distance_cost(rng.standard_normal((n, 2))) if seed % 2 else rng.random((n, n))
        rows, cols = _random_marginals(rng, n)
        c = solve_transportation(cost, rows, cols)
        _assert_certificate(c, cost)
        assert c.objective == pytest.approx(_highs_objective(cost, rows, cols), abs=1e-10)

    def test_degenerate_integer_costs(self):
        # Uniform marginals and ties in cost force many degenerate pivots.
        rng = np.random.default_rng(4)
        n = 25
        cost = rng.integers(0, 3, size=(n, n)).astype(float)
        w = np.full(n, 1 / n)
        c = solve_transportation(cost, w, w)
        _assert_certificate(c, cost)
        assert c.objective == pytest.approx(_highs_objective(cost, w, w), abs=1e-10)


class TestMonotone:
    @settings(max_examples=50, deadline=None)
    @given(arrays(float, st.integers(2, 25), elements=st.floats(-4, 4), unique=True), st.floats(0.01, 0.3))
    def test_agrees_with_simplex(self, x, eps):
        h = np.tanh(x)
        cols = perturbed_marginals(h, eps)
        rows = np.full(x.size, 1 / x.size)
        cost = squared_distance_cost(x[:, None])
        mono = monotone_coupling(x, rows, cols)
        simp = solve_transportation(cost, rows, cols)
        _assert_certificate(mono, cost)
        assert mono.objective == pytest.approx(simp.objective, abs=1e-12)
        assert mono.pivots == 0

    def test_gain_paths_agree(self, rng):
        X = rng.standard_normal(60)
        a = coupling_gain(Ensemble(X), X, 0.1, method="monotone").scalar()
        b = coupling_gain(Ensemble(X), X, 0.1, method="simplex").scalar()
        # Optimal plans can differ on ties; continuous data leaves none.
        np.testing.assert_allclose(a, b, atol=1e-9)


class TestCouplingGain:
    def test_constant_h(self, rng):
        ens = Ensemble(rng.standard_normal(8))
        K, coupling = coupling_gain(ens, np.ones(8), 0.1, return_coupling=True)
        np.testing.assert_allclose(coupling.plan, np.eye(8) / 8, atol=1e-15)
        np.testing.assert_allclose(coupling_coefficients(coupling, 0.1), 0.0, atol=1e-13)
        np.testing.assert_allclose(K.scalar(), 0.0, atol=1e-13)

    @pytest.mark.parametrize("method", ["monotone", "simplex"])
    def test_two_particles(self, method):
        K, coupling = coupling_gain(Ensemble([-1.0, 1.0]), [-1.0, 1.0], 0.1, method=method, return_coupling=True)
        np.testing.assert_allclose(coupling.plan, [[0.45, 0.05], [0.0, 0.5]], atol=1e-15)
        np.testing.assert_allclose(coupling_coefficients(coupling, 0.1), [[-1.0, 1.0], [0.0, 0.0]], atol=1e-12)
        np.testing.assert_allclose(K.scalar(), [2.0, 0.0], atol=1e-12)

    def test_epsilon_bound_reported(self):
        with pytest.raises(EpsilonTooLarge) as info:
            coupling_gain(Ensemble([-1.0, 1.0]), [-1.0, 1.0], 1.5)
        assert info.value.bound == pytest.approx(1.0)
        assert "1" in str(info.value)
        assert epsilon_bound(np.zeros(3)) == np.inf

    def test_marginals_sum_to_one(self, rng):
        cols = perturbed_marginals(rng.standard_normal(50), 0.1)
        assert cols.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(cols >= 0)

    @settings(max_examples=40, deadline=None)
    @given(arrays(float, (10, 2), elements=st.floats(-3, 3), unique=True), st.floats(0.01, 0.2))
    def test_a_rows_sum_to_zero_2d(self, X, eps):
        h = np.sin(X[:, 0]) * 0.5
        _, coupling = coupling_gain(Ensemble(X), h, eps, return_coupling=True)
        np.testing.assert_allclose(coupling_coefficients(coupling, eps).sum(axis=1), 0.0, atol=1e-8)

    @settings(max_examples=30, deadline=None)
    @given(arrays(float, 9, elements=st.floats(-3, 3), unique=True), st.permutations(range(9)))
    def test_permutation_equivariance(self, x, perm):
        perm = np.asarray(perm)
        a = coupling_gain(Ensemble(x), x, 0.1).scalar()
        b = coupling_gain(Ensemble(x[perm]), x[perm], 0.1).scalar()
        np.testing.assert_allclose(b, a[perm], atol=1e-9)

    def test_particle_mean_equals_constant_gain(self, rng):
        # sum_i K^i / N = sum_j (N cols_j - 1) X^j / (N eps) = constant gain.
        X = rng.standard_normal(300)
        for eps in (0.05, 0.1, 0.2):
            K = coupling_gain(Ensemble(X), X, eps).scalar()
            assert K.mean() == pytest.approx(constant_gain(Ensemble(X), X).scalar()[0], rel=1e-10)

    def test_error_decreases_with_n(self, bimodal_density):
        errs = {}
        for N in (50, 100, 200):
            vals = []
            for trial in range(30):
                ens = mixture_sample(bimodal_density, N, derive_stream(8, "coupling-trend", N, trial))
                x = ens.states[:, 0]
                exact = exact_gain_scalar(bimodal_density, lambda z: z, x)
                vals.append(np.mean((coupling_gain(ens, x, 0.1).scalar() - exact) ** 2))
            errs[N] = np.mean(vals)
        assert errs[50] > errs[100] > errs[200]

    def test_coupling_csv(self, tmp_path):
        _, coupling = coupling_gain(Ensemble([-1.0, 1.0]), [-1.0, 1.0], 0.1, return_coupling=True)
        path = tmp_path / "plan.csv"
        coupling.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "i,j,t_ij"
        assert len(lines) == 1 + len(coupling.values)
