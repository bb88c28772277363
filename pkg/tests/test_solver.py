import math

import numpy as np
import pytest

from oglp.graph import num_edges
from oglp.objective import ObjectiveParams, gradient, loss
from oglp.solver import (
    SolverError,
    comparator_sequence,
    kkt_residual,
    reference_step,
    solve,
    solve_batch,
)

# scipy L-BFGS-B on an independent dense formulation (ftol 1e-16, gtol 1e-13)
D5_ZBAR = np.array([0.3, 1.2, 0.05, 0.8, 0.4, 2.0, 0.1, 0.6, 0.9, 0.25])
D5_WSTAR = np.array([1.0, 0.0, 1.0, 0.2987209743, 1.0, 0.0, 1.0, 1.0, 0.0557732276, 1.0])
D5_FSTAR = -4.016296495255474


def independent_residual(w, zbar, params, step):
    g = gradient(w, zbar, params)
    return float(np.max(np.abs(w - np.clip(w - step * g, 0.0, params.w_max))))


class TestClosedForms:
    def test_unit_root(self):
        params = ObjectiveParams(alpha=2.0, beta=1.0, w_max=5.0)
        rep = solve(np.array([0.0]), params)
        assert rep.converged
        assert abs(rep.w_star[0] - 1.0) <= 1e-6

    def test_random_interior_roots(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            z, alpha, beta = rng.uniform(0, 3), rng.uniform(0.5, 3), rng.uniform(0.5, 5)
            params = ObjectiveParams(alpha=alpha, beta=beta, w_max=5.0)
            rep = solve(np.array([z]), params)
            assert abs(rep.w_star[0] - (-z + math.sqrt(z * z + 8 * alpha * beta)) / (4 * beta)) <= 1e-6
            assert rep.kkt_residual <= 1e-8

    def test_pinned_near_barrier(self):
        # bounded scalar minimization (xatol 1e-14) gives 0.001999992001407618
        params = ObjectiveParams(alpha=2.0, beta=1.0, w_max=0.5)
        rep = solve(np.array([1e3]), params)
        assert rep.converged and rep.kkt_residual <= 1e-8
        assert rep.w_star[0] == pytest.approx(0.001999992001407618, abs=1e-9)

    def test_upper_face(self):
        params = ObjectiveParams(alpha=2.0, beta=0.1, w_max=0.3)
        rep = solve(np.zeros(1), params)
        assert rep.w_star[0] == 0.3

    def test_matches_reference_solution_d5(self):
        params = ObjectiveParams(alpha=2.0, beta=0.1)
        rep = solve(D5_ZBAR, params)
        np.testing.assert_allclose(rep.w_star, D5_WSTAR, atol=1e-9)
        assert loss(rep.w_star, D5_ZBAR, params) == pytest.approx(D5_FSTAR, abs=1e-10)


class TestReport:
    def test_residual_definition(self):
        rng = np.random.default_rng(1)
        params = ObjectiveParams()
        z = rng.uniform(0, 2, num_edges(6))
        rep = solve(z, params)
        assert rep.step == reference_step(params, 6)
        assert rep.kkt_residual == pytest.approx(independent_residual(rep.w_star, z, params, rep.step), abs=1e-15)
        assert rep.kkt_residual == kkt_residual(rep.w_star, z, params, rep.step)
        assert rep.converged == (rep.kkt_residual <= 1e-8)

    def test_not_converged_reported(self):
        params = ObjectiveParams()
        rep = solve(np.random.default_rng(2).uniform(0, 2, 45), params, max_iter=2)
        assert not rep.converged
        assert rep.iterations <= 2

    def test_reentered_solution(self):
        rng = np.random.default_rng(3)
        for d in (2, 4, 7):
            params = ObjectiveParams(beta=0.3)
            z = rng.uniform(0, 2, num_edges(d))
            first = solve(z, params)
            again = solve(z, params, w0=first.w_star)
            assert again.iterations <= 1
            assert again.converged

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            solve(np.ones(3), ObjectiveParams(), tol=0.0)
        with pytest.raises(ValueError):
            solve(np.ones(3), ObjectiveParams(), max_iter=0)
        with pytest.raises(ValueError):
            solve(np.ones(3), ObjectiveParams(), w0=np.zeros(3))


class TestInvariants:
    def test_warm_and_cold_agree(self):
        rng = np.random.default_rng(4)
        tol = 1e-8
        for _ in range(40):
            d = int(rng.integers(3, 9))
            params = ObjectiveParams(alpha=rng.uniform(0.5, 3), beta=rng.uniform(0.05, 2))
            z = rng.uniform(0, 2, num_edges(d))
            cold = solve(z, params, tol=tol)
            warm = solve(z, params, tol=tol, w0=rng.uniform(0.05, 1, num_edges(d)))
            assert cold.converged and warm.converged
            assert np.max(np.abs(cold.w_star - warm.w_star)) <= 10 * tol

    @pytest.mark.parametrize("beta,d", [(0.05, 8), (0.1, 10), (1.0, 4)])
    def test_monotone_descent(self, beta, d):
        params = ObjectiveParams(beta=beta)
        z = np.random.default_rng(d).uniform(0, 3, num_edges(d))
        losses = [loss(np.full(z.size, 0.5), z, params)]
        solve(z, params, callback=lambda w, f: losses.append(loss(w, z, params)))
        assert len(losses) > 2
        for before, after in zip(losses, losses[1:]):
            assert after <= before + 1e-12 * max(1.0, abs(before))

    def test_error_bound_reported(self):
        rng = np.random.default_rng(6)
        params = ObjectiveParams(beta=0.2)
        z = rng.uniform(0, 2, num_edges(6))
        rep = solve(z, params)
        tight = solve(z, params, tol=1e-12)
        assert rep.error_bound <= 1e-8
        assert np.linalg.norm(rep.w_star - tight.w_star) <= rep.error_bound + tight.error_bound


class TestComparatorSequence:
    def test_stationary(self):
        z = np.random.default_rng(7).uniform(0, 2, 10)
        comps = comparator_sequence([z] * 5, ObjectiveParams())
        for u in comps[1:]:
            np.testing.assert_array_equal(u, comps[0])

    def test_single(self):
        z = np.random.default_rng(8).uniform(0, 2, 6)
        np.testing.assert_array_equal(
            comparator_sequence([z], ObjectiveParams())[0], solve(z, ObjectiveParams()).w_star
        )

    def test_each_residual_rechecked(self):
        rng = np.random.default_rng(9)
        params = ObjectiveParams()
        base = rng.uniform(0, 2, 15)
        zbars = [base + 0.1 * k * rng.uniform(0, 1, 15) for k in range(20)]
        step = reference_step(params, 6)
        for u, z in zip(comparator_sequence(zbars, params), zbars):
            assert independent_residual(u, z, params, step) <= 1e-8

    def test_failure_lists_rounds(self):
        zbars = [np.random.default_rng(k).uniform(0, 2, 45) for k in range(3)]
        with pytest.raises(SolverError, match=r"rounds \[1, 2, 3\]"):
            comparator_sequence(zbars, ObjectiveParams(), max_iter=1)

    def test_empty(self):
        with pytest.raises(ValueError):
            comparator_sequence([], ObjectiveParams())


class TestBatch:
    def test_uses_plain_mean(self):
        rng = np.random.default_rng(10)
        zs = rng.uniform(0, 2, (30, 10))
        params = ObjectiveParams()
        np.testing.assert_array_equal(solve_batch(zs, params).w_star, solve(zs.mean(axis=0), params).w_star)

    def test_empty(self):
        with pytest.raises(ValueError):
            solve_batch(np.empty((0, 3)), ObjectiveParams())
