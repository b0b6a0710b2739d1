import math

import numpy as np
import pytest

from qlsm.basis import constant_basis, gbm_basis, hermite_basis, monomial_basis
from qlsm.chain import MarkovChainSpec, discretize_brownian, discretize_gbm
from qlsm.dp import exact_approximation_error, snell_envelope
from qlsm.errors import ScheduleViolation
from qlsm.lsm_quantum import (EstimationSchedule, run_quantum_lsm,
                              run_quantum_lsm_brownian, run_quantum_lsm_gbm,
                              schedule_from_smoothness)
from qlsm.payoff import put_payoff, table_payoff


# Toy chains with payoff bounds below 1 trip the sensitivity-normalization
# warning by design; it is asserted separately below.
pytestmark = pytest.mark.filterwarnings(
    "ignore:sqrt\\(m\\)\\*R\\*L/sigma_min < 1")


def two_path_chain():
    return MarkovChainSpec(
        dimension=1, horizon=2, initial_state=[0.0],
        grids=(np.array([[0.0]]), np.array([[0.0], [1.0]])),
        initial_distribution=[1.0],
        transitions=(np.array([[0.5, 0.5]]),))


class TestSchedule:
    def test_split_formulas(self):
        s = EstimationSchedule(epsilon=0.12, delta=0.3, horizon=4, basis_size=3)
        assert s.gram_accuracy == pytest.approx(0.04)
        assert s.target_accuracy == pytest.approx(0.12 / math.sqrt(3))
        assert s.gram_failure == pytest.approx(0.3 / (4 * 4 * 9))
        assert s.target_failure == pytest.approx(0.3 / (4 * 4 * 3))

    def test_epsilon_above_half_sigma_rejected(self):
        chain = two_path_chain()
        payoff = put_payoff(1.0)
        with pytest.raises(ScheduleViolation):
            run_quantum_lsm(chain, payoff, constant_basis(2), 0.9, 0.1,
                            sigma_min_lower=1.0, seed=0)

    def test_sigma_min_required_without_oracle(self):
        chain = two_path_chain()
        with pytest.raises(ScheduleViolation, match="sigma_min_lower"):
            run_quantum_lsm(chain, put_payoff(1.0), constant_basis(2), 0.1, 0.1,
                            seed=0, sigma_min_oracle=False)

    def test_normalization_warning_fires(self):
        chain = two_path_chain()
        payoff = table_payoff({1: np.array([0.1]), 2: np.array([0.3, 0.2])}, 0.0)
        with pytest.warns(UserWarning, match="sigma_min"):
            run_quantum_lsm(chain, payoff, constant_basis(2), 0.05, 0.2,
                            sigma_min_lower=1.0, seed=0)


class TestGenericRuns:
    def test_single_step_reduces_to_mean_estimation(self):
        chain = MarkovChainSpec(
            dimension=1, horizon=1, initial_state=[0.0],
            grids=(np.array([[0.0], [1.0]]),),
            initial_distribution=[0.25, 0.75], transitions=())
        payoff = table_payoff({1: np.array([0.8, 0.2])}, start_value=0.0)
        exact = 0.25 * 0.8 + 0.75 * 0.2
        run = run_quantum_lsm(chain, payoff, constant_basis(1), 0.05, 0.1,
                              sigma_min_lower=1.0, seed=0)
        assert run.gram_matrices == {}
        assert abs(run.estimate - max(0.0, exact)) <= 0.05

    def test_two_path_failure_rate(self):
        chain = two_path_chain()
        payoff = table_payoff({1: np.array([0.1]), 2: np.array([0.9, 0.2])},
                              start_value=0.0)
        table = snell_envelope(chain, payoff)
        eps, delta, trials = 0.08, 0.2, 200
        fails = 0
        for seed in range(trials):
            run = run_quantum_lsm(chain, payoff, constant_basis(2), eps, delta,
                                  sigma_min_lower=1.0, seed=seed)
            fails += abs(run.estimate - table.value0) > eps
        assert fails / trials <= delta + 3 * math.sqrt(delta * (1 - delta) / trials)

    def test_estimate_is_max_with_start_value(self):
        chain = two_path_chain()
        payoff = table_payoff({1: np.array([0.0]), 2: np.array([0.1, 0.1])},
                              start_value=0.7)
        run = run_quantum_lsm(chain, payoff, constant_basis(2), 0.02, 0.2,
                              sigma_min_lower=1.0, seed=1)
        assert run.estimate == pytest.approx(0.7)
        assert run.final_payoff_estimate <= 0.2

    def test_backward_resolve_targets(self):
        from qlsm.chain import enumerate_paths
        from qlsm.qsim import FixedPointFormat
        from qlsm.stopping_circuits import StoppingCircuits

        chain = discretize_brownian(1, 3, 4, 2.0)
        payoff = put_payoff(1.0)
        basis = monomial_basis(1, 1, 3)
        run = run_quantum_lsm(chain, payoff, basis, 0.02, 0.1, seed=2,
                              sigma_min_oracle=True)
        # Every estimated entry lands within its per-entry accuracy at this
        # seed (the per-entry failure budget is delta/(4 T m) ~ 0.003).
        for t, est in run.targets.items():
            assert (np.abs(est - run.exact_targets[t])
                    <= run.schedule.target_accuracy).all()

        # Re-running the circuits with the stored coefficients reproduces the
        # estimation targets' exact means, independently recomputed from the
        # target definition by full path enumeration.
        fmt = FixedPointFormat()
        ens = enumerate_paths(chain)
        circ = StoppingCircuits(chain=chain, payoff=payoff, basis=basis,
                                coefficients=run.coefficients, fmt=fmt)
        for t in run.exact_targets:
            tau = circ.classical_stop_times(t + 1)
            z = {u: np.asarray(fmt.quantize(
                payoff.values(chain, u)[ens.state_indices_at(u)]))
                for u in range(1, 4)}
            z_at = np.array([z[tau[i]][i] for i in range(len(ens))])
            rows = np.asarray(fmt.quantize(
                basis.evaluate(t, chain.grid(t))[ens.state_indices_at(t)]))
            for member in range(basis.size):
                definition = float(np.sum(
                    ens.probabilities
                    * np.asarray(fmt.quantize(z_at * rows[:, member]))))
                assert run.exact_targets[t][member] == pytest.approx(
                    definition, abs=1e-12)

    def test_sensitivity_conformance(self):
        chain = discretize_brownian(1, 3, 4, 2.0)
        payoff = put_payoff(1.0)
        basis = monomial_basis(1, 1, 3)
        run = run_quantum_lsm(chain, payoff, basis, 0.01, 0.1, seed=3,
                              sigma_min_oracle=True)
        m = basis.size
        for t in run.targets:
            gram_exact = run.exact_grams[t]
            smin = float(np.linalg.svd(gram_exact, compute_uv=False)[-1])
            eps_a = float(np.linalg.norm(run.gram_matrices[t] - gram_exact, 2))
            eps_b = float(np.linalg.norm(run.targets[t] - run.exact_targets[t]))
            if eps_a > smin / 2:
                continue
            alpha_exact = np.linalg.solve(gram_exact, run.exact_targets[t])
            gap = float(np.linalg.norm(run.coefficients[t] - alpha_exact))
            bound = 2.0 / smin * (eps_a * np.linalg.norm(run.exact_targets[t]) / smin
                                  + eps_b)
            # Coefficients were additionally rounded to fixed point.
            assert gap <= bound + 1e-6 * m

    def test_ledger_grows_as_accuracy_shrinks(self):
        chain = two_path_chain()
        payoff = table_payoff({1: np.array([0.1]), 2: np.array([0.9, 0.2])}, 0.0)
        costs = []
        for eps in (0.08, 0.04, 0.02):
            run = run_quantum_lsm(chain, payoff, constant_basis(2), eps, 0.2,
                                  sigma_min_lower=1.0, seed=4)
            costs.append(run.ledger.total_units(2))
        assert costs[0] < costs[1] < costs[2]
        assert 1.6 <= costs[1] / costs[0] <= 2.7
        assert 1.6 <= costs[2] / costs[1] <= 2.7


class TestModelVariants:
    def test_brownian_skips_gram_estimation(self):
        chain = discretize_brownian(1, 2, 9, 3.5)
        payoff = put_payoff(1.0)
        basis = hermite_basis(1, 1, 2, 20.0)
        with pytest.warns(UserWarning):
            run = run_quantum_lsm_brownian(chain, payoff, basis, 0.05, 0.2,
                                           seed=5, power=4.0)
        assert run.gram_mode == "identity"
        assert all("basis_product" not in name
                   for name in run.ledger.function_queries)
        np.testing.assert_array_equal(run.gram_matrices[1], np.eye(basis.size))
        assert run.lambda_required is not None
        assert run.payoff.truncation_level == pytest.approx(20.0 ** 0.5)

    def test_wide_cube_matches_estimated_gram_run(self):
        # With the cube containing every grid point and a clamp level above
        # the payoff bound, the identity-Gram shortcut and the generic
        # estimated-Gram run price the same instance; their estimates differ
        # by at most the two runs' combined estimation budgets.
        chain = discretize_brownian(1, 2, 9, 3.5)
        payoff = put_payoff(1.0)
        basis = hermite_basis(1, 1, 2, 50.0)
        eps, delta = 0.04, 0.2
        level = payoff.bound_for(chain) + 1.0
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fast = run_quantum_lsm_brownian(chain, payoff, basis, eps, delta,
                                            seed=20, power=4.0,
                                            truncation_level=level)
        generic = run_quantum_lsm(chain, payoff, basis, eps, delta, seed=21,
                                  sigma_min_oracle=True)
        budget = 8 * chain.horizon * eps * basis.size \
            * payoff.bound_for(chain) / generic.sigma_min_lower**2
        assert abs(fast.estimate - generic.estimate) <= 2 * budget

    def test_brownian_requires_hermite(self):
        chain = discretize_brownian(1, 2, 5, 2.0)
        with pytest.raises(ValueError, match="Hermite"):
            run_quantum_lsm_brownian(chain, put_payoff(1.0), constant_basis(2),
                                     0.05, 0.2)

    def test_gbm_uses_closed_form_and_svd(self):
        chain = discretize_gbm(1, 2, 17, 4.0)
        payoff = put_payoff(1.0)
        basis = gbm_basis(1, 1, 2, 1e6)
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            run = run_quantum_lsm_gbm(chain, payoff, basis, 0.05, 0.2, seed=6)
        assert run.gram_mode == "closed_form"
        expected = np.array([[1.0, 1.0], [1.0, math.e]])
        np.testing.assert_allclose(run.gram_matrices[1], expected)
        smin = np.linalg.svd(expected, compute_uv=False)[-1]
        assert run.sigma_min_lower == pytest.approx(smin)
        assert run.epsilon <= run.sigma_min_lower / 2

    def test_gbm_two_dimensional_run(self):
        # Multi-coordinate chain: product grids, Kronecker closed form and the
        # scaled-monomial basis must agree on index ordering end to end.
        from qlsm.chain import discretize_gbm
        from qlsm.payoff import PayoffSpec
        from qlsm.qsim import FixedPointFormat

        chain = discretize_gbm(2, 2, 7, 2.5)
        payoff = PayoffSpec(
            step_function=lambda t, pts: np.maximum(0.0, 1.0 - pts.mean(axis=1)),
            label="basket-put")
        table = snell_envelope(chain, payoff)
        basis = gbm_basis(2, 1, 2, 1e9)
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            run = run_quantum_lsm_gbm(chain, payoff, basis, 0.02, 0.2, seed=3,
                                      power=6.0, fmt=FixedPointFormat(20, 24))
        approx = max(exact_approximation_error(chain, payoff, basis, t)
                     for t in (1,))
        assert abs(run.estimate - table.value0) <= 0.05 + approx
        assert run.gram_matrices[1].shape == (4, 4)

    def test_gbm_requires_monomials(self):
        chain = discretize_gbm(1, 2, 9, 3.0)
        with pytest.raises(ValueError, match="monomial"):
            run_quantum_lsm_gbm(chain, put_payoff(1.0), constant_basis(2),
                                0.05, 0.2)


class TestSmoothnessSchedules:
    def test_generic_smooth_degree(self):
        sched = schedule_from_smoothness(1, 1, 0.1, "generic-smooth",
                                         smoothness=1, smooth_const=1.0)
        assert sched.degree == 100
        assert sched.basis_size == 101

    def test_two_step_degree(self):
        sched = schedule_from_smoothness(2, 1, 0.5, "generic-smooth",
                                         smoothness=1, smooth_const=1.0)
        assert sched.degree == 100  # ceil(2 * 25 / 0.5)

    def test_lipschitz_degree(self):
        sched = schedule_from_smoothness(1, 1, 1.0, "generic-lipschitz",
                                         lipschitz_const=1.0, cube_radius=1.0)
        assert sched.degree == 880

    def test_brownian_accuracy_formula(self):
        sched = schedule_from_smoothness(2, 1, 0.3, "brownian",
                                         smoothness=1, smooth_const=1.0,
                                         payoff_bound=1.0)
        expected = (1.0 / (3.0 * math.e**2)) * (0.3 / 75.0) ** 2
        assert sched.accuracy == pytest.approx(expected, rel=1e-12)

    def test_size_consistency_with_basis_module(self):
        sched = schedule_from_smoothness(1, 2, 0.4, "generic-smooth",
                                         smoothness=2, smooth_const=1.0)
        from qlsm.basis import hermite_multi_indices

        assert sched.basis_size == len(hermite_multi_indices(2, sched.degree))

    def test_inconsistent_smoothness(self):
        with pytest.raises(ValueError, match="inconsistent"):
            schedule_from_smoothness(1, 1, 0.9, "generic-smooth",
                                     smoothness=40, smooth_const=1.0)

    def test_gbm_schedule_runs(self):
        sched = schedule_from_smoothness(1, 1, 0.4, "gbm", smoothness=2,
                                         smooth_const=0.5, payoff_bound=1.0)
        assert sched.degree == 5
        assert sched.accuracy > 0.0
        assert sched.cube_radius > 1.0

    def test_gbm_schedule_underflow_safe(self):
        # The exponential factor drives the accuracy below float range; the
        # cube-radius requirement must still come out finite via log space.
        sched = schedule_from_smoothness(1, 1, 0.4, "gbm", smoothness=1,
                                         smooth_const=0.5, payoff_bound=1.0)
        assert sched.accuracy == 0.0
        assert np.isfinite(sched.cube_radius)
        assert sched.cube_radius > 10.0


class TestSerialization:
    def test_run_record_round_trip(self):
        import json

        chain = two_path_chain()
        payoff = table_payoff({1: np.array([0.1]), 2: np.array([0.9, 0.2])}, 0.0)
        run = run_quantum_lsm(chain, payoff, constant_basis(2), 0.05, 0.2,
                              sigma_min_lower=1.0, seed=7)
        doc = json.loads(run.to_json())
        assert doc["epsilon"] == 0.05
        assert doc["ledger"]["grover_applications"] == run.ledger.grover_applications
        assert "1" in doc["coefficients"]
