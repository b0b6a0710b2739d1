import numpy as np
import pytest

from qlsm.chain import MarkovChainSpec
from qlsm.errors import Overflow
from qlsm.payoff import put_payoff
from qlsm.qsim import (ControlledRotation, FixedPointFormat, QueryLedger,
                       function_oracle, grid_function_oracle, sampling_oracle)


def uniform_chain():
    return MarkovChainSpec(
        dimension=1, horizon=2, initial_state=[0.0],
        grids=(np.array([[0.0], [1.0]]), np.array([[0.0], [1.0]])),
        initial_distribution=[0.5, 0.5],
        transitions=(np.full((2, 2), 0.5),))


def single_chain():
    return MarkovChainSpec(
        dimension=1, horizon=1, initial_state=[0.0],
        grids=(np.array([[2.0]]),), initial_distribution=[1.0], transitions=())


class TestSamplingOracle:
    def test_single_path_amplitude_one(self):
        state = sampling_oracle(single_chain()).prepare()
        np.testing.assert_allclose(state.amplitudes, [1.0])

    def test_uniform_amplitudes(self):
        state = sampling_oracle(uniform_chain()).prepare()
        np.testing.assert_allclose(np.abs(state.amplitudes), 0.5)
        state.check_normalized()

    def test_prepare_bills_one_application(self):
        ledger = QueryLedger()
        sampling_oracle(uniform_chain()).prepare(ledger)
        assert ledger.state_preparations == 1

    def test_measurement_matches_classical_sampling(self):
        oracle = sampling_oracle(uniform_chain())
        rng = np.random.Generator(np.random.Philox(0))
        draws = oracle.measure(10_000, rng)
        freq = np.bincount(draws, minlength=4) / 10_000
        tv = 0.5 * np.abs(freq - oracle.ensemble.probabilities).sum()
        assert tv <= 0.02


class TestFunctionOracle:
    def test_write_then_clear(self):
        oracle_chain = sampling_oracle(uniform_chain())
        fmt = FixedPointFormat()
        values = np.array([0.25, 1.5, -0.75, 0.0])
        orc = function_oracle("h", values, fmt)
        state = oracle_chain.prepare()
        orc.apply(state, "reg")
        np.testing.assert_array_equal(state.register_values("reg"), values)
        orc.apply(state, "reg")
        assert not state.has_register("reg")

    def test_matches_payoff_module_bit_exact(self):
        chain = uniform_chain()
        oracle_chain = sampling_oracle(chain)
        pay = put_payoff(1.0)
        fmt = FixedPointFormat()
        orc = grid_function_oracle("z", chain, oracle_chain.ensemble, 2,
                                   pay.values(chain, 2), fmt, kind="payoff")
        state = oracle_chain.prepare()
        orc.apply(state, "z2")
        expected = fmt.quantize(pay.values(chain, 2)[oracle_chain.ensemble.state_indices_at(2)])
        np.testing.assert_array_equal(state.register_values("z2"), expected)

    def test_overflow_lists_points(self):
        with pytest.raises(Overflow, match="offending"):
            function_oracle("big", np.array([1.0, 5.0e6]), FixedPointFormat(8, 8))

    def test_query_billing(self):
        ledger = QueryLedger()
        orc = function_oracle("h", np.zeros(4), FixedPointFormat(), kind="payoff")
        state = sampling_oracle(uniform_chain()).prepare()
        orc.apply(state, "reg", ledger)
        assert ledger.function_queries["h"] == 1
        assert ledger.queries_of_kind("payoff") == 1

    def test_composite_billing_keeps_kinds_separate(self):
        from qlsm.qsim.oracles import FunctionOracle

        ledger = QueryLedger()
        orc = FunctionOracle(name="circuit", fmt=FixedPointFormat(),
                             raw_values=np.zeros(4),
                             query_cost={"payoff": 3, "basis": 5})
        orc.bill(ledger, applications=2)
        assert ledger.queries_of_kind("payoff") == 6
        assert ledger.queries_of_kind("basis") == 10


class TestControlledRotation:
    def make(self, values, low, high):
        chain = sampling_oracle(uniform_chain())
        orc = function_oracle("h", np.asarray(values, dtype=float), FixedPointFormat())
        return chain, ControlledRotation(oracle=orc, low=low, high=high)

    def test_full_rotation_at_upper_endpoint(self):
        chain, rot = self.make([2.0, 2.0, 2.0, 2.0], 0.0, 2.0)
        state = chain.prepare()
        rot.apply(state)
        np.testing.assert_allclose(state.rotation[:, 1], 1.0)
        assert state.good_probability() == pytest.approx(1.0)

    def test_zero_value_inside_interval(self):
        chain, rot = self.make([0.0, 1.0, 0.0, 1.0], 0.0, 1.0)
        state = chain.prepare()
        rot.apply(state)
        np.testing.assert_allclose(state.rotation[0], [1.0, 0.0])
        assert state.good_probability() == pytest.approx(0.5)

    def test_outside_interval_untouched(self):
        chain, rot = self.make([3.0, 0.5, 3.0, 0.5], 0.0, 1.0)
        state = chain.prepare()
        rot.apply(state)
        np.testing.assert_allclose(state.rotation[0], [1.0, 0.0])
        np.testing.assert_allclose(state.rotation[1], [np.sqrt(0.5), np.sqrt(0.5)])

    def test_invalid_interval(self):
        with pytest.raises(ValueError):
            self.make([0.0] * 4, 1.0, 1.0)
        with pytest.raises(ValueError):
            self.make([0.0] * 4, -1.0, 2.0)

    def test_norm_preserved(self):
        chain, rot = self.make([0.3, 0.9, 0.1, 0.7], 0.0, 1.0)
        state = chain.prepare()
        rot.apply(state)
        state.check_normalized()

    def test_billing_embeds_two_queries(self):
        chain, rot = self.make([0.5] * 4, 0.0, 1.0)
        ledger = QueryLedger()
        state = chain.prepare(ledger)
        rot.apply(state, ledger)
        assert ledger.rotations == 1
        assert ledger.function_queries["h"] == 2

    def test_exact_amplitude_matches_state(self):
        chain, rot = self.make([0.3, 0.9, 0.1, 0.7], 0.0, 1.0)
        state = chain.prepare()
        rot.apply(state)
        assert rot.good_amplitude_squared(chain.ensemble.probabilities) == \
            pytest.approx(state.good_probability(), abs=1e-12)


class TestLedger:
    def test_merge_and_totals(self):
        a, b = QueryLedger(), QueryLedger()
        a.add_state_preparations(2)
        a.add_function_queries("z", "payoff", 3)
        b.add_function_queries("z", "payoff", 1)
        b.add_function_queries("e", "basis", 4)
        b.add_grover(5)
        a.merge(b)
        assert a.state_preparations == 2
        assert a.function_queries["z"] == 4
        assert a.grover_applications == 5
        # horizon 3: each preparation costs 3 sampling units
        assert a.total_units(3) == 2 * 3 + 4 + 4

    def test_counts_only_grow(self):
        ledger = QueryLedger()
        with pytest.raises(ValueError):
            ledger.add_state_preparations(-1)
