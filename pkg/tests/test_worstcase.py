from ffsipp import worstcase
from ffsipp.landscape import DONE, RUNNING

from .conftest import instance, vm_type

DELTA = 60_000


class TestStepCoefficients:
    def test_two_a_steps(self, abc_services):
        inst = instance("s,s", abc_services, ["A", "A"])
        assert worstcase.overhead_sum_ms(inst.steps, abc_services, DELTA) == 264_000

    def test_one_c_step(self, abc_services):
        inst = instance("s", abc_services, ["C"])
        assert worstcase.step_coefficient_ms(inst.steps[0], abc_services, DELTA) == 212_000

    def test_max_startup(self, abc_services):
        types = {"p1": vm_type("p1", startup_s=60), "a2": vm_type("a2", startup_s=45)}
        assert worstcase.max_startup_ms(types) == 60_000
        assert worstcase.max_startup_ms({}) == 0

    def test_sampled_duration_overrides_mean(self, abc_services):
        inst = instance("s", abc_services, ["A"])
        inst.steps[0].expected_ms = 50_000
        assert worstcase.step_coefficient_ms(inst.steps[0], abc_services, DELTA) == 142_000


class TestInvocationOverhead:
    def test_worst_case_fresh(self, abc_services):
        assert (
            worstcase.invocation_overhead(
                abc_services["A"],
                image_cached=False,
                vm_running=False,
                vm_startup_ms=60_000,
                delta_ms=DELTA,
                worst_case=True,
            )
            == 132_000
        )

    def test_cached_running(self, abc_services):
        assert (
            worstcase.invocation_overhead(
                abc_services["A"],
                image_cached=True,
                vm_running=True,
                vm_startup_ms=60_000,
                delta_ms=DELTA,
            )
            == 40_000
        )

    def test_running_not_cached(self, abc_services):
        assert (
            worstcase.invocation_overhead(
                abc_services["A"],
                image_cached=False,
                vm_running=True,
                vm_startup_ms=60_000,
                delta_ms=DELTA,
            )
            == 72_000
        )


class TestRemainingDuration:
    def test_sequence_unscheduled(self, abc_services):
        inst = instance("s,s", abc_services, ["A", "A"])
        assert worstcase.remaining_duration(inst, abc_services, DELTA).e_i_ms == 264_000

    def test_scheduled_subtraction(self, abc_services):
        inst = instance("s,s", abc_services, ["A", "A"])
        rep = worstcase.remaining_duration(inst, abc_services, DELTA, {0: 132_000})
        assert rep.e_i_ms == 132_000

    def test_and_block_max(self, abc_services):
        inst = instance("AND(s|s)", abc_services, ["A", "C"])
        rep = worstcase.remaining_duration(inst, abc_services, DELTA)
        assert rep.e_la_ms == 212_000
        assert rep.e_i_ms == 212_000

    def test_running_steps_excluded(self, abc_services):
        inst = instance("s,s", abc_services, ["A", "A"])
        inst.steps[0].status = RUNNING
        assert worstcase.remaining_duration(inst, abc_services, DELTA).e_i_ms == 132_000

    def test_loop_counts_future_iterations(self, abc_services):
        inst = instance("LOOP*3(s)", abc_services, ["A"])
        assert worstcase.remaining_duration(inst, abc_services, DELTA).e_rl_ms == 396_000
        loop_id = next(iter(inst.loop_iters_done))
        inst.loop_iters_done[loop_id] = 2
        assert worstcase.remaining_duration(inst, abc_services, DELTA).e_rl_ms == 132_000

    def test_remaining_after_done(self, abc_services):
        inst = instance("s,s", abc_services, ["A", "C"])
        assert worstcase.remaining_after_done(inst, 0, abc_services, DELTA) == 212_000
        assert inst.steps[0].status != DONE  # restored


class TestRemainingStructure:
    def test_sequence_reductions(self, abc_services):
        inst = instance("s,s", abc_services, ["A", "A"])
        rs = worstcase.remaining_structure(inst, abc_services, DELTA, {0})
        assert rs.constant_ms == 264_000
        assert rs.step_reduction_ms == {0: 132_000}
        assert rs.blocks == []

    def test_block_without_heads_is_constant(self, abc_services):
        inst = instance("s,AND(s|s)", abc_services, ["A", "A", "C"])
        rs = worstcase.remaining_structure(inst, abc_services, DELTA, {0})
        assert rs.constant_ms == 132_000 + 212_000
        assert rs.blocks == []

    def test_block_with_heads_gets_rows(self, abc_services):
        inst = instance("AND(s|s)", abc_services, ["A", "C"])
        inst.steps[0].status = "next"
        inst.steps[1].status = "next"
        rs = worstcase.remaining_structure(inst, abc_services, DELTA, {0, 1})
        assert rs.constant_ms == 0
        (block,) = rs.blocks
        assert block.rows == [(132_000, {0: 132_000}), (212_000, {1: 212_000})]
