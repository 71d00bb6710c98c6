import numpy as np
import pytest

from ffsipp import sim
from ffsipp.sim import (
    Simulator,
    arrival_pyramid,
    foresee_violations,
    penalty_units,
    sample_cpu,
    sample_duration,
)

from .conftest import instance, service, vm_type


class TestArrivalPyramid:
    def test_spot_values(self):
        assert arrival_pyramid(0) == 1
        assert arrival_pyramid(8) == 3
        assert arrival_pyramid(18) == 0
        assert arrival_pyramid(20) == 1
        assert arrival_pyramid(51) == 3

    def test_sum_is_99(self):
        assert sum(arrival_pyramid(n) for n in range(52)) == 99

    def test_zero_outside_range(self):
        assert arrival_pyramid(52) == 0


class TestSampling:
    def test_duration_truncated_below(self):
        svc = service("A", duration_s=40)
        rng = np.random.default_rng(0)
        draws = [sample_duration(svc, rng) for _ in range(500)]
        assert min(draws) >= 4000
        assert abs(np.mean(draws) - 40_000) < 2000

    def test_cpu_truncated_below(self):
        svc = service("A", cpu=45.0)
        rng = np.random.default_rng(0)
        draws = [sample_cpu(svc, rng) for _ in range(500)]
        assert min(draws) >= 4.5


class TestPenaltyUnits:
    def window_instance(self, abc_services):
        return instance("s", abc_services, ["A"], deadline_ms=360_000)

    def test_on_time_is_free(self, abc_services):
        inst = self.window_instance(abc_services)
        assert penalty_units(inst, 360_000) == 0

    def test_fraction_policy(self, abc_services):
        inst = self.window_instance(abc_services)
        assert penalty_units(inst, 396_000) == 1
        assert penalty_units(inst, 397_000) == 2

    def test_per_10s_policy(self, abc_services):
        inst = self.window_instance(abc_services)
        assert penalty_units(inst, 370_000, policy="per_10s") == 1
        assert penalty_units(inst, 380_001, policy="per_10s") == 3


class TestForesee:
    def test_flags_unreachable_deadline(self, abc_services):
        from ffsipp.optimizer import SchedulingState

        tight = instance("s", abc_services, ["C"], deadline_ms=100_000, iid=1)
        slack = instance("s", abc_services, ["A"], deadline_ms=900_000, iid=2)
        st = SchedulingState(
            now_ms=0,
            instances=[tight, slack],
            fleet=[],
            services=abc_services,
            vm_types={"p1": vm_type("p1")},
        )
        assert foresee_violations(st) == {1}


class TestEndToEnd:
    def test_smoke_run_completes_all_instances(self, smoke_scenario):
        rep = sim.run(smoke_scenario, "ffsipp", 1)
        assert len(rep.records) == smoke_scenario.arrival.total_requests
        assert rep.verified_plans == rep.rounds - rep.fallbacks
        assert rep.total_cost == rep.leasing_cost + rep.penalty_cost
        assert rep.makespan_min > 0

    def test_usage_series_shape(self, smoke_scenario):
        rep = sim.run(smoke_scenario, "ffsipp", 1)
        minutes = [m for m, _, _ in rep.usage_series]
        assert minutes == list(range(len(minutes)))
        assert all(cores >= 0 for _, cores, _ in rep.usage_series)

    def test_baseline_smoke_run(self, smoke_scenario):
        rep = sim.run(smoke_scenario, "sipp", 1)
        assert len(rep.records) == smoke_scenario.arrival.total_requests
        assert rep.verified_plans == rep.rounds - rep.fallbacks

    def test_deterministic_reruns(self, smoke_scenario):
        a = sim.run(smoke_scenario, "ffsipp", 3)
        b = sim.run(smoke_scenario, "ffsipp", 3)
        assert a.audit_log == b.audit_log
        assert [(r.instance_id, r.finish_ms) for r in a.records] == [
            (r.instance_id, r.finish_ms) for r in b.records
        ]
        assert a.total_cost == b.total_cost

    def test_seeds_differ(self, smoke_scenario):
        a = sim.run(smoke_scenario, "ffsipp", 1)
        b = sim.run(smoke_scenario, "ffsipp", 2)
        assert a.audit_log != b.audit_log

    def test_unknown_approach_rejected(self, smoke_scenario):
        with pytest.raises(ValueError):
            Simulator(smoke_scenario, "greedy", 1)


class TestSingleStepBilling:
    def test_one_btu_of_cheapest_vm(self, abc_services):
        import textwrap

        from ffsipp.landscape import parse_scenario

        text = textwrap.dedent(
            """
            btu_seconds: 300
            epsilon_ms: 30000
            services:
              - {name: A, cpu: 45, ram: 0, duration_s: 40, pull_s: 30, start_s: 2}
            vm_types:
              - {name: p1, provider: private, cores: 1, cost_per_btu: 10, startup_s: 60, pool_limit: 2}
              - {name: a2, provider: public, cores: 2, cost_per_btu: 25, startup_s: 60}
            models:
              - {id: 1, structure: "s"}
            arrival: {kind: constant, interval_s: 60, total_requests: 1}
            sla: {factor: 2.5, penalty_policy: fraction, planning_rate_per_s: 100}
            weights: {dl: 0.001, d: 0.0001, f_cpu: 0.01, f_ram: 0, z: 1}
            solver: {gap: 0.0001, time_limit_ms: 10000, fresh_candidates: 1, btu_max: 10, mn: 1000000}
            """
        )
        rep = sim.run(parse_scenario(text), "ffsipp", 1)
        assert rep.leasing_cost == 10.0
        assert rep.penalty_cost == 0.0
        assert len(rep.records) == 1 and rep.records[0].delay_ms == 0
