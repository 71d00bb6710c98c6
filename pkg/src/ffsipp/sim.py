"""Deterministic discrete-event simulator.

Drives arrivals, optimization rounds, action execution, BTU billing, and
penalty accounting for one (scenario, approach, seed) run. All randomness
flows from one seed through per-instance generators, so identical inputs
reproduce identical reports bit for bit.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import baseline as baseline_mod
from . import controller, landscape, milp, optimizer, worstcase
from .landscape import (
    DONE,
    RUNNING,
    ProcessInstance,
    Scenario,
    advance_loops,
    apply_xor_choice,
    make_instance,
    next_steps,
    pending_xor_choices,
)

ARRIVAL = 0
STEP_FINISHED = 1
LEASE_EXPIRY = 2
WAKEUP = 3

FFSIPP = "ffsipp"
SIPP = "sipp"


def sample_duration(service: landscape.ServiceType, rng: np.random.Generator) -> int:
    """Normal(mu, mu/10) service time in ms, truncated below at mu/10."""
    mu = service.duration_ms
    draw = rng.normal(mu, mu / 10.0)
    return int(round(max(mu / 10.0, draw)))


def sample_cpu(service: landscape.ServiceType, rng: np.random.Generator) -> float:
    mu = service.cpu_demand
    draw = rng.normal(mu, mu / 10.0)
    return max(mu / 10.0, draw)


def arrival_pyramid(n: int) -> int:
    """Batch size for minute ``n`` of the pyramid arrival pattern."""
    if 0 <= n <= 4:
        return 1
    if 5 <= n <= 17:
        return math.ceil((n + 1) / 4)
    if 18 <= n <= 19:
        return 0
    if 20 <= n <= 35:
        return 1
    if 36 <= n <= 51:
        return math.ceil((n - 9) / 20)
    return 0


def penalty_units(inst: ProcessInstance, finish_ms: int, policy: str = "fraction") -> int:
    """Billed penalty units for one finished instance."""
    delay = max(0, finish_ms - inst.deadline_ms)
    if delay == 0:
        return 0
    if policy == "per_10s":
        unit = 10_000
    else:
        unit = 0.1 * (inst.deadline_ms - inst.arrival_ms)
    return math.ceil(delay / unit)


def foresee_violations(state: optimizer.SchedulingState) -> set[int]:
    """Instances whose worst-case remainder no longer fits their deadline."""
    delta = worstcase.max_startup_ms(state.vm_types)
    out = set()
    for inst in state.instances:
        ex_run = max(
            (
                rem
                for vm in state.fleet
                for iid, j, rem in vm.running_steps
                if iid == inst.id
            ),
            default=0,
        )
        e_i = worstcase.remaining_duration(inst, state.services, delta).e_i_ms
        if state.now_ms + ex_run + e_i > inst.deadline_ms:
            out.add(inst.id)
    return out


@dataclass
class Container:
    service: str
    cpu_size: float
    ram_size: float
    invocations: set = field(default_factory=set)  # (instance id, step index)


@dataclass
class VmRuntime:
    id: str
    type_id: str
    leased_at_ms: int
    lease_end_ms: int
    ready_at_ms: int
    cached_images: set = field(default_factory=set)
    containers: dict = field(default_factory=dict)  # service -> Container
    offered_service: str | None = None
    btus_billed: int = 0


@dataclass
class InstanceRecord:
    instance_id: int
    model_id: int
    arrival_ms: int
    deadline_ms: int
    finish_ms: int
    delay_ms: int
    penalty_units: int


@dataclass
class MetricsReport:
    approach: str
    seed: int
    sla_adherence_pct: float
    makespan_min: float
    leasing_cost: float
    penalty_cost: float
    total_cost: float
    records: list[InstanceRecord]
    usage_series: list[tuple[int, int, int]]  # (minute, leased cores, requests)
    audit_log: list[str]
    rounds: int
    fallbacks: int
    verified_plans: int


class Simulator:
    def __init__(self, scenario: Scenario, approach: str, seed: int, dump_lp_dir=None):
        if approach not in (FFSIPP, SIPP):
            raise ValueError(f"unknown approach {approach!r}")
        self.sc = scenario
        self.approach = approach
        self.seed = seed
        self.dump_lp_dir = dump_lp_dir
        self._seedseq = np.random.SeedSequence(seed)
        self._shuffle_rng = np.random.default_rng(self._seedseq.spawn(1)[0])
        self.clock = 0
        self.instances: dict[int, ProcessInstance] = {}
        self._inst_rng: dict[int, np.random.Generator] = {}
        self.vms: dict[str, VmRuntime] = {}
        self._vm_counter = 0
        self._heap: list[tuple[int, int, int, tuple]] = []
        self._event_seq = 0
        self.leasing_cost = 0.0
        self.records: list[InstanceRecord] = []
        self.audit: list[str] = []
        self.usage_changes: list[tuple[int, int, int]] = [(0, 0, 0)]
        self.rounds = 0
        self.fallbacks = 0
        self.verified_plans = 0
        self._wakeup_at: int | None = None
        self._last_finish_ms = 0
        self.config = optimizer.OptimizerConfig.from_scenario(scenario)

    # -- setup -------------------------------------------------------------

    def _push(self, time_ms: int, kind: int, payload: tuple = ()):
        heapq.heappush(self._heap, (time_ms, kind, self._event_seq, payload))
        self._event_seq += 1

    def _schedule_arrivals(self):
        arr = self.sc.arrival
        model_ids = [m.id for m in self.sc.models]
        if arr.kind == "constant":
            groups = arr.batch_models or (tuple(model_ids),)
            issued = 0
            batch = 0
            while issued < arr.total_requests:
                group = groups[batch % len(groups)]
                take = list(group)[: arr.total_requests - issued]
                self._push(batch * arr.interval_ms, ARRIVAL, (tuple(take),))
                issued += len(take)
                batch += 1
        else:
            counts = [arrival_pyramid(n) for n in range(52)]
            pad = arr.total_requests - sum(counts)
            if pad > 0:
                counts[0] += pad
            sequence = [model_ids[i % len(model_ids)] for i in range(sum(counts))]
            self._shuffle_rng.shuffle(sequence)
            issued = 0
            for n, count in enumerate(counts):
                take = min(count, arr.total_requests - issued)
                if take <= 0:
                    continue
                batch = tuple(sequence[issued : issued + take])
                self._push(n * arr.interval_ms, ARRIVAL, (batch,))
                issued += take

    def _planning_rate_per_ms(self, window_ms: int) -> float:
        sla = self.sc.sla
        if sla.planning_rate_per_s is not None:
            return sla.planning_rate_per_s / 1000.0
        if sla.penalty_policy == "per_10s":
            return 1.0 / 10_000.0
        return 1.0 / (0.1 * window_ms)

    def _create_instance(self, model_id: int):
        model = self.sc.model_by_id(model_id)
        iid = len(self.instances) + 1
        rng = np.random.default_rng(self._seedseq.spawn(1)[0])
        durations = []
        cpus = []
        for node in model.step_nodes:
            svc = self.sc.services[node.service]
            durations.append(sample_duration(svc, rng))
            cpus.append(sample_cpu(svc, rng))
        loop_iters = {}
        for node_id, _, reps in landscape.enumerate_paths(model).loops:
            loop_iters[node_id] = int(rng.integers(1, reps + 1))
        # The SLA window scales the model's average makespan as enacted on
        # cloud infrastructure: service times plus expected per-step
        # deployment overheads and one VM startup on the critical path.
        base_ms = landscape.ms(
            landscape.average_makespan(model, self.sc.services)
        ) + landscape.critical_path_overhead_ms(
            model, self.sc.services, worstcase.max_startup_ms(self.sc.vm_types)
        )
        window = int(round(self.sc.sla.factor * base_ms))
        inst = make_instance(
            model,
            self.sc.services,
            iid,
            arrival_ms=self.clock,
            deadline_ms=self.clock + window,
            penalty_rate=self._planning_rate_per_ms(window),
            step_cpu=cpus,
            step_durations_ms=durations,
            loop_iterations=loop_iters,
        )
        self.instances[iid] = inst
        self._inst_rng[iid] = rng
        self._resolve_choices(inst)

    def _resolve_choices(self, inst: ProcessInstance):
        """Pick branches for any XOR block that has just become enabled."""
        rng = self._inst_rng[inst.id]
        pending = pending_xor_choices(inst)
        while pending:
            for node_id in pending:
                node = landscape._find_node(inst.model.root, node_id)
                apply_xor_choice(inst, node_id, int(rng.integers(len(node.children))))
            pending = pending_xor_choices(inst)

    # -- main loop ----------------------------------------------------------

    def run(self) -> MetricsReport:
        self._schedule_arrivals()
        while self._heap:
            t = self._heap[0][0]
            round_needed = False
            while self._heap and self._heap[0][0] == t:
                _, kind, _, payload = heapq.heappop(self._heap)
                self.clock = t
                if kind == ARRIVAL:
                    for model_id in payload[0]:
                        self._create_instance(model_id)
                    round_needed = True
                elif kind == STEP_FINISHED:
                    self._finish_step(*payload)
                    round_needed = True
                elif kind == LEASE_EXPIRY:
                    self._expire_lease(payload[0])
                elif kind == WAKEUP:
                    if self._wakeup_at == t:
                        round_needed = True
            self.clock = t
            # A round can only act when some ready step is not yet running;
            # lease/container cleanup happens lazily at the next such round.
            # Deadline risk between rounds is covered by the armed wake-up.
            if round_needed and self._has_schedulable():
                self._round()
            self._assert_capacity()
            self._record_usage()
        return self._report()

    def _live_instances(self) -> list[ProcessInstance]:
        return [i for i in self.instances.values() if i.finished_ms is None]

    def _has_schedulable(self) -> bool:
        return any(
            inst.steps[j].status != RUNNING
            for inst in self._live_instances()
            for j in next_steps(inst)
        )

    # -- events ------------------------------------------------------------

    def _finish_step(self, iid: int, j: int, vm_id: str):
        inst = self.instances[iid]
        step = inst.steps[j]
        assert step.status == RUNNING and step.assigned_vm == vm_id
        step.status = DONE
        step.runs += 1
        step.remaining_ms = None
        vm = self.vms[vm_id]
        cont = vm.containers[step.service]
        cont.invocations.discard((iid, j))
        cont.cpu_size = max(0.0, cont.cpu_size - step.cpu_demand)
        cont.ram_size = max(0.0, cont.ram_size - step.ram_demand)

        rng = self._inst_rng[iid]
        for _, reset in advance_loops(inst):
            for idx in reset:
                svc = self.sc.services[inst.steps[idx].service]
                inst.steps[idx].expected_ms = sample_duration(svc, rng)
                inst.steps[idx].cpu_demand = sample_cpu(svc, rng)
        self._resolve_choices(inst)

        if inst.done:
            inst.finished_ms = self.clock
            self._last_finish_ms = max(self._last_finish_ms, self.clock)
            units = penalty_units(inst, self.clock, self.sc.sla.penalty_policy)
            self.records.append(
                InstanceRecord(
                    instance_id=iid,
                    model_id=inst.model.id,
                    arrival_ms=inst.arrival_ms,
                    deadline_ms=inst.deadline_ms,
                    finish_ms=self.clock,
                    delay_ms=max(0, self.clock - inst.deadline_ms),
                    penalty_units=units,
                )
            )

    def _expire_lease(self, vm_id: str):
        vm = self.vms.get(vm_id)
        if vm is None or vm.lease_end_ms != self.clock:
            return  # stale: extended or already gone
        busy = [c for c in vm.containers.values() if c.invocations]
        assert not busy, f"lease of {vm_id} expired with running invocations"
        del self.vms[vm_id]

    # -- optimization round --------------------------------------------------

    def _snapshot(self) -> optimizer.SchedulingState:
        fleet = []
        for vm in self.vms.values():
            running = []
            for cont in vm.containers.values():
                for iid, j in sorted(cont.invocations):
                    running.append((iid, j, self._finish_time(iid, j) - self.clock))
            fleet.append(
                optimizer.VmSnapshot(
                    id=vm.id,
                    type_id=vm.type_id,
                    ready_in_ms=max(0, vm.ready_at_ms - self.clock),
                    lease_remaining_ms=max(0, vm.lease_end_ms - self.clock),
                    cached_images=frozenset(vm.cached_images),
                    offered_service=vm.offered_service,
                    running_steps=sorted(running),
                )
            )
        fleet.sort(key=lambda s: s.id)
        return optimizer.SchedulingState(
            now_ms=self.clock,
            instances=self._live_instances(),
            fleet=fleet,
            services=self.sc.services,
            vm_types=self.sc.vm_types,
        )

    def _finish_time(self, iid: int, j: int) -> int:
        return self.instances[iid].steps[j].scheduled_at + self.instances[iid].steps[j].remaining_ms

    def _round(self):
        self.rounds += 1
        state = self._snapshot()
        if self.approach == FFSIPP:
            model = optimizer.build(state, self.config)
        else:
            model = baseline_mod.build_baseline(state, self.config)
        if self.dump_lp_dir is not None:
            import pathlib

            path = pathlib.Path(self.dump_lp_dir)
            path.mkdir(parents=True, exist_ok=True)
            name = f"{self.approach}_seed{self.seed}_round{self.rounds:04d}.lp"
            (path / name).write_text(milp.export_lp(model.problem))
        solution = milp.solve(
            model.problem, gap_tol=self.config.gap_tol, time_limit_ms=self.config.time_limit_ms
        )
        if solution.values is None:
            # No incumbent within the limit: postpone everything, lease nothing.
            self.fallbacks += 1
            self.audit.append(f"{self.clock}\tfallback_postpone\t-\t")
            self._schedule_wakeup(self.clock + self.config.epsilon_ms)
            return
        plan = model.decode(solution)
        violations = milp.verify(model.problem, plan.milp_values)
        assert not violations, f"decoded plan violates its model: {violations[:3]}"
        self.verified_plans += 1
        cplan = controller.transform(plan)
        self._check_transform(cplan)
        cloud = {
            vm.id: controller.CloudVmView(
                cpu_supply=self.sc.vm_types[vm.type_id].cpu_supply,
                ram_supply=self.sc.vm_types[vm.type_id].ram_supply,
                containers={
                    svc: (c.cpu_size, c.ram_size) for svc, c in vm.containers.items()
                },
            )
            for vm in self.vms.values()
        }
        actions = controller.plan_actions(cplan, cloud)
        self._apply_actions(actions, plan)
        # A wakeup is only useful while some ready step stays unscheduled;
        # otherwise the next arrival/step-finished event triggers the round.
        assigned = {(a.instance_id, a.step_index) for a in plan.assignments}
        leftover = any(
            (inst.id, j) not in assigned
            for inst in self._live_instances()
            for j in next_steps(inst)
            if inst.steps[j].status != RUNNING
        )
        if leftover:
            self._schedule_wakeup(optimizer.next_wakeup(plan, state, self.config))
        else:
            self._wakeup_at = None

    def _check_transform(self, cplan: controller.ContainerPlan):
        per_vm: dict[str, float] = {}
        seen = set()
        for c in cplan.containers:
            key = (c.vm_id, c.service)
            assert key not in seen, f"duplicate container {key}"
            seen.add(key)
            per_vm[c.vm_id] = per_vm.get(c.vm_id, 0.0) + c.cpu_size
        for vm_id, used in per_vm.items():
            type_id = (
                self.vms[vm_id].type_id
                if vm_id in self.vms
                else optimizer.fresh_vm_type(vm_id)
            )
            supply = self.sc.vm_types[type_id].cpu_supply
            assert used <= supply + 1e-6, f"{vm_id} over capacity: {used} > {supply}"

    def _schedule_wakeup(self, at_ms: int):
        if not self._live_instances():
            self._wakeup_at = None
            return
        self._wakeup_at = at_ms
        self._push(at_ms, WAKEUP)

    def _apply_actions(self, actions: list[controller.Action], plan: optimizer.SchedulingPlan):
        vm_ids: dict[str, str] = {}  # fresh candidate id -> concrete id

        def resolve(vm_id: str) -> str:
            return vm_ids.get(vm_id, vm_id)

        for act in actions:
            self.audit.append(act.audit_line(self.clock))
            if act.kind == controller.LEASE_VM:
                vt = self.sc.vm_types[optimizer.fresh_vm_type(act.vm_id)]
                self._vm_counter += 1
                vid = f"vm{self._vm_counter}"
                vm_ids[act.vm_id] = vid
                btus = act.params["btus"]
                self.vms[vid] = VmRuntime(
                    id=vid,
                    type_id=vt.id,
                    leased_at_ms=self.clock,
                    lease_end_ms=self.clock + btus * vt.btu_ms,
                    ready_at_ms=self.clock + vt.startup_ms,
                    btus_billed=btus,
                )
                self.leasing_cost += btus * vt.cost_per_btu
                self._push(self.vms[vid].lease_end_ms, LEASE_EXPIRY, (vid,))
            elif act.kind == controller.EXTEND_LEASE:
                vm = self.vms[act.vm_id]
                vt = self.sc.vm_types[vm.type_id]
                btus = act.params["btus"]
                vm.lease_end_ms += btus * vt.btu_ms
                vm.btus_billed += btus
                self.leasing_cost += btus * vt.cost_per_btu
                self._push(vm.lease_end_ms, LEASE_EXPIRY, (vm.id,))
            elif act.kind in (controller.DEPLOY_CONTAINER, controller.RESIZE_CONTAINER):
                vm = self.vms[resolve(act.vm_id)]
                cont = vm.containers.get(act.service)
                if cont is None:
                    cont = Container(act.service, 0.0, 0.0)
                    vm.containers[act.service] = cont
                cont.cpu_size = act.params["cpu"]
                cont.ram_size = act.params["ram"]
                vm.cached_images.add(act.service)
                vm.offered_service = act.service
            elif act.kind == controller.STOP_CONTAINER:
                vm = self.vms[resolve(act.vm_id)]
                cont = vm.containers.pop(act.service, None)
                assert cont is None or not cont.invocations, "stopped a busy container"
            elif act.kind == controller.INVOKE_SERVICE:
                iid, j = act.params["instance"], act.params["step"]
                vm = self.vms[resolve(act.vm_id)]
                assignment = plan.assignment_for(iid, j)
                step = self.instances[iid].steps[j]
                step.status = RUNNING
                step.assigned_vm = vm.id
                step.scheduled_at = self.clock
                step.remaining_ms = assignment.occupancy_ms
                vm.containers[act.service].invocations.add((iid, j))
                self._push(self.clock + assignment.occupancy_ms, STEP_FINISHED, (iid, j, vm.id))

    # -- bookkeeping ---------------------------------------------------------

    def _assert_capacity(self):
        for vm in self.vms.values():
            vt = self.sc.vm_types[vm.type_id]
            used = sum(c.cpu_size for c in vm.containers.values())
            assert used <= vt.cpu_supply + 1e-6, f"{vm.id} over CPU capacity"
            used_r = sum(c.ram_size for c in vm.containers.values())
            assert used_r <= vt.ram_supply + 1e-6, f"{vm.id} over RAM capacity"

    def _record_usage(self):
        cores = sum(
            int(round(self.sc.vm_types[vm.type_id].cpu_supply / 100.0))
            for vm in self.vms.values()
        )
        requests = len(self._live_instances())
        last = self.usage_changes[-1]
        if (cores, requests) != last[1:]:
            self.usage_changes.append((self.clock, cores, requests))

    def _report(self) -> MetricsReport:
        total = len(self.records)
        met = sum(1 for r in self.records if r.delay_ms == 0)
        adherence = 100.0 * met / total if total else 100.0
        penalty = float(sum(r.penalty_units for r in self.records))
        makespan_ms = self._last_finish_ms
        series = []
        minutes = math.ceil(makespan_ms / 60000) if makespan_ms else 0
        idx = 0
        current = (0, 0)
        for minute in range(minutes + 1):
            t = minute * 60000
            while idx < len(self.usage_changes) and self.usage_changes[idx][0] <= t:
                current = self.usage_changes[idx][1:]
                idx += 1
            series.append((minute, current[0], current[1]))
        return MetricsReport(
            approach=self.approach,
            seed=self.seed,
            sla_adherence_pct=adherence,
            makespan_min=makespan_ms / 60000.0,
            leasing_cost=self.leasing_cost,
            penalty_cost=penalty,
            total_cost=self.leasing_cost + penalty,
            records=self.records,
            usage_series=series,
            audit_log=self.audit,
            rounds=self.rounds,
            fallbacks=self.fallbacks,
            verified_plans=self.verified_plans,
        )


def run(scenario: Scenario, approach: str, seed: int, dump_lp_dir=None) -> MetricsReport:
    """Simulate one seeded run end to end."""
    return Simulator(scenario, approach, seed, dump_lp_dir=dump_lp_dir).run()
