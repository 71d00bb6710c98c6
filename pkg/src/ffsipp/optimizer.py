"""Scheduling MILP: build a model from a landscape snapshot, decode the
solution into a plan, and compute the next optimization wake-up.

Steps are placed directly on (candidate) VM instances; containers are
introduced afterwards by the controller transformation. The baseline
variant (one service type per VM) reuses this builder via its ``baseline``
flag, adding per-VM type-exclusivity variables.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

from . import milp, worstcase
from .landscape import (
    ProcessInstance,
    RUNNING,
    Scenario,
    ServiceType,
    VmType,
    Weights,
    next_steps,
    step_deadline,
)


class ModelError(ValueError):
    """A snapshot that cannot be turned into a solvable model."""


@dataclass
class VmSnapshot:
    """One candidate VM: a live lease or an anonymous fresh instance."""

    id: str
    type_id: str
    ready_in_ms: int  # 0 when running, boot remainder otherwise
    lease_remaining_ms: int  # d
    cached_images: frozenset[str] = frozenset()
    fresh: bool = False
    offered_service: str | None = None  # baseline: currently deployed type
    running_steps: list[tuple[int, int, int]] = field(default_factory=list)
    # (instance id, step index, remaining ms)

    @property
    def leased(self) -> bool:
        return not self.fresh


@dataclass
class SchedulingState:
    now_ms: int
    instances: list[ProcessInstance]
    fleet: list[VmSnapshot]
    services: dict[str, ServiceType]
    vm_types: dict[str, VmType]


@dataclass
class OptimizerConfig:
    weights: Weights
    epsilon_ms: int = 2000
    btu_max: int = 1000
    mn: float = 1_000_000
    fresh_candidates: int = 3
    gap_tol: float = 1e-6
    time_limit_ms: int = 20000

    @classmethod
    def from_scenario(cls, sc: Scenario) -> "OptimizerConfig":
        return cls(
            weights=sc.weights,
            epsilon_ms=sc.epsilon_ms,
            btu_max=sc.solver.btu_max,
            mn=sc.solver.mn,
            fresh_candidates=sc.solver.fresh_candidates,
            gap_tol=sc.solver.gap,
            time_limit_ms=sc.solver.time_limit_ms,
        )


@dataclass
class Assignment:
    instance_id: int
    step_index: int
    vm_id: str
    service: str
    cpu_demand: float
    ram_demand: float
    duration_ms: int
    occupancy_ms: int  # overheadful duration on the VM from now


@dataclass
class SchedulingPlan:
    now_ms: int
    assignments: list[Assignment]
    running: list[Assignment]
    lease_extensions: dict[str, int]  # vm id -> BTUs to lease/extend
    gamma: dict[str, int]  # vm type -> total BTUs this round
    penalties_ms: dict[int, float]  # instance -> planned worst-case delay
    free_capacity: dict[str, tuple[float, float]]
    objective_terms: dict[str, float]
    objective_value: float
    milp_values: dict[str, float]  # repaired solution, passes verify

    def assignment_for(self, instance_id: int, step_index: int) -> Assignment | None:
        for a in self.assignments:
            if a.instance_id == instance_id and a.step_index == step_index:
                return a
        return None


TERM_NAMES = ("leasing", "penalty", "deployment", "remaining_lease", "free_capacity", "importance")


class FfsippModel:
    """The round MILP plus enough metadata to decode its solutions."""

    def __init__(self, state: SchedulingState, config: OptimizerConfig, baseline: bool = False):
        self.state = state
        self.config = config
        self.baseline = baseline
        self.delta_ms = worstcase.max_startup_ms(state.vm_types)
        self.candidates = self._candidate_vms()
        self._vars: list[milp.VarDef] = []
        self._cons: list[milp.Constraint] = []
        self._terms: dict[str, milp.LinearExpr] = {n: milp.LinearExpr() for n in TERM_NAMES}
        self._x: dict[tuple[int, int, str], str] = {}
        self._x_meta: dict[str, Assignment] = {}
        self._y: dict[str, str] = {}
        self._g: dict[str, str] = {}
        self._u: dict[tuple[str, str], str] = {}
        self._ep: dict[int, str] = {}
        self._ep_rows: dict[int, list[tuple[milp.LinearExpr, float]]] = {}
        self._floor_rows: dict[str, list[tuple[milp.LinearExpr, float]]] = {}
        self._build()
        self.problem = milp.MilpProblem(self._vars, self._objective(), self._cons)

    # -- construction -----------------------------------------------------

    def _candidate_vms(self) -> list[VmSnapshot]:
        cands = list(self.state.fleet)
        live_per_type: dict[str, int] = {}
        for vm in self.state.fleet:
            live_per_type[vm.type_id] = live_per_type.get(vm.type_id, 0) + 1
        for vt in self.state.vm_types.values():
            n = self.config.fresh_candidates
            if vt.pool_limit is not None:
                n = min(n, vt.pool_limit - live_per_type.get(vt.id, 0))
            for i in range(max(0, n)):
                cands.append(
                    VmSnapshot(
                        id=f"new_{vt.id}_{i}",
                        type_id=vt.id,
                        ready_in_ms=vt.startup_ms,
                        lease_remaining_ms=0,
                        fresh=True,
                    )
                )
        return cands

    def _vm_type(self, vm: VmSnapshot) -> VmType:
        return self.state.vm_types[vm.type_id]

    def _fits(self, cpu: float, ram: float, vm: VmSnapshot) -> bool:
        vt = self._vm_type(vm)
        return cpu <= vt.cpu_supply + 1e-9 and ram <= vt.ram_supply + 1e-9

    def _baseline_allows(self, service: str, vm: VmSnapshot) -> bool:
        if not self.baseline:
            return True
        # A VM keeps its single offered type for its whole lease; only a VM
        # that never hosted a container may still pick one.
        if vm.offered_service is not None:
            return service == vm.offered_service
        return True

    def _occupancy_ms(self, inst: ProcessInstance, j: int, vm: VmSnapshot) -> int:
        step = inst.steps[j]
        svc = self.state.services[step.service]
        total = step.expected_ms + vm.ready_in_ms
        if self.baseline:
            if step.service != vm.offered_service:
                total += BASELINE_DEPLOY_MS
        elif step.service not in vm.cached_images:
            total += svc.container_start_ms + svc.image_pull_ms
        return total

    def _add_var(self, name, domain, lower, upper) -> str:
        self._vars.append(milp.VarDef(name, domain, lower, upper))
        return name

    def _add_con(self, expr, rel, rhs, label=""):
        self._cons.append(milp.Constraint(expr, rel, rhs, label))

    def _set_upper(self, name: str, upper: float):
        for i, var in enumerate(self._vars):
            if var.name == name:
                self._vars[i] = dataclasses.replace(var, upper=upper)
                return
        raise KeyError(name)

    def _build(self):
        state, cfg, w = self.state, self.config, self.config.weights
        tau = state.now_ms

        # Per-VM lease / usage variables.
        for vm in self.candidates:
            vt = self._vm_type(vm)
            y = self._add_var(f"y__{vm.id}", milp.INTEGER, 0, cfg.btu_max)
            g = self._add_var(f"g__{vm.id}", milp.BOOLEAN, 0, 1)
            self._y[vm.id], self._g[vm.id] = y, g
            beta = 0 if vm.fresh else 1
            self._add_con(
                milp.LinearExpr({g: 1, y: -1}, -beta), "<=", 0, f"g_link:{vm.id}"
            )

        # Symmetry breaking among anonymous fresh candidates of one type.
        by_type: dict[str, list[VmSnapshot]] = {}
        for vm in self.candidates:
            if vm.fresh:
                by_type.setdefault(vm.type_id, []).append(vm)
        for group in by_type.values():
            for a, b in zip(group, group[1:]):
                self._add_con(
                    milp.LinearExpr({self._g[a.id]: 1, self._g[b.id]: -1}),
                    ">=",
                    0,
                    f"symmetry:{b.id}",
                )

        # Placement variables and per-instance rows.
        for inst in state.instances:
            ready = sorted(next_steps(inst))
            schedulable: dict[int, list[VmSnapshot]] = {}
            for j in ready:
                step = inst.steps[j]
                fits_any_type = any(
                    self._fits(step.cpu_demand, step.ram_demand, vm) for vm in self.candidates
                )
                if not fits_any_type:
                    raise ModelError(
                        f"step {inst.id}/{j} ({step.service}, {step.cpu_demand}%) "
                        f"exceeds every VM type's supply"
                    )
                cands = [
                    vm
                    for vm in self.candidates
                    if self._fits(step.cpu_demand, step.ram_demand, vm)
                    and self._baseline_allows(step.service, vm)
                ]
                schedulable[j] = cands
            self._instance_rows(inst, schedulable, tau)

        # Baseline type exclusivity.
        if self.baseline:
            self._baseline_rows()

        # Capacity, free capacity, usage link per VM.
        for vm in self.candidates:
            vt = self._vm_type(vm)
            run_cpu, run_ram = self._running_demand(vm)
            cap_c = milp.LinearExpr()
            cap_r = milp.LinearExpr()
            vm_x: list[str] = []
            for (iid, j, vid), xname in self._x.items():
                if vid != vm.id:
                    continue
                a = self._x_meta[xname]
                cap_c.add(a.cpu_demand, xname)
                cap_r.add(a.ram_demand, xname)
                vm_x.append(xname)
            self._add_con(cap_c.copy(), "<=", vt.cpu_supply - run_cpu, f"cap_cpu:{vm.id}")
            if vt.ram_supply < math.inf:
                self._add_con(cap_r.copy(), "<=", vt.ram_supply - run_ram, f"cap_ram:{vm.id}")
            for xname in vm_x:
                self._add_con(
                    milp.LinearExpr({xname: 1.0, self._g[vm.id]: -1.0}),
                    "<=",
                    0,
                    f"usage:{vm.id}:{xname}",
                )

            # f >= s*g - used  <=>  f + used - s*g >= -running_load
            fc = self._add_var(f"fC__{vm.id}", milp.CONTINUOUS, 0, math.inf)
            fr = self._add_var(f"fR__{vm.id}", milp.CONTINUOUS, 0, math.inf)
            row_c = milp.LinearExpr(dict(cap_c.terms))
            row_c.add(1.0, fc)
            row_c.add(-vt.cpu_supply, self._g[vm.id])
            self._add_con(row_c, ">=", -run_cpu, f"free_cpu:{vm.id}")
            row_r = milp.LinearExpr(dict(cap_r.terms))
            row_r.add(1.0, fr)
            row_r.add(-vt.ram_supply if vt.ram_supply < math.inf else 0.0, self._g[vm.id])
            self._add_con(row_r, ">=", -run_ram, f"free_ram:{vm.id}")
            self._floor_rows[fc] = [(self._negate_without(row_c, fc), -run_cpu)]
            self._floor_rows[fr] = [(self._negate_without(row_r, fr), -run_ram)]
            self._terms["free_capacity"].add(w.f_cpu, fc)
            self._terms["free_capacity"].add(w.f_ram, fr)

            # Lease coverage for running steps.
            max_run = max((rem for _, _, rem in vm.running_steps), default=0)
            if max_run > vm.lease_remaining_ms:
                self._add_con(
                    milp.LinearExpr({self._y[vm.id]: float(vt.btu_ms)}),
                    ">=",
                    max_run - vm.lease_remaining_ms,
                    f"run_cover:{vm.id}",
                )

            # Extra BTUs beyond what any placement could consume only add
            # cost, so cap y at the worst single-step coverage need.
            horizon = max(
                [max_run]
                + [self._x_meta[xname].occupancy_ms for xname in vm_x]
            )
            need = min(
                cfg.btu_max, math.ceil(max(0, horizon - vm.lease_remaining_ms) / vt.btu_ms)
            )
            self._set_upper(self._y[vm.id], need)
            if vm.fresh:
                self._add_con(
                    milp.LinearExpr({self._y[vm.id]: 1.0, self._g[vm.id]: -float(need)}),
                    "<=",
                    0,
                    f"lease_used:{vm.id}",
                )

        # BTU totals per type.
        for vt in state.vm_types.values():
            members = [vm for vm in self.candidates if vm.type_id == vt.id]
            gamma = self._add_var(
                f"gamma__{vt.id}", milp.INTEGER, 0, cfg.btu_max * max(1, len(members))
            )
            expr = milp.LinearExpr({gamma: 1.0})
            for vm in members:
                expr.add(-1.0, self._y[vm.id])
            self._add_con(expr, "=", 0, f"gamma:{vt.id}")
            self._terms["leasing"].add(vt.cost_per_btu, gamma)

        if not self._vars:
            self._add_var("nothing", milp.CONTINUOUS, 0, 0)

    @staticmethod
    def _negate_without(expr: milp.LinearExpr, skip: str) -> milp.LinearExpr:
        out = milp.LinearExpr()
        for v, c in expr.terms.items():
            if v != skip:
                out.add(-c, v)
        return out

    def _running_demand(self, vm: VmSnapshot) -> tuple[float, float]:
        cpu = ram = 0.0
        for iid, j, _ in vm.running_steps:
            inst = next(i for i in self.state.instances if i.id == iid)
            cpu += inst.steps[j].cpu_demand
            ram += inst.steps[j].ram_demand
        return cpu, ram

    def _instance_rows(self, inst: ProcessInstance, schedulable, tau: int):
        cfg, w = self.config, self.config.weights
        svcs = self.state.services
        rs = worstcase.remaining_structure(inst, svcs, self.delta_ms, set(schedulable))
        ex_run = max(
            (
                rem
                for vm in self.state.fleet
                for iid, j, rem in vm.running_steps
                if iid == inst.id
            ),
            default=0,
        )

        # Placement variables with their objective contributions.
        for j, cands in schedulable.items():
            step = inst.steps[j]
            dl_star = step_deadline(inst, j, svcs, self.delta_ms)
            step.step_deadline = dl_star
            for vm in cands:
                name = f"x__{inst.id}__{j}__{vm.id}"
                self._add_var(name, milp.BOOLEAN, 0, 1)
                occ = self._occupancy_ms(inst, j, vm)
                self._x[(inst.id, j, vm.id)] = name
                self._x_meta[name] = Assignment(
                    instance_id=inst.id,
                    step_index=j,
                    vm_id=vm.id,
                    service=step.service,
                    cpu_demand=step.cpu_demand,
                    ram_demand=step.ram_demand,
                    duration_ms=step.expected_ms,
                    occupancy_ms=occ,
                )
                # Baseline deployments are priced per type variable instead
                # (see _baseline_rows); there is no image cache there.
                if not self.baseline and step.service not in vm.cached_images:
                    self._terms["deployment"].add(w.z, name)
                self._terms["remaining_lease"].add(w.d_per_ms * vm.lease_remaining_ms, name)
                self._terms["importance"].add(w.dl_per_ms * (dl_star - tau), name)
                # Lease coverage for this placement.
                vt = self._vm_type(vm)
                self._add_con(
                    milp.LinearExpr({name: float(occ), self._y[vm.id]: -float(vt.btu_ms)}),
                    "<=",
                    vm.lease_remaining_ms,
                    f"cover:{inst.id}:{j}:{vm.id}",
                )
            # At most one VM per step.
            pick = milp.LinearExpr({self._x[(inst.id, j, vm.id)]: 1.0 for vm in cands})
            if pick.terms:
                self._add_con(pick, "<=", 1, f"one_vm:{inst.id}:{j}")

        # Block variables for AND/XOR remainders that depend on this round.
        # A scheduled branch head replaces its worst-case coefficient with the
        # concrete occupancy of the chosen placement, so parallel heads are not
        # serialised in the deadline row.  The "next" family prices the branch
        # as seen one round later: a head scheduled now has already run for
        # epsilon by then, an unscheduled one still costs the full branch.
        block_heads: set[int] = set()
        block_now_vars: list[str] = []
        block_next_vars: list[str] = []
        for block in rs.blocks:
            bnow = self._add_var(
                f"eblk__{inst.id}__{block.node_id}", milp.CONTINUOUS, 0, math.inf
            )
            bnext = self._add_var(
                f"eblkn__{inst.id}__{block.node_id}", milp.CONTINUOUS, 0, math.inf
            )
            block_now_vars.append(bnow)
            block_next_vars.append(bnext)
            floors_now = []
            floors_next = []
            for const, coefs in block.rows:
                row_now = milp.LinearExpr({bnow: 1.0})
                row_next = milp.LinearExpr({bnext: 1.0})
                floor_now = milp.LinearExpr()
                floor_next = milp.LinearExpr()
                for j, coef in coefs.items():
                    block_heads.add(j)
                    for vm in schedulable.get(j, []):
                        xname = self._x[(inst.id, j, vm.id)]
                        occ = self._x_meta[xname].occupancy_ms
                        red_now = float(coef - occ)
                        red_next = float(coef + cfg.epsilon_ms - occ)
                        row_now.add(red_now, xname)
                        floor_now.add(-red_now, xname)
                        row_next.add(red_next, xname)
                        floor_next.add(-red_next, xname)
                self._add_con(row_now, ">=", const, f"block:{inst.id}:{block.node_id}")
                self._add_con(
                    row_next, ">=", const, f"block_next:{inst.id}:{block.node_id}"
                )
                floors_now.append((floor_now, float(const)))
                floors_next.append((floor_next, float(const)))
            self._floor_rows[bnow] = floors_now
            self._floor_rows[bnext] = floors_next

        # Deadline / penalty coupling for this round and the next.
        ep = self._add_var(f"ep__{inst.id}", milp.CONTINUOUS, 0, math.inf)
        self._ep[inst.id] = ep
        self._terms["penalty"].add(inst.penalty_rate, ep)

        covered = set(rs.step_reduction_ms) | block_heads

        def deadline_expr(next_round: bool) -> milp.LinearExpr:
            expr = milp.LinearExpr(constant=float(rs.constant_ms))
            eps = cfg.epsilon_ms if next_round else 0
            for j, red in rs.step_reduction_ms.items():
                for vm in schedulable.get(j, []):
                    xname = self._x[(inst.id, j, vm.id)]
                    occ = self._x_meta[xname].occupancy_ms
                    expr.add(float(occ - red - eps), xname)
            for (iid, j, vid), xname in self._x.items():
                if iid == inst.id and j not in covered:
                    expr.add(float(self._x_meta[xname].occupancy_ms), xname)
            for bname in block_next_vars if next_round else block_now_vars:
                expr.add(1.0, bname)
            return expr

        row1 = deadline_expr(next_round=False)
        rhs1 = inst.deadline_ms - tau - ex_run - row1.constant
        row1.constant = 0.0
        row1_no_ep = row1.copy()
        row1.add(-1.0, ep)
        self._add_con(row1, "<=", rhs1, f"deadline_now:{inst.id}")

        row2 = deadline_expr(next_round=True)
        rhs2 = inst.deadline_ms - (tau + cfg.epsilon_ms) - row2.constant
        row2.constant = 0.0
        row2_no_ep = row2.copy()
        row2.add(-1.0, ep)
        self._add_con(row2, "<=", rhs2, f"deadline_next:{inst.id}")

        self._ep_rows[inst.id] = [(row1_no_ep, rhs1), (row2_no_ep, rhs2)]

    def _baseline_rows(self):
        """One service type per VM: u variables, exclusivity, x <= u."""
        w = self.config.weights
        per_vm: dict[str, dict[str, list[str]]] = {}
        for (iid, j, vid), xname in self._x.items():
            svc = self._x_meta[xname].service
            per_vm.setdefault(vid, {}).setdefault(svc, []).append(xname)
        for vm in self.candidates:
            types = per_vm.get(vm.id, {})
            if not types:
                continue
            exclusivity = milp.LinearExpr()
            for svc, xnames in types.items():
                uname = self._add_var(f"u__{svc}__{vm.id}", milp.BOOLEAN, 0, 1)
                self._u[(svc, vm.id)] = uname
                exclusivity.add(1.0, uname)
                for xname in xnames:
                    self._add_con(
                        milp.LinearExpr({xname: 1.0, uname: -1.0}),
                        "<=",
                        0,
                        f"type_lock:{vm.id}:{svc}",
                    )
                if svc != vm.offered_service:
                    self._terms["deployment"].add(
                        w.z * BASELINE_DEPLOY_MS / 1000.0, uname
                    )
            # Non-idle VMs are locked to their current type; the candidate
            # filter already restricts their placements, so u for that type
            # is the only one present here.
            self._add_con(exclusivity, "<=", 1, f"one_type:{vm.id}")

    def _objective(self) -> milp.LinearExpr:
        total = milp.LinearExpr()
        for expr in self._terms.values():
            total.constant += expr.constant
            for v, c in expr.terms.items():
                total.add(c, v)
        return total

    # -- decoding ----------------------------------------------------------

    def decode(self, solution: milp.MilpSolution) -> SchedulingPlan:
        if solution.status not in (milp.OPTIMAL, milp.GAP_LIMIT, milp.TIME_LIMIT):
            raise ValueError(f"cannot decode a {solution.status} solution")
        if solution.values is None:
            raise ValueError("solution carries no values")
        values = dict(solution.values)

        for var in self.problem.variables:
            if var.domain == milp.CONTINUOUS:
                continue
            v = values[var.name]
            if abs(v - round(v)) > 1e-6:
                raise ValueError(f"unroundable integrality residue on {var.name}: {v}")
            values[var.name] = float(round(v))

        # Re-derive continuous helpers from their defining floors so the
        # decoded point is exactly feasible (block vars first, then e^p).
        for name, floors in self._floor_rows.items():
            values[name] = max(0.0, max(expr.value(values) + rhs for expr, rhs in floors))
        for iid, rows in self._ep_rows.items():
            values[self._ep[iid]] = max(
                0.0, max(expr.value(values) - rhs for expr, rhs in rows)
            )

        assignments = [
            self._x_meta[xname] for key, xname in self._x.items() if values[xname] > 0.5
        ]
        running = [
            Assignment(
                instance_id=iid,
                step_index=j,
                vm_id=vm.id,
                service=self._running_service(iid, j),
                cpu_demand=self._running_step(iid, j).cpu_demand,
                ram_demand=self._running_step(iid, j).ram_demand,
                duration_ms=rem,
                occupancy_ms=rem,
            )
            for vm in self.state.fleet
            for iid, j, rem in vm.running_steps
        ]
        leases = {
            vm.id: int(round(values[self._y[vm.id]]))
            for vm in self.candidates
            if values[self._y[vm.id]] > 0.5
        }
        gamma = {
            vt: int(round(values[f"gamma__{vt}"]))
            for vt in self.state.vm_types
            if f"gamma__{vt}" in values
        }
        penalties = {iid: values[name] for iid, name in self._ep.items()}
        free = {
            vm.id: (values[f"fC__{vm.id}"], values[f"fR__{vm.id}"])
            for vm in self.candidates
        }
        terms = {name: expr.value(values) for name, expr in self._terms.items()}
        total = sum(terms.values())
        if solution.objective_value is not None and abs(total - solution.objective_value) > 1e-6:
            raise ValueError(
                f"objective breakdown {total} disagrees with solver "
                f"objective {solution.objective_value}"
            )
        return SchedulingPlan(
            now_ms=self.state.now_ms,
            assignments=assignments,
            running=running,
            lease_extensions=leases,
            gamma=gamma,
            penalties_ms=penalties,
            free_capacity=free,
            objective_terms=terms,
            objective_value=total,
            milp_values=values,
        )

    def _running_step(self, iid: int, j: int):
        inst = next(i for i in self.state.instances if i.id == iid)
        return inst.steps[j]

    def _running_service(self, iid: int, j: int) -> str:
        return self._running_step(iid, j).service


BASELINE_DEPLOY_MS = 30_000

FRESH_PREFIX = "new_"


def fresh_vm_type(vm_id: str) -> str:
    """VM type encoded in a fresh candidate's id (``new_<type>_<n>``)."""
    if not vm_id.startswith(FRESH_PREFIX):
        raise ValueError(f"{vm_id!r} is not a fresh candidate id")
    return vm_id[len(FRESH_PREFIX) :].rsplit("_", 1)[0]


def build(state: SchedulingState, config: OptimizerConfig) -> FfsippModel:
    """Build the round model; ``model.problem`` is the MILP."""
    return FfsippModel(state, config, baseline=False)


def decode(model: FfsippModel, solution: milp.MilpSolution) -> SchedulingPlan:
    return model.decode(solution)


def next_wakeup(plan: SchedulingPlan, state: SchedulingState, config: OptimizerConfig) -> int:
    """Earliest time (ms) the next round must run so every instance can
    still meet its (penalty-adjusted) deadline; never sooner than now+eps."""
    delta = worstcase.max_startup_ms(state.vm_types)
    floor = state.now_ms + config.epsilon_ms
    candidates = []
    for inst in state.instances:
        scheduled = {
            a.step_index: worstcase.step_coefficient_ms(
                inst.steps[a.step_index], state.services, delta
            )
            for a in plan.assignments
            if a.instance_id == inst.id
        }
        e_i = worstcase.remaining_duration(inst, state.services, delta, scheduled).e_i_ms
        ep = plan.penalties_ms.get(inst.id, 0.0)
        candidates.append(inst.deadline_ms + ep - e_i)
    if not candidates:
        return floor
    return max(floor, int(min(candidates)))
