"""Domain model: services, VM types, workflow trees, process instances.

All times are integer milliseconds internally; scenario files use seconds
and are converted exactly on parse.
"""
from __future__ import annotations

import re as _re
from dataclasses import dataclass, field

import yaml

PENDING = "pending"
NEXT = "next"
RUNNING = "running"
DONE = "done"
SKIPPED = "skipped"

STEP = "step"
SEQUENCE = "sequence"
AND_BLOCK = "and_block"
XOR_BLOCK = "xor_block"
REPEAT_LOOP = "repeat_loop"

DEFAULT_LOOP_REPETITIONS = 3


class ScenarioError(ValueError):
    """Raised for malformed or inconsistent scenario configurations."""


def ms(seconds: float) -> int:
    return int(round(seconds * 1000))


@dataclass(frozen=True)
class ServiceType:
    id: str
    cpu_demand: float  # percent of one core (mean)
    ram_demand: float
    duration_ms: int  # mean service makespan
    image_pull_ms: int
    container_start_ms: int

    def __post_init__(self):
        if self.cpu_demand <= 0 and self.ram_demand <= 0:
            raise ScenarioError(f"service {self.id}: needs cpu or ram demand")
        if self.duration_ms <= 0:
            raise ScenarioError(f"service {self.id}: non-positive duration")
        if self.image_pull_ms < 0 or self.container_start_ms < 0:
            raise ScenarioError(f"service {self.id}: negative deployment time")


@dataclass(frozen=True)
class VmType:
    id: str
    provider: str  # "private" | "public"
    cpu_supply: float  # cores * 100 percent
    ram_supply: float
    btu_ms: int
    cost_per_btu: float
    startup_ms: int
    pool_limit: int | None  # None = unbounded (public cloud)

    def __post_init__(self):
        if self.cpu_supply <= 0:
            raise ScenarioError(f"vm type {self.id}: non-positive cpu supply")
        if self.btu_ms <= 0:
            raise ScenarioError(f"vm type {self.id}: non-positive BTU")
        if self.cost_per_btu <= 0:
            raise ScenarioError(f"vm type {self.id}: non-positive price")
        if self.pool_limit is not None and self.pool_limit < 1:
            raise ScenarioError(f"vm type {self.id}: pool limit must be >= 1")


@dataclass
class WorkflowNode:
    kind: str
    children: list["WorkflowNode"] = field(default_factory=list)
    service: str | None = None  # steps only
    repetitions: int | None = None  # loops only
    node_id: int = -1  # assigned by ProcessModel
    step_index: int = -1  # steps only, assigned by ProcessModel

    def __post_init__(self):
        if self.kind == STEP and self.children:
            raise ScenarioError("a step has no children")
        if self.kind != STEP and not self.children:
            raise ScenarioError(f"{self.kind} needs at least one child")
        if self.kind == REPEAT_LOOP and (self.repetitions is None or self.repetitions < 1):
            raise ScenarioError("repeat loop needs positive repetitions")


@dataclass
class ProcessModel:
    id: int
    root: WorkflowNode
    step_nodes: list[WorkflowNode] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.step_nodes = []
        self._assign_ids(self.root, [0])

    def _assign_ids(self, node: WorkflowNode, counter: list[int]):
        node.node_id = counter[0]
        counter[0] += 1
        if node.kind == STEP:
            node.step_index = len(self.step_nodes)
            self.step_nodes.append(node)
        for child in node.children:
            self._assign_ids(child, counter)

    @property
    def step_services(self) -> list[str]:
        return [n.service for n in self.step_nodes]


@dataclass
class StepState:
    index: int
    service: str
    status: str = PENDING
    cpu_demand: float = 0.0
    ram_demand: float = 0.0
    expected_ms: int = 0
    assigned_vm: str | None = None
    remaining_ms: int | None = None
    scheduled_at: int | None = None
    step_deadline: int | None = None
    runs: int = 0  # completed invocations (loops re-run steps)


@dataclass
class ProcessInstance:
    id: int
    model: ProcessModel
    arrival_ms: int
    deadline_ms: int
    penalty_rate: float  # planning penalty cost per ms of (worst-case) delay
    steps: list[StepState]
    xor_choices: dict[int, int] = field(default_factory=dict)  # node_id -> branch
    loop_iters_done: dict[int, int] = field(default_factory=dict)
    loop_planned: dict[int, int] = field(default_factory=dict)  # runtime iterations
    finished_ms: int | None = None

    def __post_init__(self):
        if self.deadline_ms <= self.arrival_ms:
            raise ScenarioError(f"instance {self.id}: deadline before arrival")
        if self.penalty_rate < 0:
            raise ScenarioError(f"instance {self.id}: negative penalty rate")

    def step(self, index: int) -> StepState:
        return self.steps[index]

    @property
    def done(self) -> bool:
        return all(s.status in (DONE, SKIPPED) for s in self.steps)


def make_instance(
    model: ProcessModel,
    services: dict[str, ServiceType],
    iid: int,
    arrival_ms: int,
    deadline_ms: int,
    penalty_rate: float,
    step_cpu: list[float] | None = None,
    step_durations_ms: list[int] | None = None,
    loop_iterations: dict[int, int] | None = None,
) -> ProcessInstance:
    """Instantiate a model. Demands/durations default to the catalog means;
    the simulator passes sampled values instead."""
    steps = []
    for i, node in enumerate(model.step_nodes):
        svc = services[node.service]
        steps.append(
            StepState(
                index=i,
                service=node.service,
                cpu_demand=step_cpu[i] if step_cpu else svc.cpu_demand,
                ram_demand=svc.ram_demand,
                expected_ms=step_durations_ms[i] if step_durations_ms else svc.duration_ms,
            )
        )
    inst = ProcessInstance(
        id=iid,
        model=model,
        arrival_ms=arrival_ms,
        deadline_ms=deadline_ms,
        penalty_rate=penalty_rate,
        steps=steps,
    )
    for node in _iter_nodes(model.root):
        if node.kind == REPEAT_LOOP:
            inst.loop_iters_done[node.node_id] = 0
            planned = node.repetitions
            if loop_iterations and node.node_id in loop_iterations:
                planned = loop_iterations[node.node_id]
            inst.loop_planned[node.node_id] = planned
    return inst


def _iter_nodes(node: WorkflowNode):
    yield node
    for child in node.children:
        yield from _iter_nodes(child)


# ---------------------------------------------------------------------------
# Structural queries


def _node_state(inst: ProcessInstance, node: WorkflowNode) -> tuple[set[int], bool]:
    """Return (ready step indices, node fully done)."""
    if node.kind == STEP:
        st = inst.steps[node.step_index].status
        if st in (DONE, SKIPPED):
            return set(), True
        if st in (PENDING, NEXT):
            return {node.step_index}, False
        return set(), False  # running
    if node.kind == SEQUENCE or node.kind == REPEAT_LOOP:
        for child in node.children:
            ready, child_done = _node_state(inst, child)
            if not child_done:
                return ready, False
        return set(), True
    if node.kind == AND_BLOCK:
        ready: set[int] = set()
        all_done = True
        for child in node.children:
            r, d = _node_state(inst, child)
            ready |= r
            all_done = all_done and d
        return ready, all_done  # blocking merge
    if node.kind == XOR_BLOCK:
        choice = inst.xor_choices.get(node.node_id)
        if choice is None:
            # Branch chosen by the simulator when the block is reached; until
            # then the block exposes no ready steps.
            return set(), False
        return _node_state(inst, node.children[choice])
    raise AssertionError(node.kind)


def next_steps(inst: ProcessInstance) -> set[int]:
    """Step indices whose structural predecessors are all done (J*)."""
    ready, _ = _node_state(inst, inst.model.root)
    return ready


def pending_xor_choices(inst: ProcessInstance) -> list[int]:
    """Enabled XOR blocks whose branch has not been chosen yet, in tree order."""
    pending: list[int] = []

    def walk(node: WorkflowNode) -> bool:
        # returns done
        if node.kind == STEP:
            return inst.steps[node.step_index].status in (DONE, SKIPPED)
        if node.kind in (SEQUENCE, REPEAT_LOOP):
            for child in node.children:
                if not walk(child):
                    return False
            return True
        if node.kind == AND_BLOCK:
            done = True
            for child in node.children:
                done = walk(child) and done
            return done
        choice = inst.xor_choices.get(node.node_id)
        if choice is None:
            pending.append(node.node_id)
            return False
        return walk(node.children[choice])

    walk(inst.model.root)
    return pending


def apply_xor_choice(inst: ProcessInstance, node_id: int, branch: int):
    """Record a branch choice and mark the other branches' steps skipped."""
    node = _find_node(inst.model.root, node_id)
    inst.xor_choices[node_id] = branch
    for i, child in enumerate(node.children):
        if i == branch:
            continue
        for sub in _iter_nodes(child):
            if sub.kind == STEP:
                inst.steps[sub.step_index].status = SKIPPED


def advance_loops(inst: ProcessInstance) -> list[tuple[int, list[int]]]:
    """Start the next iteration of any loop whose body just completed.

    Returns (loop node id, reset step indices) per restarted loop so the
    simulator can resample durations for the new iteration.
    """
    restarted: list[tuple[int, list[int]]] = []
    changed = True
    while changed:
        changed = False
        for node in _iter_nodes(inst.model.root):
            if node.kind != REPEAT_LOOP:
                continue
            _, body_done = _node_state(inst, node)
            if not body_done:
                continue
            done_iters = inst.loop_iters_done[node.node_id] + 1
            if done_iters >= inst.loop_planned[node.node_id]:
                continue
            inst.loop_iters_done[node.node_id] = done_iters
            reset: list[int] = []
            for sub in _iter_nodes(node):
                if sub.kind == STEP:
                    s = inst.steps[sub.step_index]
                    s.status = PENDING
                    s.assigned_vm = None
                    s.remaining_ms = None
                    s.scheduled_at = None
                    reset.append(sub.step_index)
                elif sub.kind == XOR_BLOCK:
                    inst.xor_choices.pop(sub.node_id, None)
                elif sub.kind == REPEAT_LOOP and sub is not node:
                    inst.loop_iters_done[sub.node_id] = 0
            restarted.append((node.node_id, reset))
            changed = True
    return restarted


def _find_node(root: WorkflowNode, node_id: int) -> WorkflowNode:
    for node in _iter_nodes(root):
        if node.node_id == node_id:
            return node
    raise KeyError(node_id)


@dataclass
class PathDecomposition:
    """Structural positions of a model's steps.

    Steps in AND/XOR branches and loop bodies appear only in their block
    entry; every step occupies exactly one position.
    """

    seq_steps: list[int]
    and_blocks: list[tuple[int, list[list[int]]]]  # (node_id, step lists per branch)
    xor_blocks: list[tuple[int, list[list[int]]]]
    loops: list[tuple[int, list[int], int]]  # (node_id, body steps, re)


def enumerate_paths(model: ProcessModel) -> PathDecomposition:
    dec = PathDecomposition([], [], [], [])

    def flatten(node: WorkflowNode) -> list[int]:
        if node.kind == STEP:
            return [node.step_index]
        out: list[int] = []
        for child in node.children:
            out.extend(flatten(child))
        return out

    def walk(node: WorkflowNode):
        if node.kind == STEP:
            dec.seq_steps.append(node.step_index)
        elif node.kind == SEQUENCE:
            for child in node.children:
                walk(child)
        elif node.kind == AND_BLOCK:
            dec.and_blocks.append((node.node_id, [flatten(c) for c in node.children]))
        elif node.kind == XOR_BLOCK:
            dec.xor_blocks.append((node.node_id, [flatten(c) for c in node.children]))
        elif node.kind == REPEAT_LOOP:
            dec.loops.append((node.node_id, flatten(node), node.repetitions))

    walk(model.root)
    return dec


def average_makespan(model: ProcessModel, services: dict[str, ServiceType]) -> float:
    """Service-time-only makespan in seconds using mean durations.

    Sequences sum, AND/XOR take the longest branch, loops multiply by their
    maximum repetitions. VM/container overheads are excluded.
    """

    def value(node: WorkflowNode) -> float:
        if node.kind == STEP:
            return services[node.service].duration_ms / 1000.0
        if node.kind == SEQUENCE:
            return sum(value(c) for c in node.children)
        if node.kind in (AND_BLOCK, XOR_BLOCK):
            return max(value(c) for c in node.children)
        if node.kind == REPEAT_LOOP:
            return node.repetitions * sum(value(c) for c in node.children)
        raise AssertionError(node.kind)

    return value(model.root)


def critical_path_overhead_ms(
    model: ProcessModel, services: dict[str, ServiceType], startup_ms: int
) -> int:
    """Expected one-off deployment overheads along the makespan-critical path:
    one VM startup for the instance plus pull + container start per step."""

    def value(node: WorkflowNode) -> tuple[float, int]:
        if node.kind == STEP:
            svc = services[node.service]
            return (
                svc.duration_ms / 1000.0,
                svc.image_pull_ms + svc.container_start_ms,
            )
        if node.kind == SEQUENCE:
            parts = [value(c) for c in node.children]
            return sum(p[0] for p in parts), sum(p[1] for p in parts)
        if node.kind in (AND_BLOCK, XOR_BLOCK):
            return max((value(c) for c in node.children), key=lambda p: p[0])
        if node.kind == REPEAT_LOOP:
            parts = [value(c) for c in node.children]
            return (
                node.repetitions * sum(p[0] for p in parts),
                node.repetitions * sum(p[1] for p in parts),
            )
        raise AssertionError(node.kind)

    return startup_ms + value(model.root)[1]


def step_deadline(
    inst: ProcessInstance,
    step_index: int,
    services: dict[str, ServiceType],
    delta_ms: int,
) -> int:
    """Latest start time (ms) for a next step so the instance can still meet
    its deadline under worst-case assumptions. May lie in the past."""
    from . import worstcase

    own = worstcase.step_coefficient_ms(inst.step(step_index), services, delta_ms)
    tail = worstcase.remaining_after_done(inst, step_index, services, delta_ms)
    return inst.deadline_ms - own - tail


# ---------------------------------------------------------------------------
# Scenario parsing


@dataclass(frozen=True)
class ArrivalSpec:
    kind: str  # "constant" | "pyramid"
    interval_ms: int
    batch_models: tuple[tuple[int, ...], ...] | None
    total_requests: int


@dataclass(frozen=True)
class SlaSpec:
    factor: float
    penalty_policy: str  # "fraction" (per 10% of SLA window) | "per_10s"
    planning_rate_per_s: float | None  # overrides policy-derived planning rate


@dataclass(frozen=True)
class Weights:
    dl_per_ms: float
    d_per_ms: float
    f_cpu: float
    f_ram: float
    z: float


@dataclass(frozen=True)
class SolverSpec:
    gap: float
    time_limit_ms: int
    fresh_candidates: int
    btu_max: int
    mn: float


@dataclass
class Scenario:
    services: dict[str, ServiceType]
    vm_types: dict[str, VmType]
    models: list[ProcessModel]
    arrival: ArrivalSpec
    sla: SlaSpec
    weights: Weights
    solver: SolverSpec
    btu_ms: int
    epsilon_ms: int

    def model_by_id(self, mid: int) -> ProcessModel:
        for m in self.models:
            if m.id == mid:
                return m
        raise ScenarioError(f"unknown process model id {mid}")


_STRUCTURE_TOKEN = _re.compile(r"\s*(AND|XOR|LOOP\*?\d*|s|\(|\)|,|\|)", _re.IGNORECASE)


def _tokenize_structure(text: str) -> list[str]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _STRUCTURE_TOKEN.match(text, pos)
        if not m:
            raise ScenarioError(f"bad workflow structure near {text[pos:pos+12]!r}")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens


def parse_structure(text: str) -> WorkflowNode:
    """Parse the compact workflow grammar.

    ``s`` is a step placeholder; ``,`` sequences; ``AND(a|b)``/``XOR(a|b)``
    are split/merge blocks with ``|``-separated branches; ``LOOP*n(body)``
    repeats its body at most n times (default 3).
    """
    tokens = _tokenize_structure(text)
    pos = [0]

    def peek():
        return tokens[pos[0]] if pos[0] < len(tokens) else None

    def take(expected=None):
        tok = peek()
        if tok is None or (expected and tok != expected):
            raise ScenarioError(f"bad workflow structure: expected {expected!r}, got {tok!r}")
        pos[0] += 1
        return tok

    def parse_seq(stop: tuple[str, ...]) -> WorkflowNode:
        items = [parse_item()]
        while peek() == ",":
            take(",")
            items.append(parse_item())
        if peek() not in stop:
            raise ScenarioError(f"bad workflow structure at token {peek()!r}")
        if len(items) == 1:
            return items[0]
        return WorkflowNode(SEQUENCE, children=items)

    def parse_branches() -> list[WorkflowNode]:
        take("(")
        branches = [parse_seq((")", "|"))]
        while peek() == "|":
            take("|")
            branches.append(parse_seq((")", "|")))
        take(")")
        return branches

    def parse_item() -> WorkflowNode:
        tok = peek()
        if tok is None:
            raise ScenarioError("bad workflow structure: unexpected end")
        upper = tok.upper()
        if tok == "s":
            take()
            return WorkflowNode(STEP)
        if upper == "AND":
            take()
            return WorkflowNode(AND_BLOCK, children=parse_branches())
        if upper == "XOR":
            take()
            return WorkflowNode(XOR_BLOCK, children=parse_branches())
        if upper.startswith("LOOP"):
            take()
            reps = DEFAULT_LOOP_REPETITIONS
            if "*" in tok:
                reps = int(tok.split("*")[1])
            take("(")
            body = parse_seq((")",))
            take(")")
            return WorkflowNode(REPEAT_LOOP, children=[body], repetitions=reps)
        raise ScenarioError(f"bad workflow structure at token {tok!r}")

    root = parse_seq((None,))
    if root.kind == STEP:
        root = WorkflowNode(SEQUENCE, children=[root])
    return root


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a YAML scenario configuration."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"malformed scenario file: {exc}") from None
    if not isinstance(raw, dict):
        raise ScenarioError("malformed scenario file: expected a mapping")

    btu_ms = ms(_get(raw, "btu_seconds", 300))
    epsilon_ms = int(_get(raw, "epsilon_ms", 2000))
    if epsilon_ms <= 0:
        raise ScenarioError("epsilon_ms must be positive")

    services: dict[str, ServiceType] = {}
    for entry in _get(raw, "services", required=True):
        svc = ServiceType(
            id=str(entry["name"]),
            cpu_demand=float(entry.get("cpu", 0.0)),
            ram_demand=float(entry.get("ram", 0.0)),
            duration_ms=ms(float(entry["duration_s"])),
            image_pull_ms=ms(float(entry.get("pull_s", 30))),
            container_start_ms=ms(float(entry.get("start_s", 2))),
        )
        if svc.id in services:
            raise ScenarioError(f"duplicate service {svc.id}")
        services[svc.id] = svc
    if not services:
        raise ScenarioError("no services")

    vm_types: dict[str, VmType] = {}
    for entry in _get(raw, "vm_types", required=True):
        limit = entry.get("pool_limit")
        vt = VmType(
            id=str(entry["name"]),
            provider=str(entry.get("provider", "public")),
            cpu_supply=float(entry["cores"]) * 100.0,
            ram_supply=float(entry.get("ram", 1024)),
            btu_ms=btu_ms,
            cost_per_btu=float(entry["cost_per_btu"]),
            startup_ms=ms(float(entry.get("startup_s", 60))),
            pool_limit=int(limit) if limit is not None else None,
        )
        if vt.provider not in ("private", "public"):
            raise ScenarioError(f"vm type {vt.id}: unknown provider {vt.provider!r}")
        if vt.provider == "private" and vt.pool_limit is None:
            raise ScenarioError(f"vm type {vt.id}: private pool needs a limit")
        if vt.id in vm_types:
            raise ScenarioError(f"duplicate vm type {vt.id}")
        vm_types[vt.id] = vt

    model_entries = _get(raw, "models", required=True)
    if not model_entries:
        raise ScenarioError("no process models")
    service_cycle = list(services)
    models: list[ProcessModel] = []
    seen_ids = set()
    for entry in model_entries:
        mid = int(entry["id"])
        if mid in seen_ids:
            raise ScenarioError(f"duplicate model id {mid}")
        seen_ids.add(mid)
        root = parse_structure(str(entry["structure"]))
        model = ProcessModel(id=mid, root=root)
        explicit = entry.get("steps")
        if explicit is not None:
            if len(explicit) != len(model.step_nodes):
                raise ScenarioError(
                    f"model {mid}: {len(explicit)} step services for "
                    f"{len(model.step_nodes)} steps"
                )
            assigned = [str(s) for s in explicit]
        else:
            assigned = [service_cycle[i % len(service_cycle)] for i in range(len(model.step_nodes))]
        for node, svc_id in zip(model.step_nodes, assigned):
            if svc_id not in services:
                raise ScenarioError(f"model {mid}: unknown service {svc_id!r}")
            node.service = svc_id
        models.append(model)

    arr = _get(raw, "arrival", {}) or {}
    kind = arr.get("kind", "constant")
    if kind not in ("constant", "pyramid"):
        raise ScenarioError(f"unknown arrival kind {kind!r}")
    batch = arr.get("batch_models")
    if batch is not None:
        batch = tuple(tuple(int(m) for m in group) for group in batch)
        for group in batch:
            for mid in group:
                if mid not in seen_ids:
                    raise ScenarioError(f"arrival references unknown model {mid}")
    arrival = ArrivalSpec(
        kind=kind,
        interval_ms=ms(float(arr.get("interval_s", 120 if kind == "constant" else 60))),
        batch_models=batch,
        total_requests=int(arr.get("total_requests", 50 if kind == "constant" else 100)),
    )

    sla_raw = _get(raw, "sla", {}) or {}
    sla = SlaSpec(
        factor=float(sla_raw.get("factor", 1.5)),
        penalty_policy=str(sla_raw.get("penalty_policy", "fraction")),
        planning_rate_per_s=(
            float(sla_raw["planning_rate_per_s"])
            if sla_raw.get("planning_rate_per_s") is not None
            else None
        ),
    )
    if sla.factor <= 1:
        raise ScenarioError("sla factor must exceed 1")
    if sla.penalty_policy not in ("fraction", "per_10s"):
        raise ScenarioError(f"unknown penalty policy {sla.penalty_policy!r}")

    w = _get(raw, "weights", {}) or {}
    weights = Weights(
        dl_per_ms=float(w.get("dl", 0.001)) / 1000.0,
        d_per_ms=float(w.get("d", 0.0001)) / 1000.0,
        f_cpu=float(w.get("f_cpu", 0.01)),
        f_ram=float(w.get("f_ram", 0.0)),
        z=float(w.get("z", 1.0)),
    )

    s = _get(raw, "solver", {}) or {}
    solver = SolverSpec(
        gap=float(s.get("gap", 1e-6)),
        time_limit_ms=int(s.get("time_limit_ms", 20000)),
        fresh_candidates=int(s.get("fresh_candidates", 3)),
        btu_max=int(s.get("btu_max", 1000)),
        mn=float(s.get("mn", 1_000_000)),
    )
    if solver.fresh_candidates < 1:
        raise ScenarioError("fresh_candidates must be >= 1")

    return Scenario(
        services=services,
        vm_types=vm_types,
        models=models,
        arrival=arrival,
        sla=sla,
        weights=weights,
        solver=solver,
        btu_ms=btu_ms,
        epsilon_ms=epsilon_ms,
    )


def _get(raw: dict, key: str, default=None, required=False):
    if key in raw and raw[key] is not None:
        return raw[key]
    if required:
        raise ScenarioError(f"missing scenario key {key!r}")
    return default
