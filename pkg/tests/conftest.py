import importlib.resources

import pytest

from ffsipp import landscape


def service(name, cpu=45.0, duration_s=40, ram=0.0, pull_s=30, start_s=2):
    return landscape.ServiceType(
        id=name,
        cpu_demand=cpu,
        ram_demand=ram,
        duration_ms=landscape.ms(duration_s),
        image_pull_ms=landscape.ms(pull_s),
        container_start_ms=landscape.ms(start_s),
    )


def vm_type(name, cores=1, cost=10.0, provider="private", startup_s=60, pool_limit=None):
    return landscape.VmType(
        id=name,
        provider=provider,
        cpu_supply=cores * 100.0,
        ram_supply=float("inf"),
        btu_ms=300_000,
        cost_per_btu=cost,
        startup_ms=landscape.ms(startup_s),
        pool_limit=pool_limit,
    )


def instance(structure, services, service_names=None, deadline_ms=10_000_000, iid=1,
             penalty_rate=0.1, arrival_ms=0, loop_iterations=None):
    root = landscape.parse_structure(structure)
    model = landscape.ProcessModel(id=1, root=root)
    names = list(services)
    for i, node in enumerate(model.step_nodes):
        node.service = (service_names or names * len(model.step_nodes))[i]
    return landscape.make_instance(
        model,
        services,
        iid,
        arrival_ms=arrival_ms,
        deadline_ms=deadline_ms,
        penalty_rate=penalty_rate,
        loop_iterations=loop_iterations,
    )


@pytest.fixture
def abc_services():
    return {
        "A": service("A", cpu=45.0, duration_s=40),
        "B": service("B", cpu=75.0, duration_s=80),
        "C": service("C", cpu=75.0, duration_s=120),
    }


def preset_text(name):
    return importlib.resources.files("ffsipp.presets").joinpath(f"{name}.yaml").read_text()


@pytest.fixture
def smoke_scenario():
    return landscape.parse_scenario(preset_text("smoke"))
