"""Command-line entry points: ``ffsipp run`` and ``ffsipp report``."""
from __future__ import annotations

import importlib.resources
import sys
from pathlib import Path

import click

from . import experiment
from .landscape import ScenarioError


def resolve_scenario(name: str) -> str:
    """Accept a file path or the name of a bundled preset."""
    if Path(name).exists():
        return name
    stem = name.removesuffix(".yaml")
    resource = importlib.resources.files("ffsipp.presets").joinpath(f"{stem}.yaml")
    if resource.is_file():
        return str(resource)
    presets = sorted(
        p.name.removesuffix(".yaml")
        for p in importlib.resources.files("ffsipp.presets").iterdir()
        if p.name.endswith(".yaml")
    )
    raise click.BadParameter(
        f"{name!r} is neither a file nor a preset (presets: {', '.join(presets)})"
    )


@click.group()
def main():
    """Cost-optimal scheduling of elastic processes onto leased VMs."""


@main.command(name="run")
@click.option("--scenario", required=True, help="Scenario file or bundled preset name.")
@click.option(
    "--approach",
    default="ffsipp,sipp",
    show_default=True,
    help="Comma-separated approaches to run.",
)
@click.option("--seeds", default="1,2,3", show_default=True, help="Comma-separated seeds.")
@click.option("--out", "out_dir", required=True, help="Output directory for reports.")
@click.option("--dump-lp", "dump_lp_dir", default=None, help="Directory for LP model dumps.")
@click.option("--sla-factor", type=float, default=None, help="Override the SLA factor.")
@click.option("--workers", type=int, default=None, help="Parallel worker processes.")
def run_cmd(scenario, approach, seeds, out_dir, dump_lp_dir, sla_factor, workers):
    """Execute seeded runs and write metrics, usage, audit, and aggregate files."""
    try:
        config = experiment.ExperimentConfig(
            scenario_path=resolve_scenario(scenario),
            approaches=tuple(a.strip() for a in approach.split(",") if a.strip()),
            seeds=tuple(int(s) for s in seeds.split(",") if s.strip()),
            out_dir=out_dir,
            sla_factor=sla_factor,
            dump_lp_dir=dump_lp_dir,
            max_workers=workers,
        )
        experiment.run_experiment(config)
    except (ScenarioError, ValueError) as exc:
        raise click.ClickException(str(exc))
    except OSError as exc:
        raise click.ClickException(f"cannot write outputs: {exc}")
    click.echo((Path(out_dir) / "aggregate.csv").read_text(), nl=False)


@main.command(name="report")
@click.option("--in", "in_dir", required=True, help="Directory holding metrics.csv.")
def report_cmd(in_dir):
    """Re-aggregate an existing metrics.csv."""
    try:
        rendered = experiment.report(in_dir)
    except (FileNotFoundError, ValueError) as exc:
        raise click.ClickException(str(exc))
    click.echo(rendered, nl=False)


if __name__ == "__main__":
    sys.exit(main())
