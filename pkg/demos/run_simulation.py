"""Simulate one seeded run of a bundled preset and print its metrics."""

import importlib.resources

from ffsipp import landscape, sim


def main() -> None:
    text = (
        importlib.resources.files("ffsipp.presets").joinpath("smoke.yaml").read_text()
    )
    scenario = landscape.parse_scenario(text)
    for approach in ("ffsipp", "sipp"):
        report = sim.run(scenario, approach, seed=1)
        print(
            f"{approach}: adherence {report.sla_adherence_pct:.2f}% "
            f"makespan {report.makespan_min:.2f} min "
            f"leasing {report.leasing_cost:.2f} "
            f"penalty {report.penalty_cost:.2f} "
            f"({report.rounds} rounds)"
        )
    print("last few controller actions:")
    for line in report.audit_log[-5:]:
        print(" ", line)


if __name__ == "__main__":
    main()
