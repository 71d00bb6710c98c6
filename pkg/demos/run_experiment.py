"""Run a small multi-seed experiment and show the emitted CSV files."""

import pathlib
import tempfile

from ffsipp import experiment


def main() -> None:
    out = pathlib.Path(tempfile.mkdtemp(prefix="ffsipp_demo_"))
    config = experiment.ExperimentConfig(
        scenario_path="smoke",
        approaches=("ffsipp", "sipp"),
        seeds=(1, 2),
        out_dir=str(out),
    )
    experiment.run_experiment(config)
    print("results in", out)
    for name in ("metrics.csv", "aggregate.csv"):
        print(f"--- {name} ---")
        print((out / name).read_text())


if __name__ == "__main__":
    main()
