"""Command-line entry point: train a network JSON and write a result JSON."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .model import BuildError
from .profile import TrainProfile, desk_profile
from .train import train_eval


@click.command()
@click.option("--network", "network_path", required=True,
              type=click.Path(exists=True, path_type=Path),
              help="Network description JSON.")
@click.option("--profile", "profile_path", required=False,
              type=click.Path(exists=True, path_type=Path),
              help="Training profile JSON; defaults to the desk profile.")
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path),
              help="Where to write the result JSON.")
def main(network_path: Path, profile_path: Path | None, out_path: Path) -> None:
    network = json.loads(network_path.read_text())
    profile = TrainProfile.load(profile_path) if profile_path else desk_profile()
    try:
        result = train_eval(network, profile)
    except BuildError as error:
        out_path.write_text(json.dumps(
            {"accuracy_val": 0.0, "accuracy_test": 0.0, "status": "failed",
             "reason": str(error), "epochs_run": 0}, indent=2) + "\n")
        click.echo(f"build failed: {error}", err=True)
        sys.exit(1)
    out_path.write_text(json.dumps(result, indent=2) + "\n")
    if result["status"] == "failed":
        sys.exit(1)


if __name__ == "__main__":
    main()
