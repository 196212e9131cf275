"""``tentpitcher`` command line: ``run`` meshes a domain, ``verify`` re-checks the output."""

from __future__ import annotations

import json
import logging
import os
import sys

import click

from ..constraints import ConstraintParams
from ..errors import TentPitcherError
from ..pitcher import MODES, PitchPolicy, make_driver
from .io import load_field, load_mesh, read_events, read_vtk, write_events, write_vtk
from .solver import MockSolver
from .verify import run_artifacts, run_config, verify_suite

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _configure_logging() -> None:
    name = os.environ.get("TENTPITCHER_LOG_LEVEL", "error").lower()
    if name not in LOG_LEVELS:
        raise click.UsageError(f"TENTPITCHER_LOG_LEVEL must be one of {sorted(LOG_LEVELS)}")
    logging.basicConfig(level=LOG_LEVELS[name], format="%(levelname)s %(name)s: %(message)s")


class _Element:
    """Element rebuilt from a VTK file: corners only."""

    def __init__(self, coords, labels):
        self.coords = coords
        self.labels = labels


def _title(config: dict, artifacts: dict) -> str:
    meta = dict(config)
    for key in ("count_bound", "max_degree", "initial_max_degree", "classes_per_root"):
        if artifacts.get(key) is not None:
            meta[key] = artifacts[key]
    return json.dumps(meta, separators=(",", ":"))


@click.group()
def main():
    """Tent Pitcher spacetime meshing."""
    _configure_logging()


@main.command()
@click.option("--mesh", "mesh_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Space mesh in .smesh format.")
@click.option("--field", "field_path", type=click.Path(exists=True, dir_okay=False),
              help="Causal slope field as JSON; constant 1 when omitted.")
@click.option("--mode", type=click.Choice(MODES), default="linear", show_default=True)
@click.option("--epsilon", type=float, default=0.5, show_default=True)
@click.option("--phi-bar", type=float, default=None, help="Adaptive threshold; defaults to (1+3ε)/4.")
@click.option("--gamma", type=float, default=0.5, show_default=True)
@click.option("--delta", type=float, default=1e-9, show_default=True)
@click.option("--horizon", type=int, default=1, show_default=True)
@click.option("--lookahead", type=int, default=1, show_default=True)
@click.option("--target-time", type=float, default=1.0, show_default=True)
@click.option("--heuristic", type=click.Choice(["global-min", "random-local-min", "max-guarantee"]),
              default="global-min", show_default=True)
@click.option("--budget", type=int, default=10**6, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--solver-scale", type=click.Path(exists=True, dir_okay=False),
              help="Target length-scale field; enables the mock solver.")
@click.option("--xi1", type=float, default=1.0, show_default=True)
@click.option("--xi2", type=float, default=0.25, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="VTK output.")
@click.option("--log", "log_path", required=True, type=click.Path(dir_okay=False),
              help="JSONL event log.")
def run(mesh_path, field_path, mode, epsilon, phi_bar, gamma, delta, horizon, lookahead,
        target_time, heuristic, budget, seed, solver_scale, xi1, xi2, out, log_path):
    """Mesh MESH x [0, TARGET_TIME] and write the elements and the event log."""
    from ..cones.field import WavespeedField

    try:
        mesh = load_mesh(mesh_path)
        field = load_field(field_path) if field_path else WavespeedField.constant(1.0)
        params = ConstraintParams(epsilon, phi_bar, gamma, delta)
        policy = PitchPolicy(mode, heuristic, params, horizon, lookahead, target_time, budget, seed)
        solver = MockSolver(load_field(solver_scale), xi1, xi2) if solver_scale else None
        driver = make_driver(mesh, policy, field, solver)
        spacetime, report = driver.run()
    except TentPitcherError as exc:
        raise click.ClickException(str(exc)) from None
    artifacts = run_artifacts(driver)
    artifacts["count_bound"] = report.count_bound
    config = run_config(policy, field)
    write_vtk(spacetime, out, title=_title(config, artifacts))
    write_events(driver.events, log_path)
    click.echo(f"elements {report.elements}  patches {report.patches}  pitches {report.pitches}")
    click.echo(f"min aspect {report.min_aspect:.6g}  mean aspect {report.mean_aspect:.6g}")
    click.echo(f"min tentpole {report.min_tentpole:.6g}  count bound {report.count_bound}")
    click.echo(f"wall time {report.wall_time:.3f}s")


@main.command()
@click.option("--log", "log_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mesh-out", "vtk_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--field", "field_path", type=click.Path(exists=True, dir_okay=False),
              help="Field used for the run; enables the facet-by-facet causality check.")
def verify(log_path, vtk_path, field_path):
    """Re-check a finished run; exit code 0 only when every check passes."""
    try:
        events = read_events(log_path)
        data = read_vtk(vtk_path)
        field = load_field(field_path) if field_path else None
    except TentPitcherError as exc:
        raise click.ClickException(str(exc)) from None
    try:
        meta = json.loads(data["title"])
    except json.JSONDecodeError:
        meta = {}
    dim = 2 if data["types"] and data["types"][0] == 10 else 1
    labels_of = data["cell_data"]
    elements = []
    for i, cell in enumerate(data["cells"]):
        coords = data["points"][cell][:, : dim + 1]
        labels = ["implicit"] * len(cell)
        for name in ("outflow", "inflow"):
            if name in labels_of and labels_of[name][i] >= 0:
                labels[labels_of[name][i]] = name
        elements.append(_Element(coords, tuple(labels)))
    artifacts = {"events": events, "field": field}
    artifacts.update({k: meta[k] for k in ("count_bound", "max_degree", "initial_max_degree",
                                           "classes_per_root") if k in meta})
    report = verify_suite(elements, artifacts, meta)
    for line in report.lines():
        click.echo(line)
    sys.exit(0 if report.ok else 1)


if __name__ == "__main__":
    main()
