"""Command-line front end.

Every experiment subcommand is a thin client: it spins up the service app
in-process and talks to it over ASGI, so the CLI exercises exactly the
same code paths (validation included) as a remote console would. Only
`serve` binds real sockets.
"""
from __future__ import annotations

import asyncio
import json
import sys
from pathlib import Path

import click
import httpx

from .harness.reports import (
    export_metrics,
    export_rows,
    metrics_from_dict,
    read_replay_log,
    write_replay_log,
)
from .net import TELEMETRY_PORT, UDP_COMMAND_PORT


def _request(method: str, path: str, payload: dict | None = None) -> dict:
    from .service.app import create_app

    async def go():
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport,
                                     base_url="http://teleosim") as client:
            r = await client.request(method, path, json=payload)
            return r.status_code, r.json()

    status, body = asyncio.run(go())
    if status >= 400:
        raise click.ClickException(body.get("detail", f"HTTP {status}"))
    return body


def _echo_metrics(doc: dict) -> None:
    m = metrics_from_dict(doc)
    click.echo(f"scene={m.scene} seed={m.seed} control={m.control} "
               f"nav_map={m.nav_map} completed={m.completed}")
    for t, c, s in zip(m.targets, m.commands_per_target, m.time_per_target):
        click.echo(f"  {t}: {c} commands, {s:.1f} s")
    click.echo(f"  total: {m.commands_total} commands, {m.time_total:.1f} s, "
               f"{m.distance:.1f} m, collisions={m.collisions}, "
               f"recoveries={m.recoveries}")


_scene = click.option("--scene", default="office", show_default=True,
                      help="Scene name or path to a scene JSON file.")
_seed = click.option("--seed", default=0, show_default=True, type=int)
_nav_map = click.option("--nav-map", default="projected", show_default=True,
                        type=click.Choice(["projected", "laser"]))
_operator = click.option("--operator", default="scripted", show_default=True,
                         type=click.Choice(["scripted", "posterior-stream"]))


@click.group()
def main() -> None:
    """Deterministic shared-control teleoperation simulator."""


@main.command("build-maps")
@_scene
@click.option("--out", type=click.Path(path_type=Path),
              help="Directory to write the map bundle into.")
@click.option("--force", is_flag=True, help="Overwrite a non-empty --out.")
def build_maps(scene: str, out: Path | None, force: bool) -> None:
    """Build the occupancy, laser-slice and projected nav maps for a scene."""
    body = _request("POST", "/maps/build", {
        "scene": scene, "out": str(out) if out else None, "force": force})
    click.echo(f"scene={body['scene']} "
               f"resolution={body['meta']['resolution']}")
    if body["out"]:
        click.echo(f"bundle written to {body['out']}")


@main.command("eval-maps")
@_scene
@_seed
@click.option("--n-commands", default=150, show_default=True, type=int)
@click.option("--out", type=click.Path(path_type=Path),
              help="Write the table (.csv or .json).")
@click.option("--force", is_flag=True)
def eval_maps(scene: str, seed: int, n_commands: int, out: Path | None,
              force: bool) -> None:
    """Drive random commands through both nav maps and tabulate safety."""
    body = _request("POST", "/experiments/map-eval", {
        "scene": scene, "seed": seed, "n_commands": n_commands})
    rows = body["rows"]
    for row in rows:
        click.echo(f"nav_map={row['nav_map']:<9} commands={row['commands']} "
                   f"collisions={row['collisions']} "
                   f"delocalizations={row['delocalizations']}")
    if out is not None:
        export_rows(rows, out, force=force)
        click.echo(f"table written to {out}")


def _course(scene: str, seed: int, nav_map: str, operator: str, control: str,
            out: Path | None, log: Path | None, force: bool) -> None:
    body = _request("POST", "/experiments/course", {
        "scene": scene, "seed": seed, "nav_map": nav_map,
        "operator": operator, "control": control})
    _echo_metrics(body["metrics"])
    if out is not None:
        export_metrics(metrics_from_dict(body["metrics"]), out, force=force)
        click.echo(f"metrics written to {out}")
    if log is not None:
        write_replay_log(body["log"], log, force=force)
        click.echo(f"event log written to {log}")


@main.command()
@_scene
@_seed
@_nav_map
@_operator
@click.option("--out", type=click.Path(path_type=Path),
              help="Write metrics (.csv or .json).")
@click.option("--log", type=click.Path(path_type=Path),
              help="Write the replayable event log (.jsonl).")
@click.option("--force", is_flag=True)
def course(scene: str, seed: int, nav_map: str, operator: str,
           out: Path | None, log: Path | None, force: bool) -> None:
    """Run the S-T1-T2-T3 target course under shared control."""
    _course(scene, seed, nav_map, operator, "shared", out, log, force)


@main.command()
@_scene
@_seed
@_operator
@click.option("--out", type=click.Path(path_type=Path))
@click.option("--log", type=click.Path(path_type=Path))
@click.option("--force", is_flag=True)
def manual(scene: str, seed: int, operator: str, out: Path | None,
           log: Path | None, force: bool) -> None:
    """Run the same course with autonomy off (direct heading control)."""
    _course(scene, seed, "projected", operator, "manual", out, log, force)


@main.command()
@click.argument("logfile", type=click.Path(exists=True, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path))
@click.option("--force", is_flag=True)
def replay(logfile: Path, out: Path | None, force: bool) -> None:
    """Recompute run metrics from a previously saved event log."""
    events = read_replay_log(logfile)
    body = _request("POST", "/replay", {"events": events})
    _echo_metrics(body["metrics"])
    if out is not None:
        export_metrics(metrics_from_dict(body["metrics"]), out, force=force)
        click.echo(f"metrics written to {out}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--telemetry-port", default=TELEMETRY_PORT, show_default=True,
              type=int, envvar="TELEOSIM_TELEMETRY_PORT",
              help="HTTP/websocket port for the console API.")
@click.option("--udp-port", default=UDP_COMMAND_PORT, show_default=True,
              type=int, envvar="TELEOSIM_UDP_PORT",
              help="UDP port accepting raw command packets.")
def serve(host: str, telemetry_port: int, udp_port: int) -> None:
    """Run the live service: HTTP API, telemetry websocket and UDP ingress."""
    import uvicorn

    from .service.app import create_app
    from .service.session import SessionRegistry, open_udp_listener

    registry = SessionRegistry()
    app = create_app(registry)

    async def go():
        udp = await open_udp_listener(registry, udp_port, host)
        click.echo(f"udp command ingress on {host}:{udp_port}")
        config = uvicorn.Config(app, host=host, port=telemetry_port,
                                log_level="info")
        try:
            await uvicorn.Server(config).serve()
        finally:
            udp.close()

    asyncio.run(go())


@main.group()
def bci() -> None:
    """Synthetic motor-imagery decoder utilities."""


@bci.command()
@_seed
@click.option("--runs", default=3, show_default=True, type=int)
@click.option("--trials-per-run", default=30, show_default=True, type=int)
@click.option("--out", type=click.Path(path_type=Path), required=True,
              help="Model file to write (.json).")
def calibrate(seed: int, runs: int, trials_per_run: int, out: Path) -> None:
    """Fit a decoding model on synthetic calibration trials."""
    import numpy as np

    from .bci.decoder import CalibrationError, calibrate as fit, save_model
    from .bci.synth import SyntheticEegConfig

    rng = np.random.default_rng(seed)
    try:
        result = fit(SyntheticEegConfig(), rng, runs=runs,
                     trials_per_run=trials_per_run)
    except CalibrationError as e:
        raise click.ClickException(str(e))
    save_model(out, result)
    click.echo(f"holdout accuracy {result.holdout_accuracy:.2f}")
    click.echo(f"model written to {out}")


@bci.command("run")
@click.option("--model", "model_path", type=click.Path(exists=True,
              path_type=Path), required=True)
@_seed
@click.option("--trials", default=20, show_default=True, type=int)
def bci_run(model_path: Path, seed: int, trials: int) -> None:
    """Stream synthetic single-intent trials through a saved model."""
    import numpy as np

    from .bci.decoder import OnlineDecoder, load_model
    from .bci.posterior import COMMANDS
    from .bci.synth import LABELS, SyntheticEegConfig, generate_trial

    result = load_model(model_path)
    cfg = SyntheticEegConfig()
    rng = np.random.default_rng(seed)
    correct = emitted = 0
    for i in range(trials):
        cls = int(rng.integers(2))
        decoder = OnlineDecoder(result)
        events = decoder.process(generate_trial(cfg, LABELS[cls], rng).data)
        got = events[0][1] if events else None
        emitted += got is not None
        correct += got == COMMANDS[cls]
        click.echo(f"trial {i:3d} intent={LABELS[cls]:<5} decoded={got}")
    click.echo(f"{emitted}/{trials} emitted, {correct}/{trials} correct")


if __name__ == "__main__":
    sys.exit(main())
