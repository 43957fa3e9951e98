"""Command-line client.

Talks to the HTTP service; by default it mounts the app in-process, so no
server has to run and results stay deterministic. Point --server at a
running instance to plan remotely.

Exit codes: 0 success, 1 input error, 2 infeasible, 3 enumeration guard.
"""

from __future__ import annotations

import csv
import json
import sys

import click
import httpx

from .planner import SWEEP_AXES, SWEEP_COLUMNS, STRATEGIES

EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_GUARD = 3


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    # In-process: mount the ASGI app behind a sync client, no server needed.
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from starlette.testclient import TestClient

    from .service import app  # deferred: keeps --help fast

    return TestClient(app, base_url="http://hetplan.local")


def _read_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(str(exc)) from exc


def _post(client, path, payload):
    resp = client.post(path, json=payload)
    if resp.status_code == 400:
        click.echo(f"error: {resp.json().get('detail')}", err=True)
        sys.exit(EXIT_INPUT)
    if resp.status_code == 422:
        click.echo(f"error: {resp.json().get('detail')}", err=True)
        sys.exit(EXIT_INPUT)
    resp.raise_for_status()
    return resp.json()


def _echo_json(payload):
    click.echo(json.dumps(payload, indent=2, sort_keys=True))


seed_option = click.option(
    "--seed", type=int, default=0, envvar="HETPLAN_SEED", show_default=True,
    help="Search seed (env HETPLAN_SEED).",
)
server_option = click.option(
    "--server", default=None, metavar="URL",
    help="Base URL of a running service; default runs in-process.",
)


@click.group()
def main():
    """Plan and simulate ML workflows on tiered infrastructure."""


@main.command()
@click.argument("instance_file", type=click.Path(exists=True, dir_okay=False))
@server_option
def validate(instance_file, server):
    """Check an instance file and report its shape."""
    with _client(server) as client:
        out = _post(client, "/validate", {"instance": _read_json(instance_file)})
    _echo_json(out)
    if out["status"] != "ok":
        sys.exit(EXIT_INPUT)


@main.command()
@click.argument("instance_file", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", type=click.Path(dir_okay=False),
              help="Write the plan JSON here.")
@click.option("--accuracy", type=float, default=None,
              help="Override the accuracy target.")
@click.option("--throughput", type=float, default=None,
              help="Override the throughput target (items/s).")
@click.option("--beam-ms", type=int, default=8, show_default=True)
@click.option("--top-k", type=int, default=3, show_default=True)
@click.option("--beam-wa", type=int, default=6, show_default=True)
@click.option("--orderings", type=int, default=4, show_default=True)
@click.option("--charge-mode", type=click.Choice(["full-hour", "utilization"]),
              default="full-hour", show_default=True)
@click.option("--bandwidth-cap", type=float, default=None,
              help="Per-edge-device outbound cap, bytes/s.")
@seed_option
@server_option
def optimize(instance_file, output, accuracy, throughput, beam_ms, top_k,
             beam_wa, orderings, charge_mode, bandwidth_cap, seed, server):
    """Find the cheapest plan meeting the accuracy and throughput targets."""
    options = {
        "beam_ms": beam_ms, "top_k": top_k, "beam_wa": beam_wa,
        "orderings": orderings, "seed": seed, "charge_mode": charge_mode,
        "bandwidth_cap": bandwidth_cap,
        "target_accuracy": accuracy, "target_throughput": throughput,
    }
    with _client(server) as client:
        out = _post(client, "/optimize", {
            "instance": _read_json(instance_file), "options": options,
        })
    if out["status"] != "ok":
        click.echo(f"infeasible: {out['message']}", err=True)
        sys.exit(EXIT_INFEASIBLE)
    plan = out["plan"]
    if output:
        from .instance import dumps_canonical

        with open(output, "w", encoding="utf-8") as fh:
            fh.write(dumps_canonical(plan))
    cost = plan["cost"]
    click.echo(f"compute  {cost['compute']:.6g} $/h")
    click.echo(f"network  {cost['network']:.6g} $/h")
    click.echo(f"total    {cost['total']:.6g} $/h")
    click.echo(f"qo_time  {out['qo_time_ms']:.2f} ms")
    if not output:
        _echo_json(plan)


@main.command()
@click.argument("instance_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--strategy", type=click.Choice(["bf", "ff"]), required=True,
              help="bf = best fit (same tier first), ff = first fit (cheapest).")
@click.option("-o", "--output", type=click.Path(dir_okay=False))
@click.option("--charge-mode", type=click.Choice(["full-hour", "utilization"]),
              default="full-hour", show_default=True)
@server_option
def baseline(instance_file, strategy, output, charge_mode, server):
    """Run a heuristic baseline assignment."""
    with _client(server) as client:
        out = _post(client, "/baseline", {
            "instance": _read_json(instance_file),
            "strategy": strategy, "charge_mode": charge_mode,
        })
    if out["status"] != "ok":
        click.echo("infeasible: baseline cannot cover the throughput target",
                   err=True)
        sys.exit(EXIT_INFEASIBLE)
    if output:
        from .instance import dumps_canonical

        with open(output, "w", encoding="utf-8") as fh:
            fh.write(dumps_canonical(out["plan"]))
    _echo_json(out["plan"])


@main.command("lower-bound")
@click.argument("instance_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--relax-a2", is_flag=True,
              help="Allow downward traffic, priced like the upward pair.")
@click.option("--max-enumeration", type=int, default=10_000_000,
              show_default=True)
@click.option("--charge-mode", type=click.Choice(["full-hour", "utilization"]),
              default="full-hour", show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False))
@server_option
def lower_bound(instance_file, relax_a2, max_enumeration, charge_mode, output,
                server):
    """Exhaustive minimum-cost plan (the optimizer's reference)."""
    with _client(server) as client:
        out = _post(client, "/lower-bound", {
            "instance": _read_json(instance_file),
            "relax_a2": relax_a2, "max_enumeration": max_enumeration,
            "charge_mode": charge_mode,
        })
    if out["status"] == "guard-exceeded":
        click.echo(
            f"enumeration guard: ~{out['estimate']} combinations exceeds "
            f"{out['limit']}", err=True,
        )
        sys.exit(EXIT_GUARD)
    if out["status"] != "ok":
        click.echo("infeasible: no plan meets the targets", err=True)
        sys.exit(EXIT_INFEASIBLE)
    if output:
        from .instance import dumps_canonical

        with open(output, "w", encoding="utf-8") as fh:
            fh.write(dumps_canonical(out["plan"]))
    _echo_json(out["plan"])


@main.command()
@click.argument("instance_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--plan", "plan_file", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--duration", type=float, default=300.0, show_default=True)
@click.option("--percentile", type=click.Choice(["P50", "P75", "P90"]),
              default=None)
@click.option("--jitter", type=float, default=0.0, show_default=True,
              help="Service-time coefficient of variation.")
@click.option("--mode", type=click.Choice(["virtual-time", "wall-clock"]),
              default="virtual-time", show_default=True)
@click.option("--allow-underprovisioned", is_flag=True)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False),
              help="Write a per-second sink throughput time series.")
@seed_option
@server_option
def simulate(instance_file, plan_file, duration, percentile, jitter, mode,
             allow_underprovisioned, csv_path, seed, server):
    """Execute a plan in the dataflow simulator and report what it did."""
    config = {
        "duration": duration, "percentile": percentile,
        "latency_jitter": jitter, "mode": mode, "seed": seed,
        "allow_underprovisioned": allow_underprovisioned,
    }
    with _client(server) as client:
        out = _post(client, "/simulate", {
            "instance": _read_json(instance_file),
            "plan": _read_json(plan_file),
            "config": config,
        })
    series = out.pop("sink_items_per_second")
    if csv_path:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["second", "items_at_sink"])
            for sec, n in enumerate(series):
                writer.writerow([sec, n])
    _echo_json(out)


@main.command()
@click.argument("instance_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--axis", type=click.Choice(list(SWEEP_AXES)), required=True)
@click.option("--values", required=True,
              help="Comma-separated axis values (e.g. '10,20,40' or '5:4,4:5').")
@click.option("--strategies", default="jb", show_default=True,
              help=f"Comma-separated subset of {','.join(STRATEGIES)}.")
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False),
              help="CSV output path (default stdout).")
@seed_option
@server_option
def sweep(instance_file, axis, values, strategies, jobs, output, seed, server):
    """Re-optimize along one axis and emit a plot-ready CSV."""
    raw_values = [v.strip() for v in values.split(",") if v.strip()]
    parsed = raw_values if axis == "tier_split" else [float(v) for v in raw_values]
    payload = {
        "instance": _read_json(instance_file),
        "sweep": {
            "axis": axis,
            "values": parsed,
            "strategies": [s.strip() for s in strategies.split(",") if s.strip()],
        },
        "seed": seed,
        "jobs": jobs,
    }
    with _client(server) as client:
        out = _post(client, "/sweep", payload)
    if out["status"] == "guard-exceeded":
        click.echo(
            f"enumeration guard: ~{out['estimate']} combinations exceeds "
            f"{out['limit']}", err=True,
        )
        sys.exit(EXIT_GUARD)
    rows = out["rows"]
    sink = open(output, "w", newline="", encoding="utf-8") if output else sys.stdout
    try:
        writer = csv.DictWriter(sink, fieldnames=list(SWEEP_COLUMNS))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    finally:
        if output:
            sink.close()


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
