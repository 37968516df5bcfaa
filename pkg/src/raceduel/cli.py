"""Command-line client for the workbench service.

By default every command talks to an in-process instance of the service app
(no socket, fully reproducible from configs and seeds); --server targets a
running instance instead. File IO stays on the client side: the service is
pure compute.

Exit codes: 0 success, 2 configuration/validation error, 3 numeric
divergence.
"""

from __future__ import annotations

import argparse
import base64
import csv
import json
import sys
from pathlib import Path

import httpx

EXIT_CONFIG = 2
EXIT_DIVERGED = 3

TRACE_FIELDS = ["iteration", "mean_reward", "t_s", "lambda1", "lambda2",
                "wall_contacts"]


def fail(message: str, code: int = EXIT_CONFIG):
    print(f"error: {message}", file=sys.stderr)
    sys.exit(code)


def make_client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    # in-process ASGI client: same wire format as a live server, no socket
    from starlette.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app(), raise_server_exceptions=False)


def post(client: httpx.Client, path: str, payload: dict) -> dict:
    resp = client.post(path, json=payload)
    if resp.status_code == 409:
        fail(resp.json().get("detail", "numeric divergence"), EXIT_DIVERGED)
    if resp.status_code >= 400:
        fail(f"{path}: {resp.text}")
    return resp.json()


def read_json(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        fail(f"file not found: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as e:
        fail(f"invalid JSON in {path}: {e}")


def parse_agent_spec(spec: str) -> dict:
    """kind[:key=value,...] with keys speed, noise, checkpoint."""
    kind, _, rest = spec.partition(":")
    if kind not in ("lqr", "scripted", "policy", "policy-e2e"):
        fail(f"unknown agent kind {kind!r} "
             "(expected lqr|scripted|policy|policy-e2e)")
    out = {"kind": kind}
    if rest:
        for item in rest.split(","):
            key, _, value = item.partition("=")
            if key == "speed":
                out["target_speed"] = float(value)
            elif key == "noise":
                out["noise_std"] = float(value)
            elif key == "checkpoint":
                p = Path(value)
                if not p.exists():
                    fail(f"checkpoint not found: {value}")
                out["checkpoint_b64"] = base64.b64encode(
                    p.read_bytes()
                ).decode("ascii")
            else:
                fail(f"unknown agent option {key!r}")
    if kind in ("policy", "policy-e2e") and "checkpoint_b64" not in out:
        fail(f"{kind} agent needs checkpoint=PATH")
    return out


def cmd_generate_tracks(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with make_client(args.server) as client:
        body = post(client, "/tracks/generate", {
            "seed": args.seed,
            "half_width": args.half_width,
            "n_lanes": args.n_lanes,
            "checkpoint_spacing": args.checkpoint_spacing,
        })
    for i, track in enumerate(body["tracks"]):
        meta = track.get("meta", {})
        name = (f"track_{i:02d}_{meta.get('direction', 'x').lower()}"
                f"_{meta.get('style', 'x')}.json")
        (out_dir / name).write_text(json.dumps(track))
        print(out_dir / name)
    return 0


def cmd_compute_raceline(args) -> int:
    track = read_json(args.track)
    with make_client(args.server) as client:
        body = post(client, "/raceline/compute", {
            "track": track,
            "iterations": args.iterations,
            "margin": args.margin,
        })
    Path(args.out).write_text(json.dumps(body["raceline"]))
    print(args.out)
    return 0


def _load_train_request(args) -> dict:
    cfg = read_json(args.config)
    base = Path(args.config).resolve().parent
    req: dict = {}
    for key in ("hidden_sizes", "episode_len", "seed", "ppo", "schedule"):
        if key in cfg:
            req[key] = cfg[key]
    if args.seed is not None:
        req["seed"] = args.seed

    def resolve(value):
        # path strings resolve relative to the config file itself
        if isinstance(value, str):
            p = Path(value)
            if not p.is_absolute():
                p = base / p
            return read_json(str(p))
        return value

    if cfg.get("track") is not None:
        req["track"] = resolve(cfg["track"])
    if cfg.get("vehicle") is not None:
        req["vehicle"] = resolve(cfg["vehicle"])
    req["use_curriculum"] = not args.no_curriculum
    req["use_cbf"] = not args.no_cbf
    return req


def cmd_train(args) -> int:
    req = _load_train_request(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with make_client(args.server) as client:
        body = post(client, "/train/run", req)
    ckpt = out_dir / "policy.bin"
    ckpt.write_bytes(base64.b64decode(body["checkpoint_b64"]))
    trace_path = out_dir / "reward_trace.csv"
    with trace_path.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=TRACE_FIELDS)
        writer.writeheader()
        for row in body["trace"]:
            writer.writerow({k: row[k] for k in TRACE_FIELDS})
    print(ckpt)
    print(trace_path)
    return 0


def cmd_race(args) -> int:
    track = read_json(args.track)
    raceline = read_json(args.raceline) if args.raceline else None
    req = {
        "track": track,
        "raceline": raceline,
        "agent_a": parse_agent_spec(args.agent_a),
        "agent_b": parse_agent_spec(args.agent_b),
        "races": args.races,
        "laps": args.laps,
        "seed": args.seed,
        "planner_budget": args.planner_budget,
        "collect_traces": args.traces,
    }
    if args.vehicle:
        req["vehicle"] = read_json(args.vehicle)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with make_client(args.server) as client:
        body = post(client, "/race/run", req)
    report_path = out_dir / "report.json"
    report_path.write_text(json.dumps(body["report"], indent=2))
    print(report_path)
    if args.traces and body.get("traces"):
        for k, trace in enumerate(body["traces"]):
            path = out_dir / f"race_{k:03d}_trace.csv"
            if not trace:
                continue
            with path.open("w", newline="") as f:
                writer = csv.DictWriter(f, fieldnames=list(trace[0].keys()))
                writer.writeheader()
                writer.writerows(trace)
            print(path)
    return 0


EVAL_FIELDS = ["pair", "races", "wins_a", "wins_b", "no_winner",
               "avg_lap_time_a", "avg_lap_time_b", "avg_lateral_a",
               "avg_lateral_b", "wall_collisions_a", "wall_collisions_b",
               "from_behind_a", "from_behind_b"]


def cmd_evaluate(args) -> int:
    if not args.reports:
        fail("no report files given")
    reports = [read_json(p) for p in args.reports]
    with make_client(args.server) as client:
        body = post(client, "/evaluate", {"reports": reports})
    with Path(args.out).open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=EVAL_FIELDS)
        writer.writeheader()
        for row in body["summary"]:
            writer.writerow({k: row[k] for k in EVAL_FIELDS})
    print(args.out)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="raceduel",
        description="head-to-head racing workbench (thin client)",
    )
    parser.add_argument("--server", default=None,
                        help="URL of a running service (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-tracks", help="write the 16 training tracks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--half-width", type=float, default=0.8,
                   dest="half_width")
    p.add_argument("--n-lanes", type=int, default=3, dest="n_lanes")
    p.add_argument("--checkpoint-spacing", type=float, default=1.6,
                   dest="checkpoint_spacing")
    p.set_defaults(func=cmd_generate_tracks)

    p = sub.add_parser("compute-raceline", help="minimum-curvature raceline")
    p.add_argument("--track", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iterations", type=int, default=60)
    p.add_argument("--margin", type=float, default=0.15)
    p.set_defaults(func=cmd_compute_raceline)

    p = sub.add_parser("train", help="train a policy (desk scale)")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--no-curriculum", action="store_true")
    p.add_argument("--no-cbf", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("race", help="run a seeded match between two agents")
    p.add_argument("--track", required=True)
    p.add_argument("--raceline", default=None)
    p.add_argument("--agent-a", required=True, dest="agent_a")
    p.add_argument("--agent-b", required=True, dest="agent_b")
    p.add_argument("--races", type=int, default=20)
    p.add_argument("--laps", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--planner-budget", type=int, default=128,
                   dest="planner_budget")
    p.add_argument("--vehicle", default=None,
                   help="vehicle parameter JSON (flat VehicleParams keys)")
    p.add_argument("--out", required=True)
    p.add_argument("--traces", action="store_true")
    p.set_defaults(func=cmd_race)

    p = sub.add_parser("evaluate", help="merge match reports into a summary")
    p.add_argument("reports", nargs="*")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
