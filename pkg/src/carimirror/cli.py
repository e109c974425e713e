"""Thin CLI client for the carimirror service.

Every subcommand posts to the corresponding service endpoint; with no
--server (or CARIMIRROR_SERVER) the ASGI app is mounted in-process, so the
same HTTP layer runs either way. `carimirror serve` starts a network server.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import httpx

STAGES = ("synth", "static", "texture", "track", "translate", "render")


def _client(server: str | None) -> httpx.Client:
    server = server or os.environ.get("CARIMIRROR_SERVER", "")
    if server:
        return httpx.Client(base_url=server, timeout=None)
    # in-process mode still goes through the HTTP layer: starlette's
    # TestClient is a sync httpx.Client over an ASGI portal
    from starlette.testclient import TestClient

    from .service import app
    return TestClient(app)


def _run_stage(stage: str, args) -> int:
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(json.dumps({"error": "config", "message": f"{args.config}: {exc}"}),
                  file=sys.stderr)
            return 2
    else:
        config = {}
    body = {"config": config, "out_dir": args.out}
    if args.seed is not None:
        body["seed"] = args.seed
    with _client(args.server) as client:
        resp = client.post(f"/v1/{stage}", json=body)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        print(json.dumps({"status": resp.status_code, "detail": detail}), file=sys.stderr)
        return 2 if resp.status_code == 422 else 1
    out = resp.json()
    print(json.dumps({"command": out["command"], "out_dir": out["out_dir"],
                      "config_hash": out["manifest"]["config_hash"],
                      "outputs": out["manifest"]["outputs"]}, indent=1))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="carimirror",
        description="video-to-3D-caricature pipeline (thin client over the service)")
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        p.add_argument("--config", required=False, help="pipeline config JSON path")
        p.add_argument("--out", required=True, help="output artifact directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--server", default=None,
                       help="service URL (default: in-process app, or $CARIMIRROR_SERVER)")
    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8321)

    args = parser.parse_args(argv)
    if args.command == "serve":
        import uvicorn

        from .service import app
        uvicorn.run(app, host=args.host, port=args.port)
        return 0
    return _run_stage(args.command, args)


if __name__ == "__main__":
    sys.exit(main())
