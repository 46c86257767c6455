"""Serve the sidecar: ``rerank-sidecar [--config FILE] [--port N] ...``"""

from __future__ import annotations

import argparse
import logging
import sys

import uvicorn

from rerank_sidecar.app import create_app
from rerank_sidecar.config import SidecarConfig
from rerank_sidecar.scorers import ModelLoadError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rerank-sidecar", description=__doc__)
    parser.add_argument("--config", default=None, help="YAML config with registry/device/max_batch/port")
    parser.add_argument("--model", action="append", default=[], metavar="ID=IDENTIFIER",
                        help="registry entry override; repeatable")
    parser.add_argument("--host", default=None)
    parser.add_argument("--port", type=int, default=None)
    parser.add_argument("--device", default=None)
    parser.add_argument("--max-batch", type=int, default=None)
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    config = SidecarConfig.from_file(args.config) if args.config else SidecarConfig()
    if args.model:
        registry = {}
        for spec in args.model:
            if "=" not in spec:
                parser.error(f"--model expects ID=IDENTIFIER, got {spec!r}")
            backend_id, identifier = spec.split("=", 1)
            registry[backend_id] = identifier
        config.registry = registry
    if args.host is not None:
        config.host = args.host
    if args.port is not None:
        config.port = args.port
    if args.device is not None:
        config.device = args.device
    if args.max_batch is not None:
        config.max_batch = args.max_batch

    try:
        app = create_app(config)
    except ModelLoadError as e:
        print(f"refusing to start: {e}", file=sys.stderr)
        return 1
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
