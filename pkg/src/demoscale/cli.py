"""Command-line client for the demonstration-scaling pipeline.

Every subcommand is a thin call against the HTTP API. Without --server the
service runs in-process on the local workspace; with --server the same
requests go to a remote instance. ``review-serve`` starts a server for the
browser review UI.
"""

from __future__ import annotations

import argparse
import json
import sys

from .client import PipelineClient, ServiceError
from .config import default_config, load_config
from .errors import DemoScaleError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demoscale",
        description="Scale one seed demonstration into a validated training set "
        "and train a behavioral-cloning policy on it.",
    )
    parser.add_argument("--config", help="YAML pipeline config (defaults: stock reach task)")
    parser.add_argument("--workdir", help="override the workspace directory")
    parser.add_argument("--server", help="base URL of a running service (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("record", help="record the seed demonstration with the scripted oracle")
    sub.add_parser("detect-keyposes", help="detect key poses on the seed demonstration")

    generate = sub.add_parser("generate", help="generate the candidate review batch")
    generate.add_argument("-n", type=int, default=None, help="batch size (default from config)")

    autovalidate = sub.add_parser(
        "autovalidate", help="scale the accepted set with automatic validation"
    )
    autovalidate.add_argument("--target", type=int, default=None,
                              help="accepted demonstrations to collect (default from config)")

    train = sub.add_parser("train", help="train a policy on a pipeline dataset")
    train.add_argument("--dataset", choices=("seed", "accepted", "scaled"), default="scaled")

    evaluate = sub.add_parser("eval", help="evaluate a trained policy")
    evaluate.add_argument("--dataset", choices=("seed", "accepted", "scaled"), default="scaled")

    pipeline = sub.add_parser("pipeline", help="run every stage headless")
    pipeline.add_argument("--auto-accept-all", action="store_true",
                          help="skip human review by accepting every candidate")

    serve = sub.add_parser("review-serve", help="serve the review API and browser UI")
    serve.add_argument("--host", default=None)
    serve.add_argument("--port", type=int, default=None)

    return parser


def _load(args) -> "PipelineConfig":
    config = load_config(args.config) if args.config else default_config()
    if args.workdir:
        config.workdir = type(config.workdir)(args.workdir)
    return config


def _client(args) -> PipelineClient:
    if args.server:
        return PipelineClient(base_url=args.server)
    from .service import create_app  # deferred: not needed for --server mode

    return PipelineClient(app=create_app(_load(args)))


def _emit(summary: dict) -> None:
    print(json.dumps(summary, indent=2, sort_keys=True))


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "review-serve":
            return _serve(args)
        client = _client(args)
        if args.command == "record":
            _emit(client.record())
        elif args.command == "detect-keyposes":
            _emit(client.detect_keyposes())
        elif args.command == "generate":
            _emit(client.generate(n=args.n))
        elif args.command == "autovalidate":
            _emit(client.autovalidate(target=args.target))
        elif args.command == "train":
            _emit(client.train(dataset_role=args.dataset))
        elif args.command == "eval":
            _emit(client.evaluate(dataset_role=args.dataset))
        elif args.command == "pipeline":
            _emit(client.pipeline(auto_accept_all=args.auto_accept_all))
        return 0
    except ServiceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DemoScaleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = _load(args)
    host = args.host or config.review.host
    port = args.port or config.review.port
    app = create_app(config)
    print(f"review service on http://{host}:{port} (workspace {config.workdir})")
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
