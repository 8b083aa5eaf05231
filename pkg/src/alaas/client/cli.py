"""``alaas`` command line.

Exit codes: 0 success, 1 usage error, 2 server or job error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from alaas.client.sdk import DEFAULT_SERVER, ALClient, ClientConfig
from alaas.errors import ALaaSError, ClientError, ConfigError, UnknownStrategy, ValidationFailed
from alaas.models import ALReport, StageMetrics, StrategyKind

EXIT_OK, EXIT_USAGE, EXIT_SERVER = 0, 1, 2

EPOCH = "1970-01-01T00:00:00Z"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="alaas", description="Active learning service client.")
    p.add_argument("--server", default=os.environ.get("ALAAS_SERVER", DEFAULT_SERVER),
                   help="server URL (env ALAAS_SERVER)")
    p.add_argument("--timeout-ms", type=float, default=10_000, help="per-request timeout")
    p.add_argument("--poll-interval-ms", type=float, default=200)
    p.add_argument("--max-poll-ms", type=float, default=3_600_000)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    push = sub.add_parser("push", help="register a dataset")
    src = push.add_mutually_exclusive_group(required=True)
    src.add_argument("--dir", type=Path, help="local directory, expanded to sorted file:// URIs")
    src.add_argument("--uris", nargs="+", help="explicit URIs")
    push.add_argument("--name", default="")
    push.add_argument("--owner", default="")

    query = sub.add_parser("query", help="run one AL round and print the report")
    query.add_argument("--dataset", required=True)
    query.add_argument("--strategy", help="strategy name or alias (default: server config)")
    query.add_argument("--budget", type=int, help="default: server config")
    query.add_argument("--seed", type=int, default=0)
    query.add_argument("--batch-size", type=int)
    query.add_argument("--labeled-from", type=Path, action="append", default=[], metavar="REPORT",
                       help="prior report JSON whose selections count as labeled (repeatable)")
    query.add_argument("--out", type=Path, help="write the report here instead of stdout")
    query.add_argument("--deterministic", action="store_true",
                       help="zero job id, timestamps and timing so repeated runs are byte-identical")

    status = sub.add_parser("status", help="show a job")
    status.add_argument("--job", required=True)

    cancel = sub.add_parser("cancel", help="cancel a job")
    cancel.add_argument("--job", required=True)

    serve = sub.add_parser("serve", help="run the server in this process")
    serve.add_argument("--config", default=os.environ.get("ALAAS_CONFIG"), help="YAML config (env ALAAS_CONFIG)")
    return p


def labeled_from(paths: list[Path]) -> set[int]:
    ids: set[int] = set()
    for path in paths:
        try:
            report = ALReport.from_dict(json.loads(path.read_text()))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"cannot read report {path}: {exc}") from None
        ids.update(report.ids)
    return ids


def report_json(report: ALReport, deterministic: bool = False) -> str:
    d = report.to_dict()
    if deterministic:
        d["job_id"] = ""
        d["completed_at"] = EPOCH
        d["timing"] = StageMetrics.zero().to_dict()
    return json.dumps(d, indent=2, sort_keys=True) + "\n"


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run(args: argparse.Namespace) -> int:
    if args.command == "serve":
        from alaas.server import load_config, serve

        if not args.config:
            raise UsageError("serve needs --config or ALAAS_CONFIG")
        logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
        return serve(load_config(args.config))

    config = ClientConfig(args.server, args.timeout_ms, args.poll_interval_ms, args.max_poll_ms)
    with ALClient(config) as client:
        if args.command == "push":
            source = args.dir if args.dir is not None else args.uris
            if args.dir is not None and not args.dir.is_dir():
                raise UsageError(f"{args.dir} is not a directory")
            dataset_id = client.push_dataset(source, args.name, args.owner)
            _emit({"dataset_id": dataset_id})
        elif args.command == "query":
            if args.budget is not None and args.budget < 1:
                raise UsageError("--budget must be a positive integer")
            strategy = StrategyKind.parse(args.strategy) if args.strategy else None
            report = client.query_and_wait(args.dataset, strategy, args.budget, args.seed,
                                           labeled_from(args.labeled_from), args.batch_size)
            text = report_json(report, args.deterministic)
            if args.out:
                args.out.write_text(text)
            else:
                sys.stdout.write(text)
        elif args.command == "status":
            _emit(client.status(args.job))
        elif args.command == "cancel":
            _emit({"job_id": args.job, "state": client.cancel(args.job)["state"]})
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return run(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnknownStrategy as exc:
        print(f"usage error: {exc.message}", file=sys.stderr)
        return EXIT_USAGE
    except ClientError as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return EXIT_SERVER
    except ConfigError as exc:
        print(f"config error: {exc.message}", file=sys.stderr)
        return EXIT_SERVER
    except ValidationFailed as exc:
        print(f"usage error: {exc.message}", file=sys.stderr)
        return EXIT_USAGE
    except ALaaSError as exc:
        print(f"error: {exc.code}: {exc.message}", file=sys.stderr)
        return EXIT_SERVER


if __name__ == "__main__":
    sys.exit(main())
