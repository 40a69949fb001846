"""Command-line entry point.

Exit codes: 0 success, 2 usage or configuration error, 3 fatal runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import load_config
from .errors import ConfigError, KernelScientistError
from .knowledge import slugify
from .orchestrator import Orchestrator, build_gateway

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FATAL = 3

DEFAULT_CONFIG = "kernel_scientist.yaml"

logger = logging.getLogger("kernel_scientist")


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kernel-scientist", description="LLM-driven evolutionary GPU kernel optimisation.")
    parser.add_argument("-w", "--workspace", type=Path, default=Path("."), help="workspace directory (default: .)")
    parser.add_argument("-c", "--config", type=Path, help=f"run config (default: <workspace>/{DEFAULT_CONFIG})")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("seed", help="evaluate seed kernels and add them to the population")
    p.add_argument("sources", nargs="*", type=Path, help="seed source files (default: seeds listed in the config)")

    p = sub.add_parser("run", help="run generations of the optimisation loop")
    p.add_argument("-n", "--generations", type=int, required=True)
    p.add_argument("--config", dest="run_config", type=Path)

    sub.add_parser("status", help="print the population table and the best kernel")

    p = sub.add_parser("export", help="write the best kernel, its lineage and generation logs")
    p.add_argument("dir", type=Path)

    p = sub.add_parser("digest-doc", help="have the LLM digest a reference document into findings")
    p.add_argument("path", type=Path)
    p.add_argument("--title")

    p = sub.add_parser("add-doc", help="add a findings document verbatim")
    p.add_argument("path", type=Path)
    p.add_argument("--title")
    p.add_argument("--id", dest="doc_id")
    return parser


def _config_path(args: argparse.Namespace) -> Path:
    explicit = getattr(args, "run_config", None) or args.config
    return explicit if explicit is not None else args.workspace / DEFAULT_CONFIG


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _title_for(path: Path, text: str) -> str:
    for line in text.splitlines():
        if line.startswith("#"):
            return line.lstrip("#").strip() or path.stem
    return path.stem


def _dispatch(args: argparse.Namespace) -> int:
    ws = args.workspace
    if args.command == "status":
        print(Orchestrator(ws).status())
        return EXIT_OK
    if args.command == "export":
        dest = Orchestrator(ws).export(args.dir)
        print(f"exported to {dest}")
        return EXIT_OK
    if args.command == "add-doc":
        body = _read(args.path)
        title = args.title or _title_for(args.path, body)
        doc = Orchestrator(ws).knowledge.add_manual_doc(
            title, body, doc_id=args.doc_id or slugify(args.path.stem), source_note=str(args.path)
        )
        print(f"added {doc.doc_id}")
        return EXIT_OK

    config = load_config(_config_path(args))
    if args.command == "seed":
        paths = args.sources or config.seed_paths
        if not paths:
            raise UsageError("seed needs at least one source file")
        orch = Orchestrator(ws, config)
        ids = orch.seed([_read(p) for p in paths])
        for rid, path in zip(ids, paths):
            print(f"{rid} {orch.population.get(rid).status.value} {path}")
        return EXIT_OK
    if args.command == "run":
        if args.generations < 0:
            raise UsageError("--generations must be nonnegative")
        orch = Orchestrator(ws, config, build_gateway(config))
        summary = orch.run(args.generations, report=print)
        print(json.dumps(summary, indent=2))
        return EXIT_OK
    if args.command == "digest-doc":
        raw = _read(args.path)
        orch = Orchestrator(ws, config, build_gateway(config))
        doc = orch.knowledge.digest_document(
            raw, config.task_description(), orch.gateway, title=args.title or args.path.stem, source_note=str(args.path)
        )
        print(f"digested {args.path} into {doc.doc_id}")
        return EXIT_OK
    raise UsageError(f"unknown command {args.command}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return _dispatch(args)
    except (UsageError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KernelScientistError, OSError) as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
