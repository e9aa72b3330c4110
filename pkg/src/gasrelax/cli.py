"""Command line: ``gasrelax run|validate|schema``.

Exit codes: 0 success, 2 configuration error, 3 runtime or tolerance failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, config_schema, parse_config
from .runner import RunError, run

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _report(kind, errors, experiment=None):
    doc = {"status": "error", "kind": kind, "errors": errors}
    if experiment:
        doc["experiment"] = experiment
    print(json.dumps(doc), file=sys.stderr)


def _load(path, seed=None):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from None
    cfg = parse_config(text)
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    return cfg


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="gasrelax", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--output-dir")
    p_run.add_argument("--seed", type=_u64)
    p_run.add_argument("--workers", type=int)
    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("--config", required=True)
    sub.add_parser("schema", help="print the config JSON schema")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "schema":
        print(json.dumps(config_schema(), indent=2))
        return EXIT_OK
    try:
        cfg = _load(args.config, getattr(args, "seed", None))
        if getattr(args, "workers", None) is not None:
            if args.workers < 1:
                raise ConfigError(["workers must be >= 1"])
            cfg = cfg.model_copy(update={"workers": args.workers})
    except ConfigError as exc:
        _report("config", exc.errors)
        return EXIT_CONFIG
    if args.command == "validate":
        print(json.dumps({"status": "ok", "experiment": cfg.experiment}))
        return EXIT_OK
    try:
        manifest = run(cfg, args.output_dir)
    except RunError as exc:
        _report("runtime", [str(exc)], exc.experiment)
        return EXIT_RUNTIME
    print(json.dumps({"status": "ok", "experiment": cfg.experiment, "outputs": sorted(manifest["outputs"])}))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
