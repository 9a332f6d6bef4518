from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from dotenv import load_dotenv

from metameta.cli.commands import cmd_eval, cmd_make_data, cmd_train
from metameta.errors import ConfigError, MetaMetaError
from metameta.logger import configure_logging, get_logger
from metameta.types import TrainMethod

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

logger = get_logger(__name__)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metameta", description="Meta-meta classification for one-shot one-vs-all learning."
    )
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING"])
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a model and write a checkpoint")
    train.add_argument("--config", required=True, help="experiment JSON")
    train.add_argument("--method", required=True, choices=[m.value for m in TrainMethod])
    train.add_argument("--warm-start", default=None, help="checkpoint to start e2e from")
    train.add_argument("--out", required=True, help="checkpoint path")
    train.add_argument("--log", default=None, help="run log path (default: <out>.runlog.jsonl)")
    train.add_argument("--threads", type=_positive_int, default=1)
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate methods on meta-test episodes")
    ev.add_argument("--config", required=True)
    ev.add_argument(
        "--checkpoint", required=True, action="append", help="may be given more than once"
    )
    ev.add_argument("--methods", required=True, help="comma-separated method ids")
    ev.add_argument("--n-problems", type=_positive_int, default=None)
    ev.add_argument("--out", required=True, help="report path (.csv or .md)")
    ev.add_argument("--fiveway", action="store_true", help="five-way episodes instead of OvA")
    ev.add_argument("--threads", type=_positive_int, default=1)
    ev.set_defaults(func=cmd_eval)

    data = sub.add_parser("make-data", help="write a synthetic modal-mixture bank as MMFB")
    data.add_argument("--spec", required=True, help="modal mixture spec JSON")
    data.add_argument("--out", required=True, help="output prefix")
    data.set_defaults(func=cmd_make_data)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv(override=False)
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except ConfigError as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (MetaMetaError, OSError) as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
