import argparse
import logging
import sys

from pydantic import ValidationError

from config import settings
from exceptions import WhittleCheckError
from commands import baseline as baseline_command
from commands import compare as compare_command
from commands import evaluate as evaluate_command
from commands import simulate as simulate_command

logger = logging.getLogger("whittlecheck")

EXIT_OK = 0
EXIT_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="whittlecheck",
        description="Decision-focused evaluation of Whittle-index intervention planning",
    )
    parser.add_argument("--version", action="version", version=f"{settings.APP_NAME} {settings.APP_VERSION}")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Include command routers
    simulate_command.register(subparsers)
    evaluate_command.register(subparsers)
    baseline_command.register(subparsers)
    compare_command.register(subparsers)
    return parser


def _first_error(exc: ValidationError) -> str:
    err = exc.errors()[0]
    where = ".".join(str(part) for part in err.get("loc", ())) or "input"
    return f"{where}: {err.get('msg')}"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        files = args.handler(args)
    except ValidationError as exc:
        print(f"error: {_first_error(exc)}", file=sys.stderr)
        return EXIT_ERROR
    except (WhittleCheckError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for path in files:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
