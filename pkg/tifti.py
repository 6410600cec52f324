"""Command-line entry point for TIFTI."""
import logging
import sys
from typing import List, Optional

from config import LOG_FORMAT, LOG_LEVEL
from handlers.commands import build_parser, run

# Configure logging
logging.basicConfig(
    level=LOG_LEVEL,
    format=LOG_FORMAT,
)
logger = logging.getLogger(__name__)


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits with 2 on usage errors and 0 on --help
        return int(e.code or 0)

    try:
        return run(args.command, args)
    except (ValueError, FileNotFoundError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"tifti {args.command}: error: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        logger.info("Stopped by user")
        return 1
    except Exception as e:
        logger.error(f"Fatal error: {e}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
