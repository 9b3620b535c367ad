"""Entry point: configure logging once, then hand over to the click group."""
import sys

import click

from cli import cli
from decorators import EXIT_FAILURE, EXIT_OK
from logger import setup_logging

logger = setup_logging()

EXIT_INTERRUPTED = 130


def main():
    try:
        code = cli(prog_name="ddlab", standalone_mode=False)
    except (click.exceptions.Abort, KeyboardInterrupt):
        logger.warning("Interrupted; artifacts written so far are kept")
        sys.exit(EXIT_INTERRUPTED)
    except click.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        sys.exit(EXIT_FAILURE)
    # commands return None; a raised Exit comes back as its code
    sys.exit(code if isinstance(code, int) else EXIT_OK)


if __name__ == "__main__":
    main()
