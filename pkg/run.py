from __future__ import annotations

import logging
import sys

from app.presentation.cli import cli

if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    cli(sys.argv[1:], prog_name="prudentwalk")
