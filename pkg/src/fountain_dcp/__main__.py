"""python -m fountain_dcp delegates to the command-line entry point."""

import sys

from .cli import main

sys.exit(main())
