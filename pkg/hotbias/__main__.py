"""Entry point for `python -m hotbias`."""

from __future__ import annotations

import sys

from hotbias.cli import main

if __name__ == "__main__":
    sys.exit(main())
