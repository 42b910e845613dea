"""Module entry point so ``python -m stabletrees`` matches the console script."""

import sys

from .runner import main

if __name__ == "__main__":
    sys.exit(main())
