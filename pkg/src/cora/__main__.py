"""Allow `python -m cora ...` as an alternative to the console script."""

import sys

from cora.cli import main

if __name__ == "__main__":
    sys.exit(main())
