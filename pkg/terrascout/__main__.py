"""Allow running TerraScout as: python -m terrascout"""

import sys

from terrascout.cli import main

if __name__ == "__main__":
    sys.exit(main())
