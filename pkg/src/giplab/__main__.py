"""Allow ``python -m giplab`` as an alias for the gip-lab entry point."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
