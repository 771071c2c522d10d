#!/usr/bin/env python3
"""
ignet pipeline - main entry point
"""

import sys

from .cli import main

if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        sys.exit(130)
