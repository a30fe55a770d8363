#!/usr/bin/env python3
"""
Main entry point for evolve_merge
Usage: python -m evolve_merge --help
"""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
