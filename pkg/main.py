#!/usr/bin/env python3
"""
Entry point for sforge.
Usage: python main.py <run|compare|adapt|resume|verify|replay> [options]
"""

import os
import sys

# Ensure unbuffered output so campaign logs stream when piped
os.environ.setdefault("PYTHONUNBUFFERED", "1")

if __name__ == "__main__":
    try:
        from cli import main

        sys.exit(main())
    except KeyboardInterrupt:
        print("Interrupted by user", file=sys.stderr)
        sys.exit(130)
