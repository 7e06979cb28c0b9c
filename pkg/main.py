#!/usr/bin/env python3
"""
DCPR - Cloud-Edge-Device Diffusion POI Recommender

Run this file with a subcommand, e.g. ``python main.py pipeline --synth small``.
"""

import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
