"""
Composite FL Lab
Main entry point for the experiment command line
"""

import sys
from pathlib import Path

# Make fl_simulator importable when run from a checkout
sys.path.append(str(Path(__file__).parent))

from fl_simulator.cli import main

if __name__ == "__main__":
    sys.exit(main())
