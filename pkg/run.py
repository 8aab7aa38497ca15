"""
Application startup script.

Runs the qhgeo CLI from a source checkout without installing the package.
"""
import sys
from pathlib import Path

# Add project root to Python path
ROOT_DIR = Path(__file__).parent
sys.path.insert(0, str(ROOT_DIR))

from qhgeo.main import run  # noqa: E402


def main():
    """Run one qhgeo subcommand."""
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
