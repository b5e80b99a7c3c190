#!/usr/bin/env python
"""Command-line utility for solver runs and verification studies."""
import sys


def main():
    """Run the poro_hdg command line."""
    from cli.commands import main as run

    sys.exit(run(sys.argv[1:]))


if __name__ == '__main__':
    main()
