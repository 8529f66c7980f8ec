#!/usr/bin/env python
"""
Entry point: ``python -m src.main <command> [flags]``.
"""

import asyncio
import sys
from typing import Optional, Sequence

from src.cli.commands import run_command


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit code."""
    return asyncio.run(run_command(argv))


if __name__ == "__main__":
    sys.exit(main())
