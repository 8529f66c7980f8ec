"""
Command-line surface: argument parsing, run manifests, previews and the
reconstruction runner.
"""

from src.cli.commands import COMMANDS, build_parser, run_command
from src.cli.manifest import RunManifest
from src.cli.recon_runner import ReconRunner, load_acquisitions

__all__ = [
    "COMMANDS",
    "ReconRunner",
    "RunManifest",
    "build_parser",
    "load_acquisitions",
    "run_command",
]
