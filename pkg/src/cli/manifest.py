"""
Run manifests: one ``manifest.ini`` per run directory recording what was
run, with which config and seeds, and what it produced.
"""

import configparser
import io
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Union

from src import __version__
from src.utils.config import Config

logger = logging.getLogger("run-manifest")

MANIFEST_NAME = "manifest.ini"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    argv: List[str] = field(default_factory=list)
    config_hash: str = ""
    config_text: str = ""
    seeds: Dict[str, int] = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)
    started: str = field(default_factory=_now)
    finished: Optional[str] = None
    version: str = __version__
    exit_code: int = 0

    def attach_config(self, config: Config) -> None:
        self.config_text = config.to_text()
        self.config_hash = config.config_hash()

    def finish(self, exit_code: int = 0) -> None:
        self.finished = _now()
        self.exit_code = exit_code

    def to_text(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        parser["run"] = {
            "command": self.command,
            "argv": " ".join(self.argv),
            "version": self.version,
            "config_hash": self.config_hash,
            "started": self.started,
            "finished": self.finished or "",
            "exit_code": str(self.exit_code),
        }
        parser["seeds"] = {name: str(value) for name, value in sorted(self.seeds.items())}
        parser["inputs"] = dict(self.inputs)
        parser["outputs"] = {f"output{i}": path for i, path in enumerate(self.outputs)}
        buffer = io.StringIO()
        parser.write(buffer)
        if self.config_text:
            buffer.write("# config\n")
            buffer.write("".join(f"#   {line}\n" for line in self.config_text.splitlines()))
        return buffer.getvalue()

    def write(self, out_dir: Union[str, Path]) -> Path:
        path = Path(out_dir) / MANIFEST_NAME
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text(), encoding="utf-8")
        logger.debug(f"Wrote {path}")
        return path

    @classmethod
    def read(cls, path: Union[str, Path]) -> "RunManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        parser = configparser.ConfigParser(interpolation=None)
        parser.read(path, encoding="utf-8")
        run = parser["run"]
        config_lines = [
            line[4:] for line in path.read_text(encoding="utf-8").splitlines() if line.startswith("#   ")
        ]
        return cls(
            command=run["command"],
            argv=run.get("argv", "").split(),
            config_hash=run.get("config_hash", ""),
            config_text="\n".join(config_lines) + ("\n" if config_lines else ""),
            seeds={name: int(value) for name, value in parser.items("seeds")},
            inputs=dict(parser.items("inputs")),
            outputs=[value for _, value in parser.items("outputs")],
            started=run.get("started", ""),
            finished=run.get("finished") or None,
            version=run.get("version", __version__),
            exit_code=int(run.get("exit_code", 0)),
        )
