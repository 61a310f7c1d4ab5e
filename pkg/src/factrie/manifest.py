"""Run manifests: enough provenance to reproduce any CLI artifact."""

from __future__ import annotations

import hashlib
import json
import sys
import time
from pathlib import Path
from typing import Dict, Optional

from . import __version__


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest:
    """Collects command, config, input hashes, and timing for one run."""

    def __init__(self, command: str, config: Optional[dict] = None):
        self.command = command
        self.config = config or {}
        self.inputs: Dict[str, str] = {}
        self.outputs: list[str] = []
        self._t0 = time.perf_counter()

    def add_input(self, path: str | Path) -> None:
        p = Path(path)
        if p.exists() and p.is_file():
            self.inputs[str(p)] = file_sha256(p)

    def add_output(self, path: str | Path) -> None:
        self.outputs.append(str(path))

    def to_dict(self) -> dict:
        return {
            "tool": "factrie",
            "version": __version__,
            "command": self.command,
            "argv": sys.argv[1:],
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "duration_s": round(time.perf_counter() - self._t0, 6),
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
        )


def manifest_path_for(artifact: str | Path) -> Path:
    p = Path(artifact)
    return p.with_name(p.name + ".manifest.json")
