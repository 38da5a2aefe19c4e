"""Run manifests: hash-chained provenance for every CLI artifact.

Each command writes its outputs first, then a manifest recording the
effective config, the SHA-256 of every input and output, code version, and
wall time. A partial run never leaves artifacts without a manifest: outputs
land in the target directory only after the command body finishes.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

CODE_VERSION = "0.1.0"
RNG_ALGORITHM = "numpy-PCG64"


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: list[dict] = field(default_factory=list)
    outputs: list[dict] = field(default_factory=list)
    started: float = field(default_factory=time.time)

    def add_input(self, path) -> None:
        self.inputs.append({"path": str(path), "sha256": sha256_file(path)})

    def add_output(self, path) -> None:
        self.outputs.append({"path": str(path), "sha256": sha256_file(path)})

    def write(self, out_dir, name: str = "manifest.json") -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "command": self.command,
            "config": self.config,
            "inputs": sorted(self.inputs, key=lambda e: e["path"]),
            "outputs": sorted(self.outputs, key=lambda e: e["path"]),
            "code_version": CODE_VERSION,
            "rng": RNG_ALGORITHM,
            "wall_time_s": round(time.time() - self.started, 3),
        }
        path = out_dir / name
        path.write_text(json.dumps(payload, indent=1, sort_keys=True))
        return path


def load_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
