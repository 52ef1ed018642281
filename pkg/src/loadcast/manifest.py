"""Run manifests: seeded stage records with input/output digests.

Manifests carry no timestamps or host details, so a repeated run with
the same seed and inputs writes the identical manifest.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from . import __version__


def file_digest(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_hash(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_manifest(
    out_dir: str | Path,
    stage: str,
    seed: int | None,
    config: dict,
    inputs: list[str | Path],
    outputs: list[str | Path],
) -> Path:
    entry = {
        "tool_version": __version__,
        "stage": stage,
        "seed": seed,
        "config_hash": config_hash(config),
        "config": {k: str(v) for k, v in sorted(config.items())},
        "inputs": {Path(p).name: file_digest(p) for p in sorted(map(str, inputs))},
        "outputs": {Path(p).name: file_digest(p) for p in sorted(map(str, outputs))},
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(entry, indent=2, sort_keys=True) + "\n")
    return path
