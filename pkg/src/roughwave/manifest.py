"""Reproducibility record and crash-safe output writing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import platform
import sys
import tempfile


def atomic_write_text(path, text: str):
    """Write-then-rename so interrupted runs leave no partial files."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


SEED_LINEAGE = (
    "per-stream generators: PCG64(SeedSequence((master_seed, stream, replica, level))) "
    "with stream 1 for slab noise and 2 for the reference solver; results are "
    "independent of worker count and scheduling order"
)


def write_manifest(out_dir, config, wall_clock_s: float, outputs, version: str):
    """JSON manifest: config echo, platform fingerprint, checksums, seed lineage."""
    record = {
        "tool": "roughwave",
        "version": version,
        "config": dataclasses.asdict(config),
        "platform": {
            "python": sys.version.split()[0],
            "machine": platform.machine(),
            "system": platform.system(),
        },
        "wall_clock_s": wall_clock_s,
        "seed_lineage": SEED_LINEAGE,
        "outputs": {os.path.basename(p): sha256_of(p) for p in outputs},
    }
    path = os.path.join(out_dir, "manifest.json")
    atomic_write_text(path, json.dumps(record, indent=1, default=str))
    return path
