"""Atomic output files, content hashes and run manifests."""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path

from . import __version__

VERSION_STRING = f"infoprop-{__version__}"

# mkstemp creates 0600 files; renamed outputs should get the usual permissions
_UMASK = os.umask(0)
os.umask(_UMASK)


def atomic_write_text(path, text: str) -> Path:
    """Write to a temporary sibling file, then rename it over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def dumps_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=1) + "\n"


def write_json(path, payload) -> Path:
    return atomic_write_text(path, dumps_json(payload))


def read_json(path):
    return json.loads(Path(path).read_text())


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_manifest(out_dir, command: str, outputs: dict, **info) -> Path:
    """<command>.manifest.json: output hashes plus run info; the only file with a timestamp."""
    out_dir = Path(out_dir)
    payload = {
        "command": command,
        "version": VERSION_STRING,
        "outputs": {name: sha256_file(out_dir / name) for name in sorted(outputs)},
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        **info,
    }
    return write_json(out_dir / f"{command}.manifest.json", payload)
