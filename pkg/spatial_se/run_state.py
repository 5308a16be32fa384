import hashlib
import json
import os
import platform
import threading
import time
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import numpy as np
import scipy

from . import __version__
from .logging_utils import get_logger

log = get_logger("run_state")

STATE_FILENAME = "run_state.json"


def file_checksum(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> Dict[str, str]:
    return {
        "spatial_se": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


class RunState:
    """
    JSON-backed stage ledger in the work dir:
      stages: "<n>" -> {
        done: bool,
        config_hash: str,
        seed: int,
        versions: {...},
        manifest: str,              # output manifest, relative to the work dir
        checksums: {relpath: sha256},
        finished_at: ts,
        stale: str                  # set when an upstream stage reran
      }
    """

    def __init__(self, work_dir: str):
        self.dir = os.path.abspath(work_dir)
        self.file = os.path.join(self.dir, STATE_FILENAME)
        self._lock = threading.RLock()
        self._data: Dict = {"stages": {}}
        self._load()

    # ---------- load/save ----------
    def _load(self):
        with self._lock:
            try:
                if os.path.exists(self.file):
                    with open(self.file, "r", encoding="utf-8") as f:
                        data = json.load(f)
                    if not isinstance(data, dict) or not isinstance(data.get("stages"), dict):
                        raise ValueError("missing 'stages' mapping")
                    self._data = data
                    log.debug(f"run state: {len(self._data['stages'])} stage records from {self.file}")
                else:
                    self._data = {"stages": {}}
            except Exception as e:
                # Corrupt? Start fresh rather than crash.
                log.warning(f"run state at {self.file} unreadable ({e}); starting fresh")
                self._data = {"stages": {}}

    def _save(self):
        with self._lock:
            os.makedirs(self.dir, exist_ok=True)
            tmp_file = self.file + ".tmp"
            with open(tmp_file, "w", encoding="utf-8") as f:
                json.dump(self._data, f, indent=2, sort_keys=True)
            os.replace(tmp_file, self.file)

    # ---------- queries ----------
    def record(self, stage: int) -> Optional[Dict]:
        with self._lock:
            rec = self._data["stages"].get(str(stage))
            return dict(rec) if rec else None

    def is_done(self, stage: int) -> bool:
        rec = self.record(stage)
        return bool(rec and rec.get("done"))

    def verify(self, stage: int) -> List[str]:
        """Relative paths whose checksum no longer matches the record (missing files included)."""
        rec = self.record(stage) or {}
        bad = []
        for rel, digest in sorted((rec.get("checksums") or {}).items()):
            p = os.path.join(self.dir, rel)
            if not os.path.isfile(p) or file_checksum(p) != digest:
                bad.append(rel)
        return bad

    # ---------- mutations ----------
    def mark_done(self, stage: int, config_hash: str, seed: int, manifest: str,
                  outputs: Iterable[str]):
        with self._lock:
            checksums = {}
            for p in sorted(set(outputs)):
                rel = os.path.relpath(os.path.abspath(p), self.dir).replace("\\", "/")
                checksums[rel] = file_checksum(p)
            self._data["stages"][str(stage)] = {
                "done": True,
                "config_hash": config_hash,
                "seed": seed,
                "versions": versions(),
                "manifest": os.path.relpath(os.path.abspath(manifest), self.dir).replace("\\", "/"),
                "checksums": checksums,
                "finished_at": time.time(),
            }
            self._save()

    def mark_stale(self, stages: Iterable[int], reason: str) -> List[int]:
        """Keep the records of `stages` but clear their done flag; returns the stages touched."""
        with self._lock:
            touched = []
            for s in stages:
                rec = self._data["stages"].get(str(s))
                if rec and rec.get("done"):
                    rec["done"] = False
                    rec["stale"] = reason
                    touched.append(s)
            if touched:
                self._save()
            return touched

    def is_stale(self, stage: int) -> bool:
        rec = self.record(stage)
        return bool(rec and rec.get("stale"))

    def invalidate(self, stages: Iterable[int]):
        with self._lock:
            changed = False
            for s in stages:
                changed |= self._data["stages"].pop(str(s), None) is not None
            if changed:
                self._save()


def stage_outputs(directory: Path) -> List[str]:
    """Every regular file under a stage directory, sorted."""
    if not directory.is_dir():
        return []
    return sorted(str(p) for p in directory.rglob("*") if p.is_file() and not p.name.endswith(".tmp"))
