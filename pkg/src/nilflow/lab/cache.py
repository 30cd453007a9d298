"""On-disk cache of orbit segments and sequence values.

Entries are ``<key>.npz`` files.  Writers take a per-key file lock and
publish with an atomic rename, so readers never see partial files and need
no lock.  A running job lists the keys it uses in ``jobs/<pid>.json``;
garbage collection skips those while the process is alive.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from pathlib import Path

import numpy as np
from filelock import FileLock

from ..errors import CacheError

__all__ = ["OrbitCache", "cache_key", "cache_gc", "default_cache_dir"]


def default_cache_dir() -> Path:
    return Path(os.environ.get("NILFLOW_CACHE", Path.home() / ".cache" / "nilflow"))


def cache_key(**parts) -> str:
    return hashlib.sha256(json.dumps(parts, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


class OrbitCache:
    def __init__(self, root: str | Path | None = None):
        self.root = Path(root) if root is not None else default_cache_dir()
        self.jobs = self.root / "jobs"
        self._used: set[str] = set()
        self._lock = threading.Lock()
        try:
            self.jobs.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise CacheError(f"cannot create cache directory {self.root}: {e}") from None

    def path(self, key: str) -> Path:
        return self.root / f"{key}.npz"

    def _register(self, key: str) -> None:
        with self._lock:
            if key in self._used:
                return
            self._used.add(key)
            tmp = self.jobs / f"{os.getpid()}.json.tmp"
            tmp.write_text(json.dumps(sorted(self._used)))
            os.replace(tmp, self.jobs / f"{os.getpid()}.json")

    def release(self) -> None:
        """Drop this process's in-use record."""
        with self._lock:
            self._used.clear()
            (self.jobs / f"{os.getpid()}.json").unlink(missing_ok=True)

    def get(self, key: str) -> np.ndarray | None:
        p = self.path(key)
        self._register(key)
        try:
            with np.load(p, allow_pickle=False) as data:
                arr = data["values"]
        except FileNotFoundError:
            return None
        except (OSError, ValueError, KeyError) as e:
            raise CacheError(f"unreadable cache entry {p}: {e}") from None
        try:
            os.utime(p)
        except OSError:
            pass
        return arr

    def put(self, key: str, values: np.ndarray) -> None:
        p = self.path(key)
        self._register(key)
        try:
            with FileLock(str(p) + ".lock"):
                tmp = p.with_name(p.name + f".{os.getpid()}.{threading.get_ident()}.tmp")
                with open(tmp, "wb") as fh:
                    np.savez(fh, values=values)
                os.replace(tmp, p)
        except OSError as e:
            raise CacheError(f"cannot write cache entry {p}: {e}") from None

    def get_or_compute(self, key: str, compute) -> np.ndarray:
        arr = self.get(key)
        if arr is None:
            arr = np.asarray(compute())
            self.put(key, arr)
        return arr


def _protected(root: Path) -> set[str]:
    keys = set()
    jobs = root / "jobs"
    if not jobs.is_dir():
        return keys
    for f in jobs.glob("*.json"):
        try:
            pid = int(f.stem)
        except ValueError:
            continue
        if not _pid_alive(pid):
            continue
        try:
            keys.update(json.loads(f.read_text()))
        except (OSError, ValueError):
            continue
    return keys


def cache_gc(root: str | Path, max_bytes: int) -> int:
    """Evict least recently used entries until the cache fits in ``max_bytes``.

    Entries referenced by a live job are kept even if that leaves the cache
    over budget.  Returns the number of bytes freed.
    """
    root = Path(root)
    if not root.is_dir():
        return 0
    try:
        entries = [(p.stat().st_mtime_ns, p.name, p.stat().st_size, p) for p in root.glob("*.npz")]
    except OSError as e:
        raise CacheError(f"cannot scan {root}: {e}") from None
    total = sum(e[2] for e in entries)
    keep = _protected(root)
    freed = 0
    for _, _, size, p in sorted(entries):
        if total <= max_bytes:
            break
        if p.stem in keep:
            continue
        try:
            with FileLock(str(p) + ".lock"):
                p.unlink()
            Path(str(p) + ".lock").unlink(missing_ok=True)
        except FileNotFoundError:
            continue
        except OSError as e:
            raise CacheError(f"cannot evict {p}: {e}") from None
        total -= size
        freed += size
    return freed
