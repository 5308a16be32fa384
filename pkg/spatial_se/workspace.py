import os
from dataclasses import dataclass
from fnmatch import fnmatch
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

from .audio_io import read_wav
from .errors import MissingInputError
from .stft import Waveform

STAGE_DIRS = {1: "simulate", 2: "enhance", 3: "score", 4: "pack"}
WAV_EXCLUDES = (".*", "__pycache__")


def _abs_dir(path: str) -> str:
    if not path:
        raise ValueError("Path is required.")
    return os.path.abspath(os.path.expanduser(os.path.expandvars(str(path))))


def _is_excluded(rel: str, excludes: Iterable[str]) -> bool:
    # Match any:
    # - exact path segment (e.g. "__pycache__")
    # - fnmatch on basename (e.g. "*_old.wav")
    parts = rel.split("/")
    name = parts[-1]
    for pat in excludes or ():
        if not pat:
            continue
        if pat in parts or fnmatch(name, pat):
            return True
    return False


class Workspace:
    """
    Work directory of one pipeline run:
      - resolve(path) -> absolute path under the root (PermissionError otherwise)
      - stage_dir(stage) -> <root>/<NN>_<name>, created on demand
      - list_wavs(dir, excludes) -> sorted WAV paths (deterministic order)
    """

    def __init__(self, root: str, create: bool = True):
        root = _abs_dir(root)
        if create:
            os.makedirs(root, exist_ok=True)
        if not os.path.isdir(root):
            raise NotADirectoryError(f"Not a directory: {root}")
        self.root = root

    def resolve(self, path: str) -> str:
        if not path:
            raise ValueError("Path is required.")
        abs_candidate = os.path.abspath(path if os.path.isabs(path) else os.path.join(self.root, path))
        if not abs_candidate.startswith(self.root.rstrip(os.sep) + os.sep) and abs_candidate != self.root:
            raise PermissionError(f"Path is outside the work dir: {abs_candidate}")
        return abs_candidate

    def stage_dir(self, stage: int, create: bool = False) -> Path:
        if stage not in STAGE_DIRS:
            raise ValueError(f"unknown stage {stage}; expected one of {sorted(STAGE_DIRS)}")
        p = Path(self.resolve(f"{stage:02d}_{STAGE_DIRS[stage]}"))
        if create:
            p.mkdir(parents=True, exist_ok=True)
        return p

    @staticmethod
    def list_wavs(directory: str, excludes: Sequence[str] = WAV_EXCLUDES) -> List[str]:
        root = _abs_dir(directory)
        if not os.path.isdir(root):
            raise MissingInputError(f"Not a directory: {root}")
        found = []
        for dirpath, dirnames, filenames in os.walk(root):
            rel_dir = os.path.relpath(dirpath, root).replace("\\", "/")
            dirnames[:] = sorted(
                d for d in dirnames
                if not _is_excluded(d if rel_dir == "." else f"{rel_dir}/{d}", excludes)
            )
            for name in filenames:
                rel = name if rel_dir == "." else f"{rel_dir}/{name}"
                if name.lower().endswith(".wav") and not _is_excluded(rel, excludes):
                    found.append(os.path.join(dirpath, name))
        found.sort(key=lambda p: os.path.relpath(p, root).replace("\\", "/"))
        return found


class WavBank:
    """Sorted directory of mono WAV clips, read on demand."""

    def __init__(self, directory: str, sample_rate: Optional[int] = None):
        self.paths = Workspace.list_wavs(directory)
        if not self.paths:
            raise MissingInputError(f"no WAV files under {directory}")
        self.directory = _abs_dir(directory)
        self.sample_rate = sample_rate

    @property
    def names(self) -> List[str]:
        return [os.path.relpath(p, self.directory).replace("\\", "/") for p in self.paths]

    def __len__(self) -> int:
        return len(self.paths)

    def __getitem__(self, idx: int) -> Waveform:
        return read_wav(self.paths[idx], expected_rate=self.sample_rate)


# ---------- manifests ----------------------------------------------------------

@dataclass(frozen=True)
class ManifestRow:
    utt_id: str
    paths: Tuple[str, ...]

    @property
    def path(self) -> str:
        return self.paths[0]


def read_manifest(path: str, min_columns: int = 1) -> List[ManifestRow]:
    """
    Tab-separated "utt_id<TAB>path[<TAB>path...]"; blank lines and '#' comments are
    skipped. Relative paths resolve against the manifest's directory.
    """
    p = Path(path)
    if not p.is_file():
        raise MissingInputError(f"manifest not found: {p}")
    base = p.resolve().parent
    rows, seen = [], set()
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.rstrip("\n").split("\t")
        if len(cols) < 1 + min_columns:
            raise ValueError(f"{p}:{lineno}: expected at least {1 + min_columns} tab-separated columns")
        utt = cols[0].strip()
        if utt in seen:
            raise ValueError(f"{p}:{lineno}: duplicate utterance id {utt!r}")
        seen.add(utt)
        resolved = tuple(str(Path(c) if Path(c).is_absolute() else base / c) for c in cols[1:])
        rows.append(ManifestRow(utt, resolved))
    return rows


def write_manifest(path: str, rows: Iterable[ManifestRow], relative: bool = True) -> Path:
    """Rows sorted by id; paths written relative to the manifest when `relative`."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    base = p.resolve().parent
    lines = []
    for row in sorted(rows, key=lambda r: r.utt_id):
        cols = [os.path.relpath(c, base) if relative else str(c) for c in row.paths]
        lines.append("\t".join([row.utt_id, *cols]))
    tmp = p.with_suffix(p.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    os.replace(tmp, p)
    return p
