"""CSV, config and manifest I/O for the command-line tools."""

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, WlassoError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class InputError(WlassoError):
    exit_code = 2


def format_value(v):
    """Shortest text that parses back to the same value; ``None`` becomes empty."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def parse_value(text):
    if text == "":
        return None
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def write_rows(path, columns, rows):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(row[c]) for c in columns])
    return path


def read_rows(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return [dict(zip(header, map(parse_value, rec))) for rec in reader]


def read_matrix(path):
    """Numeric CSV with a header row -> ``(array, header)``.

    Raises InputError naming the offending line for ragged or non-numeric rows.
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: file is empty") from None
        rows = []
        for rec in reader:
            line = reader.line_num
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise InputError(f"{path}:{line}: expected {len(header)} fields, found {len(rec)}")
            try:
                vals = [float(c) for c in rec]
            except ValueError:
                raise InputError(f"{path}:{line}: non-numeric value in {rec!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise InputError(f"{path}:{line}: non-finite value")
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return np.array(rows), header


def write_matrix(path, M, header=None):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    header = header or [f"c{i + 1}" for i in range(M.shape[1])]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in M:
            w.writerow([repr(float(v)) for v in row])


def load_config(path):
    """Parse a TOML or JSON config file into a dict."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        if path.suffix.lower() == ".json":
            return json.loads(raw)
        return tomllib.loads(raw.decode("utf-8"))
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def config_digest(config):
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None = None
    version: str = __version__
    started: str = field(default_factory=_now)
    finished: str | None = None
    outputs: list = field(default_factory=list)
    complete: bool = True

    @property
    def digest(self):
        return config_digest(self.config)

    def add(self, path):
        self.outputs.append(str(path))

    def write(self, out_dir):
        self.finished = _now()
        path = Path(out_dir) / "manifest.json"
        outputs = self.outputs + [str(path)]
        doc = {
            "command": self.command,
            "config_digest": self.digest,
            "seed": self.seed,
            "version": self.version,
            "started": self.started,
            "finished": self.finished,
            "complete": self.complete,
            "outputs": outputs,
            "config": self.config,
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return Path(path)
