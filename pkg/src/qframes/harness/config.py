"""TOML experiment configuration: parsing, overrides, validation, round-trip.

Errors carry the file line they refer to so the CLI can print
``path:line: message`` diagnostics.
"""
from __future__ import annotations

import dataclasses
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from ..alice import AliceParams
from ..bob import BobParams
from ..channel import ChannelParams
from ..session import SessionConfig

REQUIRED = {"alice": ("mu_signal", "mu_decoy")}
_SECTIONS = {"alice": AliceParams, "bob": BobParams, "channel": ChannelParams}
_SESSION_KEYS = {f.name for f in dataclasses.fields(SessionConfig)} - set(_SECTIONS)
_EXPERIMENT_KEYS = {"repetitions", "output_dir", "report_format"}
_CALIBRATION_KEYS = {"vacuum_click_fraction", "signal", "decoy"}
_TOP = set(_SECTIONS) | {"session", "experiment", "calibration"}
REPORT_FORMATS = ("table", "json")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.message = message
        self.line = line
        self.source = source
        super().__init__(self.diagnostic())

    def diagnostic(self) -> str:
        where = self.source if self.line is None else f"{self.source}:{self.line}"
        return f"{where}: {self.message}"


@dataclass(frozen=True)
class ExperimentConfig:
    session: SessionConfig
    repetitions: int = 1
    output_dir: str = "runs/out"
    report_format: str = "table"
    calibration_targets: dict | None = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.report_format not in REPORT_FORMATS:
            raise ValueError(f"report_format must be one of {REPORT_FORMATS}")


class _LineIndex:
    """Maps (table path, key) to the 1-based line where it is written."""

    _header = re.compile(r"^\s*\[\s*([A-Za-z0-9_.\s\"]+?)\s*\]")
    _key = re.compile(r"^\s*([A-Za-z0-9_\-\"]+)\s*=")

    def __init__(self, text: str):
        self.tables: dict[str, int] = {}
        self.keys: dict[tuple[str, str], int] = {}
        table = ""
        for no, line in enumerate(text.splitlines(), start=1):
            m = self._header.match(line)
            if m:
                table = m.group(1).replace(" ", "").replace('"', "")
                self.tables.setdefault(table, no)
                continue
            m = self._key.match(line)
            if m:
                self.keys.setdefault((table, m.group(1).strip('"')), no)

    def line(self, table: str, key: str | None = None) -> int | None:
        if key is not None and (table, key) in self.keys:
            return self.keys[(table, key)]
        return self.tables.get(table)


def parse_value(raw: str) -> Any:
    """TOML literal if it parses, otherwise the bare string."""
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def apply_override(data: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key.path=value", source="<override>")
    path, raw = assignment.split("=", 1)
    keys = [k.strip() for k in path.strip().split(".")]
    if not all(keys):
        raise ConfigError(f"bad override path {path!r}", source="<override>")
    node = data
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {path!r} descends into a non-table", source="<override>")
    node[keys[-1]] = parse_value(raw.strip())


def _build(cls, table: str, values: dict, index: _LineIndex, source: str):
    names = {f.name for f in dataclasses.fields(cls)}
    for key in values:
        if key not in names:
            raise ConfigError(f"unknown key {table}.{key}", index.line(table, key), source)
    for key in REQUIRED.get(table, ()):
        if key not in values:
            raise ConfigError(f"missing required field {table}.{key}", index.line(table) or 1, source)
    for f in dataclasses.fields(cls):
        if f.name in values and isinstance(f.default, (int, float)) and not isinstance(f.default, bool):
            v = values[f.name]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{table}.{f.name} must be a number, got {v!r}", index.line(table, f.name), source)
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        hits = [k for k in values if k in msg]
        bad = min(hits, key=msg.find) if hits else None
        raise ConfigError(f"[{table}] {exc}", index.line(table, bad), source) from None


def from_dict(data: dict, text: str = "", source: str = "<config>") -> ExperimentConfig:
    index = _LineIndex(text)
    for key in data:
        if key not in _TOP:
            raise ConfigError(f"unknown section [{key}]", index.line(key) or index.line("", key), source)
    for name in ("alice",):
        if name not in data:
            raise ConfigError(f"missing required section [{name}]", 1, source)

    parts = {}
    for name, cls in _SECTIONS.items():
        section = data.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"[{name}] must be a table", index.line("", name), source)
        parts[name] = _build(cls, name, dict(section), index, source)

    sess = dict(data.get("session", {}))
    for key in sess:
        if key not in _SESSION_KEYS:
            raise ConfigError(f"unknown key session.{key}", index.line("session", key), source)
    try:
        session = SessionConfig(**parts, **sess)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[session] {exc}", index.line("session"), source) from None

    exp = dict(data.get("experiment", {}))
    for key in exp:
        if key not in _EXPERIMENT_KEYS:
            raise ConfigError(f"unknown key experiment.{key}", index.line("experiment", key), source)
    targets = data.get("calibration")
    if targets is not None:
        for key in targets:
            if key not in _CALIBRATION_KEYS:
                raise ConfigError(f"unknown key calibration.{key}", index.line("calibration", key), source)
    try:
        return ExperimentConfig(session=session, calibration_targets=targets, **exp)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[experiment] {exc}", index.line("experiment"), source) from None


def load_config(path: str | Path, overrides: list[str] = (), seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    path = Path(path)
    source = str(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=source) from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(str(exc), int(m.group(1)) if m else None, source) from None
    for assignment in overrides:
        apply_override(data, assignment)
    if seed is not None:
        data.setdefault("session", {})["seed"] = seed
    if out is not None:
        data.setdefault("experiment", {})["output_dir"] = out
    return from_dict(data, text, source)


def _strip_none(d):
    if isinstance(d, dict):
        return {k: _strip_none(v) for k, v in d.items() if v is not None}
    return d


def to_dict(cfg: ExperimentConfig) -> dict:
    s = cfg.session
    session = {k: getattr(s, k) for k in sorted(_SESSION_KEYS)}
    out = {
        "session": session,
        "alice": dataclasses.asdict(s.alice),
        "bob": dataclasses.asdict(s.bob),
        "channel": dataclasses.asdict(s.channel),
        "experiment": {"repetitions": cfg.repetitions, "output_dir": cfg.output_dir, "report_format": cfg.report_format},
    }
    if cfg.calibration_targets:
        out["calibration"] = cfg.calibration_targets
    return _strip_none(out)


def dumps(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def with_session(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    return dataclasses.replace(cfg, session=dataclasses.replace(cfg.session, **changes))

