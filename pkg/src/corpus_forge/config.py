"""Project configuration file (TOML) with defaults for every stage."""
from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .diarizer import ClusteringConfig
from .nse import NseConfig
from .speaker_id import IdentificationConfig

ENV_VAR = "CORPUS_FORGE_CONFIG"


@dataclass(frozen=True)
class Paths:
    rttm_dir: str | None = None
    wav_dir: str | None = None
    embedding_dir: str | None = None
    ledger: str | None = None
    output_dir: str | None = None


@dataclass(frozen=True)
class ProjectConfig:
    paths: Paths = field(default_factory=Paths)
    nse: NseConfig = field(default_factory=NseConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    identification: IdentificationConfig = field(default_factory=IdentificationConfig)
    min_duration: float = 2.0
    collar: float = 0.25
    grid: float = 1.0
    required_per_category: int = 30
    seed: int = 0

    def as_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _section(data: dict, name: str, cls):
    raw = data.get(name, {})
    if not isinstance(raw, dict):
        raise ValueError(f"config section [{name}] must be a table")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    return cls(**raw)


def parse_config(text: str) -> ProjectConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ValueError(f"invalid config: {exc}") from None
    top = {k: v for k, v in data.items() if not isinstance(v, dict)}
    allowed = {"min_duration", "collar", "grid", "required_per_category", "seed"}
    unknown = set(top) - allowed
    if unknown:
        raise ValueError(f"unknown top-level config key(s): {', '.join(sorted(unknown))}")
    unknown_sections = {k for k, v in data.items() if isinstance(v, dict)} - {
        "paths", "nse", "clustering", "identification"}
    if unknown_sections:
        raise ValueError(f"unknown config section(s): {', '.join(sorted(unknown_sections))}")
    return ProjectConfig(
        paths=_section(data, "paths", Paths),
        nse=_section(data, "nse", NseConfig),
        clustering=_section(data, "clustering", ClusteringConfig),
        identification=_section(data, "identification", IdentificationConfig),
        **top,
    )


def load_config(path: str | None = None) -> ProjectConfig:
    """Read ``path``, else ``$CORPUS_FORGE_CONFIG``, else return defaults.

    Directories named in ``[paths]`` must exist.
    """
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return ProjectConfig()
    with open(path, encoding="utf-8") as fh:
        cfg = parse_config(fh.read())
    for name in ("rttm_dir", "wav_dir", "embedding_dir", "output_dir"):
        value = getattr(cfg.paths, name)
        if value is not None and not os.path.isdir(value):
            raise FileNotFoundError(value)
    return cfg
