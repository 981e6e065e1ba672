"""Pipeline configuration: every tunable in one YAML-serializable object."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import FormatError, ValidationError
from .fusion import FusionParams
from .tracker import TrackingParams

CONFIG_FORMAT_VERSION = 1


@dataclass(frozen=True)
class DetectorParams:
    max_atoms: int = 10
    stop: float | None = None  # None: 5% of the smallest atom
    overfill_penalty: float = 1.0
    merge_radius: float = 0.5


@dataclass(frozen=True)
class ClassifierParams:
    min_area: int = 20
    max_jump: float = 6.0
    max_skip: float = 1.5


@dataclass(frozen=True)
class EvaluationParams:
    tau_match: float = 5.0
    baseline_radius: float = 1.0
    baseline_include_doors: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    scene: str | None = None  # path to a scene file; None uses the bundled ward
    detector: DetectorParams = field(default_factory=DetectorParams)
    tracker: TrackingParams = field(default_factory=TrackingParams)
    fusion: FusionParams = field(default_factory=FusionParams)
    classifier: ClassifierParams = field(default_factory=ClassifierParams)
    evaluation: EvaluationParams = field(default_factory=EvaluationParams)

    SECTIONS = ("detector", "tracker", "fusion", "classifier", "evaluation")

    def to_dict(self) -> dict:
        d = {"format_version": CONFIG_FORMAT_VERSION, "scene": self.scene}
        for name in self.SECTIONS:
            d[name] = dataclasses.asdict(getattr(self, name))
        return d

    @classmethod
    def from_dict(cls, d: dict, path=None) -> "PipelineConfig":
        if not isinstance(d, dict):
            raise FormatError("config must be a mapping", path)
        if d.get("format_version", CONFIG_FORMAT_VERSION) != CONFIG_FORMAT_VERSION:
            raise FormatError(f"config format_version {d.get('format_version')!r}, expected {CONFIG_FORMAT_VERSION}", path)
        unknown = set(d) - {"format_version", "scene", *cls.SECTIONS}
        if unknown:
            raise FormatError(f"unknown config keys: {', '.join(sorted(unknown))}", path)
        kw = {"scene": d.get("scene")}
        defaults = cls()
        for name in cls.SECTIONS:
            section = d.get(name) or {}
            proto = getattr(defaults, name)
            names = {f.name for f in dataclasses.fields(proto)}
            bad = set(section) - names
            if bad:
                raise FormatError(f"unknown {name} keys: {', '.join(sorted(bad))}", path)
            kw[name] = dataclasses.replace(proto, **section)
        return cls(**kw)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def save(self, path) -> None:
        Path(path).write_text(self.dump())

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise FormatError("config file not found", path)
        try:
            d = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise FormatError(f"invalid YAML: {exc}", path, mark.line + 1 if mark else None) from exc
        return cls.from_dict(d or {}, path)

    def override(self, assignments: list[str]) -> "PipelineConfig":
        """Apply ``section.key=value`` (or ``scene=path``) overrides.

        Values are parsed as YAML scalars, so ``0.3``, ``true`` and ``null``
        work as expected.
        """
        d = self.to_dict()
        for a in assignments:
            key, sep, raw = a.partition("=")
            if not sep:
                raise ValidationError(f"override {a!r} is not of the form key=value")
            value = yaml.safe_load(raw)
            parts = key.strip().split(".")
            if parts == ["scene"]:
                d["scene"] = value
            elif len(parts) == 2 and parts[0] in self.SECTIONS and parts[1] in d[parts[0]]:
                d[parts[0]][parts[1]] = value
            else:
                raise ValidationError(f"unknown config key {key!r}")
        return PipelineConfig.from_dict(d)
