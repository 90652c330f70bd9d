"""Run configuration: a flat ``section.key = value`` text file.

Every parameter has a default; a config file only lists overrides. Unknown
keys are rejected. The resolved config is hashed and echoed next to every
artifact the CLI writes.
"""

import hashlib
from dataclasses import dataclass, field, fields, replace

from .apert import ApertConfig, StepSchedule
from .attacks import CwConfig
from .classifier import TrainConfig
from .detect import PertConfig
from .harness.data import SynthSpec


@dataclass(frozen=True)
class SplitSettings:
    n_train: int = 2000
    n_test: int = 400


@dataclass(frozen=True)
class AttackSettings:
    epsilon: float = 0.1
    step_size: float = 0.025
    iterations: int = 10


@dataclass(frozen=True)
class SrtSettings:
    A: float = 1e-10
    B: float = 0.5
    Q: bool = False
    p: float = 2.0
    q_clamp: float = 1e-6


@dataclass(frozen=True)
class RocSettings:
    sigma_min: float = 0.02
    sigma_max: float = 4.0
    n_points: int = 15
    decades_low: float = 4.0
    decades_high: float = 10.0


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    data: SynthSpec = SynthSpec()
    split: SplitSettings = SplitSettings()
    train: TrainConfig = TrainConfig()
    attack: AttackSettings = AttackSettings()
    cw: CwConfig = CwConfig()
    pert: PertConfig = PertConfig(T=25, C=16, sigma=0.4)
    srt: SrtSettings = SrtSettings()
    apert: ApertConfig = field(default_factory=ApertConfig)
    schedule: StepSchedule = StepSchedule()
    roc: RocSettings = RocSettings()

    def apert_config(self) -> ApertConfig:
        """APERT settings with the shared T/C/sigma taken from ``pert`` and the schedule attached."""
        return replace(self.apert, T=self.pert.T, C=self.pert.C, sigma=self.pert.sigma,
                       schedule=self.schedule)

    def stage_seed(self, stage: str) -> int:
        """Per-stage seed derived from the global seed and the stage name."""
        digest = hashlib.sha256(f"{self.seed}:{stage}".encode()).digest()
        return int.from_bytes(digest[:4], "little")


# keys of ApertConfig that are owned by other sections
_SHADOWED = {"apert": {"T", "C", "sigma", "schedule"}, "train": {"seed"}, "data": {"seed"}}


class ConfigError(ValueError):
    pass


def _parse_value(raw: str, default, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(v) for v in raw.strip("()").split(",") if v.strip())
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None


def _flat_items(cfg: RunConfig):
    yield "seed", cfg.seed
    for f in fields(cfg):
        if f.name == "seed":
            continue
        section = getattr(cfg, f.name)
        for sf in fields(section):
            if sf.name in _SHADOWED.get(f.name, ()):
                continue
            yield f"{f.name}.{sf.name}", getattr(section, sf.name)


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


def known_keys() -> list[str]:
    return [k for k, _ in _flat_items(RunConfig())]


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    defaults = dict(_flat_items(RunConfig()))
    overrides: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in defaults:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in overrides:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        overrides[key] = _parse_value(raw, defaults[key], key)
    return apply_overrides(RunConfig(), overrides)


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    top = {}
    sections: dict = {}
    for key, value in overrides.items():
        if "." in key:
            sec, name = key.split(".", 1)
            sections.setdefault(sec, {})[name] = value
        else:
            top[key] = value
    for sec, vals in sections.items():
        try:
            top[sec] = replace(getattr(cfg, sec), **vals)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"section {sec}: {exc}") from None
    return replace(cfg, **top)


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path) as fh:
        return parse_config(fh.read(), str(path))


def resolved_text(cfg: RunConfig) -> str:
    return "".join(f"{k} = {_format(v)}\n" for k, v in _flat_items(cfg))


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(resolved_text(cfg).encode()).hexdigest()[:16]
