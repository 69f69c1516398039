"""Experiment configuration: INI-style ``key = value`` files with section headers.

Every key has a default except ``[experiment] space``.  Unknown sections or
keys, and values that fail to parse, raise :class:`ConfigError` naming the
offending key and its line.
"""

from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

from .data import DataConfig
from .errors import ConfigError
from .hparams import TrainHParams
from .landmarks import ScheduleMode
from .search import PIPELINE_DATA, PIPELINE_HPARAMS, EvoConfig, PipelineConfig
from .space import BUILTIN_SPACES

KNOBS = ("lambda", "pairs", "iters", "tau", "schedule")

DEFAULT_GRIDS = {
    "lambda": (1.0, 10.0, 100.0),
    "pairs": (1, 2, 10),
    "iters": (1, 2, 3),
    "tau": (1, 2),
    "schedule": tuple(m.value for m in ScheduleMode),
}

# knob -> PipelineConfig field it sweeps
KNOB_FIELD = {"lambda": "lambda_max", "pairs": "m", "iters": "T", "tau": "tau",
              "schedule": "schedule"}

DEFAULT_CACHE = "ranknas_cache.txt"


@dataclass(frozen=True)
class RunConfig:
    pipeline: PipelineConfig
    out: str = "ranknas_out"
    cache: str = DEFAULT_CACHE
    jobs: int = 1
    grids: dict = field(default_factory=lambda: dict(DEFAULT_GRIDS))

    @property
    def space(self) -> str:
        return self.pipeline.space

    @property
    def seeds(self) -> tuple[int, ...]:
        return self.pipeline.seeds

    def to_dict(self) -> dict:
        return {"pipeline": self.pipeline.to_dict(), "out": self.out, "cache": self.cache,
                "jobs": self.jobs, "grids": {k: list(v) for k, v in self.grids.items()}}


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_optional_int(s: str):
    return None if s.strip().lower() in ("auto", "none", "") else int(s)


def _parse_optional_float(s: str):
    return None if s.strip().lower() in ("none", "off", "") else float(s)


def _parse_list(conv):
    def parse(s: str):
        items = [p.strip() for p in re.split(r"[,\s]+", s.strip()) if p.strip()]
        if not items:
            raise ValueError("empty list")
        return tuple(conv(p) for p in items)
    return parse


def _schedule(s: str) -> str:
    return ScheduleMode(s.strip().lower()).value


def _space(s: str) -> str:
    s = s.strip()
    if s not in BUILTIN_SPACES:
        raise ValueError(f"unknown space {s!r} (choose from {', '.join(BUILTIN_SPACES)})")
    return s


def _field_parser(tp: str):
    # annotations are strings under postponed evaluation
    simple = {"int": int, "float": float, "str": str, "bool": _parse_bool}
    if tp in simple:
        return simple[tp]
    if tp.startswith("int | None"):
        return _parse_optional_int
    if tp.startswith("float | None"):
        return _parse_optional_float
    if tp.startswith("tuple[float"):
        return _parse_list(float)
    if tp.startswith("tuple[int"):
        return _parse_list(int)
    raise TypeError(f"no parser for field type {tp}")


def _dataclass_parsers(cls, skip=()) -> dict:
    return {f.name: _field_parser(f.type) for f in dataclasses.fields(cls) if f.name not in skip}


SECTIONS = {
    "experiment": {"space": _space, "seeds": _parse_list(int), "out": str, "cache": str,
                   "jobs": int},
    "pipeline": {**_dataclass_parsers(PipelineConfig,
                                      skip=("space", "seeds", "evo", "hparams", "data",
                                            "schedule", "tau")),
                 "schedule": _schedule, "tau": _parse_optional_int},
    "evo": _dataclass_parsers(EvoConfig),
    "data": _dataclass_parsers(DataConfig),
    "train": _dataclass_parsers(TrainHParams),
    "ablate": {"lambda": _parse_list(float), "pairs": _parse_list(int),
               "iters": _parse_list(int), "tau": _parse_list(int),
               "schedule": _parse_list(_schedule)},
}


def _key_lines(text: str) -> dict:
    """(section, key) -> 1-based line number, for diagnostics."""
    lines, section = {}, None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip().lower()
            continue
        m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip()), no)
    return lines


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse config text into a fully-resolved :class:`RunConfig`."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str  # keys are case-sensitive: M and m differ
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from None
    lines = _key_lines(text)

    def where(sec, key=None):
        no = lines.get((sec, key)) if key else None
        return f"{source}:{no}" if no else source

    values: dict[str, dict] = {}
    for sec in cp.sections():
        name = sec.lower()
        if name not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{sec}] "
                              f"(known: {', '.join(SECTIONS)})")
        parsers = SECTIONS[name]
        for key, raw in cp.items(sec):
            if key not in parsers:
                raise ConfigError(f"{where(name, key)}: unknown key '{key}' in [{sec}]")
            try:
                values.setdefault(name, {})[key] = parsers[key](raw)
            except (ValueError, TypeError) as e:
                raise ConfigError(f"{where(name, key)}: bad value for '{key}': {e}") from None

    exp = values.get("experiment", {})
    if "space" not in exp:
        raise ConfigError(f"{source}: missing required key 'space' in [experiment]")

    def build(sec, cls, base=None, **extra):
        try:
            if base is not None:
                return dataclasses.replace(base, **values.get(sec, {}), **extra)
            return cls(**values.get(sec, {}), **extra)
        except (ValueError, TypeError) as e:
            raise ConfigError(f"{where(sec)}: invalid [{sec}] settings: {e}") from None

    pipeline = build("pipeline", PipelineConfig, space=exp["space"],
                     seeds=exp.get("seeds", PipelineConfig.seeds),
                     evo=build("evo", EvoConfig),
                     data=build("data", DataConfig, PIPELINE_DATA),
                     hparams=build("train", TrainHParams, PIPELINE_HPARAMS))
    grids = dict(DEFAULT_GRIDS)
    grids.update(values.get("ablate", {}))
    jobs = exp.get("jobs", 1)
    if jobs < 1:
        raise ConfigError(f"{where('experiment', 'jobs')}: jobs must be positive")
    return RunConfig(pipeline=pipeline, out=exp.get("out", RunConfig.out),
                     cache=exp.get("cache", DEFAULT_CACHE), jobs=jobs, grids=grids)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return parse_config(text, source=str(path))


def dump_config(cfg: RunConfig) -> str:
    """Render ``cfg`` back to config text; ``parse_config(dump_config(c)) == c``."""
    p = cfg.pipeline

    def fmt(v):
        if v is None:
            return "none"
        if isinstance(v, (tuple, list)):
            return ", ".join(fmt(x) for x in v)
        if isinstance(v, float):
            return repr(v)
        if isinstance(v, ScheduleMode):
            return v.value
        return str(v)

    def section(name, obj, skip=()):
        out = [f"[{name}]"]
        for f in dataclasses.fields(obj):
            if f.name not in skip:
                out.append(f"{f.name} = {fmt(getattr(obj, f.name))}")
        return out

    out = ["[experiment]", f"space = {p.space}", f"seeds = {fmt(p.seeds)}",
           f"out = {cfg.out}", f"cache = {cfg.cache}", f"jobs = {cfg.jobs}", ""]
    tau_line = "auto" if p.tau is None else str(p.tau)
    pipe = section("pipeline", p, skip=("space", "seeds", "evo", "hparams", "data", "tau"))
    out += pipe + [f"tau = {tau_line}", ""]
    out += section("evo", p.evo) + [""]
    out += section("data", p.data) + [""]
    out += section("train", p.hparams) + [""]
    out += ["[ablate]"] + [f"{k} = {fmt(v)}" for k, v in cfg.grids.items()]
    return "\n".join(out) + "\n"
