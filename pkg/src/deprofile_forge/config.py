"""Run configuration: bundled defaults, file loading, dotted overrides, stable hash."""

from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .align import LENIENT, STRICT
from .coc import CocConfig
from .corpus import IngestConfig
from .gateway import BackendConfig
from .promptkit import PromptOptions, parse_tags

PACKAGE_PREFIX = "pkg:"

DEFAULTS: dict[str, Any] = {
    "inputs": {
        "counseling": "pkg:data/fixture/counseling.jsonl",
        "assessment": "pkg:data/fixture/assessment.jsonl",
        "candidates": "pkg:data/fixture/candidates.jsonl",
        "taxonomy": None,
        "script": "pkg:data/interview_script.json",
    },
    "output_root": "runs",
    "ingest": {"score_threshold": 0.8, "strict": True},
    "align": {"thresholds": [0.8, 0.8], "policy": STRICT},
    "coc": {
        "anchor_day": None,
        "horizon": 90,
        "window": 7,
        "extractor_enabled": False,
        "temporal_closure": False,
        "extractor_parallelism": 1,
    },
    "prompt": {
        "variants": ["basic", "basic+T", "basic+S", "basic+ST", "full w/o T", "full"],
        "few_shot_k": 2,
        "max_cards": None,
    },
    "interview": {"on_failure": "continue"},
    "judge": {"max_reasks": 1},
    "backends": {
        "echo": {"kind": "chat", "provider": "echo"},
        "scripted": {"kind": "chat", "provider": "scripted", "answers": "pkg:data/scripted_answers.json"},
        "mock-extract": {"kind": "extract", "provider": "mock"},
        "hash-embed": {"kind": "embed", "provider": "hash", "dim": 64},
        "mock-judge": {"kind": "judge", "provider": "mock"},
    },
    "select": {"chat": "scripted", "extract": "mock-extract", "embed": "hash-embed", "judge": "mock-judge"},
    "random_free": True,
    "workers": 4,
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "backends":
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_override(text: str) -> tuple[list[str], Any]:
    """``a.b.c=value``; the value is parsed as YAML so numbers, lists and null work."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key.path=value")
    key, raw = text.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = yaml.safe_load(raw) if raw.strip() else ""
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {text!r}: {exc}") from None
    return path, value


def _set_path(data: dict, path: list[str], value: Any) -> None:
    free = path[0] == "backends"  # backend sections take arbitrary provider options
    node = data
    for part in path[:-1]:
        nxt = node.get(part)
        if not isinstance(nxt, dict):
            if not (free and nxt is None):
                raise ConfigError(f"unknown config key {'.'.join(path)}")
            nxt = node[part] = {}
        node = nxt
    if not free and path[-1] not in node:
        raise ConfigError(f"unknown config key {'.'.join(path)}")
    node[path[-1]] = value


class RunConfig:
    """Validated view over the merged configuration tree."""

    def __init__(self, data: dict, base_dir: str | Path = ".") -> None:
        self.data = data
        self.base_dir = Path(base_dir)
        self._validate()

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: list[str] = ()) -> RunConfig:
        data = copy.deepcopy(DEFAULTS)
        base_dir: Path = Path.cwd()
        if path is not None:
            try:
                raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
            except yaml.YAMLError as exc:
                raise ConfigError(f"cannot parse config {path}: {exc}") from None
            if not isinstance(raw, dict):
                raise ConfigError(f"config {path} must be a mapping")
            unknown = set(raw) - set(DEFAULTS)
            if unknown:
                raise ConfigError(f"unknown config keys {sorted(unknown)}")
            data = _merge(data, raw)
            base_dir = Path(path).resolve().parent
        for item in overrides:
            key_path, value = parse_override(item)
            if key_path[0] not in DEFAULTS:
                raise ConfigError(f"unknown config key {key_path[0]!r}")
            _set_path(data, key_path, value)
        return cls(data, base_dir)

    def _validate(self) -> None:
        try:
            self.ingest
            self.coc
            self.prompt_options
            for name in self.variants:
                parse_tags(name)
            self.backends
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        th = self.data["align"]["thresholds"]
        if not (isinstance(th, list) and len(th) == 2 and all(isinstance(x, (int, float)) for x in th)):
            raise ConfigError("align.thresholds must be a list of two numbers")
        if self.data["align"]["policy"] not in (STRICT, LENIENT):
            raise ConfigError("align.policy must be 'strict' or 'lenient'")
        if self.data["interview"]["on_failure"] not in ("continue", "abort"):
            raise ConfigError("interview.on_failure must be 'continue' or 'abort'")
        for kind, name in self.data["select"].items():
            if name not in self.data["backends"]:
                raise ConfigError(f"select.{kind} names unknown backend {name!r}")
            if self.data["backends"][name]["kind"] != kind:
                raise ConfigError(f"select.{kind}: backend {name!r} has kind {self.data['backends'][name]['kind']!r}")
        if self.random_free:
            live = [n for n in self.data["select"].values() if not self.backends[n].is_mock]
            if live:
                raise ConfigError(f"random_free is set but selected backends {live} are not mocks")
        if int(self.data["workers"]) < 1:
            raise ConfigError("workers must be >= 1")

    # typed views -----------------------------------------------------------

    @property
    def ingest(self) -> IngestConfig:
        sec = self.data["ingest"]
        return IngestConfig(score_threshold=float(sec["score_threshold"]), strict=bool(sec["strict"]))

    @property
    def thresholds(self) -> tuple[float, float]:
        a, b = self.data["align"]["thresholds"]
        return (float(a), float(b))

    @property
    def policy(self) -> str:
        return self.data["align"]["policy"]

    @property
    def coc(self) -> CocConfig:
        return CocConfig(**self.data["coc"])

    @property
    def prompt_options(self) -> PromptOptions:
        sec = self.data["prompt"]
        return PromptOptions(few_shot_k=int(sec["few_shot_k"]), max_cards=sec["max_cards"])

    @property
    def variants(self) -> list[str]:
        return list(self.data["prompt"]["variants"])

    @property
    def backends(self) -> dict[str, BackendConfig]:
        return {name: BackendConfig.from_dict(name, dict(sec)) for name, sec in self.data["backends"].items()}

    def backend(self, kind: str) -> BackendConfig:
        return self.backends[self.data["select"][kind]]

    @property
    def random_free(self) -> bool:
        return bool(self.data["random_free"])

    @property
    def workers(self) -> int:
        return int(self.data["workers"])

    def resolve(self, value: str | None) -> Path | None:
        if value is None:
            return None
        if value.startswith(PACKAGE_PREFIX):
            return Path(str(resources.files("deprofile_forge").joinpath(value[len(PACKAGE_PREFIX) :])))
        path = Path(value)
        return path if path.is_absolute() else self.base_dir / path

    def input_path(self, key: str) -> Path | None:
        return self.resolve(self.data["inputs"][key])

    @property
    def output_root(self) -> Path:
        return self.resolve(self.data["output_root"])  # type: ignore[return-value]

    def canonical(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    @property
    def run_dir(self) -> Path:
        return self.output_root / f"run-{self.config_hash[:12]}"
