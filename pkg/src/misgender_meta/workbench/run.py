"""Run configuration and the evaluation command that writes outcome tables."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import shutil
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from ..corpus import DecodeParams, load_dataset, sniff_format, write_records
from ..evaluation import SETTINGS, EvalRun, run_parallel_eval
from ..fixtures import data_path
from ..model_client import MockModel, RemoteModel, TransportError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

BUILTIN = "builtin"
OUTCOME_COLUMNS = (
    "instance_id", "method", "setting", "sample_index", "m", "predicted_base",
    "gold_base", "dataset", "model_id", "context_id",
)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    datasets: list[str]
    out: str
    model: str = "mock"
    endpoint: str | None = None
    mock_spec: str | None = None
    decode: DecodeParams = field(default_factory=DecodeParams)
    settings: tuple[str, ...] = SETTINGS
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.datasets, str):
            self.datasets = [self.datasets]
        if not self.datasets:
            raise ConfigError("at least one dataset path is required")
        self.settings = tuple(self.settings)
        if not self.settings or set(self.settings) - set(SETTINGS):
            raise ConfigError(f"settings must be a non-empty subset of {list(SETTINGS)}")
        if self.endpoint is None and self.mock_spec is None:
            self.endpoint = os.environ.get("MM_ENDPOINT")
        if self.endpoint is None and self.mock_spec is None:
            raise ConfigError("give either an endpoint or a mock spec")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if isinstance(self.decode, dict):
            self.decode = DecodeParams(**self.decode)
        if self.decode.seed != self.seed:
            self.decode = DecodeParams(**{**asdict(self.decode), "seed": self.seed})

    @classmethod
    def from_mapping(cls, data: dict, **overrides) -> "RunConfig":
        merged = {**data, **{k: v for k, v in overrides.items() if v is not None}}
        known = set(cls.__dataclass_fields__)
        unknown = set(merged) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**merged)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path, **overrides) -> "RunConfig":
        path = Path(path)
        raw = path.read_bytes()
        try:
            data = tomllib.loads(raw.decode()) if path.suffix == ".toml" else json.loads(raw)
        except (ValueError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_mapping(data, **overrides)

    def identity(self) -> dict:
        """Everything that determines the outputs; excludes out dir and worker count."""
        return {
            "datasets": list(self.datasets),
            "model": self.model,
            "endpoint": self.endpoint,
            "mock_spec": self.mock_spec,
            "decode": self.decode.to_dict(),
            "settings": list(self.settings),
            "seed": self.seed,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.identity(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def build_model(config: RunConfig):
    if config.mock_spec is not None:
        path = data_path("mock_spec") if config.mock_spec == BUILTIN else config.mock_spec
        return MockModel.load(path, model_id=config.model)
    return RemoteModel(config.endpoint, config.model, int(os.environ.get("MM_TIMEOUT_MS", "30000")))


def load_inputs(paths: Sequence[str]) -> list:
    records = []
    for p in paths:
        path = data_path(p) if p in ("misgendered", "ruff", "tango") else Path(p)
        records += load_dataset(path, sniff_format(path))
    ids = [r.id for r in records]
    if len(ids) != len(set(ids)):
        raise ConfigError("instance ids collide across datasets")
    return records


def _csv(rows: list[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: "" if r.get(k) is None else r[k] for k in columns})
    return buf.getvalue()


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_run(run: EvalRun, config: RunConfig, directory: Path) -> None:
    write_records(directory / "outcomes.jsonl", run.outcomes)
    for setting in sorted({o.setting for o in run.outcomes}):
        write_records(directory / f"outcomes_{setting}.jsonl", [o for o in run.outcomes if o.setting == setting])
    (directory / "outcomes.csv").write_text(_csv([o.row() for o in run.outcomes], OUTCOME_COLUMNS), encoding="utf-8")
    write_records(directory / "generations.jsonl", run.generations)
    write_records(directory / "contexts.jsonl", run.contexts)
    write_records(directory / "conversions.jsonl", run.conversions)
    write_records(directory / "errors.jsonl", run.errors)
    write_records(directory / "excluded.jsonl", run.excluded)
    files = {p.name: _sha256(p) for p in sorted(directory.iterdir())}
    manifest = {
        "config": config.identity(),
        "config_hash": config.config_hash(),
        "seeds": {"run": config.seed, "decode": config.decode.seed, "per_sample": "sha256(seed, prompt, index)"},
        "counts": {
            "attempted": run.attempted,
            "failed": len(run.errors),
            "excluded": len(run.excluded),
            "outcomes": len(run.outcomes),
        },
        "files": files,
    }
    with open(directory / "manifest.json", "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")


def _install(tmp: Path, out: Path) -> None:
    if out.exists():
        if any(out.iterdir()) and not (out / "manifest.json").exists():
            raise ConfigError(f"{out} is not empty and does not hold a previous run")
        shutil.rmtree(out)
    os.replace(tmp, out)


def cmd_eval(config: RunConfig, model=None) -> EvalRun:
    """Evaluate, then move a complete output tree into ``config.out``.

    Raises TransportError (and writes nothing) when every instance failed on
    transport; other total failures raise RuntimeError.
    """
    records = load_inputs(config.datasets)
    own = model is None
    model = build_model(config) if own else model
    try:
        run = run_parallel_eval(records, model, config.decode, workers=config.workers, settings=config.settings)
    finally:
        if own and hasattr(model, "close"):
            model.close()
    if run.attempted and len(run.errors) == run.attempted:
        kinds = {e["error"] for e in run.errors}
        first = run.errors[0]["message"]
        if kinds == {TransportError.__name__}:
            raise TransportError(f"every instance failed: {first}", getattr(model, "endpoint", ""))
        raise RuntimeError(f"every instance failed ({', '.join(sorted(kinds))}): {first}")
    out = Path(config.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".mm-run-", dir=out.parent))
    try:
        write_run(run, config, tmp)
        _install(tmp, out)
    finally:
        if tmp.exists():
            shutil.rmtree(tmp)
    return run
