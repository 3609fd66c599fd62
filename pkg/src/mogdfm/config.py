"""Experiment configuration files (YAML) and their resolution into runnable objects.

A config names the objectives (a preset or custom specs), the base dataset,
the sampler hyperparameters and the batch layout. Every key is validated
before anything runs; errors point at the offending line.

Example::

    objectives: {preset: conflict2}
    dataset: preset
    seed: 7
    batch: 100
    run: {T: 100, lambda: 1.0, phi_init_deg: 45}
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .core import DEG, RunConfig, Vocabulary
from .dfm import PolynomialScheduler, TabularPosterior, load_dataset
from .errors import ConfigError, InvalidArgumentError
from .objectives import MotifCountObjective, TableObjective, WindowLookupObjective, load_preset

MODES = ("generate", "baseline", "evaluate", "pareto-oracle", "weights", "ablate")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class TableSpec(_Strict):
    type: Literal["table"]
    name: str | None = None
    csv: str | None = None
    table: list[list[float]] | None = None


class MotifSpec(_Strict):
    type: Literal["motif"]
    motif: str
    name: str | None = None


class WindowSpec(_Strict):
    type: Literal["window"]
    width: int = Field(ge=1, le=4)
    lookup: list[float] | None = None
    csv: str | None = None
    name: str | None = None


ObjectiveSpec = Annotated[Union[TableSpec, MotifSpec, WindowSpec], Field(discriminator="type")]


class ObjectivesBlock(_Strict):
    preset: str | None = None
    custom: list[ObjectiveSpec] | None = None


class RunBlock(_Strict):
    T: int = Field(100, ge=1)
    lam: float = Field(1.0, ge=0, alias="lambda")
    beta: float = Field(1.0, gt=0)
    alpha_r: float = Field(0.5, ge=0, lt=1)
    tau: float = Field(0.3, gt=0, lt=1)
    eta: float = Field(1.0, gt=0)
    phi_init_deg: float = 45.0
    phi_min_deg: float = 15.0
    phi_max_deg: float = 75.0
    num_div: int = Field(64, ge=1)
    importance: Union[Literal["preset", "uniform"], list[float]] = "preset"
    importance_scope: Literal["all", "rank_only"] = "all"


class AblationBlock(_Strict):
    guided: Union[list[bool], dict[str, bool], None] = None
    disable_filtering: bool = False
    disable_adaptation: bool = False


class BaselineBlock(_Strict):
    population: int = 64
    generations: int = 100
    mutation_rate: float = 0.1
    crossover_rate: float = 0.9
    tournament_size: int = 2


class ExperimentConfig(_Strict):
    mode: Literal[MODES] | None = None
    vocabulary: Union[int, str, None] = None
    length: int | None = Field(None, ge=1)
    objectives: ObjectivesBlock
    dataset: str
    run: RunBlock = RunBlock()
    seed: int = Field(0, ge=0)
    batch: int = Field(100, ge=1)
    assignment: Literal["random", "round_robin"] = "random"
    reference_point: list[float] | None = None
    ablation: AblationBlock = AblationBlock()
    baseline: BaselineBlock = BaselineBlock()
    output: str = "results"
    log_level: Literal["full", "summary"] = "full"

    @field_validator("dataset")
    @classmethod
    def _dataset_nonempty(cls, v):
        if not v.strip():
            raise ValueError("dataset must be 'preset' or a file path")
        return v


# ---------------------------------------------------------------------------
# loading with line numbers
# ---------------------------------------------------------------------------


def _node_at(root, loc):
    """Deepest YAML node along a validation error location."""
    node = root
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == key:
                    nxt = v
                    break
            if nxt is None:
                return node
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            return node
    return node


def _key_line(root, loc) -> int | None:
    """Line of the mapping key for unknown-key errors, else of the value node."""
    parent = _node_at(root, loc[:-1])
    if isinstance(parent, yaml.MappingNode):
        for k, _ in parent.value:
            if k.value == loc[-1]:
                return k.start_mark.line + 1
    node = _node_at(root, loc)
    return None if node is None else node.start_mark.line + 1


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Validate a YAML document; raise :class:`ConfigError` with ``file:line`` prefixes."""
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigError(f"{where}: malformed YAML: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}:1: top level must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            # pydantic puts the union tag after the list index; it is not a YAML key
            raw = err["loc"]
            loc = tuple(p for n, p in enumerate(raw)
                        if not (n > 0 and isinstance(raw[n - 1], int) and p in ("table", "motif", "window")))
            field_name = ".".join(str(p) for p in loc) or "<root>"
            line = _key_line(root, loc) if loc else 1
            if err["type"] == "missing":
                line = 1 if len(loc) == 1 else _key_line(root, loc[:-1])
            lines.append(f"{source}:{line}: {field_name}: {err['msg']}")
        raise ConfigError("\n".join(lines)) from None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse_config(text, str(path))


# ---------------------------------------------------------------------------
# resolution
# ---------------------------------------------------------------------------


@dataclass
class Experiment:
    """Everything a subcommand needs, built from a validated config."""

    config: ExperimentConfig
    vocabulary: Vocabulary
    d: int
    objectives: list
    base: TabularPosterior
    run: RunConfig
    reference_point: np.ndarray | None
    base_dir: Path

    @property
    def K(self) -> int:
        return self.vocabulary.size


def _vocabulary(spec) -> Vocabulary:
    if isinstance(spec, int):
        return Vocabulary(spec)
    return Vocabulary.from_labels(spec)


def _read_floats(path: Path) -> list[list[float]]:
    with open(path, newline="") as fh:
        return [[float(v) for v in row] for row in csv.reader(fh) if row and not row[0].startswith("#")]


def _custom_objective(spec, vocab: Vocabulary, d: int, base_dir: Path, index: int):
    K = vocab.size
    where = f"objectives.custom.{index}"
    if isinstance(spec, TableSpec):
        if (spec.csv is None) == (spec.table is None):
            raise ConfigError(f"{where}: give exactly one of 'csv' or 'table'")
        table = np.array(_read_floats(base_dir / spec.csv) if spec.csv else spec.table, dtype=float)
        if table.shape != (d, K):
            raise ConfigError(f"{where}: table must be {d} x {K}, got {table.shape}")
        return TableObjective(table, spec.name or f"table{index}")
    if isinstance(spec, MotifSpec):
        motif = vocab.encode(spec.motif)
        if motif.size > d:
            raise ConfigError(f"{where}: motif longer than the sequence")
        return MotifCountObjective(motif, K, spec.name or f"motif_{spec.motif}")
    if (spec.csv is None) == (spec.lookup is None):
        raise ConfigError(f"{where}: give exactly one of 'csv' or 'lookup'")
    lookup = np.ravel(_read_floats(base_dir / spec.csv)) if spec.csv else np.array(spec.lookup, dtype=float)
    if spec.width > d:
        raise ConfigError(f"{where}: window wider than the sequence")
    try:
        return WindowLookupObjective(spec.width, lookup, K, spec.name or f"window{spec.width}")
    except InvalidArgumentError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _guided_mask(ablation: AblationBlock, names: list[str]):
    g = ablation.guided
    if g is None:
        return None
    if isinstance(g, dict):
        unknown = sorted(set(g) - set(names))
        if unknown:
            raise ConfigError(f"ablation.guided: unknown objective(s) {unknown}; have {names}")
        mask = tuple(bool(g.get(n, True)) for n in names)
    else:
        if len(g) != len(names):
            raise ConfigError(f"ablation.guided: {len(g)} flags for {len(names)} objectives")
        mask = tuple(g)
    if not any(mask):
        raise ConfigError("ablation.guided: at least one objective must stay guided")
    return mask


def resolve(cfg: ExperimentConfig, base_dir: str | Path = ".", seed: int | None = None) -> Experiment:
    """Build objectives, dataset and :class:`RunConfig` from a validated config."""
    base_dir = Path(base_dir)
    obj = cfg.objectives
    if (obj.preset is None) == (obj.custom is None):
        raise ConfigError("objectives: give exactly one of 'preset' or 'custom'")
    preset = None
    if obj.preset is not None:
        try:
            preset = load_preset(obj.preset)
        except InvalidArgumentError as exc:
            raise ConfigError(f"objectives.preset: {exc}") from None
        vocab, d = preset.vocabulary, preset.d
        if cfg.vocabulary is not None and _vocabulary(cfg.vocabulary) != vocab:
            raise ConfigError(f"vocabulary: does not match preset {preset.name!r}")
        if cfg.length is not None and cfg.length != d:
            raise ConfigError(f"length: preset {preset.name!r} has length {d}")
        fns = list(preset.objectives)
    else:
        if cfg.vocabulary is None or cfg.length is None:
            raise ConfigError("vocabulary and length are required with custom objectives")
        try:
            vocab = _vocabulary(cfg.vocabulary)
        except InvalidArgumentError as exc:
            raise ConfigError(f"vocabulary: {exc}") from None
        d = cfg.length
        if not obj.custom:
            raise ConfigError("objectives.custom: at least one objective is required")
        fns = [_custom_objective(s, vocab, d, base_dir, n) for n, s in enumerate(obj.custom)]
    names = [f.name for f in fns]
    if len(set(names)) != len(names):
        raise ConfigError(f"objectives: names must be unique, got {names}")

    if cfg.dataset == "preset":
        if preset is None:
            raise ConfigError("dataset: 'preset' needs an objectives preset; give a dataset file path")
        base = preset.base
    else:
        path = base_dir / cfg.dataset
        if not path.is_file():
            raise ConfigError(f"dataset: file not found: {path}")
        try:
            base = load_dataset(path, vocab, PolynomialScheduler(2.0))
        except InvalidArgumentError as exc:
            raise ConfigError(f"dataset: {exc}") from None
        if base.d != d:
            raise ConfigError(f"dataset: sequences have length {base.d}, expected {d}")

    r = cfg.run
    if r.importance == "preset":
        importance = preset.importance if preset is not None else None
    elif r.importance == "uniform":
        importance = None
    else:
        importance = tuple(r.importance)
        if len(importance) != len(fns):
            raise ConfigError(f"run.importance: {len(importance)} weights for {len(fns)} objectives")
    try:
        run = RunConfig(
            T=r.T, lam=r.lam, beta=r.beta, alpha_r=r.alpha_r, tau=r.tau, eta=r.eta,
            phi_init=r.phi_init_deg * DEG, phi_min=r.phi_min_deg * DEG, phi_max=r.phi_max_deg * DEG,
            num_div=r.num_div, importance=importance, importance_scope=r.importance_scope,
            seed=cfg.seed if seed is None else seed, guided=_guided_mask(cfg.ablation, names),
            disable_filtering=cfg.ablation.disable_filtering,
            disable_adaptation=cfg.ablation.disable_adaptation,
            record_objectives=True,
        )
    except InvalidArgumentError as exc:
        raise ConfigError(f"run: {exc}") from None

    if cfg.reference_point is not None:
        ref = np.array(cfg.reference_point, dtype=float)
        if ref.size != len(fns) or not np.all(np.isfinite(ref)):
            raise ConfigError(f"reference_point: need {len(fns)} finite values")
    elif preset is not None:
        ref = preset.reference_point
    else:
        ref = None
    return Experiment(cfg, vocab, d, fns, base, run, ref, base_dir)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Plain, key-sorted form used in manifests."""
    return cfg.model_dump(mode="json", by_alias=True)
