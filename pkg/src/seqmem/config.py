"""Run configuration: one YAML file, validated with pydantic.

Only secrets come from the environment (``SEQMEM_API_KEY``); every other
setting lives in the file so a run is reproducible from it alone.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticError, field_validator, model_validator

from seqmem.errors import ConfigurationError
from seqmem.gateway import Gateway, HashingEmbedder, OpenAICompatibleBackend, RemoteEmbedder, ScriptedBackend, ScriptRule
from seqmem.policies import POLICIES, EVALUATORS, PolicyConfig, task_template
from seqmem.runner import RunPlan, make_schedule
from seqmem.stream import (
    DistributionTag,
    HoldoutSet,
    build_stream,
    load_dataset,
    split_stratified,
    split_tail,
)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SplitConfig(_Strict):
    mode: Literal["tail_fraction", "stratified_sample", "none"] = "tail_fraction"
    fraction: Optional[float] = Field(default=None, gt=0, lt=1)
    size: Optional[int] = Field(default=None, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _one_of(self):
        if self.mode == "tail_fraction" and (self.fraction is None or self.size is not None):
            raise ValueError("tail_fraction takes `fraction` and no `size`")
        if self.mode == "stratified_sample" and (self.size is None or self.fraction is not None):
            raise ValueError("stratified_sample takes `size` and no `fraction`")
        return self


class DatasetConfig(_Strict):
    path: Path
    name: str = ""
    split: SplitConfig = SplitConfig(mode="none")
    order_seed: Optional[int] = None


class HoldoutConfig(_Strict):
    name: str
    path: Path
    distribution: Literal["in_distribution", "out_of_distribution"] = "out_of_distribution"
    size: Optional[int] = Field(default=None, ge=1)
    seed: int = 0


class PolicySettings(_Strict):
    id: str
    k: int = Field(default=3, ge=1)
    batch_update_size: int = Field(default=8, ge=1)
    max_tries: int = Field(default=3, ge=1)
    max_num_rules: int = Field(default=20, ge=1)
    induce_steps: int = Field(default=1, ge=1)
    evaluator: str = "exact_match"
    task_template: Optional[str] = None

    @field_validator("id")
    @classmethod
    def _known(cls, v):
        if v not in POLICIES:
            raise ValueError(f"unknown policy {v!r}; known: {', '.join(sorted(POLICIES))}")
        return v

    @field_validator("evaluator")
    @classmethod
    def _evaluator(cls, v):
        if v not in EVALUATORS:
            raise ValueError(f"unknown evaluator {v!r}; known: {', '.join(EVALUATORS)}")
        return v

    def to_policy_config(self) -> PolicyConfig:
        return PolicyConfig(self.k, self.batch_update_size, self.max_tries, self.max_num_rules, self.induce_steps)


class RuleConfig(_Strict):
    match: str
    respond: str = ""
    kind: Literal["contains", "regex"] = "contains"
    echo: bool = False


class GatewayConfig(_Strict):
    backend: Literal["scripted", "http"] = "scripted"
    endpoint: Optional[str] = None
    model: Optional[str] = None
    embedding_model: Optional[str] = None
    temperature: float = Field(default=0.7, ge=0)
    max_tokens: int = Field(default=2048, ge=1)
    reasoning: Literal["off", "low", "medium"] = "off"
    timeout: float = Field(default=120.0, gt=0)
    max_attempts: int = Field(default=3, ge=1)
    backoff: float = Field(default=0.5, ge=0)
    rules: list[RuleConfig] = []
    default: Optional[str] = None
    latency: float = Field(default=0.0, ge=0)
    embed_dim: int = Field(default=64, ge=2)

    @model_validator(mode="after")
    def _backend_fields(self):
        if self.backend == "http" and (not self.endpoint or not self.model):
            raise ValueError("http backend needs `endpoint` and `model`")
        if self.backend == "scripted" and not self.rules and self.default is None:
            raise ValueError("scripted backend needs `rules` or a `default` response")
        return self


class ScheduleConfig(_Strict):
    n_checkpoints: Optional[int] = Field(default=None, ge=1)
    checkpoints: Optional[list[int]] = None
    horizons: Optional[list[int]] = None
    replay_budget: Optional[int] = Field(default=None, ge=1)
    max_in_flight: int = Field(default=1, ge=1)
    baseline_mode: Literal["online", "post_update"] = "online"

    @field_validator("horizons")
    @classmethod
    def _positive(cls, v):
        if v is not None and any(h < 1 for h in v):
            raise ValueError("horizons must be positive integers")
        return v


class RunConfig(_Strict):
    dataset: DatasetConfig
    policy: PolicySettings
    gateway: GatewayConfig
    holdout: list[HoldoutConfig] = []
    schedule: ScheduleConfig = ScheduleConfig()
    seed: int = 0
    method: str = ""
    output_dir: Path = Path("out")


def _format_error(exc: PydanticError) -> str:
    lines = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err["loc"]) or "<root>"
        if err["type"] == "extra_forbidden":
            model = _model_at(err["loc"][:-1])
            valid = ", ".join(model.model_fields) if model else "?"
            lines.append(f"{where}: unknown key (valid keys: {valid})")
        else:
            lines.append(f"{where}: {err['msg']}")
    return "; ".join(lines)


def _model_at(loc) -> type[BaseModel] | None:
    model: type[BaseModel] = RunConfig
    for part in loc:
        if isinstance(part, int):
            continue
        field = model.model_fields.get(part)
        if field is None:
            return None
        ann = field.annotation
        for cand in getattr(ann, "__args__", ()) + (ann,):
            if isinstance(cand, type) and issubclass(cand, BaseModel):
                model = cand
                break
        else:
            return None
    return model


def parse_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Load and validate a YAML config; relative paths resolve against its directory."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    for dotted, value in (overrides or {}).items():
        node = raw
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    try:
        cfg = RunConfig.model_validate(raw)
    except PydanticError as exc:
        raise ConfigurationError(f"{path}: {_format_error(exc)}") from None
    base = path.parent
    cfg.dataset.path = _resolve(base, cfg.dataset.path)
    for h in cfg.holdout:
        h.path = _resolve(base, h.path)
    if not cfg.output_dir.is_absolute():
        cfg.output_dir = base / cfg.output_dir
    if cfg.policy.task_template and ("/" in cfg.policy.task_template or cfg.policy.task_template.endswith(".txt")):
        cfg.policy.task_template = str(_resolve(base, Path(cfg.policy.task_template)))
    return cfg


def _resolve(base: Path, p: Path) -> Path:
    p = p if p.is_absolute() else base / p
    if not p.exists():
        raise ConfigurationError(f"referenced file does not exist: {p}")
    return p


def build_gateway(cfg: GatewayConfig, transport=None) -> Gateway:
    common = dict(temperature=cfg.temperature, max_tokens=cfg.max_tokens, reasoning=cfg.reasoning,
                  max_attempts=cfg.max_attempts, backoff=cfg.backoff)
    if cfg.backend == "scripted":
        rules = [ScriptRule(**r.model_dump()) for r in cfg.rules]
        return Gateway(ScriptedBackend(rules, cfg.default, cfg.latency), HashingEmbedder(cfg.embed_dim), **common)
    backend = OpenAICompatibleBackend(cfg.endpoint, cfg.model, timeout=cfg.timeout, transport=transport)
    embedder = RemoteEmbedder(backend, cfg.embedding_model) if cfg.embedding_model else HashingEmbedder(cfg.embed_dim)
    return Gateway(backend, embedder, **common)


def build_plan(cfg: RunConfig) -> RunPlan:
    tasks = load_dataset(cfg.dataset.path)
    name = cfg.dataset.name or cfg.dataset.path.stem
    split = cfg.dataset.split
    holdouts: dict[str, HoldoutSet] = {}
    if split.mode == "tail_fraction":
        stream, tail = split_tail(tasks, split.fraction, source_dataset=name)
        holdouts["holdout"] = tail
        stream = build_stream(list(stream), cfg.dataset.order_seed)
    elif split.mode == "stratified_sample":
        held = split_stratified(tasks, split.size, split.seed, source_dataset=name)
        held_ids = set(held.ids)
        holdouts["holdout"] = held
        stream = build_stream([t for t in tasks if t.id not in held_ids], cfg.dataset.order_seed)
    else:
        stream = build_stream(tasks, cfg.dataset.order_seed)
    for h in cfg.holdout:
        pool = load_dataset(h.path)
        if h.size is not None:
            hs = split_stratified(pool, h.size, h.seed, source_dataset=h.name, distribution_tag=h.distribution)
        else:
            hs = HoldoutSet(tuple(pool), source_dataset=h.name, distribution_tag=DistributionTag(h.distribution))
        holdouts[h.name] = hs
    sched = cfg.schedule
    T = len(stream)
    checkpoints = sched.checkpoints
    if checkpoints is None:
        n = sched.n_checkpoints if sched.n_checkpoints is not None else min(10, T)
        if n > T:
            raise ConfigurationError(f"schedule.n_checkpoints={n} exceeds stream length {T}")
        checkpoints = make_schedule(T, n)
    template = task_template(cfg.policy.task_template) if cfg.policy.task_template else None
    return RunPlan(
        stream=stream,
        policy_id=cfg.policy.id,
        policy_config=cfg.policy.to_policy_config(),
        checkpoints=checkpoints,
        horizons=sched.horizons,
        holdout_sets=holdouts,
        replay_budget=sched.replay_budget,
        seed=cfg.seed,
        evaluator=cfg.policy.evaluator,
        task_template=template,
        baseline_mode=sched.baseline_mode,
        max_in_flight=sched.max_in_flight,
        method=cfg.method or cfg.policy.id,
        dataset=name,
    )
