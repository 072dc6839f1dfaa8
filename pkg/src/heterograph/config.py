"""Experiment configuration: one JSON document per invocation, validated up front."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Discriminator, Field, Tag, ValidationError, field_validator, model_validator

from .model import VARIANTS

H_GRID = tuple(round(0.1 * i, 1) for i in range(11))
ABLATION_SETS = {
    "D1": ("S0", "S1", "NS0", "NS1"),
    "D2": ("N0", "N1", "N2", "S0"),
    "D3": ("K0", "K1", "R2", "full"),
}


class ConfigError(ValueError):
    """Schema violation; ``path`` points at the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SyntheticFeatureCfg(_Strict):
    kind: Literal["synthetic"] = "synthetic"
    dim: int = Field(100, ge=1)
    signal_strength: float = Field(0.2, ge=0, le=1)
    p_signal: float = Field(0.25, ge=0, le=1)
    p_noise: float = Field(0.05, ge=0, le=1)


class CorpusFeatureCfg(_Strict):
    kind: Literal["corpus"]
    path: str
    class_map: dict[int, int] | None = None


def _feature_kind(v):
    return (v.get("kind") if isinstance(v, dict) else getattr(v, "kind", None)) or "synthetic"


FeatureCfg = Annotated[Union[Annotated[SyntheticFeatureCfg, Tag("synthetic")], Annotated[CorpusFeatureCfg, Tag("corpus")]],
                       Discriminator(_feature_kind)]


class SplitCfg(_Strict):
    fractions: tuple[float, float, float] = (0.25, 0.25, 0.5)
    count: int = Field(1, ge=1)

    @field_validator("fractions")
    @classmethod
    def _sums_to_one(cls, v):
        if min(v) < 0 or abs(sum(v) - 1.0) > 1e-9:
            raise ValueError("fractions must be non-negative and sum to 1")
        return v


class GenerateCfg(_Strict):
    h_grid: list[float] = Field(default_factory=lambda: list(H_GRID), min_length=1)
    replicates: int = Field(3, ge=1)
    n: int = Field(1490, ge=1)
    num_classes: int = Field(5, ge=1)
    edges_per_node: int = Field(2, ge=1)
    compatibility: list[list[float]] | None = None
    features: FeatureCfg = Field(default_factory=SyntheticFeatureCfg)
    splits: SplitCfg = Field(default_factory=SplitCfg)
    name_prefix: str = "syn"

    @field_validator("h_grid")
    @classmethod
    def _in_unit(cls, v):
        bad = [h for h in v if not 0.0 <= h <= 1.0]
        if bad:
            raise ValueError(f"h values outside [0, 1]: {bad}")
        if len(set(v)) != len(v):
            raise ValueError("h_grid has duplicates")
        return v

    @model_validator(mode="after")
    def _sizes(self):
        if self.n < self.num_classes:
            raise ValueError("n must be >= num_classes")
        return self


class TrainSettings(_Strict):
    learning_rate: float = Field(0.01, gt=0)
    l2: float = Field(5e-4, ge=0)
    max_epochs: int = Field(2000, ge=1)
    patience: int = Field(100, ge=0)
    hidden_dim: int = Field(64, ge=1)
    dropout: float | None = Field(None, ge=0, lt=1)
    embed_nonlinearity: Literal["relu", "identity"] | None = None


class DegreeBucketCfg(_Strict):
    boundaries: list[int] | None = None
    quantiles: list[float] = Field(default_factory=lambda: [0.5, 0.9])


class _RunCfg(_Strict):
    bundles: list[str] = Field(default_factory=list)
    bundle_root: str | None = None
    splits: list[int] | None = None
    num_seeds: int = Field(1, ge=1)
    settings: TrainSettings = Field(default_factory=TrainSettings)
    record_timing: bool = False
    save_history: bool = False
    save_checkpoints: bool = False
    degree_buckets: DegreeBucketCfg | None = None

    @model_validator(mode="after")
    def _has_input(self):
        if not self.bundles and self.bundle_root is None:
            raise ValueError("give 'bundles' or 'bundle_root'")
        return self


def _check_variants(v):
    if not v:
        raise ValueError("variant list is empty")
    unknown = [x for x in v if x not in VARIANTS]
    if unknown:
        raise ValueError(f"unknown variants {unknown}; choose from {sorted(VARIANTS)}")
    if len(set(v)) != len(v):
        raise ValueError("variant list has duplicates")
    return v


class TrainCfg(_RunCfg):
    variants: list[str] = Field(default_factory=lambda: ["H2GCN-2"])

    @field_validator("variants")
    @classmethod
    def _known(cls, v):
        return _check_variants(v)


class AblateCfg(_RunCfg):
    axes: list[Literal["D1", "D2", "D3"]] = Field(default_factory=lambda: ["D1", "D2", "D3"])

    @field_validator("axes")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("variant set is empty: no ablation axes given")
        return v

    @property
    def variants(self) -> list[str]:
        out: list[str] = []
        for axis in self.axes:
            out += [v for v in ABLATION_SETS[axis] if v not in out]
        return out


class ThresholdGridCfg(_Strict):
    h: list[float] = Field(default_factory=lambda: [round(0.01 * i, 2) for i in range(101)], min_length=1)
    d: list[float] = Field(default_factory=lambda: [5.0, 20.0], min_length=1)
    num_classes: list[int] = Field(default_factory=lambda: [3, 5], min_length=1)


class TwoHopCfg(_Strict):
    h: list[float] = Field(default_factory=lambda: [round(0.01 * i, 2) for i in range(101)], min_length=1)
    num_classes: list[int] = Field(default_factory=lambda: list(range(2, 11)), min_length=1)


class SpectralCfg(_Strict):
    bundle: str
    signals: Literal["labels", "random"] = "labels"
    num_random: int = Field(10, ge=1)
    solver: Literal["jacobi", "lapack"] = "jacobi"


class AnalyzeCfg(_Strict):
    thresholds: ThresholdGridCfg | None = None
    two_hop: TwoHopCfg | None = None
    spectral: SpectralCfg | None = None

    @model_validator(mode="after")
    def _something(self):
        if self.thresholds is None and self.two_hop is None and self.spectral is None:
            raise ValueError("request at least one of thresholds, two_hop, spectral")
        return self


class ReportCfg(_Strict):
    inputs: list[str] = Field(min_length=1)
    metric: Literal["test_acc", "val_acc", "train_acc"] = "test_acc"


class ExperimentConfig(_Strict):
    seed: int = Field(0, ge=0, lt=2**64)
    out: str = "out"
    jobs: int = Field(1, ge=1)
    generate: GenerateCfg | None = None
    train: TrainCfg | None = None
    ablate: AblateCfg | None = None
    analyze: AnalyzeCfg | None = None
    report: ReportCfg | None = None


def _loc(err: dict) -> str:
    return ".".join(str(p) for p in err["loc"] if not (isinstance(p, str) and p in ("synthetic", "corpus")))


def parse_config(data: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Validate ``data`` after applying top-level scalar ``overrides``."""
    if not isinstance(data, dict):
        raise ConfigError("", "config must be a JSON object")
    data = dict(data)
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(_loc(first), first["msg"]) from None


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    return parse_config(data, overrides)


MASK64 = (1 << 64) - 1


def stable_hash(*parts) -> int:
    """64-bit hash of the parts' string forms, identical across processes and platforms."""
    text = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


def derive_seed(base: int, *parts) -> int:
    return (int(base) ^ stable_hash(*parts)) & MASK64


def bundle_name(prefix: str, h: float, replicate: int) -> str:
    return f"{prefix}-h{h:.2f}-r{replicate}"
