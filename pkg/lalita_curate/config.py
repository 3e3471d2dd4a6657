import yaml
from fractions import Fraction
from decimal import Decimal
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Optional, Tuple
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from loguru import logger

from lalita_curate.errors import ConfigError
from lalita_curate.utils import canonical_json, sha256_text

# 33.34_33.34_33.34_0 sums to 100.02.
PERCENT_SUM_TOLERANCE = 0.05


def format_percent(value: float) -> str:
    text = format(Decimal(str(value)).normalize(), "f")
    return text


class SystemConfig(BaseModel):
    """Logging and runtime settings."""
    log_level: str = "INFO"
    log_file: Optional[Path] = None


class PathsConfig(BaseModel):
    """Input files and the output directory."""
    bitext: Path
    conllu: Path
    output_dir: Path
    sidecars: List[Path] = Field(default_factory=list)
    synthetic_bitext: Optional[Path] = None
    synthetic_conllu: Optional[Path] = None
    synthetic_sidecars: List[Path] = Field(default_factory=list)
    external_scores: Optional[Path] = None
    external_bitext: Optional[Path] = None

    @model_validator(mode="after")
    def _synthetic_pairing(self):
        if (self.synthetic_bitext is None) != (self.synthetic_conllu is None):
            raise ValueError("synthetic_bitext and synthetic_conllu must be given together")
        return self

    def input_paths(self) -> List[Path]:
        paths = [self.bitext, self.conllu, *self.sidecars, *self.synthetic_sidecars]
        for optional in (self.synthetic_bitext, self.synthetic_conllu, self.external_scores, self.external_bitext):
            if optional is not None:
                paths.append(optional)
        return paths


class FilterConfig(BaseModel):
    """Bitext hygiene rules. A `preset` key expands to a full rule set."""
    roman_fraction_max: float = Field(0.35, ge=0.0, le=1.0)
    roman_side: Literal["source", "target", "off"] = "target"
    length_ratio_max: Optional[float] = Field(4.0, ge=1.0)  # None disables the rule
    enforce_one_to_one: bool = True
    enforce_single_sentence: bool = True
    synthetic_loglik_min: float = -1.0

    @model_validator(mode="before")
    @classmethod
    def _expand_preset(cls, data: Any):
        if isinstance(data, dict) and "preset" in data:
            data = dict(data)
            preset = data.pop("preset")
            if preset == "dedup_only":
                base = {
                    "roman_side": "off",
                    "length_ratio_max": None,
                    "enforce_one_to_one": False,
                    "enforce_single_sentence": False,
                }
            elif preset == "full":
                base = {}
            else:
                raise ValueError(f"Unknown filter preset: {preset}")
            base.update(data)
            return base
        return data

    @classmethod
    def full(cls) -> "FilterConfig":
        return cls()

    @classmethod
    def dedup_only(cls) -> "FilterConfig":
        return cls(preset="dedup_only")


class LanguageModelConfig(BaseModel):
    order: int = Field(5, ge=1)


class ScoreConfig(BaseModel):
    components: int = Field(10, ge=1)


class ClusterConfig(BaseModel):
    k: int = Field(4, ge=1)
    silhouette_sample: int = Field(10000, ge=2)
    seed: int = 0


class CurationConfig(BaseModel):
    """One cluster-mix recipe `a_b_c_d` at a total dataset size."""
    percents: Tuple[float, ...]
    tds: int = Field(..., ge=1)
    seed: int = 0
    allow_augmentation: bool = True

    @field_validator("percents")
    @classmethod
    def _check_percents(cls, value: Tuple[float, ...]):
        if not value:
            raise ValueError("percents must not be empty")
        if any(p < 0 for p in value):
            raise ValueError(f"percents must be nonnegative: {value}")
        total = sum(value)
        if abs(total - 100.0) > PERCENT_SUM_TOLERANCE:
            raise ValueError(f"percents must sum to 100, got {total}")
        return tuple(float(p) for p in value)

    @property
    def name(self) -> str:
        return "_".join(format_percent(p) for p in self.percents)

    def exact_shares(self) -> List[Fraction]:
        """Percents as exact rationals, renormalised to sum to one."""
        exact = [Fraction(Decimal(str(p))) for p in self.percents]
        total = sum(exact)
        return [p / total for p in exact]

    @classmethod
    def from_name(cls, name: str, tds: int, **kwargs) -> "CurationConfig":
        try:
            percents = tuple(float(part) for part in name.split("_"))
        except ValueError:
            raise ConfigError(f"Invalid configuration name '{name}' (expected a_b_c_d)")
        try:
            return cls(percents=percents, tds=tds, **kwargs)
        except ValidationError as e:
            raise ConfigError(f"Invalid configuration '{name}': {e}")


class SamplingConfig(BaseModel):
    configurations: List[str] = Field(default_factory=list)
    configuration_sets: List[List[float]] = Field(default_factory=list)
    tds: List[int] = Field(default_factory=lambda: [50000, 100000, 200000, 400000, 800000])
    seed: int = 0
    allow_augmentation: bool = True
    baselines: List[Literal["proportional", "random"]] = Field(default_factory=lambda: ["proportional", "random"])
    random_runs: int = Field(3, ge=1)
    stepwise_strategies: List[Literal["incpca", "decpca", "rs"]] = Field(default_factory=lambda: ["incpca", "decpca", "rs"])
    increment: int = Field(300000, ge=1)

    def configuration_names(self) -> List[str]:
        from lalita_curate.curation_sampler import enumerate_configurations

        names: List[str] = []
        for name in self.configurations:
            if name not in names:
                names.append(name)
        for multiset in self.configuration_sets:
            for percents in enumerate_configurations(multiset):
                name = "_".join(format_percent(p) for p in percents)
                if name not in names:
                    names.append(name)
        return names

    def curation_configs(self) -> List[CurationConfig]:
        return [
            CurationConfig.from_name(name, tds, seed=self.seed, allow_augmentation=self.allow_augmentation)
            for name in self.configuration_names()
            for tds in self.tds
        ]


class ReportConfig(BaseModel):
    enabled: bool = True
    histogram_features: List[str] = Field(default_factory=lambda: ["VERB", "sentenceLength"])
    length_threshold: int = 23
    absent_relations: List[str] = Field(default_factory=lambda: ["acl", "advcl", "conj"])


class PipelineConfig(BaseModel):
    """Root configuration object."""
    system: SystemConfig = Field(default_factory=SystemConfig)
    paths: PathsConfig
    filter: FilterConfig = Field(default_factory=FilterConfig)
    lm: LanguageModelConfig = Field(default_factory=LanguageModelConfig)
    score: ScoreConfig = Field(default_factory=ScoreConfig)
    cluster: ClusterConfig = Field(default_factory=ClusterConfig)
    sampling: SamplingConfig = Field(default_factory=SamplingConfig)
    report: ReportConfig = Field(default_factory=ReportConfig)


def config_hash(config: PipelineConfig) -> str:
    """Hash of everything that shapes artifact content. Paths and logging are excluded."""
    payload = config.model_dump(mode="json", exclude={"paths", "system"})
    return sha256_text(canonical_json(payload))


def section_hash(config: PipelineConfig, *sections: str) -> str:
    payload = {name: getattr(config, name).model_dump(mode="json") for name in sections}
    return sha256_text(canonical_json(payload))


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Apply `dotted.key=value` overrides; values are parsed as YAML scalars."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"Override must look like key.path=value, got '{item}'")
        key, raw = item.split("=", 1)
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise ConfigError(f"Empty override key in '{item}'")
        node = data
        for part in parts[:-1]:
            child = node.get(part)
            if child is None:
                child = {}
                node[part] = child
            if not isinstance(child, dict):
                raise ConfigError(f"Override '{key}' descends into a non-mapping value")
            node = child
        node[parts[-1]] = yaml.safe_load(raw)
    return data


def _resolve_paths(config: PipelineConfig, base_dir: Path) -> PipelineConfig:
    def resolve(p: Optional[Path]) -> Optional[Path]:
        if p is None:
            return None
        return p if p.is_absolute() else (base_dir / p)

    paths = config.paths
    resolved = paths.model_copy(update={
        "bitext": resolve(paths.bitext),
        "conllu": resolve(paths.conllu),
        "output_dir": resolve(paths.output_dir),
        "sidecars": [resolve(p) for p in paths.sidecars],
        "synthetic_bitext": resolve(paths.synthetic_bitext),
        "synthetic_conllu": resolve(paths.synthetic_conllu),
        "synthetic_sidecars": [resolve(p) for p in paths.synthetic_sidecars],
        "external_scores": resolve(paths.external_scores),
        "external_bitext": resolve(paths.external_bitext),
    })
    system = config.system
    if system.log_file is not None and not system.log_file.is_absolute():
        system = system.model_copy(update={"log_file": base_dir / system.log_file})
    return config.model_copy(update={"paths": resolved, "system": system})


def check_inputs(config: PipelineConfig):
    missing = [str(p) for p in config.paths.input_paths() if not p.exists()]
    if missing:
        raise ConfigError(f"Referenced input paths do not exist: {', '.join(missing)}")


def load_config(config_path: str = "config.yaml", overrides: Iterable[str] = ()) -> PipelineConfig:
    """
    Load and validate configuration from a YAML (or JSON) file.
    Relative paths are resolved against the directory holding the file.
    """
    path = Path(config_path)
    if not path.exists():
        logger.error(f"Configuration file not found: {config_path}")
        raise ConfigError(f"Configuration file not found: {config_path}")

    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"Configuration root must be a mapping: {config_path}")
        data = apply_overrides(data, overrides)
        config = PipelineConfig(**data)
    except yaml.YAMLError as e:
        logger.error(f"Error parsing configuration file: {e}")
        raise ConfigError(f"Error parsing configuration file: {e}")
    except ValidationError as e:
        logger.error(f"Configuration validation error: {e}")
        raise ConfigError(f"Configuration validation error: {e}")

    config = _resolve_paths(config, path.resolve().parent)
    check_inputs(config)
    config.paths.output_dir.mkdir(parents=True, exist_ok=True)

    logger.info(f"Configuration loaded successfully from {config_path}")
    return config
