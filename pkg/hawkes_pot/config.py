"""
Run configuration: flat KEY=value dotenv files with strict key checking.

Key prefixes name the section (DATA_, MODEL_, PRIOR_, CHAIN_, PREDICT_,
STUDY_, OUTPUT_DIR). CHAIN_PRESET picks chain and study defaults; explicit
keys override the preset. The resolved configuration is written next to
every run together with its SHA-256 hash.
"""

from dataclasses import dataclass, field, fields, replace
import hashlib
from pathlib import Path
from typing import Callable, Dict, Iterable, Mapping, Optional, Tuple, Union

from dotenv import dotenv_values
from loguru import logger

from .dp_kernel import DpConfig
from .errors import ConfigError, HawkesPotError
from .mcmc_engine import MODEL_GRID, ChainConfig, ModelSpec, PriorConfig

PRESETS: Dict[str, Dict[str, int]] = {
    "desk": {
        "n_chains": 2, "iterations": 2500, "burn_in": 500, "n_representative": 25,
        "mark_chains": 2, "mark_iterations": 1000, "mark_warmup": 500, "replicates": 5,
    },
    "full": {
        "n_chains": 4, "iterations": 10000, "burn_in": 2000, "n_representative": 100,
        "mark_chains": 4, "mark_iterations": 2000, "mark_warmup": 1000, "replicates": 10,
    },
}

TRANSFORMS = ("identity", "negative-log-return", "daily-aggregate-sum")


@dataclass(frozen=True)
class DataConfig:
    """Input file, column mapping, transform, threshold rule and train/test split."""
    input_path: str = ""
    time_column: str = "time"
    value_column: str = "value"
    transform: str = "identity"
    threshold: str = "upper:95"
    split: str = "fraction:0.8"
    scale_policy: str = "median"

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ConfigError(f"DATA_TRANSFORM must be one of {', '.join(TRANSFORMS)}, got '{self.transform}'")


@dataclass(frozen=True)
class ModelConfig:
    """Model variants to fit and the root seed."""
    variants: Tuple[str, ...] = tuple(m.name for m in MODEL_GRID)
    seed: int = 12345

    def specs(self) -> Tuple[ModelSpec, ...]:
        return tuple(ModelSpec.parse(v) for v in self.variants)


@dataclass(frozen=True)
class PredictConfig:
    """Forecast horizon, path count, tail levels and report grid."""
    horizon: float = 365.0
    n_paths: int = 1000
    levels: Tuple[float, ...] = ()
    grid_points: int = 200
    grid_max: float = 10.0


@dataclass(frozen=True)
class StudyConfig:
    """Simulation-study replicates and scenario selection."""
    replicates: int = 5
    scenarios: Tuple[str, ...] = ("exp-iid", "exp-hier", "mix-iid", "mix-hier")
    window_end: float = 1000.0
    train_end: float = 800.0


@dataclass(frozen=True)
class RunConfig:
    preset: str = "desk"
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    priors: PriorConfig = field(default_factory=PriorConfig)
    chains: ChainConfig = field(default_factory=ChainConfig)
    predict: PredictConfig = field(default_factory=PredictConfig)
    study: StudyConfig = field(default_factory=StudyConfig)
    output_dir: str = "output"


def _tuple_of(kind: Callable) -> Callable[[str], tuple]:
    return lambda text: tuple(kind(x.strip()) for x in text.split(",") if x.strip())


# KEY -> (section, field, parser); section "dp" lives inside priors
KEYS: Dict[str, Tuple[str, str, Callable]] = {
    "DATA_INPUT": ("data", "input_path", str),
    "DATA_TIME_COLUMN": ("data", "time_column", str),
    "DATA_VALUE_COLUMN": ("data", "value_column", str),
    "DATA_TRANSFORM": ("data", "transform", str),
    "DATA_THRESHOLD": ("data", "threshold", str),
    "DATA_SPLIT": ("data", "split", str),
    "DATA_SCALE_POLICY": ("data", "scale_policy", str),
    "MODEL_VARIANTS": ("model", "variants", _tuple_of(str)),
    "MODEL_SEED": ("model", "seed", int),
    "PRIOR_MU_SHAPE": ("priors", "mu_shape", float),
    "PRIOR_MU_RATE": ("priors", "mu_rate", float),
    "PRIOR_KAPPA_SHAPE": ("priors", "kappa_shape", float),
    "PRIOR_KAPPA_RATE": ("priors", "kappa_rate", float),
    "PRIOR_BETA_UPPER": ("priors", "beta_upper", float),
    "PRIOR_LOG_SIGMA0_MEAN": ("priors", "log_sigma0_mean", float),
    "PRIOR_LOG_SIGMA0_SD": ("priors", "log_sigma0_sd", float),
    "PRIOR_TAU_SD": ("priors", "tau_sd", float),
    "PRIOR_XI_MEAN": ("priors", "xi_mean", float),
    "PRIOR_XI_SD": ("priors", "xi_sd", float),
    "PRIOR_XI_LOWER": ("priors", "xi_lower", float),
    "PRIOR_DP_ALPHA_SHAPE": ("dp", "alpha_shape", float),
    "PRIOR_DP_ALPHA_RATE": ("dp", "alpha_rate", float),
    "PRIOR_DP_MU0": ("dp", "mu0", float),
    "PRIOR_DP_K0": ("dp", "k0", float),
    "PRIOR_DP_A0": ("dp", "a0", float),
    "PRIOR_DP_B0": ("dp", "b0", float),
    "PRIOR_DP_TRUNCATION": ("dp", "truncation", int),
    "CHAIN_COUNT": ("chains", "n_chains", int),
    "CHAIN_ITERATIONS": ("chains", "iterations", int),
    "CHAIN_BURN_IN": ("chains", "burn_in", int),
    "CHAIN_THIN": ("chains", "thin", int),
    "CHAIN_REPRESENTATIVE": ("chains", "n_representative", int),
    "CHAIN_MARK_CHAINS": ("chains", "mark_chains", int),
    "CHAIN_MARK_ITERATIONS": ("chains", "mark_iterations", int),
    "CHAIN_MARK_WARMUP": ("chains", "mark_warmup", int),
    "CHAIN_Z_DRAWS": ("chains", "z_draws", int),
    "CHAIN_TARGET_ACCEPT": ("chains", "target_accept", float),
    "CHAIN_LOG_EVERY": ("chains", "log_every", int),
    "CHAIN_WORKERS": ("chains", "workers", int),
    "PREDICT_HORIZON": ("predict", "horizon", float),
    "PREDICT_PATHS": ("predict", "n_paths", int),
    "PREDICT_LEVELS": ("predict", "levels", _tuple_of(float)),
    "PREDICT_GRID_POINTS": ("predict", "grid_points", int),
    "PREDICT_GRID_MAX": ("predict", "grid_max", float),
    "STUDY_REPLICATES": ("study", "replicates", int),
    "STUDY_SCENARIOS": ("study", "scenarios", _tuple_of(str)),
    "STUDY_WINDOW_END": ("study", "window_end", float),
    "STUDY_TRAIN_END": ("study", "train_end", float),
    "OUTPUT_DIR": ("root", "output_dir", str),
}
PRESET_KEY = "CHAIN_PRESET"


def parse_overrides(items: Iterable[str]) -> Dict[str, str]:
    """Turn ["KEY=VALUE", ...] (from --set flags) into a dict."""
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"Override '{item}' is not of the form KEY=VALUE")
        out[key.strip()] = value.strip()
    return out


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """
    Build a RunConfig from an optional dotenv file plus overrides.

    Args:
        path: Flat KEY=value file; unknown keys are fatal
        overrides: Values that take precedence over the file

    Returns:
        Resolved RunConfig
    """
    raw: Dict[str, Optional[str]] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        raw.update(dotenv_values(path))
    raw.update(overrides or {})

    unknown = sorted(k for k in raw if k not in KEYS and k != PRESET_KEY)
    if unknown:
        raise ConfigError(f"Unknown configuration keys: {', '.join(unknown)}")
    missing = sorted(k for k, v in raw.items() if v is None)
    if missing:
        raise ConfigError(f"Configuration keys without a value: {', '.join(missing)}")

    preset = (raw.get(PRESET_KEY) or "desk").strip().lower()
    if preset not in PRESETS:
        raise ConfigError(f"{PRESET_KEY} must be one of {', '.join(PRESETS)}, got '{preset}'")

    sections: Dict[str, Dict[str, object]] = {s: {} for s in ("data", "model", "priors", "dp", "chains", "predict", "study", "root")}
    for name, value in PRESETS[preset].items():
        sections["study" if name == "replicates" else "chains"][name] = value
    for key, value in raw.items():
        if key == PRESET_KEY:
            continue
        section, attr, parser = KEYS[key]
        try:
            sections[section][attr] = parser(value)
        except ValueError as e:
            raise ConfigError(f"Bad value for {key}: '{value}' ({e})") from e

    try:
        cfg = RunConfig(
            preset=preset,
            data=DataConfig(**sections["data"]),
            model=ModelConfig(**sections["model"]),
            priors=PriorConfig(dp=DpConfig(**sections["dp"]), **sections["priors"]),
            chains=ChainConfig(**sections["chains"]),
            predict=PredictConfig(**sections["predict"]),
            study=StudyConfig(**sections["study"]),
            **sections["root"],
        )
        cfg.model.specs()
    except ConfigError:
        raise
    except HawkesPotError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e

    logger.debug(f"⚙️ Configuration loaded (preset={preset}, {len(raw)} explicit keys)")
    return cfg


def _render(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_render(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def resolved_items(cfg: RunConfig) -> Dict[str, str]:
    """Every configuration key with its effective value, in key-table order."""
    holders = {
        "data": cfg.data, "model": cfg.model, "priors": cfg.priors, "dp": cfg.priors.dp,
        "chains": cfg.chains, "predict": cfg.predict, "study": cfg.study, "root": cfg,
    }
    items = {PRESET_KEY: cfg.preset}
    for key, (section, attr, _) in KEYS.items():
        items[key] = _render(getattr(holders[section], attr))
    return items


def resolved_text(cfg: RunConfig) -> str:
    return "".join(f"{k}={v}\n" for k, v in resolved_items(cfg).items())


def config_hash(cfg: RunConfig) -> str:
    """SHA-256 of the resolved configuration text."""
    return hashlib.sha256(resolved_text(cfg).encode("utf-8")).hexdigest()


def write_resolved_config(cfg: RunConfig, out_dir: Union[str, Path]) -> Tuple[Path, str]:
    """Write resolved_config.env into out_dir and return (path, hash)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "resolved_config.env"
    path.write_text(resolved_text(cfg), encoding="utf-8")
    digest = config_hash(cfg)
    (out / "resolved_config.sha256").write_text(digest + "\n", encoding="utf-8")
    logger.info(f"⚙️ Resolved configuration written to {path} (sha256 {digest[:12]})")
    return path, digest


def with_overrides(cfg: RunConfig, **sections) -> RunConfig:
    """Replace whole sections of a RunConfig (used by tests and the study harness)."""
    valid = {f.name for f in fields(RunConfig)}
    bad = set(sections) - valid
    if bad:
        raise ConfigError(f"Unknown configuration sections: {', '.join(sorted(bad))}")
    return replace(cfg, **sections)
