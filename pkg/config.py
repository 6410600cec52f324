"""Configuration module for TIFTI."""
import os
from dataclasses import dataclass, fields
from typing import Any, Dict, Mapping, Optional, Tuple

from dotenv import dotenv_values, load_dotenv

from models.learning import FeatureConfig, SeqVariant, TrainConfig
from models.settings import METHOD_FLAGS, CascadeConfig, GenConfig, Method

# Load environment variables from .env file
load_dotenv()

BASE_DIR = os.path.dirname(os.path.abspath(__file__))

# Shipped fixtures (lexicons, template pools, tagger fixtures)
DATA_DIR = os.getenv("TIFTI_DATA_DIR", os.path.join(BASE_DIR, "data"))
LEXICON_DIR = os.path.join(DATA_DIR, "lexicons")
TEMPLATES_PATH = os.path.join(DATA_DIR, "templates.json")
TEMPORAL_FIXTURES_PATH = os.path.join(DATA_DIR, "temporal_fixtures.tsv")
BUILTIN_LEXICONS = ("rcc", "nsclc")

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_LEVEL = os.getenv("TIFTI_LOG_LEVEL", "INFO")

# Windows (days) reported in agreement curves; 0 and 30 feed the summary table
AGREEMENT_WINDOWS: Tuple[int, ...] = (0, 7, 14, 30, 60, 90, 180)

# Hyperparameter grid for `ablate --grid`
DELTA_GRID: Tuple[int, ...] = (0, 1, 3, 7)
TAU_GRID: Tuple[float, ...] = (0.7, 0.8, 0.9, 0.95)

# Model file names written by `train` and read by `predict`
SEQ_ORIGINAL_MODEL = "seq_original.model"
SEQ_SIMULATED_MODEL = "seq_simulated.model"
EXPR_MODEL = "expr.model"

SEQ_VARIANT_FLAGS = {
    "logistic": SeqVariant.INDEPENDENT_LOGISTIC,
    "birnn": SeqVariant.BIRNN,
}


@dataclass(frozen=True)
class RunConfig:
    """Merged settings for one command run.

    Precedence, lowest first: defaults, TIFTI_* environment, --config file, flags.
    """
    seed: int = 7
    jobs: int = 1
    delta_days: int = 3
    tau: float = 0.9
    method: str = "full"
    lexicon: str = "rcc"
    ngram_orders: str = "1,2"
    dim: int = 2 ** 18
    rnn_dim: int = 2 ** 14
    seq_variant: str = "logistic"
    seq_learning_rate: float = 0.5
    seq_epochs: int = 400
    rnn_learning_rate: float = 0.1
    rnn_epochs: int = 200
    expr_learning_rate: float = 0.5
    expr_epochs: int = 400
    l2: float = 1e-4
    n_examples: int = 2000
    taken_fraction: float = 0.53
    explicit_start_prob: float = 0.5
    explicit_end_prob: float = 0.5
    start_on_visit_prob: float = 0.55
    end_on_visit_prob: float = 0.77
    copy_forward_prob: float = 0.3
    min_visits: int = 4
    max_visits: int = 12
    style_profiles: int = 5
    dev_fraction: float = 0.8

    @property
    def variant(self) -> SeqVariant:
        return SEQ_VARIANT_FLAGS[self.seq_variant]

    @property
    def cascade_method(self) -> Method:
        return METHOD_FLAGS[self.method]

    def feature_config(self) -> FeatureConfig:
        """Feature config of the expression classifier and the logistic labeler."""
        return FeatureConfig(ngram_orders=parse_ngram_orders(self.ngram_orders), dim=self.dim)

    def seq_feature_config(self) -> FeatureConfig:
        if self.variant == SeqVariant.BIRNN:
            return FeatureConfig(ngram_orders=parse_ngram_orders(self.ngram_orders), dim=self.rnn_dim)
        return self.feature_config()

    def seq_train_config(self) -> TrainConfig:
        if self.variant == SeqVariant.BIRNN:
            return TrainConfig(learning_rate=self.rnn_learning_rate, epochs=self.rnn_epochs, l2=self.l2, seed=self.seed)
        return TrainConfig(learning_rate=self.seq_learning_rate, epochs=self.seq_epochs, l2=self.l2, seed=self.seed)

    def expr_train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.expr_learning_rate, epochs=self.expr_epochs, l2=self.l2, seed=self.seed)

    def cascade_config(self, method: Optional[Method] = None) -> CascadeConfig:
        return CascadeConfig(tau=self.tau, method=method or self.cascade_method)

    def gen_config(self, lexicon: Optional[str] = None, seed: Optional[int] = None) -> GenConfig:
        return GenConfig(
            n_examples=self.n_examples,
            taken_fraction=self.taken_fraction,
            explicit_start_prob=self.explicit_start_prob,
            explicit_end_prob=self.explicit_end_prob,
            start_on_visit_prob=self.start_on_visit_prob,
            end_on_visit_prob=self.end_on_visit_prob,
            copy_forward_prob=self.copy_forward_prob,
            visits_per_example=(self.min_visits, self.max_visits),
            lexicon=lexicon or self.lexicon,
            style_profiles=self.style_profiles,
            seed=self.seed if seed is None else seed,
        )

    def as_dict(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


CONFIG_KEYS: Dict[str, type] = {f.name: f.type for f in fields(RunConfig)}


def parse_ngram_orders(value: str) -> frozenset:
    try:
        return frozenset(int(part) for part in str(value).split(",") if part.strip())
    except ValueError:
        raise ValueError(f"ngram_orders must be a comma-separated list of integers, got '{value}'")


def normalize_key(key: str) -> str:
    return key.strip().lower().lstrip("-").replace("-", "_")


def _coerce(key: str, raw: Any) -> Any:
    """Convert a raw config value (string from env/file, or flag value) to the key's type."""
    target = CONFIG_KEYS[key]
    if isinstance(raw, target):
        return raw
    try:
        if target is int:
            return int(str(raw).strip())
        if target is float:
            return float(str(raw).strip())
        return str(raw).strip()
    except ValueError:
        raise ValueError(f"Config key '{key}' expects {target.__name__}, got '{raw}'")


def load_run_config(config_path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Merge defaults, environment, config file and flag overrides into a validated RunConfig."""
    values: Dict[str, Any] = {}
    for key in CONFIG_KEYS:
        env_value = os.getenv(f"TIFTI_{key.upper()}")
        if env_value is not None:
            values[key] = env_value

    if config_path:
        if not os.path.exists(config_path):
            raise FileNotFoundError(f"Config file not found: {config_path}")
        for raw_key, raw_value in dotenv_values(config_path).items():
            key = normalize_key(raw_key)
            if key not in CONFIG_KEYS:
                raise ValueError(f"Unknown config key '{raw_key}' in {config_path}")
            if raw_value is None:
                raise ValueError(f"Config key '{raw_key}' in {config_path} has no value")
            values[key] = raw_value

    # Explicit flags always win over the file
    for raw_key, raw_value in (overrides or {}).items():
        if raw_value is None:
            continue
        key = normalize_key(raw_key)
        if key not in CONFIG_KEYS:
            raise ValueError(f"Unknown config key '{raw_key}'")
        values[key] = raw_value

    run_config = RunConfig(**{key: _coerce(key, value) for key, value in values.items()})
    validate_config(run_config)
    return run_config


def validate_config(run_config: RunConfig) -> bool:
    """Validate that every component config derived from run_config holds its invariants."""
    if run_config.method not in METHOD_FLAGS:
        raise ValueError(f"method must be one of {sorted(METHOD_FLAGS)}, got '{run_config.method}'")
    if run_config.seq_variant not in SEQ_VARIANT_FLAGS:
        raise ValueError(f"seq_variant must be one of {sorted(SEQ_VARIANT_FLAGS)}, got '{run_config.seq_variant}'")
    if run_config.jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {run_config.jobs}")
    if run_config.delta_days < 0:
        raise ValueError(f"delta_days must be >= 0, got {run_config.delta_days}")
    if not 0.0 < run_config.dev_fraction < 1.0:
        raise ValueError(f"dev_fraction must be in (0, 1), got {run_config.dev_fraction}")
    run_config.feature_config()
    run_config.seq_feature_config()
    run_config.seq_train_config()
    run_config.expr_train_config()
    run_config.cascade_config()
    run_config.gen_config()
    return True
