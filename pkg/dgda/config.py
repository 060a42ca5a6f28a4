"""
Numerical configuration of data generation and training.

Hyperparameters are plain dataclasses so a run is fully described by its
config text; Django settings only carry paths and logging. Config files are
flat ``key=value`` lines with ``#`` comments; a training config may embed the
synthetic-data keys with a ``synth.`` prefix.
"""
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, get_type_hints

from .exceptions import ConfigError

logger = logging.getLogger(__name__)

SYNTH_PREFIX = "synth."
TRUE_WORDS = {"true", "1", "yes", "on"}
FALSE_WORDS = {"false", "0", "no", "off"}


@dataclass
class SyntheticConfig:
    num_classes: int = 4
    text_dim: int = 16
    audio_dim: int = 12
    visual_dim: int = 10
    dialogues_per_domain: int = 200
    min_utterances: int = 4
    max_utterances: int = 10
    speakers_per_dialogue: int = 2
    shift: float = 2.0
    rotation_degrees: float = 15.0
    style_noise: float = 1.0
    stickiness: float = 0.7
    prototype_scale: float = 0.3
    seed: int = 0

    def validate(self) -> "SyntheticConfig":
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if min(self.text_dim, self.audio_dim, self.visual_dim) < 1:
            raise ConfigError("feature dimensions must be >= 1")
        if self.dialogues_per_domain < 0:
            raise ConfigError("dialogues_per_domain must be >= 0")
        if not 1 <= self.min_utterances <= self.max_utterances:
            raise ConfigError(
                f"utterance range [{self.min_utterances}, {self.max_utterances}] is empty or starts below 1"
            )
        if self.speakers_per_dialogue < 1:
            raise ConfigError("speakers_per_dialogue must be >= 1")
        if self.shift < 0 or self.style_noise < 0:
            raise ConfigError("shift and style_noise must be >= 0")
        if not 0.0 <= self.stickiness <= 1.0:
            raise ConfigError(f"stickiness must lie in [0, 1], got {self.stickiness}")
        return self


# Ablation presets. Keys set explicitly in a config still win over the preset.
VARIANTS = {
    "full": {},
    "hgnn_only": {"disable_pathnn_branch": True},
    "pathnn_only": {"disable_hgnn_branch": True},
    "no_perturb_hgnn": {"disable_perturb_hgnn": True},
    "no_perturb_pathnn": {"disable_perturb_pathnn": True},
    "no_perturb": {"disable_perturb_hgnn": True, "disable_perturb_pathnn": True},
    "no_coupling": {"disable_coupling": True},
    "no_regularizer": {"disable_regularizer": True},
    "source_only": {
        "w_adv": 0.0,
        "disable_coupling": True,
        "disable_perturb_hgnn": True,
        "disable_perturb_pathnn": True,
    },
}


@dataclass
class TrainConfig:
    lr: float = 0.0005
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    zeta: float = 0.3
    lam: float = 0.7
    ema_momentum: float = 0.7
    ema_freeze_epoch: Optional[int] = None
    delta_hgnn: float = 0.1
    delta_pathnn: float = 0.1
    k_disc: int = 1
    w_adv: float = 0.1
    w_couple: float = 1.0
    disable_hgnn_branch: bool = False
    disable_pathnn_branch: bool = False
    disable_perturb_hgnn: bool = False
    disable_perturb_pathnn: bool = False
    disable_coupling: bool = False
    disable_regularizer: bool = False
    noise_rate: float = 0.1
    model_dim: int = 64
    gru_hidden: int = 32
    hgnn_layers: int = 2
    hgnn_residual: bool = True
    pathnn_rounds: int = 1
    path_end_injection: bool = False
    paths_cross_modal: bool = True
    context_window: int = 2
    max_path_length: int = 3
    max_paths: int = 16
    disc_hidden: int = 32
    leaky_slope: float = 0.01
    hard_pseudo_labels: bool = False
    target_eval_fraction: float = 0.2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    source_path: Optional[str] = None
    target_path: Optional[str] = None
    variant: str = "full"
    synth: SyntheticConfig = field(default_factory=SyntheticConfig)

    @property
    def use_hgnn(self) -> bool:
        return not self.disable_hgnn_branch

    @property
    def use_pathnn(self) -> bool:
        return not self.disable_pathnn_branch

    @property
    def branches(self) -> tuple:
        return tuple(b for b, on in (("hgnn", self.use_hgnn), ("pathnn", self.use_pathnn)) if on)

    @property
    def regularizer_weight(self) -> float:
        return 0.0 if self.disable_regularizer else self.lam

    @property
    def coupling_active(self) -> bool:
        return not self.disable_coupling and self.use_hgnn and self.use_pathnn

    def branch_delta(self, branch: str) -> float:
        if branch == "hgnn":
            return 0.0 if self.disable_perturb_hgnn else self.delta_hgnn
        return 0.0 if self.disable_perturb_pathnn else self.delta_pathnn

    def validate(self) -> "TrainConfig":
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if not 0.0 <= self.zeta <= 1.0:
            raise ConfigError(f"zeta must lie in [0, 1], got {self.zeta}")
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")
        if not 0.0 <= self.ema_momentum < 1.0:
            raise ConfigError(f"ema_momentum must lie in [0, 1), got {self.ema_momentum}")
        if self.delta_hgnn < 0 or self.delta_pathnn < 0:
            raise ConfigError("perturbation intensities must be >= 0")
        if self.k_disc < 1:
            raise ConfigError(f"k_disc must be >= 1, got {self.k_disc}")
        if self.w_adv < 0 or self.w_couple < 0:
            raise ConfigError("loss weights must be >= 0")
        if not 0.0 <= self.noise_rate <= 0.5:
            raise ConfigError(f"noise_rate must lie in [0, 0.5], got {self.noise_rate}")
        if not self.branches:
            raise ConfigError("at least one of the HGNN and PathNN branches must stay enabled")
        if not 0.0 < self.target_eval_fraction < 1.0:
            raise ConfigError("target_eval_fraction must lie in (0, 1)")
        if min(self.model_dim, self.gru_hidden, self.hgnn_layers, self.pathnn_rounds,
               self.max_path_length, self.max_paths, self.disc_hidden) < 1:
            raise ConfigError("model sizes, layer counts and path limits must be >= 1")
        if self.context_window < 0:
            raise ConfigError("context_window must be >= 0")
        if (self.source_path is None) != (self.target_path is None):
            raise ConfigError("source_path and target_path must be given together")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        self.synth.validate()
        return self

    def to_text(self) -> str:
        lines = [f"variant={self.variant}"]
        for f in fields(self):
            if f.name in ("synth", "variant"):
                continue
            lines.append(f"{f.name}={_format(getattr(self, f.name))}")
        for f in fields(self.synth):
            lines.append(f"{SYNTH_PREFIX}{f.name}={_format(getattr(self.synth, f.name))}")
        return "\n".join(lines) + "\n"


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def parse_key_values(text: str, source: str = "<config>") -> dict:
    values = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{source}:{number}: expected key=value, got {raw!r}")
        values[key.strip()] = value.strip()
    return values


def _coerce(kind, raw, key: str):
    if not isinstance(raw, str):
        return raw
    optional = getattr(kind, "__args__", None)
    if optional and type(None) in optional:
        if raw.lower() in ("", "none", "null"):
            return None
        kind = next(k for k in optional if k is not type(None))
    try:
        if kind is bool:
            word = raw.lower()
            if word in TRUE_WORDS:
                return True
            if word in FALSE_WORDS:
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {getattr(kind, '__name__', kind)}") from None


def _apply(config, values: dict, prefix: str = ""):
    hints = get_type_hints(type(config))
    changes = {}
    for key, raw in values.items():
        if key not in hints or key == "synth":
            raise ConfigError(f"unknown config key {prefix}{key!r}")
        changes[key] = _coerce(hints[key], raw, prefix + key)
    return replace(config, **changes)


def synthetic_from_mapping(values: dict, base: SyntheticConfig = None) -> SyntheticConfig:
    values = {k[len(SYNTH_PREFIX):] if k.startswith(SYNTH_PREFIX) else k: v for k, v in values.items()}
    return _apply(base or SyntheticConfig(), values, SYNTH_PREFIX).validate()


def train_from_mapping(values: dict, base: TrainConfig = None) -> TrainConfig:
    """Variant preset first, then explicit keys, then ``synth.`` keys."""
    values = dict(values)
    synth_values = {k: values.pop(k) for k in list(values) if k.startswith(SYNTH_PREFIX)}
    config = base or TrainConfig()
    variant = values.get("variant", config.variant)
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; choose from {', '.join(VARIANTS)}")
    config = replace(config, variant=variant, **VARIANTS[variant])
    config = _apply(config, values)
    if synth_values:
        config = replace(config, synth=synthetic_from_mapping(synth_values, config.synth))
    return config.validate()


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_key_values(text, str(path))


def load_train_config(path=None, overrides: dict = None) -> TrainConfig:
    values = read_config_file(path) if path else {}
    values.update(overrides or {})
    config = train_from_mapping(values)
    logger.debug("loaded train config (variant=%s, seed=%d)", config.variant, config.seed)
    return config


def load_synthetic_config(path=None, overrides: dict = None) -> SyntheticConfig:
    values = read_config_file(path) if path else {}
    values.update(overrides or {})
    return synthetic_from_mapping(values)
