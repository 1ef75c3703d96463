"""Run configuration and its flat ``dotted.key = value`` text format.

Blank lines and lines starting with ``#`` are ignored. Every key is
optional; see :data:`KEYS` for the full list with defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Tuple

from .errors import GradSurgeryError, ParseError, ValidationError
from .mining import BatchSpec
from .surgery import SurgeryConfig
from .training import EncoderSpec, SyntheticSpec, TrainParams


@dataclass(frozen=True)
class RunConfig:
    dataset: SyntheticSpec = field(default_factory=SyntheticSpec)
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    surgery: SurgeryConfig = field(default_factory=SurgeryConfig)
    epsilon: float = 0.1
    train: TrainParams = field(default_factory=TrainParams)
    eval_ks: Tuple[int, ...] = (1, 2, 4, 8)
    output_dir: str = "runs"
    repeat_seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValidationError("mining.epsilon must be >= 0")
        if not self.repeat_seeds:
            raise ValidationError("run.seeds must be nonempty")
        if not self.eval_ks or min(self.eval_ks) < 1:
            raise ValidationError("eval.ks must be positive integers")
        ds = self.dataset
        smallest_split = ds.samples_per_class * min(
            ds.num_classes - ds.holdout_classes, ds.holdout_classes or ds.num_classes)
        if max(self.eval_ks) >= smallest_split:
            raise ValidationError(f"eval.ks must be < {smallest_split} (smallest split size)")
        b = self.train.batch
        if b.samples_per_class > ds.samples_per_class:
            raise ValidationError("train.samples_per_class exceeds dataset.samples_per_class")
        if b.classes_per_batch > ds.num_classes - ds.holdout_classes:
            raise ValidationError("train.classes_per_batch exceeds the number of train classes")

    def for_seed(self, seed: int) -> "RunConfig":
        return replace(self, train=replace(self.train, seed=seed))


def _int(s):
    return int(s)


def _float(s):
    return float(s)


def _bool(s):
    low = s.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int_list(s):
    return tuple(int(x) for x in s.split(",") if x.strip())


# key -> (section, field, converter)
KEYS: Dict[str, tuple] = {
    "dataset.num_classes": ("dataset", "num_classes", _int),
    "dataset.samples_per_class": ("dataset", "samples_per_class", _int),
    "dataset.input_dim": ("dataset", "input_dim", _int),
    "dataset.noise_sigma": ("dataset", "noise_sigma", _float),
    "dataset.holdout_classes": ("dataset", "holdout_classes", _int),
    "dataset.seed": ("dataset", "seed", _int),
    "encoder.kind": ("encoder", "kind", str),
    "encoder.embed_dim": ("encoder", "embed_dim", _int),
    "surgery.direction": ("surgery", "direction", str),
    "surgery.pair_weight": ("surgery", "pair_weight", str),
    "surgery.triplet_weight": ("surgery", "triplet_weight", str),
    "surgery.mask": ("surgery", "mask", str),
    "surgery.tau": ("surgery", "tau", _float),
    "surgery.alpha": ("surgery", "alpha", _float),
    "surgery.beta": ("surgery", "beta", _float),
    "surgery.lambda": ("surgery", "lam", _float),
    "surgery.margin": ("surgery", "margin", _float),
    "surgery.orthogonalize_anchor": ("surgery", "orthogonalize_anchor", _bool),
    "mining.epsilon": ("run", "epsilon", _float),
    "train.epochs": ("train", "epochs", _int),
    "train.classes_per_batch": ("batch", "classes_per_batch", _int),
    "train.samples_per_class": ("batch", "samples_per_class", _int),
    "train.base_lr": ("train", "base_lr", _float),
    "train.lr_step_factor": ("train", "lr_step_factor", _float),
    "train.lr_milestone_frac": ("train", "lr_milestone_frac", _float),
    "train.seed": ("train", "seed", _int),
    "train.aggregate": ("train", "aggregate", str),
    "eval.ks": ("run", "eval_ks", _int_list),
    "output.dir": ("run", "output_dir", str),
    "run.seeds": ("run", "repeat_seeds", _int_list),
}


def parse_assignments(text: str) -> Dict[str, str]:
    """Split a config document into raw ``key -> value`` strings."""
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ParseError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ParseError(f"duplicate key {key!r}", lineno)
        values[key] = value
    return values


def build_config(values: Dict[str, str], base: RunConfig = None) -> RunConfig:
    """Apply raw string assignments on top of ``base`` (defaults if None)."""
    base = base or RunConfig()
    sections: Dict[str, dict] = {name: {} for name in ("dataset", "encoder", "surgery", "train", "batch", "run")}
    for key, raw in values.items():
        section, name, convert = KEYS[key]
        try:
            sections[section][name] = convert(raw)
        except ValueError as exc:
            raise ValidationError(f"{key}: {exc}") from None
    try:
        batch = replace(base.train.batch, **sections["batch"])
        return replace(
            base,
            dataset=replace(base.dataset, **sections["dataset"]),
            encoder=replace(base.encoder, **sections["encoder"]),
            surgery=replace(base.surgery, **sections["surgery"]),
            train=replace(base.train, batch=batch, **sections["train"]),
            **sections["run"],
        )
    except GradSurgeryError:
        raise
    except ValueError as exc:
        # Enum conversion failures in SurgeryConfig.
        raise ValidationError(str(exc)) from None


def parse_config(text: str) -> RunConfig:
    return build_config(parse_assignments(text))


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if hasattr(value, "value"):
        return value.value
    return str(value)


def dump_config(cfg: RunConfig) -> str:
    """Serialize every key, so ``parse_config(dump_config(c)) == c``."""
    objects = {
        "dataset": cfg.dataset,
        "encoder": cfg.encoder,
        "surgery": cfg.surgery,
        "train": cfg.train,
        "batch": cfg.train.batch,
        "run": cfg,
    }
    lines: List[str] = []
    for key, (section, name, _) in KEYS.items():
        lines.append(f"{key} = {_format_value(getattr(objects[section], name))}")
    return "\n".join(lines) + "\n"
