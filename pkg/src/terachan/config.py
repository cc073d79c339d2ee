"""Run configuration: flat `key = value` text with dotted namespaces.

Every knob has a documented default; unknown keys are rejected so typos
fail loudly. The fully resolved configuration is echoed next to every
command's outputs for provenance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .metrics import PdapConfig
from .model import EncoderConfig
from .synthetic import GeneratorConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _choice(*options):
    def convert(raw: str) -> str:
        if raw not in options:
            raise ConfigError(f"must be one of {options}, got {raw!r}")
        return raw

    return convert


# key -> (converter, default, help)
SCHEMA: dict[str, tuple] = {
    "seed": (int, 1, "master seed feeding every RNG stream"),
    "dataset.sample_count": (int, 2000, "synthetic samples to draw"),
    "dataset.distance_min": (float, 1.0, "shortest Tx-Rx distance, meters"),
    "dataset.distance_max": (float, 30.0, "longest Tx-Rx distance, meters"),
    "dataset.carrier_frequency": (float, 3.0e11, "carrier, Hz"),
    "dataset.delay_decay": (float, 20e-9, "mean NLoS excess delay, seconds"),
    "dataset.angle_scale": (float, 35.0, "Laplacian AoA scale, degrees"),
    "model.num_layers": (int, 2, "encoder layers (paper topology: 6)"),
    "model.num_heads": (int, 4, "attention heads per layer"),
    "model.model_dim": (int, 128, "encoder width d_x"),
    "model.key_dim": (int, 32, "per-head query/key width"),
    "model.value_dim": (int, 32, "per-head value width"),
    "model.seq_len": (int, 15, "MPCs per sample"),
    "model.mpc_dim": (int, 4, "features per MPC"),
    "model.ffn_dim": (int, 128, "feed-forward hidden width"),
    "model.noise_dim": (int, 32, "generator noise width"),
    "model.output_activation": (_choice("sigmoid", "linear_clamped"), "sigmoid",
                                "generator output squashing"),
    "train.epochs": (int, 300, "training epochs"),
    "train.batch_size": (int, 64, "minibatch size"),
    "train.gp_lambda": (float, 10.0, "gradient penalty coefficient"),
    "train.d_steps_per_g_step": (int, 3, "discriminator updates per generator update"),
    "train.g_learning_rate": (float, 1e-4, "generator SGD learning rate"),
    "train.d_learning_rate": (float, 1e-4, "discriminator Adam learning rate"),
    "train.checkpoint_interval": (int, 100, "epochs between checkpoints (0 = final only)"),
    "train.eval_interval": (int, 50, "epochs between spread evaluations (0 = never)"),
    "train.critic_mode": (_choice("paper", "wgan"), "paper",
                          "paper: sigmoid scores; wgan: canonical unclamped critic"),
    "train.condition_pairing": (_choice("resample", "paired"), "resample",
                                "conditions attached to fake samples"),
    "metrics.delay_bin": (float, 2.5e-9, "PDAP delay bin width, seconds"),
    "metrics.delay_span": (float, 400e-9, "PDAP delay extent, seconds"),
    "metrics.angle_bin": (float, 2.0, "PDAP angle bin width, degrees"),
    "metrics.floor_db": (float, -200.0, "PDAP power floor, dB"),
    "eval.ssim_distance_gap": (float, 0.5, "max distance gap when pairing PDAPs, meters"),
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        for key, (_, default, _help) in SCHEMA.items():
            self.values.setdefault(key, default)

    def __getitem__(self, key: str):
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values[key]

    def set(self, key: str, raw) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(sorted(SCHEMA))}")
        convert = SCHEMA[key][0]
        try:
            value = convert(raw) if isinstance(raw, str) or convert in (int, float) else convert(str(raw))
        except ConfigError:
            raise
        except (TypeError, ValueError) as err:
            raise ConfigError(f"bad value for {key}: {err}") from err
        self.values[key] = value

    # typed views ------------------------------------------------------------

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            sample_count=self["dataset.sample_count"],
            distance_range=(self["dataset.distance_min"], self["dataset.distance_max"]),
            carrier_frequency=self["dataset.carrier_frequency"],
            delay_decay=self["dataset.delay_decay"],
            angle_scale=self["dataset.angle_scale"],
            seed=self["seed"],
        )

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            num_layers=self["model.num_layers"],
            num_heads=self["model.num_heads"],
            model_dim=self["model.model_dim"],
            key_dim=self["model.key_dim"],
            value_dim=self["model.value_dim"],
            seq_len=self["model.seq_len"],
            mpc_dim=self["model.mpc_dim"],
            ffn_dim=self["model.ffn_dim"],
            noise_dim=self["model.noise_dim"],
            output_activation=self["model.output_activation"],
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self["train.epochs"],
            batch_size=self["train.batch_size"],
            gp_lambda=self["train.gp_lambda"],
            d_steps_per_g_step=self["train.d_steps_per_g_step"],
            g_learning_rate=self["train.g_learning_rate"],
            d_learning_rate=self["train.d_learning_rate"],
            seed=self["seed"],
            checkpoint_interval=self["train.checkpoint_interval"],
            eval_interval=self["train.eval_interval"],
            critic_mode=self["train.critic_mode"],
            condition_pairing=self["train.condition_pairing"],
        )

    def pdap_config(self) -> PdapConfig:
        return PdapConfig(
            delay_bin=self["metrics.delay_bin"],
            delay_span=self["metrics.delay_span"],
            angle_bin=self["metrics.angle_bin"],
            floor_db=self["metrics.floor_db"],
        )

    def to_text(self) -> str:
        lines = ["# resolved configuration"]
        for key in sorted(SCHEMA):
            lines.append(f"{key} = {self.values[key]}")
        return "\n".join(lines) + "\n"


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        try:
            cfg.set(key.strip(), raw.strip())
        except ConfigError as err:
            raise ConfigError(f"line {lineno}: {err}") from err
    return cfg


def load_config(path=None, seed=None) -> RunConfig:
    if path is None:
        cfg = RunConfig()
    else:
        with open(path) as fh:
            cfg = parse_config(fh.read())
    if seed is not None:
        cfg.values["seed"] = int(seed)
    return cfg
