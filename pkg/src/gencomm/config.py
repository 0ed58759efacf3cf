"""Experiment configuration: dataclasses plus the key/value config-file
format (INI sections, documented below, versioned by `spec_version`).

Sections and keys, all optional with the defaults shown:

    [experiment]
    spec_version = 1
    master_seed = 7
    trials = 100
    predictor = analytic          ; analytic | mlp | exact-oracle
    sweep_axis = snr              ; snr | cbr | none
    snr_points = 1 4 7 10 13
    cbr_points = 0.002 0.0033 0.0059 0.011
    prompt = class:3              ; empty -> no prompt, unconditional sampling
    peak = 1.0                    ; dynamic range used by the PSNR transform
    mlp_checkpoint =              ; path; empty -> fresh seeded model

    [channel]
    kind = awgn                   ; awgn | rayleigh
    snr_db = 10

    [codec]
    k = 2
    k_prime = 8
    height = 32
    width = 32
    channels = 1
    seed = 99
    tikhonov_lambda = 0.0

    [schedule]
    steps = 1000
    beta_min = 1e-4
    beta_max = 0.02
    kind = linear                 ; linear | scaled_linear

    [sampler]
    steps = 5
    warm_start = auto             ; auto -> from the CBR table, or an integer
    guidance = 3.0
    singular_guard = 1e-8

    [world]
    prior_var = 1.0
    prior_ar1_rho = 0.9           ; source correlation; 0 -> isotropic prior

    [sidechannel]
    enabled = true
    snr_db = auto                 ; auto -> same as image channel
    ldpc_n = 1024
    ldpc_seed = 7070
    bp_iters = 50

Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Optional

from .channel import ChannelConfig
from .errors import ConfigurationError
from .jscc import CodecConfig

SPEC_VERSION = 1

PREDICTOR_CHOICES = ("analytic", "mlp", "exact-oracle")
SWEEP_AXES = ("snr", "cbr", "none")


@dataclass(frozen=True)
class ExperimentConfig:
    master_seed: int = 7
    trials: int = 100
    predictor: str = "analytic"
    sweep_axis: str = "snr"
    snr_points: tuple[float, ...] = (1.0, 4.0, 7.0, 10.0, 13.0)
    cbr_points: tuple[float, ...] = (0.002, 0.0033, 0.0059, 0.011)
    prompt: Optional[str] = "class:3"
    peak: float = 1.0
    mlp_checkpoint: Optional[str] = None

    channel: ChannelConfig = field(default_factory=ChannelConfig)
    codec: CodecConfig = field(default_factory=lambda: CodecConfig(k_prime=8, k=2,
                                                                   height=32, width=32,
                                                                   channels=1))
    codec_seed: int = 99
    tikhonov_lambda: float = 0.0

    schedule_steps: int = 1000
    beta_min: float = 1e-4
    beta_max: float = 0.02
    schedule_kind: str = "linear"

    sampler_steps: int = 5
    warm_start: Optional[int] = None   # None -> chosen from the CBR table
    guidance: float = 3.0
    singular_guard: float = 1e-8

    prior_var: float = 1.0
    prior_ar1_rho: float = 0.9

    sidechannel_enabled: bool = True
    sidechannel_snr_db: Optional[float] = None  # None -> image-channel SNR
    ldpc_n: int = 1024
    ldpc_seed: int = 7070
    bp_iters: int = 50

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigurationError(f"trials must be >= 1, got {self.trials}")
        if self.predictor not in PREDICTOR_CHOICES:
            raise ConfigurationError(f"predictor must be one of {PREDICTOR_CHOICES}")
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigurationError(f"sweep_axis must be one of {SWEEP_AXES}")
        if self.sweep_axis == "snr" and not self.snr_points:
            raise ConfigurationError("snr sweep requires snr_points")
        if self.sweep_axis == "cbr" and not self.cbr_points:
            raise ConfigurationError("cbr sweep requires cbr_points")
        if self.warm_start is not None and self.warm_start < self.sampler_steps:
            raise ConfigurationError(
                f"warm_start ({self.warm_start}) must be >= sampler steps "
                f"({self.sampler_steps})"
            )
        if self.prior_var <= 0.0:
            raise ConfigurationError("prior_var must be > 0")
        if not 0.0 <= self.prior_ar1_rho < 1.0:
            raise ConfigurationError("prior_ar1_rho must be in [0, 1)")


def _parse_scalar(raw: str, kind: str, section: str, key: str):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            lowered = raw.strip().lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError as exc:
        raise ConfigurationError(f"[{section}] {key}: cannot parse {raw!r} as {kind}") from exc


_SCHEMA = {
    "experiment": {
        "spec_version": "int", "master_seed": "int", "trials": "int",
        "predictor": "str", "sweep_axis": "str", "snr_points": "floats",
        "cbr_points": "floats", "prompt": "str", "peak": "float",
        "mlp_checkpoint": "str",
    },
    "channel": {"kind": "str", "snr_db": "float"},
    "codec": {"k": "int", "k_prime": "int", "height": "int", "width": "int",
              "channels": "int", "seed": "int", "tikhonov_lambda": "float"},
    "schedule": {"steps": "int", "beta_min": "float", "beta_max": "float",
                 "kind": "str"},
    "sampler": {"steps": "int", "warm_start": "str", "guidance": "float",
                "singular_guard": "float"},
    "world": {"prior_var": "float", "prior_ar1_rho": "float"},
    "sidechannel": {"enabled": "bool", "snr_db": "str", "ldpc_n": "int",
                    "ldpc_seed": "int", "bp_iters": "int"},
}


def load_config(path) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigurationError(f"config file not found: {path}")
    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigurationError(f"unknown config section [{section}]")
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigurationError(f"unknown key {key!r} in section [{section}]")
            kind = _SCHEMA[section][key]
            if kind == "floats":
                values[section][key] = tuple(
                    _parse_scalar(tok, "float", section, key)
                    for tok in raw.replace(",", " ").split()
                )
            else:
                values[section][key] = _parse_scalar(raw, kind, section, key)

    exp = values.get("experiment", {})
    version = exp.get("spec_version", SPEC_VERSION)
    if version != SPEC_VERSION:
        raise ConfigurationError(f"unsupported spec_version {version}")

    chan = values.get("channel", {})
    codec = values.get("codec", {})
    sched = values.get("schedule", {})
    samp = values.get("sampler", {})
    world = values.get("world", {})
    side = values.get("sidechannel", {})

    warm_start_raw = samp.get("warm_start", "auto")
    warm_start = None if str(warm_start_raw).strip() == "auto" else int(warm_start_raw)
    side_snr_raw = side.get("snr_db", "auto")
    side_snr = None if str(side_snr_raw).strip() == "auto" else float(side_snr_raw)
    prompt = exp.get("prompt", "class:3")
    if prompt is not None and str(prompt).strip() == "":
        prompt = None
    checkpoint = exp.get("mlp_checkpoint") or None

    return ExperimentConfig(
        master_seed=exp.get("master_seed", 7),
        trials=exp.get("trials", 100),
        predictor=exp.get("predictor", "analytic"),
        sweep_axis=exp.get("sweep_axis", "snr"),
        snr_points=tuple(exp.get("snr_points", (1.0, 4.0, 7.0, 10.0, 13.0))),
        cbr_points=tuple(exp.get("cbr_points", (0.002, 0.0033, 0.0059, 0.011))),
        prompt=prompt,
        peak=exp.get("peak", 1.0),
        mlp_checkpoint=checkpoint,
        channel=ChannelConfig(kind=chan.get("kind", "awgn"),
                              snr_db=chan.get("snr_db", 10.0)),
        codec=CodecConfig(k_prime=codec.get("k_prime", 8), k=codec.get("k", 2),
                          height=codec.get("height", 32), width=codec.get("width", 32),
                          channels=codec.get("channels", 1)),
        codec_seed=codec.get("seed", 99),
        tikhonov_lambda=codec.get("tikhonov_lambda", 0.0),
        schedule_steps=sched.get("steps", 1000),
        beta_min=sched.get("beta_min", 1e-4),
        beta_max=sched.get("beta_max", 0.02),
        schedule_kind=sched.get("kind", "linear"),
        sampler_steps=samp.get("steps", 5),
        warm_start=warm_start,
        guidance=samp.get("guidance", 3.0),
        singular_guard=samp.get("singular_guard", 1e-8),
        prior_var=world.get("prior_var", 1.0),
        prior_ar1_rho=world.get("prior_ar1_rho", 0.9),
        sidechannel_enabled=side.get("enabled", True),
        sidechannel_snr_db=side_snr,
        ldpc_n=side.get("ldpc_n", 1024),
        ldpc_seed=side.get("ldpc_seed", 7070),
        bp_iters=side.get("bp_iters", 50),
    )


def config_metadata(cfg: ExperimentConfig) -> dict:
    """Flat key/value view of a config plus the fixed convention flags,
    embedded in every result file."""
    meta = {
        "spec_version": SPEC_VERSION,
        "master_seed": cfg.master_seed,
        "trials": cfg.trials,
        "predictor": cfg.predictor,
        "sweep_axis": cfg.sweep_axis,
        "snr_points": " ".join(repr(v) for v in cfg.snr_points),
        "cbr_points": " ".join(repr(v) for v in cfg.cbr_points),
        "prompt": cfg.prompt if cfg.prompt is not None else "",
        "peak": cfg.peak,
        "channel_kind": cfg.channel.kind,
        "channel_snr_db": cfg.channel.snr_db,
        "codec_k": cfg.codec.k,
        "codec_k_prime": cfg.codec.k_prime,
        "codec_dims": f"{cfg.codec.channels}x{cfg.codec.height}x{cfg.codec.width}",
        "codec_seed": cfg.codec_seed,
        "tikhonov_lambda": cfg.tikhonov_lambda,
        "schedule": f"{cfg.schedule_kind} T={cfg.schedule_steps} "
                    f"beta=[{cfg.beta_min},{cfg.beta_max}]",
        "sampler_steps": cfg.sampler_steps,
        "warm_start": cfg.warm_start if cfg.warm_start is not None else "auto",
        "guidance": cfg.guidance,
        "prior_var": cfg.prior_var,
        "prior_ar1_rho": cfg.prior_ar1_rho,
        "sidechannel": cfg.sidechannel_enabled,
        "sidechannel_snr_db": (cfg.sidechannel_snr_db
                               if cfg.sidechannel_snr_db is not None else "auto"),
        "ldpc": f"(3,6) n={cfg.ldpc_n} seed={cfg.ldpc_seed} iters={cfg.bp_iters}",
        # Fixed conventions, recorded so result files are self-describing.
        "snr_convention": "unit power per complex symbol; sigma2 = total complex noise",
        "cbr_formula": "k / (C*H*W); side-channel uses k_o excluded",
        "csi": "perfect at receiver",
        "sidechannel_modulation": "BPSK on I and Q, 2 coded bits per complex use",
        "crc": "CRC-32 poly 0xEDB88320",
    }
    return meta
