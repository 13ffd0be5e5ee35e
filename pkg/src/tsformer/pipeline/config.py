"""Flat ``key = value`` run configuration shared by every command."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from ..model import ModelConfig
from ..msa import SparsityConfig
from ..rmt import TrustConfig
from .degrade import DegradationSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # model
    base_channels: int = 32
    block_counts: tuple = (1, 2, 2, 4)
    expansion: float = 2.0
    patch_size: int = 8
    qkv_conv: str = "separable"
    downsample_conv: str = "separable"
    # sparsity / trust
    p_base: float = 0.1
    strategy: str = "min_p_trusted"
    k: int = 0
    spectral_size: int = 16
    beta: float = 1.0
    fed_tau: float = 8.0
    isa_alpha: float = 4.0
    isa_initial_tau: float = 4.0
    # training
    iterations: int = 200
    batch: int = 4
    crop: int = 32
    lr: float = 2e-4
    weight_decay: float = 1e-4
    seed: int = 0
    train_images: int = 16
    image_size: int = 64
    data_dir: str = ""
    # degradation
    degradation: str = "gaussian_noise"
    sigma: float = 0.1
    gamma: float = 2.2
    haze_t: float = 0.6
    haze_A: float = 0.9
    # inference
    checkpoint: str = ""
    input: str = ""
    ground_truth: str = ""
    tile: int = 0
    overlap: int = 16
    # bench
    bench_size: int = 256
    bench_repeats: int = 1
    # ablation
    ablate_seeds: int = 50
    ablate_n: int = 16
    ablate_noise: float = 0.1
    ablate_p_base: float = 0.7
    ablate_support_min: int = 1
    ablate_support_max: int = 4
    ablate_train_iterations: int = 60
    ablate_bins: int = 20

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            base_channels=self.base_channels,
            block_counts=tuple(self.block_counts),
            expansion=self.expansion,
            patch_size=self.patch_size,
            qkv_conv=self.qkv_conv,
            downsample_conv=self.downsample_conv,
            sparsity=self.sparsity_config(),
        )

    def trust_config(self) -> TrustConfig:
        return TrustConfig(self.spectral_size, self.beta, self.fed_tau, self.isa_alpha, self.isa_initial_tau)

    def sparsity_config(self, **overrides) -> SparsityConfig:
        kw = dict(p_base=self.p_base, strategy=self.strategy, k=self.k or None, trust=self.trust_config())
        kw.update(overrides)
        return SparsityConfig(**kw)

    def degradation_spec(self, seed: int | None = None) -> DegradationSpec:
        return DegradationSpec(self.degradation, self.sigma, self.gamma, self.haze_t, self.haze_A,
                               self.seed if seed is None else seed)

    def with_overrides(self, **kw) -> "RunConfig":
        for key in kw:
            if key not in _FIELDS:
                raise ConfigError(f"unknown config key {key!r}")
        return replace(self, **kw)

    def echo(self) -> list[str]:
        """Every key and value, one ``key = value`` line each."""
        return [f"{f.name} = {_format(getattr(self, f.name))}" for f in fields(self)]


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _format(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


def _coerce(key: str, raw: str):
    default = getattr(RunConfig, key)
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(p) for p in raw.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    return raw


def parse_config(text: str) -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    cfg = RunConfig(**values)
    try:
        cfg.model_config()
        cfg.degradation_spec()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
