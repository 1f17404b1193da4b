"""Pipeline configuration.

Config files are flat TOML (``key = value`` lines, ``#`` comments). Every key
is optional; unknown keys are rejected. Keys whose default is "derived"
(``sigma_hp``, ``sigma_w``, ``k_min``, ``k_max``, ``window_us``) are computed
from the other settings when absent.
"""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

FUSION_MODES = ("dapa", "add", "concat")
SPARSIFY_MODES = ("mgss", "random", "none")
ATTN_VARIANTS = ("diff_fft", "diff", "standard")
DECAYS = ("exp", "linear", "power")


@dataclass(frozen=True)
class PipelineConfig:
    template_size: int = 112
    search_size: int = 224
    patch: int = 16
    bins: int = 5
    stride: int = 1
    dim: int = 128
    fuse_dim: int = 16
    sigma_hp: float | None = None  # frequency bins; default 0.1 * region size
    sigma_w: float | None = None  # token-frequency bins; default N / 4
    lam: float = 0.8
    beta: int = 2
    k_min: int | None = None  # default N_x / 2
    k_max: int | None = None  # default N_x
    decay: str = "exp"
    fusion: str = "dapa"
    sparsify: str = "mgss"
    attn: str = "diff_fft"
    diff_depth: int = 1
    backbone_depth: int = 4
    backbone_heads: int = 4
    loss_weights: tuple[float, float, float] = (1.0, 5.0, 2.0)
    seed: int = 7
    template_factor: float = 2.0
    search_factor: float = 4.0
    window_us: int | None = None  # event window per frame; default inter-frame period

    def __post_init__(self):
        _validate(self)

    @property
    def grid_z(self) -> int:
        return self.template_size // self.patch

    @property
    def grid_x(self) -> int:
        return self.search_size // self.patch

    @property
    def n_z(self) -> int:
        return self.grid_z**2

    @property
    def n_x(self) -> int:
        return self.grid_x**2

    @property
    def kmin(self) -> int:
        return self.k_min if self.k_min is not None else self.n_x // 2

    @property
    def kmax(self) -> int:
        return self.k_max if self.k_max is not None else self.n_x

    def sigma_hp_for(self, size: int) -> float:
        return self.sigma_hp if self.sigma_hp is not None else 0.1 * size

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _validate(cfg: PipelineConfig) -> None:
    for key in ("template_size", "search_size", "patch", "bins", "dim", "fuse_dim", "backbone_heads"):
        v = getattr(cfg, key)
        if not _is_int(v) or v <= 0:
            raise ConfigError(key, f"must be a positive integer, got {v!r}")
    for key in ("diff_depth", "backbone_depth", "seed"):
        v = getattr(cfg, key)
        if not _is_int(v) or v < 0:
            raise ConfigError(key, f"must be a non-negative integer, got {v!r}")
    if not _is_int(cfg.beta) or cfg.beta < 1:
        raise ConfigError("beta", f"must be a positive integer, got {cfg.beta!r}")
    if cfg.bins < 2:
        raise ConfigError("bins", "need at least 2 time bins")
    if not _is_int(cfg.stride) or not 1 <= cfg.stride <= cfg.bins - 1:
        raise ConfigError("stride", f"must lie in [1, bins-1], got {cfg.stride!r}")
    for key in ("template_size", "search_size"):
        if getattr(cfg, key) % cfg.patch:
            raise ConfigError(key, f"not divisible by patch size {cfg.patch}")
        if getattr(cfg, key) % 16:
            raise ConfigError(key, "event encoder needs a multiple of 16")
    if cfg.dim % 2:
        raise ConfigError("dim", "must be even")
    if cfg.dim % cfg.backbone_heads:
        raise ConfigError("backbone_heads", f"must divide dim={cfg.dim}")
    for key, allowed in (("decay", DECAYS), ("fusion", FUSION_MODES), ("sparsify", SPARSIFY_MODES), ("attn", ATTN_VARIANTS)):
        if getattr(cfg, key) not in allowed:
            raise ConfigError(key, f"must be one of {allowed}, got {getattr(cfg, key)!r}")
    for key in ("sigma_hp", "sigma_w"):
        v = getattr(cfg, key)
        if v is not None and (not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0):
            raise ConfigError(key, f"must be positive, got {v!r}")
    if not isinstance(cfg.lam, (int, float)) or isinstance(cfg.lam, bool) or cfg.lam != cfg.lam:
        raise ConfigError("lam", f"must be a finite number, got {cfg.lam!r}")
    for key in ("template_factor", "search_factor"):
        v = getattr(cfg, key)
        if not isinstance(v, (int, float)) or not v > 0:
            raise ConfigError(key, f"must be positive, got {v!r}")
    if cfg.window_us is not None and (not _is_int(cfg.window_us) or cfg.window_us <= 0):
        raise ConfigError("window_us", f"must be a positive integer, got {cfg.window_us!r}")
    lw = cfg.loss_weights
    if len(lw) != 3 or any(not isinstance(v, (int, float)) or v < 0 for v in lw):
        raise ConfigError("loss_weights", f"need three non-negative numbers, got {lw!r}")
    for key in ("k_min", "k_max"):
        v = getattr(cfg, key)
        if v is not None and (not _is_int(v) or not 1 <= v <= cfg.n_x):
            raise ConfigError(key, f"must be an integer in [1, {cfg.n_x}], got {v!r}")
    if cfg.kmin > cfg.kmax:
        raise ConfigError("k_min", f"k_min {cfg.kmin} exceeds k_max {cfg.kmax}")


_FIELDS = {f.name: f for f in fields(PipelineConfig)}


def config_from_mapping(data: dict[str, Any]) -> PipelineConfig:
    for key in data:
        if key not in _FIELDS:
            raise ConfigError(key, "unknown key")
    kwargs = dict(data)
    if "loss_weights" in kwargs:
        lw = kwargs["loss_weights"]
        if not isinstance(lw, (list, tuple)):
            raise ConfigError("loss_weights", f"must be a list of three numbers, got {lw!r}")
        kwargs["loss_weights"] = tuple(float(v) for v in lw)
    for key in ("lam", "template_factor", "search_factor", "sigma_hp", "sigma_w"):
        if _is_int(kwargs.get(key)):
            kwargs[key] = float(kwargs[key])
    return PipelineConfig(**kwargs)


def parse_config(text: str) -> PipelineConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", str(exc)) from None
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(nested[0], "tables are not allowed; use flat keys")
    return config_from_mapping(data)


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return parse_config(Path(path).read_text())


def _fmt(v) -> str:
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, tuple):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: PipelineConfig) -> str:
    lines = [f"{name} = {_fmt(getattr(cfg, name))}" for name in _FIELDS if getattr(cfg, name) is not None]
    return "\n".join(lines) + "\n"
