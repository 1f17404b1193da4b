"""Analytic FLOP counts for one template+search forward pass per frame.

Counting rules (a multiply-accumulate is 2 FLOPs):

* convolution  ``2 * k^2 * Cin * Cout * Ho * Wo``
* linear       ``2 * in * out * N``
* attention    ``2 * N^2 * d`` for each score product and each value product
* 1D FFT of length n: ``5 n log2 n`` on the radix-2 path, ``8 n^2`` on the direct path

Elementwise work (activations, masks, softmax, normalisation) is not counted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

from .config import PipelineConfig
from .numerics import is_power_of_two
from .weights import ENCODER_CHANNELS


def conv_flops(k: int, cin: int, cout: int, h_out: int, w_out: int) -> int:
    return 2 * k * k * cin * cout * h_out * w_out


def linear_flops(n_in: int, n_out: int, tokens: int) -> int:
    return 2 * n_in * n_out * tokens


def attention_flops(n: int, d: int) -> int:
    """One score product or one value product."""
    return 2 * n * n * d


def fft1_flops(n: int) -> int:
    if n <= 1:
        return 0
    if is_power_of_two(n):
        return 5 * n * int(math.log2(n))
    return 8 * n * n


def fft2_flops(h: int, w: int, channels: int) -> int:
    return channels * (h * fft1_flops(w) + w * fft1_flops(h))


def dapa_flops(cfg: PipelineConfig, size: int) -> int:
    S, Cf, B = size, cfg.fuse_dim, cfg.bins
    total = fft2_flops(S, S, 3) + fft2_flops(S, S, B)
    total += 2 * conv_flops(3, 3, Cf, S, S) + 2 * conv_flops(3, B, Cf, S, S)
    total += 2 * 2 * conv_flops(1, Cf, Cf, S, S)  # FFC, real and imaginary parts
    total += fft2_flops(S, S, Cf)
    return total


def embed_flops(cfg: PipelineConfig, size: int, channels: int) -> int:
    n = (size // cfg.patch) ** 2
    return linear_flops(cfg.patch * cfg.patch * channels, cfg.dim, n)


def encoder_flops(cfg: PipelineConfig, size: int) -> int:
    chans = (1, *ENCODER_CHANNELS, cfg.dim)
    total, s = 0, size
    for i in range(4):
        s = (s - 1) // 2 + 1
        total += conv_flops(3, chans[i], chans[i + 1], s, s)
    return cfg.bins * total


def diff_block_flops(cfg: PipelineConfig, n: int) -> int:
    C = cfg.dim
    total = 4 * linear_flops(C, C, n) + 2 * linear_flops(C, 4 * C, n)
    if cfg.attn == "standard":
        total += attention_flops(n, C) * 2
    else:
        total += 2 * (attention_flops(n, C // 2) + attention_flops(n, C))
        if cfg.attn == "diff_fft":
            total += 3 * C * fft1_flops(n)
    return total * cfg.diff_depth


def mgss_flops(cfg: PipelineConfig) -> int:
    C = cfg.dim
    return linear_flops(C, C // 2, cfg.n_x) + linear_flops(C // 2, 1, cfg.n_x)


def backbone_flops(cfg: PipelineConfig, tokens: int) -> int:
    C = cfg.dim
    per_layer = (
        linear_flops(C, 3 * C, tokens)
        + 2 * attention_flops(tokens, C)
        + linear_flops(C, C, tokens)
        + 2 * linear_flops(C, 4 * C, tokens)
    )
    return per_layer * cfg.backbone_depth


def head_flops(cfg: PipelineConfig) -> int:
    C, G = cfg.dim, cfg.grid_x
    return sum(conv_flops(3, C, C // 2, G, G) + conv_flops(3, C // 2, out, G, G) for out in (1, 2, 2))


def backbone_tokens(cfg: PipelineConfig, k: int | None) -> int:
    if cfg.fusion == "concat":
        return 2 * (cfg.n_z + cfg.n_x)
    if cfg.sparsify == "none" or k is None:
        return cfg.n_z + cfg.n_x
    return cfg.n_z + k


@dataclass(frozen=True)
class FlopsReport:
    """FLOPs summed over all frames, per stage, for the configured mode and the concat baseline."""

    stages: dict[str, int]
    tokens: list[int]
    selected_k: list[int]
    baseline_stages: dict[str, int]
    baseline_tokens: int
    frames: int = field(default=1)

    @property
    def total(self) -> int:
        return sum(self.stages.values())

    @property
    def baseline_total(self) -> int:
        return sum(self.baseline_stages.values())


def _frame_stages(cfg: PipelineConfig, k: int | None) -> dict[str, int]:
    Z, X = cfg.template_size, cfg.search_size
    if cfg.fusion == "concat":
        return {
            "embed": sum(embed_flops(cfg, s, c) for s in (Z, X) for c in (3, cfg.bins)),
            "backbone": backbone_flops(cfg, backbone_tokens(cfg, None)),
            "head": head_flops(cfg),
        }
    if cfg.fusion == "dapa":
        fusion = dapa_flops(cfg, Z) + dapa_flops(cfg, X)
        embed = embed_flops(cfg, Z, cfg.fuse_dim) + embed_flops(cfg, X, cfg.fuse_dim)
    else:
        fusion = 0
        embed = sum(embed_flops(cfg, s, c) for s in (Z, X) for c in (3, cfg.bins))
    return {
        "fusion": fusion,
        "embed": embed,
        "motion_encoder": encoder_flops(cfg, Z) + encoder_flops(cfg, X),
        "diff_attention": diff_block_flops(cfg, cfg.n_z + cfg.n_x),
        "score_mlp": mgss_flops(cfg),
        "backbone": backbone_flops(cfg, backbone_tokens(cfg, k)),
        "head": head_flops(cfg),
    }


def flops_report(cfg: PipelineConfig, plans: Iterable = ()) -> FlopsReport:
    """``plans`` holds one entry per frame: a ``SparsePlan`` or a bare K."""
    ks = [p if isinstance(p, int) else int(p.k) for p in plans]
    if not ks:
        ks = [cfg.kmax]
    stages: dict[str, int] = {}
    tokens = []
    for k in ks:
        for name, v in _frame_stages(cfg, k).items():
            stages[name] = stages.get(name, 0) + v
        tokens.append(backbone_tokens(cfg, k))
    base_cfg = cfg.replace(fusion="concat")
    baseline = {name: v * len(ks) for name, v in _frame_stages(base_cfg, None).items()}
    return FlopsReport(stages, tokens, ks, baseline, backbone_tokens(base_cfg, None), len(ks))
