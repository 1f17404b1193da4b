"""Generic pre-norm transformer stack standing in for the hierarchical backbone."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import gelu, layer_norm, softmax


@dataclass(frozen=True)
class BackboneLayer:
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    wqkv: np.ndarray  # [C, 3C]
    bqkv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


def load_layers(bundle, depth: int) -> list[BackboneLayer]:
    keys = ("ln1_g", "ln1_b", "wqkv", "bqkv", "wo", "bo", "ln2_g", "ln2_b", "w1", "b1", "w2", "b2")
    return [BackboneLayer(*(bundle[f"backbone.{i}.{k}"] for k in keys)) for i in range(depth)]


def multi_head_attention(x: np.ndarray, layer: BackboneLayer, heads: int) -> np.ndarray:
    n, c = x.shape
    d = c // heads
    qkv = (x @ layer.wqkv + layer.bqkv).reshape(n, 3, heads, d).transpose(1, 2, 0, 3)
    q, k, v = qkv[0], qkv[1], qkv[2]  # [heads, n, d]
    attn = softmax(q @ k.transpose(0, 2, 1) / math.sqrt(d), axis=-1)
    out = (attn @ v).transpose(1, 0, 2).reshape(n, c)
    return out @ layer.wo + layer.bo


def backbone_forward(tokens: np.ndarray, layers: list[BackboneLayer], heads: int) -> np.ndarray:
    x = np.asarray(tokens, dtype=np.float64)
    for layer in layers:
        x = x + multi_head_attention(layer_norm(x, layer.ln1_g, layer.ln1_b), layer, heads)
        h = layer_norm(x, layer.ln2_g, layer.ln2_b)
        x = x + gelu(h @ layer.w1 + layer.b1) @ layer.w2 + layer.b2
    return x
