"""Differential attention with frequency-domain subtraction.

Two softmax attention maps are built from the two halves of the query and key
projections and applied to a shared value matrix. Their outputs are moved to
the frequency domain along the token axis, subtracted (the second one scaled
by ``lam``), filtered by a Gaussian window and brought back.

Variants, selectable per call:

``diff_fft``  the full operator above
``diff``      ``ATT_1 - lam * ATT_2`` without the Fourier round trip or window
``standard``  plain single-head attention using the full-width projections
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .numerics import fft, gaussian_window_1d, gelu, ifft, layer_norm, softmax

VARIANTS = ("diff_fft", "diff", "standard")
IMAG_TOL = 1e-9


@dataclass(frozen=True)
class DiffAttnWeights:
    wq: np.ndarray  # [C, C]; columns [:C/2] give Q1, [C/2:] give Q2
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    ffn_w1: np.ndarray  # [C, 4C]
    ffn_b1: np.ndarray
    ffn_w2: np.ndarray  # [4C, C]
    ffn_b2: np.ndarray
    lam: float = 0.8
    sigma_w: float | None = None  # None -> N / 4; math.inf disables the window

    @property
    def dim(self) -> int:
        return self.wq.shape[0]


def _split_qk(D: np.ndarray, w: DiffAttnWeights):
    C = D.shape[1]
    if C % 2:
        raise ParameterError(f"feature width must be even, got {C}")
    h = C // 2
    q, k = D @ w.wq, D @ w.wk
    return q[:, :h], q[:, h:], k[:, :h], k[:, h:]


def attention_maps(D: np.ndarray, w: DiffAttnWeights) -> tuple[np.ndarray, np.ndarray]:
    """The two ``[N, N]`` row-stochastic maps."""
    q1, q2, k1, k2 = _split_qk(D, w)
    scale = 1.0 / math.sqrt(q1.shape[1])
    return softmax(q1 @ k1.T * scale, axis=-1), softmax(q2 @ k2.T * scale, axis=-1)


def token_window(n: int, sigma_w: float | None) -> np.ndarray:
    sigma = n / 4 if sigma_w is None else sigma_w
    return gaussian_window_1d(n, sigma).values


def diff_fft_operator(D: np.ndarray, w: DiffAttnWeights, variant: str = "diff_fft") -> np.ndarray:
    """Attention output before the output projection, ``[N, C]``."""
    D = np.asarray(D, dtype=np.float64)
    if variant not in VARIANTS:
        raise ParameterError(f"unknown attention variant {variant!r}")
    if D.shape[1] % 2:
        raise ParameterError(f"feature width must be even, got {D.shape[1]}")
    v = D @ w.wv
    if variant == "standard":
        q, k = D @ w.wq, D @ w.wk
        return softmax(q @ k.T / math.sqrt(q.shape[1]), axis=-1) @ v
    a1, a2 = attention_maps(D, w)
    att1, att2 = a1 @ v, a2 @ v
    if variant == "diff":
        return att1 - w.lam * att2
    spec = fft(att1, axis=0) - w.lam * fft(att2, axis=0)
    out = ifft(spec * token_window(D.shape[0], w.sigma_w)[:, None], axis=0)
    residue = np.max(np.abs(out.imag)) if out.size else 0.0
    bound = IMAG_TOL * max(1.0, float(np.max(np.abs(out.real))) if out.size else 1.0)
    if residue > bound:
        raise AssertionError(f"imaginary residue {residue:.3e} after inverse transform")
    return out.real


def diff_fft_attention(D: np.ndarray, w: DiffAttnWeights, variant: str = "diff_fft") -> np.ndarray:
    return diff_fft_operator(D, w, variant) @ w.wo + w.bo


def diff_fft_block(D: np.ndarray, w: DiffAttnWeights, variant: str = "diff_fft") -> np.ndarray:
    """Pre-norm residual block: attention, then a GELU feed-forward network."""
    D = np.asarray(D, dtype=np.float64)
    h = D + diff_fft_attention(layer_norm(D, w.ln1_g, w.ln1_b), w, variant)
    f = layer_norm(h, w.ln2_g, w.ln2_b)
    return h + gelu(f @ w.ffn_w1 + w.ffn_b1) @ w.ffn_w2 + w.ffn_b2
