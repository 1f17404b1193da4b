"""Dense tensor primitives shared by every stage of the pipeline.

Tensors are plain ``numpy`` arrays (float64 / complex128). Image-like tensors
use channels-last layout ``[H, W, C]``.

The Fourier transforms are unitary in both directions (scale ``1/sqrt(n)`` per
axis), so Parseval's identity holds with no correction factor. Axes whose
length is a power of two go through an iterative radix-2 Cooley-Tukey
transform; every other length is evaluated as a direct O(n^2) DFT.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np

from .errors import InvalidInputError, ParameterError, ShapeError

L2_EPS = 1e-12
ORACLE_MAX_DIM = 64


def _require_finite(x: np.ndarray, what: str = "input") -> None:
    if not np.all(np.isfinite(x)):
        raise InvalidInputError(f"{what} contains non-finite values")


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _radix2_last(a: np.ndarray, sign: int) -> np.ndarray:
    n = a.shape[-1]
    lead = a.shape[:-1]
    out = a[..., _bit_reverse_indices(n)].astype(np.complex128)
    m = 2
    while m <= n:
        half = m // 2
        twiddle = np.exp(sign * 2j * np.pi * np.arange(half) / m)
        blocks = out.reshape(*lead, n // m, m)
        even = blocks[..., :half]
        odd = blocks[..., half:] * twiddle
        out = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, n)
        m *= 2
    return out


@lru_cache(maxsize=32)
def _dft_parts(n: int, sign: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    k = np.arange(n)
    phase = np.outer(k, k) % n
    w = np.exp(sign * 2j * np.pi * phase / n)
    parts = (w, np.ascontiguousarray(w.real), np.ascontiguousarray(w.imag))
    for arr in parts:
        arr.flags.writeable = False
    return parts


def dft_matrix(n: int, sign: int = -1) -> np.ndarray:
    """``W[k, t] = exp(sign * 2j*pi*k*t/n)``; the exponent is reduced mod n first."""
    return _dft_parts(n, sign)[0].copy()


def _direct_last(a: np.ndarray, sign: int) -> np.ndarray:
    n = a.shape[-1]
    w, w_re, w_im = _dft_parts(n, sign)
    # flatten to a contiguous 2D operand so the product stays on the BLAS path
    flat = np.ascontiguousarray(a).reshape(-1, n)
    if np.iscomplexobj(flat):
        out = flat @ w
    else:
        flat = flat.astype(np.float64, copy=False)
        out = (flat @ w_re) + 1j * (flat @ w_im)
    return out.reshape(a.shape)


def _transform_axis(x: np.ndarray, axis: int, sign: int, method: str = "auto") -> np.ndarray:
    a = np.moveaxis(np.asarray(x), axis, -1)
    n = a.shape[-1]
    if method == "auto":
        method = "radix2" if is_power_of_two(n) else "direct"
    if method == "radix2":
        if not is_power_of_two(n):
            raise ParameterError(f"radix-2 path needs a power-of-two length, got {n}")
        out = _radix2_last(a, sign) if n > 1 else a.astype(np.complex128)
    elif method == "direct":
        out = _direct_last(a, sign)
    else:
        raise ParameterError(f"unknown FFT method {method!r}")
    out = out / math.sqrt(n)
    return np.moveaxis(out, -1, axis)


def fft(x: np.ndarray, axis: int = -1, method: str = "auto") -> np.ndarray:
    """Unitary 1D forward transform along ``axis``."""
    x = np.asarray(x)
    _require_finite(x)
    return _transform_axis(x, axis, -1, method)


def ifft(X: np.ndarray, axis: int = -1, method: str = "auto") -> np.ndarray:
    X = np.asarray(X)
    _require_finite(X)
    return _transform_axis(X, axis, +1, method)


def fft2(x: np.ndarray, method: str = "auto") -> np.ndarray:
    """Unitary 2D transform over the first two axes.

    Any trailing axes (e.g. channels of an ``[H, W, C]`` image) are treated as
    a batch: each channel is transformed independently.
    """
    x = np.asarray(x)
    if x.ndim < 2:
        raise ShapeError(f"fft2 needs at least 2 dims, got shape {x.shape}")
    _require_finite(x)
    return _transform_axis(_transform_axis(x, 0, -1, method), 1, -1, method)


def ifft2(X: np.ndarray, method: str = "auto") -> np.ndarray:
    X = np.asarray(X)
    if X.ndim < 2:
        raise ShapeError(f"ifft2 needs at least 2 dims, got shape {X.shape}")
    _require_finite(X)
    return _transform_axis(_transform_axis(X, 0, +1, method), 1, +1, method)


def dft2_oracle(x: np.ndarray) -> np.ndarray:
    """Test oracle: the unitary 2D DFT evaluated as a literal double sum.

    Each output coefficient sums ``x[h, w] * exp(-2j*pi*(h*u/H + w*v/W))`` over
    the full grid, with no separability or factorisation.
    """
    x = np.asarray(x)
    if x.ndim != 2:
        raise ShapeError(f"oracle takes a 2D array, got shape {x.shape}")
    H, W = x.shape
    if H > ORACLE_MAX_DIM or W > ORACLE_MAX_DIM:
        raise ParameterError(f"oracle limited to {ORACLE_MAX_DIM} per axis, got {H}x{W}")
    hh, ww = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    out = np.empty((H, W), dtype=np.complex128)
    for u in range(H):
        for v in range(W):
            out[u, v] = np.sum(x * np.exp(-2j * np.pi * (hh * u / H + ww * v / W)))
    return out / math.sqrt(H * W)


@dataclass(frozen=True)
class SpectralPair:
    """Polar form of a spectrum.

    ``amp_phase`` guarantees ``amplitude >= 0`` and ``phase`` in (-pi, pi].
    Enhanced spectra built downstream may carry negative amplitudes; those
    recompose as a phase shift of pi.
    """

    amplitude: np.ndarray
    phase: np.ndarray

    def __post_init__(self):
        if np.shape(self.amplitude) != np.shape(self.phase):
            raise ShapeError(
                f"amplitude {np.shape(self.amplitude)} and phase {np.shape(self.phase)} differ"
            )


def amp_phase(X: np.ndarray) -> SpectralPair:
    X = np.asarray(X, dtype=np.complex128)
    _require_finite(X)
    amplitude = np.abs(X)
    phase = np.arctan2(X.imag, X.real)
    # arctan2 can return -pi (negative real, imag == -0.0); fold it onto +pi
    phase = np.where(phase <= -np.pi, np.pi, phase)
    phase = np.where(amplitude == 0.0, 0.0, phase)
    return SpectralPair(amplitude, phase)


def recompose(pair: SpectralPair) -> np.ndarray:
    return pair.amplitude * (np.cos(pair.phase) + 1j * np.sin(pair.phase))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def l2_normalize(x: np.ndarray, axis: int = -1, eps: float = L2_EPS) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norm = np.sqrt(np.sum(x * x, axis=axis, keepdims=True))
    return x / np.maximum(norm, eps)


def leaky_relu(x: np.ndarray, slope: float = 0.01) -> np.ndarray:
    return np.where(x >= 0, x, slope * x)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


_erf = np.vectorize(math.erf, otypes=[np.float64])


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact (erf-based) GELU."""
    return 0.5 * x * (1.0 + _erf(x / math.sqrt(2.0)))


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


@dataclass(frozen=True)
class GaussianMask:
    values: np.ndarray
    sigma: float
    kind: Literal["lowpass", "highpass"]


def _wrap_distance(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.minimum(k, n - k).astype(np.float64)


def _check_sigma(sigma: float) -> None:
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")


def gaussian_mask_2d(H: int, W: int, sigma: float, kind: str = "lowpass") -> GaussianMask:
    """Gaussian filter in unshifted FFT index space (DC at ``[0, 0]``)."""
    _check_sigma(sigma)
    if kind not in ("lowpass", "highpass"):
        raise ParameterError(f"kind must be lowpass or highpass, got {kind!r}")
    du = _wrap_distance(H)[:, None]
    dv = _wrap_distance(W)[None, :]
    low = np.exp(-(du**2 + dv**2) / (2.0 * sigma**2))
    values = low if kind == "lowpass" else 1.0 - low
    return GaussianMask(values, float(sigma), kind)  # type: ignore[arg-type]


def gaussian_window_1d(N: int, sigma: float) -> GaussianMask:
    if N < 1:
        raise ParameterError(f"window length must be >= 1, got {N}")
    _check_sigma(sigma)
    d = _wrap_distance(N)
    return GaussianMask(np.exp(-(d**2) / (2.0 * sigma**2)), float(sigma), "lowpass")


def _resize_axis_weights(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def bilinear_resize(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of ``[H, W, ...]`` with half-pixel centres, edge-clamped."""
    x = np.asarray(x, dtype=np.float64)
    H, W = x.shape[:2]
    if H < 1 or W < 1:
        raise ShapeError(f"cannot resize empty image {x.shape}")
    if (H, W) == (out_h, out_w):
        return x.copy()
    r0, r1, fr = _resize_axis_weights(H, out_h)
    c0, c1, fc = _resize_axis_weights(W, out_w)
    extra = (1,) * (x.ndim - 2)
    fr = fr.reshape(-1, 1, *extra)
    fc = fc.reshape(1, -1, *extra)
    top = x[r0][:, c0] * (1 - fc) + x[r0][:, c1] * fc
    bot = x[r1][:, c0] * (1 - fc) + x[r1][:, c1] * fc
    return top * (1 - fr) + bot * fr


def conv2d(
    x: np.ndarray,
    kernel: np.ndarray,
    stride: int = 1,
    padding: int = 0,
    bias: np.ndarray | None = None,
) -> np.ndarray:
    """Zero-padded cross-correlation. ``x`` is ``[H, W, Cin]``, ``kernel`` is ``[k, k, Cin, Cout]``."""
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if x.ndim != 3 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects [H,W,Cin] and [k,k,Cin,Cout], got {x.shape} and {kernel.shape}")
    k = kernel.shape[0]
    if kernel.shape[1] != k or k % 2 == 0:
        raise ShapeError(f"kernel must be square with odd size, got {kernel.shape[:2]}")
    if kernel.shape[2] != x.shape[2]:
        raise ShapeError(f"kernel expects {kernel.shape[2]} input channels, input has {x.shape[2]}")
    if stride < 1 or padding < 0:
        raise ParameterError(f"bad stride/padding {stride}/{padding}")
    if padding:
        x = np.pad(x, ((padding, padding), (padding, padding), (0, 0)))
    H, W = x.shape[:2]
    if H < k or W < k:
        raise ShapeError(f"padded input {H}x{W} smaller than kernel {k}")
    if k == 1:
        out = x[::stride, ::stride] @ kernel[0, 0]
    else:
        # windows: [Ho, Wo, Cin, k, k]
        win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(0, 1))[::stride, ::stride]
        out = np.einsum("hwcij,ijco->hwo", win, kernel, optimize=True)
    if bias is not None:
        out = out + bias
    return out


def batch_norm(x: np.ndarray, scale, shift, mean, var, eps: float = 1e-5) -> np.ndarray:
    """Inference-mode batch norm over the trailing channel axis."""
    return scale * (x - mean) / np.sqrt(var + eps) + shift
