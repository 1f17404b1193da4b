"""Early RGB/event fusion in the frequency domain, plus patch embedding.

The RGB region and the event voxel region are moved to the frequency domain,
split into amplitude and phase, and each of the four spectra is lifted to
``fuse_dim`` channels by a 3x3 convolution + LeakyReLU. Within the amplitude
branch and the phase branch, the event spectrum drives a channel softmax that
reweights the RGB spectrum (with a residual). The fused polar spectrum is
recomposed, passed through a 1x1 conv -> ReLU -> 1x1 conv block acting on
the real and imaginary parts, and brought back to the spatial domain.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ShapeError
from .numerics import (
    SpectralPair,
    amp_phase,
    conv2d,
    fft2,
    gaussian_mask_2d,
    ifft2,
    l2_normalize,
    leaky_relu,
    recompose,
    relu,
    softmax,
)

LEAKY_SLOPE = 0.01


@dataclass(frozen=True)
class DapaWeights:
    amp_rgb: np.ndarray  # [3, 3, 3, Cf]
    pha_rgb: np.ndarray  # [3, 3, 3, Cf]
    amp_evt: np.ndarray  # [3, 3, B, Cf]
    pha_evt: np.ndarray  # [3, 3, B, Cf]
    ffc1: np.ndarray  # [1, 1, Cf, Cf]
    ffc2: np.ndarray  # [1, 1, Cf, Cf]

    @property
    def fuse_dim(self) -> int:
        return self.amp_rgb.shape[-1]

    def check(self) -> None:
        for name, arr in vars(self).items():
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"DAPA weight {name} is not finite")


@dataclass(frozen=True)
class TokenSeq:
    tokens: np.ndarray  # [N, C]
    grid: tuple[int, int]

    def __len__(self) -> int:
        return self.tokens.shape[0]


def attention_weights(base: np.ndarray, guide: np.ndarray) -> np.ndarray:
    """Channel softmax of the product of the L2-normalised operands."""
    if base.shape != guide.shape:
        raise ShapeError(f"base {base.shape} and guide {guide.shape} differ")
    return softmax(l2_normalize(base, axis=-1) * l2_normalize(guide, axis=-1), axis=-1)


def ap_attention(base: np.ndarray, guide: np.ndarray) -> np.ndarray:
    """``M * base + base`` where ``M`` comes from :func:`attention_weights`."""
    base = np.asarray(base, dtype=np.float64)
    guide = np.asarray(guide, dtype=np.float64)
    m = attention_weights(base, guide)
    return m * base + base


def _enhance(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return leaky_relu(conv2d(x, kernel, padding=1), LEAKY_SLOPE)


def ffc(z: np.ndarray, w: DapaWeights) -> np.ndarray:
    """Conv -> ReLU -> Conv on real and imaginary parts with shared 1x1 kernels."""

    def block(part: np.ndarray) -> np.ndarray:
        return conv2d(relu(conv2d(part, w.ffc1)), w.ffc2)

    return block(z.real) + 1j * block(z.imag)


def dapa_fuse(
    rgb: np.ndarray,
    evt: np.ndarray,
    w: DapaWeights,
    sigma_hp: float,
    use_ffc: bool = True,
) -> np.ndarray:
    """Fuse an ``[S, S, 3]`` RGB region with an ``[S, S, B]`` event region into ``[S, S, Cf]``."""
    rgb = np.asarray(rgb, dtype=np.float64)
    evt = np.asarray(evt, dtype=np.float64)
    if rgb.shape[:2] != evt.shape[:2]:
        raise ShapeError(f"rgb {rgb.shape} and event {evt.shape} regions differ in size")
    w.check()
    S0, S1 = rgb.shape[:2]

    spec_rgb = amp_phase(fft2(rgb))
    highpass = gaussian_mask_2d(S0, S1, sigma_hp, "highpass").values
    spec_evt = amp_phase(fft2(evt) * highpass[:, :, None])

    amp = ap_attention(_enhance(spec_rgb.amplitude, w.amp_rgb), _enhance(spec_evt.amplitude, w.amp_evt))
    pha = ap_attention(_enhance(spec_rgb.phase, w.pha_rgb), _enhance(spec_evt.phase, w.pha_evt))

    z = recompose(SpectralPair(amp, pha))
    if use_ffc:
        z = ffc(z, w)
    return ifft2(z).real


def patch_embed(fused: np.ndarray, proj: np.ndarray, bias: np.ndarray, patch: int = 16) -> TokenSeq:
    """Split ``[S, S, C]`` into non-overlapping patches (row-major) and project each.

    A patch is flattened in ``(row, col, channel)`` order before the
    ``[patch*patch*C, dim]`` projection.
    """
    fused = np.asarray(fused, dtype=np.float64)
    H, W, C = fused.shape
    if H % patch or W % patch:
        raise ShapeError(f"region {H}x{W} not divisible by patch size {patch}")
    gh, gw = H // patch, W // patch
    if proj.shape[0] != patch * patch * C:
        raise ShapeError(f"projection expects {proj.shape[0]} inputs, patches have {patch * patch * C}")
    patches = fused.reshape(gh, patch, gw, patch, C).transpose(0, 2, 1, 3, 4).reshape(gh * gw, -1)
    return TokenSeq(patches @ proj + bias, (gh, gw))
