"""Motion tokens from event voxels.

Every temporal bin is encoded on its own by a shared stack of four stride-2
Conv-BN-LeakyReLU stages (so a region of side S ends on an S/16 grid). The
per-bin maps are resized onto the RGB token grid, differenced across bins,
and averaged over the difference axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .numerics import batch_norm, bilinear_resize, conv2d, leaky_relu


@dataclass(frozen=True)
class ConvBN:
    kernel: np.ndarray  # [3, 3, Cin, Cout]
    bias: np.ndarray
    bn_scale: np.ndarray
    bn_shift: np.ndarray
    bn_mean: np.ndarray
    bn_var: np.ndarray

    def __call__(self, x: np.ndarray, stride: int = 1) -> np.ndarray:
        y = conv2d(x, self.kernel, stride=stride, padding=self.kernel.shape[0] // 2, bias=self.bias)
        return batch_norm(y, self.bn_scale, self.bn_shift, self.bn_mean, self.bn_var)


@dataclass(frozen=True)
class EncoderWeights:
    stages: tuple[ConvBN, ...]


@dataclass(frozen=True)
class MotionTokens:
    template: np.ndarray  # [N_z, C]
    search: np.ndarray  # [N_x, C]


def event_encode(voxels: np.ndarray, w: EncoderWeights) -> np.ndarray:
    """``[B, S, S]`` voxels -> ``[B, S/16, S/16, C]`` features."""
    voxels = np.asarray(voxels, dtype=np.float64)
    if voxels.ndim != 3:
        raise ShapeError(f"expected [B, S, S] voxels, got {voxels.shape}")
    _, H, W = voxels.shape
    if H % 16 or W % 16:
        raise ShapeError(f"voxel region {H}x{W} not divisible by 16")
    out = []
    for plane in voxels:
        x = plane[:, :, None]
        for stage in w.stages:
            x = leaky_relu(stage(x, stride=2))
        out.append(x)
    return np.stack(out)


def warp_to_reference(features: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    return np.stack([bilinear_resize(f, out_h, out_w) for f in features])


def diff_maps(features: np.ndarray, stride: int = 1) -> np.ndarray:
    """``D[j] = f[j + stride] - f[j]`` for ``j = 0 .. B-1-stride``."""
    B = features.shape[0]
    if not 1 <= stride <= B - 1:
        raise ParameterError(f"stride must lie in [1, {B - 1}], got {stride}")
    return features[stride:] - features[:-stride]


def pool_motion(diffs: np.ndarray) -> np.ndarray:
    """Mean over the difference axis, flattened to ``[h*w, C]`` row-major."""
    pooled = diffs.mean(axis=0)
    return pooled.reshape(-1, pooled.shape[-1])


def global_motion(dz_diffs: np.ndarray, dx_diffs: np.ndarray) -> MotionTokens:
    return MotionTokens(pool_motion(dz_diffs), pool_motion(dx_diffs))


def motion_tokens(
    z_voxels: np.ndarray, x_voxels: np.ndarray, w: EncoderWeights, grid_z: int, grid_x: int, stride: int = 1
) -> MotionTokens:
    fz = warp_to_reference(event_encode(z_voxels, w), grid_z, grid_z)
    fx = warp_to_reference(event_encode(x_voxels, w), grid_x, grid_x)
    return global_motion(diff_maps(fz, stride), diff_maps(fx, stride))
