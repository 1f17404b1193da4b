"""Deterministic parameter initialisation and the APMT tensor container.

APMT layout (all little-endian)::

    b"APMT" | u32 version (=1) | u32 tensor count
    per tensor: u16 name length | name (utf-8) | u8 dtype | u8 ndim
                | u64 dim * ndim | payload

dtype codes: 0 = float32, 1 = float64, 2 = complex64.

Initial values are rounded to float32 so a bundle survives a float32
save/load round trip bit-exactly.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .diff_attn import DiffAttnWeights
from .errors import ParseError, ShapeError
from .fusion import DapaWeights
from .head import HeadBranch, HeadWeights
from .mgss import MgssWeights
from .motion import ConvBN, EncoderWeights

APMT_MAGIC = b"APMT"
APMT_VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<c8")}
DTYPE_CODES = {v: k for k, v in DTYPES.items()}
ENCODER_CHANNELS = (16, 32, 64)

_GOLDEN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 generator, vectorised: block draws equal successive scalar draws."""

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self, n: int) -> np.ndarray:
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(_GOLDEN)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * _GOLDEN) & _MASK
        return z

    def uniform(self, n: int) -> np.ndarray:
        """Floats in [0, 1) with 53 random bits."""
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def glorot_bound(shape: tuple[int, ...]) -> float:
    if len(shape) == 4:
        k = shape[0] * shape[1]
        fan_in, fan_out = k * shape[2], k * shape[3]
    else:
        fan_in, fan_out = shape[0], shape[1]
    return math.sqrt(6.0 / (fan_in + fan_out))


def _conv_bn(prefix: str, k: int, cin: int, cout: int) -> list[tuple[str, tuple, str]]:
    return [
        (f"{prefix}.kernel", (k, k, cin, cout), "glorot"),
        (f"{prefix}.bias", (cout,), "zeros"),
        (f"{prefix}.bn_scale", (cout,), "ones"),
        (f"{prefix}.bn_shift", (cout,), "zeros"),
        (f"{prefix}.bn_mean", (cout,), "zeros"),
        (f"{prefix}.bn_var", (cout,), "ones"),
    ]


def param_spec(cfg: PipelineConfig) -> list[tuple[str, tuple, str]]:
    """Every parameter as ``(name, shape, init)``, in initialisation order."""
    C, Cf, B, P = cfg.dim, cfg.fuse_dim, cfg.bins, cfg.patch
    spec: list[tuple[str, tuple, str]] = [
        ("dapa.amp_rgb", (3, 3, 3, Cf), "glorot"),
        ("dapa.pha_rgb", (3, 3, 3, Cf), "glorot"),
        ("dapa.amp_evt", (3, 3, B, Cf), "glorot"),
        ("dapa.pha_evt", (3, 3, B, Cf), "glorot"),
        ("dapa.ffc1", (1, 1, Cf, Cf), "glorot"),
        ("dapa.ffc2", (1, 1, Cf, Cf), "glorot"),
        ("embed.fused.proj", (P * P * Cf, C), "glorot"),
        ("embed.fused.bias", (C,), "zeros"),
        ("embed.rgb.proj", (P * P * 3, C), "glorot"),
        ("embed.rgb.bias", (C,), "zeros"),
        ("embed.evt.proj", (P * P * B, C), "glorot"),
        ("embed.evt.bias", (C,), "zeros"),
    ]
    chans = (1, *ENCODER_CHANNELS, C)
    for i in range(4):
        spec += _conv_bn(f"encoder.{i}", 3, chans[i], chans[i + 1])
    for layer in range(cfg.diff_depth):
        p = f"diff.{layer}"
        spec += [
            (f"{p}.wq", (C, C), "glorot"),
            (f"{p}.wk", (C, C), "glorot"),
            (f"{p}.wv", (C, C), "glorot"),
            (f"{p}.wo", (C, C), "glorot"),
            (f"{p}.bo", (C,), "zeros"),
            (f"{p}.ln1_g", (C,), "ones"),
            (f"{p}.ln1_b", (C,), "zeros"),
            (f"{p}.ln2_g", (C,), "ones"),
            (f"{p}.ln2_b", (C,), "zeros"),
            (f"{p}.ffn_w1", (C, 4 * C), "glorot"),
            (f"{p}.ffn_b1", (4 * C,), "zeros"),
            (f"{p}.ffn_w2", (4 * C, C), "glorot"),
            (f"{p}.ffn_b2", (C,), "zeros"),
            (f"{p}.lam", (), "lam"),
        ]
    spec += [
        ("mgss.w1", (C, C // 2), "glorot"),
        ("mgss.b1", (C // 2,), "zeros"),
        ("mgss.w2", (C // 2, 1), "glorot"),
        ("mgss.b2", (1,), "zeros"),
    ]
    for layer in range(cfg.backbone_depth):
        p = f"backbone.{layer}"
        spec += [
            (f"{p}.ln1_g", (C,), "ones"),
            (f"{p}.ln1_b", (C,), "zeros"),
            (f"{p}.wqkv", (C, 3 * C), "glorot"),
            (f"{p}.bqkv", (3 * C,), "zeros"),
            (f"{p}.wo", (C, C), "glorot"),
            (f"{p}.bo", (C,), "zeros"),
            (f"{p}.ln2_g", (C,), "ones"),
            (f"{p}.ln2_b", (C,), "zeros"),
            (f"{p}.w1", (C, 4 * C), "glorot"),
            (f"{p}.b1", (4 * C,), "zeros"),
            (f"{p}.w2", (4 * C, C), "glorot"),
            (f"{p}.b2", (C,), "zeros"),
        ]
    for branch, out in (("cls", 1), ("offset", 2), ("size", 2)):
        spec += _conv_bn(f"head.{branch}.hidden", 3, C, C // 2)
        spec += _conv_bn(f"head.{branch}.out", 3, C // 2, out)
    return spec


@dataclass
class WeightBundle:
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.tensors[name]
        except KeyError:
            raise KeyError(f"weight bundle has no tensor {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __len__(self) -> int:
        return len(self.tensors)

    def check(self, cfg: PipelineConfig) -> None:
        for name, shape, _ in param_spec(cfg):
            if name not in self.tensors:
                raise ShapeError(f"weight bundle is missing {name!r}")
            if self.tensors[name].shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {self.tensors[name].shape}")
            if not np.all(np.isfinite(self.tensors[name])):
                raise ShapeError(f"{name}: non-finite values")
        for i in range(4):
            if np.any(self.tensors[f"encoder.{i}.bn_var"] <= 0):
                raise ShapeError(f"encoder.{i}.bn_var must be positive")

    def equals(self, other: "WeightBundle") -> bool:
        return self.tensors.keys() == other.tensors.keys() and all(
            np.array_equal(self.tensors[k], other.tensors[k]) for k in self.tensors
        )


def init_weights(cfg: PipelineConfig, seed: int | None = None) -> WeightBundle:
    rng = SplitMix64(cfg.seed if seed is None else seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape, kind in param_spec(cfg):
        if kind == "glorot":
            n = int(np.prod(shape))
            bound = glorot_bound(shape)
            vals = (2.0 * rng.uniform(n) - 1.0) * bound
            # float32 rounding can step past the bound; clip to the largest float32 inside it
            b32 = np.float32(bound)
            if float(b32) > bound:
                b32 = np.nextafter(b32, np.float32(0))
            vals = np.clip(vals.astype(np.float32), -b32, b32)
            tensors[name] = vals.astype(np.float64).reshape(shape)
        elif kind == "zeros":
            tensors[name] = np.zeros(shape)
        elif kind == "ones":
            tensors[name] = np.ones(shape)
        elif kind == "lam":
            tensors[name] = np.array(float(np.float32(cfg.lam)))
        else:  # pragma: no cover
            raise AssertionError(kind)
    return WeightBundle(tensors)


def save_bundle(bundle: WeightBundle, path, dtype: str = "f32") -> None:
    Path(path).write_bytes(bundle_to_bytes(bundle, dtype))


def bundle_to_bytes(bundle: WeightBundle, dtype: str = "f32") -> bytes:
    parts = [APMT_MAGIC, struct.pack("<II", APMT_VERSION, len(bundle.tensors))]
    for name, arr in bundle.tensors.items():
        if np.iscomplexobj(arr):
            dt = DTYPES[2]
        else:
            dt = DTYPES[0] if dtype == "f32" else DTYPES[1]
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<BB", DTYPE_CODES[dt], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=dt).tobytes())
    return b"".join(parts)


def bundle_from_bytes(data: bytes) -> WeightBundle:
    if data[:4] != APMT_MAGIC:
        raise ParseError(f"offset 0: bad magic {data[:4]!r}")
    try:
        version, count = struct.unpack_from("<II", data, 4)
        if version != APMT_VERSION:
            raise ParseError(f"offset 4: unsupported version {version}")
        off = 12
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            start = off
            (nlen,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off : off + nlen].decode("utf-8")
            off += nlen
            code, ndim = struct.unpack_from("<BB", data, off)
            off += 2
            if code not in DTYPES:
                raise ParseError(f"offset {start}: unknown dtype code {code}")
            dims = struct.unpack_from(f"<{ndim}Q", data, off)
            off += 8 * ndim
            dt = DTYPES[code]
            nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
            if off + nbytes > len(data):
                raise ParseError(f"offset {start}: tensor {name!r} payload truncated")
            arr = np.frombuffer(data, dtype=dt, count=nbytes // dt.itemsize, offset=off).reshape(dims)
            off += nbytes
            tensors[name] = arr.astype(np.complex128 if code == 2 else np.float64)
    except struct.error as exc:
        raise ParseError(f"truncated container: {exc}") from None
    if off != len(data):
        raise ParseError(f"offset {off}: {len(data) - off} trailing bytes")
    return WeightBundle(tensors)


def load_bundle(path) -> WeightBundle:
    return bundle_from_bytes(Path(path).read_bytes())


# typed views ---------------------------------------------------------------


def _conv_bn_view(b: WeightBundle, prefix: str) -> ConvBN:
    return ConvBN(*(b[f"{prefix}.{k}"] for k in ("kernel", "bias", "bn_scale", "bn_shift", "bn_mean", "bn_var")))


def dapa_weights(b: WeightBundle) -> DapaWeights:
    return DapaWeights(*(b[f"dapa.{k}"] for k in ("amp_rgb", "pha_rgb", "amp_evt", "pha_evt", "ffc1", "ffc2")))


def encoder_weights(b: WeightBundle) -> EncoderWeights:
    return EncoderWeights(tuple(_conv_bn_view(b, f"encoder.{i}") for i in range(4)))


def diff_weights(b: WeightBundle, cfg: PipelineConfig) -> list[DiffAttnWeights]:
    keys = ("wq", "wk", "wv", "wo", "bo", "ln1_g", "ln1_b", "ln2_g", "ln2_b", "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2")
    return [
        DiffAttnWeights(
            *(b[f"diff.{layer}.{k}"] for k in keys),
            lam=float(b[f"diff.{layer}.lam"]),
            sigma_w=cfg.sigma_w,
        )
        for layer in range(cfg.diff_depth)
    ]


def mgss_weights(b: WeightBundle) -> MgssWeights:
    return MgssWeights(b["mgss.w1"], b["mgss.b1"], b["mgss.w2"], b["mgss.b2"])


def head_weights(b: WeightBundle) -> HeadWeights:
    return HeadWeights(
        *(HeadBranch(_conv_bn_view(b, f"head.{k}.hidden"), _conv_bn_view(b, f"head.{k}.out")) for k in ("cls", "offset", "size"))
    )
