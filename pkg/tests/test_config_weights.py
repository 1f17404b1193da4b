import math
import struct

import numpy as np
import pytest

from apmtrack.backbone import backbone_forward, load_layers
from apmtrack.config import PipelineConfig, dump_config, load_config, parse_config
from apmtrack.errors import ConfigError, ParseError, ShapeError
from apmtrack.weights import (
    SplitMix64,
    WeightBundle,
    bundle_from_bytes,
    bundle_to_bytes,
    glorot_bound,
    init_weights,
    load_bundle,
    param_spec,
    save_bundle,
)

MASK = (1 << 64) - 1


def splitmix_scalar(seed, n):
    out = []
    for _ in range(n):
        seed = (seed + 0x9E3779B97F4A7C15) & MASK
        z = seed
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append(z ^ (z >> 31))
    return out


class TestConfig:
    def test_defaults(self):
        cfg = PipelineConfig()
        assert (cfg.grid_z, cfg.grid_x, cfg.n_z, cfg.n_x) == (7, 14, 49, 196)
        assert (cfg.kmin, cfg.kmax) == (98, 196)
        assert cfg.sigma_hp_for(224) == pytest.approx(22.4)

    def test_parse(self):
        cfg = parse_config('fusion = "concat"\nlam = 1\nloss_weights = [1, 2, 3]\n# note\n')
        assert cfg.fusion == "concat" and cfg.lam == 1.0 and cfg.loss_weights == (1.0, 2.0, 3.0)

    @pytest.mark.parametrize(
        "text,key",
        [
            ("bogus = 1", "bogus"),
            ("patch = 15", "template_size"),
            ('decay = "cubic"', "decay"),
            ("stride = 5", "stride"),
            ("k_min = 150\nk_max = 120", "k_min"),
            ("dim = 130", "backbone_heads"),
            ("[table]\nx = 1", "table"),
            ("sigma_w = -1.0", "sigma_w"),
        ],
    )
    def test_errors_name_the_key(self, text, key):
        with pytest.raises(ConfigError) as exc:
            parse_config(text)
        assert exc.value.key == key

    def test_syntax_error(self):
        with pytest.raises(ConfigError):
            parse_config("x = = 1")

    def test_dump_round_trip(self, tmp_path):
        cfg = PipelineConfig(sigma_w=3.25, k_min=100, attn="diff", lam=0.1)
        p = tmp_path / "c.toml"
        p.write_text(dump_config(cfg))
        assert load_config(p) == cfg
        assert load_config(None) == PipelineConfig()


class TestSplitMix:
    def test_reference_vector(self):
        assert SplitMix64(1234567).next_u64(3).tolist() == [
            6457827717110365317,
            3203168211198807973,
            9817491932198370423,
        ]

    def test_blocks_equal_scalar_stream(self):
        g = SplitMix64(99)
        got = g.next_u64(5).tolist() + g.next_u64(1).tolist() + g.next_u64(4).tolist()
        assert got == splitmix_scalar(99, 10)

    def test_uniform_range(self):
        u = SplitMix64(1).uniform(10000)
        assert u.min() >= 0 and u.max() < 1
        assert abs(u.mean() - 0.5) < 0.02


class TestWeights:
    def test_deterministic(self, small_cfg):
        assert init_weights(small_cfg).equals(init_weights(small_cfg))
        assert not init_weights(small_cfg, seed=1).equals(init_weights(small_cfg, seed=2))

    def test_glorot_bounds(self, small_cfg):
        b = init_weights(small_cfg)
        for name, shape, kind in param_spec(small_cfg):
            assert b[name].shape == shape
            if kind == "glorot":
                assert np.abs(b[name]).max() <= glorot_bound(shape), name
                assert np.std(b[name]) > 0
        assert glorot_bound((3, 3, 2, 4)) == math.sqrt(6 / (18 + 36))

    def test_check(self, small_cfg):
        b = init_weights(small_cfg)
        b.check(small_cfg)
        with pytest.raises(ShapeError):
            b.check(small_cfg.replace(dim=64))
        del b.tensors["mgss.w1"]
        with pytest.raises(ShapeError):
            b.check(small_cfg)

    def test_f32_round_trip_is_exact(self, small_cfg, tmp_path):
        b = init_weights(small_cfg)
        save_bundle(b, tmp_path / "w.apmt")
        assert load_bundle(tmp_path / "w.apmt").equals(b)

    def test_f64_and_complex(self):
        b = WeightBundle({"a": np.array([[1 / 3, 2.0]]), "z": np.array([1 + 2j], dtype=complex), "s": np.array(0.5)})
        back = bundle_from_bytes(bundle_to_bytes(b, "f64"))
        assert back.equals(b)

    def test_layout(self):
        data = bundle_to_bytes(WeightBundle({"ab": np.array([1.5, 2.0])}))
        assert data[:4] == b"APMT"
        assert struct.unpack_from("<II", data, 4) == (1, 1)
        assert data[12:14] == b"\x02\x00" and data[14:16] == b"ab"
        assert data[16:18] == b"\x00\x01"
        assert struct.unpack_from("<Q", data, 18) == (2,)
        assert np.frombuffer(data[26:], "<f4").tolist() == [1.5, 2.0]

    @pytest.mark.parametrize("cut", [3, 10, 20, -1])
    def test_truncation(self, cut):
        data = bundle_to_bytes(WeightBundle({"ab": np.ones(3)}))
        with pytest.raises(ParseError):
            bundle_from_bytes(data[:cut])

    def test_trailing_bytes_and_dtype(self):
        data = bundle_to_bytes(WeightBundle({"ab": np.ones(1)}))
        with pytest.raises(ParseError):
            bundle_from_bytes(data + b"\x00")
        bad = bytearray(data)
        bad[16] = 9
        with pytest.raises(ParseError):
            bundle_from_bytes(bytes(bad))


class TestBackbone:
    def test_depth_zero_identity(self, rng):
        x = rng.normal(size=(5, 8))
        np.testing.assert_array_equal(backbone_forward(x, [], 2), x)

    def test_shape(self, small_cfg, rng):
        layers = load_layers(init_weights(small_cfg), 1)
        x = rng.normal(size=(49 + 111, small_cfg.dim))
        out = backbone_forward(x, layers, small_cfg.backbone_heads)
        assert out.shape == x.shape
        np.testing.assert_array_equal(out, backbone_forward(x, layers, small_cfg.backbone_heads))
