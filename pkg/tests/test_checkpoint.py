"""Checkpoint container: bitwise round-trips and precise corruption errors."""

import struct

import numpy as np
import pytest

from holoforge import checkpoint, training
from holoforge.model import build_model


def sample_arrays():
    rng = np.random.default_rng(3)
    return {
        "encoder.w": rng.standard_normal((4, 3, 3, 3)).astype(np.float32),
        "encoder.b": rng.standard_normal(4).astype(np.float32),
        "scalar": np.float32(2.5),
        "head.gamma": np.linspace(-1, 1, 7, dtype=np.float32),
    }


class TestRoundTrip:
    def test_arrays_and_meta_bitwise(self, tmp_path):
        arrays = sample_arrays()
        meta = {"phase": 2, "epoch": 17, "seed": 42, "preset": "toy", "note": "midrun"}
        path = tmp_path / "model.ckpt"
        checkpoint.save_checkpoint(path, arrays, meta)
        loaded, meta2 = checkpoint.load_checkpoint(path)
        assert meta2 == meta
        assert list(loaded) == list(arrays)  # order preserved
        for name in arrays:
            got = loaded[name]
            assert got.dtype == np.float32
            np.testing.assert_array_equal(got, np.asarray(arrays[name], dtype=np.float32),
                                          err_msg=name)

    def test_zero_dim_array_survives(self, tmp_path):
        path = tmp_path / "s.ckpt"
        checkpoint.save_checkpoint(path, {"x": np.float32(-0.0)}, {})
        loaded, _ = checkpoint.load_checkpoint(path)
        assert loaded["x"].shape == ()
        assert np.signbit(loaded["x"])

    def test_save_is_deterministic(self, tmp_path):
        arrays = sample_arrays()
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        checkpoint.save_checkpoint(a, arrays, {"k": 1})
        checkpoint.save_checkpoint(b, arrays, {"k": 1})
        assert a.read_bytes() == b.read_bytes()

    def test_empty_arrays_dict(self, tmp_path):
        path = tmp_path / "empty.ckpt"
        checkpoint.save_checkpoint(path, {}, {"only": "meta"})
        loaded, meta = checkpoint.load_checkpoint(path)
        assert loaded == {} and meta == {"only": "meta"}

    def test_special_floats_round_trip(self, tmp_path):
        arr = np.array([np.inf, -np.inf, np.nan, 1e-45], dtype=np.float32)
        path = tmp_path / "f.ckpt"
        checkpoint.save_checkpoint(path, {"x": arr}, {})
        loaded, _ = checkpoint.load_checkpoint(path)
        assert loaded["x"].tobytes() == arr.tobytes()


class TestCorruption:
    def write_valid(self, path):
        checkpoint.save_checkpoint(path, sample_arrays(), {"seed": 1})
        return path.read_bytes()

    def test_bad_magic(self, tmp_path):
        raw = self.write_valid(tmp_path / "v.ckpt")
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"NOTACKPT" + raw[8:])
        with pytest.raises(ValueError, match="byte 0"):
            checkpoint.load_checkpoint(bad)

    def test_unsupported_version(self, tmp_path):
        raw = self.write_valid(tmp_path / "v.ckpt")
        bad = tmp_path / "ver.ckpt"
        bad.write_bytes(raw[:8] + struct.pack("<I", 99) + raw[12:])
        with pytest.raises(ValueError, match="version 99"):
            checkpoint.load_checkpoint(bad)

    def test_implausible_rank(self, tmp_path):
        path = tmp_path / "rank.ckpt"
        name = b"w"
        body = (checkpoint.MAGIC + struct.pack("<II", checkpoint.VERSION, 1)
                + struct.pack("<I", len(name)) + name + struct.pack("<I", 200))
        path.write_bytes(body)
        with pytest.raises(ValueError, match="rank 200"):
            checkpoint.load_checkpoint(path)

    def test_truncated_payload(self, tmp_path):
        raw = self.write_valid(tmp_path / "v.ckpt")
        bad = tmp_path / "trunc.ckpt"
        bad.write_bytes(raw[:-30])
        with pytest.raises(ValueError, match="truncated"):
            checkpoint.load_checkpoint(bad)

    def test_trailing_garbage(self, tmp_path):
        raw = self.write_valid(tmp_path / "v.ckpt")
        bad = tmp_path / "trail.ckpt"
        bad.write_bytes(raw + b"\x00\x01\x02")
        with pytest.raises(ValueError, match="trailing"):
            checkpoint.load_checkpoint(bad)

    def test_error_messages_carry_byte_offsets(self, tmp_path):
        raw = self.write_valid(tmp_path / "v.ckpt")
        bad = tmp_path / "off.ckpt"
        bad.write_bytes(raw[:20])
        with pytest.raises(ValueError, match=r"byte \d+"):
            checkpoint.load_checkpoint(bad)


class TestTrainingCheckpoints:
    def test_model_and_optimizer_round_trip(self, tmp_path):
        net = build_model("toy", seed=9)
        opt = training.Adam(net.depth_parameters(), lr=1e-3)
        # give the moments non-zero content
        for _, p in opt.named_params:
            p.grad = np.full_like(p.data, 0.01)
        opt.step()
        path = tmp_path / "train.ckpt"
        training.save_training_checkpoint(path, net, opt, phase=1, epoch=5, seed=42,
                                          extra={"tag": "x"})

        net2 = build_model("toy", seed=1234)
        opt2 = training.Adam(net2.depth_parameters(), lr=1e-3)
        meta = training.load_training_checkpoint(path, net2, opt2)

        assert meta["phase"] == 1 and meta["epoch"] == 5 and meta["seed"] == 42
        assert meta["step"] == 1 and meta["preset"] == "toy" and meta["tag"] == "x"
        s1, s2 = net.state_arrays(), net2.state_arrays()
        assert s1.keys() == s2.keys()
        for k in s1:
            np.testing.assert_array_equal(s1[k], s2[k], err_msg=k)
        for k in opt.m:
            np.testing.assert_array_equal(opt.m[k], opt2.m[k])
            np.testing.assert_array_equal(opt.v[k], opt2.v[k])
        assert opt2.step_count == 1

    def test_optimizer_state_is_namespaced_in_the_file(self, tmp_path):
        net = build_model("toy", seed=9)
        opt = training.Adam(net.depth_parameters(), lr=1e-3)
        path = tmp_path / "ns.ckpt"
        training.save_training_checkpoint(path, net, opt, phase=1, epoch=0, seed=0)
        arrays, _ = checkpoint.load_checkpoint(path)
        optim_keys = [k for k in arrays if k.startswith("optim.")]
        model_keys = [k for k in arrays if not k.startswith("optim.")]
        assert optim_keys and model_keys
        assert set(model_keys) == set(net.state_arrays())

    def test_load_without_optimizer_restores_model_only(self, tmp_path):
        net = build_model("toy", seed=9)
        opt = training.Adam(net.cgh_parameters(), lr=1e-3)
        path = tmp_path / "m.ckpt"
        training.save_training_checkpoint(path, net, opt, phase=2, epoch=3, seed=7)
        net2 = build_model("toy", seed=77)
        meta = training.load_training_checkpoint(path, net2)
        assert meta["phase"] == 2
        np.testing.assert_array_equal(
            net.state_arrays()["encoder.stages.0.conv1.conv.weight"],
            net2.state_arrays()["encoder.stages.0.conv1.conv.weight"])

    def test_cross_preset_load_rejected(self, tmp_path):
        net = build_model("toy", seed=0)
        path = tmp_path / "toy.ckpt"
        training.save_training_checkpoint(path, net, None, phase=1, epoch=0, seed=0)
        other = build_model("paper", seed=0)
        with pytest.raises((ValueError, KeyError)):
            training.load_training_checkpoint(path, other)
