"""Scene generation, split bookkeeping, and the on-disk sample layout."""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import pytest

from holoforge import dataset, image_io, optics


PARAMS = optics.PropagationParams()


def tree_digest(root: Path) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


class TestSynthScene:
    def test_same_seed_bitwise_identical(self):
        a = dataset.synth_scene(123, 32, PARAMS)
        b = dataset.synth_scene(123, 32, PARAMS)
        assert np.array_equal(a.rgb, b.rgb)
        assert np.array_equal(a.depth, b.depth)
        assert np.array_equal(a.amplitude, b.amplitude)
        assert np.array_equal(a.phase, b.phase)
        assert a.scale == b.scale

    def test_different_seeds_differ(self):
        a = dataset.synth_scene(1, 32, PARAMS)
        b = dataset.synth_scene(2, 32, PARAMS)
        assert not np.array_equal(a.rgb, b.rgb)

    def test_background_convention(self):
        s = dataset.synth_scene(5, 64, PARAMS)
        lum = optics.luminance_of_rgb(s.rgb)
        background = lum == 0.0
        assert background.any()  # shapes never cover the whole canvas edge-to-edge
        assert np.all(s.depth[0][background] == 1.0)
        assert np.all(s.rgb[:, background] == 0.0)

    def test_generated_sample_passes_invariants(self):
        for k in range(5):
            s = dataset.synth_scene([7, k], 32, PARAMS)
            s.validate()
            assert s.rgb.min() >= 0.0 and s.rgb.max() <= 1.0
            assert s.scale >= 0.0

    def test_hologram_fields_regenerate_from_scene(self):
        # the stored amplitude/phase/scale are what the optics module
        # produces for the stored rgb/depth pair (float32 storage makes the
        # regeneration approximate, not bitwise)
        s = dataset.synth_scene(11, 32, PARAMS)
        lum = optics.luminance_of_rgb(s.rgb.astype(np.float64))
        amp, phase, scale = optics.synthesize_hologram(
            lum, s.depth[0].astype(np.float64), PARAMS)
        np.testing.assert_allclose(s.amplitude[0], amp, atol=1e-6)
        np.testing.assert_allclose(s.phase[0], phase, atol=1e-6)
        assert s.scale == pytest.approx(scale, rel=1e-6)

    def test_depths_cover_foreground_range(self):
        # shape depths are drawn below the background value
        seen = []
        for k in range(10):
            s = dataset.synth_scene([13, k], 32, PARAMS)
            lum = optics.luminance_of_rgb(s.rgb)
            seen.extend(np.unique(s.depth[0][lum > 0]).tolist())
        assert min(seen) >= 0.0
        assert max(seen) < 1.0

    def test_colors_are_png_exact(self):
        # every painted color sits on the 8-bit grid so PNG storage is lossless
        s = dataset.synth_scene(17, 32, PARAMS)
        q = np.round(s.rgb * 255) / 255
        np.testing.assert_allclose(s.rgb, q, atol=1e-12)


class TestMakeSplits:
    def test_paper_scale_counts(self):
        ids = [f"{i:05d}" for i in range(4000)]
        split_of = dataset.make_splits(ids, ratio=(38, 1, 1), seed=0)
        counts = {s: sum(1 for v in split_of.values() if v == s)
                  for s in ("train", "val", "test")}
        assert counts == {"train": 3800, "val": 100, "test": 100}

    def test_forty_ids(self):
        ids = [str(i) for i in range(40)]
        split_of = dataset.make_splits(ids, seed=1)
        counts = [sum(1 for v in split_of.values() if v == s)
                  for s in ("train", "val", "test")]
        assert counts == [38, 1, 1]

    def test_disjoint_and_exhaustive(self):
        ids = [str(i) for i in range(157)]
        split_of = dataset.make_splits(ids, seed=2)
        assert set(split_of) == set(ids)
        assert set(split_of.values()) <= {"train", "val", "test"}

    def test_remainder_goes_to_train(self):
        ids = [str(i) for i in range(41)]
        split_of = dataset.make_splits(ids, seed=3)
        counts = [sum(1 for v in split_of.values() if v == s)
                  for s in ("train", "val", "test")]
        assert counts == [39, 1, 1]

    def test_seed_controls_assignment(self):
        ids = [str(i) for i in range(80)]
        a = dataset.make_splits(ids, seed=4)
        b = dataset.make_splits(ids, seed=4)
        c = dataset.make_splits(ids, seed=5)
        assert a == b
        assert a != c
        sizes = lambda m: sorted(
            sum(1 for v in m.values() if v == s) for s in ("train", "val", "test"))
        assert sizes(a) == sizes(c)

    def test_too_few_ids_rejected(self):
        with pytest.raises(ValueError):
            dataset.make_splits(["a", "b"])

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            dataset.make_splits(["a", "b", "b", "c"])


class TestPfm:
    def test_grayscale_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(20)
        img = rng.standard_normal((17, 23)).astype(np.float32)
        p = tmp_path / "x.pfm"
        image_io.save_pfm(img, p)
        back = image_io.load_pfm(p)
        assert back.dtype == np.float32
        assert np.array_equal(back, img)

    def test_color_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(21)
        img = rng.standard_normal((3, 9, 11)).astype(np.float32)
        p = tmp_path / "c.pfm"
        image_io.save_pfm(img, p)
        assert np.array_equal(image_io.load_pfm(p), img)

    def test_reference_fixture_bytes(self, tmp_path):
        # hand-assembled little-endian 2x2 grayscale file
        payload = struct.pack("<4f", 3.0, 4.0, 1.0, 2.0)  # bottom row first
        blob = b"Pf\n2 2\n-1.0\n" + payload
        p = tmp_path / "ref.pfm"
        p.write_bytes(blob)
        img = image_io.load_pfm(p)
        np.testing.assert_array_equal(img, [[1.0, 2.0], [3.0, 4.0]])

    def test_bad_magic_rejected_with_position(self, tmp_path):
        p = tmp_path / "bad.pfm"
        p.write_bytes(b"PX\n2 2\n-1.0\n" + b"\0" * 16)
        with pytest.raises(ValueError, match="byte 0"):
            image_io.load_pfm(p)

    def test_truncated_payload_rejected(self, tmp_path):
        p = tmp_path / "short.pfm"
        p.write_bytes(b"Pf\n2 2\n-1.0\n" + b"\0" * 7)
        with pytest.raises(ValueError, match="(truncat|expected)"):
            image_io.load_pfm(p)

    def test_big_endian_scale_positive(self, tmp_path):
        payload = struct.pack(">4f", 3.0, 4.0, 1.0, 2.0)
        p = tmp_path / "be.pfm"
        p.write_bytes(b"Pf\n2 2\n1.0\n" + payload)
        img = image_io.load_pfm(p)
        np.testing.assert_array_equal(img, [[1.0, 2.0], [3.0, 4.0]])


class TestPng:
    def test_quantized_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(22)
        img = np.round(rng.uniform(0, 1, (3, 16, 16)) * 255) / 255
        p = tmp_path / "x.png"
        image_io.save_png(img.astype(np.float32), p)
        back = image_io.load_png(p)
        np.testing.assert_allclose(back, img, atol=1e-7)

    def test_grayscale_round_trip(self, tmp_path):
        img = np.linspace(0, 1, 256).reshape(16, 16)
        img = np.round(img * 255) / 255
        p = tmp_path / "g.png"
        image_io.save_png(img.astype(np.float32), p)
        np.testing.assert_allclose(image_io.load_png(p), img, atol=1e-7)


class TestSampleStore:
    def test_save_load_round_trip(self, tmp_path):
        s = dataset.synth_scene(30, 32, PARAMS, sample_id="abc")
        dataset.save_sample(tmp_path, s)
        back = dataset.load_sample(tmp_path, "abc")
        assert np.array_equal(back.rgb.astype(np.float32), s.rgb.astype(np.float32))
        assert np.array_equal(back.depth, s.depth.astype(np.float32))
        assert np.array_equal(back.amplitude, s.amplitude.astype(np.float32))
        assert np.array_equal(back.phase, s.phase.astype(np.float32))
        assert back.scale == pytest.approx(s.scale)

    def test_layout_files(self, tmp_path):
        s = dataset.synth_scene(31, 32, PARAMS, sample_id="xyz")
        dataset.save_sample(tmp_path, s)
        d = tmp_path / "xyz"
        for name in ("rgb.png", "depth.pfm", "amp.pfm", "phase.pfm", "meta.json"):
            assert (d / name).is_file()
        meta = json.loads((d / "meta.json").read_text())
        assert meta["id"] == "xyz"
        assert meta["scale"] == pytest.approx(s.scale)


class TestGenerateDataset:
    def test_end_to_end_layout_and_manifest(self, tmp_path):
        m = dataset.generate_dataset(tmp_path, n=6, size=32, seed=9,
                                     params=PARAMS, ratio=(4, 1, 1))
        assert len(m.ids) == 6
        assert (tmp_path / "manifest.json").is_file()
        counts = [len(m.split_ids(s)) for s in ("train", "val", "test")]
        assert counts == [4, 1, 1]
        loaded = dataset.load_manifest(tmp_path)
        assert loaded.split_of == m.split_of
        assert loaded.optics_params == m.optics_params

    def test_small_corpus_default_ratio_floors_to_train(self, tmp_path):
        m = dataset.generate_dataset(tmp_path, n=6, size=32, seed=9, params=PARAMS)
        counts = [len(m.split_ids(s)) for s in ("train", "val", "test")]
        assert counts == [6, 0, 0]

    def test_regeneration_is_byte_identical(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        dataset.generate_dataset(a, n=5, size=32, seed=10, params=PARAMS)
        dataset.generate_dataset(b, n=5, size=32, seed=10, params=PARAMS)
        assert tree_digest(a) == tree_digest(b)

    def test_worker_count_does_not_change_bytes(self, tmp_path):
        a = tmp_path / "serial"
        b = tmp_path / "pooled"
        dataset.generate_dataset(a, n=6, size=32, seed=11, params=PARAMS, workers=1)
        dataset.generate_dataset(b, n=6, size=32, seed=11, params=PARAMS, workers=3)
        assert tree_digest(a) == tree_digest(b)

    def test_load_split_returns_valid_samples(self, tmp_path):
        m = dataset.generate_dataset(tmp_path, n=5, size=32, seed=12, params=PARAMS)
        train = dataset.load_split(m, "train")
        assert len(train) == len(m.split_ids("train"))
        for s in train:
            s.validate()

    def test_unknown_split_rejected(self, tmp_path):
        m = dataset.generate_dataset(tmp_path, n=4, size=32, seed=13, params=PARAMS)
        with pytest.raises(ValueError):
            m.split_ids("holdout")


def test_manifest_version_guard(tmp_path):
    m = dataset.generate_dataset(tmp_path, n=4, size=32, seed=14, params=PARAMS)
    doc = json.loads(m.to_json())
    doc["format_version"] = 999
    with pytest.raises(ValueError, match="version"):
        dataset.DatasetManifest.from_json(json.dumps(doc), tmp_path)


def test_imageset_validation_catches_bad_range():
    s = dataset.synth_scene(40, 32, PARAMS)
    bad = dataset.ImageSet(rgb=s.rgb, depth=s.depth + 2.0,
                           amplitude=s.amplitude, phase=s.phase,
                           scale=s.scale, id=s.id)
    with pytest.raises(ValueError):
        bad.validate()


def test_imageset_validation_catches_bad_shape():
    s = dataset.synth_scene(41, 32, PARAMS)
    bad = dataset.ImageSet(rgb=s.rgb[:2], depth=s.depth,
                           amplitude=s.amplitude, phase=s.phase,
                           scale=s.scale, id=s.id)
    with pytest.raises(ValueError):
        bad.validate()
