import struct

import numpy as np
import pytest

from eedlab import io, runtime
from eedlab.actions import circular_mask
from eedlab.errors import FormatError, InvalidArgumentError
from eedlab.groups import make_cyclic


class TestTensorDump:
    def test_round_trip_bit_identical(self, tmp_path):
        t = np.random.default_rng(0).standard_normal((3, 4, 4)).astype(np.float32)
        p = tmp_path / "t.eedt"
        io.write_tensor_dump(t, p)
        assert np.array_equal(io.read_tensor_dump(p), t)

    def test_u8_round_trip(self, tmp_path):
        t = np.arange(12, dtype=np.uint8).reshape(3, 4)
        p = tmp_path / "u.eedt"
        io.write_tensor_dump(t, p)
        back = io.read_tensor_dump(p)
        assert back.dtype == np.uint8 and np.array_equal(back, t)

    def test_truncated_file(self, tmp_path):
        t = np.ones((2, 2), np.float32)
        p = tmp_path / "t.eedt"
        io.write_tensor_dump(t, p)
        blob = p.read_bytes()
        p.write_bytes(blob[:-3])
        with pytest.raises(FormatError):
            io.read_tensor_dump(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.eedt"
        p.write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(FormatError, match="magic"):
            io.read_tensor_dump(p)

    def test_cross_endian_dim_rejected(self, tmp_path):
        # hand-built header whose single dim is written big-endian: the
        # little-endian reader sees a huge dim and the length check trips
        header = struct.pack("<4sHBB", b"EEDT", 1, 0, 1) + struct.pack(">I", 1)
        payload = struct.pack("<f", 1.0)
        p = tmp_path / "be.eedt"
        p.write_bytes(header + payload)
        with pytest.raises(FormatError, match="payload length"):
            io.read_tensor_dump(p)

    def test_trailing_bytes_rejected(self, tmp_path):
        t = np.ones(3, np.float32)
        p = tmp_path / "t.eedt"
        io.write_tensor_dump(t, p)
        p.write_bytes(p.read_bytes() + b"\x00")
        with pytest.raises(FormatError):
            io.read_tensor_dump(p)

    def test_non_finite_payload_rejected(self, tmp_path):
        header = struct.pack("<4sHBB", b"EEDT", 1, 0, 1) + struct.pack("<I", 1)
        p = tmp_path / "nan.eedt"
        p.write_bytes(header + struct.pack("<f", float("nan")))
        with pytest.raises(FormatError, match="non-finite"):
            io.read_tensor_dump(p)

    def test_zero_dim_rejected(self, tmp_path):
        header = struct.pack("<4sHBB", b"EEDT", 1, 0, 2) + struct.pack("<II", 0, 3)
        p = tmp_path / "zero.eedt"
        p.write_bytes(header)
        with pytest.raises(FormatError, match="zero dimension"):
            io.read_tensor_dump(p)

    def test_bad_version(self, tmp_path):
        t = np.ones(2, np.float32)
        p = tmp_path / "t.eedt"
        io.write_tensor_dump(t, p)
        blob = bytearray(p.read_bytes())
        blob[4] = 9
        p.write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="version"):
            io.read_tensor_dump(p)


class TestIdx:
    def _image_file(self, tmp_path, pixels, n=1, h=2, w=2):
        p = tmp_path / "imgs.idx"
        p.write_bytes(struct.pack(">IIII", 0x803, n, h, w) + bytes(pixels))
        return p

    def test_hand_built_image(self, tmp_path):
        p = self._image_file(tmp_path, [0, 128, 255, 64])
        imgs = io.read_idx_images(p)
        assert len(imgs) == 1
        np.testing.assert_allclose(
            imgs[0], [[0.0, 128 / 255], [1.0, 64 / 255]], atol=1e-6)

    def test_label_magic_on_image_reader(self, tmp_path):
        p = tmp_path / "labels.idx"
        p.write_bytes(struct.pack(">II", 0x801, 2) + bytes([3, 4]))
        with pytest.raises(FormatError, match="not an IDX image"):
            io.read_idx_images(p)

    def test_empty_image_count(self, tmp_path):
        p = self._image_file(tmp_path, [], n=0)
        assert io.read_idx_images(p) == []

    def test_labels_round_trip(self, tmp_path):
        p = tmp_path / "labels.idx"
        p.write_bytes(struct.pack(">II", 0x801, 3) + bytes([0, 5, 9]))
        np.testing.assert_array_equal(io.read_idx_labels(p), [0, 5, 9])

    def test_image_payload_length_checked(self, tmp_path):
        p = self._image_file(tmp_path, [1, 2, 3])  # one byte short
        with pytest.raises(FormatError):
            io.read_idx_images(p)


class TestSynthesize:
    def test_empty_manifest(self, tmp_path):
        man = io.synthesize_dataset("gaussian-blobs", 0, 16, 3, 1, tmp_path)
        assert man.items == []

    def test_seed_determinism(self, tmp_path):
        a = io.synthesize_dataset("band-limited-noise", 5, 16, 2, 7, tmp_path / "a")
        b = io.synthesize_dataset("band-limited-noise", 5, 16, 2, 7, tmp_path / "b")
        for ia, ib in zip(a.items, b.items):
            ta = (tmp_path / "a" / ia.tensor).read_bytes()
            tb = (tmp_path / "b" / ib.tensor).read_bytes()
            assert ta == tb

    def test_masked_corners_zero(self, tmp_path):
        man = io.synthesize_dataset("gaussian-blobs", 6, 12, 3, 3, tmp_path)
        for img in io.load_dataset_tensors(man):
            s = img.shape[0]
            for r, c in [(0, 0), (0, s - 1), (s - 1, 0), (s - 1, s - 1)]:
                assert img[r, c] == 0.0

    def test_labels_cycle_through_classes(self, tmp_path):
        man = io.synthesize_dataset("gaussian-blobs", 7, 10, 3, 0, tmp_path)
        assert [it.label for it in man.items] == [0, 1, 2, 0, 1, 2, 0]

    def test_unknown_kind(self, tmp_path):
        with pytest.raises(InvalidArgumentError):
            io.synthesize_dataset("checkerboard", 1, 16, 2, 0, tmp_path)

    def test_size_floor(self, tmp_path):
        with pytest.raises(InvalidArgumentError):
            io.synthesize_dataset("gaussian-blobs", 1, 4, 2, 0, tmp_path)


class TestRotatedDataset:
    @pytest.fixture()
    def source(self, tmp_path):
        return io.synthesize_dataset("gaussian-blobs", 20, 12, 10, 5,
                                     tmp_path / "src")

    def test_excluding_class_leaves_nine(self, source, tmp_path):
        man = io.build_rotated_dataset(source, make_cyclic(8), True, {9}, 1,
                                       tmp_path / "rot")
        assert man.classes == 9
        assert all(0 <= it.label < 9 for it in man.items)
        assert len(man.items) == 18  # two of twenty items had label 9

    def test_trivial_group_only_masks(self, source, tmp_path):
        man = io.build_rotated_dataset(source, make_cyclic(1), True, set(), 1,
                                       tmp_path / "c1")
        src_imgs = io.load_dataset_tensors(source)
        for img, src in zip(io.load_dataset_tensors(man), src_imgs):
            assert np.array_equal(img, circular_mask(src))

    def test_seed_determinism(self, source, tmp_path):
        m1 = io.build_rotated_dataset(source, make_cyclic(4), True, set(), 9,
                                      tmp_path / "r1")
        m2 = io.build_rotated_dataset(source, make_cyclic(4), True, set(), 9,
                                      tmp_path / "r2")
        assert (tmp_path / "r1" / "dataset.json").read_text() == \
               (tmp_path / "r2" / "dataset.json").read_text()
        for i1, i2 in zip(m1.items, m2.items):
            assert i1.rotation_element == i2.rotation_element
            assert ((tmp_path / "r1" / i1.tensor).read_bytes()
                    == (tmp_path / "r2" / i2.tensor).read_bytes())

    def test_elements_recorded(self, source, tmp_path):
        man = io.build_rotated_dataset(source, make_cyclic(8), False, set(), 2,
                                       tmp_path / "rec")
        assert all(it.rotation_element is not None for it in man.items)
        assert man.rotation_group == "c8"

    def test_round_trip_through_manifest(self, source, tmp_path):
        io.build_rotated_dataset(source, make_cyclic(4), True, {0}, 3,
                                 tmp_path / "m")
        back = io.load_dataset_manifest(tmp_path / "m" / "dataset.json")
        assert back.classes == 9
        assert len(io.load_dataset_tensors(back)) == len(back.items)


class TestManifestValidation:
    def test_missing_tensor_file(self, tmp_path):
        man = io.synthesize_dataset("gaussian-blobs", 2, 10, 2, 0, tmp_path)
        (tmp_path / man.items[0].tensor).unlink()
        with pytest.raises(FormatError, match="missing tensor"):
            io.load_dataset_manifest(tmp_path / "dataset.json")

    def test_label_out_of_range(self, tmp_path):
        man = io.synthesize_dataset("gaussian-blobs", 2, 10, 2, 0, tmp_path)
        d = io.load_json(tmp_path / "dataset.json")
        d["items"][0]["label"] = 5
        io.save_json(d, tmp_path / "dataset.json")
        with pytest.raises(FormatError, match="label"):
            io.load_dataset_manifest(tmp_path / "dataset.json")


class TestModelRoundTrip:
    @pytest.mark.parametrize("builder", [
        lambda: runtime.build_standard_cnn(2, [4, 8], 5, seed=3),
        lambda: runtime.build_c4_equivariant_model(2, 2, 5, seed=3),
    ])
    def test_save_load_preserves_forward(self, tmp_path, builder):
        model = builder()
        path = io.save_model(model, tmp_path)
        back = io.load_model(path)
        assert back.layer_shapes == model.layer_shapes
        assert back.split_index == model.split_index
        assert back.block_taps == model.block_taps
        x = np.random.default_rng(4).standard_normal(
            model.input_shape).astype(np.float32)
        assert np.array_equal(runtime.forward(back, x), runtime.forward(model, x))

    def test_rejects_non_model_manifest(self, tmp_path):
        io.save_json({"kind": "dataset"}, tmp_path / "x.json")
        with pytest.raises(FormatError):
            io.load_model(tmp_path / "x.json")


class TestActivationGrid:
    def test_missing_entry_detected(self, tmp_path):
        t = np.ones(3, np.float32)
        path = io.write_activation_grid({(0, 0): t, (0, 1): t}, [], "c2", tmp_path)
        d = io.load_json(path)
        d["items"] = d["items"][:1]
        io.save_json(d, path)
        with pytest.raises(FormatError, match="missing"):
            io.load_activation_grid(path)

    def test_duplicate_entry_detected(self, tmp_path):
        t = np.ones(3, np.float32)
        path = io.write_activation_grid({(0, 0): t, (0, 1): t}, [], "c2", tmp_path)
        d = io.load_json(path)
        d["items"].append(dict(d["items"][0]))
        io.save_json(d, path)
        with pytest.raises(FormatError, match="duplicate"):
            io.load_activation_grid(path)

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        tensors = {(i, g): rng.standard_normal(4).astype(np.float32)
                   for i in range(2) for g in range(2)}
        norm = [rng.standard_normal(4).astype(np.float32) for _ in range(3)]
        path = io.write_activation_grid(tensors, norm, "c2", tmp_path)
        grid = io.load_activation_grid(path)
        assert grid.sample_count == 2
        assert np.array_equal(grid.get(1, 0), tensors[(1, 0)])
        assert len(grid.norm_features()) == 3
