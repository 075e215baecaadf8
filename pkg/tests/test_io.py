"""Round trips for every on-disk format."""

import numpy as np
import pytest

from msfusion.errors import DimensionMismatch
from msfusion.fuse import MultispectralPointCloud
from msfusion.io import (
    read_calibration,
    read_pgm,
    read_ply,
    read_png,
    write_calibration,
    write_pgm,
    write_ply,
    write_png,
)


def _cloud(rng, n=500):
    return MultispectralPointCloud(
        points=np.column_stack([rng.uniform(-2, 2, (n, 2)),
                                rng.uniform(0.1, 5, n)]),
        colors=rng.integers(0, 256, (n, 3), dtype=np.uint8),
        thermal=rng.integers(0, 65536, n, dtype=np.uint16),
        uv=rng.integers(0, 256, n, dtype=np.uint16),
        source_pixels=rng.integers(0, 640, (n, 2), dtype=np.int32))


class TestPng:
    def test_rgb_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 256, (48, 64, 3), dtype=np.uint8)
        p = tmp_path / "x.png"
        write_png(p, img)
        assert np.array_equal(read_png(p), img)

    def test_grayscale_round_trip(self, tmp_path):
        img = np.arange(64, dtype=np.uint8).reshape(8, 8)
        p = tmp_path / "g.png"
        write_png(p, img)
        assert np.array_equal(read_png(p), img)

    def test_rejects_16_bit(self, tmp_path):
        with pytest.raises(ValueError):
            write_png(tmp_path / "b.png", np.zeros((4, 4), dtype=np.uint16))


class TestPgm:
    def test_8_bit_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        img = rng.integers(0, 256, (33, 47), dtype=np.uint8)
        p = tmp_path / "a.pgm"
        write_pgm(p, img)
        back = read_pgm(p)
        assert back.dtype == np.uint8
        assert np.array_equal(back, img)

    def test_16_bit_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        img = rng.integers(0, 65536, (120, 160), dtype=np.uint16)
        p = tmp_path / "d.pgm"
        write_pgm(p, img)
        back = read_pgm(p)
        assert back.dtype == np.uint16
        assert np.array_equal(back, img)

    def test_16_bit_is_big_endian_on_disk(self, tmp_path):
        img = np.array([[0x0102]], dtype=np.uint16)
        p = tmp_path / "e.pgm"
        write_pgm(p, img)
        assert p.read_bytes().endswith(b"\x01\x02")

    def test_comment_in_header(self, tmp_path):
        p = tmp_path / "c.pgm"
        p.write_bytes(b"P5\n# made by hand\n2 2\n255\n\x01\x02\x03\x04")
        assert np.array_equal(read_pgm(p), [[1, 2], [3, 4]])

    def test_rejects_color_and_float(self, tmp_path):
        with pytest.raises(DimensionMismatch):
            write_pgm(tmp_path / "x.pgm", np.zeros((4, 4, 3), dtype=np.uint8))
        with pytest.raises(ValueError):
            write_pgm(tmp_path / "y.pgm", np.zeros((4, 4)))

    def test_rejects_non_pgm(self, tmp_path):
        p = tmp_path / "n.pgm"
        p.write_bytes(b"P6\n1 1\n255\nabc")
        with pytest.raises(ValueError):
            read_pgm(p)


class TestPly:
    @pytest.mark.parametrize("binary", [False, True])
    def test_round_trip(self, tmp_path, binary):
        rng = np.random.default_rng(3)
        cloud = _cloud(rng)
        p = tmp_path / "c.ply"
        write_ply(p, cloud, binary=binary)
        back = read_ply(p)
        assert len(back) == len(cloud)
        # positions stored as float32: exact after one round trip
        assert np.array_equal(back.points,
                              cloud.points.astype(np.float32)
                              .astype(np.float64))
        assert np.array_equal(back.colors, cloud.colors)
        assert np.array_equal(back.thermal, cloud.thermal)
        assert np.array_equal(back.uv, cloud.uv)
        assert np.all(back.source_pixels == -1)

    @pytest.mark.parametrize("binary", [False, True])
    def test_empty_cloud(self, tmp_path, binary):
        empty = MultispectralPointCloud(
            points=np.empty((0, 3)),
            colors=np.empty((0, 3), dtype=np.uint8),
            thermal=np.empty(0, dtype=np.uint16),
            uv=np.empty(0, dtype=np.uint16),
            source_pixels=np.empty((0, 2), dtype=np.int32))
        p = tmp_path / "empty.ply"
        write_ply(p, empty, binary=binary)
        assert len(read_ply(p)) == 0

    def test_header_declares_format(self, tmp_path):
        rng = np.random.default_rng(4)
        cloud = _cloud(rng, n=3)
        pa = tmp_path / "a.ply"
        pb = tmp_path / "b.ply"
        write_ply(pa, cloud)
        write_ply(pb, cloud, binary=True)
        assert b"format ascii 1.0" in pa.read_bytes()
        assert b"format binary_little_endian 1.0" in pb.read_bytes()

    def test_binary_vertex_is_19_bytes(self, tmp_path):
        rng = np.random.default_rng(5)
        cloud = _cloud(rng, n=7)
        p = tmp_path / "v.ply"
        write_ply(p, cloud, binary=True)
        data = p.read_bytes()
        body = data[data.index(b"end_header\n") + 11:]
        assert len(body) == 7 * 19

    def test_rejects_foreign_layout(self, tmp_path):
        p = tmp_path / "f.ply"
        p.write_text("ply\nformat ascii 1.0\nelement vertex 1\n"
                     "property float x\nend_header\n1.0\n")
        with pytest.raises(ValueError):
            read_ply(p)


class TestCalibrationFile:
    def test_round_trip(self, tmp_path):
        from msfusion.calibrate import (CalibrationResult, CameraCalibration,
                                        RelativeExtrinsics)
        from msfusion.rig import default_rig
        rig = default_rig()
        cameras = {c: CameraCalibration(intrinsics=rig.intrinsics[c],
                                        view_poses={"v0": rig.poses[c]},
                                        rms_px=0.01)
                   for c in ("rgb", "thermal")}
        relative = {("rgb", "thermal"): RelativeExtrinsics(
            source="rgb", dest="thermal",
            pose=rig.relative_pose("rgb", "thermal"),
            rotation_spread_deg=0.02, translation_spread_m=1e-4)}
        result = CalibrationResult(cameras=cameras, relative=relative)
        p = tmp_path / "calib.json"
        write_calibration(p, result)
        back = read_calibration(p)
        assert back.cameras["thermal"].intrinsics == \
            rig.intrinsics["thermal"]
        assert np.allclose(
            back.relative_pose("rgb", "thermal").matrix,
            rig.relative_pose("rgb", "thermal").matrix)
        assert back.relative[("rgb", "thermal")].rotation_spread_deg == 0.02
