import json

import numpy as np
import pytest

from vcath import io
from vcath.errors import DataError
from vcath.volume import PullbackGrid, SdfConvention, Volume3D


def test_volume_round_trip_x_fastest(tmp_path):
    data = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    vol = Volume3D(data, (0.5, 1.0, 2.0), (1.0, 2.0, 3.0))
    io.write_volume(tmp_path / "v.json", vol, SdfConvention())
    raw = np.fromfile(tmp_path / "v.raw", dtype="<f4")
    # x varies fastest in the payload
    assert raw[0] == data[0, 0, 0] and raw[1] == data[1, 0, 0] and raw[2] == data[0, 1, 0]
    back = io.read_volume(tmp_path / "v.json")
    np.testing.assert_array_equal(back.data, data)
    assert back.spacing == vol.spacing and back.origin == vol.origin
    header = json.loads((tmp_path / "v.json").read_text())
    assert header["dtype"] == "f32le" and header["convention"]["sign"] == "positive-inside"


def test_pullback_round_trip(tmp_path):
    data = np.random.default_rng(0).normal(size=(3, 4, 5)).astype(np.float32)
    g = PullbackGrid(data, 0.1, 0.2, np.array([True, False, True]))
    io.write_pullback(tmp_path / "p.json", g)
    back = io.read_pullback(tmp_path / "p.json")
    np.testing.assert_array_equal(back.data, data)
    np.testing.assert_array_equal(back.valid_mask, g.valid_mask)
    assert back.in_plane_spacing == 0.1 and back.frame_spacing == 0.2


def test_truncated_payload_rejected(tmp_path):
    io.write_volume(tmp_path / "v.json", Volume3D(np.zeros((2, 2, 2))))
    (tmp_path / "v.raw").write_bytes(b"\0" * 12)
    with pytest.raises(DataError):
        io.read_volume(tmp_path / "v.json")


def test_centerline_round_trip_and_errors(tmp_path):
    pts = np.random.default_rng(1).normal(size=(6, 3))
    io.write_centerline(tmp_path / "c.json", pts)
    np.testing.assert_array_equal(io.read_centerline(tmp_path / "c.json"), pts)
    (tmp_path / "bad.json").write_text("[[1, 2]]")
    with pytest.raises(DataError):
        io.read_centerline(tmp_path / "bad.json")
    with pytest.raises(DataError):
        io.read_centerline(tmp_path / "missing.json")
