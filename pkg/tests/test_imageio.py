import numpy as np
import pytest

from pgcs import imageio


def test_pgm_round_trip(tmp_path):
    img = np.arange(48, dtype=np.uint8).reshape(6, 8) * 5
    p = tmp_path / "a.pgm"
    imageio.write_pgm(p, img)
    back = imageio.read_pgm(p)
    assert back.shape == (6, 8) and np.array_equal(back, img)
    arr, mode = imageio.read_image(p)
    assert mode == "gray" and arr.dtype == float


def test_pgm_header_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n# max\n255\n" + bytes([10, 250]))
    assert imageio.read_pgm(p).tolist() == [[10, 250]]


@pytest.mark.parametrize("data", [b"P2\n1 1\n255\n0", b"P5\n2 2\n255\n\x00", b"P5\n1 1\n65535\n\x00\x00",
                                  b"P5\n1"])
def test_pgm_rejects(tmp_path, data):
    p = tmp_path / "bad.pgm"
    p.write_bytes(data)
    with pytest.raises(ValueError):
        imageio.read_pgm(p)


def test_write_pgm_range(tmp_path):
    with pytest.raises(ValueError):
        imageio.write_pgm(tmp_path / "x.pgm", np.array([[300.0]]))
    with pytest.raises(ValueError):
        imageio.write_pgm(tmp_path / "x.pgm", np.zeros(3))


def test_depth_csv(tmp_path):
    d = np.array([[0.5, 1.25], [3.0, 1e-9]])
    p = tmp_path / "d.csv"
    imageio.write_depth_csv(p, d)
    arr, mode = imageio.read_image(p)
    assert mode == "depth" and np.array_equal(arr, d)
