import numpy as np
import pytest

from fecim.tensorio import load_tensors, save_tensors


def test_round_trip(tmp_path):
    path = tmp_path / "t.tc"
    tensors = {
        "a": np.arange(24, dtype=np.float64).reshape(2, 3, 4),
        "b": np.array([-5, 0, 7], dtype=np.int64),
        "c": np.array([[1, 255], [0, 16]], dtype=np.uint8),
        "scalar": np.array([3.5]),
    }
    save_tensors(path, tensors)
    back = load_tensors(path)
    assert set(back) == set(tensors)
    for name in tensors:
        assert back[name].dtype == tensors[name].dtype
        assert np.array_equal(back[name], tensors[name])


def test_rejects_wrong_magic(tmp_path):
    path = tmp_path / "bad.tc"
    path.write_bytes(b"something else\n\n")
    with pytest.raises(ValueError):
        load_tensors(path)


def test_shipped_fixtures_load():
    from fecim.nn_eval import load_digits_fixture, load_network_fixture

    net = load_network_fixture()
    assert [l.kind for l in net.layers] == ["conv", "relu", "maxpool", "conv", "relu", "fc"]
    images, labels = load_digits_fixture()
    assert images.shape[1:] == (1, 8, 8)
    assert len(images) == len(labels) >= 500
    assert images.max() <= 15 and images.min() >= 0
