import numpy as np
import pytest

from ctxaug.checkpoint import CheckpointError, load_tensors, save_tensors


def _tensors():
    rng = np.random.default_rng(0)
    return {
        "w": rng.normal(size=(3, 4)).astype(np.float32),
        "b": rng.normal(size=(4,)),
        "scalar": np.array(2.5, dtype=np.float32),
    }


def test_round_trip_is_bitwise(tmp_path):
    tensors = _tensors()
    save_tensors(tmp_path / "c.ckpt", tensors, {"kind": "x", "n": [1, 2]})
    back, meta = load_tensors(tmp_path / "c.ckpt")
    assert meta == {"kind": "x", "n": [1, 2]}
    assert list(back) == list(tensors)
    for k, arr in tensors.items():
        assert back[k].dtype == arr.dtype and back[k].tobytes() == arr.tobytes()


def test_save_is_deterministic(tmp_path):
    save_tensors(tmp_path / "a", _tensors(), {"m": 1})
    save_tensors(tmp_path / "b", _tensors(), {"m": 1})
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


@pytest.mark.parametrize("damage", ["flip", "truncate", "magic"])
def test_damaged_files_are_rejected(tmp_path, damage):
    path = tmp_path / "c.ckpt"
    save_tensors(path, _tensors(), {})
    raw = bytearray(path.read_bytes())
    if damage == "flip":
        raw[len(raw) // 2] ^= 0xFF
    elif damage == "truncate":
        raw = raw[:-10]
    else:
        raw[:8] = b"NOTACKPT"
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_tensors(path)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_tensors(tmp_path / "nope")
