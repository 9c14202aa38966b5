import struct

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from blockadvice.nn import WeightFormatError, load_weights, save_weights, sidecar_path

META = {"architecture": "grounder.restrictive.v1", "seed": 3}


def test_roundtrip_preserves_values_and_shapes(tmp_path):
    tensors = {
        "scalar": np.float32(2.5),
        "vec": np.arange(5, dtype=np.float32),
        "mat": np.linspace(-1, 1, 12, dtype=np.float32).reshape(3, 4),
    }
    path = tmp_path / "w.avnw"
    save_weights(path, tensors, META)
    loaded, meta = load_weights(path)
    assert meta == META
    assert set(loaded) == set(tensors)
    assert loaded["scalar"].shape == ()
    for name in tensors:
        np.testing.assert_array_equal(loaded[name], np.asarray(tensors[name]))


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(
    st.dictionaries(
        st.text(st.characters(min_codepoint=33, max_codepoint=126), min_size=1, max_size=12),
        arrays(np.float32, array_shapes(min_dims=0, max_dims=3, max_side=4),
               elements=st.floats(-1e6, 1e6, width=32)),
        max_size=4,
    )
)
def test_roundtrip_property(tmp_path, tensors):
    path = tmp_path / "w.avnw"
    save_weights(path, tensors, META)
    loaded, _ = load_weights(path)
    assert set(loaded) == set(tensors)
    for name, arr in tensors.items():
        np.testing.assert_array_equal(loaded[name], arr)
        assert loaded[name].dtype == np.float32


def test_save_is_byte_stable(tmp_path):
    tensors = {"a": np.arange(6, dtype=np.float32), "b": np.float32(1.0)}
    p1, p2 = tmp_path / "one.avnw", tmp_path / "two.avnw"
    save_weights(p1, tensors, META)
    save_weights(p2, tensors, META)
    assert p1.read_bytes() == p2.read_bytes()
    assert sidecar_path(p1).read_text() == sidecar_path(p2).read_text()


def test_sidecar_path_appends_suffix(tmp_path):
    assert sidecar_path(tmp_path / "m.avnw").name == "m.avnw.meta.json"


def _saved(tmp_path):
    path = tmp_path / "w.avnw"
    save_weights(path, {"a": np.arange(4, dtype=np.float32)}, META)
    return path


def test_missing_file_raises(tmp_path):
    with pytest.raises(WeightFormatError, match="not found"):
        load_weights(tmp_path / "absent.avnw")


def test_bad_magic_raises(tmp_path):
    path = _saved(tmp_path)
    blob = path.read_bytes()
    path.write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(WeightFormatError, match="magic"):
        load_weights(path)


def test_bad_version_raises(tmp_path):
    path = _saved(tmp_path)
    blob = bytearray(path.read_bytes())
    blob[4:8] = struct.pack("<I", 99)
    path.write_bytes(bytes(blob))
    with pytest.raises(WeightFormatError, match="version"):
        load_weights(path)


def test_truncated_payload_raises(tmp_path):
    path = _saved(tmp_path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-3])
    with pytest.raises(WeightFormatError, match="truncated"):
        load_weights(path)


def test_trailing_bytes_raise(tmp_path):
    path = _saved(tmp_path)
    path.write_bytes(path.read_bytes() + b"\0\0")
    with pytest.raises(WeightFormatError, match="trailing"):
        load_weights(path)


def test_missing_sidecar_raises(tmp_path):
    path = _saved(tmp_path)
    sidecar_path(path).unlink()
    with pytest.raises(WeightFormatError, match="sidecar"):
        load_weights(path)


def test_corrupt_sidecar_raises(tmp_path):
    path = _saved(tmp_path)
    sidecar_path(path).write_text("{not json")
    with pytest.raises(WeightFormatError, match="JSON"):
        load_weights(path)


def test_non_object_sidecar_raises(tmp_path):
    path = _saved(tmp_path)
    sidecar_path(path).write_text("[1, 2]")
    with pytest.raises(WeightFormatError, match="object"):
        load_weights(path)


def test_duplicate_tensor_name_raises(tmp_path):
    path = tmp_path / "w.avnw"
    body = b""
    for _ in range(2):
        body += struct.pack("<H", 1) + b"a" + struct.pack("<B", 0) + struct.pack("<f", 1.0)
    path.write_bytes(b"AVNW" + struct.pack("<II", 1, 2) + body)
    sidecar_path(path).write_text("{}")
    with pytest.raises(WeightFormatError, match="duplicate"):
        load_weights(path)


def test_absurd_dims_raise(tmp_path):
    path = tmp_path / "w.avnw"
    body = struct.pack("<H", 1) + b"a" + struct.pack("<B", 2)
    body += struct.pack("<II", 0xFFFFFFFF, 0xFFFFFFFF)
    path.write_bytes(b"AVNW" + struct.pack("<II", 1, 1) + body)
    sidecar_path(path).write_text("{}")
    with pytest.raises(WeightFormatError, match="sanity cap"):
        load_weights(path)


def test_float64_input_stored_as_float32(tmp_path):
    path = tmp_path / "w.avnw"
    save_weights(path, {"a": np.asarray([1.0, 2.0], dtype=np.float64)}, META)
    loaded, _ = load_weights(path)
    assert loaded["a"].dtype == np.float32
