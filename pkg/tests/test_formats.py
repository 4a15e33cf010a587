import numpy as np
import pytest
from PIL import Image

from conftest import corrupt_variants
from gsctrl.errors import BadMagic, ChannelOutOfRange, GSError, HeaderMismatch, MissingFile
from gsctrl.field import init_field, load_field, save_field
from gsctrl.formats import channel_to_u8, export_channel_image, read_feature_map, write_feature_map
from gsctrl.splat import FeatureMap
from gsctrl.surface import SurfaceModel, load_surface, save_surface


def small_surface():
    rng = np.random.default_rng(0)
    return SurfaceModel(
        template_vertices=rng.normal(size=(4, 3)),
        faces=np.array([[0, 1, 2], [0, 2, 3]]),
        shape_basis=rng.normal(size=(4, 3, 2)),
        expr_basis=rng.normal(size=(4, 3, 1)),
        uv_coords=np.array([[[0, 0], [1, 0], [1, 1]], [[0, 0], [1, 1], [0, 1]]], dtype=np.float64),
    )


def small_map(dtype=np.float32):
    rng = np.random.default_rng(1)
    return FeatureMap(rng.uniform(-1, 1, (6, 8, 3)).astype(dtype), rng.uniform(0, 1, (6, 8)).astype(dtype))


def test_feature_map_round_trip(tmp_path):
    fmap = small_map()
    write_feature_map(fmap, tmp_path / "m.gsfm")
    back = read_feature_map(tmp_path / "m.gsfm")
    assert back.values.tobytes() == fmap.values.tobytes()
    assert back.alpha.tobytes() == fmap.alpha.tobytes()


def test_feature_map_float64_stored_as_float32(tmp_path):
    fmap = small_map(np.float64)
    write_feature_map(fmap, tmp_path / "m.gsfm")
    back = read_feature_map(tmp_path / "m.gsfm")
    assert np.array_equal(back.values, fmap.values.astype(np.float32))


def test_feature_map_layout_is_channel_major(tmp_path):
    fmap = small_map()
    write_feature_map(fmap, tmp_path / "m.gsfm")
    data = (tmp_path / "m.gsfm").read_bytes()
    hlen = int.from_bytes(data[8:12], "little")
    payload = np.frombuffer(data[12 + hlen:], dtype="<f4")
    assert np.array_equal(payload[: 6 * 8], fmap.values[:, :, 0].ravel())
    assert np.array_equal(payload[-6 * 8:], fmap.alpha.ravel())


def test_bad_magic(tmp_path):
    write_feature_map(small_map(), tmp_path / "m.gsfm")
    data = bytearray((tmp_path / "m.gsfm").read_bytes())
    data[:8] = b"GSFM0000"
    (tmp_path / "old.gsfm").write_bytes(bytes(data))
    with pytest.raises(BadMagic):
        read_feature_map(tmp_path / "old.gsfm")


def test_truncated_payload_names_byte_counts(tmp_path):
    write_feature_map(small_map(), tmp_path / "m.gsfm")
    data = (tmp_path / "m.gsfm").read_bytes()
    (tmp_path / "cut.gsfm").write_bytes(data[:-10])
    full = 4 * 6 * 8 * 4
    with pytest.raises(HeaderMismatch) as exc:
        read_feature_map(tmp_path / "cut.gsfm")
    assert str(full) in str(exc.value) and str(full - 10) in str(exc.value)


def test_missing_file(tmp_path):
    with pytest.raises(MissingFile):
        read_feature_map(tmp_path / "absent.gsfm")


def test_field_round_trip_bitwise(tmp_path):
    f = init_field(5, 3, seed=2, scale=0.01)
    f.raw_opacity[:] = np.random.default_rng(0).normal(size=(5, 5)) * 1e300
    save_field(f, tmp_path / "f.gsfd")
    back = load_field(tmp_path / "f.gsfd")
    for k in f.params():
        assert back.params()[k].tobytes() == f.params()[k].tobytes()


def test_surface_round_trip_bitwise(tmp_path):
    model = small_surface()
    save_surface(model, tmp_path / "s.gsrf")
    back = load_surface(tmp_path / "s.gsrf")
    for name in ("template_vertices", "shape_basis", "expr_basis", "uv_coords", "faces"):
        assert np.array_equal(getattr(back, name), getattr(model, name))
        assert getattr(back, name).tobytes() == getattr(model, name).tobytes()


@pytest.mark.parametrize("value,expected", [(-1.0, 0), (1.0, 255), (0.0, 128), (0.5, 191), (-3.0, 0), (7.0, 255)])
def test_channel_quantization(value, expected):
    assert channel_to_u8(np.array([value]))[0] == expected


def test_export_channel_image(tmp_path):
    values = np.zeros((2, 3, 2))
    values[0] = [[-1, 0], [0, 0], [1, 0]]
    values[1] = [[0.5, 0], [0, 0], [-0.5, 0]]
    fmap = FeatureMap(values, np.ones((2, 3)))
    export_channel_image(fmap, 0, tmp_path / "c0.png")
    img = Image.open(tmp_path / "c0.png")
    assert img.mode == "L"
    assert np.asarray(img).tolist() == [[0, 128, 255], [191, 128, 64]]


@pytest.mark.parametrize("channel", [2, -1])
def test_export_channel_out_of_range(tmp_path, channel):
    fmap = FeatureMap(np.zeros((2, 2, 2)), np.zeros((2, 2)))
    with pytest.raises(ChannelOutOfRange):
        export_channel_image(fmap, channel, tmp_path / "x.png")


def fuzz(tmp_path, data, reader, seed):
    outcomes = {"ok": 0, "typed": 0}
    for k, blob in enumerate(corrupt_variants(data, seed)):
        p = tmp_path / f"v{k}.bin"
        p.write_bytes(blob)
        try:
            reader(p)
        except GSError:
            outcomes["typed"] += 1
        else:
            outcomes["ok"] += 1
    return outcomes


def test_fuzz_feature_map(tmp_path):
    write_feature_map(small_map(), tmp_path / "m.gsfm")
    out = fuzz(tmp_path, (tmp_path / "m.gsfm").read_bytes(), read_feature_map, 0)
    assert out["ok"] + out["typed"] >= 100 and out["typed"] > 50


def test_fuzz_field(tmp_path):
    save_field(init_field(4, 2, seed=1), tmp_path / "f.gsfd")
    out = fuzz(tmp_path, (tmp_path / "f.gsfd").read_bytes(), load_field, 1)
    assert out["ok"] + out["typed"] >= 100 and out["typed"] > 50


def test_fuzz_surface(tmp_path):
    save_surface(small_surface(), tmp_path / "s.gsrf")
    out = fuzz(tmp_path, (tmp_path / "s.gsrf").read_bytes(), load_surface, 2)
    assert out["ok"] + out["typed"] >= 100 and out["typed"] > 50
