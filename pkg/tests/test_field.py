import inspect

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gsctrl.errors import InvalidDimension, ResolutionMismatch
from gsctrl.field import GaussianFieldUV, activate, embed, init_field, initial_scale, load_field, save_field, sigmoid
from gsctrl.splat import render_tiled
from gsctrl.surface import DeformedMesh, RigidPose, UVMapping, build_uv_mapping, deform
from gsctrl.views import look_at_camera


def test_init_deterministic():
    a, b = init_field(16, 3, seed=42), init_field(16, 3, seed=42)
    for k in a.params():
        assert np.array_equal(a.params()[k], b.params()[k])
    assert not np.array_equal(a.raw_feature, init_field(16, 3, seed=43).raw_feature)


def test_init_default_configuration(demo_model):
    f = init_field(scale=initial_scale(demo_model))
    assert f.resolution == 256 and f.channels == 8
    assert f.raw_feature.shape == (256, 256, 8)
    assert np.abs(f.raw_feature).max() <= 0.1
    assert np.all(f.raw_opacity == 0.0)
    assert np.all(f.raw_scale == np.log(0.7 * demo_model.median_edge_length()))


@pytest.mark.parametrize("res,ch", [(0, 8), (4, 0), (-1, 1)])
def test_init_rejects_bad_dimensions(res, ch):
    with pytest.raises(InvalidDimension):
        init_field(res, ch)


def test_activation_fixed_points():
    f = GaussianFieldUV(np.zeros((2, 2, 3)), np.zeros((2, 2)), np.zeros((2, 2)))
    feat, o, s = activate(f, (1, 0))
    assert np.array_equal(feat, np.zeros(3))
    assert o == 0.5 and s == 1.0


def test_activation_saturation_bounds():
    f = GaussianFieldUV(np.full((1, 1, 1), 10.0), np.full((1, 1), -20.0), np.zeros((1, 1)))
    feat, o, _ = activate(f, (0, 0))
    assert feat[0] == pytest.approx(0.9999999958776927, abs=1e-16)
    assert feat[0] < 1.0
    assert 0.0 < o < 1e-8


def test_sigmoid_monotone_toward_zero():
    x = -np.arange(0.0, 40.0, 0.5)
    y = sigmoid(x)
    assert np.all(np.diff(y) < 0)
    assert np.all(y > 0)


finite_raw = st.floats(-30, 30, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(feat=arrays(np.float64, (3, 3, 2), elements=st.floats(-18, 18)),
       opa=arrays(np.float64, (3, 3), elements=finite_raw),
       scale=arrays(np.float64, (3, 3), elements=st.floats(-30, 30)))
def test_activated_ranges(feat, opa, scale):
    f = GaussianFieldUV(feat, opa, scale)
    for i in range(3):
        for j in range(3):
            fe, o, s = activate(f, (i, j))
            assert np.all(np.abs(fe) < 1.0)
            assert 0.0 < o < 1.0
            assert s > 0.0


def single_texel_mapping(bary=(1.0, 0.0, 0.0)):
    face_id = np.array([[-1, 0], [-1, -1]])
    b = np.zeros((2, 2, 3))
    b[0, 1] = bary
    return UVMapping(2, face_id, b)


def test_embed_empty_mapping():
    mapping = UVMapping(2, np.full((2, 2), -1), np.zeros((2, 2, 3)))
    mesh = DeformedMesh(np.eye(3), np.array([[0, 1, 2]]))
    g = embed(init_field(2, 3), mesh, mapping)
    assert len(g) == 0
    assert g.features.shape == (0, 3)


def test_embed_single_corner_texel():
    mesh = DeformedMesh(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]]), np.array([[0, 1, 2]]))
    field = init_field(2, 3, seed=9)
    field.raw_opacity[0, 1] = 1.5
    field.raw_scale[0, 1] = -2.0
    g = embed(field, mesh, single_texel_mapping())
    assert len(g) == 1
    assert np.array_equal(g.positions[0], mesh.vertices[0])
    feat, o, s = activate(field, (0, 1))
    assert np.array_equal(g.features[0], feat)
    assert g.opacities[0] == o and g.scales[0] == s
    assert g.source_texel.tolist() == [1]


def test_embed_row_major_order(demo_model, demo_mapping32, demo_field32):
    g = embed(demo_field32, deform(demo_model, np.zeros(4), np.zeros(4)), demo_mapping32)
    assert len(g) == demo_mapping32.num_mapped
    assert np.all(np.diff(g.source_texel) > 0)


def test_embed_resolution_mismatch(demo_model, demo_mapping32):
    with pytest.raises(ResolutionMismatch):
        embed(init_field(16, 4), deform(demo_model, np.zeros(4), np.zeros(4)), demo_mapping32)


def test_attributes_invariant_under_deformation(demo_model, demo_mapping32, demo_field32):
    rng = np.random.default_rng(4)
    base = embed(demo_field32, deform(demo_model, np.zeros(4), np.zeros(4)), demo_mapping32)
    for _ in range(3):
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        q *= np.sign(np.linalg.det(q))
        mesh = deform(demo_model, rng.normal(size=4), rng.normal(size=4), RigidPose(q, rng.normal(size=3)))
        g = embed(demo_field32, mesh, demo_mapping32)
        assert np.array_equal(g.features, base.features)
        assert np.array_equal(g.opacities, base.opacities)
        assert np.array_equal(g.scales, base.scales)
        assert not np.array_equal(g.positions, base.positions)


def test_embed_is_camera_independent(demo_model, demo_mapping32, demo_field32):
    assert list(inspect.signature(embed).parameters) == ["field", "mesh", "mapping"]
    mesh = deform(demo_model, np.zeros(4), np.zeros(4))
    g = embed(demo_field32, mesh, demo_mapping32)
    snapshot = [a.copy() for a in (g.positions, g.scales, g.opacities, g.features)]
    for yaw in (-50.0, 0.0, 35.0):
        render_tiled(g, look_at_camera(yaw=yaw, image_size=24))
        g2 = embed(demo_field32, mesh, demo_mapping32)
        for a, b, c in zip(snapshot, (g.positions, g.scales, g.opacities, g.features),
                           (g2.positions, g2.scales, g2.opacities, g2.features)):
            assert np.array_equal(a, b) and np.array_equal(a, c)


def test_field_round_trip(tmp_path, demo_field32):
    demo_field32.raw_feature[0, 0, 0] = np.nextafter(0.1, 1.0)
    save_field(demo_field32, tmp_path / "f.gsfd")
    back = load_field(tmp_path / "f.gsfd")
    for k, v in demo_field32.params().items():
        assert back.params()[k].tobytes() == v.tobytes()


def test_field_rejects_inconsistent_shapes():
    with pytest.raises(InvalidDimension):
        GaussianFieldUV(np.zeros((2, 2, 1)), np.zeros((3, 3)), np.zeros((2, 2)))


def test_small_field_uses_demo_mapping(demo_model):
    mapping = build_uv_mapping(demo_model, 4)
    g = embed(init_field(4, 2), deform(demo_model, np.zeros(4), np.zeros(4)), mapping)
    assert len(g) == 16
