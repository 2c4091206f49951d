import math

import numpy as np
import pytest

from expressive_flow.geometry import Pose, express_in_frame
from expressive_flow.retarget import (
    FaceBlend,
    FaceDofs,
    RetargetConfig,
    map_face,
    map_hand,
    map_head,
)


class TestFaceBlend:
    def test_clamps_out_of_range(self):
        b = FaceBlend(c_eye=1.7, d_lip=-0.3)
        assert b.c_eye == 1.0
        assert b.d_lip == 0.0

    def test_gaze_must_be_finite(self):
        with pytest.raises(ValueError):
            FaceBlend(theta_x=math.nan)

    def test_wire_roundtrip(self):
        b = FaceBlend(0.1, 0.2, 0.3, 0.4, -0.5, 0.6)
        assert FaceBlend.from_vec(b.to_vec()) == b


class TestFaceDofs:
    def test_strict_rejects_crossing(self):
        with pytest.raises(ValueError):
            FaceDofs(vertax_low_y=0.5, vertax_up_y=0.0)

    def test_strict_rejects_scale(self):
        with pytest.raises(ValueError):
            FaceDofs(s_eye=0.05)

    def test_clamped_resolves_crossing(self):
        d = FaceDofs.clamped(vertax_low_y=0.9, vertax_up_y=-0.2, s_eye=3.0, p_eye_x=-4)
        assert d.vertax_low_y == -0.2 and d.vertax_up_y == 0.9
        assert d.s_eye == 1.0 and d.p_eye_x == -1.0

    def test_wire_roundtrip(self):
        d = FaceDofs(-0.2, 0.4, 0.1, -0.5, 0.7, 0.3, -0.9)
        assert np.array_equal(FaceDofs.from_vec(d.to_vec()).to_vec(), d.to_vec())


class TestMapHead:
    def test_discards_translation_keeps_rotation(self):
        p = Pose((1, 2, 3), (0, 0, 0.5))
        out = map_head(p)
        assert np.array_equal(out.position, np.zeros(3))
        assert np.array_equal(out.rotvec, p.rotvec)

    def test_identity(self):
        assert map_head(Pose.identity()).allclose(Pose.identity())

    def test_pure_translation_maps_to_identity(self):
        assert map_head(Pose((5, 0, 0))).allclose(Pose.identity())

    def test_idempotent(self):
        p = Pose((0.3, -0.1, 0.2), (0.4, 0.2, -0.1))
        once = map_head(p)
        assert map_head(once).allclose(once, tol=1e-15)


class TestMapHand:
    def test_scales_head_frame_position(self):
        head = Pose.identity()
        controller = Pose((0.2, 0.0, 0.3))
        out = map_hand(controller, head, RetargetConfig(scale=1.5))
        assert np.allclose(out.position, (0.3, 0.0, 0.45), atol=1e-12)

    def test_coincident_with_head(self):
        head = Pose((0.1, 0.5, 0.2), (0.1, 0.0, 0.3))
        out = map_hand(head, head)
        assert np.allclose(out.position, 0.0, atol=1e-12)

    def test_identity_config_passthrough(self):
        p = Pose((0.4, -0.2, 0.1), (0.0, 0.3, 0.0))
        out = map_hand(p, Pose.identity(), RetargetConfig(scale=1.0))
        assert out.allclose(p, tol=1e-12)

    def test_orientation_unscaled(self):
        rng = np.random.default_rng(8)
        head = Pose(rng.uniform(-1, 1, 3), (0.2, -0.1, 0.4))
        controller = Pose(rng.uniform(-1, 1, 3), (0.0, 0.7, 0.1))
        rel = express_in_frame(controller, head)
        out = map_hand(controller, head, RetargetConfig(scale=2.5))
        assert np.allclose(out.rotvec, rel.rotvec, atol=1e-12)

    def test_position_linear_in_scale(self):
        head = Pose((0.1, 0.2, 0.0), (0.0, 0.0, 0.8))
        controller = Pose((0.5, -0.3, 0.4), (0.1, 0.0, 0.0))
        one = map_hand(controller, head, RetargetConfig(scale=1.0))
        two = map_hand(controller, head, RetargetConfig(scale=2.0))
        assert np.allclose(two.position, 2.0 * one.position, atol=1e-12)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RetargetConfig(scale=0.0)
        with pytest.raises(ValueError):
            RetargetConfig(theta_max=-1.0)


class TestMapFace:
    def test_neutral(self):
        d = map_face(FaceBlend())
        assert d.to_vec() == pytest.approx([0, 0, 0, 0, 1, 0, 0], abs=1e-12)

    def test_eye_closedness_scales_eye(self):
        assert map_face(FaceBlend(c_eye=1.0)).s_eye == pytest.approx(0.1, abs=1e-12)

    def test_chin_raise_rotations(self):
        d = map_face(FaceBlend(h_chin=1.0, h_brow=0.0))
        assert d.r_eye == pytest.approx(math.pi / 6, abs=1e-12)
        assert d.r_ear == pytest.approx(-math.pi / 2, abs=1e-12)

    def test_gaze_clamp_saturates(self):
        cfg = RetargetConfig()
        d = map_face(FaceBlend(theta_x=2 * cfg.theta_max), cfg)
        assert d.p_eye_x == pytest.approx(-1.0, abs=1e-12)

    def test_gaze_linear_inside_clamp(self):
        cfg = RetargetConfig()
        d = map_face(FaceBlend(theta_y=0.5 * cfg.theta_max), cfg)
        assert d.p_eye_y == pytest.approx(-0.5, abs=1e-12)

    def test_lip_dimple_raises_upper_vertex(self):
        d = map_face(FaceBlend(d_lip=0.8))
        assert d.vertax_low_y == pytest.approx(0.0, abs=1e-12)
        assert d.vertax_up_y == pytest.approx(0.8, abs=1e-12)

    def test_anti_crossing_exhaustive_grid(self):
        # brute-force oracle over (d_lip, h_chin, h_brow) in {0, .25, ..., 1}^3
        grid = np.linspace(0.0, 1.0, 5)
        for d_lip in grid:
            for h_chin in grid:
                for h_brow in grid:
                    d = map_face(FaceBlend(d_lip=d_lip, h_chin=h_chin, h_brow=h_brow))
                    raw_low, raw_up = d_lip, -(h_chin + h_brow) / 2
                    assert d.vertax_low_y <= d.vertax_up_y
                    assert d.vertax_low_y == pytest.approx(min(raw_low, raw_up), abs=1e-12)
                    assert d.vertax_up_y == pytest.approx(max(raw_low, raw_up), abs=1e-12)

    def test_invariants_over_dense_grid(self):
        cfg = RetargetConfig()
        blends = np.arange(0.0, 1.0 + 1e-9, 0.05)
        gazes = np.linspace(-2 * cfg.theta_max, 2 * cfg.theta_max, 9)
        # blend channels paired coarsely to keep the grid tractable
        for c_eye in blends:
            for d_lip in blends[::4]:
                for h_chin in blends[::4]:
                    for h_brow in blends[::4]:
                        for tx in gazes[::4]:
                            for ty in gazes[::4]:
                                d = map_face(FaceBlend(c_eye, d_lip, h_brow, h_chin, tx, ty), cfg)
                                assert d.vertax_low_y <= d.vertax_up_y
                                assert 0.1 <= d.s_eye <= 1.0
                                assert -1.0 <= d.p_eye_x <= 1.0
                                assert -1.0 <= d.p_eye_y <= 1.0

    def test_deterministic_bit_identical(self):
        b = FaceBlend(0.3, 0.6, 0.2, 0.9, 0.1, -0.2)
        v1 = map_face(b).to_vec()
        v2 = map_face(b).to_vec()
        assert np.array_equal(v1, v2)
