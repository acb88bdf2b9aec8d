"""Tests for skeleton layouts and Joint RoPE"""
import json

import torch
from django.test import SimpleTestCase

from motionflow.exceptions import FormatError, InvalidArgument, InvalidConfig

from .layout import GROUPS, layout_from_dict, layout_to_dict, pooled_layout, reference_layout
from .rope import RopeConfig, apply_rope, rope_angles, segment_dims, text_positions, token_positions


class ReferenceLayoutTestCase(SimpleTestCase):
    """Test the shipped 15-joint skeleton"""

    def setUp(self):
        self.layout = reference_layout()

    def test_structure(self):
        """Test joint count, root and derived depths"""
        self.assertEqual(len(self.layout), 15)
        self.assertEqual(self.layout.names[self.layout.root], 'pelvis')
        depth = {joint.name: joint.depth for joint in self.layout.joints}
        self.assertEqual(depth['pelvis'], 0)
        self.assertEqual(depth['head'], 2)
        self.assertEqual(depth['left_wrist'], 4)
        self.assertEqual(depth['right_ankle'], 3)

    def test_mirrored_pairs(self):
        """Test that symmetry pairs mirror across x with equal depth"""
        self.assertEqual(len(self.layout.symmetry_pairs), 6)
        for left, right in self.layout.symmetry_pairs:
            a, b = self.layout.joints[left], self.layout.joints[right]
            self.assertAlmostEqual(a.tpose_x, -b.tpose_x)
            self.assertEqual(a.depth, b.depth)
            self.assertGreater(a.tpose_x, 0)

    def test_pooling_groups_cover_every_joint(self):
        """Test that the group assignment is total and hits all six groups"""
        assignment = self.layout.group_assignment()
        self.assertEqual(len(assignment), 15)
        self.assertEqual(set(assignment), set(range(len(GROUPS))))

    def test_pooled_layout(self):
        """Test the six-joint latent skeleton"""
        pooled = pooled_layout(self.layout)
        self.assertEqual(pooled.names, list(GROUPS))
        self.assertEqual(pooled.names[pooled.root], 'pelvis')
        depth = {joint.name: joint.depth for joint in pooled.joints}
        self.assertEqual(depth, {
            'torso': 1, 'pelvis': 0, 'left_arm': 2, 'right_arm': 2, 'left_leg': 1, 'right_leg': 1,
        })
        pairs = {(pooled.names[a], pooled.names[b]) for a, b in pooled.symmetry_pairs}
        self.assertEqual(pairs, {('left_arm', 'right_arm'), ('left_leg', 'right_leg')})

    def test_dict_round_trip(self):
        """Test that a layout written to a dictionary reads back equal"""
        for layout in (self.layout, pooled_layout(self.layout)):
            with self.subTest(layout.name):
                self.assertEqual(layout_from_dict(json.loads(json.dumps(layout_to_dict(layout)))), layout)


class LayoutValidationTestCase(SimpleTestCase):
    """Test layout file validation"""

    def test_two_roots_rejected(self):
        """Test that a second root is a format error"""
        data = {'joints': [
            {'name': 'a', 'parent': None, 'tpose': [0, 0]},
            {'name': 'b', 'parent': None, 'tpose': [0, 1]},
        ]}
        with self.assertRaises(FormatError):
            layout_from_dict(data)

    def test_root_off_origin_rejected(self):
        """Test that the root must sit at the origin"""
        data = {'joints': [{'name': 'a', 'parent': None, 'tpose': [0.1, 0]}]}
        with self.assertRaises(FormatError):
            layout_from_dict(data)

    def test_bad_mirror_rejected(self):
        """Test that asymmetric symmetry pairs are rejected"""
        data = {
            'joints': [
                {'name': 'root', 'parent': None, 'tpose': [0, 0]},
                {'name': 'l', 'parent': 'root', 'tpose': [0.2, 0.1]},
                {'name': 'r', 'parent': 'root', 'tpose': [-0.3, 0.1]},
            ],
            'symmetry': [['l', 'r']],
        }
        with self.assertRaises(FormatError):
            layout_from_dict(data)

    def test_unknown_parent_rejected(self):
        """Test that a dangling parent name is a format error"""
        data = {'joints': [{'name': 'a', 'parent': 'ghost', 'tpose': [0, 0]}]}
        with self.assertRaises(FormatError):
            layout_from_dict(data)


class SegmentDimsTestCase(SimpleTestCase):
    """Test the four-way head split"""

    def test_examples(self):
        """Test the documented splits"""
        self.assertEqual(segment_dims(64), [32, 8, 8, 16])
        self.assertEqual(segment_dims(16), [8, 2, 2, 4])
        self.assertEqual(sum(segment_dims(96)), 96)

    def test_indivisible(self):
        """Test that head sizes not divisible by 16 are rejected"""
        for head_dim in (20, 8, 0, -16):
            with self.assertRaises(InvalidConfig):
                segment_dims(head_dim)


class TokenPositionsTestCase(SimpleTestCase):
    """Test token coordinates"""

    def setUp(self):
        self.layout = reference_layout()

    def test_examples(self):
        """Test unscaled and scaled time and copied spatial fields"""
        J = len(self.layout)
        full = token_positions(self.layout, 8, 1.0)
        self.assertEqual(tuple(full.shape), (8 * J, 4))
        self.assertEqual(full[5 * J].tolist(), [5, 0, 0, 0])
        half = token_positions(self.layout, 8, 0.5)
        self.assertEqual(half[3 * J].tolist(), [6, 0, 0, 0])
        wrist = self.layout.index('left_wrist')
        self.assertEqual(full[wrist].tolist(), [0, 0.7, 0.45, 4])

    def test_scale_out_of_range(self):
        """Test that scales outside (0, 1] raise"""
        for scale in (0, 1.5, -0.5):
            with self.assertRaises(InvalidArgument):
                token_positions(self.layout, 4, scale)

    def test_text_positions(self):
        """Test word-index positions and the disabled variant"""
        self.assertEqual(text_positions(3)[:, 0].tolist(), [0, 1, 2])
        self.assertEqual(float(text_positions(3, enabled=False).abs().sum()), 0.0)


class ApplyRopeTestCase(SimpleTestCase):
    """Test the rotary encoding itself"""

    def setUp(self):
        self.cfg = RopeConfig(head_dim=64)
        self.gen = torch.Generator().manual_seed(11)

    def randn(self, *shape):
        return torch.randn(*shape, generator=self.gen, dtype=torch.float64)

    def test_zero_positions_identity(self):
        """Test that zero positions leave the input unchanged"""
        x = self.randn(5, 2, 64)
        out = apply_rope(x, torch.zeros(5, 4, dtype=torch.float64), self.cfg)
        self.assertTrue(torch.allclose(out, x, atol=1e-12))

    def test_norm_preserved(self):
        """Test that rotations keep every head's norm"""
        x = self.randn(30, 4, 64)
        positions = self.randn(30, 4) * 10
        out = apply_rope(x, positions, self.cfg)
        diff = (out.norm(dim=-1) - x.norm(dim=-1)).abs().max().item()
        self.assertLessEqual(diff, 1e-6)

    def test_relative_shift_invariance(self):
        """Test that logits only depend on coordinate differences, per coordinate"""
        worst = 0.0
        for trial in range(1000):
            q, k = self.randn(1, 1, 64), self.randn(1, 1, 64)
            p, p2 = self.randn(1, 4) * 5, self.randn(1, 4) * 5
            shift = torch.zeros(1, 4, dtype=torch.float64)
            shift[0, trial % 4] = self.randn(1).item() * 5
            before = (apply_rope(q, p, self.cfg) * apply_rope(k, p2, self.cfg)).sum()
            after = (apply_rope(q, p + shift, self.cfg) * apply_rope(k, p2 + shift, self.cfg)).sum()
            worst = max(worst, abs(before.item() - after.item()))
        self.assertLessEqual(worst, 1e-6)

    def test_composability(self):
        """Test that rotating by p then q equals rotating by p + q"""
        x = self.randn(6, 3, 64)
        p, q = self.randn(6, 4), self.randn(6, 4)
        twice = apply_rope(apply_rope(x, p, self.cfg), q, self.cfg)
        once = apply_rope(x, p + q, self.cfg)
        self.assertLessEqual((twice - once).abs().max().item(), 1e-6)

    def test_mirrored_depth_rotation_is_identity(self):
        """Test that mirrored joints get the same depth-segment rotation"""
        layout = reference_layout()
        positions = token_positions(layout, 1, 1.0)
        angles = rope_angles(positions, self.cfg)
        d_t, d_x, d_y, d_depth = self.cfg.segments
        start = (d_t + d_x + d_y) // 2
        depth_angles = angles[:, start:start + d_depth // 2]
        for left, right in layout.symmetry_pairs:
            self.assertTrue(torch.equal(depth_angles[left], depth_angles[right]))

    def test_batched_input(self):
        """Test a leading batch dimension"""
        x = self.randn(2, 7, 4, 64)
        positions = self.randn(7, 4)
        out = apply_rope(x, positions, self.cfg)
        self.assertTrue(torch.allclose(out[1], apply_rope(x[1], positions, self.cfg)))

    def test_shape_mismatch(self):
        """Test wrong head size and wrong position count"""
        with self.assertRaises(InvalidArgument):
            apply_rope(self.randn(3, 1, 32), self.randn(3, 4), self.cfg)
        with self.assertRaises(InvalidArgument):
            apply_rope(self.randn(3, 1, 64), self.randn(4, 4), self.cfg)
