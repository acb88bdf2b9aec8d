"""Tests for metrics, semantic rules, the noise diagnostic and the retention study"""
import math

import numpy as np
import torch
from django.test import SimpleTestCase

from corpus.kinematics import generate_motion
from corpus.programs import PROGRAM_NAMES, get_program
from flows.hierarchy import FlowEndpoints, stage_endpoints
from flows.schedule import make_schedule
from motionflow.exceptions import DistanceUndefined, InvalidArgument

from .diagnostics import CountingNoiseSource, noise_consistency_diagnostic
from .features import feature_set, pose_features
from .metrics import diversity, frechet_pose_distance
from .retention import retention_study
from .rules import check_label, semantic_accuracy, sign_changes


def ground_truth(n_per_program, seed=0, frames=(64, 96)):
    rng = np.random.default_rng(seed)
    samples = []
    for name in PROGRAM_NAMES:
        program = get_program(name)
        for _ in range(n_per_program):
            params = program.sample_params(rng)
            length = int(rng.integers(frames[0], frames[1] + 1))
            motion = generate_motion(program, params, length, int(rng.integers(2**31)))
            samples.append((motion, {'program': name, 'params': params}))
    return samples


class FrechetTestCase(SimpleTestCase):
    """Test the Fréchet pose distance"""

    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_identical_sets(self):
        """Test that a set is at distance zero from itself"""
        a = self.rng.normal(size=(50, 4))
        self.assertLessEqual(frechet_pose_distance(a, a), 1e-8)

    def test_unit_mean_shift(self):
        """Test that N(0,1) against N(1,1) approaches 1"""
        a = self.rng.normal(0.0, 1.0, size=(20000, 1))
        b = self.rng.normal(1.0, 1.0, size=(20000, 1))
        self.assertAlmostEqual(frechet_pose_distance(a, b), 1.0, delta=0.05)

    def test_shift_adds_squared_norm(self):
        """Test that shifting a set by delta adds |delta|^2"""
        a = self.rng.normal(size=(200, 3))
        b = self.rng.normal(size=(200, 3))
        delta = np.array([0.5, -1.0, 2.0])
        base = frechet_pose_distance(a, a)
        self.assertAlmostEqual(frechet_pose_distance(a, a + delta), base + delta @ delta, places=6)
        # matched covariances only up to sampling noise when the sets differ
        gain = frechet_pose_distance(a, b + delta) - frechet_pose_distance(a, b)
        self.assertGreater(gain, 0.0)

    def test_symmetry(self):
        """Test that d(A, B) == d(B, A)"""
        a = self.rng.normal(size=(40, 5))
        b = self.rng.normal(0.3, 2.0, size=(60, 5))
        self.assertAlmostEqual(frechet_pose_distance(a, b), frechet_pose_distance(b, a), delta=1e-8)

    def test_degenerate_sets(self):
        """Test that fewer than two items or mismatched widths are undefined"""
        with self.assertRaises(DistanceUndefined):
            frechet_pose_distance(self.rng.normal(size=(1, 3)), self.rng.normal(size=(5, 3)))
        with self.assertRaises(DistanceUndefined):
            frechet_pose_distance(self.rng.normal(size=(5, 3)), self.rng.normal(size=(5, 4)))

    def test_motions_are_featurized(self):
        """Test that lists of motions go through the pose features"""
        motions = [m for m, _ in ground_truth(2)]
        self.assertEqual(feature_set(motions).shape, (12, 180))
        self.assertEqual(pose_features(motions[0]).shape, (180,))
        self.assertLessEqual(frechet_pose_distance(motions, motions), 1e-8)


class DiversityTestCase(SimpleTestCase):
    """Test the diversity metric"""

    def test_identical_items(self):
        """Test that identical items have zero diversity"""
        self.assertEqual(diversity(np.ones((10, 3))), 0.0)

    def test_seeded(self):
        """Test that the same seed gives the same value"""
        items = np.random.default_rng(1).normal(size=(30, 4))
        self.assertEqual(diversity(items, seed=7), diversity(items, seed=7))

    def test_duplicating_the_set(self):
        """Test that duplicating the set keeps the expected value"""
        items = np.random.default_rng(2).normal(size=(20, 4))
        doubled = np.concatenate([items, items])
        once = np.mean([diversity(items, seed=s) for s in range(40)])
        twice = np.mean([diversity(doubled, seed=s) for s in range(40)])
        self.assertAlmostEqual(once, twice, delta=0.05 * once)

    def test_too_few_items(self):
        """Test that a single item is an invalid argument"""
        with self.assertRaises(InvalidArgument):
            diversity(np.ones((1, 3)))


class RuleTestCase(SimpleTestCase):
    """Test the semantic rules"""

    def test_ground_truth_passes(self):
        """Test that every program passes its own rule on 1000 generated motions"""
        samples = ground_truth(167, seed=3)[:1000]
        failures = [label for motion, label in samples if not check_label(motion, label)]
        self.assertEqual(failures, [])

    def test_walks_are_not_turns(self):
        """Test that walk_forward motions labeled as turns fail"""
        samples = [
            (motion, {'program': 'turn', 'params': {'direction': 'left', 'angle': math.pi / 2}})
            for motion, label in ground_truth(20, seed=4) if label['program'] == 'walk_forward'
        ]
        self.assertLessEqual(semantic_accuracy(samples), 0.05)

    def test_wrong_side_arm(self):
        """Test that raising the left arm does not pass for the right arm"""
        program = get_program('raise_arm')
        params = {'side': 'left', 'amplitude': 0.9}
        motion = generate_motion(program, params, 64, 0)
        self.assertTrue(check_label(motion, {'program': 'raise_arm', 'params': params}))
        self.assertFalse(check_label(motion, {'program': 'raise_arm', 'params': dict(params, side='right')}))

    def test_sign_changes(self):
        """Test the oscillation counter"""
        self.assertEqual(sign_changes(np.sin(np.linspace(0, 4 * math.pi, 200))), 4)
        self.assertEqual(sign_changes(np.linspace(0, 1, 10)), 1)

    def test_invalid_inputs(self):
        """Test that empty samples and unknown programs are rejected"""
        with self.assertRaises(InvalidArgument):
            semantic_accuracy([])
        with self.assertRaises(InvalidArgument):
            check_label(np.zeros((10, 15, 6)), {'program': 'dance', 'params': {}})


class DiagnosticTestCase(SimpleTestCase):
    """Test the noise-consistency diagnostic"""

    def setUp(self):
        self.sched = make_schedule([1 / 3, 2 / 3, 1.0], [0.0, 0.4, 0.7, 1.0])

    @staticmethod
    def random_field(x, t, k, cond):
        return torch.tanh(x) * (1.0 + t) - 0.3 * k

    def test_consistent_rule_is_reproducible(self):
        """Test that consistent renoising reproduces itself with no draws after the initial noise"""
        report = noise_consistency_diagnostic(self.random_field, self.sched, [0, 1, 2], 4, (12, 6, 4))
        self.assertEqual(report.consistent_transition_gap, 0.0)
        self.assertEqual(report.consistent_fresh_draws, 0)

    def test_naive_rule_drifts(self):
        """Test that fresh renoising makes two runs from the same noise disagree"""
        report = noise_consistency_diagnostic(self.random_field, self.sched, [0, 1], 4, (12, 6, 4))
        self.assertGreater(report.naive_transition_gap, 0.0)
        self.assertGreater(report.cross_rule_gap, 0.0)
        self.assertEqual(report.naive_fresh_draws, 2 * 2 * (self.sched.K - 1))

    def test_oracle_reaches_target_only_with_consistent_rule(self):
        """Test that with an oracle field only the consistent rule lands on x1"""
        shape = (12, 6, 4)
        x1 = torch.randn(*shape, generator=torch.Generator().manual_seed(9), dtype=torch.float64)
        # the oracle needs the run's own x0, which is the first draw of the same seed
        x0 = CountingNoiseSource(5).randn(*shape, dtype=torch.float64)
        ep = FlowEndpoints(x0, x1)

        def oracle(x, t, k, cond):
            start, end = stage_endpoints(ep, self.sched, k)
            return end - start

        report = noise_consistency_diagnostic(oracle, self.sched, [5], 3, shape, target=x1)
        self.assertLessEqual(report.consistent_terminal_error, 1e-9)
        self.assertGreater(report.naive_terminal_error, 1e-3)

    def test_single_stage_rejected(self):
        """Test that a one-stage schedule is an invalid argument"""
        with self.assertRaises(InvalidArgument):
            noise_consistency_diagnostic(self.random_field, make_schedule([1.0]), [0], 2, (4, 6, 4))

    def test_counting_source(self):
        """Test that the noise source counts draws and is seeded"""
        a, b = CountingNoiseSource(3), CountingNoiseSource(3)
        self.assertTrue(torch.equal(a.randn(5), b.randn(5)))
        a.randn(2, 2)
        self.assertEqual((a.draws, b.draws), (2, 1))


class RetentionTestCase(SimpleTestCase):
    """Test the downsampling retention study"""

    def test_ground_truth_retention(self):
        """Test full accuracy at ratio 1 and at most five points lost at ratio 0.2"""
        table = retention_study(ground_truth(20, seed=6))
        self.assertEqual(list(table.columns), ['ratio', 'accuracy', 'n'])
        self.assertEqual(len(table), 5)
        accuracy = dict(zip(table['ratio'], table['accuracy']))
        self.assertEqual(accuracy[1.0], 1.0)
        self.assertGreaterEqual(accuracy[0.2], accuracy[1.0] - 0.05)
        self.assertTrue((table['n'] == 120).all())

    def test_empty(self):
        """Test that an empty sample list is rejected"""
        with self.assertRaises(InvalidArgument):
            retention_study([])
