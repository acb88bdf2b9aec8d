"""Tests for resampling, schedules and the hierarchical flow"""
import math
import random

import torch
from django.test import SimpleTestCase

from motionflow.exceptions import (
    DegenerateTransition, IntegrationFailure, InvalidArgument, InvalidSchedule,
)

from .hierarchy import (
    FlowEndpoints, GuidanceConfig, SamplingTrace, cfg_velocity, cross_scale_transition,
    hfm_loss, hierarchical_sample, integrate_stage, stage_endpoints, training_sample,
)
from .resample import resample, resample_to, resampled_length
from .schedule import PRESETS, make_schedule, preset_schedule


def seq(*values):
    return torch.tensor(values, dtype=torch.float64)


def oracle(ep, sched):
    """Velocity field that returns the exact stage displacement."""
    def vfn(x, t, k, cond):
        start, end = stage_endpoints(ep, sched, k)
        return end - start
    return vfn


def random_schedule(rng, K):
    scales = sorted(rng.sample(range(1, 100), K))
    scales = [s / 100 for s in scales]
    if rng.random() < 0.5:
        scales[-1] = 1.0
    cuts = sorted(rng.sample(range(1, 1000), K - 1))
    times = [0.0] + [c / 1000 for c in cuts] + [1.0]
    return make_schedule(scales, times)


class ResampledLengthTestCase(SimpleTestCase):
    """Test the output-length rule"""

    def test_examples(self):
        """Test that lengths round half away from zero and never drop below 1"""
        self.assertEqual(resampled_length(4, 0.5), 2)
        self.assertEqual(resampled_length(4, 1.0), 4)
        self.assertEqual(resampled_length(100, 1 / 3), 33)
        self.assertEqual(resampled_length(5, 0.5), 3)
        self.assertEqual(resampled_length(3, 0.01), 1)

    def test_invalid_arguments(self):
        """Test that non-positive lengths and ratios are rejected"""
        for length, ratio in [(0, 0.5), (-2, 0.5), (4, 0), (4, -1), (4, float('nan'))]:
            with self.assertRaises(InvalidArgument):
                resampled_length(length, ratio)


class ResampleTestCase(SimpleTestCase):
    """Test align-corners linear resampling"""

    def test_identity(self):
        """Test that a ratio of 1 returns the input unchanged"""
        x = torch.randn(7, 3, dtype=torch.float64)
        self.assertTrue(torch.equal(resample(x, 1), x))

    def test_downsample_and_upsample_examples(self):
        """Test the documented small examples"""
        self.assertTrue(torch.allclose(resample(seq(0, 2, 4, 6), 0.5), seq(0, 6)))
        self.assertTrue(torch.allclose(resample(seq(0, 6), 2), seq(0, 2, 4, 6)))

    def test_single_frame_samples_midpoint(self):
        """Test that a one-frame output sits at the interval midpoint"""
        out = resample_to(seq(0, 2, 4, 6), 1)
        self.assertTrue(torch.allclose(out, seq(3)))

    def test_affine_sequences_survive_down_then_up(self):
        """Test that affine ramps are reproduced exactly after down- then upsampling"""
        i = torch.arange(30, dtype=torch.float64)
        x = torch.stack([2.5 * i - 1, -0.5 * i + 4], dim=1)
        for r in (0.2, 1 / 3, 0.5, 0.9):
            down = resample(x, r)
            back = resample_to(down, 30)
            self.assertTrue(torch.allclose(back, x, atol=1e-10), msg=f'r={r}')

    def test_linearity(self):
        """Test that resampling is linear"""
        x = torch.randn(17, 4, dtype=torch.float64)
        y = torch.randn(17, 4, dtype=torch.float64)
        for r in (0.3, 0.7, 1.6):
            lhs = resample(2.0 * x - 3.0 * y, r)
            rhs = 2.0 * resample(x, r) - 3.0 * resample(y, r)
            self.assertLess((lhs - rhs).abs().max().item(), 1e-12)

    def test_outputs_stay_within_channel_bounds(self):
        """Test that every output is a convex combination of source frames"""
        x = torch.randn(23, 5, dtype=torch.float64)
        for r in (0.25, 0.6, 2.3):
            out = resample(x, r)
            self.assertTrue((out >= x.min(0).values - 1e-12).all())
            self.assertTrue((out <= x.max(0).values + 1e-12).all())

    def test_time_dim(self):
        """Test resampling along a non-leading dimension"""
        x = torch.randn(2, 12, 6, 3)
        out = resample(x, 0.5, dim=1)
        self.assertEqual(tuple(out.shape), (2, 6, 6, 3))
        self.assertTrue(torch.allclose(out[:, 0], x[:, 0]))
        self.assertTrue(torch.allclose(out[:, -1], x[:, -1]))

    def test_non_finite_payload_rejected(self):
        """Test that NaN input raises"""
        with self.assertRaises(InvalidArgument):
            resample(seq(0, float('nan'), 1), 0.5)


class ScheduleTestCase(SimpleTestCase):
    """Test schedule validation and presets"""

    def test_uniform_default_times(self):
        """Test that omitted times default to k/K"""
        sched = make_schedule([1 / 3, 2 / 3, 1])
        self.assertEqual(sched.K, 3)
        for got, want in zip(sched.times, [0, 1 / 3, 2 / 3, 1]):
            self.assertAlmostEqual(got, want)

    def test_single_stage(self):
        """Test the vanilla flow-matching schedule"""
        sched = make_schedule([1])
        self.assertEqual(sched.K, 1)
        self.assertEqual(sched.times, (0.0, 1.0))

    def test_fraction_strings(self):
        """Test that scales may be written as fractions"""
        sched = make_schedule(['1/3', '2/3', '1'])
        self.assertAlmostEqual(sched.scales[0], 1 / 3)

    def test_invalid_schedules(self):
        """Test monotonicity and bound violations"""
        bad = [
            ([2 / 3, 1 / 3, 1], None),
            ([], None),
            ([0.5, 1.2], None),
            ([0, 1], None),
            ([0.5, 1], [0, 1]),
            ([0.5, 1], [0.1, 0.5, 1]),
            ([0.5, 1], [0, 0.7, 0.6]),
            (['a'], None),
        ]
        for scales, times in bad:
            with self.assertRaises(InvalidSchedule, msg=f'{scales} {times}'):
                make_schedule(scales, times)

    def test_stage_table_lengths(self):
        """Test latent lengths for the three-stage schedule at l=18"""
        sched = preset_schedule('three_stage')
        self.assertEqual([row['length'] for row in sched.stage_table(18)], [6, 12, 18])

    def test_presets_are_valid(self):
        """Test that every preset builds"""
        for name in PRESETS:
            self.assertGreaterEqual(preset_schedule(name).K, 1)
        with self.assertRaises(InvalidSchedule):
            preset_schedule('five_stage')


class StageEndpointsTestCase(SimpleTestCase):
    """Test the per-stage straight paths"""

    def setUp(self):
        self.ep = FlowEndpoints(x0=seq(1, 1, 1, 1), x1=seq(0, 2, 4, 6))
        self.sched = make_schedule([0.5, 1], [0, 0.5, 1])

    def test_first_stage_starts_at_noise(self):
        """Test that stage 1 starts at the downsampled noise"""
        ep = FlowEndpoints(x0=torch.randn(10, 3), x1=torch.randn(10, 3))
        start, _ = stage_endpoints(ep, self.sched, 1)
        self.assertTrue(torch.allclose(start, resample(ep.x0, 0.5)))

    def test_second_stage_example(self):
        """Test the worked two-stage example"""
        start, end = stage_endpoints(self.ep, self.sched, 2)
        self.assertTrue(torch.allclose(start, seq(0.5, 1.5, 2.5, 3.5)))
        self.assertTrue(torch.allclose(end, seq(0, 2, 4, 6)))

    def test_out_of_range_stage(self):
        """Test that stage indices outside [1, K] raise"""
        for k in (0, 3):
            with self.assertRaises(InvalidArgument):
                stage_endpoints(self.ep, self.sched, k)

    def test_training_sample_example(self):
        """Test a point in the middle of stage 2"""
        sample = training_sample(self.ep, self.sched, 2, 0.75)
        self.assertAlmostEqual(sample.tau, 0.5)
        self.assertTrue(torch.allclose(sample.point, seq(0.25, 1.75, 3.25, 4.75)))

    def test_training_sample_endpoints(self):
        """Test tau at both ends of a stage"""
        start, end = stage_endpoints(self.ep, self.sched, 2)
        left = training_sample(self.ep, self.sched, 2, 0.5)
        right = training_sample(self.ep, self.sched, 2, 1.0)
        self.assertEqual(left.tau, 0)
        self.assertEqual(right.tau, 1)
        self.assertTrue(torch.allclose(left.point, start))
        self.assertTrue(torch.allclose(right.point, end))
        self.assertTrue(torch.allclose(left.target, end - start))

    def test_training_sample_outside_interval(self):
        """Test that t outside the stage interval raises"""
        with self.assertRaises(InvalidArgument):
            training_sample(self.ep, self.sched, 2, 0.25)
        with self.assertRaises(InvalidArgument):
            training_sample(self.ep, self.sched, 1, torch.tensor([0.1, 0.7]))

    def test_path_is_linear_inside_a_stage(self):
        """Test that points at tau and 1 - tau average to the stage midpoint"""
        ep = FlowEndpoints(x0=torch.randn(20, 4, dtype=torch.float64),
                           x1=torch.randn(20, 4, dtype=torch.float64))
        sched = make_schedule([1 / 3, 2 / 3, 1])
        for k in sched.stages:
            t_prev, t_k = sched.interval(k)
            start, end = stage_endpoints(ep, sched, k)
            a = training_sample(ep, sched, k, sched.time_at(0.2, k)).point
            b = training_sample(ep, sched, k, sched.time_at(0.8, k)).point
            self.assertTrue(torch.allclose((a + b) / 2, (start + end) / 2, atol=1e-12))

    def test_batched_times(self):
        """Test per-sample times broadcast over a batch"""
        ep = FlowEndpoints(x0=torch.randn(3, 8, 2), x1=torch.randn(3, 8, 2), time_dim=1)
        sched = make_schedule([0.5, 1])
        t = torch.tensor([0.5, 0.75, 1.0])
        sample = training_sample(ep, sched, 2, t)
        start, end = stage_endpoints(ep, sched, 2)
        self.assertTrue(torch.allclose(sample.point[0], start[0]))
        self.assertTrue(torch.allclose(sample.point[2], end[2]))


class ReductionTestCase(SimpleTestCase):
    """Test that one full-scale stage is plain flow matching"""

    def test_reduction_to_vanilla_flow_matching(self):
        """Test points, targets and loss against the single-stage formulas"""
        sched = make_schedule([1])
        gen = torch.Generator().manual_seed(0)
        worst = 0.0
        for _ in range(1000):
            x0 = torch.randn(6, 3, generator=gen, dtype=torch.float64)
            x1 = torch.randn(6, 3, generator=gen, dtype=torch.float64)
            t = torch.rand((), generator=gen, dtype=torch.float64).item()
            ep = FlowEndpoints(x0=x0, x1=x1)
            start, end = stage_endpoints(ep, sched, 1)
            sample = training_sample(ep, sched, 1, t)
            pred = torch.randn(6, 3, generator=gen, dtype=torch.float64)
            worst = max(
                worst,
                (start - x0).abs().max().item(),
                (end - x1).abs().max().item(),
                (sample.point - ((1 - t) * x0 + t * x1)).abs().max().item(),
                (sample.target - (x1 - x0)).abs().max().item(),
                abs(hfm_loss(pred, sample.target).item() - ((pred - (x1 - x0)) ** 2).mean().item()),
            )
        self.assertLessEqual(worst, 1e-12)


class LossTestCase(SimpleTestCase):
    """Test the regression loss"""

    def test_examples(self):
        """Test mean-square reduction"""
        target = torch.randn(4, dtype=torch.float64)
        self.assertEqual(hfm_loss(target, target).item(), 0)
        self.assertAlmostEqual(hfm_loss(target + 1, target).item(), 1)
        self.assertAlmostEqual(hfm_loss(target + seq(2, 0, 0, 0), target).item(), 1)

    def test_shape_mismatch(self):
        """Test that mismatched shapes raise"""
        with self.assertRaises(InvalidArgument):
            hfm_loss(torch.zeros(4), torch.zeros(5))


class TransitionTestCase(SimpleTestCase):
    """Test the denoise, upsample, renoise transition"""

    def test_worked_example(self):
        """Test that the true stage-1 end maps to the stage-2 start"""
        ep = FlowEndpoints(x0=seq(1, 1, 1, 1), x1=seq(0, 2, 4, 6))
        sched = make_schedule([0.5, 1], [0, 0.5, 1])
        _, end = stage_endpoints(ep, sched, 1)
        self.assertTrue(torch.allclose(end, seq(0.5, 3.5)))
        out = cross_scale_transition(end, ep.x0, sched, 1)
        self.assertTrue(torch.allclose(out, seq(0.5, 1.5, 2.5, 3.5)))

    def test_exactness_on_random_schedules(self):
        """Test transition exactness over random endpoints and schedules"""
        rng = random.Random(7)
        gen = torch.Generator().manual_seed(7)
        worst = 0.0
        for _ in range(500):
            sched = random_schedule(rng, rng.choice([2, 3, 4]))
            length = rng.randint(4, 40)
            ep = FlowEndpoints(
                x0=torch.randn(length, 3, generator=gen, dtype=torch.float64),
                x1=torch.randn(length, 3, generator=gen, dtype=torch.float64),
            )
            for k in range(1, sched.K):
                _, end = stage_endpoints(ep, sched, k)
                nxt, _ = stage_endpoints(ep, sched, k + 1)
                out = cross_scale_transition(end, ep.x0, sched, k)
                worst = max(worst, (out - nxt).abs().max().item())
        self.assertLessEqual(worst, 1e-9)

    def test_last_stage_has_no_transition(self):
        """Test that k = K raises"""
        sched = make_schedule([0.5, 1])
        with self.assertRaises(InvalidArgument):
            cross_scale_transition(torch.zeros(4), torch.zeros(4), sched, 2)

    def test_zero_end_time_is_degenerate(self):
        """Test the t_k = 0 guard"""
        sched = make_schedule([0.5, 1])
        object.__setattr__(sched, 'times', (0.0, 0.0, 1.0))
        with self.assertRaises(DegenerateTransition):
            cross_scale_transition(torch.zeros(2), torch.zeros(4), sched, 1)

    def test_wrong_length_rejected(self):
        """Test that a state at the wrong scale raises"""
        sched = make_schedule([0.5, 1])
        with self.assertRaises(InvalidArgument):
            cross_scale_transition(torch.zeros(3), torch.zeros(4), sched, 1)


class IntegrationTestCase(SimpleTestCase):
    """Test stage-local ODE integration"""

    def setUp(self):
        self.sched = make_schedule([1])

    def test_zero_field(self):
        """Test that a zero field leaves the state unchanged"""
        start = torch.randn(5, 2)
        out = integrate_stage(lambda x, t, k, c: torch.zeros_like(x), start, self.sched, 1, 7)
        self.assertTrue(torch.equal(out, start))

    def test_constant_oracle_is_exact(self):
        """Test that Euler integrates a constant displacement exactly"""
        ep = FlowEndpoints(x0=torch.randn(12, 2, dtype=torch.float64),
                           x1=torch.randn(12, 2, dtype=torch.float64))
        sched = make_schedule([0.5, 1], [0, 0.3, 1])
        for k in sched.stages:
            start, end = stage_endpoints(ep, sched, k)
            for n in (1, 3, 10):
                out = integrate_stage(oracle(ep, sched), start, sched, k, n)
                self.assertTrue(torch.allclose(out, end, atol=1e-12))

    def test_velocity_sees_global_time(self):
        """Test that the callback receives t in the stage interval"""
        sched = make_schedule([0.5, 1], [0, 0.4, 1])
        seen = []

        def vfn(x, t, k, cond):
            seen.append(t)
            return torch.zeros_like(x)

        integrate_stage(vfn, torch.zeros(3), sched, 2, 4)
        self.assertAlmostEqual(seen[0], 0.4)
        self.assertAlmostEqual(seen[-1], 0.4 + 0.75 * 0.6)

    def test_euler_first_order(self):
        """Test that doubling the steps halves the error on x' = x"""
        start = torch.ones(3, dtype=torch.float64)
        exact = math.e * start

        def error(n):
            out = integrate_stage(lambda x, t, k, c: x, start, self.sched, 1, n)
            return (out - exact).abs().max().item()

        for n in (8, 64):
            ratio = error(n) / error(2 * n)
            self.assertGreaterEqual(ratio, 1.8)
            self.assertLessEqual(ratio, 2.2)

    def test_heun_is_second_order(self):
        """Test that the Heun solver beats Euler and converges quadratically"""
        start = torch.ones(2, dtype=torch.float64)
        exact = math.e * start

        def error(n, solver):
            out = integrate_stage(lambda x, t, k, c: x, start, self.sched, 1, n, solver=solver)
            return (out - exact).abs().max().item()

        self.assertLess(error(16, 'heun'), error(16, 'euler'))
        ratio = error(16, 'heun') / error(32, 'heun')
        self.assertGreater(ratio, 3.5)
        self.assertLess(ratio, 4.5)

    def test_bad_velocity_raises(self):
        """Test that shape mismatch and NaN velocities raise"""
        start = torch.zeros(4)
        with self.assertRaises(IntegrationFailure):
            integrate_stage(lambda x, t, k, c: torch.zeros(5), start, self.sched, 1, 2)
        with self.assertRaises(IntegrationFailure):
            integrate_stage(lambda x, t, k, c: x * float('nan'), start, self.sched, 1, 2)

    def test_bad_arguments(self):
        """Test step count and solver validation"""
        with self.assertRaises(InvalidArgument):
            integrate_stage(lambda x, t, k, c: x, torch.zeros(2), self.sched, 1, 0)
        with self.assertRaises(InvalidArgument):
            integrate_stage(lambda x, t, k, c: x, torch.zeros(2), self.sched, 1, 2, solver='rk45')

    def test_guidance_blends_branches(self):
        """Test that guidance evaluates both branches and blends them"""
        def vfn(x, t, k, cond):
            return torch.full_like(x, 2.0 if cond == 'text' else 0.0)

        guidance = GuidanceConfig(weight=2.0, null_condition='null')
        out = integrate_stage(vfn, torch.zeros(3), self.sched, 1, 1, cond='text', guidance=guidance)
        self.assertTrue(torch.allclose(out, torch.full((3,), 4.0)))


class GuidanceTestCase(SimpleTestCase):
    """Test classifier-free guidance arithmetic"""

    def test_reductions(self):
        """Test w = 1, w = 0 and a direct example"""
        v_c, v_u = torch.randn(5), torch.randn(5)
        self.assertTrue(torch.allclose(cfg_velocity(v_c, v_u, 1), v_c))
        self.assertTrue(torch.allclose(cfg_velocity(v_c, v_u, 0), v_u))
        self.assertTrue(torch.equal(cfg_velocity(seq(2), seq(0), 2), seq(4)))

    def test_shape_mismatch(self):
        """Test that mismatched branches raise"""
        with self.assertRaises(InvalidArgument):
            cfg_velocity(torch.zeros(2), torch.zeros(3), 1.5)

    def test_weight_validation(self):
        """Test that negative or non-finite weights are rejected"""
        for w in (-1.0, float('inf')):
            with self.assertRaises(InvalidArgument):
                GuidanceConfig(weight=w)


class HierarchicalSampleTestCase(SimpleTestCase):
    """Test the full multi-stage sampler"""

    def test_single_stage_oracle(self):
        """Test that K = 1 with an oracle returns the data"""
        ep = FlowEndpoints(x0=torch.randn(9, 2, dtype=torch.float64),
                           x1=torch.randn(9, 2, dtype=torch.float64))
        sched = make_schedule([1])
        out = hierarchical_sample(oracle(ep, sched), sched, ep.x0, [5])
        self.assertTrue(torch.allclose(out, ep.x1, atol=1e-12))

    def test_two_stage_oracle_example(self):
        """Test the worked two-stage example end to end"""
        ep = FlowEndpoints(x0=seq(1, 1, 1, 1), x1=seq(0, 2, 4, 6))
        sched = make_schedule([0.5, 1], [0, 0.5, 1])
        out = hierarchical_sample(oracle(ep, sched), sched, ep.x0, [3, 3])
        self.assertLessEqual((out - ep.x1).abs().max().item(), 1e-9)

    def test_oracle_any_step_counts(self):
        """Test oracle sampling over step counts and schedules"""
        gen = torch.Generator().manual_seed(3)
        for scales in (['1/3', '2/3', '1'], ['1/4', '1/2', '3/4', '1'], ['1/2', '1']):
            sched = make_schedule(scales)
            for length in (6, 16, 31):
                ep = FlowEndpoints(
                    x0=torch.randn(length, 4, generator=gen, dtype=torch.float64),
                    x1=torch.randn(length, 4, generator=gen, dtype=torch.float64),
                )
                for steps in ([1] * sched.K, list(range(1, sched.K + 1)), [7] * sched.K):
                    out = hierarchical_sample(oracle(ep, sched), sched, ep.x0, steps)
                    self.assertLessEqual((out - ep.x1).abs().max().item(), 1e-9)

    def test_sub_unit_final_scale_is_upsampled(self):
        """Test that a schedule ending below 1 still returns full length"""
        sched = make_schedule([0.4])
        out = hierarchical_sample(lambda x, t, k, c: torch.zeros_like(x), sched,
                                  torch.randn(20, 3), 4)
        self.assertEqual(out.shape[0], 20)

    def test_deterministic_and_trace(self):
        """Test repeatability and the per-step trace"""
        weights = torch.randn(3, 3, generator=torch.Generator().manual_seed(1))

        def vfn(x, t, k, cond):
            return torch.tanh(x @ weights) * (1 + t)

        sched = make_schedule([1 / 3, 2 / 3, 1])
        noise = torch.randn(12, 3, generator=torch.Generator().manual_seed(2))
        trace = SamplingTrace()
        a = hierarchical_sample(vfn, sched, noise, [2, 3, 4], trace=trace)
        b = hierarchical_sample(vfn, sched, noise, [2, 3, 4])
        self.assertTrue(torch.equal(a, b))
        frame = trace.to_frame()
        self.assertEqual(len(frame), 9)
        self.assertEqual(list(frame['length'].unique()), [4, 8, 12])
        self.assertEqual(trace.fresh_draws, 0)

    def test_step_count_mismatch(self):
        """Test that the per-stage step list must have K entries"""
        sched = make_schedule([0.5, 1])
        with self.assertRaises(InvalidArgument):
            hierarchical_sample(lambda x, t, k, c: x, sched, torch.zeros(4), [1, 2, 3])
