"""Tests for the synthetic motion corpus"""
import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from motionflow.exceptions import FormatError, InvalidArgument, TokenizationError

from .builder import CorpusSpec, build_corpus, corpus_vocabulary, record_seeds, split_for_index, text_condition
from .container import MAGIC, VERSION, _SHAPE, _U32, _dumps, read_corpus, write_corpus
from .features import (
    HUMANML_LAYOUT, SYNTHETIC_LAYOUT, load_pose_features, load_pose_layout, pose_layout_from_dict,
    save_pose_features,
)
from .kinematics import HEIGHT, generate_motion, root_trajectory
from .programs import FPS, PROGRAM_NAMES, PROGRAMS, REST_HEIGHT, get_program
from .vocabulary import NULL, NULL_ID, PAD_ID, build_vocabulary


class ProgramTestCase(SimpleTestCase):
    """Test motion programs and the body model"""

    def test_walk_forward_displacement(self):
        """Test that walking at speed 1 for L=64 covers speed * duration along the heading"""
        motion = generate_motion('walk_forward', {'speed': 1.0}, 64, seed=0)
        yaw, position = root_trajectory(motion)
        duration = 63 / FPS
        self.assertAlmostEqual(position[-1, 1], duration, delta=0.05 * duration)
        self.assertAlmostEqual(position[-1, 0], 0.0, delta=1e-6)
        self.assertEqual(float(np.abs(yaw).max()), 0.0)

    def test_jump_peak(self):
        """Test that the root rises exactly by the jump height"""
        for height in (0.2, 0.45, 0.6):
            motion = generate_motion('jump', {'height': height}, 80, seed=1)
            self.assertAlmostEqual(float(motion[:, 0, HEIGHT].max()) - REST_HEIGHT, height, delta=1e-6)

    def test_turn_heading(self):
        """Test that a turn ends on its signed angle"""
        params = {'direction': 'right', 'angle': math.pi / 2}
        yaw, _ = root_trajectory(generate_motion('turn', params, 90, seed=2))
        self.assertAlmostEqual(yaw[-1], -math.pi / 2, delta=0.01)

    def test_deterministic(self):
        """Test that the same label and seed give bitwise-identical motions"""
        params = {'side': 'left', 'frequency': 1.0}
        a = generate_motion('wave', params, 70, seed=11)
        b = generate_motion('wave', params, 70, seed=11)
        self.assertEqual(a.dtype, np.float32)
        self.assertEqual(a.shape, (70, 15, 6))
        self.assertTrue(np.array_equal(a, b))

    def test_smooth(self):
        """Test that frame-to-frame position changes stay bounded"""
        rng = np.random.default_rng(0)
        for name in PROGRAM_NAMES:
            program = get_program(name)
            motion = generate_motion(program, program.sample_params(rng), 64, seed=3)
            self.assertLess(float(np.abs(np.diff(motion[:, 1:, :3], axis=0)).max()), 0.35, name)

    def test_invalid_params(self):
        """Test that out-of-range, missing and unknown parameters are rejected"""
        with self.assertRaises(InvalidArgument):
            generate_motion('walk_forward', {'speed': 5.0}, 64, 0)
        with self.assertRaises(InvalidArgument):
            generate_motion('turn', {'angle': 1.0}, 64, 0)
        with self.assertRaises(InvalidArgument):
            generate_motion('raise_arm', {'side': 'up', 'amplitude': 0.8}, 64, 0)
        with self.assertRaises(InvalidArgument):
            generate_motion('walk_forward', {'speed': 1.0}, 8, 0)
        with self.assertRaises(InvalidArgument):
            get_program('dance')

    def test_templates(self):
        """Test that every program has at least two templates"""
        for program in PROGRAMS.values():
            self.assertGreaterEqual(len(program.templates), 2)


class VocabularyTestCase(SimpleTestCase):
    """Test the closed vocabulary"""

    def setUp(self):
        self.vocabulary = corpus_vocabulary()

    def test_reserved_ids(self):
        """Test that padding and null take the first two ids"""
        self.assertEqual(self.vocabulary.encode(''), [NULL_ID])
        self.assertEqual(self.vocabulary.decode([NULL_ID]), '')
        self.assertNotIn(PAD_ID, self.vocabulary.encode('a person jumps high'))
        self.assertIn(NULL, self.vocabulary)

    def test_closure(self):
        """Test that every emitted text tokenizes"""
        rng = np.random.default_rng(0)
        for name, program in PROGRAMS.items():
            for _ in range(50):
                params = program.sample_params(rng)
                for index in range(len(program.templates)):
                    self.vocabulary.encode(program.render(params, index))

    def test_round_trip(self):
        """Test that decoding the tokens gives the normalized text"""
        text = '  A person  walks forward QUICKLY '
        self.assertEqual(self.vocabulary.decode(self.vocabulary.encode(text)), 'a person walks forward quickly')

    def test_out_of_vocabulary(self):
        """Test that an unknown word is a tokenization error"""
        with self.assertRaises(TokenizationError):
            self.vocabulary.encode('a person dances')

    def test_serialization(self):
        """Test that the vocabulary survives its list form"""
        self.assertEqual(type(self.vocabulary).from_list(self.vocabulary.to_list()), self.vocabulary)
        self.assertEqual(build_vocabulary(['b a', 'a c']).to_list()[2:], ['a', 'b', 'c'])

    def test_text_condition(self):
        """Test walk_forward text and the null condition"""
        condition = text_condition('walk_forward', {'speed': 1.0}, seed=4)
        self.assertIn('walks', condition.text.split())
        self.assertEqual(self.vocabulary.decode(condition.tokens), condition.text)
        null = text_condition(None, None, seed=0)
        self.assertEqual((null.text, null.tokens), ('', [NULL_ID]))


class CorpusTestCase(SimpleTestCase):
    """Test corpus building and the container format"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.spec = CorpusSpec(n_per_program=10, min_frames=32, max_frames=48, seed=7)

    def tearDown(self):
        self.tmp.cleanup()

    def test_record_count(self):
        """Test that n=10 over six programs gives 60 records"""
        corpus = build_corpus(self.spec)
        self.assertEqual(len(corpus), 60)
        self.assertEqual(sorted(corpus.by_program()), sorted(PROGRAM_NAMES))
        self.assertTrue(all(32 <= r.frames <= 48 for r in corpus))

    def test_rebuild_is_byte_identical(self):
        """Test that the same master seed writes the same bytes"""
        a = write_corpus(self.dir / 'a.mfc', build_corpus(self.spec))
        b = write_corpus(self.dir / 'b.mfc', build_corpus(self.spec))
        self.assertEqual(a.read_bytes(), b.read_bytes())

    def test_read_back(self):
        """Test that a written corpus reads back unchanged"""
        corpus = build_corpus(self.spec)
        loaded = read_corpus(write_corpus(self.dir / 'c.mfc', corpus))
        self.assertEqual(loaded.header['n_records'], 60)
        self.assertEqual(loaded.fps, FPS)
        for original, record in zip(corpus, loaded):
            self.assertEqual(record.meta(), original.meta())
            self.assertTrue(np.array_equal(record.motion, original.motion))

    def test_corrupt_files(self):
        """Test that bad magic, truncation and trailing bytes are format errors"""
        path = write_corpus(self.dir / 'd.mfc', build_corpus(CorpusSpec(n_per_program=1, min_frames=16, max_frames=16)))
        data = path.read_bytes()
        for name, payload in [('magic', b'X' + data[1:]), ('short', data[:-10]), ('long', data + b'\0')]:
            bad = self.dir / f'{name}.mfc'
            bad.write_bytes(payload)
            with self.subTest(name), self.assertRaises(FormatError):
                read_corpus(bad)

    def test_incomplete_meta(self):
        """Test that a record meta missing a key or a non-object header is a format error"""
        header = _dumps({'n_records': 1, 'fps': 20})
        meta = _dumps({'index': 0, 'frames': 1, 'seed': 0})
        payload = _SHAPE.pack(1, 1, 1) + np.zeros(1, dtype='<f4').tobytes()
        cases = {'meta': header, 'header': _dumps([1, 2])}
        for name, head in cases.items():
            data = MAGIC + _U32.pack(VERSION) + _U32.pack(len(head)) + head
            data += _U32.pack(len(meta)) + meta + payload
            bad = self.dir / f'{name}.mfc'
            bad.write_bytes(data)
            with self.subTest(name), self.assertRaises(FormatError):
                read_corpus(bad)

    def test_split_fractions(self):
        """Test that hash buckets split 10k indices 80/5/15 within one point"""
        counts = {'train': 0, 'val': 0, 'test': 0}
        for index in range(10000):
            counts[split_for_index(index)] += 1
        self.assertAlmostEqual(counts['train'] / 10000, 0.80, delta=0.01)
        self.assertAlmostEqual(counts['val'] / 10000, 0.05, delta=0.01)
        self.assertAlmostEqual(counts['test'] / 10000, 0.15, delta=0.01)

    def test_record_seeds(self):
        """Test that record seeds depend only on the master seed and are distinct"""
        seeds = record_seeds(7, 100)
        self.assertEqual(seeds, record_seeds(7, 100))
        self.assertEqual(len(set(seeds)), 100)
        self.assertNotEqual(seeds, record_seeds(8, 100))

    def test_invalid_spec(self):
        """Test that empty corpora and bad frame ranges are rejected"""
        with self.assertRaises(InvalidArgument):
            CorpusSpec(n_per_program=0)
        with self.assertRaises(InvalidArgument):
            CorpusSpec(min_frames=8, max_frames=20)
        with self.assertRaises(InvalidArgument):
            CorpusSpec(programs=['dance'])


class PoseFeatureTestCase(SimpleTestCase):
    """Test externally produced pose-feature files"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_synthetic_layout(self):
        """Test that a 40 x 90 file loads as 40 frames of 15 joints by 6 channels"""
        flat = np.random.default_rng(0).normal(size=(40, 90)).astype(np.float32)
        path = self.dir / 'flat.npy'
        np.save(path, flat)
        motion = load_pose_features(path, SYNTHETIC_LAYOUT)
        self.assertEqual(motion.shape, (40, 15, 6))
        self.assertTrue(np.array_equal(motion.reshape(40, 90), flat))

    def test_round_trip(self):
        """Test that save then load is bitwise identical"""
        motion = generate_motion('wave', {'side': 'right', 'frequency': 1.1}, 48, seed=5)
        path = save_pose_features(self.dir / 'wave.npy', motion)
        self.assertTrue(np.array_equal(load_pose_features(path), motion))

    def test_wrong_feature_dim(self):
        """Test that a file of the wrong width is a format error"""
        path = self.dir / 'wide.npy'
        np.save(path, np.zeros((10, 91), dtype=np.float32))
        with self.assertRaises(FormatError):
            load_pose_features(path)

    def test_humanml_layout(self):
        """Test that the shipped 263-feature layout claims every index once"""
        layout = load_pose_layout(HUMANML_LAYOUT)
        self.assertEqual((layout.feature_dim, layout.n_joints, layout.channels), (263, 22, 12))
        flat = np.random.default_rng(1).normal(size=(12, 263)).astype(np.float32)
        path = self.dir / 'humanml.npy'
        np.save(path, flat)
        self.assertEqual(load_pose_features(path, HUMANML_LAYOUT).shape, (12, 22, 12))

    def test_overlapping_layout(self):
        """Test that doubly claimed features are a format error"""
        with self.assertRaises(FormatError):
            pose_layout_from_dict({
                'feature_dim': 4, 'channels': 3,
                'joints': [{'name': 'a', 'features': [[0, 3]]}, {'name': 'b', 'features': [[2, 4]]}],
            })
