import os
import sys
import unittest

import numpy as np

# Adjust path
sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'app'))

from errors import ParameterError
from rng import SEED_MAX, ReplicateRunner, check_seed, replicate_rng


class TestSeeds(unittest.TestCase):
    def test_drawn_seed_in_range(self):
        seed = check_seed(None)
        self.assertTrue(0 <= seed <= SEED_MAX)

    def test_rejects_bad_seeds(self):
        for bad in (-1, SEED_MAX + 1, 1.5, "7", True):
            with self.assertRaises(ParameterError):
                check_seed(bad)
        self.assertEqual(check_seed(np.uint64(5)), 5)

    def test_replicate_streams(self):
        a = replicate_rng(11, 3).standard_normal(4)
        np.testing.assert_array_equal(a, replicate_rng(11, 3).standard_normal(4))
        self.assertFalse(np.array_equal(a, replicate_rng(11, 4).standard_normal(4)))
        self.assertFalse(np.array_equal(a, replicate_rng(11, 3, stream=1).standard_normal(4)))
        self.assertFalse(np.array_equal(a, replicate_rng(12, 3).standard_normal(4)))


class TestReplicateRunner(unittest.TestCase):
    def test_chunks(self):
        runner = ReplicateRunner(threads=2, chunk_size=4)
        self.assertEqual(runner.chunks(10), [(0, 4), (4, 8), (8, 10)])
        self.assertEqual(runner.chunks(0), [])

    def test_collect_in_replicate_order(self):
        def fn(start, stop):
            return np.arange(start, stop, dtype=float)

        for threads in (1, 4):
            out = ReplicateRunner(threads=threads, chunk_size=3).collect(fn, 11)
            np.testing.assert_array_equal(out, np.arange(11, dtype=float))
        self.assertEqual(ReplicateRunner(threads=2).collect(fn, 0).size, 0)

    def test_from_config(self):
        runner = ReplicateRunner.from_config({"threads": 3, "chunk_size": 32})
        self.assertEqual((runner.threads, runner.chunk_size), (3, 32))
        self.assertEqual(ReplicateRunner.from_config({"threads": 3}, threads=1).threads, 1)
        self.assertGreaterEqual(ReplicateRunner.from_config({}).threads, 1)

    def test_invalid(self):
        with self.assertRaises(ParameterError):
            ReplicateRunner(threads=0)
        with self.assertRaises(ParameterError):
            ReplicateRunner(threads=1, chunk_size=0)


if __name__ == '__main__':
    unittest.main()
