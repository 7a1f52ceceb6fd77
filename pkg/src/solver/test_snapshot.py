import tempfile
import unittest
from pathlib import Path

import numpy as np

from src.solver.datagen import gen_lowrank, gen_mask, observe
from src.solver.errors import ImageIOError, InvalidArgumentError
from src.solver.models import MaskSpec, ProblemInstance
from src.solver.snapshot import load_snapshot, save_snapshot


class TestSnapshot(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / "inst.npz"

    def tearDown(self):
        self.tmp.cleanup()

    def test_exact_reload(self):
        x_star = gen_lowrank(9, 6, 2, seed=1)
        mask = gen_mask(9, 6, MaskSpec(sampling_ratio=0.5, seed=2))
        inst = ProblemInstance.from_observation(observe(x_star, mask), mask, 0.1234567890123, 0.5, x_star=x_star)
        self.assertTrue(inst.transposed)
        save_snapshot(self.path, inst)
        loaded = load_snapshot(self.path)
        self.assertTrue(loaded.transposed)
        self.assertTrue(np.array_equal(loaded.observed, inst.observed))
        self.assertTrue(np.array_equal(loaded.mask, inst.mask))
        self.assertTrue(np.array_equal(loaded.x_star, inst.x_star))
        self.assertEqual(loaded.lam, inst.lam)
        self.assertEqual(loaded.p, inst.p)

    def test_without_ground_truth(self):
        inst = ProblemInstance.from_observation([[1.0, 0.0]], [(0, 0)], 0.5, 0.3)
        save_snapshot(self.path, inst)
        self.assertIsNone(load_snapshot(self.path).x_star)

    def test_unreadable(self):
        self.path.write_bytes(b"garbage")
        with self.assertRaises(ImageIOError):
            load_snapshot(self.path)

    def test_inconsistent_contents_are_not_read_errors(self):
        with open(self.path, "wb") as f:
            np.savez(f, observed=np.ones((2, 2)), mask=np.array([[0, 0]]), lam=np.float64(1.0), p=np.float64(0.5))
        with self.assertRaises(InvalidArgumentError) as ctx:
            load_snapshot(self.path)
        self.assertNotIsInstance(ctx.exception, ImageIOError)
        self.assertIn("outside the mask", str(ctx.exception))


if __name__ == "__main__":
    unittest.main()
