import unittest

import numpy as np

from .exceptions import AssemblyError, PoroHDGError, SolverError, ValidationError
from .utils import as_points, broadcast_field, fingerprint, format_float, power_of_two_scale


class UtilsTests(unittest.TestCase):
    def test_as_points(self):
        self.assertEqual(as_points([0.5, 0.25]).shape, (1, 2))
        self.assertEqual(as_points(np.zeros((3, 4, 2))).shape, (3, 4, 2))
        with self.assertRaises(ValueError):
            as_points(np.zeros((3, 3)))

    def test_broadcast_field(self):
        values = broadcast_field(2.0, (4,))
        values[0] = 1.0
        np.testing.assert_array_equal(values, [1.0, 2.0, 2.0, 2.0])

    def test_fingerprint(self):
        a = np.arange(6.0)
        self.assertEqual(fingerprint(a, 1, "hdg"), fingerprint(a.copy(), 1, "hdg"))
        self.assertNotEqual(fingerprint(a, 1), fingerprint(a.reshape(2, 3), 1))
        self.assertNotEqual(fingerprint(a, 1), fingerprint(a.astype(np.float32), 1))

    def test_power_of_two_scale(self):
        np.testing.assert_array_equal(power_of_two_scale([4.0, 0.25, 0.0]), [0.25, 4.0, 1.0])
        scale = power_of_two_scale([3.0e7, 1.1e-7])
        np.testing.assert_array_equal(np.log2(scale), np.round(np.log2(scale)))
        self.assertLess(abs(np.log2(3.0e7 * scale[0])), 0.51)

    def test_format_float(self):
        self.assertEqual(format_float(1234.5), "1.23e+03")
        self.assertEqual(format_float(float("nan")), "-")
        self.assertEqual(format_float(None), "-")


class ExceptionTests(unittest.TestCase):
    def test_hierarchy(self):
        self.assertTrue(issubclass(ValidationError, ValueError))
        self.assertTrue(issubclass(SolverError, PoroHDGError))

    def test_payloads(self):
        self.assertEqual(AssemblyError("singular", cell=3).cell, 3)
        self.assertEqual(SolverError("breakdown", residual=1e-3).residual, 1e-3)
