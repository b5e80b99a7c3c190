import tempfile
import unittest
from pathlib import Path

import numpy as np

from common.exceptions import MeshError, ValidationError

from .choices import DiagonalPattern, DisplacementTag, FlowTag
from .io import read_mesh, write_mesh
from .services import (
    build_rectangle,
    build_structured_square,
    everywhere,
    locate_points,
    on_line,
    segment_measure,
    tag_boundary,
    uniform_refine,
)

BOTTOM, RIGHT, TOP, LEFT = on_line(1, 0.0), on_line(0, 1.0), on_line(1, 1.0), on_line(0, 0.0)


def tag_quasistatic_square(mesh):
    return tag_boundary(
        mesh,
        {"D": lambda x: BOTTOM(x) | TOP(x) | LEFT(x), "T": RIGHT},
        {"P": lambda x: BOTTOM(x) | RIGHT(x), "F": lambda x: TOP(x) | LEFT(x)},
    )


class StructuredMeshTests(unittest.TestCase):
    def test_single_subdivision_counts(self):
        mesh = build_structured_square(1)
        self.assertEqual(mesh.n_cells, 2)
        self.assertEqual(mesh.n_facets, 5)
        self.assertEqual(len(mesh.boundary_facets), 4)

    def test_area_and_cell_count(self):
        self.assertAlmostEqual(build_structured_square(4).area, 1.0, delta=1e-14)
        self.assertEqual(build_structured_square(8).n_cells, 128)

    def test_h_max_right_pattern(self):
        for n in (1, 3, 8):
            self.assertAlmostEqual(build_structured_square(n).h_max, np.sqrt(2.0) / n, delta=1e-14)

    def test_crisscross_pattern(self):
        mesh = build_structured_square(3, DiagonalPattern.CRISSCROSS)
        self.assertEqual(mesh.n_cells, 36)
        self.assertAlmostEqual(mesh.area, 1.0, delta=1e-13)

    def test_positive_orientation(self):
        mesh = build_rectangle((-50.0, 50.0), (0.0, 75.0), 4, 3)
        self.assertTrue(np.all(mesh.cell_areas > 0.0))
        self.assertEqual(mesh.n_cells, 24)
        self.assertAlmostEqual(mesh.area, 7500.0, delta=1e-9)

    def test_rectangle_matches_square(self):
        square = build_structured_square(2)
        rectangle = build_rectangle((0.0, 1.0), (0.0, 1.0), 2, 2)
        np.testing.assert_array_equal(square.cells, rectangle.cells)
        np.testing.assert_array_equal(square.facets, rectangle.facets)

    def test_degenerate_ranges_rejected(self):
        with self.assertRaises(MeshError):
            build_rectangle((1.0, 1.0), (0.0, 1.0), 2, 2)
        with self.assertRaises(MeshError):
            build_structured_square(0)

    def test_euler_relation(self):
        for mesh in (build_structured_square(5), build_rectangle((0, 2), (0, 1), 3, 7)):
            self.assertEqual(mesh.n_vertices - mesh.n_facets + mesh.n_cells, 1)

    def test_facet_adjacency(self):
        mesh = build_structured_square(4)
        counts = np.bincount(mesh.cell_facets.ravel(), minlength=mesh.n_facets)
        np.testing.assert_array_equal(counts[mesh.interior_facets], 2)
        np.testing.assert_array_equal(counts[mesh.boundary_facets], 1)

    def test_normals_point_from_first_to_second_cell(self):
        mesh = build_structured_square(3)
        centroids = mesh.cell_coordinates.mean(axis=1)
        for f in mesh.interior_facets:
            c0, c1 = mesh.facet_cells[f]
            self.assertLess(c0, c1)
            self.assertGreater(mesh.facet_normals[f] @ (centroids[c1] - centroids[c0]), 0.0)
        signs = mesh.normal_signs
        for f in mesh.interior_facets:
            (c0, c1), (e0, e1) = mesh.facet_cells[f], mesh.facet_local_edges[f]
            self.assertEqual(signs[c0, e0], 1.0)
            self.assertEqual(signs[c1, e1], -1.0)


class TaggingTests(unittest.TestCase):
    def test_quasistatic_rules(self):
        mesh = tag_quasistatic_square(build_structured_square(4))
        for f in mesh.boundary_facets:
            x = mesh.facet_midpoints[f]
            dtag, ftag = mesh.boundary_tags[int(f)]
            expected_d = DisplacementTag.TRACTION if np.isclose(x[0], 1.0) else DisplacementTag.DIRICHLET
            expected_f = FlowTag.PRESSURE if np.isclose(x[1], 0.0) or np.isclose(x[0], 1.0) else FlowTag.FLUX
            self.assertEqual(dtag, expected_d)
            self.assertEqual(ftag, expected_f)
        self.assertAlmostEqual(segment_measure(mesh, displacement=DisplacementTag.DIRICHLET), 3.0)
        self.assertAlmostEqual(segment_measure(mesh, flow=FlowTag.PRESSURE), 2.0)

    def test_all_dirichlet(self):
        mesh = tag_boundary(build_structured_square(1), {"D": everywhere}, {"P": everywhere})
        self.assertEqual(len(mesh.boundary_tags), 4)
        self.assertTrue(all(tags == ("D", "P") for tags in mesh.boundary_tags.values()))

    def test_unmatched_facet_names_midpoint(self):
        with self.assertRaisesRegex(MeshError, r"\[0\.5, 1\.0\]"):
            tag_boundary(
                build_structured_square(1),
                {"D": lambda x: ~TOP(x)},
                {"P": everywhere},
            )

    def test_doubly_matched_facet(self):
        with self.assertRaisesRegex(MeshError, "several"):
            tag_boundary(
                build_structured_square(1),
                {"D": everywhere, "T": TOP},
                {"P": everywhere},
            )

    def test_empty_pressure_partition(self):
        mesh = build_structured_square(2)
        with self.assertLogs("mesh.models", level="WARNING"):
            tagged = tag_boundary(mesh, {"D": LEFT, "T": lambda x: ~LEFT(x)}, {"F": everywhere})
        with self.assertRaises(ValidationError):
            tagged.clean(strict=True)

    def test_footing_measure(self):
        mesh = build_rectangle((-50.0, 50.0), (0.0, 75.0), 6, 3)
        loaded = lambda x: on_line(1, 75.0)(x) & (np.abs(x[:, 0]) <= 50.0 / 3.0)
        self.assertAlmostEqual(segment_measure(mesh, loaded), 100.0 / 3.0, delta=1e-9)


class RefinementTests(unittest.TestCase):
    def test_two_cells_to_eight(self):
        mesh = uniform_refine(build_structured_square(1))
        self.assertEqual(mesh.n_cells, 8)
        self.assertAlmostEqual(mesh.area, 1.0, delta=1e-14)

    def test_table_growth(self):
        mesh = build_rectangle((0.0, 1.0), (0.0, 1.0), 16, 12)
        self.assertEqual(mesh.n_cells, 384)
        self.assertEqual(uniform_refine(mesh).n_cells, 1536)

    def test_h_max_halves(self):
        mesh = build_structured_square(3)
        twice = uniform_refine(uniform_refine(mesh))
        self.assertAlmostEqual(twice.h_max, mesh.h_max / 4.0, delta=1e-14)

    def test_tags_inherited(self):
        mesh = tag_quasistatic_square(build_structured_square(2))
        fine = uniform_refine(mesh)
        self.assertEqual(len(fine.boundary_tags), 2 * len(mesh.boundary_tags))
        for dtag in DisplacementTag:
            self.assertAlmostEqual(
                segment_measure(fine, displacement=dtag), segment_measure(mesh, displacement=dtag)
            )
        for f, (dtag, ftag) in fine.boundary_tags.items():
            x = fine.facet_midpoints[f]
            self.assertEqual(dtag == DisplacementTag.TRACTION, bool(np.isclose(x[0], 1.0)))

    def test_refinement_matches_structured(self):
        refined = uniform_refine(build_structured_square(2))
        self.assertAlmostEqual(refined.h_max, build_structured_square(4).h_max)
        self.assertEqual(refined.n_facets, build_structured_square(4).n_facets)


class QueryTests(unittest.TestCase):
    def test_locate_points(self):
        mesh = build_structured_square(4)
        points = np.array([[0.1, 0.05], [0.9, 0.95], [0.26, 0.5], [1.0, 1.0]])
        cells, reference = locate_points(mesh, points)
        x = mesh.cell_coordinates[cells]
        rebuilt = (
            x[:, 0]
            + reference[:, :1] * (x[:, 1] - x[:, 0])
            + reference[:, 1:] * (x[:, 2] - x[:, 0])
        )
        np.testing.assert_allclose(rebuilt, points, atol=1e-14)

    def test_locate_outside(self):
        with self.assertRaises(MeshError):
            locate_points(build_structured_square(2), [[1.5, 0.5]])

    def test_fingerprint_depends_on_tags(self):
        mesh = build_structured_square(2)
        tagged = tag_quasistatic_square(mesh)
        self.assertEqual(mesh.fingerprint(), build_structured_square(2).fingerprint())
        self.assertNotEqual(mesh.fingerprint(), tagged.fingerprint())


class MeshFileTests(unittest.TestCase):
    def test_round_trip(self):
        mesh = tag_quasistatic_square(uniform_refine(build_rectangle((0.0, 1.0), (0.0, 1.0), 3, 2)))
        with tempfile.TemporaryDirectory() as tmp:
            path = write_mesh(mesh, Path(tmp) / "square.mesh")
            self.assertEqual(path.read_text().splitlines()[0], "poromesh 2d")
            loaded = read_mesh(path)
            write_mesh(loaded, Path(tmp) / "again.mesh")
            self.assertEqual(path.read_text(), (Path(tmp) / "again.mesh").read_text())
        np.testing.assert_array_equal(loaded.vertices, mesh.vertices)
        np.testing.assert_array_equal(loaded.cells, mesh.cells)
        self.assertEqual(loaded.fingerprint(), mesh.fingerprint())

    def test_bad_header(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "bad.mesh"
            path.write_text("mesh v1\n0\n0\n")
            with self.assertRaises(MeshError):
                read_mesh(path)
