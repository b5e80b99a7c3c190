import json
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import ValidationError as PydanticValidationError

from common.exceptions import ConfigError
from forms.geometry import cell_geometry
from mms.cases import CANTILEVER_LINES, build_case_mesh, cantilever_case, static_case
from poro_hdg import settings
from spaces.services import build_layout
from system.models import SolutionState
from timeloop.services import l2_projection

from .commands import EXIT_CONFIG, EXIT_GATE, EXIT_OK, main
from .config import RunConfig, build_case, load_config, parse_rates
from .exporters import lattice_fields, line_samples, reference_lattice, write_vtk


def _quiet(*args):
    return list(args) + ["--log-level", "ERROR"]


class ConfigTests(unittest.TestCase):
    def test_parse_rates(self):
        self.assertEqual(parse_rates("1.8,0.9,1.8,0.9"), {"u": 1.8, "pT": 0.9, "z": 1.8, "p": 0.9})
        self.assertIsNone(parse_rates(None))
        with self.assertRaises(ConfigError):
            parse_rates("1,2,3")
        with self.assertRaises(ConfigError):
            parse_rates("a,b,c,d")

    def test_unknown_keys_rejected(self):
        with self.assertRaises(ConfigError):
            load_config(meshsize=3)
        with self.assertRaises(PydanticValidationError):
            RunConfig(gate_rates={"q": 1.0})

    def test_file_values_overridden_by_flags(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "run.json"
            path.write_text(json.dumps({"schema_version": 1, "case": "static", "nx": 2, "k": 2}))
            config = load_config(path, nx=3)
        self.assertEqual(config.case, "static")
        self.assertEqual(config.nx, 3)
        self.assertEqual(config.k, 2)

    def test_schema_version_checked(self):
        with self.assertRaises(ConfigError):
            load_config(schema_version=2)

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_config("/nonexistent/run.json")

    def test_static_overrides_reach_lambda(self):
        case = build_case(RunConfig(case="static", E=1.0, nu=0.49999, k=3))
        self.assertEqual(case.params.degree, 3)
        self.assertAlmostEqual(case.params.lam / 1.0, 0.49999 / (1.49999 * (1.0 - 2 * 0.49999)))

    def test_parameter_override_rederives_loads(self):
        case = build_case(RunConfig(case="quasistatic", kappa=1.0))
        self.assertEqual(case.params.kappa, 1.0)
        self.assertEqual(case.exact.params.kappa, 1.0)

    def test_invalid_poisson_ratio(self):
        with self.assertRaises(PydanticValidationError):
            build_case(RunConfig(case="quasistatic", nu=0.6))

    def test_inline_manufactured_solution(self):
        config = RunConfig(
            mms={"displacement": ["t*x*y", "t*x**2"], "pressure": "x + y*t", "static": False}, k=2
        )
        case = build_case(config)
        self.assertEqual(case.params.degree, 2)
        points = np.array([[0.5, 0.25]])
        np.testing.assert_allclose(case.exact.displacement(points, 2.0), [[0.25, 0.5]])


class LatticeTests(unittest.TestCase):
    def test_counts(self):
        for degree, n_points, n_triangles in ((1, 3, 1), (2, 6, 4), (3, 10, 9)):
            points, triangles = reference_lattice(degree)
            self.assertEqual(len(points), n_points)
            self.assertEqual(len(triangles), n_triangles)
            self.assertLess(triangles.max(), n_points)

    def test_linear_field_reproduced(self):
        layout = build_layout(build_case_mesh(static_case(), 1, 1), 2, "hdg")
        geometry = cell_geometry(layout.mesh, 2)
        state = SolutionState.zeros(layout)
        state.interior[:, layout.element_slices["u"]] = l2_projection(geometry, lambda x: x.copy(), "vector")
        points, triangles, fields = lattice_fields(state)
        self.assertEqual(points.shape, (2 * 6, 2))
        self.assertEqual(triangles.shape, (2 * 4, 3))
        np.testing.assert_allclose(fields["u"], points, atol=1e-12)
        np.testing.assert_allclose(fields["p"], 0.0)

    def test_vtk_header(self):
        layout = build_layout(build_case_mesh(static_case(), 1, 1), 1, "hdg")
        state = SolutionState.zeros(layout)
        state.interior[:] = 1.0
        with tempfile.TemporaryDirectory() as tmp:
            lines = write_vtk(Path(tmp) / "out.vtk", state).read_text().splitlines()
        self.assertEqual(lines[0], "# vtk DataFile Version 3.0")
        self.assertIn("POINTS 6 double", lines)
        self.assertIn("CELLS 2 8", lines)
        self.assertIn("POINT_DATA 6", lines)
        self.assertIn("VECTORS u double", lines)
        self.assertIn("SCALARS p_T double 1", lines)


class LineSampleTests(unittest.TestCase):
    def test_columns_and_values(self):
        case = cantilever_case(nx=2, ny=2)
        layout = build_layout(build_case_mesh(case), 2, case.variant)
        geometry = cell_geometry(layout.mesh, 2, True)
        state = SolutionState.zeros(layout)
        state.interior[:, layout.element_slices["pressure"]] = l2_projection(
            geometry, lambda x: x[:, 0] + 2.0 * x[:, 1]
        )
        frame = line_samples(state, case.line_samples)
        self.assertEqual(list(frame.columns), ["x", "y", "p"])
        self.assertEqual(len(frame), 101 * len(case.line_samples))
        np.testing.assert_allclose(frame["p"], frame["x"] + 2.0 * frame["y"], atol=1e-10)


class CommandTests(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.output = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def test_usage_error(self):
        self.assertEqual(main(_quiet("bogus")), EXIT_CONFIG)

    def test_invalid_nu_rejected(self):
        code = main(_quiet("solve", "--case", "quasistatic", "--nu", "0.6", "--output-dir", self.output))
        self.assertEqual(code, EXIT_CONFIG)

    def test_single_level_convergence_rejected(self):
        code = main(_quiet("convergence", "--case", "quasistatic", "--levels", "1", "--output-dir", self.output))
        self.assertEqual(code, EXIT_CONFIG)

    def test_robustness_needs_static_case(self):
        code = main(_quiet("robustness", "--case", "quasistatic", "--output-dir", self.output))
        self.assertEqual(code, EXIT_CONFIG)

    def test_static_solve_artifacts(self):
        code = main(_quiet("solve", "--case", "static", "--nx", "1", "--output-dir", self.output))
        self.assertEqual(code, EXIT_OK)
        directory = Path(self.output) / "static"
        self.assertTrue((directory / "fields_00000.vtk").is_file())
        errors = pd.read_csv(directory / "errors.csv")
        self.assertEqual(len(errors), 1)
        manifest = json.loads((directory / "manifest.json").read_text())
        self.assertEqual(manifest["config"]["nx"], 1)
        self.assertEqual(manifest["mesh"]["cells"], 2)
        self.assertIn("numpy", manifest["versions"])

    def test_quasistatic_solve_observers(self):
        args = ["solve", "--case", "quasistatic", "--nx", "1", "--dt", "0.05", "--T", "0.1"]
        code = main(_quiet(*args, "--no-vtk", "--checkpoints", "--output-dir", self.output))
        self.assertEqual(code, EXIT_OK)
        directory = Path(self.output) / "quasistatic"
        energy = pd.read_csv(directory / "energy.csv")
        self.assertEqual(list(energy["step"]), [0, 1, 2])
        self.assertEqual(len(pd.read_csv(directory / "errors.csv")), 2)
        self.assertTrue((directory / "checkpoints" / "step_00002.npz").is_file())
        self.assertFalse(list(directory.glob("*.vtk")))

        restart = str(directory / "checkpoints" / "step_00001.npz")
        code = main(_quiet(*args, "--no-vtk", "--restart", restart, "--output-dir", self.output))
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(list(pd.read_csv(directory / "energy.csv")["step"]), [1, 2])

    def test_rate_gate_failure(self):
        code = main(
            _quiet(
                "convergence", "--case", "quasistatic", "--nx", "1", "--levels", "2",
                "--dt", "0.05", "--T", "0.05", "--gate-rates", "100,100,100,100",
                "--output-dir", self.output,
            )
        )
        self.assertEqual(code, EXIT_GATE)
        self.assertTrue((Path(self.output) / "quasistatic" / "convergence_hdg_k1.csv").is_file())

    def test_verify_report(self):
        code = main(_quiet("verify", "--case", "quasistatic", "--nx", "1", "--variant", "hdg", "--output-dir", self.output))
        self.assertIn(code, (EXIT_OK, EXIT_GATE))
        report = json.loads((Path(self.output) / "quasistatic" / "verify.json").read_text())
        properties = [check["property"] for check in report["checks"]]
        self.assertEqual(
            properties,
            ["conformity", "condensation_oracle", "condensation_oracle", "zero_data", "coercivity", "inf_sup", "energy_decay"],
        )
        self.assertEqual(report["passed"], code == EXIT_OK)

    def test_verify_cantilever_passes(self):
        code = main(_quiet("verify", "--case", "cantilever", "--output-dir", self.output))
        report = json.loads((Path(self.output) / "cantilever" / "verify.json").read_text())
        failed = [check["property"] for check in report["checks"] if not check["passed"]]
        self.assertEqual(failed, [])
        self.assertEqual(code, EXIT_OK)
        infsup = [check for check in report["checks"] if check["property"] == "inf_sup"]
        for check in infsup:
            self.assertTrue(all(item["constants_removed"] for item in check["values"]["reports"]))

    def test_cantilever_line_samples(self):
        args = ["solve", "--case", "cantilever", "--nx", "2", "--T", "0.002", "--no-vtk"]
        code = main(_quiet(*args, "--output-dir", self.output))
        self.assertEqual(code, EXIT_OK)
        directory = Path(self.output) / "cantilever"
        paths = sorted(directory.glob("lines_*.csv"))
        self.assertEqual([path.name for path in paths], ["lines_00000.csv", "lines_00001.csv", "lines_00002.csv"])
        frame = pd.read_csv(paths[-1])
        self.assertEqual(list(frame.columns), ["x", "y", "p"])
        self.assertEqual(len(frame), 101 * len(CANTILEVER_LINES))
        np.testing.assert_allclose(sorted(set(frame["x"])), CANTILEVER_LINES)
        self.assertTrue(np.all(np.isfinite(frame["p"])))
        self.assertGreater(np.abs(frame["p"]).max(), 0.0)
        manifest = json.loads((directory / "manifest.json").read_text())
        self.assertTrue(manifest["results"]["conformity_passed"])


@unittest.skipUnless(settings.RUN_SLOW_TESTS, "set POROHDG_RUN_SLOW=1 for acceptance studies")
class DemoCommandTests(unittest.TestCase):
    def test_cantilever_demo_outputs(self):
        with tempfile.TemporaryDirectory() as tmp:
            code = main(_quiet("solve", "--case", "cantilever", "--no-vtk", "--output-dir", tmp))
            self.assertEqual(code, EXIT_OK)
            directory = Path(tmp) / "cantilever"
            self.assertEqual(len(list(directory.glob("lines_*.csv"))), 6)
            frame = pd.read_csv(directory / "lines_00005.csv")
            self.assertEqual(len(frame), 101 * len(CANTILEVER_LINES))
            self.assertTrue(np.all(np.isfinite(frame["p"])))
            manifest = json.loads((directory / "manifest.json").read_text())
            self.assertEqual(manifest["mesh"]["cells"], 128)
            self.assertTrue(manifest["results"]["conformity_passed"])
