"""Run artifacts: VTK field files, CSV tables, line samples and the run manifest."""

import json
import logging
import platform
from functools import lru_cache
from importlib import metadata
from pathlib import Path

import numpy as np
import pandas as pd

from mesh.services import locate_points
from poro_hdg import __version__, settings
from refbasis.basis import TriangleBasis
from spaces.services import element_values
from timeloop.observers import Observer

logger = logging.getLogger(__name__)

VTK_TRIANGLE = 5
LINE_SAMPLES = 101
PACKAGES = ("numpy", "scipy", "sympy", "pandas", "pydantic", "python-dotenv", "tqdm")


@lru_cache(maxsize=None)
def reference_lattice(degree):
    """Points (i/k, j/k), i + j <= k, and the k^2 sub-triangles joining them."""

    k = max(int(degree), 1)
    index = {}
    points = []
    for j in range(k + 1):
        for i in range(k + 1 - j):
            index[i, j] = len(points)
            points.append((i / k, j / k))
    triangles = []
    for j in range(k):
        for i in range(k - j):
            triangles.append((index[i, j], index[i + 1, j], index[i, j + 1]))
            if i + j < k - 1:
                triangles.append((index[i + 1, j], index[i + 1, j + 1], index[i, j + 1]))
    return np.array(points), np.array(triangles, dtype=np.int64)


def lattice_fields(state):
    """Points and nodal values of u, z, p and p_T on every cell's lattice.

    Lattice points are duplicated per cell so the discontinuous fields keep
    their jumps.
    """

    layout = state.layout
    reference, triangles = reference_lattice(layout.degree)
    coords = layout.mesh.cell_coordinates
    jacobian = np.stack([coords[:, 1] - coords[:, 0], coords[:, 2] - coords[:, 0]], axis=2)
    points = coords[:, None, 0, :] + np.einsum("cij,pj->cpi", jacobian, reference)

    values = TriangleBasis(layout.degree).values(reference)  # (n_points, nk)
    nk, nq = layout.n_cell_basis, layout.n_pressure_basis

    def vector(coefficients):
        return np.einsum("pj,caj->cpa", values, coefficients.reshape(-1, 2, nk))

    def scalar(coefficients):
        return np.einsum("pj,cj->cp", values[:, :nq], coefficients)

    n_points = len(reference)
    connectivity = (np.arange(layout.mesh.n_cells)[:, None, None] * n_points + triangles[None]).reshape(-1, 3)
    fields = {
        "u": vector(state.u).reshape(-1, 2),
        "z": vector(state.z).reshape(-1, 2),
        "p": scalar(state.pressure).ravel(),
        "p_T": scalar(state.total_pressure).ravel(),
    }
    return points.reshape(-1, 2), connectivity, fields


def write_vtk(path, state, title=None):
    """Legacy ASCII unstructured grid with POINT_DATA for u, z, p and p_T."""

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    points, triangles, fields = lattice_fields(state)
    n_points, n_cells = len(points), len(triangles)

    lines = [
        "# vtk DataFile Version 3.0",
        title or f"poro_hdg t={state.time:.17g}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n_points} double",
    ]
    lines.extend(f"{x:.17g} {y:.17g} 0" for x, y in points)
    lines.append(f"CELLS {n_cells} {4 * n_cells}")
    lines.extend(f"3 {a} {b} {c}" for a, b, c in triangles)
    lines.append(f"CELL_TYPES {n_cells}")
    lines.extend([str(VTK_TRIANGLE)] * n_cells)
    lines.append(f"POINT_DATA {n_points}")

    point_data = [
        {"name": "u", "texture": "VECTORS", "array": fields["u"]},
        {"name": "z", "texture": "VECTORS", "array": fields["z"]},
        {"name": "p", "texture": "SCALARS", "array": fields["p"]},
        {"name": "p_T", "texture": "SCALARS", "array": fields["p_T"]},
    ]
    for item in point_data:
        if item["texture"] == "VECTORS":
            lines.append(f"VECTORS {item['name']} double")
            lines.extend(f"{a:.17g} {b:.17g} 0" for a, b in item["array"])
        else:
            lines.append(f"SCALARS {item['name']} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{value:.17g}" for value in item["array"])

    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.debug("wrote %d sub-triangles to %s", n_cells, path)
    return path


def line_samples(state, x_values, n_points=LINE_SAMPLES):
    """Pressure along vertical lines x = const, ``n_points`` evenly spaced in y."""

    mesh = state.layout.mesh
    y_low, y_high = mesh.vertices[:, 1].min(), mesh.vertices[:, 1].max()
    ys = np.linspace(y_low, y_high, n_points)
    frames = []
    for x_value in x_values:
        points = np.column_stack([np.full(n_points, float(x_value)), ys])
        cells, _ = locate_points(mesh, points)
        pressure = element_values(state.layout, state.pressure, cells, points)
        frames.append(pd.DataFrame({"x": points[:, 0], "y": ys, "p": pressure}))
    return pd.concat(frames, ignore_index=True)


def write_table(path, rows, columns=None):
    """CSV of observer rows (list of dicts) with the fixed float format."""

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(rows, columns=columns)
    frame.to_csv(path, index=False, float_format=settings.CSV_FLOAT_FORMAT, na_rep="nan")
    return path


def package_versions():
    versions = {"poro_hdg": __version__, "python": platform.python_version()}
    for name in PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


def write_manifest(path, config, layout=None, timings=None, results=None):
    """``manifest.json``: config echo, versions, timings and fingerprints."""

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": config.echo(),
        "versions": package_versions(),
        "timings": dict(timings or {}),
        "results": results or {},
    }
    if layout is not None:
        manifest["mesh"] = {
            "cells": layout.mesh.n_cells,
            "fingerprint": layout.mesh.fingerprint(),
        }
        manifest["layout"] = {
            "degree": layout.degree,
            "variant": layout.variant.value,
            "dimensions": layout.dimensions(),
            "fingerprint": layout.fingerprint(),
        }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


class ExportObserver(Observer):
    """Writes ``fields_XXXXX.vtk`` and, for cases with sample lines, ``lines_XXXXX.csv``."""

    def __init__(self, directory, vtk=True, lines=(), every=1):
        self.directory = Path(directory)
        self.vtk = vtk
        self.lines = tuple(lines)
        self.every = max(int(every), 1)
        self.paths = []

    def _export(self, step, state):
        if self.vtk:
            self.paths.append(write_vtk(self.directory / f"fields_{step:05d}.vtk", state))
        if self.lines:
            path = self.directory / f"lines_{step:05d}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            line_samples(state, self.lines).to_csv(path, index=False, float_format=settings.CSV_FLOAT_FORMAT)
            self.paths.append(path)

    def start(self, step, state):
        self._export(step, state)

    def __call__(self, step, state, previous):
        if step % self.every == 0:
            self._export(step, state)
