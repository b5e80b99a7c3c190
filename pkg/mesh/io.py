"""ASCII mesh format: header, vertices, cells, then one line per tagged facet."""

import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from common.exceptions import MeshError

from .choices import DisplacementTag, FlowTag
from .services import build_topology

logger = logging.getLogger(__name__)

HEADER = "poromesh 2d"


def write_mesh(mesh, path):
    path = Path(path)
    lines = [HEADER, str(mesh.n_vertices)]
    lines.extend(f"{x:.17g} {y:.17g}" for x, y in mesh.vertices)
    lines.append(str(mesh.n_cells))
    lines.extend(f"{a} {b} {c}" for a, b, c in mesh.cells)
    for f, (dtag, ftag) in sorted(mesh.boundary_tags.items()):
        v0, v1 = mesh.facets[f]
        lines.append(f"facet {v0} {v1} {dtag.value} {ftag.value}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.debug("wrote %r to %s", mesh, path)
    return path


def _take(lines, cursor, count, what):
    chunk = lines[cursor : cursor + count]
    if len(chunk) != count:
        raise MeshError(f"truncated mesh file: expected {count} {what}")
    return chunk


def read_mesh(path):
    lines = [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines()]
    lines = [line for line in lines if line]
    if not lines or lines[0] != HEADER:
        raise MeshError(f"{path}: missing '{HEADER}' header")

    try:
        n_vertices = int(lines[1])
        vertices = np.array(
            [[float(v) for v in row.split()] for row in _take(lines, 2, n_vertices, "vertices")]
        )
        cursor = 2 + n_vertices
        n_cells = int(lines[cursor])
        cells = np.array(
            [[int(v) for v in row.split()] for row in _take(lines, cursor + 1, n_cells, "cells")],
            dtype=np.int64,
        )
        cursor += 1 + n_cells
    except (IndexError, ValueError) as exc:
        raise MeshError(f"{path}: malformed mesh file ({exc})") from exc

    mesh = build_topology(vertices.reshape(-1, 2), cells)
    lookup = {(int(a), int(b)): f for f, (a, b) in enumerate(mesh.facets)}
    tags = {}
    for row in lines[cursor:]:
        parts = row.split()
        if len(parts) != 5 or parts[0] != "facet":
            raise MeshError(f"{path}: bad facet line {row!r}")
        key = tuple(sorted((int(parts[1]), int(parts[2]))))
        if key not in lookup:
            raise MeshError(f"{path}: facet {key} is not an edge of the mesh")
        tags[lookup[key]] = (DisplacementTag(parts[3]), FlowTag(parts[4]))

    if tags:
        mesh = replace(mesh, boundary_tags=tags)
    return mesh.clean()
