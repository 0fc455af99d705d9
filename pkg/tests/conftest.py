from __future__ import annotations

from datetime import datetime

import numpy as np
import pytest

from srbim.ifc_model import SequentialGlobalIds
from srbim.mesh import TriangleMesh

FIXED_TIME = datetime(2024, 1, 1, 12, 0, 0)

_criteria: list[tuple[str, bool, str]] = []


def fixed_clock() -> datetime:
    return FIXED_TIME


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ids():
    return SequentialGlobalIds("tests")


def random_mesh(rng, n_vertices=60, n_faces=120, colors=True) -> TriangleMesh:
    verts = rng.uniform(-1, 1, size=(n_vertices, 3))
    faces = []
    while len(faces) < n_faces:
        f = rng.choice(n_vertices, size=3, replace=False)
        faces.append(f)
    dens = rng.uniform(0, 1, size=n_vertices)
    dens /= dens.max()
    cols = rng.integers(0, 256, size=(n_vertices, 3)) if colors else None
    return TriangleMesh(verts, np.array(faces), densities=dens, vertex_colors=cols)


@pytest.fixture
def record_criterion():
    """Record an acceptance criterion outcome for the terminal summary."""

    def record(name: str, passed: bool, detail: str = ""):
        _criteria.append((name, passed, detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _criteria:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")
