import re
import uuid

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_mesh
from srbim.errors import (
    DuplicateGlobalIdError,
    EmptyGeometryError,
    EmptyProjectError,
    MappingConfigError,
    MissingColorError,
)
from srbim.ifc_model import (
    GUID_ALPHABET,
    MappingTable,
    SequentialGlobalIds,
    assemble_project,
    average_color,
    build_ifc_object,
    compress_guid,
    derived_global_id,
    expand_guid,
    is_valid_global_id,
    map_label_to_class,
    new_global_id,
    transfer_colors,
)
from srbim.mesh import TriangleMesh
from srbim.pointcloud_io import Segment

PROXY = "IfcBuildingElementProxy"
S3DIS = ["ceiling", "floor", "wall", "beam", "column", "window", "door",
         "table", "chair", "sofa", "bookcase", "board", "clutter"]
ADVERSARIAL = [
    "Wall", "WALL", "exterior-wall", "curtain_wall", "Curtain Wall", "CURTAINWALL",
    "wall_curtain", "stair", "Stairs", "STAIR-case", "roof_slab", "slab.roof",
    "window frame", "WindowDoor", "my-beam-2", "2ndfloor", "railing!!", "_column_",
    "vegetation", "Ceiling ", "member-plate", "footings",
]


@pytest.fixture(scope="module")
def table():
    return MappingTable.default()


def oracle(label, table):
    key = re.sub(r"[^a-z0-9]", "", label.lower())
    if key in table.aliases:
        return table.aliases[key]
    matches = []
    for cls in table.ifc_classes:
        stem = re.sub(r"[^a-z0-9]", "", cls[3:].lower())
        if key[len(key) - len(stem):] == stem and len(key) >= len(stem):
            matches.append((len(stem), cls))
    if not matches:
        return PROXY
    best = max(m[0] for m in matches)
    (winner,) = [c for n, c in matches if n == best]
    return winner


def test_basic_mapping_examples(table):
    assert map_label_to_class("wall", table) == ("IfcWall", False)
    assert map_label_to_class("vegetation", table) == (PROXY, True)
    assert map_label_to_class("curtain_wall", table) == ("IfcCurtainWall", False)


def test_case_and_separator_insensitive(table):
    for label in ("Wall", "wall", "WALL", "exterior-wall"):
        assert map_label_to_class(label, table) == ("IfcWall", False)


@pytest.mark.parametrize("label", S3DIS + ADVERSARIAL)
def test_matches_longest_suffix_oracle(table, label):
    cls, proxy = map_label_to_class(label, table)
    assert cls == oracle(label, table)
    assert proxy == (cls == PROXY)


def test_s3dis_aliases(table):
    got = {lab: map_label_to_class(lab, table)[0] for lab in S3DIS}
    assert got["ceiling"] == "IfcCovering"
    assert got["floor"] == "IfcSlab"
    assert all(got[x] == PROXY for x in ("table", "chair", "sofa", "bookcase", "board", "clutter"))


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet=st.characters(min_codepoint=32, max_codepoint=126), min_size=1, max_size=25))
def test_mapping_total_and_agrees_with_oracle(label):
    table = MappingTable.default()
    cls, proxy = map_label_to_class(label, table)
    assert cls == oracle(label, table)
    assert proxy == (cls == PROXY)


def test_empty_label_rejected(table):
    with pytest.raises(ValueError):
        map_label_to_class("", table)


def test_mapping_table_validation(tmp_path):
    with pytest.raises(MappingConfigError):
        MappingTable(("IfcWal",))
    with pytest.raises(MappingConfigError):
        MappingTable(("IfcWall",), {"x": "IfcNothing"})
    with pytest.raises(MappingConfigError):
        MappingTable.from_dict({"aliases": {}})
    t = MappingTable(("ifcwall",), {"Big Thing!": "ifcslab"})
    assert t.ifc_classes == ("IfcWall",)
    assert t.aliases == {"bigthing": "IfcSlab"}
    with pytest.raises(MappingConfigError):
        MappingTable.load(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("classes = [")
    with pytest.raises(MappingConfigError):
        MappingTable.load(bad)
    good = tmp_path / "m.toml"
    good.write_text('classes = ["IfcWall"]\n[aliases]\nshelf = "IfcBuildingElementProxy"\n'
                    '[labels]\n3 = "wall"\n')
    t = MappingTable.load(good)
    assert t.label_names == {3: "wall"}
    assert map_label_to_class("shelf", t) == (PROXY, True)


# -- GlobalIds -----------------------------------------------------------------

def test_guid_round_trip_and_alphabet():
    for _ in range(200):
        u = uuid.uuid4()
        g = compress_guid(u)
        assert len(g) == 22 and set(g) <= set(GUID_ALPHABET)
        assert is_valid_global_id(g)
        assert expand_guid(g) == u
    assert compress_guid(uuid.UUID(int=0)) == "0" * 22
    assert compress_guid(uuid.UUID(int=2**128 - 1)) == "3" + "$" * 21
    assert not is_valid_global_id("4" + "0" * 21)
    assert not is_valid_global_id("0" * 21)


def test_sequential_ids_reproducible():
    a, b = SequentialGlobalIds("x"), SequentialGlobalIds("x")
    seq = [a() for _ in range(50)]
    assert seq == [b() for _ in range(50)]
    assert len(set(seq)) == 50
    assert seq[0] != SequentialGlobalIds("y")()
    assert derived_global_id(seq[0], "pset") == derived_global_id(seq[0], "pset")
    assert derived_global_id(seq[0], "pset") != derived_global_id(seq[0], "rel")


# -- colors ------------------------------------------------------------------

def test_average_color_examples():
    rgb = [[255, 0, 0], [0, 255, 0], [0, 0, 255]]
    assert average_color(rgb, normalized=False).tolist() == [85.0, 85.0, 85.0]
    assert np.allclose(average_color(rgb), [1 / 3] * 3, atol=1e-15)
    assert average_color([[10, 20, 30]] * 17, normalized=False).tolist() == [10, 20, 30]


def test_average_color_matches_accumulation_loop():
    rng = np.random.default_rng(77)
    cols = rng.integers(0, 256, (10_000, 3))
    sums = [0, 0, 0]
    for r, g, b in cols.tolist():
        sums[0] += r
        sums[1] += g
        sums[2] += b
    want = [s / len(cols) for s in sums]
    got = average_color(cols, normalized=False)
    assert np.all(np.abs(got - want) <= 1e-9)
    assert np.all(np.abs(average_color(cols) - np.array(want) / 255) <= 1e-9)


def test_average_color_missing(rng):
    m = random_mesh(rng, colors=False)
    with pytest.raises(MissingColorError, match="roof"):
        average_color(m, name="roof")


def _segment(positions, colors):
    n = len(positions)
    return Segment(0, "s", np.asarray(positions, float), np.asarray(colors, np.uint8), np.arange(n))


def test_transfer_colors_examples(rng):
    m = random_mesh(rng, colors=False)
    out = transfer_colors(_segment([[5, 5, 5]], [[255, 0, 0]]), m)
    assert np.all(out.vertex_colors == [255, 0, 0])

    seg = _segment([[0, 0, 0], [10, 0, 0]], [[255, 0, 0], [0, 0, 255]])
    m2 = TriangleMesh([[1, 0, 0], [9, 0, 0], [5, 1, 0]], [[0, 1, 2]])
    cols = transfer_colors(seg, m2).vertex_colors
    assert cols[0].tolist() == [255, 0, 0] and cols[1].tolist() == [0, 0, 255]
    # (5, 1, 0) is equidistant: lowest point index wins
    assert cols[2].tolist() == [255, 0, 0]


def test_transfer_colors_matches_exhaustive_scan():
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1, 1, (1000, 3))
    cols = rng.integers(0, 256, (1000, 3))
    verts = rng.uniform(-1, 1, (500, 3))
    m = TriangleMesh(verts, [[0, 1, 2]])
    got = transfer_colors(_segment(pts, cols), m).vertex_colors
    for v in range(500):
        d = ((pts - verts[v]) ** 2).sum(axis=1)
        assert got[v].tolist() == cols[int(np.argmin(d))].tolist()


def test_transfer_colors_ties_on_a_lattice():
    pts = np.array([[x, y, 0.0] for x in range(4) for y in range(4)])
    cols = np.arange(48).reshape(16, 3)
    verts = np.array([[0.5, 0.5, 0.0], [1.5, 2.5, 0.0], [3.0, 0.5, 0.0]])
    got = transfer_colors(_segment(pts, cols), TriangleMesh(verts, [[0, 1, 2]])).vertex_colors
    for v, c in zip(verts, got):
        d = np.round(((pts - v) ** 2).sum(axis=1), 12)
        assert c.tolist() == cols[np.flatnonzero(d == d.min())[0]].tolist()


# -- objects and projects ---------------------------------------------------

def test_build_ifc_object(rng):
    m = random_mesh(rng)
    a = build_ifc_object(m, "IfcWall", "wall")
    b = build_ifc_object(m, "IfcWall", "wall")
    assert not a.is_proxy and len(a.global_id) == 22
    assert a.global_id != b.global_id
    assert a.predefined_type == "NOTDEFINED"
    assert a.mesh.vertices is m.vertices and a.mesh.faces is m.faces
    assert np.allclose(a.style_color, average_color(m))
    p = build_ifc_object(m, PROXY, "clutter")
    assert p.is_proxy


def test_build_rejects_empty_geometry(rng):
    m = TriangleMesh(np.eye(3), np.zeros((0, 3), int), vertex_colors=np.zeros((3, 3)))
    with pytest.raises(EmptyGeometryError):
        build_ifc_object(m, "IfcWall", "wall")


def test_assemble_three_objects(rng, ids):
    objs = [build_ifc_object(random_mesh(rng), c, n, id_factory=ids)
            for c, n in (("IfcSlab", "floor"), ("IfcWall", "wall"), (PROXY, "clutter"))]
    project = assemble_project(objs, id_factory=ids)
    gids = project.global_ids()
    assert len(gids) == 7 and len(set(gids)) == 7
    assert all(is_valid_global_id(g) for g in gids)
    assert len(project.objects) == 3
    assert project.length_unit == "METRE"


def test_assemble_single_proxy(rng):
    obj = build_ifc_object(random_mesh(rng), PROXY, "vegetation")
    project = assemble_project([obj])
    assert project.objects == (obj,)
    assert project.storey.global_id in project.global_ids()


def test_assemble_rejects_duplicates_and_empty(rng):
    ids = iter([new_global_id()] * 2 + [new_global_id() for _ in range(4)])
    a = build_ifc_object(random_mesh(rng), "IfcWall", "a", id_factory=lambda: next(ids))
    b = build_ifc_object(random_mesh(rng), "IfcWall", "b", id_factory=lambda: next(ids))
    with pytest.raises(DuplicateGlobalIdError) as err:
        assemble_project([a, b], id_factory=lambda: next(ids))
    assert err.value.global_id == a.global_id
    with pytest.raises(EmptyProjectError):
        assemble_project([])
