"""Labeled point cloud ingestion (PLY + sidecar labels) and semantic partitioning."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, NamedTuple

import numpy as np

from .errors import (
    EmptyInputError,
    LabelCountError,
    LabelParseError,
    PlyHeaderError,
    PlySchemaError,
    PlyTruncationError,
)
from .mesh import TriangleMesh

PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}
_FORMATS = {"ascii": None, "binary_little_endian": "<", "binary_big_endian": ">"}
_LABEL_COMMENT = re.compile(r"^label\s+(-?\d+)\s+(\S.*)$")
POSITION_PROPS = ("x", "y", "z")
COLOR_PROPS = ("red", "green", "blue")


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class LabeledPoint(NamedTuple):
    position: tuple[float, float, float]
    color: tuple[int, int, int]
    label: int | None


@dataclass(frozen=True, eq=False)
class LabeledScene:
    """A point cloud with per-point RGB and an optional semantic label.

    ``labels`` is ``None`` for a scene that still awaits a sidecar label
    file. Arrays are read-only once the scene is built.
    """

    positions: np.ndarray
    colors: np.ndarray
    labels: np.ndarray | None = None
    class_names: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self):
        pos = np.asarray(self.positions)
        if pos.dtype not in (np.float32, np.float64):
            pos = pos.astype(np.float64)
        pos = np.array(pos.reshape(-1, 3))
        if not np.all(np.isfinite(pos)):
            raise ValueError("point positions must be finite")
        col = np.asarray(self.colors)
        if col.dtype != np.uint8:
            if col.size and (col.min() < 0 or col.max() > 255):
                raise ValueError("colors must be in [0, 255]")
        col = np.array(col, dtype=np.uint8).reshape(-1, 3)
        if len(col) != len(pos):
            raise ValueError(f"{len(col)} colors for {len(pos)} points")
        object.__setattr__(self, "positions", _frozen(pos))
        object.__setattr__(self, "colors", _frozen(col))
        names = {int(k): str(v) for k, v in dict(self.class_names).items()}
        if self.labels is not None:
            lab = np.array(self.labels, dtype=np.int64).reshape(-1)
            if len(lab) != len(pos):
                raise ValueError(f"{len(lab)} labels for {len(pos)} points")
            if lab.size and lab.min() < 0:
                raise ValueError("label ids must be non-negative")
            for i in np.unique(lab).tolist():
                names.setdefault(i, f"class_{i}")
            object.__setattr__(self, "labels", _frozen(lab))
        object.__setattr__(self, "class_names", names)

    def __len__(self) -> int:
        return len(self.positions)

    def __getitem__(self, i: int) -> LabeledPoint:
        return LabeledPoint(
            tuple(float(c) for c in self.positions[i]),
            tuple(int(c) for c in self.colors[i]),
            None if self.labels is None else int(self.labels[i]),
        )

    def __iter__(self) -> Iterator[LabeledPoint]:
        return (self[i] for i in range(len(self)))

    @property
    def points(self) -> list[LabeledPoint]:
        return list(self)

    @property
    def is_labeled(self) -> bool:
        return self.labels is not None


@dataclass(frozen=True, eq=False)
class Segment:
    """All scene points sharing one label id, in scene order."""

    label_id: int
    label_name: str
    positions: np.ndarray
    colors: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def points(self) -> list[LabeledPoint]:
        return [
            LabeledPoint(tuple(float(c) for c in p), tuple(int(c) for c in col), self.label_id)
            for p, col in zip(self.positions, self.colors)
        ]


# -- PLY ---------------------------------------------------------------------

@dataclass
class _Property:
    name: str
    dtype: str
    count_dtype: str | None = None  # set for list properties


@dataclass
class _Element:
    name: str
    count: int
    properties: list[_Property] = field(default_factory=list)

    @property
    def has_lists(self) -> bool:
        return any(p.count_dtype for p in self.properties)


@dataclass
class _Header:
    fmt: str
    elements: list[_Element]
    comments: list[str]
    data_offset: int
    line_count: int


def _parse_header(raw: bytes) -> _Header:
    end = raw.find(b"end_header")
    if end < 0:
        nlines = raw.count(b"\n") + 1
        raise PlyHeaderError("missing end_header", nlines)
    eol = raw.find(b"\n", end)
    data_offset = len(raw) if eol < 0 else eol + 1
    try:
        text = raw[:end].decode("ascii")
    except UnicodeDecodeError as exc:
        line = raw[: exc.start].count(b"\n") + 1
        raise PlyHeaderError("non-ASCII byte in header", line) from None
    lines = text.replace("\r", "").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].strip() != "ply":
        raise PlyHeaderError("file does not start with 'ply'", 1)

    fmt = None
    elements: list[_Element] = []
    comments: list[str] = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        key = parts[0]
        if key == "format":
            if len(parts) != 3 or parts[1] not in _FORMATS or parts[2] != "1.0":
                raise PlyHeaderError(f"unsupported format line {line!r}", lineno)
            fmt = parts[1]
        elif key == "comment":
            comments.append(line.strip()[len("comment"):].strip())
        elif key == "obj_info":
            continue
        elif key == "element":
            if len(parts) != 3 or not parts[2].isdigit():
                raise PlyHeaderError(f"malformed element line {line!r}", lineno)
            elements.append(_Element(parts[1], int(parts[2])))
        elif key == "property":
            if not elements:
                raise PlyHeaderError("property before any element", lineno)
            if len(parts) == 5 and parts[1] == "list":
                if parts[2] not in PLY_TYPES or parts[3] not in PLY_TYPES:
                    raise PlyHeaderError(f"unknown list type in {line!r}", lineno)
                elements[-1].properties.append(
                    _Property(parts[4], PLY_TYPES[parts[3]], PLY_TYPES[parts[2]])
                )
            elif len(parts) == 3 and parts[1] in PLY_TYPES:
                elements[-1].properties.append(_Property(parts[2], PLY_TYPES[parts[1]]))
            else:
                raise PlyHeaderError(f"malformed property line {line!r}", lineno)
        else:
            raise PlyHeaderError(f"unexpected header keyword {key!r}", lineno)
    if fmt is None:
        raise PlyHeaderError("missing format line", 2)
    return _Header(fmt, elements, comments, data_offset, len(lines) + 1)


def _read_ascii(body: bytes, header: _Header) -> dict[str, np.ndarray | None]:
    lines = body.decode("ascii", errors="replace").splitlines()
    lines = [ln for ln in lines if ln.strip()]
    cursor = 0
    out: dict[str, np.ndarray | None] = {}
    for el in header.elements:
        chunk = lines[cursor:cursor + el.count]
        if len(chunk) < el.count:
            raise PlyTruncationError(
                f"element {el.name!r} declares {el.count} rows but only {len(chunk)} are present"
            )
        first_line = header.line_count + cursor + 1
        cursor += el.count
        if el.has_lists:
            out[el.name] = None
            continue
        rows = [ln.split() for ln in chunk]
        width = len(el.properties)
        for i, r in enumerate(rows):
            if len(r) != width:
                raise PlyTruncationError(
                    f"line {first_line + i}: expected {width} values for {el.name!r}, got {len(r)}"
                )
        table = np.array(rows, dtype=object).reshape(el.count, width)
        dtype = np.dtype([(p.name, p.dtype) for p in el.properties])
        arr = np.empty(el.count, dtype=dtype)
        for j, p in enumerate(el.properties):
            col = table[:, j].astype(str)
            if p.dtype.startswith("f"):
                arr[p.name] = col.astype(p.dtype)
            else:
                arr[p.name] = col.astype(np.int64).astype(p.dtype)
        out[el.name] = arr
    return out


def _read_binary(body: bytes, header: _Header) -> dict[str, np.ndarray | None]:
    order = _FORMATS[header.fmt]
    offset = 0
    out: dict[str, np.ndarray | None] = {}
    for el in header.elements:
        if not el.has_lists:
            dtype = np.dtype([(p.name, order + p.dtype) for p in el.properties])
            need = dtype.itemsize * el.count
            if offset + need > len(body):
                have = (len(body) - offset) // max(dtype.itemsize, 1)
                raise PlyTruncationError(
                    f"element {el.name!r} declares {el.count} rows but only {have} are present"
                )
            arr = np.frombuffer(body, dtype=dtype, count=el.count, offset=offset)
            out[el.name] = arr.astype(dtype.newbyteorder("="))
            offset += need
            continue
        for row in range(el.count):
            for p in el.properties:
                if p.count_dtype:
                    cdt = np.dtype(order + p.count_dtype)
                    if offset + cdt.itemsize > len(body):
                        raise PlyTruncationError(f"element {el.name!r} truncated at row {row}")
                    n = int(np.frombuffer(body, cdt, 1, offset)[0])
                    offset += cdt.itemsize + n * np.dtype(p.dtype).itemsize
                else:
                    offset += np.dtype(p.dtype).itemsize
                if offset > len(body):
                    raise PlyTruncationError(f"element {el.name!r} truncated at row {row}")
        out[el.name] = None
    return out


def _header_class_names(comments: list[str]) -> dict[int, str]:
    names = {}
    for c in comments:
        m = _LABEL_COMMENT.match(c)
        if m:
            names[int(m.group(1))] = m.group(2).strip()
    return names


def load_ply(path, label_property: str = "label",
             class_names: Mapping[int, str] | None = None) -> LabeledScene:
    """Read a labeled point cloud from an ASCII or binary PLY file.

    ``comment label <id> <name>`` header lines name label ids; they take
    precedence over ``class_names``, and ids named by neither become
    ``class_<id>``. When ``label_property`` is absent the scene comes back
    unlabeled, ready for :func:`merge_labels`.
    """
    raw = Path(path).read_bytes()
    header = _parse_header(raw)
    vertex = next((e for e in header.elements if e.name == "vertex"), None)
    if vertex is None:
        raise PlySchemaError("vertex", "PLY file has no 'vertex' element")
    props = {p.name: p for p in vertex.properties}
    for name in POSITION_PROPS + COLOR_PROPS:
        if name not in props:
            raise PlySchemaError(name)
        if props[name].count_dtype:
            raise PlySchemaError(name, f"vertex property {name!r} must be scalar")
    for name in POSITION_PROPS:
        if not props[name].dtype.startswith("f"):
            raise PlySchemaError(name, f"vertex property {name!r} must be float or double")
    for name in COLOR_PROPS:
        if props[name].dtype != "u1":
            raise PlySchemaError(name, f"vertex property {name!r} must be uchar")
    has_label = label_property in props
    if has_label and (props[label_property].count_dtype or props[label_property].dtype.startswith("f")):
        raise PlySchemaError(label_property, f"label property {label_property!r} must be an integer")

    body = raw[header.data_offset:]
    data = _read_ascii(body, header) if header.fmt == "ascii" else _read_binary(body, header)
    v = data["vertex"]
    pos_dtype = np.result_type(*(props[n].dtype for n in POSITION_PROPS))
    positions = np.stack([v[n].astype(pos_dtype) for n in POSITION_PROPS], axis=1)
    colors = np.stack([v[n] for n in COLOR_PROPS], axis=1).astype(np.uint8)
    labels = v[label_property].astype(np.int64) if has_label else None

    names = dict(class_names or {})
    names.update(_header_class_names(header.comments))
    return LabeledScene(positions, colors, labels, names)


def write_ply(scene: LabeledScene, path, binary: bool = True, label_property: str = "label") -> None:
    """Write a scene as PLY, including ``comment label`` lines for its class names."""
    pos = scene.positions
    ptype = "float" if pos.dtype == np.float32 else "double"
    lines = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0"]
    for k in sorted(scene.class_names):
        lines.append(f"comment label {k} {scene.class_names[k]}")
    lines.append(f"element vertex {len(scene)}")
    lines += [f"property {ptype} {n}" for n in POSITION_PROPS]
    lines += [f"property uchar {n}" for n in COLOR_PROPS]
    if scene.labels is not None:
        lines.append(f"property int {label_property}")
    lines.append("end_header")
    head = ("\n".join(lines) + "\n").encode("ascii")

    fields = [(n, "<" + pos.dtype.str[1:]) for n in POSITION_PROPS] + [(n, "u1") for n in COLOR_PROPS]
    if scene.labels is not None:
        fields.append((label_property, "<i4"))
    rec = np.empty(len(scene), dtype=fields)
    for j, n in enumerate(POSITION_PROPS):
        rec[n] = pos[:, j]
    for j, n in enumerate(COLOR_PROPS):
        rec[n] = scene.colors[:, j]
    if scene.labels is not None:
        rec[label_property] = scene.labels

    with open(path, "wb") as fh:
        fh.write(head)
        if binary:
            fh.write(rec.tobytes())
        else:
            fmt = "%.9g" if pos.dtype == np.float32 else "%.17g"
            for r in rec:
                vals = [fmt % r[n] for n in POSITION_PROPS] + [str(int(r[n])) for n in COLOR_PROPS]
                if scene.labels is not None:
                    vals.append(str(int(r[label_property])))
                fh.write((" ".join(vals) + "\n").encode("ascii"))


def write_mesh_ply(mesh: TriangleMesh, path) -> None:
    """Binary PLY dump of a mesh with optional density and color per vertex."""
    fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
    if mesh.vertex_colors is not None:
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    if mesh.densities is not None:
        fields.append(("density", "<f8"))
    rec = np.empty(mesh.vertex_count, dtype=fields)
    for j, n in enumerate("xyz"):
        rec[n] = mesh.vertices[:, j]
    if mesh.vertex_colors is not None:
        for j, n in enumerate(COLOR_PROPS):
            rec[n] = mesh.vertex_colors[:, j]
    if mesh.densities is not None:
        rec["density"] = mesh.densities
    tdef = {"<f8": "double", "u1": "uchar"}
    lines = ["ply", "format binary_little_endian 1.0", f"element vertex {mesh.vertex_count}"]
    lines += [f"property {tdef[t]} {n}" for n, t in fields]
    lines += [f"element face {mesh.face_count}", "property list uchar int vertex_indices", "end_header"]
    faces = np.empty(mesh.face_count, dtype=[("n", "u1"), ("i", "<i4", (3,))])
    faces["n"] = 3
    faces["i"] = mesh.faces
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        fh.write(rec.tobytes())
        fh.write(faces.tobytes())


# -- labels and partitioning -------------------------------------------------

def read_label_file(path) -> np.ndarray:
    """One decimal integer per line; a single trailing newline is allowed."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    out = np.empty(len(lines), dtype=np.int64)
    for i, line in enumerate(lines):
        tok = line.strip()
        try:
            out[i] = int(tok)
        except ValueError:
            raise LabelParseError(i + 1, tok) from None
        if out[i] < 0:
            raise LabelParseError(i + 1, tok)
    return out


def merge_labels(scene: LabeledScene, labels_path,
                 class_names: Mapping[int, str] | None = None) -> LabeledScene:
    """Attach sidecar labels positionally, replacing any embedded labels."""
    labels = read_label_file(labels_path)
    if len(labels) != len(scene):
        raise LabelCountError(len(scene), len(labels))
    names = dict(class_names or {})
    # synthesized placeholders must not shadow names supplied by the caller
    names.update({k: v for k, v in scene.class_names.items() if v != f"class_{k}"})
    return LabeledScene(scene.positions, scene.colors, labels, names)


def partition(scene: LabeledScene) -> list[Segment]:
    """Group points by label id; segments sorted by id, points in scene order."""
    if len(scene) == 0:
        raise EmptyInputError("cannot partition an empty scene")
    if scene.labels is None:
        raise ValueError("scene has no labels; merge a label file first")
    order = np.argsort(scene.labels, kind="stable")
    ids, starts = np.unique(scene.labels[order], return_index=True)
    bounds = list(starts) + [len(order)]
    segments = []
    for j, label in enumerate(ids.tolist()):
        idx = order[bounds[j]:bounds[j + 1]]
        segments.append(Segment(
            label_id=label,
            label_name=scene.class_names[label],
            positions=_frozen(scene.positions[idx].astype(np.float64)),
            colors=_frozen(scene.colors[idx].copy()),
            indices=_frozen(idx.copy()),
        ))
    return segments


def scene_from_segments(segments: list[Segment], class_names: Mapping[int, str] | None = None) -> LabeledScene:
    """Rebuild a scene from segments, in segment order."""
    pos = np.concatenate([s.positions for s in segments])
    col = np.concatenate([s.colors for s in segments])
    lab = np.concatenate([np.full(len(s), s.label_id, dtype=np.int64) for s in segments])
    names = {s.label_id: s.label_name for s in segments}
    names.update(class_names or {})
    return LabeledScene(pos, col, lab, names)

