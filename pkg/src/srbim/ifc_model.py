"""Mapping mesh segments to IFC4 objects and assembling the project tree."""

from __future__ import annotations

import itertools
import re
import threading
import uuid
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DuplicateGlobalIdError,
    EmptyGeometryError,
    EmptyProjectError,
    MappingConfigError,
    MissingColorError,
)
from .ifc_schema import KNOWN_CLASSES, PROXY_CLASS, canonical_class_name, has_predefined_type
from .mesh import TriangleMesh
from .pointcloud_io import Segment

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

# -- GlobalId ----------------------------------------------------------------

GUID_ALPHABET = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz_$"
_GUID_RE = re.compile(r"^[0-3][0-9A-Za-z_$]{21}$")


def compress_guid(u: uuid.UUID) -> str:
    """The 22-character IFC base-64 form of a 128-bit UUID."""
    n = u.int
    chars = []
    for _ in range(22):
        n, r = divmod(n, 64)
        chars.append(GUID_ALPHABET[r])
    return "".join(reversed(chars))


def expand_guid(gid: str) -> uuid.UUID:
    if not is_valid_global_id(gid):
        raise ValueError(f"not an IFC GlobalId: {gid!r}")
    n = 0
    for ch in gid:
        n = n * 64 + GUID_ALPHABET.index(ch)
    return uuid.UUID(int=n)


def is_valid_global_id(gid: str) -> bool:
    return isinstance(gid, str) and bool(_GUID_RE.match(gid))


def new_global_id() -> str:
    return compress_guid(uuid.uuid4())


GlobalIdFactory = Callable[[], str]


class SequentialGlobalIds:
    """Reproducible GlobalId source: name-based UUIDs over a counter.

    Thread-safe; two instances with the same seed yield the same sequence.
    """

    def __init__(self, seed: str = "srbim"):
        self._ns = uuid.uuid5(uuid.NAMESPACE_URL, f"srbim:{seed}")
        self._counter = itertools.count()
        self._lock = threading.Lock()

    def __call__(self) -> str:
        with self._lock:
            i = next(self._counter)
        return compress_guid(uuid.uuid5(self._ns, str(i)))


def derived_global_id(owner: str, role: str) -> str:
    """Stable GlobalId for an auxiliary entity hanging off ``owner``."""
    return compress_guid(uuid.uuid5(expand_guid(owner), role))


# -- label -> class mapping --------------------------------------------------

def normalize_label(text: str) -> str:
    return "".join(ch for ch in text.lower() if ch.isalnum())


def _class_stem(ifc_class: str) -> str:
    return normalize_label(ifc_class[3:] if ifc_class.startswith("Ifc") else ifc_class)


@dataclass(frozen=True)
class MappingTable:
    ifc_classes: tuple[str, ...]
    aliases: Mapping[str, str] = field(default_factory=dict)
    label_names: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self):
        classes = []
        for c in self.ifc_classes:
            canon = canonical_class_name(c)
            if canon is None:
                raise MappingConfigError(f"{c!r} is not a supported IFC4 element class")
            classes.append(canon)
        aliases = {}
        for k, v in dict(self.aliases).items():
            canon = canonical_class_name(v)
            if canon is None:
                raise MappingConfigError(f"alias {k!r} targets unknown IFC4 class {v!r}")
            key = normalize_label(k)
            if not key:
                raise MappingConfigError(f"alias key {k!r} is empty after normalization")
            aliases[key] = canon
        object.__setattr__(self, "ifc_classes", tuple(classes))
        object.__setattr__(self, "aliases", aliases)
        object.__setattr__(self, "label_names", {int(k): str(v) for k, v in dict(self.label_names).items()})

    @classmethod
    def from_dict(cls, data: Mapping) -> MappingTable:
        if "classes" not in data:
            raise MappingConfigError("mapping table needs a 'classes' list")
        classes = data["classes"]
        if not isinstance(classes, list) or not all(isinstance(c, str) for c in classes):
            raise MappingConfigError("'classes' must be a list of class names")
        aliases = data.get("aliases", {})
        labels = data.get("labels", {})
        if not isinstance(aliases, Mapping) or not isinstance(labels, Mapping):
            raise MappingConfigError("'aliases' and 'labels' must be tables")
        try:
            label_names = {int(k): str(v) for k, v in labels.items()}
        except ValueError as exc:
            raise MappingConfigError(f"label ids must be integers: {exc}") from None
        return cls(tuple(classes), dict(aliases), label_names)

    @classmethod
    def load(cls, path) -> MappingTable:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise MappingConfigError(f"cannot read mapping table {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise MappingConfigError(f"invalid mapping table {path}: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def default(cls) -> MappingTable:
        text = resources.files("srbim").joinpath("data/default_mapping.toml").read_text("utf-8")
        return cls.from_dict(tomllib.loads(text))


def default_mapping_path() -> Path:
    return Path(str(resources.files("srbim").joinpath("data/default_mapping.toml")))


def map_label_to_class(label_name: str, table: MappingTable) -> tuple[str, bool]:
    """Resolve a label to ``(ifc_class, is_proxy)``.

    Aliases win; otherwise the longest class whose stem is a suffix of the
    normalized label. No match falls back to the proxy class.
    """
    if not label_name:
        raise ValueError("label must be non-empty")
    key = normalize_label(label_name)
    if key in table.aliases:
        cls = table.aliases[key]
        return cls, cls == PROXY_CLASS
    best = None
    for cls in table.ifc_classes:
        stem = _class_stem(cls)
        if stem and key.endswith(stem) and (best is None or len(stem) > len(_class_stem(best))):
            best = cls
    if best is None:
        return PROXY_CLASS, True
    return best, best == PROXY_CLASS


# -- colors ------------------------------------------------------------------

def average_color(mesh_or_colors, normalized: bool = True, name: str | None = None) -> np.ndarray:
    """Per-channel mean of the vertex colors.

    Returns 8-bit means divided by 255 when ``normalized`` (IFC styling
    range), raw 8-bit means otherwise.
    """
    colors = mesh_or_colors.vertex_colors if isinstance(mesh_or_colors, TriangleMesh) else mesh_or_colors
    if colors is None or len(colors) == 0:
        raise MissingColorError(f"segment {name or '?'} has no vertex colors")
    mean = np.asarray(colors, dtype=np.float64).reshape(-1, 3).mean(axis=0)
    return mean / 255.0 if normalized else mean


def transfer_colors(segment: Segment, mesh: TriangleMesh) -> TriangleMesh:
    """Give each mesh vertex the color of its nearest segment point.

    Equidistant candidates resolve to the lowest point index.
    """
    if len(segment) == 0:
        raise ValueError("segment has no points")
    if mesh.vertex_count == 0:
        raise ValueError("mesh has no vertices")
    tree = cKDTree(segment.positions)
    k = min(2, len(segment))
    dist, idx = tree.query(mesh.vertices, k=k)
    if k == 1:
        return mesh.replace(vertex_colors=segment.colors[idx])
    nearest = idx[:, 0].copy()
    tied = np.flatnonzero(dist[:, 1] == dist[:, 0])
    for v in tied:
        cands = tree.query_ball_point(mesh.vertices[v], r=dist[v, 0] * (1 + 1e-12) + 1e-300)
        cands = np.array(sorted(cands))
        d = np.linalg.norm(segment.positions[cands] - mesh.vertices[v], axis=1)
        nearest[v] = cands[d == d.min()][0]
    return mesh.replace(vertex_colors=segment.colors[nearest])


# -- IFC objects -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class IfcObject:
    global_id: str
    ifc_class: str
    name: str
    mesh: TriangleMesh
    style_color: tuple[float, float, float]
    is_proxy: bool
    predefined_type: str | None = None
    properties: Mapping[str, str | int | float] = field(default_factory=dict)

    def __post_init__(self):
        if not is_valid_global_id(self.global_id):
            raise ValueError(f"invalid GlobalId {self.global_id!r}")
        if self.ifc_class not in KNOWN_CLASSES:
            raise ValueError(f"unsupported IFC class {self.ifc_class!r}")
        if self.is_proxy != (self.ifc_class == PROXY_CLASS):
            raise ValueError("is_proxy must be true exactly for IfcBuildingElementProxy")
        if self.mesh.face_count == 0:
            raise EmptyGeometryError(f"object {self.name!r} has no faces")
        if any(not 0.0 <= c <= 1.0 for c in self.style_color):
            raise ValueError(f"style color {self.style_color} outside [0, 1]")


def build_ifc_object(mesh: TriangleMesh, ifc_class: str, label_name: str, *,
                     properties: Mapping[str, str | int | float] | None = None,
                     id_factory: GlobalIdFactory = new_global_id) -> IfcObject:
    if mesh.face_count == 0 or mesh.vertex_count == 0:
        raise EmptyGeometryError(f"segment {label_name!r} has an empty mesh")
    color = average_color(mesh, name=label_name)
    return IfcObject(
        global_id=id_factory(),
        ifc_class=ifc_class,
        name=label_name,
        mesh=mesh,
        style_color=tuple(float(c) for c in color),
        is_proxy=ifc_class == PROXY_CLASS,
        predefined_type="NOTDEFINED" if has_predefined_type(ifc_class) else None,
        properties=dict(properties or {}),
    )


@dataclass(frozen=True, eq=False)
class SpatialRecord:
    global_id: str
    name: str


@dataclass(frozen=True, eq=False)
class IfcProject:
    name: str
    project_id: str
    site: SpatialRecord
    building: SpatialRecord
    storey: SpatialRecord
    objects: tuple[IfcObject, ...]
    length_unit: str = "METRE"

    def global_ids(self) -> list[str]:
        return [self.project_id, self.site.global_id, self.building.global_id,
                self.storey.global_id] + [o.global_id for o in self.objects]

    def validate(self) -> None:
        if not self.objects:
            raise EmptyProjectError("project contains no objects")
        seen = set()
        for gid in self.global_ids():
            if not is_valid_global_id(gid):
                raise ValueError(f"invalid GlobalId {gid!r}")
            if gid in seen:
                raise DuplicateGlobalIdError(gid)
            seen.add(gid)


def assemble_project(objects: Sequence[IfcObject], project_name: str = "SRBIM Project", *,
                     id_factory: GlobalIdFactory = new_global_id) -> IfcProject:
    """One Project/Site/Building/Storey chain with every object in the storey."""
    if not objects:
        raise EmptyProjectError("cannot assemble a project without objects")
    project = IfcProject(
        name=project_name,
        project_id=id_factory(),
        site=SpatialRecord(id_factory(), "Site"),
        building=SpatialRecord(id_factory(), "Building"),
        storey=SpatialRecord(id_factory(), "Storey 0"),
        objects=tuple(objects),
    )
    project.validate()
    return project
