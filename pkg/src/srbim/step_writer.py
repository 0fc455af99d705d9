"""ISO 10303-21 (STEP physical file) serialization of an IFC4 project.

The writer emits one entity per line with ids assigned in dependency order,
so the same project and timestamp always produce the same bytes. The reader
is a generic Part 21 parser: it checks syntax and reference closure only.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .errors import StepReferenceError, StepSerializationError, StepSyntaxError
from .ifc_model import IfcObject, IfcProject, derived_global_id
from .ifc_schema import ELEMENT_TAIL_ATTRIBUTES

# -- value model -------------------------------------------------------------


@dataclass(frozen=True)
class Ref:
    id: int


@dataclass(frozen=True)
class Enum:
    value: str


@dataclass(frozen=True)
class Typed:
    type_name: str
    value: Any


class _Derived:
    def __repr__(self) -> str:
        return "DERIVED"


DERIVED = _Derived()
UNSET = None


@dataclass(eq=False)
class StepEntity:
    id: int
    type_name: str
    attributes: list = field(default_factory=list)

    def refs(self) -> list[int]:
        out: list[int] = []
        _collect_refs(self.attributes, out)
        return out


def _collect_refs(value, out: list[int]) -> None:
    if isinstance(value, Ref):
        out.append(value.id)
    elif isinstance(value, (list, tuple)):
        for v in value:
            _collect_refs(v, out)
    elif isinstance(value, Typed):
        _collect_refs(value.value, out)


# -- encoding ----------------------------------------------------------------


def format_real(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise StepSerializationError(f"cannot serialize non-finite real {x!r}")
    s = repr(x)
    if "e" in s:
        mant, exp = s.split("e")
        if "." not in mant:
            mant += "."
        return f"{mant}E{exp}"
    return s


def encode_string(text: str) -> str:
    out = []
    wide: list[str] = []

    def flush():
        if wide:
            out.append("\\X2\\" + "".join(wide) + "\\X0\\")
            wide.clear()

    for ch in text:
        o = ord(ch)
        if 0x80 <= o <= 0xFF:
            flush()
            out.append(f"\\X\\{o:02X}")
        elif 0x20 <= o <= 0x7E:
            flush()
            out.append("''" if ch == "'" else "\\\\" if ch == "\\" else ch)
        elif o <= 0xFFFF:
            wide.append(f"{o:04X}")
        else:
            flush()
            out.append(f"\\X4\\{o:08X}\\X0\\")
    flush()
    return "'" + "".join(out) + "'"


def format_value(v) -> str:
    if v is None:
        return "$"
    if v is DERIVED:
        return "*"
    if isinstance(v, Ref):
        return f"#{v.id}"
    if isinstance(v, Enum):
        return f".{v.value}."
    if isinstance(v, bool):
        return ".T." if v else ".F."
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_real(v)
    if isinstance(v, str):
        return encode_string(v)
    if isinstance(v, Typed):
        return f"{v.type_name}({format_value(v.value)})"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "(" + ",".join(format_value(x) for x in v) + ")"
    raise StepSerializationError(f"cannot serialize value of type {type(v).__name__}")


def format_entity(e: StepEntity) -> str:
    return f"#{e.id}={e.type_name}(" + ",".join(format_value(a) for a in e.attributes) + ");"


# -- IFC graph ---------------------------------------------------------------


class _Graph:
    def __init__(self):
        self.entities: list[StepEntity] = []

    def add(self, type_name: str, *attrs) -> Ref:
        e = StepEntity(len(self.entities) + 1, type_name.upper(), list(attrs))
        self.entities.append(e)
        return Ref(e.id)


def _is_closed(faces: np.ndarray) -> bool:
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e.sort(axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    return bool(np.all(counts == 2))


def _property_value(v):
    if isinstance(v, bool):
        return Typed("IFCBOOLEAN", v)
    if isinstance(v, (int, np.integer)):
        return Typed("IFCINTEGER", int(v))
    if isinstance(v, (float, np.floating)):
        return Typed("IFCREAL", float(v))
    return Typed("IFCLABEL", str(v))


def _emit_object(g: _Graph, obj: IfcObject, body_ctx: Ref, parent_placement: Ref,
                 origin_axes: Ref) -> Ref:
    mesh = obj.mesh
    coords = g.add("IfcCartesianPointList3D", [[float(c) for c in v] for v in mesh.vertices])
    faceset = g.add("IfcTriangulatedFaceSet", coords, None, _is_closed(mesh.faces),
                    (mesh.faces + 1).tolist(), None)
    r, gr, b = obj.style_color
    colour = g.add("IfcColourRgb", None, float(r), float(gr), float(b))
    rendering = g.add("IfcSurfaceStyleRendering", colour, 0.0, None, None, None, None, None, None,
                      Enum("NOTDEFINED"))
    style = g.add("IfcSurfaceStyle", obj.name, Enum("BOTH"), [rendering])
    g.add("IfcStyledItem", faceset, [style], None)
    shape = g.add("IfcShapeRepresentation", body_ctx, "Body", "Tessellation", [faceset])
    pds = g.add("IfcProductDefinitionShape", None, None, [shape])
    placement = g.add("IfcLocalPlacement", parent_placement, origin_axes)

    tail = []
    for attr in ELEMENT_TAIL_ATTRIBUTES[obj.ifc_class]:
        if attr == "PredefinedType" and obj.predefined_type:
            tail.append(Enum(obj.predefined_type))
        else:
            tail.append(None)
    element = g.add(obj.ifc_class, obj.global_id, None, obj.name, None, None, placement, pds, None, *tail)

    if obj.properties:
        props = [g.add("IfcPropertySingleValue", k, None, _property_value(v), None)
                 for k, v in obj.properties.items()]
        pset = g.add("IfcPropertySet", derived_global_id(obj.global_id, "pset"), None,
                     "Pset_SRBIM", None, props)
        g.add("IfcRelDefinesByProperties", derived_global_id(obj.global_id, "pset-rel"), None,
              None, None, [element], pset)
    return element


def project_entities(project: IfcProject) -> list[StepEntity]:
    """The DATA section of ``project`` as entities, ids in emission order."""
    project.validate()
    g = _Graph()
    units = [
        g.add("IfcSIUnit", DERIVED, Enum("LENGTHUNIT"), None, Enum(project.length_unit)),
        g.add("IfcSIUnit", DERIVED, Enum("AREAUNIT"), None, Enum("SQUARE_METRE")),
        g.add("IfcSIUnit", DERIVED, Enum("VOLUMEUNIT"), None, Enum("CUBIC_METRE")),
        g.add("IfcSIUnit", DERIVED, Enum("PLANEANGLEUNIT"), None, Enum("RADIAN")),
    ]
    unit_assignment = g.add("IfcUnitAssignment", units)
    origin = g.add("IfcCartesianPoint", [0.0, 0.0, 0.0])
    zdir = g.add("IfcDirection", [0.0, 0.0, 1.0])
    xdir = g.add("IfcDirection", [1.0, 0.0, 0.0])
    axes = g.add("IfcAxis2Placement3D", origin, zdir, xdir)
    ctx = g.add("IfcGeometricRepresentationContext", None, "Model", 3, 1e-5, axes, None)
    body_ctx = g.add("IfcGeometricRepresentationSubContext", "Body", "Model", DERIVED, DERIVED,
                     DERIVED, DERIVED, ctx, None, Enum("MODEL_VIEW"), None)
    proj = g.add("IfcProject", project.project_id, None, project.name, None, None, None, None,
                 [ctx], unit_assignment)

    site_pl = g.add("IfcLocalPlacement", None, axes)
    site = g.add("IfcSite", project.site.global_id, None, project.site.name, None, None, site_pl,
                 None, None, Enum("ELEMENT"), None, None, None, None, None)
    bldg_pl = g.add("IfcLocalPlacement", site_pl, axes)
    bldg = g.add("IfcBuilding", project.building.global_id, None, project.building.name, None,
                 None, bldg_pl, None, None, Enum("ELEMENT"), None, None, None)
    storey_pl = g.add("IfcLocalPlacement", bldg_pl, axes)
    storey = g.add("IfcBuildingStorey", project.storey.global_id, None, project.storey.name, None,
                   None, storey_pl, None, None, Enum("ELEMENT"), 0.0)
    g.add("IfcRelAggregates", derived_global_id(project.project_id, "aggregates"), None, None,
          None, proj, [site])
    g.add("IfcRelAggregates", derived_global_id(project.site.global_id, "aggregates"), None,
          None, None, site, [bldg])
    g.add("IfcRelAggregates", derived_global_id(project.building.global_id, "aggregates"), None,
          None, None, bldg, [storey])

    elements = [_emit_object(g, obj, body_ctx, storey_pl, axes) for obj in project.objects]
    g.add("IfcRelContainedInSpatialStructure",
          derived_global_id(project.storey.global_id, "contains"), None, None, None,
          elements, storey)
    return g.entities


def serialize_step(project: IfcProject, *, name: str = "model.ifc",
                   timestamp: datetime | None = None) -> str:
    entities = project_entities(project)
    ts = (timestamp or datetime.now()).replace(microsecond=0).isoformat()
    header = [
        "ISO-10303-21;",
        "HEADER;",
        "FILE_DESCRIPTION(('ViewDefinition [ReferenceView]'),'2;1');",
        f"FILE_NAME({encode_string(name)},{encode_string(ts)},(''),(''),"
        f"{encode_string('srbim ' + __version__)},'srbim','');",
        "FILE_SCHEMA(('IFC4'));",
        "ENDSEC;",
        "DATA;",
    ]
    body = [format_entity(e) for e in entities]
    footer = ["ENDSEC;", "END-ISO-10303-21;"]
    return "\n".join(header + body + footer) + "\n"


def write_step(project: IfcProject, path, *, clock: Callable[[], datetime] = datetime.now) -> None:
    """Write ``project`` to ``path`` as an IFC4 STEP file.

    The whole file is rendered in memory first, so a project that fails
    validation leaves no partial output behind.
    """
    path = Path(path)
    text = serialize_step(project, name=path.name, timestamp=clock())
    path.write_bytes(text.encode("ascii"))


# -- reader ------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|/\*.*?\*/)
  | (?P<magic>END-ISO-10303-21|ISO-10303-21)
  | (?P<ref>\#\d+)
  | (?P<real>[+-]?\d+\.\d*(?:[Ee][+-]?\d+)?)
  | (?P<int>[+-]?\d+)
  | (?P<string>'(?:[^']|'')*')
  | (?P<enum>\.[A-Za-z_][A-Za-z0-9_]*\.)
  | (?P<binary>"[0-3][0-9A-Fa-f]*")
  | (?P<keyword>!?[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[()=;,$*])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass
class _Tok:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise StepSyntaxError(pos, "a valid token", text[pos:pos + 10])
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), pos))
        pos = m.end()
    toks.append(_Tok("eof", "", n))
    return toks


_ESCAPE_RE = re.compile(r"\\X2\\((?:[0-9A-F]{4})*)\\X0\\|\\X4\\((?:[0-9A-F]{8})*)\\X0\\"
                        r"|\\X\\([0-9A-F]{2})|\\S\\(.)|\\P[A-I]\\|\\\\")


def decode_string(raw: str) -> str:
    body = raw[1:-1].replace("''", "'")

    def sub(m: re.Match) -> str:
        if m.group(1) is not None:
            h = m.group(1)
            return "".join(chr(int(h[i:i + 4], 16)) for i in range(0, len(h), 4))
        if m.group(2) is not None:
            h = m.group(2)
            return "".join(chr(int(h[i:i + 8], 16)) for i in range(0, len(h), 8))
        if m.group(3) is not None:
            return chr(int(m.group(3), 16))
        if m.group(4) is not None:
            return chr(ord(m.group(4)) + 128)
        if m.group(0) == "\\\\":
            return "\\"
        return ""

    return _ESCAPE_RE.sub(sub, body)


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def expect(self, kind: str, text: str | None = None, what: str | None = None) -> _Tok:
        t = self.tok
        if t.kind != kind or (text is not None and t.text != text):
            raise StepSyntaxError(t.offset, what or repr(text or kind), t.text)
        self.i += 1
        return t

    def accept(self, kind: str, text: str | None = None) -> bool:
        t = self.tok
        if t.kind == kind and (text is None or t.text == text):
            self.i += 1
            return True
        return False

    def value(self):
        t = self.tok
        self.i += 1
        if t.kind == "punct":
            if t.text == "$":
                return None
            if t.text == "*":
                return DERIVED
            if t.text == "(":
                self.i -= 1
                return self.params()
        elif t.kind == "ref":
            return Ref(int(t.text[1:]))
        elif t.kind == "int":
            return int(t.text)
        elif t.kind == "real":
            return float(t.text)
        elif t.kind == "string":
            return decode_string(t.text)
        elif t.kind == "enum":
            v = t.text[1:-1]
            return True if v == "T" else False if v == "F" else Enum(v)
        elif t.kind == "binary":
            return t.text
        elif t.kind == "keyword":
            inner = self.params()
            if len(inner) != 1:
                raise StepSyntaxError(t.offset, "a single typed parameter")
            return Typed(t.text, inner[0])
        raise StepSyntaxError(t.offset, "a parameter", t.text)

    def params(self) -> list:
        self.expect("punct", "(")
        out = []
        if self.accept("punct", ")"):
            return out
        while True:
            out.append(self.value())
            if self.accept("punct", ")"):
                return out
            self.expect("punct", ",", "',' or ')'")

    def record(self) -> tuple[str, list]:
        name = self.expect("keyword", what="an entity type name").text
        return name.upper(), self.params()

    def parse(self) -> tuple[list[StepEntity], list[StepEntity], list[int]]:
        self.expect("magic", "ISO-10303-21", "'ISO-10303-21;'")
        self.expect("punct", ";")
        self.expect("keyword", "HEADER", "'HEADER;'")
        self.expect("punct", ";")
        header = []
        while not (self.tok.kind == "keyword" and self.tok.text == "ENDSEC"):
            name, args = self.record()
            self.expect("punct", ";")
            header.append(StepEntity(0, name, args))
        self.expect("keyword", "ENDSEC")
        self.expect("punct", ";")

        entities: list[StepEntity] = []
        offsets: list[int] = []
        seen_data = False
        while self.tok.kind == "keyword" and self.tok.text == "DATA":
            seen_data = True
            self.i += 1
            if self.tok.kind == "punct" and self.tok.text == "(":
                self.params()
            self.expect("punct", ";")
            while self.tok.kind == "ref":
                start = self.tok.offset
                eid = int(self.expect("ref").text[1:])
                self.expect("punct", "=")
                if self.tok.kind == "punct" and self.tok.text == "(":
                    self.i += 1
                    parts = []
                    while not self.accept("punct", ")"):
                        parts.append(Typed(*self.record()))
                    e = StepEntity(eid, "COMPLEX", parts)
                else:
                    e = StepEntity(eid, *self.record())
                self.expect("punct", ";")
                entities.append(e)
                offsets.append(start)
            self.expect("keyword", "ENDSEC", "'ENDSEC;' or an entity instance")
            self.expect("punct", ";")
        if not seen_data:
            raise StepSyntaxError(self.tok.offset, "'DATA;'", self.tok.text)
        self.expect("magic", "END-ISO-10303-21", "'END-ISO-10303-21;'")
        self.expect("punct", ";")
        self.expect("eof", what="end of file")
        return header, entities, offsets


@dataclass(eq=False)
class StepFile:
    header: list[StepEntity]
    entities: list[StepEntity]

    def by_id(self) -> dict[int, StepEntity]:
        return {e.id: e for e in self.entities}

    def of_type(self, type_name: str) -> list[StepEntity]:
        t = type_name.upper()
        return [e for e in self.entities if e.type_name == t]


def parse_step(text: str) -> StepFile:
    header, entities, offsets = _Parser(text).parse()
    ids: set[int] = set()
    for e, off in zip(entities, offsets):
        if e.id <= 0:
            raise StepSyntaxError(off, "a positive entity id", f"#{e.id}")
        if e.id in ids:
            raise StepSyntaxError(off, "a unique entity id", f"#{e.id}")
        ids.add(e.id)
    missing = sorted({r for e in entities for r in e.refs() if r not in ids})
    if missing:
        raise StepReferenceError(missing)
    return StepFile(header, entities)


def read_step_file(path) -> StepFile:
    return parse_step(Path(path).read_bytes().decode("latin-1"))


def read_step(path) -> list[StepEntity]:
    """Parse a Part 21 file into its DATA-section entities."""
    return read_step_file(path).entities


# -- helpers for consumers of parsed files -----------------------------------

ROOTED_TYPES = frozenset(
    ["IFCPROJECT", "IFCSITE", "IFCBUILDING", "IFCBUILDINGSTOREY", "IFCRELAGGREGATES",
     "IFCRELCONTAINEDINSPATIALSTRUCTURE", "IFCPROPERTYSET", "IFCRELDEFINESBYPROPERTIES"]
    + [c.upper() for c in ELEMENT_TAIL_ATTRIBUTES]
)


def global_ids(entities: Iterable[StepEntity]) -> list[str]:
    """GlobalIds of every rooted entity, in file order."""
    return [e.attributes[0] for e in entities if e.type_name in ROOTED_TYPES]


def extract_meshes(entities: Sequence[StepEntity]) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Map element GlobalId -> (vertices, 0-based faces) for tessellated bodies."""
    by_id = {e.id: e for e in entities}
    out = {}
    for e in entities:
        tail = ELEMENT_TAIL_ATTRIBUTES.get(_ifc_case(e.type_name))
        if tail is None or len(e.attributes) != 8 + len(tail):
            continue
        rep = e.attributes[6]
        if not isinstance(rep, Ref):
            continue
        pds = by_id[rep.id]
        for shape_ref in pds.attributes[2]:
            for item_ref in by_id[shape_ref.id].attributes[3]:
                item = by_id[item_ref.id]
                if item.type_name != "IFCTRIANGULATEDFACESET":
                    continue
                coords = np.array(by_id[item.attributes[0].id].attributes[0], dtype=np.float64)
                faces = np.array(item.attributes[3], dtype=np.int64) - 1
                out[e.attributes[0]] = (coords, faces)
    return out


def _ifc_case(type_name: str) -> str:
    upper = type_name.upper()
    for cls in ELEMENT_TAIL_ATTRIBUTES:
        if cls.upper() == upper:
            return cls
    return ""
