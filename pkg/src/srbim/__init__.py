"""Semantic point clouds to colorized IFC4 building models."""

__version__ = "0.1.0"

from .errors import SrbimError  # noqa: E402
from .ifc_model import (  # noqa: E402
    IfcObject,
    IfcProject,
    MappingTable,
    assemble_project,
    average_color,
    build_ifc_object,
    map_label_to_class,
    transfer_colors,
)
from .mesh import TriangleMesh  # noqa: E402
from .mfs import MfsConfig, run_mfs  # noqa: E402
from .pointcloud_io import LabeledScene, Segment, load_ply, merge_labels, partition  # noqa: E402
from .step_writer import read_step, write_step  # noqa: E402

__all__ = [
    "SrbimError", "IfcObject", "IfcProject", "MappingTable", "assemble_project",
    "average_color", "build_ifc_object", "map_label_to_class", "transfer_colors",
    "TriangleMesh", "MfsConfig", "run_mfs", "LabeledScene", "Segment", "load_ply",
    "merge_labels", "partition", "read_step", "write_step",
]
