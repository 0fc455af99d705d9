"""End-to-end orchestration: PLY in, IFC4 out, with a per-segment run report."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable

from .errors import ConfigError, MfsError, PipelineFailure, SrbimError
from .ifc_model import (
    GlobalIdFactory,
    MappingTable,
    assemble_project,
    build_ifc_object,
    default_mapping_path,
    map_label_to_class,
    new_global_id,
)
from .mfs import MfsConfig, MfsResult, run_mfs_detailed
from .pointcloud_io import Segment, load_ply, merge_labels, partition, write_mesh_ply
from .step_writer import write_step

log = logging.getLogger(__name__)

BUILTIN_MAPPING = "builtin"


@dataclass(frozen=True)
class PipelineConfig:
    input_path: str
    output_path: str
    mapping_path: str = BUILTIN_MAPPING
    labels_path: str | None = None
    mfs: MfsConfig = field(default_factory=MfsConfig)
    jobs: int = 1
    dump_intermediate: bool = False
    dump_dir: str | None = None
    min_segment_points: int = 50
    report_path: str | None = None
    project_name: str = "SRBIM Project"

    def __post_init__(self):
        for name in ("input_path", "output_path", "mapping_path"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be non-empty")
        if self.labels_path is not None and not self.labels_path:
            raise ConfigError("labels_path must be non-empty when given")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if self.min_segment_points < 4:
            raise ConfigError(f"min_segment_points must be >= 4, got {self.min_segment_points}")

    @property
    def resolved_dump_dir(self) -> Path:
        if self.dump_dir:
            return Path(self.dump_dir)
        out = Path(self.output_path)
        return out.with_name(out.stem + "_debug")


@dataclass
class SegmentRecord:
    label_id: int
    label: str
    point_count: int
    status: str  # succeeded | skipped | failed
    ifc_class: str
    is_proxy: bool
    alpha: float
    threshold: float | None = None
    vertices_pre_filter: int | None = None
    vertices_post_filter: int | None = None
    removed_vertices: int | None = None
    faces: int | None = None
    global_id: str | None = None
    timings: dict[str, float] = field(default_factory=dict)
    error: dict[str, str] | None = None
    mfs: MfsResult | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("mfs")
        if self.status != "succeeded":
            for k in ("vertices_pre_filter", "vertices_post_filter", "removed_vertices", "faces"):
                if d[k] is None:
                    d.pop(k)
        return d


@dataclass
class RunReport:
    segments: list[SegmentRecord] = field(default_factory=list)
    output_path: str | None = None
    elapsed: float = 0.0

    def _count(self, status: str) -> int:
        return sum(1 for s in self.segments if s.status == status)

    @property
    def succeeded(self) -> int:
        return self._count("succeeded")

    @property
    def skipped(self) -> int:
        return self._count("skipped")

    @property
    def failed(self) -> int:
        return self._count("failed")

    def totals(self) -> dict:
        return {
            "segments_in": len(self.segments),
            "succeeded": self.succeeded,
            "skipped": self.skipped,
            "failed": self.failed,
            "points": sum(s.point_count for s in self.segments),
            "vertices_pre_filter": sum(s.vertices_pre_filter or 0 for s in self.segments),
            "vertices_post_filter": sum(s.vertices_post_filter or 0 for s in self.segments),
            "removed_vertices": sum(s.removed_vertices or 0 for s in self.segments),
            "output": self.output_path,
            "elapsed_s": round(self.elapsed, 3),
        }

    def to_dict(self) -> dict:
        return {"segments": [s.to_dict() for s in self.segments], "totals": self.totals()}


def _safe_name(seg: SegmentRecord) -> str:
    stem = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in seg.label)
    return f"{seg.label_id:03d}_{stem}"


def write_density_csvs(record: SegmentRecord, directory) -> list[Path]:
    """Pre- and post-filter density tables for one segment."""
    res = record.mfs
    if res is None:
        return []
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    keep = res.normalized >= res.threshold
    raw = res.initial.densities
    paths = []
    for suffix, dens, norm in (
        ("pre", raw, res.normalized),
        ("post", raw[keep], res.filtered.densities),
    ):
        path = directory / f"{_safe_name(record)}_densities_{suffix}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["vertex_index", "density", "normalized_density"])
            for i, (d, n) in enumerate(zip(dens.tolist(), norm.tolist())):
                w.writerow([i, repr(d), repr(n)])
        paths.append(path)
    return paths


def emit_report(report: RunReport, path, densities_dir=None) -> None:
    """Write the JSON report and, optionally, per-segment density CSVs."""
    path = Path(path)
    try:
        path.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
        if densities_dir is not None:
            for rec in report.segments:
                write_density_csvs(rec, densities_dir)
    except OSError as exc:
        raise SrbimError(f"cannot write report to {path}: {exc}") from exc


@dataclass(frozen=True)
class _Failure:
    stage: str
    message: str


def _process(segment: Segment, config: MfsConfig):
    # failures travel back as plain data; exceptions with custom __init__ don't unpickle
    try:
        return run_mfs_detailed(segment, config)
    except MfsError as exc:
        return _Failure(exc.stage, str(exc.cause))


def _load_inputs(config: PipelineConfig):
    try:
        if config.mapping_path == BUILTIN_MAPPING:
            table = MappingTable.load(default_mapping_path())
        else:
            table = MappingTable.load(config.mapping_path)
    except SrbimError as exc:
        raise ConfigError(str(exc)) from exc
    try:
        scene = load_ply(config.input_path, class_names=table.label_names)
        if config.labels_path is not None:
            scene = merge_labels(scene, config.labels_path, table.label_names)
        segments = partition(scene) if scene.is_labeled else None
    except (OSError, SrbimError, ValueError) as exc:
        raise ConfigError(f"cannot load input: {exc}") from exc
    if segments is None:
        raise ConfigError(f"{config.input_path} has no labels and no --labels file was given")
    return table, segments


def run_pipeline(config: PipelineConfig, *, id_factory: GlobalIdFactory = new_global_id,
                 clock: Callable[[], datetime] = datetime.now) -> RunReport:
    """Load, partition, refine every segment, map to IFC and write the model.

    Segments that are too small or fail a stage are left out of the model and
    recorded in the report. Raises :class:`PipelineFailure` (with the report
    attached) when nothing could be emitted.
    """
    t_start = time.perf_counter()
    table, segments = _load_inputs(config)
    report = RunReport()
    alpha = config.mfs.alpha

    work: list[tuple[SegmentRecord, Segment]] = []
    for seg in segments:
        cls, proxy = map_label_to_class(seg.label_name, table)
        rec = SegmentRecord(seg.label_id, seg.label_name, len(seg), "pending", cls, proxy, alpha)
        report.segments.append(rec)
        if len(seg) < config.min_segment_points:
            rec.status = "skipped"
            rec.error = {"stage": "partition",
                         "message": f"{len(seg)} points < min_segment_points={config.min_segment_points}"}
            log.info("skipping %s: %d points", seg.label_name, len(seg))
        else:
            work.append((rec, seg))

    if config.jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=min(config.jobs, len(work))) as pool:
            futures = [pool.submit(_process, seg, config.mfs) for _, seg in work]
            results = [f.result() for f in futures]
    else:
        results = [_process(seg, config.mfs) for _, seg in work]

    objects = []
    for (rec, seg), res in zip(work, results):
        if isinstance(res, _Failure):
            rec.status = "failed"
            rec.error = {"stage": res.stage, "message": res.message}
            log.warning("segment %s failed at %s: %s", rec.label, res.stage, res.message)
            continue
        rec.mfs = res
        rec.threshold = res.threshold
        rec.vertices_pre_filter = res.initial.vertex_count
        rec.vertices_post_filter = res.filtered.vertex_count
        rec.removed_vertices = res.removed_count
        rec.faces = res.mesh.face_count
        rec.timings = {k: round(v, 6) for k, v in res.timings.items()}
        try:
            obj = build_ifc_object(
                res.mesh, rec.ifc_class, rec.label, id_factory=id_factory,
                properties={"SourceLabel": rec.label, "PointCount": rec.point_count, "Alpha": alpha},
            )
        except SrbimError as exc:
            rec.status = "failed"
            rec.error = {"stage": "ifc", "message": str(exc)}
            continue
        rec.status = "succeeded"
        rec.global_id = obj.global_id
        objects.append(obj)

    if config.dump_intermediate:
        _dump(report, config.resolved_dump_dir)

    report.elapsed = time.perf_counter() - t_start
    if not objects:
        raise PipelineFailure("no segment produced an IFC object", report)
    project = assemble_project(objects, config.project_name, id_factory=id_factory)
    write_step(project, config.output_path, clock=clock)
    report.output_path = str(config.output_path)
    report.elapsed = time.perf_counter() - t_start
    return report


def _dump(report: RunReport, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for rec in report.segments:
        if rec.mfs is None:
            continue
        write_density_csvs(rec, directory)
        stem = _safe_name(rec)
        write_mesh_ply(rec.mfs.initial, directory / f"{stem}_0_poisson.ply")
        write_mesh_ply(rec.mfs.filtered, directory / f"{stem}_1_filtered.ply")
        write_mesh_ply(rec.mfs.mesh, directory / f"{stem}_2_smoothed.ply")

