"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class SrbimError(Exception):
    """Base class for all errors raised by this package."""


# -- point cloud input -------------------------------------------------------

class PlyError(SrbimError):
    pass


class PlyHeaderError(PlyError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class PlySchemaError(PlyError):
    def __init__(self, prop: str, message: str | None = None):
        super().__init__(message or f"missing required vertex property {prop!r}")
        self.property = prop


class PlyTruncationError(PlyError):
    pass


class LabelFileError(SrbimError):
    pass


class LabelCountError(LabelFileError):
    def __init__(self, expected: int, found: int):
        super().__init__(f"label file has {found} entries but the scene has {expected} points")
        self.expected = expected
        self.found = found


class LabelParseError(LabelFileError):
    def __init__(self, line: int, token: str):
        super().__init__(f"line {line}: expected an integer label, got {token!r}")
        self.line = line
        self.token = token


class EmptyInputError(SrbimError):
    pass


# -- meshing -----------------------------------------------------------------

class InsufficientPointsError(SrbimError):
    pass


class ReconstructionError(SrbimError):
    def __init__(self, message: str, label: str | None = None):
        super().__init__(message if label is None else f"[{label}] {message}")
        self.label = label


class SolverError(ReconstructionError):
    def __init__(self, message: str, residual: float, label: str | None = None):
        super().__init__(f"{message} (relative residual {residual:.3e})", label)
        self.residual = residual


class ZeroMaxDensityError(SrbimError):
    pass


class AllRemovedError(SrbimError):
    def __init__(self, alpha: float, dmin: float, dmax: float):
        super().__init__(
            f"alpha={alpha} removes every vertex (density range [{dmin:.6g}, {dmax:.6g}])"
        )
        self.alpha = alpha
        self.density_min = dmin
        self.density_max = dmax


class MfsError(SrbimError):
    """A stage failure inside the mesh/filter/smooth chain, tagged with its origin."""

    def __init__(self, stage: str, label: str | None, cause: Exception):
        super().__init__(f"stage={stage} label={label}: {cause}")
        self.stage = stage
        self.label = label
        self.cause = cause


# -- IFC model and serialization --------------------------------------------

class ConfigError(SrbimError):
    pass


class MappingConfigError(ConfigError):
    pass


class MissingColorError(SrbimError):
    pass


class EmptyGeometryError(SrbimError):
    pass


class EmptyProjectError(SrbimError):
    pass


class DuplicateGlobalIdError(SrbimError):
    def __init__(self, global_id: str):
        super().__init__(f"duplicate GlobalId {global_id!r}")
        self.global_id = global_id


class StepSyntaxError(SrbimError):
    def __init__(self, offset: int, expected: str, found: str = ""):
        msg = f"offset {offset}: expected {expected}"
        if found:
            msg += f", found {found!r}"
        super().__init__(msg)
        self.offset = offset
        self.expected = expected


class StepReferenceError(SrbimError):
    def __init__(self, missing: list[int]):
        super().__init__("dangling reference(s): " + ", ".join(f"#{i}" for i in missing))
        self.missing = missing


class StepSerializationError(SrbimError):
    pass


# -- pipeline ----------------------------------------------------------------

class PipelineFailure(SrbimError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
