"""Exception hierarchy shared across the toolkit.

Exit-code mapping for the CLI: ValidationError -> 2, StorageError -> 3.
"""


class DensefeedError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(DensefeedError):
    """Bad user input: malformed files, dimension mismatches, bad parameters."""


class IngestParseError(ValidationError):
    """Malformed line in a coordinate-format ingest file."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class DimensionError(ValidationError):
    """Row/column counts disagree between inputs."""


class StorageError(DensefeedError):
    """I/O-level failure: corruption, missing files, version mismatch."""


class StoreCorruptionError(StorageError):
    """Store files are inconsistent with their header."""


class StoreVersionError(StorageError):
    """Store was written with an unsupported format version."""


class ShardFormatError(StorageError):
    """Shard archive violates the contiguous-key entry layout."""


class DegenerateFitError(ValidationError):
    """Cost-model design matrix is rank deficient."""

    def __init__(self, collinear: list[int]):
        self.collinear = collinear
        cols = ", ".join(f"f{i}" for i in collinear)
        super().__init__(f"design matrix is rank deficient; collinear feature columns: {cols}")


class MeterConfigError(ValidationError):
    """No usable resource meter was supplied to the profiler."""


class StageError(DensefeedError):
    """A pipeline stage raised while processing a sample."""

    def __init__(self, stage_index: int, sample_key: str | None, cause: BaseException):
        self.stage_index = stage_index
        self.sample_key = sample_key
        self.__cause__ = cause
        where = f"stage {stage_index}"
        if sample_key is not None:
            where += f", sample {sample_key!r}"
        super().__init__(f"{where}: {cause!r}")
