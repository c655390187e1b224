"""Exception hierarchy for the grading pipeline.

Every error carries an ``exit_code`` so the CLI can map failures to process
exit status: 2 for configuration, schema and missing-input problems, 1 for
runtime failures.
"""
from typing import Optional


class DRGradeError(Exception):
    exit_code = 1

    def __init__(self, message: str = ""):
        super().__init__(message)
        self.message = message


# ----------------- Input / schema errors (exit 2) ------------------

class ConfigError(DRGradeError):
    exit_code = 2


class MissingArtifact(DRGradeError):
    exit_code = 2

    def __init__(self, path):
        super().__init__(f"Missing required file: {path}")
        self.path = path


class WorkdirLocked(DRGradeError):
    exit_code = 2


class ParseError(DRGradeError):
    exit_code = 2

    def __init__(self, line: int, reason: str = "could not parse record"):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class ValidationError(DRGradeError):
    exit_code = 2

    def __init__(self, line: Optional[int], reason: str):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{reason}")
        self.line = line
        self.reason = reason


class DuplicateId(DRGradeError):
    exit_code = 2

    def __init__(self, image_id: str, line: Optional[int] = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"Duplicate image_id {image_id!r}{where}")
        self.image_id = image_id
        self.line = line


class SchemaMismatch(DRGradeError):
    exit_code = 2


class UnknownFormatVersion(DRGradeError):
    exit_code = 2


class InvalidGroups(DRGradeError):
    exit_code = 2


# ----------------- Runtime errors (exit 1) ------------------

class EmptyImage(DRGradeError):
    def __init__(self, message: str = "No pixel above the blank threshold"):
        super().__init__(message)


class UnknownImage(DRGradeError):
    def __init__(self, image_id: str):
        super().__init__(f"Unknown image: {image_id}")
        self.image_id = image_id


class OrphanInstance(DRGradeError):
    def __init__(self, image_id: str):
        super().__init__(f"Lesion instance references unknown image_id {image_id!r}")
        self.image_id = image_id


class OutOfRange(DRGradeError):
    pass


class EmptyTable(DRGradeError):
    def __init__(self, message: str = "Feature table is empty"):
        super().__init__(message)


class TooFewRows(DRGradeError):
    pass


class NonFiniteLoss(DRGradeError):
    pass


class SolverDiverged(DRGradeError):
    pass


class LengthMismatch(DRGradeError):
    pass


class EmptyInput(DRGradeError):
    pass


class OutOfRangeLabel(DRGradeError):
    pass
