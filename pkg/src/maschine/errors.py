# src/maschine/errors.py
"""Exception hierarchy; every error carries the CLI exit code it maps to."""

from __future__ import annotations

from pathlib import Path


class MaschineError(Exception):
    """Base class for all maschine errors."""

    exit_code: int = 3


class ConfigurationError(MaschineError):
    """Invalid run specification or option combination."""

    exit_code = 2


class DataError(MaschineError):
    """Input data cannot be used as given."""

    exit_code = 3


class MalformedLineError(DataError):
    """A line of a tab-separated input file has the wrong shape."""

    def __init__(self, path: Path | str, line_no: int, line: str, reason: str) -> None:
        self.path = Path(path)
        self.line_no = line_no
        self.line = line
        super().__init__(f"{self.path}:{line_no}: {reason}: {line!r}")


class SchemaError(DataError):
    """Schema axioms are contradictory or unsupported."""


class SchemaCycleError(SchemaError):
    """The subClassOf hierarchy contains a cycle."""

    def __init__(self, cycle: list[str]) -> None:
        self.cycle = cycle
        super().__init__("subClassOf cycle: " + " -> ".join([*cycle, cycle[0]]))


class UnknownIdError(DataError, KeyError):
    """An id or name is not part of the vocabulary."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown id"


class VocabularyMismatchError(DataError):
    """A checkpoint was trained against a different vocabulary."""

    def __init__(self, expected: str, found: str) -> None:
        self.expected = expected
        self.found = found
        super().__init__(
            f"vocabulary hash mismatch: dataset has {expected}, checkpoint has {found}"
        )


class TransferError(DataError):
    """Protograph parameters cannot be transferred to the KG."""


class EvaluationError(DataError):
    """An evaluation task is undefined on the given data."""


class NumericalAbort(MaschineError):
    """Training produced a non-finite loss."""

    exit_code = 4

    def __init__(self, stage: str, epoch: int, batch: int, loss: float) -> None:
        self.stage = stage
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(
            f"non-finite loss {loss} in stage {stage!r} at epoch {epoch}, batch {batch}"
        )
