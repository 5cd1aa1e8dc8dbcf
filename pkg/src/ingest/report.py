import logging
from typing import Dict, Optional

from pydantic import BaseModel, Field, model_validator

logger = logging.getLogger(__name__)


class IngestError(ValueError):
    """Fatal problem while parsing an input dataset."""

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class IngestReport(BaseModel):
    """Row-level accounting for one parse call."""
    source: str
    rows_read: int = 0
    rows_ok: int = 0
    rows_rejected: int = 0
    rejection_reasons: Dict[str, int] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _counts_add_up(self) -> "IngestReport":
        if self.rows_ok + self.rows_rejected != self.rows_read:
            raise ValueError(
                f"rows_ok ({self.rows_ok}) + rows_rejected ({self.rows_rejected}) "
                f"!= rows_read ({self.rows_read})"
            )
        return self

    def summary(self) -> str:
        reasons = ", ".join(f"{k}={v}" for k, v in sorted(self.rejection_reasons.items()))
        return (
            f"{self.source}: read={self.rows_read} ok={self.rows_ok} "
            f"rejected={self.rows_rejected}" + (f" ({reasons})" if reasons else "")
        )


class ReportBuilder:
    """Mutable tally that freezes into an IngestReport."""

    def __init__(self, source: str):
        self.source = source
        self.read = 0
        self.ok = 0
        self.reasons: Dict[str, int] = {}

    def accept(self) -> None:
        self.read += 1
        self.ok += 1

    def reject(self, reason: str) -> None:
        self.read += 1
        self.reasons[reason] = self.reasons.get(reason, 0) + 1

    def build(self) -> IngestReport:
        report = IngestReport(
            source=self.source,
            rows_read=self.read,
            rows_ok=self.ok,
            rows_rejected=self.read - self.ok,
            rejection_reasons=dict(sorted(self.reasons.items())),
        )
        if report.rows_rejected:
            logger.warning(report.summary())
        else:
            logger.info(report.summary())
        return report
