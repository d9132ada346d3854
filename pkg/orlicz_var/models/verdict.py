# orlicz_var/models/verdict.py
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

HOLDS = "holds"
FAILS = "fails"
INCONCLUSIVE = "inconclusive"
WARNING = "warning"
SKIPPED = "skipped"


def to_plain(value):
    """JSON-friendly copy of numpy scalars and arrays"""
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    return value


@dataclass(frozen=True)
class Verdict:
    """Three-valued outcome of a finite probe, with the first violation as witness"""
    status: str
    witness: Optional[Dict[str, Any]] = None
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.status == HOLDS

    @property
    def fails(self) -> bool:
        return self.status == FAILS

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status,
            "witness": to_plain(self.witness),
            "details": to_plain(self.details),
        }


def combine(verdicts) -> str:
    """fails beats inconclusive beats holds"""
    statuses = [v.status for v in verdicts]
    if FAILS in statuses:
        return FAILS
    if INCONCLUSIVE in statuses:
        return INCONCLUSIVE
    return HOLDS
