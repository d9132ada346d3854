# orlicz_var/services/data_manager.py
import json
import logging
import os
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core.config import settings
from ..core.errors import ConfigError
from ..models.grid import DiscreteField, Grid
from ..models.verdict import to_plain
from ..utils.calculations import shortest_repr

logger = logging.getLogger(__name__)


class DataManager:
    """Writes run artifacts into one output directory"""

    def __init__(self, out_dir: str = "out"):
        self.out_dir = out_dir
        self.report_file = os.path.join(self.out_dir, "report.json")
        self.diagnostics: Dict[str, object] = {"errors": [], "warnings": []}

        self._ensure_directories()

    def _ensure_directories(self):
        os.makedirs(self.out_dir, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def record_error(self, kind: str, message: str, exit_code: int):
        self.diagnostics["errors"].append({"kind": kind, "message": message, "exit_code": exit_code})

    def record_warning(self, message: str):
        self.diagnostics["warnings"].append(message)

    def save_report(self, data: Dict, subcommand: str, exit_code: int) -> str:
        """report.json with version and diagnostics, keys sorted for byte-stable output"""
        report = {
            "version": settings.VERSION,
            "subcommand": subcommand,
            "exit_code": exit_code,
            "diagnostics": self.diagnostics,
            **to_plain(data),
        }
        with open(self.report_file, "w", encoding="utf-8") as f:
            json.dump(report, f, indent=2, sort_keys=True, allow_nan=True)
        logger.info("wrote %s", self.report_file)
        return self.report_file

    def save_field(self, u: DiscreteField, name: str = "field.csv") -> str:
        """Header of per-axis node counts, then row-major nodal values"""
        target = self.path(name)
        values = pd.Series(u.values.ravel()).map(shortest_repr)
        with open(target, "w", newline="", encoding="utf-8") as f:
            f.write(",".join(str(n) for n in u.grid.resolution) + "\n")
            values.to_csv(f, header=False, index=False, lineterminator="\n")
        logger.info("wrote %s", target)
        return target

    def save_table(self, name: str, table: pd.DataFrame) -> str:
        target = self.path(name)
        formatted = table.copy()
        for column in formatted.columns:
            if pd.api.types.is_float_dtype(formatted[column]):
                formatted[column] = formatted[column].map(shortest_repr)
        formatted.to_csv(target, index=False, lineterminator="\n")
        logger.info("wrote %s", target)
        return target


def load_field(path: str, domain: Sequence[Tuple[float, float]]) -> DiscreteField:
    """Read a field CSV written by save_field onto the grid spanned by `domain`"""
    try:
        header = pd.read_csv(path, header=None, nrows=1, dtype=str)
        resolution = tuple(int(n) for n in header.iloc[0])
        values = pd.read_csv(path, header=None, skiprows=1, usecols=[0], dtype=float)[0].to_numpy()
    except OSError as exc:
        raise ConfigError(f"cannot read field {path}: {exc}") from None
    except pd.errors.EmptyDataError:
        raise ConfigError(f"field file {path} has no values") from None
    except ValueError as exc:
        raise ConfigError(f"malformed field file {path}: {exc}") from None
    if values.size != int(np.prod(resolution)):
        raise ConfigError(f"field file {path} has {values.size} values for resolution {resolution}")
    return DiscreteField(Grid(tuple(domain), resolution), values.reshape(resolution))


def verdict_rows(verdicts: Dict, prefix: Optional[str] = None) -> pd.DataFrame:
    rows = []
    for name, verdict in verdicts.items():
        rows.append({
            "condition": f"{prefix}{name}" if prefix else name,
            "status": verdict.status,
            "witness": json.dumps(to_plain(verdict.witness), sort_keys=True) if verdict.witness else "",
            "details": json.dumps(to_plain(verdict.details), sort_keys=True) if verdict.details else "",
        })
    return pd.DataFrame(rows, columns=["condition", "status", "witness", "details"])
