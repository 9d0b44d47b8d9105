import json
import logging
import math
import sys
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, TextIO

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

REPORT_FIELDS = ("command", "inputs", "results", "seed", "version", "flags")


def clean(value: Any) -> Any:
    """
    Plain-JSON form of a report value. NaN and infinities become the strings
    'nan', 'inf', '-inf' so the output is strict JSON.
    """
    if hasattr(value, 'to_dict') and not isinstance(value, pd.DataFrame):
        return clean(value.to_dict())
    if isinstance(value, pd.DataFrame):
        return clean(value.to_dict(orient='records'))
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [clean(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    return value


@dataclass
class RunReport:
    command: str
    inputs: Dict[str, Any]
    results: Any
    seed: Optional[int]
    version: str
    flags: List[str] = field(default_factory=list)

    def flag(self, message: str):
        if message not in self.flags:
            logger.warning(message)
            self.flags.append(message)

    def to_dict(self) -> Dict:
        return clean({
            "command": self.command,
            "inputs": self.inputs,
            "results": self.results,
            "seed": self.seed,
            "version": self.version,
            "flags": self.flags,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        data = json.loads(text)
        missing = [k for k in REPORT_FIELDS if k not in data]
        if missing:
            raise ValueError(f"Report is missing fields: {', '.join(missing)}")
        return cls(**{k: data[k] for k in REPORT_FIELDS})


def write_report(report: RunReport, path: Optional[str] = None, stream: Optional[TextIO] = None):
    text = report.to_json() + "\n"
    if path:
        with open(path, 'w', encoding='utf-8') as f:
            f.write(text)
        logger.info(f"Report written to {path}")
    else:
        (stream or sys.stdout).write(text)


def write_table(table: pd.DataFrame, path: Optional[str] = None, stream: Optional[TextIO] = None):
    """Comma-separated plot table with a header row."""
    if path:
        table.to_csv(path, index=False, float_format='%.12g')
        logger.info(f"Table with {len(table)} rows written to {path}")
    else:
        table.to_csv(stream or sys.stdout, index=False, float_format='%.12g')
