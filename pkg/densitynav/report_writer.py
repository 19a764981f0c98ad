import json
import logging
import math
from pathlib import Path

import numpy as np

from .model.trajectory_log import TrajectoryLog

logger = logging.getLogger(__name__)


def to_jsonable(value):
    """NamedTuples become objects, arrays lists, non-finite floats null."""
    if isinstance(value, tuple) and hasattr(value, "_asdict"):
        return {key: to_jsonable(item) for key, item in value._asdict().items()}
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


class ReportWriter:
    """JSON summaries and reports on disk."""

    ENCODING = "utf-8"
    INDENT = 2

    def save(self, path: Path, payload) -> None:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(to_jsonable(payload), indent=self.INDENT), encoding=self.ENCODING)
            logger.info("Wrote %s", path)
        except OSError as e:
            logger.error("Failed to write report '%s'", path, exc_info=e)
            raise

    def load(self, path: Path):
        return json.loads(path.read_text(encoding=self.ENCODING))

    def run_summary(self, scenario_name: str, logs: list[TrajectoryLog]) -> dict:
        """One entry per agent plus the overall safe/converged flags."""
        return {
            "scenario": scenario_name,
            "safe": all(log.is_safe for log in logs),
            "converged": all(log.summary.converged for log in logs),
            "agents": {
                log.agent: {**to_jsonable(log.summary), "events": log.events} for log in logs
            },
        }
