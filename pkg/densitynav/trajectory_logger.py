import csv
import logging
from pathlib import Path

import numpy as np

from .model.trajectory_log import TrajectoryLog

logger = logging.getLogger(__name__)


class TrajectoryLogger:
    """CSV export of trajectory logs, decimated to the reporting step."""

    DELIMITER = ","
    ENCODING = "utf-8"
    HEADER_FILE_POSITION = 0
    FLOAT_FORMAT = "{:.10g}"

    def columns(self, log: TrajectoryLog) -> list[str]:
        return (
            ["t"]
            + log.state_labels
            + log.control_labels
            + ["rho", "psi"]
            + [f"d_{name}" for name in log.clearance_names]
            + ["saturated"]
        )

    def decimation_indices(self, t: np.ndarray, log_step: float) -> np.ndarray:
        """Rows on the log_step grid, always keeping the final row."""
        if len(t) < 2:
            return np.arange(len(t))
        stride = max(1, int(round(log_step / (t[1] - t[0]))))
        indices = np.arange(0, len(t), stride)
        if indices[-1] != len(t) - 1:
            indices = np.append(indices, len(t) - 1)
        return indices

    def write(self, log: TrajectoryLog, path: Path, log_step: float) -> None:
        """Write one agent's log; the file is replaced."""
        path.parent.mkdir(parents=True, exist_ok=True)
        columns = self.columns(log)
        try:
            with path.open("w", newline="", encoding=self.ENCODING) as file:
                writer = csv.DictWriter(file, fieldnames=columns, delimiter=self.DELIMITER)
                if self._should_write_header(file):
                    writer.writeheader()
                for i in self.decimation_indices(log.t, log_step):
                    writer.writerow(self._prepare_row(log, i, columns))
        except OSError as e:
            logger.error("Failed to write trajectory CSV '%s'", path, exc_info=e)
            raise
        logger.info("Wrote %s", path)

    def write_grid(self, grid: np.ndarray, path: Path) -> None:
        """Occupancy matrix: rows are y cells (bottom first), columns x cells."""
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding=self.ENCODING) as file:
            writer = csv.writer(file, delimiter=self.DELIMITER)
            for row in grid:
                writer.writerow([self.FLOAT_FORMAT.format(v) for v in row])
        logger.info("Wrote %s", path)

    def write_table(self, columns: dict[str, np.ndarray], path: Path, stride: int = 1) -> None:
        """Column arrays of equal length as CSV (arm runs)."""
        path.parent.mkdir(parents=True, exist_ok=True)
        names = list(columns)
        length = len(next(iter(columns.values())))
        indices = list(range(0, length, max(1, stride)))
        if indices[-1] != length - 1:
            indices.append(length - 1)
        with path.open("w", newline="", encoding=self.ENCODING) as file:
            writer = csv.DictWriter(file, fieldnames=names, delimiter=self.DELIMITER)
            writer.writeheader()
            for i in indices:
                writer.writerow({name: self.FLOAT_FORMAT.format(columns[name][i]) for name in names})
        logger.info("Wrote %s", path)

    def _should_write_header(self, file_handle) -> bool:
        return file_handle.tell() == self.HEADER_FILE_POSITION

    def _prepare_row(self, log: TrajectoryLog, i: int, columns: list[str]) -> dict:
        values = (
            [log.t[i]]
            + list(log.states[i])
            + list(log.controls[i])
            + [log.rho[i], log.psi[i]]
            + list(log.clearances[i])
        )
        row = {name: self.FLOAT_FORMAT.format(float(v)) for name, v in zip(columns, values)}
        row["saturated"] = int(bool(log.saturated[i]))
        return row
