import csv
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np
from pydantic import BaseModel

from peiv_estimation.core.errors import ContractViolationError
from peiv_estimation.core.logger import get_logger
from peiv_estimation.domain.models import EstimatorName, McReport, MethodSummary, Trajectory

logger = get_logger("adapters.csvstore")

RMSE_FILE = "rmse.csv"
ELLIPSE_FILE = "ellipse.csv"
META_FILE = "meta.json"


def fmt(value: float) -> str:
    """17 significant digits: exact round trip for float64."""
    return f"{float(value):.17g}"


def meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def _component_names(prefix: str, d: int) -> list[str]:
    return [prefix] if d <= 1 else [f"{prefix}_{i}" for i in range(1, d + 1)]


def _component_values(values: np.ndarray, d: int) -> list[str]:
    if d == 0:
        return [""]
    return [fmt(v) for v in np.asarray(values).reshape(-1)]


class CsvResultStore:
    """Plain-text result files: CSV for tables, JSON for metadata and estimates."""

    def __init__(self, *, encoding: str = "utf-8") -> None:
        self.encoding = encoding

    def _write_rows(self, path: Path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding=self.encoding, newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        logger.debug("Wrote %s", path)
        return path

    def save_json(self, payload: BaseModel, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(payload.model_dump_json(indent=2) + "\n", encoding=self.encoding)
        logger.debug("Wrote %s", path)
        return path

    def save_trajectory(self, trajectory: Trajectory, path: Path, meta: BaseModel) -> Path:
        """Rows k = 0..N; row 0 carries x_0 and empty measurement fields."""
        n = trajectory.states.shape[0]
        m = trajectory.measurements.shape[0]
        header = ["k", *(f"x_{i}" for i in range(1, n + 1)), *(f"y_{j}" for j in range(1, m + 1))]
        rows = []
        for k in range(trajectory.N + 1):
            xs = [fmt(v) for v in trajectory.states[:, k]]
            ys = [""] * m if k == 0 else [fmt(v) for v in trajectory.measurements[:, k - 1]]
            rows.append([str(k), *xs, *ys])
        self._write_rows(path, header, rows)
        self.save_json(meta, meta_path(path))
        logger.info("Trajectory with N=%d written to %s", trajectory.N, path)
        return path

    def load_measurements(self, path: Path, m: int) -> np.ndarray:
        """Read y_1..y_m columns; rows with empty measurement fields are skipped.

        Raises:
            FileNotFoundError: ``path`` does not exist.
            ContractViolationError: column count does not match m, or a row does not parse.
        """
        if not path.exists():
            raise FileNotFoundError(f"Data file not found: {path}")
        with path.open("r", encoding=self.encoding, newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None:
                raise ContractViolationError(f"{path} is empty")
            y_cols = [i for i, name in enumerate(header) if name.strip().startswith("y_")]
            if len(y_cols) != m:
                raise ContractViolationError(f"{path} has {len(y_cols)} measurement columns, model expects m={m}")
            values = []
            for line_no, row in enumerate(reader, start=2):
                try:
                    fields = [row[i].strip() for i in y_cols]
                    if all(f == "" for f in fields):
                        continue
                    values.append([float(f) for f in fields])
                except (IndexError, ValueError) as exc:
                    raise ContractViolationError(f"{path}, line {line_no}: unreadable measurement row {row}") from exc
        if not values:
            raise ContractViolationError(f"{path} holds no measurements")
        return np.asarray(values, dtype=float).T

    def save_states(self, means: np.ndarray, path: Path) -> Path:
        n = means.shape[0]
        header = ["k", *(f"x_{i}" for i in range(1, n + 1))]
        rows = [[str(k), *(fmt(v) for v in means[:, k])] for k in range(means.shape[1])]
        return self._write_rows(path, header, rows)

    def _rmse_rows(self, summaries: Sequence[MethodSummary], d: int) -> list[list[str]]:
        return [
            [
                row.method.value,
                str(row.N),
                str(row.m_effective),
                fmt(row.rmse_theta),
                fmt(row.rmse_x0),
                *_component_values(row.q05, d),
                *_component_values(row.q95, d),
                str(row.failures),
            ]
            for row in summaries
        ]

    def save_report(self, report: McReport, out_dir: Path, meta: BaseModel) -> list[Path]:
        """Write rmse.csv, ellipse.csv and meta.json into ``out_dir``."""
        d = report.config.model.d
        rmse_header = [
            "method",
            "N",
            "M_effective",
            "rmse_theta",
            "rmse_x0",
            *_component_names("q05", d),
            *_component_names("q95", d),
            "failures",
        ]
        paths = [self._write_rows(out_dir / RMSE_FILE, rmse_header, self._rmse_rows(report.summaries, d))]

        ellipse_header = [
            "method",
            "center_x0",
            "center_theta",
            "cov_xx",
            "cov_xt",
            "cov_tt",
            "radius_scale",
            "area",
            "degenerate",
        ]
        ellipse_rows = []
        for method in EstimatorName:
            ellipse = report.ellipses.get(method)
            if ellipse is None:
                continue
            ellipse_rows.append(
                [
                    method.value,
                    fmt(ellipse.center[0]),
                    fmt(ellipse.center[1]),
                    fmt(ellipse.cov[0, 0]),
                    fmt(ellipse.cov[0, 1]),
                    fmt(ellipse.cov[1, 1]),
                    fmt(ellipse.radius_scale),
                    fmt(ellipse.area),
                    str(ellipse.degenerate).lower(),
                ]
            )
        paths.append(self._write_rows(out_dir / ELLIPSE_FILE, ellipse_header, ellipse_rows))
        paths.append(self.save_json(meta, out_dir / META_FILE))
        logger.info("Benchmark report written to %s", out_dir)
        return paths
