"""Port for persisting trajectories, estimates and benchmark reports."""

from pathlib import Path
from typing import Protocol

import numpy as np
from pydantic import BaseModel

from peiv_estimation.domain.models import McReport, Trajectory


class ResultStoragePort(Protocol):
    """Port for reading measurement files and writing result files."""

    def save_trajectory(self, trajectory: Trajectory, path: Path, meta: BaseModel) -> Path:
        """Write the trajectory CSV and its ``.meta.json`` sidecar."""
        ...

    def load_measurements(self, path: Path, m: int) -> np.ndarray:
        """Return the m×N measurement matrix stored in ``path``."""
        ...

    def save_states(self, means: np.ndarray, path: Path) -> Path:
        ...

    def save_json(self, payload: BaseModel, path: Path) -> Path:
        ...

    def save_report(self, report: McReport, out_dir: Path, meta: BaseModel) -> list[Path]:
        ...
