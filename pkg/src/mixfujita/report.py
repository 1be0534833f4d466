"""Run reports: time series, verdicts and their on-disk formats."""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field, replace

import numpy as np

SCHEMA = "mixfujita.run_report/1"


class Verdict(str, enum.Enum):
    GLOBAL_TO_HORIZON = "GLOBAL_TO_HORIZON"
    BLEW_UP = "BLEW_UP"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True, eq=False)
class RunReport:
    """Outcome of one evolution run.

    ``snapshots`` holds ``(t, values)`` pairs (first and last state always,
    plus any requested sample times).  ``coords`` is ``(nodes, N)`` and
    ``boundary_distance`` is ``None`` on the torus.
    """

    times: np.ndarray
    sup_norms: np.ndarray
    l1_norms: np.ndarray
    verdict: Verdict
    p: float
    dt0: float
    blowup_threshold: float
    steps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    kaplan: np.ndarray | None = None
    T_est: float | None = None
    snapshots: tuple = ()
    cell_volume: float = 1.0
    shape: tuple = ()
    coords: np.ndarray | None = None
    boundary_distance: np.ndarray | None = None
    clamp_mass: float = 0.0
    clamp_flagged: bool = False
    setting: str = "periodic"
    message: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    @property
    def final_field(self) -> np.ndarray:
        return self.snapshots[-1][1]

    @property
    def snapshot_times(self) -> np.ndarray:
        return np.array([t for t, _ in self.snapshots])

    def with_diagnostics(self, **entries) -> RunReport:
        return replace(self, diagnostics={**self.diagnostics, **entries})

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "setting": self.setting,
            "verdict": self.verdict.value,
            "T_est": self.T_est,
            "p": self.p,
            "dt0": self.dt0,
            "blowup_threshold": self.blowup_threshold,
            "final_time": self.final_time,
            "n_steps": int(len(self.steps)),
            "clamp_mass": self.clamp_mass,
            "clamp_flagged": self.clamp_flagged,
            "message": self.message,
            "series": {
                "t": self.times.tolist(),
                "sup_norm": self.sup_norms.tolist(),
                "l1_norm": self.l1_norms.tolist(),
                "kaplan": None if self.kaplan is None else self.kaplan.tolist(),
            },
            "diagnostics": _jsonable(self.diagnostics),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def series_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "sup_norm", "l1_norm", "kaplan"])
        kap = self.kaplan if self.kaplan is not None else [None] * len(self.times)
        for row in zip(self.times, self.sup_norms, self.l1_norms, kap):
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _jsonable(obj):
    """Recursively convert numpy/dataclass/enum values for ``json.dumps``."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj
