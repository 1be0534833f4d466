"""Fujita phase sweep over (p, mass) cells on the periodic grid."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .cauchy import CauchyProblem, StepControls, solve_semilinear, supersolution_certificate
from .operators import OperatorParams, SpectralGrid, bump, fujita_exponent, kernel_peak_constant
from .report import RunReport, Verdict

log = logging.getLogger(__name__)

DEFAULT_BAND = 0.1


@dataclass(frozen=True)
class SweepSpec:
    params: OperatorParams
    grid: SpectralGrid
    p_list: tuple
    mass_list: tuple
    width: float = 1.0
    controls: StepControls = field(default_factory=StepControls)
    band: float = DEFAULT_BAND
    include_critical: bool = False
    t0: float = 1.0

    @property
    def p_fujita(self) -> float:
        return fujita_exponent(self.params.s, self.grid.dim)

    def cells(self) -> list[tuple[float, float, bool]]:
        """``(p, mass_scale, critical)`` in row-major order; band cells dropped unless included."""
        out = []
        for p in self.p_list:
            critical = abs(p - self.p_fujita) <= self.band
            if critical and not self.include_critical:
                log.info("p=%g lies within %g of p_F=%g; skipped", p, self.band, self.p_fujita)
                continue
            out.extend((float(p), float(m), critical) for m in self.mass_list)
        return out


@dataclass(frozen=True)
class PhaseRow:
    p: float
    mass_scale: float
    mass: float
    verdict: Verdict
    time: float
    certificate: str
    critical: bool
    note: str = ""

    def csv_row(self) -> list[str]:
        return [repr(self.p), repr(self.mass_scale), repr(self.mass), self.verdict.value,
                repr(self.time), self.certificate, "yes" if self.critical else "no", self.note]


CSV_COLUMNS = ["p", "mass_scale", "mass", "verdict", "time", "certificate", "critical", "note"]


@dataclass(frozen=True)
class PhaseTable:
    """Sweep outcome; ``time`` is ``T_est`` for blow-ups and the horizon otherwise."""

    s: float
    dim: int
    horizon: float
    band: float
    rows: tuple

    @property
    def p_fujita(self) -> float:
        return fujita_exponent(self.s, self.dim)

    def row(self, p: float, mass_scale: float) -> PhaseRow:
        for r in self.rows:
            if r.p == p and r.mass_scale == mass_scale:
                return r
        raise KeyError((p, mass_scale))

    def failed(self, include_critical: bool = False) -> list[PhaseRow]:
        return [r for r in self.rows if r.verdict is Verdict.INCONCLUSIVE
                and (include_critical or not r.critical)]

    def monotonicity_violations(self) -> list[tuple[float, float, float]]:
        """``(p, m1, m2)`` with ``m1 < m2``, ``m1`` blown up and ``m2`` not."""
        bad = []
        for p in sorted({r.p for r in self.rows}):
            rs = sorted((r for r in self.rows if r.p == p), key=lambda r: r.mass_scale)
            for i, lo in enumerate(rs):
                if lo.verdict is not Verdict.BLEW_UP:
                    continue
                bad.extend((p, lo.mass_scale, hi.mass_scale) for hi in rs[i + 1:]
                           if hi.verdict is Verdict.GLOBAL_TO_HORIZON)
        return bad

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(r.csv_row())
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "s": self.s, "dim": self.dim, "p_fujita": self.p_fujita, "horizon": self.horizon,
            "band": self.band,
            "critical_note": (f"rows with |p - p_F| <= {self.band:g} are reported only; near the "
                              "critical exponent blow-up times exceed any practical horizon"),
            "monotonicity_violations": [list(v) for v in self.monotonicity_violations()],
            "rows": [{c: v for c, v in zip(CSV_COLUMNS, [r.p, r.mass_scale, r.mass, r.verdict.value,
                                                          r.time, r.certificate, r.critical, r.note])}
                     for r in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def decay_evidence(report: RunReport) -> bool:
    """``||u(t_max)||_inf < ||u(t_max/2)||_inf`` read off the per-step series."""
    t_end = report.final_time
    half = float(np.interp(0.5 * t_end, report.times, report.sup_norms))
    return bool(report.sup_norms[-1] < half)


def confirm_global(report: RunReport) -> RunReport:
    """Demote a GLOBAL verdict lacking decay evidence to INCONCLUSIVE."""
    if report.verdict is Verdict.GLOBAL_TO_HORIZON and not decay_evidence(report):
        return replace(report, verdict=Verdict.INCONCLUSIVE,
                       message="no decay between t_max/2 and t_max")
    return report


def _run_cell(spec: SweepSpec, p: float, mass_scale: float, critical: bool) -> PhaseRow:
    u0 = bump(spec.grid, spec.width, mass_scale)
    mass = float(u0.mass)
    try:
        rep = confirm_global(solve_semilinear(CauchyProblem(spec.params, p, u0), spec.controls))
    except Exception as exc:  # one bad cell must not sink the sweep
        return PhaseRow(p, mass_scale, mass, Verdict.INCONCLUSIVE, spec.controls.t_max, "",
                        critical, f"{type(exc).__name__}: {exc}")
    time = rep.T_est if rep.verdict is Verdict.BLEW_UP else rep.final_time
    cert = ""
    notes = [rep.message] if rep.message else []
    if rep.clamp_flagged:
        notes.append(f"clamped mass {rep.clamp_mass:.3e}")
    if p > spec.p_fujita and rep.verdict is Verdict.GLOBAL_TO_HORIZON:
        c = supersolution_certificate(p, spec.params.s, spec.grid.dim,
                                      kernel_peak_constant(spec.params.b, spec.params.s,
                                                           spec.grid.dim),
                                      mass, spec.t0)
        cert = "VALID" if c.valid else "INVALID"
        notes.append(f"D*t0^e={c.D * c.t0 ** c.exponent:.3e}")
    if critical:
        notes.append("critical band: not asserted")
    return PhaseRow(p, mass_scale, mass, rep.verdict, float(time), cert, critical,
                    "; ".join(notes))


def _run_cell_args(args):
    return _run_cell(*args)


def fujita_sweep(spec: SweepSpec, workers: int = 1, progress=None) -> PhaseTable:
    """Classify every cell; rows come back in ``p``-major, mass-minor order whatever ``workers`` is."""
    cells = spec.cells()
    args = [(spec, p, m, c) for p, m, c in cells]
    rows = []
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for row in pool.map(_run_cell_args, args):
                rows.append(row)
                if progress:
                    progress(row, len(rows), len(args))
    else:
        for a in args:
            rows.append(_run_cell_args(a))
            if progress:
                progress(rows[-1], len(rows), len(args))
    return PhaseTable(spec.params.s, spec.grid.dim, spec.controls.t_max, spec.band, tuple(rows))
