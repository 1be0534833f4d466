import json

import pytest

from mixfujita import OperatorParams, SpectralGrid, StepControls, Verdict
from mixfujita.sweep import (
    PhaseRow,
    PhaseTable,
    SweepSpec,
    confirm_global,
    decay_evidence,
    fujita_sweep,
)

P = OperatorParams(1.0, 1.0, 0.5)
GRID = SpectralGrid(1, 256.0, 2048)
CTRL = StepControls(t_max=20.0, sample_times=(10.0,))


def spec(**kw):
    base = dict(params=P, grid=GRID, p_list=(1.5, 2.0, 3.0), mass_list=(0.001, 10.0), controls=CTRL)
    base.update(kw)
    return SweepSpec(**base)


@pytest.fixture(scope="module")
def table():
    return fujita_sweep(spec())


def test_cells_skip_band():
    cells = spec().cells()
    assert [c[0] for c in cells] == [1.5, 1.5, 3.0, 3.0]
    cells = spec(include_critical=True).cells()
    assert [(p, crit) for p, _, crit in cells][2:4] == [(2.0, True), (2.0, True)]
    assert spec(band=0.6).cells()[0][0] == 3.0


def test_p_fujita_recomputed(table):
    assert table.p_fujita == 2.0
    assert PhaseTable(0.75, 2, 1.0, 0.1, ()).p_fujita == 1.75


def test_classification(table):
    assert table.row(1.5, 10.0).verdict is Verdict.BLEW_UP
    assert table.row(3.0, 10.0).verdict is Verdict.BLEW_UP
    small = table.row(3.0, 0.001)
    assert small.verdict is Verdict.GLOBAL_TO_HORIZON
    assert small.certificate == "VALID"
    assert small.time == 20.0
    assert table.row(1.5, 0.001).certificate == ""   # no certificate below p_F
    assert table.monotonicity_violations() == []
    assert table.failed() == []


def test_csv_and_json(table):
    lines = table.to_csv().splitlines()
    assert lines[0] == "p,mass_scale,mass,verdict,time,certificate,critical,note"
    assert len(lines) == 1 + len(table.rows)
    doc = json.loads(table.to_json())
    assert doc["p_fujita"] == 2.0 and doc["band"] == 0.1
    assert len(doc["rows"]) == len(table.rows)


def test_workers_same_order_and_bytes(table):
    par = fujita_sweep(spec(), workers=2)
    assert par.to_csv() == table.to_csv()


def test_progress_single_writer():
    seen = []
    fujita_sweep(spec(p_list=(3.0,), mass_list=(10.0,)),
                 progress=lambda row, done, total: seen.append((done, total)))
    assert seen == [(1, 1)]


def test_failed_cell_recorded():
    # a threshold below the initial peak makes the solver reject the cell
    sp = spec(p_list=(3.0,), mass_list=(0.001, 10.0),
              controls=StepControls(t_max=20.0, blowup_threshold=5.0))
    t = fujita_sweep(sp)
    bad = t.row(3.0, 10.0)
    assert bad.verdict is Verdict.INCONCLUSIVE
    assert "ValueError" in bad.note
    assert t.row(3.0, 0.001).verdict is Verdict.GLOBAL_TO_HORIZON
    assert t.failed() == [bad]


def test_critical_rows_not_failures():
    row = PhaseRow(2.0, 1.0, 1.0, Verdict.INCONCLUSIVE, 200.0, "", True, "")
    t = PhaseTable(0.5, 1, 200.0, 0.1, (row,))
    assert t.failed() == [] and t.failed(include_critical=True) == [row]


def test_monotonicity_violation_detected():
    rows = (PhaseRow(1.5, 0.1, 0.1, Verdict.BLEW_UP, 5.0, "", False),
            PhaseRow(1.5, 1.0, 1.0, Verdict.GLOBAL_TO_HORIZON, 200.0, "", False))
    assert PhaseTable(0.5, 1, 200.0, 0.1, rows).monotonicity_violations() == [(1.5, 0.1, 1.0)]


def test_confirm_global_demotes_growth():
    from mixfujita import CauchyProblem, solve_semilinear

    g = SpectralGrid(1, 16.0, 64)
    # p=1.5 constant data grows: it is GLOBAL to a short horizon but without decay
    rep = solve_semilinear(CauchyProblem(P, 1.5, g.field([0.01] * 64)), StepControls(t_max=1.0))
    assert rep.verdict is Verdict.GLOBAL_TO_HORIZON
    assert not decay_evidence(rep)
    out = confirm_global(rep)
    assert out.verdict is Verdict.INCONCLUSIVE and "decay" in out.message
