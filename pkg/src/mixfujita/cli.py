"""Command line entry point: ``mixfujita {linear,eigen,cauchy,dirichlet,sweep,rate} --config F``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 partial sweep.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import write_atomic
from .blowup import (
    InsufficientDataError,
    blowup_set_estimate,
    doubling_diagnostic,
    kaplan_time_bound,
    monotone_initial_check,
    rate_fit,
)
from .cauchy import (
    CauchyProblem,
    DegenerateSeriesError,
    StepControls,
    decay_exponent_fit,
    linear_report,
    solve_semilinear,
    supersolution_certificate,
)
from .config import ConfigError, ExperimentConfig, InitialKind, Mode, load_config
from .dirichlet import (
    ConvergenceError,
    assemble,
    disk,
    eigen_lower_bound_check,
    interval,
    principal_eigenpair,
    solve_dirichlet,
)
from .operators import (
    GridTooSmallError,
    OperatorParams,
    SpectralGrid,
    bump,
    gaussian,
    kernel_peak_constant,
)
from .report import Verdict
from .sweep import SweepSpec, confirm_global, fujita_sweep

log = logging.getLogger("mixfujita")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4
NUMERICAL_ERRORS = (GridTooSmallError, ConvergenceError, DegenerateSeriesError,
                    InsufficientDataError, FloatingPointError, np.linalg.LinAlgError)


@dataclass
class Outcome:
    status: int
    artifacts: list = field(default_factory=list)
    message: str = ""


class _Emitter:
    def __init__(self, out_dir: Path, formats):
        self.out, self.formats, self.paths = Path(out_dir), set(formats), []

    def text(self, name: str, text: str):
        kind = name.rsplit(".", 1)[-1]
        if kind in self.formats:
            self.paths.append(write_atomic(self.out / name, text))

    def json(self, name: str, obj):
        self.text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def plot(self, fn, *args):
        if "png" not in self.formats:
            return
        from . import plots  # matplotlib only when figures are wanted
        try:
            self.paths.append(getattr(plots, fn)(*args))
        except ValueError as exc:
            log.warning("skipping %s: %s", fn, exc)


# ---------------------------------------------------------------- builders


def _params(cfg: ExperimentConfig) -> OperatorParams:
    return OperatorParams(**cfg.operator)


def _grid(cfg: ExperimentConfig) -> SpectralGrid:
    return SpectralGrid(cfg.grid["dim"], cfg.grid["half_width"], cfg.grid["n"])


def _domain(cfg: ExperimentConfig):
    d = cfg.domain
    return (interval if d["kind"] == "interval" else disk)(d["radius"], d["n"])


def _controls(cfg: ExperimentConfig) -> StepControls:
    c = dict(cfg.controls)
    t_max = c.get("t_max", StepControls.t_max)
    # a sample at t_max/2 pins the decay evidence for GLOBAL verdicts
    c["sample_times"] = tuple(sorted(set(c.get("sample_times", ())) | {0.5 * t_max}))
    return StepControls(**c)


def _initial_on_grid(cfg: ExperimentConfig, grid: SpectralGrid):
    ini = cfg.initial
    if ini.kind is InitialKind.GAUSSIAN:
        return gaussian(grid, ini.width, ini.amplitude)
    if ini.kind is InitialKind.BUMP:
        return bump(grid, ini.width, ini.amplitude)
    if ini.kind is InitialKind.CONSTANT:
        return grid.field(np.full(grid.shape, ini.value))
    raise ConfigError("initial kind 'eigenfunction' needs a bounded domain", None, cfg.source)


def _initial_on_nodes(cfg: ExperimentConfig, system, eig) -> np.ndarray:
    """Initial data at the interior nodes; ``eigenfunction`` is ``scale * psi / max psi``."""
    ini = cfg.initial
    r = np.linalg.norm(system.nodes, axis=1)
    if ini.kind is InitialKind.GAUSSIAN:
        return ini.amplitude * np.exp(-r**2 / (2 * ini.width**2))
    if ini.kind is InitialKind.BUMP:
        rho = r / ini.width
        out = np.zeros_like(r)
        inside = rho < 1
        out[inside] = ini.amplitude * np.exp(1.0 - 1.0 / (1.0 - rho[inside] ** 2))
        return out
    if ini.kind is InitialKind.CONSTANT:
        return np.full_like(r, ini.value)
    return ini.scale * eig.psi / eig.psi.max()


def _eigen_reference(cfg: ExperimentConfig) -> float | None:
    """Closed-form principal eigenvalue of the purely local operator, when available."""
    if cfg.operator["b"] != 0:
        return None
    a, R = cfg.operator["a"], cfg.domain["radius"]
    if cfg.domain["kind"] == "interval":
        return a * np.pi**2 / (4 * R**2)
    from scipy.special import jn_zeros
    return a * float(jn_zeros(0, 1)[0]) ** 2 / R**2


# ---------------------------------------------------------------- modes


def _run_linear(cfg, em: _Emitter, workers):
    params, grid = _params(cfg), _grid(cfg)
    lin = cfg.linear
    times = lin["times"] or tuple(np.geomspace(lin["t_first"], lin["t_last"], lin["n_times"]))
    u0 = _initial_on_grid(cfg, grid)
    rep = linear_report(params, u0, times, lin["tail_tol"])
    window = lin["fit_window"] or (times[0], times[-1])
    fit = decay_exponent_fit(rep, tuple(window))
    expected = -grid.dim / (2 * params.s)
    rep = rep.with_diagnostics(decay_fit={**fit.to_dict(), "window": list(window),
                                          "expected": expected,
                                          "relative_error": abs(fit.slope / expected - 1)})
    em.json("report.json", rep.to_dict())
    em.text("series.csv", rep.series_csv())
    em.plot("decay_plot", rep, params.s, grid.dim, em.out / "decay.png")
    return EXIT_OK, ""


def _run_eigen(cfg, em: _Emitter, workers):
    params, domain = _params(cfg), _domain(cfg)
    system = assemble(params, domain)
    eig = principal_eigenpair(system, cfg.eigen["tol"], cfg.eigen["max_sweeps"])
    body = {"schema": "mixfujita.eigen/1", "eigen": eig.to_dict(),
            "domain": {"kind": domain.kind.value, "radius": domain.R, "n": domain.n}}
    ref = _eigen_reference(cfg)
    if ref is not None:
        body["reference"] = {"lambda1": ref, "relative_error": abs(eig.lambda1 / ref - 1)}
    if params.a > 0 and params.b > 0:
        body["lower_bound"] = eigen_lower_bound_check(params, domain).to_dict()
    em.json("eigen.json", body)
    data = np.column_stack([eig.nodes, eig.psi, eig.psi_l1])
    cols = ["x", "y"][: eig.nodes.shape[1]] + ["psi", "psi_l1"]
    em.text("eigenfunction.csv", ",".join(cols) + "\n"
            + "".join(",".join(repr(float(v)) for v in row) + "\n" for row in data))
    em.plot("eigen_profile_plot", eig, em.out / "eigenfunction.png")
    return EXIT_OK, ""


def _certify(cfg, rep, params, dim, mass):
    if rep.verdict is not Verdict.GLOBAL_TO_HORIZON or params.b == 0:
        return rep
    if not rep.p > params.fujita_exponent(dim):
        return rep
    cert = supersolution_certificate(rep.p, params.s, dim, kernel_peak_constant(params.b, params.s, dim),
                                     mass, cfg.sweep["t0"])
    return rep.with_diagnostics(supersolution=cert.to_dict())


def _finish_run(rep, em: _Emitter):
    em.json("report.json", rep.to_dict())
    em.text("series.csv", rep.series_csv())
    if rep.verdict is Verdict.BLEW_UP:
        em.plot("rate_plot", rep, em.out / "rate.png")
    if rep.verdict is Verdict.INCONCLUSIVE:
        return EXIT_NUMERIC, rep.message or "inconclusive run"
    return EXIT_OK, ""


def _solve_periodic(cfg):
    params, grid = _params(cfg), _grid(cfg)
    u0 = _initial_on_grid(cfg, grid)
    rep = confirm_global(solve_semilinear(CauchyProblem(params, cfg.p, u0), _controls(cfg)))
    return _certify(cfg, rep, params, grid.dim, u0.mass), u0, params, None


def _solve_bounded(cfg):
    params = _params(cfg)
    system = assemble(params, _domain(cfg))
    eig = principal_eigenpair(system, cfg.eigen["tol"], cfg.eigen["max_sweeps"])
    u0 = _initial_on_nodes(cfg, system, eig)
    rep = confirm_global(solve_dirichlet(system, cfg.p, u0, _controls(cfg), eig))
    J0 = float(rep.kaplan[0])
    if J0 > 0:
        rep = rep.with_diagnostics(kaplan=kaplan_time_bound(J0, eig.lambda1, cfg.p).to_dict())
    return rep, u0, params, system


def _run_cauchy(cfg, em, workers):
    rep, *_ = _solve_periodic(cfg)
    return _finish_run(rep, em)


def _run_dirichlet(cfg, em, workers):
    rep, *_ = _solve_bounded(cfg)
    return _finish_run(rep, em)


def _run_rate(cfg, em, workers):
    if cfg.rate["setting"] == "periodic":
        rep, u0, params, system = _solve_periodic(cfg)
        mu = monotone_initial_check(u0, cfg.p, params=params)
    else:
        rep, u0, params, system = _solve_bounded(cfg)
        mu = monotone_initial_check(u0, cfg.p, system=system)
    extra = {"mu_star": mu}
    status, msg = EXIT_OK, ""
    if rep.verdict is Verdict.BLEW_UP:
        fit = rate_fit(rep, cfg.rate["decades"])
        dbl = doubling_diagnostic(rep)
        bset = blowup_set_estimate(rep, cfg.rate["theta"])
        extra.update(rate=fit.to_dict(), doubling=dbl.to_dict(),
                     blowup_set={k: v for k, v in bset.to_dict().items() if k != "coords"})
        if not fit.passed:
            msg = f"rate slope {fit.slope:.4f} outside 10% of {fit.expected:.4f}"
    else:
        status, msg = EXIT_NUMERIC, f"run did not blow up (verdict {rep.verdict.value})"
    rep = rep.with_diagnostics(**extra)
    em.json("report.json", rep.to_dict())
    em.text("series.csv", rep.series_csv())
    if rep.verdict is Verdict.BLEW_UP:
        em.plot("rate_plot", rep, em.out / "rate.png")
    return status, msg


def _run_sweep(cfg, em: _Emitter, workers):
    params, grid = _params(cfg), _grid(cfg)
    sw = cfg.sweep
    spec = SweepSpec(params, grid, sw["p_list"], sw["mass_list"], width=sw["width"],
                     controls=_controls(cfg), band=sw["band"],
                     include_critical=sw["include_critical"], t0=sw["t0"])

    def progress(row, done, total):  # runs in the parent only: a single writer
        log.info("[%d/%d] p=%g mass=%g -> %s", done, total, row.p, row.mass_scale,
                 row.verdict.value)

    table = fujita_sweep(spec, workers=workers, progress=progress)
    em.text("phase.csv", table.to_csv())
    em.json("phase.json", table.to_dict())
    em.plot("phase_diagram", table, em.out / "phase.png")
    failed = table.failed()
    if failed:
        return EXIT_PARTIAL, f"{len(failed)} of {len(table.rows)} cells inconclusive"
    return EXIT_OK, ""


_RUNNERS = {Mode.LINEAR: _run_linear, Mode.EIGEN: _run_eigen, Mode.CAUCHY: _run_cauchy,
            Mode.DIRICHLET: _run_dirichlet, Mode.SWEEP: _run_sweep, Mode.RATE: _run_rate}


def run_config(path, mode: Mode | str | None = None, out: str | os.PathLike | None = None,
               workers: int = 1) -> Outcome:
    """Load, validate and execute one experiment.

    Nothing is written when the configuration is rejected.
    """
    try:
        cfg = load_config(path, mode)
    except ConfigError as exc:
        return Outcome(EXIT_CONFIG, [], str(exc))
    if workers < 1:
        return Outcome(EXIT_CONFIG, [], "--workers must be at least 1")
    out_dir = Path(out if out is not None else (cfg.output_dir or "out"))
    em = _Emitter(out_dir, cfg.formats)
    try:
        status, msg = _RUNNERS[cfg.mode](cfg, em, workers)
    except ConfigError as exc:
        return Outcome(EXIT_CONFIG, em.paths, str(exc))
    except NUMERICAL_ERRORS as exc:
        return Outcome(EXIT_NUMERIC, em.paths, f"{type(exc).__name__}: {exc}")
    return Outcome(status, em.paths, msg)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixfujita", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="mode", required=True)
    for m in Mode:
        sp = sub.add_parser(m.value, help=f"run a {m.value} experiment")
        sp.add_argument("--config", required=True, metavar="PATH", help="TOML experiment file")
        sp.add_argument("--out", metavar="DIR", help="output directory (overrides output.directory)")
        sp.add_argument("--workers", type=int, default=1, metavar="K", help="worker processes")
        sp.add_argument("--verbose", "-v", action="count", default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else (logging.INFO if args.verbose == 1 else logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    outcome = run_config(args.config, args.mode, args.out, args.workers)
    for p in outcome.artifacts:
        print(p)
    if outcome.message:
        print(outcome.message, file=sys.stderr)
    return outcome.status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
