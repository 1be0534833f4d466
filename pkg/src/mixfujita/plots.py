"""Diagnostic figures.  Uses the non-interactive Agg backend throughout."""

from __future__ import annotations

import warnings
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ._io import atomic_path  # noqa: E402
from .report import RunReport, Verdict  # noqa: E402

# strip volatile metadata so reruns differ as little as possible
_META = {"Software": None}


def _save(fig, path) -> Path:
    try:
        with atomic_path(path, ".png") as tmp:
            fig.savefig(tmp, dpi=110, metadata=_META)
    finally:
        plt.close(fig)
    return Path(path)


def decay_plot(report: RunReport, s: float, dim: int, path) -> Path:
    """Log-log sup-norm against time with a reference line of slope ``-N/2s``."""
    t, y = report.times, report.sup_norms
    sel = (t > 0) & (y > 0)
    if sel.sum() < 2:
        raise ValueError("decay plot needs at least two positive samples")
    t, y = t[sel], y[sel]
    slope = -dim / (2 * s)
    fig, ax = plt.subplots(figsize=(6, 4.2))
    ax.loglog(t, y, "o-", ms=3, label=r"$\|u(t)\|_\infty$")
    ref = y[-1] * (t / t[-1]) ** slope
    ax.loglog(t, ref, "--", color="gray", label=f"slope {slope:g}")
    ax.set_xlabel("t")
    ax.set_ylabel("sup norm")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, path)


def rate_plot(report: RunReport, path) -> Path:
    """Sup-norm against ``T_est - t`` with reference slope ``-1/(p-1)``."""
    if report.verdict is not Verdict.BLEW_UP or report.T_est is None:
        raise ValueError("rate plot needs a blown-up run")
    tau = report.T_est - report.times
    sel = tau > 0
    tau, y = tau[sel], report.sup_norms[sel]
    slope = -1.0 / (report.p - 1.0)
    fig, ax = plt.subplots(figsize=(6, 4.2))
    ax.loglog(tau, y, ".", ms=3, label=r"$\|u(t)\|_\infty$")
    ax.loglog(tau, y[-1] * (tau / tau[-1]) ** slope, "--", color="gray", label=f"slope {slope:g}")
    ax.invert_xaxis()
    ax.set_xlabel(r"$T_{est} - t$")
    ax.set_ylabel("sup norm")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, path)


_MARKERS = {Verdict.BLEW_UP: ("^", "tab:red"), Verdict.GLOBAL_TO_HORIZON: ("o", "tab:blue"),
            Verdict.INCONCLUSIVE: ("x", "gray")}


def phase_diagram(table, path) -> Path:
    """Verdict per (p, mass) cell and the vertical line ``p = 1 + 2s/N``."""
    if not table.rows:
        raise ValueError("empty phase table")
    fig, ax = plt.subplots(figsize=(6, 4.2))
    for verdict, (marker, colour) in _MARKERS.items():
        rows = [r for r in table.rows if r.verdict is verdict]
        if rows:
            ax.scatter([r.p for r in rows], [r.mass_scale for r in rows], marker=marker,
                       color=colour, label=verdict.value, zorder=3)
    pf = table.p_fujita
    ax.axvline(pf, color="k", ls="--", label=f"$p_F = 1 + 2s/N = {pf:g}$")
    if table.band > 0:
        ax.axvspan(pf - table.band, pf + table.band, color="k", alpha=0.08,
                   label=f"excluded band $\\pm{table.band:g}$")
    ax.set_yscale("log")
    ax.set_xlabel("p")
    ax.set_ylabel("mass scale")
    ax.set_title(f"s = {table.s:g}, N = {table.dim}, horizon {table.horizon:g}")
    ax.legend(fontsize=8)
    return _save(fig, path)


def eigen_profile_plot(eig, path) -> Path:
    """Principal eigenfunction against the first coordinate (a scatter for 2D domains)."""
    x = eig.nodes[:, 0]
    fig, ax = plt.subplots(figsize=(6, 4.2))
    if eig.nodes.shape[1] == 1:
        ax.plot(x, eig.psi, "-")
        ax.set_xlabel("x")
    else:
        sc = ax.scatter(eig.nodes[:, 0], eig.nodes[:, 1], c=eig.psi, s=4)
        fig.colorbar(sc, ax=ax)
        ax.set_aspect("equal")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    ax.set_title(rf"$\lambda_1 = {eig.lambda1:.6g}$")
    return _save(fig, path)


def emit_plots(out_dir, *, linear: tuple | None = None, blowup: RunReport | None = None,
               table=None, eigen=None) -> list[Path]:
    """Write every figure whose input is present.

    ``linear`` is ``(report, s, dim)``.  Inputs lacking the needed series are
    skipped with a warning instead of failing the run.
    """
    out_dir = Path(out_dir)
    jobs = []
    if linear is not None:
        rep, s, dim = linear
        jobs.append(("decay.png", lambda: decay_plot(rep, s, dim, out_dir / "decay.png")))
    if blowup is not None:
        jobs.append(("rate.png", lambda: rate_plot(blowup, out_dir / "rate.png")))
    if table is not None:
        jobs.append(("phase.png", lambda: phase_diagram(table, out_dir / "phase.png")))
    if eigen is not None:
        jobs.append(("eigenfunction.png",
                     lambda: eigen_profile_plot(eigen, out_dir / "eigenfunction.png")))
    written = []
    for name, job in jobs:
        try:
            written.append(job())
        except ValueError as exc:
            warnings.warn(f"skipping {name}: {exc}", stacklevel=2)
    return written
