"""Linear and semilinear Cauchy problems on the periodic grid.

The semilinear equation ``u_t = L u + u^p`` is advanced through its mild
(Duhamel) form.  Over one step of size ``dt`` the source ``u^p`` is
interpolated linearly in time between its values at the two ends of the step
and the resulting integral against the exact semigroup is evaluated in closed
form with the functions ``phi1(z) = (e^z - 1)/z`` and
``phi2(z) = (e^z - 1 - z)/z^2``.  The end value enters its own source term,
so each step is a fixed point, solved by Picard iteration.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .operators import (
    Field,
    OperatorParams,
    SpectralGrid,
    apply_semigroup,
    FRACTIONAL_TAIL_TOL,
    check_tail,
    fractional_kernel,
    fujita_exponent,
    symbol,
)
from .report import RunReport, Verdict

log = logging.getLogger(__name__)

# smallest step for which t + dt stays well resolved at t ~ O(1)
RESOLVABLE_DT = 1e-12


class PicardDivergedError(RuntimeError):
    """The per-step fixed-point iteration failed; the caller should retry with a smaller step."""


class DegenerateSeriesError(ValueError):
    pass


@dataclass(frozen=True)
class CauchyProblem:
    params: OperatorParams
    p: float
    u0: Field

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"nonlinearity exponent must exceed 1, got {self.p}")
        if not self.u0.is_finite():
            raise ValueError("initial data must be finite")
        if (self.u0.values < 0).any():
            raise ValueError("initial data must be non-negative")

    @property
    def grid(self) -> SpectralGrid:
        return self.u0.grid


@dataclass(frozen=True)
class StepControls:
    """Step-size rule ``dt = min(dt0, c_dt * ||u||_inf^(1-p))`` and stopping criteria.

    ``blowup_threshold=None`` picks ``min(1e8, (c_dt / 1e-12)^(1/(p-1)))`` so
    the step at the threshold is still resolvable in double precision.
    """

    dt0: float = 0.1
    c_dt: float = 0.05
    picard_tol: float = 1e-11
    picard_max: int = 60
    blowup_threshold: float | None = None
    t_max: float = 200.0
    dt_min: float = 1e-14
    collapse_factor: float = 1e4
    sample_times: tuple = ()
    snapshot_every: int = 0
    max_steps: int = 2_000_000

    def __post_init__(self):
        if not 0 < self.c_dt <= 1:
            raise ValueError("c_dt must lie in (0, 1]")
        if not self.picard_tol > 0:
            raise ValueError("picard_tol must be positive")
        if self.picard_max < 1:
            raise ValueError("picard_max must be at least 1")
        if not self.dt0 > 0 or not self.t_max > 0:
            raise ValueError("dt0 and t_max must be positive")
        if any(b <= a for a, b in zip(self.sample_times, self.sample_times[1:])):
            raise ValueError("sample_times must be strictly increasing")

    def threshold(self, p: float) -> float:
        if self.blowup_threshold is not None:
            return float(self.blowup_threshold)
        return float(min(1e8, (self.c_dt / RESOLVABLE_DT) ** (1.0 / (p - 1.0))))


def phi_functions(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``phi1`` and ``phi2`` evaluated without cancellation near ``z = 0``."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    em1 = np.expm1(zs)
    phi1 = np.where(small, 1 + z / 2 + z**2 / 6 + z**3 / 24, em1 / zs)
    phi2 = np.where(small, 0.5 + z / 6 + z**2 / 24 + z**3 / 120, (em1 - zs) / zs**2)
    return phi1, phi2


@dataclass
class SpectralBasis:
    """Diagonalisation ``-L = B diag(rates) B^-1`` used by the stepper."""

    rates: np.ndarray
    forward: Callable[[np.ndarray], np.ndarray]
    backward: Callable[[np.ndarray], np.ndarray]


def periodic_basis(params: OperatorParams, grid: SpectralGrid) -> SpectralBasis:
    return SpectralBasis(
        rates=symbol(params, grid.freq_norm),
        forward=np.fft.fftn,
        backward=lambda c: np.fft.ifftn(c).real,
    )


@dataclass
class StepResult:
    values: np.ndarray
    iterations: int
    clamp: float


@dataclass
class ExponentialStepper:
    """Exponential trapezoid step with Picard iteration for ``u' = -A u + u^p``."""

    basis: SpectralBasis
    p: float
    picard_tol: float = 1e-11
    picard_max: int = 60
    cell_volume: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False)

    def _weights(self, dt):
        w = self._cache.get(dt)
        if w is None:
            z = -dt * self.basis.rates
            phi1, phi2 = phi_functions(z)
            w = (np.exp(z), dt * phi1, dt * phi2)
            self._cache = {dt: w}
        return w

    def step(self, u: np.ndarray, dt: float, cap: float = np.inf) -> StepResult:
        decay, w1, w2 = self._weights(dt)
        f = self.basis.forward
        back = self.basis.backward
        uh = f(u)
        fh0 = f(u**self.p)
        base = decay * uh + (w1 - w2) * fh0
        v = back(decay * uh + w1 * fh0)
        for it in range(1, self.picard_max + 1):
            vp = np.maximum(v, 0.0) ** self.p
            v_new = back(base + w2 * f(vp))
            if not np.isfinite(v_new).all():
                raise PicardDivergedError("non-finite Picard iterate")
            top = np.abs(v_new).max()
            if top > cap:
                raise PicardDivergedError(f"Picard iterate {top:.3e} exceeds cap {cap:.3e}")
            err = np.abs(v_new - v).max()
            v = v_new
            if err <= self.picard_tol * max(1.0, top):
                break
        else:
            raise PicardDivergedError(f"no convergence in {self.picard_max} Picard iterations")
        neg = v < 0
        clamp = float(-v[neg].sum() * self.cell_volume) if neg.any() else 0.0
        if clamp:
            v = np.where(neg, 0.0, v)
        return StepResult(v, it, clamp)


def step_semilinear(params: OperatorParams, p: float, u: Field, dt: float,
                    picard_tol: float = 1e-11, picard_max: int = 60,
                    blowup_threshold: float = np.inf) -> Field:
    """One mild-solution step of size ``dt``.

    Raises :class:`PicardDivergedError` when the fixed-point iteration fails
    or an iterate exceeds ``blowup_threshold``; callers halve ``dt``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if (u.values < 0).any():
        raise ValueError("u must be non-negative")
    stepper = ExponentialStepper(periodic_basis(params, u.grid), p, picard_tol, picard_max,
                                 u.grid.cell_volume)
    res = stepper.step(u.values, dt, cap=blowup_threshold)
    if res.clamp:
        log.info("clamped negative undershoot of mass %.3e", res.clamp)
    return Field(u.grid, res.values)


def _extrapolate_blowup_time(times, sups, p):
    """Fit ``c (T - t)^(-1/(p-1))`` through the last three samples and return ``T``.

    ``sup^(1-p)`` is linear in ``t`` for that profile; the root of the
    least-squares line is the estimate.  The result is confined to
    ``(t_last, t_last + sup_last^(1-p)/(p-1)]``, the window allowed by the
    flat-solution lower bound.
    """
    t = np.asarray(times[-3:], dtype=float)
    y = np.asarray(sups[-3:], dtype=float) ** (1.0 - p)
    t_last = t[-1]
    upper = t_last + y[-1] / (p - 1.0)
    slope, icpt = np.polyfit(t - t_last, y, 1)
    if slope < 0:
        T = t_last - icpt / slope
    else:
        T = upper
    return float(min(max(T, np.nextafter(t_last, np.inf)), upper))


def evolve(stepper: ExponentialStepper, u0: np.ndarray, controls: StepControls, *,
           kaplan_weights: np.ndarray | None = None, setting: str = "periodic",
           coords=None, boundary_distance=None) -> RunReport:
    """Adaptive time loop shared by the periodic and Dirichlet solvers."""
    p = stepper.p
    h_vol = stepper.cell_volume
    u_max = controls.threshold(p)
    u = np.array(u0, dtype=float)
    sup0 = float(np.abs(u).max())
    if not u_max > sup0:
        raise ValueError(f"blow-up threshold {u_max:.3e} must exceed ||u0||_inf = {sup0:.3e}")
    mass0 = float(np.abs(u).sum() * h_vol)

    t = 0.0
    times, sups, l1s, kap, steps = [0.0], [sup0], [mass0], [], []
    snaps = [(0.0, u.copy())]
    if kaplan_weights is not None:
        kap.append(float((u * kaplan_weights).sum() * h_vol))
    samples = [s for s in controls.sample_times if 0 < s <= controls.t_max]
    clamp_total = 0.0
    verdict, message = None, ""

    def rule_dt(sup):
        if sup <= 0:
            return controls.dt0
        return min(controls.dt0, controls.c_dt * sup ** (1.0 - p))

    for _ in range(controls.max_steps):
        if t >= controls.t_max:
            verdict = Verdict.GLOBAL_TO_HORIZON
            break
        target = controls.t_max
        while samples and samples[0] <= t:
            samples.pop(0)
        if samples:
            target = min(target, samples[0])
        dt = rule_dt(sups[-1])
        # stretch onto the target rather than leave a round-off sliver for the next step
        landing = target - t <= dt * (1.0 + 1e-6)
        if landing:
            dt = target - t
        while True:
            if dt < controls.dt_min or t + dt == t:
                verdict = Verdict.INCONCLUSIVE
                message = f"step size underflow (dt={dt:.3e}) at t={t:.6g} without crossing threshold"
                break
            try:
                res = stepper.step(u, dt, cap=max(u_max, 4.0 * sups[-1]))
                break
            except PicardDivergedError as exc:
                log.debug("step rejected at t=%.6g dt=%.3e: %s", t, dt, exc)
                dt *= 0.5
                landing = False
        if verdict is not None:
            break
        u = res.values
        clamp_total += res.clamp
        t = target if landing else t + dt
        sup = float(np.abs(u).max())
        times.append(t)
        sups.append(sup)
        l1s.append(float(np.abs(u).sum() * h_vol))
        steps.append(dt)
        if kaplan_weights is not None:
            kap.append(float((u * kaplan_weights).sum() * h_vol))
        if (samples and t == samples[0]) or (
                controls.snapshot_every and len(steps) % controls.snapshot_every == 0):
            snaps.append((t, u.copy()))
        if sup >= u_max:
            if dt <= controls.dt0 / controls.collapse_factor:
                verdict = Verdict.BLEW_UP
            else:
                verdict = Verdict.INCONCLUSIVE
                message = (f"threshold crossed at t={t:.6g} but dt={dt:.3e} did not collapse "
                           f"by {controls.collapse_factor:.0e} from dt0")
            break
    else:
        verdict = Verdict.INCONCLUSIVE
        message = f"max_steps={controls.max_steps} exhausted at t={t:.6g}"

    if snaps[-1][0] != t:
        snaps.append((t, u.copy()))
    times_a = np.array(times)
    sups_a = np.array(sups)
    T_est = _extrapolate_blowup_time(times_a, sups_a, p) if verdict is Verdict.BLEW_UP else None
    flagged = clamp_total > 1e-8 * max(mass0, np.finfo(float).tiny)
    if flagged:
        log.warning("clamped mass %.3e exceeds 1e-8 of initial mass", clamp_total)
    return RunReport(
        times=times_a, sup_norms=sups_a, l1_norms=np.array(l1s), verdict=verdict, p=p,
        dt0=controls.dt0, blowup_threshold=u_max, steps=np.array(steps),
        kaplan=np.array(kap) if kaplan_weights is not None else None, T_est=T_est,
        snapshots=tuple(snaps), cell_volume=h_vol, shape=np.shape(u0), coords=coords,
        boundary_distance=boundary_distance, clamp_mass=clamp_total, clamp_flagged=flagged,
        setting=setting, message=message,
    )


def solve_semilinear(problem: CauchyProblem, controls: StepControls) -> RunReport:
    """Evolve ``u_t = L u + u^p`` on the torus until blow-up, horizon or failure."""
    grid = problem.grid
    stepper = ExponentialStepper(periodic_basis(problem.params, grid), problem.p,
                                 controls.picard_tol, controls.picard_max, grid.cell_volume)
    coords = np.column_stack([c.ravel() for c in grid.coords])
    return evolve(stepper, problem.u0.values, controls, setting="periodic", coords=coords)


def solve_linear(params: OperatorParams, u0: Field, t_list, tail_tol: float | None = None) -> list[Field]:
    """Exact linear solutions at each time in ``t_list``.

    The last state is checked against the box-tail tolerance.
    """
    t_list = np.asarray(t_list, dtype=float)
    if (t_list < 0).any() or (np.diff(t_list) <= 0).any():
        raise ValueError("t_list must be non-negative and strictly increasing")
    out = [apply_semigroup(params, u0, t) for t in t_list]
    if out:
        check_tail(out[-1], params.default_tail_tol() if tail_tol is None else tail_tol, "solution")
    return out


def linear_report(params: OperatorParams, u0: Field, t_list, tail_tol: float | None = None) -> RunReport:
    """Package a linear run as a :class:`RunReport` (verdict GLOBAL_TO_HORIZON)."""
    t_list = np.asarray(t_list, dtype=float)
    fields = solve_linear(params, u0, t_list, tail_tol)
    return RunReport(
        times=t_list, sup_norms=np.array([f.sup_norm for f in fields]),
        l1_norms=np.array([f.l1_norm for f in fields]), verdict=Verdict.GLOBAL_TO_HORIZON,
        p=float("nan"), dt0=float("nan"), blowup_threshold=float("inf"),
        snapshots=((float(t_list[0]), fields[0].values), (float(t_list[-1]), fields[-1].values)),
        cell_volume=u0.grid.cell_volume, shape=u0.grid.shape, setting="linear",
    )


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    residual: float
    n_samples: int

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "residual": self.residual,
                "n_samples": self.n_samples}


def decay_exponent_fit(report: RunReport, window: tuple[float, float]) -> DecayFit:
    """Least-squares slope of ``log ||u||_inf`` against ``log t`` inside ``window``."""
    t_a, t_b = window
    t = report.times
    sel = (t >= t_a) & (t <= t_b) & (t > 0)
    if sel.sum() < 8:
        raise DegenerateSeriesError(f"need at least 8 samples in window, got {int(sel.sum())}")
    y = report.sup_norms[sel]
    if not (y > 0).all() or np.ptp(y) == 0:
        raise DegenerateSeriesError("degenerate series: sup-norm is zero or constant in the window")
    lt, ly = np.log(t[sel]), np.log(y)
    (slope, icpt), res, *_ = np.polyfit(lt, ly, 1, full=True)
    resid = float(np.sqrt(res[0] / sel.sum())) if len(res) else 0.0
    return DecayFit(float(slope), float(icpt), resid, int(sel.sum()))


def asymptotic_distance(params: OperatorParams, u0: Field, t: float,
                        tail_tol: float | None = None) -> float:
    """``t^(N/2s) ||u(t) - M K_s(t)||_inf`` with ``M`` the mass of ``u0``.

    ``K_s`` is the kernel of the nonlocal part alone (same ``b`` and ``s``).
    """
    if not t > 0:
        raise ValueError("t must be positive")
    grid = u0.grid
    tol = FRACTIONAL_TAIL_TOL if tail_tol is None else tail_tol
    u = apply_semigroup(params, u0, t)
    check_tail(u, tol, "solution")
    ks = fractional_kernel(params.s, params.b, grid, t, tol)
    diff = np.abs(u.values - u0.mass * ks.values).max()
    return float(t ** (grid.dim / (2 * params.s)) * diff)


@dataclass(frozen=True)
class SupersolutionCertificate:
    """Global supersolution ``w = h(t) v(t + t0)`` for ``p`` above the Fujita exponent.

    ``h(t) = [1 - D t0^e (1 - (t/t0 + 1)^e)]^(-1/(p-1))`` with
    ``e = 1 - N(p-1)/(2s) < 0`` solves ``h'/h^p = (C ||v0||_1 (t + t0)^(-N/2s))^(p-1)``,
    ``h(0) = 1``; it stays finite for all time iff ``D t0^e < 1``.
    """

    p: float
    s: float
    dim: int
    C_decay: float
    L1_norm: float
    t0: float
    D: float
    exponent: float
    valid: bool

    def h(self, t):
        t = np.asarray(t, dtype=float)
        e = self.exponent
        inner = 1.0 - self.D * self.t0**e * (1.0 - (t / self.t0 + 1.0) ** e)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(inner > 0, inner, np.nan) ** (-1.0 / (self.p - 1.0))

    def required_rate(self, t):
        """Right-hand side ``(C ||v0||_1 (t + t0)^(-N/2s))^(p-1)``."""
        t = np.asarray(t, dtype=float)
        return (self.C_decay * self.L1_norm * (t + self.t0) ** (-self.dim / (2 * self.s))) ** (self.p - 1)

    def to_dict(self):
        return {"D": self.D, "exponent": self.exponent, "t0": self.t0, "valid": self.valid,
                "C_decay": self.C_decay, "L1_norm": self.L1_norm, "p": self.p,
                "verdict": "VALID" if self.valid else "INVALID"}


def supersolution_certificate(p: float, s: float, dim: int, C_decay: float, L1_norm: float,
                              t0: float) -> SupersolutionCertificate:
    pf = fujita_exponent(s, dim)
    if not p > pf:
        raise ValueError(f"certificate needs p > p_F = {pf:g}, got p = {p:g}")
    if not t0 > 0:
        raise ValueError("t0 must be positive")
    D = 2 * s * (p - 1) / (dim * (p - 1) - 2 * s) * (C_decay * L1_norm) ** (p - 1)
    e = 1.0 - dim * (p - 1) / (2 * s)
    return SupersolutionCertificate(p, s, dim, C_decay, L1_norm, t0, float(D), float(e),
                                    bool(D * t0**e < 1))


@dataclass(frozen=True)
class ComparisonResult:
    min_gap: float
    passed: bool
    time_of_min: float
    n_times: int

    def to_dict(self):
        return {"min_gap": self.min_gap, "passed": self.passed, "time_of_min": self.time_of_min,
                "n_times": self.n_times}


def comparison_check(lower: RunReport, upper: RunReport, tol: float = 1e-10) -> ComparisonResult:
    """Minimum of ``upper - lower`` over shared snapshot times up to the first final time."""
    if lower.shape != upper.shape or lower.cell_volume != upper.cell_volume:
        raise ValueError("reports live on different grids")
    if (lower.coords is None) != (upper.coords is None) or (
            lower.coords is not None and not np.array_equal(lower.coords, upper.coords)):
        raise ValueError("reports live on different grids")
    t_end = min(lower.final_time, upper.final_time)
    la = {t: v for t, v in lower.snapshots if t <= t_end}
    ua = {t: v for t, v in upper.snapshots if t <= t_end}
    shared = sorted(set(la) & set(ua))
    # a blown-up run ends off the sample schedule; every other time must match
    stray = (set(la) ^ set(ua)) - {lower.final_time, upper.final_time}
    if stray or not shared:
        raise ValueError("reports do not share a common snapshot schedule")
    gaps = [(float((ua[t] - la[t]).min()), t) for t in shared]
    gap, tmin = min(gaps)
    return ComparisonResult(gap, gap >= -tol, tmin, len(shared))
