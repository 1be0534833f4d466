"""Post-processing of blow-up runs: Kaplan functional, time bounds, rates, doubling
times, the monotone-data condition and blow-up sets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operators import Field, OperatorParams, apply_generator
from .report import RunReport, Verdict


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class KaplanSeries:
    times: np.ndarray
    J: np.ndarray
    slack: float | None = None

    def to_dict(self):
        return {"t": self.times.tolist(), "J": self.J.tolist(), "slack": self.slack}


def kaplan_functional(report: RunReport, psi_l1: np.ndarray, lambda1: float | None = None,
                      p: float | None = None) -> KaplanSeries:
    """``J(t) = sum u(t) psi_l1 h^N`` over the report's snapshots.

    With ``lambda1`` and ``p`` the slack ``eps_h`` needed for the forward
    differences to satisfy ``J' >= J^p - lambda1 J - eps_h`` is reported.
    """
    psi_l1 = np.asarray(psi_l1, dtype=float)
    if psi_l1.shape != (int(np.prod(report.shape)),) and psi_l1.shape != tuple(report.shape):
        raise ValueError("psi_l1 does not match the run's mesh")
    times = report.snapshot_times
    J = np.array([float((v.ravel() * psi_l1.ravel()).sum() * report.cell_volume)
                  for _, v in report.snapshots])
    slack = None
    if lambda1 is not None and p is not None and len(J) > 1:
        dJ = np.diff(J) / np.diff(times)
        need = J[:-1] ** p - lambda1 * J[:-1]
        slack = float(max(0.0, (need - dJ).max()))
    return KaplanSeries(times, J, slack)


@dataclass(frozen=True)
class KaplanCertificate:
    J0: float
    lambda1: float
    p: float
    threshold: float
    bound_time: float | None

    @property
    def certified(self) -> bool:
        return self.bound_time is not None

    def to_dict(self):
        return dict(self.__dict__)


def kaplan_time_bound(J0: float, lambda1: float, p: float) -> KaplanCertificate:
    """Blow-up time bound ``-ln(1 - lambda1 J0^(1-p)) / ((p-1) lambda1)``.

    Finite only when ``J0 > lambda1^(1/(p-1))``; otherwise no certificate.
    """
    if not (J0 > 0 and lambda1 > 0 and p > 1):
        raise ValueError("need J0 > 0, lambda1 > 0, p > 1")
    threshold = lambda1 ** (1.0 / (p - 1.0))
    x = lambda1 * J0 ** (1.0 - p)
    bound = None
    if J0 > threshold and x < 1.0:
        bound = float(-np.log1p(-x) / ((p - 1.0) * lambda1))
    return KaplanCertificate(float(J0), float(lambda1), float(p), float(threshold), bound)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    expected: float
    n_samples: int
    passed: bool

    def to_dict(self):
        return dict(self.__dict__)


def _require_blowup(report: RunReport):
    if report.verdict is not Verdict.BLEW_UP or report.T_est is None:
        raise InsufficientDataError(f"run did not blow up (verdict {report.verdict.value})")


def rate_fit(report: RunReport, decades: float = 2.0, min_samples: int = 10) -> RateFit:
    """Slope of ``log ||u||_inf`` against ``log(T_est - t)`` over the last ``decades`` decades.

    PASS when the slope is within 10% of ``-1/(p-1)``.
    """
    _require_blowup(report)
    p = report.p
    tau = report.T_est - report.times
    ok = tau > 0
    tau_min = tau[ok].min()
    sel = ok & (tau <= tau_min * 10**decades)
    if sel.sum() < min_samples:
        raise InsufficientDataError(f"only {int(sel.sum())} samples in the last {decades:g} decades")
    slope, icpt = np.polyfit(np.log(tau[sel]), np.log(report.sup_norms[sel]), 1)
    expected = -1.0 / (p - 1.0)
    return RateFit(float(slope), float(icpt), expected, int(sel.sum()),
                   bool(abs(slope - expected) <= 0.1 * abs(expected)))


@dataclass(frozen=True)
class DoublingDiagnostics:
    times: np.ndarray
    maxima: np.ndarray
    products: np.ndarray
    bounded: bool

    def to_dict(self):
        return {"t_n": self.times.tolist(), "M_n": self.maxima.tolist(),
                "products": self.products.tolist(), "bounded": self.bounded}


def doubling_diagnostic(report: RunReport, p: float | None = None,
                        min_doublings: int = 4) -> DoublingDiagnostics:
    """Doubling times of the running maximum ``M(t)`` and ``(t_{n+1} - t_n) M_n^(p-1)``.

    ``t_n`` is located between samples by linear interpolation of ``M^(1-p)``
    in time, so ``M_n = 2 M_{n-1}`` holds exactly.  BOUNDED when the last three
    products are within a factor 3 of each other.
    """
    _require_blowup(report)
    p = report.p if p is None else p
    t = report.times
    M = np.maximum.accumulate(report.sup_norms)
    y = M ** (1.0 - p)
    tn, Mn = [float(t[0])], [float(M[0])]
    if Mn[0] <= 0:
        raise InsufficientDataError("running maximum starts at zero")
    while True:
        target = 2.0 * Mn[-1]
        idx = np.searchsorted(M, target, side="left")
        if idx >= len(M):
            break
        yt = target ** (1.0 - p)
        if idx == 0 or M[idx] == target:
            tc = float(t[idx])
        else:
            y0, y1 = y[idx - 1], y[idx]
            tc = float(t[idx - 1] + (t[idx] - t[idx - 1]) * (y0 - yt) / (y0 - y1))
        tn.append(tc)
        Mn.append(target)
    if len(tn) - 1 < min_doublings:
        raise InsufficientDataError(f"only {len(tn) - 1} doublings of the running maximum")
    tn, Mn = np.array(tn), np.array(Mn)
    prods = np.diff(tn) * Mn[:-1] ** (p - 1.0)
    last = prods[-3:]
    return DoublingDiagnostics(tn, Mn, prods, bool(last.max() <= 3.0 * last.min()))


MU_FLOOR = 1e-12


def monotone_initial_check(u0, p: float, system=None, params: OperatorParams | None = None) -> float | None:
    """Smallest ``mu`` with ``L u0 + mu u0^p >= 0`` at every node, or ``None``.

    ``L`` is the periodic generator (``u0`` a :class:`Field` with ``params``)
    or ``-A`` of a Dirichlet system.  ``None`` means no ``mu`` in ``(0, 1)``
    works.  When the condition already holds with ``mu = 0`` the smallest
    positive double is returned.
    """
    if system is not None:
        vals = np.asarray(u0, dtype=float)
        Lu = -system.apply(vals)
    elif params is not None:
        if not isinstance(u0, Field):
            raise TypeError("periodic check needs a Field")
        vals = u0.values
        Lu = apply_generator(params, u0).values
    else:
        raise ValueError("pass either a Dirichlet system or operator params")
    if (vals < 0).any():
        raise ValueError("u0 must be non-negative")
    vals, Lu = vals.ravel(), Lu.ravel()
    pos = vals > MU_FLOOR
    scale = np.abs(Lu).max() if Lu.size else 0.0
    # off the support u0^p vanishes, so L u0 must already be non-negative there
    if (Lu[~pos] < -1e-12 * max(scale, 1.0)).any():
        return None
    if not pos.any():
        return None
    need = float((-Lu[pos] / vals[pos] ** p).max())
    if need >= 1.0:
        return None
    return max(need, np.finfo(float).tiny)


@dataclass(frozen=True)
class BlowupSet:
    indices: np.ndarray
    coords: np.ndarray | None = field(repr=False)
    interior_flag: bool
    theta: float
    margin: float

    def to_dict(self):
        return {"indices": self.indices.tolist(),
                "coords": None if self.coords is None else self.coords.tolist(),
                "interior_flag": self.interior_flag, "theta": self.theta, "margin": self.margin}


def blowup_set_estimate(report: RunReport, theta: float = 0.01, delta_B: float | None = None,
                        spacing: float | None = None) -> BlowupSet:
    """Nodes where the final state is at least ``theta`` times its maximum.

    ``interior_flag`` holds when every such node is at least ``delta_B``
    (default two mesh cells) from the boundary; on the torus it is vacuous.
    """
    _require_blowup(report)
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    u = report.final_field.ravel()
    idx = np.flatnonzero(u >= theta * u.max())
    coords = None if report.coords is None else report.coords[idx]
    if report.boundary_distance is None:
        return BlowupSet(idx, coords, True, theta, 0.0)
    if delta_B is None:
        if spacing is None:
            spacing = _mesh_spacing(report.coords)
        delta_B = 2.0 * spacing
    if not delta_B > 0:
        raise ValueError("delta_B must be positive")
    interior = bool((report.boundary_distance[idx] >= delta_B).all())
    return BlowupSet(idx, coords, interior, theta, float(delta_B))


def _mesh_spacing(coords: np.ndarray) -> float:
    x = np.unique(coords[:, 0])
    return float(np.diff(x).min())
