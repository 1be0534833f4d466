"""Mixed operator on a bounded domain with zero exterior data.

``-L`` is discretised on uniform interior nodes as ``A = a*A_loc + b*A_frac``:

* ``A_loc`` is the usual second-difference Laplacian (3 or 5 points).
* ``A_frac`` discretises the integral fractional Laplacian
  ``C(N,s) P.V. int (u(x) - u(y)) |x - y|^(-N-2s) dy`` with ``u = 0`` outside
  the domain.  The cell around the evaluation point is handled by a Taylor
  expansion (second difference times the exact integral of ``|z|^(-2s)``),
  the rest by exact kernel weights of the interpolant.  The part of the far
  field that falls outside the domain only contributes ``u(x) * kernel
  mass``, which is integrated analytically.

In 1D the interpolant is piecewise linear; in 2D (disk) it is piecewise
constant on lattice cells and the disk boundary is a staircase (first order).
The constant ``C(N,s) = s 4^s Gamma(N/2+s) / (pi^(N/2) Gamma(1-s))`` makes the
full-space stencil consistent with the Fourier symbol ``|xi|^(2s)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
from scipy.integrate import quad
from scipy.linalg import toeplitz
from scipy.special import gamma as gamma_fn

from .cauchy import ExponentialStepper, SpectralBasis, StepControls, evolve
from .operators import OperatorParams
from .report import RunReport


class ConvergenceError(RuntimeError):
    pass


class DomainKind(str, enum.Enum):
    INTERVAL = "INTERVAL"
    DISK = "DISK"


MIN_NODES = 64


@dataclass(frozen=True)
class BoundedDomain:
    """``(-R, R)`` or the disk of radius ``R``, meshed with ``n`` interior nodes per axis.

    Nodes sit at ``-R + i h``, ``i = 1..n``, ``h = 2R/(n+1)``; for the disk only
    nodes strictly inside the circle are kept.
    """

    kind: DomainKind
    R: float
    n: int

    def __post_init__(self):
        object.__setattr__(self, "kind", DomainKind(self.kind))
        if not self.R > 0:
            raise ValueError("R must be positive")
        if self.n < MIN_NODES:
            raise ValueError(f"need at least {MIN_NODES} nodes per axis, got {self.n}")

    @property
    def dim(self) -> int:
        return 1 if self.kind is DomainKind.INTERVAL else 2

    @property
    def h(self) -> float:
        return 2.0 * self.R / (self.n + 1)

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def axis(self) -> np.ndarray:
        return -self.R + self.h * np.arange(1, self.n + 1)

    def lattice_index(self) -> np.ndarray:
        """Integer lattice coordinates ``(nodes, N)`` of the interior nodes."""
        idx = np.arange(1, self.n + 1)
        if self.dim == 1:
            return idx[:, None]
        I, J = np.meshgrid(idx, idx, indexing="ij")
        pts = np.column_stack([I.ravel(), J.ravel()])
        x = -self.R + self.h * pts
        return pts[np.hypot(x[:, 0], x[:, 1]) < self.R]

    def nodes(self) -> np.ndarray:
        return -self.R + self.h * self.lattice_index()

    def boundary_distance(self) -> np.ndarray:
        return self.R - np.sqrt((self.nodes() ** 2).sum(axis=1))


def interval(R: float, n: int) -> BoundedDomain:
    return BoundedDomain(DomainKind.INTERVAL, R, n)


def disk(R: float, n: int) -> BoundedDomain:
    return BoundedDomain(DomainKind.DISK, R, n)


def frac_constant(dim: int, s: float) -> float:
    return float(s * 4**s * gamma_fn(dim / 2 + s) / (np.pi ** (dim / 2) * gamma_fn(1 - s)))


def _linear_hat_weights(kmax: int, s: float) -> np.ndarray:
    """``W_k = int_{z>=1} hat(z - k) z^(-1-2s) dz`` for ``k = 1..kmax`` (unit spacing)."""

    def prim(z):
        z = np.asarray(z, dtype=float)
        a0 = -(z ** (-2 * s)) / (2 * s)
        a1 = np.log(z) if s == 0.5 else z ** (1 - 2 * s) / (1 - 2 * s)
        return a0, a1

    def seg(lo, hi, c0, c1):
        # int_lo^hi (c0 + c1 z) z^(-1-2s) dz
        p0h, p1h = prim(hi)
        p0l, p1l = prim(lo)
        return c0 * (p0h - p0l) + c1 * (p1h - p1l)

    k = np.arange(1, kmax + 1, dtype=float)
    rising = np.where(k >= 2, seg(np.maximum(k - 1, 1.0), k, 1.0 - k, 1.0), 0.0)
    falling = seg(k, k + 1, k + 1, -1.0)
    return rising + falling


def _frac_1d(n: int, s: float) -> np.ndarray:
    """Unit-spacing 1D stencil matrix (multiply by ``C h^(-2s)``)."""
    w = _linear_hat_weights(n - 1, s)
    w[0] += 1.0 / (2 - 2 * s)
    diag = 1.0 / s + 2.0 / (2 - 2 * s)
    return toeplitz(np.concatenate([[diag], -w]))


@lru_cache(maxsize=16)
def _cell_integrals_2d(s: float) -> tuple[float, float]:
    """Exact integrals over/outside the unit cell ``[-1/2, 1/2]^2``.

    Returns ``(int_cell |z|^(-2s), int_outside |z|^(-2-2s))``.
    """
    inner = quad(lambda th: (0.5 / np.cos(th)) ** (2 - 2 * s) / (2 - 2 * s), 0, np.pi / 4)[0]
    outer = quad(lambda th: (2 * np.cos(th)) ** (2 * s) / (2 * s), 0, np.pi / 4)[0]
    return 8 * inner, 8 * outer


@lru_cache(maxsize=16)
def _cell_weight_table(s: float, mmax: int) -> np.ndarray:
    """``omega[m] = int_{cell(m)} |z|^(-2-2s) dz`` for offsets ``|m_i| <= mmax`` (unit cells)."""
    def gauss(order):
        g, w = np.polynomial.legendre.leggauss(order)
        return 0.5 * g, 0.5 * w

    m = np.arange(-mmax, mmax + 1)
    M1, M2 = np.meshgrid(m, m, indexing="ij")
    table = np.zeros(M1.shape)
    near = np.maximum(np.abs(M1), np.abs(M2)) <= 3
    for mask, order in ((near, 24), (~near, 6)):
        g, w = gauss(order)
        gx, gy = np.meshgrid(g, g, indexing="ij")
        ww = np.outer(w, w)
        x = M1[mask][:, None, None] + gx
        y = M2[mask][:, None, None] + gy
        table[mask] = ((x**2 + y**2) ** (-1 - s) * ww).sum(axis=(1, 2))
    table[mmax, mmax] = 0.0
    return table


def _frac_2d(lattice: np.ndarray, s: float) -> np.ndarray:
    inner, outer = _cell_integrals_2d(s)
    span = lattice.max(axis=0) - lattice.min(axis=0)
    mmax = int(span.max())
    table = _cell_weight_table(s, mmax)
    m = len(lattice)
    A = np.empty((m, m))
    for lo in range(0, m, 512):
        off = lattice[lo:lo + 512, None, :] - lattice[None, :, :]
        block = -table[off[..., 0] + mmax, off[..., 1] + mmax]
        block[np.abs(off).sum(axis=2) == 1] -= inner / 4
        A[lo:lo + 512] = block
    np.fill_diagonal(A, outer + inner)
    return A


def _local_stencil(lattice: np.ndarray) -> np.ndarray:
    """Unit-spacing negative Laplacian with zero data off the node set."""
    m, dim = lattice.shape
    A = np.zeros((m, m))
    for lo in range(0, m, 512):
        off = np.abs(lattice[lo:lo + 512, None, :] - lattice[None, :, :]).sum(axis=2)
        A[lo:lo + 512][off == 1] = -1.0
    np.fill_diagonal(A, 2.0 * dim)
    return A


@lru_cache(maxsize=4)
def _pure_parts(domain: BoundedDomain, s: float) -> tuple[np.ndarray, np.ndarray]:
    lattice = domain.lattice_index()
    h = domain.h
    A_loc = _local_stencil(lattice) / h**2
    if domain.dim == 1:
        A_frac = _frac_1d(len(lattice), s)
    else:
        A_frac = _frac_2d(lattice, s)
    A_frac *= frac_constant(domain.dim, s) * h ** (-2 * s)
    A_frac = 0.5 * (A_frac + A_frac.T)
    for M in (A_loc, A_frac):
        M.setflags(write=False)
    return A_loc, A_frac


@dataclass(frozen=True, eq=False)
class DirichletSystem:
    params: OperatorParams
    domain: BoundedDomain
    A_loc: np.ndarray = field(repr=False)
    A_frac: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.A.shape[0]

    @property
    def nodes(self) -> np.ndarray:
        return self.domain.nodes()

    @property
    def cell_volume(self) -> float:
        return self.domain.cell_volume

    def apply(self, v: np.ndarray) -> np.ndarray:
        """``-L v`` on the interior nodes."""
        return self.A @ v

    def quadratic_form(self, v: np.ndarray) -> float:
        return float(v @ self.A @ v)


def assemble(params: OperatorParams, domain: BoundedDomain) -> DirichletSystem:
    """Build ``A = a A_loc + b A_frac`` and verify symmetry and positive definiteness."""
    if not isinstance(domain, BoundedDomain):
        raise TypeError(f"unsupported domain {domain!r}")
    A_loc, A_frac = _pure_parts(domain, params.s)
    A = params.a * A_loc + params.b * A_frac
    asym = np.abs(A - A.T).max() / np.abs(A).max()
    if asym > 1e-12:
        raise np.linalg.LinAlgError(f"assembled matrix not symmetric (relative {asym:.2e})")
    try:
        sla.cho_factor(A)
    except sla.LinAlgError as exc:
        raise np.linalg.LinAlgError("assembled matrix is not positive definite") from exc
    A.setflags(write=False)
    return DirichletSystem(params, domain, A_loc, A_frac, A)


@dataclass(frozen=True, eq=False)
class EigenPair:
    """Principal Dirichlet eigenpair.

    ``psi`` is normalised in the discrete L2 norm (``sum psi^2 h^N = 1``) and
    ``psi_l1`` in the discrete L1 norm (``sum psi h^N = 1``); both are positive.
    """

    lambda1: float
    lambda2: float
    psi: np.ndarray = field(repr=False)
    psi_l1: np.ndarray = field(repr=False)
    residual: float
    iterations: int
    nodes: np.ndarray = field(repr=False)

    @property
    def gap(self) -> float:
        return self.lambda2 - self.lambda1

    def to_dict(self):
        return {"lambda1": self.lambda1, "lambda2": self.lambda2, "residual": self.residual,
                "iterations": self.iterations}


def principal_eigenpair(system: DirichletSystem, tol: float = 1e-11,
                        max_sweeps: int = 1000) -> EigenPair:
    """Inverse iteration from the all-ones vector with Rayleigh-quotient estimates.

    ``A`` is symmetric positive definite, so a Cholesky factor at zero shift
    drives the iteration towards the smallest eigenvalue; ``lambda2`` comes
    from the same iteration deflated against ``psi``.
    """
    A = system.A
    chol = sla.cho_factor(A)
    # residuals below a few ulps of ||A|| are round-off, not convergence
    floor = 16 * np.finfo(float).eps * np.abs(A).sum(axis=1).max()
    x = np.ones(system.size) / np.sqrt(system.size)
    rho = float(x @ A @ x)
    for it in range(1, max_sweeps + 1):
        y = sla.cho_solve(chol, x)
        x = y / np.linalg.norm(y)
        Ax = A @ x
        rho = float(x @ Ax)
        res = float(np.linalg.norm(Ax - rho * x))
        if res <= max(tol * rho, floor):
            break
    else:
        raise ConvergenceError(f"inverse iteration did not converge in {max_sweeps} sweeps")

    nodes = system.nodes
    centre = np.argmin((nodes**2).sum(axis=1))
    if x[centre] < 0:
        x = -x
    lam2 = _second_eigenvalue(A, chol, x, nodes, max_sweeps)
    vol = system.cell_volume
    psi = x / np.sqrt(vol)
    psi_l1 = psi / (psi.sum() * vol)
    return EigenPair(rho, lam2, psi, psi_l1, res / rho, it, nodes)


def _second_eigenvalue(A, chol, x1, nodes, max_sweeps):
    # odd start vector is orthogonal to the even principal mode by symmetry
    v = nodes[:, 0] + 1e-3 * nodes[:, -1] ** 2
    v = v - (v @ x1) * x1
    v /= np.linalg.norm(v)
    rho = float(v @ A @ v)
    for _ in range(max_sweeps):
        y = sla.cho_solve(chol, v)
        y -= (y @ x1) * x1
        v = y / np.linalg.norm(y)
        new = float(v @ A @ v)
        if abs(new - rho) <= 1e-13 * new:
            return new
        rho = new
    raise ConvergenceError("deflated inverse iteration for lambda2 did not converge")


# ---------------------------------------------------------------- checks


@dataclass(frozen=True)
class LowerBoundCheck:
    lambda1: float
    sigma1: float
    mu1: float
    bound: float
    passed: bool

    def to_dict(self):
        return dict(self.__dict__)


def eigen_lower_bound_check(params: OperatorParams, domain: BoundedDomain) -> LowerBoundCheck:
    """``lambda1 >= max(a sigma1, b mu1)`` with ``sigma1``, ``mu1`` from the pure systems."""
    lam = principal_eigenpair(assemble(params, domain)).lambda1
    sigma1 = principal_eigenpair(assemble(OperatorParams(1.0, 0.0, params.s), domain)).lambda1
    mu1 = principal_eigenpair(assemble(OperatorParams(0.0, 1.0, params.s), domain)).lambda1
    bound = max(params.a * sigma1, params.b * mu1)
    return LowerBoundCheck(lam, sigma1, mu1, bound, lam >= bound - 1e-8 * lam)


@dataclass(frozen=True)
class ScalingCheck:
    lambda_R: float
    lambda_1_rescaled: float
    residual: float
    psi_residual: float
    passed: bool

    def to_dict(self):
        return dict(self.__dict__)


def eigen_scaling_check(params: OperatorParams, R: float, n_unit: int = 255,
                        kind: DomainKind = DomainKind.INTERVAL) -> ScalingCheck:
    """Compare ``lambda1(B_R)`` with ``R^(-2s) lambda1^{a_R,b}(B_1)``, ``a_R = a R^(-2(1-s))``.

    Both meshes share the same spacing (``B_R`` gets about ``R`` times the
    nodes of ``B_1``).  Also compares the L1-normalised eigenfunctions through
    ``psi_R(x) = R^(-N) psi_1(x / R)``.
    """
    s = params.s
    unit = BoundedDomain(kind, 1.0, n_unit)
    n_R = int(round(R * (n_unit + 1))) - 1
    big = BoundedDomain(kind, R, n_R)
    eig_R = principal_eigenpair(assemble(params, big))
    a_R = params.a * R ** (-2 * (1 - s))
    eig_1 = principal_eigenpair(assemble(OperatorParams(a_R, params.b, s), unit))
    rescaled = R ** (-2 * s) * eig_1.lambda1
    resid = abs(eig_R.lambda1 - rescaled) / eig_R.lambda1

    pred = R ** (-unit.dim) * _interp_nodes(unit, eig_1.psi_l1, eig_R.nodes / R)
    psi_res = float(np.abs(pred - eig_R.psi_l1).max() / eig_R.psi_l1.max())
    return ScalingCheck(eig_R.lambda1, rescaled, float(resid), psi_res,
                        bool(resid < 1e-2 and psi_res < 1e-2))


def _interp_nodes(domain: BoundedDomain, values: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Interpolate nodal values (zero outside) at arbitrary points."""
    from scipy.interpolate import RegularGridInterpolator

    axis = np.concatenate([[-domain.R], domain.axis, [domain.R]])
    if domain.dim == 1:
        full = np.concatenate([[0.0], values, [0.0]])
        return np.interp(pts[:, 0], axis, full)
    grid = np.zeros((domain.n + 2, domain.n + 2))
    lat = domain.lattice_index()
    grid[lat[:, 0], lat[:, 1]] = values
    return RegularGridInterpolator((axis, axis), grid, bounds_error=False, fill_value=0.0)(pts)


@dataclass(frozen=True)
class LimitCheck:
    values: np.ndarray
    lambdas: np.ndarray
    limit: float
    lambda_deviation: np.ndarray
    psi_deviation: np.ndarray
    monotone: bool
    converging: bool

    def to_dict(self):
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}


def eigen_limit_check(params: OperatorParams, domain: BoundedDomain, values,
                      vary: str = "a") -> LimitCheck:
    """Send ``a`` (or ``b``) to zero along ``values`` with the other coefficient fixed.

    The limit is ``b mu1`` (``vary='a'``) or ``a sigma1`` (``vary='b'``); the
    eigenfunction deviation is the discrete L2 distance to the pure one.
    """
    if vary not in ("a", "b"):
        raise ValueError("vary must be 'a' or 'b'")
    values = np.asarray(values, dtype=float)
    s = params.s
    if vary == "a":
        pure = principal_eigenpair(assemble(OperatorParams(0.0, params.b, s), domain))
        make = lambda v: OperatorParams(v, params.b, s)  # noqa: E731
    else:
        pure = principal_eigenpair(assemble(OperatorParams(params.a, 0.0, s), domain))
        make = lambda v: OperatorParams(params.a, v, s)  # noqa: E731
    vol = domain.cell_volume
    lams, dpsi = [], []
    for v in values:
        eig = pure if v == 0 else principal_eigenpair(assemble(make(v), domain))
        lams.append(eig.lambda1)
        dpsi.append(np.sqrt(((eig.psi - pure.psi) ** 2).sum() * vol))
    lams = np.array(lams)
    dev = np.abs(lams - pure.lambda1)
    dpsi = np.array(dpsi)
    order = np.argsort(-values)
    lam_sorted = lams[order]
    monotone = bool((np.diff(lam_sorted) <= 1e-12 * lam_sorted[:-1]).all())
    converging = bool((np.diff(dev[order]) <= 0).all() and (np.diff(dpsi[order]) <= 1e-14).all())
    return LimitCheck(values, lams, pure.lambda1, dev, dpsi, monotone, converging)


# ---------------------------------------------------------------- evolution


def eigen_basis(system: DirichletSystem) -> SpectralBasis:
    rates, V = sla.eigh(system.A)
    return SpectralBasis(rates=rates, forward=lambda u: V.T @ u, backward=lambda c: V @ c)


def solve_dirichlet(system: DirichletSystem, p: float, u0: np.ndarray, controls: StepControls,
                    eigenpair: EigenPair | None = None) -> RunReport:
    """Method-of-lines evolution ``u' = -A u + u^p`` with the exponential stepper.

    The Kaplan functional ``J(t) = sum u psi_l1 h^N`` is recorded every step.
    """
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (system.size,):
        raise ValueError(f"u0 must have shape ({system.size},)")
    if (u0 < 0).any() or not np.isfinite(u0).all():
        raise ValueError("u0 must be finite and non-negative")
    if not p > 1:
        raise ValueError("p must exceed 1")
    if eigenpair is None:
        eigenpair = principal_eigenpair(system)
    stepper = ExponentialStepper(eigen_basis(system), p, controls.picard_tol, controls.picard_max,
                                 system.cell_volume)
    report = evolve(stepper, u0, controls, kaplan_weights=eigenpair.psi_l1, setting="dirichlet",
                    coords=system.nodes, boundary_distance=system.domain.boundary_distance())
    return report.with_diagnostics(eigen=eigenpair.to_dict())


def eigenpair_to_csv(eig: EigenPair, path):
    """Node coordinates and psi, preceded by a commented scalar block."""
    dim = eig.nodes.shape[1]
    header = (f"# lambda1={eig.lambda1!r}\n# lambda2={eig.lambda2!r}\n# residual={eig.residual!r}\n"
              + ",".join(["x", "y"][:dim] + ["psi", "psi_l1"]))
    data = np.column_stack([eig.nodes, eig.psi, eig.psi_l1])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")
