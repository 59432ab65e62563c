"""A relaxed discrete minimiser of the Alt-Caffarelli energy, plus checks of
the free-boundary condition, Lipschitz bound and nondegeneracy.

The discrete energy on a grid of step h is

    E(u) = sum_edges (u_j - u_i)^2 + h^2 sum_nodes min(u_i / eps, 1),   u >= 0,

with Dirichlet data on the window boundary.  Inside the ramp band
``0 < u < eps`` a minimiser solves ``Delta u = 1 / (2 eps)``, which turns the
slope from 0 to 1 over a layer of width ``2 eps``; beyond it u is harmonic.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import DomainError, SolverError
from .geometry import _interp_normal, trace_free_boundary
from .grid import GridField, harmonic_jet
from .solutions import AnalyticSolution, evaluate, window_shape


@dataclass
class StepPolicy:
    kind: str = "bb"
    initial: float = 0.25  # first step, in units of h^2-scaled gradient
    shrink: float = 0.5
    min_step: float = 1e-12


@dataclass
class SolverParams:
    epsilon_relax: float | None = None  # None: 2 h
    max_iters: int = 20000
    descent_tol: float = 1e-6
    step_policy: StepPolicy = field(default_factory=StepPolicy)
    multilevel: bool = True  # start from the prolonged solution on the 2h grid
    coarsest: int = 65  # no coarsening below this many nodes per side
    polish_every: int = 100  # iterations between active-set solves (0: never)
    escape_shifts: tuple = (0.5, 1.0, 1.5, 2.0)  # in units of h


@dataclass
class BoundaryData:
    """Dirichlet values at boundary nodes ``(i, j)`` of the solver grid."""

    i: np.ndarray
    j: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.i = np.asarray(self.i, dtype=np.int64)
        self.j = np.asarray(self.j, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise DomainError("boundary data must be finite and nonnegative")

    @classmethod
    def from_function(cls, f, window, h: float) -> "BoundaryData":
        nx, ny = window_shape(window, h)
        mask = _boundary_mask(ny, nx)
        J, I = np.nonzero(mask)
        z = window[0] + h * I + 1j * (window[2] + h * J)
        vals = evaluate(f, z) if isinstance(f, AnalyticSolution) else np.asarray(f(z), dtype=float)
        return cls(I, J, vals)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "value"])
            for a, b, v in zip(self.i, self.j, self.values):
                w.writerow([int(a), int(b), repr(float(v))])

    @classmethod
    def read_csv(cls, path) -> "BoundaryData":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise DomainError(f"{path}: no boundary rows")
        return cls([int(r["i"]) for r in rows], [int(r["j"]) for r in rows], [float(r["value"]) for r in rows])


def _boundary_mask(ny, nx):
    m = np.zeros((ny, nx), dtype=bool)
    m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
    return m


@dataclass
class SolveResult:
    field: GridField
    energy_trace: list
    converged: bool
    iterations: int
    residual: float

    def __iter__(self):
        return iter((self.field, self.energy_trace))


def _laplacian(ny, nx, free):
    """Graph Laplacian on free nodes, plus the coupling to fixed nodes."""
    n = ny * nx
    idx = np.arange(n).reshape(ny, nx)
    a = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    b = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    W = sparse.csr_matrix((np.ones(a.size), (a, b)), shape=(n, n))
    W = W + W.T
    deg = np.asarray(W.sum(axis=1)).ravel()
    L = sparse.diags(deg) - W
    f = free.ravel()
    return L, L[f][:, f].tocsc(), L[f][:, ~f]


def harmonic_extension(shape, boundary: BoundaryData) -> np.ndarray:
    ny, nx = shape
    fixed = np.zeros((ny, nx), dtype=bool)
    fixed[boundary.j, boundary.i] = True
    u = np.zeros((ny, nx))
    u[boundary.j, boundary.i] = boundary.values
    _, Lff, Lfb = _laplacian(ny, nx, ~fixed)
    if Lff.shape[0]:
        u.ravel()[(~fixed).ravel()] = splu(Lff).solve(-(Lfb @ u.ravel()[fixed.ravel()]))
    return u


def discrete_energy(u: np.ndarray, h: float, eps: float) -> float:
    dx = np.diff(u, axis=1)
    dy = np.diff(u, axis=0)
    return float(np.sum(dx * dx) + np.sum(dy * dy) + h * h * np.sum(np.minimum(u / eps, 1.0)))


def _energy_grad(u, h, eps):
    g = np.zeros_like(u)
    dx = np.diff(u, axis=1)
    dy = np.diff(u, axis=0)
    g[:, :-1] -= 2 * dx
    g[:, 1:] += 2 * dx
    g[:-1, :] -= 2 * dy
    g[1:, :] += 2 * dy
    # ramp derivative; at u = 0 the one-sided (right) derivative applies
    g += np.where(u < eps, h * h / eps, 0.0)
    return g


def minimize(window, h: float, boundary: BoundaryData, params: SolverParams | None = None) -> SolveResult:
    """Projected Barzilai-Borwein descent on the relaxed energy.

    The start is the harmonic extension of the data, or on fine grids the
    interpolated solution of the same problem at step ``2h``.  Every accepted step lowers the energy (non-decreasing trial steps are
    shrunk), so the trace is monotone.  Convergence is declared when the
    projected gradient, divided by ``h^2``, is below ``descent_tol`` in the
    max norm.
    """
    params = params or SolverParams()
    nx, ny = window_shape(window, h)
    eps = params.epsilon_relax if params.epsilon_relax is not None else 2.0 * h
    if eps < h * (1 - 1e-12):
        raise DomainError("epsilon_relax must be at least h")
    if np.any((boundary.i < 0) | (boundary.i >= nx) | (boundary.j < 0) | (boundary.j >= ny)):
        raise DomainError("boundary node index outside the grid")
    fixed = np.zeros((ny, nx), dtype=bool)
    fixed[boundary.j, boundary.i] = True
    if not np.all(fixed[_boundary_mask(ny, nx)]):
        raise DomainError("boundary data must cover every boundary node")
    free = ~fixed

    u = None
    if params.multilevel and (nx - 1) % 2 == 0 and (ny - 1) % 2 == 0 and min(nx, ny) >= 2 * params.coarsest - 1:
        u = _coarse_start(window, h, boundary, params, eps)
        u[fixed] = 0.0
        u[boundary.j, boundary.i] = boundary.values
    if u is None:
        u = harmonic_extension((ny, nx), boundary)
    u = np.maximum(u, 0.0)
    u, trace, converged, it, res = _descend(u, free, h, eps, params)
    # Escape moves: the ramp pins the discrete free boundary, so descent from
    # above can stop a lattice row or two below the lower-energy position.
    # Lower the free nodes uniformly, descend again and keep improvements.
    for c in params.escape_shifts if converged else ():
        shifted = np.where(free, np.maximum(u - c * h, 0.0), u)
        u2, tr2, conv2, it2, res2 = _descend(shifted, free, h, eps, params)
        it += it2
        if conv2 and tr2[-1] < trace[-1] - 1e-13 * max(1.0, abs(trace[-1])):
            trace.extend(e for e in tr2 if e < trace[-1])
            u, res = u2, res2
    prov = {
        "solver": "ac-bb",
        "epsilon_relax": eps,
        "iterations": it,
        "converged": converged,
        "residual": res,
    }
    fld = GridField(complex(window[0], window[2]), h, u, prov)
    return SolveResult(fld, trace, converged, it, res)


def _descend(u, free, h, eps, params):
    """Projected BB descent with monotone backtracking from ``u``."""
    E = discrete_energy(u, h, eps)
    trace = [E]
    pol = params.step_policy
    alpha = pol.initial
    g = _energy_grad(u, h, eps) * free
    prev_u = prev_g = None
    converged = False
    res = math.inf
    it = 0
    for it in range(1, params.max_iters + 1):
        pg = np.where(free, u - np.maximum(u - g, 0.0), 0.0)
        res = float(np.max(np.abs(pg))) / (h * h)
        if res <= params.descent_tol:
            converged = True
            it -= 1
            break
        if params.polish_every and it % params.polish_every == 0:
            cand = _polish(u, free, h, eps)
            Ec = discrete_energy(cand, h, eps)
            if Ec <= E:
                u, E = cand, Ec
                trace.append(E)
                g = _energy_grad(u, h, eps) * free
                prev_u = prev_g = None
                continue
        if prev_u is not None:
            s = (u - prev_u).ravel()
            y = (g - prev_g).ravel()
            sy = float(s @ y)
            if sy > 0:
                alpha = float(s @ s) / sy
        step = alpha
        while True:
            trial = np.where(free, np.maximum(u - step * g, 0.0), u)
            Et = discrete_energy(trial, h, eps)
            if not math.isfinite(Et):
                raise SolverError("energy is not finite", trace)
            if Et <= E:
                break
            step *= pol.shrink
            if step < pol.min_step:
                trial = None
                break
        if trial is None:
            break
        prev_u, prev_g = u, g
        u = trial
        E = Et
        trace.append(E)
        g = _energy_grad(u, h, eps) * free
    else:
        pg = np.where(free, u - np.maximum(u - g, 0.0), 0.0)
        res = float(np.max(np.abs(pg))) / (h * h)
        converged = res <= params.descent_tol
    return u, trace, converged, it, res


def _polish(u, free, h, eps):
    """Exact minimiser with the zero / ramp / saturated partition of ``u`` frozen.

    With the partition fixed the energy is quadratic plus a linear ramp
    term, so one sparse solve lands on the local minimum once descent has
    found the right partition.
    """
    ny, nx = u.shape
    unk = free & (u > 0)
    ramp = (unk & (u < eps)).ravel()[unk.ravel()]
    _, Luu, Lub = _laplacian(ny, nx, unk)
    known = np.where(free, 0.0, u).ravel()[~unk.ravel()]
    rhs = -(Lub @ known) - ramp * (h * h / (2.0 * eps))
    out = u.copy()
    out[~unk & free] = 0.0
    out.ravel()[unk.ravel()] = splu(Luu).solve(rhs)
    return np.where(free, np.maximum(out, 0.0), u)


def _coarse_start(window, h, boundary, params, eps):
    """Solve on the 2h grid (same ramp width) and interpolate back."""
    keep = (boundary.i % 2 == 0) & (boundary.j % 2 == 0)
    coarse_bd = BoundaryData(boundary.i[keep] // 2, boundary.j[keep] // 2, boundary.values[keep])
    cp = SolverParams(max(eps, 2 * h), params.max_iters, params.descent_tol, params.step_policy, True, params.coarsest, params.polish_every, params.escape_shifts)
    coarse = minimize(window, 2 * h, coarse_bd, cp).field
    nx, ny = window_shape(window, h)
    zz = window[0] + h * np.arange(nx)[None, :] + 1j * (window[2] + h * np.arange(ny)[:, None])
    return coarse.interp(zz, outside=0.0)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


@dataclass
class FBCStats:
    per_strand: list  # (n_points, mean defect, max defect)
    mean: float
    max: float
    n_points: int
    floor: float

    @property
    def empty(self) -> bool:
        return self.n_points == 0


def verify_fbc(fld: GridField, floor: float | None = None, radius: float = 6.0, edge_margin: float | None = None) -> FBCStats:
    """``||grad u| - 1|`` on the free boundary, from the harmonic part of ``u``.

    The fit uses nodes with ``u > floor`` only; for relaxed solver output
    ``floor`` defaults to the ramp width recorded in the field, so the
    smeared layer is excluded and the free boundary is the zero set of the
    harmonic extension from outside it.  Points closer than ``edge_margin``
    to the window edge are skipped (default: 1/8 of the shorter side), which
    keeps the Dirichlet boundary layer out of the statistic.
    """
    xmin, xmax, ymin, ymax = fld.window
    if edge_margin is None:
        edge_margin = 0.125 * min(xmax - xmin, ymax - ymin)
    edge_margin = max(edge_margin, (radius + 1) * fld.h)
    if floor is None:
        floor = float(fld.provenance.get("epsilon_relax", 0.0))
    strands = trace_free_boundary(fld, project=False)
    per = []
    all_d = []
    for s in strands:
        pts = s.points.copy()
        normal = _interp_normal(fld, pts)
        for _ in range(3):
            jet = harmonic_jet(fld, pts, radius=radius, floor=floor, normal=normal)
            gvec = np.conj(jet.d1)
            m2 = np.abs(gvec) ** 2
            ok = np.isfinite(gvec) & (m2 > 1e-12)
            step = np.where(ok, -jet.value.real * gvec / np.where(ok, m2, 1.0), 0.0)
            step = np.where(np.abs(step) <= 4 * fld.h, step, 0.0)
            pts = pts + step
        jet = harmonic_jet(fld, pts, radius=radius, floor=floor, normal=normal)
        inner = fld.contains(pts, margin=edge_margin / fld.h)
        d = np.abs(np.abs(jet.d1) - 1.0)
        d = d[inner & np.isfinite(d)]
        if d.size:
            per.append((int(d.size), float(np.mean(d)), float(np.max(d))))
            all_d.append(d)
    if not all_d:
        return FBCStats([], math.nan, math.nan, 0, floor)
    d = np.concatenate(all_d)
    return FBCStats(per, float(np.mean(d)), float(np.max(d)), int(d.size), floor)


_LIP_STENCIL = [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2)]


def discrete_lipschitz(fld: GridField, window=None) -> float:
    """``max |u(p) - u(q)| / |p - q|`` over nearby node pairs (a lower bound for sup|grad u|)."""
    u = fld.values
    if window is not None:
        u = fld.crop(window).values
    ny, nx = u.shape
    best = 0.0
    for di, dj in _LIP_STENCIL:
        j0, j1 = max(0, -dj), ny - max(0, dj)
        i0, i1 = max(0, -di), nx - max(0, di)
        a = u[j0:j1, i0:i1]
        b = u[j0 + dj : j1 + dj, i0 + di : i1 + di]
        best = max(best, float(np.max(np.abs(b - a))) / (fld.h * math.hypot(di, dj)))
    return best


@dataclass
class RegularityReport:
    point: complex
    radii: list
    profile: list  # sup_{B_r} u / r
    min_profile: float
    nondegenerate: bool  # min_profile >= 1/(2 pi)
    sup_grad: float

    def to_dict(self) -> dict:
        return {
            "point": [self.point.real, self.point.imag],
            "radii": list(self.radii),
            "profile": list(self.profile),
            "min_profile": self.min_profile,
            "nondegenerate": self.nondegenerate,
            "sup_grad": self.sup_grad,
        }


NONDEGENERACY = 1.0 / (2.0 * math.pi)


def _sup_on_circle(sol, x0, r, n=4096):
    t = 2 * np.pi * np.arange(n) / n
    vals = evaluate(sol, x0 + r * np.exp(1j * t))
    k = int(np.argmax(vals))
    # u is subharmonic, so the sup over the ball is attained on the circle
    lo, hi = t[k] - 2 * np.pi / n, t[k] + 2 * np.pi / n
    f = lambda s: -float(evaluate(sol, x0 + r * np.exp(1j * s)))
    gr = 0.5 * (math.sqrt(5) - 1)
    c, d = hi - gr * (hi - lo), lo + gr * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(60):
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - gr * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + gr * (hi - lo)
            fd = f(d)
    return max(float(vals[k]), -min(fc, fd))


def regularity_diagnostics(u, point, radii, window=None, h: float | None = None) -> RegularityReport:
    """Nondegeneracy profile ``r -> sup_{B_r(point)} u / r`` and the Lipschitz bound.

    ``u`` is a grid field or an analytic solution.  For grid fields radii
    whose ball leaves the window are skipped and the Lipschitz bound is
    taken over the central half of the window.  For analytic input the
    bound is measured on a grid of step ``h`` over ``window``.
    """
    point = complex(point)
    radii = [float(r) for r in radii]
    prof = []
    used = []
    if isinstance(u, GridField):
        zz = u.coords()
        xmin, xmax, ymin, ymax = u.window
        for r in radii:
            if point.real - r < xmin or point.real + r > xmax or point.imag - r < ymin or point.imag + r > ymax:
                continue
            inside = np.abs(zz - point) <= r
            prof.append(float(np.max(u.values[inside])) / r)
            used.append(r)
        cx, cy = 0.5 * (xmin + xmax), 0.5 * (ymin + ymax)
        wx, wy = 0.25 * (xmax - xmin), 0.25 * (ymax - ymin)
        sup_grad = discrete_lipschitz(u, (cx - wx, cx + wx, cy - wy, cy + wy))
    elif isinstance(u, AnalyticSolution):
        for r in radii:
            prof.append(_sup_on_circle(u, point, r) / r)
            used.append(r)
        sup_grad = math.nan
        if window is not None:
            from .solutions import sample_to_grid

            sup_grad = discrete_lipschitz(sample_to_grid(u, window, h or 0.01))
    else:
        raise DomainError(f"unsupported input type {type(u).__name__}")
    mn = min(prof) if prof else math.nan
    return RegularityReport(point, used, prof, mn, bool(prof) and mn >= NONDEGENERACY, sup_grad)
