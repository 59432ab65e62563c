"""Neck analysis of a grid solution: saddles, hairpin proximity, the
harmonic conjugate and the conformal map onto a model hairpin domain.

The map is ``psi = V_a^{-1} o (u + i v)`` with ``V_a = a cosh o phi^{-1}(./a)``.
``V_a^{-1}`` is two-valued (``zeta`` and ``-zeta`` have the same cosh); the
branch is picked by the side of the steepest-descent arc ``beta`` running
from one tip through the saddle to the other, which is where the two
branches meet.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage
from scipy.optimize import minimize_scalar
from scipy.spatial import cKDTree

from .errors import BernoulliLabError, DomainError
from .geometry import FourGraphResult, four_graph_check, trace_free_boundary
from .grid import GridField, harmonic_jet
from .integrate import EdgeGraph, check_simply_connected, grid_edges, integrate_edges
from .solutions import AnalyticSolution, Hairpin, RigidMotion, evaluate

JET_CHUNK = 20000


# ---------------------------------------------------------------------------
# node derivatives
# ---------------------------------------------------------------------------


def _jets(grid, z, values=None):
    out = []
    for k in range(0, z.size, JET_CHUNK):
        out.append(harmonic_jet(grid, z[k : k + JET_CHUNK], values=values))
    if not out:
        e = np.zeros(0, complex)
        return e, e, e
    return tuple(np.concatenate([getattr(j, n) for j in out]) for n in ("value", "d1", "d2"))


def node_derivatives(grid: GridField):
    """``(u_x, u_y, u_xy)`` at positive nodes, NaN elsewhere.

    Fourth-order central differences where the 5x5 block around a node is
    positive; a one-sided harmonic fit at the remaining positive nodes.
    """
    u = grid.values
    h = grid.h
    pos = u > 0
    full = ndimage.minimum_filter(pos.astype(np.uint8), size=5, mode="constant", cval=0).astype(bool)

    def d4(v, axis):
        out = np.full_like(v, np.nan)
        sl = lambda a, b: tuple(slice(a, b) if ax == axis else slice(None) for ax in range(2))
        n = v.shape[axis]
        s = sl(2, n - 2)
        out[s] = (v[sl(0, n - 4)] - 8 * v[sl(1, n - 3)] + 8 * v[sl(3, n - 1)] - v[sl(4, n)]) / (12 * h)
        return out

    ux = d4(u, 1)
    uy = d4(u, 0)
    uxy = d4(ux, 0)
    p = np.where(full, ux, np.nan)
    q = np.where(full, uy, np.nan)
    r = np.where(full, uxy, np.nan)
    rest = pos & ~full
    J, I = np.nonzero(rest)
    if J.size:
        _, d1, d2 = _jets(grid, grid.node(I, J))
        p[J, I] = d1.real
        q[J, I] = -d1.imag
        r[J, I] = -d2.imag
    return p, q, r


# ---------------------------------------------------------------------------
# saddles and proximity
# ---------------------------------------------------------------------------


def find_saddles(field: GridField, max_iter: int = 8):
    """Non-degenerate critical points of ``u`` in its positive phase.

    Candidates are strict local minima of ``|grad u|`` on the nodes, refined
    by Newton's method on the fitted holomorphic jet (``U' = 0``).  Returns
    ``[(z0, a0), ...]`` sorted by position.
    """
    p, q, _ = node_derivatives(field)
    g = np.hypot(p, q)
    g = np.where(np.isfinite(g), g, np.inf)
    lo = ndimage.minimum_filter(g, size=3, mode="constant", cval=np.inf)
    hi = ndimage.maximum_filter(np.where(np.isfinite(g), g, -np.inf), size=3, mode="constant", cval=-np.inf)
    cand = np.isfinite(g) & (g <= lo) & (hi - g > 1e-6 * np.maximum(hi, 1e-300)) & (g < 0.5)
    J, I = np.nonzero(cand)
    if J.size == 0:
        return []
    z = field.node(I, J).astype(complex)
    start = z.copy()
    h = field.h
    ok = np.ones(z.size, dtype=bool)
    for _ in range(max_iter):
        _, d1, d2 = _jets(field, z)
        good = np.isfinite(d1) & np.isfinite(d2) & (np.abs(d2) > 1e-8)
        step = np.where(good, d1 / np.where(good, d2, 1.0), 0.0)
        ok &= good
        z = z - step
        ok &= np.abs(z - start) <= 1.5 * h
        if np.all(np.abs(step[ok]) < 1e-13 * max(1.0, h)):
            break
    val, d1, d2 = _jets(field, z)
    ok &= np.isfinite(val) & (val.real > 0) & (np.abs(d1) < 1e-6) & (np.abs(d2) > 1e-8)
    found = []
    for zk, ak in zip(z[ok], val.real[ok]):
        if all(abs(zk - f[0]) > 2 * h for f in found):
            found.append((complex(zk), float(ak)))
    return sorted(found, key=lambda t: (t[0].real, t[0].imag))


def _check_ball(field, z0, r):
    xmin, xmax, ymin, ymax = field.window
    if z0.real - r < xmin or z0.real + r > xmax or z0.imag - r < ymin or z0.imag + r > ymax:
        raise DomainError(f"probe ball of radius {r:g} around {z0} exits the window")


def _saddle_rotation(field, z0):
    """Rotation of a hairpin whose Hessian at the saddle matches the field."""
    _, _, d2 = _jets(field, np.array([z0]))
    return float(-np.angle(-d2[0]) / 2.0) % math.pi


def hairpin_proximity(field: GridField, z0, a0: float, epsilon: float = 0.1, n_theta: int = 32):
    """``min_theta sup_{|x| <= 2 a0/eps} |u(z0 + x) - H_a0(e^{-i theta} x)| / a0``.

    Returns ``(delta, motion)`` where ``motion`` places the model hairpin.
    """
    z0 = complex(z0)
    if not a0 > 0:
        raise DomainError("a0 must be positive")
    R = 2.0 * a0 / epsilon
    _check_ball(field, z0, R)
    zz = field.coords()
    inside = np.abs(zz - z0) <= R
    nodes = zz[inside]
    vals = field.values[inside]

    def f(theta):
        model = AnalyticSolution(Hairpin(a0), RigidMotion(theta, z0))
        return float(np.max(np.abs(vals - evaluate(model, nodes)))) / a0

    seed = _saddle_rotation(field, z0)
    grid = [(seed + math.pi * k / n_theta) % math.pi for k in range(n_theta)]
    vals_t = [f(t) for t in grid]
    k = int(np.argmin(vals_t))
    width = math.pi / n_theta
    res = minimize_scalar(f, bounds=(grid[k] - width, grid[k] + width), method="bounded", options={"xatol": 1e-8})
    theta, delta = (res.x, res.fun) if res.fun < vals_t[k] else (grid[k], vals_t[k])
    return float(delta), RigidMotion(float(theta) % math.pi, z0)


# ---------------------------------------------------------------------------
# harmonic conjugate
# ---------------------------------------------------------------------------


def harmonic_conjugate(field: GridField, basepoint) -> GridField:
    """Conjugate ``v`` of ``u`` on the positive component containing ``basepoint``.

    Edge increments of ``v`` come from the Cauchy-Riemann relations
    (``v_x = -u_y``, ``v_y = u_x``) with the Hermite-corrected trapezoid
    rule, and are integrated by least squares over the grid graph.
    ``v(basepoint) = 0``; nodes off the component are NaN.
    """
    base = complex(basepoint)
    pos = field.values > 0
    fi, fj = field.index_of(base)
    J, I = np.nonzero(pos)
    if J.size == 0:
        raise DomainError("field has no positive nodes")
    d = (I - fi) ** 2 + (J - fj) ** 2
    k = int(np.argmin(d))
    if d[k] > 4.0:
        raise DomainError("basepoint is not in the closed positive phase")
    p, q, r = node_derivatives(field)
    # nodes where no derivative estimate exists (isolated corners) are left out
    usable = pos & np.isfinite(p) & np.isfinite(q) & np.isfinite(r)
    labels, _ = ndimage.label(usable, structure=ndimage.generate_binary_structure(2, 1))
    if not usable[J[k], I[k]]:
        raise DomainError("no derivative estimate at the basepoint")
    comp = labels == labels[J[k], I[k]]
    check_simply_connected(comp)

    index, (hs, hd), (vs, vd) = grid_edges(comp)
    Jc, Ic = np.nonzero(comp)
    P, Q, Rm = p[Jc, Ic], q[Jc, Ic], r[Jc, Ic]
    h = field.h
    # along x: v' = -u_y, (v')' = -u_xy; along y: v' = u_x, (v')' = u_xy
    dh = -(0.5 * h * (Q[hs] + Q[hd]) + h * h / 12.0 * (Rm[hs] - Rm[hd]))
    dv = 0.5 * h * (P[vs] + P[vd]) + h * h / 12.0 * (Rm[vs] - Rm[vd])
    graph = EdgeGraph(Jc.size, np.concatenate([hs, vs]), np.concatenate([hd, vd]))
    res = integrate_edges(graph, np.concatenate([dh, dv]), int(index[J[k], I[k]]))

    v = np.full(field.values.shape, np.nan)
    v[Jc, Ic] = res.values
    shift = harmonic_jet(field, np.array([base]), values=v).value.real[0]
    if np.isfinite(shift):
        v -= shift
    prov = dict(field.provenance)
    prov.update(
        {
            "conjugate_basepoint": [base.real, base.imag],
            "edge_residual": res.edge_residual,
            "tree_drift": res.tree_drift,
        }
    )
    return GridField(field.origin, field.h, v, prov)


def conjugacy_residual(field: GridField, v: GridField) -> float:
    """Max of ``|grad v - rot90(grad u)|`` over nodes with full stencils."""
    p, q, _ = node_derivatives(field)
    h = field.h
    vy, vx = np.gradient(v.values, h)
    # second-order differences, restricted to nodes whose neighbours are finite
    err = np.hypot(vx + q, vy - p)
    ok = np.isfinite(err) & (field.values > 0)
    ok &= ndimage.minimum_filter((field.values > 0).astype(np.uint8), size=5, mode="constant").astype(bool)
    return float(np.max(err[ok])) if np.any(ok) else math.nan


# ---------------------------------------------------------------------------
# conformal map
# ---------------------------------------------------------------------------


def _grad_interp(field, p, q):
    gx = GridField(field.origin, field.h, p)
    gy = GridField(field.origin, field.h, q)
    return lambda z: gx.interp(np.array([z]))[0] + 1j * gy.interp(np.array([z]))[0]


def steepest_descent_arc(field: GridField, z0, p=None, q=None, step: float | None = None):
    """Polyline from one tip through the saddle ``z0`` to the other tip.

    Each half is the unit-speed gradient-descent curve started a short
    distance from the saddle along a descent eigendirection, integrated by
    RK4 until it leaves the fitted region near the free boundary.
    """
    z0 = complex(z0)
    if p is None:
        p, q, _ = node_derivatives(field)
    h = field.h
    step = step or 0.25 * h
    _, _, d2 = _jets(field, np.array([z0]))
    w = np.sqrt(-np.conj(d2[0]))
    w = w / abs(w) if abs(w) > 0 else 1.0 + 0j
    grad = _grad_interp(field, p, q)

    def vel(z):
        g = grad(z)
        m = abs(g)
        return -g / m if np.isfinite(g) and m > 1e-14 else None

    halves = []
    limit = int(4 * (field.nx + field.ny) * h / step)
    for sgn in (-1.0, 1.0):
        lead = int(round(2.0 * h / step))
        pts = [z0 + sgn * step * k * w for k in range(1, lead + 1)]
        z = pts[-1]
        for _ in range(limit):
            k1 = vel(z)
            if k1 is None:
                break
            k2 = vel(z + 0.5 * step * k1)
            k3 = vel(z + 0.5 * step * k2) if k2 is not None else None
            k4 = vel(z + step * k3) if k3 is not None else None
            if k4 is None:
                break
            z = z + step * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
            if not field.contains(z) or field.interp(np.array([z]))[0] <= 0:
                break
            pts.append(z)
        halves.append(np.array(pts))
    return np.concatenate([halves[0][::-1], [z0], halves[1]])


def _side(beta, z):
    """+1 left of the oriented polyline, -1 right; distance to it as well."""
    tree = cKDTree(np.column_stack([beta.real, beta.imag]))
    dist, k = tree.query(np.column_stack([z.real, z.imag]))
    kp = np.clip(k + 1, 0, beta.size - 1)
    km = np.clip(k - 1, 0, beta.size - 1)
    t = beta[kp] - beta[km]
    s = np.sign((np.conj(t) * (z - beta[k])).imag)
    return np.where(s == 0, 1.0, s), dist


def _acosh_polish(w, zeta, iters=3):
    for _ in range(iters):
        sh = np.sinh(zeta)
        ok = np.abs(sh) > 1e-8
        zeta = np.where(ok, zeta - (np.cosh(zeta) - w) / np.where(ok, sh, 1.0), zeta)
    return zeta


def hairpin_preimage(U, a0, side):
    """``zeta`` with ``a0 cosh(zeta) = U``; ``side = +1`` takes ``Re zeta >= 0``."""
    w = np.asarray(U, dtype=complex) / a0
    zeta = _acosh_polish(w, np.arccosh(w))
    zeta = np.where(zeta.real < 0, -zeta, zeta)
    return np.where(np.asarray(side) >= 0, zeta, -zeta)


@dataclass
class ConformalMapSample:
    z: np.ndarray
    psi: np.ndarray
    psi1: np.ndarray
    psi2: np.ndarray
    center: complex
    a0: float
    flagged: np.ndarray  # nodes on beta whose branch was fixed by continuity
    beta: np.ndarray = field(repr=False, default=None)
    conjugate: GridField | None = field(repr=False, default=None)

    def __len__(self):
        return self.z.size

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "psi_re", "psi_im", "psi1_re", "psi1_im", "psi2_re", "psi2_im", "flagged"])
            for k in range(self.z.size):
                row = []
                for c in (self.z[k], self.psi[k], self.psi1[k], self.psi2[k]):
                    row += [repr(float(c.real)), repr(float(c.imag))]
                w.writerow(row + [int(self.flagged[k])])


def build_psi(field: GridField, v: GridField, a0: float, saddle, probe_radius: float | None = None) -> ConformalMapSample:
    """``psi = V_a0^{-1}(u + i v)`` on positive nodes near the saddle.

    Nodes within half a spacing of ``beta`` take the branch of the nearest
    unflagged node (continuity) and are flagged.  ``psi'`` and ``psi''`` are
    centred differences, averaged over the x and y stencils.
    """
    if not a0 > 0:
        raise DomainError("a0 must be positive")
    saddle = complex(saddle)
    u = field.values
    ok = (u > 0) & np.isfinite(v.values)
    zz = field.coords()
    if probe_radius is not None:
        ok &= np.abs(zz - saddle) <= probe_radius
    J, I = np.nonzero(ok)
    z = zz[J, I]
    U = u[J, I] + 1j * v.values[J, I]

    beta = steepest_descent_arc(field, saddle)
    side, dist = _side(beta, z)
    flagged = dist < 0.5 * field.h
    zeta = hairpin_preimage(U, a0, side)
    psi = a0 * 1j * (zeta + np.sinh(zeta))
    if np.any(flagged):
        # beta maps onto the real segment of the model: the half of beta after
        # the saddle goes to Re psi > 0, the half before it to Re psi < 0
        tree = cKDTree(np.column_stack([beta.real, beta.imag]))
        _, kb = tree.query(np.column_stack([z[flagged].real, z[flagged].imag]))
        k0 = int(np.argmin(np.abs(beta - saddle)))
        want = np.sign(kb - k0)
        cur = psi[flagged]
        psi[flagged] = np.where(want * cur.real < 0, -cur, cur)

    P = np.full(u.shape, np.nan, dtype=complex)
    P[J, I] = psi
    h = field.h
    # V^{-1} has a square-root branch point at the saddle: an error e in U
    # becomes sqrt(e) in psi there, so a node sitting on the saddle takes the
    # 4-neighbour mean instead (psi is holomorphic)
    for k in np.nonzero(np.abs(z - saddle) < 0.5 * h)[0]:
        j, i = J[k], I[k]
        if 0 < j < u.shape[0] - 1 and 0 < i < u.shape[1] - 1:
            nb = P[[j - 1, j + 1, j, j], [i, i, i - 1, i + 1]]
            if np.all(np.isfinite(nb)):
                P[j, i] = psi[k] = nb.mean()
    d1x = (np.roll(P, -1, 1) - np.roll(P, 1, 1)) / (2 * h)
    d1y = -1j * (np.roll(P, -1, 0) - np.roll(P, 1, 0)) / (2 * h)
    d2x = (np.roll(P, -1, 1) - 2 * P + np.roll(P, 1, 1)) / h**2
    d2y = -(np.roll(P, -1, 0) - 2 * P + np.roll(P, 1, 0)) / h**2
    for arr in (d1x, d2x):
        arr[:, 0] = arr[:, -1] = np.nan
    for arr in (d1y, d2y):
        arr[0, :] = arr[-1, :] = np.nan
    psi1 = _mean2(d1x[J, I], d1y[J, I])
    psi2 = _mean2(d2x[J, I], d2y[J, I])
    return ConformalMapSample(z, psi, psi1, psi2, saddle, float(a0), flagged, beta, v)


def _mean2(a, b):
    fa, fb = np.isfinite(a), np.isfinite(b)
    out = np.where(fa & fb, 0.5 * (a + b), np.where(fa, a, b))
    return np.where(fa | fb, out, np.nan + 0j)


def psi_estimates(cmap: ConformalMapSample, a0: float, r0: float | None = None):
    """``(sup|psi''|, min_theta sup|psi' - e^{i theta}| / (|z| + a0), theta)``.

    ``|z|`` is measured from the saddle; only nodes with both difference
    quotients available (and within ``r0`` when given) count.
    """
    x = cmap.z - cmap.center
    use = np.isfinite(cmap.psi1) & np.isfinite(cmap.psi2)
    if r0 is not None:
        use &= np.abs(x) <= r0
    if not np.any(use):
        return math.nan, math.nan, math.nan
    d1 = cmap.psi1[use]
    wgt = 1.0 / (np.abs(x[use]) + a0)
    sup2 = float(np.max(np.abs(cmap.psi2[use])))

    f = lambda t: float(np.max(np.abs(d1 - np.exp(1j * t)) * wgt))
    seed = float(np.angle(np.median(d1.real) + 1j * np.median(d1.imag)))
    res = minimize_scalar(f, bounds=(seed - 0.5, seed + 0.5), method="bounded", options={"xatol": 1e-10})
    theta = float(res.x) % (2 * math.pi)
    return sup2, float(res.fun), theta


def curvature_compare(field: GridField, cmap: ConformalMapSample, a0: float, strands=None) -> float:
    """``sup |kappa(z) - kappa_a0(psi(z))|`` over traced free-boundary points.

    On ``F(u)`` the holomorphic extension is ``i v``, and the model
    curvature ``1 / (a0 cosh^2 Re zeta)`` is the same on both branches.
    """
    if cmap.conjugate is None:
        raise DomainError("map sample carries no conjugate field")
    if strands is None:
        strands = trace_free_boundary(field)
    reach = float(np.max(np.abs(cmap.z - cmap.center))) if cmap.z.size else 0.0
    pts = []
    kap = []
    for s in strands:
        keep = np.isfinite(s.curvature) & (np.abs(s.points - cmap.center) <= reach)
        pts.append(s.points[keep])
        kap.append(s.curvature[keep])
    pts = np.concatenate(pts) if pts else np.zeros(0, complex)
    kap = np.concatenate(kap) if kap else np.zeros(0)
    if pts.size == 0:
        return math.nan
    vb = harmonic_jet(field, pts, values=cmap.conjugate.values).value.real
    zeta = hairpin_preimage(1j * vb, a0, 1.0)
    model = 1.0 / (a0 * np.cosh(zeta.real) ** 2)
    d = np.abs(kap - model)
    d = d[np.isfinite(d)]
    return float(np.max(d)) if d.size else math.nan


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


@dataclass
class NeckParams:
    epsilon: float = 0.1  # proximity ball radius is 2 a0 / epsilon
    annulus: tuple = (4.0, 16.0)  # four-graph annulus radii in units of a0
    neck_ball: float = 4.0  # F(u) outside these multiples of a0 is "away from necks"
    max_probe: float | None = None


@dataclass
class NeckReport:
    center: complex
    a: float
    rotation: RigidMotion
    proximity_delta: float
    four_graph: dict
    psi_sup_second: float
    psi_first_defect: float
    curvature_defect: float
    psi_theta: float = math.nan
    probe_radius: float = math.nan
    flagged_nodes: int = 0
    errors: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["center"] = [self.center.real, self.center.imag]
        d["rotation"] = self.rotation.to_dict()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, allow_nan=True)


@dataclass
class NeckScan:
    reports: list
    away_curvature_sup: float
    away_points: int

    def __len__(self):
        return len(self.reports)

    def __iter__(self):
        return iter(self.reports)

    def __getitem__(self, k):
        return self.reports[k]

    def to_dict(self) -> dict:
        return {
            "necks": [r.to_dict() for r in self.reports],
            "away_curvature_sup": self.away_curvature_sup,
            "away_points": self.away_points,
        }


def _four_graph_dict(res: FourGraphResult) -> dict:
    return {
        "passed": bool(res.passed),
        "lip": float(res.lip),
        "theta": float(res.rotation.theta),
        "n_branches": int(res.n_branches),
        "diagnostic": res.diagnostic,
    }


def _edge_distance(field, z):
    xmin, xmax, ymin, ymax = field.window
    return min(z.real - xmin, xmax - z.real, z.imag - ymin, ymax - z.imag)


def _analyse_neck(field, strands, z0, a0, params: NeckParams) -> NeckReport:
    errors = []
    edge = _edge_distance(field, z0) - 4 * field.h
    R = min(2.0 * a0 / params.epsilon, edge)
    if params.max_probe is not None:
        R = min(R, params.max_probe)
    delta, rot = math.nan, RigidMotion(0.0, z0)
    try:
        delta, rot = hairpin_proximity(field, z0, a0, 2.0 * a0 / R)
    except BernoulliLabError as exc:
        errors.append(f"proximity: {exc}")
    r_in, r_out = params.annulus[0] * a0, min(params.annulus[1] * a0, edge)
    fg = {"passed": False, "lip": math.inf, "theta": math.nan, "n_branches": 0, "diagnostic": "annulus exits window"}
    if r_in < r_out:
        fg = _four_graph_dict(four_graph_check(strands, z0, r_in, r_out, rotation_hint=rot.theta))
    sup2 = first = kdef = theta = math.nan
    flagged = 0
    try:
        crop = field.crop((z0.real - R, z0.real + R, z0.imag - R, z0.imag + R))
        v = harmonic_conjugate(crop, z0)
        cmap = build_psi(crop, v, a0, z0, probe_radius=R)
        flagged = int(np.sum(cmap.flagged))
        sup2, first, theta = psi_estimates(cmap, a0, R)
        kdef = curvature_compare(crop, cmap, a0)
    except BernoulliLabError as exc:
        errors.append(f"conformal map: {exc}")
    return NeckReport(complex(z0), float(a0), rot, delta, fg, sup2, first, kdef, theta, R, flagged, errors)


def neck_pipeline(field: GridField, params: NeckParams | None = None) -> NeckScan:
    """One report per detected neck, plus the curvature of ``F(u)`` away from them."""
    params = params or NeckParams()
    strands = trace_free_boundary(field)
    saddles = find_saddles(field)
    reports = [_analyse_neck(field, strands, z0, a0, params) for z0, a0 in saddles]
    pts = np.concatenate([s.points for s in strands]) if strands else np.zeros(0, complex)
    kap = np.concatenate([s.curvature for s in strands]) if strands else np.zeros(0)
    away = np.isfinite(kap)
    for z0, a0 in saddles:
        away &= np.abs(pts - z0) > params.neck_ball * a0
    sup = float(np.max(np.abs(kap[away]))) if np.any(away) else 0.0
    return NeckScan(reports, sup, int(np.sum(away)))
