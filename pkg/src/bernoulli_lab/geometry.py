"""Free-boundary extraction and measurement on grid fields."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree
from skimage import measure

from .errors import DomainError, StructureError
from .grid import GridField, central_gradient, harmonic_jet
from .solutions import AnalyticSolution, RigidMotion

TAU = 0.5
FIT_RADIUS = 3.5
FOUR_CONN = ndimage.generate_binary_structure(2, 1)


@dataclass
class ContourStrand:
    points: np.ndarray
    curvature: np.ndarray
    closed: bool = False
    flagged: np.ndarray = field(default=None)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=complex)
        self.curvature = np.asarray(self.curvature, dtype=float)
        if self.flagged is None:
            self.flagged = ~np.isfinite(self.curvature)

    def __len__(self):
        return self.points.size

    def length(self) -> float:
        return float(np.sum(np.abs(np.diff(self.points))))


@dataclass
class FlatnessReport:
    delta: float
    rotation: RigidMotion


@dataclass
class FourGraphResult:
    passed: bool
    lip: float
    rotation: RigidMotion
    n_branches: int
    diagnostic: str = ""

    def __iter__(self):
        return iter((self.passed, self.lip, self.rotation))


# ---------------------------------------------------------------------------
# tracing
# ---------------------------------------------------------------------------


def _interp_normal(grid: GridField, z):
    g = central_gradient(grid)
    gx = GridField(grid.origin, grid.h, g.real).interp(z, outside=0.0)
    gy = GridField(grid.origin, grid.h, g.imag).interp(z, outside=0.0)
    n = gx + 1j * gy
    mag = np.abs(n)
    return np.where(mag > 0, n / np.where(mag > 0, mag, 1.0), 0j)


def one_sided_jet(grid: GridField, z, normal=None, radius: float = FIT_RADIUS, values=None):
    """Harmonic jet from positive nodes on the ``normal`` side of each point."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    if normal is None:
        normal = _interp_normal(grid, z)
    return harmonic_jet(grid, z, radius=radius, values=values, normal=normal)


def project_to_boundary(grid: GridField, pts, iterations: int = 2):
    """Move points onto ``{u = 0}`` along the locally fitted gradient."""
    pts = np.asarray(pts, dtype=complex).copy()
    normal = _interp_normal(grid, pts)
    for _ in range(iterations):
        jet = one_sided_jet(grid, pts, normal)
        g = np.conj(jet.d1)
        mag2 = np.abs(g) ** 2
        ok = np.isfinite(g) & (mag2 > 1e-12)
        step = np.where(ok, -jet.value.real * g / np.where(ok, mag2, 1.0), 0.0)
        step = np.where(np.abs(step) <= 2.0 * grid.h, step, 0.0)
        pts = pts + step
        normal = np.where(ok, g / np.sqrt(np.where(ok, mag2, 1.0)), normal)
    return pts, normal


def curvature_from_jet(d1, d2):
    """Curvature of the level set through a point from ``U'`` and ``U''``.

    Positive when the zero phase is locally convex.
    """
    d1 = np.asarray(d1)
    return -(np.asarray(d2) * np.conj(d1) ** 2).real / np.abs(d1) ** 3


def _dedupe(points, min_gap):
    keep = [0]
    for k in range(1, points.size):
        if abs(points[k] - points[keep[-1]]) >= min_gap:
            keep.append(k)
    if keep[-1] != points.size - 1 and points.size > 1:
        keep[-1] = points.size - 1
    return points[np.array(keep)]


def trace_free_boundary(grid: GridField, tau: float = TAU, project: bool = True):
    """Trace ``{u = tau h}`` by marching squares and return the strands.

    Strands are oriented with the positive phase on their left.  When
    ``project`` is true the points are pulled onto ``{u = 0}`` and carry
    curvature from the local harmonic fit; points whose fitting stencil
    leaves the window, and endpoints of open strands, are flagged with NaN.
    """
    if grid.nx < 2 or grid.ny < 2:
        raise DomainError("field needs at least 2 nodes per direction")
    level = tau * grid.h
    v = grid.values
    if not np.any(v <= level) or not np.any(v > level):
        return []
    raw = measure.find_contours(v, level)
    strands = []
    edge_margin = FIT_RADIUS + 1.0
    for c in raw:
        pts = grid.origin + grid.h * (c[:, 1] + 1j * c[:, 0])
        closed = bool(c.shape[0] > 2 and np.allclose(c[0], c[-1]))
        if closed:
            pts = pts[:-1]
        if pts.size < 2:
            continue
        pts = _dedupe(pts, 0.25 * grid.h)
        if pts.size < 2:
            continue
        # orient: positive phase to the left
        mid = pts[: -1] + 0.5 * np.diff(pts)
        tang = np.diff(pts)
        probe = grid.interp(mid + 0.5j * tang, outside=np.nan) - grid.interp(mid - 0.5j * tang, outside=np.nan)
        if np.nansum(probe) < 0:
            pts = pts[::-1]
        kappa = np.full(pts.size, np.nan)
        if project:
            pts, _ = project_to_boundary(grid, pts)
            jet = one_sided_jet(grid, pts)
            kappa = curvature_from_jet(jet.d1, jet.d2)
            near_edge = ~grid.contains(pts, margin=edge_margin)
            kappa[near_edge] = np.nan
            if not closed:
                kappa[0] = np.nan
                kappa[-1] = np.nan
        strands.append(ContourStrand(pts, kappa, closed))
    strands.sort(key=lambda s: (s.points[0].real, s.points[0].imag))
    return strands


def fb_curvature_from_field(grid: GridField, strand: ContourStrand):
    """Per-point curvature of ``strand`` from the one-sided harmonic fit of ``grid``."""
    jet = one_sided_jet(grid, strand.points)
    kappa = curvature_from_jet(jet.d1, jet.d2)
    kappa[~grid.contains(strand.points, margin=FIT_RADIUS + 1.0)] = np.nan
    if not strand.closed and kappa.size:
        kappa[0] = np.nan
        kappa[-1] = np.nan
    return kappa


def gradient_at(grid: GridField, z):
    """Gradient ``u_x + i u_y`` at arbitrary positive-phase points by local fit."""
    return np.conj(one_sided_jet(grid, z).d1)


# ---------------------------------------------------------------------------
# distances and flatness
# ---------------------------------------------------------------------------


def _as_xy(pts):
    pts = np.asarray(pts)
    if np.iscomplexobj(pts):
        pts = pts.ravel()
        return np.column_stack([pts.real, pts.imag])
    return pts.reshape(-1, 2)


def hausdorff(A, B) -> float:
    """Symmetric Hausdorff distance between two finite point sets."""
    a = _as_xy(A)
    b = _as_xy(B)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise DomainError("hausdorff needs two nonempty point sets")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DomainError("hausdorff needs finite points")
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float(max(da.max(), db.max()))


def _ball_samples(n_r: int = 48, n_t: int = 128):
    r = (np.arange(n_r) + 1.0) / n_r
    t = 2 * np.pi * np.arange(n_t) / n_t
    pts = (r[:, None] * np.exp(1j * t)[None, :]).ravel()
    return np.concatenate([[0j], pts])


def _golden_min(f, a, b, tol=1e-10, max_iter=200):
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - g * (b - a)
    d = a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) < tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def _evaluator(u):
    if isinstance(u, GridField):
        return lambda z: u.interp(z, outside=np.nan)
    return u


def flatness(u, center, r: float, n_theta: int = 64) -> FlatnessReport:
    """Smallest ``delta`` with ``|u(p + x) - (rho x)_2^+| <= delta r`` on ``B_r(p)``.

    The ball is sampled on a polar set that rotates with the candidate, so the
    result is equivariant under rigid motions of analytic inputs.
    """
    center = complex(center)
    if not r > 0:
        raise DomainError("radius must be positive")
    if isinstance(u, GridField):
        xmin, xmax, ymin, ymax = u.window
        if (
            center.real - r < xmin - 1e-12
            or center.real + r > xmax + 1e-12
            or center.imag - r < ymin - 1e-12
            or center.imag + r > ymax + 1e-12
        ):
            raise DomainError("flatness ball exits the grid window")
    ev = _evaluator(u)
    y = _ball_samples() * r
    target = np.maximum(y.imag, 0.0)

    def dev(theta):
        vals = ev(center + np.exp(1j * theta) * y)
        return float(np.max(np.abs(vals - target))) / r

    thetas = 2 * np.pi * np.arange(n_theta) / n_theta
    devs = np.array([dev(t) for t in thetas])
    k = int(np.argmin(devs))
    step = 2 * np.pi / n_theta
    best_t, best = _golden_min(dev, thetas[k] - step, thetas[k] + step)
    if devs[k] < best:
        best_t, best = thetas[k], devs[k]
    return FlatnessReport(delta=best, rotation=RigidMotion(best_t, center))


# ---------------------------------------------------------------------------
# zero-phase components and separation
# ---------------------------------------------------------------------------


def zero_components(grid: GridField, tau: float = TAU):
    """4-connected labels of nodes with ``u <= tau h``."""
    labels, count = ndimage.label(grid.values <= tau * grid.h, structure=FOUR_CONN)
    return labels, count


def _strand_component(grid, labels, pts):
    """Label of the zero component nearest to each point."""
    zi, zj = np.nonzero(labels.T > 0)
    if zi.size == 0:
        return np.zeros(len(pts), int)
    nodes = np.column_stack([zi, zj]).astype(float)
    tree = cKDTree(nodes)
    fi, fj = grid.index_of(pts)
    _, idx = tree.query(np.column_stack([fi, fj]))
    return labels[zj[idx], zi[idx]]


def separation(grid: GridField, strands=None, tau: float = TAU):
    """Distance between the two zero-phase components and a realising pair."""
    labels, count = zero_components(grid, tau)
    if count != 2:
        raise StructureError(f"expected 2 zero-phase components, found {count}", count=count)
    if strands is None:
        strands = trace_free_boundary(grid, tau)
    pts = np.concatenate([s.points for s in strands]) if strands else np.zeros(0, complex)
    if pts.size == 0:
        raise StructureError("no free boundary traced", count=count)
    comp = _strand_component(grid, labels, pts)
    a = pts[comp == 1]
    b = pts[comp == 2]
    if a.size == 0 or b.size == 0:
        raise StructureError("a zero component has no traced boundary", count=count)
    d, idx = cKDTree(_as_xy(b)).query(_as_xy(a))
    k = int(np.argmin(d))
    return float(d[k]), complex(a[k]), complex(b[idx[k]])


# ---------------------------------------------------------------------------
# four graphs, turning, perimeter
# ---------------------------------------------------------------------------


def _wrap_near(angle, ref):
    """Representative of ``angle`` mod pi in ``(ref - pi/2, ref + pi/2]``."""
    return ref + (angle - ref + 0.5 * np.pi) % np.pi - 0.5 * np.pi


def _annulus_pieces(strands, center, r_in, r_out):
    pieces = []
    for s in strands:
        rad = np.abs(s.points - center)
        inside = (rad > r_in) & (rad < r_out)
        if not np.any(inside):
            continue
        idx = np.nonzero(inside)[0]
        breaks = np.nonzero(np.diff(idx) > 1)[0]
        for run in np.split(idx, breaks + 1):
            if run.size >= 2:
                pieces.append(s.points[run])
        if s.closed and len(pieces) >= 2 and inside[0] and inside[-1]:
            last = pieces.pop()
            pieces[-1 if len(pieces) else 0] = np.concatenate([last, pieces[-1]])
    return pieces


def four_graph_check(strands, center, r_in: float, r_out: float, rotation_hint=None) -> FourGraphResult:
    """Check that ``F(u)`` in the annulus is four Lipschitz graphs over a common line."""
    if not r_in < r_out:
        raise DomainError("need r_in < r_out")
    center = complex(center)
    pieces = _annulus_pieces(strands, center, r_in, r_out)
    segs = [np.diff(p) for p in pieces]
    allseg = np.concatenate(segs) if segs else np.zeros(0, complex)
    allseg = allseg[np.abs(allseg) > 0]
    if allseg.size == 0:
        return FourGraphResult(False, math.inf, RigidMotion(0.0, center), 0, "no strand points in the annulus")

    if rotation_hint is None:
        pts = np.concatenate(pieces) - center
        xy = _as_xy(pts)
        cov = xy.T @ xy
        w, V = np.linalg.eigh(cov)
        ref = math.atan2(V[1, -1], V[0, -1])
    else:
        ref = float(rotation_hint.theta if isinstance(rotation_hint, RigidMotion) else rotation_hint)
    ang = _wrap_near(np.angle(allseg), ref)
    # the minimax line direction bisects the extreme segment angles
    theta = 0.5 * (ang.max() + ang.min())
    ang = _wrap_near(np.angle(allseg), theta)
    theta = 0.5 * (ang.max() + ang.min())
    spread = 0.5 * (ang.max() - ang.min())
    lip = math.tan(spread) if spread < 0.5 * np.pi else math.inf
    theta = theta % np.pi
    rot = RigidMotion(theta, center)

    rotor = np.exp(-1j * theta)
    n_graph = 0
    sides = []
    for p in pieces:
        x = (rotor * (p - center)).real
        dx = np.diff(x)
        if np.all(dx > 0) or np.all(dx < 0):
            n_graph += 1
        sides.append(np.sign(np.mean(x)))
    diag = ""
    passed = len(pieces) == 4 and n_graph == 4
    if len(pieces) != 4:
        diag = f"found {len(pieces)} branches in the annulus"
    elif n_graph != 4:
        diag = f"only {n_graph} of 4 branches are single-valued"
    elif sorted(sides) != [-1, -1, 1, 1]:
        passed = False
        diag = "branches do not split two per side of the inner ball"
    return FourGraphResult(passed, lip, rot, len(pieces), diag)


def strand_turning(strand) -> float:
    """Total unsigned turning (sum of absolute exterior angles) of a polyline.

    Closed strands include the turns at the closing segment.
    """
    pts = strand.points if isinstance(strand, ContourStrand) else np.asarray(strand, dtype=complex)
    if pts.size < 3:
        return 0.0
    if isinstance(strand, ContourStrand) and strand.closed:
        pts = np.concatenate([pts, pts[:2]])
    seg = np.diff(pts)
    seg = seg[np.abs(seg) > 0]
    if seg.size < 2:
        return 0.0
    turn = np.angle(seg[1:] / seg[:-1])
    return float(np.sum(np.abs(turn)))


def restrict_strand(strand: ContourStrand, mask_fn) -> list:
    """Split a strand into maximal runs of points satisfying ``mask_fn``."""
    ok = mask_fn(strand.points)
    idx = np.nonzero(ok)[0]
    if idx.size == 0:
        return []
    runs = np.split(idx, np.nonzero(np.diff(idx) > 1)[0] + 1)
    return [ContourStrand(strand.points[r], strand.curvature[r], False) for r in runs if r.size >= 2]


def _edge_positive_length(profile, h, labels_line, comp):
    """Length of ``{u > 0}`` along a 1-d edge profile, restricted to a component."""
    total = 0.0
    for k in range(profile.size - 1):
        a, b = profile[k], profile[k + 1]
        in_a = labels_line[k] == comp
        in_b = labels_line[k + 1] == comp
        if not (in_a or in_b):
            continue
        if a > 0 and b > 0:
            total += h
        elif a > 0 or b > 0:
            pos = a if a > 0 else b
            neg = b if a > 0 else a
            total += h * pos / (pos - neg) if pos - neg > 0 else 0.0
    return total


def perimeter_diagnostic(grid: GridField, component=None, strands=None) -> float:
    """``H1(dU cap F(u)) / H1(dU minus F(u))`` for a positive component ``U``.

    ``component`` is a point inside ``U``; by default the largest positive
    component is used.  Returns ``inf`` when ``U`` does not reach the window
    edge.
    """
    pos = grid.values > 0
    labels, count = ndimage.label(pos, structure=FOUR_CONN)
    if count == 0:
        raise DomainError("field has no positive phase")
    if component is None:
        sizes = np.bincount(labels.ravel())[1:]
        comp = int(np.argmax(sizes)) + 1
    else:
        fi, fj = grid.index_of(complex(component))
        comp = int(labels[int(round(fj)), int(round(fi))])
        if comp == 0:
            raise DomainError("component seed is not in the positive phase")
    h = grid.h
    v = grid.values
    outer = (
        _edge_positive_length(v[0, :], h, labels[0, :], comp)
        + _edge_positive_length(v[-1, :], h, labels[-1, :], comp)
        + _edge_positive_length(v[:, 0], h, labels[:, 0], comp)
        + _edge_positive_length(v[:, -1], h, labels[:, -1], comp)
    )
    if strands is None:
        strands = trace_free_boundary(grid)
    fb = 0.0
    for s in strands:
        if s.points.size < 2:
            continue
        fi, fj = grid.index_of(s.points)
        ci = np.clip(np.rint(fi).astype(int), 0, grid.nx - 1)
        cj = np.clip(np.rint(fj).astype(int), 0, grid.ny - 1)
        lab = labels[cj, ci]
        # nearest node may sit in the zero phase; use the node with largest u around it
        if np.any(lab == 0):
            zero = lab == 0
            best = np.zeros(np.count_nonzero(zero), int)
            bi = ci[zero].copy()
            bj = cj[zero].copy()
            bestv = np.full(bi.size, -np.inf)
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    ii = np.clip(ci[zero] + di, 0, grid.nx - 1)
                    jj = np.clip(cj[zero] + dj, 0, grid.ny - 1)
                    better = v[jj, ii] > bestv
                    bestv = np.where(better, v[jj, ii], bestv)
                    best = np.where(better, labels[jj, ii], best)
            lab = lab.copy()
            lab[zero] = best
        seg = np.abs(np.diff(s.points))
        mine = (lab[:-1] == comp) & (lab[1:] == comp)
        fb += float(np.sum(seg[mine]))
        if s.closed:
            fb += abs(s.points[0] - s.points[-1]) if lab[0] == comp and lab[-1] == comp else 0.0
    if outer == 0.0:
        return math.inf
    return fb / outer


def write_strands_csv(strands, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["strand", "x", "y", "kappa"])
        for k, s in enumerate(strands):
            for p, kap in zip(s.points, s.curvature):
                w.writerow([k, repr(float(p.real)), repr(float(p.imag)), repr(float(kap))])


def strand_points(strands) -> np.ndarray:
    if not strands:
        return np.zeros(0, complex)
    return np.concatenate([s.points for s in strands])


def analytic_boundary(sol: AnalyticSolution, window, n: int = 4000):
    """Dense sample of the exact free boundary of ``sol`` inside ``window``."""
    from .solutions import Hairpin, TwoPlane, Wedge, boundary_param

    xmin, xmax, ymin, ymax = window
    span = math.hypot(xmax - xmin, ymax - ymin)
    corners = np.array([xmin + 1j * ymin, xmax + 1j * ymin, xmin + 1j * ymax, xmax + 1j * ymax])
    reach = float(np.max(np.abs(sol.motion.pullback(corners))))
    fam = sol.family
    t = np.linspace(-reach - span, reach + span, n)
    if isinstance(fam, Hairpin):
        ymax_c = fam.a * math.acosh(max(1.0, reach / fam.a + 1.0))
        y1 = np.linspace(-ymax_c / fam.a, ymax_c / fam.a, n)
        left, _ = boundary_param(fam.a, y1, "left")
        right, _ = boundary_param(fam.a, y1, "right")
        w = np.concatenate([left, right])
    elif isinstance(fam, TwoPlane):
        w = np.concatenate([t + 0j, t - 1j * fam.b])
    else:
        w = t + 0j
    z = sol.motion.apply(w)
    keep = (z.real >= xmin) & (z.real <= xmax) & (z.imag >= ymin) & (z.imag <= ymax)
    return z[keep]
