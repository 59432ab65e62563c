"""Minimal bigraphs from free-boundary solutions.

With ``U = u + i v`` holomorphic on the positive phase, the Gauss map is
``g = U'`` and the height differential ``dh = g dz``.  The immersion

    X = Re int (1/2 (1 - g^2), i/2 (1 + g^2), g) dz

is conformal with metric factor ``(1 + |g|^2) / 2`` and ``X_3 = u``, and its
reflection through ``X_3 = 0`` closes it up into a minimal bigraph.  The
standard hairpin ``H_a`` gives the catenoid of neck radius ``a``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import csgraph

from .errors import DomainError, FitError, StructureError, UnsupportedFamilyError
from .integrate import EdgeGraph, integrate_edges
from .solutions import (
    AnalyticSolution,
    ComposedHairpin,
    HalfPlane,
    Hairpin,
    evaluate,
    holo_jet,
    margin,
    phi_inv,
    window_shape,
)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


@dataclass
class WeierstrassData:
    """Gauss map ``g`` and ``dh = g dz`` of a solution with a global extension."""

    solution: object
    saddle: complex | None = None
    neck_height: float | None = None

    def jet(self, z, order=2):
        return holo_jet(self.solution, z, order=order) if isinstance(self.solution, AnalyticSolution) else self.solution.holo_jet(z, order=order)

    def g_eval(self, z):
        return self.jet(z, order=1)[1]

    def dh_density(self, z):
        return self.g_eval(z)

    def g_prime(self, z):
        return self.jet(z, order=2)[2]

    def height(self, z):
        z = np.asarray(z, dtype=complex)
        if isinstance(self.solution, AnalyticSolution):
            return evaluate(self.solution, z)
        return self.solution(z)

    def margin(self, z):
        if isinstance(self.solution, AnalyticSolution):
            return margin(self.solution, z)
        return self.solution.margin(z)

    def model_point(self, z):
        """Point of the model hairpin domain corresponding to ``z``."""
        z = np.asarray(z, dtype=complex)
        if isinstance(self.solution, AnalyticSolution):
            return self.solution.motion.pullback(z)
        return self.solution.model_point(z)

    def model_scale(self, z):
        """``|psi'(z)|`` of the map onto the model domain."""
        z = np.asarray(z, dtype=complex)
        if isinstance(self.solution, ComposedHairpin):
            return np.abs(self.solution.psi.d1(self.solution.motion.pullback(z)))
        return np.ones(z.shape)


def weierstrass_data(sol) -> WeierstrassData:
    """Weierstrass data of a hairpin, a half-plane or a composed near-hairpin."""
    if isinstance(sol, ComposedHairpin):
        z0 = complex(sol.motion.apply(sol.psi.inverse(0j)))
        return WeierstrassData(sol, z0, float(sol.a))
    if not isinstance(sol, AnalyticSolution):
        raise UnsupportedFamilyError(f"no Weierstrass data for {type(sol).__name__}")
    fam = sol.family
    if isinstance(fam, Hairpin):
        return WeierstrassData(sol, complex(sol.motion.shift), float(fam.a))
    if isinstance(fam, HalfPlane):
        return WeierstrassData(sol)
    raise UnsupportedFamilyError(
        f"{fam.tag} has only per-component holomorphic extensions; no global Weierstrass data"
    )


def integrand(data: WeierstrassData, z):
    """``(1/2 (1 - g^2), i/2 (1 + g^2), g)`` as a complex array ``(..., 3)``."""
    g = data.g_eval(z)
    g2 = g * g
    return np.stack([0.5 * (1.0 - g2), 0.5j * (1.0 + g2), g], axis=-1)


def segment_integral(data: WeierstrassData, z0, z1):
    """``Re int_{z0}^{z1}`` of the integrand along straight segments (4-point Gauss)."""
    z0 = np.atleast_1d(np.asarray(z0, dtype=complex))
    z1 = np.atleast_1d(np.asarray(z1, dtype=complex))
    d = z1 - z0
    t = 0.5 * (_GL_NODES + 1.0)
    pts = z0[:, None] + d[:, None] * t[None, :]
    F = integrand(data, pts)
    return (0.5 * d[:, None] * np.einsum("k,nkc->nc", _GL_WEIGHTS, F)).real


@dataclass
class SurfaceMesh:
    vertices: np.ndarray  # (n, 3)
    faces: np.ndarray  # (m, 3)
    gauss_curvature: np.ndarray
    metric_factor: np.ndarray
    params: np.ndarray  # parameter-domain point of each vertex
    boundary: np.ndarray  # bool: vertex lies on X_3 = 0
    boundary_label: np.ndarray  # zero-phase component of boundary vertices (0 elsewhere)
    h: float
    saddle: complex | None = None
    neck_height: float | None = None
    edge_residual: float = 0.0
    tree_drift: float = 0.0
    aligned: bool = False

    def copy_with(self, vertices, aligned=True) -> "SurfaceMesh":
        out = SurfaceMesh(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        out.vertices = vertices
        out.aligned = aligned
        return out

    def write_obj(self, path) -> None:
        with open(path, "w") as fh:
            for x, y, z in self.vertices:
                fh.write(f"v {float(x)!r} {float(y)!r} {float(z)!r}\n")
            for a, b, c in self.faces + 1:
                fh.write(f"f {a} {b} {c}\n")

    def sidecar(self) -> dict:
        return {
            "n_vertices": int(self.vertices.shape[0]),
            "n_faces": int(self.faces.shape[0]),
            "h": self.h,
            "aligned": self.aligned,
            "edge_residual": self.edge_residual,
            "tree_drift": self.tree_drift,
            "gauss_curvature": [float(k) for k in self.gauss_curvature],
            "metric_factor": [float(m) for m in self.metric_factor],
        }

    def write_sidecar(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.sidecar(), fh, sort_keys=True)


def _crossings(data, za, zb, iters=60):
    """Points on segments ``[za, zb]`` where the margin changes sign (bisection)."""
    lo = np.zeros(za.size)
    hi = np.ones(za.size)
    ma = np.asarray(data.margin(za), dtype=float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        mm = np.asarray(data.margin(za + (zb - za) * mid), dtype=float)
        same = np.sign(mm) == np.sign(ma)
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return za + (zb - za) * 0.5 * (lo + hi)


def immerse(data: WeierstrassData, window, h: float, basepoint=None) -> SurfaceMesh:
    """Integrate the Weierstrass data over ``Omega cap window`` on a grid of step ``h``.

    Vertices are the grid nodes in the positive phase plus the exact
    crossings of grid edges with the free boundary (where ``X_3 = 0``).
    ``X(basepoint) = (0, 0, u(basepoint))``, so ``X_3 = u`` throughout.
    """
    nx, ny = window_shape(window, h)
    xmin, _, ymin, _ = (float(v) for v in window)
    zz = xmin + h * np.arange(nx)[None, :] + 1j * (ymin + h * np.arange(ny)[:, None])
    inside = np.asarray(data.margin(zz), dtype=float) >= 0
    if not np.any(inside):
        raise DomainError("window does not meet the positive phase")
    zero_labels, _ = ndimage.label(~inside, structure=ndimage.generate_binary_structure(2, 1))

    node_id = -np.ones((ny, nx), dtype=np.int64)
    node_id[inside] = np.arange(int(inside.sum()))
    params = [zz[inside]]
    n = params[0].size

    # crossing vertices on grid edges with exactly one positive endpoint
    cross_id = {}
    src, dst = [], []
    blabels = []
    for axis in (1, 0):
        a_sl = (slice(None), slice(None, -1)) if axis == 1 else (slice(None, -1), slice(None))
        b_sl = (slice(None), slice(1, None)) if axis == 1 else (slice(1, None), slice(None))
        ia, ib = inside[a_sl], inside[b_sl]
        both = ia & ib
        src.append(node_id[a_sl][both])
        dst.append(node_id[b_sl][both])
        J, I = np.nonzero(ia ^ ib)
        if J.size == 0:
            continue
        za = zz[a_sl][J, I]
        zb = zz[b_sl][J, I]
        from_a = ia[J, I]
        zin = np.where(from_a, za, zb)
        zout = np.where(from_a, zb, za)
        zc = _crossings(data, zin, zout)
        ids = n + np.arange(zc.size)
        n += zc.size
        params.append(zc)
        nin = np.where(from_a, node_id[a_sl][J, I], node_id[b_sl][J, I])
        src.append(nin)
        dst.append(ids)
        lab_out = np.where(from_a, zero_labels[b_sl][J, I], zero_labels[a_sl][J, I])
        blabels.append(lab_out)
        for j, i, k in zip(J, I, ids):
            cross_id[(axis, int(j), int(i))] = int(k)
    params = np.concatenate(params)
    src = np.concatenate(src)
    dst = np.concatenate(dst)
    n_nodes = int(inside.sum())
    boundary = np.zeros(n, dtype=bool)
    boundary[n_nodes:] = True
    blab = np.zeros(n, dtype=np.int64)
    if blabels:
        blab[n_nodes:] = np.concatenate(blabels)

    if basepoint is None:
        basepoint = data.saddle if data.saddle is not None else params[0]
    basepoint = complex(basepoint)
    k0 = int(np.argmin(np.abs(params[:n_nodes] - basepoint)))
    incr = segment_integral(data, params[src], params[dst])
    res = integrate_edges(EdgeGraph(n, src, dst), incr, k0)
    if not np.all(res.component):
        raise StructureError("positive phase in the window is not connected", count=None)
    X = res.values + segment_integral(data, basepoint, params[k0])[0]
    X[:, 2] += float(np.asarray(data.height(np.array([basepoint])))[0])

    faces = _faces(inside, node_id, cross_id)
    g = data.g_eval(params)
    gp = data.g_prime(params)
    lam = 0.5 * (1.0 + np.abs(g) ** 2)
    K = -16.0 * np.abs(gp) ** 2 / (1.0 + np.abs(g) ** 2) ** 4
    return SurfaceMesh(
        X,
        faces,
        K,
        lam,
        params,
        boundary,
        blab,
        float(h),
        data.saddle,
        data.neck_height,
        res.edge_residual,
        res.tree_drift,
    )


def _faces(inside, node_id, cross_id):
    ny, nx = inside.shape
    tris = []
    # fully interior cells: two triangles along the (0,0)-(1,1) diagonal
    full = inside[:-1, :-1] & inside[:-1, 1:] & inside[1:, 1:] & inside[1:, :-1]
    a = node_id[:-1, :-1][full]
    b = node_id[:-1, 1:][full]
    c = node_id[1:, 1:][full]
    d = node_id[1:, :-1][full]
    tris.append(np.stack([a, b, c], axis=1))
    tris.append(np.stack([a, c, d], axis=1))
    part = (inside[:-1, :-1] | inside[:-1, 1:] | inside[1:, 1:] | inside[1:, :-1]) & ~full
    extra = []
    for j, i in zip(*np.nonzero(part)):
        corners = [(j, i), (j, i + 1), (j + 1, i + 1), (j + 1, i)]
        # cell edges in counter-clockwise order: bottom, right, top, left
        edges = [(1, j, i), (0, j, i + 1), (1, j + 1, i), (0, j, i)]
        ins = [bool(inside[c]) for c in corners]
        if ins == [True, False, True, False] or ins == [False, True, False, True]:
            # diagonal configuration: keep the two corners apart
            for k in range(4):
                if ins[k]:
                    e_in = edges[k]
                    e_prev = edges[k - 1]
                    extra.append([node_id[corners[k]], cross_id[e_in], cross_id[e_prev]])
            continue
        poly = []
        for k in range(4):
            if ins[k]:
                poly.append(int(node_id[corners[k]]))
            if ins[k] != ins[(k + 1) % 4]:
                poly.append(cross_id[edges[k]])
        for k in range(1, len(poly) - 1):
            extra.append([poly[0], poly[k], poly[k + 1]])
    if extra:
        tris.append(np.asarray(extra, dtype=np.int64))
    return np.concatenate(tris).astype(np.int64)


# ---------------------------------------------------------------------------
# catenoid comparison
# ---------------------------------------------------------------------------


def canonical_align(mesh: SurfaceMesh, data: WeierstrassData) -> SurfaceMesh:
    """Move the neck top onto the ``x_3`` axis and the catenoid axis onto ``x_1``.

    At the saddle ``g = 0``, so ``dX = Re(dz/2, i dz/2, 0)``; the neck circle
    leaves the saddle along the descent direction ``w`` of ``u``, which fixes
    the horizontal direction ``x_2``.
    """
    if data.saddle is None:
        raise StructureError("no neck to align (solution has no saddle)", count=0)
    z0 = data.saddle
    x0 = segment_integral(data, mesh.params[_nearest(mesh, z0)], z0)[0] + mesh.vertices[_nearest(mesh, z0)]
    d2 = data.g_prime(np.array([z0]))[0]
    w = np.sqrt(-np.conj(d2))
    w = w / abs(w)
    e2 = np.array([w.real, -w.imag, 0.0])
    e3 = np.array([0.0, 0.0, 1.0])
    e1 = np.cross(e2, e3)
    P = mesh.vertices - np.array([x0[0], x0[1], 0.0])
    V = np.stack([P @ e1, P @ e2, P[:, 2]], axis=1)
    return mesh.copy_with(V)


def _nearest(mesh, z):
    return int(np.argmin(np.abs(mesh.params - z)))


def catenoid_mesh(rho: float, x1_max: float, n: int = 64) -> SurfaceMesh:
    """Upper half (``x_3 >= 0``) of the catenoid of neck radius ``rho``, in aligned form.

    Parameters are ``x_1 + i t`` with ``t`` the angle around the axis; the
    two rims ``t = 0, pi`` lie on ``x_3 = 0`` and are the boundary.
    """
    if not rho > 0:
        raise DomainError("rho must be positive")
    x1 = np.linspace(-x1_max, x1_max, 2 * n + 1)
    t = np.linspace(0.0, math.pi, n + 1)
    X1, T = np.meshgrid(x1, t)
    R = rho * np.cosh(X1 / rho)
    V = np.stack([X1.ravel(), (R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()], axis=1)
    V[(T.ravel() == 0) | (T.ravel() == math.pi), 2] = 0.0
    ny, nx = X1.shape
    idx = np.arange(nx * ny).reshape(ny, nx)
    a, b, c, d = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel(), idx[1:, 1:].ravel(), idx[1:, :-1].ravel()
    faces = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    boundary = np.zeros(nx * ny, dtype=bool)
    boundary[idx[0]] = boundary[idx[-1]] = True
    label = np.zeros(nx * ny, dtype=np.int64)
    label[idx[0]] = 1
    label[idx[-1]] = 2
    K = catenoid_curvature(rho, X1.ravel())
    lam = np.cosh(X1.ravel() / rho) ** 2
    return SurfaceMesh(V, faces, K, lam, (X1 + 1j * T).ravel(), boundary, label, float(x1[1] - x1[0]), None, rho, aligned=True)


def reflect_bigraph(mesh: SurfaceMesh) -> SurfaceMesh:
    """Glue the reflection ``x_3 -> -x_3`` along the boundary ``X_3 = 0``.

    Boundary vertices are shared; reflected faces have reversed orientation.
    """
    n = mesh.vertices.shape[0]
    inner = np.nonzero(~mesh.boundary)[0]
    mirror = np.arange(n)
    mirror[inner] = n + np.arange(inner.size)
    Vr = mesh.vertices[inner] * np.array([1.0, 1.0, -1.0])
    faces = np.concatenate([mesh.faces, mirror[mesh.faces][:, ::-1]])
    cat = lambda x: np.concatenate([x, x[inner]])
    out = SurfaceMesh(**{k: getattr(mesh, k) for k in mesh.__dataclass_fields__})
    out.vertices = np.concatenate([mesh.vertices, Vr])
    out.faces = faces
    out.gauss_curvature = cat(mesh.gauss_curvature)
    out.metric_factor = cat(mesh.metric_factor)
    out.params = np.concatenate([mesh.params, np.conj(mesh.params[inner])])
    out.boundary = cat(mesh.boundary)
    out.boundary_label = cat(mesh.boundary_label)
    return out


def catenoid_residual(mesh: SurfaceMesh, rho: float) -> float:
    """``sup |(x2/rho)^2 + (x3/rho)^2 - cosh^2(x1/rho)|`` over the vertices."""
    if not rho > 0:
        raise DomainError("rho must be positive")
    x1, x2, x3 = mesh.vertices.T
    return float(np.max(np.abs((x2 / rho) ** 2 + (x3 / rho) ** 2 - np.cosh(x1 / rho) ** 2)))


def fit_rho(mesh: SurfaceMesh, tol: float = 1e-12) -> float:
    """Golden-section minimiser of the catenoid residual on ``[rho0/2, 2 rho0]``.

    ``rho0`` is the neck-top height (the largest ``x_3`` on the ``x_3``
    axis, i.e. the saddle value).
    """
    rho0 = mesh.neck_height
    if rho0 is None or not rho0 > 0:
        near = np.hypot(mesh.vertices[:, 0], mesh.vertices[:, 1])
        rho0 = float(mesh.vertices[np.argmin(near), 2])
    if not rho0 > 0:
        raise FitError("no positive neck height to seed the bracket", {"rho0": rho0})
    f = lambda r: catenoid_residual(mesh, r)
    lo, hi = 0.5 * rho0, 2.0 * rho0
    gr = 0.5 * (math.sqrt(5.0) - 1.0)
    c, d = hi - gr * (hi - lo), lo + gr * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol * rho0:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - gr * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + gr * (hi - lo)
            fd = f(d)
    rho = 0.5 * (lo + hi)
    ends = (f(0.5 * rho0), f(2.0 * rho0))
    fr = f(rho)
    if not fr < min(ends) or min(abs(rho - 0.5 * rho0), abs(rho - 2.0 * rho0)) < 1e-6 * rho0:
        raise FitError(
            "catenoid residual has no interior minimum on the bracket",
            {"rho0": rho0, "rho": rho, "residual": fr, "end_residuals": ends},
        )
    return rho


def gauss_curvature(data: WeierstrassData, nodes) -> np.ndarray:
    """``K = -16 |U''|^2 / (1 + |U'|^2)^4`` at parameter points."""
    nodes = np.asarray(nodes, dtype=complex)
    g = data.g_eval(nodes)
    gp = data.g_prime(nodes)
    return -16.0 * np.abs(gp) ** 2 / (1.0 + np.abs(g) ** 2) ** 4


def catenoid_curvature(rho: float, x1):
    """Gauss curvature of the catenoid of neck radius ``rho`` at axial coordinate ``x1``."""
    return -1.0 / (np.cosh(np.asarray(x1) / rho) ** 4 * rho**2)


@dataclass
class CurvatureProfile:
    r_lo: np.ndarray
    r_hi: np.ndarray
    count: np.ndarray
    k_defect: np.ndarray
    metric_defect: np.ndarray
    bound: np.ndarray
    epsilon: float

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r_lo", "r_hi", "count", "k_defect", "metric_defect", "bound"])
            for row in zip(self.r_lo, self.r_hi, self.count, self.k_defect, self.metric_defect, self.bound):
                w.writerow([repr(float(row[0])), repr(float(row[1])), int(row[2])] + [repr(float(v)) for v in row[3:]])


def curvature_compare_3d(data: WeierstrassData, rho: float, nodes, n_bins: int = 12) -> CurvatureProfile:
    """Per-bin sup of ``|K - K_rho|`` and of the metric distortion, binned by ``|x|``.

    ``x`` is measured from the saddle.  ``K_rho`` and the model metric are
    evaluated at the corresponding point of the model hairpin ``H_rho``
    (the catenoid of neck radius ``rho``); the model metric is pulled back
    through the identification map.  The bound column is
    ``eps / (100 |x|^2)`` for ``|x| <= sqrt(eps)`` and ``1/100`` beyond,
    with ``eps = 2 pi rho`` and ``|x|`` the bin's outer radius.
    """
    nodes = np.asarray(nodes, dtype=complex).ravel()
    z0 = data.saddle if data.saddle is not None else 0j
    r = np.abs(nodes - z0)
    K = gauss_curvature(data, nodes)
    p = data.model_point(nodes)
    zeta = phi_inv(p / rho)
    K_model = -1.0 / (rho**2 * np.cosh(zeta.real) ** 4)
    gm = -1j * np.tanh(zeta / 2.0)
    lam_model = 0.5 * (1.0 + np.abs(gm) ** 2) * data.model_scale(nodes)
    lam = 0.5 * (1.0 + np.abs(data.g_eval(nodes)) ** 2)
    dk = np.abs(K - K_model)
    dm = np.abs(lam / lam_model - 1.0)
    rpos = r[r > 0]
    lo = max(float(rpos.min()) if rpos.size else 1e-3, 1e-6)
    hi = float(r.max()) * (1 + 1e-12)
    edges = np.geomspace(lo, hi, n_bins + 1)
    edges[0] = 0.0
    which = np.clip(np.searchsorted(edges, r, side="right") - 1, 0, n_bins - 1)
    eps = 2.0 * math.pi * rho
    cnt = np.bincount(which, minlength=n_bins)
    kd = np.full(n_bins, np.nan)
    md = np.full(n_bins, np.nan)
    for b in range(n_bins):
        sel = which == b
        if np.any(sel):
            kd[b] = float(np.max(dk[sel]))
            md[b] = float(np.max(dm[sel]))
    rb = edges[1:]
    bound = np.where(rb <= math.sqrt(eps), eps / (100.0 * rb**2), 0.01)
    return CurvatureProfile(edges[:-1], edges[1:], cnt, kd, md, bound, eps)


# ---------------------------------------------------------------------------
# discrete geometry of the mesh
# ---------------------------------------------------------------------------


def _edge_graph(mesh: SurfaceMesh):
    f = mesh.faces
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    e = np.sort(e, axis=1)
    e = np.unique(e, axis=0)
    w = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    n = mesh.vertices.shape[0]
    return sparse.csr_matrix((np.concatenate([w, w]), (np.concatenate([e[:, 0], e[:, 1]]), np.concatenate([e[:, 1], e[:, 0]]))), shape=(n, n))


def neck_geodesic_length(mesh: SurfaceMesh) -> float:
    """Length of the shortest closed curve around the neck of the bigraph.

    The shortest mesh path between the two boundary components (Dijkstra on
    mesh edges) is half of it; reflection through ``X_3 = 0`` closes it.
    """
    labels = np.unique(mesh.boundary_label[mesh.boundary])
    labels = labels[labels > 0]
    if labels.size != 2:
        raise StructureError(f"expected two boundary components, found {labels.size}", count=int(labels.size))
    A = np.nonzero(mesh.boundary & (mesh.boundary_label == labels[0]))[0]
    B = np.nonzero(mesh.boundary & (mesh.boundary_label == labels[1]))[0]
    G = _edge_graph(mesh)
    dist = csgraph.dijkstra(G, directed=False, indices=A, min_only=True)
    return 2.0 * float(np.min(dist[B]))


def mean_curvature(mesh: SurfaceMesh) -> np.ndarray:
    """Per-vertex ``|H|`` from the cotangent Laplacian (NaN on the boundary)."""
    V = mesh.vertices
    F = mesh.faces
    n = V.shape[0]
    lap = np.zeros((n, 3))
    area = np.zeros(n)
    for k in range(3):
        i, j, l = F[:, k], F[:, (k + 1) % 3], F[:, (k + 2) % 3]
        u = V[j] - V[i]
        v = V[l] - V[i]
        cr = np.linalg.norm(np.cross(u, v), axis=1)
        cot = np.einsum("ij,ij->i", u, v) / np.where(cr > 0, cr, np.inf)
        # the angle at i weighs the opposite edge (j, l)
        d = V[j] - V[l]
        np.add.at(lap, j, 0.5 * cot[:, None] * -d)
        np.add.at(lap, l, 0.5 * cot[:, None] * d)
        np.add.at(area, i, cr / 6.0)
    H = np.linalg.norm(lap, axis=1) / np.where(area > 0, 2.0 * area, np.inf)
    H[mesh.boundary | mesh_boundary(mesh)] = np.nan
    return H


def mesh_boundary(mesh: SurfaceMesh) -> np.ndarray:
    """Vertices on edges with a single incident face (window cut and free boundary)."""
    f = mesh.faces
    e = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
    uniq, cnt = np.unique(e, axis=0, return_counts=True)
    out = np.zeros(mesh.vertices.shape[0], dtype=bool)
    out[uniq[cnt == 1].ravel()] = True
    return out


def interior_vertices(mesh: SurfaceMesh, rings: int = 2) -> np.ndarray:
    """Vertices at least ``rings`` edges away from the boundary and the window cut."""
    G = _edge_graph(mesh)
    bad = mesh.boundary | mesh_boundary(mesh)
    for _ in range(rings):
        bad = bad | (G @ bad.astype(float) > 0)
    return ~bad
