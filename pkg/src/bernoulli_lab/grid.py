"""Uniform-grid scalar fields and local harmonic reconstruction."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError

_MAGIC = b"BLGRID1\n"


@dataclass
class GridField:
    """Samples ``values[j, i]`` at ``origin + h*i + 1j*h*j``."""

    origin: complex
    h: float
    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.origin = complex(self.origin)
        self.h = float(self.h)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DomainError("grid values must be a 2-d array")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise DomainError("grid spacing must be positive")

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def xs(self) -> np.ndarray:
        return self.origin.real + self.h * np.arange(self.nx)

    @property
    def ys(self) -> np.ndarray:
        return self.origin.imag + self.h * np.arange(self.ny)

    @property
    def window(self):
        return (
            self.origin.real,
            self.origin.real + self.h * (self.nx - 1),
            self.origin.imag,
            self.origin.imag + self.h * (self.ny - 1),
        )

    def coords(self) -> np.ndarray:
        return self.xs[None, :] + 1j * self.ys[:, None]

    def node(self, i, j):
        return self.origin + self.h * (np.asarray(i) + 1j * np.asarray(j))

    def index_of(self, z):
        """Fractional (i, j) index of the point ``z``."""
        w = (np.asarray(z, dtype=complex) - self.origin) / self.h
        return w.real, w.imag

    def contains(self, z, margin: float = 0.0):
        fi, fj = self.index_of(z)
        return (fi >= margin) & (fi <= self.nx - 1 - margin) & (fj >= margin) & (fj <= self.ny - 1 - margin)

    def interp(self, z, outside=np.nan):
        """Bilinear interpolation; points outside the window get ``outside``."""
        z = np.asarray(z, dtype=complex)
        fi, fj = self.index_of(z)
        ok = (fi >= 0) & (fi <= self.nx - 1) & (fj >= 0) & (fj <= self.ny - 1)
        i0 = np.clip(np.floor(fi).astype(int), 0, self.nx - 2)
        j0 = np.clip(np.floor(fj).astype(int), 0, self.ny - 2)
        ti = np.clip(fi - i0, 0.0, 1.0)
        tj = np.clip(fj - j0, 0.0, 1.0)
        v = self.values
        out = (
            v[j0, i0] * (1 - ti) * (1 - tj)
            + v[j0, i0 + 1] * ti * (1 - tj)
            + v[j0 + 1, i0] * (1 - ti) * tj
            + v[j0 + 1, i0 + 1] * ti * tj
        )
        return np.where(ok, out, outside)

    def crop(self, window) -> "GridField":
        """Sub-grid covering ``window`` (snapped outward to nodes)."""
        xmin, xmax, ymin, ymax = window
        i0 = max(0, int(math.floor((xmin - self.origin.real) / self.h + 1e-9)))
        i1 = min(self.nx - 1, int(math.ceil((xmax - self.origin.real) / self.h - 1e-9)))
        j0 = max(0, int(math.floor((ymin - self.origin.imag) / self.h + 1e-9)))
        j1 = min(self.ny - 1, int(math.ceil((ymax - self.origin.imag) / self.h - 1e-9)))
        if i1 - i0 < 1 or j1 - j0 < 1:
            raise DomainError("crop window does not overlap the grid")
        prov = dict(self.provenance)
        prov["crop"] = [float(v) for v in window]
        return GridField(self.node(i0, j0), self.h, self.values[j0 : j1 + 1, i0 : i1 + 1].copy(), prov)

    def with_values(self, values, **extra) -> "GridField":
        prov = dict(self.provenance)
        prov.update(extra)
        return GridField(self.origin, self.h, values, prov)

    def positive_mask(self, floor: float = 0.0) -> np.ndarray:
        return self.values > floor

    def save(self, path) -> None:
        header = {
            "origin": [self.origin.real, self.origin.imag],
            "h": self.h,
            "nx": self.nx,
            "ny": self.ny,
            "dtype": "<f8",
            "provenance": self.provenance,
        }
        blob = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(self.values.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "GridField":
        data = Path(path).read_bytes()
        if not data.startswith(_MAGIC):
            raise DomainError(f"{path} is not a grid field file")
        off = len(_MAGIC)
        (n,) = struct.unpack("<I", data[off : off + 4])
        header = json.loads(data[off + 4 : off + 4 + n])
        raw = np.frombuffer(data[off + 4 + n :], dtype="<f8")
        nx, ny = header["nx"], header["ny"]
        if raw.size != nx * ny:
            raise DomainError(f"{path}: expected {nx * ny} samples, found {raw.size}")
        origin = complex(*header["origin"])
        return cls(origin, header["h"], raw.reshape(ny, nx).astype(np.float64), header.get("provenance", {}))


# ---------------------------------------------------------------------------
# local harmonic fits
# ---------------------------------------------------------------------------


@dataclass
class LocalJet:
    """Holomorphic jet ``U, U', U''`` of a local fit with ``Re U = u``."""

    value: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    n_used: np.ndarray
    rms: np.ndarray

    @property
    def gradient(self):
        return np.conj(self.d1)


def _stencil(radius: float):
    r = int(math.ceil(radius)) + 1
    di, dj = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1))
    return di.ravel(), dj.ravel()


def harmonic_jet(
    grid: GridField,
    z,
    radius: float = 3.5,
    degree: int = 4,
    floor: float = 0.0,
    values: np.ndarray | None = None,
    normal=None,
) -> LocalJet:
    """Least-squares fit ``u ~ Re sum_k c_k (x - z)^k`` around each query point.

    Only nodes with ``u > floor`` within ``radius`` grid spacings enter the
    fit, so the reconstruction is one-sided near the free boundary and can
    be evaluated on it.  Set ``values`` to fit a different field sampled on
    the same nodes (positivity is still taken from ``grid``).  With a unit
    ``normal`` per point, nodes more than one spacing behind the tangent
    line are dropped; this keeps a fit on one sheet of a thin zero set.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    shape = z.shape
    z = z.ravel()
    vals = grid.values if values is None else values
    fi, fj = grid.index_of(z)
    ci = np.rint(fi).astype(int)
    cj = np.rint(fj).astype(int)
    di, dj = _stencil(radius)
    I = ci[:, None] + di[None, :]
    J = cj[:, None] + dj[None, :]
    inside = (I >= 0) & (I < grid.nx) & (J >= 0) & (J < grid.ny)
    Ic = np.clip(I, 0, grid.nx - 1)
    Jc = np.clip(J, 0, grid.ny - 1)
    w = (Ic - fi[:, None]) + 1j * (Jc - fj[:, None])
    sample = vals[Jc, Ic]
    use = inside & (np.abs(w) <= radius) & (grid.values[Jc, Ic] > floor) & np.isfinite(sample)
    if normal is not None:
        nrm = np.broadcast_to(np.asarray(normal, dtype=complex), shape).ravel()
        use &= (w * np.conj(nrm)[:, None]).real >= -1.0
    sample = np.where(use, sample, 0.0)

    # monomials in w / radius keep the normal equations well scaled
    ws = w / radius
    cols = [np.ones_like(w.real)]
    powk = np.ones_like(w)
    for _ in range(degree):
        powk = powk * ws
        cols.append(powk.real)
        cols.append(powk.imag)
    A = np.stack(cols, axis=-1)
    W = use.astype(float)
    AtA = np.einsum("nki,nk,nkj->nij", A, W, A)
    Atb = np.einsum("nki,nk,nk->ni", A, W, sample)
    ncoef = A.shape[-1]
    n_used = use.sum(axis=1)
    ridge = 1e-14 * np.trace(AtA, axis1=1, axis2=2)[:, None, None] / ncoef
    # empty fits (no usable node) get an identity system; they are marked bad below
    ridge = np.where((n_used == 0)[:, None, None], 1.0, ridge)
    coef = np.linalg.solve(AtA + ridge * np.eye(ncoef)[None], Atb[..., None])[..., 0]
    fitted = np.einsum("nki,ni->nk", A, coef)
    rms = np.sqrt(np.sum(W * (fitted - sample) ** 2, axis=1) / np.maximum(n_used, 1))

    # Re(c w^k) = alpha Re w^k + beta Im w^k  <=>  c = alpha - i beta
    h = grid.h * radius
    value = coef[:, 0].astype(complex)
    d1 = (coef[:, 1] - 1j * coef[:, 2]) / h if degree >= 1 else np.zeros_like(value)
    d2 = 2.0 * (coef[:, 3] - 1j * coef[:, 4]) / h**2 if degree >= 2 else np.zeros_like(value)
    bad = n_used < ncoef + 3
    if np.any(bad):
        value[bad] = np.nan
        d1[bad] = np.nan
        d2[bad] = np.nan
    return LocalJet(value.reshape(shape), d1.reshape(shape), d2.reshape(shape), n_used.reshape(shape), rms.reshape(shape))


def central_gradient(grid: GridField, values: np.ndarray | None = None):
    """Second-order central-difference gradient ``u_x + i u_y`` (one-sided at edges)."""
    v = grid.values if values is None else values
    gy, gx = np.gradient(v, grid.h)
    return gx + 1j * gy
