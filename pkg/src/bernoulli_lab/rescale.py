"""Blow-up / blow-down rescaling and fitting of limit profiles.

``classify`` fits each explicit family to a field on a probe disk in the
sup norm.  The probe points move with the candidate rotation, so the fit
is equivariant under rigid motions of the input: the residual is a
function of the relative position of data and candidate only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import DomainError
from .grid import GridField
from .solutions import (
    AnalyticSolution,
    ComposedHairpin,
    FAMILY_ORDER,
    HalfPlane,
    Hairpin,
    RigidMotion,
    TwoPlane,
    Wedge,
    omega1_margin,
    phi_inv,
)

ACCEPT = 1e-2


@dataclass
class Rescaled:
    """``v(x) = u(center + lam x) / lam`` for inputs without a closed form."""

    base: Callable
    center: complex
    lam: float

    def __call__(self, x):
        x = np.asarray(x, dtype=complex)
        return np.asarray(self.base(self.center + self.lam * x)) / self.lam


def rescale(u, center, lam: float):
    """``v(x) = u(center + lam x) / lam``; analytic families stay analytic."""
    lam = float(lam)
    if not (lam > 0 and math.isfinite(lam)):
        raise DomainError("scale must be positive and finite")
    center = complex(center)
    if isinstance(u, AnalyticSolution):
        m = u.motion
        return AnalyticSolution(u.family.scaled(lam), RigidMotion(m.theta, (m.shift - center) / lam))
    if isinstance(u, GridField):
        h = u.h / lam
        if not (h > 0 and math.isfinite(h)):
            raise DomainError("rescaled grid spacing under- or overflows")
        prov = dict(u.provenance)
        prov["rescale"] = {"center": [center.real, center.imag], "lambda": lam}
        return GridField((u.origin - center) / lam, h, u.values / lam, prov)
    if callable(u):
        return Rescaled(u, center, lam)
    raise DomainError(f"cannot rescale {type(u).__name__}")


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


@dataclass
class FamilyFit:
    tag: str
    residual: float
    solution: AnalyticSolution | None
    iterations: int = 0


@dataclass
class ClassificationResult:
    family: AnalyticSolution
    residual: float
    probe_radius: float
    fits: dict = field(default_factory=dict)

    @property
    def tag(self) -> str:
        return self.family.family.tag

    def to_dict(self) -> dict:
        d = self.family.to_dict()
        return {
            "family": self.tag,
            "params": self.family.family.params(),
            "theta": self.family.motion.theta,
            "shift": [self.family.motion.shift.real, self.family.motion.shift.imag],
            "residual": self.residual,
            "probe_radius": self.probe_radius,
            "fits": {k: v.residual for k, v in self.fits.items()},
            "solution": d,
        }


def _probe_grid(n: int = 64):
    """Fixed probe set: nodes of an n x n grid on [-1, 1]^2 inside the unit disk."""
    xs = np.linspace(-1.0, 1.0, n)
    y = (xs[None, :] + 1j * xs[:, None]).ravel()
    return y[np.abs(y) <= 1.0 + 1e-12]


def _evaluator(u):
    if isinstance(u, GridField):

        def ev(z):
            v = u.interp(z)
            if np.any(np.isnan(v)):
                raise DomainError("probe disk exits the grid window")
            return v

        return ev
    if isinstance(u, (AnalyticSolution, ComposedHairpin)) or callable(u):
        return lambda z: np.asarray(u(z), dtype=float)
    raise DomainError(f"cannot evaluate {type(u).__name__}")


def _hairpin_values(y, tau, a):
    w = (y - tau) / a
    out = np.zeros(y.shape)
    inside = omega1_margin(w) > 0
    if np.any(inside):
        out[inside] = a * np.cosh(phi_inv(w[inside])).real
    return out


def _candidate(tag, y, p):
    """Candidate profile in the probe frame; ``p`` excludes the rotation."""
    if tag == "half_plane":
        return np.maximum(y.imag - p[0], 0.0)
    if tag == "wedge":
        s = min(1.0, math.exp(p[1]))
        return s * np.abs(y.imag - p[0])
    if tag == "two_plane":
        b = math.exp(p[1])
        t = y.imag - p[0]
        return np.maximum(t, 0.0) + np.maximum(-(t + b), 0.0)
    return _hairpin_values(y, p[0] + 1j * p[1], math.exp(p[2]))


PERIOD = {"half_plane": 2 * math.pi, "wedge": math.pi, "two_plane": math.pi, "hairpin": math.pi}


def _to_solution(tag, theta, p, center, R) -> AnalyticSolution:
    rot = complex(math.cos(theta), math.sin(theta))
    if tag == "hairpin":
        tau = (p[0] + 1j * p[1]) * R
        return AnalyticSolution(Hairpin(math.exp(p[2]) * R), RigidMotion(theta, center + rot * tau))
    motion = RigidMotion(theta, center + rot * 1j * p[0] * R)
    if tag == "half_plane":
        return AnalyticSolution(HalfPlane(), motion)
    if tag == "wedge":
        s = min(1.0, math.exp(p[1]))
        return AnalyticSolution(Wedge(s), motion)
    return AnalyticSolution(TwoPlane(math.exp(p[1]) * R), motion)


class _Objective:
    """Sup-norm residual in units where the probe disk is the unit disk.

    ``cache`` maps a rotation angle to the data sampled on the rotated probe
    set; it is shared between families.
    """

    def __init__(self, ev, center, R, tag, y, cache=None):
        self.ev = ev
        self.center = center
        self.R = R
        self.tag = tag
        self.y = y
        self.cache = {} if cache is None else cache

    def data(self, theta):
        key = float(theta)
        if key not in self.cache:
            if len(self.cache) > 4096:
                self.cache.clear()
            z = self.center + self.R * np.exp(1j * theta) * self.y
            self.cache[key] = self.ev(z) / self.R
        return self.cache[key]

    def __call__(self, x):
        return float(np.max(np.abs(self.data(x[0]) - _candidate(self.tag, self.y, x[1:]))))


def _pattern_search(f, x0, steps, max_iter=200, min_step=1e-11):
    x = np.array(x0, dtype=float)
    steps = np.array(steps, dtype=float)
    fx = f(x)
    it = 0
    for it in range(1, max_iter + 1):
        best = fx
        best_x = None
        for k in range(x.size):
            for sgn in (1.0, -1.0):
                trial = x.copy()
                trial[k] += sgn * steps[k]
                ft = f(trial)
                if ft < best:
                    best, best_x = ft, trial
        if best_x is None:
            steps *= 0.5
            if np.all(steps < min_step):
                break
        else:
            # keep moving in the successful direction while it pays off
            d = best_x - x
            x, fx = best_x, best
            while True:
                trial = x + d
                ft = f(trial)
                if ft < fx:
                    x, fx = trial, ft
                else:
                    break
    return x, fx, it


def _slab_start(data, y, theta):
    """Two-plane start read off the zero set of the data in the probe frame."""
    zero = data <= 1e-12
    if not np.any(zero):
        return None
    t = y.imag[zero]
    top = float(t.max())
    width = max(float(t.max() - t.min()), 1e-4)
    # the slab edges lie between probe rows, so pad by half a row
    pad = 0.5 * float(np.min(np.diff(np.unique(np.round(y.imag, 12)))))
    return (0.0, theta, [top + pad, math.log(width + 2 * pad)])


def _coarse_lines(tag, D, y, thetas, keep=4):
    """Coarse grid search for the line families; returns the ``keep`` best starts."""
    offs = np.linspace(-1.0, 1.0, 33)
    if tag == "half_plane":
        params = [None]
    elif tag == "wedge":
        params = list(np.log(np.geomspace(0.01, 1.0, 32)))
    else:
        params = list(np.log(np.geomspace(1e-4, 2.0, 32)))
    cands = []
    for q in params:
        for d in offs:
            cands.append([d] if q is None else [d, q])
    C = np.stack([_candidate(tag, y, p) for p in cands])
    table = np.stack([np.max(np.abs(C - D[k][None, :]), axis=1) for k in range(len(thetas))])
    starts = []
    for flat in np.argsort(table, axis=None):
        k, j = np.unravel_index(flat, table.shape)
        p = cands[j]
        # skip near-duplicates of an existing start
        if any(abs(thetas[k] - t) < 0.1 and abs(p[0] - q[0]) < 0.1 for _, t, q in starts):
            continue
        starts.append((float(table[k, j]), thetas[k], p))
        if len(starts) == keep:
            break
    return starts


def _nm(f, x, scale, maxfev=800):
    x = np.asarray(x, dtype=float)
    simplex = np.vstack([x] + [x + np.eye(x.size)[k] * scale[k] for k in range(x.size)])
    res = optimize.minimize(
        f,
        x,
        method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-15, "maxfev": maxfev, "initial_simplex": simplex},
    )
    return res.x, float(res.fun), int(res.nfev)


def _polish(obj, x, steps, maxfev=800):
    """Pattern search followed by Nelder-Mead (the objective is a max of smooth pieces)."""
    x, fx, it = _pattern_search(obj, x, steps)
    x2, fx2, n = _nm(obj, x, steps * 0.25, maxfev)
    if fx2 < fx:
        x, fx = x2, fx2
    return x, fx, it + n


def _fit_lines(tag, obj, thetas, accept):
    D = np.stack([obj.data(t) for t in thetas])
    steps = np.array([math.pi / 64, 1 / 32] + ([] if tag == "half_plane" else [0.1]))
    starts = _coarse_lines(tag, D, obj.y, thetas)
    if tag == "two_plane":
        th = starts[0][1]
        slab = _slab_start(obj.data(th), obj.y, th)
        if slab is not None:
            starts.insert(0, slab)
    best = (None, math.inf)
    total = 0
    for _, th0, p0 in starts:
        x, fx, it = _polish(obj, np.array([th0] + list(p0), dtype=float), steps)
        total += it
        if fx < best[1]:
            best = (x, fx)
        if best[1] <= accept:
            break
    return best[0], best[1], total


def _saddle_guess(D0, y, n):
    """Probe-frame location of a saddle-like minimum of |grad u| (or 0)."""
    xs = np.linspace(-1.0, 1.0, n)
    full = np.full(n * n, np.nan)
    grid_pts = (xs[None, :] + 1j * xs[:, None]).ravel()
    mask = np.abs(grid_pts) <= 1.0 + 1e-12
    full[mask] = D0
    F = full.reshape(n, n)
    gy, gx = np.gradient(F, xs[1] - xs[0])
    mag = np.hypot(gx, gy)
    ok = np.isfinite(mag) & (F > 0) & (np.abs(grid_pts.reshape(n, n)) < 0.9)
    if not np.any(ok):
        return 0j, None
    k = np.argmin(np.where(ok, mag, np.inf))
    return complex(grid_pts.reshape(n, n).ravel()[k]), float(F.ravel()[k])


def _fit_hairpin(obj, thetas, n):
    y = obj.y
    tau0, a0 = _saddle_guess(obj.data(thetas[0]), y, n)
    a_grid = np.geomspace(1e-4, 2.0, 32)
    if a0 is not None and a0 > 0:
        a_grid = np.concatenate([a_grid, [a0]])
    best = (math.inf, None, None)
    for th in thetas:
        tau = tau0 * np.exp(-1j * (th - thetas[0]))
        data = obj.data(th)
        for a in a_grid:
            r = float(np.max(np.abs(data - _hairpin_values(y, tau, a))))
            if r < best[0]:
                best = (r, th, [tau.real, tau.imag, math.log(a)])
    steps = np.array([math.pi / 64, 1 / 16, 1 / 16, 0.1])
    return _polish(obj, np.array([best[1]] + best[2], dtype=float), steps, maxfev=1500)


def classify(u, probe_radius: float, center=0j, accept: float = ACCEPT, n_probe: int = 64) -> ClassificationResult:
    """Fit the explicit families to ``u`` on ``B_R(center)`` in the sup norm.

    Residuals are ``sup |u - candidate| / R``.  Families are tried in order
    of complexity (half-plane, wedge, two-plane, hairpin); the first whose
    residual is at most ``accept`` is reported, otherwise the best fit.  A
    wedge of slope 1 is reported as the two-plane solution with ``b = 0``.
    """
    R = float(probe_radius)
    if not (R > 0 and math.isfinite(R)):
        raise DomainError("probe radius must be positive")
    center = complex(center)
    ev = _evaluator(u)
    y = _probe_grid(n_probe)
    fits = {}
    chosen = None
    order = sorted(FAMILY_ORDER, key=FAMILY_ORDER.get)
    line_theta = None
    cache = {}
    for tag in order:
        obj = _Objective(ev, center, R, tag, y, cache)
        period = PERIOD[tag]
        if tag == "hairpin":
            base = line_theta if line_theta is not None else 0.0
            thetas = [(base + k * math.pi / 8) % math.pi for k in range(8)]
            x, fx, it = _fit_hairpin(obj, thetas, n_probe)
        else:
            # rotated data is cached, so angles shared between families are sampled once
            thetas = [period * k / 64 for k in range(64)]
            x, fx, it = _fit_lines(tag, obj, thetas, accept)
        theta = float(x[0]) % period
        sol = _to_solution(tag, theta, x[1:], center, R)
        if tag == "two_plane" and line_theta is None:
            line_theta = theta
        if tag == "wedge":
            line_theta = theta
        fits[tag] = FamilyFit(tag, fx, sol, it)
        if fx <= accept:
            chosen = tag
            break
    if chosen is None:
        chosen = min(fits, key=lambda k: (fits[k].residual, FAMILY_ORDER[k]))
    best = fits[chosen]
    sol = best.solution
    if isinstance(sol.family, Wedge) and sol.family.s >= 1.0 - 1e-12:
        sol = AnalyticSolution(TwoPlane(0.0), sol.motion)
    return ClassificationResult(sol, best.residual, R, fits)


def fit_family(u, tag: str, probe_radius: float, center=0j, n_probe: int = 64) -> FamilyFit:
    """Best sup-norm fit of a single family on ``B_R(center)``."""
    if tag not in FAMILY_ORDER:
        raise DomainError(f"unknown family {tag!r}")
    R = float(probe_radius)
    if not (R > 0 and math.isfinite(R)):
        raise DomainError("probe radius must be positive")
    center = complex(center)
    obj = _Objective(_evaluator(u), center, R, tag, _probe_grid(n_probe), {})
    if tag == "hairpin":
        thetas = [k * math.pi / 8 for k in range(8)]
        x, fx, it = _fit_hairpin(obj, thetas, n_probe)
    else:
        period = PERIOD[tag]
        x, fx, it = _fit_lines(tag, obj, [period * k / 64 for k in range(64)], 0.0)
    theta = float(x[0]) % PERIOD[tag]
    return FamilyFit(tag, fx, _to_solution(tag, theta, x[1:], center, R), it)
