"""Explicit global solutions of the one-phase problem.

Four families are implemented (half-plane, two-plane, wedge and hairpin),
each composed with a rigid motion.  All evaluation routines are vectorised
over complex numpy arrays; scalar input gives scalar output.

Conventions
-----------
Points are complex numbers ``x1 + 1j*x2``.  A ``RigidMotion`` maps the
canonical frame of a family into the world frame, ``z = e^{i theta} w + shift``.
Gradients are returned as complex numbers ``u_x + 1j*u_y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import ConvergenceError, DomainError, ResourceError

HALF_PI = 0.5 * math.pi
TWO_PI = 2.0 * math.pi

DEFAULT_NODE_CAP = 4_000_000


def _as_complex(z):
    arr = np.asarray(z, dtype=complex)
    if not np.all(np.isfinite(arr)):
        raise DomainError("complex input must have finite components")
    return arr


def _out(arr, scalar):
    if scalar:
        return arr.item()
    return arr


# ---------------------------------------------------------------------------
# rigid motions and families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RigidMotion:
    """Rotation by ``theta`` followed by translation by ``shift``."""

    theta: float = 0.0
    shift: complex = 0j

    def __post_init__(self):
        theta = float(self.theta)
        shift = complex(self.shift)
        if not (math.isfinite(theta) and math.isfinite(shift.real) and math.isfinite(shift.imag)):
            raise DomainError("rigid motion parameters must be finite")
        theta = math.fmod(theta, TWO_PI)
        if theta < 0.0:
            theta += TWO_PI
        if theta >= TWO_PI:
            theta = 0.0
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "shift", shift)

    @property
    def rotor(self) -> complex:
        return complex(math.cos(self.theta), math.sin(self.theta))

    def apply(self, w):
        """Canonical frame -> world frame."""
        return self.rotor * np.asarray(w) + self.shift

    def pullback(self, z):
        """World frame -> canonical frame."""
        return np.conj(self.rotor) * (np.asarray(z) - self.shift)

    def compose(self, other: "RigidMotion") -> "RigidMotion":
        """Return ``self o other`` (apply ``other`` first)."""
        return RigidMotion(self.theta + other.theta, self.rotor * other.shift + self.shift)

    def inverse(self) -> "RigidMotion":
        return RigidMotion(-self.theta, -np.conj(self.rotor) * self.shift)

    def to_dict(self) -> dict:
        return {"theta": self.theta, "shift": [self.shift.real, self.shift.imag]}

    @classmethod
    def from_dict(cls, d) -> "RigidMotion":
        if d is None:
            return cls()
        shift = d.get("shift", [0.0, 0.0])
        return cls(float(d.get("theta", 0.0)), complex(shift[0], shift[1]))


IDENTITY = RigidMotion()


@dataclass(frozen=True)
class HalfPlane:
    """``x2^+``."""

    tag = "half_plane"
    n_params = 0

    def params(self) -> dict:
        return {}

    def scaled(self, lam: float) -> "HalfPlane":
        return self


@dataclass(frozen=True)
class TwoPlane:
    """``x2^+ + (x2 + b)^-``; zero set is the slab ``-b <= x2 <= 0``."""

    b: float = 0.0
    tag = "two_plane"
    n_params = 1

    def __post_init__(self):
        if not (math.isfinite(self.b) and self.b >= 0.0):
            raise DomainError(f"two-plane gap must be >= 0, got {self.b}")

    def params(self) -> dict:
        return {"b": self.b}

    def scaled(self, lam: float) -> "TwoPlane":
        return TwoPlane(self.b / lam)


@dataclass(frozen=True)
class Wedge:
    """``s |x2|`` with ``0 < s <= 1``."""

    s: float = 1.0
    tag = "wedge"
    n_params = 1

    def __post_init__(self):
        if not (math.isfinite(self.s) and 0.0 < self.s <= 1.0):
            raise DomainError(f"wedge slope must lie in (0, 1], got {self.s}")

    def params(self) -> dict:
        return {"s": self.s}

    def scaled(self, lam: float) -> "Wedge":
        return self


@dataclass(frozen=True)
class Hairpin:
    """The hairpin solution ``H_a`` with positive phase ``a * Omega_1``."""

    a: float = 1.0
    tag = "hairpin"
    n_params = 1

    def __post_init__(self):
        if not (math.isfinite(self.a) and self.a > 0.0):
            raise DomainError(f"hairpin scale must be > 0, got {self.a}")

    def params(self) -> dict:
        return {"a": self.a}

    def scaled(self, lam: float) -> "Hairpin":
        return Hairpin(self.a / lam)


Family = Union[HalfPlane, TwoPlane, Wedge, Hairpin]

FAMILY_ORDER = {"half_plane": 0, "wedge": 1, "two_plane": 2, "hairpin": 3}


def family_from_dict(d: dict) -> Family:
    kind = d.get("type", d.get("family"))
    if kind == "half_plane":
        return HalfPlane()
    if kind == "two_plane":
        return TwoPlane(float(d.get("b", 0.0)))
    if kind == "wedge":
        return Wedge(float(d.get("s", 1.0)))
    if kind == "hairpin":
        return Hairpin(float(d.get("a", 1.0)))
    raise DomainError(f"unknown family {kind!r}")


@dataclass(frozen=True)
class AnalyticSolution:
    family: Family
    motion: RigidMotion = field(default_factory=RigidMotion)

    def __call__(self, z):
        return evaluate(self, z)

    def moved(self, motion: RigidMotion) -> "AnalyticSolution":
        """Apply an extra rigid motion on top of the current one."""
        return AnalyticSolution(self.family, motion.compose(self.motion))

    def describe(self) -> dict:
        return {
            "family": self.family.tag,
            "params": self.family.params(),
            "motion": self.motion.to_dict(),
        }

    def to_dict(self) -> dict:
        d = {"type": self.family.tag}
        d.update(self.family.params())
        return {"family": d, "motion": self.motion.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "AnalyticSolution":
        return cls(family_from_dict(d["family"]), RigidMotion.from_dict(d.get("motion")))


@dataclass(frozen=True)
class HairpinGeometry:
    a: float
    separation: float
    saddle_value: float


def hairpin_geometry(a: float) -> HairpinGeometry:
    Hairpin(a)
    return HairpinGeometry(a=a, separation=a * (2.0 + math.pi), saddle_value=a)


def calibrate_c0(n: int = 801, y1_max: float = 8.0) -> float:
    """Largest ``c0`` with ``|grad H_1(x)| >= min(1/2, c0 |x|)`` on a dense sample.

    The sample is the image under ``phi`` of an ``n x n`` grid on
    ``|Re zeta| <= y1_max``, ``|Im zeta| <= pi/2``, where
    ``|grad H_1(phi(zeta))| = |tanh(zeta / 2)|``.  For ``H_a`` the constant
    is ``c0 / a``.  This is a measured constant, not a proven one.
    """
    y1 = np.linspace(-y1_max, y1_max, n)
    y2 = np.linspace(-HALF_PI, HALF_PI, n)
    zeta = y1[None, :] + 1j * y2[:, None]
    x = np.abs(_phi_raw(zeta))
    g = np.sqrt(np.sinh(zeta.real) ** 2 + np.sin(zeta.imag) ** 2) / (np.cosh(zeta.real) + np.cos(zeta.imag))
    sel = (g < 0.5) & (x > 0)
    return float(np.min(g[sel] / x[sel])) if np.any(sel) else math.inf


# ---------------------------------------------------------------------------
# the conformal parameterisation of the hairpin
# ---------------------------------------------------------------------------


def phi(zeta):
    """``i (zeta + sinh zeta)`` on the closed strip ``|Im zeta| <= pi/2``."""
    scalar = np.ndim(zeta) == 0
    zeta = _as_complex(zeta)
    if np.any(np.abs(zeta.imag) > HALF_PI * (1 + 1e-14) + 1e-14):
        raise DomainError("phi is only defined on the closed strip |Im zeta| <= pi/2")
    return _out(1j * (zeta + np.sinh(zeta)), scalar)


def _phi_raw(zeta):
    return 1j * (zeta + np.sinh(zeta))


def omega1_margin(w):
    """Signed membership for ``Omega_1``: positive inside, zero on the boundary."""
    w = np.asarray(w, dtype=complex)
    with np.errstate(over="ignore"):
        return HALF_PI + np.cosh(w.imag) - np.abs(w.real)


def phi_inv(z, tol: float = 1e-12, max_iter: int = 50):
    """Invert ``phi`` on the closure of ``Omega_1`` by damped Newton iteration.

    The residual test is relative for large arguments:
    ``|phi(zeta) - z| <= tol * max(1, |z|)``.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    scalar = np.ndim(z) == 0
    z = _as_complex(z)
    flat = z.ravel()
    if np.any(omega1_margin(flat) < -1e-9 * np.maximum(1.0, np.abs(flat))):
        raise DomainError("point lies outside the closure of Omega_1")

    small = np.abs(flat) <= 1.0
    zeta = np.where(small, -0.5j * flat, np.arcsinh(-1j * flat))
    zeta = zeta.real + 1j * np.clip(zeta.imag, -HALF_PI, HALF_PI)
    scale = np.maximum(1.0, np.abs(flat))

    # Newton with step halving: a step that raises the residual is undone
    # and retried at half length on the next pass.
    idx = np.arange(flat.size)
    zc = zeta.copy()
    target = flat
    prev = np.full(flat.size, np.inf)
    step = np.zeros(flat.size, dtype=complex)
    res = np.full(flat.size, np.inf)
    for _ in range(max_iter + 1):
        e = np.exp(zc)
        inv = 1.0 / e
        f = 1j * (zc + 0.5 * (e - inv)) - target
        r = np.abs(f)
        worse = r > prev
        if np.any(worse):
            zc[worse] = zc[worse] + step[worse]
            step[worse] *= 0.5
            good = ~worse
        else:
            good = slice(None)
        res[idx] = np.where(worse, prev, r)
        done = (r <= tol * scale[idx]) & ~worse
        if np.all(done):
            zeta[idx] = zc
            idx = idx[:0]
            break
        if np.any(done):
            zeta[idx[done]] = zc[done]
            keep = ~done
            idx, zc, target, prev, step, f, r, e, inv, worse = (
                idx[keep], zc[keep], target[keep], prev[keep], step[keep], f[keep], r[keep], e[keep], inv[keep], worse[keep]
            )
            good = ~worse
        new_step = f / (1j * (1.0 + 0.5 * (e + inv)))
        step = np.where(good, new_step, step)
        prev = np.where(good, r, prev)
        zc = zc - step
        # slack lets points admitted by the membership tolerance converge
        zc = zc.real + 1j * np.clip(zc.imag, -HALF_PI - 1e-6, HALF_PI + 1e-6)
    active = np.zeros(flat.size, dtype=bool)
    if idx.size:
        zeta[idx] = zc
        active[idx] = True
    if np.any(active):
        worst = float(np.max(res[active] / scale[active]))
        raise ConvergenceError(
            f"phi_inv did not converge in {max_iter} iterations", residual=worst, value=zeta.reshape(z.shape)
        )
    return _out(zeta.reshape(z.shape), scalar)


# ---------------------------------------------------------------------------
# canonical-frame kernels (w is already pulled back)
# ---------------------------------------------------------------------------


def margin(sol: AnalyticSolution, z):
    """Signed membership: > 0 in the positive phase, <= 0 in the zero phase.

    Units differ per family; only the sign and the zero set are meaningful.
    """
    w = sol.motion.pullback(np.asarray(z, dtype=complex))
    fam = sol.family
    if isinstance(fam, HalfPlane):
        return w.imag
    if isinstance(fam, TwoPlane):
        return np.maximum(w.imag, -(w.imag + fam.b))
    if isinstance(fam, Wedge):
        return np.abs(w.imag)
    return fam.a * omega1_margin(w / fam.a)


def _eval_canonical(fam, w):
    x2 = w.imag
    if isinstance(fam, HalfPlane):
        return np.maximum(x2, 0.0)
    if isinstance(fam, TwoPlane):
        return np.maximum(x2, 0.0) + np.maximum(-(x2 + fam.b), 0.0)
    if isinstance(fam, Wedge):
        return fam.s * np.abs(x2)
    a = fam.a
    out = np.zeros(w.shape)
    inside = omega1_margin(w / a) > 0.0
    if np.any(inside):
        zeta = phi_inv(w[inside] / a)
        out[inside] = a * np.cosh(zeta).real
    return out


def evaluate(sol: AnalyticSolution, z):
    """Value of the solution at ``z``; zero on the zero phase (ties included)."""
    scalar = np.ndim(z) == 0
    z = _as_complex(z)
    w = sol.motion.pullback(z)
    vals = _eval_canonical(sol.family, np.atleast_1d(w))
    return _out(np.maximum(vals, 0.0).reshape(z.shape), scalar)


def _jet_canonical(fam, w, order: int):
    """Holomorphic extension and its derivatives in the canonical frame.

    Returns a list ``[F, F', F'']`` truncated to ``order + 1`` entries.  Points
    strictly inside the zero phase raise ``DomainError``.
    """
    x2 = w.imag
    zeros = np.zeros(w.shape, dtype=complex)
    if isinstance(fam, HalfPlane):
        if np.any(x2 < 0):
            raise DomainError("point lies in the zero phase of the half-plane solution")
        jet = [-1j * w, zeros - 1j, zeros]
    elif isinstance(fam, TwoPlane):
        lower = x2 <= -fam.b
        upper = x2 >= 0
        if np.any(~(lower | upper)):
            raise DomainError("point lies in the zero slab of the two-plane solution")
        up = upper
        jet = [
            np.where(up, -1j * w, 1j * w - fam.b),
            np.where(up, -1j + zeros, 1j + zeros),
            zeros,
        ]
    elif isinstance(fam, Wedge):
        up = x2 >= 0
        s = fam.s
        jet = [np.where(up, -1j * s * w, 1j * s * w), np.where(up, -1j * s + zeros, 1j * s + zeros), zeros]
    else:
        a = fam.a
        m = omega1_margin(w / a)
        if np.any(m < -1e-9 * np.maximum(1.0, np.abs(w / a))):
            raise DomainError("point lies in the zero phase of the hairpin solution")
        zeta = phi_inv(w / a)
        half = 0.5 * zeta
        jet = [a * np.cosh(zeta), -1j * np.tanh(half)]
        if order >= 2:
            jet.append(-0.25 / (a * np.cosh(half) ** 4))
    return jet[: order + 1]


def holo_jet(sol: AnalyticSolution, z, order: int = 2):
    """``[U, U', U'']`` for the holomorphic extension ``U`` with ``Re U = u``.

    Derivatives are with respect to the world coordinate ``z``.
    """
    scalar = np.ndim(z) == 0
    z = _as_complex(z)
    w = np.atleast_1d(sol.motion.pullback(z))
    jet = _jet_canonical(sol.family, w, order)
    rot = np.conj(sol.motion.rotor)
    out = []
    for k, arr in enumerate(jet):
        out.append(_out((arr * rot**k).reshape(z.shape), scalar))
    return out


def holo_ext(sol: AnalyticSolution, z):
    """Holomorphic extension ``W`` of the solution on the component containing ``z``."""
    return holo_jet(sol, z, order=0)[0]


def grad(sol: AnalyticSolution, z, *, outside: str = "raise"):
    """Gradient ``u_x + i u_y``.

    On the free boundary the one-sided limit from the positive phase is
    returned.  Points strictly inside the zero phase raise ``DomainError``
    unless ``outside="zero"``, in which case they get gradient 0.
    """
    scalar = np.ndim(z) == 0
    z = _as_complex(z)
    flat = np.atleast_1d(z).ravel()
    if outside == "zero":
        w = sol.motion.pullback(flat)
        fam = sol.family
        if isinstance(fam, Hairpin):
            ok = omega1_margin(w / fam.a) >= 0.0
        elif isinstance(fam, HalfPlane):
            ok = w.imag >= 0.0
        elif isinstance(fam, TwoPlane):
            ok = (w.imag >= 0.0) | (w.imag <= -fam.b)
        else:
            ok = np.ones(flat.shape, dtype=bool)
        res = np.zeros(flat.shape, dtype=complex)
        if np.any(ok):
            res[ok] = np.conj(holo_jet(sol, flat[ok], order=1)[1])
        return _out(res.reshape(z.shape), scalar)
    dU = holo_jet(sol, flat, order=1)[1]
    return _out(np.conj(dU).reshape(z.shape), scalar)


def grad_vector(sol: AnalyticSolution, z):
    """Gradient as a real 2-vector (or an ``(..., 2)`` array)."""
    g = np.asarray(grad(sol, z))
    return np.stack([g.real, g.imag], axis=-1)


def boundary_param(a: float, y1, side: str = "left"):
    """Point of ``d Omega_a`` at strip parameter ``y1`` and its curvature.

    ``side="left"`` gives ``x1 = -a(pi/2 + cosh(x2/a))``.  The curvature is
    ``sech(y1)^2 / a`` (positive: the zero phase is convex).
    """
    Hairpin(a)
    scalar = np.ndim(y1) == 0
    y1 = np.asarray(y1, dtype=float)
    if side == "left":
        x1 = -a * (HALF_PI + np.cosh(y1))
    elif side == "right":
        x1 = a * (HALF_PI + np.cosh(y1))
    else:
        raise DomainError(f"side must be 'left' or 'right', got {side!r}")
    point = x1 + 1j * a * y1
    kappa = 1.0 / (a * np.cosh(y1) ** 2)
    return _out(np.asarray(point), scalar), _out(np.asarray(kappa), scalar)


def hairpin_boundary_curvature(a: float, w):
    """Curvature of ``d Omega_a`` at the boundary point with ordinate ``Im w``."""
    return 1.0 / (a * np.cosh(np.asarray(w).imag / a) ** 2)


# ---------------------------------------------------------------------------
# composed (perturbed) hairpins with known ground truth
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticMap:
    """``psi(z) = z + c z^2``: a holomorphic near-identity map, ``psi(0) = 0``."""

    c: complex = 0j

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return z + self.c * z * z

    def d1(self, z):
        return 1.0 + 2.0 * self.c * np.asarray(z, dtype=complex)

    def d2(self, z):
        return 2.0 * self.c + 0.0 * np.asarray(z, dtype=complex)

    def inverse(self, w):
        w = np.asarray(w, dtype=complex)
        if self.c == 0:
            return w
        # root of c z^2 + z - w = 0 closest to w
        disc = np.sqrt(1.0 + 4.0 * self.c * w)
        return (-1.0 + disc) / (2.0 * self.c)


@dataclass(frozen=True)
class ComposedHairpin:
    """``u = H_a o psi`` pulled back through a rigid motion.

    ``u`` is harmonic on its positive phase ``psi^{-1}(Omega_a)`` and its
    holomorphic extension is ``V_a o psi``; the free boundary is the
    ``psi``-preimage of the hairpin boundary.  Used as a near-hairpin with
    a known conformal map.
    """

    a: float
    psi: QuadraticMap
    motion: RigidMotion = field(default_factory=RigidMotion)

    @classmethod
    def with_second_derivative(cls, a, delta, r0, direction=1.0 + 0j, motion=None):
        """Perturbation with ``|psi''| = delta / r0`` everywhere."""
        c = 0.5 * (delta / r0) * direction / abs(direction)
        return cls(a, QuadraticMap(c), motion or RigidMotion())

    def _model(self):
        return AnalyticSolution(Hairpin(self.a))

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return evaluate(self._model(), self.psi(self.motion.pullback(z)))

    def model_point(self, z):
        return self.psi(self.motion.pullback(np.asarray(z, dtype=complex)))

    def margin(self, z):
        return margin(self._model(), self.model_point(z))

    def holo_jet(self, z, order=2):
        w = self.motion.pullback(np.asarray(z, dtype=complex))
        p = self.psi(w)
        jet = holo_jet(self._model(), p, order=order)
        rot = np.conj(self.motion.rotor)
        out = [jet[0]]
        if order >= 1:
            d1 = self.psi.d1(w)
            out.append(jet[1] * d1 * rot)
        if order >= 2:
            out.append((jet[2] * d1**2 + jet[1] * self.psi.d2(w)) * rot**2)
        return out

    def describe(self) -> dict:
        return {
            "family": "composed_hairpin",
            "params": {"a": self.a, "c": [self.psi.c.real, self.psi.c.imag]},
            "motion": self.motion.to_dict(),
        }


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def window_shape(window, h: float):
    xmin, xmax, ymin, ymax = (float(v) for v in window)
    if not (h > 0 and math.isfinite(h)):
        raise DomainError("grid spacing must be positive")
    if not (xmax > xmin and ymax > ymin):
        raise DomainError("window must be nonempty")
    nx = int(round((xmax - xmin) / h)) + 1
    ny = int(round((ymax - ymin) / h)) + 1
    return nx, ny


def sample_to_grid(sol, window, h: float, node_cap: int = DEFAULT_NODE_CAP):
    """Sample an analytic (or any vectorised callable) solution on a grid.

    ``window = (xmin, xmax, ymin, ymax)``.  Nodes sit at ``xmin + i h``.
    """
    from .grid import GridField

    nx, ny = window_shape(window, h)
    if nx * ny > node_cap:
        raise ResourceError(f"{nx}x{ny} nodes exceeds the cap of {node_cap}")
    origin = complex(window[0], window[2])
    xs = origin.real + h * np.arange(nx)
    ys = origin.imag + h * np.arange(ny)
    Z = xs[None, :] + 1j * ys[:, None]
    values = np.asarray(sol(Z), dtype=float)
    describe = getattr(sol, "describe", None)
    provenance = describe() if callable(describe) else {"source": repr(sol)}
    provenance = dict(provenance)
    provenance["h"] = h
    return GridField(origin=origin, h=h, values=values, provenance=provenance)


SolutionLike = Union[AnalyticSolution, ComposedHairpin, Callable]
