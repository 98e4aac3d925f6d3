# sim/services/geometry.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import beta as beta_fn

from core.constants import EPS_MAX, EPS_MIN
from core.errors import DegenerateGradientError, InvalidShapeError
from core.utils.rotations import (
    IDENTITY_QUAT,
    quat_canonical,
    quat_conjugate,
    quat_from_matrix,
    quat_multiply,
    quat_slerp,
    quat_to_matrix,
)

logger = logging.getLogger(__name__)

# coarse march step inside the object AABB, metres
MARCH_STEP_M = 1e-3
BISECTION_MAX_ITERS = 60
ROOT_TOL = 1e-8
# cos/sin below this are treated as exact zeros by the parametric form
_TRIG_SNAP = 1e-12


# ---------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class SuperquadricShape:
    """phi = (a1, a2, a3, eps1, eps2); semi-axes in metres."""
    a1: float
    a2: float
    a3: float
    eps1: float
    eps2: float

    def __post_init__(self):
        vals = (self.a1, self.a2, self.a3, self.eps1, self.eps2)
        if not all(math.isfinite(float(v)) for v in vals):
            raise InvalidShapeError(f"non-finite shape parameters: {vals}")
        if min(self.a1, self.a2, self.a3) <= 0.0:
            raise InvalidShapeError(f"semi-axes must be > 0, got {vals[:3]}")
        for name in ("eps1", "eps2"):
            e = getattr(self, name)
            if not (EPS_MIN - 1e-12 <= e <= EPS_MAX + 1e-12):
                raise InvalidShapeError(f"{name}={e} outside [{EPS_MIN}, {EPS_MAX}]")
        for name in ("a1", "a2", "a3", "eps1", "eps2"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @classmethod
    def from_vector(cls, phi: Sequence[float]) -> "SuperquadricShape":
        if len(phi) != 5:
            raise InvalidShapeError(f"phi needs 5 values, got {len(phi)}")
        return cls(*(float(v) for v in phi))

    def as_vector(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3, self.eps1, self.eps2])

    def aabb_half_extents(self) -> np.ndarray:
        # exponents <= 2 keep the surface inside the box spanned by the semi-axes
        return np.array([self.a1, self.a2, self.a3])

    def volume(self) -> float:
        return shape_volume(self)

    def support(self, direction) -> float:
        return support_value(self, direction)


class Pose:
    """Rigid transform: unit quaternion (w, x, y, z) with w >= 0, position in metres."""

    __slots__ = ("quat", "position")

    def __init__(self, quat=IDENTITY_QUAT, position=(0.0, 0.0, 0.0)):
        q = quat_canonical(quat)
        p = np.array(position, dtype=float).reshape(3)
        q.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "quat", q)
        object.__setattr__(self, "position", p)

    def __setattr__(self, key, value):
        raise AttributeError("Pose is immutable")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(np.array_equal(self.quat, other.quat) and np.array_equal(self.position, other.position))

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"Pose(quat={self.quat.round(6).tolist()}, position={self.position.round(6).tolist()})"

    # ---- constructors ----
    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_vector(cls, v: Sequence[float]) -> "Pose":
        v = np.asarray(v, dtype=float)
        return cls(v[3:7], v[0:3])

    @classmethod
    def from_matrix(cls, rotation, position=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(quat_from_matrix(rotation), position)

    # ---- views ----
    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quat)

    def as_vector(self) -> np.ndarray:
        """(px, py, pz, qw, qx, qy, qz)"""
        return np.concatenate([self.position, self.quat])

    # ---- algebra ----
    def compose(self, other: "Pose") -> "Pose":
        """self o other (other expressed in self's frame)."""
        return Pose(quat_multiply(self.quat, other.quat), self.position + self.rotation @ other.position)

    def inverse(self) -> "Pose":
        r_t = self.rotation.T
        return Pose(quat_conjugate(self.quat), -(r_t @ self.position))

    def apply(self, points) -> np.ndarray:
        """Local -> world for a point or an (N, 3) stack."""
        return self.position + np.asarray(points, dtype=float) @ self.rotation.T

    def apply_inverse(self, points) -> np.ndarray:
        """World -> local."""
        return (np.asarray(points, dtype=float) - self.position) @ self.rotation

    def rotate(self, vectors) -> np.ndarray:
        return np.asarray(vectors, dtype=float) @ self.rotation.T

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.position, other.position, atol=atol)
            and (np.allclose(self.quat, other.quat, atol=atol) or np.allclose(self.quat, -other.quat, atol=atol))
        )


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -1.0]))

    def __post_init__(self):
        o = np.array(self.origin, dtype=float).reshape(3)
        d = np.array(self.direction, dtype=float).reshape(3)
        n = float(np.linalg.norm(d))
        if n < 1e-15 or not math.isfinite(n):
            raise ValueError("ray direction must be a nonzero finite vector")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d / n)

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


# ---------------------------------------------------------------------
# Implicit / parametric form
# ---------------------------------------------------------------------
def _xy_term(pts: np.ndarray, shape: SuperquadricShape) -> np.ndarray:
    p2 = 2.0 / shape.eps2
    return np.abs(pts[..., 0] / shape.a1) ** p2 + np.abs(pts[..., 1] / shape.a2) ** p2


def implicit_value(point, shape: SuperquadricShape):
    """
    Inside-outside function F: < 0 inside, 0 on the surface, > 0 outside.
    Accepts a 3-vector or any (..., 3) array; |0|**p evaluates to 0.
    """
    pts = np.asarray(point, dtype=float)
    with np.errstate(over="ignore"):
        g_xy = _xy_term(pts, shape)
        f = g_xy ** (shape.eps2 / shape.eps1) + np.abs(pts[..., 2] / shape.a3) ** (2.0 / shape.eps1) - 1.0
    if np.ndim(f) == 0:
        return float(f)
    return f


def _signed_pow(base: np.ndarray, e: float) -> np.ndarray:
    b = np.where(np.abs(base) < _TRIG_SNAP, 0.0, base)
    return np.sign(b) * np.abs(b) ** e


def surface_point(eta, omega, shape: SuperquadricShape) -> np.ndarray:
    """Parametric surface point; broadcasts over eta/omega arrays."""
    eta = np.asarray(eta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    ce = _signed_pow(np.cos(eta), shape.eps1)
    se = _signed_pow(np.sin(eta), shape.eps1)
    cw = _signed_pow(np.cos(omega), shape.eps2)
    sw = _signed_pow(np.sin(omega), shape.eps2)
    x = shape.a1 * ce * cw
    y = shape.a2 * ce * sw
    z = shape.a3 * se * np.ones_like(cw)
    return np.stack(np.broadcast_arrays(x, y, z), axis=-1)


def implicit_gradient(point, shape: SuperquadricShape) -> np.ndarray:
    """Analytic grad F for a point or an (..., 3) stack (not normalized)."""
    pts = np.asarray(point, dtype=float)
    e1, e2 = shape.eps1, shape.eps2
    ux = pts[..., 0] / shape.a1
    uy = pts[..., 1] / shape.a2
    uz = pts[..., 2] / shape.a3
    p2 = 2.0 / e2
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        g_xy = np.abs(ux) ** p2 + np.abs(uy) ** p2
        outer = np.where(g_xy > 0.0, g_xy ** (e2 / e1 - 1.0), 0.0)
        dx = (2.0 / e1) * outer * np.abs(ux) ** (p2 - 1.0) * np.sign(ux) / shape.a1
        dy = (2.0 / e1) * outer * np.abs(uy) ** (p2 - 1.0) * np.sign(uy) / shape.a2
        dz = (2.0 / e1) * np.abs(uz) ** (2.0 / e1 - 1.0) * np.sign(uz) / shape.a3
    grad = np.stack([dx, dy, dz], axis=-1)
    return np.where(np.isfinite(grad), grad, 0.0)


def surface_normal(point, shape: SuperquadricShape, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Outward unit normal from the analytic gradient. Singular points are
    retried up to 3 times at point + 1e-7 * random offset.
    """
    p = np.asarray(point, dtype=float).reshape(3)
    g = implicit_gradient(p, shape)
    n = float(np.linalg.norm(g))
    if n >= 1e-12:
        return g / n

    rng = rng if rng is not None else np.random.default_rng(0)
    for attempt in range(3):
        q = p + 1e-7 * rng.standard_normal(3)
        g = implicit_gradient(q, shape)
        n = float(np.linalg.norm(g))
        if n >= 1e-12:
            logger.debug("surface_normal: singular point %s resolved on retry %d", p, attempt + 1)
            return g / n
    raise DegenerateGradientError(f"gradient vanishes near {p.tolist()}")


def surface_normals(points, shape: SuperquadricShape) -> np.ndarray:
    """Batched normals without retry; zero rows where the gradient vanishes."""
    g = implicit_gradient(points, shape)
    n = np.linalg.norm(g, axis=-1, keepdims=True)
    return np.where(n >= 1e-12, g / np.maximum(n, 1e-300), 0.0)


# ---------------------------------------------------------------------
# Ray queries
# ---------------------------------------------------------------------
def _slab(origins: np.ndarray, dirs: np.ndarray, half: np.ndarray):
    """Entry/exit distances against the box [-half, half]; entry clipped to 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (-half - origins) * inv
        t2 = (half - origins) * inv
    lo = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
    hi = np.where(np.isnan(t2), np.inf, np.maximum(t1, t2))
    # parallel rays: inside the slab spans everything, outside spans nothing
    parallel = dirs == 0.0
    inside = np.abs(origins) <= half
    lo = np.where(parallel, np.where(inside, -np.inf, np.inf), lo)
    hi = np.where(parallel, np.where(inside, np.inf, -np.inf), hi)
    t_in = np.maximum(lo.max(axis=-1), 0.0)
    t_out = hi.min(axis=-1)
    return t_in, t_out


def ray_intersect_many(origins, directions, shape: SuperquadricShape, object_pose: Pose) -> np.ndarray:
    """
    Batched ray_intersect over (N, 3) world-frame origins/unit directions.
    Returns an (N,) array of hit distances with NaN for misses.
    """
    o_w = np.atleast_2d(np.asarray(origins, dtype=float))
    d_w = np.atleast_2d(np.asarray(directions, dtype=float))
    o = object_pose.apply_inverse(o_w)
    d = d_w @ object_pose.rotation

    half = shape.aabb_half_extents() * (1.0 + 1e-9)
    t_in, t_out = _slab(o, d, half)
    n = o.shape[0]
    result = np.full(n, np.nan)
    active = t_out >= t_in
    if not np.any(active):
        return result

    idx = np.nonzero(active)[0]
    o, d, t_in, t_out = o[idx], d[idx], t_in[idx], t_out[idx]

    def f_at(t, rows=slice(None)):
        return implicit_value(o[rows] + t[:, None] * d[rows], shape)

    t_prev = t_in.copy()
    f_prev = f_at(t_prev)
    found = np.zeros(idx.size, dtype=bool)
    lo = np.zeros(idx.size)
    hi = np.zeros(idx.size)

    exact = f_prev == 0.0
    result[idx[exact]] = t_prev[exact]
    done = exact.copy()

    steps = int(np.ceil(np.max(t_out - t_in) / MARCH_STEP_M)) + 1
    for k in range(1, steps + 1):
        pending = ~done
        if not np.any(pending):
            break
        t_cur = np.minimum(t_in + k * MARCH_STEP_M, t_out)
        f_cur = np.full(idx.size, np.nan)
        f_cur[pending] = f_at(t_cur[pending], pending)
        crossed = pending & (np.sign(f_cur) != np.sign(f_prev)) & ~np.isnan(f_cur)
        lo[crossed] = t_prev[crossed]
        hi[crossed] = t_cur[crossed]
        found |= crossed
        done |= crossed
        # rays that reached their exit without a sign change are misses
        done |= pending & (t_cur >= t_out)
        t_prev = np.where(pending, t_cur, t_prev)
        f_prev = np.where(pending, f_cur, f_prev)

    if np.any(found):
        rows = np.nonzero(found)[0]
        a, b = lo[rows], hi[rows]
        fa = f_at(a, rows)
        best_t = b.copy()
        best_f = np.abs(f_at(b, rows))
        for _ in range(BISECTION_MAX_ITERS):
            m = 0.5 * (a + b)
            fm = f_at(m, rows)
            better = np.abs(fm) < best_f
            best_t = np.where(better, m, best_t)
            best_f = np.where(better, np.abs(fm), best_f)
            if np.all(best_f <= ROOT_TOL):
                break
            same = np.sign(fm) == np.sign(fa)
            a = np.where(same, m, a)
            fa = np.where(same, fm, fa)
            b = np.where(same, b, m)
        result[idx[rows]] = best_t
    return result


def ray_intersect(ray: Ray, shape: SuperquadricShape, object_pose: Pose) -> Optional[float]:
    """Smallest t >= 0 where the ray meets the surface, or None."""
    t = ray_intersect_many(ray.origin[None, :], ray.direction[None, :], shape, object_pose)[0]
    return None if np.isnan(t) else float(t)


# ---------------------------------------------------------------------
# Pose interpolation
# ---------------------------------------------------------------------
def pose_interpolate(x0: Pose, x1: Pose, alpha: float) -> Pose:
    if alpha <= 0.0:
        return x0
    if alpha >= 1.0:
        return x1
    p = x0.position + alpha * (x1.position - x0.position)
    return Pose(quat_slerp(x0.quat, x1.quat, alpha), p)


# ---------------------------------------------------------------------
# Support function, volume, inertia
# ---------------------------------------------------------------------
def _dual_exponent(eps: float) -> float:
    return math.inf if eps >= 2.0 - 1e-12 else 2.0 / (2.0 - eps)


def _pnorm(values: Sequence[float], q: float) -> float:
    v = np.abs(np.asarray(values, dtype=float))
    m = float(v.max())
    if m == 0.0:
        return 0.0
    if math.isinf(q):
        return m
    return m * float(np.sum((v / m) ** q)) ** (1.0 / q)


def support_value(shape: SuperquadricShape, direction) -> float:
    """max over the surface of direction . x, for a direction in the object frame."""
    u = np.asarray(direction, dtype=float)
    q1 = _dual_exponent(shape.eps1)
    q2 = _dual_exponent(shape.eps2)
    s_xy = _pnorm([shape.a1 * u[0], shape.a2 * u[1]], q2)
    return _pnorm([s_xy, shape.a3 * u[2]], q1)


def _pnorm_grad(values: Sequence[float], q: float) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    a = np.abs(v)
    m = float(a.max())
    if m == 0.0:
        return np.zeros_like(v)
    if math.isinf(q):
        top = a == m
        return np.sign(v) * top / float(top.sum())
    r = a / m
    return np.sign(v) * r ** (q - 1.0) / float(np.sum(r ** q)) ** ((q - 1.0) / q)


def support_point(shape: SuperquadricShape, direction) -> np.ndarray:
    """
    Object-frame surface point attaining support_value in `direction` (the
    gradient of the support function). Flat faces give their centre when
    the direction is the face normal.
    """
    u = np.asarray(direction, dtype=float)
    q1 = _dual_exponent(shape.eps1)
    q2 = _dual_exponent(shape.eps2)
    xy = [shape.a1 * u[0], shape.a2 * u[1]]
    g_xy = _pnorm_grad(xy, q2)
    g = _pnorm_grad([_pnorm(xy, q2), shape.a3 * u[2]], q1)
    return np.array([g[0] * g_xy[0] * shape.a1, g[0] * g_xy[1] * shape.a2, g[1] * shape.a3])


def support_height(shape: SuperquadricShape, rotation) -> float:
    """Resting height of the centroid above z=0 for an object with this world rotation."""
    r = quat_to_matrix(rotation) if np.shape(rotation) == (4,) else np.asarray(rotation, dtype=float)
    # world down direction expressed in the object frame
    return support_value(shape, r.T @ np.array([0.0, 0.0, -1.0]))


def _volume_by_quadrature(shape: SuperquadricShape, n: int = 400) -> float:
    xs = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    gx, gy = np.meshgrid(xs * shape.a1, xs * shape.a2, indexing="ij")
    g = np.abs(gx / shape.a1) ** (2.0 / shape.eps2) + np.abs(gy / shape.a2) ** (2.0 / shape.eps2)
    r = np.clip(1.0 - g ** (shape.eps2 / shape.eps1), 0.0, None)
    height = 2.0 * shape.a3 * r ** (shape.eps1 / 2.0)
    cell = (2.0 * shape.a1 / n) * (2.0 * shape.a2 / n)
    return float(height.sum() * cell)


def shape_volume(shape: SuperquadricShape) -> float:
    e1, e2 = shape.eps1, shape.eps2
    v = 2.0 * shape.a1 * shape.a2 * shape.a3 * e1 * e2 * beta_fn(e1 / 2.0 + 1.0, e1) * beta_fn(e2 / 2.0, e2 / 2.0)
    if not math.isfinite(v) or v <= 0.0:
        logger.debug("beta-form volume not finite for %s; using quadrature", shape)
        return _volume_by_quadrature(shape)
    return float(v)


def box_inertia_diag(shape: SuperquadricShape, mass: float) -> np.ndarray:
    """Diagonal inertia of the bounding box, used as the object's inertia."""
    a1, a2, a3 = shape.a1, shape.a2, shape.a3
    return mass / 3.0 * np.array([a2 * a2 + a3 * a3, a1 * a1 + a3 * a3, a1 * a1 + a2 * a2])


__all__ = [
    "SuperquadricShape",
    "Pose",
    "Ray",
    "implicit_value",
    "implicit_gradient",
    "surface_point",
    "surface_normal",
    "surface_normals",
    "ray_intersect",
    "ray_intersect_many",
    "pose_interpolate",
    "support_value",
    "support_height",
    "support_point",
    "shape_volume",
    "box_inertia_diag",
    "MARCH_STEP_M",
]
