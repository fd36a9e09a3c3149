"""Closed-form pinhole projection under one-axis camera motion.

Conventions
-----------
Camera coordinates: x right, y down, z forward; a point is visible only
while its depth (z in the moved camera frame) is positive.  The camera
motion is a single scalar ``alpha``: a translation of the camera by
``alpha`` meters along one axis, or a rotation by ``alpha`` radians about
one axis.  With rotation matrix R(alpha) and translation t(alpha), a world
point P maps to the pixel position

    [u, v, 1]^T = (1 / depth) * K_intr * R^{-1} (P - t)
    depth       = third component of R^{-1} (P - t)

``u`` runs along image columns, ``v`` along rows; the rasterizer puts a
continuous position into the cell ``(row, col) = (floor(v), floor(u))``.

Each axis reduces to a rational or trigonometric expression in ``alpha``;
this module evaluates those expressions, their exact derivatives, and the
per-point Lipschitz constant of the pixel position over a symmetric motion
range ``[-b, +b]``.  Maxima over the range are taken over the analytic
candidate set (range endpoints plus interior critical points of the
sinusoidal factors), never by grid sampling, so the constants are sound
upper bounds.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveDepth


# Depths at or below this are treated as "on or behind the image plane";
# real scene depths are many orders of magnitude larger.
DEPTH_EPS = 1e-12


class Axis(enum.Enum):
    """One-axis camera motions: translations in meters, rotations in radians."""

    TX = "tx"
    TY = "ty"
    TZ = "tz"
    RX = "rx"
    RY = "ry"
    RZ = "rz"

    @property
    def is_rotation(self) -> bool:
        return self in (Axis.RX, Axis.RY, Axis.RZ)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus the pixel grid they rasterize onto."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the grid")
        if self.width < 1 or self.height < 1:
            raise ValueError("grid size must be positive")


@dataclass(frozen=True)
class MotionSpec:
    """A motion axis together with its symmetric radius b, so S = [-b, +b]."""

    axis: Axis
    radius_b: float

    def __post_init__(self):
        if self.radius_b <= 0:
            raise ValueError("motion radius must be positive")


@dataclass(frozen=True)
class MotionValue:
    """A concrete pose inside a motion range."""

    spec: MotionSpec
    value: float

    def __post_init__(self):
        if abs(self.value) > self.spec.radius_b:
            raise ValueError(
                f"motion value {self.value} outside [-{self.spec.radius_b}, "
                f"{self.spec.radius_b}]"
            )


@dataclass(frozen=True)
class PixelPosition:
    """Continuous pixel coordinates; may lie outside the grid."""

    u: float
    v: float


def _as_points(points) -> np.ndarray:
    if hasattr(points, "points"):  # accept colored clouds directly
        points = points.points
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must have shape (N, 3)")
    return pts


def project_points(points, axis: Axis, value, cam: CameraModel):
    """Project an (N, 3) array of points.

    ``value`` is the motion scalar, either a single pose for all points or
    an (N,) array giving each point its own pose.  Returns ``(uv, depth)``
    with ``uv`` of shape (N, 2) and ``depth`` of shape (N,).  Entries with
    non-positive depth carry the raw depth value so callers can mask them;
    uv rows for such entries are not meaningful.
    """
    pts = _as_points(points)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    a = np.asarray(value, dtype=np.float64)

    if axis is Axis.TX:
        depth = z + np.zeros_like(a)
        un = cam.fx * (x - a)
        vn = cam.fy * y + np.zeros_like(a)
    elif axis is Axis.TY:
        depth = z + np.zeros_like(a)
        un = cam.fx * x + np.zeros_like(a)
        vn = cam.fy * (y - a)
    elif axis is Axis.TZ:
        depth = z - a
        un = cam.fx * x + np.zeros_like(a)
        vn = cam.fy * y + np.zeros_like(a)
    elif axis is Axis.RZ:
        c, s = np.cos(a), np.sin(a)
        depth = z + np.zeros_like(a)
        un = cam.fx * (x * c + y * s)
        vn = cam.fy * (y * c - x * s)
    elif axis is Axis.RX:
        c, s = np.cos(a), np.sin(a)
        depth = z * c - y * s
        un = cam.fx * x + np.zeros_like(a)
        vn = cam.fy * (y * c + z * s)
    elif axis is Axis.RY:
        c, s = np.cos(a), np.sin(a)
        depth = x * s + z * c
        un = cam.fx * (x * c - z * s)
        vn = cam.fy * y + np.zeros_like(a)
    else:  # pragma: no cover
        raise ValueError(f"unknown axis {axis}")

    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.stack([un / depth + cam.cx, vn / depth + cam.cy], axis=1)
    return uv, depth


def project(point, motion: MotionValue, cam: CameraModel):
    """Project a single point; raises NonPositiveDepth behind the camera."""
    uv, depth = project_points(point, motion.spec.axis, motion.value, cam)
    d = float(depth[0])
    if d <= DEPTH_EPS:
        raise NonPositiveDepth(
            f"depth {d:.6g} at {motion.spec.axis.value}={motion.value:.6g}"
        )
    return PixelPosition(float(uv[0, 0]), float(uv[0, 1])), d


def projection_derivative_points(points, axis: Axis, value, cam: CameraModel):
    """Exact d(u, v)/d(alpha) for an (N, 3) array of points.

    ``value`` is a single pose or an (N,) array, as in project_points.
    """
    pts = _as_points(points)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    a = np.asarray(value, dtype=np.float64)

    if axis is Axis.TX:
        du = -cam.fx / z + np.zeros_like(a)
        dv = np.zeros_like(z) + np.zeros_like(a)
    elif axis is Axis.TY:
        du = np.zeros_like(z) + np.zeros_like(a)
        dv = -cam.fy / z + np.zeros_like(a)
    elif axis is Axis.TZ:
        d2 = (z - a) ** 2
        du = cam.fx * x / d2
        dv = cam.fy * y / d2
    elif axis is Axis.RZ:
        c, s = np.cos(a), np.sin(a)
        du = cam.fx * (y * c - x * s) / z
        dv = -cam.fy * (x * c + y * s) / z
    elif axis is Axis.RX:
        c, s = np.cos(a), np.sin(a)
        depth = z * c - y * s
        num = y * c + z * s
        du = cam.fx * x * num / depth**2
        dv = cam.fy * (y**2 + z**2) / depth**2
    elif axis is Axis.RY:
        c, s = np.cos(a), np.sin(a)
        depth = x * s + z * c
        num = x * c - z * s
        du = -cam.fx * (x**2 + z**2) / depth**2
        dv = -cam.fy * y * num / depth**2
    else:  # pragma: no cover
        raise ValueError(f"unknown axis {axis}")
    return np.stack([du, dv], axis=1)


def projection_derivative(point, motion: MotionValue, cam: CameraModel):
    """Derivative of a single point's pixel position w.r.t. the motion scalar."""
    _, depth = project_points(point, motion.spec.axis, motion.value, cam)
    if float(depth[0]) <= DEPTH_EPS:
        raise NonPositiveDepth(
            f"depth {float(depth[0]):.6g} at {motion.spec.axis.value}="
            f"{motion.value:.6g}"
        )
    duv = projection_derivative_points(point, motion.spec.axis, motion.value, cam)
    return float(duv[0, 0]), float(duv[0, 1])


def _max_abs_sinusoid(a_cos, b_sin, b: float):
    """max over theta in [-b, b] of |a_cos*cos(theta) + b_sin*sin(theta)|.

    The expression equals amp*cos(theta - phi) with amp = hypot(a, b) and
    phi = atan2(b, a); |.| attains amp at theta = phi mod pi.  Candidates
    are the window endpoints plus any such interior peak.
    """
    a_cos = np.asarray(a_cos, dtype=np.float64)
    b_sin = np.asarray(b_sin, dtype=np.float64)
    amp = np.hypot(a_cos, b_sin)
    phi = np.arctan2(b_sin, a_cos)
    # wrap phi into (-pi/2, pi/2]; peaks of |cos| repeat with period pi
    peak = phi - np.pi * np.round(phi / np.pi)
    cb, sb = math.cos(b), math.sin(b)
    end = np.maximum(
        np.abs(a_cos * cb + b_sin * sb), np.abs(a_cos * cb - b_sin * sb)
    )
    return np.where(np.abs(peak) <= b, amp, end)


def _min_depth_window(a_cos, b_sin, b: float):
    """min over theta in [-b, b] of a_cos*cos(theta) + b_sin*sin(theta).

    Used for rotational depth positivity: the minimum of amp*cos(theta -
    phi) over the window is -amp when the window reaches an odd multiple
    of pi away from phi, else the smaller endpoint value.
    """
    a_cos = np.asarray(a_cos, dtype=np.float64)
    b_sin = np.asarray(b_sin, dtype=np.float64)
    amp = np.hypot(a_cos, b_sin)
    phi = np.arctan2(b_sin, a_cos)
    # troughs sit at phi + pi + 2k*pi; wrap the nearest one into [-pi, pi]
    trough = phi + np.pi
    trough -= 2.0 * np.pi * np.round(trough / (2.0 * np.pi))
    cb, sb = math.cos(b), math.sin(b)
    end = np.minimum(a_cos * cb + b_sin * sb, a_cos * cb - b_sin * sb)
    return np.where(np.abs(trough) <= b, -amp, end)


def min_depth_over_range(points, spec: MotionSpec, cam: CameraModel):
    """Per-point minimum depth over the whole motion range [-b, +b]."""
    pts = _as_points(points)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    b = spec.radius_b
    axis = spec.axis
    if axis in (Axis.TX, Axis.TY, Axis.RZ):
        return z.copy()
    if axis is Axis.TZ:
        return z - b
    if axis is Axis.RX:
        return _min_depth_window(z, -y, b)
    if axis is Axis.RY:
        return _min_depth_window(z, x, b)
    raise ValueError(f"unknown axis {axis}")  # pragma: no cover


def lipschitz_constants(points, spec: MotionSpec, cam: CameraModel):
    """Per-point Lipschitz constants of the pixel position over [-b, +b].

    L = max over the range of max(|du/dalpha|, |dv/dalpha|), evaluated on
    the analytic candidate set per axis:

    * TX / TY: the derivative is constant, fx/Z resp. fy/Z.
    * TZ: both derivative magnitudes grow monotonically toward alpha = +b,
      giving max(fx|X|, fy|Y|) / (Z - b)^2.
    * RZ: each component is a pure sinusoid in alpha over constant depth;
      the candidate set is the endpoints plus the sinusoid peak.
    * RX / RY: |dv| (resp. |du|) is amp^2 * f / depth^2 and maximal where
      the depth is minimal, which on a positive-depth window is at an
      endpoint; the other component's ratio is monotone in alpha, so both
      are extremal at the endpoints.
    """
    pts = _as_points(points)
    dmin = min_depth_over_range(pts, spec, cam)
    if np.any(dmin <= DEPTH_EPS):
        raise NonPositiveDepth(
            "point depth reaches zero inside the motion range; "
            "the sample is not certifiable at this radius"
        )
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    b = spec.radius_b
    axis = spec.axis

    if axis is Axis.TX:
        return cam.fx / z
    if axis is Axis.TY:
        return cam.fy / z
    if axis is Axis.TZ:
        return np.maximum(cam.fx * np.abs(x), cam.fy * np.abs(y)) / (z - b) ** 2
    if axis is Axis.RZ:
        m_u = _max_abs_sinusoid(y, -x, b)
        m_v = _max_abs_sinusoid(x, y, b)
        return np.maximum(cam.fx * m_u, cam.fy * m_v) / z
    if axis in (Axis.RX, Axis.RY):
        best = np.zeros(len(pts))
        for theta in (-b, b):
            duv = projection_derivative_points(pts, axis, theta, cam)
            best = np.maximum(best, np.abs(duv).max(axis=1))
        return best
    raise ValueError(f"unknown axis {axis}")  # pragma: no cover


def lipschitz_constant(point, spec: MotionSpec, cam: CameraModel) -> float:
    return float(lipschitz_constants(point, spec, cam)[0])


def delta_constant(spec: MotionSpec, cam: CameraModel, one_frame_points, delta_px: float) -> float:
    """Slack added to the one-frame Lipschitz bound by delta-convexity.

    A point absent from the one-frame cloud projects within ``delta_px``
    pixels of some one-frame point and sits behind it; its Lipschitz
    constant then exceeds the one-frame maximum by at most this constant.
    Translations along x/y contribute nothing; the other axes maximize a
    closed-form expression over the one-frame points and the range
    endpoints.
    """
    if delta_px <= 0:
        raise ValueError("delta must be positive (pixels)")
    pts = _as_points(one_frame_points)
    dmin = min_depth_over_range(pts, spec, cam)
    if np.any(dmin <= DEPTH_EPS):
        raise NonPositiveDepth("one-frame point behind the camera inside the range")
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    b = spec.radius_b
    axis = spec.axis

    if axis in (Axis.TX, Axis.TY):
        return 0.0
    if axis is Axis.TZ:
        return float(delta_px * np.max(1.0 / (z - b)))
    if axis is Axis.RZ:
        return float(max(cam.fx / cam.fy, cam.fy / cam.fx) * delta_px)
    if axis is Axis.RX:
        best = 0.0
        for theta in (-b, b):
            c, s = math.cos(theta), math.sin(theta)
            depth = z * c - y * s
            num = np.abs(y * c + z * s)
            t1 = (delta_px / cam.fy) * (cam.fx * np.abs(x) + cam.fy * num) / depth
            t2 = 2.0 * delta_px * num / depth
            best = max(best, float(np.max(np.maximum(t1, t2))))
        return delta_px**2 / cam.fy + best
    if axis is Axis.RY:
        best = 0.0
        for theta in (-b, b):
            c, s = math.cos(theta), math.sin(theta)
            depth = x * s + z * c
            num = np.abs(x * c - z * s)
            t1 = 2.0 * delta_px * num / depth
            t2 = (delta_px / cam.fx) * (cam.fy * np.abs(y) + cam.fx * num) / depth
            best = max(best, float(np.max(np.maximum(t1, t2))))
        # leading curvature term: conservative over both focal lengths
        return delta_px**2 / min(cam.fx, cam.fy) + best
    raise ValueError(f"unknown axis {axis}")  # pragma: no cover


def motion_rotation_translation(axis: Axis, value: float):
    """Rotation vector and translation vector of a one-axis motion."""
    rot = np.zeros(3)
    t = np.zeros(3)
    idx = {"x": 0, "y": 1, "z": 2}[axis.value[1]]
    if axis.is_rotation:
        rot[idx] = value
    else:
        t[idx] = value
    return rot, t


def rotation_matrix(rotvec) -> np.ndarray:
    """Rodrigues rotation matrix for an axis-angle vector."""
    rotvec = np.asarray(rotvec, dtype=np.float64)
    theta = float(np.linalg.norm(rotvec))
    if theta == 0.0:
        return np.eye(3)
    k = rotvec / theta
    kx = np.array(
        [[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]], dtype=np.float64
    )
    return np.eye(3) + math.sin(theta) * kx + (1.0 - math.cos(theta)) * (kx @ kx)


def project_general(point, rotvec, translation, cam: CameraModel):
    """General-pose projection used to cross-validate the closed forms.

    Computes [u, v, 1] = (1/depth) * K * R^{-1} (P - t) with R from the
    full Rodrigues formula, for arbitrary rotation vector and translation.
    """
    p = np.asarray(point, dtype=np.float64).reshape(3)
    t = np.asarray(translation, dtype=np.float64).reshape(3)
    rot = rotation_matrix(rotvec)
    q = rot.T @ (p - t)
    depth = float(q[2])
    if depth <= DEPTH_EPS:
        raise NonPositiveDepth(f"depth {depth:.6g} in general projection")
    u = cam.fx * q[0] / depth + cam.cx
    v = cam.fy * q[1] / depth + cam.cy
    return PixelPosition(u, v), depth
