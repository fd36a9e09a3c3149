"""Consistent camera-motion intervals and partition-spacing bounds.

Rendering a fixed cloud while one motion coordinate sweeps its range makes
every pixel a piecewise-constant function of the pose: a pixel keeps one
point's color exactly while that point keeps winning the z-buffer there.
The maximal pose runs where ownership is constant are the *consistent
intervals*; the narrowest one at a pixel bounds how far two neighboring
partition poses may sit apart before a pixel could take a value not seen
at either pose.

Three spacing bounds are computed from a discretized sweep at a caller
chosen resolution:

* exact    - the interval widths themselves,
* lipschitz - projection span across each interval divided by the point's
  Lipschitz constant (never larger than the exact width),
* one-frame - the Lipschitz form evaluated on a single-frame cloud with a
  convexity slack ``delta``, usable when the full cloud is unknown.

Per-pixel values aggregate across pixels by a lower quantile (1.0 keeps
the strict minimum) and are then shrunk by one sweep step to absorb the
discretization of the interval endpoints.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateInterval, InvalidDelta, NegativeMargin
from .geometry import (
    CameraModel,
    MotionSpec,
    lipschitz_constants,
    delta_constant,
    project_points,
)
from .rasterizer import ColoredPointCloud, zbuffer_winners

DEFAULT_RESOLUTION = 2001
DEFAULT_QUANTILE = 0.995


class CertMethod(str, enum.Enum):
    EXACT = "exact"
    LIPSCHITZ = "lipschitz"
    ONE_FRAME = "one-frame"


@dataclass(frozen=True)
class ConsistentInterval:
    """One maximal pose run where a single point owns a pixel."""

    point_index: int
    pixel: tuple  # (row, col)
    lo: float
    hi: float


@dataclass(frozen=True)
class DeltaConvexity:
    """Pixel-space slack of a one-frame cloud: every absent point projects
    within ``delta`` pixels of some one-frame point that occludes it."""

    delta: float

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")


@dataclass
class _SweepRuns:
    """Raw run arrays from a discretized ownership sweep."""

    point_index: np.ndarray  # (M,)
    pixel_flat: np.ndarray  # (M,)
    lo: np.ndarray  # (M,)
    hi: np.ndarray  # (M,)
    step: float
    width: int


def _sweep_runs(
    cloud: ColoredPointCloud, spec: MotionSpec, cam: CameraModel, resolution: int
) -> _SweepRuns:
    if resolution < 2:
        raise ValueError("analysis resolution must be at least 2")
    values = np.linspace(-spec.radius_b, spec.radius_b, resolution)
    step = float(values[1] - values[0])
    npix = cam.height * cam.width

    prev = zbuffer_winners(cloud, spec.axis, float(values[0]), cam)
    run_start = np.zeros(npix, dtype=np.int64)
    px_parts, pt_parts, lo_parts, hi_parts = [], [], [], []

    for t in range(1, resolution):
        cur = zbuffer_winners(cloud, spec.axis, float(values[t]), cam)
        changed = np.nonzero(cur != prev)[0]
        if changed.size:
            owners = prev[changed]
            keep = owners >= 0
            if np.any(keep):
                px_parts.append(changed[keep])
                pt_parts.append(owners[keep])
                lo_parts.append(values[run_start[changed[keep]]])
                hi_parts.append(np.full(int(keep.sum()), values[t - 1]))
            run_start[changed] = t
        prev = cur
    closing = np.nonzero(prev >= 0)[0]
    if closing.size:
        px_parts.append(closing)
        pt_parts.append(prev[closing])
        lo_parts.append(values[run_start[closing]])
        hi_parts.append(np.full(closing.size, values[-1]))

    if px_parts:
        pixel_flat = np.concatenate(px_parts)
        point_index = np.concatenate(pt_parts)
        lo = np.concatenate(lo_parts)
        hi = np.concatenate(hi_parts)
    else:
        pixel_flat = np.empty(0, dtype=np.int64)
        point_index = np.empty(0, dtype=np.int64)
        lo = hi = np.empty(0, dtype=np.float64)
    return _SweepRuns(point_index, pixel_flat, lo, hi, step, cam.width)


def consistent_intervals(
    cloud: ColoredPointCloud,
    spec: MotionSpec,
    cam: CameraModel,
    resolution: int = DEFAULT_RESOLUTION,
):
    """All consistent intervals of a scene, as a list.

    Each interval's endpoints are the first and last sweep poses of its
    run, so the result is a discretized estimate: true interval borders
    lie within one sweep step outside the reported ones.
    """
    runs = _sweep_runs(cloud, spec, cam, resolution)
    out = []
    for i in range(len(runs.pixel_flat)):
        flat = int(runs.pixel_flat[i])
        out.append(
            ConsistentInterval(
                point_index=int(runs.point_index[i]),
                pixel=(flat // runs.width, flat % runs.width),
                lo=float(runs.lo[i]),
                hi=float(runs.hi[i]),
            )
        )
    return out


def _per_pixel_min(pixel_flat, values):
    """Group ``values`` by pixel and keep each pixel's minimum.

    Returns (pixels, minima, argmin_run_index).
    """
    order = np.argsort(pixel_flat, kind="stable")
    pf = pixel_flat[order]
    vals = values[order]
    first = np.ones(len(pf), dtype=bool)
    if len(pf) > 1:
        first[1:] = pf[1:] != pf[:-1]
    starts = np.nonzero(first)[0]
    mins = np.minimum.reduceat(vals, starts)
    # recover which run attains each pixel minimum (first hit)
    argmins = np.empty(len(starts), dtype=np.int64)
    bounds = np.append(starts, len(pf))
    for i in range(len(starts)):
        seg = slice(bounds[i], bounds[i + 1])
        argmins[i] = order[seg][np.argmin(vals[seg])]
    return pf[starts], mins, argmins


def _quantile_pick(per_pixel, quantile):
    """Value of the (1 - quantile) lower quantile and the index attaining it."""
    if not 0.0 < quantile <= 1.0:
        raise ValueError("quantile must lie in (0, 1]")
    val = float(np.quantile(per_pixel, 1.0 - quantile, method="lower"))
    idx = int(np.nonzero(per_pixel == val)[0][0])
    return val, idx


def _check_monotone_span(cloud, spec, cam, point_index, lo, hi):
    """Warn when the governing point's projection drift is not monotone.

    The Lipschitz bounds assume the projection moves monotonically (in the
    max norm) across a consistent interval; this samples the drift along
    the governing run and warns without aborting if it backtracks.
    """
    if hi <= lo:
        return
    alphas = np.linspace(lo, hi, 33)
    pts = np.repeat(cloud.points[point_index][None, :], len(alphas), axis=0)
    uv, depth = project_points(pts, spec.axis, alphas, cam)
    if np.any(depth <= 0):
        return
    drift = np.max(np.abs(uv - uv[0]), axis=1)
    if np.any(np.diff(drift) < -1e-9):
        warnings.warn(
            "projection drift is not monotone across the governing interval; "
            "the Lipschitz-based spacing may not be conservative here",
            stacklevel=3,
        )


def exact_delta(
    cloud: ColoredPointCloud,
    spec: MotionSpec,
    cam: CameraModel,
    resolution: int = DEFAULT_RESOLUTION,
    quantile: float = DEFAULT_QUANTILE,
) -> float:
    """Partition spacing from the interval widths themselves."""
    runs = _sweep_runs(cloud, spec, cam, resolution)
    if len(runs.pixel_flat) == 0:
        raise DegenerateInterval("no pixel is ever covered over the motion range")
    _, mins, _ = _per_pixel_min(runs.pixel_flat, runs.hi - runs.lo)
    picked, _ = _quantile_pick(mins, quantile)
    result = picked - runs.step
    if result <= runs.step:
        raise DegenerateInterval(
            f"spacing {result:.3g} not above one sweep step {runs.step:.3g}; "
            "raise the resolution or relax the quantile"
        )
    return result


def lipschitz_delta(
    cloud: ColoredPointCloud,
    spec: MotionSpec,
    cam: CameraModel,
    resolution: int = DEFAULT_RESOLUTION,
    quantile: float = DEFAULT_QUANTILE,
) -> float:
    """Partition spacing from projection spans over Lipschitz constants."""
    runs = _sweep_runs(cloud, spec, cam, resolution)
    if len(runs.pixel_flat) == 0:
        raise DegenerateInterval("no pixel is ever covered over the motion range")
    lip = lipschitz_constants(cloud.points, spec, cam)
    pts = cloud.points[runs.point_index]
    uv_lo, _ = project_points(pts, spec.axis, runs.lo, cam)
    uv_hi, _ = project_points(pts, spec.axis, runs.hi, cam)
    span = np.max(np.abs(uv_hi - uv_lo), axis=1)
    widths = span / lip[runs.point_index]
    _, mins, argmins = _per_pixel_min(runs.pixel_flat, widths)
    picked, pick_idx = _quantile_pick(mins, quantile)
    gov = int(argmins[pick_idx])
    _check_monotone_span(
        cloud, spec, cam, int(runs.point_index[gov]),
        float(runs.lo[gov]), float(runs.hi[gov]),
    )
    result = picked - runs.step
    if result <= runs.step:
        raise DegenerateInterval(
            f"spacing {result:.3g} not above one sweep step {runs.step:.3g}"
        )
    return result


def one_frame_delta(
    one_frame: ColoredPointCloud,
    spec: MotionSpec,
    cam: CameraModel,
    resolution: int = DEFAULT_RESOLUTION,
    convexity: DeltaConvexity = None,
    quantile: float = DEFAULT_QUANTILE,
) -> float:
    """Partition spacing from a one-frame cloud under delta-convexity.

    Absent points are covered by inflating the worst one-frame Lipschitz
    constant with the closed-form convexity slack and trimming each span
    by two deltas, so the bound never exceeds the full cloud's exact one.
    """
    if convexity is None:
        raise ValueError("one-frame spacing requires a DeltaConvexity prior")
    runs = _sweep_runs(one_frame, spec, cam, resolution)
    if len(runs.pixel_flat) == 0:
        raise DegenerateInterval("no pixel is ever covered over the motion range")
    lip = lipschitz_constants(one_frame.points, spec, cam)
    c_delta = delta_constant(spec, cam, one_frame.points, convexity.delta)
    worst_rate = float(np.max(lip)) + c_delta

    pts = one_frame.points[runs.point_index]
    uv_lo, _ = project_points(pts, spec.axis, runs.lo, cam)
    uv_hi, _ = project_points(pts, spec.axis, runs.hi, cam)
    span = np.max(np.abs(uv_hi - uv_lo), axis=1)
    margins = span - 2.0 * convexity.delta
    _, mins, argmins = _per_pixel_min(runs.pixel_flat, margins)
    picked_margin, pick_idx = _quantile_pick(mins, quantile)
    if picked_margin <= 0:
        raise NegativeMargin(
            f"projection span minus 2*delta is {picked_margin:.3g} px at the "
            "governing pixel; delta is too large for this scene"
        )
    gov = int(argmins[pick_idx])
    _check_monotone_span(
        one_frame, spec, cam, int(runs.point_index[gov]),
        float(runs.lo[gov]), float(runs.hi[gov]),
    )
    result = picked_margin / worst_rate - runs.step
    if result <= runs.step:
        raise DegenerateInterval(
            f"spacing {result:.3g} not above one sweep step {runs.step:.3g}"
        )
    return result


def check_delta_convexity(
    full_cloud: ColoredPointCloud,
    one_frame: ColoredPointCloud,
    convexity: DeltaConvexity,
    spec: MotionSpec,
    cam: CameraModel,
    samples: int = 200,
) -> bool:
    """Sample poses and verify the delta-convexity property.

    For every full-cloud point absent from the one-frame cloud and every
    sampled pose, some one-frame point must project within ``delta`` pixels
    (max norm) at a depth no greater than the absent point's.  Returns
    False at the first counterexample.
    """
    of_keys = {p.tobytes() for p in one_frame.points}
    hidden_mask = np.array(
        [p.tobytes() not in of_keys for p in full_cloud.points], dtype=bool
    )
    if not np.any(hidden_mask):
        return True
    hidden = full_cloud.points[hidden_mask]
    poses = np.linspace(-spec.radius_b, spec.radius_b, max(int(samples), 1))
    for pose in poses:
        uv_h, d_h = project_points(hidden, spec.axis, float(pose), cam)
        uv_f, d_f = project_points(one_frame.points, spec.axis, float(pose), cam)
        if np.any(d_h <= 0) or np.any(d_f <= 0):
            return False
        tree = cKDTree(uv_f)
        neighborhoods = tree.query_ball_point(uv_h, r=convexity.delta, p=np.inf)
        for i, neigh in enumerate(neighborhoods):
            if not neigh:
                return False
            if d_f[neigh].min() > d_h[i]:
                return False
    return True


@dataclass(frozen=True)
class PartitionPlan:
    """Uniform pose partition covering the motion range."""

    spec: MotionSpec
    delta_alpha: float
    method: CertMethod
    quantile: float
    values: np.ndarray

    @property
    def count(self) -> int:
        return len(self.values)

    @property
    def spacing(self) -> float:
        if len(self.values) < 2:
            return 0.0
        return float(self.values[1] - self.values[0])

    def to_json(self) -> dict:
        return {
            "axis": self.spec.axis.value,
            "radius_b": self.spec.radius_b,
            "delta_alpha": self.delta_alpha,
            "n": self.count,
            "method": self.method.value,
            "quantile": self.quantile,
            "values_digest": hashlib.sha256(
                np.ascontiguousarray(self.values).tobytes()
            ).hexdigest(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def build_partition(
    delta_alpha: float,
    spec: MotionSpec,
    method: CertMethod = CertMethod.EXACT,
    quantile: float = DEFAULT_QUANTILE,
) -> PartitionPlan:
    """Uniform partition with spacing at most ``delta_alpha``."""
    b = spec.radius_b
    if not (0.0 < delta_alpha <= 2.0 * b) or not math.isfinite(delta_alpha):
        raise InvalidDelta(
            f"spacing must lie in (0, {2 * b:.6g}], got {delta_alpha:.6g}"
        )
    n = int(math.ceil(2.0 * b / delta_alpha)) + 1
    values = np.linspace(-b, b, n)
    return PartitionPlan(
        spec=spec,
        delta_alpha=float(delta_alpha),
        method=method,
        quantile=quantile,
        values=values,
    )
