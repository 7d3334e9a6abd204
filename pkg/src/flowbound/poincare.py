"""Oriented planar sections and first-return maps for 3D flows.

A section is a plane with a unit normal and a crossing direction
(sign of d/dt of the signed distance at a counted crossing). Crossing
detection runs on the integrator's accepted steps: the signed distance
is linear in the state, so its cubic Hermite interpolant between step
endpoints is exact relative to the dense output, and sign changes are
located on cheap scalar sub-samples, then refined by bisection plus a
Newton polish against the vector field.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .integrator import IntegrationOptions, _hermite, _step_stream
from .polyfield import PolyField

__all__ = [
    "SectionPlane",
    "SectionPoint",
    "NonReturningOrbitError",
    "first_return",
    "first_crossing",
    "return_map_iterates",
]

DIRECTIONS = ("positive", "negative", "both")

_ON_PLANE_TOL = 1e-9
_REFINE_TOL = 1e-10
_BRACKET_WIDTH = 1e-12
# interior dense-output checkpoints per accepted step, as step fractions
_SUB_S = (0.25, 0.5, 0.75)
_SUB_BASIS = tuple(
    (2 * s**3 - 3 * s**2 + 1, s**3 - 2 * s**2 + s,
     -2 * s**3 + 3 * s**2, s**3 - s**2)
    for s in _SUB_S)


class NonReturningOrbitError(RuntimeError):
    """No section crossing occurred within the allowed integration time."""

    def __init__(self, message: str, elapsed: float, state: np.ndarray):
        super().__init__(message)
        self.elapsed = elapsed
        self.state = state


@dataclass(frozen=True, eq=False)
class SectionPlane:
    """Oriented plane: base point, unit normal, counted crossing direction.

    `direction` is "positive", "negative", or "both": the required sign
    of d/dt ⟨x(t) − point, normal⟩ at a counted crossing. The normal is
    normalized at construction.
    """

    point: np.ndarray
    normal: np.ndarray
    direction: str = "both"

    def __post_init__(self):
        point = np.asarray(self.point, dtype=float)
        normal = np.asarray(self.normal, dtype=float)
        if point.shape != (3,) or normal.shape != (3,):
            raise ValueError("plane point and normal must be 3-vectors")
        if not (np.all(np.isfinite(point)) and np.all(np.isfinite(normal))):
            raise ValueError("plane point and normal must be finite")
        length = float(np.linalg.norm(normal))
        if length == 0.0:
            raise ValueError("plane normal must be nonzero")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        object.__setattr__(self, "point", point)
        object.__setattr__(self, "normal", normal / length)

    def chart_basis(self) -> tuple[np.ndarray, np.ndarray]:
        """Deterministic orthonormal in-plane basis (e1, e2).

        e1 is the Gram-Schmidt projection of the coordinate axis least
        aligned with the normal (ties break toward the lowest index);
        e2 = normal × e1 completes a right-handed frame. The chart is a
        pure function of the plane, so coordinates are reproducible.
        """
        k = int(np.argmin(np.abs(self.normal)))
        e1 = -self.normal[k] * self.normal
        e1[k] += 1.0
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(self.normal, e1)
        return e1, e2

    def signed_distance(self, state) -> float:
        """⟨state − point, normal⟩: zero on the plane, sign by side."""
        rel = np.asarray(state, dtype=float) - self.point
        return float(np.dot(rel, self.normal))

    def to_chart(self, state) -> np.ndarray:
        """In-plane chart coordinates (u, v) of a state's projection."""
        e1, e2 = self.chart_basis()
        rel = np.asarray(state, dtype=float) - self.point
        return np.array([np.dot(rel, e1), np.dot(rel, e2)])

    def from_chart(self, coords2) -> np.ndarray:
        """3D state on the plane with the given chart coordinates."""
        u, v = (float(c) for c in coords2)
        e1, e2 = self.chart_basis()
        return self.point + u * e1 + v * e2

    def section_point(self, state, time: float) -> "SectionPoint":
        """Build a SectionPoint, enforcing the on-plane invariant."""
        state = np.asarray(state, dtype=float)
        s = self.signed_distance(state)
        if abs(s) >= _ON_PLANE_TOL:
            raise ValueError(
                f"state lies {s:.3e} off the plane (limit {_ON_PLANE_TOL})")
        return SectionPoint(self.to_chart(state), state.copy(), float(time))


@dataclass(frozen=True, eq=False)
class SectionPoint:
    """A plane crossing: chart coordinates, full state, crossing time."""

    coords2: np.ndarray
    state3: np.ndarray
    time: float

    def __post_init__(self):
        coords2 = np.asarray(self.coords2, dtype=float)
        state3 = np.asarray(self.state3, dtype=float)
        if coords2.shape != (2,) or state3.shape != (3,):
            raise ValueError("coords2 must be a 2-vector, state3 a 3-vector")
        object.__setattr__(self, "coords2", coords2)
        object.__setattr__(self, "state3", state3)
        object.__setattr__(self, "time", float(self.time))


def _require_3d(field: PolyField) -> None:
    if field.dimension != 3:
        raise ValueError(
            f"section machinery needs a 3D field, got n={field.dimension}")


def _refine_crossing(step, sa, sb, rising, rhs, normal, offset):
    """Refine a bracketed sign change of the signed distance.

    Bisection on the scalar Hermite interpolant of the signed distance
    down to a bracket width of 1e-12 in time, then Newton steps using
    the true slope s'(t) = ⟨f(x), normal⟩ until |s| < 1e-10. Returns
    (crossing time, interpolated state, residual signed distance).
    """
    ta, ya, fa, tb, yb, fb, ga, gb, dga, dgb = step
    h = tb - ta

    def g_scalar(s):
        s2 = s * s
        s3 = s2 * s
        return ((2 * s3 - 3 * s2 + 1) * ga + (-2 * s3 + 3 * s2) * gb
                + h * ((s3 - 2 * s2 + s) * dga + (s3 - s2) * dgb))

    while (sb - sa) * abs(h) > _BRACKET_WIDTH:
        sm = 0.5 * (sa + sb)
        gm = g_scalar(sm)
        if gm == 0.0:
            sa = sb = sm
            break
        if (gm < 0.0) == rising:
            sa = sm
        else:
            sb = sm
    tau = ta + 0.5 * (sa + sb) * h
    x = _hermite(ta, ya, fa, tb, yb, fb, tau)
    g = float(np.dot(x, normal)) - offset
    for _ in range(5):
        if abs(g) <= _REFINE_TOL:
            break
        slope = float(np.dot(rhs(x), normal))
        if slope == 0.0:
            break
        tau -= g / slope
        x = _hermite(ta, ya, fa, tb, yb, fb, tau)
        g = float(np.dot(x, normal)) - offset
    return tau, x, g


def _next_crossing(field, plane, state, t0, opts, max_time, refractory):
    """March the flow from (t0, state) to the next counted plane crossing."""
    if not max_time > 0:
        raise ValueError("max_time must be positive")
    rhs = field.compiled_rhs()
    normal = plane.normal
    offset = float(np.dot(plane.point, normal))
    count_up = plane.direction in ("positive", "both")
    count_down = plane.direction in ("negative", "both")
    t1 = t0 + max_time
    y0 = np.asarray(state, dtype=float)
    t_last, y_last = t0, y0
    for ta, ya, fa, tb, yb, fb in _step_stream(rhs, y0, t0, t1, opts):
        t_last, y_last = tb, yb
        ga = float(np.dot(ya, normal)) - offset
        gb = float(np.dot(yb, normal)) - offset
        dga = float(np.dot(fa, normal))
        dgb = float(np.dot(fb, normal))
        h = tb - ta
        samples = [(0.0, ga)]
        samples += [
            (s, b00 * ga + b01 * gb + h * (b10 * dga + b11 * dgb))
            for s, (b00, b10, b01, b11) in zip(_SUB_S, _SUB_BASIS)]
        samples.append((1.0, gb))
        step = (ta, ya, fa, tb, yb, fb, ga, gb, dga, dgb)
        for (sa, gi), (sb, gj) in zip(samples, samples[1:]):
            if gi < 0.0 <= gj:
                rising = True
            elif gi > 0.0 >= gj:
                rising = False
            else:
                continue
            if not (count_up if rising else count_down):
                continue
            tau, x, g = _refine_crossing(step, sa, sb, rising, rhs,
                                         normal, offset)
            if abs(tau - t0) < refractory:
                continue
            if abs(g) > _REFINE_TOL:
                raise RuntimeError(
                    f"crossing refinement stalled at |s|={abs(g):.3e} "
                    f"(t={tau:.6g})")
            return tau, x
    raise NonReturningOrbitError(
        f"no counted section crossing within {max_time} time units",
        abs(t_last - t0), y_last)


def first_return(field: PolyField, plane: SectionPlane, start: SectionPoint,
                 opts: Optional[IntegrationOptions] = None, *,
                 max_time: float = 1000.0, refractory: float = 1e-6,
                 ) -> tuple[SectionPoint, float]:
    """First return of the flow through `start` to the oriented plane.

    Integrates forward from `start` (which must lie on the plane),
    detects the first signed-distance sign change consistent with the
    plane's direction, ignoring crossings within `refractory` time of
    departure, and refines it to |signed distance| < 1e-10. Returns the
    refined section point and the elapsed return time.

    Raises NonReturningOrbitError when `max_time` passes without a
    counted crossing; integrator errors (blow-up, step underflow)
    propagate.
    """
    opts = opts or IntegrationOptions()
    _require_3d(field)
    s0 = plane.signed_distance(start.state3)
    if abs(s0) >= _ON_PLANE_TOL:
        raise ValueError(
            f"start point lies {s0:.3e} off the plane (limit {_ON_PLANE_TOL})")
    tau, x = _next_crossing(field, plane, start.state3, start.time, opts,
                            max_time, refractory)
    return plane.section_point(x, tau), tau - start.time


def first_crossing(field: PolyField, plane: SectionPlane, x0, t0: float = 0.0,
                   opts: Optional[IntegrationOptions] = None, *,
                   max_time: float = 1000.0) -> tuple[SectionPoint, float]:
    """First counted plane crossing from an arbitrary state.

    Unlike first_return, `x0` need not lie on the plane; this seeds a
    section sequence from generic initial data. Returns the crossing
    point and elapsed time.
    """
    opts = opts or IntegrationOptions()
    _require_3d(field)
    tau, x = _next_crossing(field, plane, x0, t0, opts, max_time, 0.0)
    return plane.section_point(x, tau), tau - t0


def return_map_iterates(field: PolyField, plane: SectionPlane,
                        start: SectionPoint, k: int,
                        opts: Optional[IntegrationOptions] = None, *,
                        max_time: float = 1000.0, refractory: float = 1e-6,
                        ) -> list[SectionPoint]:
    """k successive first returns from `start` (k = 0 gives []).

    Each iterate restarts exactly from the previous refined section
    point. Errors propagate with the index of the failing iterate
    attached as `iterate_index`.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    points: list[SectionPoint] = []
    current = start
    for i in range(k):
        try:
            current, _rt = first_return(field, plane, current, opts,
                                        max_time=max_time,
                                        refractory=refractory)
        except RuntimeError as exc:
            exc.iterate_index = i
            raise
        points.append(current)
    return points
