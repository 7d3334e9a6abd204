"""Periodic-orbit detection and Floquet classification for 3D flows.

Pipeline: scan return-map iterates for close recurrences, refine each
recurrence seed by Newton shooting on the k-th return map in chart
coordinates, then classify the refined orbit by the eigenvalues of its
monodromy matrix (the tangent flow over one period). Determinants of
long-time tangent flows are evaluated as products over short segments,
which keeps multipliers many orders of magnitude apart from drowning
each other in roundoff.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dataclass_field
from typing import Optional

import numpy as np

from .integrator import (
    IntegrationError,
    IntegrationOptions,
    _final_tangent_state,
)
from .poincare import (
    NonReturningOrbitError,
    SectionPlane,
    SectionPoint,
    first_return,
    return_map_iterates,
)
from .polyfield import PolyField

__all__ = [
    "RecurrenceSeed",
    "PeriodicOrbit",
    "ShootOptions",
    "NewtonConvergenceError",
    "scan_close_recurrences",
    "newton_shoot",
    "monodromy",
    "flow_determinant",
    "census",
]

_LOG = logging.getLogger(__name__)

STABLE = "stable"
UNSTABLE = "unstable"
NEUTRAL_DEGENERATE = "neutral-degenerate"

_RESIDUAL_LIMIT = 1e-8
_DEDUP_TOL = 1e-5
_INSTABILITY_MARGIN = 1e-6


class NewtonConvergenceError(RuntimeError):
    """Newton shooting failed: no convergence, singular Jacobian away
    from an orbit, or the iteration left the seed's basin."""


@dataclass(frozen=True, eq=False)
class RecurrenceSeed:
    """A near-recurrence of the return map: candidate periodic point.

    `point` is the section point at iterate i, `k` the recurrence lag,
    `distance` the chart distance |point(i+k) − point(i)|, and
    `period_estimate` the summed return time of the k legs, useful as a
    cross-check against the refined period.
    """

    point: SectionPoint
    k: int
    distance: float
    period_estimate: float

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if not (math.isfinite(self.distance) and self.distance >= 0):
            raise ValueError("distance must be finite and nonnegative")


@dataclass(frozen=True, eq=False)
class PeriodicOrbit:
    """A refined periodic orbit anchored to a section fixed point.

    `k` is the number of section returns per period, `cycle_points` the
    k-cycle on the section starting at the fixed point, `residual` the
    chart norm |R^k(p) − p| at acceptance. Multipliers are sorted by
    modulus, descending; one of them is always ≈ 1 (the flow direction).
    """

    section_fixed_point: SectionPoint
    k: int
    period: float
    floquet_multipliers: tuple[complex, ...]
    stability: str
    residual: float
    cycle_points: tuple[SectionPoint, ...] = ()

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if not self.period > 0:
            raise ValueError("period must be positive")
        if self.residual >= _RESIDUAL_LIMIT:
            raise ValueError(
                f"residual {self.residual:.3e} exceeds {_RESIDUAL_LIMIT}")
        if self.stability not in (STABLE, UNSTABLE, NEUTRAL_DEGENERATE):
            raise ValueError(f"unknown stability {self.stability!r}")


def _default_shoot_integration() -> IntegrationOptions:
    # tighter than the general default: Newton accepts at |G| < 1e-10,
    # so return-map noise must sit well below that
    return IntegrationOptions(abs_tol=1e-12, rel_tol=1e-12)


@dataclass
class ShootOptions:
    """Controls for Newton shooting and monodromy evaluation."""

    max_iter: int = 50
    fd_step: float = 1e-7
    converge_tol: float = 1e-10
    trust_radius: float = 0.5
    max_halvings: int = 8
    singular_tol: float = 1e-12
    max_return_time: float = 50.0
    integration: IntegrationOptions = dataclass_field(
        default_factory=_default_shoot_integration)


def scan_close_recurrences(field: PolyField, plane: SectionPlane,
                           start: SectionPoint, n_iterates: int, k_max: int,
                           threshold: float,
                           opts: Optional[IntegrationOptions] = None, *,
                           max_time: float = 1000.0) -> list[RecurrenceSeed]:
    """Find near-recurrences |point(i+k) − point(i)| < threshold.

    Iterates the return map n_iterates times from `start` and emits one
    seed per (rounded chart cell, k), keeping the smallest distance per
    cell so each neighborhood is represented once. Seeds come back
    sorted by (k, distance). A zero threshold yields no seeds.
    """
    if not (n_iterates >= k_max >= 1):
        raise ValueError("need n_iterates >= k_max >= 1")
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    points = [start]
    points += return_map_iterates(field, plane, start, n_iterates, opts,
                                  max_time=max_time)
    coords = np.array([p.coords2 for p in points])
    best: dict[tuple[int, int, int], tuple[float, int]] = {}
    for k in range(1, k_max + 1):
        gaps = coords[k:] - coords[:-k]
        dists = np.hypot(gaps[:, 0], gaps[:, 1])
        for i in np.flatnonzero(dists < threshold):
            cell = (k, round(coords[i, 0] / threshold),
                    round(coords[i, 1] / threshold))
            d = float(dists[i])
            if cell not in best or d < best[cell][0]:
                best[cell] = (d, int(i))
    seeds = [
        RecurrenceSeed(points[i], k, d,
                       points[i + k].time - points[i].time)
        for (k, _cu, _cv), (d, i) in best.items()]
    seeds.sort(key=lambda s: (s.k, s.distance))
    return seeds


def _iterate_chart(field, plane, u, k, opts) -> list[SectionPoint]:
    """k return-map legs from chart point u; times start at 0."""
    state = plane.from_chart(u)
    current = plane.section_point(state, 0.0)
    cycle = []
    for _ in range(k):
        current, _rt = first_return(field, plane, current, opts.integration,
                                    max_time=opts.max_return_time)
        cycle.append(current)
    return cycle


def _classify(multipliers) -> str:
    """Stability from multipliers, ignoring the flow-direction unit one.

    Unstable when any modulus exceeds 1 + 1e-6. Otherwise drop the
    multiplier closest to 1 (the flow direction) and call the orbit
    stable when everything left has modulus below 1 − 1e-6; any further
    near-unit multiplier marks a neutral or degenerate family.
    """
    mods = [abs(m) for m in multipliers]
    if max(mods) > 1.0 + _INSTABILITY_MARGIN:
        return UNSTABLE
    rest = list(mods)
    del rest[int(np.argmin([abs(m - 1.0) for m in multipliers]))]
    if all(m < 1.0 - _INSTABILITY_MARGIN for m in rest):
        return STABLE
    return NEUTRAL_DEGENERATE


def _sorted_multipliers(eigvals) -> tuple[complex, ...]:
    order = sorted(range(len(eigvals)),
                   key=lambda i: (-abs(eigvals[i]), eigvals[i].real,
                                  eigvals[i].imag))
    return tuple(complex(eigvals[i]) for i in order)


def monodromy(field: PolyField, orbit_start, T: float,
              opts: Optional[IntegrationOptions] = None,
              ) -> tuple[np.ndarray, np.ndarray]:
    """Tangent flow over one period and its eigenvalues.

    Integrates dV/dt = J(x(t))·V with V(0) = I along the orbit through
    `orbit_start` for time T and returns (matrix, eigenvalues); the
    eigenvalues are the Floquet multipliers, one of which is ≈ 1 along
    the flow direction for any true periodic orbit.
    """
    if not T > 0:
        raise ValueError("period must be positive")
    opts = opts or _default_shoot_integration()
    x0 = np.asarray(orbit_start, dtype=float)
    _x1, M = _final_tangent_state(field, x0, np.eye(field.dimension),
                                  0.0, float(T), opts)
    return M, np.linalg.eigvals(M)


def flow_determinant(field: PolyField, x0, T: float,
                     opts: Optional[IntegrationOptions] = None,
                     segment_max: float = 0.25) -> float:
    """Determinant of the tangent flow over [0, T], segment by segment.

    det over the full span is the product of dets over subintervals of
    length at most `segment_max`. Evaluating det on short, well-
    conditioned segments and multiplying keeps the result accurate even
    when the full-span matrix has singular values spread over many more
    orders of magnitude than double precision resolves.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if not segment_max > 0:
        raise ValueError("segment_max must be positive")
    opts = opts or _default_shoot_integration()
    n_seg = max(1, math.ceil(T / segment_max))
    bounds = np.linspace(0.0, float(T), n_seg + 1)
    x = np.asarray(x0, dtype=float)
    eye = np.eye(field.dimension)
    det = 1.0
    for ta, tb in zip(bounds[:-1], bounds[1:]):
        x, M = _final_tangent_state(field, x, eye, float(ta), float(tb), opts)
        det *= float(np.linalg.det(M))
    return det


def _prime_shift(cycle_coords: np.ndarray, k: int) -> Optional[int]:
    """Smallest divisor d < k with the k-cycle invariant under shift d."""
    for d in range(1, k):
        if k % d:
            continue
        if np.max(np.abs(np.roll(cycle_coords, -d, axis=0)
                         - cycle_coords)) < _DEDUP_TOL:
            return d
    return None


def newton_shoot(field: PolyField, plane: SectionPlane, seed: RecurrenceSeed,
                 opts: Optional[ShootOptions] = None) -> PeriodicOrbit:
    """Refine a recurrence seed into a periodic orbit by Newton shooting.

    Solves G(p) = R^k(p) − p = 0 in the 2D chart with a central finite-
    difference Jacobian, a trust radius on steps, and halving on non-
    decreasing residual. A singular Jacobian at an already-tiny residual
    marks a non-isolated family and is accepted as neutral-degenerate;
    anything else that blocks progress raises NewtonConvergenceError.
    Converged orbits are reduced to their prime period (a k-cycle that
    is d-shift invariant re-shoots at k = d) and classified via their
    Floquet multipliers.
    """
    opts = opts or ShootOptions()
    return _shoot_chart(field, plane, np.asarray(seed.point.coords2, float),
                        seed.k, opts)


def _shoot_chart(field, plane, u0, k, opts) -> PeriodicOrbit:
    def evaluate(u):
        cycle = _iterate_chart(field, plane, u, k, opts)
        return cycle[-1].coords2 - u, cycle

    u = np.asarray(u0, dtype=float)
    try:
        G, cycle = evaluate(u)
    except (IntegrationError, NonReturningOrbitError, ValueError) as exc:
        raise NewtonConvergenceError(
            f"return map undefined at seed (k={k}): {exc}") from exc
    degenerate = False
    for _ in range(opts.max_iter):
        if float(np.linalg.norm(G)) < opts.converge_tol:
            break
        try:
            J = np.empty((2, 2))
            for d in range(2):
                probe = np.zeros(2)
                probe[d] = opts.fd_step
                Gp, _ = evaluate(u + probe)
                Gm, _ = evaluate(u - probe)
                J[:, d] = (Gp - Gm) / (2 * opts.fd_step)
            if abs(float(np.linalg.det(J))) < opts.singular_tol:
                if float(np.linalg.norm(G)) < _RESIDUAL_LIMIT:
                    degenerate = True
                    break
                raise NewtonConvergenceError(
                    f"singular shooting Jacobian at residual "
                    f"{float(np.linalg.norm(G)):.3e} (k={k})")
            du = np.linalg.solve(J, -G)
            step_norm = float(np.linalg.norm(du))
            if step_norm > opts.trust_radius:
                du *= opts.trust_radius / step_norm
            for _halving in range(opts.max_halvings + 1):
                G_new, cycle_new = evaluate(u + du)
                if (float(np.linalg.norm(G_new)) < float(np.linalg.norm(G))
                        or float(np.linalg.norm(G_new)) < opts.converge_tol):
                    u, G, cycle = u + du, G_new, cycle_new
                    break
                du *= 0.5
            else:
                raise NewtonConvergenceError(
                    f"Newton stalled at residual "
                    f"{float(np.linalg.norm(G)):.3e} after step halving "
                    f"(k={k}): iteration left the seed's basin")
        except (IntegrationError, NonReturningOrbitError, ValueError,
                np.linalg.LinAlgError) as exc:
            raise NewtonConvergenceError(
                f"return map failed during shooting (k={k}): {exc}") from exc
    else:
        raise NewtonConvergenceError(
            f"no convergence within max_iter={opts.max_iter} (k={k}), "
            f"residual {float(np.linalg.norm(G)):.3e}")

    residual = float(np.linalg.norm(G))
    coords = np.vstack([u] + [p.coords2 for p in cycle[:-1]])
    d = _prime_shift(coords, k)
    if d is not None:
        return _shoot_chart(field, plane, u, d, opts)

    fixed_point = plane.section_point(plane.from_chart(u), 0.0)
    period = cycle[-1].time
    _M, eigvals = monodromy(field, fixed_point.state3, period,
                            opts.integration)
    multipliers = _sorted_multipliers(eigvals)
    stability = NEUTRAL_DEGENERATE if degenerate else _classify(multipliers)
    return PeriodicOrbit(
        section_fixed_point=fixed_point,
        k=k,
        period=period,
        floquet_multipliers=multipliers,
        stability=stability,
        residual=residual,
        cycle_points=(fixed_point, *cycle[:-1]),
    )


def _same_orbit(a: PeriodicOrbit, b: PeriodicOrbit) -> bool:
    if a.k != b.k:
        return False
    ua = a.section_fixed_point.coords2
    return any(float(np.linalg.norm(ua - p.coords2)) < _DEDUP_TOL
               for p in b.cycle_points)


def census(field: PolyField, plane: SectionPlane, start: SectionPoint,
           n_iterates: int, k_max: int, threshold: float = 0.1,
           opts: Optional[ShootOptions] = None,
           scan_opts: Optional[IntegrationOptions] = None, *,
           max_time: float = 1000.0) -> list[PeriodicOrbit]:
    """Scan, shoot every seed, deduplicate, and sort orbits by period.

    Two orbits are the same when they share k and their section fixed
    points coincide within 1e-5 up to a cyclic shift of the k-cycle.
    Per-seed failures are logged and skipped, never fatal. Seeds are
    processed in sorted order so identical inputs give identical output.
    An n_iterates of 0 returns an empty census.
    """
    if n_iterates == 0:
        return []
    opts = opts or ShootOptions()
    seeds = scan_close_recurrences(field, plane, start, n_iterates, k_max,
                                   threshold, scan_opts, max_time=max_time)
    orbits: list[PeriodicOrbit] = []
    for seed in seeds:
        try:
            orbit = newton_shoot(field, plane, seed, opts)
        except NewtonConvergenceError as exc:
            _LOG.info("seed k=%d distance=%.3g did not refine: %s",
                      seed.k, seed.distance, exc)
            continue
        if not any(_same_orbit(orbit, kept) for kept in orbits):
            orbits.append(orbit)
    orbits.sort(key=lambda o: (o.period, o.k,
                               float(o.section_fixed_point.coords2[0]),
                               float(o.section_fixed_point.coords2[1])))
    return orbits
