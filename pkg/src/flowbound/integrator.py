"""Bidirectional numerical integration of polynomial vector fields.

Two steppers: classical fixed-step RK4 and adaptive Dormand-Prince 5(4)
(the default). Backward runs step with negative time increments on the
same field. Cubic Hermite interpolation between accepted steps provides
dense output for event location and mid-sample checks. A configurable
state-norm cap turns finite-time escape into an explicit error carrying
the partial trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence, TextIO, Union

import numpy as np

from .polyfield import PolyField

__all__ = [
    "IntegrationOptions",
    "Trajectory",
    "IntegrationError",
    "BlowUpError",
    "MaxStepsError",
    "StepSizeError",
    "integrate",
    "integrate_with_tangent",
]

RK4_FIXED = "rk4-fixed"
RK45_ADAPTIVE = "rk45-adaptive"

# Dormand-Prince 5(4) tableau
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
# difference between 5th- and 4th-order weights, for the error estimate
_DP_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)

_MIN_STEP_FACTOR = 0.2
_MAX_STEP_FACTOR = 5.0
_SAFETY = 0.9


class IntegrationError(RuntimeError):
    """Base class for integration failures.

    `trajectory` holds the partial trajectory up to the failure when the
    failing call records samples, else None.
    """

    def __init__(self, message: str, t: float, state: np.ndarray):
        super().__init__(message)
        self.t = t
        self.state = state
        self.trajectory: Optional["Trajectory"] = None


class BlowUpError(IntegrationError):
    """State norm exceeded the blow-up cap: finite-time escape signal."""


class MaxStepsError(IntegrationError):
    """Step budget exhausted before reaching the target time."""


class StepSizeError(IntegrationError):
    """Adaptive step size underflowed; the flow cannot be resolved further
    (typical near a finite-time singularity that outruns the norm cap)."""


@dataclass
class IntegrationOptions:
    """Stepper selection and control constants.

    `step` is the fixed step for rk4-fixed and the initial step for
    rk45-adaptive (None selects it automatically). Tolerances apply to
    the adaptive stepper only.
    """

    method: str = RK45_ADAPTIVE
    step: Optional[float] = None
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_steps: int = 10_000_000
    blow_up_norm: float = 1e12

    def __post_init__(self):
        if self.method not in (RK4_FIXED, RK45_ADAPTIVE):
            raise ValueError(f"unknown method {self.method!r}")
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be positive")
        if self.method == RK4_FIXED and self.step is None:
            self.step = 0.01
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        if not self.blow_up_norm > 0:
            raise ValueError("blow_up_norm must be positive")

    @property
    def tolerance(self) -> float:
        """Scalar summary used for downstream tolerance composition."""
        if self.method == RK4_FIXED:
            return 0.0
        return max(self.abs_tol, self.rel_tol)


class Trajectory:
    """Time-stamped state sequence from t0, forward or backward.

    `times` is strictly monotone (increasing forward, decreasing
    backward) and starts at t0. `derivs` holds the field value at each
    sample, which makes cubic Hermite interpolation local and cheap.
    """

    def __init__(self, t0: float, times: np.ndarray, states: np.ndarray,
                 derivs: np.ndarray, tol: float, variable_names=None):
        self.t0 = float(t0)
        self.times = np.asarray(times, dtype=float)
        self.states = np.asarray(states, dtype=float)
        self.derivs = np.asarray(derivs, dtype=float)
        self.tol = float(tol)
        self.variable_names = tuple(variable_names) if variable_names else None
        if self.times.size == 0 or self.times[0] != self.t0:
            raise ValueError("first sample must sit at t0")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def dimension(self) -> int:
        return self.states.shape[1]

    @property
    def samples(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.times.tolist(), self.states))

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1].copy()

    @property
    def is_backward(self) -> bool:
        return len(self.times) > 1 and self.times[-1] < self.times[0]

    def interpolate(self, t: float) -> np.ndarray:
        """Cubic Hermite dense output at time t inside the covered span."""
        ts = self.times
        if len(ts) < 2:
            if abs(t - self.t0) <= 1e-12:
                return self.states[0].copy()
            raise ValueError(f"single-sample trajectory covers only t={self.t0}")
        sign = -1.0 if self.is_backward else 1.0
        s = sign * ts
        st = sign * t
        if st < s[0] - 1e-12 or st > s[-1] + 1e-12:
            raise ValueError(f"t={t} outside trajectory span [{ts[0]}, {ts[-1]}]")
        i = int(np.searchsorted(s, st, side="right")) - 1
        i = max(0, min(i, len(ts) - 2))
        return _hermite(ts[i], self.states[i], self.derivs[i],
                        ts[i + 1], self.states[i + 1], self.derivs[i + 1], t)

    def midpoint_times(self) -> np.ndarray:
        return 0.5 * (self.times[:-1] + self.times[1:])

    def write_csv(self, target: Union[str, TextIO], variable_names=None) -> None:
        """CSV with header t,<var1>,...,<varn>; 17 significant digits."""
        names = variable_names or self.variable_names
        if names is None:
            names = [f"x{i+1}" for i in range(self.dimension)]
        close = False
        if isinstance(target, str):
            fh = open(target, "w", encoding="utf-8")
            close = True
        else:
            fh = target
        try:
            fh.write("t," + ",".join(names) + "\n")
            for t, row in zip(self.times, self.states):
                cells = [format(t, ".17g")] + [format(v, ".17g") for v in row]
                fh.write(",".join(cells) + "\n")
        finally:
            if close:
                fh.close()


def _hermite(ta, ya, fa, tb, yb, fb, t):
    """Cubic Hermite interpolant on [ta, tb] matching values and slopes."""
    h = tb - ta
    s = (t - ta) / h
    s2 = s * s
    s3 = s2 * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    return h00 * ya + (h10 * h) * fa + h01 * yb + (h11 * h) * fb


def _error_norm(err, ya, yb, abs_tol, rel_tol):
    scale = abs_tol + rel_tol * np.maximum(np.abs(ya), np.abs(yb))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(rhs, t0, y0, f0, direction, abs_tol, rel_tol):
    """Hairer-style automatic initial step selection (order 5)."""
    scale = abs_tol + rel_tol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((y0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * direction * f0
    f1 = rhs(y1)
    d2 = float(np.sqrt(np.mean(((f1 - f0) / scale) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1)


def _check_finite_norm(t, y, cap):
    if not np.all(np.isfinite(y)):
        raise BlowUpError(f"non-finite state at t={t:.6g}", t, y)
    norm = float(np.linalg.norm(y))
    if norm > cap:
        raise BlowUpError(
            f"state norm {norm:.3e} exceeded blow-up cap {cap:.3e} at t={t:.6g}",
            t, y)


def _dp54_stream(rhs, y0, t0, t1, opts) -> Iterator[tuple]:
    """Accepted Dormand-Prince 5(4) steps as (ta, ya, fa, tb, yb, fb)."""
    direction = 1.0 if t1 > t0 else -1.0
    span = abs(t1 - t0)
    t = t0
    y = np.asarray(y0, dtype=float)
    f = rhs(y)
    h = opts.step if opts.step is not None else _initial_step(
        rhs, t0, y, f, direction, opts.abs_tol, opts.rel_tol)
    h = min(h, span)
    steps = 0
    k = np.empty((7, y.size))
    while direction * (t1 - t) > 0:
        if steps >= opts.max_steps:
            raise MaxStepsError(
                f"max_steps={opts.max_steps} exhausted at t={t:.6g}", t, y)
        remaining = abs(t1 - t)
        h = min(h, remaining)
        final_step = h == remaining
        if h <= 16 * np.finfo(float).eps * max(abs(t), 1.0):
            raise StepSizeError(
                f"step size underflow (h={h:.3e}) at t={t:.6g}", t, y)
        hs = direction * h
        k[0] = f
        for i in range(1, 7):
            acc = _DP_A[i][0] * k[0]
            for j in range(1, i):
                a = _DP_A[i][j]
                if a:
                    acc = acc + a * k[j]
            k[i] = rhs(y + hs * acc)
        y_new = y + hs * (_DP_A[6][0] * k[0] + _DP_A[6][2] * k[2]
                          + _DP_A[6][3] * k[3] + _DP_A[6][4] * k[4]
                          + _DP_A[6][5] * k[5])
        err_vec = hs * (_DP_E[0] * k[0] + _DP_E[2] * k[2] + _DP_E[3] * k[3]
                        + _DP_E[4] * k[4] + _DP_E[5] * k[5] + _DP_E[6] * k[6])
        steps += 1
        if not np.all(np.isfinite(y_new)):
            h *= _MIN_STEP_FACTOR
            continue
        err = _error_norm(err_vec, y, y_new, opts.abs_tol, opts.rel_tol)
        if err <= 1.0:
            # land on t1 exactly instead of leaving a 1-ulp sliver behind
            t_new = t1 if final_step else t + hs
            _check_finite_norm(t_new, y_new, opts.blow_up_norm)
            # FSAL: stage 7 is f(t+h, y_new); copy it out of the stage
            # buffer, which the next step overwrites
            f_new = k[6].copy()
            yield t, y.copy(), f.copy(), t_new, y_new.copy(), f_new
            t, y, f = t_new, y_new, f_new
            factor = _MAX_STEP_FACTOR if err == 0.0 else min(
                _MAX_STEP_FACTOR, _SAFETY * err ** -0.2)
            h *= max(_MIN_STEP_FACTOR, factor)
        else:
            h *= max(_MIN_STEP_FACTOR, _SAFETY * err ** -0.2)


def _rk4_stream(rhs, y0, t0, t1, opts) -> Iterator[tuple]:
    """Fixed-step classical RK4 steps as (ta, ya, fa, tb, yb, fb)."""
    span = t1 - t0
    n_steps = max(1, math.ceil(abs(span) / opts.step))
    if n_steps > opts.max_steps:
        raise MaxStepsError(
            f"{n_steps} fixed steps needed, max_steps={opts.max_steps}",
            t0, np.asarray(y0, dtype=float))
    h = span / n_steps
    y = np.asarray(y0, dtype=float)
    f = rhs(y)
    for i in range(n_steps):
        t = t0 + i * h
        k1 = f
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y_new = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t_new = t1 if i == n_steps - 1 else t0 + (i + 1) * h
        _check_finite_norm(t_new, y_new, opts.blow_up_norm)
        f_new = rhs(y_new)
        yield t, y.copy(), f.copy(), t_new, y_new, f_new
        y, f = y_new, f_new


def _step_stream(rhs, y0, t0, t1, opts) -> Iterator[tuple]:
    if opts.method == RK4_FIXED:
        return _rk4_stream(rhs, y0, t0, t1, opts)
    return _dp54_stream(rhs, y0, t0, t1, opts)


def _run_recorded(rhs, x0, t0, t1, opts, tol, variable_names) -> "Trajectory":
    y0 = np.asarray(x0, dtype=float)
    times = [t0]
    states = [y0.copy()]
    derivs = [rhs(y0)]
    try:
        for _ta, _ya, _fa, tb, yb, fb in _step_stream(rhs, y0, t0, t1, opts):
            times.append(tb)
            states.append(yb)
            derivs.append(fb)
    except IntegrationError as exc:
        exc.trajectory = Trajectory(t0, np.array(times), np.vstack(states),
                                    np.vstack(derivs), tol, variable_names)
        raise
    return Trajectory(t0, np.array(times), np.vstack(states),
                      np.vstack(derivs), tol, variable_names)


def _validate_initial(field: PolyField, x0, t0: float, t1: float) -> np.ndarray:
    y0 = np.asarray(x0, dtype=float)
    if y0.shape != (field.dimension,):
        raise ValueError(
            f"x0 has shape {y0.shape}, expected ({field.dimension},)")
    if not np.all(np.isfinite(y0)):
        raise ValueError("x0 must be finite")
    if t1 == t0:
        raise ValueError("t1 must differ from t0")
    return y0


def integrate(field: PolyField, x0, t0: float, t1: float,
              opts: Optional[IntegrationOptions] = None) -> Trajectory:
    """Integrate the field from (t0, x0) to t1; t1 < t0 runs backward.

    Backward integration steps the same field with negative time
    increments. Raises BlowUpError/MaxStepsError/StepSizeError with the
    partial trajectory attached when the run cannot be completed.
    """
    opts = opts or IntegrationOptions()
    y0 = _validate_initial(field, x0, t0, t1)
    return _run_recorded(field.compiled_rhs(), y0, t0, t1, opts,
                         opts.tolerance, field.variable_names)


def integrate_with_tangent(field: PolyField, x0, Q0, t0: float, t1: float,
                           opts: Optional[IntegrationOptions] = None,
                           ) -> tuple[Trajectory, np.ndarray]:
    """Co-integrate state and tangent matrix dV/dt = J(x(t)) V.

    Returns the state trajectory and the fundamental-solution matrix
    over [t0, t1] (V(t1) for V(t0) = Q0), stepped as one augmented
    system so state and tangent share step sizes and error control.
    """
    opts = opts or IntegrationOptions()
    y0 = _validate_initial(field, x0, t0, t1)
    n = field.dimension
    Q0 = np.asarray(Q0, dtype=float)
    if Q0.shape != (n, n):
        raise ValueError(f"Q0 has shape {Q0.shape}, expected ({n}, {n})")
    if not np.all(np.isfinite(Q0)):
        raise ValueError("Q0 must be finite")
    aug = field.compiled_tangent_rhs()
    w0 = np.concatenate([y0, Q0.ravel()])
    times = [t0]
    states = [y0.copy()]
    derivs = [aug(w0)[:n]]
    w_final = w0
    try:
        for _ta, _wa, _fa, tb, wb, fb in _step_stream(aug, w0, t0, t1, opts):
            times.append(tb)
            states.append(wb[:n])
            derivs.append(fb[:n])
            w_final = wb
    except IntegrationError as exc:
        exc.trajectory = Trajectory(t0, np.array(times), np.vstack(states),
                                    np.vstack(derivs), opts.tolerance,
                                    field.variable_names)
        raise
    traj = Trajectory(t0, np.array(times), np.vstack(states),
                      np.vstack(derivs), opts.tolerance, field.variable_names)
    return traj, w_final[n:].reshape(n, n).copy()


def _final_tangent_state(field: PolyField, x0, Q0: np.ndarray, t0: float,
                         t1: float, opts: IntegrationOptions,
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Sample-free fast path of integrate_with_tangent (final values only)."""
    n = field.dimension
    aug = field.compiled_tangent_rhs()
    w = np.concatenate([np.asarray(x0, dtype=float), Q0.ravel()])
    for _ta, _wa, _fa, _tb, wb, _fb in _step_stream(aug, w, t0, t1, opts):
        w = wb
    return w[:n], w[n:].reshape(n, n)
