"""Characteristics solver for the limiting singular Hamilton-Jacobi equation.

Each path integrates the explicit Hamiltonian system

    dX/dt = P - (m + 1/2)
    dP/dt = Z/X^2 - P/X
    dZ/dt = P^2/2 - Z/X + m(1-m)/2

from X(0) = x0, P(0) = F0'(x0), Z(0) = F0(x0).  For valid concave initial
data with 0 <= F0' <= m the paths drift left at speed between 1/2 and m+1/2,
P never decreases, and paths never cross before the blow-up horizon; all of
these are enforced as runtime checks, not assumed.  The solution is read back
as F(x, t) = Z(X^{-1}(x, t), t) through monotone interpolation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.interpolate import PchipInterpolator

from .bernstein import BernsteinField
from .core import Distribution
from .errors import FanCoverageError, FanCrossingError
from .verification import BoundReport

#: Paths are terminated (not extrapolated) once X falls to this floor.
X_FLOOR = 1e-6

#: Minimum separation between adjacent paths for the non-crossing check.
CROSSING_SEPARATION = 1e-12


class CharacteristicState(NamedTuple):
    """One point on a characteristic: position, slope along the path, value."""

    x: float
    p: float
    z: float


def char_rhs(state, m: float):
    """Right-hand side of the Hamiltonian system; raises on the singular boundary."""
    x, p, z = state
    if np.any(np.asarray(x) <= 0):
        raise ValueError("characteristic reached the singular boundary x <= 0")
    return (p - (m + 0.5), z / (x * x) - p / x, 0.5 * p * p - z / x + 0.5 * m * (1.0 - m))


def monodisperse_transform(m: float, size: float = 1.0) -> Callable:
    """Initial-data handle (F0, F0') for a point mass m at the given size."""
    number = m / size

    def f0(x):
        x = np.asarray(x, dtype=float)
        return number * (-np.expm1(-size * x)), m * np.exp(-size * x)

    return f0


def exponential_transform(m: float, lam: float = 1.0) -> Callable:
    """Initial-data handle for the number density proportional to s*exp(-lam*s)."""

    def f0(x):
        x = np.asarray(x, dtype=float)
        value = 0.5 * m * lam * (1.0 - lam ** 2 / (lam + x) ** 2)
        slope = m * lam ** 3 / (lam + x) ** 3
        return value, slope

    return f0


def transform_of(dist: Distribution) -> Callable:
    """Initial-data handle built from the exact transform of a distribution."""
    s = dist.grid.sizes
    N = dist.counts
    sN = s * N

    def f0(x):
        phase = np.outer(np.atleast_1d(np.asarray(x, dtype=float)), s)
        value = (-np.expm1(-phase)) @ N
        slope = np.exp(-phase) @ sN
        if np.isscalar(x) or np.ndim(x) == 0:
            return float(value[0]), float(slope[0])
        return value, slope

    return f0


def scale_initial(f0: Callable, factor: float) -> Callable:
    """Pointwise scaling of an initial-data handle; keeps slopes consistent."""

    def scaled(x):
        value, slope = f0(x)
        return factor * value, factor * slope

    return scaled


@dataclass(frozen=True)
class CharacteristicFan:
    """Ordered family of characteristic paths indexed by starting point.

    ``x``, ``p``, ``z`` have shape (times, paths); ``alive`` marks states prior
    to termination at the X_FLOOR boundary.  Terminated paths keep their last
    valid state frozen and are excluded from reconstruction and checks.
    """

    starts: np.ndarray
    times: np.ndarray
    x: np.ndarray
    p: np.ndarray
    z: np.ndarray
    alive: np.ndarray
    m: float

    @property
    def n_paths(self) -> int:
        return self.starts.size

    @property
    def terminated(self) -> np.ndarray:
        """Per-path flag: True when the path hit the X floor before the end."""
        return ~self.alive[-1]

    def time_index(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(
                f"t={t} is not a recorded fan time (nearest is {self.times[i]:.6g})"
            )
        return i

    def coverage(self, t: float) -> tuple:
        """(min X, max X) over surviving paths at recorded time t."""
        i = self.time_index(t)
        live = self.alive[i]
        if not np.any(live):
            raise FanCoverageError(f"no surviving paths at t={t}")
        xs = self.x[i, live]
        return float(xs[0]), float(xs[-1])


def default_starts(m: float, t_end: float, x_lo: float, x_hi: float, n_paths: int) -> np.ndarray:
    """Geometric placement of starting points that covers [x_lo, x_hi] at all
    times up to t_end.

    Paths drift left at speed in [1/2, m+1/2], so right coverage needs starts
    up to x_hi + (m+1/2)t and survival needs starts above (m+1/2)t.
    """
    if n_paths < 2:
        raise ValueError("need at least two starting points")
    lo = max(x_lo, (m + 0.5) * t_end * (1.0 + 1e-9) + 10.0 * X_FLOOR)
    hi = x_hi + (m + 0.5) * t_end + 1e-9
    if not lo < hi:
        raise ValueError(f"empty start range [{lo}, {hi}]")
    return np.geomspace(lo, hi, n_paths)


def integrate_fan(
    f0_eval: Callable,
    starts: np.ndarray,
    t_end: float,
    dt: float,
    m: float,
    record_every: int = 1,
) -> CharacteristicFan:
    """Integrate one path per start with the classical 4th-order scheme.

    ``f0_eval(x)`` must return (F0(x), F0'(x)); slopes outside [0, m] are
    rejected as invalid initial data.  Paths that would cross the X floor are
    frozen and marked, not extrapolated.  Non-crossing of the recorded fan is
    verified before returning.
    """
    starts = np.asarray(starts, dtype=float)
    if starts.ndim != 1 or starts.size < 1:
        raise ValueError("starts must be a one-dimensional array")
    if np.any(starts <= 0) or np.any(np.diff(starts) <= 0):
        raise ValueError("starts must be positive and strictly increasing")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")

    z0, p0 = f0_eval(starts)
    z0 = np.asarray(z0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    slack = 1e-9 * max(1.0, m)
    if np.any(p0 < -slack) or np.any(p0 > m + slack):
        raise ValueError("initial slope outside [0, m]: not valid transform data")

    if t_end > 0 and dt > 0:
        n_steps = max(1, int(round(t_end / dt)))
        dt = t_end / n_steps
    else:
        n_steps, dt = 0, 0.0

    x, p, z = starts.copy(), p0.copy(), z0.copy()
    alive = np.ones(starts.size, dtype=bool)

    rec_times = [0.0]
    rec = [(x.copy(), p.copy(), z.copy(), alive.copy())]
    for k in range(1, n_steps + 1):
        # freeze paths that could touch the floor during this step (drift <= m+1/2)
        dying = alive & (x - (m + 0.5) * dt <= X_FLOOR)
        alive = alive & ~dying
        if np.any(alive):
            idx = np.flatnonzero(alive)
            xs, ps, zs = x[idx], p[idx], z[idx]
            k1 = char_rhs((xs, ps, zs), m)
            k2 = char_rhs((xs + 0.5 * dt * k1[0], ps + 0.5 * dt * k1[1], zs + 0.5 * dt * k1[2]), m)
            k3 = char_rhs((xs + 0.5 * dt * k2[0], ps + 0.5 * dt * k2[1], zs + 0.5 * dt * k2[2]), m)
            k4 = char_rhs((xs + dt * k3[0], ps + dt * k3[1], zs + dt * k3[2]), m)
            x[idx] = xs + (dt / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
            p[idx] = ps + (dt / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
            z[idx] = zs + (dt / 6.0) * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        if k % record_every == 0 or k == n_steps:
            rec_times.append(k * dt)
            rec.append((x.copy(), p.copy(), z.copy(), alive.copy()))

    fan = CharacteristicFan(
        starts=starts,
        times=np.asarray(rec_times),
        x=np.stack([r[0] for r in rec]),
        p=np.stack([r[1] for r in rec]),
        z=np.stack([r[2] for r in rec]),
        alive=np.stack([r[3] for r in rec]),
        m=m,
    )
    _assert_no_crossing(fan)
    return fan


def _assert_no_crossing(fan: CharacteristicFan):
    for i, t in enumerate(fan.times):
        live = fan.alive[i]
        if np.count_nonzero(live) < 2:
            continue
        gaps = np.diff(fan.x[i, live])
        if gaps.min() <= CROSSING_SEPARATION:
            j = int(np.argmin(gaps))
            raise FanCrossingError(
                f"paths crossed at t={t:.6g} (gap {gaps.min():.3e} near start index {j})"
            )


def reconstruct(fan: CharacteristicFan, x_query, t: float):
    """F(x, t) = Z(X^{-1}(x, t), t) by monotone piecewise-cubic interpolation.

    Raises FanCoverageError when the query leaves the surviving paths' range;
    the error carries the covered interval so the caller can widen the starts.
    """
    return _interp_fan(fan, x_query, t, fan.z)


def reconstruct_slope(fan: CharacteristicFan, x_query, t: float):
    """dF/dx read back from P along the paths, same interpolation rules."""
    return _interp_fan(fan, x_query, t, fan.p)


def _interp_fan(fan, x_query, t, values):
    i = fan.time_index(t)
    live = fan.alive[i]
    if np.count_nonzero(live) < 2:
        raise FanCoverageError(f"fewer than two surviving paths at t={t}")
    xs = fan.x[i, live]
    vs = values[i, live]
    scalar = np.isscalar(x_query) or np.ndim(x_query) == 0
    xq = np.atleast_1d(np.asarray(x_query, dtype=float))
    pad = 1e-12 * max(1.0, float(xs[-1]))
    if xq.min() < xs[0] - pad or xq.max() > xs[-1] + pad:
        raise FanCoverageError(
            f"query range [{xq.min():.6g}, {xq.max():.6g}] outside fan coverage "
            f"[{xs[0]:.6g}, {xs[-1]:.6g}] at t={t}; widen the starts",
            covered=(float(xs[0]), float(xs[-1])),
            required=(float(xq.min()), float(xq.max())),
        )
    out = PchipInterpolator(xs, vs)(np.clip(xq, xs[0], xs[-1]))
    return float(out[0]) if scalar else out


def fan_to_field(fan: CharacteristicFan, x_grid: np.ndarray, times=None) -> BernsteinField:
    """Reconstructed field on a fixed x-grid; Fxx comes from the derivative of
    the monotone interpolant of (X, P)."""
    times = fan.times if times is None else np.asarray(times, dtype=float)
    x = np.asarray(x_grid, dtype=float)
    F = np.empty((times.size, x.size))
    Fx = np.empty_like(F)
    Fxx = np.empty_like(F)
    for r, t in enumerate(times):
        i = fan.time_index(t)
        live = fan.alive[i]
        F[r] = reconstruct(fan, x, t)
        interp_p = PchipInterpolator(fan.x[i, live], fan.p[i, live])
        Fx[r] = interp_p(x)
        Fxx[r] = interp_p.derivative()(x)
    return BernsteinField(x=x, times=times, F=F, Fx=Fx, Fxx=Fxx, m=fan.m)


@dataclass(frozen=True)
class FanReport:
    """Bundle of the per-path and cross-path invariant checks."""

    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> tuple:
        return tuple(c.name for c in self.checks if not c.passed)

    def __str__(self):
        return "\n".join(str(c) for c in self.checks)


def monotone_derivative_checks(fan: CharacteristicFan, t_star: float | None = None) -> FanReport:
    """Runtime verification of the structure valid fans must carry.

    Per path: P stays in [0, m] (so dX stays in [-(m+1/2), -1/2]) and P never
    decreases.  Across paths: X stays strictly ordered, difference quotients of
    (X, Z) stay in [0, m], and, when the blow-up horizon is supplied, second
    difference quotients respect the curvature floor -1/(t_star - t_end) and
    exp(t/(t_star - t_end)) * dX stays nondecreasing along each adjacent gap.
    """
    m = fan.m
    checks = []
    fp_tol = 1e-12 * max(1.0, m)

    live_any = fan.alive
    p_vals = fan.p[live_any] if np.any(live_any) else np.array([0.0])
    p_low = float(p_vals.min())
    p_high = float((m - p_vals).min())
    checks.append(BoundReport("p_within_[0,m]", min(p_low, p_high), fp_tol))
    # dX = P - (m + 1/2): same margins, reported in drift form
    checks.append(BoundReport("dx_within_band", min(p_low, p_high), fp_tol))

    dp_worst, dp_loc = np.inf, ()
    rhs_worst = np.inf
    for jp in range(fan.n_paths):
        ok = fan.alive[:, jp]
        if np.count_nonzero(ok) >= 2:
            dp = np.diff(fan.p[ok, jp])
            i = int(np.argmin(dp))
            if dp[i] < dp_worst:
                dp_worst, dp_loc = float(dp[i]), (float(fan.times[ok][i]), jp)
        if np.any(ok):
            xs, ps, zs = fan.x[ok, jp], fan.p[ok, jp], fan.z[ok, jp]
            rhs_worst = min(rhs_worst, float(np.min((zs / xs - ps) / xs)))
    checks.append(BoundReport("p_nondecreasing", dp_worst if np.isfinite(dp_worst) else 0.0, 1e-10, dp_loc))
    checks.append(BoundReport("dp_nonnegative", rhs_worst if np.isfinite(rhs_worst) else 0.0, 1e-10))

    cross_worst, cross_loc = np.inf, ()
    slope_worst, slope_loc = np.inf, ()
    curv_worst, curv_loc = np.inf, ()
    for i, t in enumerate(fan.times):
        live = fan.alive[i]
        if np.count_nonzero(live) < 2:
            continue
        xs = fan.x[i, live]
        zs = fan.z[i, live]
        gaps = np.diff(xs)
        g = int(np.argmin(gaps))
        if gaps[g] - CROSSING_SEPARATION < cross_worst:
            cross_worst, cross_loc = float(gaps[g] - CROSSING_SEPARATION), (float(t), g)
        quot = np.diff(zs) / gaps
        margin = min(float(quot.min()), float((m - quot).min()))
        if margin < slope_worst:
            slope_worst, slope_loc = margin, (float(t),)
        if t_star is not None and quot.size >= 2:
            second = 2.0 * np.diff(quot) / (xs[2:] - xs[:-2])
            floor = -1.0 / (t_star - fan.times[-1])
            margin2 = min(float((second - floor).min()), float((-second).min()))
            if margin2 < curv_worst:
                curv_worst, curv_loc = margin2, (float(t),)
    checks.append(BoundReport("non_crossing", cross_worst if np.isfinite(cross_worst) else 0.0, 0.0, cross_loc))
    checks.append(BoundReport("slope_quotients_in_[0,m]", slope_worst if np.isfinite(slope_worst) else 0.0, 1e-8 * max(1.0, m), slope_loc))
    if t_star is not None:
        curv_scale = 1.0 / (t_star - fan.times[-1]) if fan.times[-1] < t_star else 1.0
        checks.append(
            BoundReport(
                "curvature_within_envelope",
                curv_worst if np.isfinite(curv_worst) else 0.0,
                1e-3 * curv_scale + 1e-10,
                curv_loc,
            )
        )
        checks.append(_spread_factor_check(fan, t_star))
    return FanReport(checks=tuple(checks))


def _spread_factor_check(fan: CharacteristicFan, t_star: float) -> BoundReport:
    """exp(t/(t_star - t_end)) * (adjacent X gap) must be nondecreasing in t."""
    tau = t_star - fan.times[-1]
    if tau <= 0:
        return BoundReport("x_spread_factor_nondecreasing", -np.inf, 0.0, ("t_end >= t_star",))
    worst, loc = np.inf, ()
    factor = np.exp(fan.times / tau)
    for jp in range(fan.n_paths - 1):
        ok = fan.alive[:, jp] & fan.alive[:, jp + 1]
        if np.count_nonzero(ok) < 2:
            continue
        spread = factor[ok] * (fan.x[ok, jp + 1] - fan.x[ok, jp])
        rel = np.diff(spread) / np.maximum(spread[:-1], np.finfo(float).tiny)
        i = int(np.argmin(rel))
        if rel[i] < worst:
            worst, loc = float(rel[i]), (float(fan.times[ok][i]), jp)
    return BoundReport(
        "x_spread_factor_nondecreasing", worst if np.isfinite(worst) else 0.0, 1e-8, loc
    )


def ordering_check(
    f0_low: Callable,
    f0_high: Callable,
    t: float,
    m: float,
    n_paths: int = 800,
    dt: float = 1e-3,
    x_window: tuple = None,
    tol: float = 1e-6,
) -> bool:
    """True iff the reconstructed solutions stay ordered, F_low <= F_high + tol,
    on the common covered range at time t.

    Both data sets are solved with the same mass parameter m.  The pointwise
    ordering of the initial data is the caller's responsibility; swapped
    arguments simply return False.
    """
    if x_window is None:
        x_window = (max(0.2, (m + 0.5) * t * 1.05), 6.0)
    starts = default_starts(m, t, x_window[0], x_window[1], n_paths)
    fan_low = integrate_fan(f0_low, starts, t, dt, m)
    fan_high = integrate_fan(f0_high, starts, t, dt, m)
    lo = max(fan_low.coverage(t)[0], fan_high.coverage(t)[0], x_window[0])
    hi = min(fan_low.coverage(t)[1], fan_high.coverage(t)[1], x_window[1])
    if not lo < hi:
        raise FanCoverageError(f"no common coverage at t={t}")
    xs = np.linspace(lo, hi, 200)
    low_vals = reconstruct(fan_low, xs, t)
    high_vals = reconstruct(fan_high, xs, t)
    return bool(np.all(low_vals <= high_vals + tol))
