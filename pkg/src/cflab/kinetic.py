"""Deterministic conservative solver for the truncated coagulation-fragmentation
system on a uniform size grid.

Coagulation is the discrete Smoluchowski double sum with the multiplicative
kernel; pairs whose combined bin index exceeds the truncation cap are
suppressed outright (not redirected), so the discrete system conserves mass
exactly instead of leaking it.  Fragmentation is binary on the integer grid:
a parent in bin j splits into (k, j-k) with the Riemann weight ds carried by
the split-point sum, and mass conservation is exact because s_k + s_{j-k} = s_j.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import Distribution, KernelSpec, MomentSeries, ScenarioParams, SizeGrid
from .errors import SolverAbort

#: Counts more negative than NEGATIVE_COUNT_RTOL * max(N) abort the step;
#: anything between that and zero is clipped as roundoff.
NEGATIVE_COUNT_RTOL = 1e-12

#: Relative mass drift above which a trajectory is flagged.
MASS_DRIFT_TOL = 1e-6

#: Relative top-bin occupancy above which truncation is considered active.
TOP_BIN_OCCUPANCY_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping parameters for one run."""

    dt: float
    t_end: float
    output_every: int
    spec: KernelSpec
    scenario: ScenarioParams

    def __post_init__(self):
        if not self.dt >= 0:
            raise ValueError(f"dt must be nonnegative, got {self.dt}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be nonnegative, got {self.t_end}")
        if self.output_every < 1:
            raise ValueError(f"output stride must be >= 1, got {self.output_every}")


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered snapshots of one deterministic run plus moment bookkeeping."""

    snapshots: tuple  # of (t, Distribution)
    moments: MomentSeries
    spec: KernelSpec
    metadata: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.moments.times

    @property
    def distributions(self) -> tuple:
        return tuple(d for _, d in self.snapshots)

    @property
    def grid(self) -> SizeGrid:
        return self.snapshots[0][1].grid


def stability_limit(grid: SizeGrid, spec: KernelSpec, m1: float) -> float:
    """Largest dt the explicit integrator should use.

    Bounds the fastest per-bin loss rate: coagulation empties bin k at rate at
    most s_k*m1, fragmentation at about s_k*(1 + eps*s_k)/2.
    """
    s = grid.sizes
    rate = s * m1 + 0.5 * s * (1.0 + spec.frag_eps * s)
    return 0.1 / float(rate.max())


def coagulation_rhs(dist: Distribution, spec: KernelSpec) -> np.ndarray:
    """Per-bin rate of change from truncated multiplicative coagulation.

    rate_k = 1/2 sum_{i+j=k} s_i s_j N_i N_j  -  N_k s_k sum_{j: k+j<=cap} s_j N_j
    """
    return _coag_rates(dist.counts, dist.grid, spec)


def fragmentation_rhs(dist: Distribution, spec: KernelSpec) -> np.ndarray:
    """Per-bin rate of change from discrete binary fragmentation.

    A parent in bin j >= 2 is destroyed at rate (ds/2) * sum_{k<j} b(s_k, s_{j-k})
    and each split event puts one fragment in bin k and one in bin j-k.
    """
    return _frag_rates(dist.counts, dist.grid, spec)


def combined_rhs(dist: Distribution, spec: KernelSpec) -> np.ndarray:
    return _rhs(dist.counts, dist.grid, spec)


def _coag_rates(counts: np.ndarray, grid: SizeGrid, spec: KernelSpec) -> np.ndarray:
    n = grid.n
    cap = min(spec.truncation, n)
    w = grid.sizes * counts
    rate = np.zeros(n)
    if cap < 2:
        return rate
    w_low = w[: cap - 1]
    conv = np.convolve(w_low, w_low)  # conv[p] = sum over bins i+j = p+2
    rate[1:cap] += 0.5 * conv[: cap - 1]
    csum = np.cumsum(w)
    partner = np.zeros(n)
    partner[: cap - 1] = csum[cap - 2 :: -1]  # bin k pairs with j <= cap-k
    rate -= w * partner
    return rate


def _frag_rates(counts: np.ndarray, grid: SizeGrid, spec: KernelSpec) -> np.ndarray:
    n = grid.n
    if not spec.frag_enabled:
        return np.zeros(n)
    cap = min(spec.truncation, n)
    s = grid.sizes
    j = np.arange(1, n + 1)
    # every split of a parent s_j has b(s_k, s_{j-k}) = 1 + eps * s_j
    b = 1.0 + spec.frag_eps * s
    active = counts.copy()
    if cap < n:
        active[cap:] = 0.0  # parents above the cap have the truncated kernel = 0
    loss = 0.5 * grid.ds * (j - 1) * b * active
    weighted = b * active
    suffix = np.concatenate([np.cumsum(weighted[::-1])[::-1][1:], [0.0]])
    gain = grid.ds * suffix
    return gain - loss


def _rhs(counts: np.ndarray, grid: SizeGrid, spec: KernelSpec) -> np.ndarray:
    return _coag_rates(counts, grid, spec) + _frag_rates(counts, grid, spec)


def _rk4(counts: np.ndarray, grid: SizeGrid, spec: KernelSpec, dt: float) -> np.ndarray:
    k1 = _rhs(counts, grid, spec)
    k2 = _rhs(counts + 0.5 * dt * k1, grid, spec)
    k3 = _rhs(counts + 0.5 * dt * k2, grid, spec)
    k4 = _rhs(counts + dt * k3, grid, spec)
    return counts + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _checked(counts: np.ndarray, ref_scale: float) -> np.ndarray:
    if not np.all(np.isfinite(counts)):
        raise SolverAbort("non-finite counts; dt is far above the stability guard")
    floor = -NEGATIVE_COUNT_RTOL * max(ref_scale, np.finfo(float).tiny)
    worst = counts.min() if counts.size else 0.0
    if worst < floor:
        raise SolverAbort(
            f"count driven to {worst:.3e}, below the roundoff floor {floor:.3e}; "
            "dt too large for the current state"
        )
    return np.where(counts < 0.0, 0.0, counts)


def step(dist: Distribution, config: SolverConfig) -> Distribution:
    """One classical 4th-order step of the combined right-hand side."""
    if config.dt == 0.0:
        return dist
    new = _rk4(dist.counts, dist.grid, config.spec, config.dt)
    return dist.with_counts(_checked(new, float(dist.counts.max(initial=0.0))))


def simulate(config: SolverConfig, initial: Distribution) -> Trajectory:
    """Advance ``initial`` to ``t_end`` recording snapshots every ``output_every`` steps.

    The step count is ``round(t_end / dt)`` and dt is nudged so the run lands on
    t_end exactly.  The trajectory is flagged (not rejected) in ``metadata`` when
    the relative mass drift exceeds MASS_DRIFT_TOL or the top-bin occupancy
    exceeds TOP_BIN_OCCUPANCY_TOL, since either invalidates bound checks.
    """
    grid = initial.grid
    if config.t_end > 0 and config.dt > 0:
        n_steps = max(1, int(round(config.t_end / config.dt)))
        dt = config.t_end / n_steps
    else:
        n_steps, dt = 0, 0.0

    m1_0 = initial.moment(1)
    mass_scale = m1_0 if m1_0 > 0 else 1.0
    times, dists = [], []

    def record(k: int, counts: np.ndarray):
        times.append(k * dt)
        dists.append(initial.with_counts(counts))

    counts = initial.counts.copy()
    record(0, counts)
    for k in range(1, n_steps + 1):
        counts = _checked(_rk4(counts, grid, config.spec, dt), float(counts.max(initial=0.0)))
        if k % config.output_every == 0 or k == n_steps:
            record(k, counts)

    moments = np.stack([d.moments() for d in dists])
    drift = np.abs(moments[:, 1] - m1_0) / mass_scale
    series = MomentSeries(np.asarray(times), moments, drift)
    top_occupancy = np.array([grid.s_max * d.counts[-1] / mass_scale for d in dists])
    metadata = {
        "dt_effective": dt,
        "n_steps": n_steps,
        "stability_dt_max": stability_limit(grid, config.spec, m1_0),
        "max_mass_drift": float(drift.max()),
        "mass_drift_exceeded": bool(drift.max() > MASS_DRIFT_TOL),
        "max_top_bin_occupancy": float(top_occupancy.max()),
        "top_bin_occupancy": top_occupancy,
        "top_bin_occupancy_exceeded": bool(top_occupancy.max() > TOP_BIN_OCCUPANCY_TOL),
    }
    snapshots = tuple(zip(times, dists))
    return Trajectory(snapshots=snapshots, moments=series, spec=config.spec, metadata=metadata)


def weak_form_residual(traj: Trajectory, phi: Callable[[np.ndarray], np.ndarray]) -> float:
    """Largest mismatch between d/dt sum_i phi(s_i) N_i and the weak-form rate.

    The time derivative is a centered difference across the snapshot stride,
    the right side is the pair-sum form evaluated independently of the solver
    right-hand side.  ``phi`` must be vectorized, bounded, Lipschitz, and
    vanish at zero.
    """
    if len(traj.snapshots) < 3:
        raise ValueError("need at least 3 snapshots for a centered difference")
    times = traj.times
    steps = np.diff(times)
    if np.max(np.abs(steps - steps[0])) > 1e-9 * max(steps[0], 1e-300):
        raise ValueError("snapshots must be uniformly spaced in time")
    dt_out = steps[0]
    dists = traj.distributions
    phi_tot = np.array([float(np.dot(phi(d.grid.sizes), d.counts)) for d in dists])
    worst = 0.0
    for mid in range(1, len(dists) - 1):
        lhs = (phi_tot[mid + 1] - phi_tot[mid - 1]) / (2.0 * dt_out)
        rhs = weak_form_rate(dists[mid], traj.spec, phi)
        worst = max(worst, abs(lhs - rhs))
    return worst


def weak_form_rate(dist: Distribution, spec: KernelSpec, phi) -> float:
    """Right side of the weak formulation for one snapshot.

    Coagulation: 1/2 sum_{i+j<=cap} (phi(s_i+s_j) - phi(s_i) - phi(s_j)) a N_i N_j.
    Fragmentation: -ds/2 sum_j N_j sum_{k<j} (phi(s_j) - phi(s_k) - phi(s_{j-k})) b.
    """
    grid = dist.grid
    n = grid.n
    cap = min(spec.truncation, n)
    s = grid.sizes
    N = dist.counts
    phi_s = np.asarray(phi(s), dtype=float)

    w = s * N
    pair_sum = s[:, None] + s[None, :]
    allowed = (np.arange(1, n + 1)[:, None] + np.arange(1, n + 1)[None, :]) <= cap
    gain = np.asarray(phi(pair_sum), dtype=float) - phi_s[:, None] - phi_s[None, :]
    coag = 0.5 * float(np.sum(np.where(allowed, gain, 0.0) * np.outer(w, w)))

    if not spec.frag_enabled:
        return coag
    j = np.arange(1, n + 1)
    prefix = np.concatenate([[0.0], np.cumsum(phi_s)])  # prefix[j-1] = sum_{k<j} phi(s_k)
    inner = (j - 1) * phi_s - 2.0 * prefix[:-1]
    b = 1.0 + spec.frag_eps * s
    active = N if cap >= n else np.where(j <= cap, N, 0.0)
    frag = -0.5 * grid.ds * float(np.sum(active * b * inner))
    return coag + frag
