"""Stochastic particle simulator for the same truncated kernels the
deterministic solver uses; an independent oracle for moment trajectories.

Particle sizes are integer multiples of the grid step, so every merge and
split conserves mass exactly in integer arithmetic.  Split points are drawn
uniformly over the admissible grid pairs (k, j-k) and the per-particle
breakup rate is the same split-point sum the deterministic solver
discretizes, (ds/2) * (j-1) * (1 + eps * s_j): the two engines then realize
the same finite system, and disagreement is a genuine bug signal rather
than a discretization mismatch.

Merges whose combined size exceeds the truncation cap are kept in the event
clock but executed as null events (thinning), which reproduces the truncated
kernel exactly.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .core import Distribution, KernelSpec, SizeGrid
from .errors import AbsorbingStateError

#: Highest empirical moment recorded by ensemble statistics (m0..m3).
ENSEMBLE_MAX_MOMENT = 3

_RNG_BLOCK = 4096


class _StreamBuffer:
    """Block-buffered draws from one generator; keeps the event loop cheap
    without changing the stream order for a given seed."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self._uniform = np.empty(0)
        self._expo = np.empty(0)
        self._iu = 0
        self._ie = 0

    def uniform(self) -> float:
        if self._iu >= self._uniform.size:
            self._uniform = self.rng.random(_RNG_BLOCK)
            self._iu = 0
        v = self._uniform[self._iu]
        self._iu += 1
        return v

    def exponential(self) -> float:
        if self._ie >= self._expo.size:
            self._expo = self.rng.standard_exponential(_RNG_BLOCK)
            self._ie = 0
        v = self._expo[self._ie]
        self._ie += 1
        return v


class ParticleSystem:
    """Finite volume of particles with sizes on the grid.

    Mutable by design: `gillespie_step` advances the system in place and
    returns it together with the sampled waiting time.  Use ``copy()`` when a
    functional snapshot is needed.  Exact integer sums of bin indices are
    maintained incrementally so total event rates cost O(1) per event.
    """

    def __init__(self, grid: SizeGrid, volume: float, sizes, seed=0):
        if not volume > 0:
            raise ValueError(f"volume must be positive, got {volume}")
        bins = [int(b) for b in sizes]
        if any(b < 1 or b > grid.n for b in bins):
            raise ValueError("particle sizes must be grid multiples within the grid")
        self.grid = grid
        self.volume = float(volume)
        self.particles = bins
        self.rng = np.random.default_rng(seed)
        self._buf = _StreamBuffer(self.rng)
        self._sum_j = sum(bins)
        self._sum_j2 = sum(b * b for b in bins)
        self._j_bound = max(bins) if bins else 0

    @classmethod
    def from_distribution(cls, dist: Distribution, volume: float, seed=0) -> "ParticleSystem":
        """Deterministic largest-remainder rounding of volume * counts."""
        expected = volume * dist.counts
        base = np.floor(expected).astype(int)
        remainder = expected - base
        target = int(round(expected.sum()))
        extras = max(0, target - int(base.sum()))
        order = np.argsort(-remainder, kind="stable")
        base[order[:extras]] += 1
        sizes = np.repeat(np.arange(1, dist.grid.n + 1), base)
        return cls(dist.grid, volume, sizes, seed=seed)

    def __len__(self):
        return len(self.particles)

    def copy(self) -> "ParticleSystem":
        return copy.deepcopy(self)

    @property
    def mass_concentration(self) -> float:
        """Total mass per unit volume, ds * sum(j) / V, exact in the integers."""
        return self.grid.ds * self._sum_j / self.volume

    def empirical_moments(self, k_max: int = ENSEMBLE_MAX_MOMENT) -> np.ndarray:
        """(1/V) sum_i s_i^k for k = 0..k_max."""
        j = np.asarray(self.particles, dtype=float)
        s = j * self.grid.ds
        return np.array([float(np.sum(s ** k)) / self.volume for k in range(k_max + 1)])

    def to_distribution(self) -> Distribution:
        counts = np.bincount(self.particles, minlength=self.grid.n + 1)[1:].astype(float)
        return Distribution(self.grid, counts / self.volume)

    # -- internal sampling helpers ------------------------------------------

    def _pick_size_biased(self) -> int:
        n = len(self.particles)
        bound = self._j_bound
        while True:
            idx = int(self._buf.uniform() * n)
            if idx >= n:  # guard the measure-zero u == 1.0 edge
                continue
            if self._buf.uniform() * bound < self.particles[idx]:
                return idx

    def _pick_breakup_biased(self, eps_ds: float) -> int:
        n = len(self.particles)
        bound = (self._j_bound - 1) * (1.0 + eps_ds * self._j_bound)
        while True:
            idx = int(self._buf.uniform() * n)
            if idx >= n:
                continue
            j = self.particles[idx]
            if self._buf.uniform() * bound < (j - 1) * (1.0 + eps_ds * j):
                return idx

    def _remove_two(self, i: int, l: int):
        hi, lo = (i, l) if i > l else (l, i)
        parts = self.particles
        parts[hi] = parts[-1]
        parts.pop()
        parts[lo] = parts[-1]
        parts.pop()


def event_rates(sys: ParticleSystem, spec: KernelSpec):
    """Exact (coagulation, fragmentation) total rates of the truncated system.

    Coagulation: (1/V) sum over distinct pairs with in-cap combined size of
    s_i * s_l.  Fragmentation: sum over particles of the split-point sum
    (ds/2) * (j-1) * (1 + eps * s_j); sizes below 2*ds cannot split.
    """
    if not sys.particles:
        raise ValueError("empty particle system has no events")
    ds = sys.grid.ds
    cap = min(spec.truncation, sys.grid.n)
    counts = np.bincount(sys.particles)
    b = np.arange(counts.size)
    w = (b * counts).astype(float)
    conv = np.convolve(w, w)
    allowed_ordered = float(np.sum(conv[: cap + 1]))
    self_pairs = float(sum(j * j for j in sys.particles if 2 * j <= cap))
    coag = ds * ds * (allowed_ordered - self_pairs) / (2.0 * sys.volume)
    frag = _total_breakup_rate(sys, spec)
    return coag, frag


def _total_breakup_rate(sys: ParticleSystem, spec: KernelSpec) -> float:
    if not spec.frag_enabled:
        return 0.0
    ds = sys.grid.ds
    eps_ds = spec.frag_eps * ds
    return 0.5 * ds * ((sys._sum_j - len(sys.particles)) + eps_ds * (sys._sum_j2 - sys._sum_j))


def _proposal_rates(sys: ParticleSystem, spec: KernelSpec):
    """O(1) rates used by the clock: coagulation ignores the cap (over-cap
    proposals become null events), fragmentation is exact."""
    ds = sys.grid.ds
    coag = ds * ds * (sys._sum_j * sys._sum_j - sys._sum_j2) / (2.0 * sys.volume)
    return coag, _total_breakup_rate(sys, spec)


def _execute_event(sys: ParticleSystem, spec: KernelSpec, coag: float, total: float):
    """Choose and apply one event; over-cap merges are applied as null events."""
    cap = min(spec.truncation, sys.grid.n)
    if sys._buf.uniform() * total < coag:
        i = sys._pick_size_biased()
        l = sys._pick_size_biased()
        while l == i:
            i = sys._pick_size_biased()
            l = sys._pick_size_biased()
        ji, jl = sys.particles[i], sys.particles[l]
        if ji + jl > cap:
            return  # suppressed by the truncated kernel: null event
        sys._remove_two(i, l)
        merged = ji + jl
        sys.particles.append(merged)
        sys._sum_j2 += 2 * ji * jl
        if merged > sys._j_bound:
            sys._j_bound = merged
    else:
        eps_ds = spec.frag_eps * sys.grid.ds
        i = sys._pick_breakup_biased(eps_ds)
        j = sys.particles[i]
        k = 1 + int(sys._buf.uniform() * (j - 1))
        k = min(k, j - 1)
        sys.particles[i] = k
        sys.particles.append(j - k)
        sys._sum_j2 -= 2 * k * (j - k)


def gillespie_step(sys: ParticleSystem, spec: KernelSpec):
    """One event of the embedded Markov chain; returns (sys, waiting_time).

    The system is advanced in place.  A merge whose combined size exceeds the
    cap advances the clock but leaves the state unchanged.  Runs with equal
    seeds and inputs reproduce the event sequence bit for bit.
    """
    if not sys.particles:
        raise ValueError("empty particle system has no events")
    coag, frag = _proposal_rates(sys, spec)
    total = coag + frag
    if total <= 0:
        raise AbsorbingStateError("total event rate is zero; the state is absorbing")
    wait = sys._buf.exponential() / total
    _execute_event(sys, spec, coag, total)
    return sys, wait


@dataclass(frozen=True)
class ReplicaResult:
    """Empirical moments of one replica on the requested time grid."""

    times: np.ndarray
    moments: np.ndarray  # shape (len(times), 4)
    snapshots: tuple | None = None


def simulate_replica(
    initial: Distribution,
    spec: KernelSpec,
    t_grid,
    volume: float,
    seed=0,
    record_snapshots: bool = False,
) -> ReplicaResult:
    """Run one replica, recording empirical moments at each requested time.

    A state with zero total rate is absorbing; remaining grid times then all
    see the frozen state.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or np.any(np.diff(t_grid) < 0):
        raise ValueError("t_grid must be a nondecreasing, nonempty 1-d array")
    sys = ParticleSystem.from_distribution(initial, volume, seed=seed)
    out = np.empty((t_grid.size, ENSEMBLE_MAX_MOMENT + 1))
    snaps = [] if record_snapshots else None
    t = 0.0
    gi = 0

    def record_current():
        nonlocal gi
        out[gi] = sys.empirical_moments()
        if snaps is not None:
            snaps.append(sys.to_distribution())
        gi += 1

    while gi < t_grid.size and t_grid[gi] <= t:
        record_current()
    while gi < t_grid.size:
        coag, frag = _proposal_rates(sys, spec)
        total = coag + frag
        if total <= 0:
            while gi < t_grid.size:
                record_current()
            break
        wait = sys._buf.exponential() / total
        t_next = t + wait
        while gi < t_grid.size and t_grid[gi] < t_next:
            record_current()  # state on [t, t_next) is the pre-event state
        if gi >= t_grid.size:
            break
        _execute_event(sys, spec, coag, total)
        t = t_next
    return ReplicaResult(times=t_grid, moments=out, snapshots=None if snaps is None else tuple(snaps))


@dataclass(frozen=True)
class EnsembleMoments:
    """Mean and standard error of empirical moments across replicas."""

    times: np.ndarray
    mean: np.ndarray  # shape (len(times), 4)
    stderr: np.ndarray
    replicas: int


def ensemble_moments(
    initial: Distribution,
    spec: KernelSpec,
    t_grid,
    replicas: int,
    seed=0,
    volume: float | None = None,
) -> EnsembleMoments:
    """Sample mean and standard error of m0..m3 across independent replicas.

    Replica r draws its stream from (seed, r), so the ensemble is reproducible
    and replicas are independent regardless of execution order.  The default
    volume targets about 10^4 initial particles.
    """
    if replicas < 2:
        raise ValueError("need at least 2 replicas for a standard error")
    if volume is None:
        volume = 1e4 / initial.moment(0)
    results = [
        simulate_replica(initial, spec, t_grid, volume, seed=(seed, r)).moments
        for r in range(replicas)
    ]
    stacked = np.stack(results)
    mean = stacked.mean(axis=0)
    stderr = stacked.std(axis=0, ddof=1) / np.sqrt(replicas)
    return EnsembleMoments(
        times=np.asarray(t_grid, dtype=float), mean=mean, stderr=stderr, replicas=replicas
    )
