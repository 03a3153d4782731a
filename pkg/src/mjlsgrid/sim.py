"""Monte Carlo trajectory simulation of the jump-linear plant.

Each path owns a counter-based random stream keyed by (seed, path
index), so paths are independent, order-insensitive, and bit-for-bit
reproducible; identical plans give identical statistics.  Path batches
are evolved with vectorized per-step gathers; MJLS_THREADS > 1 splits
the batch across a thread pool (the per-path streams make the split
invisible in the results).
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateKernelError
from .fields import InitialDensity, KernelDensity, MatrixField
from .system import SystemModel

__all__ = [
    "SimPlan",
    "TrajectoryStats",
    "J2Comparison",
    "sample_chain",
    "run_paths",
    "hinf_ratio_run",
    "compare_j2",
    "OVERFLOW_LIMIT",
]

OVERFLOW_LIMIT = 1e12

DISTURBANCE_MODES = ("none", "sequence", "feedback")


@dataclass(frozen=True)
class SimPlan:
    system: SystemModel
    x0: np.ndarray
    horizon: int
    n_paths: int = 1000
    seed: int = 0
    control_gain: MatrixField | None = None       # u(k) = K2(m) x(k)
    disturbance: str = "none"
    disturbance_gain: MatrixField | None = None   # v(k) = K1(m) x(k)
    v_sequence: np.ndarray | None = None          # (horizon+1,) or (horizon+1, r)
    nu0: InitialDensity | None = None             # defaults to the system's

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        if self.disturbance not in DISTURBANCE_MODES:
            raise ValueError(f"disturbance must be one of {DISTURBANCE_MODES}")
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).reshape(-1))
        if self.x0.shape[0] != self.system.n:
            raise ValueError(f"x0 must have length {self.system.n}")
        if self.disturbance == "feedback" and self.disturbance_gain is None:
            raise ValueError("feedback disturbance needs a disturbance_gain")
        if self.disturbance == "sequence":
            if self.v_sequence is None:
                raise ValueError("sequence disturbance needs v_sequence")
            v = np.asarray(self.v_sequence, dtype=float)
            if v.ndim == 1:
                v = v[:, None] * np.ones((1, self.system.r))
            if v.shape != (self.horizon + 1, self.system.r):
                raise ValueError(
                    f"v_sequence must be ({self.horizon + 1},) or ({self.horizon + 1}, {self.system.r})"
                )
            object.__setattr__(self, "v_sequence", v)

    def initial_density(self) -> InitialDensity:
        return self.nu0 if self.nu0 is not None else self.system.nu0


@dataclass(frozen=True)
class TrajectoryStats:
    k: np.ndarray
    mean_state: np.ndarray       # (horizon+1, n)
    mean_sq_norm: np.ndarray     # E ||x(k)||^2
    std_err: np.ndarray          # standard error of the ||x||^2 estimate
    j2: np.ndarray               # cumulative mean output energy
    j2_std_err: np.ndarray
    path_costs: np.ndarray       # per-path cumulative output energy, (n_paths, horizon+1)
    component_occupancy: np.ndarray
    overflow: bool
    ratio: np.ndarray | None = None  # r_K(k), only for deterministic-disturbance runs


@dataclass(frozen=True)
class J2Comparison:
    k: np.ndarray
    j2_a: np.ndarray
    j2_b: np.ndarray
    difference: np.ndarray        # j2_a - j2_b
    difference_std_err: np.ndarray  # paired standard error under common mode paths


def _path_uniforms(seed: int, path_index: int, count: int) -> np.ndarray:
    bitgen = np.random.Philox(np.random.SeedSequence(entropy=(int(seed), int(path_index))))
    return np.random.Generator(bitgen).random(count)


def _transition_cdf(kernel: KernelDensity) -> tuple[np.ndarray, np.ndarray]:
    probs = kernel.g * kernel.grid.weights[None, :]
    totals = probs.sum(axis=1)
    if np.any(totals <= 0):
        i = int(np.argmin(totals))
        raise DegenerateKernelError(f"transition row {i} carries no probability mass")
    cdf = np.cumsum(probs, axis=1)
    return cdf, totals


def sample_chain(
    kernel: KernelDensity,
    nu0: InitialDensity,
    horizon: int,
    seed: int,
    path_index: int = 0,
) -> np.ndarray:
    """Sample one mode-index path of length horizon + 1."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    u = _path_uniforms(seed, path_index, horizon + 1)
    init_cdf = np.cumsum(nu0.cell_probs())
    modes = np.empty(horizon + 1, dtype=np.int64)
    # inverse CDF via "count of cdf entries below the draw", matching the
    # batched sampler bit for bit
    modes[0] = min(int((init_cdf < u[0] * init_cdf[-1]).sum()), kernel.M - 1)
    cdf, totals = _transition_cdf(kernel)
    for k in range(horizon):
        row = cdf[modes[k]]
        draw = u[k + 1] * totals[modes[k]]
        modes[k + 1] = min(int((row < draw).sum()), kernel.M - 1)
    return modes


def _sample_chain_batch(
    kernel: KernelDensity,
    nu0: InitialDensity,
    horizon: int,
    seed: int,
    path_indices: np.ndarray,
) -> np.ndarray:
    """Mode paths for a batch of path indices, (len(batch), horizon+1)."""
    n = len(path_indices)
    u = np.stack([_path_uniforms(seed, p, horizon + 1) for p in path_indices])
    init_cdf = np.cumsum(nu0.cell_probs())
    cdf, totals = _transition_cdf(kernel)
    modes = np.empty((n, horizon + 1), dtype=np.int64)
    modes[:, 0] = np.minimum(
        (init_cdf[None, :] < (u[:, 0] * init_cdf[-1])[:, None]).sum(axis=1), kernel.M - 1
    )
    for k in range(horizon):
        rows = cdf[modes[:, k]]
        draws = (u[:, k + 1] * totals[modes[:, k]])[:, None]
        modes[:, k + 1] = np.minimum((rows < draws).sum(axis=1), kernel.M - 1)
    return modes


def _simulate_batch(plan: SimPlan, path_indices: np.ndarray):
    """Evolve one batch of paths; returns per-path per-step raw statistics."""
    sys = plan.system
    horizon = plan.horizon
    n_batch = len(path_indices)
    modes = _sample_chain_batch(sys.kernel, plan.initial_density(), horizon, plan.seed, path_indices)
    Av, Bv, Cv, Dv, Fv = sys.A.values, sys.B.values, sys.C.values, sys.D.values, sys.F.values
    K2 = plan.control_gain.values if plan.control_gain is not None else None
    K1 = plan.disturbance_gain.values if plan.disturbance_gain is not None else None

    X = np.tile(plan.x0, (n_batch, 1))
    sq = np.empty((n_batch, horizon + 1))
    zsq = np.empty((n_batch, horizon + 1))
    states = np.empty((n_batch, horizon + 1, sys.n))
    alive = np.ones(n_batch, dtype=bool)
    overflow = False
    for k in range(horizon + 1):
        m = modes[:, k]
        states[:, k] = X
        sq[:, k] = np.einsum("pi,pi->p", X, X)
        u = np.einsum("pij,pj->pi", K2[m], X) if K2 is not None else np.zeros((n_batch, sys.m))
        if plan.disturbance == "feedback":
            v = np.einsum("pij,pj->pi", K1[m], X)
        elif plan.disturbance == "sequence":
            v = np.tile(plan.v_sequence[k], (n_batch, 1))
        else:
            v = None
        cx = np.einsum("pij,pj->pi", Cv[m], X)
        du = np.einsum("pij,pj->pi", Dv[m], u)
        zsq[:, k] = np.einsum("pi,pi->p", cx, cx) + np.einsum("pi,pi->p", du, du)
        if k < horizon:
            X_next = np.einsum("pij,pj->pi", Av[m], X) + np.einsum("pij,pj->pi", Bv[m], u)
            if v is not None:
                X_next = X_next + np.einsum("pij,pj->pi", Fv[m], v)
            blown = np.linalg.norm(X_next, axis=1) > OVERFLOW_LIMIT
            if np.any(blown & alive):
                overflow = True
                alive &= ~blown
            X = np.where(alive[:, None], X_next, X)
    occupancy = np.bincount(sys.grid.comp_of[modes.ravel()], minlength=sys.grid.n_components)
    return states, sq, zsq, occupancy, overflow


def _thread_count() -> int:
    raw = os.environ.get("MJLS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_paths(plan: SimPlan) -> TrajectoryStats:
    """Simulate n_paths independent trajectories and aggregate statistics."""
    indices = np.arange(plan.n_paths)
    threads = _thread_count()
    if threads == 1 or plan.n_paths < 2 * threads:
        batches = [_simulate_batch(plan, indices)]
    else:
        chunks = np.array_split(indices, threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            batches = list(pool.map(lambda c: _simulate_batch(plan, c), chunks))
    states = np.concatenate([b[0] for b in batches])
    sq = np.concatenate([b[1] for b in batches])
    zsq = np.concatenate([b[2] for b in batches])
    occupancy = np.sum([b[3] for b in batches], axis=0)
    overflow = any(b[4] for b in batches)

    n_paths = plan.n_paths
    mean_state = states.mean(axis=0)
    mean_sq = sq.mean(axis=0)
    if n_paths > 1:
        std_err = sq.std(axis=0, ddof=1) / np.sqrt(n_paths)
    else:
        std_err = np.zeros_like(mean_sq)
    path_costs = np.cumsum(zsq, axis=1)
    j2 = path_costs.mean(axis=0)
    if n_paths > 1:
        j2_std_err = path_costs.std(axis=0, ddof=1) / np.sqrt(n_paths)
    else:
        j2_std_err = np.zeros_like(j2)

    ratio = None
    if plan.disturbance == "sequence":
        v_energy = np.cumsum(np.einsum("ki,ki->k", plan.v_sequence, plan.v_sequence))
        if np.any(v_energy <= 0):
            raise ValueError("ratio is undefined: zero accumulated disturbance energy")
        ratio = np.sqrt(np.cumsum(zsq.mean(axis=0)) / v_energy)

    return TrajectoryStats(
        k=np.arange(plan.horizon + 1),
        mean_state=mean_state,
        mean_sq_norm=mean_sq,
        std_err=std_err,
        j2=j2,
        j2_std_err=j2_std_err,
        path_costs=path_costs,
        component_occupancy=occupancy / occupancy.sum(),
        overflow=overflow,
        ratio=ratio,
    )


def hinf_ratio_run(
    system: SystemModel,
    control_gain: MatrixField,
    horizon: int,
    n_paths: int = 1000,
    seed: int = 0,
    decay: float = 2.0,
) -> TrajectoryStats:
    """Attenuation diagnostic: drive the closed loop from rest with v(k) = e^{-decay k}.

    r_K(k) is the square root of accumulated mean output energy over
    accumulated disturbance energy; staying below gamma is the sample
    evidence for the norm bound.
    """
    v = np.exp(-decay * np.arange(horizon + 1))
    plan = SimPlan(
        system=system,
        x0=np.zeros(system.n),
        horizon=horizon,
        n_paths=n_paths,
        seed=seed,
        control_gain=control_gain,
        disturbance="sequence",
        v_sequence=v,
    )
    return run_paths(plan)


def compare_j2(plan_a: SimPlan, plan_b: SimPlan) -> J2Comparison:
    """Common-random-numbers comparison of cumulative output energies.

    Both plans must share the system, horizon, path count, seed, and
    initial state; the per-path streams then deliver identical mode
    paths, so the difference is estimated with paired standard errors.
    """
    if plan_a.system is not plan_b.system:
        raise ValueError("plans must share the same system")
    if plan_a.horizon != plan_b.horizon:
        raise ValueError("plans must share the horizon")
    if (plan_a.n_paths, plan_a.seed) != (plan_b.n_paths, plan_b.seed):
        raise ValueError("plans must share n_paths and seed for common random numbers")
    if not np.array_equal(plan_a.x0, plan_b.x0):
        raise ValueError("plans must share the initial state")
    stats_a = run_paths(plan_a)
    stats_b = run_paths(plan_b)
    diff_paths = stats_a.path_costs - stats_b.path_costs
    if plan_a.n_paths > 1:
        diff_se = diff_paths.std(axis=0, ddof=1) / np.sqrt(plan_a.n_paths)
    else:
        diff_se = np.zeros(plan_a.horizon + 1)
    return J2Comparison(
        k=stats_a.k,
        j2_a=stats_a.j2,
        j2_b=stats_b.j2,
        difference=stats_a.j2 - stats_b.j2,
        difference_std_err=diff_se,
    )
