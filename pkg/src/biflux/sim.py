"""Event-driven Monte Carlo of the lattice dynamics on the discrete torus.

A replica samples its initial configuration from the local-equilibrium
product measure of the perturbed profile (so the relative-entropy
hypothesis holds exactly at t = 0), runs the exact continuous-time event
loop at microscopic duration n^(1+beta) t, and measures the two
weak-convergence residuals: the microscopic test-function averages of the
conserved quantities against the integrals of the predicted traveling
waves.  One seed is one strictly sequential replica; independent seeds
may run concurrently.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernel
from .errors import DomainError, SpecInvariantError
from .model import ModelSpec
from .thermo import measure_at_density, physical_domain
from .waves import EigenStructure, WaveField, WaveProblem

BETA_UPPER = 0.2  # the derivation needs beta in (0, 1/5)

RNG_IDENTITY = _kernel.RNG_IDENTITY


def zero_profile(x):
    return np.zeros_like(np.asarray(x, dtype=float))


TEST_FUNCTIONS: dict[str, Callable] = {
    "1": lambda x: np.ones_like(np.asarray(x, dtype=float)),
    "cos2pix": lambda x: np.cos(2.0 * np.pi * np.asarray(x, dtype=float)),
    "sin2pix": lambda x: np.sin(2.0 * np.pi * np.asarray(x, dtype=float)),
}


@dataclass
class SimParams:
    """Size, scaling exponent, base point and perturbation of one study."""

    n: int
    beta: float
    u0: float
    v0: float
    u_star: Callable = zero_profile
    v_star: Callable = zero_profile
    t_end: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.beta < BETA_UPPER:
            raise SpecInvariantError(
                f"beta = {self.beta} outside the admissible open interval (0, 1/5)"
            )
        if self.n < 3:
            raise SpecInvariantError(f"torus size n = {self.n} must be at least 3")

    def site_positions(self) -> np.ndarray:
        return np.arange(self.n) / self.n

    def profile(self) -> tuple[np.ndarray, np.ndarray]:
        """Perturbed densities (u_j, v_j) at the lattice sites."""
        x = self.site_positions()
        amp = float(self.n) ** (-self.beta)
        return (
            self.u0 + amp * np.asarray(self.u_star(x), dtype=float),
            self.v0 + amp * np.asarray(self.v_star(x), dtype=float),
        )

    def microscopic_duration(self, dt: float) -> float:
        return float(self.n) ** (1.0 + self.beta) * dt


class SeedStream:
    """Replayable per-seed RNG stream shared by sampling and evolution."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.state = _kernel.seed_state(seed)


@dataclass
class KernelTables:
    """Flattened per-pair transition tables in the kernel's layout."""

    k_states: int
    pair_total: np.ndarray  # (K*K,)
    pair_off: np.ndarray  # (K*K + 1,) int64
    pair_cum: np.ndarray  # cumulative rates within each pair block
    pair_t1: np.ndarray  # int32 targets
    pair_t2: np.ndarray

    @classmethod
    def build(cls, spec: ModelSpec) -> "KernelTables":
        k = spec.n_states
        per_pair: dict[int, list[tuple[int, int, float]]] = {}
        for i1, i2, t1, t2, r in spec.rate_entries():
            if r <= 0:
                continue
            per_pair.setdefault(i1 * k + i2, []).append((t1, t2, r))
        off = np.zeros(k * k + 1, dtype=np.int64)
        total = np.zeros(k * k)
        cum, tg1, tg2 = [], [], []
        pos = 0
        for pk in range(k * k):
            entries = per_pair.get(pk, [])
            running = 0.0
            for t1, t2, r in entries:
                running += r
                cum.append(running)
                tg1.append(t1)
                tg2.append(t2)
            total[pk] = running
            pos += len(entries)
            off[pk + 1] = pos
        return cls(
            k_states=k,
            pair_total=total,
            pair_off=off,
            pair_cum=np.array(cum, dtype=np.float64),
            pair_t1=np.array(tg1, dtype=np.int32),
            pair_t2=np.array(tg2, dtype=np.int32),
        )


@dataclass
class Configuration:
    """Torus configuration with its conserved totals and bond-rate cache."""

    sites: np.ndarray  # int32 local-state indices
    zeta_total: int
    eta_total: int
    bond_rates: np.ndarray

    @classmethod
    def from_sites(cls, spec: ModelSpec, sites: np.ndarray) -> "Configuration":
        sites = np.asarray(sites, dtype=np.int32)
        tables = KernelTables.build(spec)
        k = tables.k_states
        nxt = np.roll(sites, -1)
        bond = tables.pair_total[sites.astype(np.int64) * k + nxt.astype(np.int64)]
        z = spec.zeta_values()
        e = spec.eta_values()
        return cls(
            sites=sites,
            zeta_total=int(z[sites].sum()),
            eta_total=int(e[sites].sum()),
            bond_rates=bond,
        )

    @property
    def n(self) -> int:
        return len(self.sites)


def site_probability_table(spec: ModelSpec, params: SimParams) -> np.ndarray:
    """Cumulative per-site categorical tables of the local-equilibrium
    product measure; raises DomainError if the profile leaves the domain."""
    uu, vv = params.profile()
    dom = physical_domain(spec)
    for j in range(params.n):
        if not dom.contains(float(uu[j]), float(vv[j]), 0.0):
            raise DomainError(
                f"perturbed profile leaves the physical domain at site {j}: "
                f"({uu[j]:.6g}, {vv[j]:.6g})"
            )
    k = spec.n_states
    cum = np.empty((params.n, k))
    cache: dict[tuple[float, float], np.ndarray] = {}
    for j in range(params.n):
        key = (float(uu[j]), float(vv[j]))
        probs = cache.get(key)
        if probs is None:
            probs = measure_at_density(spec, key[0], key[1])
            cache[key] = probs
        cum[j] = np.cumsum(probs)
    cum[:, -1] = 1.0
    return cum


def sample_initial(
    spec: ModelSpec,
    params: SimParams,
    stream: SeedStream,
    cum_table: np.ndarray | None = None,
) -> Configuration:
    """Independent per-site draws from the profile's canonical measures."""
    if cum_table is None:
        cum_table = site_probability_table(spec, params)
    sites = np.empty(params.n, dtype=np.int32)
    _kernel._sample_sites(cum_table, stream.state, sites)
    return Configuration.from_sites(spec, sites)


def evolve(
    spec: ModelSpec,
    config: Configuration,
    duration: float,
    stream: SeedStream,
    *,
    check_every: int = 0,
    tables: KernelTables | None = None,
) -> tuple[Configuration, int]:
    """Exact-in-law evolution for a microscopic duration; returns a new
    Configuration and the number of executed events."""
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    if tables is None:
        tables = KernelTables.build(spec)
    sites = config.sites.copy()
    bond = config.bond_rates.copy()
    n = len(sites)
    tree = np.zeros(n + 1)
    _kernel._fenwick_rebuild(tree, bond)
    events, incoherence = _kernel._run_until(
        sites,
        bond,
        tree,
        _kernel.fenwick_top(n),
        tables.pair_total,
        tables.pair_off,
        tables.pair_cum,
        tables.pair_t1,
        tables.pair_t2,
        tables.k_states,
        float(duration),
        stream.state,
        int(check_every),
    )
    if check_every > 0 and incoherence > 1e-9:
        raise RuntimeError(f"bond-rate cache incoherence {incoherence:.3e}")
    new = Configuration(
        sites=sites,
        zeta_total=config.zeta_total,
        eta_total=config.eta_total,
        bond_rates=bond,
    )
    return new, int(events)


def empirical_profile(
    spec: ModelSpec, config: Configuration, block: int
) -> tuple[np.ndarray, np.ndarray]:
    """Circular block averages of the conserved quantities.

    zeta^l_j = (1/l) sum_{i<l} zeta_{j+i} with periodic indexing."""
    n = config.n
    if not 1 <= block <= n:
        raise ValueError(f"block size {block} outside [1, {n}]")
    z = spec.zeta_values()[config.sites].astype(float)
    e = spec.eta_values()[config.sites].astype(float)

    def circular(a):
        ext = np.concatenate([a, a[: block - 1]])
        cs = np.concatenate([[0.0], np.cumsum(ext)])
        return (cs[block:] - cs[:-block]) / block

    return circular(z), circular(e)


def corollary_residual(
    spec: ModelSpec,
    config: Configuration,
    params: SimParams,
    t: float,
    g: Callable,
    field_t: WaveField,
    eigen: EigenStructure,
) -> tuple[float, float]:
    """The two weak-convergence residuals at one observation time.

    Microscopic side: n^(beta-1) sum_j g(j/n) (zeta_j - u0); prediction
    side: integral of g against the shifted wave combination by the
    trapezoid rule on the wave grid (the mean of the samples, the two
    coincide on a uniform periodic grid); the shifted arguments wrap on
    the torus.  Returns (zeta residual, eta residual).
    """
    x_sites = params.site_positions()
    gj = np.asarray(g(x_sites), dtype=float)
    z = spec.zeta_values()[config.sites].astype(float)
    e = spec.eta_values()[config.sites].astype(float)
    pref = float(params.n) ** (params.beta - 1.0)
    micro_z = pref * float(gj @ (z - params.u0))
    micro_e = pref * float(gj @ (e - params.v0))

    xg = field_t.x
    gx = np.asarray(g(xg), dtype=float)
    stretch = float(params.n) ** params.beta * t
    sig = field_t.sigma_at(xg - eigen.lam * stretch)
    dlt = field_t.delta_at(xg - eigen.mu * stretch)
    pred_z = float(np.mean(gx * (sig * eigen.r[0] + dlt * eigen.s[0])))
    pred_e = float(np.mean(gx * (sig * eigen.r[1] + dlt * eigen.s[1])))
    return micro_z - pred_z, micro_e - pred_e


def endpoint_distribution(
    spec: ModelSpec,
    sites0: np.ndarray,
    duration: float,
    n_runs: int,
    seed: int,
) -> tuple[np.ndarray, int]:
    """Empirical endpoint distribution over repeated runs from one start.

    Returns (frequencies over the K^n configuration indices, total events);
    the desk-scale law-exactness check compares this against the
    uniformization evolution in total variation.
    """
    tables = KernelTables.build(spec)
    sites0 = np.asarray(sites0, dtype=np.int32)
    n = len(sites0)
    k = tables.k_states
    counts = np.zeros(k**n, dtype=np.int64)
    stream = SeedStream(seed)
    events = _kernel._endpoint_histogram(
        sites0,
        tables.pair_total,
        tables.pair_off,
        tables.pair_cum,
        tables.pair_t1,
        tables.pair_t2,
        k,
        float(duration),
        int(n_runs),
        stream.state,
        counts,
    )
    return counts / float(n_runs), int(events)


# ---------------------------------------------------------------------------
# the experiment driver
# ---------------------------------------------------------------------------


@dataclass
class ResidualRow:
    t: float
    g_name: str
    component: str  # "zeta" or "eta"
    n_seeds: int
    mean_abs: float
    stderr_abs: float
    mean: float
    stderr: float


@dataclass
class ResidualReport:
    """Per-seed residuals and their seed aggregates for one (n, beta)."""

    n: int
    beta: float
    u0: float
    v0: float
    seeds: list[int]
    times: list[float]
    g_names: list[str]
    per_seed: dict[tuple[float, str, str], np.ndarray] = field(default_factory=dict)
    rows: list[ResidualRow] = field(default_factory=list)
    rng_identity: str = RNG_IDENTITY
    total_events: int = 0
    wall_time: float = 0.0

    def aggregate_abs(self, t: float, g_name: str, component: str) -> float:
        for row in self.rows:
            if row.t == t and row.g_name == g_name and row.component == component:
                return row.mean_abs
        raise KeyError((t, g_name, component))


def _aggregate(values: np.ndarray) -> tuple[float, float, float, float]:
    n = len(values)
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    mean_abs = float(np.abs(values).mean())
    stderr_abs = (
        float(np.abs(values).std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    )
    return mean_abs, stderr_abs, mean, stderr


def run_experiment(
    spec: ModelSpec,
    params: SimParams,
    seeds: Sequence[int],
    times: Sequence[float],
    test_functions: dict[str, Callable] | Sequence[str],
    *,
    threads: int = 1,
    grid_m: int = 1024,
    check_every: int = 0,
) -> ResidualReport:
    """Full residual study: sample, evolve to each time, measure, aggregate.

    Deterministic given the seed list; replicas over seeds run on a thread
    pool (the kernels release the GIL) with per-seed results independent
    of scheduling.
    """
    if isinstance(test_functions, dict):
        gs = dict(test_functions)
    else:
        gs = {name: TEST_FUNCTIONS[name] for name in test_functions}
    times = sorted(float(t) for t in times)
    if times and times[0] < 0:
        raise ValueError("observation times must be nonnegative")

    started = time.perf_counter()
    problem = WaveProblem.build(
        spec, params.u0, params.v0, params.u_star, params.v_star, m=grid_m
    )
    problem.guard_times(times)
    fields = problem.fields_at(times)
    eigen = problem.eigen
    tables = KernelTables.build(spec)
    cum_table = site_probability_table(spec, params)

    def one_seed(seed: int):
        stream = SeedStream(seed)
        config = sample_initial(spec, params, stream, cum_table)
        rows = []
        events = 0
        t_prev = 0.0
        for t, field_t in zip(times, fields):
            config, ev = evolve(
                spec,
                config,
                params.microscopic_duration(t - t_prev),
                stream,
                check_every=check_every,
                tables=tables,
            )
            events += ev
            t_prev = t
            for name, g in gs.items():
                rz, re = corollary_residual(spec, config, params, t, g, field_t, eigen)
                rows.append((t, name, rz, re))
        return rows, events

    seed_list = [int(s) for s in seeds]
    if threads > 1 and len(seed_list) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one_seed, seed_list))
    else:
        results = [one_seed(s) for s in seed_list]

    per_seed: dict[tuple[float, str, str], list[float]] = {}
    total_events = 0
    for (rows, events), _seed in zip(results, seed_list):
        total_events += events
        for t, name, rz, re in rows:
            per_seed.setdefault((t, name, "zeta"), []).append(rz)
            per_seed.setdefault((t, name, "eta"), []).append(re)

    agg_rows = []
    for (t, name, comp), vals in sorted(per_seed.items()):
        arr = np.array(vals)
        mean_abs, stderr_abs, mean, stderr = _aggregate(arr)
        agg_rows.append(
            ResidualRow(
                t=t,
                g_name=name,
                component=comp,
                n_seeds=len(arr),
                mean_abs=mean_abs,
                stderr_abs=stderr_abs,
                mean=mean,
                stderr=stderr,
            )
        )
    report = ResidualReport(
        n=params.n,
        beta=params.beta,
        u0=params.u0,
        v0=params.v0,
        seeds=seed_list,
        times=list(times),
        g_names=list(gs.keys()),
        per_seed={k: np.array(v) for k, v in per_seed.items()},
        rows=agg_rows,
        total_events=total_events,
        wall_time=time.perf_counter() - started,
    )
    return report
