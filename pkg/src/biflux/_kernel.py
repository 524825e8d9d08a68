"""Numba kernels for the event-driven simulator.

One replayable 64-bit stream per seed (xoshiro256++ state expanded from
the seed with splitmix64) drives both the initial-configuration sampling
and the event loop, so a seed fully determines a trajectory.  Bond rates
live in a Fenwick tree for O(log n) selection; an event touches only the
three bonds around the jump.  All kernels release the GIL so replicas over
seeds can run on a thread pool.
"""

from __future__ import annotations

import numpy as np
import numba as nb

RNG_IDENTITY = "xoshiro256++ (splitmix64-seeded), package kernel"

_MASK = (1 << 64) - 1
_DOUBLE_SCALE = 1.0 / 9007199254740992.0  # 2^-53


def seed_state(seed: int) -> np.ndarray:
    """Expand a 64-bit seed into a xoshiro256++ state (splitmix64)."""
    x = int(seed) & _MASK
    out = np.empty(4, dtype=np.uint64)
    for i in range(4):
        x = (x + 0x9E3779B97F4A7C15) & _MASK
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        out[i] = z ^ (z >> 31)
    if not out.any():
        out[0] = np.uint64(1)
    return out


@nb.njit(nb.uint64(nb.uint64[::1]), cache=True, nogil=True, inline="always")
def _next_u64(s):
    tmp = s[0] + s[3]
    result = ((tmp << np.uint64(23)) | (tmp >> np.uint64(41))) + s[0]
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = (s[3] << np.uint64(45)) | (s[3] >> np.uint64(19))
    return result


@nb.njit(nb.float64(nb.uint64[::1]), cache=True, nogil=True, inline="always")
def _next_double(s):
    return (_next_u64(s) >> np.uint64(11)) * _DOUBLE_SCALE


@nb.njit(cache=True, nogil=True, inline="always")
def _fenwick_add(tree, leaf, delta):
    j = leaf + 1
    n = tree.shape[0]
    while j < n:
        tree[j] += delta
        j += j & (-j)


@nb.njit(cache=True, nogil=True)
def _fenwick_rebuild(tree, vals):
    for j in range(tree.shape[0]):
        tree[j] = 0.0
    for i in range(vals.shape[0]):
        _fenwick_add(tree, i, vals[i])


@nb.njit(cache=True, nogil=True, inline="always")
def _fenwick_find(tree, top, v):
    """Largest count of leading leaves whose sum is <= v; the chosen leaf."""
    idx = 0
    rem = v
    bit = top
    n = tree.shape[0]
    while bit > 0:
        nxt = idx + bit
        if nxt < n and tree[nxt] <= rem:
            idx = nxt
            rem -= tree[nxt]
        bit >>= 1
    return idx


@nb.njit(cache=True, nogil=True)
def _refresh_caches(sites, bond_rates, tree, pair_total, k_states):
    n = sites.shape[0]
    worst = 0.0
    for b in range(n):
        b2 = b + 1 if b + 1 < n else 0
        exact = pair_total[sites[b] * k_states + sites[b2]]
        diff = abs(exact - bond_rates[b])
        if diff > worst:
            worst = diff
        bond_rates[b] = exact
    _fenwick_rebuild(tree, bond_rates)
    total = 0.0
    for b in range(n):
        total += bond_rates[b]
    return total, worst


@nb.njit(cache=True, nogil=True)
def _run_until(
    sites,
    bond_rates,
    tree,
    top,
    pair_total,
    pair_off,
    pair_cum,
    pair_t1,
    pair_t2,
    k_states,
    duration,
    state,
    check_every,
):
    """Exact-in-law CTMC event loop up to the given microscopic duration.

    Mutates sites, bond_rates and tree in place.  Returns (events, worst
    cache incoherence seen by the periodic debug check; -1.0 if disabled).
    """
    n = sites.shape[0]
    t = 0.0
    events = np.int64(0)
    worst_incoherence = -1.0
    total = 0.0
    for b in range(n):
        total += bond_rates[b]
    while True:
        if total <= 1e-300:
            break  # frozen configuration; time advances to the horizon
        u = _next_double(state)
        dt = -np.log(1.0 - u) / total
        if t + dt > duration:
            break
        t += dt
        pick = _next_double(state) * total
        j = _fenwick_find(tree, top, pick)
        if j >= n:
            j = n - 1
        j2 = j + 1 if j + 1 < n else 0
        pk = sites[j] * k_states + sites[j2]
        lo = pair_off[pk]
        hi = pair_off[pk + 1]
        if hi <= lo:
            # drifted cache pointed at an inactive bond; repair and redraw
            total, _ = _refresh_caches(sites, bond_rates, tree, pair_total, k_states)
            continue
        w = _next_double(state) * pair_total[pk]
        k = lo
        while k < hi - 1 and pair_cum[k] <= w:
            k += 1
        sites[j] = pair_t1[k]
        sites[j2] = pair_t2[k]
        events += 1
        for b in (j - 1 if j > 0 else n - 1, j, j2):
            b2 = b + 1 if b + 1 < n else 0
            new_rate = pair_total[sites[b] * k_states + sites[b2]]
            delta = new_rate - bond_rates[b]
            if delta != 0.0:
                bond_rates[b] = new_rate
                _fenwick_add(tree, b, delta)
                total += delta
        if check_every > 0 and events % check_every == 0:
            total, incoherence = _refresh_caches(
                sites, bond_rates, tree, pair_total, k_states
            )
            if incoherence > worst_incoherence:
                worst_incoherence = incoherence
    return events, worst_incoherence


@nb.njit(cache=True, nogil=True)
def _sample_sites(cum_rows, state, out):
    """Independent per-site categorical draws from cumulative rows."""
    n, k_states = cum_rows.shape
    for j in range(n):
        u = _next_double(state)
        k = 0
        while k < k_states - 1 and cum_rows[j, k] <= u:
            k += 1
        out[j] = k


@nb.njit(cache=True, nogil=True)
def _endpoint_histogram(
    sites0,
    pair_total,
    pair_off,
    pair_cum,
    pair_t1,
    pair_t2,
    k_states,
    duration,
    n_runs,
    state,
    counts,
):
    """Histogram of endpoint configurations over repeated short runs."""
    n = sites0.shape[0]
    sites = np.empty_like(sites0)
    bond_rates = np.empty(n, dtype=np.float64)
    tree = np.zeros(n + 1, dtype=np.float64)
    top = 1
    while top * 2 <= n:
        top *= 2
    total_events = np.int64(0)
    for _ in range(n_runs):
        for j in range(n):
            sites[j] = sites0[j]
        for b in range(n):
            b2 = b + 1 if b + 1 < n else 0
            bond_rates[b] = pair_total[sites[b] * k_states + sites[b2]]
        _fenwick_rebuild(tree, bond_rates)
        events, _ = _run_until(
            sites,
            bond_rates,
            tree,
            top,
            pair_total,
            pair_off,
            pair_cum,
            pair_t1,
            pair_t2,
            k_states,
            duration,
            state,
            0,
        )
        total_events += events
        idx = 0
        power = 1
        for j in range(n):
            idx += sites[j] * power
            power *= k_states
        counts[idx] += 1
    return total_events


def fenwick_top(n: int) -> int:
    top = 1
    while top * 2 <= n:
        top *= 2
    return top
