"""Compiled event loops.

All loops are event-driven: each Poisson stream is an independent
counter-based sequence of exponential gaps, and the next event is taken from
a binary min-heap over the streams' pending times. Processed event times
must increase strictly; a stream whose pending time does not exceed the last
processed time is moved one ulp past it and the tie is counted.

Color codes: 0 red, 1 blue, 2 green. Sites and individuals are 0-based here.
"""

from __future__ import annotations

import numba as nb
import numpy as np

from .rng import (
    BULK, EDGE, FIELD_B, FIELD_G, GREEN, LEFT, LEFT_MARK, RIGHT, RIGHT_MARK, WALK,
    exponential, stream_times, uniform,
)

RED, BLUE, GREEN_COLOR = 0, 1, 2

# Skeleton event codes: 0 = site-1 recoloring, 1 = site-N recoloring,
# 1 + i = green-edge clock between sites i and i + 1 (1-based i).
SK_LEFT = 0
SK_RIGHT = 1

_F_LEFT = np.int64(LEFT) << 32
_F_RIGHT = np.int64(RIGHT) << 32
_F_GREEN = np.int64(GREEN) << 32
_F_BULK = np.int64(BULK) << 32
_F_EDGE = np.int64(EDGE) << 32
_F_LEFT_MARK = np.int64(LEFT_MARK) << 32
_F_RIGHT_MARK = np.int64(RIGHT_MARK) << 32
_F_FIELD_B = np.int64(FIELD_B) << 32
_F_FIELD_G = np.int64(FIELD_G) << 32
_F_WALK = np.int64(WALK) << 32


@nb.njit(cache=True)
def _sift_down(keys, ids, pos, size):
    while True:
        left = 2 * pos + 1
        if left >= size:
            return
        child = left
        right = left + 1
        if right < size and keys[right] < keys[left]:
            child = right
        if keys[child] < keys[pos]:
            keys[pos], keys[child] = keys[child], keys[pos]
            ids[pos], ids[child] = ids[child], ids[pos]
            pos = child
        else:
            return


@nb.njit(cache=True)
def _heapify(keys, ids):
    size = keys.shape[0]
    for pos in range(size // 2 - 1, -1, -1):
        _sift_down(keys, ids, pos, size)


@nb.njit(cache=True)
def ssep_run(eta, p, q, rate, horizon, k0, k1):
    """Advance ``eta`` (uint8, in place) to time ``horizon``; returns (events, ties)."""
    n = eta.shape[0]
    n_streams = n + 1
    codes = np.empty(n_streams, np.int64)
    codes[0] = _F_LEFT
    codes[1] = _F_RIGHT
    for i in range(1, n):
        codes[1 + i] = _F_EDGE | i
    counts = np.zeros(n_streams, np.int64)
    keys = np.empty(n_streams, np.float64)
    ids = np.arange(n_streams)
    for s in range(n_streams):
        keys[s] = exponential(k0, k1, codes[s], 0, rate)
        counts[s] = 1
    _heapify(keys, ids)
    last = 0.0
    events = 0
    ties = 0
    while True:
        t = keys[0]
        s = ids[0]
        if t > horizon:
            break
        if t <= last and events > 0:
            t = np.nextafter(last, np.inf)
            ties += 1
            if t > horizon:
                break
        last = t
        events += 1
        if s == 0:
            u = uniform(k0, k1, _F_LEFT_MARK, counts[0] - 1)
            eta[0] = 1 if u < p else 0
        elif s == 1:
            u = uniform(k0, k1, _F_RIGHT_MARK, counts[1] - 1)
            eta[n - 1] = 1 if u < q else 0
        else:
            i = s - 1
            a = eta[i - 1]
            eta[i - 1] = eta[i]
            eta[i] = a
        keys[0] = t + exponential(k0, k1, codes[s], counts[s], rate)
        counts[s] += 1
        _sift_down(keys, ids, 0, n_streams)
    return events, ties


@nb.njit(cache=True)
def ssep_batch(eta0, p, q, rate, horizon, k0, replica0, replicas):
    n = eta0.shape[0]
    out = np.empty((replicas, n), np.uint8)
    ties = 0
    for r in range(replicas):
        eta = eta0.copy()
        _, tr = ssep_run(eta, p, q, rate, horizon, k0, np.uint64(replica0 + r))
        ties += tr
        out[r] = eta
    return out, ties


@nb.njit(cache=True)
def skeleton_streams(n, rate, horizon, k0, k1):
    """Merged, strictly increasing skeleton events: (times, codes, ties)."""
    parts = []
    part_codes = []
    left = stream_times(k0, k1, _F_LEFT, rate, horizon)
    parts.append(left)
    part_codes.append(SK_LEFT)
    right = stream_times(k0, k1, _F_RIGHT, rate, horizon)
    parts.append(right)
    part_codes.append(SK_RIGHT)
    for i in range(1, n):
        parts.append(stream_times(k0, k1, _F_GREEN | i, rate, horizon))
        part_codes.append(1 + i)
    total = 0
    for a in parts:
        total += a.shape[0]
    times = np.empty(total, np.float64)
    codes = np.empty(total, np.int64)
    k = 0
    for j in range(len(parts)):
        a = parts[j]
        for v in a:
            times[k] = v
            codes[k] = part_codes[j]
            k += 1
    order = np.argsort(times, kind="mergesort")
    times = times[order]
    codes = codes[order]
    ties = 0
    for k in range(1, total):
        if times[k] <= times[k - 1]:
            times[k] = np.nextafter(times[k - 1], np.inf)
            ties += 1
    return times, codes, ties


@nb.njit(cache=True)
def green_path(green0, sk_codes):
    """Green indicator after each skeleton event, and the crossing flag of each event.

    Row 0 of the returned matrix is the initial green set.
    """
    n = green0.shape[0]
    m = sk_codes.shape[0]
    path = np.empty((m + 1, n), np.uint8)
    crossing = np.zeros(m, np.uint8)
    g = green0.copy()
    path[0] = g
    for e in range(m):
        c = sk_codes[e]
        if c == SK_LEFT:
            g[0] = 0
        elif c == SK_RIGHT:
            if g[n - 1] == 0:
                crossing[e] = 1
            g[n - 1] = 1
        else:
            i = c - 1
            if g[i - 1] == 1 or g[i] == 1:
                a = g[i - 1]
                g[i - 1] = g[i]
                g[i] = a
        path[e + 1] = g
    return path, crossing


@nb.njit(cache=True)
def _record(out, row, occ, color, n, crossings):
    r = 0
    b = 0
    for site in range(n):
        c = color[occ[site]]
        if c == RED:
            r += 1
        elif c == BLUE:
            b += 1
    out[row, 0] = r
    out[row, 1] = b
    out[row, 2] = n - r - b
    out[row, 3] = crossings


@nb.njit(cache=True)
def replay(pos, color, rate, horizon, sk_times, sk_codes, k0, k1, grid, counts_out, walk_site, walk_kill):
    """Run the colored interchange process on [0, horizon] under a fixed skeleton.

    ``pos`` (individual -> site) and ``color`` are updated in place. Bulk
    clocks are drawn from key (k0, k1). ``counts_out[g]`` receives
    (|R|, |B|, |G|, L) at ``grid[g]`` (state after all events at times <= grid[g]).

    Walk bookkeeping: every initially non-green individual i starts walk i;
    each recoloring of a green individual at site 1 starts walk n + k. A walk
    ends when its individual is recolored green at site N, at crossing number
    l (1-based), stored in ``walk_kill``; surviving walks record their final
    1-based site in ``walk_site``. Returns (crossings, births, ties).
    """
    n = pos.shape[0]
    occ = np.empty(n, np.int64)
    for ind in range(n):
        occ[pos[ind]] = ind
    walk_of = np.full(n, -1, np.int64)
    for ind in range(n):
        if color[ind] != GREEN_COLOR:
            walk_of[ind] = ind
    walk_site[:] = 0
    walk_kill[:] = 0

    n_bulk = n - 1
    codes = np.empty(n_bulk, np.int64)
    counts = np.zeros(n_bulk, np.int64)
    keys = np.empty(n_bulk, np.float64)
    ids = np.arange(n_bulk)
    for s in range(n_bulk):
        codes[s] = _F_BULK | (s + 1)
        keys[s] = exponential(k0, k1, codes[s], 0, rate)
        counts[s] = 1
    _heapify(keys, ids)

    n_grid = grid.shape[0]
    gi = 0
    j = 0
    m = sk_times.shape[0]
    last = -1.0
    crossings = 0
    births = 0
    ties = 0
    while True:
        ts = sk_times[j] if j < m else np.inf
        tb = keys[0] if n_bulk > 0 else np.inf
        from_skeleton = ts <= tb
        t = ts if from_skeleton else tb
        if not from_skeleton and tb <= last:
            t = np.nextafter(last, np.inf)
            ties += 1
        if t > horizon:
            break
        while gi < n_grid and grid[gi] < t:
            _record(counts_out, gi, occ, color, n, crossings)
            gi += 1
        last = t
        if from_skeleton:
            c = sk_codes[j]
            j += 1
            if c == SK_LEFT:
                ind = occ[0]
                if color[ind] == GREEN_COLOR:
                    walk_of[ind] = n + births
                    births += 1
                color[ind] = BLUE
            elif c == SK_RIGHT:
                ind = occ[n - 1]
                if color[ind] != GREEN_COLOR:
                    crossings += 1
                    w = walk_of[ind]
                    if w >= 0 and w < walk_kill.shape[0]:
                        walk_kill[w] = crossings
                    walk_of[ind] = -1
                color[ind] = GREEN_COLOR
            else:
                i = c - 1
                a = occ[i - 1]
                b = occ[i]
                if color[a] == GREEN_COLOR or color[b] == GREEN_COLOR:
                    occ[i - 1] = b
                    occ[i] = a
                    pos[a] = i
                    pos[b] = i - 1
        else:
            s = ids[0]
            i = s + 1
            a = occ[i - 1]
            b = occ[i]
            if color[a] != GREEN_COLOR and color[b] != GREEN_COLOR:
                occ[i - 1] = b
                occ[i] = a
                pos[a] = i
                pos[b] = i - 1
            keys[0] = t + exponential(k0, k1, codes[s], counts[s], rate)
            counts[s] += 1
            _sift_down(keys, ids, 0, n_bulk)
    while gi < n_grid:
        _record(counts_out, gi, occ, color, n, crossings)
        gi += 1
    for ind in range(n):
        w = walk_of[ind]
        if w >= 0 and w < walk_site.shape[0]:
            walk_site[w] = pos[ind] + 1
    return crossings, births, ties


@nb.njit(cache=True)
def interchange_batch(pos0, color0, rate, horizon, k0, replica0, replicas, grid):
    """Independent full runs (fresh skeleton and bulk clocks per replica).

    Returns per-replica (|R|,|B|,|G|,L) on the grid, the individual at each
    site, and the color at each site at the horizon.
    """
    n = pos0.shape[0]
    n_grid = grid.shape[0]
    counts = np.empty((replicas, n_grid, 4), np.int64)
    site_ind = np.empty((replicas, n), np.int64)
    site_color = np.empty((replicas, n), np.int8)
    dummy = np.zeros(0, np.int64)
    ties = 0
    for r in range(replicas):
        k1 = np.uint64(replica0 + r)
        sk_t, sk_c, tsk = skeleton_streams(n, rate, horizon, k0, k1)
        pos = pos0.copy()
        color = color0.copy()
        _, _, tr = replay(pos, color, rate, horizon, sk_t, sk_c, k0, k1, grid, counts[r], dummy, dummy)
        ties += tsk + tr
        for ind in range(n):
            site_ind[r, pos[ind]] = ind
            site_color[r, pos[ind]] = color[ind]
    return counts, site_ind, site_color, ties


@nb.njit(cache=True)
def resample_batch(pos0, color0, rate, horizon, sk_times, sk_codes, k0, replica0, replicas, grid, max_walks):
    """Fresh bulk clocks under one fixed skeleton, many times."""
    n = pos0.shape[0]
    n_grid = grid.shape[0]
    counts = np.empty((replicas, n_grid, 4), np.int64)
    red = np.empty((replicas, n), np.uint8)
    walk_site = np.zeros((replicas, max_walks), np.int64)
    walk_kill = np.zeros((replicas, max_walks), np.int64)
    ties = 0
    for r in range(replicas):
        pos = pos0.copy()
        color = color0.copy()
        _, _, tr = replay(pos, color, rate, horizon, sk_times, sk_codes, k0, np.uint64(replica0 + r),
                          grid, counts[r], walk_site[r], walk_kill[r])
        ties += tr
        for ind in range(n):
            red[r, pos[ind]] = 1 if color[ind] == RED else 0
    return counts, red, walk_site, walk_kill, ties


@nb.njit(cache=True)
def pushforward_batch(eta, site_ind, site_color, p, q, k0, replica0):
    """Assemble configurations from interchange states and Bernoulli fields."""
    replicas, n = site_ind.shape
    out = np.empty((replicas, n), np.uint8)
    for r in range(replicas):
        k1 = np.uint64(replica0 + r)
        for site in range(n):
            c = site_color[r, site]
            if c == RED:
                out[r, site] = eta[site_ind[r, site]]
            elif c == BLUE:
                out[r, site] = 1 if uniform(k0, k1, _F_FIELD_B | site, 0) < p else 0
            else:
                out[r, site] = 1 if uniform(k0, k1, _F_FIELD_G | site, 0) < q else 0
    return out


@nb.njit(cache=True)
def skeleton_crossing_batch(n, green0, rate, horizon, k0, replica0, replicas, target):
    """Per replica: crossings by ``horizon`` and the time the count reaches ``target`` (inf if never)."""
    final = np.empty(replicas, np.int64)
    hit = np.full(replicas, np.inf)
    for r in range(replicas):
        sk_t, sk_c, _ = skeleton_streams(n, rate, horizon, k0, np.uint64(replica0 + r))
        _, crossing = green_path(green0, sk_c)
        total = 0
        for e in range(crossing.shape[0]):
            if crossing[e]:
                total += 1
                if total == target:
                    hit[r] = sk_t[e]
        final[r] = total
    return final, hit


@nb.njit(cache=True)
def walk_survival_batch(n, start, rate, horizon, k0, replica0, replicas):
    """Indicator that a walk on {0..n+1} jumping each way at ``rate`` avoids both ends up to ``horizon``."""
    out = np.zeros(replicas, np.uint8)
    code_gap = _F_WALK
    code_dir = _F_WALK | 1
    for r in range(replicas):
        k1 = np.uint64(replica0 + r)
        x = start
        if x <= 0 or x >= n + 1:
            continue
        t = 0.0
        k = 0
        alive = True
        while True:
            t += exponential(k0, k1, code_gap, k, 2.0 * rate)
            if t > horizon:
                break
            if uniform(k0, k1, code_dir, k) < 0.5:
                x -= 1
            else:
                x += 1
            k += 1
            if x == 0 or x == n + 1:
                alive = False
                break
        out[r] = 1 if alive else 0
    return out
