"""Numba kernels for the hot paths: grid raycasting, scan rasterization,
A* planning and candidate-visibility scoring.

All kernels work on continuous grid coordinates (uf, vf) where cell (u, v)
spans [u, u+1) x [v, v+1); callers convert from world meters. Traversal is
Amanatides-Woo: step to the nearest cell boundary, axis ties resolved toward
u, which keeps every kernel deterministic.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

NO_HIT = np.inf


@njit(cache=True)
def first_hit(occ, uf0, vf0, duf, dvf, tmax):
    """March one ray through `occ` (uint8 [v,u]) until an occupied cell.

    (duf, dvf) is the direction per unit t; returns (t_enter, u, v) of the
    first occupied cell, or (inf, -1, -1) if none within tmax or in bounds.
    The start cell is not tested.
    """
    height, width = occ.shape
    u = int(math.floor(uf0))
    v = int(math.floor(vf0))
    su = 1 if duf > 0.0 else -1
    sv = 1 if dvf > 0.0 else -1
    if duf != 0.0:
        tdu = abs(1.0 / duf)
        tmu = ((u + (1 if su > 0 else 0)) - uf0) / duf
    else:
        tdu = np.inf
        tmu = np.inf
    if dvf != 0.0:
        tdv = abs(1.0 / dvf)
        tmv = ((v + (1 if sv > 0 else 0)) - vf0) / dvf
    else:
        tdv = np.inf
        tmv = np.inf
    while True:
        if tmu <= tmv:
            t = tmu
            u += su
            tmu += tdu
        else:
            t = tmv
            v += sv
            tmv += tdv
        if t > tmax:
            return NO_HIT, -1, -1
        if u < 0 or u >= width or v < 0 or v >= height:
            return NO_HIT, -1, -1
        if occ[v, u]:
            return t, u, v


@njit(cache=True)
def raycast_scan(occ, uf0, vf0, dufs, dvfs, tmax):
    """Batch first_hit over rays; returns (depths, hit_us, hit_vs)."""
    n = dufs.shape[0]
    depths = np.empty(n, dtype=np.float64)
    hit_us = np.full(n, -1, dtype=np.int32)
    hit_vs = np.full(n, -1, dtype=np.int32)
    for i in range(n):
        t, u, v = first_hit(occ, uf0, vf0, dufs[i], dvfs[i], tmax)
        depths[i] = t
        hit_us[i] = u
        hit_vs[i] = v
    return depths, hit_us, hit_vs


@njit(cache=True)
def rasterize_scan(occ_out, explored_out, uf0, vf0, dufs, dvfs, depths, tmax):
    """Mark ray-traversed cells into a local map.

    Cells entered strictly before a ray's depth become free+explored (the
    start cell included); each finite-depth ray's hit cell becomes
    occupied+explored afterwards, so occupied wins over free within a scan.
    """
    height, width = occ_out.shape
    n = dufs.shape[0]
    for i in range(n):
        clip = min(depths[i], tmax)
        u = int(math.floor(uf0))
        v = int(math.floor(vf0))
        duf = dufs[i]
        dvf = dvfs[i]
        su = 1 if duf > 0.0 else -1
        sv = 1 if dvf > 0.0 else -1
        if duf != 0.0:
            tdu = abs(1.0 / duf)
            tmu = ((u + (1 if su > 0 else 0)) - uf0) / duf
        else:
            tdu = np.inf
            tmu = np.inf
        if dvf != 0.0:
            tdv = abs(1.0 / dvf)
            tmv = ((v + (1 if sv > 0 else 0)) - vf0) / dvf
        else:
            tdv = np.inf
            tmv = np.inf
        t = 0.0
        while t < clip - 1e-9:
            if 0 <= u < width and 0 <= v < height:
                explored_out[v, u] = 1
                occ_out[v, u] = 0
            if tmu <= tmv:
                t = tmu
                u += su
                tmu += tdu
            else:
                t = tmv
                v += sv
                tmv += tdv
    for i in range(n):
        d = depths[i]
        if d < tmax:
            hu = int(math.floor(uf0 + dufs[i] * (d + 1e-9)))
            hv = int(math.floor(vf0 + dvfs[i] * (d + 1e-9)))
            if 0 <= hu < width and 0 <= hv < height:
                explored_out[hv, hu] = 1
                occ_out[hv, hu] = 1


@njit(cache=True)
def visibility_gains(blocked, cov_w, diff_w, gu, gv, dus, dvs, r_cells, stamp, stamp_val):
    """Sum cov_w and diff_w over cells visible from candidate cell (gu, gv).

    Visible = union of cells traversed by rays from the candidate's center
    toward each rim direction (dus, dvs), up to r_cells, stopping before any
    blocked cell. `stamp`/`stamp_val` deduplicate across rays.
    """
    height, width = blocked.shape
    uf0 = gu + 0.5
    vf0 = gv + 0.5
    cov = 0.0
    diff = 0.0
    stamp[gv, gu] = stamp_val
    cov += cov_w[gv, gu]
    diff += diff_w[gv, gu]
    for i in range(dus.shape[0]):
        duf = dus[i]
        dvf = dvs[i]
        u = gu
        v = gv
        su = 1 if duf > 0.0 else -1
        sv = 1 if dvf > 0.0 else -1
        if duf != 0.0:
            tdu = abs(1.0 / duf)
            tmu = ((u + (1 if su > 0 else 0)) - uf0) / duf
        else:
            tdu = np.inf
            tmu = np.inf
        if dvf != 0.0:
            tdv = abs(1.0 / dvf)
            tmv = ((v + (1 if sv > 0 else 0)) - vf0) / dvf
        else:
            tdv = np.inf
            tmv = np.inf
        while True:
            if tmu <= tmv:
                t = tmu
                u += su
                tmu += tdu
            else:
                t = tmv
                v += sv
                tmv += tdv
            if t > r_cells:
                break
            if u < 0 or u >= width or v < 0 or v >= height:
                break
            if blocked[v, u]:
                break
            if stamp[v, u] != stamp_val:
                stamp[v, u] = stamp_val
                cov += cov_w[v, u]
                diff += diff_w[v, u]
    return cov, diff


_SQRT2 = math.sqrt(2.0)


@njit(cache=True)
def astar_path(blocked, unknown, start_u, start_v, goal_u, goal_v, unknown_mult):
    """A* with 8-connectivity over a blocked/unknown cell classification.

    Step cost: 1 straight / sqrt(2) diagonal, multiplied by `unknown_mult`
    when the destination cell is unknown. Blocked cells are impassable (the
    start cell is exempt). Returns (path (n,2) int32 array of (u, v), cost);
    an empty path means no route. Euclidean heuristic, admissible because
    the cheapest possible step multiplier is 1.
    """
    height, width = blocked.shape
    n_cells = height * width
    empty = np.empty((0, 2), dtype=np.int32)
    if blocked[goal_v, goal_u]:
        return empty, np.inf
    start = start_v * width + start_u
    goal = goal_v * width + goal_u
    if start == goal:
        out = np.empty((1, 2), dtype=np.int32)
        out[0, 0] = start_u
        out[0, 1] = start_v
        return out, 0.0

    g = np.full(n_cells, np.inf, dtype=np.float64)
    came = np.full(n_cells, -1, dtype=np.int32)
    closed = np.zeros(n_cells, dtype=np.uint8)

    cap = 1024
    hf = np.empty(cap, dtype=np.float64)  # f = g + h
    hc = np.empty(cap, dtype=np.int64)  # insertion counter, breaks f ties
    hn = np.empty(cap, dtype=np.int32)  # node
    size = 0
    counter = 0

    dus = (1, 1, 0, -1, -1, -1, 0, 1)
    dvs = (0, 1, 1, 1, 0, -1, -1, -1)

    g[start] = 0.0
    h0 = math.hypot(float(goal_u - start_u), float(goal_v - start_v))
    hf[0] = h0
    hc[0] = 0
    hn[0] = start
    size = 1
    counter = 1

    while size > 0:
        # pop min (f, counter)
        top_f = hf[0]
        top_c = hc[0]
        node = hn[0]
        size -= 1
        if size > 0:
            # sift down the last element
            cf = hf[size]
            cc = hc[size]
            cn = hn[size]
            pos = 0
            while True:
                child = 2 * pos + 1
                if child >= size:
                    break
                right = child + 1
                if right < size and (hf[right] < hf[child] or
                                     (hf[right] == hf[child] and hc[right] < hc[child])):
                    child = right
                if hf[child] < cf or (hf[child] == cf and hc[child] < cc):
                    hf[pos] = hf[child]
                    hc[pos] = hc[child]
                    hn[pos] = hn[child]
                    pos = child
                else:
                    break
            hf[pos] = cf
            hc[pos] = cc
            hn[pos] = cn

        if closed[node]:
            continue
        closed[node] = 1
        if node == goal:
            # reconstruct
            length = 1
            cur = node
            while came[cur] >= 0:
                cur = came[cur]
                length += 1
            out = np.empty((length, 2), dtype=np.int32)
            cur = node
            for k in range(length - 1, -1, -1):
                out[k, 0] = cur % width
                out[k, 1] = cur // width
                cur = came[cur]
            return out, g[node]

        nu = node % width
        nv = node // width
        for k in range(8):
            uu = nu + dus[k]
            vv = nv + dvs[k]
            if uu < 0 or uu >= width or vv < 0 or vv >= height:
                continue
            if blocked[vv, uu]:
                continue
            nb = vv * width + uu
            if closed[nb]:
                continue
            base = _SQRT2 if (dus[k] != 0 and dvs[k] != 0) else 1.0
            cost = base * unknown_mult if unknown[vv, uu] else base
            ng = g[node] + cost
            if ng < g[nb]:
                g[nb] = ng
                came[nb] = node
                nf = ng + math.hypot(float(goal_u - uu), float(goal_v - vv))
                if size >= cap:
                    new_cap = cap * 2
                    nhf = np.empty(new_cap, dtype=np.float64)
                    nhc = np.empty(new_cap, dtype=np.int64)
                    nhn = np.empty(new_cap, dtype=np.int32)
                    nhf[:size] = hf[:size]
                    nhc[:size] = hc[:size]
                    nhn[:size] = hn[:size]
                    hf = nhf
                    hc = nhc
                    hn = nhn
                    cap = new_cap
                # sift up
                pos = size
                size += 1
                while pos > 0:
                    parent = (pos - 1) // 2
                    if hf[parent] > nf or (hf[parent] == nf and hc[parent] > counter):
                        hf[pos] = hf[parent]
                        hc[pos] = hc[parent]
                        hn[pos] = hn[parent]
                        pos = parent
                    else:
                        break
                hf[pos] = nf
                hc[pos] = counter
                hn[pos] = nb
                counter += 1
    return empty, np.inf
