"""Compiled kernels: ray/triangle casting and exact farthest point sampling."""
from __future__ import annotations

import numpy as np
from numba import njit

_EPS = 1e-12


@njit(cache=True, nogil=True, inline="always")
def _slab_axis(o, d, lo, hi, tmin, tmax):
    if abs(d) < _EPS:
        if o < lo or o > hi:
            return 1.0, 0.0
        return tmin, tmax
    inv = 1.0 / d
    t0 = (lo - o) * inv
    t1 = (hi - o) * inv
    if t0 > t1:
        t0, t1 = t1, t0
    return max(tmin, t0), min(tmax, t1)


@njit(cache=True, nogil=True)
def cast_rays(origin, dirs, v0, e1, e2, box_lo, box_hi, box_start, box_end,
              box_rot, box_trans, center, radius):
    """Nearest triangle hit per ray.

    Triangles are given in world space (``v0``, edges ``e1``, ``e2``) and grouped
    by box. Each box also carries its local axis-aligned bounds and the world->local
    rigid map; a ray is tested against a box's triangles only if it enters the box,
    and against any box only if it passes the bounding sphere (``center``, ``radius``).
    Returns hit distance (inf on miss) and hit triangle index (-1 on miss).
    """
    n = dirs.shape[0]
    nb = box_lo.shape[0]
    pad = 1e-9
    t_out = np.full(n, np.inf)
    tri_out = np.full(n, -1, dtype=np.int64)
    ox, oy, oz = origin[0], origin[1], origin[2]
    ol = np.empty((nb, 3))
    for b in range(nb):
        for k in range(3):
            ol[b, k] = (box_rot[b, k, 0] * ox + box_rot[b, k, 1] * oy
                        + box_rot[b, k, 2] * oz + box_trans[b, k])
    cx, cy, cz = ox - center[0], oy - center[1], oz - center[2]
    occ = cx * cx + cy * cy + cz * cz - radius * radius
    for r in range(n):
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        proj = cx * dx + cy * dy + cz * dz
        if occ > 0.0 and (proj > 0.0 or proj * proj < occ):
            continue
        best = np.inf
        best_tri = -1
        for b in range(nb):
            R = box_rot[b]
            lx = R[0, 0] * dx + R[0, 1] * dy + R[0, 2] * dz
            ly = R[1, 0] * dx + R[1, 1] * dy + R[1, 2] * dz
            lz = R[2, 0] * dx + R[2, 1] * dy + R[2, 2] * dz
            # Pad bounds slightly so edge-grazing rays still reach the triangle test.
            tmin, tmax = _slab_axis(ol[b, 0], lx, box_lo[b, 0] - pad, box_hi[b, 0] + pad, 0.0, best)
            tmin, tmax = _slab_axis(ol[b, 1], ly, box_lo[b, 1] - pad, box_hi[b, 1] + pad, tmin, tmax)
            tmin, tmax = _slab_axis(ol[b, 2], lz, box_lo[b, 2] - pad, box_hi[b, 2] + pad, tmin, tmax)
            if tmin > tmax:
                continue
            for i in range(box_start[b], box_end[b]):
                # Moller-Trumbore, two-sided.
                ax, ay, az = e1[i, 0], e1[i, 1], e1[i, 2]
                bx, by, bz = e2[i, 0], e2[i, 1], e2[i, 2]
                px = dy * bz - dz * by
                py = dz * bx - dx * bz
                pz = dx * by - dy * bx
                det = ax * px + ay * py + az * pz
                if abs(det) < _EPS:
                    continue
                inv = 1.0 / det
                tx, ty, tz = ox - v0[i, 0], oy - v0[i, 1], oz - v0[i, 2]
                u = (tx * px + ty * py + tz * pz) * inv
                if u < 0.0 or u > 1.0:
                    continue
                qx = ty * az - tz * ay
                qy = tz * ax - tx * az
                qz = tx * ay - ty * ax
                v = (dx * qx + dy * qy + dz * qz) * inv
                if v < 0.0 or u + v > 1.0:
                    continue
                t = (bx * qx + by * qy + bz * qz) * inv
                if t > _EPS and t < best:
                    best = t
                    best_tri = i
        t_out[r] = best
        tri_out[r] = best_tri
    return t_out, tri_out


@njit(cache=True, nogil=True)
def _sqdist(p, q):
    dx = p[0] - q[0]
    dy = p[1] - q[1]
    dz = p[2] - q[2]
    return dx * dx + dy * dy + dz * dz


@njit(cache=True, nogil=True)
def fps_grid(pts, m, first, cell_of, n_cells):
    """Greedy farthest point sampling, exact, accelerated by a uniform grid.

    ``cell_of`` maps each point to a grid cell. A cell is revisited only when the
    newly selected point can be nearer to some member than that member's current
    nearest-selected distance, bounded via the cell's bounding box. Ties go to
    the smallest point index, exactly as a plain greedy scan would.
    """
    n = pts.shape[0]
    # Bucket points by cell, preserving index order inside a cell.
    counts = np.zeros(n_cells + 1, dtype=np.int64)
    for i in range(n):
        counts[cell_of[i] + 1] += 1
    for c in range(n_cells):
        counts[c + 1] += counts[c]
    order = np.empty(n, dtype=np.int64)
    fill = counts[:-1].copy()
    for i in range(n):
        c = cell_of[i]
        order[fill[c]] = i
        fill[c] += 1
    lo = np.full((n_cells, 3), np.inf)
    hi = np.full((n_cells, 3), -np.inf)
    for i in range(n):
        c = cell_of[i]
        for k in range(3):
            if pts[i, k] < lo[c, k]:
                lo[c, k] = pts[i, k]
            if pts[i, k] > hi[c, k]:
                hi[c, k] = pts[i, k]

    mind = np.full(n, np.inf)
    cmax = np.full(n_cells, -1.0)
    carg = np.full(n_cells, -1, dtype=np.int64)
    for c in range(n_cells):
        if counts[c + 1] > counts[c]:
            cmax[c] = np.inf
            carg[c] = order[counts[c]]

    out = np.empty(m, dtype=np.int64)
    sel = first
    for s in range(m):
        out[s] = sel
        p = pts[sel]
        for c in range(n_cells):
            a = counts[c]
            b = counts[c + 1]
            if b == a:
                continue
            # Squared distance from p to the cell's bounding box.
            lb = 0.0
            for k in range(3):
                if p[k] < lo[c, k]:
                    g = lo[c, k] - p[k]
                    lb += g * g
                elif p[k] > hi[c, k]:
                    g = p[k] - hi[c, k]
                    lb += g * g
            if lb >= cmax[c] and c != cell_of[sel]:
                continue
            best = -1.0
            barg = -1
            for t in range(a, b):
                i = order[t]
                if i == sel:
                    mind[i] = -1.0
                elif mind[i] >= 0.0:
                    dd = _sqdist(pts[i], p)
                    if dd < mind[i]:
                        mind[i] = dd
                if mind[i] > best or (mind[i] == best and i < barg):
                    best = mind[i]
                    barg = i
            cmax[c] = best
            carg[c] = barg if best >= 0.0 else -1
        if s + 1 == m:
            break
        best = -1.0
        sel = -1
        for c in range(n_cells):
            if carg[c] < 0:
                continue
            if cmax[c] > best or (cmax[c] == best and carg[c] < sel):
                best = cmax[c]
                sel = carg[c]
    return out
