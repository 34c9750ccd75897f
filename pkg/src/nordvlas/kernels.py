"""Compiled particle/lattice kernels (cloud-in-cell scatter and gather, RK4, leapfrog).

Conventions: lattices are C-ordered (n+1)^3 arrays indexed [i, j, k] along
(x, y, z); ``lo`` is the lattice corner and ``inv_dx`` the inverse spacing.
Kernels that can meet out-of-domain particles return a count of offenders
instead of raising, so the caller can produce a proper error.
"""

import numpy as np
from numba import njit, prange


@njit(inline="always")
def _cell(u, n_cells):
    # interior cells only: 1 <= i0 <= n_cells - 2
    i0 = int(np.floor(u))
    if i0 == n_cells - 1 and u == n_cells - 1:
        i0 = n_cells - 2
    return i0, u - i0


@njit(cache=True)
def _scatter_chunk(pos, w, lo, inv_dx, n_cells, out, start, stop):
    bad = 0
    nq = w.shape[1]
    for n in range(start, stop):
        ux = (pos[n, 0] - lo[0]) * inv_dx
        uy = (pos[n, 1] - lo[1]) * inv_dx
        uz = (pos[n, 2] - lo[2]) * inv_dx
        i, fx = _cell(ux, n_cells)
        j, fy = _cell(uy, n_cells)
        k, fz = _cell(uz, n_cells)
        if i < 1 or j < 1 or k < 1 or i > n_cells - 2 or j > n_cells - 2 or k > n_cells - 2:
            bad += 1
            continue
        gx0 = 1.0 - fx
        gy0 = 1.0 - fy
        gz0 = 1.0 - fz
        for q in range(nq):
            wq = w[n, q]
            if wq == 0.0:
                continue
            out[q, i, j, k] += wq * gx0 * gy0 * gz0
            out[q, i + 1, j, k] += wq * fx * gy0 * gz0
            out[q, i, j + 1, k] += wq * gx0 * fy * gz0
            out[q, i, j, k + 1] += wq * gx0 * gy0 * fz
            out[q, i + 1, j + 1, k] += wq * fx * fy * gz0
            out[q, i + 1, j, k + 1] += wq * fx * gy0 * fz
            out[q, i, j + 1, k + 1] += wq * gx0 * fy * fz
            out[q, i + 1, j + 1, k + 1] += wq * fx * fy * fz
    return bad


@njit(parallel=True, cache=True)
def scatter(pos, w, lo, inv_dx, n_cells, n_chunks):
    """CIC-deposit per-particle weights ``w`` (n, q) onto q lattices.

    Each chunk owns a private accumulator; the chunks are summed in order,
    so the result depends only on ``n_chunks``, not on scheduling.
    """
    npart = pos.shape[0]
    nq = w.shape[1]
    m = n_cells + 1
    acc = np.zeros((n_chunks, nq, m, m, m))
    bads = np.zeros(n_chunks, dtype=np.int64)
    size = (npart + n_chunks - 1) // n_chunks
    for c in prange(n_chunks):
        start = c * size
        stop = min(npart, start + size)
        if start < stop:
            bads[c] = _scatter_chunk(pos, w, lo, inv_dx, n_cells, acc[c], start, stop)
    out = acc[0].copy()
    for c in range(1, n_chunks):
        out += acc[c]
    return out, bads.sum()


@njit(inline="always")
def _gather_one(lat, q, i, j, k, fx, fy, fz):
    gx0 = 1.0 - fx
    gy0 = 1.0 - fy
    gz0 = 1.0 - fz
    return (
        lat[q, i, j, k] * gx0 * gy0 * gz0
        + lat[q, i + 1, j, k] * fx * gy0 * gz0
        + lat[q, i, j + 1, k] * gx0 * fy * gz0
        + lat[q, i, j, k + 1] * gx0 * gy0 * fz
        + lat[q, i + 1, j + 1, k] * fx * fy * gz0
        + lat[q, i + 1, j, k + 1] * fx * gy0 * fz
        + lat[q, i, j + 1, k + 1] * gx0 * fy * fz
        + lat[q, i + 1, j + 1, k + 1] * fx * fy * fz
    )


@njit(parallel=True, cache=True)
def gather(lat, pos, lo, inv_dx, n_cells):
    """Trilinear interpolation of lattices ``lat`` (q, m, m, m) at ``pos`` (n, 3).

    Returns (values (n, q), number of positions outside the interior).
    """
    npart = pos.shape[0]
    nq = lat.shape[0]
    out = np.empty((npart, nq))
    bad = np.zeros(npart, dtype=np.int64)
    for n in prange(npart):
        i, fx = _cell((pos[n, 0] - lo[0]) * inv_dx, n_cells)
        j, fy = _cell((pos[n, 1] - lo[1]) * inv_dx, n_cells)
        k, fz = _cell((pos[n, 2] - lo[2]) * inv_dx, n_cells)
        if i < 1 or j < 1 or k < 1 or i > n_cells - 2 or j > n_cells - 2 or k > n_cells - 2:
            bad[n] = 1
            for q in range(nq):
                out[n, q] = np.nan
            continue
        for q in range(nq):
            out[n, q] = _gather_one(lat, q, i, j, k, fx, fy, fz)
    return out, bad.sum()


@njit(inline="always")
def _rhs(lat, lo, inv_dx, n_cells, x0, x1, x2, p0, p1, p2, out):
    # lat holds (dphi_dt, gx, gy, gz); returns False if outside the interior
    i, fx = _cell((x0 - lo[0]) * inv_dx, n_cells)
    j, fy = _cell((x1 - lo[1]) * inv_dx, n_cells)
    k, fz = _cell((x2 - lo[2]) * inv_dx, n_cells)
    if i < 1 or j < 1 or k < 1 or i > n_cells - 2 or j > n_cells - 2 or k > n_cells - 2:
        return False
    dt_phi = _gather_one(lat, 0, i, j, k, fx, fy, fz)
    g0 = _gather_one(lat, 1, i, j, k, fx, fy, fz)
    g1 = _gather_one(lat, 2, i, j, k, fx, fy, fz)
    g2 = _gather_one(lat, 3, i, j, k, fx, fy, fz)
    inv_gam = 1.0 / np.sqrt(1.0 + p0 * p0 + p1 * p1 + p2 * p2)
    v0 = p0 * inv_gam
    v1 = p1 * inv_gam
    v2 = p2 * inv_gam
    s_phi = dt_phi + v0 * g0 + v1 * g1 + v2 * g2
    out[0] = v0
    out[1] = v1
    out[2] = v2
    out[3] = -s_phi * p0 - inv_gam * g0
    out[4] = -s_phi * p1 - inv_gam * g1
    out[5] = -s_phi * p2 - inv_gam * g2
    return True


@njit(parallel=True, cache=True)
def rk4_push(x, p, lat, lo, inv_dx, n_cells, dt):
    """Classical RK4 on the characteristic system in a frozen lattice field, in place."""
    npart = x.shape[0]
    bad = np.zeros(npart, dtype=np.int64)
    for n in prange(npart):
        k1 = np.empty(6)
        k2 = np.empty(6)
        k3 = np.empty(6)
        k4 = np.empty(6)
        y = np.empty(6)
        y[0] = x[n, 0]
        y[1] = x[n, 1]
        y[2] = x[n, 2]
        y[3] = p[n, 0]
        y[4] = p[n, 1]
        y[5] = p[n, 2]
        ok = _rhs(lat, lo, inv_dx, n_cells, y[0], y[1], y[2], y[3], y[4], y[5], k1)
        h = 0.5 * dt
        ok = ok and _rhs(lat, lo, inv_dx, n_cells,
                         y[0] + h * k1[0], y[1] + h * k1[1], y[2] + h * k1[2],
                         y[3] + h * k1[3], y[4] + h * k1[4], y[5] + h * k1[5], k2)
        ok = ok and _rhs(lat, lo, inv_dx, n_cells,
                         y[0] + h * k2[0], y[1] + h * k2[1], y[2] + h * k2[2],
                         y[3] + h * k2[3], y[4] + h * k2[4], y[5] + h * k2[5], k3)
        ok = ok and _rhs(lat, lo, inv_dx, n_cells,
                         y[0] + dt * k3[0], y[1] + dt * k3[1], y[2] + dt * k3[2],
                         y[3] + dt * k3[3], y[4] + dt * k3[4], y[5] + dt * k3[5], k4)
        if not ok:
            bad[n] = 1
            continue
        c = dt / 6.0
        x[n, 0] = y[0] + c * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        x[n, 1] = y[1] + c * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        x[n, 2] = y[2] + c * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        p[n, 0] = y[3] + c * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
        p[n, 1] = y[4] + c * (k1[4] + 2.0 * k2[4] + 2.0 * k3[4] + k4[4])
        p[n, 2] = y[5] + c * (k1[5] + 2.0 * k2[5] + 2.0 * k3[5] + k4[5])
    return bad.sum()


@njit(parallel=True, cache=True)
def laplacian(phi, inv_dx2):
    """7-point Laplacian on interior nodes; boundary layer left at zero."""
    m = phi.shape[0]
    out = np.zeros_like(phi)
    for i in prange(1, m - 1):
        for j in range(1, m - 1):
            for k in range(1, m - 1):
                out[i, j, k] = inv_dx2 * (
                    phi[i + 1, j, k] + phi[i - 1, j, k]
                    + phi[i, j + 1, k] + phi[i, j - 1, k]
                    + phi[i, j, k + 1] + phi[i, j, k - 1]
                    - 6.0 * phi[i, j, k]
                )
    return out


@njit(parallel=True, cache=True)
def leapfrog(phi, phi_prev, mu, dt, inv_dx2):
    """phi_new = 2 phi - phi_prev + dt^2 (lap phi - mu), boundary nodes pinned to zero."""
    m = phi.shape[0]
    out = np.zeros_like(phi)
    dt2 = dt * dt
    for i in prange(1, m - 1):
        for j in range(1, m - 1):
            for k in range(1, m - 1):
                lap = inv_dx2 * (
                    phi[i + 1, j, k] + phi[i - 1, j, k]
                    + phi[i, j + 1, k] + phi[i, j - 1, k]
                    + phi[i, j, k + 1] + phi[i, j, k - 1]
                    - 6.0 * phi[i, j, k]
                )
                out[i, j, k] = 2.0 * phi[i, j, k] - phi_prev[i, j, k] + dt2 * (lap - mu[i, j, k])
    return out
