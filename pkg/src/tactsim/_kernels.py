"""Sequential numba kernels for the particle/grid transfers.

All scatter loops run in a fixed particle order, so every run of the same
scenario is bit-identical.  The polar factor inside P2G uses a Newton
iteration (R <- (R + R^-T)/2) instead of an SVD; it converges to the same
rotation and is an order of magnitude faster for the well-conditioned
deformation gradients the inversion guard maintains.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _det3(a):
    return (a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
            - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
            + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]))


@njit(cache=True)
def _inv3(a, out):
    d = _det3(a)
    out[0, 0] = (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1]) / d
    out[0, 1] = (a[0, 2] * a[2, 1] - a[0, 1] * a[2, 2]) / d
    out[0, 2] = (a[0, 1] * a[1, 2] - a[0, 2] * a[1, 1]) / d
    out[1, 0] = (a[1, 2] * a[2, 0] - a[1, 0] * a[2, 2]) / d
    out[1, 1] = (a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]) / d
    out[1, 2] = (a[0, 2] * a[1, 0] - a[0, 0] * a[1, 2]) / d
    out[2, 0] = (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]) / d
    out[2, 1] = (a[0, 1] * a[2, 0] - a[0, 0] * a[2, 1]) / d
    out[2, 2] = (a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]) / d
    return d


@njit(cache=True)
def _polar_rotation(F):
    """Rotation factor of F (det(F) > 0) via the Newton polar iteration."""
    R = F.copy()
    Rinv = np.empty((3, 3))
    for _ in range(30):
        _inv3(R, Rinv)
        Rn = 0.5 * (R + Rinv.T)
        err = 0.0
        for i in range(3):
            for j in range(3):
                err += abs(Rn[i, j] - R[i, j])
        R = Rn
        if err < 1e-12:
            break
    return R


@njit(cache=True)
def _svd_clamp(F, lo, hi):
    """Clamp singular values of F into [lo, hi] preserving the rotation."""
    U, s, Vt = np.linalg.svd(F)
    if _det3(F) < 0.0:
        # reflections should not survive the guard; flip the smallest pair
        U[:, 2] = -U[:, 2]
        s[2] = -s[2]
    for i in range(3):
        s[i] = min(max(s[i], lo), hi)
    return (U * s) @ Vt


@njit(cache=True, inline="always")
def _stencil(xp, inv_dx, ox, oy, oz):
    """Quadratic B-spline base node and per-axis weights for one particle."""
    gx = (xp[0] - ox) * inv_dx
    gy = (xp[1] - oy) * inv_dx
    gz = (xp[2] - oz) * inv_dx
    bx = int(np.floor(gx - 0.5))
    by = int(np.floor(gy - 0.5))
    bz = int(np.floor(gz - 0.5))
    fx = gx - bx
    fy = gy - by
    fz = gz - bz
    wx = np.array([0.5 * (1.5 - fx) ** 2, 0.75 - (fx - 1.0) ** 2, 0.5 * (fx - 0.5) ** 2])
    wy = np.array([0.5 * (1.5 - fy) ** 2, 0.75 - (fy - 1.0) ** 2, 0.5 * (fy - 0.5) ** 2])
    wz = np.array([0.5 * (1.5 - fz) ** 2, 0.75 - (fz - 1.0) ** 2, 0.5 * (fz - 0.5) ** 2])
    return bx, by, bz, fx, fy, fz, wx, wy, wz


@njit(cache=True)
def p2g(x, v, F, C, m, V0, elastic, node_mass, node_mom,
        nx, ny, nz, dx, origin, dt, mu, lam):
    """Scatter particle mass and momentum (APIC + stress impulse) to nodes."""
    inv_dx = 1.0 / dx
    gamma_over_v0 = 4.0 * dt * inv_dx * inv_dx
    n = x.shape[0]
    for p in range(n):
        bx, by, bz, fx, fy, fz, wx, wy, wz = _stencil(x[p], inv_dx,
                                                      origin[0], origin[1], origin[2])
        affine = np.zeros((3, 3))
        if elastic[p]:
            Fp = F[p]
            J = _det3(Fp)
            R = _polar_rotation(Fp)
            # P F^T with P = 2 mu (F - R) + lam (J-1) J F^-T; the second
            # term times F^T collapses to a multiple of the identity
            PFt = 2.0 * mu * (Fp - R) @ Fp.T + lam * (J - 1.0) * J * np.eye(3)
            affine = m[p] * C[p] - gamma_over_v0 * V0[p] * PFt
        mv = m[p] * v[p]
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    w = wx[i] * wy[j] * wz[k]
                    node = ((bx + i) * ny + (by + j)) * nz + (bz + k)
                    dpx = (i - fx) * dx
                    dpy = (j - fy) * dx
                    dpz = (k - fz) * dx
                    node_mass[node] += w * m[p]
                    node_mom[node, 0] += w * (mv[0] + affine[0, 0] * dpx
                                              + affine[0, 1] * dpy + affine[0, 2] * dpz)
                    node_mom[node, 1] += w * (mv[1] + affine[1, 0] * dpx
                                              + affine[1, 1] * dpy + affine[1, 2] * dpz)
                    node_mom[node, 2] += w * (mv[2] + affine[2, 0] * dpx
                                              + affine[2, 1] * dpy + affine[2, 2] * dpz)


@njit(cache=True)
def scatter_mass(x, m, node_mass, nx, ny, nz, dx, origin):
    """Static-object scatter: mass only."""
    inv_dx = 1.0 / dx
    for p in range(x.shape[0]):
        bx, by, bz, fx, fy, fz, wx, wy, wz = _stencil(x[p], inv_dx,
                                                      origin[0], origin[1], origin[2])
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    w = wx[i] * wy[j] * wz[k]
                    node = ((bx + i) * ny + (by + j)) * nz + (bz + k)
                    node_mass[node] += w * m[p]


@njit(cache=True)
def grid_normalize(node_mass, node_mom, node_vel, obstacle, mass_eps):
    for node in range(node_mass.shape[0]):
        if obstacle[node] or node_mass[node] <= mass_eps:
            node_vel[node, 0] = 0.0
            node_vel[node, 1] = 0.0
            node_vel[node, 2] = 0.0
        else:
            inv_m = 1.0 / node_mass[node]
            node_vel[node, 0] = node_mom[node, 0] * inv_m
            node_vel[node, 1] = node_mom[node, 1] * inv_m
            node_vel[node, 2] = node_mom[node, 2] * inv_m


@njit(cache=True)
def g2p(x, v, F, C, alpha, node_vel, nx, ny, nz, dx, origin,
        dt, v_r, sv_lo, sv_hi, literal_affine):
    """Gather velocities, blend with the hand velocity, advect, update F.

    literal_affine=True evaluates the affine update with the particle's own
    new velocity in the node sum (comparison mode; collapses C to ~0).
    """
    inv_dx = 1.0 / dx
    four_inv_dx2 = 4.0 * inv_dx * inv_dx
    n = x.shape[0]
    for p in range(n):
        bx, by, bz, fx, fy, fz, wx, wy, wz = _stencil(x[p], inv_dx,
                                                      origin[0], origin[1], origin[2])
        vpic = np.zeros(3)
        B = np.zeros((3, 3))
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    w = wx[i] * wy[j] * wz[k]
                    node = ((bx + i) * ny + (by + j)) * nz + (bz + k)
                    dpx = (i - fx) * dx
                    dpy = (j - fy) * dx
                    dpz = (k - fz) * dx
                    for a in range(3):
                        vpic[a] += w * node_vel[node, a]
                        B[a, 0] += w * node_vel[node, a] * dpx
                        B[a, 1] += w * node_vel[node, a] * dpy
                        B[a, 2] += w * node_vel[node, a] * dpz
        a_p = alpha[p]
        vnew = a_p * vpic + (1.0 - a_p) * v_r
        if literal_affine:
            B[:] = 0.0
            for i in range(3):
                for j in range(3):
                    for k in range(3):
                        w = wx[i] * wy[j] * wz[k]
                        dpx = (i - fx) * dx
                        dpy = (j - fy) * dx
                        dpz = (k - fz) * dx
                        for a in range(3):
                            B[a, 0] += w * vnew[a] * dpx
                            B[a, 1] += w * vnew[a] * dpy
                            B[a, 2] += w * vnew[a] * dpz
        Cp = four_inv_dx2 * B
        v[p] = vnew
        C[p] = Cp
        x[p, 0] += dt * vnew[0]
        x[p, 1] += dt * vnew[1]
        x[p, 2] += dt * vnew[2]
        Fp = (np.eye(3) + dt * Cp) @ F[p]
        # inversion guard; the cheap sufficient test avoids the SVD when
        # singular values are provably inside [sv_lo, sv_hi]
        fn2 = 0.0
        for a in range(3):
            for b in range(3):
                fn2 += Fp[a, b] * Fp[a, b]
        d = _det3(Fp)
        if not (fn2 <= sv_hi * sv_hi and d > 0.0 and d / fn2 >= sv_lo):
            Fp = _svd_clamp(Fp, sv_lo, sv_hi)
        F[p] = Fp
