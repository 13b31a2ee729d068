"""Independent brute-force references used to cross-check the fast paths."""

import numpy as np


def chamfer_brute(current, rest):
    """All-pairs bidirectional chamfer after mean-centering."""
    cur = np.asarray(current, float).reshape(-1, 3)
    ref = np.asarray(rest, float).reshape(-1, 3)
    cur = cur - cur.mean(axis=0)
    ref = ref - ref.mean(axis=0)
    d2 = ((cur[:, None, :] - ref[None, :, :]) ** 2).sum(axis=2)
    return float(d2.min(axis=1).sum() + d2.min(axis=0).sum())


def ray_crossings(mesh, origin, direction):
    """Count ray/triangle crossings one triangle at a time (Moller-Trumbore)."""
    o = np.asarray(origin, float)
    d = np.asarray(direction, float)
    count = 0
    for face in mesh.faces:
        a, b, c = mesh.vertices[face]
        e1, e2 = b - a, c - a
        p = np.cross(d, e2)
        det = e1 @ p
        if abs(det) < 1e-15:
            continue
        s = (o - a) / det
        u = s @ p
        q = np.cross(s * det, e1) / det
        v = d @ q
        t = e2 @ q
        if u >= 0 and v >= 0 and u + v <= 1 and t > 0:
            count += 1
    return count


def interior_by_parity(mesh, points, jitter=(1.1e-7, 2.3e-7)):
    """Odd-crossing interior test, ray cast along +z per point."""
    out = np.zeros(len(points), dtype=bool)
    for i, p in enumerate(points):
        o = np.array([p[0] + jitter[0], p[1] + jitter[1], p[2]])
        out[i] = ray_crossings(mesh, o, np.array([0.0, 0.0, 1.0])) % 2 == 1
    return out


def fd_stress(F, mat, h=1e-5):
    """Central finite differences of the strain energy w.r.t. F."""
    from tactsim.solver import strain_energy

    P = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            Fp = F.copy()
            Fm = F.copy()
            Fp[i, j] += h
            Fm[i, j] -= h
            P[i, j] = (strain_energy(Fp, mat) - strain_energy(Fm, mat)) / (2 * h)
    return P


def random_gradient(rng, det_range=(0.3, 3.0), max_tries=1000):
    """Random 3x3 matrix with determinant inside det_range."""
    for _ in range(max_tries):
        F = np.eye(3) + 0.6 * rng.standard_normal((3, 3))
        d = np.linalg.det(F)
        if det_range[0] <= d <= det_range[1]:
            return F
    raise RuntimeError("could not sample a usable deformation gradient")
