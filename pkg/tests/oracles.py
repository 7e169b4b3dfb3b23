"""Independent reference implementations used to check the package.

Everything here is deliberately written from first principles (plain BFS,
explicit difference quotients, sort-and-interpolate) and never calls into
the code paths under test.
"""

from collections import deque

import numpy as np

_ALL_OFFSETS = [
    (dz, dy, dx)
    for dz in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dx in (-1, 0, 1)
    if (dz, dy, dx) != (0, 0, 0)
]


def neighbor_offsets(connectivity):
    if connectivity == 6:
        return [o for o in _ALL_OFFSETS if sum(map(abs, o)) == 1]
    if connectivity == 18:
        return [o for o in _ALL_OFFSETS if sum(map(abs, o)) <= 2]
    if connectivity == 26:
        return list(_ALL_OFFSETS)
    raise ValueError(connectivity)


def bfs_components(mask, connectivity):
    """Flood-fill partition of the foreground; components as frozensets of (z,y,x)."""
    nz, ny, nx = mask.shape
    offsets = neighbor_offsets(connectivity)
    seen = np.zeros(mask.shape, dtype=bool)
    components = []
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if mask[z, y, x] and not seen[z, y, x]:
                    queue = deque([(z, y, x)])
                    seen[z, y, x] = True
                    comp = []
                    while queue:
                        cz, cy, cx = queue.popleft()
                        comp.append((cz, cy, cx))
                        for dz, dy, dx in offsets:
                            az, ay, ax = cz + dz, cy + dy, cx + dx
                            if (
                                0 <= az < nz
                                and 0 <= ay < ny
                                and 0 <= ax < nx
                                and mask[az, ay, ax]
                                and not seen[az, ay, ax]
                            ):
                                seen[az, ay, ax] = True
                                queue.append((az, ay, ax))
                    components.append(frozenset(comp))
    return components


def background_reachable_from_border(mask):
    """Background voxels reachable from the volume border via 6-connected background."""
    nz, ny, nx = mask.shape
    reach = np.zeros(mask.shape, dtype=bool)
    queue = deque()
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if (z in (0, nz - 1) or y in (0, ny - 1) or x in (0, nx - 1)) and not mask[z, y, x]:
                    if not reach[z, y, x]:
                        reach[z, y, x] = True
                        queue.append((z, y, x))
    offsets = neighbor_offsets(6)
    while queue:
        cz, cy, cx = queue.popleft()
        for dz, dy, dx in offsets:
            az, ay, ax = cz + dz, cy + dy, cx + dx
            if 0 <= az < nz and 0 <= ay < ny and 0 <= ax < nx:
                if not mask[az, ay, ax] and not reach[az, ay, ax]:
                    reach[az, ay, ax] = True
                    queue.append((az, ay, ax))
    return reach


def enclosed_background_count(mask):
    """Number of background voxels not connected to the border (i.e. holes)."""
    reach = background_reachable_from_border(mask)
    return int(np.count_nonzero(~mask & ~reach))


def central_difference_grad(value_fn, pred, h=1e-6):
    """Difference quotient (f(p+h) - f(p-h)) / 2h, one coordinate at a time."""
    grad = np.empty_like(pred, dtype=np.float64)
    for i in range(pred.size):
        up = pred.copy()
        dn = pred.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (value_fn(up) - value_fn(dn)) / (2.0 * h)
    return grad


def max_relative_error(analytic, reference, floor=1e-8):
    scale = np.maximum(np.abs(reference), floor)
    return float(np.max(np.abs(analytic - reference) / scale))


def sort_interpolate_percentile(values, p):
    """Linear interpolation between order statistics at rank (n-1)*p/100."""
    s = sorted(values)
    pos = (len(s) - 1) * p / 100.0
    lo = int(np.floor(pos))
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (pos - lo) * (s[hi] - s[lo])


def voxelized_ellipsoid_coords(semi_axes, spacing=(1.0, 1.0, 1.0), pad=2):
    """(n, 3) integer (x, y, z) coordinates of an origin-centered ellipsoid."""
    ax, ay, az = semi_axes
    sx, sy, sz = spacing
    rx = int(np.ceil(ax / sx)) + pad
    ry = int(np.ceil(ay / sy)) + pad
    rz = int(np.ceil(az / sz)) + pad
    coords = []
    for z in range(-rz, rz + 1):
        for y in range(-ry, ry + 1):
            for x in range(-rx, rx + 1):
                if (x * sx / ax) ** 2 + (y * sy / ay) ** 2 + (z * sz / az) ** 2 <= 1.0:
                    coords.append((x, y, z))
    return np.array(coords, dtype=np.int64)


def continuum_ellipsoid_eigenvalues(semi_axes):
    """Covariance eigenvalues of a uniform solid ellipsoid: semi_axis^2 / 5."""
    return np.sort(np.array([a * a / 5.0 for a in semi_axes]))[::-1]
