"""Pure numpy implementations of the hot kernels.

These are the reference versions; ``_kernels.pyx`` mirrors them loop for loop.
"""
import numpy as np
from scipy.special import gammaln


def wigner_d_stack(lmax, beta):
    """Wigner small-d matrices for every degree ``l < lmax`` at angle ``beta``.

    Returns an array of shape ``(lmax, 2*lmax - 1, 2*lmax - 1)``; entry
    ``[l, c + m', c + m]`` with ``c = lmax - 1`` holds ``d^l_{m'm}(beta)``.
    Entries with ``max(|m|, |m'|) > l`` are zero.

    Each (m', m) column is seeded at ``l = max(|m|, |m'|)`` from the single
    surviving term of the Wigner sum (log-gamma, no factorials) and then
    carried upward by the three-term recurrence in degree.
    """
    lmax = int(lmax)
    c = lmax - 1
    size = 2 * c + 1
    out = np.zeros((lmax, size, size))
    m = np.arange(-c, c + 1, dtype=np.float64)
    mp = m[:, None] * np.ones((1, size))
    mm = np.ones((size, 1)) * m[None, :]
    jmax = np.maximum(np.abs(mp), np.abs(mm))

    ch = np.cos(0.5 * beta)
    sh = np.sin(0.5 * beta)
    x = np.cos(beta)

    s0 = np.maximum(0.0, mm - mp)
    j = jmax
    logc = 0.5 * (gammaln(j + mp + 1) + gammaln(j - mp + 1)
                  + gammaln(j + mm + 1) + gammaln(j - mm + 1))
    logc -= (gammaln(j + mm - s0 + 1) + gammaln(s0 + 1)
             + gammaln(mp - mm + s0 + 1) + gammaln(j - mp - s0 + 1))
    sign = np.where(((mp - mm + s0) % 2) == 0, 1.0, -1.0)
    seed = sign * np.exp(logc) * np.power(ch, 2 * j + mm - mp - 2 * s0) \
        * np.power(sh, mp - mm + 2 * s0)

    prev1 = np.zeros((size, size))
    prev2 = np.zeros((size, size))
    mm2 = mm * mm
    mp2 = mp * mp
    for l in range(lmax):
        if l == 0:
            cur = np.where(jmax == 0, seed, 0.0)
        else:
            jj = float(l - 1)
            with np.errstate(divide="ignore", invalid="ignore"):
                a = (jj + 1) * (2 * jj + 1) / np.sqrt(((jj + 1) ** 2 - mm2) * ((jj + 1) ** 2 - mp2))
                if jj > 0:
                    b = mm * mp / (jj * (jj + 1))
                    e = np.sqrt(np.maximum((jj * jj - mm2) * (jj * jj - mp2), 0.0)) / (jj * (2 * jj + 1))
                else:
                    # only (0, 0) recurses from l = 0
                    b = 0.0
                    e = 0.0
                rec = a * ((x - b) * prev1 - e * prev2)
            cur = np.where(jmax == l, seed, np.where(jmax < l, rec, 0.0))
        out[l] = cur
        prev2, prev1 = prev1, cur
    return out


def voxel_occupancy(indices, dims):
    """Binary occupancy grid from an ``(n, 3)`` integer index array."""
    grid = np.zeros(tuple(int(d) for d in dims), dtype=np.uint8)
    if len(indices):
        idx = np.asarray(indices, dtype=np.int64)
        grid[idx[:, 0], idx[:, 1], idx[:, 2]] = 1
    return grid


def egi_counts(theta, phi, bandwidth):
    """Nearest-node histogram on the ``2B x 2B`` equiangular sphere grid.

    Ties go to the lower index. Colatitude indices are clamped to the grid,
    azimuth indices wrap modulo ``2B``.
    """
    n = 2 * int(bandwidth)
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    j = np.ceil((theta * (4 * bandwidth) / np.pi - 1.0) / 2.0 - 0.5).astype(np.int64)
    j = np.clip(j, 0, n - 1)
    k = np.ceil(phi * bandwidth / np.pi - 0.5).astype(np.int64) % n
    counts = np.bincount(j * n + k, minlength=n * n).reshape(n, n)
    return counts.astype(np.int64)
