"""Real spherical-harmonic analysis on S^2 and rotation estimation on SO(3).

Conventions
-----------
* Complex harmonics ``Y^l`` carry the Condon-Shortley phase and are ordered
  ``m = -l .. l``.
* The real basis is ``S^l = T^l Y^l`` with the usual unitary change of basis;
  for ``l = 1`` it is ``sqrt(3 / 4 pi) * (y, z, x)``.
* Wigner matrices follow ``D_{m'm}(a, b, c) = exp(-i m' a) d_{m'm}(b) exp(-i m c)``
  so that ``Y^l(R^T x) = D^l(R)^T Y^l(x)``.
* ``U^l(R) = conj(T^l) D^l(R) (T^l)^T`` is real orthogonal, satisfies
  ``S^l(R^T x) = U^l(R)^T S^l(x)`` and ``U^l(R1 R2) = U^l(R1) U^l(R2)``.
  Rotating a function ``f -> f(R^T .)`` maps its coefficients ``F^l -> U^l(R) F^l``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .cloud import cart_to_sph, rot_to_euler_zyz
from .discretize import grid_directions, nearest_node, sphere_grid
from .errors import BandwidthMismatchError, ImaginaryResidueError

FOUR_PI = 4.0 * np.pi
AXES = {"x": 0, "y": 1, "z": 2, "e_x": 0, "e_y": 1, "e_z": 2}


# --------------------------------------------------------------------------
# coefficient container


@dataclass(frozen=True, eq=False)
class SphCoeffs:
    """Real harmonic coefficients packed degree by degree.

    Block ``l`` (length ``2l + 1``) lives at ``values[l*l : (l+1)*(l+1)]``.
    """

    bandwidth: int
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        n = int(round(np.sqrt(len(v))))
        if n * n != len(v):
            raise ValueError("packed coefficient length must be a perfect square")
        if not np.all(np.isfinite(v)):
            raise ValueError("coefficients must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def l_max(self):
        """Number of degrees held (degrees ``0 .. l_max - 1``)."""
        return int(round(np.sqrt(len(self.values))))

    def block(self, l):
        return self.values[l * l:(l + 1) * (l + 1)]

    @property
    def blocks(self):
        return [self.block(l) for l in range(self.l_max)]

    def degree_norms(self):
        return np.array([np.linalg.norm(self.block(l)) for l in range(self.l_max)])

    def norm(self):
        return float(np.linalg.norm(self.values))

    def scaled(self, factor):
        return SphCoeffs(self.bandwidth, self.values * factor)

    @classmethod
    def from_blocks(cls, bandwidth, blocks):
        blocks = list(blocks)
        for l, b in enumerate(blocks):
            if len(b) != 2 * l + 1:
                raise ValueError(f"block {l} has length {len(b)}, expected {2 * l + 1}")
        return cls(bandwidth, np.concatenate(blocks) if blocks else np.zeros(0))


# --------------------------------------------------------------------------
# spherical harmonics


def _legendre_table(lmax, theta):
    """Orthonormal associated Legendre functions (Condon-Shortley phase).

    ``P[l][m]`` for ``0 <= m <= l < lmax``, each of ``theta``'s shape, including
    the ``sqrt((2l+1)/4pi (l-m)!/(l+m)!)`` factor.
    """
    x = np.cos(theta)
    s = np.sin(theta)
    P = [[None] * (l + 1) for l in range(lmax)]
    P[0][0] = np.full(np.shape(theta), 1.0 / np.sqrt(FOUR_PI))
    for m in range(1, lmax):
        P[m][m] = -np.sqrt((2 * m + 1) / (2.0 * m)) * s * P[m - 1][m - 1]
    for m in range(lmax):
        if m + 1 < lmax:
            P[m + 1][m] = np.sqrt(2 * m + 3.0) * x * P[m][m]
        for l in range(m + 2, lmax):
            a = np.sqrt((4.0 * l * l - 1) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1) ** 2 - 1))
            P[l][m] = a * (x * P[l - 1][m] - b * P[l - 2][m])
    return P


def ylm_all(lmax, theta, phi):
    """Complex harmonics for every degree ``l < lmax``; list of ``(..., 2l+1)`` arrays."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=np.float64),
                                     np.asarray(phi, dtype=np.float64))
    P = _legendre_table(lmax, theta)
    out = []
    for l in range(lmax):
        vals = np.empty(theta.shape + (2 * l + 1,), dtype=np.complex128)
        for m in range(l + 1):
            y = P[l][m] * np.exp(1j * m * phi)
            vals[..., l + m] = y
            if m:
                vals[..., l - m] = (-1) ** m * np.conj(y)
        out.append(vals)
    return out


def complex_ylm(l, theta, phi):
    """``Y^l(theta, phi)`` as a complex vector indexed ``m = -l .. l``."""
    return ylm_all(l + 1, theta, phi)[l]


@lru_cache(maxsize=None)
def _transform_matrix_cached(l):
    n = 2 * l + 1
    t = np.zeros((n, n), dtype=np.complex128)
    r2 = 1.0 / np.sqrt(2.0)
    t[l, l] = 1.0
    for m in range(1, l + 1):
        sign = (-1) ** m
        # real cosine-type row
        t[l + m, l + m] = sign * r2
        t[l + m, l - m] = r2
        # real sine-type row
        t[l - m, l - m] = 1j * r2
        t[l - m, l + m] = -1j * sign * r2
    t.setflags(write=False)
    return t


def transform_matrix(l):
    """Unitary ``T^l`` taking ``Y^l`` to the real basis ``S^l``."""
    return _transform_matrix_cached(int(l))


def _realify(z, tol, what):
    scale = max(1.0, float(np.max(np.abs(z.real))) if z.size else 1.0)
    residue = float(np.max(np.abs(z.imag))) if z.size else 0.0
    if residue > tol * scale:
        raise ImaginaryResidueError(f"{what}: imaginary residue {residue:.3e} exceeds {tol:.0e}")
    return np.ascontiguousarray(z.real)


def real_basis_S(l, theta, phi, t=None):
    """``S^l = T^l Y^l`` evaluated at ``(theta, phi)``; real, length ``2l + 1``."""
    t = transform_matrix(l) if t is None else np.asarray(t)
    if t.shape != (2 * l + 1, 2 * l + 1):
        raise ValueError(f"T matrix has shape {t.shape}, expected degree {l}")
    y = complex_ylm(l, theta, phi)
    return _realify(y @ t.T, 1e-10, "real basis")


def real_basis_all(lmax, theta, phi):
    """Real basis for every degree ``< lmax``, packed along the last axis.

    Uses the closed real form ``sqrt(2) |P_l^m| {cos, sin}(m phi)`` rather than
    the ``T Y`` product; the two are checked against each other in the tests.
    """
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=np.float64),
                                     np.asarray(phi, dtype=np.float64))
    P = _legendre_table(lmax, theta)
    out = np.empty(theta.shape + (lmax * lmax,))
    r2 = np.sqrt(2.0)
    for l in range(lmax):
        base = l * l + l
        out[..., base] = P[l][0]
        for m in range(1, l + 1):
            amp = r2 * (-1) ** m * P[l][m]
            out[..., base + m] = amp * np.cos(m * phi)
            out[..., base - m] = amp * np.sin(m * phi)
    return out


# --------------------------------------------------------------------------
# forward / inverse transform on the equiangular grid


@lru_cache(maxsize=None)
def quadrature_weights(bandwidth):
    """Colatitude weights on ``theta_j = pi (2j+1) / 4B``.

    Exact for ``int_0^pi p(cos t) sin t dt`` with ``p`` of degree ``< 2B``.
    """
    theta, _ = sphere_grid(bandwidth)
    k = np.arange(bandwidth)
    w = (2.0 / bandwidth) * np.sin(theta) * np.sum(
        np.sin(np.outer(theta, 2 * k + 1)) / (2 * k + 1), axis=1)
    w.setflags(write=False)
    return w


@lru_cache(maxsize=None)
def _analysis_matrix(bandwidth, l_max):
    theta, phi = sphere_grid(bandwidth)
    S = real_basis_all(l_max, theta[:, None], phi[None, :])  # (2B, 2B, n)
    w = quadrature_weights(bandwidth)[:, None] * (np.pi / bandwidth)
    a = (S * w[..., None]).reshape(-1, l_max * l_max).T.copy()
    a.setflags(write=False)
    return a


@lru_cache(maxsize=None)
def _synthesis_matrix(bandwidth, l_max):
    theta, phi = sphere_grid(bandwidth)
    s = real_basis_all(l_max, theta[:, None], phi[None, :]).reshape(-1, l_max * l_max).copy()
    s.setflags(write=False)
    return s


def sph_forward(egi, l_max=None, normalize=False):
    """Real harmonic coefficients of an EGI (or a ``2B x 2B`` sample array).

    Degrees ``0 .. l_max - 1`` are computed (``l_max`` defaults to ``B``);
    the quadrature is exact for band-limited samples with ``l < B``. With
    ``normalize`` the counts are first divided by their total.
    """
    if hasattr(egi, "counts"):
        bandwidth = egi.bandwidth
        values = egi.normalized() if normalize else egi.counts.astype(np.float64)
    else:
        values = np.asarray(egi, dtype=np.float64)
        bandwidth = values.shape[0] // 2
        if normalize and values.sum() != 0:
            values = values / values.sum()
    if values.shape != (2 * bandwidth, 2 * bandwidth):
        raise ValueError("samples must lie on a 2B x 2B grid")
    l_max = bandwidth if l_max is None else int(l_max)
    if not 1 <= l_max <= 2 * bandwidth:
        raise ValueError("l_max must be in [1, 2B]")
    return SphCoeffs(bandwidth, _analysis_matrix(bandwidth, l_max) @ values.ravel())


def sph_inverse(coeffs, bandwidth=None):
    """Evaluate ``sum_l (F^l)^T S^l`` on the ``2B x 2B`` grid."""
    bandwidth = coeffs.bandwidth if bandwidth is None else int(bandwidth)
    n = 2 * bandwidth
    return (_synthesis_matrix(bandwidth, coeffs.l_max) @ coeffs.values).reshape(n, n)


def sph_evaluate(coeffs, directions):
    """Evaluate the expansion at arbitrary unit vectors ``(..., 3)``."""
    theta, phi = cart_to_sph(np.asarray(directions, dtype=np.float64))
    return real_basis_all(coeffs.l_max, theta, phi) @ coeffs.values


# --------------------------------------------------------------------------
# Wigner matrices and rotation operators


def wigner_d(l, beta):
    """Small Wigner matrix ``d^l(beta)``, rows ``m'`` and columns ``m`` from ``-l`` to ``l``."""
    return kernels.wigner_d_stack(l + 1, float(beta))[l].copy()


def wigner_D(l, alpha, beta, gamma):
    m = np.arange(-l, l + 1)
    d = wigner_d(l, beta)
    return np.exp(-1j * m * alpha)[:, None] * d * np.exp(-1j * m * gamma)[None, :]


def u_operator(l, alpha, beta, gamma, t=None):
    """Real rotation operator ``U^l = conj(T) D^l T^T`` for ZYZ angles."""
    t = transform_matrix(l) if t is None else np.asarray(t)
    u = np.conj(t) @ wigner_D(l, alpha, beta, gamma) @ t.T
    return _realify(u, 1e-9, "U operator")


def u_operators(rotation, l_max):
    """``[U^0(R), ..., U^{l_max-1}(R)]`` for a rotation matrix."""
    alpha, beta, gamma = rot_to_euler_zyz(rotation)
    stack = kernels.wigner_d_stack(l_max, beta)
    c = l_max - 1
    out = []
    for l in range(l_max):
        m = np.arange(-l, l + 1)
        d = stack[l, c - l:c + l + 1, c - l:c + l + 1]
        D = np.exp(-1j * m * alpha)[:, None] * d * np.exp(-1j * m * gamma)[None, :]
        t = transform_matrix(l)
        out.append(_realify(np.conj(t) @ D @ t.T, 1e-9, "U operator"))
    return out


def angular_momentum(l):
    """``(J_x, J_y, J_z)`` on the ``m = -l .. l`` basis."""
    m = np.arange(-l, l + 1, dtype=np.float64)
    jz = np.diag(m).astype(np.complex128)
    # J_+ |m> = sqrt((l - m)(l + m + 1)) |m + 1>
    up = np.zeros((2 * l + 1, 2 * l + 1), dtype=np.complex128)
    for i, mm in enumerate(m[:-1]):
        up[i + 1, i] = np.sqrt((l - mm) * (l + mm + 1))
    down = up.conj().T
    jx = (up + down) / 2.0
    jy = (up - down) / 2j
    return jx, jy, jz


@lru_cache(maxsize=None)
def _generators_cached(l):
    t = transform_matrix(l)
    out = []
    for j in angular_momentum(l):
        # D(exp(eps e_k^)) = exp(-i eps J_k)
        g = _realify(np.conj(t) @ (-1j * j) @ t.T, 1e-12, "generator")
        g.setflags(write=False)
        out.append(g)
    return tuple(out)


def u_generator(l, axis, t=None):
    """Derivative of ``U^l(exp(eps e_k^))`` at ``eps = 0``; real skew-symmetric."""
    k = AXES[axis] if isinstance(axis, str) else int(axis)
    if t is None:
        return _generators_cached(int(l))[k].copy()
    t = np.asarray(t)
    j = angular_momentum(l)[k]
    return _realify(np.conj(t) @ (-1j * j) @ t.T, 1e-12, "generator")


# --------------------------------------------------------------------------
# correlation on SO(3)


def _check_pair(f, g):
    if f.bandwidth != g.bandwidth or f.l_max != g.l_max:
        raise BandwidthMismatchError(
            f"bandwidth/l_max mismatch: ({f.bandwidth}, {f.l_max}) vs ({g.bandwidth}, {g.l_max})")


def so3_correlation(f, g, rotation):
    """``C(R) = 1/(4 pi) sum_l (G^l)^T U^l(R) F^l``; maximal where ``G^l = U^l(R) F^l``."""
    _check_pair(f, g)
    us = u_operators(rotation, f.l_max)
    return sum(float(g.block(l) @ (us[l] @ f.block(l))) for l in range(f.l_max)) / FOUR_PI


def correlation_gradient(f, g, rotation):
    """``d/d eps C(R exp(eps e_k^))`` for ``k = x, y, z``."""
    _check_pair(f, g)
    us = u_operators(rotation, f.l_max)
    grad = np.zeros(3)
    for l in range(1, f.l_max):
        left = us[l].T @ g.block(l)
        fl = f.block(l)
        for k, gen in enumerate(_generators_cached(l)):
            grad[k] += left @ (gen @ fl)
    return grad / FOUR_PI


def curvature_scale(f):
    """``1/(4 pi) * 1/3 * sum_l l(l+1) |F^l|^2``: mean per-axis curvature of the self-correlation at identity."""
    ls = np.arange(f.l_max)
    return float(np.sum(ls * (ls + 1) * f.degree_norms() ** 2) / (3.0 * FOUR_PI))


def smooth_coeffs(f, width):
    """Heat-kernel smoothing: block ``l`` scaled by ``exp(-width^2 l (l+1) / 2)``.

    ``width`` is roughly the angular blur in radians; 0 leaves ``f`` unchanged.
    """
    if width == 0:
        return f
    ls = np.repeat(np.arange(f.l_max), 2 * np.arange(f.l_max) + 1)
    return SphCoeffs(f.bandwidth, f.values * np.exp(-0.5 * width * width * ls * (ls + 1)))


def rotation_cost(f_egi, g_egi, rotation):
    """``1/2 sum_nodes (g(x) - f(R^T x))^2`` on mass-normalised EGIs.

    ``f(R^T x)`` is read from the node nearest to the rotated direction.
    """
    if f_egi.bandwidth != g_egi.bandwidth:
        raise BandwidthMismatchError(f"bandwidth {f_egi.bandwidth} vs {g_egi.bandwidth}")
    bw = f_egi.bandwidth
    dirs = grid_directions(bw)
    # rows of dirs @ R are R^T x
    rotated = dirs @ np.asarray(rotation, dtype=np.float64)
    theta, phi = cart_to_sph(rotated)
    j, k = nearest_node(theta, phi, bw)
    f = f_egi.normalized()
    g = g_egi.normalized()
    diff = g - f[j, k]
    return 0.5 * float(np.sum(diff * diff))


def rotate_coeffs(f, rotation):
    """Coefficients of ``x -> f(R^T x)``."""
    us = u_operators(rotation, f.l_max)
    return SphCoeffs.from_blocks(f.bandwidth, [us[l] @ f.block(l) for l in range(f.l_max)])


def write_coeffs_csv(coeffs, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["l", "index", "value"])
    for l in range(coeffs.l_max):
        for i, v in enumerate(coeffs.block(l)):
            w.writerow([l, i, repr(float(v))])
