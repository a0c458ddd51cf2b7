"""Chebyshev collocation calculus on y in [-1, 1].

Grids, differentiation matrices, Clenshaw-Curtis quadrature, Dirichlet
Helmholtz solves and the norms that appear in the channel-flow estimates.
Profiles are plain complex ``numpy`` vectors sampled at the grid nodes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

__all__ = [
    "ChebGrid",
    "NormBundle",
    "build_grid",
    "solve_helmholtz",
    "compute_norms",
    "velocity_from_vorticity",
    "inner",
    "l1_norm",
    "l2_norm",
    "h1k_norm",
    "hm1k_norm",
    "cheb_coefficients",
    "antiderivative",
]

MIN_POINTS = 8


@dataclass(frozen=True, eq=False)
class ChebGrid:
    """Chebyshev-Gauss-Lobatto grid with nodes ordered from +1 down to -1."""

    n: int
    nodes: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    quad_weights: np.ndarray

    @property
    def interior(self) -> slice:
        return slice(1, self.n - 1)

    def embed(self, interior_values: np.ndarray) -> np.ndarray:
        """Pad interior nodal values with zero boundary values."""
        out = np.zeros(self.n, dtype=np.result_type(interior_values, complex))
        out[1:-1] = interior_values
        return out

    def __repr__(self) -> str:
        return f"ChebGrid(n={self.n})"


@dataclass(frozen=True)
class NormBundle:
    l2: float
    l1: float
    linf: float
    h1k: float
    hm1k: float


def _cheb_d1(n: int) -> tuple[np.ndarray, np.ndarray]:
    # Trefethen's cheb with the negative-sum trick on the diagonal.
    N = n - 1
    j = np.arange(n)
    x = np.cos(np.pi * j / N)
    c = np.ones(n)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** j
    X = np.tile(x, (n, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(n))
    D -= np.diag(D.sum(axis=1))
    x[0], x[-1] = 1.0, -1.0
    return x, D


def _clenshaw_curtis(n: int) -> np.ndarray:
    N = n - 1
    theta = np.pi * np.arange(n) / N
    w = np.zeros(n)
    v = np.ones(N - 1)
    interior = slice(1, N)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N**2 - 1)
        for m in range(1, N // 2):
            v -= 2.0 * np.cos(2 * m * theta[interior]) / (4 * m * m - 1)
        v -= np.cos(N * theta[interior]) / (N**2 - 1)
    else:
        w[0] = w[N] = 1.0 / N**2
        for m in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * m * theta[interior]) / (4 * m * m - 1)
    w[interior] = 2.0 * v / N
    return w


@lru_cache(maxsize=32)
def build_grid(n: int) -> ChebGrid:
    """Build (and cache) the ``n``-point Chebyshev grid.

    Raises ``ValueError`` for ``n < 8``.
    """
    if int(n) != n or n < MIN_POINTS:
        raise ValueError(f"grid needs at least {MIN_POINTS} points, got {n!r}")
    n = int(n)
    x, d1 = _cheb_d1(n)
    d2 = d1 @ d1
    w = _clenshaw_curtis(n)
    for arr in (x, d1, d2, w):
        arr.setflags(write=False)
    return ChebGrid(n=n, nodes=x, d1=d1, d2=d2, quad_weights=w)


def inner(grid: ChebGrid, f: np.ndarray, g: np.ndarray) -> complex:
    """Quadrature inner product <f, g> = int f conj(g) dy."""
    return complex(np.sum(grid.quad_weights * f * np.conj(g)))


def l2_norm(grid: ChebGrid, f: np.ndarray) -> float:
    return float(np.sqrt(np.sum(grid.quad_weights * np.abs(f) ** 2)))


def h1k_norm(grid: ChebGrid, k: float, f: np.ndarray) -> float:
    df = grid.d1 @ f
    return float(np.sqrt(l2_norm(grid, df) ** 2 + k * k * l2_norm(grid, f) ** 2))


@lru_cache(maxsize=256)
def _helmholtz_lu(n: int, k2: float):
    grid = build_grid(n)
    A = grid.d2 - k2 * np.eye(n)
    A[0, :] = 0.0
    A[-1, :] = 0.0
    A[0, 0] = A[-1, -1] = 1.0
    return sla.lu_factor(A, check_finite=False)


def solve_helmholtz(grid: ChebGrid, k: float, rhs: np.ndarray) -> np.ndarray:
    """Solve (d^2/dy^2 - k^2) phi = rhs with phi(+-1) = 0.

    Boundary rows of the collocation matrix are replaced by identity rows, so
    the Dirichlet condition holds exactly.
    """
    rhs = np.asarray(rhs)
    if rhs.shape[0] != grid.n:
        raise ValueError(f"profile length {rhs.shape[0]} does not match grid n={grid.n}")
    if not np.all(np.isfinite(rhs)):
        raise ValueError("non-finite right-hand side")
    b = np.array(rhs, dtype=complex)
    b[0] = b[-1] = 0.0
    lu = _helmholtz_lu(grid.n, float(k) ** 2)
    phi = sla.lu_solve(lu, b, check_finite=False)
    if not np.all(np.isfinite(phi)):
        raise RuntimeError("Helmholtz factorization produced non-finite values")
    phi[0] = phi[-1] = 0.0
    return phi


def _real_up_to_phase(f: np.ndarray) -> np.ndarray | None:
    j = int(np.argmax(np.abs(f)))
    if f[j] == 0:
        return np.zeros(f.shape)
    rot = f * (np.abs(f[j]) / f[j])
    if np.max(np.abs(rot.imag)) <= 1e-13 * np.abs(f[j]):
        return rot.real
    return None


def l1_norm(grid: ChebGrid, f: np.ndarray) -> float:
    """L^1 norm of the Chebyshev interpolant of ``f``.

    Plain quadrature of |f| only converges algebraically across sign changes,
    so profiles that are real up to a global phase are split at their roots
    and integrated exactly through the antiderivative of the series. Genuinely
    complex profiles have a smooth modulus and use oversampled Clenshaw-Curtis.
    """
    from numpy.polynomial import chebyshev as C

    f = np.asarray(f)
    coef = cheb_coefficients(grid, f)
    real = _real_up_to_phase(f)
    if real is None:
        fine = build_grid(4 * grid.n)
        return float(np.sum(fine.quad_weights * np.abs(C.chebval(fine.nodes, coef))))
    c = cheb_coefficients(grid, real).real
    scale = np.max(np.abs(real))
    if scale == 0.0:
        return 0.0
    # Bracket sign changes on an oversampled grid, then refine each root.
    ys = np.cos(np.pi * np.arange(8 * grid.n)[::-1] / (8 * grid.n - 1))
    vals = C.chebval(ys, c)
    roots = []
    for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
        a, b, fa = ys[i], ys[i + 1], vals[i]
        for _ in range(60):
            m = 0.5 * (a + b)
            fm = C.chebval(m, c)
            if np.sign(fm) == np.sign(fa):
                a, fa = m, fm
            else:
                b = m
            if b - a < 1e-15:
                break
        roots.append(0.5 * (a + b))
    edges = np.concatenate(([-1.0], roots, [1.0]))
    prim = C.chebint(c)
    F = C.chebval(edges, prim)
    return float(np.sum(np.abs(np.diff(F))))


def hm1k_norm(grid: ChebGrid, k: float, f: np.ndarray) -> float:
    """Dual norm of H^1_0 under ||(d_y, |k|) g||: sqrt(Re <f, G>), (-d^2 + k^2) G = f."""
    if k == 0:
        raise ValueError("H^-1_k norm requires k != 0")
    G = -solve_helmholtz(grid, k, f)
    return float(np.sqrt(max(inner(grid, f, G).real, 0.0)))


def compute_norms(grid: ChebGrid, k: float, f: np.ndarray, *, with_dual: bool = True) -> NormBundle:
    """All quadrature norms of ``f``; ``hm1k`` needs ``k != 0`` unless ``with_dual`` is off."""
    f = np.asarray(f)
    w = grid.quad_weights
    absf = np.abs(f)
    l2 = float(np.sqrt(np.sum(w * absf**2)))
    l1 = l1_norm(grid, f)
    linf = float(absf.max()) if absf.size else 0.0
    h1k = h1k_norm(grid, k, f)
    if with_dual:
        hm1k = hm1k_norm(grid, k, f)
    else:
        hm1k = float("nan")
    return NormBundle(l2=l2, l1=l1, linf=linf, h1k=h1k, hm1k=hm1k)


def velocity_from_vorticity(grid: ChebGrid, k: float, omega: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Velocity (u1, u2) = (d_y phi, -i k phi) with (d^2 - k^2) phi = omega, phi(+-1)=0."""
    if k == 0:
        raise ValueError("modal velocity needs k != 0; the zero mode has its own path")
    phi = solve_helmholtz(grid, k, omega)
    return grid.d1 @ phi, -1j * k * phi


def cheb_coefficients(grid: ChebGrid, f: np.ndarray) -> np.ndarray:
    """Chebyshev coefficients c_m of the interpolant f(y) = sum c_m T_m(y)."""
    from scipy.fft import dct

    N = grid.n - 1
    f = np.asarray(f)
    if np.iscomplexobj(f):
        c = dct(f.real, type=1) + 1j * dct(f.imag, type=1)
    else:
        c = dct(f, type=1)
    c = c / N
    c[0] /= 2.0
    c[-1] /= 2.0
    return c


def antiderivative(grid: ChebGrid, f: np.ndarray) -> np.ndarray:
    """Nodal values of int_{-1}^{y} f, integrating the Chebyshev interpolant."""
    from numpy.polynomial import chebyshev as C

    prim = C.chebint(cheb_coefficients(grid, f), lbnd=-1.0)
    return C.chebval(grid.nodes, prim)
