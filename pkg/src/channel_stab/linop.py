"""The linearized operator L_k around plane Poiseuille flow with Navier-slip walls.

    L_k w = -nu (d_y^2 - k^2) w + i k (1 - y^2) w + 2 i k (d_y^2 - k^2)^{-1} w

acting on vorticity profiles with w(+-1) = 0. The matrix lives on the interior
collocation nodes; the inverse Laplacian is the Dirichlet solve of
:mod:`channel_stab.spectral_core`, so the stream function also vanishes at the
walls.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .spectral_core import ChebGrid

log = logging.getLogger(__name__)

LHS_NORMS = ("w_l2", "w_h1k", "u_l2")
RHS_NORMS = ("F_l2", "F_hm1k", "F_h1k")
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class ConditioningError(RuntimeError):
    """The shifted operator is numerically singular."""

    def __init__(self, sigma_min: float, message: str | None = None):
        self.sigma_min = sigma_min
        super().__init__(message or f"shifted operator is numerically singular (sigma_min={sigma_min:.3e})")


@dataclass(frozen=True)
class Toggles:
    diffusion: bool = True
    transport: bool = True
    nonlocal_: bool = True

    @classmethod
    def coerce(cls, value) -> "Toggles":
        if value is None:
            return cls()
        if isinstance(value, Toggles):
            return value
        value = dict(value)
        if "nonlocal" in value:
            value["nonlocal_"] = value.pop("nonlocal")
        return cls(**value)


HEAT_ONLY = Toggles(diffusion=True, transport=False, nonlocal_=False)


@dataclass(frozen=True, eq=False)
class OperatorLk:
    nu: float
    k: int
    grid: ChebGrid
    matrix: np.ndarray
    toggles: Toggles
    helmholtz_inverse: np.ndarray = field(repr=False)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.grid.quad_weights[1:-1])

    def shifted(self, lam: float) -> np.ndarray:
        return self.matrix - 1j * self.k * lam * np.eye(self.size)

    def apply(self, w: np.ndarray) -> np.ndarray:
        """L_k applied to a full-length profile; boundary entries of the result are zero."""
        return self.grid.embed(self.matrix @ np.asarray(w)[1:-1])

    def memo(self, key, compute):
        # Transparent per-operator cache; values are pure functions of (op, key).
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        value = compute()
        with self._lock:
            self._cache.setdefault(key, value)
            if len(self._cache) > 512:
                self._cache.pop(next(iter(self._cache)))
        return value


def assemble(grid: ChebGrid, nu: float, k: int, toggles=None) -> OperatorLk:
    """Assemble L_k on the interior nodes of ``grid``."""
    if k == 0:
        raise ValueError("L_k is only defined for k != 0")
    if not nu >= 0:
        raise ValueError(f"viscosity must be non-negative, got {nu}")
    tg = Toggles.coerce(toggles)
    n = grid.n
    m = n - 2
    y = grid.nodes[1:-1]
    eye = np.eye(m)
    lap = grid.d2[1:-1, 1:-1] - k * k * eye
    S = np.linalg.inv(lap)
    L = np.zeros((m, m), dtype=complex)
    if tg.diffusion:
        L -= nu * lap
    if tg.transport:
        L += 1j * k * np.diag(1.0 - y**2)
    if tg.nonlocal_:
        L += 2j * k * S
    L.setflags(write=False)
    S.setflags(write=False)
    return OperatorLk(nu=float(nu), k=int(k), grid=grid, matrix=L, toggles=tg, helmholtz_inverse=S)


def _similar(op: OperatorLk, A: np.ndarray) -> np.ndarray:
    sw = op.sqrt_weights
    return (sw[:, None] * A) / sw[None, :]


def singular_values(op: OperatorLk, lam: float) -> np.ndarray:
    """Singular values of W^{1/2} (L_k - i k lam) W^{-1/2}, descending."""
    return op.memo(("svals", float(lam)), lambda: np.linalg.svd(_similar(op, op.shifted(lam)), compute_uv=False))


def min_singular_value(op: OperatorLk, lam: float) -> float:
    return float(singular_values(op, lam)[-1])


def _shifted_lu(op: OperatorLk, lam: float):
    def compute():
        svals = singular_values(op, lam)
        if svals[-1] <= 1e-14 * svals[0]:
            raise ConditioningError(float(svals[-1]))
        return sla.lu_factor(op.shifted(lam), check_finite=False)

    return op.memo(("lu", float(lam)), compute)


def solve_resolvent(op: OperatorLk, lam: float, F: np.ndarray):
    """Solve (L_k - i k lam) w = F with w(+-1) = phi(+-1) = 0.

    Returns full-length ``(w, phi, (u1, u2))``. Only the interior values of
    ``F`` enter the equation.
    """
    F = np.asarray(F)
    if F.shape[0] != op.grid.n:
        raise ValueError(f"forcing length {F.shape[0]} does not match grid n={op.grid.n}")
    if not np.all(np.isfinite(F)):
        raise ValueError("non-finite forcing")
    lu = _shifted_lu(op, lam)
    w_int = sla.lu_solve(lu, F[1:-1].astype(complex), check_finite=False)
    w = op.grid.embed(w_int)
    phi = op.grid.embed(op.helmholtz_inverse @ w_int)
    return w, phi, (op.grid.d1 @ phi, -1j * op.k * phi)


def spectrum(op: OperatorLk) -> np.ndarray:
    """All eigenvalues of the interior matrix, sorted by real part."""
    try:
        ev = np.linalg.eigvals(op.matrix)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise RuntimeError(f"eigensolver failed: {exc}") from exc
    return ev[np.lexsort((ev.imag, ev.real))]


@dataclass(frozen=True)
class GapResult:
    gap: float
    argmin_lambda: float
    bracketed: bool


def golden_minimize(fun, a: float, b: float, tol: float = 1e-7, max_iter: int = 200) -> tuple[float, float]:
    """Golden-section search for a minimizer of ``fun`` on [a, b]."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fun(d)
    return (c, fc) if fc < fd else (d, fd)


def grid_then_golden(fun, lo: float, hi: float, points: int, tol: float = 1e-7, maximize: bool = False):
    """Coarse scan of ``fun`` on [lo, hi] refined by golden section at the best node.

    Returns ``(x_best, f_best, bracketed)``; ``bracketed`` is False when the
    coarse optimum sits on the window edge.
    """
    sign = -1.0 if maximize else 1.0
    xs = np.linspace(lo, hi, points)
    vals = np.array([sign * fun(x) for x in xs])
    i = int(np.argmin(vals))
    bracketed = 0 < i < points - 1
    if not bracketed:
        return float(xs[i]), float(sign * vals[i]), False
    x, v = golden_minimize(lambda s: sign * fun(s), xs[i - 1], xs[i + 1], tol=tol)
    if v > vals[i]:
        x, v = xs[i], vals[i]
    return float(x), float(sign * v), True


def pseudospectral_gap(op: OperatorLk, window: tuple[float, float] = (-0.5, 1.5), points: int = 81,
                       tol: float = 1e-7) -> GapResult:
    """min over real lam of sigma_min(L_k - i k lam)."""
    lam, gap, bracketed = grid_then_golden(lambda s: min_singular_value(op, s), window[0], window[1], points, tol)
    if not bracketed:
        log.warning("gap search did not bracket a minimum in %s; returning coarse minimum", window)
    return GapResult(gap=gap, argmin_lambda=lam, bracketed=bracketed)


# -- quadratic norms as factor matrices: ||x|| = ||Q x||_2 on interior nodal values --


def norm_factor(op: OperatorLk, name: str) -> np.ndarray:
    """Factor Q with ||Q x||_2 equal to the named quadrature norm of the interior vector x."""

    def compute():
        g = op.grid
        k = op.k
        sw_full = np.sqrt(g.quad_weights)
        sw = sw_full[1:-1]
        d1E = g.d1[:, 1:-1]
        if name in ("w_l2", "F_l2"):
            return np.diag(sw).astype(complex)
        if name in ("w_h1k", "F_h1k", "G_h1k"):
            return np.vstack([sw_full[:, None] * d1E, abs(k) * np.diag(sw)]).astype(complex)
        if name == "u_l2":
            S = op.helmholtz_inverse
            return np.vstack([sw_full[:, None] * (d1E @ S), abs(k) * (sw[:, None] * S)]).astype(complex)
        raise ValueError(f"unknown quadratic norm {name!r}")

    return op.memo(("factor", name), compute)


def dirichlet_helmholtz(op: OperatorLk) -> np.ndarray:
    """(-d_y^2 + k^2) on interior nodes with G(+-1) = 0."""
    g = op.grid
    return -(g.d2[1:-1, 1:-1] - op.k**2 * np.eye(op.size))


def generalized_top(Ql: np.ndarray, T: np.ndarray, Qr: np.ndarray) -> tuple[float, np.ndarray]:
    """Largest generalized singular value sup ||Ql T x|| / ||Qr x|| and its maximizer x."""
    R = np.linalg.qr(Qr, mode="r")
    # B = Ql T R^{-1}
    B = Ql @ sla.solve_triangular(R, T.T, trans="T", lower=False).T
    _, s, vh = np.linalg.svd(B, full_matrices=False)
    z = vh[0].conj()
    x = sla.solve_triangular(R, z, lower=False)
    return float(s[0]), x


def solution_map(op: OperatorLk, lam: float) -> np.ndarray:
    def compute():
        lu = _shifted_lu(op, lam)
        return sla.lu_solve(lu, np.eye(op.size, dtype=complex), check_finite=False)

    return op.memo(("inverse", float(lam)), compute)


def weighted_operator_norm(op: OperatorLk, lam: float, lhs: str, rhs: str, return_vector: bool = False):
    """Exact discrete sup over F of ||lhs(w)|| / ||rhs(F)|| with (L_k - i k lam) w = F.

    For ``rhs="F_hm1k"`` the forcing is parametrized as F = (-d^2 + k^2) G,
    G(+-1) = 0, so that ||F||_{H^-1_k} = ||G||_{H^1_k}. With ``return_vector``
    the maximizing forcing F (full length) is returned as well.
    """
    if lhs not in LHS_NORMS:
        raise ValueError(f"unsupported lhs norm {lhs!r}; quadratic norms are {LHS_NORMS} "
                         "(L^1 and L^inf go through the forcing bank)")
    if rhs not in RHS_NORMS:
        raise ValueError(f"unsupported rhs norm {rhs!r}; expected one of {RHS_NORMS}")
    T = solution_map(op, lam)
    Ql = norm_factor(op, lhs)
    if rhs == "F_hm1k":
        M = dirichlet_helmholtz(op)
        value, G = generalized_top(Ql, T @ M, norm_factor(op, "G_h1k"))
        F = M @ G
    else:
        value, F = generalized_top(Ql, T, norm_factor(op, rhs))
    if return_vector:
        return value, op.grid.embed(F)
    return value
