"""Pseudo-spectral simulation of the full perturbation equation around Poiseuille flow.

Vorticity is stored per Fourier mode k = 0..K (negative modes are conjugates)
on a Chebyshev grid in y. With f1 = -(u1 w)_k and f2 = -(u2 w)_k, each mode
k != 0 obeys

    d_t w_k + L_k w_k = i k f1 + d_y f2,    w_k(+-1) = phi_k(+-1) = 0,

and the x-average satisfies d_t u1_0 - nu u1_0'' = (f2)_0 with u1_0'(+-1) = 0.
The zero mode is advanced through its vorticity w_0 = d_y u1_0 (Dirichlet
heat equation) plus the mean of u1_0, which is all of u1_0.

Time stepping: Crank-Nicolson for the linear operator of every mode, second
order Adams-Bashforth (Euler start) for the quadratic term.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.fft import irfft, next_fast_len, rfft

from . import linop
from .linear_evolution import DEFAULT_C, transient_growth
from .snapshots import write_snapshots
from .spectral_core import antiderivative, build_grid, cheb_coefficients

log = logging.getLogger(__name__)

FAMILIES = ("random_sobolev", "critical_layer", "optimal_linear")
STABLE, TRANSITIONED, INCONCLUSIVE = "Stable", "Transitioned", "Inconclusive"


@dataclass(frozen=True)
class SimConfig:
    nu: float = 1e-3
    K: int = 32
    n: int = 128
    dt: float = 0.01
    T: float | None = None
    c: float = DEFAULT_C
    dealias: bool = True
    seed: int = 0
    family: str = "random_sobolev"
    amplitude: float = 0.0
    s: float = 3.5
    # test seams: drop the quadratic term, or switch parts of the linear operator off
    nonlinear: bool = True
    toggles: dict | None = None

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"truncation K must be >= 1, got {self.K}")
        if not self.nu >= 0:
            raise ValueError(f"viscosity must be non-negative, got {self.nu}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown initial-data family {self.family!r}; expected one of {FAMILIES}")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")

    @property
    def horizon(self) -> float:
        if self.T is not None:
            return float(self.T)
        return min(20.0 / math.sqrt(self.nu), 2.0e3) if self.nu > 0 else 2.0e3

    @property
    def product_points(self) -> int:
        """Physical x points for the quadratic term.

        At least 3K + 1 points remove aliasing of modes -K..K; the count is
        rounded up to a fast FFT length. Without dealiasing 2K + 1 points are used.
        """
        return next_fast_len(3 * self.K + 1, real=True) if self.dealias else 2 * self.K + 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown SimConfig fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: Path | str) -> "SimConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def replace(self, **changes) -> "SimConfig":
        return SimConfig.from_dict({**self.to_dict(), **changes})


@dataclass
class ModalState:
    """Vorticity modes 0..K on the grid, the mean of u1_0, and the time."""

    omega: np.ndarray
    mean_u1: float = 0.0
    time: float = 0.0

    @property
    def K(self) -> int:
        return self.omega.shape[0] - 1

    @property
    def n(self) -> int:
        return self.omega.shape[1]

    def copy(self) -> "ModalState":
        return ModalState(self.omega.copy(), self.mean_u1, self.time)


def zero_state(K: int, n: int) -> ModalState:
    return ModalState(np.zeros((K + 1, n), dtype=complex))


def zero_mode_velocity(grid, omega0: np.ndarray, mean_u1: float) -> np.ndarray:
    """u1_0 with d_y u1_0 = omega0 and (1/2) int u1_0 = mean_u1."""
    prim = antiderivative(grid, np.real(omega0))
    return prim - 0.5 * float(np.sum(grid.quad_weights * prim)) + mean_u1


def state_from_zero_velocity(grid, u1_0: np.ndarray, K: int) -> ModalState:
    st = zero_state(K, grid.n)
    om = grid.d1 @ np.real(u1_0)
    om[0] = om[-1] = 0.0
    st.omega[0] = om
    st.mean_u1 = 0.5 * float(np.sum(grid.quad_weights * np.real(u1_0)))
    return st


class _Model:
    """Per-configuration matrices shared by every step of a run."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.grid = g = build_grid(cfg.n)
        K, m = cfg.K, cfg.n - 2
        self.ks = np.arange(1, K + 1)
        self.ops = [linop.assemble(g, cfg.nu, k, cfg.toggles) for k in self.ks]
        self.S = np.stack([op.helmholtz_inverse for op in self.ops])
        eye = np.eye(m)
        dt = cfg.dt
        A = np.stack([eye + 0.5 * dt * op.matrix for op in self.ops])
        B = np.stack([eye - 0.5 * dt * op.matrix for op in self.ops])
        Ainv = np.linalg.inv(A)
        self.prop = Ainv @ B
        self.Ainv_dt = dt * Ainv
        lap0 = cfg.nu * g.d2[1:-1, 1:-1]
        A0inv = np.linalg.inv(eye - 0.5 * dt * lap0)
        self.prop0 = A0inv @ (eye + 0.5 * dt * lap0)
        self.A0inv_dt = dt * A0inv
        self.w = g.quad_weights
        self.base = 1.0 - g.nodes**2

    def velocities(self, st: ModalState):
        g = self.grid
        K = st.K
        phi = np.zeros((K + 1, g.n), dtype=complex)
        phi[1:, 1:-1] = _batched(self.S, st.omega[1:, 1:-1])
        u1 = phi @ g.d1.T
        u1[0] = zero_mode_velocity(g, st.omega[0], st.mean_u1)
        u2 = -1j * np.arange(K + 1)[:, None] * phi
        return u1, u2


def _batched(mats: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    vecs = np.asarray(vecs, dtype=complex)
    if np.iscomplexobj(mats):
        return np.matmul(mats, vecs[:, :, None])[:, :, 0]
    # real matrices: keep the product in real BLAS
    out = np.matmul(mats, np.stack([vecs.real, vecs.imag], axis=2))
    return out[:, :, 0] + 1j * out[:, :, 1]


def _to_physical(modes: np.ndarray, M: int) -> np.ndarray:
    spec = np.zeros((M // 2 + 1, modes.shape[1]), dtype=complex)
    spec[: modes.shape[0]] = modes
    spec[0] = spec[0].real
    return irfft(spec, n=M, axis=0) * M


def _to_modes(field_: np.ndarray, K: int) -> np.ndarray:
    M = field_.shape[0]
    return rfft(field_, axis=0)[: K + 1] / M


def convolve_direct(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(a b)_k = sum_l a_l b_{k-l} for k = 0..K over modes -K..K (negatives are conjugates)."""
    K = a.shape[0] - 1

    def mode(x, j):
        return x[j] if j >= 0 else np.conj(x[-j])

    out = np.zeros_like(a, dtype=complex)
    for k in range(K + 1):
        for l in range(-K, K + 1):
            if abs(k - l) <= K:
                out[k] += mode(a, l) * mode(b, k - l)
    return out


def nonlinear_term(state: ModalState, model_or_cfg=None, *, direct: bool = False):
    """Slots (f1)_k = -(u1 w)_k and (f2)_k = -(u2 w)_k for k = 0..K.

    The product is formed on 3K + 1 physical x points (dealiased) or, with
    ``direct``, by the exact convolution sum.
    """
    model = _model_for(state, model_or_cfg)
    u1, u2 = model.velocities(state)
    return _products(model, state, u1, u2, direct)


def _physical(model, state, u1, u2):
    M = model.cfg.product_points
    return _to_physical(u1, M), _to_physical(u2, M), _to_physical(state.omega, M)


def _products(model, state, u1, u2, direct=False, physical=None):
    w = state.omega
    if direct:
        return -convolve_direct(u1, w), -convolve_direct(u2, w)
    U1, U2, W = _physical(model, state, u1, u2) if physical is None else physical
    f1 = -_to_modes(U1 * W, state.K)
    f2 = -_to_modes(U2 * W, state.K)
    f1[0] = f1[0].real
    f2[0] = f2[0].real
    return f1, f2


def _model_for(state, model_or_cfg):
    if isinstance(model_or_cfg, _Model):
        return model_or_cfg
    cfg = model_or_cfg or SimConfig(nu=0.0, K=state.K, n=state.n)
    return _Model(cfg)


# -- Sobolev proxy and initial data ---------------------------------------------


def sobolev_proxy(state: ModalState, s: float = 3.5, model=None) -> float:
    """sqrt(sum_k (1+k^2)^s sum_m (1+m^2)^s |c_m(u_k)|^2) over k = -K..K.

    ``c_m`` are Chebyshev coefficients of both velocity components; modes
    k > 0 count twice for their conjugates.
    """
    if s < 0:
        raise ValueError("Sobolev index must be non-negative")
    if not np.any(state.omega) and state.mean_u1 == 0.0:
        return 0.0
    model = _model_for(state, model)
    g = model.grid
    u1, u2 = model.velocities(state)
    mw = (1.0 + np.arange(g.n) ** 2) ** s
    total = 0.0
    for k in range(state.K + 1):
        yk = np.sum(mw * (np.abs(cheb_coefficients(g, u1[k])) ** 2 + np.abs(cheb_coefficients(g, u2[k])) ** 2))
        total += (1.0 if k == 0 else 2.0) * (1.0 + k * k) ** s * yk
    return float(math.sqrt(total))


def _random_sobolev(cfg: SimConfig, rng) -> ModalState:
    g = build_grid(cfg.n)
    st = zero_state(cfg.K, cfg.n)
    mmax = max(4, cfg.n // 4)
    decay_m = (1.0 + np.arange(mmax) ** 2) ** (-(cfg.s + 1.0) / 2.0)
    bubble = 1.0 - g.nodes**2
    for k in range(cfg.K + 1):
        coef = rng.standard_normal(mmax) * decay_m
        if k > 0:
            coef = coef + 1j * rng.standard_normal(mmax) * decay_m
        coef = coef * (1.0 + k * k) ** (-(cfg.s + 1.0) / 2.0)
        prof = bubble * (C.chebval(g.nodes, coef.real) + 1j * C.chebval(g.nodes, coef.imag))
        prof[0] = prof[-1] = 0.0
        st.omega[k] = prof.real if k == 0 else prof
    return st


def _critical_layer(cfg: SimConfig, rng, lam: float = 0.5) -> ModalState:
    g = build_grid(cfg.n)
    y = g.nodes
    yc = math.sqrt(1.0 - lam)
    width = max(cfg.nu ** 0.25, 4.0 * math.pi / cfg.n) if cfg.nu > 0 else 4.0 * math.pi / cfg.n
    prof = (1.0 - y**2) * (np.exp(-(((y - yc) / width) ** 2)) + np.exp(-(((y + yc) / width) ** 2)))
    st = zero_state(cfg.K, cfg.n)
    st.omega[1] = prof * np.exp(2j * np.pi * rng.random())
    return st


def _optimal_linear(cfg: SimConfig, rng) -> ModalState:
    g = build_grid(cfg.n)
    op = linop.assemble(g, cfg.nu, 1, cfg.toggles)
    horizon = min(50.0, cfg.horizon)
    tg = transient_growth(op, np.linspace(horizon / 25, horizon, 25))
    st = zero_state(cfg.K, cfg.n)
    st.omega[1] = tg.optimal_profile * np.exp(2j * np.pi * rng.random())
    return st


def init_state(cfg: SimConfig) -> ModalState:
    """Initial vorticity of the configured family, scaled to Sobolev proxy = amplitude."""
    if cfg.amplitude == 0.0:
        return zero_state(cfg.K, cfg.n)
    rng = np.random.default_rng(cfg.seed)
    st = {"random_sobolev": _random_sobolev, "critical_layer": _critical_layer,
          "optimal_linear": _optimal_linear}[cfg.family](cfg, rng)
    st.omega /= sobolev_proxy(st, cfg.s, _Model(cfg))
    st.omega *= cfg.amplitude
    return st


# -- time stepping ---------------------------------------------------------------


class DivergenceError(RuntimeError):
    def __init__(self, time: float):
        self.time = time
        super().__init__(f"non-finite field at t={time:.6g}")


def cfl_limit(model: _Model, u1: np.ndarray, u2: np.ndarray, physical=None) -> float:
    """Largest admissible dt for the current velocity (x and y advection, viscous cap)."""
    cfg = model.cfg
    if physical is None:
        M = cfg.product_points
        physical = (_to_physical(u1, M), _to_physical(u2, M))
    U1 = physical[0] + model.base
    U2 = physical[1]
    lim = 0.5 / (cfg.K * max(float(np.abs(U1).max()), 1e-300))
    u2max = float(np.abs(U2).max())
    if u2max > 0:
        lim = min(lim, 2.0 / (u2max * cfg.n**2))
    if cfg.nu > 0:
        lim = min(lim, 0.1 / math.sqrt(cfg.nu))
    return lim


def _rhs_modes(model, f1, f2):
    """Interior values of i k f1 + d_y f2 (row 0 holds d_y (f2)_0)."""
    g = model.grid
    K = f1.shape[0] - 1
    df2 = f2 @ g.d1.T
    out = df2.copy()
    out[1:] += 1j * np.arange(1, K + 1)[:, None] * f1[1:]
    return out[:, 1:-1]


def zero_mode_step(state: ModalState, dt: float, nu: float, f2_zero: np.ndarray,
                   f2_prev: np.ndarray | None = None, model: _Model | None = None) -> tuple[np.ndarray, float]:
    """Advance u1_0 one step; returns the new (w_0 = d_y u1_0, mean of u1_0).

    The Neumann problem for u1_0 is advanced as the Dirichlet heat equation for
    w_0 with source d_y (f2)_0, plus the mean, which changes by the mean of (f2)_0.
    """
    model = model or _Model(SimConfig(nu=nu, K=state.K, n=state.n, dt=dt))
    g = model.grid
    f2_zero = np.real(f2_zero)
    src = (g.d1 @ f2_zero)[1:-1]
    msrc = 0.5 * float(np.sum(g.quad_weights * f2_zero))
    if f2_prev is not None:
        f2_prev = np.real(f2_prev)
        src = 1.5 * src - 0.5 * (g.d1 @ f2_prev)[1:-1]
        msrc = 1.5 * msrc - 0.25 * float(np.sum(g.quad_weights * f2_prev))
    w0 = model.prop0 @ np.real(state.omega[0, 1:-1]) + model.A0inv_dt @ src
    return g.embed(w0).real, state.mean_u1 + dt * msrc


def step_nonlinear(state: ModalState, model: _Model, prev=None, check_cfl: bool = True,
                   velocities=None, slots=None):
    """One IMEX step.

    ``prev`` is the history returned by the previous call (None for the Euler
    start). Velocities and slots of ``state`` may be passed in when already
    known. Returns ``(new_state, history, (f1, f2))``.
    """
    cfg = model.cfg
    dt = cfg.dt
    u1, u2 = model.velocities(state) if velocities is None else velocities
    physical = _physical(model, state, u1, u2) if (check_cfl or slots is None) else None
    if check_cfl:
        lim = cfl_limit(model, u1, u2, physical)
        if dt > lim:
            raise ValueError(f"dt={dt} violates the advection limit {lim:.4g} at t={state.time:.6g}")
    if slots is None:
        slots = _slots(model, state, u1, u2, physical)
    f1, f2 = slots
    rhs = _rhs_modes(model, f1, f2)[1:]
    ab = rhs if prev is None else 1.5 * rhs - 0.5 * prev[0]
    new = ModalState(np.zeros_like(state.omega), state.mean_u1, state.time + dt)
    w = state.omega[1:, 1:-1]
    new.omega[1:, 1:-1] = _batched(model.prop, w) + _batched(model.Ainv_dt, ab)
    new.omega[0], new.mean_u1 = zero_mode_step(state, dt, cfg.nu, f2[0], None if prev is None else prev[1], model)
    if not np.all(np.isfinite(new.omega)):
        raise DivergenceError(new.time)
    return new, (rhs, f2[0].real), (f1, f2)


def _slots(model, state, u1, u2, physical=None):
    if model.cfg.nonlinear:
        return _products(model, state, u1, u2, physical=physical)
    z = np.zeros_like(state.omega)
    return z, z


# -- energy functional -------------------------------------------------------------


@dataclass
class EnergyBreakdown:
    """Per-mode parts of the weighted energy for k = 0..K (index 0 holds E_0 in ``amp``)."""

    c: float
    amp: np.ndarray
    heat: np.ndarray
    enh: np.ndarray
    invd: np.ndarray

    @property
    def E(self) -> np.ndarray:
        e = self.amp + self.heat + self.enh + self.invd
        return e

    @property
    def total(self) -> float:
        """Sum over |k| <= K; modes k > 0 count once for each sign."""
        e = self.E
        return float(e[0] + 2.0 * e[1:].sum())

    def to_dict(self) -> dict:
        return dict(c=self.c, amp=self.amp.tolist(), heat=self.heat.tolist(), enh=self.enh.tolist(),
                    invd=self.invd.tolist(), E=self.E.tolist(), total=self.total)


class EnergyAccumulator:
    """Online weighted norms with trapezoidal time quadrature, for several weight rates."""

    def __init__(self, nu: float, K: int, dt: float, cs: Sequence[float]):
        self.nu, self.K, self.dt = nu, K, dt
        self.cs = list(cs)
        z = lambda: np.zeros((len(self.cs), K + 1))
        self.sup_w = z()
        self.int_w = z()
        self.int_u = z()
        self.int_f1 = z()
        self.int_f2 = z()
        self._prev = None

    def add(self, t: float, w_l2: np.ndarray, u_l2: np.ndarray, f1_l2: np.ndarray, f2_l2: np.ndarray):
        weights = np.exp(np.array(self.cs) * math.sqrt(self.nu) * t)[:, None]
        cur = [(weights * x) ** 2 for x in (w_l2, u_l2, f1_l2, f2_l2)]
        self.sup_w = np.maximum(self.sup_w, weights * w_l2)
        if self._prev is not None:
            for acc, a, b in zip((self.int_w, self.int_u, self.int_f1, self.int_f2), self._prev, cur):
                acc += 0.5 * self.dt * (a + b)
        self._prev = cur

    def breakdown(self, i: int = 0) -> EnergyBreakdown:
        nu = self.nu
        k = np.arange(self.K + 1, dtype=float)
        iw = np.sqrt(self.int_w[i])
        heat = math.sqrt(nu) * k * iw
        enh = (nu * k) ** 0.25 * iw
        invd = np.sqrt(k) * np.sqrt(self.int_u[i])
        heat[0] = enh[0] = invd[0] = 0.0
        return EnergyBreakdown(c=self.cs[i], amp=self.sup_w[i].copy(), heat=heat, enh=enh, invd=invd)

    def forcing_norms(self, i: int = 0) -> tuple[np.ndarray, np.ndarray]:
        return np.sqrt(self.int_f1[i]), np.sqrt(self.int_f2[i])


# -- runs ---------------------------------------------------------------------------


@dataclass
class RunRecord:
    config: dict
    times: np.ndarray
    energy: np.ndarray
    proxy: np.ndarray
    parts: list
    initial_energy: float
    max_energy: float
    final_energy: float
    diverged: bool
    failure: str | None
    breakdowns: list
    f1_norms: list
    f2_norms: list
    delta_w0: np.ndarray
    omega0_bar: float
    steps: int
    final_state: ModalState | None = field(default=None, repr=False)
    snapshots: list = field(default_factory=list, repr=False)

    def breakdown(self, c: float | None = None) -> EnergyBreakdown:
        if c is None:
            return self.breakdowns[0]
        for b in self.breakdowns:
            if b.c == c:
                return b
        raise KeyError(f"no breakdown accumulated for c={c}")

    def summary(self) -> dict:
        b = self.breakdowns[0]
        return dict(
            config=self.config, outcome=classify_outcome(self), initial_energy=self.initial_energy,
            max_energy=self.max_energy, final_energy=self.final_energy, diverged=self.diverged,
            failure=self.failure, steps=self.steps, energy_total=b.total, E=b.E.tolist(), c=b.c,
        )


def _mode_norms(model, st, u1, u2):
    w = model.w
    w_l2 = np.sqrt(np.sum(w * np.abs(st.omega) ** 2, axis=1))
    u_l2 = np.sqrt(np.sum(w * (np.abs(u1) ** 2 + np.abs(u2) ** 2), axis=1))
    return w_l2, u_l2


def _energy(w_l2):
    return float(2.0 * np.sum(w_l2[1:] ** 2))


def laplacian_norms(grid, omega: np.ndarray) -> np.ndarray:
    k2 = (np.arange(omega.shape[0]) ** 2)[:, None]
    lap = omega @ grid.d2.T - k2 * omega
    return np.sqrt(np.sum(grid.quad_weights * np.abs(lap) ** 2, axis=1))


def simulate(cfg: SimConfig, state: ModalState | None = None, *, cs: Sequence[float] | None = None,
             sample_every: int | None = None, snapshot_every: int = 0, keep_final: bool = True) -> RunRecord:
    """Run to the horizon and return the record (time series, energy parts, outcome data).

    Divergence and mid-run advection-limit violations end the run early and are
    recorded in ``failure``; they classify as transitions.
    """
    model = _Model(cfg)
    g = model.grid
    st = init_state(cfg) if state is None else state.copy()
    if st.K != cfg.K or st.n != cfg.n:
        raise ValueError("initial state does not match the configured K and n")
    st.omega[:, 0] = st.omega[:, -1] = 0.0
    cs = [cfg.c] if cs is None else list(cs)
    T = cfg.horizon
    steps = int(round(T / cfg.dt))
    if sample_every is None:
        sample_every = max(1, steps // 1000)
    acc = EnergyAccumulator(cfg.nu, cfg.K, cfg.dt, cs)
    times, energy, proxy, parts, snaps = [], [], [], [], []
    delta_w0 = laplacian_norms(g, st.omega)
    omega0_bar = float(np.sqrt(np.sum(g.quad_weights * np.real(st.omega[0]) ** 2)))

    u1, u2 = model.velocities(st)
    lim = cfl_limit(model, u1, u2)
    if cfg.dt > lim:
        raise ValueError(f"dt={cfg.dt} violates the advection limit {lim:.4g} for the initial state")
    w_l2, u_l2 = _mode_norms(model, st, u1, u2)
    e0 = _energy(w_l2)
    emax = e0
    failure = None
    history = None
    i = 0

    def sample(i, st, w_l2):
        times.append(st.time)
        energy.append(_energy(w_l2))
        proxy.append(sobolev_proxy(st, cfg.s, model))
        b = acc.breakdown(0)
        kk = min(8, cfg.K)
        parts.append(np.stack([b.amp[1:kk + 1], b.heat[1:kk + 1], b.enh[1:kk + 1], b.invd[1:kk + 1]], axis=1))
        if snapshot_every and i % snapshot_every == 0:
            snaps.append((st.time, st.omega.copy()))

    for i in range(steps + 1):
        physical = _physical(model, st, u1, u2)
        f1, f2 = _slots(model, st, u1, u2, physical)
        acc.add(st.time, w_l2, u_l2, *_forcing_norms(model, f1, f2))
        if i % sample_every == 0 or i == steps:
            sample(i, st, w_l2)
        if i == steps:
            break
        try:
            lim = cfl_limit(model, u1, u2, physical)
            if cfg.dt > lim:
                raise ValueError(f"dt={cfg.dt} violates the advection limit {lim:.4g} at t={st.time:.6g}")
            st, history, _ = step_nonlinear(st, model, history, check_cfl=False, velocities=(u1, u2),
                                            slots=(f1, f2))
        except (ValueError, DivergenceError) as exc:
            failure = str(exc)
            log.info("run stopped at t=%.4g: %s", st.time, failure)
            break
        u1, u2 = model.velocities(st)
        w_l2, u_l2 = _mode_norms(model, st, u1, u2)
        e = _energy(w_l2)
        if not math.isfinite(e):
            failure = f"non-finite energy at t={st.time:.6g}"
            emax = math.inf
            break
        emax = max(emax, e)
    return RunRecord(
        config=cfg.to_dict(), times=np.array(times), energy=np.array(energy), proxy=np.array(proxy),
        parts=parts, initial_energy=e0, max_energy=emax, final_energy=_energy(w_l2), diverged=failure is not None,
        failure=failure, breakdowns=[acc.breakdown(j) for j in range(len(cs))],
        f1_norms=[acc.forcing_norms(j)[0] for j in range(len(cs))],
        f2_norms=[acc.forcing_norms(j)[1] for j in range(len(cs))],
        delta_w0=delta_w0, omega0_bar=omega0_bar, steps=i, final_state=st if keep_final else None,
        snapshots=snaps,
    )


def _forcing_norms(model, f1, f2):
    w = model.w
    return (np.sqrt(np.sum(w * np.abs(f1) ** 2, axis=1)), np.sqrt(np.sum(w * np.abs(f2) ** 2, axis=1)))


def energy_functional(record: RunRecord, c: float | None = None) -> tuple[EnergyBreakdown, float]:
    b = record.breakdown(c)
    return b, b.total


# -- bootstrap diagnostics -------------------------------------------------------------


def _pair_sum(E: np.ndarray, k: int) -> float:
    K = E.shape[0] - 1
    total = 0.0
    for l in range(-K, K + 1):
        if abs(k - l) <= K:
            total += E[abs(l)] * E[abs(k - l)]
    return total


def _ratio(lhs: float, rhs: float) -> float:
    if rhs > 0:
        return lhs / rhs
    return 0.0 if lhs == 0 else math.inf


def min_inequality_holds(nu, k: int) -> bool:
    """Exact check of |k| min{(nu|k|)^{-1/4}, (nu k^2)^{-1/2}} <= nu^{-3/8} |k|^{3/8}.

    Both sides are raised to the eighth power and compared in rational arithmetic.
    """
    nu = Fraction(str(nu)) if not isinstance(nu, Fraction) else nu
    k = abs(int(k))
    if nu <= 0 or k == 0:
        raise ValueError("need nu > 0 and k != 0")
    branch_enh = Fraction(k**6) / nu**2  # (|k| (nu|k|)^{-1/4})^8
    branch_heat = 1 / nu**4  # (|k| (nu k^2)^{-1/2})^8
    return min(branch_enh, branch_heat) <= Fraction(k**3) / nu**3


BOOTSTRAP_NUS = tuple(f"{m}e-{e}" for e in (4, 3, 2) for m in range(1, 10)) + ("1e-1",)
BOOTSTRAP_KS = tuple(range(1, 65))


def min_inequality_sweep(nus=BOOTSTRAP_NUS, ks=BOOTSTRAP_KS) -> tuple[bool, list]:
    failures = [(nu, k) for nu in nus for k in ks if not min_inequality_holds(nu, k)]
    return not failures, failures


def verify_bootstrap(record: RunRecord, c: float | None = None, threshold: float = 1e3) -> dict:
    """Per-mode ratios of the energy against the three forms of the bootstrap bound (unit constants)."""
    b = record.breakdown(c)
    j = record.breakdowns.index(b)
    nu = record.config["nu"]
    E = b.E
    K = E.shape[0] - 1
    f1, f2 = record.f1_norms[j], record.f2_norms[j]
    quad = {}
    inter = {}
    for k in range(1, K + 1):
        quad[k] = _ratio(E[k], record.delta_w0[k] + nu ** (-2.0 / 3.0) * _pair_sum(E, k))
        inter[k] = _ratio(E[k], record.delta_w0[k] + nu ** -0.375 * k**0.375 * f1[k] + nu ** -0.5 * f2[k])
    zero = _ratio(E[0], record.omega0_bar + nu ** -0.5 * 2.0 * float(np.sum(E[1:] ** 2)))
    ok, failures = min_inequality_sweep()
    worst = max([zero, *quad.values()]) if quad else zero
    return dict(
        quadratic=quad, intermediate=inter, zero_mode=zero, max_ratio=worst,
        max_intermediate=max(inter.values()) if inter else 0.0,
        satisfied=bool(worst < threshold), min_inequality=ok, min_inequality_failures=failures,
    )


def classify_outcome(record) -> str:
    """Stable / Transitioned / Inconclusive from the nonzero-mode energy history."""
    if record.diverged:
        return TRANSITIONED
    e0, emax, efin = record.initial_energy, record.max_energy, record.final_energy
    if e0 == 0.0:
        return STABLE if emax == 0.0 else TRANSITIONED
    if emax > 1e2 * e0:
        return TRANSITIONED
    if efin <= 1e-2 * e0 and emax <= 10.0 * e0:
        return STABLE
    return INCONCLUSIVE


# -- outputs -------------------------------------------------------------------------------


def write_run_csv(record: RunRecord, path: Path | str) -> Path:
    path = Path(path)
    kk = record.parts[0].shape[0] if record.parts else 0
    header = ["t", "energy"]
    for k in range(1, kk + 1):
        header += [f"amp_{k}", f"heat_{k}", f"enh_{k}", f"invd_{k}"]
    header.append("sobolev_proxy")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for t, e, p, parts in zip(record.times, record.energy, record.proxy, record.parts):
            wr.writerow([repr(float(t)), repr(float(e)), *[repr(float(v)) for v in parts.ravel()], repr(float(p))])
    return path


def write_run_snapshots(record: RunRecord, path: Path | str) -> Path | None:
    snaps = record.snapshots
    if not snaps:
        return None
    cfg = record.config
    return write_snapshots(path, cfg["n"], cfg["nu"], cfg["K"], [t for t, _ in snaps], [s for _, s in snaps])
