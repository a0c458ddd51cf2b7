"""Time integration of the linearized channel equation for a single mode k.

    d_t w + L_k w = -i k f1 - d_y f2 - f3 - f4,    w(+-1) = phi(+-1) = 0

Crank-Nicolson in the full operator, trapezoidal forcing. Weighted space-time
norms (weight exp(c nu^{1/2} t)) are accumulated from per-step series with
trapezoidal quadrature; those feed the space-time inequality check.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
from scipy.integrate import trapezoid

from . import linop
from .linop import OperatorLk
from .snapshots import write_snapshots
from .spectral_core import antiderivative, h1k_norm, l2_norm

log = logging.getLogger(__name__)

Provider = Optional[Callable[[float], np.ndarray]]
DEFAULT_C = 0.05


class DivergenceError(RuntimeError):
    def __init__(self, step: int, time: float):
        self.step = step
        self.time = time
        super().__init__(f"non-finite state at step {step} (t={time:.6g})")


@dataclass(frozen=True)
class ForcingSlots:
    """Time-dependent forcing profiles (full length, callable at any time)."""

    f1: Provider = None
    f2: Provider = None
    f3: Provider = None
    f4: Provider = None

    @property
    def empty(self) -> bool:
        return all(f is None for f in (self.f1, self.f2, self.f3, self.f4))

    def profiles(self, t: float) -> dict:
        out = {}
        for name in ("f1", "f2", "f3", "f4"):
            f = getattr(self, name)
            if f is not None:
                out[name] = np.asarray(f(t), dtype=complex)
        f3 = out.get("f3")
        if f3 is not None and (abs(f3[0]) > 1e-12 or abs(f3[-1]) > 1e-12):
            raise ValueError(f"f3 must vanish at the walls; got |f3(+-1)| = {abs(f3[0]):.3e}, {abs(f3[-1]):.3e} "
                             f"at t={t}")
        return out

    def rhs(self, op: OperatorLk, t: float, profiles: dict | None = None) -> np.ndarray:
        """Interior values of -i k f1 - d_y f2 - f3 - f4."""
        p = self.profiles(t) if profiles is None else profiles
        out = np.zeros(op.size, dtype=complex)
        if "f1" in p:
            out -= 1j * op.k * p["f1"][1:-1]
        if "f2" in p:
            out -= (op.grid.d1 @ p["f2"])[1:-1]
        if "f3" in p:
            out -= p["f3"][1:-1]
        if "f4" in p:
            out -= p["f4"][1:-1]
        return out


NO_FORCING = ForcingSlots()


def harmonic(profile: np.ndarray, k: int, lam: float) -> Callable[[float], np.ndarray]:
    """Provider t -> profile * exp(-i k lam t)."""
    profile = np.asarray(profile, dtype=complex).copy()
    profile.setflags(write=False)
    return lambda t: profile * np.exp(-1j * k * lam * t)


@dataclass(frozen=True)
class SpaceTimeNorms:
    """Weighted norms of one trajectory; ``*_l2_l2`` entries are squared time integrals."""

    c: float
    w_linf_l2: float
    w_l2_l2: float
    wgrad_l2_l2: float
    u_l2_l2: float
    f12_l2_l2: float
    f3_h1_l2: float
    f4_l2_l2: float
    delta_w0: float
    sup_time: float

    @property
    def sup_at_positive_time(self) -> bool:
        return self.sup_time > 0.0


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    series: dict
    snapshot_times: np.ndarray
    states: np.ndarray
    metadata: dict = field(default_factory=dict)


def cfl_limit(nu: float, k: int) -> float:
    cap = 0.1 / math.sqrt(nu) if nu > 0 else math.inf
    return min(0.5 / abs(k), cap)


def default_horizon(nu: float, k: int) -> float:
    return min(20.0 / math.sqrt(nu * abs(k)), 2.0e3)


def _cn(op: OperatorLk, dt: float):
    def compute():
        eye = np.eye(op.size)
        lu = sla.lu_factor(eye + 0.5 * dt * op.matrix, check_finite=False)
        return lu, eye - 0.5 * dt * op.matrix

    return op.memo(("cn", float(dt)), compute)


def _check_dt(op: OperatorLk, dt: float) -> None:
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    limit = cfl_limit(op.nu, op.k)
    if dt > limit * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the advection limit {limit:.4g} for nu={op.nu}, k={op.k}")


def _advance(op, w_int, dt, r_now, r_next):
    lu, B = _cn(op, dt)
    b = B @ w_int
    if r_now is not None:
        b = b + 0.5 * dt * (r_now + r_next)
    return sla.lu_solve(lu, b, check_finite=False)


def step_linear(op: OperatorLk, state: np.ndarray, t: float, dt: float, slots: ForcingSlots | None = None) -> np.ndarray:
    """One Crank-Nicolson step from t to t + dt; returns the full-length state."""
    _check_dt(op, dt)
    slots = slots or NO_FORCING
    r0 = r1 = None
    if not slots.empty:
        r0, r1 = slots.rhs(op, t), slots.rhs(op, t + dt)
    w = _advance(op, np.asarray(state, dtype=complex)[1:-1], dt, r0, r1)
    if not np.all(np.isfinite(w)):
        raise DivergenceError(1, t + dt)
    return op.grid.embed(w)


def laplacian_norm(op: OperatorLk, w: np.ndarray) -> float:
    """||(d_y^2 - k^2) w||_{L^2}."""
    g = op.grid
    return l2_norm(g, g.d2 @ w - op.k**2 * w)


def _velocity_norm(op, w_int):
    phi = op.grid.embed(op.helmholtz_inverse @ w_int)
    return math.hypot(l2_norm(op.grid, op.grid.d1 @ phi), abs(op.k) * l2_norm(op.grid, phi))


def evolve(op: OperatorLk, w0: np.ndarray, slots: ForcingSlots | None = None, T: float | None = None,
           dt: float = 0.01, c: float = DEFAULT_C, store_every: int | None = None) -> tuple[Trajectory, SpaceTimeNorms]:
    """Integrate to the horizon T and accumulate the weighted space-time norms."""
    _check_dt(op, dt)
    if c < 0:
        raise ValueError("weight rate c must be non-negative")
    w0 = np.asarray(w0, dtype=complex)
    if w0.shape[0] != op.grid.n:
        raise ValueError(f"initial profile length {w0.shape[0]} does not match n={op.grid.n}")
    if abs(w0[0]) > 1e-12 or abs(w0[-1]) > 1e-12:
        raise ValueError("initial vorticity must vanish at the walls")
    T = default_horizon(op.nu, op.k) if T is None else float(T)
    steps = int(round(T / dt))
    if steps < 1:
        raise ValueError(f"horizon T={T} shorter than one step dt={dt}")
    if store_every is None:
        store_every = max(1, steps // 2000)
    slots = slots or NO_FORCING
    g, k = op.grid, op.k
    times = dt * np.arange(steps + 1)

    series = {name: np.zeros(steps + 1) for name in ("w_l2", "w_h1k", "u_l2", "f12", "f3_h1", "f4")}
    snaps_t, snaps = [], []

    def record(i, w_full, prof):
        series["w_l2"][i] = l2_norm(g, w_full)
        series["w_h1k"][i] = h1k_norm(g, k, w_full)
        series["u_l2"][i] = _velocity_norm(op, w_full[1:-1])
        if prof:
            f1 = l2_norm(g, prof["f1"]) if "f1" in prof else 0.0
            f2 = l2_norm(g, prof["f2"]) if "f2" in prof else 0.0
            series["f12"][i] = math.hypot(f1, f2)
            series["f3_h1"][i] = h1k_norm(g, k, prof["f3"]) if "f3" in prof else 0.0
            series["f4"][i] = l2_norm(g, prof["f4"]) if "f4" in prof else 0.0
        if i % store_every == 0 or i == steps:
            snaps_t.append(times[i])
            snaps.append(w_full.copy())

    w = w0.copy()
    w[0] = w[-1] = 0.0
    prof = None if slots.empty else slots.profiles(0.0)
    r_now = None if slots.empty else slots.rhs(op, 0.0, prof)
    record(0, w, prof)
    w_int = w[1:-1]
    for i in range(1, steps + 1):
        r_next = None
        if not slots.empty:
            prof = slots.profiles(times[i])
            r_next = slots.rhs(op, times[i], prof)
        w_int = _advance(op, w_int, dt, r_now, r_next)
        if not np.all(np.isfinite(w_int)):
            raise DivergenceError(i, times[i])
        r_now = r_next
        record(i, g.embed(w_int), prof)

    traj = Trajectory(
        times=times, series=series, snapshot_times=np.array(snaps_t), states=np.array(snaps),
        metadata=dict(nu=op.nu, k=k, dt=dt, n=g.n, T=T, c=c),
    )
    return traj, space_time_norms(traj, op, w0, c)


def space_time_norms(traj: Trajectory, op: OperatorLk, w0: np.ndarray, c: float) -> SpaceTimeNorms:
    t = traj.times
    s = traj.series
    weight = np.exp(c * math.sqrt(op.nu) * t)
    ww = weight * s["w_l2"]
    i_sup = int(np.argmax(ww))
    sq = lambda x: float(trapezoid((weight * x) ** 2, t))
    return SpaceTimeNorms(
        c=c, w_linf_l2=float(ww[i_sup]), w_l2_l2=sq(s["w_l2"]), wgrad_l2_l2=sq(s["w_h1k"]),
        u_l2_l2=sq(s["u_l2"]), f12_l2_l2=sq(s["f12"]), f3_h1_l2=sq(s["f3_h1"]), f4_l2_l2=sq(s["f4"]),
        delta_w0=laplacian_norm(op, np.asarray(w0, dtype=complex)), sup_time=float(t[i_sup]),
    )


# -- the space-time inequality -------------------------------------------------


def f4_weight(nu: float, k: int) -> tuple[float, str]:
    """min{(nu|k|)^{-1/2}, (nu k^2)^{-1}} and the name of the binding branch."""
    a = (nu * abs(k)) ** -0.5
    b = 1.0 / (nu * k * k)
    return (a, "enhanced") if a <= b else (b, "heat")


def _terms(op, norms: SpaceTimeNorms, include_initial: bool):
    nu, k = op.nu, abs(op.k)
    lhs = {
        "amplitude": norms.w_linf_l2**2,
        "dissipation": nu * norms.wgrad_l2_l2,
        "enhanced": math.sqrt(nu * k) * norms.w_l2_l2,
        "inviscid_damping": k * norms.u_l2_l2,
    }
    weight4, branch = f4_weight(nu, k)
    rhs = {
        "initial": norms.delta_w0**2 if include_initial else 0.0,
        "f12": norms.f12_l2_l2 / nu,
        "f3": norms.f3_h1_l2 / k,
        "f4": weight4 * norms.f4_l2_l2,
    }
    return lhs, rhs, branch


@dataclass(frozen=True)
class SpaceTimeCheck:
    lhs: dict
    rhs: dict
    term_ratios: dict
    combined: float
    violation: bool

    @classmethod
    def build(cls, lhs: dict, rhs: dict) -> "SpaceTimeCheck":
        total_l, total_r = sum(lhs.values()), sum(rhs.values())
        if total_r > 0:
            ratios = {name: v / total_r for name, v in lhs.items()}
            combined = total_l / total_r
        else:
            ratios = {name: (math.inf if v > 0 else 0.0) for name, v in lhs.items()}
            combined = math.inf if total_l > 0 else 0.0
        return cls(lhs=lhs, rhs=rhs, term_ratios=ratios, combined=combined, violation=total_r == 0 and total_l > 0)


@dataclass(frozen=True)
class SpaceTimeReport:
    nu: float
    k: int
    c: float
    full: SpaceTimeCheck
    inhomogeneous: SpaceTimeCheck | None
    binding_branch: str
    norms: SpaceTimeNorms
    decay_rate: float | None
    weight_guard: bool

    @property
    def combined(self) -> float:
        return self.full.combined

    @property
    def violation(self) -> bool:
        return self.full.violation or (self.inhomogeneous is not None and self.inhomogeneous.violation)


def verify_prop41(op: OperatorLk, w0: np.ndarray, slots: ForcingSlots | None = None, T: float | None = None,
                  dt: float = 0.01, c: float = DEFAULT_C) -> SpaceTimeReport:
    """Measure the weighted space-time inequality on a run.

    The full check compares the weighted LHS of the run from ``w0`` with the
    RHS built from ||Delta_k w0||^2 and the slot norms. With forcing present, a
    second run from zero data isolates the inhomogeneous estimate.
    ``weight_guard`` is set when c nu^{1/2} reaches the measured decay rate of
    the homogeneous part (the weighted norms then grow).
    """
    slots = slots or NO_FORCING
    w0 = np.asarray(w0, dtype=complex)
    traj, norms = evolve(op, w0, slots, T, dt, c)
    lhs, rhs, branch = _terms(op, norms, include_initial=True)
    full = SpaceTimeCheck.build(lhs, rhs)
    inh = None
    if not slots.empty:
        _, n_i = evolve(op, np.zeros_like(w0), slots, T, dt, c)
        li, ri, _ = _terms(op, n_i, include_initial=False)
        inh = SpaceTimeCheck.build(li, ri)
    rate = None
    guard = False
    if slots.empty and np.any(w0 != 0):
        rate = measure_decay_rate(traj).rate
        guard = c * math.sqrt(op.nu) >= rate
    elif np.any(w0 != 0):
        htraj, _ = evolve(op, w0, None, T, dt, c)
        rate = measure_decay_rate(htraj).rate
        guard = c * math.sqrt(op.nu) >= rate
    if guard:
        log.warning("weight rate c*nu^(1/2)=%.3g reaches the decay rate %.3g (nu=%g, k=%d)",
                    c * math.sqrt(op.nu), rate, op.nu, op.k)
    if full.violation:
        log.error("space-time check: RHS vanishes while LHS is positive (nu=%g, k=%d)", op.nu, op.k)
    return SpaceTimeReport(nu=op.nu, k=op.k, c=c, full=full, inhomogeneous=inh, binding_branch=branch,
                           norms=norms, decay_rate=rate, weight_guard=guard)


# -- decay and transient growth ------------------------------------------------


@dataclass(frozen=True)
class DecayFit:
    rate: float
    window: tuple[float, float]
    residual: float
    low_confidence: bool


def measure_decay_rate(traj: Trajectory, window: tuple[float, float] = (0.2, 0.8)) -> DecayFit:
    """Least-squares decay rate of log ||w(t)||_{L^2} on [0.2 T, 0.8 T].

    The fit is flagged low-confidence when the log-norm rises inside the window
    by more than ten times the rms fit residual.
    """
    t = traj.times
    if t.shape[0] < 100:
        raise ValueError(f"decay fit needs at least 100 samples, got {t.shape[0]}")
    T = t[-1]
    t0, t1 = window[0] * T, window[1] * T
    sel = (t >= t0) & (t <= t1)
    norms = traj.series["w_l2"][sel]
    if np.any(norms <= 0):
        raise ValueError("decay fit needs a nonvanishing trajectory")
    ts = t[sel]
    logn = np.log(norms)
    A = np.vstack([ts, np.ones_like(ts)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, logn, rcond=None)
    resid = logn - (slope * ts + icpt)
    rms = float(np.sqrt(np.mean(resid**2)))
    rises = float(np.sum(np.clip(np.diff(logn), 0.0, None)))
    low = rises > 10.0 * rms and rises > 1e-12
    return DecayFit(rate=float(-slope), window=(float(t0), float(t1)), residual=rms, low_confidence=bool(low))


@dataclass(frozen=True)
class TransientGrowth:
    times: np.ndarray
    growth: np.ndarray
    max_growth: float
    t_max: float
    optimal_profile: np.ndarray
    method: str


def transient_growth(op: OperatorLk, T_grid, method: str = "expm", dt: float = 1e-3) -> TransientGrowth:
    """Largest L^2 amplification ||exp(-t L_k)|| over ``T_grid`` (t = 0 always included).

    ``optimal_profile`` is the unit initial profile with the largest response
    at ``t_max``, the best positive horizon; it exists even when nothing is
    amplified (``max_growth`` is then the identity value 1).

    ``method="expm"`` uses the matrix exponential, ``method="cn"`` repeated
    Crank-Nicolson steps of size ``dt``; both in the quadrature-weighted norm.
    """
    T_grid = np.asarray(sorted(float(t) for t in T_grid))
    if np.any(T_grid <= 0):
        raise ValueError("transient growth horizons must be positive")
    sw = op.sqrt_weights
    A = -(sw[:, None] * op.matrix) / sw[None, :]
    times = np.concatenate(([0.0], T_grid))
    growth = [1.0]
    best, t_best, best_vec = -1.0, 0.0, None
    if method == "expm":
        props = (sla.expm(A * t) for t in T_grid)
    elif method == "cn":
        eye = np.eye(op.size)
        step = np.linalg.solve(eye - 0.5 * dt * A, eye + 0.5 * dt * A)

        def cn_props():
            P = np.eye(op.size, dtype=complex)
            done = 0
            for t in T_grid:
                target = int(round(t / dt))
                if target > done:
                    P = np.linalg.matrix_power(step, target - done) @ P
                    done = target
                yield P

        props = cn_props()
    else:
        raise ValueError(f"unknown propagator method {method!r}; expected 'expm' or 'cn'")
    for t, P in zip(T_grid, props):
        if not np.all(np.isfinite(P)):
            raise RuntimeError(f"propagator overflow at t={t}; the operator is not stable")
        _, s, vh = np.linalg.svd(P)
        growth.append(float(s[0]))
        if s[0] > best:
            best, t_best, best_vec = float(s[0]), float(t), vh[0].conj()
    profile = op.grid.embed(best_vec / sw)
    profile /= l2_norm(op.grid, profile)
    return TransientGrowth(times=times, growth=np.array(growth), max_growth=max(best, 1.0), t_max=t_best,
                           optimal_profile=profile, method=method)


# -- inputs and outputs --------------------------------------------------------


def smooth_random_profile(grid, seed: int, modes: int = 8) -> np.ndarray:
    """Random combination of sin(m pi (y+1)/2) with 1/m^2 decay, unit L^2 norm."""
    rng = np.random.default_rng(seed)
    y = grid.nodes
    coef = (rng.standard_normal(modes) + 1j * rng.standard_normal(modes)) / np.arange(1, modes + 1) ** 2
    prof = sum(c * np.sin(m * np.pi * (y + 1) / 2) for m, c in enumerate(coef, start=1))
    prof[0] = prof[-1] = 0.0
    return prof / l2_norm(grid, prof)


SLOT_NORMS = {"f1": "F_l2", "f2": "F_hm1k", "f3": "F_h1k", "f4": "F_l2"}


def adversarial_slots(op: OperatorLk, slot: str, points: int = 41) -> tuple[ForcingSlots, float]:
    """Single-slot time-harmonic forcing at the most amplified frequency.

    The profile is the maximizer of ||w||_{L^2} against the slot's natural
    norm of the assembled forcing; for f2 the maximizing forcing
    (-d_y^2 + k^2) G is written as -d_y f2 with f2 = d_y G - k^2 int_{-1}^y G.
    Returns the slots and the chosen lambda.
    """
    if slot not in SLOT_NORMS:
        raise ValueError(f"unknown slot {slot!r}")
    rhs = SLOT_NORMS[slot]

    def amp(lam):
        return linop.weighted_operator_norm(op, lam, "w_l2", rhs)

    lam, _, _ = linop.grid_then_golden(amp, -0.25, 1.25, points, tol=1e-5, maximize=True)
    _, F = linop.weighted_operator_norm(op, lam, "w_l2", rhs, return_vector=True)
    g = op.grid
    if slot == "f1":
        prof = 1j * F / op.k  # -i k f1 = F
    elif slot == "f2":
        G = g.embed(np.linalg.solve(linop.dirichlet_helmholtz(op), F[1:-1]))
        prof = g.d1 @ G - op.k**2 * antiderivative(g, G)
    else:
        prof = -F
    prof = prof / l2_norm(g, prof)
    return ForcingSlots(**{slot: harmonic(prof, op.k, lam)}), float(lam)


TRAJECTORY_COLUMNS = ("t", "w_l2", "w_h1k", "u_l2")


def write_trajectory_csv(traj: Trajectory, path: Path | str) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(TRAJECTORY_COLUMNS)
        s = traj.series
        for i, t in enumerate(traj.times):
            wr.writerow([repr(float(t)), repr(float(s["w_l2"][i])), repr(float(s["w_h1k"][i])), repr(float(s["u_l2"][i]))])
    return path


def write_trajectory_snapshots(traj: Trajectory, path: Path | str) -> Path:
    m = traj.metadata
    return write_snapshots(path, m["n"], m["nu"], m["k"], traj.snapshot_times, traj.states)
