"""Threshold campaigns: bisect the stable amplitude per viscosity and fit its exponent.

Each viscosity gets a log-amplitude bisection between a stable lower and a
transitioned upper amplitude. Every simulation is appended to a
newline-delimited JSON checkpoint before the next decision is made, so a
killed campaign resumes without repeating runs. Reports are a pure function
of the plan: worker count and scheduling never change them.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Generator, Sequence

import numpy as np

from . import nonlinear_sim as ns
from .nonlinear_sim import INCONCLUSIVE, STABLE, TRANSITIONED, SimConfig

log = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.ndjson"
RECORD_FIELDS = ("campaign", "nu", "amplitude", "seed", "outcome", "metrics", "artifact_paths", "config_hash")


class CheckpointError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScanPlan:
    """Amplitude bracket A = eps * nu^g (``g=None`` makes eps_lo/eps_hi absolute amplitudes)."""

    nu_list: tuple = (1e-2, 3e-3, 1e-3)
    eps_lo: float = 1e-3
    eps_hi: float = 10.0
    g: float | None = 2.0 / 3.0
    template: dict = field(default_factory=dict)
    tolerance: float = 0.05
    max_runs_per_nu: int = 40
    workers: int = 1
    campaign: str = "default"
    seeds: tuple = (0,)

    def __post_init__(self):
        if not 0 < self.tolerance < 0.5:
            raise ValueError(f"bisection tolerance must lie in (0, 0.5), got {self.tolerance}")
        if not 0 < self.eps_lo < self.eps_hi:
            raise ValueError("need 0 < eps_lo < eps_hi")
        if len(self.nu_list) == 0 or len(self.seeds) == 0:
            raise ValueError("plan needs at least one viscosity and one seed")
        nus = [float(v) for v in self.nu_list]
        if len(nus) >= 2 and max(nus) / min(nus) < 100:
            log.warning("viscosities span less than two decades; the exponent fit will be weak")

    def bracket(self, nu: float) -> tuple[float, float]:
        if self.g is None:
            return float(self.eps_lo), float(self.eps_hi)
        return float(self.eps_lo * nu**self.g), float(self.eps_hi * nu**self.g)

    def config(self, nu: float, amplitude: float, seed: int) -> SimConfig:
        return SimConfig.from_dict({**self.template, "nu": float(nu), "amplitude": float(amplitude), "seed": int(seed)})

    def identity(self) -> dict:
        """Everything that determines results (the worker count does not)."""
        d = asdict(self)
        d.pop("workers")
        d["nu_list"] = [float(v) for v in self.nu_list]
        d["seeds"] = [int(s) for s in self.seeds]
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.identity(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "ScanPlan":
        data = dict(data)
        for key in ("nu_list", "seeds"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


@dataclass(frozen=True)
class ThresholdResult:
    nu: float
    a_star: float
    lower: float | None
    upper: float | None
    one_sided: str | None
    calls: int
    inconclusive: int
    non_monotone: bool
    history: tuple

    def to_dict(self) -> dict:
        d = asdict(self)
        d["history"] = [list(h) for h in self.history]
        return d


def combine_outcomes(outcomes: Sequence[str]) -> str:
    """Worst outcome over seeds: any transition wins, then any inconclusive run."""
    if TRANSITIONED in outcomes:
        return TRANSITIONED
    if INCONCLUSIVE in outcomes:
        return INCONCLUSIVE
    return STABLE


def max_bisection_calls(a_lo: float, a_hi: float, tol: float) -> int:
    return math.ceil(math.log2(math.log(a_hi / a_lo) / math.log1p(tol))) + 2


def _bisect(nu: float, plan: ScanPlan) -> Generator[float, str, ThresholdResult]:
    """Bisection on log A; yields amplitudes, receives outcomes."""
    lo, hi = plan.bracket(nu)
    history = []
    inconclusive = 0

    def ask(a):
        out = yield a
        history.append((a, out))
        return out

    out_lo = yield from ask(lo)
    if out_lo != STABLE:
        # probe the cap too: Stable there exposes a non-monotone detector
        yield from ask(hi)
        return _finish(nu, lo, None, lo, "upper", history, inconclusive + (out_lo == INCONCLUSIVE))
    out_hi = yield from ask(hi)
    if out_hi != TRANSITIONED:
        # no transition up to the cap: only a lower bound on the threshold
        return _finish(nu, hi if out_hi == STABLE else lo, hi if out_hi == STABLE else lo, None, "lower", history,
                       inconclusive + (out_hi == INCONCLUSIVE))
    stop = math.log1p(plan.tolerance)
    while math.log(hi / lo) > stop and len(history) < plan.max_runs_per_nu:
        mid = math.sqrt(lo * hi)
        out = yield from ask(mid)
        if out == STABLE:
            lo = mid
        else:
            inconclusive += out == INCONCLUSIVE
            hi = mid
    return _finish(nu, lo, lo, hi, None, history, inconclusive)


def _finish(nu, a_star, lower, upper, one_sided, history, inconclusive) -> ThresholdResult:
    stable = [a for a, o in history if o == STABLE]
    trans = [a for a, o in history if o == TRANSITIONED]
    non_monotone = bool(stable and trans and max(stable) > min(trans))
    if non_monotone:
        log.warning("non-monotone detector at nu=%g: Stable at %g above Transitioned at %g", nu, max(stable), min(trans))
    if one_sided:
        log.info("nu=%g: one-sided threshold (%s bound %g)", nu, one_sided, a_star)
    return ThresholdResult(nu=float(nu), a_star=float(a_star), lower=lower, upper=upper, one_sided=one_sided,
                           calls=len(history), inconclusive=int(inconclusive), non_monotone=non_monotone,
                           history=tuple((float(a), o) for a, o in history))


def bisect_threshold(nu: float, detector: Callable[[float], str], plan: ScanPlan) -> ThresholdResult:
    """Drive the bisection with ``detector(amplitude) -> outcome``."""
    gen = _bisect(nu, plan)
    try:
        a = next(gen)
        while True:
            a = gen.send(detector(a))
    except StopIteration as stop:
        return stop.value


@dataclass(frozen=True)
class ThresholdFit:
    pairs: tuple
    gamma_hat: float
    intercept: float
    residual: float
    slope_min: float
    slope_max: float
    excluded: tuple

    @property
    def epsilon(self) -> float:
        return math.exp(self.intercept)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pairs"] = [list(p) for p in self.pairs]
        d["excluded"] = [list(p) for p in self.excluded]
        d["epsilon"] = self.epsilon
        return d


def fit_gamma(pairs) -> ThresholdFit:
    """Least squares of log A* against log nu over two-sided pairs.

    ``pairs`` holds ``ThresholdResult`` objects or ``(nu, A*)`` / ``(nu, A*, one_sided)`` tuples.
    """
    usable, excluded = [], []
    for p in pairs:
        if isinstance(p, ThresholdResult):
            nu, a, side = p.nu, p.a_star, p.one_sided
        else:
            nu, a, side = (tuple(p) + (None,))[:3]
        (excluded if side else usable).append((float(nu), float(a)) if not side else (float(nu), float(a), side))
    nus = {nu for nu, _ in usable}
    if len(usable) < 3 or len(nus) < 3:
        names = ", ".join(f"nu={e[0]:g} ({e[2]})" for e in excluded) or "none"
        raise ValueError(f"need at least 3 two-sided thresholds at distinct nu, got {len(usable)}; "
                         f"one-sided: {names}")
    if any(a <= 0 for _, a in usable):
        raise ValueError("thresholds must be positive")
    usable.sort()
    lx = np.log([nu for nu, _ in usable])
    ly = np.log([a for _, a in usable])
    A = np.vstack([lx, np.ones_like(lx)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = float(np.sqrt(np.mean((ly - slope * lx - icpt) ** 2)))
    pair_slopes = [(ly[j] - ly[i]) / (lx[j] - lx[i]) for i in range(len(lx)) for j in range(i + 1, len(lx))
                   if lx[j] != lx[i]]
    return ThresholdFit(pairs=tuple(usable), gamma_hat=float(slope), intercept=float(icpt), residual=resid,
                        slope_min=float(min(pair_slopes)), slope_max=float(max(pair_slopes)),
                        excluded=tuple(sorted(excluded)))


# -- runners ------------------------------------------------------------------------


def simulation_runner(cfg: SimConfig) -> tuple[str, dict]:
    rec = ns.simulate(cfg, keep_final=False)
    b = rec.breakdown()
    metrics = dict(initial_energy=rec.initial_energy, max_energy=rec.max_energy, final_energy=rec.final_energy,
                   energy_total=b.total, failure=rec.failure, steps=rec.steps)
    return ns.classify_outcome(rec), metrics


@dataclass(frozen=True)
class SyntheticRunner:
    """Stable iff A <= eps * nu^gamma; stands in for simulations in tests and fixtures."""

    gamma: float = 2.0 / 3.0
    eps: float = 1.0

    def __call__(self, cfg: SimConfig) -> tuple[str, dict]:
        limit = self.eps * cfg.nu**self.gamma
        return (STABLE if cfg.amplitude <= limit else TRANSITIONED), {"limit": limit}


# -- checkpoint ---------------------------------------------------------------------------


def _key(nu, amplitude, seed):
    return (repr(float(nu)), repr(float(amplitude)), int(seed))


def load_checkpoint(path: Path, config_hash: str | None = None) -> dict:
    """Completed runs keyed by (nu, amplitude, seed); refuses malformed or foreign records."""
    done = {}
    if not path.exists():
        return done
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CheckpointError(f"{path}:{lineno}: unreadable record {line.strip()[:120]!r} ({exc.msg})") from exc
            missing = [f for f in RECORD_FIELDS if f not in rec]
            if missing:
                raise CheckpointError(f"{path}:{lineno}: record lacks {missing}: {line.strip()[:120]!r}")
            if rec["outcome"] not in (STABLE, TRANSITIONED, INCONCLUSIVE):
                raise CheckpointError(f"{path}:{lineno}: unknown outcome {rec['outcome']!r}")
            if config_hash is not None and rec["config_hash"] != config_hash:
                raise CheckpointError(f"{path}:{lineno}: record belongs to a different plan "
                                      f"(hash {rec['config_hash'][:12]}...)")
            key = _key(rec["nu"], rec["amplitude"], rec["seed"])
            if key in done:
                raise CheckpointError(f"{path}:{lineno}: duplicated run {key}")
            done[key] = rec
    return done


def _append(path: Path, record: dict) -> None:
    with open(path, "a") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")
        fh.flush()


# -- campaigns -----------------------------------------------------------------------------


@dataclass
class CampaignReport:
    plan: dict
    config_hash: str
    thresholds: list
    fit: ThresholdFit | None
    fit_error: str | None
    runs: int
    new_runs: int

    def to_dict(self) -> dict:
        return dict(plan=self.plan, config_hash=self.config_hash, thresholds=[t.to_dict() for t in self.thresholds],
                    fit=self.fit.to_dict() if self.fit else None, fit_error=self.fit_error, runs=self.runs)


def _run_job(args):
    runner, cfg = args
    return runner(cfg)


def run_campaign(plan: ScanPlan, directory: Path | str, runner: Callable | None = None,
                 plot: bool = True) -> CampaignReport:
    """Bisect every viscosity of the plan, checkpointing each simulation.

    Bisections of different viscosities advance concurrently; the checkpoint
    is written only by this process, one record per finished run.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    runner = runner or simulation_runner
    chash = plan.config_hash()
    ckpt = directory / CHECKPOINT_NAME
    done = load_checkpoint(ckpt, chash)
    new_runs = 0
    pool = ProcessPoolExecutor(max_workers=plan.workers) if plan.workers > 1 else None

    gens = {float(nu): _bisect(float(nu), plan) for nu in plan.nu_list}
    waiting = {nu: next(g) for nu, g in gens.items()}  # nu -> amplitude requested
    results: dict[float, ThresholdResult] = {}
    outcomes: dict[tuple, str] = {}
    running: dict = {}
    try:
        while waiting:
            # satisfy requests from the checkpoint; submit the rest
            for nu, a in list(waiting.items()):
                for seed in plan.seeds:
                    key = _key(nu, a, seed)
                    if key in done:
                        outcomes[key] = done[key]["outcome"]
                    elif key not in running.values() and key not in outcomes:
                        cfg = plan.config(nu, a, seed)
                        if pool is None:
                            outcome, metrics = runner(cfg)
                            new_runs += _record(ckpt, done, plan, chash, nu, a, seed, outcome, metrics)
                            outcomes[key] = outcome
                        else:
                            running[pool.submit(_run_job, (runner, cfg))] = key
            if running:
                finished, _ = wait(list(running), return_when=FIRST_COMPLETED)
                for fut in sorted(finished, key=lambda f: running[f]):
                    key = running.pop(fut)
                    outcome, metrics = fut.result()
                    nu, a, seed = float(key[0]), float(key[1]), key[2]
                    new_runs += _record(ckpt, done, plan, chash, nu, a, seed, outcome, metrics)
                    outcomes[key] = outcome
            for nu, a in list(waiting.items()):
                keys = [_key(nu, a, s) for s in plan.seeds]
                if all(k in outcomes for k in keys):
                    try:
                        waiting[nu] = gens[nu].send(combine_outcomes([outcomes[k] for k in keys]))
                    except StopIteration as stop:
                        results[nu] = stop.value
                        del waiting[nu]
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)

    thresholds = [results[nu] for nu in sorted(results)]
    try:
        fit, err = fit_gamma(thresholds), None
    except ValueError as exc:
        fit, err = None, str(exc)
    report = CampaignReport(plan=plan.identity(), config_hash=chash, thresholds=thresholds, fit=fit, fit_error=err,
                            runs=len(done), new_runs=new_runs)
    write_campaign_report(report, directory, plot=plot)
    return report


def _record(ckpt, done, plan, chash, nu, a, seed, outcome, metrics) -> int:
    rec = dict(campaign=plan.campaign, nu=float(nu), amplitude=float(a), seed=int(seed), outcome=outcome,
               metrics=_jsonable(metrics), artifact_paths=[], config_hash=chash)
    _append(ckpt, rec)
    done[_key(nu, a, seed)] = rec
    return 1


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


SUMMARY_COLUMNS = ("nu", "a_star", "lower", "upper", "one_sided", "calls", "inconclusive", "non_monotone")


def write_campaign_report(report: CampaignReport, directory: Path | str, plot: bool = True) -> dict:
    directory = Path(directory)
    paths = {}
    paths["json"] = directory / "report.json"
    paths["json"].write_text(json.dumps(_jsonable(report.to_dict()), indent=2, sort_keys=True) + "\n")
    paths["csv"] = directory / "thresholds.csv"
    with open(paths["csv"], "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(SUMMARY_COLUMNS)
        for t in report.thresholds:
            wr.writerow([repr(t.nu), repr(t.a_star), "" if t.lower is None else repr(t.lower),
                         "" if t.upper is None else repr(t.upper), t.one_sided or "", t.calls, t.inconclusive,
                         int(t.non_monotone)])
    paths["plot_csv"] = directory / "threshold_plot.csv"
    with open(paths["plot_csv"], "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(("log_nu", "log_a_star", "one_sided", "log_reference"))
        anchor = report.fit.intercept if report.fit else None
        for t in report.thresholds:
            ref = "" if anchor is None else repr(anchor + (2.0 / 3.0) * math.log(t.nu))
            wr.writerow([repr(math.log(t.nu)), repr(math.log(t.a_star)), t.one_sided or "", ref])
    if plot and report.thresholds:
        from .plotting import loglog_lines

        two = [t for t in report.thresholds if not t.one_sided]
        one = [t for t in report.thresholds if t.one_sided]
        series = {"A* (bisection)": ([t.nu for t in two], [t.a_star for t in two])}
        if one:
            series["one-sided bound"] = ([t.nu for t in one], [t.a_star for t in one])
        ref_pts = two or one
        paths["svg"] = loglog_lines(series, directory / "threshold.svg", "nu", "A*",
                                    title="stability threshold",
                                    reference=(2.0 / 3.0, ref_pts[0].nu, ref_pts[0].a_star))
    return paths
