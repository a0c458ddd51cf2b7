"""Measured ratios for the Orr-Sommerfeld resolvent inequalities.

Five inequality groups are evaluated as LHS/RHS ratios at points (nu, k, lam).
Each LHS is a sum of weighted terms. Quadratic terms (L^2 and H^1_k norms of w
and u) are measured exactly as discrete operator norms; the L^1 norm of w and
the L^inf norm of u have no such characterization and are lower-bounded on a
bank of adversarial forcings concentrated at the critical layer 1 - y^2 = lam.

With mu = |lam - 1|^{1/2} + |nu/k|^{1/4}, the groups are

=================  ==============================================================  ======================
id                 LHS terms                                                       RHS
=================  ==============================================================  ======================
resol_slip_a       nu^{3/8}|k|^{5/8}(|w|_1 + |k|^{1/2}|u|) + (nu|k|)^{1/2}|w|      |F|_{L^2}
                   + nu^{3/4}|k|^{1/4}|(d_y,|k|)w|
resol_slip_b       nu^{3/4}|k|^{1/4}|w| + nu|(d_y,|k|)w| + (nu|k|)^{1/2}|u|         |F|_{H^-1_k}
resol_slip_c       |nu/k|^{1/2}|(d_y,|k|)w| + |nu/k|^{1/4}|w|                       |k|^{-1}|(d_y,|k|)F|
                   + |nu/k|^{1/8}|u|_inf + |u|
resol_lambda_a     nu^{1/6}|k|^{5/6}mu^{1/3}|u| + nu^{2/3}|k|^{1/3}mu^{1/3}|(d_y,|k|)w|  |F|_{L^2}
                   + nu^{1/3}|k|^{2/3}mu^{2/3}|w|
resol_lambda_b     nu^{2/3}|k|^{1/3}mu^{1/3}|w|                                     |F|_{H^-1_k}
=================  ==============================================================  ======================
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import linop
from .spectral_core import NormBundle, build_grid, compute_norms, h1k_norm, hm1k_norm, l1_norm, l2_norm

log = logging.getLogger(__name__)

INEQUALITY_IDS = ("resol_slip_a", "resol_slip_b", "resol_slip_c", "resol_lambda_a", "resol_lambda_b")
ALIASES = {
    "a": "resol_slip_a",
    "b": "resol_slip_b",
    "c": "resol_slip_c",
    "la": "resol_lambda_a",
    "lambda_a": "resol_lambda_a",
    "lb": "resol_lambda_b",
    "lambda_b": "resol_lambda_b",
}
DEFAULT_NUS = (1e-2, 3e-3, 1e-3, 3e-4, 1e-4)
DEFAULT_KS = (1, 2, 4, 8)
DEFAULT_LAMBDAS = tuple(np.round(np.linspace(-0.25, 1.25, 41), 10))


def resolve_id(name: str) -> str:
    if name in INEQUALITY_IDS:
        return name
    if name in ALIASES:
        return ALIASES[name]
    raise ValueError(f"unknown inequality id {name!r}; valid ids: {', '.join(INEQUALITY_IDS)} "
                     f"(aliases: {', '.join(sorted(ALIASES))})")


def _mu(nu, k, lam):
    return abs(lam - 1.0) ** 0.5 + abs(nu / k) ** 0.25


# (term name, lhs functional, coefficient(nu, |k|, lam))
_TERMS = {
    "resol_slip_a": (
        "F_l2",
        [
            ("w_l1", "w_l1", lambda nu, k, lam: nu ** 0.375 * k ** 0.625),
            ("u_l2", "u_l2", lambda nu, k, lam: nu ** 0.375 * k ** 1.125),
            ("w_l2", "w_l2", lambda nu, k, lam: (nu * k) ** 0.5),
            ("w_h1k", "w_h1k", lambda nu, k, lam: nu ** 0.75 * k ** 0.25),
        ],
    ),
    "resol_slip_b": (
        "F_hm1k",
        [
            ("w_l2", "w_l2", lambda nu, k, lam: nu ** 0.75 * k ** 0.25),
            ("w_h1k", "w_h1k", lambda nu, k, lam: nu),
            ("u_l2", "u_l2", lambda nu, k, lam: (nu * k) ** 0.5),
        ],
    ),
    # RHS is |k|^{-1} ||(d_y,|k|)F||, so the |k| moves into every coefficient.
    "resol_slip_c": (
        "F_h1k",
        [
            ("w_h1k", "w_h1k", lambda nu, k, lam: k * (nu / k) ** 0.5),
            ("w_l2", "w_l2", lambda nu, k, lam: k * (nu / k) ** 0.25),
            ("u_linf", "u_linf", lambda nu, k, lam: k * (nu / k) ** 0.125),
            ("u_l2", "u_l2", lambda nu, k, lam: k),
        ],
    ),
    "resol_lambda_a": (
        "F_l2",
        [
            ("u_l2", "u_l2", lambda nu, k, lam: nu ** (1 / 6) * k ** (5 / 6) * _mu(nu, k, lam) ** (1 / 3)),
            ("w_h1k", "w_h1k", lambda nu, k, lam: nu ** (2 / 3) * k ** (1 / 3) * _mu(nu, k, lam) ** (1 / 3)),
            ("w_l2", "w_l2", lambda nu, k, lam: nu ** (1 / 3) * k ** (2 / 3) * _mu(nu, k, lam) ** (2 / 3)),
        ],
    ),
    "resol_lambda_b": (
        "F_hm1k",
        [("w_l2", "w_l2", lambda nu, k, lam: nu ** (2 / 3) * k ** (1 / 3) * _mu(nu, k, lam) ** (1 / 3))],
    ),
}
BANK_TERMS = {"w_l1", "u_linf"}


@dataclass(frozen=True)
class BankProfile:
    values: np.ndarray
    label: str
    under_resolved: bool = False


@dataclass
class ResolventSample:
    inequality_id: str
    nu: float
    k: int
    lam: float
    ratio: float
    term_ratios: dict
    sigma_min: float
    norms_w: NormBundle | None = None
    norms_u: NormBundle | None = None
    norm_F: dict = field(default_factory=dict)
    flagged: bool = False
    bank: str = "vanishing"

    def row_dicts(self):
        base = dict(inequality_id=self.inequality_id, nu=self.nu, k=self.k, **{"lambda": self.lam})
        for name, value in self.term_ratios.items():
            yield dict(base, term_name=name, ratio=value, flagged=int(self.flagged))
        yield dict(base, term_name="combined", ratio=self.ratio, flagged=int(self.flagged))


@dataclass
class InequalityReport:
    inequality_id: str
    samples: list
    worst_ratio: float
    worst_by_nu: dict
    fitted_exponent_vs_nu: float
    exponent_ci95: float
    fit_residual: float
    intercept: float
    excluded: int
    sweep_spec: dict
    bank: str = "vanishing"

    def summary(self) -> dict:
        return dict(
            inequality_id=self.inequality_id,
            bank=self.bank,
            worst_ratio=self.worst_ratio,
            worst_by_nu={repr(float(k)): v for k, v in sorted(self.worst_by_nu.items())},
            fitted_exponent_vs_nu=self.fitted_exponent_vs_nu,
            exponent_ci95=self.exponent_ci95,
            fit_residual=self.fit_residual,
            intercept=self.intercept,
            excluded=self.excluded,
            samples=len(self.samples),
            sweep_spec=self.sweep_spec,
        )


def critical_layer_testbank(grid, nu: float, k: int, lam: float, count: int | None = None,
                            vanishing: bool = True) -> list[BankProfile]:
    """Adversarial forcings for the L^1 / L^inf terms, each with unit L^2 norm.

    Gaussians sit on the critical layer y_c = +-sqrt(1 - lam) with widths
    (nu/|k|)^{1/4}, (nu/|k|)^{1/3} and 0.1, followed by sin(m pi y), m = 1..4.
    With ``vanishing`` every profile carries a (1 - y^2) factor; otherwise the
    Gaussians are left bare and cos((m - 1) pi y) replaces the sines, so the
    profiles do not vanish at the walls.
    """
    y = grid.nodes
    out: list[BankProfile] = []
    kk = abs(k)
    if 0.0 <= lam <= 1.0:
        yc = math.sqrt(1.0 - lam)
        centers = [yc] if yc == 0.0 else [yc, -yc]
        for width in ((nu / kk) ** 0.25, (nu / kk) ** (1.0 / 3.0), 0.1):
            for c in centers:
                prof = np.exp(-(((y - c) / width) ** 2))
                if vanishing:
                    prof = prof * (1.0 - y**2)
                inside = int(np.count_nonzero(np.abs(y - c) <= 0.5 * width))
                out.append(BankProfile(prof.astype(complex), f"gauss(yc={c:+.4f},w={width:.4g})", inside < 4))
    for m in range(1, 5):
        prof = np.sin(m * np.pi * y) if vanishing else np.cos((m - 1) * np.pi * y)
        out.append(BankProfile(prof.astype(complex), f"{'sin' if vanishing else 'cos'}({m if vanishing else m - 1}pi y)"))
    normalized = []
    for p in out:
        nrm = l2_norm(grid, p.values)
        if nrm == 0.0:
            continue
        normalized.append(BankProfile(p.values / nrm, p.label, p.under_resolved))
    for p in normalized:
        if p.under_resolved:
            log.debug("bank profile %s is under-resolved on n=%d", p.label, grid.n)
    if count is not None:
        normalized = normalized[:count]
    return normalized


def vector_norms(grid, k, u1, u2) -> NormBundle:
    mag = np.sqrt(np.abs(u1) ** 2 + np.abs(u2) ** 2)
    return NormBundle(
        l2=float(math.hypot(l2_norm(grid, u1), l2_norm(grid, u2))),
        l1=float(np.sum(grid.quad_weights * mag)),
        linf=float(mag.max()),
        h1k=float(math.hypot(h1k_norm(grid, k, u1), h1k_norm(grid, k, u2))),
        hm1k=float("nan"),
    )


def _lhs_value(op, name, w, u1, u2):
    g = op.grid
    if name == "w_l2":
        return l2_norm(g, w)
    if name == "w_h1k":
        return h1k_norm(g, op.k, w)
    if name == "w_l1":
        return l1_norm(g, w)
    if name == "u_l2":
        return math.hypot(l2_norm(g, u1), l2_norm(g, u2))
    if name == "u_linf":
        return float(np.max(np.sqrt(np.abs(u1) ** 2 + np.abs(u2) ** 2)))
    raise ValueError(name)


def _rhs_value(op, name, F):
    g = op.grid
    if name == "F_l2":
        return l2_norm(g, F)
    if name == "F_hm1k":
        return hm1k_norm(g, op.k, F)
    if name == "F_h1k":
        return h1k_norm(g, op.k, F)
    raise ValueError(name)


def evaluate_inequality(op, lam: float, inequality_id: str, F_bank: Sequence | None,
                        bank_label: str = "vanishing") -> ResolventSample:
    """Measure one inequality group at (op.nu, op.k, lam).

    ``term_ratios`` holds the supremum of each weighted term over forcings:
    exact for quadratic terms, a bank lower bound for ``w_l1``/``u_linf``.
    ``ratio`` is the largest combined LHS/RHS over the bank and the maximizing
    forcings of every quadratic term.
    """
    iid = resolve_id(inequality_id)
    rhs, terms = _TERMS[iid]
    needs_bank = any(t[1] in BANK_TERMS for t in terms)
    bank = [p.values if isinstance(p, BankProfile) else np.asarray(p) for p in (F_bank or [])]
    if needs_bank and not bank:
        raise ValueError(f"{iid} has non-quadratic terms and needs a non-empty forcing bank")
    if iid == "resol_slip_c":
        for F in bank:
            if abs(F[0]) > 1e-12 * max(1.0, np.abs(F).max()) or abs(F[-1]) > 1e-12 * max(1.0, np.abs(F).max()):
                raise ValueError("resol_slip_c requires forcings with F(+-1) = 0")
    nu, k = op.nu, abs(op.k)
    sigma_min = linop.min_singular_value(op, lam)
    term_ratios: dict = {}
    candidates = list(bank)
    for name, functional, coef in terms:
        if functional in BANK_TERMS:
            continue
        value, F = linop.weighted_operator_norm(op, lam, functional, rhs, return_vector=True)
        term_ratios[name] = coef(nu, k, lam) * value
        candidates.append(F)

    best, best_sol = -1.0, None
    bank_sup = {name: 0.0 for name, functional, _ in terms if functional in BANK_TERMS}
    for F in candidates:
        rhs_val = _rhs_value(op, rhs, F)
        if rhs_val == 0.0:
            continue
        w, phi, (u1, u2) = linop.solve_resolvent(op, lam, F)
        total = 0.0
        for name, functional, coef in terms:
            val = coef(nu, k, lam) * _lhs_value(op, functional, w, u1, u2) / rhs_val
            total += val
            if functional in BANK_TERMS:
                # the quadratic maximizers count as bank members too (worst-case L^2 forcing)
                bank_sup[name] = max(bank_sup[name], val)
        if total > best:
            best, best_sol = total, (F, w, u1, u2)
    for name, _, _ in terms:
        if name in bank_sup:
            term_ratios[name] = bank_sup[name]
    ordered = {name: term_ratios[name] for name, _, _ in terms}
    F, w, u1, u2 = best_sol
    g = op.grid
    norm_F = {
        "l2": l2_norm(g, F),
        "hm1k": hm1k_norm(g, op.k, F),
        "h1k": h1k_norm(g, op.k, F),
    }
    return ResolventSample(
        inequality_id=iid, nu=nu, k=op.k, lam=float(lam), ratio=float(best), term_ratios=ordered,
        sigma_min=sigma_min, norms_w=compute_norms(g, op.k, w), norms_u=vector_norms(g, op.k, u1, u2),
        norm_F=norm_F, bank=bank_label,
    )


# -- sweeps -------------------------------------------------------------------


@dataclass
class SweepPlan:
    nus: Sequence[float] = DEFAULT_NUS
    ks: Sequence[int] = DEFAULT_KS
    lambdas: Sequence[float] = DEFAULT_LAMBDAS
    n: int = 128
    bank_count: int | None = None
    vanishing: bool = True
    refine: bool = True
    workers: int = 1

    def spec(self) -> dict:
        return dict(nus=[float(v) for v in self.nus], ks=[int(v) for v in self.ks],
                    lambdas=[float(v) for v in self.lambdas], n=int(self.n), bank_count=self.bank_count,
                    vanishing=bool(self.vanishing), refine=bool(self.refine))


def _flagged_sample(iid, nu, k, lam, sigma, bank_label):
    return ResolventSample(inequality_id=iid, nu=nu, k=k, lam=float(lam), ratio=float("nan"), term_ratios={},
                           sigma_min=sigma, flagged=True, bank=bank_label)


def evaluate_point(nu: float, k: int, lam: float, ids: Sequence[str], n: int, bank_count: int | None = None,
                   vanishing: bool = True) -> list[ResolventSample]:
    """All requested inequality groups at one (nu, k, lam); conditioning failures come back flagged."""
    grid = build_grid(n)
    op = linop.assemble(grid, nu, k)
    bank = critical_layer_testbank(grid, nu, k, lam, bank_count, vanishing=vanishing)
    label = "vanishing" if vanishing else "nonvanishing"
    out = []
    for iid in ids:
        try:
            out.append(evaluate_inequality(op, lam, iid, bank, bank_label=label))
        except linop.ConditioningError as exc:
            log.warning("excluding (nu=%g, k=%d, lam=%g): %s", nu, k, lam, exc)
            out.append(_flagged_sample(iid, nu, k, lam, exc.sigma_min, label))
    return out


def _point_job(args):
    return evaluate_point(*args)


def parallel_map(func: Callable, items: Iterable, workers: int = 1) -> list:
    """Order-preserving map; the result never depends on ``workers``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=max(1, len(items) // (4 * workers))))


def fit_power_law(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float, float, float]:
    """Least-squares slope of log y against log x.

    Returns ``(slope, intercept, rms_residual, ci95_halfwidth)``; the
    half-width is ``nan`` with fewer than three points.
    """
    from scipy import stats

    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    if len(lx) < 2 or np.ptp(lx) == 0.0:
        return float("nan"), float("nan"), float("nan"), float("nan")
    A = np.vstack([lx, np.ones_like(lx)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    rms = float(np.sqrt(np.mean(resid**2)))
    if len(lx) >= 3:
        dof = len(lx) - 2
        se = math.sqrt(np.sum(resid**2) / dof / np.sum((lx - lx.mean()) ** 2))
        ci = float(stats.t.ppf(0.975, dof) * se)
    else:
        ci = float("nan")
    return float(slope), float(intercept), rms, ci


def _refine_lambda(nu, k, lam_lo, lam_hi, iid, n, bank_count, vanishing):
    def neg(lam):
        s = evaluate_point(nu, k, lam, [iid], n, bank_count, vanishing)[0]
        return float("inf") if s.flagged else -s.ratio

    lam, val = linop.golden_minimize(neg, lam_lo, lam_hi, tol=1e-3)
    return evaluate_point(nu, k, lam, [iid], n, bank_count, vanishing)[0]


def sweep_and_fit(plan: SweepPlan, inequality_ids: str | Sequence[str] = INEQUALITY_IDS,
                  evaluator: Callable | None = None) -> dict[str, InequalityReport]:
    """Sweep the plan, take the worst ratio over (k, lam) per nu and fit it against nu.

    ``evaluator(nu, k, lam, ids)`` replaces the numerical evaluation (test seam);
    it must return one ``ResolventSample`` per id.
    """
    ids = [resolve_id(inequality_ids)] if isinstance(inequality_ids, str) else [resolve_id(i) for i in inequality_ids]
    points = [(float(nu), int(k), float(lam)) for nu in plan.nus for k in plan.ks for lam in plan.lambdas]
    if evaluator is None:
        jobs = [(nu, k, lam, ids, plan.n, plan.bank_count, plan.vanishing) for nu, k, lam in points]
        results = parallel_map(_point_job, jobs, plan.workers)
    else:
        results = [list(evaluator(nu, k, lam, ids)) for nu, k, lam in points]
    lam_sorted = sorted(float(v) for v in plan.lambdas)
    reports = {}
    for j, iid in enumerate(ids):
        samples = [res[j] for res in results]
        if evaluator is None and plan.refine and len(lam_sorted) >= 3:
            samples += _refinements(plan, iid, samples, lam_sorted)
        reports[iid] = _build_report(iid, samples, plan)
    return reports


def _refinements(plan, iid, samples, lam_sorted):
    extra = []
    for nu in plan.nus:
        usable = [s for s in samples if s.nu == float(nu) and not s.flagged]
        if not usable:
            continue
        best = max(usable, key=lambda s: s.ratio)
        i = lam_sorted.index(best.lam)
        if 0 < i < len(lam_sorted) - 1:
            extra.append(_refine_lambda(best.nu, best.k, lam_sorted[i - 1], lam_sorted[i + 1], iid,
                                        plan.n, plan.bank_count, plan.vanishing))
    return extra


def _build_report(iid, samples, plan) -> InequalityReport:
    usable = [s for s in samples if not s.flagged and np.isfinite(s.ratio)]
    excluded = len(samples) - len(usable)
    worst_by_nu: dict = {}
    for s in usable:
        worst_by_nu[s.nu] = max(worst_by_nu.get(s.nu, 0.0), s.ratio)
    nus = sorted(worst_by_nu)
    if len(nus) >= 3:
        slope, intercept, rms, ci = fit_power_law(nus, [worst_by_nu[v] for v in nus])
    else:
        slope = intercept = rms = ci = float("nan")
    return InequalityReport(
        inequality_id=iid, samples=samples, worst_ratio=max(worst_by_nu.values()) if worst_by_nu else float("nan"),
        worst_by_nu=worst_by_nu, fitted_exponent_vs_nu=slope, exponent_ci95=ci, fit_residual=rms,
        intercept=intercept, excluded=excluded, sweep_spec=plan.spec() if hasattr(plan, "spec") else {},
        bank="vanishing" if getattr(plan, "vanishing", True) else "nonvanishing",
    )


CSV_COLUMNS = ("inequality_id", "nu", "k", "lambda", "term_name", "ratio", "flagged")


def write_report(report: InequalityReport, directory: Path | str, stem: str | None = None) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` (one row per sample and term) and ``<stem>.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = stem or report.inequality_id
    csv_path = directory / f"{stem}.csv"
    json_path = directory / f"{stem}.json"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for s in report.samples:
            if s.flagged:
                writer.writerow(dict(inequality_id=s.inequality_id, nu=repr(s.nu), k=s.k, **{"lambda": repr(s.lam)},
                                     term_name="combined", ratio="nan", flagged=1))
                continue
            for row in s.row_dicts():
                row = {key: (repr(v) if isinstance(v, float) else v) for key, v in row.items()}
                writer.writerow(row)
    with open(json_path, "w") as fh:
        json.dump(_jsonable(report.summary()), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def sample_to_dict(s: ResolventSample) -> dict:
    d = asdict(s)
    return _jsonable(d)
